//! Misfit functional, adjoint solve and material gradients.
//!
//! With `J = 1/2 e^T D e`, `e = u - u_obs`, the adjoint field solves
//! `A w = D e` with the forward factor, and the gradient with respect to a
//! nodal coefficient `p_i` is `-w^T (dA/dp_i) u`. The derivative of `A` is
//! never assembled: each nodal entry is integrated element by element.

use std::collections::HashSet;

use super::assembly::{geometry, MaterialField, SolveResult};
use super::element::{ddot, sym};
use super::mesh::Mesh;
use crate::error::{ensure_len, Error, Result};

/// Observed displacement dofs with diagonal weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub dof_indices: Vec<usize>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ObservationSet {
    pub fn new(dof_indices: Vec<usize>, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        ensure_len("observation values", dof_indices.len(), values.len())?;
        ensure_len("observation weights", dof_indices.len(), weights.len())?;
        let mut seen = HashSet::with_capacity(dof_indices.len());
        if let Some(d) = dof_indices.iter().find(|d| !seen.insert(**d)) {
            return Err(Error::invalid(format!("observation dof {d} listed twice")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation values"));
        }
        // zero weights are allowed: they switch an observation off
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("observation weights must be finite and non-negative"));
        }
        Ok(ObservationSet {
            dof_indices,
            values,
            weights,
        })
    }

    /// Unit-weight observations of `u` at the given dofs.
    pub fn from_field(u: &[f64], dofs: Vec<usize>) -> Result<Self> {
        let values = dofs
            .iter()
            .map(|&d| {
                u.get(d).copied().ok_or(Error::IndexOutOfRange {
                    what: "displacement vector",
                    index: d,
                    len: u.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = dofs.len();
        Self::new(dofs, values, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.dof_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_indices.is_empty()
    }

    /// Checks indices against a dof count and a set of constrained dofs.
    pub fn validate(&self, n_dofs: usize, constrained: impl Fn(usize) -> bool) -> Result<()> {
        for &d in &self.dof_indices {
            if d >= n_dofs {
                return Err(Error::IndexOutOfRange {
                    what: "displacement vector",
                    index: d,
                    len: n_dofs,
                });
            }
            if constrained(d) {
                return Err(Error::invalid(format!("observed dof {d} is prescribed")));
            }
        }
        Ok(())
    }

    /// Residuals `u_i - u_obs_i` at the observed dofs.
    pub fn residuals(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.dof_indices
            .iter()
            .zip(&self.values)
            .map(|(&d, &v)| {
                u.get(d).map(|ud| ud - v).ok_or(Error::IndexOutOfRange {
                    what: "displacement vector",
                    index: d,
                    len: u.len(),
                })
            })
            .collect()
    }
}

/// `J = 1/2 e^T D e`.
pub fn cost_misfit(u: &[f64], obs: &ObservationSet) -> Result<f64> {
    let e = obs.residuals(u)?;
    Ok(0.5 * e.iter().zip(&obs.weights).map(|(e, w)| w * e * e).sum::<f64>())
}

/// Solves `A w = D e` reusing the forward factorization.
pub fn solve_adjoint(result: &SolveResult, obs: &ObservationSet) -> Result<Vec<f64>> {
    let e = obs.residuals(&result.u)?;
    let mut rhs = vec![0.0; result.u.len()];
    for ((&d, &w), e) in obs.dof_indices.iter().zip(&obs.weights).zip(e) {
        rhs[d] = w * e;
    }
    result.factorization.solve(&rhs)
}

/// Nodal gradients of the misfit with respect to `lambda` and `mu`.
///
/// `u` must include prescribed values and `w` must vanish on prescribed
/// dofs, which holds for fields returned by [`solve_adjoint`].
pub fn material_gradient(
    mesh: &Mesh,
    mat: &MaterialField,
    u: &[f64],
    w: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    mat.validate(mesh)?;
    ensure_len("forward field", mesh.n_dofs(), u.len())?;
    ensure_len("adjoint field", mesh.n_dofs(), w.len())?;
    let mut g_lambda = vec![0.0; mesh.n_nodes()];
    let mut g_mu = vec![0.0; mesh.n_nodes()];
    for (e, nodes) in mesh.elements.iter().enumerate() {
        let geo = geometry(mesh, e)?;
        let mut ue = [0.0; 8];
        let mut we = [0.0; 8];
        for a in 0..4 {
            for c in 0..2 {
                ue[2 * a + c] = u[2 * nodes[a] + c];
                we[2 * a + c] = w[2 * nodes[a] + c];
            }
        }
        for p in &geo.points {
            let du = p.displacement_gradient(&ue);
            let dw = p.displacement_gradient(&we);
            let div = (du[0][0] + du[1][1]) * (dw[0][0] + dw[1][1]);
            let strain = 2.0 * ddot(&sym(&dw), &sym(&du));
            for a in 0..4 {
                let phi = p.dv * p.shape[a];
                g_lambda[nodes[a]] -= phi * div;
                g_mu[nodes[a]] -= phi * strain;
            }
        }
    }
    Ok((g_lambda, g_mu))
}

/// Gradient with respect to `y = ln(lambda)` for a Poisson-locked field,
/// where `lambda = mu = exp(y)`.
pub fn log_lambda_gradient(mat: &MaterialField, g_lambda: &[f64], g_mu: &[f64]) -> Result<Vec<f64>> {
    if !mat.poisson_lock() {
        return Err(Error::invalid("log-lambda gradient requires a Poisson-locked field"));
    }
    ensure_len("lambda gradient", mat.log_lambda.len(), g_lambda.len())?;
    ensure_len("mu gradient", mat.log_lambda.len(), g_mu.len())?;
    Ok(mat
        .log_lambda
        .iter()
        .zip(g_lambda.iter().zip(g_mu))
        .map(|(y, (gl, gm))| (gl + gm) * y.exp())
        .collect())
}

/// Misfit and its `ln(lambda)` gradient from exactly one factorization and
/// two solves.
pub fn misfit_and_log_gradient(
    mesh: &Mesh,
    mat: &MaterialField,
    solve: &SolveResult,
    obs: &ObservationSet,
) -> Result<(f64, Vec<f64>)> {
    let j = cost_misfit(&solve.u, obs)?;
    let w = solve_adjoint(solve, obs)?;
    let (gl, gm) = material_gradient(mesh, mat, &solve.u, &w)?;
    Ok((j, log_lambda_gradient(mat, &gl, &gm)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_fem::assembly::{assemble_system, forward, LoadSpec};
    use crate::mesh_fem::mesh::{build_structured_mesh, dof, Side};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(nx: usize, seed: u64) -> (Mesh, LoadSpec, MaterialField, ObservationSet) {
        let mesh = build_structured_mesh(nx, nx, 1.0, 1.0).unwrap();
        let load = LoadSpec::self_weight(&mesh, 0.025);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<f64> = (0..mesh.n_nodes())
            .map(|_| if rng.random_bool(0.3) { 10f64.ln() } else { 1000f64.ln() })
            .collect();
        let guess: Vec<f64> = truth.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let u_true = forward(&mesh, &MaterialField::locked(truth), &load).unwrap().u;
        let nodes = mesh.boundary_sets.union(&[Side::Top, Side::Left, Side::Right]);
        let dofs: Vec<usize> = nodes
            .into_iter()
            .flat_map(|n| [dof(n, 0), dof(n, 1)])
            .filter(|d| !load.dirichlet.contains_key(d))
            .collect();
        let obs = ObservationSet::from_field(&u_true, dofs).unwrap();
        (mesh, load, MaterialField::locked(guess), obs)
    }

    #[test]
    fn cost_examples() {
        let obs = ObservationSet::new(vec![1], vec![1.0], vec![3.0]).unwrap();
        assert_eq!(cost_misfit(&[0.0, 3.0], &obs).unwrap(), 6.0);
        assert_eq!(cost_misfit(&[0.0, 1.0], &obs).unwrap(), 0.0);
        assert!(cost_misfit(&[0.0], &obs).is_err());
    }

    #[test]
    fn cost_matches_direct_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dofs: Vec<usize> = (0..40).step_by(3).collect();
        let vals: Vec<f64> = dofs.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let wts: Vec<f64> = dofs.iter().map(|_| rng.random_range(0.1..2.0)).collect();
        let obs = ObservationSet::new(dofs.clone(), vals.clone(), wts.clone()).unwrap();
        let mut e = DVector::zeros(40);
        let mut d = DMatrix::zeros(40, 40);
        for k in 0..dofs.len() {
            e[dofs[k]] = u[dofs[k]] - vals[k];
            d[(dofs[k], dofs[k])] = wts[k];
        }
        let direct = 0.5 * (e.transpose() * &d * &e)[(0, 0)];
        assert!((cost_misfit(&u, &obs).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn observation_validation() {
        assert!(ObservationSet::new(vec![1, 1], vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(ObservationSet::new(vec![1], vec![0.0], vec![]).is_err());
        let obs = ObservationSet::new(vec![0, 7], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(obs.validate(6, |_| false).is_err());
        assert!(obs.validate(8, |d| d == 0).is_err());
        assert!(obs.validate(8, |_| false).is_ok());
    }

    #[test]
    fn zero_misfit_gives_zero_adjoint() {
        let (mesh, load, mat, _) = setup(3, 1);
        let sol = forward(&mesh, &mat, &load).unwrap();
        let obs = ObservationSet::from_field(&sol.u, vec![30, 31]).unwrap();
        assert!(solve_adjoint(&sol, &obs).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_matches_dense_solve() {
        let (mesh, load, mat, obs) = setup(4, 2);
        let (a, b) = assemble_system(&mesh, &mat, &load).unwrap();
        let sol = crate::mesh_fem::solve_forward(&a, &b).unwrap();
        let w = solve_adjoint(&sol, &obs).unwrap();
        let d = a.to_dense();
        let n = a.n();
        let dense = DMatrix::from_fn(n, n, |i, j| d[i][j]);
        let mut rhs = DVector::zeros(n);
        for (k, &dof) in obs.dof_indices.iter().enumerate() {
            rhs[dof] = obs.weights[k] * (sol.u[dof] - obs.values[k]);
        }
        let oracle = dense.lu().solve(&rhs).unwrap();
        let scale = oracle.amax();
        for i in 0..n {
            assert!((w[i] - oracle[i]).abs() <= 1e-10 * scale);
        }
        assert_eq!(sol.factorization.solve_count(), 2);
    }

    #[test]
    fn single_observation_adjoint_is_scaled_unit_response() {
        let (mesh, load, mat, _) = setup(3, 5);
        let sol = forward(&mesh, &mat, &load).unwrap();
        let i = dof(mesh.boundary_sets.top[1], 1);
        let obs = ObservationSet::new(vec![i], vec![0.0], vec![1.0]).unwrap();
        let w = solve_adjoint(&sol, &obs).unwrap();
        let mut unit = vec![0.0; mesh.n_dofs()];
        unit[i] = 1.0;
        let g = sol.factorization.solve(&unit).unwrap();
        for (a, b) in w.iter().zip(&g) {
            assert!((a - b * sol.u[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_adjoint_gives_zero_gradient() {
        let (mesh, load, mat, _) = setup(3, 3);
        let sol = forward(&mesh, &mat, &load).unwrap();
        let (gl, gm) = material_gradient(&mesh, &mat, &sol.u, &vec![0.0; mesh.n_dofs()]).unwrap();
        assert!(gl.iter().chain(&gm).all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_free_field_has_no_lambda_gradient() {
        let mesh = build_structured_mesh(3, 3, 1.0, 1.0).unwrap();
        let mat = MaterialField::uniform(16, 5.0);
        // rigid rotation plus pure shear, both divergence free
        let mut u = vec![0.0; mesh.n_dofs()];
        let mut w = vec![0.0; mesh.n_dofs()];
        for (n, &[x, y]) in mesh.node_coords.iter().enumerate() {
            u[dof(n, 0)] = -y + 0.3 * y;
            u[dof(n, 1)] = x;
            w[dof(n, 0)] = x;
            w[dof(n, 1)] = -y;
        }
        let (gl, _) = material_gradient(&mesh, &mat, &u, &w).unwrap();
        assert!(gl.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (mesh, load, mat, obs) = setup(4, 7);
        let sol = forward(&mesh, &mat, &load).unwrap();
        let (_, g) = misfit_and_log_gradient(&mesh, &mat, &sol, &obs).unwrap();
        let j = |y: &[f64]| {
            let s = forward(&mesh, &MaterialField::locked(y.to_vec()), &load).unwrap();
            cost_misfit(&s.u, &obs).unwrap()
        };
        for i in 0..mesh.n_nodes() {
            let h = 1e-6 * (1.0 + mat.log_lambda[i].abs());
            let mut yp = mat.log_lambda.clone();
            let mut ym = mat.log_lambda.clone();
            yp[i] += h;
            ym[i] -= h;
            let fd = (j(&yp) - j(&ym)) / (2.0 * h);
            assert!((g[i] - fd).abs() <= 1e-5 * fd.abs(), "node {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn independent_fields_gradient_matches_differences() {
        let (mesh, load, mat, obs) = setup(3, 9);
        let log_mu: Vec<f64> = mat.log_lambda.iter().map(|v| v - 0.2).collect();
        let mat = MaterialField::independent(mat.log_lambda.clone(), log_mu);
        let sol = forward(&mesh, &mat, &load).unwrap();
        let w = solve_adjoint(&sol, &obs).unwrap();
        let (gl, gm) = material_gradient(&mesh, &mat, &sol.u, &w).unwrap();
        let lam = mat.lambda();
        let mu = mat.mu();
        let j = |l: &[f64], m: &[f64]| {
            let f = MaterialField::independent(
                l.iter().map(|v| v.ln()).collect(),
                m.iter().map(|v| v.ln()).collect(),
            );
            cost_misfit(&forward(&mesh, &f, &load).unwrap().u, &obs).unwrap()
        };
        for i in [0, 5, 10, 15] {
            let h = 1e-4 * lam[i];
            let (mut lp, mut lm) = (lam.clone(), lam.clone());
            lp[i] += h;
            lm[i] -= h;
            let fd = (j(&lp, &mu) - j(&lm, &mu)) / (2.0 * h);
            assert!((gl[i] - fd).abs() <= 1e-5 * fd.abs(), "lambda node {i}: {} vs {fd}", gl[i]);
            let h = 1e-4 * mu[i];
            let (mut mp, mut mm) = (mu.clone(), mu.clone());
            mp[i] += h;
            mm[i] -= h;
            let fd = (j(&lam, &mp) - j(&lam, &mm)) / (2.0 * h);
            assert!((gm[i] - fd).abs() <= 1e-5 * fd.abs(), "mu node {i}: {} vs {fd}", gm[i]);
        }
    }
}
