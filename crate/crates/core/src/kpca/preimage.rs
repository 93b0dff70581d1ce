use nalgebra::{DMatrix, DVector};

use super::fit::{col, feature_distances, feature_weights, KpcaModel};
use super::kernel::{sq_dist, Kernel};
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreimageOptions {
    /// Stop once `|y_{k+1} - y_k| <= tol (1 + |y_k|)`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_restarts: usize,
}

impl Default for PreimageOptions {
    fn default() -> Self {
        PreimageOptions {
            tol: 1e-8,
            max_iter: 500,
            max_restarts: 5,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum PreimageInit<'a> {
    /// Training snapshot whose image is closest to the target feature point.
    Nearest,
    /// Caller-supplied start, e.g. the previous MCMC sample.
    Given(&'a [f64]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preimage {
    pub y: Vec<f64>,
    /// Iterations of the successful attempt.
    pub iterations: usize,
    pub restarts: usize,
}

/// Per-snapshot quantities of the fixed-point map at a given `y`.
struct MapTerms {
    /// `w_i`
    w: Vec<f64>,
    /// `a_i, b_i` with `dw_i/dy = a_i y_i + b_i y`.
    a: Vec<f64>,
    b: Vec<f64>,
    /// `s = sum beta_i w_i`
    s: f64,
    /// `G(y)`
    g: Vec<f64>,
}

const MIN_DENOMINATOR: f64 = 1e-14;

fn map_terms(model: &KpcaModel, beta: &[f64], y: &[f64], with_derivs: bool) -> Result<MapTerms> {
    let m = model.n_snapshots();
    let mut w = vec![0.0; m];
    let (mut a, mut b) = if with_derivs {
        (vec![0.0; m], vec![0.0; m])
    } else {
        (Vec::new(), Vec::new())
    };
    match model.kernel {
        Kernel::Polynomial { degree, .. } => {
            let t = model.y.tr_mul(&DVector::from_column_slice(y));
            for i in 0..m {
                let (wi, dwi) = Kernel::poly_weight(degree, t[i]);
                w[i] = wi;
                if with_derivs {
                    a[i] = dwi;
                }
            }
        }
        Kernel::Gaussian { sigma } => {
            for i in 0..m {
                w[i] = (-sq_dist(col(&model.y, i), y) / sigma).exp();
                if with_derivs {
                    a[i] = 2.0 * w[i] / sigma;
                    b[i] = -a[i];
                }
            }
        }
    }
    let s: f64 = beta.iter().zip(&w).map(|(b, w)| b * w).sum();
    if !s.is_finite() {
        return Err(Error::NonFinite("pre-image denominator"));
    }
    if s.abs() < MIN_DENOMINATOR {
        return Err(Error::Degenerate(format!("pre-image denominator {s:e}")));
    }
    let coef: Vec<f64> = beta.iter().zip(&w).map(|(b, w)| b * w / s).collect();
    let g = (&model.y * DVector::from_vec(coef)).data.into();
    Ok(MapTerms { w, a, b, s, g })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn iterate(
    model: &KpcaModel,
    beta: &[f64],
    start: &[f64],
    opts: &PreimageOptions,
) -> std::result::Result<(Vec<f64>, usize), String> {
    let mut y = start.to_vec();
    for k in 1..=opts.max_iter {
        let next = map_terms(model, beta, &y, false).map_err(|e| e.to_string())?.g;
        if !next.iter().all(|v| v.is_finite()) {
            return Err("non-finite iterate".into());
        }
        let step = sq_dist(&next, &y).sqrt();
        let done = step <= opts.tol * (1.0 + norm(&y));
        y = next;
        if done {
            return Ok((y, k));
        }
    }
    Err(format!("no convergence in {} iterations", opts.max_iter))
}

/// Fixed-point pre-image `y = sum beta_i w_i y_i / sum beta_i w_i` of the
/// feature point with coordinates `xi`.
///
/// Failed attempts restart from the next-nearest training snapshots.
pub fn preimage(
    model: &KpcaModel,
    xi: &[f64],
    init: PreimageInit<'_>,
    opts: &PreimageOptions,
) -> Result<Preimage> {
    let beta = feature_weights(model, xi)?;
    if !beta.iter().all(|b| b.is_finite()) {
        return Err(Error::NonFinite("feature coordinates"));
    }
    if model.kernel.is_linear() {
        // w is constant and sum(beta) = 1: the map does not depend on y
        let y = (&model.y * DVector::from_vec(beta)).data.into();
        return Ok(Preimage {
            y,
            iterations: 0,
            restarts: 0,
        });
    }
    let dist = feature_distances(model, &beta);
    let mut order: Vec<usize> = (0..model.n_snapshots()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));

    let mut starts: Vec<&[f64]> = Vec::with_capacity(opts.max_restarts + 1);
    if let PreimageInit::Given(y0) = init {
        if y0.len() != model.n_nodes() {
            return Err(Error::DimensionMismatch {
                what: "pre-image start",
                expected: model.n_nodes(),
                got: y0.len(),
            });
        }
        starts.push(y0);
    }
    for &l in &order {
        if starts.len() > opts.max_restarts {
            break;
        }
        starts.push(model.snapshot(l));
    }
    let mut reason = String::new();
    for (attempt, start) in starts.iter().enumerate() {
        match iterate(model, &beta, start, opts) {
            Ok((y, iterations)) => {
                return Ok(Preimage {
                    y,
                    iterations,
                    restarts: attempt,
                })
            }
            Err(e) => reason = e,
        }
    }
    Err(Error::PreimageFailed {
        restarts: starts.len() - 1,
        reason,
    })
}

/// Implicit derivative of the fixed-point map at `(y, xi)`:
/// `dG/dy = P Q^T` and `dG/dxi = P_xi B` with, per snapshot column `i`,
/// `P_i = (y_i - G) beta_i / s`, `Q_i = a_i y_i + b_i y`, `(P_xi)_i = (y_i - G) w_i / s`.
/// The factors are applied through the snapshot matrix and never stored.
struct Linearization<'a> {
    y_train: &'a DMatrix<f64>,
    y: DVector<f64>,
    beta: Vec<f64>,
    t: MapTerms,
}

impl Linearization<'_> {
    /// `(y_i - G) . z` for every snapshot.
    fn centered_dots(&self, z: &DVector<f64>) -> DVector<f64> {
        let gz: f64 = self.t.g.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        self.y_train.tr_mul(z).add_scalar(-gz)
    }

    fn p_tr_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut d = self.centered_dots(z);
        for (v, b) in d.iter_mut().zip(&self.beta) {
            *v *= b / self.t.s;
        }
        d
    }

    fn p_xi_tr_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut d = self.centered_dots(z);
        for (v, w) in d.iter_mut().zip(&self.t.w) {
            *v *= w / self.t.s;
        }
        d
    }

    fn q_mul(&self, c: &DVector<f64>) -> DVector<f64> {
        let ac = DVector::from_iterator(c.len(), c.iter().zip(&self.t.a).map(|(c, a)| c * a));
        let bc: f64 = c.iter().zip(&self.t.b).map(|(c, b)| c * b).sum();
        let mut out = self.y_train * ac;
        if bc != 0.0 {
            out.axpy(bc, &self.y, 1.0);
        }
        out
    }

    /// `(Y - G 1^T) diag(scale)`
    fn centered_scaled(&self, scale: &[f64]) -> DMatrix<f64> {
        let mut out = self.y_train.clone();
        for (i, mut c) in out.column_iter_mut().enumerate() {
            for (v, g) in c.iter_mut().zip(&self.t.g) {
                *v = (*v - g) * scale[i];
            }
        }
        out
    }

    fn p(&self) -> DMatrix<f64> {
        let sc: Vec<f64> = self.beta.iter().map(|b| b / self.t.s).collect();
        self.centered_scaled(&sc)
    }

    fn p_xi(&self) -> DMatrix<f64> {
        let sc: Vec<f64> = self.t.w.iter().map(|w| w / self.t.s).collect();
        self.centered_scaled(&sc)
    }

    fn q(&self) -> DMatrix<f64> {
        let mut out = self.y_train.clone();
        for (i, mut c) in out.column_iter_mut().enumerate() {
            for (v, yk) in c.iter_mut().zip(self.y.iter()) {
                *v = self.t.a[i] * *v + self.t.b[i] * yk;
            }
        }
        out
    }
}

fn linearize<'a>(model: &'a KpcaModel, xi: &[f64], y: &[f64]) -> Result<Linearization<'a>> {
    if y.len() != model.n_nodes() {
        return Err(Error::DimensionMismatch {
            what: "pre-image",
            expected: model.n_nodes(),
            got: y.len(),
        });
    }
    let beta = feature_weights(model, xi)?;
    let t = map_terms(model, &beta, y, true)?;
    Ok(Linearization {
        y_train: &model.y,
        y: DVector::from_column_slice(y),
        beta,
        t,
    })
}

/// `B = (1/sqrt M)(I - 11^T/M) V`, the linear map `xi -> beta`.
fn beta_map(model: &KpcaModel) -> DMatrix<f64> {
    let m = model.n_snapshots() as f64;
    let mut b = model.v.clone();
    for mut c in b.column_iter_mut() {
        let mean = c.sum() / m;
        c.add_scalar_mut(-mean);
    }
    b / m.sqrt()
}

const SINGULAR_PIVOT: f64 = 1e-12;

fn checked_lu(a: DMatrix<f64>) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = a.lu();
    let diag = lu.u().diagonal();
    let max = diag.amax();
    let min = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if !(min > SINGULAR_PIVOT * max.max(1.0)) {
        return Err(Error::NonDifferentiable(format!(
            "I - dG/dy is singular (pivot ratio {:e})",
            min / max
        )));
    }
    Ok(lu)
}

/// Jacobian `dy/dxi` (`N_R x r`) of the pre-image at a converged fixed point,
/// from `(I - dG/dy) J = dG/dxi`.
pub fn preimage_jacobian(model: &KpcaModel, xi: &[f64], y_star: &[f64]) -> Result<DMatrix<f64>> {
    let lin = linearize(model, xi, y_star)?;
    let rhs = lin.p_xi() * beta_map(model);
    if model.kernel.is_linear() {
        return Ok(rhs);
    }
    let n = model.n_nodes();
    checked_lu(DMatrix::identity(n, n) - lin.p() * lin.q().transpose())?
        .solve(&rhs)
        .ok_or_else(|| Error::NonDifferentiable("I - dG/dy is singular".into()))
}

/// Vector-Jacobian product `J^T g` without forming `J`.
///
/// Solves `(I - dG/dy)^T z = g` by the fixed-point sweep `z <- g + Q P^T z`,
/// which contracts whenever the pre-image iteration itself does, and falls
/// back to a dense factorization otherwise.
pub fn preimage_vjp(model: &KpcaModel, xi: &[f64], y_star: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if g.len() != model.n_nodes() {
        return Err(Error::DimensionMismatch {
            what: "cotangent",
            expected: model.n_nodes(),
            got: g.len(),
        });
    }
    let lin = linearize(model, xi, y_star)?;
    let gv = DVector::from_column_slice(g);
    let z = if model.kernel.is_linear() {
        gv
    } else {
        match sweep(&lin, &gv) {
            Some(z) => z,
            None => {
                let n = model.n_nodes();
                checked_lu(DMatrix::identity(n, n) - lin.q() * lin.p().transpose())?
                    .solve(&gv)
                    .ok_or_else(|| Error::NonDifferentiable("I - dG/dy is singular".into()))?
            }
        }
    };
    let u = lin.p_xi_tr_mul(&z);
    Ok((beta_map(model).tr_mul(&u)).data.into())
}

fn sweep(lin: &Linearization, g: &DVector<f64>) -> Option<DVector<f64>> {
    const MAX_SWEEPS: usize = 400;
    let gn = g.norm();
    if gn == 0.0 {
        return Some(g.clone());
    }
    let mut z = g.clone();
    let mut prev_step = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let next = g + lin.q_mul(&lin.p_tr_mul(&z));
        let step = (&next - &z).norm();
        z = next;
        if !step.is_finite() || step > prev_step * 1.5 && step > gn {
            return None;
        }
        if step <= 1e-14 * z.norm().max(gn) {
            return Some(z);
        }
        prev_step = step;
    }
    None
}

/// Relative reconstruction error `|y - y_l| / |y_l|` of training snapshots
/// `indices` through their own feature coordinates. Runs in parallel.
pub fn training_reconstruction_errors(
    model: &KpcaModel,
    indices: &[usize],
    opts: &PreimageOptions,
) -> Result<Vec<f64>> {
    par::map_slice(indices, |&l| {
        if l >= model.n_snapshots() {
            return Err(Error::IndexOutOfRange {
                what: "training snapshots",
                index: l,
                len: model.n_snapshots(),
            });
        }
        let y = preimage(model, &model.training_xi(l), PreimageInit::Nearest, opts)?.y;
        let target = model.snapshot(l);
        Ok(sq_dist(&y, target).sqrt() / norm(target))
    })
    .into_iter()
    .collect()
}
