//! Stiffness assembly, load vectors and the forward solve.

use std::collections::BTreeMap;

use super::band::{BandCholesky, SymBandMatrix};
use super::element::QuadGeometry;
use super::mesh::{dof, Mesh, Side};
use crate::error::{ensure_len, Error, Result};

/// Nodal log-Lamé fields. When `log_mu` is `None` the field is Poisson
/// locked (nu = 0.25): `mu = lambda = exp(log_lambda)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField {
    pub log_lambda: Vec<f64>,
    pub log_mu: Option<Vec<f64>>,
}

impl MaterialField {
    pub fn locked(log_lambda: Vec<f64>) -> Self {
        MaterialField {
            log_lambda,
            log_mu: None,
        }
    }

    pub fn independent(log_lambda: Vec<f64>, log_mu: Vec<f64>) -> Self {
        MaterialField {
            log_lambda,
            log_mu: Some(log_mu),
        }
    }

    pub fn uniform(n_nodes: usize, lambda: f64) -> Self {
        Self::locked(vec![lambda.ln(); n_nodes])
    }

    pub fn poisson_lock(&self) -> bool {
        self.log_mu.is_none()
    }

    pub fn lambda(&self) -> Vec<f64> {
        self.log_lambda.iter().map(|y| y.exp()).collect()
    }

    pub fn mu(&self) -> Vec<f64> {
        self.log_mu
            .as_ref()
            .unwrap_or(&self.log_lambda)
            .iter()
            .map(|y| y.exp())
            .collect()
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        ensure_len("material field", mesh.n_nodes(), self.log_lambda.len())?;
        if let Some(m) = &self.log_mu {
            ensure_len("shear modulus field", mesh.n_nodes(), m.len())?;
        }
        let finite = self
            .log_lambda
            .iter()
            .chain(self.log_mu.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("material field"));
        }
        Ok(())
    }
}

/// Loads and essential boundary conditions on a particular mesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadSpec {
    /// Constant body force per unit volume.
    pub body_force: [f64; 2],
    /// Constant traction per side.
    pub tractions: Vec<(Side, [f64; 2])>,
    /// Prescribed displacement per dof.
    pub dirichlet: BTreeMap<usize, f64>,
}

impl LoadSpec {
    pub fn new(body_force: [f64; 2]) -> Self {
        LoadSpec {
            body_force,
            ..Default::default()
        }
    }

    /// Fixes both displacement components of every node on `side`.
    pub fn pin_side(mut self, mesh: &Mesh, side: Side) -> Self {
        for &n in mesh.boundary_sets.side(side) {
            self.dirichlet.insert(dof(n, 0), 0.0);
            self.dirichlet.insert(dof(n, 1), 0.0);
        }
        self
    }

    /// Prescribes displacements on `side` from a function of position.
    pub fn prescribe_side(
        mut self,
        mesh: &Mesh,
        side: Side,
        f: impl Fn(f64, f64) -> [f64; 2],
    ) -> Self {
        for &n in mesh.boundary_sets.side(side) {
            let [x, y] = mesh.node_coords[n];
            let v = f(x, y);
            self.dirichlet.insert(dof(n, 0), v[0]);
            self.dirichlet.insert(dof(n, 1), v[1]);
        }
        self
    }

    pub fn with_traction(mut self, side: Side, t: [f64; 2]) -> Self {
        self.tractions.push((side, t));
        self
    }

    /// Gravity-driven self weight with a pinned bottom boundary.
    pub fn self_weight(mesh: &Mesh, rho_g: f64) -> Self {
        Self::new([0.0, -rho_g]).pin_side(mesh, Side::Bottom)
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if let Some((&d, _)) = self.dirichlet.iter().next_back() {
            if d >= mesh.n_dofs() {
                return Err(Error::IndexOutOfRange {
                    what: "dirichlet dofs",
                    index: d,
                    len: mesh.n_dofs(),
                });
            }
        }
        for &(side, t) in &self.tractions {
            let nodes = mesh.boundary_sets.side(side);
            // corner nodes are shared with the neighbouring side
            for &n in &nodes[1..nodes.len() - 1] {
                for c in 0..2 {
                    if t[c] != 0.0 && self.dirichlet.contains_key(&dof(n, c)) {
                        return Err(Error::invalid(format!(
                            "traction on {} overlaps a prescribed displacement at dof {}",
                            side.name(),
                            dof(n, c)
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn element_dofs(nodes: &[usize; 4]) -> [usize; 8] {
    let mut d = [0; 8];
    for a in 0..4 {
        d[2 * a] = dof(nodes[a], 0);
        d[2 * a + 1] = dof(nodes[a], 1);
    }
    d
}

pub(crate) fn geometry(mesh: &Mesh, e: usize) -> Result<QuadGeometry> {
    QuadGeometry::new(&mesh.element_coords(e))
}

fn band_width(mesh: &Mesh) -> usize {
    mesh.elements
        .iter()
        .map(|el| {
            let lo = el.iter().min().unwrap();
            let hi = el.iter().max().unwrap();
            2 * (hi - lo) + 1
        })
        .max()
        .unwrap_or(0)
}

/// Element stiffness for nodal Lamé values, 8x8 in node-major dof order.
pub(crate) fn element_stiffness(geo: &QuadGeometry, lam: &[f64; 4], mu: &[f64; 4]) -> [[f64; 8]; 8] {
    let mut ke = [[0.0; 8]; 8];
    for p in &geo.points {
        let l = p.interp(lam);
        let m = p.interp(mu);
        // a(v, u) = lambda div v div u + 2 mu eps(v):eps(u)
        for a in 0..4 {
            for i in 0..2 {
                let ga = p.grad[a];
                for b in 0..4 {
                    let gb = p.grad[b];
                    for j in 0..2 {
                        // eps(N_a e_i) : eps(N_b e_j) = 1/2 (delta_ij ga.gb + ga_j gb_i)
                        let dot = ga[0] * gb[0] + ga[1] * gb[1];
                        let eps = 0.5 * (if i == j { dot } else { 0.0 } + ga[j] * gb[i]);
                        ke[2 * a + i][2 * b + j] += p.dv * (l * ga[i] * gb[j] + 2.0 * m * eps);
                    }
                }
            }
        }
    }
    ke
}

/// Assembles the unconstrained stiffness matrix. Singular by the three
/// rigid-body modes until essential conditions are applied.
pub fn assemble_stiffness(mesh: &Mesh, mat: &MaterialField) -> Result<SymBandMatrix> {
    mat.validate(mesh)?;
    let lam = mat.lambda();
    let mu = mat.mu();
    let mut a = SymBandMatrix::zeros(mesh.n_dofs(), band_width(mesh));
    for (e, nodes) in mesh.elements.iter().enumerate() {
        let geo = geometry(mesh, e)?;
        let ke = element_stiffness(&geo, &nodes.map(|n| lam[n]), &nodes.map(|n| mu[n]));
        let dofs = element_dofs(nodes);
        for (r, &gr) in dofs.iter().enumerate() {
            for (c, &gc) in dofs.iter().enumerate() {
                if gc >= gr {
                    a.add(gr, gc, ke[r][c]);
                }
            }
        }
    }
    Ok(a)
}

/// Consistent load vector from body force and side tractions.
pub fn assemble_load(mesh: &Mesh, load: &LoadSpec) -> Result<Vec<f64>> {
    let mut b = vec![0.0; mesh.n_dofs()];
    for (e, nodes) in mesh.elements.iter().enumerate() {
        let geo = geometry(mesh, e)?;
        for p in &geo.points {
            for a in 0..4 {
                for c in 0..2 {
                    b[dof(nodes[a], c)] += p.dv * p.shape[a] * load.body_force[c];
                }
            }
        }
    }
    for &(side, t) in &load.tractions {
        let nodes = mesh.boundary_sets.side(side);
        for pair in nodes.windows(2) {
            let [x0, y0] = mesh.node_coords[pair[0]];
            let [x1, y1] = mesh.node_coords[pair[1]];
            let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
            // linear edge shape functions integrate to len/2 each
            for &n in pair {
                for c in 0..2 {
                    b[dof(n, c)] += 0.5 * len * t[c];
                }
            }
        }
    }
    Ok(b)
}

/// Assembles `A u = b` with essential conditions eliminated symmetrically.
pub fn assemble_system(
    mesh: &Mesh,
    mat: &MaterialField,
    load: &LoadSpec,
) -> Result<(SymBandMatrix, Vec<f64>)> {
    load.validate(mesh)?;
    if load.dirichlet.len() < 3 {
        return Err(Error::SingularSystem(format!(
            "{} prescribed dofs cannot remove the three rigid-body modes",
            load.dirichlet.len()
        )));
    }
    let mut a = assemble_stiffness(mesh, mat)?;
    let mut b = assemble_load(mesh, load)?;
    let bw = a.bandwidth();
    let n = a.n();
    for (&c, &g) in &load.dirichlet {
        if g != 0.0 {
            for r in c.saturating_sub(bw)..(c + bw + 1).min(n) {
                b[r] -= a.get(r, c) * g;
            }
        }
    }
    for (&c, &g) in &load.dirichlet {
        a.constrain(c);
        b[c] = g;
    }
    Ok((a, b))
}

/// Displacements together with the factor that produced them.
#[derive(Debug)]
pub struct SolveResult {
    pub u: Vec<f64>,
    pub factorization: BandCholesky,
}

/// Factors `A` once and solves for the displacement field.
pub fn solve_forward(a: &SymBandMatrix, b: &[f64]) -> Result<SolveResult> {
    let factorization = a.cholesky()?;
    let u = factorization.solve(b)?;
    Ok(SolveResult { u, factorization })
}

/// Convenience: assemble and solve in one call.
pub fn forward(mesh: &Mesh, mat: &MaterialField, load: &LoadSpec) -> Result<SolveResult> {
    let (a, b) = assemble_system(mesh, mat, load)?;
    solve_forward(&a, &b)
}
