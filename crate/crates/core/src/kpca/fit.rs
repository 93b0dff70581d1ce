use nalgebra::{DMatrix, SymmetricEigen};

use super::kernel::Kernel;
use crate::error::{Error, Result};
use crate::par;
use crate::prior_gen::SnapshotSet;

/// How many principal directions to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Retain {
    Count(usize),
    /// Smallest count whose eigenvalue sum reaches this share of the total.
    Energy(f64),
}

/// Fitted kernel PCA. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct KpcaModel {
    pub kernel: Kernel,
    /// Training snapshots, one per column (`N_R x M`).
    pub y: DMatrix<f64>,
    /// Uncentered Gram matrix.
    pub gram: DMatrix<f64>,
    /// Retained eigenvectors of the centered Gram (`M x r`), unit columns.
    pub v: DMatrix<f64>,
    /// Eigenvalues of `(1/M) Kc` above the clipping threshold, descending.
    pub lambda_f: Vec<f64>,
    pub r: usize,
    /// Training feature coordinates, one row per snapshot (`M x r`).
    pub xi_d: DMatrix<f64>,
}

pub(crate) fn col(y: &DMatrix<f64>, l: usize) -> &[f64] {
    let n = y.nrows();
    &y.as_slice()[l * n..(l + 1) * n]
}

pub fn gram_matrix(kernel: &Kernel, y: &DMatrix<f64>) -> DMatrix<f64> {
    let m = y.ncols();
    // row i holds K[i, j] for j >= i
    let upper = par::map_range(m, |i| {
        let yi = col(y, i);
        (i..m).map(|j| kernel.apply(yi, col(y, j))).collect::<Vec<_>>()
    });
    let mut k = DMatrix::zeros(m, m);
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            k[(i, i + off)] = v;
            k[(i + off, i)] = v;
        }
    }
    k
}

/// `Kc = K - 1K - K1 + 1K1` with `1` the all-`1/M` matrix.
pub fn center_gram(k: &DMatrix<f64>) -> DMatrix<f64> {
    let m = k.nrows();
    let mf = m as f64;
    let col_mean: Vec<f64> = (0..m).map(|j| k.column(j).sum() / mf).collect();
    let row_mean: Vec<f64> = (0..m).map(|i| k.row(i).sum() / mf).collect();
    let all = col_mean.iter().sum::<f64>() / mf;
    DMatrix::from_fn(m, m, |i, j| k[(i, j)] - row_mean[i] - col_mean[j] + all)
}

pub fn fit(set: &SnapshotSet, kernel: Kernel, retain: Retain) -> Result<KpcaModel> {
    fit_matrix(&set.values, kernel, retain)
}

pub fn fit_matrix(y: &DMatrix<f64>, kernel: Kernel, retain: Retain) -> Result<KpcaModel> {
    kernel.validate()?;
    let m = y.ncols();
    if m < 2 {
        return Err(Error::invalid(format!("need at least 2 snapshots, got {m}")));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("snapshot matrix"));
    }
    match retain {
        Retain::Count(r) if r == 0 || r > m => {
            return Err(Error::invalid(format!("retained dimension must lie in 1..={m}, got {r}")))
        }
        Retain::Energy(f) if !(f > 0.0 && f < 1.0) => {
            return Err(Error::invalid(format!("energy fraction must lie in (0, 1), got {f}")))
        }
        _ => {}
    }

    let gram = gram_matrix(&kernel, y);
    let kc = center_gram(&gram) / m as f64;
    let eig = SymmetricEigen::new(kc);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let lmax = eig.eigenvalues[order[0]];
    let scale = gram.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(lmax > 1e-12 * scale) {
        return Err(Error::Degenerate(format!(
            "largest centered eigenvalue {lmax:e} is negligible; snapshots are (nearly) identical"
        )));
    }
    let tau = 1e-12 * lmax;
    let kept: Vec<usize> = order
        .into_iter()
        .take_while(|&k| eig.eigenvalues[k] > tau)
        .collect();
    let lambda_f: Vec<f64> = kept.iter().map(|&k| eig.eigenvalues[k]).collect();

    let r = match retain {
        Retain::Count(r) => {
            if r > lambda_f.len() {
                return Err(Error::invalid(format!(
                    "requested {r} components but only {} eigenvalues are positive",
                    lambda_f.len()
                )));
            }
            r
        }
        Retain::Energy(f) => {
            let total: f64 = lambda_f.iter().sum();
            let mut acc = 0.0;
            let mut r = lambda_f.len();
            for (k, l) in lambda_f.iter().enumerate() {
                acc += l;
                if acc >= f * total {
                    r = k + 1;
                    break;
                }
            }
            r
        }
    };

    let mut v = DMatrix::zeros(m, r);
    for (c, &k) in kept.iter().take(r).enumerate() {
        let mut e = eig.eigenvectors.column(k).into_owned();
        // deterministic sign: largest-magnitude entry positive
        let imax = e.iamax();
        if e[imax] < 0.0 {
            e.neg_mut();
        }
        v.set_column(c, &e);
    }
    let xi_d = &v * (m as f64).sqrt();
    Ok(KpcaModel {
        kernel,
        y: y.clone(),
        gram,
        v,
        lambda_f,
        r,
        xi_d,
    })
}

impl KpcaModel {
    pub fn n_nodes(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.y.ncols()
    }

    /// Share of the positive spectrum captured by the retained components.
    pub fn energy_fraction(&self) -> f64 {
        let total: f64 = self.lambda_f.iter().sum();
        self.lambda_f[..self.r].iter().sum::<f64>() / total
    }

    pub fn snapshot(&self, l: usize) -> &[f64] {
        col(&self.y, l)
    }

    /// Coordinates `xi` of training snapshot `l`.
    pub fn training_xi(&self, l: usize) -> Vec<f64> {
        self.xi_d.row(l).iter().copied().collect()
    }
}

/// `sqrt(M) V^T`, stored transposed: row `l` holds the coordinates of snapshot `l`.
pub fn feature_coordinates(model: &KpcaModel) -> DMatrix<f64> {
    &model.v * (model.n_snapshots() as f64).sqrt()
}

/// Expansion weights `beta` of the feature point `(1/sqrt M) Phi~ V xi + Phi_bar`
/// over the training images; they sum to one.
pub fn feature_weights(model: &KpcaModel, xi: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != model.r {
        return Err(Error::DimensionMismatch {
            what: "feature coordinates",
            expected: model.r,
            got: xi.len(),
        });
    }
    let m = model.n_snapshots() as f64;
    let vx: Vec<f64> = (0..model.n_snapshots())
        .map(|i| model.v.row(i).iter().zip(xi).map(|(a, b)| a * b).sum())
        .collect();
    let mean = vx.iter().sum::<f64>() / m;
    let sm = m.sqrt();
    Ok(vx.iter().map(|v| (v - mean) / sm + 1.0 / m).collect())
}

/// Squared feature-space distance from `sum beta_i Phi(y_i)` to each training image.
pub(crate) fn feature_distances(model: &KpcaModel, beta: &[f64]) -> Vec<f64> {
    let m = model.n_snapshots();
    let kb: Vec<f64> = (0..m)
        .map(|j| model.gram.column(j).iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    let bkb: f64 = kb.iter().zip(beta).map(|(a, b)| a * b).sum();
    (0..m).map(|j| bkb - 2.0 * kb[j] + model.gram[(j, j)]).collect()
}

/// Coordinates of an arbitrary field on the retained components:
/// `xi_k = v_k . k~(y) / (sqrt(M) lambda_k)` with `k~` the centered kernel
/// vector. Reproduces the training coordinates exactly.
pub fn project(model: &KpcaModel, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != model.n_nodes() {
        return Err(Error::DimensionMismatch {
            what: "field to project",
            expected: model.n_nodes(),
            got: y.len(),
        });
    }
    let m = model.n_snapshots();
    let mf = m as f64;
    let kv: Vec<f64> = (0..m).map(|i| model.kernel.apply(model.snapshot(i), y)).collect();
    let kmean = kv.iter().sum::<f64>() / mf;
    let row_mean: Vec<f64> = (0..m).map(|i| model.gram.column(i).sum() / mf).collect();
    let all = row_mean.iter().sum::<f64>() / mf;
    let kt: Vec<f64> = (0..m).map(|i| kv[i] - kmean - row_mean[i] + all).collect();
    Ok((0..model.r)
        .map(|k| {
            let p: f64 = model.v.column(k).iter().zip(&kt).map(|(a, b)| a * b).sum();
            p / (mf.sqrt() * model.lambda_f[k])
        })
        .collect())
}
