//! Log-posterior over the Gaussian germ `eta` and its adjoint gradient.
//!
//! `eta -> xi` (chaos expansion) `-> y` (pre-image) `-> lambda = mu = exp(y)`
//! `-> u` (plane strain solve). The prior on `eta` is standard normal and the
//! likelihood Gaussian with variance `noise_variance` per observed dof,
//! weighted by the observation weights and tempered by `likelihood_scale`.

use crate::error::{Error, Result};
use crate::kpca::{self, KpcaModel, PreimageInit, PreimageOptions};
use crate::mcmc::{Evaluation, Target};
use crate::mesh_fem::{
    cost_misfit, forward, misfit_and_log_gradient, LoadSpec, MaterialField, Mesh, ObservationSet, Side,
    SolveResult,
};
use crate::par;
use crate::pce::{self, PceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug)]
pub struct PosteriorSpec {
    pub kpca: KpcaModel,
    pub pce: PceModel,
    pub mesh: Mesh,
    pub load: LoadSpec,
    pub obs: ObservationSet,
    pub noise_variance: f64,
    pub likelihood_scale: f64,
    pub preimage: PreimageOptions,
}

impl PosteriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::invalid("noise variance must be positive and finite"));
        }
        if !(self.likelihood_scale >= 1.0 && self.likelihood_scale.is_finite()) {
            return Err(Error::invalid("likelihood scale must be finite and at least 1"));
        }
        if self.kpca.r != self.pce.dim() {
            return Err(Error::DimensionMismatch {
                what: "chaos expansion components",
                expected: self.kpca.r,
                got: self.pce.dim(),
            });
        }
        if self.kpca.n_nodes() != self.mesh.n_nodes() {
            return Err(Error::DimensionMismatch {
                what: "snapshot length",
                expected: self.mesh.n_nodes(),
                got: self.kpca.n_nodes(),
            });
        }
        self.load.validate(&self.mesh)?;
        self.obs
            .validate(self.mesh.n_dofs(), |d| self.load.dirichlet.contains_key(&d))
    }

    pub fn dim(&self) -> usize {
        self.kpca.r
    }

    fn check_eta(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "eta",
                expected: self.dim(),
                got: eta.len(),
            });
        }
        if !eta.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("eta"));
        }
        Ok(())
    }
}

/// Every dof on the given sides that is not prescribed by `load`.
pub fn boundary_observation_dofs(mesh: &Mesh, sides: &[Side], load: &LoadSpec) -> Vec<usize> {
    let mut nodes: Vec<usize> = sides
        .iter()
        .flat_map(|&s| mesh.boundary_sets.side(s).iter().copied())
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
        .into_iter()
        .flat_map(|n| [2 * n, 2 * n + 1])
        .filter(|d| !load.dirichlet.contains_key(d))
        .collect()
}

/// Observations of `u(exp(y_truth))` on the given dofs plus independent
/// `N(0, noise_std^2)` noise from a seeded stream.
pub fn synthesize_observations(
    mesh: &Mesh,
    load: &LoadSpec,
    y_truth: &[f64],
    dofs: Vec<usize>,
    noise_std: f64,
    seed: u64,
) -> Result<ObservationSet> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid("observation noise std must be finite and non-negative"));
    }
    let u = forward(mesh, &MaterialField::locked(y_truth.to_vec()), load)?.u;
    let mut obs = ObservationSet::from_field(&u, dofs)?;
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut obs.values {
            *v += noise_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(obs)
}

/// Pointwise mean and standard deviation of the pre-images of `samples`
/// (rows of `eta`), as fields over the mesh nodes.
pub fn field_moments(
    kpca_model: &KpcaModel,
    pce_model: &PceModel,
    samples: &[Vec<f64>],
    opts: &PreimageOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to average"));
    }
    let fields = par::map_slice(samples, |eta| -> Result<Vec<f64>> {
        let xi = pce::eval_pce(pce_model, eta)?;
        Ok(kpca::preimage(kpca_model, &xi, PreimageInit::Nearest, opts)?.y)
    });
    let n = kpca_model.n_nodes();
    let mut sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for f in fields {
        for ((s, q), v) in sum.iter_mut().zip(&mut sq).zip(f?) {
            *s += v;
            *q += v * v;
        }
    }
    let k = samples.len() as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / k).collect();
    let std = sq.iter().zip(&mean).map(|(q, m)| (q / k - m * m).max(0.0).sqrt()).collect();
    Ok((mean, std))
}

/// Euclidean distance between two nodal fields.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug)]
pub struct Pipeline {
    pub xi: Vec<f64>,
    pub y: Vec<f64>,
    pub preimage_iterations: usize,
    pub material: MaterialField,
    pub solve: SolveResult,
}

/// Runs the chain `eta -> xi -> y -> u`. Errors carry the failing stage.
pub fn forward_pipeline(spec: &PosteriorSpec, eta: &[f64], warm: Option<&[f64]>) -> Result<Pipeline> {
    spec.check_eta(eta)?;
    let xi = pce::eval_pce(&spec.pce, eta).map_err(|e| e.at_stage("chaos expansion"))?;
    let init = warm.map_or(PreimageInit::Nearest, PreimageInit::Given);
    let pre = kpca::preimage(&spec.kpca, &xi, init, &spec.preimage).map_err(|e| e.at_stage("pre-image"))?;
    let material = MaterialField::locked(pre.y.clone());
    let solve = forward(&spec.mesh, &material, &spec.load).map_err(|e| e.at_stage("forward solve"))?;
    Ok(Pipeline {
        xi,
        y: pre.y,
        preimage_iterations: pre.iterations,
        material,
        solve,
    })
}

#[derive(Debug)]
pub struct PosteriorEval {
    pub eta: Vec<f64>,
    /// `-(likelihood_scale * misfit + prior_term)`, or `-inf` if the pipeline failed.
    pub log_post: f64,
    /// `(1 / 2 sigma^2) sum_k D_k e_k^2`
    pub misfit: f64,
    /// `|eta|^2 / 2`
    pub prior_term: f64,
    pub pipeline: Option<Pipeline>,
    pub failure: Option<Error>,
}

impl PosteriorEval {
    pub fn is_finite(&self) -> bool {
        self.log_post.is_finite()
    }

    pub fn y(&self) -> Option<&[f64]> {
        self.pipeline.as_ref().map(|p| p.y.as_slice())
    }

    pub fn u(&self) -> Option<&[f64]> {
        self.pipeline.as_ref().map(|p| p.solve.u.as_slice())
    }
}

pub fn log_posterior(spec: &PosteriorSpec, eta: &[f64], warm: Option<&[f64]>) -> Result<PosteriorEval> {
    spec.check_eta(eta)?;
    let prior_term = 0.5 * eta.iter().map(|v| v * v).sum::<f64>();
    let mut eval = PosteriorEval {
        eta: eta.to_vec(),
        log_post: f64::NEG_INFINITY,
        misfit: f64::NAN,
        prior_term,
        pipeline: None,
        failure: None,
    };
    match forward_pipeline(spec, eta, warm) {
        Ok(p) => {
            eval.misfit = cost_misfit(&p.solve.u, &spec.obs)? / spec.noise_variance;
            eval.log_post = -(spec.likelihood_scale * eval.misfit + prior_term);
            eval.pipeline = Some(p);
        }
        Err(e) => eval.failure = Some(e),
    }
    Ok(eval)
}

/// Gradient of the log-posterior at a completed evaluation. Adds one adjoint
/// solve on the stored factorization and one implicit pre-image solve.
pub fn grad_log_posterior(spec: &PosteriorSpec, eval: &PosteriorEval) -> Result<Vec<f64>> {
    let Some(p) = &eval.pipeline else {
        return Err(Error::invalid("gradient requested at a failed evaluation"));
    };
    let (_, g_y) = misfit_and_log_gradient(&spec.mesh, &p.material, &p.solve, &spec.obs)
        .map_err(|e| e.at_stage("adjoint"))?;
    let g_xi = kpca::preimage_vjp(&spec.kpca, &p.xi, &p.y, &g_y).map_err(|e| e.at_stage("pre-image jacobian"))?;
    let dxi = pce::pce_derivative(&spec.pce, &eval.eta)?;
    let c = spec.likelihood_scale / spec.noise_variance;
    Ok(eval
        .eta
        .iter()
        .zip(dxi.iter().zip(&g_xi))
        .map(|(eta, (d, g))| -c * d * g - eta)
        .collect())
}

impl Target for PosteriorSpec {
    fn dim(&self) -> usize {
        self.kpca.r
    }

    fn evaluate(&self, x: &[f64], warm: Option<&[f64]>, with_grad: bool) -> Evaluation {
        let eval = match log_posterior(self, x, warm) {
            Ok(e) if e.is_finite() => e,
            _ => return Evaluation::rejected(),
        };
        let grad = if with_grad {
            match grad_log_posterior(self, &eval) {
                Ok(g) if g.iter().all(|v| v.is_finite()) => Some(g),
                _ => return Evaluation::rejected(),
            }
        } else {
            None
        };
        Evaluation {
            log_density: eval.log_post,
            grad,
            warm: eval.pipeline.map(|p| p.y),
        }
    }
}
