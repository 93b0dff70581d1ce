//! Experiment configuration, read from a single TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stochinv::kpca::{Kernel, PreimageOptions, Retain};
use stochinv::mcmc::{SamplerConfig, SamplerKind};
use stochinv::mesh_fem::{build_structured_mesh, LoadSpec, Mesh, Side};
use stochinv::prior_gen::ChannelSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub mesh: MeshConfig,
    pub prior: PriorConfig,
    pub reduction: ReductionConfig,
    pub pce: PceConfig,
    pub observation: ObservationConfig,
    pub likelihood: LikelihoodConfig,
    pub preimage: PreimageConfig,
    pub sampler: SamplerSection,
    pub report: ReportConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Elements along x and y.
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub n_snapshots: usize,
    pub seed: u64,
    pub n_channels: [usize; 2],
    pub channel_width: f64,
    pub amplitude: [f64; 2],
    pub wavelength: [f64; 2],
    pub lambda_channel: f64,
    pub lambda_host: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionConfig {
    /// `linear`, `polynomial <d> [c]` or `gaussian <sigma>`.
    pub kernel: String,
    /// Fixed retained dimension; takes precedence over `energy_fraction`.
    pub r: Option<usize>,
    pub energy_fraction: Option<f64>,
    /// Snapshot used as ground truth.
    pub truth_index: usize,
    /// Leave the truth out of the training set.
    pub hold_out_truth: bool,
    /// Also fit a linear-kernel (PCA) model of the same dimension.
    pub compare_pca: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PceConfig {
    pub order: usize,
    pub quadrature: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    pub sides: Vec<String>,
    /// Self-weight per unit volume; the bottom side is pinned.
    pub rho_g: f64,
    /// Std of the Gaussian noise added to synthetic observations.
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LikelihoodConfig {
    /// Absolute noise std assumed by the likelihood.
    pub noise_std: Option<f64>,
    /// Noise std as a multiple of the largest observed displacement magnitude;
    /// used when `noise_std` is unset.
    pub noise_std_relative: Option<f64>,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreimageConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub max_restarts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    /// Samplers run on the kernel model, from `langevin` and `random_walk`.
    pub kinds: Vec<String>,
    pub tau: f64,
    pub rw_std: f64,
    pub n_samples: usize,
    pub burn_in: Option<usize>,
    pub seed: u64,
    /// One chain per value, every coordinate of the start set to it.
    pub init_fills: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub histogram_bins: usize,
    pub histogram_range: [f64; 2],
    /// Polynomial degrees compared in the pre-image fidelity table.
    pub fidelity_degrees: Vec<u32>,
    pub fidelity_energy: f64,
    /// Training snapshots reconstructed per kernel (evenly spaced).
    pub fidelity_snapshots: usize,
    pub monotonicity_range: [f64; 2],
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            out_dir: PathBuf::from("out"),
            mesh: MeshConfig::default(),
            prior: PriorConfig::default(),
            reduction: ReductionConfig::default(),
            pce: PceConfig::default(),
            observation: ObservationConfig::default(),
            likelihood: LikelihoodConfig::default(),
            preimage: PreimageConfig::default(),
            sampler: SamplerSection::default(),
            report: ReportConfig::default(),
        }
    }
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { nx: 31, ny: 31, width: 1.0, height: 1.0 }
    }
}

impl Default for PriorConfig {
    fn default() -> Self {
        let c = ChannelSpec::default();
        PriorConfig {
            n_snapshots: 1000,
            seed: c.seed,
            n_channels: [c.n_channels.0, c.n_channels.1],
            channel_width: c.channel_width,
            amplitude: [c.amplitude.0, c.amplitude.1],
            wavelength: [c.wavelength.0, c.wavelength.1],
            lambda_channel: c.lambda_channel,
            lambda_host: c.lambda_host,
        }
    }
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            kernel: "polynomial 5".into(),
            r: Some(20),
            energy_fraction: None,
            truth_index: 0,
            hold_out_truth: true,
            compare_pca: true,
        }
    }
}

impl Default for PceConfig {
    fn default() -> Self {
        PceConfig { order: 10, quadrature: 64 }
    }
}

impl Default for ObservationConfig {
    fn default() -> Self {
        ObservationConfig {
            sides: vec!["top".into(), "left".into(), "right".into()],
            rho_g: 0.025,
            noise_std: 0.0,
            seed: 1,
        }
    }
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        LikelihoodConfig {
            noise_std: None,
            noise_std_relative: Some(1000f64.sqrt()),
            scale: 1000.0,
        }
    }
}

impl Default for PreimageConfig {
    fn default() -> Self {
        let p = PreimageOptions::default();
        PreimageConfig { tol: p.tol, max_iter: p.max_iter, max_restarts: p.max_restarts }
    }
}

impl Default for SamplerSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        SamplerSection {
            kinds: vec!["langevin".into(), "random_walk".into()],
            tau: s.tau,
            rw_std: s.rw_std,
            n_samples: s.n_samples,
            burn_in: None,
            seed: 1,
            init_fills: vec![-2.0, 0.0, 2.0],
        }
    }
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            histogram_bins: 40,
            histogram_range: [-4.0, 4.0],
            fidelity_degrees: vec![1, 2, 3, 4, 5],
            fidelity_energy: 0.75,
            fidelity_snapshots: 100,
            monotonicity_range: [-3.0, 3.0],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.channel_spec().validate()?;
        self.kernel()?.validate()?;
        self.retain()?;
        self.sides()?;
        for k in &self.sampler.kinds {
            k.parse::<SamplerKind>()?;
        }
        if self.sampler.init_fills.is_empty() {
            bail!("sampler.init_fills must hold at least one start");
        }
        if self.prior.n_snapshots == 0 {
            bail!("prior.n_snapshots must be positive");
        }
        if self.reduction.truth_index >= self.prior.n_snapshots {
            bail!(
                "reduction.truth_index {} is outside the {} snapshots",
                self.reduction.truth_index,
                self.prior.n_snapshots
            );
        }
        match (self.likelihood.noise_std, self.likelihood.noise_std_relative) {
            (Some(v), _) | (None, Some(v)) if v > 0.0 && v.is_finite() => {}
            (None, None) => bail!("set likelihood.noise_std or likelihood.noise_std_relative"),
            _ => bail!("likelihood noise std must be positive"),
        }
        if !(self.likelihood.scale >= 1.0) {
            bail!("likelihood.scale must be at least 1");
        }
        if !(self.observation.noise_std >= 0.0) {
            bail!("observation.noise_std must be non-negative");
        }
        if self.report.histogram_bins == 0 {
            bail!("report.histogram_bins must be positive");
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh> {
        let m = &self.mesh;
        Ok(build_structured_mesh(m.nx, m.ny, m.width, m.height)?)
    }

    pub fn channel_spec(&self) -> ChannelSpec {
        let p = &self.prior;
        ChannelSpec {
            n_channels: (p.n_channels[0], p.n_channels[1]),
            channel_width: p.channel_width,
            amplitude: (p.amplitude[0], p.amplitude[1]),
            wavelength: (p.wavelength[0], p.wavelength[1]),
            lambda_channel: p.lambda_channel,
            lambda_host: p.lambda_host,
            seed: p.seed,
        }
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Ok(self.reduction.kernel.parse()?)
    }

    pub fn retain(&self) -> Result<Retain> {
        match (self.reduction.r, self.reduction.energy_fraction) {
            (Some(r), _) => Ok(Retain::Count(r)),
            (None, Some(f)) => Ok(Retain::Energy(f)),
            (None, None) => bail!("set reduction.r or reduction.energy_fraction"),
        }
    }

    pub fn sides(&self) -> Result<Vec<Side>> {
        self.observation
            .sides
            .iter()
            .map(|s| Side::from_name(s).with_context(|| format!("unknown side {s:?}")))
            .collect()
    }

    pub fn load_spec(&self, mesh: &Mesh) -> LoadSpec {
        LoadSpec::self_weight(mesh, self.observation.rho_g)
    }

    pub fn preimage_options(&self) -> PreimageOptions {
        let p = &self.preimage;
        PreimageOptions { tol: p.tol, max_iter: p.max_iter, max_restarts: p.max_restarts }
    }

    /// Likelihood noise std for the given observed values.
    pub fn likelihood_noise_std(&self, observed: &[f64]) -> f64 {
        match (self.likelihood.noise_std, self.likelihood.noise_std_relative) {
            (Some(s), _) => s,
            (None, Some(rel)) => rel * observed.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            (None, None) => f64::NAN,
        }
    }

    /// One sampler config per chain for the given kind.
    pub fn chain_configs(&self, kind: SamplerKind) -> Vec<SamplerConfig> {
        let s = &self.sampler;
        SamplerConfig {
            kind,
            tau: s.tau,
            rw_std: s.rw_std,
            n_samples: s.n_samples,
            burn_in: s.burn_in,
            seed: s.seed,
            ..Default::default()
        }
        .for_fills(&s.init_fills)
    }

    pub fn burn_in(&self) -> usize {
        self.sampler.burn_in.unwrap_or(self.sampler.n_samples / 5)
    }

    /// Replaces the chain starts by `n` values evenly spread over the configured range.
    pub fn set_chain_count(&mut self, n: usize) -> Result<()> {
        if n == 0 {
            bail!("--chains must be at least 1");
        }
        let f = &self.sampler.init_fills;
        let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.sampler.init_fills = if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        };
        Ok(())
    }
}
