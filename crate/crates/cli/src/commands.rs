//! The pipeline stages. Each reads its inputs from the output directory and
//! writes its products there, so stages can be rerun independently.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use stochinv::kpca::{self, Kernel, KpcaModel, PreimageInit, Retain};
use stochinv::mcmc::{self, ChainRecord, Diagnostics, SamplerKind};
use stochinv::mesh_fem::io::{read_node_field, read_observations, write_node_field, write_observations};
use stochinv::pce::{self, PceModel};
use stochinv::posterior::{self, PosteriorSpec};
use stochinv::prior_gen::{self, SnapshotSet};

use crate::config::ExperimentConfig;
use crate::tables;

/// Where each stage keeps its files inside the output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Layout { root: cfg.out_dir.clone() }
    }

    pub fn snapshots(&self) -> PathBuf {
        self.root.join("snapshots.txt")
    }

    pub fn model(&self, family: Family) -> PathBuf {
        self.root.join(format!("{}_model.txt", family.name()))
    }

    pub fn pce(&self, family: Family) -> PathBuf {
        self.root.join(format!("{}_pce.txt", family.name()))
    }

    pub fn eigenvalues(&self) -> PathBuf {
        self.root.join("eigenvalues.txt")
    }

    pub fn truth(&self) -> PathBuf {
        self.root.join("truth.txt")
    }

    pub fn truth_projected(&self) -> PathBuf {
        self.root.join("truth_projected.txt")
    }

    pub fn observations(&self) -> PathBuf {
        self.root.join("observations.txt")
    }

    pub fn chains(&self) -> PathBuf {
        self.root.join("chains")
    }

    pub fn run_dir(&self, label: &str) -> PathBuf {
        self.chains().join(label)
    }

    pub fn posterior(&self) -> PathBuf {
        self.root.join("posterior")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// Kernel model (as configured) or its linear-kernel counterpart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Kpca,
    Pca,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Kpca => "kpca",
            Family::Pca => "pca",
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Truth field and training set per the hold-out setting.
fn split_truth(cfg: &ExperimentConfig) -> Result<(Vec<f64>, SnapshotSet)> {
    let set = read_set(cfg)?;
    let idx = cfg.reduction.truth_index;
    if cfg.reduction.hold_out_truth {
        Ok(prior_gen::hold_out(&set, idx)?)
    } else {
        if idx >= set.len() {
            bail!("truth index {idx} is outside the {} snapshots", set.len());
        }
        Ok((set.column(idx), set))
    }
}

fn read_set(cfg: &ExperimentConfig) -> Result<SnapshotSet> {
    let path = Layout::new(cfg).snapshots();
    let set = prior_gen::read_snapshots(&path).with_context(|| {
        format!("cannot load snapshots from {} (run `generate` first)", path.display())
    })?;
    let mesh = cfg.mesh()?;
    if set.n_nodes() != mesh.n_nodes() {
        bail!(
            "snapshots have {} nodes but the configured mesh has {}",
            set.n_nodes(),
            mesh.n_nodes()
        );
    }
    Ok(set)
}

/// Writes `M` channel-field realizations.
pub fn generate(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let mesh = cfg.mesh()?;
    let spec = cfg.channel_spec();
    let set = prior_gen::generate_snapshots(&mesh, &spec, cfg.prior.n_snapshots)?;
    let path = Layout::new(cfg).snapshots();
    prior_gen::write_snapshots(&path, &set, &spec)?;
    Ok(path)
}

#[derive(Clone, Debug)]
pub struct FitSummary {
    pub family: Family,
    pub kernel: Kernel,
    pub r: usize,
    pub energy_fraction: f64,
    /// Components whose chaos expansion is not monotone on the report range.
    pub monotonicity_violations: Vec<usize>,
}

/// Fits the reduced model(s) on the training snapshots (truth held out by default) and
/// their chaos expansions.
pub fn fit(cfg: &ExperimentConfig) -> Result<Vec<FitSummary>> {
    let layout = Layout::new(cfg);
    let (_, train) = split_truth(cfg)?;
    let kernel = cfg.kernel()?;
    let retain = cfg.retain()?;
    let kpca_model = kpca::fit(&train, kernel, retain)?;
    let mut out = vec![fit_family(cfg, &layout, Family::Kpca, &kpca_model)?];
    write(&layout.eigenvalues(), &tables::eigenvalue_table(&kpca_model))?;
    if cfg.reduction.compare_pca {
        // same dimension as the kernel model so the comparison isolates the kernel
        let pca_model = kpca::fit(&train, Kernel::linear(), Retain::Count(kpca_model.r))?;
        out.push(fit_family(cfg, &layout, Family::Pca, &pca_model)?);
    }
    Ok(out)
}

fn fit_family(cfg: &ExperimentConfig, layout: &Layout, family: Family, model: &KpcaModel) -> Result<FitSummary> {
    let chaos = pce::fit_pce(&model.xi_d, cfg.pce.order, cfg.pce.quadrature)?;
    kpca::io::write_model(&layout.model(family), model)?;
    pce::write_pce(&layout.pce(family), &chaos)?;
    let [lo, hi] = cfg.report.monotonicity_range;
    Ok(FitSummary {
        family,
        kernel: model.kernel,
        r: model.r,
        energy_fraction: model.energy_fraction(),
        monotonicity_violations: chaos.monotonicity_violations(lo, hi, 801),
    })
}

fn read_models(cfg: &ExperimentConfig, family: Family) -> Result<(KpcaModel, PceModel)> {
    let layout = Layout::new(cfg);
    let path = layout.model(family);
    let model = kpca::io::read_model(&path)
        .with_context(|| format!("cannot load {} (run `fit` first)", path.display()))?;
    let path = layout.pce(family);
    let chaos = pce::read_pce(&path)
        .with_context(|| format!("cannot load {} (run `fit` first)", path.display()))?;
    Ok((model, chaos))
}

#[derive(Clone, Debug)]
pub struct ObsSummary {
    pub n_observed_dofs: usize,
    pub noise_std: f64,
    /// Distance between the truth and its projection onto the kernel model.
    pub projection_error: f64,
}

/// Forward-solves the held-out truth and records noisy boundary displacements.
pub fn synth_obs(cfg: &ExperimentConfig) -> Result<ObsSummary> {
    let layout = Layout::new(cfg);
    let mesh = cfg.mesh()?;
    let (truth, _) = split_truth(cfg)?;
    let load = cfg.load_spec(&mesh);
    let dofs = posterior::boundary_observation_dofs(&mesh, &cfg.sides()?, &load);
    let o = &cfg.observation;
    let obs = posterior::synthesize_observations(&mesh, &load, &truth, dofs, o.noise_std, o.seed)?;
    write_observations(&layout.observations(), &obs)?;
    write_node_field(&layout.truth(), &mesh, &truth)?;
    let (model, _) = read_models(cfg, Family::Kpca)?;
    let projected = projected_field(&model, &truth, cfg)?;
    write_node_field(&layout.truth_projected(), &mesh, &projected)?;
    Ok(ObsSummary {
        n_observed_dofs: obs.len(),
        noise_std: o.noise_std,
        projection_error: posterior::l2_distance(&truth, &projected),
    })
}

/// Pre-image of the projection of `y` onto the retained components.
pub fn projected_field(model: &KpcaModel, y: &[f64], cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let xi = kpca::project(model, y)?;
    Ok(kpca::preimage(model, &xi, PreimageInit::Nearest, &cfg.preimage_options())?.y)
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub label: String,
    pub family: Family,
    pub kind: SamplerKind,
    /// `None` for chains that failed to start.
    pub acceptance: Vec<Option<f64>>,
    pub diagnostics: Option<Diagnostics>,
    /// L2 distance from the posterior-mean field to the projected truth.
    pub posterior_distance: Option<f64>,
    /// Same for the prior (training ensemble) mean field.
    pub prior_distance: f64,
    pub failures: Vec<String>,
}

impl RunSummary {
    pub fn mean_acceptance(&self) -> f64 {
        let ok: Vec<f64> = self.acceptance.iter().flatten().copied().collect();
        if ok.is_empty() {
            return 0.0;
        }
        ok.iter().sum::<f64>() / ok.len() as f64
    }

    pub fn first_agreement(&self) -> Option<usize> {
        self.diagnostics.as_ref().and_then(|d| d.first_agreement)
    }
}

pub fn run_label(family: Family, kind: SamplerKind) -> String {
    format!("{}_{}", family.name(), kind)
}

fn posterior_spec(cfg: &ExperimentConfig, family: Family) -> Result<PosteriorSpec> {
    let layout = Layout::new(cfg);
    let mesh = cfg.mesh()?;
    let (model, chaos) = read_models(cfg, family)?;
    let path = layout.observations();
    let obs = read_observations(&path)
        .with_context(|| format!("cannot load {} (run `synth-obs` first)", path.display()))?;
    let noise_std = cfg.likelihood_noise_std(&obs.values);
    let spec = PosteriorSpec {
        kpca: model,
        pce: chaos,
        load: cfg.load_spec(&mesh),
        mesh,
        obs,
        noise_variance: noise_std * noise_std,
        likelihood_scale: cfg.likelihood.scale,
        preimage: cfg.preimage_options(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Runs every configured sampler on the kernel model, plus Langevin on the
/// PCA model when enabled, and writes chains, field moments and tables.
pub fn invert(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    let layout = Layout::new(cfg);
    let (_, projected) = read_node_field(&layout.truth_projected())
        .context("cannot load the projected truth (run `synth-obs` first)")?;
    let mut runs: Vec<(Family, SamplerKind)> = cfg
        .sampler
        .kinds
        .iter()
        .map(|k| Ok((Family::Kpca, k.parse()?)))
        .collect::<Result<_>>()?;
    if cfg.reduction.compare_pca {
        runs.push((Family::Pca, SamplerKind::Langevin));
    }
    let mut summaries = Vec::new();
    let mut summary_text = String::from("# run chain acceptance\n");
    for (family, kind) in runs {
        let label = run_label(family, kind);
        let spec = posterior_spec(cfg, family).with_context(|| format!("preparing run {label}"))?;
        let dir = layout.run_dir(&label);
        if dir.exists() {
            fs::remove_dir_all(&dir).with_context(|| format!("cannot clear {}", dir.display()))?;
        }
        let results = mcmc::run_chains_to_dir(&spec, &cfg.chain_configs(kind), &dir);
        let s = summarize_run(cfg, &layout, &spec, &label, family, kind, results, &projected)?;
        for (i, a) in s.acceptance.iter().enumerate() {
            match a {
                Some(a) => writeln!(summary_text, "{label} {i} {a:.4}")?,
                None => writeln!(summary_text, "{label} {i} failed")?,
            }
        }
        summaries.push(s);
    }
    write(&layout.posterior().join("acceptance.txt"), &summary_text)?;
    write(&layout.posterior().join("summary.txt"), &tables::run_summary_table(&summaries))?;
    Ok(summaries)
}

#[allow(clippy::too_many_arguments)]
fn summarize_run(
    cfg: &ExperimentConfig,
    layout: &Layout,
    spec: &PosteriorSpec,
    label: &str,
    family: Family,
    kind: SamplerKind,
    results: Vec<stochinv::Result<ChainRecord>>,
    projected: &[f64],
) -> Result<RunSummary> {
    let prior_mean: Vec<f64> = spec.kpca.y.column_mean().iter().copied().collect();
    let mut failures = Vec::new();
    let mut acceptance = Vec::new();
    let mut records = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => {
                acceptance.push(Some(rec.acceptance_rate));
                records.push(rec);
            }
            Err(e) => {
                acceptance.push(None);
                failures.push(format!("chain {i}: {e}"));
            }
        }
    }
    let burn_in = cfg.burn_in();
    let diagnostics = mcmc::diagnostics(&records, burn_in).ok();
    let samples: Vec<Vec<f64>> = records
        .iter()
        .flat_map(|r| r.samples.iter().skip(burn_in).cloned())
        .collect();
    let out = layout.posterior();
    let mut posterior_distance = None;
    if !samples.is_empty() {
        let (mean, std) = posterior::field_moments(&spec.kpca, &spec.pce, &samples, &spec.preimage)?;
        write_node_field(&out.join(format!("{label}_mean.txt")), &spec.mesh, &mean)?;
        write_node_field(&out.join(format!("{label}_std.txt")), &spec.mesh, &std)?;
        posterior_distance = Some(posterior::l2_distance(&mean, projected));
        let [lo, hi] = cfg.report.histogram_range;
        write(
            &out.join(format!("{label}_histogram.txt")),
            &tables::histogram_table(&samples, cfg.report.histogram_bins, lo, hi),
        )?;
    }
    if !records.is_empty() {
        write(&out.join(format!("{label}_trace.txt")), &tables::trace_table(&records))?;
    }
    Ok(RunSummary {
        label: label.to_string(),
        family,
        kind,
        acceptance,
        diagnostics,
        posterior_distance,
        prior_distance: posterior::l2_distance(&prior_mean, projected),
        failures,
    })
}

/// Chain records of every run found under the chains directory.
pub fn load_runs(cfg: &ExperimentConfig) -> Result<Vec<(String, Vec<ChainRecord>)>> {
    let dir = Layout::new(cfg).chains();
    let entries = fs::read_dir(&dir)
        .with_context(|| format!("no chain directory at {} (run `invert` first)", dir.display()))?;
    let mut runs = Vec::new();
    for e in entries {
        let path = e?.path();
        if !path.is_dir() {
            continue;
        }
        let mut files: Vec<(usize, PathBuf)> = fs::read_dir(&path)?
            .filter_map(|f| {
                let p = f.ok()?.path();
                let idx = p.file_stem()?.to_str()?.strip_prefix("chain_")?.parse().ok()?;
                Some((idx, p))
            })
            .collect();
        files.sort();
        let records = files
            .iter()
            .map(|(_, p)| mcmc::read_chain(p).with_context(|| format!("reading {}", p.display())))
            .collect::<Result<Vec<_>>>()?;
        if !records.is_empty() {
            let label = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            runs.push((label, records));
        }
    }
    if runs.is_empty() {
        bail!("no chain files under {}", dir.display());
    }
    runs.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(runs)
}

#[derive(Clone, Debug)]
pub struct ReportSummary {
    pub runs: Vec<(String, Diagnostics)>,
    /// `(degree, r, mean relative error)` per polynomial degree.
    pub fidelity: Vec<(u32, usize, f64)>,
    pub eigenvalues: Vec<f64>,
    pub monotonicity: Vec<(Family, Vec<usize>)>,
}

/// Aggregates diagnostics of the persisted chains and the model tables.
pub fn report(cfg: &ExperimentConfig) -> Result<ReportSummary> {
    let layout = Layout::new(cfg);
    let runs = load_runs(cfg)?;
    let mut diags = Vec::new();
    for (label, records) in &runs {
        let d = mcmc::diagnostics(records, cfg.burn_in()).with_context(|| format!("diagnostics of {label}"))?;
        diags.push((label.clone(), d));
    }
    let out = layout.report();
    write(&out.join("diagnostics.txt"), &tables::diagnostics_table(&diags))?;

    let (model, _) = read_models(cfg, Family::Kpca)?;
    let eigenvalues = model.lambda_f[..model.r].to_vec();
    write(&out.join("eigen_decay.txt"), &tables::eigenvalue_table(&model))?;

    let mut monotonicity = Vec::new();
    let [lo, hi] = cfg.report.monotonicity_range;
    for family in [Family::Kpca, Family::Pca] {
        if family == Family::Pca && !cfg.reduction.compare_pca {
            continue;
        }
        let (_, chaos) = read_models(cfg, family)?;
        monotonicity.push((family, chaos.monotonicity_violations(lo, hi, 801)));
    }
    write(&out.join("pce_monotonicity.txt"), &tables::monotonicity_table(&monotonicity, lo, hi))?;

    let (_, train) = split_truth(cfg)?;
    let fidelity = fidelity(cfg, &train)?;
    write(&out.join("preimage_fidelity.txt"), &tables::fidelity_table(&fidelity))?;
    Ok(ReportSummary { runs: diags, fidelity, eigenvalues, monotonicity })
}

/// Mean relative reconstruction error of training snapshots per polynomial degree.
pub fn fidelity(cfg: &ExperimentConfig, train: &SnapshotSet) -> Result<Vec<(u32, usize, f64)>> {
    let m = train.len();
    let k = cfg.report.fidelity_snapshots.clamp(1, m);
    let idx: Vec<usize> = (0..k).map(|i| i * m / k).collect();
    cfg.report
        .fidelity_degrees
        .iter()
        .map(|&d| {
            let model = kpca::fit(train, Kernel::polynomial(d), Retain::Energy(cfg.report.fidelity_energy))?;
            let errs = kpca::training_reconstruction_errors(&model, &idx, &cfg.preimage_options())?;
            Ok((d, model.r, errs.iter().sum::<f64>() / errs.len() as f64))
        })
        .collect()
}
