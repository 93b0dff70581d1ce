//! Metropolis-adjusted Langevin and random-walk Metropolis samplers.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::par;
use crate::textio::{self, data_lines, header_value, missing_header, parse_f64, parse_usize};

/// Result of evaluating an unnormalized log density.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// `-inf` marks a point the sampler must reject.
    pub log_density: f64,
    pub grad: Option<Vec<f64>>,
    /// Opaque per-chain cache passed back on the next evaluation.
    pub warm: Option<Vec<f64>>,
}

impl Evaluation {
    pub fn rejected() -> Self {
        Evaluation {
            log_density: f64::NEG_INFINITY,
            grad: None,
            warm: None,
        }
    }
}

pub trait Target: Sync {
    fn dim(&self) -> usize;
    /// Must return `-inf` (not panic) when the point cannot be evaluated.
    fn evaluate(&self, x: &[f64], warm: Option<&[f64]>, with_grad: bool) -> Evaluation;
}

/// Standard normal target, mostly for calibration and tests.
#[derive(Clone, Copy, Debug)]
pub struct StandardNormalTarget(pub usize);

impl Target for StandardNormalTarget {
    fn dim(&self) -> usize {
        self.0
    }

    fn evaluate(&self, x: &[f64], _: Option<&[f64]>, with_grad: bool) -> Evaluation {
        Evaluation {
            log_density: -0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            grad: with_grad.then(|| x.iter().map(|v| -v).collect()),
            warm: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    Langevin,
    RandomWalk,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "langevin" => Ok(SamplerKind::Langevin),
            "random_walk" => Ok(SamplerKind::RandomWalk),
            _ => Err(Error::invalid(format!("unknown sampler {s:?}; use langevin or random_walk"))),
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplerKind::Langevin => "langevin",
            SamplerKind::RandomWalk => "random_walk",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitEta {
    /// Every coordinate set to the same value.
    Fill(f64),
    Vector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub tau: f64,
    pub rw_std: f64,
    pub n_samples: usize,
    /// Defaults to 20% of `n_samples`.
    pub burn_in: Option<usize>,
    pub seed: u64,
    /// RNG stream; chains sharing a seed stay independent on distinct streams.
    pub stream: u64,
    pub init: InitEta,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Langevin,
            tau: 0.08,
            rw_std: 0.1,
            n_samples: 2000,
            burn_in: None,
            seed: 0,
            stream: 0,
            init: InitEta::Fill(0.0),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SamplerKind::Langevin if !(self.tau > 0.0 && self.tau.is_finite()) => {
                Err(Error::invalid("langevin step tau must be positive"))
            }
            SamplerKind::RandomWalk if !(self.rw_std > 0.0 && self.rw_std.is_finite()) => {
                Err(Error::invalid("random-walk std must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_samples / 5)
    }

    pub fn initial_eta(&self, dim: usize) -> Result<Vec<f64>> {
        match &self.init {
            InitEta::Fill(v) => Ok(vec![*v; dim]),
            InitEta::Vector(v) if v.len() == dim => Ok(v.clone()),
            InitEta::Vector(v) => Err(Error::DimensionMismatch {
                what: "initial eta",
                expected: dim,
                got: v.len(),
            }),
        }
    }

    /// One config per fill value, sharing `self` otherwise, on streams `0, 1, ...`.
    pub fn for_fills(&self, fills: &[f64]) -> Vec<SamplerConfig> {
        fills
            .iter()
            .enumerate()
            .map(|(i, &f)| SamplerConfig {
                init: InitEta::Fill(f),
                stream: i as u64,
                ..self.clone()
            })
            .collect()
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub eta: Vec<f64>,
    pub log_post: f64,
    pub grad: Option<Vec<f64>>,
    pub warm: Option<Vec<f64>>,
}

impl ChainState {
    pub fn start<T: Target + ?Sized>(target: &T, eta: Vec<f64>, with_grad: bool) -> Result<Self> {
        let e = target.evaluate(&eta, None, with_grad);
        if !e.log_density.is_finite() || (with_grad && e.grad.is_none()) {
            return Err(Error::invalid("log density is not finite at the initial point"));
        }
        Ok(ChainState {
            eta,
            log_post: e.log_density,
            grad: e.grad,
            warm: e.warm,
        })
    }
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `eta + tau grad + sqrt(2 tau) z` for a given `z`.
pub fn langevin_propose_with(eta: &[f64], grad: &[f64], tau: f64, z: &[f64]) -> Vec<f64> {
    let s = (2.0 * tau).sqrt();
    eta.iter()
        .zip(grad)
        .zip(z)
        .map(|((e, g), z)| e + tau * g + s * z)
        .collect()
}

pub fn langevin_propose<R: Rng + ?Sized>(eta: &[f64], grad: &[f64], tau: f64, rng: &mut R) -> Vec<f64> {
    let z = standard_normal_vec(rng, eta.len());
    langevin_propose_with(eta, grad, tau, &z)
}

/// Unnormalized `ln q(to | from) = -|to - from - tau grad_from|^2 / (4 tau)`.
pub fn langevin_log_q(to: &[f64], from: &[f64], grad_from: &[f64], tau: f64) -> f64 {
    let d: f64 = to
        .iter()
        .zip(from)
        .zip(grad_from)
        .map(|((t, f), g)| (t - f - tau * g).powi(2))
        .sum();
    -d / (4.0 * tau)
}

/// Log acceptance ratio of a Langevin move `from -> to`, using the
/// gradient at `to` for the reverse kernel.
pub fn langevin_log_alpha(from: &ChainState, to: &ChainState, tau: f64) -> f64 {
    let (Some(gf), Some(gt)) = (&from.grad, &to.grad) else {
        return f64::NEG_INFINITY;
    };
    to.log_post - from.log_post + langevin_log_q(&from.eta, &to.eta, gt, tau)
        - langevin_log_q(&to.eta, &from.eta, gf, tau)
}

/// One Metropolis-Hastings transition. Returns the new state and whether the
/// proposal was accepted. Every step draws `dim` normals and one uniform.
pub fn mh_step<T: Target + ?Sized, R: Rng + ?Sized>(
    state: ChainState,
    target: &T,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> (ChainState, bool) {
    let z = standard_normal_vec(rng, state.eta.len());
    let u: f64 = rng.random();
    let (proposal, with_grad) = match cfg.kind {
        SamplerKind::Langevin => {
            let Some(g) = &state.grad else {
                return (state, false);
            };
            (langevin_propose_with(&state.eta, g, cfg.tau, &z), true)
        }
        SamplerKind::RandomWalk => (
            state.eta.iter().zip(&z).map(|(e, z)| e + cfg.rw_std * z).collect::<Vec<_>>(),
            false,
        ),
    };
    let e = target.evaluate(&proposal, state.warm.as_deref(), with_grad);
    if !e.log_density.is_finite() || (with_grad && e.grad.is_none()) {
        return (state, false);
    }
    let next = ChainState {
        eta: proposal,
        log_post: e.log_density,
        grad: e.grad,
        warm: e.warm.or_else(|| state.warm.clone()),
    };
    let log_alpha = match cfg.kind {
        SamplerKind::Langevin => langevin_log_alpha(&state, &next, cfg.tau),
        SamplerKind::RandomWalk => next.log_post - state.log_post,
    };
    if u.ln() < log_alpha {
        (next, true)
    } else {
        (state, false)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainRecord {
    /// One row per step.
    pub samples: Vec<Vec<f64>>,
    pub log_posts: Vec<f64>,
    pub accepted: Vec<bool>,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub stream: u64,
    pub kind: SamplerKind,
}

impl ChainRecord {
    fn empty(cfg: &SamplerConfig) -> Self {
        ChainRecord {
            samples: Vec::new(),
            log_posts: Vec::new(),
            accepted: Vec::new(),
            acceptance_rate: 0.0,
            seed: cfg.seed,
            stream: cfg.stream,
            kind: cfg.kind,
        }
    }

    fn push(&mut self, s: &ChainState, acc: bool) {
        self.samples.push(s.eta.clone());
        self.log_posts.push(s.log_post);
        self.accepted.push(acc);
    }

    fn finish(&mut self) {
        let n = self.accepted.len();
        self.acceptance_rate = if n == 0 {
            0.0
        } else {
            self.accepted.iter().filter(|&&a| a).count() as f64 / n as f64
        };
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }
}

/// Receives each recorded step as it happens.
pub trait ChainSink {
    fn record(&mut self, step: usize, state: &ChainState, accepted: bool) -> Result<()>;
}

pub fn run_chain<T: Target + ?Sized>(
    target: &T,
    cfg: &SamplerConfig,
    mut sink: Option<&mut dyn ChainSink>,
) -> Result<ChainRecord> {
    cfg.validate()?;
    let mut record = ChainRecord::empty(cfg);
    if cfg.n_samples == 0 {
        return Ok(record);
    }
    let with_grad = cfg.kind == SamplerKind::Langevin;
    let mut rng = cfg.rng();
    let mut state = ChainState::start(target, cfg.initial_eta(target.dim())?, with_grad)?;
    for k in 0..cfg.n_samples {
        let (next, acc) = mh_step(state, target, cfg, &mut rng);
        state = next;
        record.push(&state, acc);
        if let Some(s) = sink.as_deref_mut() {
            s.record(k, &state, acc)?;
        }
    }
    record.finish();
    Ok(record)
}

/// Runs independent chains concurrently. A failing chain yields its own
/// error without affecting the others.
pub fn run_chains<T: Target + ?Sized>(target: &T, cfgs: &[SamplerConfig]) -> Vec<Result<ChainRecord>> {
    par::map_slice(cfgs, |cfg| run_chain(target, cfg, None))
}

/// As [`run_chains`], appending every step to `dir/chain_<i>.txt` as it is taken.
pub fn run_chains_to_dir<T: Target + ?Sized>(
    target: &T,
    cfgs: &[SamplerConfig],
    dir: &Path,
) -> Vec<Result<ChainRecord>> {
    let indexed: Vec<(usize, &SamplerConfig)> = cfgs.iter().enumerate().collect();
    par::map_slice(&indexed, |&(i, cfg)| {
        let mut writer = ChainWriter::create(&dir.join(format!("chain_{i}.txt")), cfg)?;
        let rec = run_chain(target, cfg, Some(&mut writer))?;
        writer.flush()?;
        Ok(rec)
    })
}

/// Plain-text chain file: `# key: value` header, then
/// `step accepted log_post eta_1 .. eta_r` per row.
pub struct ChainWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl ChainWriter {
    pub fn create(path: &Path, cfg: &SamplerConfig) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = ChainWriter {
            out: BufWriter::new(f),
            path: path.to_path_buf(),
        };
        let header = format!(
            "# chain\n# kind: {}\n# seed: {}\n# stream: {}\n# tau: {:?}\n# rw_std: {:?}\n# step accepted log_post eta...\n",
            cfg.kind, cfg.seed, cfg.stream, cfg.tau, cfg.rw_std
        );
        w.out.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(w)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

impl ChainSink for ChainWriter {
    fn record(&mut self, step: usize, state: &ChainState, accepted: bool) -> Result<()> {
        let line = format!(
            "{step} {} {:?} {}\n",
            u8::from(accepted),
            state.log_post,
            textio::join_f64(&state.eta)
        );
        self.out.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        if step % 50 == 49 {
            self.flush()?;
        }
        Ok(())
    }
}

pub fn parse_chain(text: &str) -> Result<ChainRecord> {
    const WHAT: &str = "chain file";
    let kind: SamplerKind = header_value(text, "kind").ok_or_else(|| missing_header(WHAT, "kind"))?.parse()?;
    let seed = header_value(text, "seed")
        .ok_or_else(|| missing_header(WHAT, "seed"))?
        .parse()
        .map_err(|e| Error::Parse { what: WHAT, line: 0, msg: format!("seed: {e}") })?;
    let stream = header_value(text, "stream")
        .ok_or_else(|| missing_header(WHAT, "stream"))?
        .parse()
        .map_err(|e| Error::Parse { what: WHAT, line: 0, msg: format!("stream: {e}") })?;
    let mut rec = ChainRecord {
        samples: Vec::new(),
        log_posts: Vec::new(),
        accepted: Vec::new(),
        acceptance_rate: 0.0,
        seed,
        stream,
        kind,
    };
    for (line, l) in data_lines(text) {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() < 4 {
            return Err(Error::Parse { what: WHAT, line, msg: "expected step, flag, log_post and eta".into() });
        }
        let step = parse_usize(WHAT, line, t[0])?;
        if step != rec.samples.len() {
            return Err(Error::Parse { what: WHAT, line, msg: format!("expected step {}", rec.samples.len()) });
        }
        let acc = match t[1] {
            "0" => false,
            "1" => true,
            other => return Err(Error::Parse { what: WHAT, line, msg: format!("bad flag {other:?}") }),
        };
        let eta = t[3..].iter().map(|v| parse_f64(WHAT, line, v)).collect::<Result<Vec<_>>>()?;
        if !rec.samples.is_empty() && eta.len() != rec.dim() {
            return Err(Error::Parse { what: WHAT, line, msg: "row length changed".into() });
        }
        rec.log_posts.push(parse_f64(WHAT, line, t[2])?);
        rec.accepted.push(acc);
        rec.samples.push(eta);
    }
    rec.finish();
    Ok(rec)
}

pub fn read_chain(path: &Path) -> Result<ChainRecord> {
    parse_chain(&textio::read_file(path)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub burn_in: usize,
    /// Potential scale reduction per component.
    pub rhat: Vec<f64>,
    pub acceptance: Vec<f64>,
    /// Pooled post-burn-in mean and standard deviation per component.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Earliest step from which every component's running means agree within
    /// `AGREEMENT_BAND` across chains for the rest of the run.
    pub first_agreement: Option<usize>,
}

pub const AGREEMENT_BAND: f64 = 0.2;

fn mean_var(x: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = x.clone().count() as f64;
    let m = x.clone().sum::<f64>() / n;
    (m, x.map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

/// Earliest step after which chain running means stay within `band`.
pub fn first_agreement(records: &[ChainRecord], band: f64) -> Option<usize> {
    let n = records.iter().map(ChainRecord::len).min()?;
    let dim = records.first()?.dim();
    let mut sums = vec![vec![0.0; dim]; records.len()];
    let mut agree = vec![false; n];
    for k in 0..n {
        for (c, rec) in records.iter().enumerate() {
            for (s, v) in sums[c].iter_mut().zip(&rec.samples[k]) {
                *s += v;
            }
        }
        agree[k] = (0..dim).all(|j| {
            let means = sums.iter().map(|s| s[j] / (k + 1) as f64);
            let lo = means.clone().fold(f64::INFINITY, f64::min);
            let hi = means.fold(f64::NEG_INFINITY, f64::max);
            hi - lo <= band
        });
    }
    let tail = agree.iter().rev().take_while(|&&a| a).count();
    (tail > 0).then(|| n - tail)
}

pub fn diagnostics(records: &[ChainRecord], burn_in: usize) -> Result<Diagnostics> {
    if records.len() < 2 {
        return Err(Error::invalid("between-chain diagnostics need at least two chains"));
    }
    let n_all = records.iter().map(ChainRecord::len).min().unwrap_or(0);
    if n_all < burn_in + 2 {
        return Err(Error::invalid(format!(
            "chains of length {n_all} leave fewer than 2 samples after burn-in {burn_in}"
        )));
    }
    let dim = records[0].dim();
    if records.iter().any(|r| r.dim() != dim) {
        return Err(Error::invalid("chains have different dimensions"));
    }
    let n = (n_all - burn_in) as f64;
    let mut rhat = Vec::with_capacity(dim);
    let mut mean = Vec::with_capacity(dim);
    let mut std = Vec::with_capacity(dim);
    for j in 0..dim {
        let stats: Vec<(f64, f64)> = records
            .iter()
            .map(|r| mean_var(r.samples[burn_in..n_all].iter().map(|s| s[j])))
            .collect();
        let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
        let m = stats.len() as f64;
        let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
        let b_over_n = stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / (m - 1.0);
        rhat.push(if w > 0.0 {
            ((w + b_over_n) / w).sqrt()
        } else if b_over_n == 0.0 {
            1.0
        } else {
            f64::INFINITY
        });
        let (pm, pv) = mean_var(
            records
                .iter()
                .flat_map(|r| r.samples[burn_in..n_all].iter().map(move |s| s[j])),
        );
        mean.push(pm);
        std.push(pv.sqrt());
        let _ = n;
    }
    Ok(Diagnostics {
        burn_in,
        rhat,
        acceptance: records.iter().map(|r| r.acceptance_rate).collect(),
        mean,
        std,
        first_agreement: first_agreement(records, AGREEMENT_BAND),
    })
}
