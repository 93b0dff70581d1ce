//! Plain columnar text tables for plotting.

use std::fmt::Write as _;

use stochinv::kpca::KpcaModel;
use stochinv::mcmc::{ChainRecord, Diagnostics};

use crate::commands::{Family, RunSummary};

/// `index eigenvalue cumulative_fraction` for the retained components.
pub fn eigenvalue_table(model: &KpcaModel) -> String {
    let total: f64 = model.lambda_f.iter().sum();
    let mut s = format!("# kernel: {}\n# index eigenvalue cumulative_fraction\n", model.kernel);
    let mut cum = 0.0;
    for (k, l) in model.lambda_f[..model.r].iter().enumerate() {
        cum += l;
        let _ = writeln!(s, "{} {l:.9e} {:.6}", k + 1, cum / total);
    }
    s
}

/// Per-component density histogram: `component bin_center density`.
/// Samples outside `[lo, hi)` are counted in the normalization but not binned.
pub fn histogram_table(samples: &[Vec<f64>], bins: usize, lo: f64, hi: f64) -> String {
    let dim = samples.first().map_or(0, Vec::len);
    let width = (hi - lo) / bins as f64;
    let n = samples.len() as f64;
    let mut s = String::from("# component bin_center density\n");
    for j in 0..dim {
        let mut counts = vec![0usize; bins];
        for x in samples {
            let b = ((x[j] - lo) / width).floor();
            if b >= 0.0 && (b as usize) < bins {
                counts[b as usize] += 1;
            }
        }
        for (b, c) in counts.iter().enumerate() {
            let center = lo + (b as f64 + 0.5) * width;
            let _ = writeln!(s, "{} {center:.6} {:.6e}", j + 1, *c as f64 / (n * width));
        }
    }
    s
}

/// One row per step: `step`, then `log_post` and every coordinate for each chain.
pub fn trace_table(records: &[ChainRecord]) -> String {
    let n = records.iter().map(ChainRecord::len).min().unwrap_or(0);
    let dim = records.first().map_or(0, ChainRecord::dim);
    let mut s = String::from("# step");
    for c in 0..records.len() {
        let _ = write!(s, " c{c}_log_post");
        for j in 1..=dim {
            let _ = write!(s, " c{c}_eta{j}");
        }
    }
    s.push('\n');
    for k in 0..n {
        let _ = write!(s, "{k}");
        for r in records {
            let _ = write!(s, " {:?}", r.log_posts[k]);
            for v in &r.samples[k] {
                let _ = write!(s, " {v:?}");
            }
        }
        s.push('\n');
    }
    s
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn run_summary_table(runs: &[RunSummary]) -> String {
    let mut s = String::from(
        "# run mean_acceptance max_rhat first_agreement posterior_mean_distance prior_mean_distance failed_chains\n",
    );
    for r in runs {
        let rhat = r
            .diagnostics
            .as_ref()
            .map(|d| d.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let _ = writeln!(
            s,
            "{} {:.4} {} {} {} {:.6} {}",
            r.label,
            r.mean_acceptance(),
            fmt_opt(rhat.map(|v| format!("{v:.4}"))),
            fmt_opt(r.first_agreement()),
            fmt_opt(r.posterior_distance.map(|v| format!("{v:.6}"))),
            r.prior_distance,
            r.failures.len()
        );
    }
    s
}

/// `run component rhat mean std`, plus acceptance rows per chain.
pub fn diagnostics_table(runs: &[(String, Diagnostics)]) -> String {
    let mut s = String::from("# run component rhat mean std\n");
    for (label, d) in runs {
        for j in 0..d.rhat.len() {
            let _ = writeln!(s, "{label} {} {:.5} {:.6} {:.6}", j + 1, d.rhat[j], d.mean[j], d.std[j]);
        }
    }
    s.push_str("# run chain acceptance\n");
    for (label, d) in runs {
        for (c, a) in d.acceptance.iter().enumerate() {
            let _ = writeln!(s, "{label} {c} {a:.4}");
        }
    }
    s.push_str("# run burn_in first_agreement\n");
    for (label, d) in runs {
        let _ = writeln!(s, "{label} {} {}", d.burn_in, fmt_opt(d.first_agreement));
    }
    s
}

pub fn fidelity_table(rows: &[(u32, usize, f64)]) -> String {
    let mut s = String::from("# degree r mean_relative_error\n");
    for (d, r, e) in rows {
        let _ = writeln!(s, "{d} {r} {e:.6e}");
    }
    s
}

pub fn monotonicity_table(rows: &[(Family, Vec<usize>)], lo: f64, hi: f64) -> String {
    let mut s = format!("# components whose chaos expansion decreases somewhere on [{lo}, {hi}]\n# model component\n");
    for (f, comps) in rows {
        for c in comps {
            let _ = writeln!(s, "{} {}", f.name(), c + 1);
        }
    }
    s
}
