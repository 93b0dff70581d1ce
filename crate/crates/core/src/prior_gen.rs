//! Binary channelized snapshot ensembles.
//!
//! Each realization places a random number of sinusoidal channel bands that
//! cross the domain from left to right. Nodes inside any band take the
//! channel modulus, all others the host modulus, and the ensemble stores
//! `ln(lambda)` per node.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh_fem::Mesh;
use crate::par;
use crate::textio::{self, data_lines, header_value, missing_header, parse_f64, parse_row, parse_usize};

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSpec {
    /// Inclusive range for the number of channels per realization.
    pub n_channels: (usize, usize),
    /// Vertical band thickness as a fraction of the domain height.
    pub channel_width: f64,
    /// Centerline amplitude range, fraction of domain height.
    pub amplitude: (f64, f64),
    /// Centerline wavelength range, fraction of domain width.
    pub wavelength: (f64, f64),
    /// Channel modulus in MPa.
    pub lambda_channel: f64,
    /// Host modulus in MPa.
    pub lambda_host: f64,
    pub seed: u64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec {
            n_channels: (2, 2),
            channel_width: 0.16,
            amplitude: (0.05, 0.12),
            wavelength: (2.0, 4.0),
            lambda_channel: 10.0,
            lambda_host: 1000.0,
            seed: 2018,
        }
    }
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.n_channels;
        if lo > hi {
            return Err(Error::invalid("channel count range is empty"));
        }
        if hi == 0 {
            // all-host ensembles are allowed only when explicitly fixed at zero
            if lo != 0 {
                return Err(Error::invalid("channel count range is empty"));
            }
        } else if lo == 0 {
            return Err(Error::invalid(
                "channel count range admits zero channels; fix it at (0, 0) for an all-host field",
            ));
        }
        if !(self.lambda_channel > 0.0 && self.lambda_host > 0.0) {
            return Err(Error::invalid("moduli must be positive"));
        }
        if !(self.channel_width > 0.0 && self.channel_width <= 0.5) {
            return Err(Error::invalid("channel width fraction must lie in (0, 0.5]"));
        }
        let ok_range = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && 0.0 <= a && a <= b;
        if !ok_range(self.amplitude) || !ok_range(self.wavelength) || self.wavelength.0 <= 0.0 {
            return Err(Error::invalid("amplitude and wavelength ranges must be ordered and non-negative"));
        }
        if self.amplitude.1 + 0.5 * self.channel_width > 0.5 {
            return Err(Error::invalid("channel amplitude plus half width exceeds half the domain"));
        }
        Ok(())
    }
}

/// Centerline `y = offset + amplitude * sin(2 pi x / wavelength + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Channel {
    pub offset: f64,
    pub amplitude: f64,
    pub wavelength: f64,
    pub phase: f64,
    pub half_width: f64,
}

impl Channel {
    pub fn centerline(&self, x: f64) -> f64 {
        self.offset + self.amplitude * (2.0 * PI * x / self.wavelength + self.phase).sin()
    }

    /// Rasterizes the band onto a structured mesh.
    ///
    /// Column `i` covers every row within `half_width` of the centerline
    /// sampled at `x_i` and at the half-cell midpoints on either side, plus
    /// the rows nearest to those samples, so neighbouring columns always
    /// share at least one row.
    pub fn band_nodes(&self, mesh: &Mesh) -> Vec<bool> {
        let dx = mesh.width / mesh.nx as f64;
        let dy = mesh.height / mesh.ny as f64;
        let nearest = |y: f64| ((y / dy).round().max(0.0) as usize).min(mesh.ny);
        let mut inside = vec![false; mesh.n_nodes()];
        for i in 0..=mesh.nx {
            let x = i as f64 * dx;
            let samples = [
                (x - 0.5 * dx).max(0.0),
                x,
                (x + 0.5 * dx).min(mesh.width),
            ]
            .map(|s| self.centerline(s));
            let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (jlo, jhi) = (nearest(lo), nearest(hi));
            for j in 0..=mesh.ny {
                let y = j as f64 * dy;
                if (jlo..=jhi).contains(&j) || (lo - self.half_width..=hi + self.half_width).contains(&y) {
                    inside[mesh.node_index(i, j)] = true;
                }
            }
        }
        inside
    }
}

fn uniform(rng: &mut ChaCha8Rng, (a, b): (f64, f64)) -> f64 {
    if a == b {
        a
    } else {
        rng.random_range(a..b)
    }
}

/// Channels of realization `index`, drawn from its own RNG stream.
pub fn realization_channels(mesh: &Mesh, spec: &ChannelSpec, index: usize) -> Vec<Channel> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let n = rng.random_range(spec.n_channels.0..=spec.n_channels.1);
    (0..n)
        .map(|_| {
            let amplitude = uniform(&mut rng, spec.amplitude) * mesh.height;
            let half_width = 0.5 * spec.channel_width * mesh.height;
            let margin = amplitude + half_width;
            Channel {
                offset: uniform(&mut rng, (margin, mesh.height - margin)),
                amplitude,
                wavelength: uniform(&mut rng, spec.wavelength) * mesh.width,
                phase: rng.random_range(0.0..2.0 * PI),
                half_width,
            }
        })
        .collect()
}

/// `N_R x M` matrix of nodal `ln(lambda)` values.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub values: DMatrix<f64>,
    /// `(nx, ny)` of the generating mesh.
    pub mesh_dims: (usize, usize),
    pub seed: Option<u64>,
}

impl SnapshotSet {
    pub fn new(values: DMatrix<f64>, mesh_dims: (usize, usize)) -> Self {
        SnapshotSet {
            values,
            mesh_dims,
            seed: None,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        self.values.column(l).iter().copied().collect()
    }

    /// Node-wise ensemble mean.
    pub fn mean(&self) -> Vec<f64> {
        let m = self.len() as f64;
        self.values.row_iter().map(|r| r.sum() / m).collect()
    }
}

pub fn generate_snapshots(mesh: &Mesh, spec: &ChannelSpec, m: usize) -> Result<SnapshotSet> {
    spec.validate()?;
    if m < 2 {
        return Err(Error::invalid(format!("need at least 2 realizations, got {m}")));
    }
    let n = mesh.n_nodes();
    let y_ch = spec.lambda_channel.ln();
    let y_host = spec.lambda_host.ln();
    let mut data = vec![0.0; n * m];
    // column-major storage: one chunk per realization
    par::for_each_chunk_mut(&mut data, n, |l, col| {
        col.fill(y_host);
        for ch in realization_channels(mesh, spec, l) {
            for (v, inside) in col.iter_mut().zip(ch.band_nodes(mesh)) {
                if inside {
                    *v = y_ch;
                }
            }
        }
    });
    Ok(SnapshotSet {
        values: DMatrix::from_vec(n, m, data),
        mesh_dims: (mesh.nx, mesh.ny),
        seed: Some(spec.seed),
    })
}

/// Splits off column `index`; the remaining columns keep their order.
pub fn hold_out(set: &SnapshotSet, index: usize) -> Result<(Vec<f64>, SnapshotSet)> {
    if index >= set.len() {
        return Err(Error::IndexOutOfRange {
            what: "snapshot set",
            index,
            len: set.len(),
        });
    }
    let truth = set.column(index);
    let rest = set.values.clone().remove_column(index);
    Ok((
        truth,
        SnapshotSet {
            values: rest,
            mesh_dims: set.mesh_dims,
            seed: set.seed,
        },
    ))
}

const WHAT: &str = "snapshot set";

/// Row per node, column per realization.
pub fn format_snapshots(set: &SnapshotSet) -> String {
    let mut s = String::with_capacity(set.values.len() * 20);
    let _ = writeln!(s, "# snapshot set");
    let _ = writeln!(s, "# n_nodes: {}", set.n_nodes());
    let _ = writeln!(s, "# n_snapshots: {}", set.len());
    let _ = writeln!(s, "# mesh: {} {}", set.mesh_dims.0, set.mesh_dims.1);
    for row in set.values.row_iter() {
        let r: Vec<f64> = row.iter().copied().collect();
        s.push_str(&textio::join_f64(&r));
        s.push('\n');
    }
    s
}

pub fn parse_snapshots(text: &str) -> Result<SnapshotSet> {
    let n: usize = header_value(text, "n_nodes")
        .ok_or_else(|| missing_header(WHAT, "n_nodes"))
        .and_then(|v| parse_usize(WHAT, 0, v))?;
    let m: usize = header_value(text, "n_snapshots")
        .ok_or_else(|| missing_header(WHAT, "n_snapshots"))
        .and_then(|v| parse_usize(WHAT, 0, v))?;
    let dims = header_value(text, "mesh").ok_or_else(|| missing_header(WHAT, "mesh"))?;
    let d: Vec<usize> = dims
        .split_whitespace()
        .map(|t| parse_usize(WHAT, 0, t))
        .collect::<Result<_>>()?;
    if d.len() != 2 {
        return Err(missing_header(WHAT, "mesh"));
    }
    let mut values = DMatrix::zeros(n, m);
    let mut rows = 0;
    for (line, l) in data_lines(text) {
        let r = parse_row(WHAT, line, l)?;
        if r.len() != m || rows >= n {
            return Err(Error::Parse {
                what: WHAT,
                line,
                msg: format!("row {rows} has {} values, expected {m}", r.len()),
            });
        }
        values.row_mut(rows).iter_mut().zip(r).for_each(|(a, b)| *a = b);
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            what: WHAT,
            line: 0,
            msg: format!("found {rows} rows, expected {n}"),
        });
    }
    Ok(SnapshotSet {
        values,
        mesh_dims: (d[0], d[1]),
        seed: None,
    })
}

/// Metadata record stored next to a snapshot file.
pub fn format_metadata(set: &SnapshotSet, spec: &ChannelSpec) -> String {
    format!(
        "M: {}\nN_R: {}\nmesh: {} {}\nseed: {}\nn_channels: {} {}\nchannel_width: {:?}\n\
         amplitude: {:?} {:?}\nwavelength: {:?} {:?}\nlambda_channel: {:?}\nlambda_host: {:?}\n",
        set.len(),
        set.n_nodes(),
        set.mesh_dims.0,
        set.mesh_dims.1,
        spec.seed,
        spec.n_channels.0,
        spec.n_channels.1,
        spec.channel_width,
        spec.amplitude.0,
        spec.amplitude.1,
        spec.wavelength.0,
        spec.wavelength.1,
        spec.lambda_channel,
        spec.lambda_host,
    )
}

pub fn write_snapshots(path: &Path, set: &SnapshotSet, spec: &ChannelSpec) -> Result<()> {
    textio::write_file(path, &format_snapshots(set))?;
    textio::write_file(&path.with_extension("meta"), &format_metadata(set, spec))
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotSet> {
    let mut set = parse_snapshots(&textio::read_file(path)?)?;
    if let Ok(meta) = textio::read_file(&path.with_extension("meta")) {
        set.seed = meta
            .lines()
            .find_map(|l| l.strip_prefix("seed:"))
            .and_then(|v| v.trim().parse().ok());
    }
    Ok(set)
}

/// Reads a one-row-per-value vector written by [`format_vector`].
pub fn parse_vector(what: &'static str, text: &str) -> Result<Vec<f64>> {
    data_lines(text)
        .map(|(line, l)| parse_f64(what, line, l))
        .collect()
}

pub fn format_vector(title: &str, v: &[f64]) -> String {
    let mut s = format!("# {title}\n");
    for x in v {
        let _ = writeln!(s, "{x:?}");
    }
    s
}
