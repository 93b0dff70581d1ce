//! Columnar text formats for nodal fields and observation sets.

use std::fmt::Write as _;
use std::path::Path;

use super::adjoint::ObservationSet;
use super::mesh::Mesh;
use crate::error::{ensure_len, Error, Result};
use crate::textio::{self, data_lines, fields, parse_f64, parse_usize};

/// One node per row: `index x y value`.
pub fn format_node_field(mesh: &Mesh, values: &[f64]) -> Result<String> {
    ensure_len("nodal field", mesh.n_nodes(), values.len())?;
    let mut s = format!(
        "# nodal field\n# nx: {}\n# ny: {}\n# index x y value\n",
        mesh.nx, mesh.ny
    );
    for (i, (&[x, y], &v)) in mesh.node_coords.iter().zip(values).enumerate() {
        let _ = writeln!(s, "{i} {x:?} {y:?} {v:?}");
    }
    Ok(s)
}

/// Parses a nodal field, returning coordinates and values in index order.
pub fn parse_node_field(text: &str) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    const WHAT: &str = "nodal field";
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (line, l) in data_lines(text) {
        let t = fields(WHAT, line, l, 4)?;
        let idx = parse_usize(WHAT, line, t[0])?;
        if idx != coords.len() {
            return Err(Error::Parse {
                what: WHAT,
                line,
                msg: format!("expected node {}, found {idx}", coords.len()),
            });
        }
        coords.push([parse_f64(WHAT, line, t[1])?, parse_f64(WHAT, line, t[2])?]);
        values.push(parse_f64(WHAT, line, t[3])?);
    }
    Ok((coords, values))
}

pub fn write_node_field(path: &Path, mesh: &Mesh, values: &[f64]) -> Result<()> {
    textio::write_file(path, &format_node_field(mesh, values)?)
}

pub fn read_node_field(path: &Path) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    parse_node_field(&textio::read_file(path)?)
}

/// One observation per row: `dof_index value weight`.
pub fn format_observations(obs: &ObservationSet) -> String {
    let mut s = String::from("# observations\n# dof_index value weight\n");
    for k in 0..obs.len() {
        let _ = writeln!(
            s,
            "{} {:?} {:?}",
            obs.dof_indices[k], obs.values[k], obs.weights[k]
        );
    }
    s
}

pub fn parse_observations(text: &str) -> Result<ObservationSet> {
    const WHAT: &str = "observations";
    let (mut d, mut v, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for (line, l) in data_lines(text) {
        let t = fields(WHAT, line, l, 3)?;
        d.push(parse_usize(WHAT, line, t[0])?);
        v.push(parse_f64(WHAT, line, t[1])?);
        w.push(parse_f64(WHAT, line, t[2])?);
    }
    ObservationSet::new(d, v, w)
}

pub fn write_observations(path: &Path, obs: &ObservationSet) -> Result<()> {
    textio::write_file(path, &format_observations(obs))
}

pub fn read_observations(path: &Path) -> Result<ObservationSet> {
    parse_observations(&textio::read_file(path)?)
}
