//! Single-file text archive for fitted models.
//!
//! Layout: `#` header lines, then `[section]` blocks of whitespace-separated
//! rows. The Gram matrix is recomputed from the stored snapshots on load.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::fit::{gram_matrix, KpcaModel};
use super::kernel::Kernel;
use crate::error::{Error, Result};
use crate::textio::{self, header_value, join_f64, missing_header, parse_row, parse_usize};

const WHAT: &str = "kpca archive";

fn write_matrix(s: &mut String, name: &str, a: &DMatrix<f64>) {
    let _ = writeln!(s, "[{name}]");
    for row in a.row_iter() {
        let r: Vec<f64> = row.iter().copied().collect();
        s.push_str(&join_f64(&r));
        s.push('\n');
    }
}

pub fn format_model(model: &KpcaModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# kpca model");
    let _ = writeln!(s, "# kernel: {}", model.kernel);
    let _ = writeln!(s, "# n_nodes: {}", model.n_nodes());
    let _ = writeln!(s, "# n_snapshots: {}", model.n_snapshots());
    let _ = writeln!(s, "# r: {}", model.r);
    let _ = writeln!(s, "# n_lambda: {}", model.lambda_f.len());
    let _ = writeln!(s, "[lambda_f]");
    s.push_str(&join_f64(&model.lambda_f));
    s.push('\n');
    write_matrix(&mut s, "v", &model.v);
    write_matrix(&mut s, "xi_d", &model.xi_d);
    write_matrix(&mut s, "y", &model.y);
    s
}

fn header_usize(text: &str, key: &str) -> Result<usize> {
    let v = header_value(text, key).ok_or_else(|| missing_header(WHAT, key))?;
    parse_usize(WHAT, 0, v)
}

pub fn parse_model(text: &str) -> Result<KpcaModel> {
    let kernel: Kernel = header_value(text, "kernel")
        .ok_or_else(|| missing_header(WHAT, "kernel"))?
        .parse()?;
    let n = header_usize(text, "n_nodes")?;
    let m = header_usize(text, "n_snapshots")?;
    let r = header_usize(text, "r")?;
    let nl = header_usize(text, "n_lambda")?;

    let mut sections: Vec<(String, usize, Vec<Vec<f64>>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if let Some(name) = l.strip_prefix('[').and_then(|x| x.strip_suffix(']')) {
            sections.push((name.to_string(), line, Vec::new()));
            continue;
        }
        let Some(sec) = sections.last_mut() else {
            return Err(Error::Parse {
                what: WHAT,
                line,
                msg: "data before first section".into(),
            });
        };
        sec.2.push(parse_row(WHAT, line, l)?);
    }
    let take = |name: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
        let (_, line, data) = sections
            .iter()
            .find(|s| s.0 == name)
            .ok_or_else(|| missing_header(WHAT, name))?;
        if data.len() != rows || data.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse {
                what: WHAT,
                line: *line,
                msg: format!("section [{name}] is not {rows} x {cols}"),
            });
        }
        Ok(DMatrix::from_fn(rows, cols, |i, j| data[i][j]))
    };
    let lambda = take("lambda_f", 1, nl)?;
    let v = take("v", m, r)?;
    let xi_d = take("xi_d", m, r)?;
    let y = take("y", n, m)?;
    if r == 0 || r > nl {
        return Err(Error::Parse {
            what: WHAT,
            line: 0,
            msg: format!("retained dimension {r} outside 1..={nl}"),
        });
    }
    Ok(KpcaModel {
        kernel,
        gram: gram_matrix(&kernel, &y),
        y,
        v,
        lambda_f: lambda.iter().copied().collect(),
        r,
        xi_d,
    })
}

pub fn write_model(path: &Path, model: &KpcaModel) -> Result<()> {
    textio::write_file(path, &format_model(model))
}

pub fn read_model(path: &Path) -> Result<KpcaModel> {
    parse_model(&textio::read_file(path)?)
}
