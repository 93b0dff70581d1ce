//! Shared plumbing for the whitespace-separated text formats.
//!
//! Floats are written with `{:?}`, which prints the shortest decimal that
//! parses back to the same bits, so every format round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn join_f64(vals: &[f64]) -> String {
    let mut s = String::with_capacity(vals.len() * 22);
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v:?}");
    }
    s
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty lines that are not `#` comments, with 1-based line numbers.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// `# key: value` header lines.
pub(crate) fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| {
            let rest = l.trim_start_matches('#').trim();
            let (k, v) = rest.split_once(':')?;
            (k.trim() == key).then(|| v.trim())
        })
}

pub(crate) fn parse_f64(what: &'static str, line: usize, tok: &str) -> Result<f64> {
    tok.parse::<f64>().map_err(|e| Error::Parse {
        what,
        line,
        msg: format!("{tok:?}: {e}"),
    })
}

pub(crate) fn parse_usize(what: &'static str, line: usize, tok: &str) -> Result<usize> {
    tok.parse::<usize>().map_err(|e| Error::Parse {
        what,
        line,
        msg: format!("{tok:?}: {e}"),
    })
}

pub(crate) fn fields<'a>(
    what: &'static str,
    line: usize,
    text: &'a str,
    expected: usize,
) -> Result<Vec<&'a str>> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks.len() != expected {
        return Err(Error::Parse {
            what,
            line,
            msg: format!("expected {expected} columns, found {}", toks.len()),
        });
    }
    Ok(toks)
}

pub(crate) fn parse_row(what: &'static str, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| parse_f64(what, line, t))
        .collect()
}

pub(crate) fn missing_header(what: &'static str, key: &str) -> Error {
    Error::Parse {
        what,
        line: 0,
        msg: format!("missing header field {key:?}"),
    }
}
