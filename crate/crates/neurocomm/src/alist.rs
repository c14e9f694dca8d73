//! `alist` parity-check matrix files.
//!
//! ```text
//! n m
//! max_col_weight max_row_weight
//! <n column weights>
//! <m row weights>
//! <n lines: 1-based row indices of each column>
//! <m lines: 1-based column indices of each row>
//! ```
//!
//! Index lines may be padded with zeros up to the maximum weight.

use std::fmt::Write as _;
use std::path::Path;

use neurocomm_core::baseline::LdpcCode;

use crate::error::{Error, Result};

fn numbers(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::invalid(format!("alist: bad number {t:?}"))))
        .collect()
}

/// Parses the adjacency lists; returns `(n, checks)`.
pub fn parse_alist(text: &str) -> Result<(usize, Vec<Vec<usize>>)> {
    let lines: Vec<Vec<usize>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(numbers)
        .collect::<Result<_>>()?;
    let bad = |msg: &str| Error::invalid(format!("alist: {msg}"));
    let dims = lines.first().ok_or_else(|| bad("empty file"))?;
    let &[n, m] = dims.as_slice() else {
        return Err(bad("first line must be `n m`"));
    };
    if lines.len() != 4 + n + m {
        return Err(bad("line count does not match the declared dimensions"));
    }
    let (col_w, row_w) = (&lines[2], &lines[3]);
    if col_w.len() != n || row_w.len() != m {
        return Err(bad("weight lists do not match the declared dimensions"));
    }
    let entries = |line: &[usize], weight: usize, bound: usize| -> Result<Vec<usize>> {
        let idx: Vec<usize> = line.iter().copied().filter(|&i| i != 0).collect();
        if idx.len() != weight || idx.iter().any(|&i| i > bound) {
            return Err(bad("index list disagrees with its weight or bounds"));
        }
        Ok(idx.into_iter().map(|i| i - 1).collect())
    };
    let mut from_cols = vec![Vec::new(); m];
    for (v, line) in lines[4..4 + n].iter().enumerate() {
        for c in entries(line, col_w[v], m)? {
            from_cols[c].push(v);
        }
    }
    let mut checks = Vec::with_capacity(m);
    for (c, line) in lines[4 + n..].iter().enumerate() {
        let mut row = entries(line, row_w[c], n)?;
        row.sort_unstable();
        if row != from_cols[c] {
            return Err(bad("row and column lists describe different matrices"));
        }
        checks.push(row);
    }
    Ok((n, checks))
}

pub fn format_alist(n: usize, checks: &[Vec<usize>]) -> String {
    let m = checks.len();
    let mut cols = vec![Vec::new(); n];
    for (c, row) in checks.iter().enumerate() {
        for &v in row {
            cols[v].push(c);
        }
    }
    let max_c = cols.iter().map(Vec::len).max().unwrap_or(0);
    let max_r = checks.iter().map(Vec::len).max().unwrap_or(0);
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let padded = |v: &[usize], width: usize| {
        let mut ids: Vec<usize> = v.iter().map(|i| i + 1).collect();
        ids.resize(width, 0);
        join(&ids)
    };
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "{n} {m}").unwrap();
    writeln!(w, "{max_c} {max_r}").unwrap();
    writeln!(w, "{}", join(&cols.iter().map(Vec::len).collect::<Vec<_>>())).unwrap();
    writeln!(w, "{}", join(&checks.iter().map(Vec::len).collect::<Vec<_>>())).unwrap();
    for col in &cols {
        writeln!(w, "{}", padded(col, max_c)).unwrap();
    }
    for row in checks {
        writeln!(w, "{}", padded(row, max_r)).unwrap();
    }
    out
}

pub fn load_code(path: &Path) -> Result<LdpcCode> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (n, checks) = parse_alist(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    Ok(LdpcCode::from_checks(n, checks)?)
}

pub fn save_code(path: &Path, code: &LdpcCode) -> Result<()> {
    std::fs::write(path, format_alist(code.len(), code.checks())).map_err(|e| Error::io(path, e))
}
