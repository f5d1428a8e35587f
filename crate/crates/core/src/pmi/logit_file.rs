//! Pre-extracted logits: an `n,c` header followed by `n` rows of `c`
//! comma-separated floats. One file per mini-dataset.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::FeatureMatrix;
use crate::error::{Error, Result};

pub fn read_logit_file(path: impl AsRef<Path>, source_index: usize) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))?;
    let (n, c) = header
        .split_once(',')
        .and_then(|(n, c)| {
            Some((
                n.trim().parse::<usize>().ok()?,
                c.trim().parse::<usize>().ok()?,
            ))
        })
        .ok_or_else(|| Error::format(path, format!("header must be `n,c`, found `{header}`")))?;

    let mut data = Vec::with_capacity(n * c);
    let mut rows = 0;
    for line in lines {
        rows += 1;
        let before = data.len();
        for field in line.split(',') {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::format(path, format!("row {rows}: {e}")))?;
            data.push(v);
        }
        if data.len() - before != c {
            return Err(Error::format(
                path,
                format!(
                    "row {rows} has {} values, header says {c}",
                    data.len() - before
                ),
            ));
        }
    }
    if rows != n {
        return Err(Error::format(
            path,
            format!("header says {n} rows, found {rows}"),
        ));
    }
    FeatureMatrix::from_flat(n, c, data, source_index)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_logit_file(features: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("{},{}\n", features.n(), features.c());
    for row in features.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(",")).expect("write to String");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
