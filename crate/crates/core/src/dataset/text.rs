//! Plain-text dataset format: a `d,c` header, then one `x_1,...,x_d,label` row per sample.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, LabeledSample};
use crate::error::{Error, Result};

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))?;
    let (dim, classes) = parse_header(header)
        .ok_or_else(|| Error::format(path, format!("header must be `d,c`, found `{header}`")))?;

    let mut samples = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(Error::format(
                path,
                format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    dim + 1,
                    fields.len()
                ),
            ));
        }
        let features = fields[..dim]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", lineno + 1)))?;
        let label = fields[dim]
            .parse::<usize>()
            .map_err(|e| Error::format(path, format!("line {}: label: {e}", lineno + 1)))?;
        samples.push(LabeledSample::new(features, label));
    }
    Dataset::new(samples, dim, classes)
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let (d, c) = line.split_once(',')?;
    Some((d.trim().parse().ok()?, c.trim().parse().ok()?))
}

/// Writes floats with 17 significant digits so a read-back is exact.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("{},{}\n", data.dim(), data.classes());
    for s in data.samples() {
        for x in &s.features {
            write!(out, "{x:.16e},").expect("write to String");
        }
        writeln!(out, "{}", s.label).expect("write to String");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blobs.csv");
        let data = generate_synthetic(3, 3, 4, 5, 0.7).unwrap();
        write_csv(&data, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), data);
    }

    #[test]
    fn rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "2,2\n1.0,2.0,0\n1.0,1\n").unwrap();
        let err = read_csv(&path).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn rejects_label_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "1,2\n0.5,2\n").unwrap();
        assert!(read_csv(&path).is_err());
    }
}
