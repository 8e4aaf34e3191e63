//! Report JSON, point-cloud files and atomic writes.

use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::Value;

/// One command run. Only `provenance` varies between identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub config_digest: String,
    pub parameters: Value,
    pub results: Value,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub wall_time_ms: f64,
    pub threads: usize,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file next to {}", path.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.as_file().sync_all().ok();
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// CSV with header `x1,…,xd,weight`. Floats use Rust's shortest
/// round-trip formatting.
pub fn write_points_csv<W: Write>(mut out: W, points: &[DVector<f64>], weights: &[f64]) -> io::Result<()> {
    let d = points.first().map_or(0, |p| p.len());
    for i in 1..=d {
        write!(out, "x{i},")?;
    }
    writeln!(out, "weight")?;
    for (p, w) in points.iter().zip(weights) {
        for x in p.iter() {
            write!(out, "{x},")?;
        }
        writeln!(out, "{w}")?;
    }
    Ok(())
}

pub fn points_csv(points: &[DVector<f64>], weights: &[f64]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_points_csv(&mut buf, points, weights).expect("writing to a Vec cannot fail");
    buf
}

/// Reads back what [`write_points_csv`] writes.
pub fn read_points_csv(text: &str) -> anyhow::Result<(Vec<DVector<f64>>, Vec<f64>)> {
    let mut lines = text.lines();
    let header = lines.next().context("empty point file")?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.last() != Some(&"weight") || cols.len() < 2 {
        bail!("header must be x1,…,xd,weight; got {header:?}");
    }
    let d = cols.len() - 1;
    let (mut points, mut weights) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let vals = line
            .split(',')
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("row {}", k + 2))?;
        if vals.len() != d + 1 {
            bail!("row {} has {} columns, expected {}", k + 2, vals.len(), d + 1);
        }
        points.push(DVector::from_column_slice(&vals[..d]));
        weights.push(vals[d]);
    }
    Ok((points, weights))
}

/// Binary little-endian PLY with `double` vertex coordinates and weight.
pub fn points_ply(points: &[DVector<f64>], weights: &[f64]) -> anyhow::Result<Vec<u8>> {
    if points.iter().any(|p| p.len() != 3) {
        bail!("PLY output is only written for d = 3");
    }
    let mut buf = Vec::new();
    write!(
        buf,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nproperty double weight\nend_header\n",
        points.len()
    )?;
    for (p, w) in points.iter().zip(weights) {
        for x in p.iter().chain(std::iter::once(w)) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_exactly() {
        let pts = vec![
            DVector::from_vec(vec![0.1 + 0.2, 1.0 / 3.0]),
            DVector::from_vec(vec![1e-300, -2.5]),
        ];
        let ws = vec![0.5, 0.1 + 0.2];
        let text = String::from_utf8(points_csv(&pts, &ws)).unwrap();
        assert!(text.starts_with("x1,x2,weight\n0.30000000000000004,0.3333333333333333,0.5\n"));
        let (p, w) = read_points_csv(&text).unwrap();
        assert_eq!((p, w), (pts, ws));
    }

    #[test]
    fn ply_layout() {
        let pts = vec![DVector::from_vec(vec![1.0, 2.0, 3.0])];
        let bytes = points_ply(&pts, &[0.25]).unwrap();
        let split = bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        assert_eq!(bytes.len() - split, 32);
        assert_eq!(f64::from_le_bytes(bytes[split + 24..].try_into().unwrap()), 0.25);
        assert!(points_ply(&[DVector::from_vec(vec![1.0, 2.0])], &[1.0]).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
