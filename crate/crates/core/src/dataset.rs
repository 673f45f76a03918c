//! Labeled samples (load, optimal cost, prices, dispatch) and their
//! JSON-lines file format: one record per line,
//! `{"load": [...], "J": ..., "mu": [...], "x": [...], "f": [...], "degenerate": ...}`.

use std::io::{BufRead, BufReader, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lp::{DcopfSolution, DcopfStatus};

#[derive(Debug, Clone)]
pub struct DataSample {
    pub load: DVector<f64>,
    pub j: f64,
    pub mu: DVector<f64>,
    pub x: DVector<f64>,
    pub f: DVector<f64>,
    pub degenerate: bool,
}

impl DataSample {
    pub fn from_solution(load: DVector<f64>, sol: &DcopfSolution) -> Self {
        Self {
            load,
            j: sol.j,
            mu: sol.mu.clone(),
            x: sol.x.clone(),
            f: sol.f.clone(),
            degenerate: sol.status == DcopfStatus::Degenerate,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    load: Vec<f64>,
    #[serde(rename = "J")]
    j: f64,
    mu: Vec<f64>,
    x: Vec<f64>,
    f: Vec<f64>,
    degenerate: bool,
}

impl From<&DataSample> for Record {
    fn from(s: &DataSample) -> Self {
        Record {
            load: s.load.as_slice().to_vec(),
            j: s.j,
            mu: s.mu.as_slice().to_vec(),
            x: s.x.as_slice().to_vec(),
            f: s.f.as_slice().to_vec(),
            degenerate: s.degenerate,
        }
    }
}

impl From<Record> for DataSample {
    fn from(r: Record) -> Self {
        DataSample {
            load: DVector::from_column_slice(&r.load),
            j: r.j,
            mu: DVector::from_column_slice(&r.mu),
            x: DVector::from_column_slice(&r.x),
            f: DVector::from_column_slice(&r.f),
            degenerate: r.degenerate,
        }
    }
}

pub fn write_jsonl(path: impl AsRef<std::path::Path>, samples: &[DataSample]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut out, &Record::from(s))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<std::path::Path>) -> Result<Vec<DataSample>> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut samples = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)?;
        samples.push(record.into());
    }
    Ok(samples)
}

/// Samples with a unique optimal basis; training labels default to these.
pub fn non_degenerate(samples: &[DataSample]) -> Vec<DataSample> {
    samples.iter().filter(|s| !s.degenerate).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn jsonl_roundtrip_is_exact() {
        let samples = vec![
            DataSample {
                load: DVector::from_column_slice(&[0.1, 0.2]),
                j: std::f64::consts::PI,
                mu: DVector::from_column_slice(&[1.0 / 3.0, 2.0]),
                x: DVector::from_column_slice(&[0.3, 0.0]),
                f: DVector::from_column_slice(&[-0.7]),
                degenerate: false,
            },
            DataSample {
                load: DVector::from_column_slice(&[0.0, 0.0]),
                j: 0.0,
                mu: DVector::zeros(2),
                x: DVector::zeros(2),
                f: DVector::zeros(1),
                degenerate: true,
            },
        ];
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write_jsonl(&path, &samples).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].j, samples[0].j);
        assert_eq!(back[0].mu, samples[0].mu);
        assert!(back[1].degenerate);
        // Byte-identical on rewrite.
        let path2 = dir.path().join("data2.jsonl");
        write_jsonl(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
