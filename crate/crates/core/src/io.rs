//! CSV and binary serialization of matrices, spectra, histograms, trajectories
//! and sweep tables.
//!
//! Floating-point values are written in scientific notation with 17
//! significant digits, which round-trips every `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    if s == "NaN" {
        return Ok(f64::NAN);
    }
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::param(format!("cannot parse {s:?} as a number: {e}")))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Reads a CSV file with a header row into its header and numeric rows.
/// Non-numeric columns are rejected; use [`read_table`] for mixed tables.
pub fn read_numeric_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let (header, rows) = read_table(input)?;
    let rows = rows
        .into_iter()
        .map(|r| r.iter().map(|v| parse_f64(v)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}

/// Reads a CSV file with a header row into string cells.
pub fn read_table<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Sidecar manifest describing a binary trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySidecar {
    pub format: String,
    pub byte_order: String,
    pub dim: usize,
    pub n_records: usize,
    pub record_len: usize,
    pub fields: Vec<String>,
}

/// Writes `records` (each `record_len` floats) as little-endian `f64` and a
/// JSON sidecar at `path` + `.json`.
pub(crate) fn write_f64_records(
    path: &Path,
    dim: usize,
    fields: Vec<String>,
    records: &[Vec<f64>],
) -> Result<BinarySidecar> {
    let record_len = fields.len();
    let mut out = create(path)?;
    for rec in records {
        if rec.len() != record_len {
            return Err(Error::param("binary record length mismatch"));
        }
        for v in rec {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    let sidecar = BinarySidecar {
        format: "f64-records".to_string(),
        byte_order: "little-endian".to_string(),
        dim,
        n_records: records.len(),
        record_len,
        fields,
    };
    let mut side_path = path.as_os_str().to_owned();
    side_path.push(".json");
    let side = create(Path::new(&side_path))?;
    serde_json::to_writer_pretty(side, &sidecar)?;
    Ok(sidecar)
}

/// Reads a little-endian `f64` record stream written by the binary exporter.
pub fn read_f64_records(path: &Path, record_len: usize) -> Result<Vec<Vec<f64>>> {
    let bytes = std::fs::read(path)?;
    if record_len == 0 || bytes.len() % (8 * record_len) != 0 {
        return Err(Error::param("binary file length is not a whole number of records"));
    }
    Ok(bytes
        .chunks_exact(8 * record_len)
        .map(|rec| {
            rec.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn decimal_format_round_trips(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back = parse_f64(&fmt_f64(x)).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn nan_is_written_literally() {
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        assert!(parse_f64("NaN").unwrap().is_nan());
    }

    #[test]
    fn binary_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.bin");
        let recs = vec![vec![0.0, 1.5, -2.25], vec![1e-300, f64::MAX, 3.0]];
        let side = write_f64_records(
            &path,
            1,
            vec!["time".into(), "re".into(), "im".into()],
            &recs,
        )
        .unwrap();
        assert_eq!(side.n_records, 2);
        assert_eq!(read_f64_records(&path, 3).unwrap(), recs);
        assert!(dir.path().join("traj.bin.json").exists());
    }
}
