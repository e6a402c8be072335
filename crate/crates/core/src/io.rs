//! CSV and JSON artifacts.
//!
//! Probability matrices are written as `delta,n0,n1,…` with one probe per
//! row; POVM coefficients as `n,k0,k1,…` with one outcome per row. Floats use
//! the shortest representation that parses back to the same bits, with `.`
//! as decimal separator regardless of locale.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tomography::{Normalization, PovmSet, ProbabilityMatrix};

/// Version of the JSON report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_probabilities<W: Write>(p: &ProbabilityMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["delta".to_string()];
    header.extend(p.modes.iter().map(|n| format!("n{n}")));
    w.write_record(&header)?;
    for (i, d) in p.displacements.iter().enumerate() {
        let mut rec = vec![format_f64(*d)];
        rec.extend(p.values.row(i).iter().map(|v| format_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_probabilities`]. Rows and columns in
/// error messages are 1-based, with the header on row 1.
pub fn read_probabilities<R: Read>(
    input: R,
    normalization: Normalization,
) -> Result<ProbabilityMatrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut records = r.records();
    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: "empty file".into(),
            })
        }
    };
    if header.get(0) != Some("delta") {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: format!(
                "expected header `delta`, found `{}`",
                header.get(0).unwrap_or("")
            ),
        });
    }
    let mut modes = Vec::new();
    for (j, name) in header.iter().enumerate().skip(1) {
        let n = name
            .strip_prefix('n')
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::Parse {
                row: 1,
                column: j + 1,
                message: format!("expected a mode column like `n0`, found `{name}`"),
            })?;
        modes.push(n);
    }
    if modes.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: 2,
            message: "no detector columns".into(),
        });
    }

    let mut displacements = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: 1,
            message: e.to_string(),
        })?;
        if rec.len() != modes.len() + 1 {
            return Err(Error::Parse {
                row,
                column: rec.len().min(modes.len() + 1) + 1,
                message: format!("expected {} fields, found {}", modes.len() + 1, rec.len()),
            });
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                message: format!("`{field}` is not a number"),
            })?;
            if j == 0 {
                displacements.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let matrix = DMatrix::from_row_slice(displacements.len(), modes.len(), &values);
    ProbabilityMatrix::new(matrix, displacements, modes, normalization)
}

pub fn write_theta<W: Write>(povm: &PovmSet, out: W) -> Result<()> {
    let theta = povm.diagonal_theta();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string()];
    header.extend((0..theta.ncols()).map(|k| format!("k{k}")));
    w.write_record(&header)?;
    for (row, mode) in povm.modes.iter().enumerate() {
        let mut rec = vec![mode.to_string()];
        rec.extend(theta.row(row).iter().map(|v| format_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomography::ideal_povm;

    fn sample() -> ProbabilityMatrix {
        ProbabilityMatrix::new(
            DMatrix::from_row_slice(3, 2, &[0.1, 1.0 / 3.0, 2.5e-300, 0.0, 0.7, 1e-17]),
            vec![-0.15, 0.0, 2.0 / 7.0],
            vec![0, 3],
            Normalization::Raw,
        )
        .unwrap()
    }

    #[test]
    fn probabilities_round_trip() {
        let p = sample();
        let mut buf = Vec::new();
        write_probabilities(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("delta,n0,n3\n"));
        let back = read_probabilities(buf.as_slice(), Normalization::Raw).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn reader_accepts_spaced_header() {
        let text = "delta, n0, n1\n0.5, 0.25, 0.75\n";
        let p = read_probabilities(text.as_bytes(), Normalization::Raw).unwrap();
        assert_eq!(p.modes, vec![0, 1]);
        assert_eq!(p.values[(0, 1)], 0.75);
    }

    #[test]
    fn decimal_point_is_always_a_dot() {
        assert_eq!(format_f64(0.5), "0.5");
        assert_eq!(format_f64(1.0), "1.0");
        assert_eq!(format_f64(-2.5e-300).parse::<f64>().unwrap(), -2.5e-300);
    }

    #[test]
    fn errors_name_row_and_column() {
        let bad = "delta,n0,n1\n0.0,0.1,0.2\n1.0,abc,0.3\n";
        match read_probabilities(bad.as_bytes(), Normalization::Raw) {
            Err(Error::Parse {
                row: 3, column: 2, ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let header = "x,n0\n0.0,0.1\n";
        assert!(matches!(
            read_probabilities(header.as_bytes(), Normalization::Raw),
            Err(Error::Parse {
                row: 1,
                column: 1,
                ..
            })
        ));
        let header = "delta,mode0\n0.0,0.1\n";
        assert!(matches!(
            read_probabilities(header.as_bytes(), Normalization::Raw),
            Err(Error::Parse {
                row: 1,
                column: 2,
                ..
            })
        ));
        let short = "delta,n0,n1\n0.0,0.1\n";
        assert!(matches!(
            read_probabilities(short.as_bytes(), Normalization::Raw),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn theta_layout() {
        let mut buf = Vec::new();
        write_theta(&ideal_povm(2, 3).unwrap(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "n,k0,k1,k2\n0,1.0,0.0,0.0\n1,0.0,1.0,0.0\n"
        );
    }
}
