//! LibSVM text format: `label idx:val idx:val ...` with 1-based indices.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::objective::LabeledDataset;

fn parse_label(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("label '{token}' is not a number"),
    })?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == 0.0 || v == -1.0 {
        Ok(-1.0)
    } else {
        Err(Error::Data {
            line,
            msg: format!("unknown label '{token}'"),
        })
    }
}

/// Parses LibSVM text. `d` defaults to the largest index seen; an override
/// must cover every index.
pub fn parse_libsvm<R: Read>(reader: R, d_override: Option<usize>) -> Result<LabeledDataset> {
    let mut rows: Vec<(Vec<u32>, Vec<f64>, f64)> = Vec::new();
    let mut max_index = 0usize;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let label = parse_label(tokens.next().expect("nonempty line"), line_no)?;
        let (mut idx, mut val) = (Vec::new(), Vec::new());
        for tok in tokens {
            let (k, v) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected idx:val, got '{tok}'"),
            })?;
            let k: usize = k.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad feature index '{k}'"),
            })?;
            if k == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "feature indices are 1-based".into(),
                });
            }
            let v: f64 = v.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad feature value '{v}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    line: line_no,
                    msg: format!("non-finite feature value '{v}'"),
                });
            }
            max_index = max_index.max(k);
            idx.push((k - 1) as u32);
            val.push(v);
        }
        rows.push((idx, val, label));
    }
    let d = match d_override {
        Some(d) if d < max_index => {
            return Err(Error::InvalidArgument(format!(
                "dimension override {d} is below the largest index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index.max(1),
    };
    let mut ds = LabeledDataset::new(d);
    for (idx, val, label) in rows {
        ds.push_row(&idx, &val, label)?;
    }
    Ok(ds)
}

pub fn load_libsvm(path: &Path, d_override: Option<usize>) -> Result<LabeledDataset> {
    parse_libsvm(File::open(path)?, d_override)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_parse_examples() {
        let ds = parse_libsvm("1 1:0.5 3:2.0\n-1 2:1\n".as_bytes(), None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.label(0), 1.0);
        assert_eq!(ds.row(0), (&[0u32, 2][..], &[0.5, 2.0][..]));
        assert_eq!(ds.label(1), -1.0);
    }

    #[test]
    fn test_label_mapping() {
        let ds = parse_libsvm("0 1:1\n+1 1:1\n".as_bytes(), None).unwrap();
        assert_eq!(ds.labels(), &[-1.0, 1.0]);
    }

    #[test]
    fn test_errors_carry_line_numbers() {
        match parse_libsvm("1 1:1\n1 2-3\n".as_bytes(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_libsvm("2 1:1\n".as_bytes(), None) {
            Err(Error::Data { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        assert!(parse_libsvm("1 0:1\n".as_bytes(), None).is_err());
    }

    #[test]
    fn test_dimension_override() {
        assert_eq!(parse_libsvm("1 2:1\n".as_bytes(), Some(5)).unwrap().dim(), 5);
        assert!(parse_libsvm("1 7:1\n".as_bytes(), Some(5)).is_err());
    }

    #[test]
    fn test_blank_lines_skipped() {
        let ds = parse_libsvm("\n1 1:1\n\n".as_bytes(), None).unwrap();
        assert_eq!(ds.len(), 1);
    }
}
