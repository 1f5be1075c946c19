//! LibSVM text format ingestion.
//!
//! Each line is `<label> <idx>:<val> ...` with 1-based, strictly increasing
//! indices; `#` starts a comment line. Labels are normalized to `{-1, +1}`
//! (inputs `{0, 1}` are mapped to `{-1, +1}`). Parsing is locale-independent:
//! decimal points only.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::linalg::DenseMatrix;

/// Default cap on `rows * cols` for dense materialization (~80 MB of f64).
pub const DEFAULT_DENSE_BUDGET: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: label {label:?} is not in {{-1, 0, +1}}")]
    BadLabel { line: usize, label: String },
    #[error("line {line}: feature index {idx} does not increase (previous {prev})")]
    NonIncreasingIndex { line: usize, idx: usize, prev: usize },
    #[error("dims override declares {declared} rows but the file has {got}")]
    RowCountMismatch { declared: usize, got: usize },
    #[error("line {line}: feature index {idx} exceeds declared column count {cols}")]
    IndexOutOfBounds { line: usize, idx: usize, cols: usize },
    #[error(
        "dense matrix of {rows}x{cols} = {total} entries exceeds the budget of {budget}; \
         use the diagonal-estimate smoothness mode instead"
    )]
    BudgetExceeded { rows: usize, cols: usize, total: usize, budget: usize },
}

/// A sparse labeled dataset. Column indices are 0-based in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    /// Coordinate list `(row, col, value)`, in file order.
    pub entries: Vec<(usize, usize, f64)>,
    /// One label per row, each `-1.0` or `+1.0`.
    pub labels: Vec<f64>,
}

pub fn parse_libsvm(path: &Path) -> Result<Dataset, DataError> {
    parse_libsvm_with_dims(path, None)
}

pub fn parse_libsvm_with_dims(
    path: &Path,
    dims: Option<(usize, usize)>,
) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_libsvm_str_with_dims(&text, dims)
}

pub fn parse_libsvm_str(text: &str) -> Result<Dataset, DataError> {
    parse_libsvm_str_with_dims(text, None)
}

pub fn parse_libsvm_str_with_dims(
    text: &str,
    dims: Option<(usize, usize)>,
) -> Result<Dataset, DataError> {
    let mut entries = Vec::new();
    let mut labels = Vec::new();
    let mut max_col = 0usize;
    let mut row = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let label_str = fields.next().expect("non-empty line has a first field");
        let label: f64 = label_str.parse().map_err(|_| DataError::Malformed {
            line: lineno,
            msg: format!("non-numeric label {label_str:?}"),
        })?;
        let label = match label {
            l if l == 1.0 => 1.0,
            l if l == -1.0 => -1.0,
            l if l == 0.0 => -1.0,
            _ => return Err(DataError::BadLabel { line: lineno, label: label_str.to_string() }),
        };
        labels.push(label);
        let mut prev_idx = 0usize;
        for field in fields {
            let (idx_str, val_str) = field.split_once(':').ok_or_else(|| DataError::Malformed {
                line: lineno,
                msg: format!("expected idx:value, got {field:?}"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| DataError::Malformed {
                line: lineno,
                msg: format!("bad feature index {idx_str:?}"),
            })?;
            if idx == 0 {
                return Err(DataError::Malformed {
                    line: lineno,
                    msg: "feature indices are 1-based".into(),
                });
            }
            let value: f64 = val_str.parse().map_err(|_| DataError::Malformed {
                line: lineno,
                msg: format!("bad feature value {val_str:?}"),
            })?;
            if idx <= prev_idx {
                return Err(DataError::NonIncreasingIndex { line: lineno, idx, prev: prev_idx });
            }
            prev_idx = idx;
            max_col = max_col.max(idx);
            entries.push((row, idx - 1, value));
        }
        row += 1;
    }
    let (rows, cols) = match dims {
        Some((m, n)) => {
            if m != row {
                return Err(DataError::RowCountMismatch { declared: m, got: row });
            }
            if max_col > n {
                let bad = entries.iter().find(|&&(_, c, _)| c + 1 > n).expect("max_col > n");
                return Err(DataError::IndexOutOfBounds { line: 0, idx: bad.1 + 1, cols: n });
            }
            (m, n)
        }
        None => (row, max_col),
    };
    Ok(Dataset { rows, cols, entries, labels })
}

/// Serialize back to LibSVM text; `parse_libsvm_str` of the output
/// reproduces the dataset exactly.
pub fn format_libsvm(ds: &Dataset) -> String {
    let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ds.rows];
    for &(r, c, v) in &ds.entries {
        per_row[r].push((c, v));
    }
    let mut out = String::new();
    for (r, label) in ds.labels.iter().enumerate() {
        let _ = write!(out, "{}", if *label > 0.0 { "+1" } else { "-1" });
        for (c, v) in &per_row[r] {
            let _ = write!(out, " {}:{:.17e}", c + 1, v);
        }
        out.push('\n');
    }
    out
}

/// Materialize the dense `rows x cols` matrix, zeros at absent coordinates.
pub fn to_dense(ds: &Dataset) -> Result<DenseMatrix, DataError> {
    to_dense_with_budget(ds, DEFAULT_DENSE_BUDGET)
}

pub fn to_dense_with_budget(ds: &Dataset, budget: usize) -> Result<DenseMatrix, DataError> {
    let total = ds.rows.saturating_mul(ds.cols);
    if total > budget {
        return Err(DataError::BudgetExceeded { rows: ds.rows, cols: ds.cols, total, budget });
    }
    let mut dense = DenseMatrix::zeros(ds.rows, ds.cols);
    for &(r, c, v) in &ds.entries {
        dense.set(r, c, v);
    }
    Ok(dense)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_reference_example() {
        let ds = parse_libsvm_str("+1 1:2.0 3:1.5\n-1 2:1.0\n").unwrap();
        assert_eq!(ds.rows, 2);
        assert_eq!(ds.cols, 3);
        assert_eq!(ds.entries, vec![(0, 0, 2.0), (0, 2, 1.5), (1, 1, 1.0)]);
        assert_eq!(ds.labels, vec![1.0, -1.0]);
    }

    #[test]
    fn empty_feature_list_is_a_zero_row() {
        let ds = parse_libsvm_str("+1\n-1 1:3.0\n").unwrap();
        assert_eq!(ds.rows, 2);
        assert_eq!(ds.cols, 1);
        assert_eq!(ds.entries, vec![(1, 0, 3.0)]);
    }

    #[test]
    fn zero_one_labels_are_normalized() {
        let ds = parse_libsvm_str("0 1:1\n1 1:2\n").unwrap();
        assert_eq!(ds.labels, vec![-1.0, 1.0]);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let ds = parse_libsvm_str("# header\n\n+1 1:1\n# trailing\n").unwrap();
        assert_eq!(ds.rows, 1);
    }

    #[test]
    fn roundtrip_preserves_dataset() {
        let text = "+1 1:2.125 3:-1.5e-3\n-1 2:0.1\n+1\n";
        let ds = parse_libsvm_str(text).unwrap();
        let back = parse_libsvm_str(&format_libsvm(&ds)).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_libsvm_str("+1 1:1\nxyz 1:1\n").unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }), "{err}");

        let err = parse_libsvm_str("+1 1:1 oops\n").unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 1, .. }));

        let err = parse_libsvm_str("+1 2:1 1:1\n").unwrap_err();
        assert!(matches!(err, DataError::NonIncreasingIndex { line: 1, idx: 1, prev: 2 }));

        let err = parse_libsvm_str("+1 2:1 2:4\n").unwrap_err();
        assert!(matches!(err, DataError::NonIncreasingIndex { line: 1, idx: 2, prev: 2 }));

        let err = parse_libsvm_str("+3 1:1\n").unwrap_err();
        assert!(matches!(err, DataError::BadLabel { line: 1, .. }));

        let err = parse_libsvm_str("+1 0:1\n").unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 1, .. }));
    }

    #[test]
    fn dims_override_checks_bounds() {
        let ds = parse_libsvm_str_with_dims("+1 1:1\n-1 1:2\n", Some((2, 5))).unwrap();
        assert_eq!(ds.cols, 5);
        let err = parse_libsvm_str_with_dims("+1 1:1\n", Some((2, 5))).unwrap_err();
        assert!(matches!(err, DataError::RowCountMismatch { declared: 2, got: 1 }));
        let err = parse_libsvm_str_with_dims("+1 7:1\n", Some((1, 5))).unwrap_err();
        assert!(matches!(err, DataError::IndexOutOfBounds { idx: 7, cols: 5, .. }));
    }

    #[test]
    fn to_dense_matches_reference() {
        let ds = parse_libsvm_str("+1 1:2.0 3:1.5\n-1 2:1.0\n").unwrap();
        let dense = to_dense(&ds).unwrap();
        assert_eq!(dense.row(0), &[2.0, 0.0, 1.5]);
        assert_eq!(dense.row(1), &[0.0, 1.0, 0.0]);

        let zero = parse_libsvm_str_with_dims("+1\n-1\n", Some((2, 3))).unwrap();
        let dense = to_dense(&zero).unwrap();
        for i in 0..2 {
            assert_eq!(dense.row(i), &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn to_dense_budget_guard() {
        let ds = parse_libsvm_str_with_dims("+1 1:1\n", Some((1, 100))).unwrap();
        let err = to_dense_with_budget(&ds, 50).unwrap_err();
        assert!(matches!(err, DataError::BudgetExceeded { .. }));
        assert!(err.to_string().contains("diagonal-estimate"));
    }

    #[test]
    fn dense_column_norms_match_sparse_accumulation() {
        let text = "+1 1:1.5 4:2\n-1 2:-3 4:0.5\n+1 1:0.25\n";
        let ds = parse_libsvm_str(text).unwrap();
        let dense = to_dense(&ds).unwrap();
        for c in 0..ds.cols {
            let sparse: f64 = ds
                .entries
                .iter()
                .filter(|&&(_, col, _)| col == c)
                .map(|&(_, _, v)| v * v)
                .sum();
            let dense_norm: f64 = (0..ds.rows).map(|r| dense.get(r, c).powi(2)).sum();
            assert!((sparse - dense_norm).abs() < 1e-15);
        }
    }
}
