//! Matrix Market coordinate I/O.
//!
//! Reads `real` coordinate files stored as `general` or `symmetric`; symmetric
//! files are expanded to full storage on load. The writer always emits
//! `general` with shortest round-trip decimal values, so writing and reading
//! back reproduces the CSR arrays bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, MatrixMarketError, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_header(line: &str) -> std::result::Result<Symmetry, MatrixMarketError> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(MatrixMarketError::MalformedHeader(line.trim().to_string()));
    }
    if tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(MatrixMarketError::Unsupported(format!(
            "{} {} (only `matrix coordinate` is read)",
            tokens[1], tokens[2]
        )));
    }
    if tokens[3] != "real" {
        return Err(MatrixMarketError::Unsupported(format!(
            "field `{}` (only `real` is read)",
            tokens[3]
        )));
    }
    match tokens[4].as_str() {
        "general" => Ok(Symmetry::General),
        "symmetric" => Ok(Symmetry::Symmetric),
        other => Err(MatrixMarketError::Unsupported(format!(
            "symmetry `{other}`"
        ))),
    }
}

/// Parses Matrix Market text from any buffered reader.
pub fn read_matrix_market<R: BufRead>(
    reader: R,
) -> std::result::Result<SparseMatrix, MatrixMarketError> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(line))) => line,
        _ => return Err(MatrixMarketError::MalformedHeader("empty file".into())),
    };
    let symmetry = parse_header(&header)?;

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    let mut found = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| MatrixMarketError::MalformedEntry {
            line: lineno,
            text: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let Some((rows, _, nnz)) = size else {
            let parsed: Option<Vec<usize>> = fields.iter().map(|s| s.parse().ok()).collect();
            match parsed.as_deref() {
                Some(&[rows, cols, nnz]) => {
                    if rows != cols {
                        return Err(MatrixMarketError::NonSquare { rows, cols });
                    }
                    if rows == 0 {
                        return Err(MatrixMarketError::MalformedHeader("zero dimension".into()));
                    }
                    size = Some((rows, cols, nnz));
                    triplets.reserve(if symmetry == Symmetry::Symmetric {
                        2 * nnz
                    } else {
                        nnz
                    });
                    continue;
                }
                _ => {
                    return Err(MatrixMarketError::MalformedHeader(format!(
                        "bad size line `{trimmed}`"
                    )))
                }
            }
        };
        let malformed = || MatrixMarketError::MalformedEntry {
            line: lineno,
            text: trimmed.to_string(),
        };
        if fields.len() != 3 {
            return Err(malformed());
        }
        let i: usize = fields[0].parse().map_err(|_| malformed())?;
        let j: usize = fields[1].parse().map_err(|_| malformed())?;
        let value: f64 = fields[2].parse().map_err(|_| malformed())?;
        if i == 0 || j == 0 || i > rows || j > rows {
            return Err(MatrixMarketError::IndexOutOfBounds {
                line: lineno,
                row: i,
                col: j,
                n: rows,
            });
        }
        found += 1;
        if found > nnz {
            return Err(MatrixMarketError::EntryCount {
                expected: nnz,
                found,
            });
        }
        triplets.push((i - 1, j - 1, value));
        if symmetry == Symmetry::Symmetric && i != j {
            triplets.push((j - 1, i - 1, value));
        }
    }

    let Some((n, _, nnz)) = size else {
        return Err(MatrixMarketError::MalformedHeader(
            "missing size line".into(),
        ));
    };
    if found != nnz {
        return Err(MatrixMarketError::EntryCount {
            expected: nnz,
            found,
        });
    }
    SparseMatrix::from_triplets(n, triplets)
        .map_err(|e| MatrixMarketError::Unsupported(e.to_string()))
}

/// Loads a `.mtx` file from disk.
pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix_market(BufReader::new(file)).map_err(|source| Error::MatrixMarket {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `a` in `general` coordinate form.
pub fn write_matrix_market<W: Write>(a: &SparseMatrix, mut out: W) -> std::io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.n(), a.n(), a.nnz())?;
    for row in 0..a.n() {
        let (cols, vals) = a.row(row);
        for (&c, &v) in cols.iter().zip(vals) {
            writeln!(out, "{} {} {:e}", row + 1, c + 1, v)?;
        }
    }
    out.flush()
}

pub fn save_matrix_market(a: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix_market(a, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
