//! Plain-text covariance matrices.
//!
//! The first line holds the dimension `N`; it is followed by `N²` lines
//! `i j re im` giving entry `(i, j)` with 1-based indices, in any order, each
//! entry exactly once. Blank lines and lines starting with `#` are ignored.
//! The matrix must be Hermitian.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use qsep_core::linalg::HERMITIAN_TOLERANCE;
use qsep_core::{ComplexMatrix, LinalgError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CovarianceFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing entry ({row}, {col})")]
    Missing { row: usize, col: usize },
    #[error(
        "matrix is not Hermitian: entry ({row}, {col}) differs from the conjugate of its mirror"
    )]
    NotHermitian { row: usize, col: usize },
    #[error("empty covariance file")]
    Empty,
}

pub fn read(path: &Path) -> Result<ComplexMatrix, CovarianceFileError> {
    parse(&fs::read_to_string(path)?)
}

pub fn parse(text: &str) -> Result<ComplexMatrix, CovarianceFileError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (first, dim_text) = lines.next().ok_or(CovarianceFileError::Empty)?;
    let dim: usize = dim_text
        .parse()
        .map_err(|_| parse_error(first, "expected the matrix dimension"))?;
    if dim == 0 {
        return Err(parse_error(first, "dimension must be positive"));
    }

    let mut entries: Vec<Option<Complex64>> = vec![None; dim * dim];
    for (line, content) in lines {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_error(line, "expected `i j re im`"));
        }
        let index = |s: &str| -> Result<usize, CovarianceFileError> {
            match s.parse::<usize>() {
                Ok(v) if (1..=dim).contains(&v) => Ok(v - 1),
                _ => Err(parse_error(line, &format!("index `{s}` outside 1..={dim}"))),
            }
        };
        let value = |s: &str| -> Result<f64, CovarianceFileError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(line, &format!("`{s}` is not a finite number")))
        };
        let (i, j) = (index(fields[0])?, index(fields[1])?);
        let slot = &mut entries[i * dim + j];
        if slot.is_some() {
            return Err(parse_error(
                line,
                &format!("duplicate entry ({}, {})", i + 1, j + 1),
            ));
        }
        *slot = Some(Complex64::new(value(fields[2])?, value(fields[3])?));
    }

    let mut data = Vec::with_capacity(dim * dim);
    for (k, e) in entries.into_iter().enumerate() {
        data.push(e.ok_or(CovarianceFileError::Missing {
            row: k / dim + 1,
            col: k % dim + 1,
        })?);
    }
    let matrix = ComplexMatrix::from_row_major(dim, dim, data).expect("square by construction");
    match matrix.check_hermitian(HERMITIAN_TOLERANCE) {
        Ok(()) => Ok(matrix),
        Err(LinalgError::NotHermitian { row, col }) => Err(CovarianceFileError::NotHermitian {
            row: row + 1,
            col: col + 1,
        }),
        Err(e) => unreachable!("square matrix failed the Hermitian check: {e}"),
    }
}

/// Renders `matrix` in the file format, row by row.
pub fn format(matrix: &ComplexMatrix) -> String {
    let mut out = format!("{}\n", matrix.rows());
    for i in 0..matrix.rows() {
        for j in 0..matrix.cols() {
            let v = matrix[(i, j)];
            writeln!(out, "{} {} {:e} {:e}", i + 1, j + 1, v.re, v.im)
                .expect("writing to a String");
        }
    }
    out
}

fn parse_error(line: usize, message: &str) -> CovarianceFileError {
    CovarianceFileError::Parse {
        line,
        message: message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let k = qsep_core::channel::exponential_covariance(3, 0.6, 0.4);
        let back = parse(&format(&k)).unwrap();
        assert_eq!(back, k);
    }

    #[test]
    fn comments_and_order() {
        let text = "# 2x2\n2\n2 2 1 0\n1 1 1 0\n\n1 2 0.5 0.1\n2 1 0.5 -0.1\n";
        let k = parse(text).unwrap();
        assert_eq!(k[(0, 1)], Complex64::new(0.5, 0.1));
    }

    #[test]
    fn rejects_non_hermitian() {
        let text = "2\n1 1 1 0\n1 2 0.5 0.1\n2 1 0.5 0.1\n2 2 1 0\n";
        assert!(matches!(
            parse(text),
            Err(CovarianceFileError::NotHermitian { .. })
        ));
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(parse(""), Err(CovarianceFileError::Empty)));
        assert!(matches!(
            parse("2\n1 1 1 0\n"),
            Err(CovarianceFileError::Missing { row: 1, col: 2 })
        ));
        assert!(matches!(
            parse("1\n1 1 1 0\n1 1 1 0\n"),
            Err(CovarianceFileError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse("1\n0 1 1 0\n"),
            Err(CovarianceFileError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("1\n1 1 x 0\n"),
            Err(CovarianceFileError::Parse { line: 2, .. })
        ));
    }
}
