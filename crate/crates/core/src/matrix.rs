//! Dense matrix/vector carriers, norms, tolerances and the text/JSON formats.
//!
//! Matrices are plain `nalgebra` dense matrices; this module adds the
//! validation, scale-aware thresholds and I/O used throughout the crate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative factor of the default zero threshold.
pub const ZERO_REL: f64 = 1e-9;
/// Default relative clustering tolerance for eigenvalues.
pub const CLUSTER_REL: f64 = 1e-6;
/// Condition estimate above which a transformation is considered singular.
pub const MAX_CONDITION: f64 = 1e13;

pub fn inf_norm(a: &Matrix) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `max(1, ‖A‖∞)`.
pub fn scale(a: &Matrix) -> f64 {
    inf_norm(a).max(1.0)
}

/// Default zero threshold `1e-9 · max(1, ‖A‖∞)`.
pub fn tau_zero(a: &Matrix) -> f64 {
    ZERO_REL * scale(a)
}

pub fn ensure_finite(a: &Matrix) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

pub fn ensure_finite_vec(v: &Vector) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite { row: i, col: 0 }),
        None => Ok(()),
    }
}

/// Validates a square, finite matrix and returns its dimension.
pub fn ensure_square(a: &Matrix) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    ensure_finite(a)?;
    Ok(a.nrows())
}

pub fn ensure_dim(v: &Vector, n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{what} has length {}, expected {n}",
            v.len()
        )));
    }
    ensure_finite_vec(v)
}

pub fn min_entry(a: &Matrix) -> f64 {
    a.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn min_off_diagonal(a: &Matrix) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if i != j {
                m = m.min(a[(i, j)]);
            }
        }
    }
    m
}

/// Largest `|h_ij|` with `i > j + 1`.
pub fn hessenberg_violation(h: &Matrix) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..h.ncols() {
        for i in (j + 2)..h.nrows() {
            m = m.max(h[(i, j)].abs());
        }
    }
    m
}

pub fn is_nonnegative(a: &Matrix, tol: f64) -> bool {
    a.iter().all(|&x| x >= -tol)
}

pub fn is_metzler(a: &Matrix, tol: f64) -> bool {
    min_off_diagonal(a) >= -tol || a.nrows() == 1
}

/// 2-norm condition estimate from singular values.
pub fn condition(a: &Matrix) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse through LU, refusing matrices whose condition exceeds [`MAX_CONDITION`].
pub fn checked_inverse(a: &Matrix) -> Result<Matrix> {
    let cond = condition(a);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::Singular(cond));
    }
    a.clone()
        .lu()
        .try_inverse()
        .ok_or(Error::Singular(f64::INFINITY))
}

pub fn solve(a: &Matrix, b: &Vector) -> Option<Vector> {
    a.clone().lu().solve(b)
}

/// Permutation matrix with `P e_j = e_{perm[j]}`.
pub fn permutation_matrix(perm: &[usize]) -> Matrix {
    let n = perm.len();
    let mut p = Matrix::zeros(n, n);
    for (j, &i) in perm.iter().enumerate() {
        p[(i, j)] = 1.0;
    }
    p
}

pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (n1, n2) = (a.nrows(), b.nrows());
    let mut m = Matrix::zeros(n1 + n2, n1 + n2);
    m.view_mut((0, 0), (n1, n1)).copy_from(a);
    m.view_mut((n1, n1), (n2, n2)).copy_from(b);
    m
}

pub fn from_rows(rows: &[&[f64]]) -> Matrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    Matrix::from_fn(r, c, |i, j| rows[i][j])
}

/// JSON representation `{"rows": r, "cols": c, "data": [row-major]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Matrix> for MatrixJson {
    fn from(a: &Matrix) -> Self {
        let mut data = Vec::with_capacity(a.len());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                data.push(a[(i, j)]);
            }
        }
        MatrixJson {
            rows: a.nrows(),
            cols: a.ncols(),
            data,
        }
    }
}

impl TryFrom<MatrixJson> for Matrix {
    type Error = Error;

    fn try_from(m: MatrixJson) -> Result<Matrix> {
        if m.rows == 0 || m.cols == 0 || m.data.len() != m.rows * m.cols {
            return Err(Error::Parse(format!(
                "matrix declares {}x{} but has {} entries",
                m.rows,
                m.cols,
                m.data.len()
            )));
        }
        let a = Matrix::from_row_slice(m.rows, m.cols, &m.data);
        ensure_finite(&a)?;
        Ok(a)
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    let x: f64 = tok
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: '{tok}' is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Parse(format!("line {line}: non-finite value '{tok}'")));
    }
    Ok(x)
}

/// Parses the text format (`rows cols` header, then rows) or the JSON format.
pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let m: MatrixJson =
            serde_json::from_str(trimmed).map_err(|e| Error::Parse(e.to_string()))?;
        return Matrix::try_from(m);
    }
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse(format!(
            "line {hline}: expected header 'rows cols'"
        )));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Parse(format!("line {hline}: bad dimension '{s}'")))
    };
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (ln, l) in lines {
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|t| parse_number(t, ln))
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(Error::Parse(format!(
                "line {ln}: expected {cols} entries, found {}",
                row.len()
            )));
        }
        data.extend(row);
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(Error::Parse(format!(
            "expected {rows} rows, found {seen_rows}"
        )));
    }
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

/// Parses a vector: a single-row or single-column matrix file, a JSON
/// array or matrix object, or a bare list of numbers.
pub fn parse_vector(text: &str) -> Result<Vector> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let v: Vec<f64> =
            serde_json::from_str(trimmed).map_err(|e| Error::Parse(e.to_string()))?;
        let v = Vector::from_vec(v);
        if v.is_empty() {
            return Err(Error::Parse("empty vector".into()));
        }
        ensure_finite_vec(&v)?;
        return Ok(v);
    }
    if trimmed.starts_with('{') {
        let m = parse_matrix(trimmed)?;
        return flatten(m);
    }
    if let Ok(m) = parse_matrix(text) {
        if m.nrows() == 1 || m.ncols() == 1 {
            return flatten(m);
        }
    }
    let mut data = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.starts_with('#') {
            continue;
        }
        for t in l.split(|c: char| c.is_whitespace() || c == ',') {
            if !t.is_empty() {
                data.push(parse_number(t, i + 1)?);
            }
        }
    }
    if data.is_empty() {
        return Err(Error::Parse("empty vector".into()));
    }
    Ok(Vector::from_vec(data))
}

fn flatten(m: Matrix) -> Result<Vector> {
    if m.nrows() != 1 && m.ncols() != 1 {
        return Err(Error::Parse(format!(
            "expected a vector, got a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(Vector::from_iterator(m.len(), m.iter().copied()))
}

/// Text format with every entry at 17 significant digits.
pub fn format_matrix(a: &Matrix) -> String {
    let mut s = format!("{} {}\n", a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:.16e}", a[(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Serde adapter storing a [`Matrix`] as [`MatrixJson`].
pub mod serde_matrix {
    use super::{Matrix, MatrixJson};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(a: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from(a).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let m = MatrixJson::deserialize(d)?;
        Matrix::try_from(m).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter storing a [`Vector`] as a plain array.
pub mod serde_vector {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Ok(Vector::from_vec(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let a = from_rows(&[&[0.1, -2.0 / 3.0], &[1e-300, 12345.678901234567]]);
        let b = parse_matrix(&format_matrix(&a)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_matrix_parses() {
        let a = parse_matrix(r#"{"rows":2,"cols":2,"data":[1,2,3,4]}"#).unwrap();
        assert_eq!(a, from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(parse_matrix("2 2\n1 2\n3\n").is_err());
        assert!(parse_matrix("2 2\n1 2\n").is_err());
        assert!(parse_matrix("2 2\n1 x\n3 4\n").is_err());
        assert!(parse_matrix("2 2\n1 NaN\n3 4\n").is_err());
        assert!(parse_matrix(r#"{"rows":2,"cols":2,"data":[1,2,3]}"#).is_err());
    }

    #[test]
    fn vectors_in_several_layouts() {
        let expect = Vector::from_vec(vec![1.0, 1.0, 0.0]);
        assert_eq!(parse_vector("1 1 0\n").unwrap(), expect);
        assert_eq!(parse_vector("3 1\n1\n1\n0\n").unwrap(), expect);
        assert_eq!(parse_vector("[1, 1, 0]").unwrap(), expect);
        assert_eq!(parse_vector("1, 1, 0").unwrap(), expect);
    }

    #[test]
    fn non_square_and_non_finite_rejected() {
        assert!(matches!(
            ensure_square(&Matrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        let mut a = Matrix::identity(2, 2);
        a[(1, 0)] = f64::NAN;
        assert!(matches!(ensure_square(&a), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn hessenberg_violation_reads_below_subdiagonal() {
        let mut h = Matrix::from_element(4, 4, 1.0);
        assert!(hessenberg_violation(&h) > 0.0);
        for j in 0..4 {
            for i in (j + 2)..4 {
                h[(i, j)] = 0.0;
            }
        }
        assert_eq!(hessenberg_violation(&h), 0.0);
    }
}
