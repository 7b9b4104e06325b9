//! Polyhedral cone membership and the boundary shift of a vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    condition, ensure_dim, ensure_finite, ensure_finite_vec, ensure_square, is_nonnegative,
    min_entry, scale, solve, tau_zero, Matrix, Vector,
};

/// Matrices better conditioned than this are solved directly.
const DIRECT_CONDITION: f64 = 1e12;
const GRID_PER_DECADE: usize = 40;
const GRID_DECADES: usize = 12;

/// Cone generated by the columns of a matrix; zero columns are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeRep {
    generators: Matrix,
}

impl ConeRep {
    pub fn new(generators: Matrix) -> Result<Self> {
        ensure_finite(&generators)?;
        let kept: Vec<Vector> = generators
            .column_iter()
            .filter(|c| c.iter().any(|&x| x != 0.0))
            .map(|c| c.into_owned())
            .collect();
        let generators = if kept.is_empty() {
            Matrix::zeros(generators.nrows(), 0)
        } else {
            Matrix::from_columns(&kept)
        };
        Ok(Self { generators })
    }

    pub fn generators(&self) -> &Matrix {
        &self.generators
    }

    pub fn dim(&self) -> usize {
        self.generators.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Interior,
    Boundary,
    Outside,
}

/// Lawson–Hanson active set solver for `min ‖Ax − b‖₂` subject to `x ≥ 0`.
pub fn nnls(a: &Matrix, b: &Vector) -> Vector {
    let n = a.ncols();
    let mut x = Vector::zeros(n);
    if n == 0 {
        return x;
    }
    let mut passive = vec![false; n];
    let tol = 1e-13 * a.norm().max(1.0) * b.norm().max(1.0);
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let next = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = next else { break };
        passive[j] = true;
        for _ in 0..(3 * n + 10) {
            let z = restricted_lstsq(a, b, &passive);
            if (0..n).all(|k| !passive[k] || z[k] > 0.0) {
                x = z;
                break;
            }
            let step = (0..n)
                .filter(|&k| passive[k] && z[k] <= 0.0)
                .map(|k| x[k] / (x[k] - z[k]))
                .fold(f64::INFINITY, f64::min);
            x += (&z - &x) * step;
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    x
}

fn restricted_lstsq(a: &Matrix, b: &Vector, passive: &[bool]) -> Vector {
    let cols: Vec<usize> = (0..a.ncols()).filter(|&k| passive[k]).collect();
    let sub = a.select_columns(cols.iter());
    let z = sub
        .svd(true, true)
        .solve(b, 1e-14)
        .unwrap_or_else(|_| Vector::zeros(cols.len()));
    let mut full = Vector::zeros(a.ncols());
    for (i, &k) in cols.iter().enumerate() {
        full[k] = z[i];
    }
    full
}

fn unit_columns(g: &Matrix) -> Matrix {
    let mut g = g.clone();
    for mut c in g.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
    g
}

/// Interior, boundary or outside of `cone(C)`, with coefficients compared
/// against `tol` after normalizing generators and `b` to unit length.
pub fn cone_membership(c: &ConeRep, b: &Vector, tol: f64) -> Result<Membership> {
    let n = c.dim();
    ensure_dim(b, n, "vector")?;
    ensure_finite_vec(b)?;
    let norm = b.norm();
    if norm == 0.0 {
        return Ok(Membership::Boundary);
    }
    if c.generators.ncols() == 0 {
        return Ok(Membership::Outside);
    }
    let g = unit_columns(&c.generators);
    let b = b / norm;
    if g.ncols() == n && condition(&g) <= DIRECT_CONDITION {
        if let Some(x) = solve(&g, &b) {
            let m = x.min();
            return Ok(if m > tol {
                Membership::Interior
            } else if m >= -tol {
                Membership::Boundary
            } else {
                Membership::Outside
            });
        }
    }
    let residual = |rhs: &Vector| (&g * nnls(&g, rhs) - rhs).norm();
    if residual(&b) > tol.max(1e-12) {
        return Ok(Membership::Outside);
    }
    let full_rank = g.rank(1e-10) == n;
    let shrunk = &b - &g * Vector::from_element(g.ncols(), tol.max(1e-12));
    Ok(if full_rank && residual(&shrunk) <= tol.max(1e-12) {
        Membership::Interior
    } else {
        Membership::Boundary
    })
}

fn shifted_membership(a: &Matrix, b: &Vector, s: f64, tol: f64) -> Result<Membership> {
    let n = a.nrows();
    cone_membership(&ConeRep::new(a + Matrix::identity(n, n) * s)?, b, tol)
}

/// Smallest `s ≥ 0` with `b` on the boundary of `cone(A + sI)`.
///
/// The first grid point where `b` is no longer outside brackets the crossing,
/// which is then refined by bisection.
pub fn boundary_shift(a: &Matrix, b: &Vector, tol: f64) -> Result<f64> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    ensure_dim(b, n, "vector")?;
    if !is_nonnegative(a, tau_zero(a)) {
        return Err(Error::NotNonnegative(min_entry(a)));
    }
    if b.min() < 0.0 {
        return Err(Error::NegativeVector(b.min()));
    }
    if b.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroVector);
    }
    match shifted_membership(a, b, 0.0, tol)? {
        Membership::Interior => return Err(Error::InteriorAtZero),
        Membership::Boundary => return Ok(0.0),
        Membership::Outside => {}
    }
    let s_max = 1e3 * scale(a);
    let steps = GRID_DECADES * GRID_PER_DECADE;
    let mut lo = 0.0;
    let mut hi = None;
    for i in 0..=steps {
        let s = s_max * 10f64.powf(-((steps - i) as f64) / GRID_PER_DECADE as f64);
        if shifted_membership(a, b, s, 0.0)? != Membership::Outside {
            hi = Some(s);
            break;
        }
        lo = s;
    }
    let Some(mut hi) = hi else {
        return Err(Error::NoBoundaryFound(s_max));
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if shifted_membership(a, b, mid, 0.0)? == Membership::Outside {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
