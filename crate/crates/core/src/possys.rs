//! Positive systems, the controller-Hessenberg predicate, and the DT iterate
//! analysis on the 2-simplex.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::constructions::Mode;
use crate::error::{Error, Result};
use crate::linalg::perron_pair;
use crate::matrix::{
    ensure_dim, ensure_finite, ensure_finite_vec, ensure_square, hessenberg_violation, inf_norm,
    min_entry, min_off_diagonal, scale, serde_matrix, serde_vector, solve, tau_zero, vec_inf_norm,
    Matrix, Vector,
};
use crate::simplex::{simplex_project, triangle_cover_decision, CoverDecision, SimplexPoint, Verdict};

pub const DEFAULT_HORIZON: usize = 50;
pub const COVER_TOL: f64 = 1e-9;
const SQUARINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Ct,
    Dt,
}

impl Domain {
    pub fn mode(self) -> Mode {
        match self {
            Domain::Ct => Mode::Metzler,
            Domain::Dt => Mode::Nonneg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveSystem {
    #[serde(with = "serde_matrix")]
    pub a: Matrix,
    #[serde(with = "serde_vector")]
    pub b: Vector,
    #[serde(with = "serde_vector")]
    pub c: Vector,
    pub domain: Domain,
}

impl PositiveSystem {
    pub fn new(a: Matrix, b: Vector, c: Vector, domain: Domain) -> Result<Self> {
        let n = ensure_square(&a)?;
        ensure_finite(&a)?;
        ensure_dim(&b, n, "input vector b")?;
        ensure_dim(&c, n, "output vector c")?;
        ensure_finite_vec(&b)?;
        ensure_finite_vec(&c)?;
        let tau = tau_zero(&a);
        match domain {
            Domain::Dt if min_entry(&a) < -tau => return Err(Error::NotNonnegative(min_entry(&a))),
            Domain::Ct if n > 1 && min_off_diagonal(&a) < -tau => {
                return Err(Error::NotMetzler(min_off_diagonal(&a)))
            }
            _ => {}
        }
        for v in [&b, &c] {
            if v.min() < -tau {
                return Err(Error::NegativeVector(v.min()));
            }
        }
        Ok(Self { a, b, c, domain })
    }
}

/// Upper Hessenberg `A` with the domain's sign pattern, `b ∝ e₁` and `c ≥ 0`,
/// each within `tol·max(1, ‖·‖)`.
pub fn is_controller_hessenberg(sys: &PositiveSystem, tol: f64) -> bool {
    let ta = tol * scale(&sys.a);
    let tb = tol * vec_inf_norm(&sys.b).max(1.0);
    let n = sys.a.nrows();
    let signs = match sys.domain {
        Domain::Dt => min_entry(&sys.a) >= -ta,
        Domain::Ct => n < 2 || min_off_diagonal(&sys.a) >= -ta,
    };
    signs
        && hessenberg_violation(&sys.a) <= ta
        && sys.b[0] > tb
        && sys.b.iter().skip(1).all(|x| x.abs() <= tb)
        && sys.c.iter().all(|&x| x >= -tol * vec_inf_norm(&sys.c).max(1.0))
}

/// Projected iterates `Π̂(Aᵏb)` for `k < horizon` and the projected limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub points: Vec<SimplexPoint>,
    pub limit_point: SimplexPoint,
    pub horizon: usize,
}

impl IterateTrace {
    /// CSV with header `k,x,y`, one row per iterate and a final `inf` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,x,y\n");
        for (k, p) in self.points.iter().enumerate() {
            let _ = writeln!(out, "{k},{:.8e},{:.8e}", p.x, p.y);
        }
        let _ = writeln!(out, "inf,{:.8e},{:.8e}", self.limit_point.x, self.limit_point.y);
        out
    }
}

fn ensure_dt_3(a: &Matrix, b: &Vector) -> Result<()> {
    let n = ensure_square(a)?;
    if n != 3 {
        return Err(Error::UnsupportedDimension {
            got: n,
            what: "the simplex analysis needs a 3x3 matrix",
        });
    }
    ensure_finite(a)?;
    if min_entry(a) < 0.0 {
        return Err(Error::NotNonnegative(min_entry(a)));
    }
    ensure_dim(b, 3, "input vector b")?;
    ensure_finite_vec(b)?;
    if b.min() < 0.0 {
        return Err(Error::NegativeVector(b.min()));
    }
    if b.sum() <= 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(())
}

fn unit_sum(x: Vector, k: usize) -> Result<Vector> {
    let s = x.sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Hypothesis(format!(
            "iterate {k} has coordinate sum {s:e}; the projection is undefined"
        )));
    }
    Ok(x / s)
}

/// Direction of `lim (A + ρI)ᵏ b`, the dominant eigendirection reached by the
/// iteration from `b`. Repeated squaring of the nonnegative iteration matrix
/// reaches `2^60` steps without cancellation.
pub fn limit_direction(a: &Matrix, b: &Vector) -> Result<Vector> {
    let n = a.nrows();
    let rho = perron_pair(a)?.perron_root;
    let mut m = a + Matrix::identity(n, n) * rho.max(1e-3 * scale(a));
    m /= inf_norm(&m);
    let mut x = unit_sum(b.clone(), 0)?;
    for _ in 0..SQUARINGS {
        let next = unit_sum(&m * &x, 0)?;
        let done = (&next - &x).amax() <= 1e-15;
        x = next;
        if done {
            break;
        }
        m = &m * &m;
        m /= inf_norm(&m);
    }
    // Components decaying geometrically are exactly zero in the limit.
    let cut = 1e-14 * x.amax();
    Ok(x.map(|v| if v < cut { 0.0 } else { v }))
}

/// `Π̂(Aᵏb)` for `k = 0..horizon`, renormalizing each iterate to unit sum.
pub fn dt_iterates(a: &Matrix, b: &Vector, horizon: usize) -> Result<IterateTrace> {
    ensure_dt_3(a, b)?;
    let mut x = unit_sum(b.clone(), 0)?;
    let mut points = Vec::with_capacity(horizon);
    for k in 0..horizon {
        if k > 0 {
            x = unit_sum(a * &x, k)?;
        }
        points.push(simplex_project(&x)?);
    }
    let limit_point = simplex_project(&limit_direction(a, b)?)?;
    Ok(IterateTrace {
        points,
        limit_point,
        horizon,
    })
}

/// Outcome of the triangle test on a DT system, with the candidate
/// `T = (b | p | q)` un-projected from the witnesses when one was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtFeasibility {
    pub decision: CoverDecision,
    pub horizon: usize,
    pub candidate: Option<CandidateTransform>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTransform {
    #[serde(with = "serde_matrix")]
    pub t: Matrix,
    /// Smallest entry of `T⁻¹AT`, or `None` when `T` is singular.
    pub min_entry_h: Option<f64>,
}

fn candidate(a: &Matrix, b: &Vector, p: SimplexPoint, q: SimplexPoint) -> CandidateTransform {
    let mut t = Matrix::zeros(3, 3);
    t.set_column(0, &(b / b.sum()));
    t.set_column(1, &p.lift());
    t.set_column(2, &q.lift());
    let at = a * &t;
    let cols: Option<Vec<Vector>> = (0..3).map(|j| solve(&t, &at.column(j).into_owned())).collect();
    let min_entry_h = cols.map(|c| Matrix::from_columns(&c).min());
    CandidateTransform { t, min_entry_h }
}

/// Necessary condition for a DT controller-Hessenberg form `T = (b|p|q) ≥ 0`:
/// some triangle in the simplex with corner `Π̂(b)` contains every projected
/// iterate and the limit.
pub fn dt_hess_feasibility_3(a: &Matrix, b: &Vector, horizon: usize) -> Result<DtFeasibility> {
    dt_hess_feasibility_3_tol(a, b, horizon, COVER_TOL)
}

/// [`dt_hess_feasibility_3`] with an explicit tolerance for the triangle test.
pub fn dt_hess_feasibility_3_tol(a: &Matrix, b: &Vector, horizon: usize, tol: f64) -> Result<DtFeasibility> {
    let trace = dt_iterates(a, b, horizon.max(1))?;
    let v0 = trace.points[0];
    let mut s: Vec<SimplexPoint> = trace.points[1..].to_vec();
    s.push(trace.limit_point);
    let decision = triangle_cover_decision(v0, &s, tol)?;
    let candidate = decision.witnesses.map(|(p, q)| candidate(a, b, p, q));
    let summary = match decision.verdict {
        Verdict::Feasible => format!("feasible up to horizon {horizon}"),
        Verdict::Infeasible => "infeasible: no triangle with corner at the projected input covers the iterates".into(),
        Verdict::Unknown => format!("unknown at horizon {horizon}"),
    };
    Ok(DtFeasibility {
        decision,
        horizon,
        candidate,
        summary,
    })
}

/// Verdict of the triangle test on `A + mI` for each margin `m`.
pub fn dominance_sweep(a: &Matrix, b: &Vector, horizon: usize, margins: &[f64]) -> Result<Vec<(f64, Verdict)>> {
    dominance_sweep_tol(a, b, horizon, margins, COVER_TOL)
}

pub fn dominance_sweep_tol(a: &Matrix, b: &Vector, horizon: usize, margins: &[f64], tol: f64) -> Result<Vec<(f64, Verdict)>> {
    margins
        .iter()
        .map(|&m| {
            let shifted = a + Matrix::identity(a.nrows(), a.ncols()) * m;
            Ok((m, dt_hess_feasibility_3_tol(&shifted, b, horizon, tol)?.decision.verdict))
        })
        .collect()
}
