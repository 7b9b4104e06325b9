//! Similarity transformations to nonnegative and Metzler Hessenberg forms.
//!
//! Every construction returns either a [`SimilarityCertificate`] whose
//! residuals are recomputed from `T`, or a structured [`Obstruction`].

mod ct3;
mod hess3;
mod hess4;
mod small;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    checked_inverse, condition, ensure_dim, ensure_finite, ensure_square, hessenberg_violation,
    inf_norm, min_entry, min_off_diagonal, scale, serde_matrix, serde_vector, vec_inf_norm,
    Matrix, Vector,
};
use crate::simplex::CoverDecision;

pub use ct3::{ct_hess_2, ct_hess_3};
pub use hess3::{metzler_hess_3, nonneg_hess_3};
pub use hess4::metzler_hess_4;
pub use small::{
    diag_commuting_transform, dt_hess_2, eigvec_b_transform, fix_b_boundary,
    rank_one_shift_detect, FIX_ITERATION_CAP,
};

/// Bound on the scale-free similarity residual of a valid certificate.
pub const RESIDUAL_BOUND: f64 = 1e-8;
/// Relative tolerance for declaring `Ab = λ₁b`.
pub const EIGVEC_REL: f64 = 1e-8;
/// Entries of `T⁻¹AT` this close to zero (relative) are snapped to zero.
const SNAP_REL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Nonneg,
    Metzler,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonneg" => Ok(Mode::Nonneg),
            "metzler" => Ok(Mode::Metzler),
            other => Err(Error::Parse(format!(
                "unknown mode '{other}', expected nonneg or metzler"
            ))),
        }
    }
}

/// Most negative entry that the mode constrains.
pub fn sign_violation(h: &Matrix, mode: Mode) -> f64 {
    match mode {
        Mode::Nonneg => min_entry(h),
        Mode::Metzler if h.nrows() == 1 => 0.0,
        Mode::Metzler => min_off_diagonal(h),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCertificate {
    #[serde(with = "serde_matrix")]
    pub t: Matrix,
    #[serde(with = "serde_matrix")]
    pub t_inv: Matrix,
    #[serde(with = "serde_matrix")]
    pub h: Matrix,
    /// `‖A·T − T·H‖∞ / max(1, ‖A‖∞)` with `T` scaled to unit max column sum.
    pub residual_similarity: f64,
    /// Smallest entry of `T` after the same scaling.
    pub min_entry_t: f64,
    pub hessenberg_violation: f64,
    pub sign_violation: f64,
    pub condition: f64,
    pub mode: Mode,
    /// Which construction produced `T`.
    pub construction: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputCheck>,
}

/// Transformed input and output vectors of a positive system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputCheck {
    #[serde(with = "serde_vector")]
    pub t_inv_b: Vector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_t: Option<Vec<f64>>,
}

impl SimilarityCertificate {
    /// Residual, structure and sign checks at the given relative tolerance.
    pub fn passes(&self, tol: f64) -> bool {
        let s = scale(&self.h).max(1.0);
        self.residual_similarity <= RESIDUAL_BOUND.max(tol)
            && self.hessenberg_violation <= tol * s
            && self.sign_violation >= -tol * s
    }
}

/// Builds a certificate for `T`, snapping roundoff-level entries of `H`.
pub fn certify(a: &Matrix, t: Matrix, mode: Mode, construction: &str) -> Result<SimilarityCertificate> {
    let n = ensure_square(a)?;
    if t.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "transformation is {}x{}, matrix is {n}x{n}",
            t.nrows(),
            t.ncols()
        )));
    }
    ensure_finite(&t)?;
    let mut t = t;
    let tmax = t.amax();
    t.iter_mut()
        .filter(|x| **x < 0.0 && **x >= -1e-13 * tmax)
        .for_each(|x| *x = 0.0);
    let t_inv = checked_inverse(&t)?;
    let cond = condition(&t);
    let mut h = &t_inv * a * &t;
    let snap = SNAP_REL * scale(a) * (cond * f64::EPSILON * 1e6).max(1.0);
    for j in 0..n {
        for i in 0..n {
            let constrained = match mode {
                Mode::Nonneg => true,
                Mode::Metzler => i != j,
            };
            if (i > j + 1 && h[(i, j)].abs() <= snap) || (constrained && h[(i, j)] < 0.0 && h[(i, j)] >= -snap) {
                h[(i, j)] = 0.0;
            }
        }
    }
    Ok(finish(a, t, t_inv, h, cond, mode, construction))
}

fn finish(
    a: &Matrix,
    t: Matrix,
    t_inv: Matrix,
    h: Matrix,
    cond: f64,
    mode: Mode,
    construction: &str,
) -> SimilarityCertificate {
    let (residual_similarity, min_entry_t) = scaled_residual(a, &t, &h);
    SimilarityCertificate {
        hessenberg_violation: hessenberg_violation(&h),
        sign_violation: sign_violation(&h, mode),
        t,
        t_inv,
        h,
        residual_similarity,
        min_entry_t,
        condition: cond,
        mode,
        construction: construction.to_string(),
        notes: Vec::new(),
        input: None,
    }
}

fn scaled_residual(a: &Matrix, t: &Matrix, h: &Matrix) -> (f64, f64) {
    let colsum = t
        .column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let ts = t / colsum.max(f64::MIN_POSITIVE);
    let r = inf_norm(&(a * &ts - &ts * h)) / scale(a);
    (r, min_entry(&ts))
}

impl SimilarityCertificate {
    /// Attaches `T⁻¹b` and optionally `cT`.
    pub fn with_input(mut self, b: &Vector, c: Option<&Vector>) -> Self {
        self.input = Some(InputCheck {
            t_inv_b: &self.t_inv * b,
            c_t: c.map(|c| (c.transpose() * &self.t).iter().copied().collect()),
        });
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// Recomputes every metric from `A` and `T` without trusting stored values.
///
/// Fails when `H` disagrees with `T⁻¹AT`, when `H` violates the mode's
/// structure, or when `T` has negative entries, all at relative `tol`.
pub fn verify_certificate(a: &Matrix, cert: &SimilarityCertificate, tol: f64) -> Result<bool> {
    let n = ensure_square(a)?;
    if cert.t.shape() != (n, n) || cert.h.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "certificate dimensions do not match {n}x{n} matrix"
        )));
    }
    ensure_finite(&cert.t)?;
    ensure_finite(&cert.h)?;
    let cond = condition(&cert.t);
    if !cond.is_finite() || cond > crate::matrix::MAX_CONDITION {
        return Err(Error::Singular(cond));
    }
    // Independent solve through QR rather than the stored inverse.
    let at = a * &cert.t;
    let Some(h) = cert.t.clone().qr().solve(&at) else {
        return Err(Error::Singular(f64::INFINITY));
    };
    let s = scale(a);
    let h_err = inf_norm(&(&h - &cert.h)) / s;
    let (residual, min_t) = scaled_residual(a, &cert.t, &cert.h);
    let hs = scale(&cert.h);
    Ok(residual <= RESIDUAL_BOUND.max(tol)
        && h_err <= (tol * cond).max(RESIDUAL_BOUND)
        && hessenberg_violation(&cert.h) <= tol * hs
        && sign_violation(&cert.h, cert.mode) >= -tol * hs
        && min_t >= -tol)
}

/// `c(uvᵀ − sI)` with `u, v > 0` normalized to unit sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneShiftForm {
    #[serde(with = "serde_vector")]
    pub u: Vector,
    #[serde(with = "serde_vector")]
    pub v: Vector,
    pub s: f64,
    pub c: f64,
}

impl RankOneShiftForm {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.u.len();
        (&self.u * self.v.transpose() - Matrix::identity(n, n) * self.s) * self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstruction {
    /// `λ₂ < 0` with geometric multiplicity `n − 1`.
    NegEigGeomMult {
        eigenvalue: f64,
        multiplicity: usize,
        form: RankOneShiftForm,
    },
    /// `Ab = λ₁b` while the spectrum disqualifies a positive realization.
    PerronEigvecCoincidence {
        perron_root: f64,
        residual: f64,
        /// Smallest real part (2×2 case) or largest imaginary part (3×3 case)
        /// of the spectrum, the quantity that disqualifies it.
        spectral_witness: f64,
        near_threshold: bool,
    },
    GeometricInfeasible { decision: CoverDecision },
    SearchExhausted { attempts: usize, best_violation: f64 },
}

impl Obstruction {
    /// Re-checks the recorded data against `A` (and `b` where relevant).
    pub fn recheck(&self, a: &Matrix, b: Option<&Vector>) -> bool {
        match self {
            Obstruction::NegEigGeomMult { form, .. } => {
                let err = inf_norm(&(form.reconstruct() - a));
                let bound = form.u.component_mul(&form.v).min() + 1e-8 * scale(a) / form.c;
                err <= 1e-8 * scale(a)
                    && form.u.min() > 0.0
                    && form.v.min() > 0.0
                    && form.c > 0.0
                    && (0.0..=bound).contains(&form.s)
            }
            Obstruction::PerronEigvecCoincidence { perron_root, .. } => b.is_some_and(|b| {
                eigvec_residual(a, b, *perron_root) <= EIGVEC_REL * 10.0
            }),
            Obstruction::GeometricInfeasible { decision } => {
                decision.verdict == crate::simplex::Verdict::Infeasible
            }
            Obstruction::SearchExhausted { .. } => true,
        }
    }
}

/// `‖Ab − λb‖∞ / (‖A‖∞‖b‖∞)`, floors of one on both norms.
pub fn eigvec_residual(a: &Matrix, b: &Vector, lambda: f64) -> f64 {
    vec_inf_norm(&(a * b - b * lambda)) / (scale(a) * vec_inf_norm(b).max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Certificate(Box<SimilarityCertificate>),
    Obstruction(Obstruction),
}

impl Outcome {
    pub fn certificate(&self) -> Option<&SimilarityCertificate> {
        match self {
            Outcome::Certificate(c) => Some(c),
            Outcome::Obstruction(_) => None,
        }
    }

    pub fn obstruction(&self) -> Option<&Obstruction> {
        match self {
            Outcome::Certificate(_) => None,
            Outcome::Obstruction(o) => Some(o),
        }
    }

    pub fn into_certificate(self) -> Option<SimilarityCertificate> {
        match self {
            Outcome::Certificate(c) => Some(*c),
            Outcome::Obstruction(_) => None,
        }
    }
}

impl From<SimilarityCertificate> for Outcome {
    fn from(c: SimilarityCertificate) -> Self {
        Outcome::Certificate(Box::new(c))
    }
}

pub(crate) fn ensure_input_vector(b: &Vector, n: usize, what: &str) -> Result<()> {
    ensure_dim(b, n, what)?;
    crate::matrix::ensure_finite_vec(b)?;
    let tol = 1e-9 * vec_inf_norm(b).max(1.0);
    if b.min() < -tol {
        return Err(Error::NegativeVector(b.min()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::from_rows;

    #[test]
    fn identity_certificate_for_hessenberg_input() {
        let a = from_rows(&[&[1.0, 2.0, 0.5], &[3.0, 0.0, 1.0], &[0.0, 4.0, 2.0]]);
        let cert = certify(&a, Matrix::identity(3, 3), Mode::Nonneg, "identity").unwrap();
        assert!(cert.passes(1e-12));
        assert!(verify_certificate(&a, &cert, 1e-8).unwrap());
    }

    #[test]
    fn tampered_certificate_is_rejected() {
        let a = from_rows(&[&[1.0, 2.0, 0.5], &[3.0, 0.0, 1.0], &[0.0, 4.0, 2.0]]);
        let mut cert = certify(&a, Matrix::identity(3, 3), Mode::Nonneg, "identity").unwrap();
        cert.h[(0, 1)] += 1.0;
        assert!(!verify_certificate(&a, &cert, 1e-8).unwrap());
    }

    #[test]
    fn negative_entries_fail_by_mode() {
        let a = from_rows(&[&[-1.0, 2.0], &[3.0, -4.0]]);
        let cert = certify(&a, Matrix::identity(2, 2), Mode::Nonneg, "identity").unwrap();
        assert!(!cert.passes(1e-8));
        let cert = certify(&a, Matrix::identity(2, 2), Mode::Metzler, "identity").unwrap();
        assert!(cert.passes(1e-8));
        assert!(verify_certificate(&a, &cert, 1e-8).unwrap());
    }

    #[test]
    fn singular_transformation_is_an_error() {
        let a = Matrix::identity(2, 2);
        let t = from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(certify(&a, t, Mode::Nonneg, "x"), Err(Error::Singular(_))));
    }

    #[test]
    fn certificate_json_round_trip() {
        let a = from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let cert = certify(&a, from_rows(&[&[1.0, 0.5], &[0.0, 1.0]]), Mode::Metzler, "x")
            .unwrap()
            .with_input(&Vector::from_column_slice(&[1.0, 0.0]), None);
        let json = serde_json::to_string(&Outcome::from(cert.clone())).unwrap();
        let back: Outcome = serde_json::from_str(&json).unwrap();
        assert_eq!(back.certificate(), Some(&cert));
    }
}
