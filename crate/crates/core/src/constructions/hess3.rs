use super::small::ensure_nonnegative;
use super::{certify, dt_hess_2, rank_one_shift_detect, Mode, Obstruction, Outcome, SimilarityCertificate};
use crate::error::{Error, Result};
use crate::jordan::jordan_like_form;
use crate::linalg::{hessenberg_permutation, metzler_shift, sorted_spectrum};
use crate::matrix::{
    checked_inverse, ensure_finite, ensure_square, hessenberg_violation, permutation_matrix,
    tau_zero, Matrix, Vector, CLUSTER_REL,
};

const VALID_TOL: f64 = 1e-8;

fn require_3x3(a: &Matrix) -> Result<()> {
    let n = ensure_square(a)?;
    if n != 3 {
        return Err(Error::UnsupportedDimension {
            got: n,
            what: "this construction needs a 3x3 matrix",
        });
    }
    Ok(())
}

/// Embeds a 2×2 transform on coordinates `idx` into the 3×3 identity.
fn embed(t2: &Matrix, idx: [usize; 2]) -> Matrix {
    let mut t = Matrix::identity(3, 3);
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            t[(i, j)] = t2[(r, c)];
        }
    }
    t
}

/// After a block transform creates an off-diagonal zero, a permutation
/// finishes the Hessenberg form.
fn finish_with_permutation(a: &Matrix, t: Matrix, mode: Mode, name: &str) -> Option<SimilarityCertificate> {
    let h = checked_inverse(&t).ok()? * a * &t;
    let tau = 1e-10 * crate::matrix::scale(a);
    let p = hessenberg_permutation(&h, tau).ok()??;
    let cert = certify(a, t * permutation_matrix(&p), mode, name).ok()?;
    cert.passes(VALID_TOL).then_some(cert)
}

/// Zero created at `(j, k)` by `dt_hess_2` on the block `{i, j}` with the
/// coupling column `k`, or at `(k, j)` when working on the transposed pair.
fn block_reduction(a: &Matrix, k: usize, transposed: bool) -> Option<SimilarityCertificate> {
    let idx: Vec<usize> = (0..3).filter(|&x| x != k).collect();
    let idx = [idx[0], idx[1]];
    let blk = Matrix::from_fn(2, 2, |r, c| a[(idx[r], idx[c])]);
    let (m, v) = if transposed {
        (blk.transpose(), Vector::from_fn(2, |r, _| a[(k, idx[r])]))
    } else {
        (blk, Vector::from_fn(2, |r, _| a[(idx[r], k)]))
    };
    if v.amax() == 0.0 {
        return None;
    }
    let s = dt_hess_2(&m, &v).ok()?.into_certificate()?;
    let t2 = if transposed { s.t_inv.transpose() } else { s.t };
    let name = if transposed {
        format!("nonneg_hess_3: transposed 2x2 reduction on block {idx:?} with row {k}")
    } else {
        format!("nonneg_hess_3: 2x2 reduction on block {idx:?} with column {k}")
    };
    finish_with_permutation(a, embed(&t2, idx), Mode::Nonneg, &name)
}

/// Nonnegative Hessenberg form of a 3×3 nonnegative matrix, or the rank-one
/// shift obstruction.
pub fn nonneg_hess_3(a: &Matrix) -> Result<Outcome> {
    require_3x3(a)?;
    ensure_nonnegative(a)?;
    if let Some(form) = rank_one_shift_detect(a)? {
        return Ok(Outcome::Obstruction(Obstruction::NegEigGeomMult {
            eigenvalue: -form.c * form.s,
            multiplicity: 2,
            form,
        }));
    }
    let tau = tau_zero(a);
    if let Some(p) = hessenberg_permutation(a, tau)? {
        let name = if p == [0, 1, 2] { "identity" } else { "permutation" };
        return Ok(certify(a, permutation_matrix(&p), Mode::Nonneg, name)?.into());
    }
    // Reductions with T ≥ 0 first, then their transposed variants.
    for transposed in [false, true] {
        for k in [2, 0, 1] {
            if let Some(cert) = block_reduction(a, k, transposed) {
                return Ok(cert.into());
            }
        }
    }
    let spec = sorted_spectrum(a, CLUSTER_REL)?;
    if spec.is_real_nonnegative(spec.cluster_tolerance * spec.spectral_radius().max(1.0)) {
        let form = jordan_like_form(a, CLUSTER_REL)?;
        let blocks: Vec<String> = form.blocks.iter().map(|b| format!("{b:?}")).collect();
        let cert = certify(a, form.v, Mode::Nonneg, "nonneg_hess_3: Jordan basis")?
            .with_note(format!("Jordan blocks {}", blocks.join(", ")));
        if cert.passes(VALID_TOL) {
            return Ok(cert.into());
        }
    }
    Err(Error::Defect(
        "no branch produced a nonnegative Hessenberg form although the rank-one shift test failed"
            .into(),
    ))
}

/// Metzler Hessenberg form of a 3×3 Metzler matrix with `T ≥ 0`.
pub fn metzler_hess_3(a: &Matrix) -> Result<SimilarityCertificate> {
    require_3x3(a)?;
    ensure_finite(a)?;
    let (shifted, mu0) = metzler_shift(a)?;
    if hessenberg_violation(a) <= tau_zero(a) {
        return certify(a, Matrix::identity(3, 3), Mode::Metzler, "identity");
    }
    // Shifting until the leading 2×2 block has λ₂ ≥ 0 rules out both the
    // rank-one shift obstruction and obstructed block reductions.
    let blk = shifted.view((0, 0), (2, 2));
    let tr = blk.trace();
    let disc = ((blk[(0, 0)] - blk[(1, 1)]).powi(2) + 4.0 * blk[(0, 1)] * blk[(1, 0)]).sqrt();
    let l2 = 0.5 * (tr - disc);
    let mu1 = if l2 < 0.0 { -l2 + 1e-6 * crate::matrix::scale(a) } else { 0.0 };
    let b = &shifted + Matrix::identity(3, 3) * mu1;
    match nonneg_hess_3(&b)? {
        Outcome::Certificate(c) => {
            let cert = certify(a, c.t, Mode::Metzler, &format!("metzler_hess_3 via {}", c.construction))?
                .with_note(format!("diagonal shift {:e}", mu0 + mu1));
            if cert.passes(VALID_TOL) {
                Ok(cert)
            } else {
                Err(Error::Defect(format!(
                    "Metzler certificate failed its checks (residual {:e})",
                    cert.residual_similarity
                )))
            }
        }
        Outcome::Obstruction(o) => Err(Error::Defect(format!(
            "shifted Metzler matrix is still obstructed: {o:?}"
        ))),
    }
}
