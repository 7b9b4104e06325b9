use super::{certify, ct_hess_3, metzler_hess_3, Mode, Outcome, SimilarityCertificate};
use crate::error::{Error, Result};
use crate::linalg::hessenberg_permutation;
use crate::matrix::{
    block_diag, ensure_finite, ensure_square, is_metzler, min_off_diagonal, permutation_matrix,
    tau_zero, Matrix, Vector,
};

/// Metzler Hessenberg form of a 4×4 Metzler matrix with `T ≥ 0`.
///
/// Each index in turn is moved to the front; the trailing 3×3 block with its
/// coupling column and row forms a CT positive system whose
/// controller-Hessenberg form completes the transformation.
pub fn metzler_hess_4(a: &Matrix) -> Result<SimilarityCertificate> {
    let n = ensure_square(a)?;
    if n != 4 {
        return Err(Error::UnsupportedDimension {
            got: n,
            what: "metzler_hess_4 needs a 4x4 matrix",
        });
    }
    ensure_finite(a)?;
    let tau = tau_zero(a);
    if !is_metzler(a, tau) {
        return Err(Error::NotMetzler(min_off_diagonal(a)));
    }
    if let Some(p) = hessenberg_permutation(a, tau)? {
        let name = if p == [0, 1, 2, 3] { "identity" } else { "permutation" };
        return certify(a, permutation_matrix(&p), Mode::Metzler, name);
    }
    let mut diagnostics = Vec::new();
    for lead in 0..4 {
        let mut perm = vec![lead];
        perm.extend((0..4).filter(|&i| i != lead));
        let pi = permutation_matrix(&perm);
        let ap = pi.transpose() * a * &pi;
        let a3 = ap.view((1, 1), (3, 3)).into_owned();
        let b = Vector::from_fn(3, |i, _| ap[(i + 1, 0)].max(0.0));
        let c = Vector::from_fn(3, |i, _| ap[(0, i + 1)].max(0.0));
        let t3 = if b.amax() <= tau {
            metzler_hess_3(&a3).map(|cert| cert.t)
        } else {
            match ct_hess_3(&a3, &b, &c) {
                Ok(Outcome::Certificate(cert)) => Ok(cert.t),
                Ok(Outcome::Obstruction(o)) => {
                    diagnostics.push(format!("lead {lead}: {o:?}"));
                    continue;
                }
                Err(e) => Err(e),
            }
        };
        match t3 {
            Ok(t3) => {
                let t = &pi * block_diag(&Matrix::identity(1, 1), &t3);
                let cert = certify(a, t, Mode::Metzler, &format!("metzler_hess_4: lead index {lead}"))?;
                if cert.passes(1e-8) {
                    return Ok(cert);
                }
                diagnostics.push(format!(
                    "lead {lead}: certificate failed (residual {:e}, hessenberg {:e}, sign {:e})",
                    cert.residual_similarity, cert.hessenberg_violation, cert.sign_violation
                ));
            }
            Err(e) => diagnostics.push(format!("lead {lead}: {e}")),
        }
    }
    Err(Error::Defect(format!(
        "no leading index produced a Metzler Hessenberg form: {}",
        diagnostics.join("; ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::verify_certificate;
    use crate::matrix::{from_rows, min_entry};

    #[test]
    fn hessenberg_input_gives_identity() {
        let a = from_rows(&[
            &[-1.0, 2.0, 0.5, 1.0],
            &[3.0, -2.0, 1.0, 0.0],
            &[0.0, 4.0, 2.0, 1.0],
            &[0.0, 0.0, 1.0, -3.0],
        ]);
        assert_eq!(metzler_hess_4(&a).unwrap().t, Matrix::identity(4, 4));
    }

    #[test]
    fn ones_minus_identity() {
        let a = Matrix::from_element(4, 4, 1.0) - Matrix::identity(4, 4);
        let cert = metzler_hess_4(&a).unwrap();
        assert!(cert.passes(1e-8) && min_entry(&cert.t) >= 0.0);
        assert!(verify_certificate(&a, &cert, 1e-8).unwrap());
    }

    #[test]
    fn coupled_blocks() {
        let blk = from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let a = block_diag(&blk, &blk) + Matrix::from_element(4, 4, 0.05);
        let cert = metzler_hess_4(&a).unwrap();
        assert!(cert.passes(1e-8) && min_entry(&cert.t) >= 0.0);
        assert!(verify_certificate(&a, &cert, 1e-8).unwrap());
    }

    #[test]
    fn rejects_non_metzler() {
        let mut a = Matrix::identity(4, 4);
        a[(0, 3)] = -1.0;
        assert!(matches!(metzler_hess_4(&a), Err(Error::NotMetzler(_))));
    }
}
