use itertools::Itertools;

use super::small::{eigvec_b_transform, fix_b_boundary};
use super::{
    certify, dt_hess_2, ensure_input_vector, eigvec_residual, Mode, Obstruction, Outcome,
    SimilarityCertificate, EIGVEC_REL,
};
use crate::error::{Error, Result};
use crate::linalg::{is_irreducible, metzler_shift, perron_pair, sorted_spectrum};
use crate::matrix::{
    block_diag, checked_inverse, condition, ensure_finite, ensure_square, hessenberg_violation,
    is_metzler, min_off_diagonal, permutation_matrix, scale, tau_zero, vec_inf_norm, Matrix,
    Vector, CLUSTER_REL,
};

/// Frames worse conditioned than this are rejected inside the construction.
const FRAME_CONDITION: f64 = 1e10;

fn unit(i: usize) -> Vector {
    Vector::from_fn(3, |j, _| if i == j { 1.0 } else { 0.0 })
}

fn frame(cols: [&Vector; 3]) -> Matrix {
    Matrix::from_columns(&[cols[0].clone(), cols[1].clone(), cols[2].clone()])
}

fn abs_det(cols: [&Vector; 3]) -> f64 {
    let norms: f64 = cols.iter().map(|c| c.norm()).product();
    frame(cols).determinant().abs() / norms.max(f64::MIN_POSITIVE)
}

/// Smallest off-diagonal entry of `T⁻¹MT` relative to `max(1, ‖M‖∞)`, or
/// `None` when `T` is too ill-conditioned or has negative entries.
fn frame_quality(m: &Matrix, t: &Matrix) -> Option<f64> {
    if t.min() < 0.0 || condition(t) > FRAME_CONDITION {
        return None;
    }
    let h = checked_inverse(t).ok()? * m * t;
    Some(min_off_diagonal(&h) / scale(m))
}

fn accept(m: &Matrix, t: Matrix) -> Option<Matrix> {
    let q = frame_quality(m, &t)?;
    (q >= -1e-10).then_some(t)
}

/// `e_j` completing `(b, p)` to the best conditioned frame.
fn best_unit(b: &Vector, p: &Vector, allowed: impl Fn(usize) -> bool) -> Option<Vector> {
    (0..3)
        .filter(|&j| allowed(j))
        .map(|j| (abs_det([b, p, &unit(j)]), j))
        .filter(|(d, _)| *d > 1e-9)
        .max_by(|x, y| x.0.total_cmp(&y.0))
        .map(|(_, j)| unit(j))
}

fn best_unit_pair(b: &Vector) -> Option<Matrix> {
    (0..3)
        .tuple_combinations()
        .map(|(j, k)| (abs_det([b, &unit(j), &unit(k)]), j, k))
        .filter(|(d, _, _)| *d > 1e-9)
        .max_by(|x, y| x.0.total_cmp(&y.0))
        .map(|(_, j, k)| frame([b, &unit(j), &unit(k)]))
}

/// `T = (b | p | q) ≥ 0` with `T⁻¹MT` Metzler for a reducible nonnegative `M`.
fn reducible_frame(m: &Matrix, b: &Vector) -> Result<Matrix> {
    let s = scale(m);
    let spec = sorted_spectrum(m, CLUSTER_REL)?;
    let lambda = spec.eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let mut mhat = m - Matrix::identity(3, 3) * lambda;
    mhat.iter_mut().for_each(|x| *x = x.max(0.0));
    let svd = mhat.clone().svd(true, false);
    let sv = &svd.singular_values;
    let u = svd.u.as_ref().expect("requested left singular vectors");
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let top = sv[order[0]];
    let rank = if top <= 1e-12 * s {
        0
    } else {
        order.iter().filter(|&&i| sv[i] > 1e-8 * top).count().min(2)
    };
    let cols: Vec<Vector> = mhat
        .column_iter()
        .filter(|c| c.norm() > 1e-12 * s)
        .map(|c| c.normalize())
        .collect();
    let b = b / b.norm();

    let direct = match rank {
        0 => best_unit_pair(&b),
        1 => {
            let g = cols
                .iter()
                .max_by(|x, y| x.dot(&b).abs().total_cmp(&y.dot(&b).abs()))
                .cloned()
                .unwrap_or_else(|| b.clone());
            if abs_det([&b, &g, &unit(0)]).max(abs_det([&b, &g, &unit(1)])).max(abs_det([&b, &g, &unit(2)])) <= 1e-9 {
                best_unit_pair(&b)
            } else {
                best_unit(&b, &g, |_| true).map(|e| frame([&b, &g, &e]))
            }
        }
        _ => plane_frame(&mhat, &b, &cols, [u.column(order[0]).into(), u.column(order[1]).into()]),
    };
    if let Some(t) = direct.and_then(|t| accept(m, t)) {
        return Ok(t);
    }
    search_frame(m, &mhat, &b, &cols)
}

/// Rank-two case: the columns of `M̂` span a plane with extreme rays `g₁, g₂`.
fn plane_frame(mhat: &Matrix, b: &Vector, cols: &[Vector], basis: [Vector; 2]) -> Option<Matrix> {
    let coords = |x: &Vector| (basis[0].dot(x), basis[1].dot(x));
    let reference = {
        let (x, y) = coords(&cols[0]);
        y.atan2(x)
    };
    let angle = |x: &Vector| {
        let (cx, cy) = coords(x);
        let d = cy.atan2(cx) - reference;
        (d + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
    };
    let (g1, g2) = cols
        .iter()
        .map(|c| (angle(c), c))
        .fold((None::<(f64, &Vector)>, None::<(f64, &Vector)>), |(lo, hi), (a, c)| {
            let lo = match lo {
                Some((la, _)) if la <= a => lo,
                _ => Some((a, c)),
            };
            let hi = match hi {
                Some((ha, _)) if ha >= a => hi,
                _ => Some((a, c)),
            };
            (lo, hi)
        });
    let ((a1, g1), (a2, g2)) = (g1?, g2?);
    let in_plane = b - &basis[0] * basis[0].dot(b) - &basis[1] * basis[1].dot(b);
    if in_plane.norm() > 1e-8 && abs_det([b, g1, g2]) > 1e-9 {
        return Some(frame([b, g1, g2]));
    }
    let ab = angle(b);
    let eps = 1e-12;
    if ab <= a1 + eps || ab >= a2 - eps {
        let far = if (ab - a1).abs() > (ab - a2).abs() { g1 } else { g2 };
        let e = best_unit(b, far, |_| true)?;
        return Some(frame([b, far, &e]));
    }
    // b lies strictly between the extreme rays: take the ray on the side of
    // M̂b and complete with a direction whose image stays on that side.
    let mb = mhat * b;
    let sides: Vec<(f64, &Vector)> = if mb.norm() <= 1e-12 * b.norm() || (angle(&mb) - ab).abs() <= eps {
        vec![(a1, g1), (a2, g2)]
    } else if angle(&mb) < ab {
        vec![(a1, g1)]
    } else {
        vec![(a2, g2)]
    };
    for (ap, p) in sides {
        let same_side = |j: usize| {
            let c = mhat.column(j).into_owned();
            c.norm() <= 1e-12 || (angle(&c) - ab) * (ap - ab) >= 0.0
        };
        if let Some(e) = best_unit(b, p, same_side) {
            return Some(frame([b, p, &e]));
        }
        // Tilt an in-plane same-side direction out of the plane.
        for (j, l) in (0..3).cartesian_product(0..3) {
            if j == l || !same_side(j) || same_side(l) {
                continue;
            }
            let q = unit(j) + unit(l) * 1e-3;
            if abs_det([b, p, &q]) > 1e-9 {
                return Some(frame([b, p, &q]));
            }
        }
    }
    None
}

/// Deterministic search over a finite candidate set, keeping the frame with
/// the largest minimal off-diagonal entry.
fn search_frame(m: &Matrix, mhat: &Matrix, b: &Vector, cols: &[Vector]) -> Result<Matrix> {
    let mut cands: Vec<Vector> = cols.to_vec();
    cands.extend((0..3).map(unit));
    for (j, k) in (0..3).tuple_combinations() {
        cands.push((unit(j) + unit(k)).normalize());
    }
    let mb = mhat * b;
    if mb.norm() > 0.0 {
        cands.push(mb.normalize());
    }
    let mut best: Option<(f64, Matrix)> = None;
    for (p, q) in cands.iter().tuple_combinations() {
        let t = frame([b, p, q]);
        if let Some(quality) = frame_quality(m, &t) {
            if best.as_ref().is_none_or(|(bq, _)| quality > *bq) {
                best = Some((quality, t));
            }
        }
    }
    match best {
        Some((q, t)) if q >= -1e-10 => Ok(t),
        Some((q, _)) => Err(Error::Defect(format!(
            "reducible-case frame search ended with off-diagonal {q:e}"
        ))),
        None => Err(Error::Defect("no nonsingular frame among the candidates".into())),
    }
}

/// `b'` has a zero entry: subtract `bαᵀ` to make the matrix reducible.
fn boundary_frame(m: &Matrix, b: &Vector) -> Result<Matrix> {
    let top = b.amax();
    let zeros: Vec<usize> = (0..3).filter(|&i| b[i] <= 1e-12 * top).collect();
    if zeros.len() >= 2 {
        let i = (0..3).find(|i| !zeros.contains(i)).expect("b is nonzero");
        let rest: Vec<usize> = (0..3).filter(|&j| j != i).collect();
        return Ok(frame([b, &unit(rest[0]), &unit(rest[1])]));
    }
    if zeros.is_empty() {
        return Err(Error::Defect("boundary step left b in the interior".into()));
    }
    let z = zeros[0];
    let mut perm: Vec<usize> = (0..3).filter(|&i| i != z).collect();
    perm.push(z);
    let q = permutation_matrix(&perm);
    let mp = q.transpose() * m * &q;
    let mut bq = q.transpose() * b;
    bq[2] = 0.0;
    let alpha = Vector::from_column_slice(&[
        mp[(1, 0)] / bq[1],
        mp[(0, 1)] / bq[0],
        (mp[(0, 2)] / bq[0]).min(mp[(1, 2)] / bq[1]),
    ]);
    let k = [0.0, bq[0] * alpha[0] - mp[(0, 0)], bq[1] * alpha[1] - mp[(1, 1)]]
        .into_iter()
        .fold(0.0, f64::max);
    let mut ab = &mp + Matrix::identity(3, 3) * k - &bq * alpha.transpose();
    let tol = 1e-12 * scale(&ab);
    ab.iter_mut().for_each(|x| {
        if *x < 0.0 && *x >= -tol {
            *x = 0.0;
        }
    });
    let t = reducible_frame(&ab, &bq)?;
    let mut t = &q * t;
    t.set_column(0, b);
    Ok(t)
}

/// First step: `T₁ = (b | p | q) ≥ 0` with `T₁⁻¹BT₁` Metzler.
fn first_step(bm: &Matrix, b: &Vector) -> Result<(Matrix, &'static str)> {
    let tau = tau_zero(bm);
    if !is_irreducible(bm, tau) {
        let mut t = reducible_frame(bm, b)?;
        t.set_column(0, b);
        return Ok((t, "reducible frame"));
    }
    let perron = perron_pair(bm)?;
    if eigvec_residual(bm, b, perron.perron_root) <= EIGVEC_REL {
        return Ok((eigvec_b_transform(bm, b)?, "Perron-vector Jordan transform"));
    }
    let t_fix = fix_b_boundary(bm, b)?;
    let mut bp = checked_inverse(&t_fix)? * b;
    let top = bp.amax();
    bp.iter_mut().for_each(|x| {
        if *x <= 1e-12 * top {
            *x = 0.0
        }
    });
    let mut t = &t_fix * boundary_frame(bm, &bp)?;
    t.set_column(0, b);
    Ok((t, "boundary placement and rank reduction"))
}

fn lambda2_2x2(m: &Matrix) -> f64 {
    let tr = m.trace();
    let disc = ((m[(0, 0)] - m[(1, 1)]).powi(2) + 4.0 * m[(0, 1)] * m[(1, 0)]).max(0.0).sqrt();
    0.5 * (tr - disc)
}

/// Controller-Hessenberg form of a second-order CT positive system. After a
/// diagonal shift with `λ₂ ≥ 0` the DT construction is never obstructed.
pub fn ct_hess_2(a: &Matrix, b: &Vector, c: &Vector) -> Result<SimilarityCertificate> {
    let n = ensure_square(a)?;
    if n != 2 {
        return Err(Error::UnsupportedDimension {
            got: n,
            what: "ct_hess_2 needs a 2x2 matrix",
        });
    }
    ensure_finite(a)?;
    ensure_input_vector(b, 2, "input vector b")?;
    ensure_input_vector(c, 2, "output vector c")?;
    let (b, c) = (b.map(|x| x.max(0.0)), c.map(|x| x.max(0.0)));
    let (shifted, mu) = metzler_shift(a)?;
    let l2 = lambda2_2x2(&shifted);
    let k = if l2 < 0.0 { -l2 + 1e-6 * scale(a) } else { 0.0 };
    let inner = dt_hess_2(&(shifted + Matrix::identity(2, 2) * k), &b)?;
    let Some(t2) = inner.into_certificate() else {
        return Err(Error::Defect("2x2 step was obstructed after shifting".into()));
    };
    let cert = certify(a, t2.t, Mode::Metzler, "ct_hess_2")?
        .with_input(&b, Some(&c))
        .with_note(format!("diagonal shift {:e}", mu + k));
    if cert.passes(1e-8) {
        Ok(cert)
    } else {
        Err(Error::Defect(format!(
            "CT certificate failed its checks (residual {:e})",
            cert.residual_similarity
        )))
    }
}

/// Controller-Hessenberg form of a third-order CT positive system.
pub fn ct_hess_3(a: &Matrix, b: &Vector, c: &Vector) -> Result<Outcome> {
    let n = ensure_square(a)?;
    if n != 3 {
        return Err(Error::UnsupportedDimension {
            got: n,
            what: "ct_hess_3 needs a 3x3 matrix",
        });
    }
    ensure_finite(a)?;
    if !is_metzler(a, tau_zero(a)) {
        return Err(Error::NotMetzler(min_off_diagonal(a)));
    }
    ensure_input_vector(b, 3, "input vector")?;
    ensure_input_vector(c, 3, "output vector")?;
    let b = b.map(|x| x.max(0.0));
    let c = c.map(|x| x.max(0.0));
    if vec_inf_norm(&b) == 0.0 {
        return Err(Error::ZeroVector);
    }
    let s = scale(a);
    let spec = sorted_spectrum(a, CLUSTER_REL)?;
    let min_re = spec.eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let max_im = spec.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let (_, mu0) = metzler_shift(a)?;
    let mu = mu0.max(-min_re) + 0.1 * s;
    let bm = a + Matrix::identity(3, 3) * mu;
    let perron = perron_pair(&bm)?;
    let residual = eigvec_residual(&bm, &b, perron.perron_root);
    if residual <= EIGVEC_REL && max_im > 0.0 {
        return Ok(Outcome::Obstruction(Obstruction::PerronEigvecCoincidence {
            perron_root: perron.perron_root - mu,
            residual,
            spectral_witness: max_im,
            near_threshold: residual > 0.01 * EIGVEC_REL,
        }));
    }

    let top = b.amax();
    let (t1, route) = if hessenberg_violation(a) <= tau_zero(a) && (1..3).all(|i| b[i] <= 1e-12 * top) {
        let mut t = Matrix::identity(3, 3);
        t.set_column(0, &b);
        (t, "already in controller-Hessenberg form")
    } else {
        first_step(&bm, &b)?
    };
    let h1 = checked_inverse(&t1)? * &bm * &t1;
    let hs = scale(&h1);
    let mut bt = Vector::from_column_slice(&[h1[(1, 0)], h1[(2, 0)]]);
    bt.iter_mut().for_each(|x| *x = x.max(0.0));
    let t = if bt[1] <= 1e-13 * hs || bt.amax() == 0.0 {
        t1
    } else {
        let mut at = h1.view((1, 1), (2, 2)).into_owned();
        for (i, j) in [(0, 1), (1, 0)] {
            if at[(i, j)] < 0.0 && at[(i, j)] >= -1e-10 * hs {
                at[(i, j)] = 0.0;
            }
        }
        let (at_shifted, _) = metzler_shift(&at)?;
        let l2 = lambda2_2x2(&at_shifted);
        let k = if l2 < 0.0 { -l2 + 1e-6 * hs } else { 0.0 };
        let inner = dt_hess_2(&(at_shifted + Matrix::identity(2, 2) * k), &bt)?;
        let Some(t2) = inner.into_certificate() else {
            return Err(Error::Defect("trailing 2x2 step was obstructed after shifting".into()));
        };
        let mut t = &t1 * block_diag(&Matrix::identity(1, 1), &t2.t);
        t.set_column(0, &b);
        t
    };
    let cert = certify(a, t, Mode::Metzler, &format!("ct_hess_3: {route}"))?.with_input(&b, Some(&c));
    let ct_min = cert
        .input
        .as_ref()
        .and_then(|i| i.c_t.as_ref())
        .map_or(0.0, |v| v.iter().copied().fold(f64::INFINITY, f64::min));
    if !cert.passes(1e-8) || cert.min_entry_t < -1e-12 || ct_min < -1e-9 * vec_inf_norm(&c).max(1.0) {
        return Err(Error::Defect(format!(
            "ct_hess_3 ({route}) failed its postconditions: residual {:e}, hessenberg {:e}, sign {:e}, min T {:e}",
            cert.residual_similarity, cert.hessenberg_violation, cert.sign_violation, cert.min_entry_t
        )));
    }
    Ok(cert.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::verify_certificate;
    use crate::matrix::from_rows;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn cyclic() -> Matrix {
        from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]])
    }

    fn check(a: &Matrix, b: &Vector, c: &Vector) {
        let cert = ct_hess_3(a, b, c).unwrap().into_certificate().unwrap();
        assert!(cert.passes(1e-8), "{cert:?}");
        assert!(verify_certificate(a, &cert, 1e-8).unwrap());
        assert!((cert.t.column(0) - b).amax() == 0.0);
        let tb = &cert.input.as_ref().unwrap().t_inv_b;
        assert!((tb - v(&[1.0, 0.0, 0.0])).amax() < 1e-9, "{tb}");
    }

    #[test]
    fn second_order_ct_systems() {
        for a in [
            from_rows(&[&[-3.0, 1.0], &[1.0, -3.0]]),
            from_rows(&[&[0.0, 2.0], &[0.5, -1.0]]),
            from_rows(&[&[-1.0, 0.0], &[0.0, -2.0]]),
        ] {
            for b in [v(&[1.0, 1.0]), v(&[1.0, 0.0]), v(&[0.3, 2.0])] {
                let cert = ct_hess_2(&a, &b, &v(&[1.0, 1.0])).unwrap();
                assert!(verify_certificate(&a, &cert, 1e-8).unwrap());
                let tb = &cert.input.as_ref().unwrap().t_inv_b;
                assert!((tb - v(&[1.0, 0.0])).amax() < 1e-9, "{tb}");
            }
        }
    }

    #[test]
    fn cyclic_obstruction() {
        let out = ct_hess_3(&cyclic(), &v(&[1.0, 1.0, 1.0]), &v(&[1.0, 1.0, 1.0])).unwrap();
        assert!(matches!(
            out,
            Outcome::Obstruction(Obstruction::PerronEigvecCoincidence { .. })
        ));
    }

    #[test]
    fn diagonal_with_first_unit_vector() {
        let a = Matrix::from_diagonal(&v(&[3.0, 2.0, 1.0]));
        let cert = ct_hess_3(&a, &v(&[1.0, 0.0, 0.0]), &v(&[1.0, 1.0, 1.0]))
            .unwrap()
            .into_certificate()
            .unwrap();
        assert_eq!(cert.t, Matrix::identity(3, 3));
    }

    #[test]
    fn cyclic_with_unit_input() {
        check(&cyclic(), &v(&[1.0, 0.0, 0.0]), &v(&[1.0, 1.0, 1.0]));
    }

    #[test]
    fn positive_vector_on_dense_matrix() {
        let a = from_rows(&[&[-2.0, 1.0, 3.0], &[0.5, -1.0, 2.0], &[1.0, 4.0, -3.0]]);
        check(&a, &v(&[1.0, 2.0, 0.5]), &v(&[0.0, 1.0, 1.0]));
    }

    #[test]
    fn perron_vector_with_real_spectrum() {
        let a = from_rows(&[&[2.0, 1.0, 1.0], &[1.0, 2.0, 1.0], &[1.0, 1.0, 2.0]]);
        check(&a, &v(&[1.0, 1.0, 1.0]), &v(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn reducible_inputs() {
        let a = from_rows(&[&[1.0, 2.0, 0.0], &[0.0, 3.0, 0.0], &[1.0, 1.0, 2.0]]);
        for b in [v(&[1.0, 1.0, 1.0]), v(&[0.0, 1.0, 0.0]), v(&[1.0, 0.0, 1.0]), v(&[0.2, 1.0, 3.0])] {
            check(&a, &b, &v(&[1.0, 1.0, 1.0]));
        }
    }
}
