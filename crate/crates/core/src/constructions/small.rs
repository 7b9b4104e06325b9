use nalgebra::DMatrix;

use super::{
    certify, ensure_input_vector, eigvec_residual, Mode, Obstruction, Outcome, RankOneShiftForm,
    EIGVEC_REL,
};
use crate::cones::boundary_shift;
use crate::error::{Error, Result};
use crate::jordan::jordan_like_form;
use crate::linalg::{
    geometric_multiplicity, is_irreducible, perron_pair,
    sorted_spectrum, C64, RANK_REL,
};
use crate::matrix::{
    checked_inverse, ensure_finite, ensure_square, inf_norm, is_nonnegative, min_entry, scale,
    tau_zero, vec_inf_norm, Matrix, Vector, CLUSTER_REL,
};

pub const FIX_ITERATION_CAP: usize = 1000;

pub(crate) fn ensure_nonnegative(a: &Matrix) -> Result<usize> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    if !is_nonnegative(a, tau_zero(a)) {
        return Err(Error::NotNonnegative(min_entry(a)));
    }
    Ok(n)
}

/// Decomposes `A = c(uvᵀ − sI)` when `λ₂(A) < 0` has geometric multiplicity `n − 1`.
pub fn rank_one_shift_detect(a: &Matrix) -> Result<Option<RankOneShiftForm>> {
    let n = ensure_nonnegative(a)?;
    if n < 2 {
        return Ok(None);
    }
    let spec = sorted_spectrum(a, CLUSTER_REL)?;
    let tau = tau_zero(a);
    let rest = &spec.eigenvalues[1..];
    let lambda2 = rest.iter().map(|z| z.re).sum::<f64>() / rest.len() as f64;
    let cluster_tol = spec.cluster_tolerance * spec.spectral_radius().max(1.0);
    if lambda2 >= -tau
        || rest
            .iter()
            .any(|z| z.im.abs() > cluster_tol || (z.re - lambda2).abs() > cluster_tol)
    {
        return Ok(None);
    }
    if geometric_multiplicity(a, C64::new(lambda2, 0.0), RANK_REL)? != n - 1 {
        return Ok(None);
    }
    let perron = perron_pair(a)?;
    let (u, v) = (perron.right_vector, perron.left_vector);
    let c = (perron.perron_root - lambda2) / v.dot(&u);
    if !(c > 0.0) || u.min() <= 0.0 || v.min() <= 0.0 {
        return Ok(None);
    }
    let form = RankOneShiftForm {
        s: -lambda2 / c,
        c,
        u,
        v,
    };
    let bound = form.u.component_mul(&form.v).min() + tau / c;
    let err = inf_norm(&(form.reconstruct() - a));
    Ok((err <= 1e-8 * scale(a) && form.s >= 0.0 && form.s <= bound).then_some(form))
}

fn perron_check(a: &Matrix, b: &Vector) -> Result<(f64, f64)> {
    let root = perron_pair(a)?.perron_root;
    Ok((root, eigvec_residual(a, b, root)))
}

/// Returns `T ≥ 0`, a polynomial in `A`, with `T⁻¹b` on the boundary of the
/// nonnegative orthant.
pub fn fix_b_boundary(a: &Matrix, b: &Vector) -> Result<Matrix> {
    let n = ensure_nonnegative(a)?;
    ensure_input_vector(b, n, "input vector")?;
    if vec_inf_norm(b) == 0.0 {
        return Err(Error::ZeroVector);
    }
    if !is_irreducible(a, tau_zero(a)) {
        return Err(Error::Reducible);
    }
    let (_, residual) = perron_check(a, b)?;
    if residual <= EIGVEC_REL {
        return Err(Error::PerronEigenvector { residual });
    }
    let on_boundary = |x: &Vector| x.min() <= 1e-12 * vec_inf_norm(x);
    if on_boundary(b) {
        return Ok(Matrix::identity(n, n));
    }
    let spec = sorted_spectrum(a, CLUSTER_REL)?;
    let min_re = spec.eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let primitive = spec.eigenvalues.len() < 2
        || spec.eigenvalues[0].norm() > spec.eigenvalues[1].norm() + tau_zero(a);
    let k = if primitive && min_re > 1e-6 * scale(a) {
        0.0
    } else {
        let spread = (spec.eigenvalues[0].re - min_re).max(1e-3 * scale(a));
        (-min_re).max(0.0) + 0.1 * spread
    };
    let ak = a + Matrix::identity(n, n) * k;
    let ak_inv = checked_inverse(&ak)?;
    let mut acc = Matrix::identity(n, n);
    let mut bj = b / vec_inf_norm(b);
    for _ in 0..FIX_ITERATION_CAP {
        let x = &ak_inv * &bj;
        let xs = &x / vec_inf_norm(&x);
        if xs.min() < -1e-12 {
            let s = boundary_shift(&ak, &bj, 1e-12)?;
            return Ok(&acc * (&ak + Matrix::identity(n, n) * s));
        }
        acc = &acc * &ak;
        acc /= inf_norm(&acc);
        if on_boundary(&xs) {
            return Ok(acc);
        }
        bj = xs;
    }
    Err(Error::IterationCap { cap: FIX_ITERATION_CAP })
}

/// Controller-Hessenberg form of a 2×2 DT positive system.
pub fn dt_hess_2(a: &Matrix, b: &Vector) -> Result<Outcome> {
    let n = ensure_nonnegative(a)?;
    if n != 2 {
        return Err(Error::UnsupportedDimension {
            got: n,
            what: "dt_hess_2 needs a 2x2 matrix",
        });
    }
    ensure_input_vector(b, 2, "input vector")?;
    let b = b.map(|x| x.max(0.0));
    if vec_inf_norm(&b) == 0.0 {
        return Err(Error::ZeroVector);
    }
    let tr = a.trace();
    let disc = ((a[(0, 0)] - a[(1, 1)]).powi(2) + 4.0 * a[(0, 1)] * a[(1, 0)]).sqrt();
    let (l1, l2) = (0.5 * (tr + disc), 0.5 * (tr - disc));
    let tau = tau_zero(a);
    let t = if l2 >= -tau {
        let mut ahat = a - Matrix::identity(2, 2) * l2;
        ahat.iter_mut().for_each(|x| *x = x.max(0.0));
        let ray = ahat
            .column_iter()
            .max_by(|x, y| x.norm().total_cmp(&y.norm()))
            .map(|c| c.into_owned())
            .filter(|c| c.norm() > tau);
        let det = |p: &Vector| (b[0] * p[1] - b[1] * p[0]) / (b.norm() * p.norm());
        let p = match ray {
            Some(r) if det(&r).abs() > 1e-8 => r,
            _ => {
                let e0 = Vector::from_column_slice(&[1.0, 0.0]);
                let e1 = Vector::from_column_slice(&[0.0, 1.0]);
                if det(&e0).abs() >= det(&e1).abs() { e0 } else { e1 }
            }
        };
        Matrix::from_columns(&[b.clone(), p])
    } else {
        let residual = eigvec_residual(a, &b, l1);
        if residual <= EIGVEC_REL {
            return Ok(Outcome::Obstruction(Obstruction::PerronEigvecCoincidence {
                perron_root: l1,
                residual,
                spectral_witness: l2,
                near_threshold: residual > 0.01 * EIGVEC_REL,
            }));
        }
        let t_fix = fix_b_boundary(a, &b)?;
        let bt = checked_inverse(&t_fix)? * &b;
        let i = if bt[0] >= bt[1] { 0 } else { 1 };
        let mut t = Matrix::zeros(2, 2);
        t.set_column(0, &b);
        t.set_column(1, &t_fix.column(1 - i));
        t
    };
    Ok(certify(a, t, Mode::Nonneg, "dt_hess_2")?.with_input(&b, None).into())
}

/// `T = V(I + e₁αᵀ) ≥ 0` with `T⁻¹b = e₁` for `b` the Perron vector of an
/// irreducible `A` with real nonnegative spectrum.
pub fn eigvec_b_transform(a: &Matrix, b: &Vector) -> Result<Matrix> {
    let n = ensure_nonnegative(a)?;
    ensure_input_vector(b, n, "input vector")?;
    let tau = tau_zero(a);
    if !is_irreducible(a, tau) {
        return Err(Error::Reducible);
    }
    let spec = sorted_spectrum(a, CLUSTER_REL)?;
    if !spec.is_real_nonnegative(spec.cluster_tolerance * spec.spectral_radius().max(1.0)) {
        return Err(Error::SpectrumNotRealNonnegative);
    }
    let (root, residual) = perron_check(a, b)?;
    if residual > EIGVEC_REL || b.min() <= 0.0 {
        return Err(Error::NotPerronEigenvector { residual });
    }
    let form = jordan_like_form(a, CLUSTER_REL)?;
    let mut v = form.v.clone();
    v.set_column(0, b);
    let lambda: Vec<f64> = (0..n).map(|i| form.j[(i, i)]).collect();
    let mut alpha = vec![0.0; n];
    for i in 1..n {
        let positivity = (0..n)
            .map(|j| -v[(j, i)] / b[j])
            .fold(0.0, f64::max);
        let gap = root - lambda[i];
        if gap <= 0.0 {
            return Err(Error::Defect(format!(
                "Perron root {root} is not strictly dominant over {}",
                lambda[i]
            )));
        }
        let recurrence = form.j[(i - 1, i)] * alpha[i - 1] / gap;
        alpha[i] = 1.25 * positivity.max(recurrence);
    }
    let mut t = v;
    for i in 1..n {
        let col = t.column(i) + b * alpha[i];
        t.set_column(i, &col);
    }
    Ok(t)
}

/// Complex eigenvector matrix of a diagonalizable `A`.
fn eigenvectors(a: &Matrix) -> Result<(Vec<C64>, DMatrix<C64>)> {
    let n = a.nrows();
    let spec = sorted_spectrum(a, CLUSTER_REL)?;
    let mut cols: Vec<nalgebra::DVector<C64>> = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for cluster in &spec.clusters {
        if cluster.geometric != cluster.algebraic() {
            return Err(Error::UnsupportedStructure(format!(
                "eigenvalue {} is defective",
                cluster.value
            )));
        }
        let k = cluster.algebraic();
        let m = DMatrix::<C64>::from_fn(n, n, |i, j| {
            C64::new(a[(i, j)], 0.0) - if i == j { cluster.value } else { C64::new(0.0, 0.0) }
        });
        let svd = m.svd(false, true);
        let vt = svd.v_t.expect("requested right singular vectors");
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        for &i in idx.iter().take(k) {
            cols.push(vt.row(i).transpose().map(|z| z.conj()));
            values.push(cluster.value);
        }
    }
    Ok((values, DMatrix::from_columns(&cols)))
}

/// `T = V·diag(β/α)·V⁻¹` with `α = V⁻¹e₁`, `β = V⁻¹b`; commutes with `A`
/// and maps `e₁` to `b`.
pub fn diag_commuting_transform(a: &Matrix, b: &Vector) -> Result<Matrix> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    crate::matrix::ensure_dim(b, n, "input vector")?;
    let (_, v) = eigenvectors(a)?;
    let v_inv = v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::UnsupportedStructure("eigenvector matrix is singular".into()))?;
    let e1 = nalgebra::DVector::<C64>::from_fn(n, |i, _| C64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0));
    let bc = b.map(|x| C64::new(x, 0.0));
    let alpha = &v_inv * e1;
    let beta = &v_inv * bc;
    let check = |x: &nalgebra::DVector<C64>, what: &str| {
        let m = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
        match x.iter().position(|z| z.norm() <= 1e-9 * m.max(1e-300)) {
            Some(i) => Err(Error::Hypothesis(format!("component {i} of {what} is zero"))),
            None => Ok(()),
        }
    };
    check(&alpha, "V^-1 e1")?;
    check(&beta, "V^-1 b")?;
    let e = DMatrix::<C64>::from_diagonal(&beta.component_div(&alpha));
    let tc = &v * e * &v_inv;
    let t = tc.map(|z| z.re);
    let imag = tc.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let t_inv = checked_inverse(&t)?;
    let s = scale(a);
    let commute = inf_norm(&(&t_inv * a * &t - a)) / s;
    let maps = vec_inf_norm(&(&t_inv * b - Vector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 })));
    if imag > 1e-8 * inf_norm(&t).max(1.0) || commute > 1e-8 || maps > 1e-8 {
        return Err(Error::Defect(format!(
            "commuting transform failed its postconditions (imag {imag:e}, commutation {commute:e}, input {maps:e})"
        )));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::from_rows;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn rank_one_shift_examples() {
        let a = Matrix::from_element(3, 3, 1.0) - Matrix::identity(3, 3);
        let f = rank_one_shift_detect(&a).unwrap().expect("rank-one shift member");
        assert!((f.c * f.s - 1.0).abs() < 1e-10);
        assert!((f.u - v(&[1.0, 1.0, 1.0]) / 3.0).amax() < 1e-10);
        let reducible = from_rows(&[&[0.0, 0.0, 14.0], &[0.0, 6.0, 0.0], &[15.0, 4.0, 6.0]]);
        assert_eq!(rank_one_shift_detect(&reducible).unwrap(), None);
        let d = Matrix::from_diagonal(&v(&[1.0, 2.0, 3.0]));
        assert_eq!(rank_one_shift_detect(&d).unwrap(), None);
        assert!(rank_one_shift_detect(&(-d)).is_err());
    }

    #[test]
    fn rank_one_shift_recovers_generated_form() {
        let (u, w) = (v(&[1.0, 2.0, 1.0]), v(&[1.0, 1.0, 2.0]));
        let a = &u * w.transpose() - Matrix::identity(3, 3) * 0.5;
        let f = rank_one_shift_detect(&a).unwrap().expect("rank-one shift member");
        assert!(inf_norm(&(f.reconstruct() - &a)) < 1e-10);
        assert!((f.c * f.s - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fix_b_boundary_examples() {
        let a = from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let t = fix_b_boundary(&a, &v(&[3.0, 1.0])).unwrap();
        let expect = from_rows(&[&[3.0, 1.0], &[1.0, 3.0]]);
        assert!(inf_norm(&(&t - &expect)) < 1e-9, "{t}");
        let swap = from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(fix_b_boundary(&swap, &v(&[1.0, 0.0])).unwrap(), Matrix::identity(2, 2));
        assert!(matches!(
            fix_b_boundary(&a, &v(&[1.0, 1.0])),
            Err(Error::PerronEigenvector { .. })
        ));
    }

    #[test]
    fn fix_b_boundary_iterates_inverse_for_interior_b() {
        // b close to the Perron direction lies inside cone(A).
        let a = from_rows(&[&[2.0, 1.0, 0.5], &[1.0, 3.0, 1.0], &[0.5, 1.0, 2.0]]);
        let b = v(&[1.0, 1.2, 1.0]);
        let t = fix_b_boundary(&a, &b).unwrap();
        assert!(min_entry(&t) >= 0.0);
        assert!(inf_norm(&(&a * &t - &t * &a)) <= 1e-8 * inf_norm(&a) * inf_norm(&t));
        let x = checked_inverse(&t).unwrap() * &b;
        assert!(x.min().abs() <= 1e-9 * x.amax() && x.min() >= -1e-9 * x.amax(), "{x}");
    }

    #[test]
    fn dt_hess_2_examples() {
        let swap = from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let out = dt_hess_2(&swap, &v(&[1.0, 1.0])).unwrap();
        assert!(matches!(
            out,
            Outcome::Obstruction(Obstruction::PerronEigvecCoincidence { .. })
        ));
        let cert = dt_hess_2(&swap, &v(&[1.0, 0.0])).unwrap().into_certificate().unwrap();
        assert_eq!(cert.t, Matrix::identity(2, 2));
        assert_eq!(cert.h, swap);
        let a = from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let cert = dt_hess_2(&a, &v(&[3.0, 1.0])).unwrap().into_certificate().unwrap();
        assert!(cert.passes(1e-10) && cert.min_entry_t >= 0.0);
        let tb = &cert.input.as_ref().unwrap().t_inv_b;
        assert!((tb - v(&[1.0, 0.0])).amax() < 1e-12);
        assert!(dt_hess_2(&a, &v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn dt_hess_2_reducible_and_rank_zero() {
        let id = Matrix::identity(2, 2) * 2.0;
        let cert = dt_hess_2(&id, &v(&[1.0, 1.0])).unwrap().into_certificate().unwrap();
        assert!(cert.passes(1e-12));
        let tri = from_rows(&[&[1.0, 3.0], &[0.0, 2.0]]);
        let cert = dt_hess_2(&tri, &v(&[1.0, 0.0])).unwrap().into_certificate().unwrap();
        assert!(cert.passes(1e-12) && cert.min_entry_t >= 0.0);
    }

    #[test]
    fn eigvec_b_transform_examples() {
        let ones = Matrix::from_element(2, 2, 1.0);
        let b = v(&[1.0, 1.0]);
        let t = eigvec_b_transform(&ones, &b).unwrap();
        let h = checked_inverse(&t).unwrap() * &ones * &t;
        assert!(min_entry(&t) >= 0.0 && min_entry(&h) >= -1e-12);
        assert!((checked_inverse(&t).unwrap() * &b - v(&[1.0, 0.0])).amax() < 1e-12);
        assert!(matches!(
            eigvec_b_transform(&(Matrix::identity(2, 2) * 3.0), &b),
            Err(Error::Reducible)
        ));
        let a = from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let t = eigvec_b_transform(&a, &b).unwrap();
        let h = checked_inverse(&t).unwrap() * &a * &t;
        assert!(min_entry(&t) >= 0.0 && min_entry(&h) >= -1e-12);
        assert!(matches!(
            eigvec_b_transform(&a, &v(&[3.0, 1.0])),
            Err(Error::NotPerronEigenvector { .. })
        ));
    }

    #[test]
    fn eigvec_b_transform_handles_jordan_chains() {
        // I + 11ᵀ + xyᵀ/2 with x, y ⟂ 1 and x ⟂ y: spectrum {4, 1, 1}, one
        // Jordan block at 1.
        let a = from_rows(&[&[2.5, 1.5, 0.0], &[0.5, 1.5, 2.0], &[1.0, 1.0, 2.0]]);
        let spec = sorted_spectrum(&a, CLUSTER_REL).unwrap();
        assert!(spec.is_real_nonnegative(1e-6), "{:?}", spec.eigenvalues);
        let b = perron_pair(&a).unwrap().right_vector;
        let t = eigvec_b_transform(&a, &b).unwrap();
        let ti = checked_inverse(&t).unwrap();
        let h = &ti * &a * &t;
        assert!(min_entry(&t) >= 0.0, "{t}");
        assert!(min_entry(&h) >= -1e-9, "{h}");
        assert!((&ti * &b - v(&[1.0, 0.0, 0.0])).amax() < 1e-9);
    }

    #[test]
    fn diag_commuting_examples() {
        let a = from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let t = diag_commuting_transform(&a, &v(&[3.0, 1.0])).unwrap();
        assert!(inf_norm(&(&t - from_rows(&[&[3.0, 1.0], &[1.0, 3.0]]))) < 1e-12, "{t}");
        let d = Matrix::from_diagonal(&v(&[1.0, 2.0]));
        assert!(matches!(diag_commuting_transform(&d, &v(&[1.0, 1.0])), Err(Error::Hypothesis(_))));
        assert!(matches!(diag_commuting_transform(&a, &v(&[1.0, 1.0])), Err(Error::Hypothesis(_))));
        let jordan = from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(matches!(
            diag_commuting_transform(&jordan, &v(&[1.0, 1.0])),
            Err(Error::UnsupportedStructure(_))
        ));
    }

    #[test]
    fn diag_commuting_with_complex_spectrum() {
        let a = from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        let b = v(&[1.0, 2.0, 0.5]);
        let t = diag_commuting_transform(&a, &b).unwrap();
        assert!((checked_inverse(&t).unwrap() * &b - v(&[1.0, 0.0, 0.0])).amax() < 1e-10);
    }
}
