//! Fixtures, seeded generators and independent oracles shared by the
//! integration tests. Oracles use nalgebra's own decompositions so they do
//! not share code paths with the library under test.

#![allow(dead_code)]

use hessform::{Matrix, Vector};
use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

pub fn rows(r: &[&[f64]]) -> Matrix {
    hessform::matrix::from_rows(r)
}

/// Reducible 3×3 counterexample to DT controller-Hessenberg forms.
pub fn counterexample() -> Matrix {
    rows(&[&[0.0, 0.0, 14.0], &[0.0, 6.0, 0.0], &[15.0, 4.0, 6.0]])
}

pub fn counterexample_input() -> Vector {
    v(&[1.0, 1.0, 0.0])
}

/// Reference projected iterates `Π̂(Aᵏb)`, `k = 0..9`, for the counterexample.
pub const REFERENCE_ITERATES: [(f64, f64); 10] = [
    (5.0000000e-01, 0.0000000e+00),
    (2.4000000e-01, 7.6000000e-01),
    (8.1818182e-02, 3.1363636e-01),
    (3.0379747e-02, 6.9789030e-01),
    (9.9401749e-03, 4.5724804e-01),
    (3.4601522e-03, 6.2515018e-01),
    (1.1464765e-03, 5.1553759e-01),
    (3.9146805e-04, 5.8886733e-01),
    (1.3090841e-04, 5.4039031e-01),
    (4.4372480e-05, 5.7255958e-01),
];

pub const REFERENCE_LIMIT: (f64, f64) = (0.0, 0.55973);

/// Eigenvalues from nalgebra's real Schur form.
pub fn oracle_eigenvalues(a: &Matrix) -> Vec<Complex<f64>> {
    a.clone().complex_eigenvalues().iter().copied().collect()
}

/// Largest distance of an eigenvalue of `x` to its greedy partner in `y`,
/// relative to `max(1, ρ)`.
pub fn spectrum_gap(x: &[Complex<f64>], y: &[Complex<f64>]) -> f64 {
    let mut rest: Vec<Complex<f64>> = y.to_vec();
    let rho = x.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut worst: f64 = 0.0;
    for z in x {
        let (i, d) = rest
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (z - w).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("spectra have equal length");
        worst = worst.max(d);
        rest.swap_remove(i);
    }
    worst / rho
}

/// Real eigenvalues sorted in decreasing order, or `None` if any is complex.
pub fn real_spectrum(a: &Matrix) -> Option<Vec<f64>> {
    let scale = a.amax().max(1.0);
    let eig = oracle_eigenvalues(a);
    if eig.iter().any(|z| z.im.abs() > 1e-9 * scale) {
        return None;
    }
    let mut re: Vec<f64> = eig.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    Some(re)
}

/// `c(uvᵀ − sI)` with `u, v > 0`, `s ∈ [0, min uᵢvᵢ]`, `c > 0`.
pub fn rank_one_shift(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let u = Vector::from_fn(n, |_, _| rng.random_range(0.1..2.0));
    let w = Vector::from_fn(n, |_, _| rng.random_range(0.1..2.0));
    let m = (0..n).map(|i| u[i] * w[i]).fold(f64::INFINITY, f64::min);
    let s = rng.random_range(0.0..=m);
    let c = rng.random_range(0.1..3.0);
    (&u * w.transpose() - Matrix::identity(n, n) * s) * c
}

/// `D(S − λ_min I)D⁻¹` with `S` symmetric positive; nonnegative, irreducible,
/// spectrum real and nonnegative. Returns the matrix and its Perron vector.
pub fn real_nonnegative_spectrum(rng: &mut ChaCha8Rng, n: usize) -> (Matrix, Vector) {
    let g = Matrix::from_fn(n, n, |_, _| rng.random_range(0.05..1.0));
    let s = &g + g.transpose();
    let eig = s.clone().symmetric_eigen();
    let (imax, _) = eig.eigenvalues.argmax();
    let lmin = eig.eigenvalues.min();
    let d = Vector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
    let a = Matrix::from_fn(n, n, |i, j| {
        let x = s[(i, j)] - if i == j { lmin } else { 0.0 };
        (d[i] * x / d[j]).max(0.0)
    });
    let mut p = eig.eigenvectors.column(imax).component_mul(&d);
    if p.sum() < 0.0 {
        p = -p;
    }
    (a, p)
}

/// Nonnegative 3×3 matrix with real spectrum and a simple negative second
/// eigenvalue, by rejection sampling.
pub fn simple_negative_lambda2(rng: &mut ChaCha8Rng) -> Matrix {
    loop {
        let a = Matrix::from_fn(3, 3, |_, _| {
            if rng.random_bool(0.8) {
                rng.random_range(0.0..1.0)
            } else {
                0.0
            }
        });
        let Some(re) = real_spectrum(&a) else { continue };
        let rho = re[0].max(1e-12);
        if re[1] < -1e-3 * rho && re[1] - re[2] > 1e-3 * rho {
            return a;
        }
    }
}

/// Off-diagonal entries uniform in `[−5, 5]` clipped at zero, diagonal uniform.
pub fn metzler(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| {
        let x: f64 = rng.random_range(-5.0..5.0);
        if i == j {
            x
        } else {
            x.max(0.0)
        }
    })
}

pub fn positive(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.random_range(0.05..1.0))
}

pub fn nonneg_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(0.0..1.0))
}

/// Grid search for `p` with `T = (b | p)` nonsingular and `T⁻¹AT ≥ 0`.
pub fn grid_feasible_2x2(a: &Matrix, b: &Vector, steps: usize) -> bool {
    let tol = 1e-12 * a.amax().max(1.0);
    for i in 0..steps {
        for j in 0..steps {
            if i == 0 && j == 0 {
                continue;
            }
            let p = v(&[i as f64 / (steps - 1) as f64, j as f64 / (steps - 1) as f64]);
            let det = b[0] * p[1] - b[1] * p[0];
            if det.abs() < 1e-9 * b.norm() * p.norm() {
                continue;
            }
            // Closed-form inverse of the 2×2 frame.
            let ti = rows(&[&[p[1], -p[0]], &[-b[1], b[0]]]) / det;
            let t = Matrix::from_columns(&[b.clone(), p]);
            let h = ti * a * t;
            if h.min() >= -tol {
                return true;
            }
        }
    }
    false
}

/// Perron vector of a 2×2 nonnegative matrix with a positive off-diagonal.
pub fn perron_2x2(a: &Matrix) -> (f64, Vector) {
    let tr = a.trace();
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let l1 = 0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt());
    let x = if a[(0, 1)] > 0.0 {
        v(&[a[(0, 1)], l1 - a[(0, 0)]])
    } else {
        v(&[l1 - a[(1, 1)], a[(1, 0)]])
    };
    let s = x.sum();
    (l1, x / s)
}

pub fn unit(n: usize, i: usize) -> Vector {
    Vector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })
}

/// `‖T⁻¹AT − A‖∞ / max(1, ‖A‖∞)` via nalgebra's LU.
pub fn commutation_residual(a: &Matrix, t: &Matrix) -> f64 {
    let ti = t.clone().lu().try_inverse().expect("T must be invertible");
    (ti * a * t - a).amax() / a.amax().max(1.0)
}
