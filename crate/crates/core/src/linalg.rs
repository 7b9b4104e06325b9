//! Classification and spectral utilities for nonnegative and Metzler matrices.

use itertools::Itertools;
use nalgebra::{Complex, DMatrix, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    ensure_square, is_metzler, is_nonnegative, min_entry, min_off_diagonal, permutation_matrix,
    scale, tau_zero, Matrix, Vector, CLUSTER_REL,
};

pub type C64 = Complex<f64>;

/// Relative singular value threshold used for numerical rank.
pub const RANK_REL: f64 = 1e-8;
/// Largest dimension accepted by the exhaustive permutation search.
pub const PERMUTATION_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub is_nonnegative: bool,
    pub is_metzler: bool,
    pub is_upper_hessenberg: bool,
    pub is_irreducible: bool,
    pub is_primitive: bool,
    /// `zero_pattern[i][j]` is true iff `|a_ij| <= tolerance_used`.
    pub zero_pattern: Vec<Vec<bool>>,
    pub tolerance_used: f64,
}

/// Group of numerically coincident eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub value: C64,
    /// Positions in [`SortedSpectrum::eigenvalues`].
    pub members: Vec<usize>,
    pub geometric: usize,
}

impl Cluster {
    pub fn algebraic(&self) -> usize {
        self.members.len()
    }

    pub fn is_real(&self) -> bool {
        self.value.im == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortedSpectrum {
    pub eigenvalues: Vec<C64>,
    /// Clusters in order of first appearance in `eigenvalues`.
    pub clusters: Vec<Cluster>,
    pub geometric_multiplicities: Vec<usize>,
    pub cluster_tolerance: f64,
}

impl SortedSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |z| z.norm())
    }

    pub fn is_real(&self) -> bool {
        self.eigenvalues.iter().all(|z| z.im == 0.0)
    }

    /// True if every eigenvalue is real and `>= -tol`.
    pub fn is_real_nonnegative(&self, tol: f64) -> bool {
        self.eigenvalues.iter().all(|z| z.im == 0.0 && z.re >= -tol)
    }

    pub fn cluster_of(&self, index: usize) -> &Cluster {
        self.clusters
            .iter()
            .find(|c| c.members.contains(&index))
            .expect("every eigenvalue belongs to a cluster")
    }

    /// Largest real eigenvalue (the Perron root for nonnegative matrices).
    pub fn rightmost_real(&self) -> Option<f64> {
        self.eigenvalues
            .iter()
            .filter(|z| z.im == 0.0)
            .map(|z| z.re)
            .fold(None, |m, x| Some(m.map_or(x, |m: f64| m.max(x))))
    }

    pub fn smallest_real(&self) -> Option<f64> {
        self.eigenvalues
            .iter()
            .filter(|z| z.im == 0.0)
            .map(|z| z.re)
            .fold(None, |m, x| Some(m.map_or(x, |m: f64| m.min(x))))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerronData {
    pub perron_root: f64,
    pub right_vector: Vector,
    pub left_vector: Vector,
    pub is_simple: bool,
}

fn strongly_connected(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let e = if forward { edge(u, v) } else { edge(v, u) };
                if u != v && !seen[v] && e {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Irreducibility of the thresholded off-diagonal pattern.
pub fn is_irreducible(a: &Matrix, tau: f64) -> bool {
    let n = a.nrows();
    n == 1 || strongly_connected(n, |i, j| a[(i, j)].abs() > tau)
}

pub fn classify(a: &Matrix, tau: f64) -> Result<ClassReport> {
    let n = ensure_square(a)?;
    let is_nonnegative = is_nonnegative(a, tau);
    let is_metzler = is_metzler(a, tau);
    let is_upper_hessenberg = crate::matrix::hessenberg_violation(a) <= tau;
    let is_irreducible = is_irreducible(a, tau);
    let is_primitive = is_nonnegative
        && is_irreducible
        && if n == 1 {
            a[(0, 0)] > tau
        } else {
            let spec = sorted_spectrum(a, CLUSTER_REL)?;
            let l1 = spec.eigenvalues[0];
            let l2 = spec.eigenvalues[1];
            l1.im == 0.0 && l1.re > l2.norm() + tau
        };
    let zero_pattern = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs() <= tau).collect())
        .collect();
    Ok(ClassReport {
        is_nonnegative,
        is_metzler,
        is_upper_hessenberg,
        is_irreducible,
        is_primitive,
        zero_pattern,
        tolerance_used: tau,
    })
}

/// Coefficients `c_0..c_n` of `det(λI − A)` (monic) via Faddeev–LeVerrier.
pub fn characteristic_polynomial(a: &Matrix) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut m = Matrix::zeros(n, n);
    for k in 1..=n {
        m = a * &m + Matrix::identity(n, n) * coeffs[n + 1 - k];
        let am = a * &m;
        coeffs[n - k] = -am.trace() / k as f64;
    }
    coeffs
}

fn poly_eval(coeffs: &[f64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Raw eigenvalues from a real Schur decomposition, polished by one Newton
/// step on the characteristic polynomial for `n <= 4`.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<C64>> {
    let n = ensure_square(a)?;
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    let mut eig: Vec<C64> = schur.complex_eigenvalues().iter().copied().collect();
    if eig.len() != n || eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen("incomplete or non-finite spectrum".into()));
    }
    if n <= 4 {
        let coeffs = characteristic_polynomial(a);
        for z in eig.iter_mut() {
            let (p, dp) = poly_eval(&coeffs, *z);
            if dp.norm() > 0.0 {
                let cand = *z - p / dp;
                let (pc, _) = poly_eval(&coeffs, cand);
                if cand.re.is_finite() && cand.im.is_finite() && pc.norm() < p.norm() {
                    *z = if z.im == 0.0 { C64::new(cand.re, 0.0) } else { cand };
                }
            }
        }
    }
    Ok(eig)
}

/// Sorts eigenvalues in canonical order: descending modulus, then
/// decreasing real part, then positive imaginary part first.
pub fn sort_canonical(eig: &mut [C64], tie_tol: f64) {
    eig.sort_by(|x, y| {
        y.norm()
            .total_cmp(&x.norm())
            .then(y.re.total_cmp(&x.re))
            .then(y.im.total_cmp(&x.im))
    });
    let mut start = 0;
    while start < eig.len() {
        let lead = eig[start].norm();
        let mut end = start + 1;
        while end < eig.len() && lead - eig[end].norm() <= tie_tol {
            end += 1;
        }
        eig[start..end].sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
        start = end;
    }
}

pub fn sorted_spectrum(a: &Matrix, cluster_tol: f64) -> Result<SortedSpectrum> {
    let mut eig = eigenvalues(a)?;
    let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let abs_tol = cluster_tol * rho.max(1.0);
    // Imaginary parts below the cluster tolerance are numerical noise.
    for z in eig.iter_mut() {
        if z.im.abs() <= abs_tol {
            z.im = 0.0;
        }
    }
    sort_canonical(&mut eig, abs_tol);

    // Single-linkage clustering.
    let n = eig.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (eig[i] - eig[j]).norm() <= abs_tol {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                label[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut root_of: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        match root_of.iter().position(|&x| x == r) {
            Some(k) => clusters[k].members.push(i),
            None => {
                root_of.push(r);
                clusters.push(Cluster {
                    value: C64::new(0.0, 0.0),
                    members: vec![i],
                    geometric: 0,
                });
            }
        }
    }
    for c in clusters.iter_mut() {
        let sum: C64 = c.members.iter().map(|&i| eig[i]).sum();
        let mut v = sum / c.members.len() as f64;
        if c.members.iter().all(|&i| eig[i].im == 0.0) {
            v.im = 0.0;
        }
        c.value = v;
        c.geometric = geometric_multiplicity(a, v, RANK_REL)?.min(c.members.len()).max(1);
    }
    let geometric_multiplicities = clusters.iter().map(|c| c.geometric).collect();
    Ok(SortedSpectrum {
        eigenvalues: eig,
        clusters,
        geometric_multiplicities,
        cluster_tolerance: cluster_tol,
    })
}

fn nullity_from_singular_values(sv: impl Iterator<Item = f64> + Clone, n: usize, rank_tol: f64) -> usize {
    let max = sv.clone().fold(0.0, f64::max);
    if max == 0.0 {
        return n;
    }
    n - sv.filter(|&s| s > rank_tol * max).count()
}

/// `n − rank(A − λI)`, ranks counted relative to the largest singular value.
pub fn geometric_multiplicity(a: &Matrix, lambda: C64, rank_tol: f64) -> Result<usize> {
    let n = ensure_square(a)?;
    if lambda.im == 0.0 {
        let m = a - Matrix::identity(n, n) * lambda.re;
        let sv = m.singular_values();
        Ok(nullity_from_singular_values(sv.iter().copied(), n, rank_tol))
    } else {
        let m = DMatrix::<C64>::from_fn(n, n, |i, j| {
            C64::new(a[(i, j)], 0.0) - if i == j { lambda } else { C64::new(0.0, 0.0) }
        });
        let sv = m.singular_values();
        Ok(nullity_from_singular_values(sv.iter().copied(), n, rank_tol))
    }
}

/// Orthonormal basis of the numerical null space of a real matrix, holding
/// the `k` right singular vectors with the smallest singular values.
pub fn smallest_right_singular_vectors(m: &Matrix, k: usize) -> Matrix {
    let n = m.ncols();
    // Pad to square so that the SVD yields a full set of right vectors.
    let sq = if m.nrows() < n {
        let mut p = Matrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut out = Matrix::zeros(n, k);
    for (c, &i) in idx.iter().take(k).enumerate() {
        out.set_column(c, &vt.row(i).transpose());
    }
    out
}

fn normalize_nonnegative(mut v: Vector, tau: f64) -> Vector {
    if v.sum() < 0.0 {
        v = -v;
    }
    let mx = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for x in v.iter_mut() {
        if *x < 0.0 && *x >= -tau * mx.max(1e-300) {
            *x = 0.0;
        }
    }
    let s = v.sum();
    v / s
}

fn perron_vector(a: &Matrix, root: f64, simple: bool) -> Vector {
    let n = a.nrows();
    if simple {
        let m = a - Matrix::identity(n, n) * root;
        let v = smallest_right_singular_vectors(&m, 1).column(0).into_owned();
        return normalize_nonnegative(v, 1e-9);
    }
    // Shifted power iteration from the positive vector converges to a
    // nonnegative eigenvector of the (multiple) Perron root.
    let b = a + Matrix::identity(n, n) * (root + 1.0);
    let mut x = Vector::from_element(n, 1.0 / n as f64);
    for _ in 0..20_000 {
        let y = &b * &x;
        let y = &y / y.sum();
        let diff = (&y - &x).amax();
        x = y;
        if diff <= 1e-15 {
            break;
        }
    }
    normalize_nonnegative(x, 1e-9)
}

pub fn perron_pair(a: &Matrix) -> Result<PerronData> {
    let n = ensure_square(a)?;
    let tau = tau_zero(a);
    if !is_nonnegative(a, tau) {
        return Err(Error::NotNonnegative(min_entry(a)));
    }
    let spec = sorted_spectrum(a, CLUSTER_REL)?;
    let root = spec.rightmost_real().unwrap_or(0.0).max(0.0);
    let is_simple = geometric_multiplicity(a, C64::new(root, 0.0), RANK_REL)? == 1;
    if n == 1 {
        let one = Vector::from_element(1, 1.0);
        return Ok(PerronData {
            perron_root: a[(0, 0)],
            right_vector: one.clone(),
            left_vector: one,
            is_simple: true,
        });
    }
    let right_vector = perron_vector(a, root, is_simple);
    let left_vector = perron_vector(&a.transpose(), root, is_simple);
    Ok(PerronData {
        perron_root: root,
        right_vector,
        left_vector,
        is_simple,
    })
}

/// `(A + μI, μ)` with the smallest `μ >= 0` making the result nonnegative.
pub fn metzler_shift(a: &Matrix) -> Result<(Matrix, f64)> {
    let n = ensure_square(a)?;
    if n > 1 && min_off_diagonal(a) < 0.0 {
        return Err(Error::NotMetzler(min_off_diagonal(a)));
    }
    let mu = (0..n).map(|i| -a[(i, i)]).fold(0.0, f64::max);
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] = (a[(i, i)] + mu).max(0.0);
    }
    Ok((shifted, mu))
}

/// Lexicographically first permutation `p` with `A[p_i, p_j]` upper
/// Hessenberg on the thresholded pattern.
pub fn hessenberg_permutation(a: &Matrix, tau: f64) -> Result<Option<Vec<usize>>> {
    let n = ensure_square(a)?;
    if n > PERMUTATION_LIMIT {
        return Err(Error::UnsupportedDimension {
            got: n,
            what: "permutation search is limited to n <= 8",
        });
    }
    Ok((0..n).permutations(n).find(|p| {
        (0..n).all(|j| ((j + 2)..n).all(|i| a[(p[i], p[j])].abs() <= tau))
    }))
}

pub fn permutation_to_hessenberg(a: &Matrix, tau: f64) -> Result<Option<Matrix>> {
    Ok(hessenberg_permutation(a, tau)?.map(|p| permutation_matrix(&p)))
}

/// Spectral scale `max(1, ‖A‖∞)` used by relative tolerances.
pub fn spectral_scale(a: &Matrix) -> f64 {
    scale(a)
}

/// Minimum over permutations of the largest distance between matched
/// eigenvalues, relative to `max(1, ρ)`.
pub fn spectrum_distance(x: &[C64], y: &[C64]) -> f64 {
    if x.len() != y.len() {
        return f64::INFINITY;
    }
    let rho = x.iter().chain(y).map(|z| z.norm()).fold(1.0, f64::max);
    let n = x.len();
    if n <= 6 {
        (0..n)
            .permutations(n)
            .map(|p| (0..n).map(|i| (x[i] - y[p[i]]).norm()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min)
            / rho
    } else {
        // Greedy matching for larger spectra.
        let mut used = vec![false; n];
        let mut worst: f64 = 0.0;
        for xi in x {
            let (k, d) = (0..n)
                .filter(|&k| !used[k])
                .map(|k| (k, (xi - y[k]).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("unused eigenvalue");
            used[k] = true;
            worst = worst.max(d);
        }
        worst / rho
    }
}
