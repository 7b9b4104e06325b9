//! Real Jordan-like forms for small matrices.
//!
//! Real eigenvalue clusters become Jordan blocks (ones on the superdiagonal)
//! ordered by decreasing eigenvalue; complex pairs `α ± iβ` become rotation
//! blocks `[[α, −β], [β, α]]` placed after all real blocks.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{smallest_right_singular_vectors, sorted_spectrum, Cluster, C64};
use crate::matrix::{condition, ensure_square, scale, Matrix, Vector};

/// Eigenvalues closer than this multiple of the cluster tolerance, yet not
/// merged, make the block structure ambiguous.
const AMBIGUITY_FACTOR: f64 = 10.0;
const JORDAN_RANK_REL: f64 = 1e-6;
const ILL_CONDITIONED: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Jordan { eigenvalue: f64, size: usize },
    Rotation { re: f64, im: f64 },
}

impl Block {
    pub fn size(&self) -> usize {
        match self {
            Block::Jordan { size, .. } => *size,
            Block::Rotation { .. } => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JordanForm {
    pub v: Matrix,
    pub j: Matrix,
    pub blocks: Vec<Block>,
    pub condition: f64,
    pub warning: Option<String>,
}

impl JordanForm {
    /// `‖AV − VJ‖∞`.
    pub fn residual(&self, a: &Matrix) -> f64 {
        crate::matrix::inf_norm(&(a * &self.v - &self.v * &self.j))
    }
}

fn orthonormal_columns(m: &Matrix, rel: f64) -> Matrix {
    if m.ncols() == 0 {
        return Matrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested left singular vectors");
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| max > 0.0 && svd.singular_values[i] > rel * max)
        .collect();
    Matrix::from_fn(m.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

fn hstack(parts: &[&Matrix], rows: usize) -> Matrix {
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        out.view_mut((0, c), (rows, p.ncols())).copy_from(p);
        c += p.ncols();
    }
    out
}

fn numerical_rank(m: &Matrix, abs_tol: f64) -> usize {
    m.clone()
        .singular_values()
        .iter()
        .filter(|&&s| s > abs_tol)
        .count()
}

/// Jordan chains `[N^{L−1}h, …, Nh, h]` for one real cluster.
fn real_cluster_chains(a: &Matrix, lambda: f64, m: usize) -> Vec<Vec<Vector>> {
    let n = a.nrows();
    let nmat = a - Matrix::identity(n, n) * lambda;
    if m == 1 {
        let v = smallest_right_singular_vectors(&nmat, 1).column(0).into_owned();
        return vec![vec![v]];
    }
    // Orthonormal basis of the generalized eigenspace and the restricted
    // (numerically nilpotent) operator.
    let g = smallest_right_singular_vectors(&nmat.pow(m as u32), m);
    let ng = g.transpose() * &nmat * &g;
    let s = scale(a);
    let mut d = vec![0usize; m + 2];
    for k in 1..=m {
        let r = numerical_rank(&ng.pow(k as u32), JORDAN_RANK_REL * s.powi(k as i32));
        d[k] = (m - r).max(d[k - 1]);
    }
    d[m] = m;
    d[m + 1] = m;
    for k in (1..m).rev() {
        d[k] = d[k].min(d[k + 1]);
    }

    let kernel = |k: usize| -> Matrix {
        if k == 0 {
            Matrix::zeros(m, 0)
        } else {
            smallest_right_singular_vectors(&ng.pow(k as u32), d[k])
        }
    };
    // heads: (level, coordinate vector)
    let mut heads: Vec<(usize, Vector)> = Vec::new();
    for k in (1..=m).rev() {
        let new_here = (d[k] - d[k - 1]).saturating_sub(d[k + 1] - d[k]);
        if new_here == 0 {
            continue;
        }
        let below = kernel(k - 1);
        let carried: Vec<Vector> = heads
            .iter()
            .filter(|(lvl, _)| *lvl > k)
            .map(|(lvl, h)| ng.pow((lvl - k) as u32) * h)
            .collect();
        let carried = if carried.is_empty() {
            Matrix::zeros(m, 0)
        } else {
            Matrix::from_columns(&carried)
        };
        let span = orthonormal_columns(&hstack(&[&below, &carried], m), 1e-10);
        let ker = kernel(k);
        let proj = &ker - &span * (span.transpose() * &ker);
        // Heads are combinations of the kernel basis so they stay in ker_k.
        let svd = proj.svd(false, true);
        let vt = svd.v_t.expect("requested right singular vectors");
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        for &i in idx.iter().take(new_here) {
            let h = &ker * vt.row(i).transpose();
            let norm = h.norm();
            heads.push((k, h / norm));
        }
    }
    heads
        .into_iter()
        .map(|(level, h)| {
            let top = &g * h;
            let mut chain = vec![top];
            for _ in 1..level {
                let next = &nmat * chain.last().expect("nonempty chain");
                chain.push(next);
            }
            chain.reverse();
            chain
        })
        .collect()
}

fn complex_null_vectors(a: &Matrix, lambda: C64, k: usize) -> Vec<(Vector, Vector)> {
    let n = a.nrows();
    let m = DMatrix::<C64>::from_fn(n, n, |i, j| {
        C64::new(a[(i, j)], 0.0) - if i == j { lambda } else { C64::new(0.0, 0.0) }
    });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    idx.into_iter()
        .take(k)
        .map(|i| {
            let x: Vec<C64> = vt.row(i).iter().map(|z| z.conj()).collect();
            let u: Vector = Vector::from_iterator(n, x.iter().map(|z| z.re));
            let w: Vector = Vector::from_iterator(n, x.iter().map(|z| z.im));
            // Rotate the phase so that Re and Im parts are orthogonal.
            let theta = 0.5 * (2.0 * u.dot(&w)).atan2(u.dot(&u) - w.dot(&w));
            let (c, s) = (theta.cos(), theta.sin());
            let u2 = &u * c + &w * s;
            let w2 = &w * c - &u * s;
            (u2, w2)
        })
        .collect()
}

pub fn jordan_like_form(a: &Matrix, cluster_tol: f64) -> Result<JordanForm> {
    let n = ensure_square(a)?;
    if n > 4 {
        return Err(Error::UnsupportedDimension {
            got: n,
            what: "Jordan-like form is limited to n <= 4",
        });
    }
    let spec = sorted_spectrum(a, cluster_tol)?;
    let abs_tol = cluster_tol * spec.spectral_radius().max(1.0);
    for (ci, x) in spec.clusters.iter().enumerate() {
        for y in spec.clusters.iter().skip(ci + 1) {
            for &i in &x.members {
                for &j in &y.members {
                    let gap = (spec.eigenvalues[i] - spec.eigenvalues[j]).norm();
                    if gap < AMBIGUITY_FACTOR * abs_tol {
                        return Err(Error::AmbiguousCluster {
                            gap,
                            tol: abs_tol,
                            upper: AMBIGUITY_FACTOR * abs_tol,
                        });
                    }
                }
            }
        }
    }

    let mut real: Vec<&Cluster> = spec.clusters.iter().filter(|c| c.is_real()).collect();
    real.sort_by(|x, y| y.value.re.total_cmp(&x.value.re));
    let complex: Vec<&Cluster> = spec
        .clusters
        .iter()
        .filter(|c| !c.is_real() && c.value.im > 0.0)
        .collect();

    let mut columns: Vec<Vector> = Vec::with_capacity(n);
    let mut blocks = Vec::new();
    for c in real {
        let mut chains = real_cluster_chains(a, c.value.re, c.algebraic());
        chains.sort_by_key(|ch| std::cmp::Reverse(ch.len()));
        for ch in chains {
            blocks.push(Block::Jordan {
                eigenvalue: c.value.re,
                size: ch.len(),
            });
            columns.extend(ch);
        }
    }
    for c in complex {
        let m = c.algebraic();
        if c.geometric < m {
            return Err(Error::UnsupportedStructure(format!(
                "defective complex eigenvalue {} (algebraic {m}, geometric {})",
                c.value, c.geometric
            )));
        }
        for (u, w) in complex_null_vectors(a, c.value, m) {
            blocks.push(Block::Rotation {
                re: c.value.re,
                im: c.value.im,
            });
            columns.push(w);
            columns.push(u);
        }
    }
    if columns.len() != n {
        return Err(Error::Defect(format!(
            "assembled {} basis vectors for dimension {n}",
            columns.len()
        )));
    }
    let v = Matrix::from_columns(&columns);
    let mut j = Matrix::zeros(n, n);
    let mut at = 0;
    for b in &blocks {
        match *b {
            Block::Jordan { eigenvalue, size } => {
                for k in 0..size {
                    j[(at + k, at + k)] = eigenvalue;
                    if k + 1 < size {
                        j[(at + k, at + k + 1)] = 1.0;
                    }
                }
            }
            Block::Rotation { re, im } => {
                j[(at, at)] = re;
                j[(at + 1, at + 1)] = re;
                j[(at, at + 1)] = -im;
                j[(at + 1, at)] = im;
            }
        }
        at += b.size();
    }
    let cond = condition(&v);
    let warning = (cond > ILL_CONDITIONED)
        .then(|| format!("basis is ill-conditioned (condition estimate {cond:e})"));
    Ok(JordanForm {
        v,
        j,
        blocks,
        condition: cond,
        warning,
    })
}
