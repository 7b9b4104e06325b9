//! Alternating-projection search for Hessenberg forms beyond the
//! characterized dimensions, and the seeded experiment harness.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constructions::{
    certify, metzler_hess_3, metzler_hess_4, nonneg_hess_3, rank_one_shift_detect, sign_violation,
    verify_certificate, Mode, Outcome, SimilarityCertificate,
};
use crate::error::{Error, Result};
use crate::matrix::{
    condition, ensure_finite, ensure_square, hessenberg_violation, is_metzler, is_nonnegative,
    min_entry, min_off_diagonal, scale, solve, tau_zero, Matrix, Vector,
};

/// Proximal weight of the `T` update, relative to `‖A‖²`.
const REGULARIZATION: f64 = 1e-3;
const CHECK_EVERY: usize = 10;
const KICK_CONDITION: f64 = 1e8;
const KICK: f64 = 0.2;
const GOLDEN_EVALUATIONS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltProjConfig {
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    pub step_tolerance: f64,
    pub feasibility_tol: f64,
    /// Restrict `T` to `blkdiag(1, T₂)`.
    pub block_recursive: bool,
}

impl Default for AltProjConfig {
    fn default() -> Self {
        Self {
            max_iters: 400,
            restarts: 8,
            seed: 0,
            step_tolerance: 1e-13,
            feasibility_tol: 1e-8,
            block_recursive: false,
        }
    }
}

impl AltProjConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::Hypothesis("iteration and restart counts must be positive".into()));
        }
        if !(self.step_tolerance > 0.0 && self.feasibility_tol > 0.0) {
            return Err(Error::Hypothesis("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub index: usize,
    pub method: String,
    pub iterations: usize,
    pub final_violation: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub attempts: usize,
    pub successes: usize,
    pub best_certificate: Option<SimilarityCertificate>,
    pub best_violation: f64,
    pub log: Vec<AttemptLog>,
    /// Samples where the exact construction succeeded but the heuristic did not.
    pub heuristic_gap: Option<usize>,
    /// Samples an exact test proved infeasible.
    pub exact_obstructions: usize,
}

impl SearchReport {
    /// CSV with one row per attempt.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,method,iterations,final_violation,success\n");
        for l in &self.log {
            let _ = writeln!(
                out,
                "{},{},{},{:.8e},{}",
                l.index, l.method, l.iterations, l.final_violation, l.success
            );
        }
        out
    }

    fn from_attempts(log: Vec<AttemptLog>, certs: Vec<Option<SimilarityCertificate>>) -> Self {
        let successes = log.iter().filter(|l| l.success).count();
        let best_violation = log.iter().map(|l| l.final_violation).fold(f64::INFINITY, f64::min);
        let best_certificate = certs
            .into_iter()
            .flatten()
            .min_by(|a, b| a.residual_similarity.total_cmp(&b.residual_similarity));
        Self {
            attempts: log.len(),
            successes,
            best_certificate,
            best_violation,
            log,
            heuristic_gap: None,
            exact_obstructions: 0,
        }
    }
}

/// Stream seed for `(seed, index)`.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, index as u64))
}

/// Largest structural violation of `H`, relative to `scale`.
fn violation(h: &Matrix, mode: Mode, scale: f64) -> f64 {
    hessenberg_violation(h).max(-sign_violation(h, mode)).max(0.0) / scale
}

/// Hessenberg pattern with the mode's sign constraints; the diagonal may drop
/// to `-slack` in nonnegative mode.
fn project_structure(h: &Matrix, mode: Mode, slack: f64) -> Matrix {
    Matrix::from_fn(h.nrows(), h.ncols(), |i, j| {
        let x = h[(i, j)];
        if i > j + 1 {
            0.0
        } else if i == j {
            match mode {
                Mode::Nonneg => x.max(-slack),
                Mode::Metzler => x,
            }
        } else {
            x.max(0.0)
        }
    })
}

fn normalize_columns(t: &mut Matrix, rng: &mut ChaCha8Rng, block: bool) {
    let n = t.nrows();
    for j in 0..n {
        let s: f64 = t.column(j).sum();
        if s <= 1e-300 {
            for i in 0..n {
                t[(i, j)] = rng.random::<f64>();
            }
            if block {
                t[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
            }
        }
        let s: f64 = t.column(j).sum();
        t.column_mut(j).unscale_mut(s);
    }
}

/// `T = blkdiag(1, T₂)` with the first column of `T₂` along the coupling
/// column `A[1.., 0]`, so the first column of `T⁻¹AT` is already Hessenberg.
fn impose_block(t: &mut Matrix, a: &Matrix) {
    let n = t.nrows();
    for k in 0..n {
        t[(0, k)] = 0.0;
        t[(k, 0)] = 0.0;
    }
    t[(0, 0)] = 1.0;
    let coupling: f64 = (1..n).map(|i| a[(i, 0)].max(0.0)).sum();
    if n > 2 && coupling > 0.0 {
        for i in 1..n {
            t[(i, 1)] = a[(i, 0)].max(0.0) / coupling;
        }
    }
}

/// Least-squares update `argmin ‖AT − TH‖² + η‖T − T₀‖²` over `T`.
fn coupling_update(a: &Matrix, h: &Matrix, t0: &Matrix) -> Option<Matrix> {
    let n = a.nrows();
    let id = Matrix::identity(n, n);
    let l = id.kronecker(a) - h.transpose().kronecker(&id);
    let nn = n * n;
    let eta = REGULARIZATION * scale(a).powi(2);
    let lhs = l.transpose() * &l + DMatrix::identity(nn, nn) * eta;
    let rhs = Vector::from_column_slice(t0.as_slice()) * eta;
    let x = solve(&lhs, &rhs)?;
    Some(Matrix::from_column_slice(n, n, x.as_slice()))
}

fn try_certify(a: &Matrix, t: &Matrix, mode: Mode, tol: f64) -> Option<SimilarityCertificate> {
    let cert = certify(a, t.clone(), mode, "altproj").ok()?;
    (cert.passes(tol) && verify_certificate(a, &cert, tol).unwrap_or(false)).then_some(cert)
}

struct Run {
    iterations: usize,
    violation: f64,
    cert: Option<SimilarityCertificate>,
}

fn single_run(a: &Matrix, mode: Mode, cfg: &AltProjConfig, slack: f64, rng: &mut ChaCha8Rng) -> Run {
    let n = a.nrows();
    let sc = scale(a);
    let mut t = Matrix::from_fn(n, n, |i, j| rng.random::<f64>() + if i == j { 1.0 } else { 0.0 });
    if cfg.block_recursive {
        impose_block(&mut t, a);
    }
    normalize_columns(&mut t, rng, cfg.block_recursive);
    let mut best = f64::INFINITY;
    let mut best_t = t.clone();
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        iterations = it;
        let h = (condition(&t) <= KICK_CONDITION)
            .then(|| crate::matrix::checked_inverse(&t).ok().map(|ti| ti * a * &t))
            .flatten();
        let Some(h) = h else {
            kick(&mut t, a, rng, cfg.block_recursive);
            continue;
        };
        let v = violation(&h, mode, sc);
        if v < best {
            best = v;
            best_t.copy_from(&t);
        }
        if (v <= cfg.feasibility_tol || it % CHECK_EVERY == 0) && v <= 1e-4 {
            if let Some(cert) = try_certify(a, &t, mode, cfg.feasibility_tol) {
                return Run {
                    iterations,
                    violation: v,
                    cert: Some(cert),
                };
            }
        }
        let hp = project_structure(&h, mode, slack);
        let Some(mut next) = coupling_update(a, &hp, &t) else {
            kick(&mut t, a, rng, cfg.block_recursive);
            continue;
        };
        next.iter_mut().for_each(|x| *x = x.max(0.0));
        if cfg.block_recursive {
            impose_block(&mut next, a);
        }
        normalize_columns(&mut next, rng, cfg.block_recursive);
        let step = (&next - &t).amax();
        t = next;
        if step < cfg.step_tolerance {
            kick(&mut t, a, rng, cfg.block_recursive);
        }
    }
    let cert = try_certify(a, &best_t, mode, cfg.feasibility_tol);
    Run {
        iterations,
        violation: best,
        cert,
    }
}

/// Random nonnegative perturbation that restores a well-conditioned `T`.
fn kick(t: &mut Matrix, a: &Matrix, rng: &mut ChaCha8Rng, block: bool) {
    let n = t.nrows();
    *t += Matrix::from_fn(n, n, |_, _| KICK * rng.random::<f64>());
    if block {
        impose_block(t, a);
    }
    normalize_columns(t, rng, block);
}

fn restarts(a: &Matrix, mode: Mode, cfg: &AltProjConfig, slack: f64) -> (Vec<AttemptLog>, Vec<Option<SimilarityCertificate>>) {
    let runs: Vec<Run> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| single_run(a, mode, cfg, slack, &mut rng_for(cfg.seed, r)))
        .collect();
    let method = if cfg.block_recursive { "altproj-block" } else { "altproj" };
    runs.into_iter()
        .enumerate()
        .map(|(index, r)| {
            (
                AttemptLog {
                    index,
                    method: method.into(),
                    iterations: r.iterations,
                    final_violation: if r.cert.is_some() { 0.0 } else { r.violation },
                    success: r.cert.is_some(),
                },
                r.cert,
            )
        })
        .unzip()
}

fn ensure_mode(a: &Matrix, mode: Mode) -> Result<usize> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    if n < 2 {
        return Err(Error::UnsupportedDimension {
            got: n,
            what: "the search needs n >= 2",
        });
    }
    let tau = tau_zero(a);
    match mode {
        Mode::Nonneg if !is_nonnegative(a, tau) => Err(Error::NotNonnegative(min_entry(a))),
        Mode::Metzler if !is_metzler(a, tau) => Err(Error::NotMetzler(min_off_diagonal(a))),
        _ => Ok(n),
    }
}

/// Seeded alternating projections between `{AT = TH}` and the Hessenberg
/// sign structure with `T ≥ 0`. In nonnegative mode the diagonal slack `s` of
/// the structure projection is tuned by golden-section search; successes are
/// always certified against the unrelaxed constraints.
pub fn altproj_hess(a: &Matrix, mode: Mode, cfg: &AltProjConfig) -> Result<SearchReport> {
    ensure_mode(a, mode)?;
    cfg.validate()?;
    let (mut log, mut certs) = restarts(a, mode, cfg, 0.0);
    if mode == Mode::Nonneg && !log.iter().any(|l| l.success) {
        let hi = scale(a);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut up) = (0.0, hi);
        let mut cache: Vec<(f64, f64)> = Vec::new();
        let mut eval = |s: f64, log: &mut Vec<AttemptLog>, certs: &mut Vec<Option<SimilarityCertificate>>| {
            let (l, c) = restarts(a, mode, cfg, s);
            let v = l.iter().map(|x| x.final_violation).fold(f64::INFINITY, f64::min);
            let base = log.len();
            log.extend(l.into_iter().map(|mut x| {
                x.index += base;
                x.method = format!("{} (s={s:.3e})", x.method);
                x
            }));
            certs.extend(c);
            cache.push((s, v));
            v
        };
        let mut x1 = up - phi * (up - lo);
        let mut x2 = lo + phi * (up - lo);
        let mut f1 = eval(x1, &mut log, &mut certs);
        let mut f2 = eval(x2, &mut log, &mut certs);
        for _ in 2..GOLDEN_EVALUATIONS {
            if log.iter().any(|l| l.success) {
                break;
            }
            if f1 <= f2 {
                up = x2;
                (x2, f2) = (x1, f1);
                x1 = up - phi * (up - lo);
                f1 = eval(x1, &mut log, &mut certs);
            } else {
                lo = x1;
                (x1, f1) = (x2, f2);
                x2 = lo + phi * (up - lo);
                f2 = eval(x2, &mut log, &mut certs);
            }
        }
    }
    Ok(SearchReport::from_attempts(log, certs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    DenseUniform,
    SparsePattern,
    Prop1Family,
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "denseuniform" | "dense" => Ok(Generator::DenseUniform),
            "sparsepattern" | "sparse" => Ok(Generator::SparsePattern),
            "prop1family" | "rankoneshift" => Ok(Generator::Prop1Family),
            _ => Err(Error::UnknownGenerator(s.into())),
        }
    }
}

/// Rank-one shift sample `c(uvᵀ − sI)` with `u, v > 0`, `0 ≤ s ≤ min uᵢvᵢ`.
pub fn rank_one_shift_sample(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let u = Vector::from_fn(n, |_, _| rng.random_range(0.1..2.0));
    let v = Vector::from_fn(n, |_, _| rng.random_range(0.1..2.0));
    let m = u.component_mul(&v).min();
    let s = rng.random_range(0.0..=m);
    let c = rng.random_range(0.1..3.0);
    (&u * v.transpose() - Matrix::identity(n, n) * s) * c
}

/// Sample of the named family for the given mode.
pub fn sample(generator: Generator, n: usize, mode: Mode, rng: &mut ChaCha8Rng) -> Matrix {
    let entry = |rng: &mut ChaCha8Rng, diag: bool| match mode {
        Mode::Nonneg => rng.random_range(0.0..1.0),
        Mode::Metzler => {
            let x: f64 = rng.random_range(-5.0..5.0);
            if diag { x } else { x.max(0.0) }
        }
    };
    match generator {
        Generator::DenseUniform => Matrix::from_fn(n, n, |i, j| entry(rng, i == j)),
        Generator::SparsePattern => Matrix::from_fn(n, n, |i, j| {
            if i != j && rng.random_bool(0.5) {
                0.0
            } else {
                entry(rng, i == j)
            }
        }),
        Generator::Prop1Family => rank_one_shift_sample(n, rng),
    }
}

enum Exact {
    Certificate(Box<SimilarityCertificate>),
    Obstructed,
    Failed,
    Unavailable,
}

fn exact(a: &Matrix, mode: Mode) -> Exact {
    let n = a.nrows();
    let res = match (mode, n) {
        (_, 2) => certify(a, Matrix::identity(2, 2), mode, "identity").map(Outcome::from),
        (Mode::Nonneg, 3) => nonneg_hess_3(a),
        (Mode::Metzler, 3) => metzler_hess_3(a).map(Outcome::from),
        (Mode::Metzler, 4) => metzler_hess_4(a).map(Outcome::from),
        _ => return Exact::Unavailable,
    };
    match res {
        Ok(Outcome::Certificate(c)) => Exact::Certificate(c),
        Ok(Outcome::Obstruction(_)) => Exact::Obstructed,
        Err(_) => Exact::Failed,
    }
}

/// Seeded experiment over `trials` samples of a family. Exact constructions
/// decide `n ≤ 4` where available; other sizes use `altproj_hess`.
pub fn random_experiment(n: usize, trials: usize, seed: u64, mode: Mode, generator: Generator) -> Result<SearchReport> {
    let cfg = AltProjConfig {
        seed,
        ..AltProjConfig::default()
    };
    random_experiment_with(n, trials, mode, generator, &cfg, false)
}

/// As [`random_experiment`] with an explicit search configuration; with
/// `compare` the heuristic also runs where an exact construction exists.
pub fn random_experiment_with(
    n: usize,
    trials: usize,
    mode: Mode,
    generator: Generator,
    cfg: &AltProjConfig,
    compare: bool,
) -> Result<SearchReport> {
    if n < 2 || trials == 0 {
        return Err(Error::Hypothesis("need n >= 2 and at least one trial".into()));
    }
    cfg.validate()?;
    let mut log = Vec::with_capacity(trials);
    let mut certs = Vec::with_capacity(trials);
    let mut gap = 0;
    let mut obstructions = 0;
    for trial in 0..trials {
        let mut rng = rng_for(cfg.seed, trial);
        let a = sample(generator, n, mode, &mut rng);
        let trial_cfg = AltProjConfig {
            seed: stream_seed(cfg.seed, trial as u64),
            ..*cfg
        };
        let proven = mode == Mode::Nonneg && matches!(rank_one_shift_detect(&a), Ok(Some(_)));
        let heuristic = |a: &Matrix| altproj_hess(a, mode, &trial_cfg);
        let (entry, cert) = match exact(&a, mode) {
            Exact::Certificate(c) => {
                if compare && !heuristic(&a)?.successes.gt(&0) {
                    gap += 1;
                }
                (("exact", 0, 0.0, true), Some(*c))
            }
            Exact::Obstructed => {
                obstructions += 1;
                (("exact-obstruction", 0, f64::INFINITY, false), None)
            }
            Exact::Failed => (("exact-failed", 0, f64::INFINITY, false), None),
            Exact::Unavailable if proven => {
                obstructions += 1;
                (("rank-one-shift-obstruction", 0, f64::INFINITY, false), None)
            }
            Exact::Unavailable => {
                let r = heuristic(&a)?;
                let iters = r.log.iter().map(|l| l.iterations).sum();
                let ok = r.successes > 0;
                (("altproj", iters, r.best_violation, ok), r.best_certificate)
            }
        };
        let (method, iterations, final_violation, success) = entry;
        log.push(AttemptLog {
            index: trial,
            method: method.into(),
            iterations,
            final_violation,
            success,
        });
        certs.push(cert);
    }
    let mut report = SearchReport::from_attempts(log, certs);
    report.heuristic_gap = compare.then_some(gap);
    report.exact_obstructions = obstructions;
    Ok(report)
}
