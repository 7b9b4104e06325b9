//! Command-line front end. Every command prints one JSON document (or CSV)
//! on stdout; exit codes are 0 for success or feasibility, 2 for a proven
//! obstruction or failed verification, 3 for unknown, 1 for errors.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::constructions::{
    certify, ct_hess_2, ct_hess_3, metzler_hess_3, metzler_hess_4, nonneg_hess_3, rank_one_shift_detect,
    verify_certificate, Mode, Obstruction, Outcome,
};
use crate::error::{Error, Result};
use crate::heuristics::{altproj_hess, random_experiment_with, AltProjConfig, Generator};
use crate::linalg::{classify, perron_pair, sorted_spectrum};
use crate::matrix::{
    ensure_square, is_metzler, is_nonnegative, min_entry, min_off_diagonal, parse_matrix, parse_vector,
    scale, tau_zero, Matrix, Vector, CLUSTER_REL, ZERO_REL,
};
use crate::possys::{dominance_sweep_tol, dt_hess_feasibility_3_tol, dt_iterates, COVER_TOL, DEFAULT_HORIZON};
use crate::simplex::Verdict;

pub const SCHEMA: u64 = 1;
pub const TOL_ENV: &str = "HESSFORM_TOL";
const VERIFY_TOL: f64 = 1e-8;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_OBSTRUCTED: i32 = 2;
pub const EXIT_UNKNOWN: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hessform", version, about = "Nonnegative and Metzler Hessenberg forms")]
struct Cli {
    /// Overrides every numeric tolerance (also read from HESSFORM_TOL).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Structural classification and sorted spectrum.
    Classify { matrix: PathBuf },
    /// Similarity to a nonnegative or Metzler Hessenberg matrix.
    Hessenberg {
        matrix: PathBuf,
        #[arg(long)]
        mode: Mode,
        /// Also write the JSON document to this file.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Seed of the heuristic used outside the characterized sizes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Controller-Hessenberg form of a CT positive system.
    Ctpos {
        matrix: PathBuf,
        b: PathBuf,
        c: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Projected iterates of a DT system on the simplex.
    DtIterates {
        matrix: PathBuf,
        b: PathBuf,
        #[arg(long = "k", default_value_t = DEFAULT_HORIZON)]
        k: usize,
        /// Write the CSV here and print JSON; without it the CSV goes to stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Triangle test for a DT controller-Hessenberg form.
    DtFeasibility {
        matrix: PathBuf,
        b: PathBuf,
        #[arg(long = "k", default_value_t = DEFAULT_HORIZON)]
        k: usize,
        /// Comma-separated diagonal margins m; reruns the test on A + mI.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<f64>,
    },
    /// Seeded experiment over a random family.
    Search {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        mode: Mode,
        #[arg(long, default_value = "dense-uniform")]
        generator: Generator,
        #[arg(long, default_value_t = AltProjConfig::default().restarts)]
        restarts: usize,
        #[arg(long, default_value_t = AltProjConfig::default().max_iters)]
        max_iters: usize,
        #[arg(long)]
        block_recursive: bool,
        /// Also run the heuristic where an exact construction exists.
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rechecks a certificate or obstruction document against a matrix.
    Verify {
        matrix: PathBuf,
        cert: PathBuf,
        /// Input vector, needed for eigenvector-coincidence obstructions.
        #[arg(long)]
        b: Option<PathBuf>,
    },
}

/// Pretty JSON with every float at 17 significant digits.
struct SciFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for SciFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes with sorted keys and `{:.16e}` floats; non-finite values become `null`.
pub fn to_json(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializing a JSON value cannot fail");
    let mut s = String::from_utf8(buf).expect("serde_json emits UTF-8");
    s.push('\n');
    s
}

fn value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("library types serialize to JSON")
}

struct Input {
    bytes: Vec<u8>,
    text: String,
}

fn read(path: &Path) -> Result<Input> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::Parse(format!("{} is not UTF-8 text", path.display())))?;
    Ok(Input { bytes, text })
}

fn read_matrix(path: &Path) -> Result<(Matrix, Input)> {
    let input = read(path)?;
    let a = parse_matrix(&input.text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok((a, input))
}

fn read_vector(path: &Path) -> Result<(Vector, Input)> {
    let input = read(path)?;
    let v = parse_vector(&input.text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok((v, input))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}

/// SHA-256 over the length-prefixed input files.
fn input_hash(inputs: &[&Input]) -> String {
    let mut h = Sha256::new();
    for i in inputs {
        h.update((i.bytes.len() as u64).to_le_bytes());
        h.update(&i.bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn envelope(command: &str, inputs: &[&Input], status: &str, result: Value) -> Value {
    json!({
        "schema": SCHEMA,
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "input_sha256": input_hash(inputs),
        "status": status,
        "result": result,
    })
}

fn resolve_tol(flag: Option<f64>) -> Result<Option<f64>> {
    let tol = match flag {
        Some(t) => Some(t),
        None => match std::env::var(TOL_ENV) {
            Ok(s) => Some(
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("{TOL_ENV}={s} is not a number")))?,
            ),
            Err(_) => None,
        },
    };
    match tol {
        Some(t) if !(t > 0.0 && t.is_finite()) => Err(Error::Parse(format!("tolerance must be positive, got {t}"))),
        t => Ok(t),
    }
}

struct Output {
    doc: String,
    code: i32,
}

fn json_output(v: &Value, code: i32) -> Output {
    Output { doc: to_json(v), code }
}

fn outcome_status(o: &Outcome) -> (&'static str, i32) {
    match o {
        Outcome::Certificate(_) => ("certificate", EXIT_OK),
        Outcome::Obstruction(Obstruction::SearchExhausted { .. }) => ("unknown", EXIT_UNKNOWN),
        Outcome::Obstruction(_) => ("obstruction", EXIT_OBSTRUCTED),
    }
}

fn ensure_mode(a: &Matrix, mode: Mode) -> Result<()> {
    let tau = tau_zero(a);
    match mode {
        Mode::Nonneg if !is_nonnegative(a, tau) => Err(Error::NotNonnegative(min_entry(a))),
        Mode::Metzler if a.nrows() > 1 && !is_metzler(a, tau) => Err(Error::NotMetzler(min_off_diagonal(a))),
        _ => Ok(()),
    }
}

/// Exact construction where the size is characterized, the rank-one shift
/// test in nonnegative mode, and the seeded heuristic otherwise.
pub fn hessenberg_outcome(a: &Matrix, mode: Mode, seed: u64, tol: f64) -> Result<Outcome> {
    let n = ensure_square(a)?;
    ensure_mode(a, mode)?;
    match (mode, n) {
        (_, 1 | 2) => return Ok(certify(a, Matrix::identity(n, n), mode, "identity")?.into()),
        (Mode::Nonneg, 3) => return nonneg_hess_3(a),
        (Mode::Metzler, 3) => return Ok(metzler_hess_3(a)?.into()),
        (Mode::Metzler, 4) => return Ok(metzler_hess_4(a)?.into()),
        _ => {}
    }
    if mode == Mode::Nonneg {
        if let Some(form) = rank_one_shift_detect(a)? {
            return Ok(Outcome::Obstruction(Obstruction::NegEigGeomMult {
                eigenvalue: -form.c * form.s,
                multiplicity: n - 1,
                form,
            }));
        }
    }
    let cfg = AltProjConfig {
        seed,
        feasibility_tol: tol,
        ..AltProjConfig::default()
    };
    let report = altproj_hess(a, mode, &cfg)?;
    Ok(match report.best_certificate {
        Some(cert) => cert.into(),
        None => Outcome::Obstruction(Obstruction::SearchExhausted {
            attempts: report.attempts,
            best_violation: report.best_violation,
        }),
    })
}

fn certificate_value(a: &Matrix, o: &Outcome, tol: f64) -> Result<Value> {
    let mut v = value(o);
    if let Outcome::Certificate(cert) = o {
        v["verified"] = Value::Bool(verify_certificate(a, cert, tol)?);
    }
    Ok(v)
}

fn spectrum_value(a: &Matrix) -> Result<Value> {
    let spec = sorted_spectrum(a, CLUSTER_REL)?;
    let eig: Vec<[f64; 2]> = spec.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
    let clusters: Vec<Value> = spec
        .clusters
        .iter()
        .map(|c| {
            json!({
                "value": [c.value.re, c.value.im],
                "algebraic": c.algebraic(),
                "geometric": c.geometric,
            })
        })
        .collect();
    Ok(json!({
        "eigenvalues": eig,
        "clusters": clusters,
        "spectral_radius": spec.spectral_radius(),
        "cluster_tolerance": spec.cluster_tolerance,
    }))
}

fn cmd_classify(path: &Path, tol: Option<f64>) -> Result<Output> {
    let (a, input) = read_matrix(path)?;
    ensure_square(&a)?;
    let tau = tol.unwrap_or(ZERO_REL) * scale(&a);
    let report = classify(&a, tau)?;
    let mut result = json!({ "classification": value(&report), "spectrum": spectrum_value(&a)? });
    if report.is_nonnegative {
        let p = perron_pair(&a)?;
        result["perron"] = json!({
            "root": p.perron_root,
            "right_vector": p.right_vector.as_slice(),
            "left_vector": p.left_vector.as_slice(),
            "is_simple": p.is_simple,
        });
    }
    Ok(json_output(&envelope("classify", &[&input], "ok", result), EXIT_OK))
}

fn cmd_hessenberg(path: &Path, mode: Mode, json_path: Option<&Path>, seed: u64, tol: Option<f64>) -> Result<Output> {
    let (a, input) = read_matrix(path)?;
    let tol = tol.unwrap_or(VERIFY_TOL);
    let outcome = hessenberg_outcome(&a, mode, seed, tol)?;
    let (status, code) = outcome_status(&outcome);
    let doc = envelope("hessenberg", &[&input], status, certificate_value(&a, &outcome, tol)?);
    let out = json_output(&doc, code);
    if let Some(p) = json_path {
        write_file(p, &out.doc)?;
    }
    Ok(out)
}

fn cmd_ctpos(m: &Path, b: &Path, c: Option<&Path>, json_path: Option<&Path>, tol: Option<f64>) -> Result<Output> {
    let (a, ia) = read_matrix(m)?;
    let (bv, ib) = read_vector(b)?;
    let (cv, ic) = match c {
        Some(p) => {
            let (v, i) = read_vector(p)?;
            (v, Some(i))
        }
        None => (Vector::zeros(bv.len()), None),
    };
    let n = ensure_square(&a)?;
    let outcome = match n {
        2 => ct_hess_2(&a, &bv, &cv)?.into(),
        3 => ct_hess_3(&a, &bv, &cv)?,
        _ => {
            return Err(Error::UnsupportedDimension {
                got: n,
                what: "ctpos supports 2x2 and 3x3 systems",
            })
        }
    };
    let tol = tol.unwrap_or(VERIFY_TOL);
    let (status, code) = outcome_status(&outcome);
    let mut inputs = vec![&ia, &ib];
    inputs.extend(ic.as_ref());
    let doc = envelope("ctpos", &inputs, status, certificate_value(&a, &outcome, tol)?);
    let out = json_output(&doc, code);
    if let Some(p) = json_path {
        write_file(p, &out.doc)?;
    }
    Ok(out)
}

fn cmd_dt_iterates(m: &Path, b: &Path, k: usize, csv: Option<&Path>) -> Result<Output> {
    let (a, ia) = read_matrix(m)?;
    let (bv, ib) = read_vector(b)?;
    let trace = dt_iterates(&a, &bv, k)?;
    match csv {
        Some(p) => {
            write_file(p, &trace.to_csv())?;
            Ok(json_output(&envelope("dt-iterates", &[&ia, &ib], "ok", value(&trace)), EXIT_OK))
        }
        None => Ok(Output {
            doc: trace.to_csv(),
            code: EXIT_OK,
        }),
    }
}

fn cmd_dt_feasibility(m: &Path, b: &Path, k: usize, sweep: &[f64], tol: Option<f64>) -> Result<Output> {
    let (a, ia) = read_matrix(m)?;
    let (bv, ib) = read_vector(b)?;
    let tol = tol.unwrap_or(COVER_TOL);
    let d = dt_hess_feasibility_3_tol(&a, &bv, k, tol)?;
    let (status, code) = match d.decision.verdict {
        Verdict::Feasible => ("feasible", EXIT_OK),
        Verdict::Infeasible => ("infeasible", EXIT_OBSTRUCTED),
        Verdict::Unknown => ("unknown", EXIT_UNKNOWN),
    };
    let mut result = value(&d);
    if !sweep.is_empty() {
        let rows: Vec<Value> = dominance_sweep_tol(&a, &bv, k, sweep, tol)?
            .into_iter()
            .map(|(m, v)| json!({ "margin": m, "verdict": value(&v) }))
            .collect();
        result["dominance_sweep"] = Value::Array(rows);
    }
    Ok(json_output(&envelope("dt-feasibility", &[&ia, &ib], status, result), code))
}

#[allow(clippy::too_many_arguments)]
fn cmd_search(
    n: usize,
    trials: usize,
    seed: u64,
    mode: Mode,
    generator: Generator,
    restarts: usize,
    max_iters: usize,
    block_recursive: bool,
    compare: bool,
    csv: Option<&Path>,
    tol: Option<f64>,
) -> Result<Output> {
    let cfg = AltProjConfig {
        seed,
        restarts,
        max_iters,
        block_recursive,
        feasibility_tol: tol.unwrap_or(AltProjConfig::default().feasibility_tol),
        ..AltProjConfig::default()
    };
    let report = random_experiment_with(n, trials, mode, generator, &cfg, compare)?;
    if let Some(p) = csv {
        write_file(p, &report.to_csv())?;
    }
    let params = json!({
        "n": n, "trials": trials, "seed": seed, "mode": value(&mode),
        "generator": value(&generator), "config": value(&cfg), "compare": compare,
    });
    let mut doc = envelope("search", &[], "ok", value(&report));
    doc["parameters"] = params;
    Ok(json_output(&doc, EXIT_OK))
}

fn cmd_verify(m: &Path, cert: &Path, b: Option<&Path>, tol: Option<f64>) -> Result<Output> {
    let (a, ia) = read_matrix(m)?;
    let ic = read(cert)?;
    let doc: Value = serde_json::from_str(&ic.text)
        .map_err(|e| Error::Parse(format!("{}: invalid JSON: {e}", cert.display())))?;
    let body = doc.get("result").cloned().unwrap_or(doc);
    let body = match body.get("best_certificate") {
        Some(Value::Null) => return Err(Error::Parse("the search report holds no certificate".into())),
        Some(c) => {
            let mut c = c.clone();
            if let Some(o) = c.as_object_mut() {
                o.insert("outcome".into(), "certificate".into());
            }
            c
        }
        None => body,
    };
    let outcome: Outcome = serde_json::from_value(body)
        .map_err(|e| Error::Parse(format!("{}: not a certificate or obstruction: {e}", cert.display())))?;
    let tol = tol.unwrap_or(VERIFY_TOL);
    let bv = b.map(read_vector).transpose()?;
    let (kind, ok, detail) = match &outcome {
        Outcome::Certificate(c) => match verify_certificate(&a, c, tol) {
            Ok(ok) => ("certificate", ok, None),
            Err(e) => ("certificate", false, Some(e.to_string())),
        },
        Outcome::Obstruction(o) => ("obstruction", o.recheck(&a, bv.as_ref().map(|(v, _)| v)), None),
    };
    let mut inputs = vec![&ia, &ic];
    if let Some((_, i)) = &bv {
        inputs.push(i);
    }
    let result = json!({ "kind": kind, "verified": ok, "tolerance": tol, "detail": detail });
    let status = if ok { "verified" } else { "rejected" };
    Ok(json_output(
        &envelope("verify", &inputs, status, result),
        if ok { EXIT_OK } else { EXIT_OBSTRUCTED },
    ))
}

fn dispatch(cli: Cli) -> Result<Output> {
    let tol = resolve_tol(cli.tol)?;
    match cli.command {
        Command::Classify { matrix } => cmd_classify(&matrix, tol),
        Command::Hessenberg { matrix, mode, json, seed } => cmd_hessenberg(&matrix, mode, json.as_deref(), seed, tol),
        Command::Ctpos { matrix, b, c, json } => cmd_ctpos(&matrix, &b, c.as_deref(), json.as_deref(), tol),
        Command::DtIterates { matrix, b, k, csv } => cmd_dt_iterates(&matrix, &b, k, csv.as_deref()),
        Command::DtFeasibility { matrix, b, k, sweep } => cmd_dt_feasibility(&matrix, &b, k, &sweep, tol),
        Command::Search {
            n,
            trials,
            seed,
            mode,
            generator,
            restarts,
            max_iters,
            block_recursive,
            compare,
            csv,
        } => cmd_search(
            n,
            trials,
            seed,
            mode,
            generator,
            restarts,
            max_iters,
            block_recursive,
            compare,
            csv.as_deref(),
            tol,
        ),
        Command::Verify { matrix, cert, b } => cmd_verify(&matrix, &cert, b.as_deref(), tol),
    }
}

/// Runs the CLI on `argv` (program name first), writing to the given streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli) {
        Ok(o) => {
            let _ = out.write_all(o.doc.as_bytes());
            o.code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

/// Runs the CLI with the process's standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut io::stdout().lock(), &mut io::stderr().lock())
}
