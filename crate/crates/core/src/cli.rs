//! The `condexp` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::bimodule::duality::{
    build_duality, check_conjugate_equations, conjugate_loop_index, expectation_from_duality, loop_index,
    standardize_with,
};
use crate::bimodule::eval::eval_diagram;
use crate::bimodule::intertwiner::Category;
use crate::bimodule::diagram::parse_diagram;
use crate::error::{Error, Result};
use crate::experiment::iteration_experiment;
use crate::index::{index_of, minimize_index, pp_basis, pp_bound_with_seed, MINIMIZE_BUDGET};
use crate::manifest::{load_manifest, ExpectationSpec, Manifest};
use crate::qsystem::{qsystem_from_pair, reconstruct_extension, roundtrip_report, verify_qsystem, QSystem};
use crate::report::{emit_report, Format, Report};
use crate::serial;
use crate::tower::{iterate_duals, DEFAULT_STEPS};

#[derive(Debug, Parser)]
#[command(name = "condexp", version, about = "Index theory for conditional expectations between multi-matrix algebras")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output format: json or md.
    #[arg(long, global = true, default_value = "json", value_parser = parse_format)]
    pub format: Format,
    /// Tolerance for the command's acceptance checks.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Maximal number of iteration steps.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Seed for randomized checks and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ind(E) and the Pimsner–Popa bound.
    Index { manifest: PathBuf },
    /// The minimal expectation E⁰ and ind₀.
    Minimize { manifest: PathBuf },
    /// Indices of the iterated duals.
    Iterate { manifest: PathBuf },
    /// Conjugate-equation solutions, loop values and standardization.
    Duality { manifest: PathBuf },
    /// Q-system axioms, optionally with the reconstruction round trip.
    Qsystem {
        manifest: PathBuf,
        #[arg(long)]
        roundtrip: bool,
        /// Write the Q-system in exchange form to this file.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Evaluates the manifest's diagram (or `--diagram`).
    EvalDiagram {
        manifest: PathBuf,
        #[arg(long)]
        diagram: Option<String>,
    },
    /// Iterated-dual experiment on random expectations for every manifest in a directory.
    Batch {
        dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub tol: Option<f64>,
    pub steps: Option<usize>,
    pub seed: u64,
}

impl Options {
    fn tol(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }
}

/// 1 for mathematical failures, 2 for unusable input.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Manifest(_) | Error::Io(_) | Error::Json(_) | Error::Syntax { .. } | Error::Unbound(_) => 2,
        _ => 1,
    }
}

fn inputs(path: &Path, m: &Manifest, opts: &Options, extra: Value) -> Value {
    let kind = match &m.file.expectation {
        ExpectationSpec::Trace { .. } => "trace",
        ExpectationSpec::Density { .. } => "density",
        ExpectationSpec::Explicit { .. } => "explicit",
    };
    let mut v = json!({
        "manifest": path.display().to_string(),
        "N": m.inclusion.n().block_dims(),
        "M": m.inclusion.m().block_dims(),
        "lambda": m.inclusion.lambda(),
        "expectation": kind,
        "seed": opts.seed,
    });
    if let (Value::Object(a), Value::Object(b)) = (&mut v, extra) {
        a.extend(b);
    }
    v
}

fn central_json(values: &[crate::linalg::C64]) -> Vec<serial::Scalar> {
    values.iter().map(|&z| serial::Scalar::from(z)).collect()
}

pub fn run_index(path: &Path, m: &Manifest, opts: &Options) -> Result<Report> {
    let tol = opts.tol(1e-8);
    let e = &m.expectation;
    let mut r = Report::new("index", inputs(path, m, opts, json!({"tol": tol})));
    let ind = index_of(e)?;
    let basis = pp_basis(e)?;
    let pp = pp_bound_with_seed(e, opts.seed);
    let inverse_norm = 1.0 / ind.norm();
    r.set("index", &ind.blocks)
        .set("index_norm", ind.norm())
        .set("index_gap", ind.gap())
        .set("pp_basis_size", basis.len())
        .set("pp_orthonormality_residual", basis.orthonormality_residual(e))
        .set("pp_bound", &pp)
        .set("inverse_index_norm", inverse_norm);
    if ind.min() < 1.0 - tol {
        r.fail(format!("index value {} is below 1", ind.min()));
    } else if pp.lambda < inverse_norm - tol {
        r.fail(format!("Pimsner–Popa constant {} is below ‖Ind(E)‖⁻¹ = {inverse_norm}", pp.lambda));
    }
    Ok(r)
}

pub fn run_minimize(path: &Path, m: &Manifest, opts: &Options) -> Result<Report> {
    let mut r = Report::new("minimize", inputs(path, m, opts, json!({})));
    let min = minimize_index(&m.inclusion, m.expectation.reference())?;
    let h: Vec<serial::Matrix> = min.h.blocks().iter().map(serial::to_matrix).collect();
    let near_scalar = min.index.gap() <= 1e-4 * min.ind0;
    r.set("ind0", min.ind0)
        .set("index", &min.index.blocks)
        .set("index_gap", min.index.gap())
        .set("evaluations", min.evaluations)
        .set("budget", MINIMIZE_BUDGET)
        .set("density_weights", &min.density_weights)
        .set("h", h)
        .set("near_scalar", near_scalar);
    if !near_scalar {
        r.fail(format!("index of the minimizer is not scalar (gap {:.3e})", min.index.gap()));
    }
    Ok(r)
}

pub fn run_iterate(path: &Path, m: &Manifest, opts: &Options) -> Result<Report> {
    let tol = opts.tol(crate::tower::DEFAULT_TOL);
    let steps = opts.steps.unwrap_or(DEFAULT_STEPS);
    let mut r = Report::new("iterate", inputs(path, m, opts, json!({"tol": tol, "steps": steps})));
    let rep = iterate_duals(&m.expectation, steps, tol)?;
    if let Value::Object(fields) = serde_json::to_value(&rep)? {
        for (k, v) in fields {
            r.set(&k, v);
        }
    }
    if rep.parity_residual > 1e-8 {
        r.fail(format!("parity containment fails (residual {:.3e})", rep.parity_residual));
    }
    Ok(r)
}

pub fn run_duality(path: &Path, m: &Manifest, opts: &Options) -> Result<Report> {
    let tol = opts.tol(1e-9);
    let e = &m.expectation;
    let mut r = Report::new("duality", inputs(path, m, opts, json!({"tol": tol})));
    let pair = build_duality(e)?;
    let res = check_conjugate_equations(&pair)?;
    let recovered = expectation_from_duality(&pair)?;
    let roundtrip = recovered.distance(e);
    let ind = index_of(e)?;
    let lp = loop_index(&pair)?;
    let loop_residual = lp.real_values().iter().zip(&ind.blocks).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let expected_conj = e.to_n(&e.apply(&ind.to_element()))?;
    let conj = conjugate_loop_index(&pair)?;
    let conj_residual = conj.to_element().sub(&expected_conj).norm();
    r.set("conjugate_residuals", json!({"iota": res.iota, "iota_bar": res.iota_bar}))
        .set("roundtrip_residual", roundtrip)
        .set("r_norm", pair.r_norm()?.real_values())
        .set("rbar_norm", pair.rbar_norm()?.real_values())
        .set("loop_index", lp.real_values())
        .set("loop_residual", loop_residual)
        .set("conjugate_loop_index", conj.real_values())
        .set("conjugate_loop_residual", conj_residual);
    let mut failures = Vec::new();
    if res.max() > tol {
        failures.push(format!("conjugate equations fail (residual {:.3e})", res.max()));
    }
    if roundtrip > tol {
        failures.push(format!("expectation round trip fails (residual {roundtrip:.3e})"));
    }
    if loop_residual.max(conj_residual) > 1e-8 {
        failures.push("loop values differ from the index".into());
    }
    if m.inclusion.is_connected() {
        let min = minimize_index(&m.inclusion, e.reference())?;
        let (_, std) = standardize_with(&build_duality(&min.expectation)?, min.ind0)?;
        if !std.standard {
            failures.push("standardization of the minimal expectation fails".into());
        }
        r.set("standardization", &std);
    } else {
        r.set("standardization", json!({"skipped": "inclusion is not connected"}));
    }
    if !failures.is_empty() {
        r.fail(failures.join("; "));
    }
    Ok(r)
}

pub fn run_qsystem(path: &Path, m: &Manifest, opts: &Options, roundtrip: bool, export: Option<&Path>) -> Result<Report> {
    let tol = opts.tol(1e-9);
    let external = m.file.qsystem.is_some();
    let mut r = Report::new(
        "qsystem",
        inputs(path, m, opts, json!({"tol": tol, "roundtrip": roundtrip, "source": if external { "manifest" } else { "expectation" }})),
    );
    let q = match &m.file.qsystem {
        Some(data) => QSystem::from_data(&Category::new(m.inclusion.clone()), data, 1e-8)?,
        None => qsystem_from_pair(&build_duality(&m.expectation)?)?,
    };
    let axioms = verify_qsystem(&q)?;
    r.set("axioms", &axioms);
    let mut failures = Vec::new();
    if !axioms.accepted(tol) {
        failures.push(format!("Q-system axioms fail (residual {:.3e})", axioms.max_residual()));
    }
    if !external {
        let bound = 1.0 / index_of(&m.expectation)?.norm();
        r.set("xx_star_bound", bound);
        if axioms.xx_star_min < bound - 1e-8 {
            failures.push(format!("x∘x* has spectrum below ‖Ind(E)‖⁻¹ ({} < {bound})", axioms.xx_star_min));
        }
    }
    if let Some(out) = export {
        std::fs::write(out, serde_json::to_string(&q.to_data())?)?;
    }
    if roundtrip {
        if external {
            let rec = reconstruct_extension(&q)?;
            let st = rec.structure(opts.seed)?;
            r.set(
                "reconstruction",
                json!({
                    "dim": rec.dim(),
                    "block_dims": st.block_dims,
                    "lambda": st.lambda,
                    "index": serial::to_matrix(&rec.index()?),
                    "jones_residual": rec.jones_residual(),
                    "unit_residual": rec.unit_residual,
                    "star_residual": rec.star_residual,
                }),
            );
        } else {
            let rt = roundtrip_report(&m.expectation, opts.seed)?;
            if !rt.ok {
                failures.push(format!("round trip mismatches: {}", rt.mismatches.join(", ")));
            }
            r.set("roundtrip", &rt);
        }
    }
    if !failures.is_empty() {
        r.fail(failures.join("; "));
    }
    Ok(r)
}

pub fn run_eval(path: &Path, m: &Manifest, opts: &Options, text: Option<&str>) -> Result<Report> {
    let diagram = match (text, &m.diagram) {
        (Some(t), _) => parse_diagram(t)?,
        (None, Some(d)) => d.clone(),
        (None, None) => return Err(Error::Usage("no diagram given in the manifest or with --diagram".into())),
    };
    let mut r = Report::new("eval-diagram", inputs(path, m, opts, json!({"diagram": diagram.to_string()})));
    let pair = build_duality(&m.expectation)?;
    let bindings = m.bindings(pair.category())?;
    let t = eval_diagram(&diagram, &pair, &bindings)?;
    let closed = t.source().is_unit() && t.target().is_unit() && t.source() == t.target();
    let blocks: Vec<Vec<serial::Matrix>> =
        t.blocks().iter().map(|row| row.iter().map(serial::to_matrix).collect()).collect();
    r.set("source", t.source().to_string())
        .set("target", t.target().to_string())
        .set("closed", closed)
        .set("blocks", blocks)
        .set("norm", t.norm());
    if closed {
        r.set("central_value", central_json(&t.central_values()?));
    }
    Ok(r)
}

fn manifest_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Usage(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn run_batch(dir: &Path, samples: usize, opts: &Options) -> Result<Report> {
    let tol = opts.tol(crate::tower::DEFAULT_TOL);
    let steps = opts.steps.unwrap_or(DEFAULT_STEPS);
    let files = manifest_files(dir)?;
    let mut r = Report::new(
        "batch",
        json!({"dir": dir.display().to_string(), "samples": samples, "seed": opts.seed, "tol": tol, "steps": steps}),
    );
    let entries: Vec<(String, Result<crate::experiment::ExperimentReport>)> = files
        .par_iter()
        .map(|p| {
            let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let rep = load_manifest(p).and_then(|m| {
                iteration_experiment(&m.inclusion, m.expectation.reference(), samples, opts.seed, steps, tol)
            });
            (name, rep)
        })
        .collect();
    let (mut total, mut converged, mut non_monotone, mut errors) = (0, 0, 0, Vec::new());
    let mut out = Vec::new();
    for (name, rep) in entries {
        match rep {
            Ok(e) => {
                total += e.samples;
                converged += e.converged;
                non_monotone += e.non_monotone;
                out.push(json!({"manifest": name, "experiment": e}));
            }
            Err(err) => {
                errors.push(name.clone());
                out.push(json!({"manifest": name, "error": err.to_string()}));
            }
        }
    }
    r.set("manifests", out)
        .set("samples", total)
        .set("converged", converged)
        .set("convergence_fraction", if total == 0 { 0.0 } else { converged as f64 / total as f64 })
        .set("non_monotone", non_monotone);
    if !errors.is_empty() {
        r.fail(format!("failed manifests: {}", errors.join(", ")));
    }
    Ok(r)
}

pub fn run_command(cli: &Cli) -> Result<Report> {
    let opts = Options { tol: cli.tol, steps: cli.steps, seed: cli.seed };
    match &cli.command {
        Command::Index { manifest } => run_index(manifest, &load_manifest(manifest)?, &opts),
        Command::Minimize { manifest } => run_minimize(manifest, &load_manifest(manifest)?, &opts),
        Command::Iterate { manifest } => run_iterate(manifest, &load_manifest(manifest)?, &opts),
        Command::Duality { manifest } => run_duality(manifest, &load_manifest(manifest)?, &opts),
        Command::Qsystem { manifest, roundtrip, export } => {
            run_qsystem(manifest, &load_manifest(manifest)?, &opts, *roundtrip, export.as_deref())
        }
        Command::EvalDiagram { manifest, diagram } => {
            run_eval(manifest, &load_manifest(manifest)?, &opts, diagram.as_deref())
        }
        Command::Batch { dir, samples } => run_batch(dir, *samples, &opts),
    }
}

/// Parses `args`, runs the command and writes the report; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match run_command(&cli) {
        Ok(report) => {
            let _ = out.write_all(emit_report(&report, cli.format).as_bytes());
            if report.ok() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
