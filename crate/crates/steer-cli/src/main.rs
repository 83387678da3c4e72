//! `steer` — construct (N,M)-POVM measurement families, run steering and
//! entanglement detectors on named or file-backed bipartite states, scan the
//! Bell-diagonal coefficient cube, and estimate steerable-volume ratios.

mod output;
mod states;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::json;

use steer_core::{
    append_jsonl, bell_diagonal_scan, chain_seed, construct_povm, cross_detector_audit,
    das_steering_check, estimate_ratio, gamma, job_record_line, loo_steering_check,
    loo_steering_check_swapped, optimize_rescaled_steering, povm_steering_check, reproduce_table,
    reproduce_table_rows, scan_to_csv, sts_spectrum, validate_povm, DasConfig, Detector,
    EstimationJob, LooBasis, NmPovm, NmPovmParams, RescaleOptions, SpectralFactors,
};

use output::{render, write_artifact, Format, Report};
use states::resolve_state;

/// Command failure with its exit status. Status 2 is reserved for validation
/// failures (POVM relations, reference-table mismatches, audit
/// counterexamples); usage and configuration errors exit 1.
pub(crate) struct Failure {
    code: u8,
    message: String,
}

pub(crate) fn fail(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

impl From<steer_core::Error> for Failure {
    fn from(e: steer_core::Error) -> Self {
        let code = match &e {
            steer_core::Error::ConstructionFailed { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        fail(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        fail(e.to_string())
    }
}

pub(crate) fn parse_num<T: FromStr>(raw: &str, what: &str) -> Result<T, Failure> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| fail(format!("could not parse {what} from {raw:?}")))
}

#[derive(Parser)]
#[command(
    name = "steer",
    version,
    about = "Steering detectors and steerable-volume estimation for bipartite states"
)]
struct Cli {
    /// Base RNG seed; recorded in every output header.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for the sampling fan-out (also via STEER_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output rendering.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Write the artifact to this path instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct, validate or inspect (N,M)-POVM measurement families.
    Povm(PovmCmd),
    /// Run one detector on one state and print the verdict.
    Detect(DetectCmd),
    /// Estimate steerable/entangled volume ratios by Monte-Carlo sampling.
    Volume(VolumeCmd),
    /// Classify the Bell-diagonal coefficient cube on a grid.
    Bellscan(BellscanCmd),
}

#[derive(Args)]
struct PovmCmd {
    #[command(subcommand)]
    action: PovmAction,
}

#[derive(Subcommand)]
enum PovmAction {
    /// Build a POVM and emit its JSON document.
    Construct(PovmSpec),
    /// Check every defining relation; exits 2 when one fails.
    Validate(PovmSource),
    /// Print the SᵀS spectrum of the coefficient matrix.
    Spectrum(PovmSource),
}

#[derive(Args)]
struct PovmSpec {
    /// Hilbert-space dimension.
    #[arg(short = 'd', long)]
    dim: usize,

    /// Number of sub-POVMs N.
    #[arg(short = 'N', long)]
    sub_povms: usize,

    /// Outcomes per sub-POVM M.
    #[arg(short = 'M', long)]
    outcomes: usize,

    /// Effect purity x = Tr{Π²}; defaults to the midpoint of the admissible
    /// range.
    #[arg(short = 'x', long)]
    purity: Option<f64>,

    /// Draw the orthogonal transform from this seed instead of using the
    /// identity.
    #[arg(long)]
    transform_seed: Option<u64>,
}

#[derive(Args)]
struct PovmSource {
    /// Load a POVM document written by `povm construct`.
    #[arg(long)]
    file: Option<PathBuf>,

    /// Hilbert-space dimension.
    #[arg(short = 'd', long, required_unless_present = "file", conflicts_with = "file")]
    dim: Option<usize>,

    /// Number of sub-POVMs N.
    #[arg(short = 'N', long, required_unless_present = "file", conflicts_with = "file")]
    sub_povms: Option<usize>,

    /// Outcomes per sub-POVM M.
    #[arg(short = 'M', long, required_unless_present = "file", conflicts_with = "file")]
    outcomes: Option<usize>,

    /// Effect purity x = Tr{Π²}; defaults to the admissible midpoint.
    #[arg(short = 'x', long, conflicts_with = "file")]
    purity: Option<f64>,

    /// Draw the orthogonal transform from this seed instead of the identity.
    #[arg(long, conflicts_with = "file")]
    transform_seed: Option<u64>,
}

#[derive(Args)]
struct DetectCmd {
    /// Named state: singlet | werner:w | bell-diag:t1,t2,t3 | isotropic:d,v.
    #[arg(long, required_unless_present = "state_file", conflicts_with = "state_file")]
    state: Option<String>,

    /// JSON document {"dim_a", "dim_b", "rho": [[re, im], ...]} (row-major).
    #[arg(long)]
    state_file: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = DetectorArg::Loo)]
    detector: DetectorArg,

    /// Random restarts for the rescaled optimizer.
    #[arg(long, default_value_t = 20)]
    restarts: usize,

    /// Alice measurement family N,M[,x] for the povm detector; defaults to
    /// the (d²−1, 2) family at midpoint purity.
    #[arg(long)]
    povm_a: Option<String>,

    /// Bob measurement family N,M[,x] for the povm detector.
    #[arg(long)]
    povm_b: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetectorArg {
    Loo,
    LooSwapped,
    LooRescaled,
    Povm,
    DasNpt,
}

#[derive(Args)]
struct VolumeCmd {
    #[command(subcommand)]
    action: Option<VolumeAction>,

    #[command(flatten)]
    job: VolumeJobArgs,
}

#[derive(Subcommand)]
enum VolumeAction {
    /// Re-estimate reference-table rows at desk scale and compare.
    Table(TableArgs),
    /// Count correlation-vs-NPT disagreements on a shared sample stream.
    Audit(AuditArgs),
}

#[derive(Args)]
struct VolumeJobArgs {
    /// Alice dimension.
    #[arg(long)]
    da: Option<usize>,

    /// Bob dimension.
    #[arg(long)]
    db: Option<usize>,

    #[arg(long, value_enum, default_value_t = DetectorArg::Loo)]
    detector: DetectorArg,

    /// Total sample count across all chains.
    #[arg(short = 'n', long)]
    samples: Option<usize>,

    #[arg(long, default_value_t = 4)]
    chains: usize,

    /// Sampler override: burn-in steps per chain.
    #[arg(long)]
    burn_in: Option<usize>,

    /// Sampler override: steps between retained samples.
    #[arg(long)]
    thinning: Option<usize>,

    /// Restarts for the loo-rescaled detector.
    #[arg(long, default_value_t = 3)]
    restarts: usize,

    /// Alice measurement family N,M[,x] for the povm detector.
    #[arg(long)]
    povm_a: Option<String>,

    /// Bob measurement family N,M[,x] for the povm detector.
    #[arg(long)]
    povm_b: Option<String>,

    /// Seed for detector-side POVM construction (default: global seed).
    #[arg(long)]
    construction_seed: Option<u64>,

    /// Append a JSON-lines job record to this path.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    /// Reference table: 1 (rescaled-correlation block) or 2 (NPT column).
    #[arg(long)]
    which: u8,

    /// Desk-scale sample count per row (minimum 10000).
    #[arg(long, default_value_t = 10_000)]
    scale: usize,

    /// Comma-separated row indices; all rows when omitted.
    #[arg(long)]
    rows: Option<String>,
}

#[derive(Args)]
struct AuditArgs {
    /// Alice dimension (NPT is exact only for 2 x {2,3}).
    #[arg(long, default_value_t = 2)]
    da: usize,

    /// Bob dimension.
    #[arg(long, default_value_t = 2)]
    db: usize,

    /// Shared sample count.
    #[arg(short = 'n', long, default_value_t = 10_000)]
    samples: usize,
}

#[derive(Args)]
struct BellscanCmd {
    /// Grid step over the coefficient cube [-1,1]³.
    #[arg(long, default_value_t = 0.02)]
    resolution: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // keep clap's rendering but remap usage errors to exit 1; status
            // 2 stays reserved for validation failures
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    init_workers(cli.workers)?;
    match &cli.command {
        Command::Povm(cmd) => match &cmd.action {
            PovmAction::Construct(spec) => cmd_povm_construct(cli, spec),
            PovmAction::Validate(src) => cmd_povm_validate(cli, src),
            PovmAction::Spectrum(src) => cmd_povm_spectrum(cli, src),
        },
        Command::Detect(cmd) => cmd_detect(cli, cmd),
        Command::Volume(cmd) => match &cmd.action {
            Some(VolumeAction::Table(t)) => cmd_volume_table(cli, t),
            Some(VolumeAction::Audit(a)) => cmd_volume_audit(cli, a),
            None => cmd_volume_run(cli, &cmd.job),
        },
        Command::Bellscan(cmd) => cmd_bellscan(cli, cmd),
    }
}

fn init_workers(flag: Option<usize>) -> Result<(), Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("STEER_WORKERS") {
            Ok(v) => Some(parse_num::<usize>(&v, "STEER_WORKERS")?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(fail("worker count must be positive"));
        }
        // a pool may already be installed; that is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// povm
// ---------------------------------------------------------------------------

fn resolved_purity(dim: usize, outcomes: usize, purity: Option<f64>) -> f64 {
    purity.unwrap_or_else(|| NmPovmParams::default_purity(dim, outcomes))
}

/// Constructs with the identity transform by default so the artifact is the
/// canonical representative of the family; a seed draws a random aligned O.
fn build_povm(params: &NmPovmParams, transform_seed: Option<u64>) -> Result<NmPovm, Failure> {
    let povm = match transform_seed {
        Some(seed) => construct_povm(params, None, Some(seed))?,
        None => {
            let d2 = params.dim * params.dim;
            construct_povm(params, Some(DMatrix::identity(d2, d2)), None)?
        }
    };
    Ok(povm)
}

fn cmd_povm_construct(cli: &Cli, spec: &PovmSpec) -> Result<u8, Failure> {
    let x = resolved_purity(spec.dim, spec.outcomes, spec.purity);
    let params = NmPovmParams::new(spec.dim, spec.sub_povms, spec.outcomes, x)?;
    let povm = build_povm(&params, spec.transform_seed)?;
    let doc = povm.to_json_string();
    let report = Report {
        seed: cli.seed,
        config: json!({
            "command": "povm construct",
            "dim": spec.dim,
            "sub_povms": spec.sub_povms,
            "outcomes": spec.outcomes,
            "purity": x,
            "transform_seed": spec.transform_seed,
        }),
        result: serde_json::from_str(&doc)?,
        text: doc,
        csv: None,
    };
    write_artifact(cli.out.as_deref(), &render(&report, cli.format))?;
    Ok(0)
}

fn source_params(src: &PovmSource) -> Result<NmPovmParams, Failure> {
    let (dim, n, m) = match (src.dim, src.sub_povms, src.outcomes) {
        (Some(d), Some(n), Some(m)) => (d, n, m),
        _ => return Err(fail("either --file or all of -d, -N, -M are required")),
    };
    let x = resolved_purity(dim, m, src.purity);
    Ok(NmPovmParams::new(dim, n, m, x)?)
}

fn source_config(command: &str, src: &PovmSource) -> serde_json::Value {
    match &src.file {
        Some(path) => json!({
            "command": command,
            "file": path.display().to_string(),
        }),
        None => json!({
            "command": command,
            "dim": src.dim,
            "sub_povms": src.sub_povms,
            "outcomes": src.outcomes,
            "purity": src.purity,
            "transform_seed": src.transform_seed,
        }),
    }
}

/// Accepts both the raw POVM document and the wrapped JSON artifact written
/// with `--format json`; leading `#` header lines are skipped.
fn load_povm_file(path: &Path) -> Result<NmPovm, Failure> {
    let raw = std::fs::read_to_string(path)?;
    let body: String = raw
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let v: serde_json::Value = serde_json::from_str(&body)?;
    let doc = match v.get("result") {
        Some(inner) if v.get("version").is_some() => serde_json::to_string(inner)?,
        _ => body,
    };
    Ok(NmPovm::from_json_str(&doc)?)
}

fn cmd_povm_validate(cli: &Cli, src: &PovmSource) -> Result<u8, Failure> {
    let povm = match &src.file {
        Some(path) => load_povm_file(path)?,
        None => build_povm(&source_params(src)?, src.transform_seed)?,
    };
    let report = validate_povm(&povm);
    let mut text = String::new();
    let mut csv = String::from("relation,deviation,tolerance,pass\n");
    for c in &report.checks {
        text.push_str(&format!(
            "{:<24} deviation {:.3e}  tolerance {:.1e}  {}\n",
            c.relation,
            c.deviation,
            c.tolerance,
            if c.pass { "pass" } else { "FAIL" }
        ));
        csv.push_str(&format!(
            "{},{:.9e},{:.1e},{}\n",
            c.relation, c.deviation, c.tolerance, c.pass
        ));
    }
    text.push_str(&format!("min_eigenvalue: {:.6e}\n", report.min_eigenvalue));
    text.push_str(&format!(
        "overall: {}\n",
        if report.pass { "pass" } else { "FAIL" }
    ));
    let artifact = Report {
        seed: cli.seed,
        config: source_config("povm validate", src),
        result: serde_json::to_value(&report)?,
        text,
        csv: Some(csv),
    };
    write_artifact(cli.out.as_deref(), &render(&artifact, cli.format))?;
    Ok(if report.pass { 0 } else { 2 })
}

fn cmd_povm_spectrum(cli: &Cli, src: &PovmSource) -> Result<u8, Failure> {
    // the spectrum is defined by the coefficient matrix alone, so from
    // parameters it is computed without the positivity gate
    let (spectrum, g) = match &src.file {
        Some(path) => {
            let povm = load_povm_file(path)?;
            (sts_spectrum(&povm), gamma(povm.params())?)
        }
        None => {
            let params = source_params(src)?;
            let factors = match src.transform_seed {
                Some(seed) => SpectralFactors::build(&params, None, Some(seed))?,
                None => {
                    let d2 = params.dim * params.dim;
                    SpectralFactors::build(&params, Some(DMatrix::identity(d2, d2)), None)?
                }
            };
            (
                steer_core::povm::sts_spectrum_of(&factors.s_matrix()),
                factors.gamma,
            )
        }
    };
    let values = spectrum
        .iter()
        .map(|v| format!("{v:.12}"))
        .collect::<Vec<_>>()
        .join(" ");
    let text = format!("gamma: {g:.12}\nspectrum: {values}\n");
    let mut csv = String::from("index,eigenvalue\n");
    for (i, v) in spectrum.iter().enumerate() {
        csv.push_str(&format!("{i},{v:.12e}\n"));
    }
    let artifact = Report {
        seed: cli.seed,
        config: source_config("povm spectrum", src),
        result: json!({ "gamma": g, "spectrum": spectrum }),
        text,
        csv: Some(csv),
    };
    write_artifact(cli.out.as_deref(), &render(&artifact, cli.format))?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

fn parse_family(spec: Option<&str>, dim: usize) -> Result<NmPovmParams, Failure> {
    let (n, m, x) = match spec {
        None => {
            let m = 2;
            (dim * dim - 1, m, NmPovmParams::default_purity(dim, m))
        }
        Some(s) => {
            let parts: Vec<&str> = s.split(',').collect();
            if parts.len() < 2 || parts.len() > 3 {
                return Err(fail(format!(
                    "measurement family must be N,M or N,M,x; got {s:?}"
                )));
            }
            let n = parse_num::<usize>(parts[0], "sub-POVM count")?;
            let m = parse_num::<usize>(parts[1], "outcome count")?;
            let x = if parts.len() == 3 {
                parse_num::<f64>(parts[2], "purity")?
            } else {
                NmPovmParams::default_purity(dim, m)
            };
            (n, m, x)
        }
    };
    Ok(NmPovmParams::new(dim, n, m, x)?)
}

fn cmd_detect(cli: &Cli, cmd: &DetectCmd) -> Result<u8, Failure> {
    let (state, state_desc) = resolve_state(cmd.state.as_deref(), cmd.state_file.as_deref())?;
    let basis_a = LooBasis::gellmann(state.dim_a())?;
    let basis_b = LooBasis::gellmann(state.dim_b())?;
    let mut rescaling: Option<Vec<f64>> = None;
    let verdict = match cmd.detector {
        DetectorArg::Loo => loo_steering_check(&state, &basis_a, &basis_b)?,
        DetectorArg::LooSwapped => loo_steering_check_swapped(&state, &basis_a, &basis_b)?,
        DetectorArg::LooRescaled => {
            let opts = RescaleOptions {
                restarts: cmd.restarts,
                seed: cli.seed,
                ..Default::default()
            };
            let (h, v) = optimize_rescaled_steering(&state, &basis_a, &basis_b, &opts)?;
            rescaling = Some(h.coeffs.iter().copied().collect());
            v
        }
        DetectorArg::Povm => {
            let pa = parse_family(cmd.povm_a.as_deref(), state.dim_a())?;
            let pb = parse_family(cmd.povm_b.as_deref(), state.dim_b())?;
            let povm_a = construct_povm(&pa, None, Some(cli.seed))?;
            let povm_b = construct_povm(&pb, None, Some(chain_seed(cli.seed, 1)))?;
            povm_steering_check(&state, &povm_a, &povm_b)?
        }
        DetectorArg::DasNpt => das_steering_check(&state, &DasConfig::default())?,
    };

    let mut text = format!(
        "state: {state_desc}\ndetector: {}\nlhs: {:.12}\nrhs: {:.12}\nmargin: {:.12}\nviolated: {}\n",
        verdict.detector, verdict.lhs, verdict.rhs, verdict.margin, verdict.violated
    );
    if let Some(r) = verdict.scaling_residual {
        text.push_str(&format!("scaling_residual: {r:.3e}\n"));
    }
    if let Some(h) = &rescaling {
        let rendered = h
            .iter()
            .map(|v| format!("{v:.9}"))
            .collect::<Vec<_>>()
            .join(" ");
        text.push_str(&format!("rescaling: {rendered}\n"));
    }
    let csv = format!(
        "state,detector,lhs,rhs,margin,violated\n{state_desc},{},{:.12e},{:.12e},{:.12e},{}\n",
        verdict.detector, verdict.lhs, verdict.rhs, verdict.margin, verdict.violated
    );
    let mut result = json!({
        "state": state_desc,
        "verdict": serde_json::to_value(&verdict)?,
    });
    if let Some(h) = rescaling {
        result["rescaling"] = json!(h);
    }
    let artifact = Report {
        seed: cli.seed,
        config: json!({
            "command": "detect",
            "state": state_desc,
            "detector": verdict.detector.to_string(),
            "restarts": cmd.restarts,
            "povm_a": cmd.povm_a,
            "povm_b": cmd.povm_b,
        }),
        result,
        text,
        csv: Some(csv),
    };
    write_artifact(cli.out.as_deref(), &render(&artifact, cli.format))?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// volume
// ---------------------------------------------------------------------------

fn cmd_volume_run(cli: &Cli, args: &VolumeJobArgs) -> Result<u8, Failure> {
    let (da, db, samples) = match (args.da, args.db, args.samples) {
        (Some(a), Some(b), Some(n)) => (a, b, n),
        _ => {
            return Err(fail(
                "volume needs --da, --db and --samples (or a table/audit action)",
            ))
        }
    };
    let detector = match args.detector {
        DetectorArg::Loo => Detector::Loo,
        DetectorArg::LooRescaled => Detector::LooRescaled {
            restarts: args.restarts,
        },
        DetectorArg::Povm => Detector::Povm {
            a: parse_family(args.povm_a.as_deref(), da)?,
            b: parse_family(args.povm_b.as_deref(), db)?,
            construction_seed: args.construction_seed.unwrap_or(cli.seed),
        },
        DetectorArg::DasNpt => Detector::DasNpt,
        DetectorArg::LooSwapped => {
            return Err(fail(
                "loo-swapped is a single-state detector; not available for volume jobs",
            ))
        }
    };
    let mut job = EstimationJob::new(da, db, detector, samples, cli.seed).with_chains(args.chains);
    job.burn_in = args.burn_in;
    job.thinning = args.thinning;
    let estimate = estimate_ratio(&job)?;
    if let Some(path) = &args.record {
        append_jsonl(path, &job_record_line(&job, &estimate)?)?;
    }
    let text = format!(
        "ratio: {:.6e}\nstderr: {:.6e}\nhits: {}\nsamples: {}\ndetector: {}\nwall_time_s: {:.3}\n",
        estimate.ratio,
        estimate.stderr,
        estimate.hits,
        estimate.samples,
        estimate.detector,
        estimate.wall_time_s
    );
    let csv = format!(
        "ratio,stderr,hits,samples,detector,seed,wall_time_s\n{:.9e},{:.9e},{},{},{},{},{:.3}\n",
        estimate.ratio,
        estimate.stderr,
        estimate.hits,
        estimate.samples,
        estimate.detector,
        estimate.seed,
        estimate.wall_time_s
    );
    let artifact = Report {
        seed: cli.seed,
        config: json!({
            "command": "volume",
            "job": serde_json::to_value(&job)?,
        }),
        result: serde_json::to_value(&estimate)?,
        text,
        csv: Some(csv),
    };
    write_artifact(cli.out.as_deref(), &render(&artifact, cli.format))?;
    Ok(0)
}

fn cmd_volume_table(cli: &Cli, args: &TableArgs) -> Result<u8, Failure> {
    let report = match &args.rows {
        Some(spec) => {
            let rows = spec
                .split(',')
                .map(|p| parse_num::<usize>(p, "row index"))
                .collect::<Result<Vec<_>, _>>()?;
            reproduce_table_rows(args.which, args.scale, cli.seed, &rows)?
        }
        None => reproduce_table(args.which, args.scale, cli.seed)?,
    };
    let artifact = Report {
        seed: cli.seed,
        config: json!({
            "command": "volume table",
            "which": args.which,
            "scale": args.scale,
            "rows": args.rows,
        }),
        result: serde_json::to_value(&report)?,
        text: report.to_text(),
        csv: Some(report.to_csv()),
    };
    write_artifact(cli.out.as_deref(), &render(&artifact, cli.format))?;
    Ok(if report.all_pass() { 0 } else { 2 })
}

fn cmd_volume_audit(cli: &Cli, args: &AuditArgs) -> Result<u8, Failure> {
    let report = cross_detector_audit(args.da, args.db, args.samples, cli.seed)?;
    let text = format!(
        "samples: {}\nloo_hits: {} (ratio {:.6e})\ndas_hits: {} (ratio {:.6e})\ncounterexamples: {}\n",
        report.samples,
        report.loo_hits,
        report.loo_ratio,
        report.das_hits,
        report.das_ratio,
        report.counterexamples
    );
    let csv = format!(
        "samples,loo_hits,das_hits,loo_ratio,das_ratio,counterexamples\n{},{},{},{:.9e},{:.9e},{}\n",
        report.samples,
        report.loo_hits,
        report.das_hits,
        report.loo_ratio,
        report.das_ratio,
        report.counterexamples
    );
    let ok = report.counterexamples == 0;
    let artifact = Report {
        seed: cli.seed,
        config: json!({
            "command": "volume audit",
            "da": args.da,
            "db": args.db,
            "samples": args.samples,
        }),
        result: serde_json::to_value(&report)?,
        text,
        csv: Some(csv),
    };
    write_artifact(cli.out.as_deref(), &render(&artifact, cli.format))?;
    Ok(if ok { 0 } else { 2 })
}

// ---------------------------------------------------------------------------
// bellscan
// ---------------------------------------------------------------------------

fn cmd_bellscan(cli: &Cli, cmd: &BellscanCmd) -> Result<u8, Failure> {
    let points = bell_diagonal_scan(cmd.resolution)?;
    let csv = scan_to_csv(&points);
    let artifact = Report {
        seed: cli.seed,
        config: json!({
            "command": "bellscan",
            "resolution": cmd.resolution,
        }),
        result: serde_json::to_value(&points)?,
        text: csv.clone(),
        csv: Some(csv),
    };
    write_artifact(cli.out.as_deref(), &render(&artifact, cli.format))?;
    Ok(0)
}
