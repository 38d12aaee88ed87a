//! The `dykstra` command line.
//!
//! Exit status is 0 on success, 2 when a solve hits its cycle cap and 1 on
//! any error, including bad flags. `DYKSTRA_SEED` overrides `--seed`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dykstra::diagnostics::{
    check_cycle_contraction, estimate_mu_over_subsets, estimate_mu_with, noise_floor, rate_report, tight_normals,
    CheckStatus, MU_REFINE_STEPS, MU_SAMPLES,
};
use dykstra::generate::{generate, random_subspace_family, GeneratorConfig};
use dykstra::geometry::{dh97_alpha, product_gap_norm};
use dykstra::lasso::{solve_lasso, to_dual_bap, LassoProblem};
use dykstra::linalg::{dist, norm};
use dykstra::oracle::{brute_force_projection, sensitivity_probe};
use dykstra::solver::{dual_value, solve};
use dykstra::{
    Instance, ProjectorKind, QSelector, Schedule, ShqpMode, ShqpPolicy, SolveOptions, SolveOutcome, SolveStatus,
    StoppingRule, TraceLevel,
};
use serde_json::{json, Value};

use crate::error::{Result, ToolError};
use crate::instance_io::{instance_to_string, load_dual, load_instance, save_dual, save_instance};
use crate::tables::{read_matrix, read_vector, write_rate_csv, write_trace_file};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNCONVERGED: i32 = 2;

const DEFAULT_DELTA2: &str = "1e-1,1e-2,1e-3,1e-4,1e-5,1e-6,1e-7,1e-8";

#[derive(Debug, Parser)]
#[command(
    name = "dykstra",
    version,
    about = "Projection onto intersections of polyhedra by Dykstra's algorithm"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Project the anchor of an instance onto the intersection of its sets
    Solve(SolveArgs),
    /// Solve min ½‖Ax − b‖² + λ‖x‖₁ through its projection dual
    Lasso(LassoArgs),
    /// Write a random instance with a verified known projection
    Generate(GenerateArgs),
    /// Rate, regularity, angle and sensitivity diagnostics
    #[command(subcommand)]
    Diag(DiagCommand),
    /// Project by enumerating active sets
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct PolicyFlags {
    /// `cyclic`, `random:<seed>[:<w′>]` or a word such as `1,2,1,3`
    #[arg(long, default_value = "cyclic")]
    schedule: String,
    /// off, last-halfspace or accumulate
    #[arg(long, default_value = "off")]
    shqp: String,
    /// visited, none or every:<k>
    #[arg(long = "q-policy", default_value = "visited")]
    q_policy: String,
    /// active-set, or dykstra for the warmstarted inner loop
    #[arg(long, default_value = "active-set")]
    projector: String,
    #[arg(long = "max-cycles", default_value_t = 10_000)]
    max_cycles: usize,
}

#[derive(Debug, Args)]
struct SolverFlags {
    #[command(flatten)]
    policy: PolicyFlags,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Per-step trace CSV
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Initial multipliers as written by --dual-out
    #[arg(long)]
    warmstart: Option<PathBuf>,
    /// Write the final multipliers here
    #[arg(long = "dual-out")]
    dual_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Debug, Args)]
struct LassoArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    rhs: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    kprime: usize,
    /// Fraction of sets with no tight halfspace
    #[arg(long, default_value_t = 0.0)]
    interior: f64,
    #[arg(long, default_value_t = 1.0)]
    distance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    rotate: bool,
    #[arg(long)]
    translate: bool,
    /// Defaults to standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum DiagCommand {
    /// Fit the linear tail and locate the transition for one run
    Rates(RatesArgs),
    /// Regularity constant of hyperplanes through a common point
    Mu(MuArgs),
    /// Angle bound against the measured product gap for random subspaces
    Angles(AnglesArgs),
    /// Displacement of a projection under perturbations of size δ₂
    Sensitivity(SensitivityArgs),
}

#[derive(Debug, Args)]
struct RatesArgs {
    /// Must carry a known projection
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    policy: PolicyFlags,
    /// Comma-separated δ₂ grid
    #[arg(long, default_value = DEFAULT_DELTA2)]
    delta2: String,
    /// Per-cycle errors and decreases
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also check the per-cycle contraction
    #[arg(long)]
    contraction: bool,
}

#[derive(Debug, Args)]
struct MuArgs {
    /// Uses the halfspaces tight at the known projection
    #[arg(long, conflicts_with = "normals", required_unless_present = "normals")]
    instance: Option<PathBuf>,
    /// CSV with one normal per row
    #[arg(long)]
    normals: Option<PathBuf>,
    #[arg(long, default_value_t = MU_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = MU_REFINE_STEPS)]
    refine: usize,
    /// Minimize over all nonempty subfamilies
    #[arg(long)]
    subsets: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct AnglesArgs {
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    families: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Power iterations for the product gap
    #[arg(long, default_value_t = 200)]
    iterations: usize,
}

#[derive(Debug, Args)]
struct SensitivityArgs {
    /// Rows of A in {x : Ax ≤ b}
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    rhs: PathBuf,
    /// The point projected
    #[arg(long)]
    point: PathBuf,
    #[arg(long, default_value = "1e-1,1e-2,1e-3,1e-4,1e-5,1e-6")]
    delta2: String,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. `env_seed` is the value of `DYKSTRA_SEED`, if set.
pub fn run<I, T>(args: I, env_seed: Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, env_seed.as_deref(), out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cmd: Command, env_seed: Option<&str>, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Solve(a) => cmd_solve(a, out),
        Command::Lasso(a) => cmd_lasso(a, out),
        Command::Generate(a) => cmd_generate(a, env_seed, out),
        Command::Diag(DiagCommand::Rates(a)) => cmd_rates(a, out),
        Command::Diag(DiagCommand::Mu(a)) => cmd_mu(a, env_seed, out),
        Command::Diag(DiagCommand::Angles(a)) => cmd_angles(a, env_seed, out),
        Command::Diag(DiagCommand::Sensitivity(a)) => cmd_sensitivity(a, out),
        Command::Oracle(a) => cmd_oracle(a, out),
    }
}

fn seed(flag: u64, env_seed: Option<&str>) -> Result<u64> {
    match env_seed {
        Some(s) => s
            .trim()
            .parse()
            .map_err(|_| ToolError::Usage(format!("DYKSTRA_SEED=`{s}` is not an unsigned integer"))),
        None => Ok(flag),
    }
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| ToolError::Usage(format!("bad {what} entry `{t}`")))
        })
        .collect()
}

fn emit(out: &mut dyn Write, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    writeln!(out, "{text}").map_err(|e| ToolError::io("<stdout>", e))
}

fn build_options(policy: &PolicyFlags, m: usize, tol: f64) -> Result<(Schedule, SolveOptions)> {
    let sched = Schedule::parse(&policy.schedule, m)?;
    let mode: ShqpMode = policy.shqp.parse()?;
    let q_selector: QSelector = policy.q_policy.parse()?;
    let projector = match policy.projector.as_str() {
        "active-set" => ProjectorKind::ActiveSet,
        "dykstra" => ProjectorKind::WarmstartDykstra { tol: 1e-12 },
        other => {
            return Err(ToolError::Usage(format!(
                "unknown projector `{other}` (expected active-set or dykstra)"
            )))
        }
    };
    let opts = SolveOptions {
        policy: ShqpPolicy { mode, q_selector },
        projector,
        stop: StoppingRule {
            tol,
            max_cycles: policy.max_cycles,
            ..StoppingRule::default()
        },
        trace: TraceLevel::Off,
        warmstart: None,
    };
    Ok((sched, opts))
}

fn prepare(inst: &Instance, flags: &SolverFlags) -> Result<(Schedule, SolveOptions)> {
    let (sched, mut opts) = build_options(&flags.policy, inst.m(), flags.tol)?;
    if flags.trace.is_some() {
        opts.trace = TraceLevel::Steps;
    }
    if let Some(p) = &flags.warmstart {
        opts.warmstart = Some(load_dual(p, inst)?);
    }
    Ok((sched, opts))
}

fn finish(out: &SolveOutcome, flags: &SolverFlags) -> Result<i32> {
    if let Some(p) = &flags.trace {
        write_trace_file(p, &out.traces)?;
    }
    if let Some(p) = &flags.dual_out {
        save_dual(&out.y, p)?;
    }
    Ok(match out.status {
        SolveStatus::Converged => EXIT_OK,
        SolveStatus::Unconverged => EXIT_UNCONVERGED,
    })
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::Unconverged => "unconverged",
    }
}

fn cmd_solve(a: SolveArgs, w: &mut dyn Write) -> Result<i32> {
    let inst = load_instance(&a.instance)?;
    let (sched, opts) = prepare(&inst, &a.flags)?;
    let out = solve(&inst, &sched, &opts)?;
    let mut report = json!({
        "status": status_name(out.status),
        "cycles": out.cycles,
        "x": out.x,
    });
    if let Some(xs) = inst.known_projection() {
        report["err"] = json!(dist(&out.x, xs));
        report["dual_value"] = json!(dual_value(&inst, &out.y)?.to_f64());
    }
    emit(w, &report)?;
    finish(&out, &a.flags)
}

fn cmd_lasso(a: LassoArgs, w: &mut dyn Write) -> Result<i32> {
    let rows = read_matrix(&a.matrix)?;
    let b = read_vector(&a.rhs)?;
    let p = LassoProblem::from_rows(&rows, b, a.lambda)?;
    let inst = to_dual_bap(&p)?;
    let (sched, opts) = prepare(&inst, &a.flags)?;
    let (x, out) = solve_lasso(&p, &sched, &opts)?;
    emit(
        w,
        &json!({
            "status": status_name(out.status),
            "cycles": out.cycles,
            "x": x,
            "objective": p.objective(&x),
        }),
    )?;
    finish(&out, &a.flags)
}

fn cmd_generate(a: GenerateArgs, env_seed: Option<&str>, w: &mut dyn Write) -> Result<i32> {
    let cfg = GeneratorConfig {
        n: a.n,
        m: a.m,
        k: a.k,
        k_prime: a.kprime,
        interior_fraction: a.interior,
        distance: a.distance,
        seed: seed(a.seed, env_seed)?,
        rotate: a.rotate,
        translate: a.translate,
    };
    let inst = generate(&cfg)?;
    match &a.out {
        Some(p) => save_instance(&inst, p)?,
        None => writeln!(w, "{}", instance_to_string(&inst)).map_err(|e| ToolError::io("<stdout>", e))?,
    }
    Ok(EXIT_OK)
}

fn require_known(inst: &Instance, path: &Path) -> Result<()> {
    if inst.known_projection().is_none() {
        return Err(ToolError::invalid(
            path,
            "known_projection",
            "this diagnostic needs a known projection",
        ));
    }
    Ok(())
}

fn cmd_rates(a: RatesArgs, w: &mut dyn Write) -> Result<i32> {
    let inst = load_instance(&a.instance)?;
    require_known(&inst, &a.instance)?;
    let (sched, mut opts) = build_options(&a.policy, inst.m(), noise_floor(inst.d()))?;
    opts.stop.primal_change = false;
    opts.trace = TraceLevel::Cycles;
    let grid = parse_list(&a.delta2, "δ₂")?;
    let out = solve(&inst, &sched, &opts)?;
    let report = rate_report(&inst, &out.traces, &grid)?;
    let mut value = json!({
        "status": status_name(out.status),
        "cycles": out.cycles,
        "w_prime": sched.w_prime(),
        "report": report,
    });
    if a.contraction {
        let tight = tight_normals(&inst, 1e-9 * (1.0 + norm(inst.d())))?;
        if tight.is_empty() {
            value["contraction"] = Value::Null;
        } else {
            let mu = if tight.len() <= 12 {
                estimate_mu_over_subsets(&tight, 2000, MU_REFINE_STEPS)?
            } else {
                estimate_mu_with(&tight, MU_SAMPLES, MU_REFINE_STEPS, 0)?
            };
            let (mut pass, mut fail, mut skip) = (0, 0, 0);
            let mut failures = Vec::new();
            for t in &out.traces {
                let c = check_cycle_contraction(&inst, t, mu.mu, sched.w_prime())?;
                match c.status {
                    CheckStatus::Pass => pass += 1,
                    CheckStatus::Inconclusive => skip += 1,
                    CheckStatus::Fail => {
                        fail += 1;
                        failures.push(json!({"cycle": t.cycle, "margin": c.margin, "margin_stated": c.margin_stated}));
                    }
                }
            }
            value["contraction"] = json!({
                "mu": mu,
                "pass": pass,
                "fail": fail,
                "inconclusive": skip,
                "failures": failures,
            });
        }
    }
    emit(w, &value)?;
    if let Some(p) = &a.csv {
        let file = fs::File::create(p).map_err(|e| ToolError::io(p, e))?;
        write_rate_csv(file, &report).map_err(|e| ToolError::io(p, e))?;
    }
    Ok(match out.status {
        SolveStatus::Converged => EXIT_OK,
        SolveStatus::Unconverged => EXIT_UNCONVERGED,
    })
}

fn cmd_mu(a: MuArgs, env_seed: Option<&str>, w: &mut dyn Write) -> Result<i32> {
    let normals: Vec<Vec<f64>> = match (&a.instance, &a.normals) {
        (Some(p), _) => {
            let inst = load_instance(p)?;
            require_known(&inst, p)?;
            tight_normals(&inst, 1e-9 * (1.0 + norm(inst.d())))?
        }
        (None, Some(p)) => read_matrix(p)?
            .into_iter()
            .map(|f| {
                let nf = norm(&f);
                f.into_iter().map(|v| v / nf).collect()
            })
            .collect(),
        (None, None) => unreachable!("clap requires one source"),
    };
    let est = if a.subsets {
        estimate_mu_over_subsets(&normals, a.samples, a.refine)?
    } else {
        estimate_mu_with(&normals, a.samples, a.refine, seed(a.seed, env_seed)?)?
    };
    emit(w, &json!({ "normals": normals.len(), "estimate": est }))?;
    Ok(EXIT_OK)
}

fn cmd_angles(a: AnglesArgs, env_seed: Option<&str>, w: &mut dyn Write) -> Result<i32> {
    let base = seed(a.seed, env_seed)?;
    let mut rows = Vec::with_capacity(a.families);
    for f in 0..a.families as u64 {
        let fam = random_subspace_family(a.dim, a.k, base.wrapping_add(f))?;
        let alpha = dh97_alpha(&fam)?;
        let gap = product_gap_norm(&fam, a.iterations, base.wrapping_add(f))?;
        rows.push(json!({
            "seed": base.wrapping_add(f),
            "ranks": fam.iter().map(|s| s.rank()).collect::<Vec<_>>(),
            "alpha": alpha,
            "gap_norm": gap,
            "within_bound": gap <= alpha + 1e-9,
        }));
    }
    emit(w, &Value::Array(rows))?;
    Ok(EXIT_OK)
}

fn cmd_sensitivity(a: SensitivityArgs, w: &mut dyn Write) -> Result<i32> {
    let rows = read_matrix(&a.matrix)?;
    let b = read_vector(&a.rhs)?;
    let d = read_vector(&a.point)?;
    let grid = parse_list(&a.delta2, "δ₂")?;
    let rows_out = grid
        .iter()
        .map(|&d2| Ok(json!({"delta2": d2, "displacement": sensitivity_probe(&rows, &b, &d, d2)?})))
        .collect::<Result<Vec<_>>>()?;
    emit(w, &Value::Array(rows_out))?;
    Ok(EXIT_OK)
}

fn cmd_oracle(a: OracleArgs, w: &mut dyn Write) -> Result<i32> {
    let inst = load_instance(&a.instance)?;
    let (x, cert) = brute_force_projection(&inst)?;
    let y = cert.dual_state(&inst)?;
    emit(
        w,
        &json!({
            "x": x,
            "active": cert.active,
            "multipliers": y.multipliers(),
            "subsets_checked": cert.subsets_checked,
        }),
    )?;
    Ok(EXIT_OK)
}
