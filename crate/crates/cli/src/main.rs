//! `osclab` command line.
//!
//! Exit status: 0 when every assertion of the run holds, 1 on an assertion
//! or numerical failure, 2 on an invalid config, 3 when the quadrature node
//! budget is exceeded.

// Negated comparisons reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use config::{load_config, load_manifest, Experiment, LambdaGrid, Manifest, Method};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] osclab_core::Error),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use osclab_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::BudgetExceeded { .. }) => 3,
            CliError::Core(
                E::InvalidParameter(_) | E::DimensionMismatch { .. } | E::Unsupported(_) | E::UnknownPhase(_),
            ) => 2,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "osclab", version, about = "Oscillatory integral decay laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decay sweep of sup_ξ |I(λ, ξ)| over a λ grid.
    Sweep(SweepArgs),
    /// Randomized geometry property suite.
    GeomCheck(GeomCheckArgs),
    /// Cubic nondegeneracy condition on a box.
    Nondegen(NondegenArgs),
    /// Hessian rank scan over random cubic forms.
    RankScan(RankScanArgs),
    /// Sublevel right-hand side against measured decay.
    BoundCheck(BoundCheckArgs),
    /// Runs a config file; its `command` field selects the experiment.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-runs the config stored in a manifest.
    Replay {
        manifest: PathBuf,
        /// Defaults to `replay/` next to the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `osclab-out/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Catalog phase name.
    #[arg(long)]
    phase: Option<String>,
    /// `min:max:points`.
    #[arg(long)]
    lambda: Option<LambdaGrid>,
    #[arg(long)]
    amplitude_radius: Option<f64>,
    /// Half-width of the ξ box.
    #[arg(long)]
    xi_box: Option<f64>,
    #[arg(long)]
    xi_points: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long, requires = "slope_tol", allow_negative_numbers = true)]
    expect_slope: Option<f64>,
    #[arg(long, requires = "expect_slope")]
    slope_tol: Option<f64>,
    #[arg(long)]
    xi_refinement_check: bool,
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    node_budget: Option<u64>,
}

#[derive(Args)]
struct GeomCheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    phase: Option<String>,
    /// Half-width of the cube domain.
    #[arg(long)]
    domain_half_width: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    gap_trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct NondegenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    phase: Option<String>,
    #[arg(long)]
    domain_half_width: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    points_per_axis: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Expect the condition to fail.
    #[arg(long)]
    expect_fail: bool,
}

#[derive(Args)]
struct RankScanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    cubics: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BoundCheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    phase: Option<String>,
    #[arg(long)]
    lambda: Option<LambdaGrid>,
    #[arg(long)]
    amplitude_radius: Option<f64>,
    #[arg(long)]
    xi_box: Option<f64>,
    #[arg(long)]
    xi_points: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n_exponent: Option<u32>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    grid_points_per_axis: Option<usize>,
    #[arg(long)]
    extension: Option<f64>,
}

/// Flag overrides as `(path, value)` pairs into the config object.
type Overrides = Vec<(&'static [&'static str], Value)>;

fn push<T: serde::Serialize>(o: &mut Overrides, path: &'static [&'static str], v: Option<T>) {
    if let Some(v) = v {
        o.push((path, json!(v)));
    }
}

fn lambda_value(g: Option<LambdaGrid>) -> Option<Value> {
    g.map(|g| json!({"min": g.min, "max": g.max, "points": g.points}))
}

fn resolve(command: &str, common: &Common, overrides: Overrides) -> Result<Experiment, CliError> {
    let mut root = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => Value::Object(Map::new()),
    };
    let obj = root
        .as_object_mut()
        .ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
    match obj.get("command") {
        Some(Value::String(c)) if c != command => {
            return Err(CliError::Config(format!("config is for `{c}`, not `{command}`")));
        }
        _ => {}
    }
    obj.insert("command".into(), json!(command));
    for (path, value) in overrides {
        set_path(obj, path, value)?;
    }
    if let Some(out) = &common.out {
        obj.insert("out".into(), json!(out));
    }
    serde_json::from_value(root).map_err(|e| CliError::Config(e.to_string()))
}

fn set_path(obj: &mut Map<String, Value>, path: &[&str], value: Value) -> Result<(), CliError> {
    let (last, head) = path.split_last().expect("non-empty path");
    let mut cur = obj;
    for key in head {
        let next = cur.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
        cur = next
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{key}` must be an object")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn experiment(command: Command) -> Result<(Experiment, Option<PathBuf>), CliError> {
    let exp = match command {
        Command::Sweep(a) => {
            let mut o = Overrides::new();
            push(&mut o, &["phase"], a.phase);
            push(&mut o, &["lambda"], lambda_value(a.lambda));
            push(&mut o, &["amplitude", "radius"], a.amplitude_radius);
            push(&mut o, &["xi", "box"], a.xi_box);
            push(&mut o, &["xi", "points_per_axis"], a.xi_points);
            push(&mut o, &["method"], a.method);
            push(
                &mut o,
                &["expect_slope"],
                a.expect_slope
                    .zip(a.slope_tol)
                    .map(|(t, tol)| json!({"target": t, "tol": tol})),
            );
            push(&mut o, &["quadrature", "node_budget"], a.node_budget);
            if a.xi_refinement_check {
                o.push((&["xi_refinement_check"], json!(true)));
            }
            if a.svg {
                o.push((&["svg"], json!(true)));
            }
            resolve("sweep", &a.common, o)?
        }
        Command::GeomCheck(a) => {
            let mut o = Overrides::new();
            push(&mut o, &["phase"], a.phase);
            push(
                &mut o,
                &["domain"],
                a.domain_half_width.map(|h| json!({"half_width": h})),
            );
            push(&mut o, &["trials"], a.trials);
            push(&mut o, &["gap_trials"], a.gap_trials);
            push(&mut o, &["seed"], a.seed);
            resolve("geom-check", &a.common, o)?
        }
        Command::Nondegen(a) => {
            let mut o = Overrides::new();
            push(&mut o, &["phase"], a.phase);
            push(
                &mut o,
                &["domain"],
                a.domain_half_width.map(|h| json!({"half_width": h})),
            );
            push(&mut o, &["m"], a.m);
            push(&mut o, &["r"], a.r);
            push(&mut o, &["points_per_axis"], a.points_per_axis);
            push(&mut o, &["seed"], a.seed);
            if a.expect_fail {
                o.push((&["expect_holds"], json!(false)));
            }
            resolve("nondegen", &a.common, o)?
        }
        Command::RankScan(a) => {
            let mut o = Overrides::new();
            push(&mut o, &["n"], a.n);
            push(&mut o, &["cubics"], a.cubics);
            push(&mut o, &["points"], a.points);
            push(&mut o, &["tol"], a.tol);
            push(&mut o, &["seed"], a.seed);
            resolve("rank-scan", &a.common, o)?
        }
        Command::BoundCheck(a) => {
            let mut o = Overrides::new();
            push(&mut o, &["phase"], a.phase);
            push(&mut o, &["lambda"], lambda_value(a.lambda));
            push(&mut o, &["amplitude", "radius"], a.amplitude_radius);
            push(&mut o, &["xi", "box"], a.xi_box);
            push(&mut o, &["xi", "points_per_axis"], a.xi_points);
            push(&mut o, &["k"], a.k);
            push(&mut o, &["n_exponent"], a.n_exponent);
            push(&mut o, &["r_max"], a.r_max);
            push(&mut o, &["grid_points_per_axis"], a.grid_points_per_axis);
            push(&mut o, &["extension"], a.extension);
            resolve("bound-check", &a.common, o)?
        }
        Command::Run { config, out } => {
            let mut exp = load_config(&config)?;
            if out.is_some() {
                exp.set_out(out);
            }
            exp
        }
        Command::Replay { manifest, out } => {
            let mut exp = load_manifest(&manifest)?.config;
            let dir = manifest.parent().unwrap_or(Path::new(".")).join("replay");
            exp.set_out(Some(out.unwrap_or(dir)));
            exp
        }
    };
    let out = exp.out().map(Path::to_path_buf);
    Ok((exp, out))
}

fn execute(command: Command) -> Result<bool, CliError> {
    let (mut exp, out) = experiment(command)?;
    let out = out.unwrap_or_else(|| PathBuf::from("osclab-out").join(exp.command()));
    run::validate(&exp)?;
    let mut dir = output::OutDir::create(&out)?;
    let outcome = run::execute(&exp, &mut dir)?;
    // The manifest is independent of where the outputs went.
    exp.set_out(None);
    dir.write_json("manifest.json", &Manifest::new(exp))?;
    println!("{}", outcome.headline);
    for path in dir.written() {
        println!("wrote {}", path.display());
    }
    println!("{}", if outcome.passed { "PASS" } else { "FAIL" });
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("osclab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
