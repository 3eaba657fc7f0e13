//! Batch front end for the `border-curve` library.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use border_curve::allocation::{
    canonical_scores_from_extremal, expected_revenue, expected_revenue_mc, induced_reduced_form_exact,
    induced_reduced_form_mc, ScoreRule,
};
use border_curve::environments::Environment;
use border_curve::feasibility::{check_extremal, check_feasible, principal_curve, Status};
use border_curve::monotone::read_breakpoints_csv;
use border_curve::monotone::MonotoneFn;
use border_curve::solver::{
    mre_residual, myerson_reduced_form, optimal_fractions, optimal_reduced_form, solve_path, SolverPath,
};
use border_curve::Error;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

mod verify;

/// Exit code for success, feasibility, or a passing check.
pub const EXIT_OK: i32 = 0;
/// Exit code for a negative verdict.
pub const EXIT_NEGATIVE: i32 = 1;
/// Exit code for usage or input errors.
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping the worker threads.
pub const THREADS_VAR: &str = "BORDER_CURVE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "border-curve", version, about = "Feasibility, extremality and optimal design of interim reduced forms")]
struct Cli {
    /// Tolerance band around one for feasibility and extremality verdicts.
    #[arg(long, global = true, default_value_t = 1e-7)]
    tol: f64,
    /// Horizon in log coordinates; overrides the environment file.
    #[arg(long, global = true)]
    tmax: Option<f64>,
    /// Points of the quantile grid used for tabulated outputs.
    #[arg(long, global = true, default_value_t = 1001)]
    grid: usize,
    /// Monte Carlo sample count.
    #[arg(long, global = true, default_value_t = 100_000)]
    samples: usize,
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for output files; standard output when absent (`solve` defaults to `.`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print machine-readable JSON verdicts.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide Border feasibility of a reduced form given as one CSV per bidder.
    Feasible {
        #[arg(required = true)]
        forms: Vec<PathBuf>,
    },
    /// Decide whether a feasible reduced form is extremal.
    Extremal {
        #[arg(required = true)]
        forms: Vec<PathBuf>,
    },
    /// Tabulate the principal curve and the Border value along it.
    Curve {
        #[arg(required = true)]
        forms: Vec<PathBuf>,
    },
    /// Solve for the revenue-optimal reduced form of an environment.
    Solve { env: PathBuf },
    /// Monte Carlo check of a score rule: the optimal rule of `env.json`, or pure score CSVs.
    Simulate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Expected revenue of a reduced form in an environment.
    Revenue {
        env: PathBuf,
        #[arg(required = true)]
        forms: Vec<PathBuf>,
    },
    /// Run the reference example suite and print a pass/fail table.
    Verify,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.into())
    }
}

type Outcome = std::result::Result<i32, Failure>;

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    configure_threads()?;
    if !(cli.tol > 0.0) {
        return Err(Failure::Usage(format!("--tol must be positive, got {}", cli.tol)));
    }
    if cli.tmax.is_some_and(|t| !(t > 0.0)) {
        return Err(Failure::Usage("--tmax must be positive".into()));
    }
    if cli.grid < 2 {
        return Err(Failure::Usage("--grid needs at least 2 points".into()));
    }
    match &cli.command {
        Command::Feasible { forms } => feasible(cli, forms),
        Command::Extremal { forms } => extremal(cli, forms),
        Command::Curve { forms } => curve(cli, forms),
        Command::Solve { env } => solve(cli, env),
        Command::Simulate { inputs } => simulate(cli, inputs),
        Command::Revenue { env, forms } => revenue(cli, env, forms),
        Command::Verify => verify::run(cli.json),
    }
}

fn configure_threads() -> std::result::Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    // A second configuration in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Formats with at most 12 significant digits.
pub fn num(x: f64) -> String {
    let r = round12(x);
    if r != 0.0 && r.is_finite() && !(1e-4..1e15).contains(&r.abs()) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

fn read_forms(paths: &[PathBuf]) -> anyhow::Result<Vec<MonotoneFn<f64>>> {
    paths
        .iter()
        .map(|p| {
            let f = fs::File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
            read_breakpoints_csv(f).with_context(|| format!("cannot read {}", p.display()))
        })
        .collect()
}

fn read_env(path: &Path, tmax: Option<f64>) -> anyhow::Result<Environment<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut env = Environment::from_json_str(&text, path.parent())
        .with_context(|| format!("cannot read environment {}", path.display()))?;
    if let Some(t) = tmax {
        env.t_max = t;
    }
    Ok(env)
}

fn quantile_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| k as f64 / (points - 1) as f64).collect()
}

/// Writes `text` to `dir/name`, or to standard output without a directory.
fn emit(dir: Option<&Path>, name: &str, text: &str) -> anyhow::Result<()> {
    match dir {
        Some(d) => {
            fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
            let path = d.join(name);
            fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Feasible => "feasible",
        Status::BoundaryExtremal => "boundary-extremal",
        Status::Infeasible => "infeasible",
    }
}

fn feasible(cli: &Cli, paths: &[PathBuf]) -> Outcome {
    let x = read_forms(paths)?;
    let v = check_feasible(&x, cli.tol)?;
    let witness: Vec<f64> = v.witness_u.iter().map(|&u| round12(u)).collect();
    if cli.json {
        print_json(&json!({
            "status": status_name(v.status),
            "sup_b": round12(v.sup_b),
            "witness_s": round12(v.witness_s),
            "witness_u": witness,
            "extremality_gap": round12(v.extremality_gap),
        }));
    } else {
        println!("status: {}", status_name(v.status));
        println!("sup B along curve: {}", num(v.sup_b));
        println!("extremality gap: {}", num(v.extremality_gap));
        let u: Vec<String> = witness.iter().map(|&u| num(u)).collect();
        println!("witness: s = {}, u = ({})", num(v.witness_s), u.join(", "));
    }
    Ok(if v.status == Status::Infeasible { EXIT_NEGATIVE } else { EXIT_OK })
}

fn extremal(cli: &Cli, paths: &[PathBuf]) -> Outcome {
    let x = read_forms(paths)?;
    let (verdict, extremal) = match check_extremal(&x, cli.tol) {
        Ok(true) => ("extremal", true),
        Ok(false) => ("not-extremal", false),
        Err(Error::NotFeasible) => ("infeasible", false),
        Err(e) => return Err(e.into()),
    };
    if cli.json {
        print_json(&json!({ "verdict": verdict, "extremal": extremal }));
    } else {
        println!("{verdict}");
    }
    Ok(if extremal { EXIT_OK } else { EXIT_NEGATIVE })
}

fn curve(cli: &Cli, paths: &[PathBuf]) -> Outcome {
    let x = read_forms(paths)?;
    let c = principal_curve(&x)?;
    let mut text = String::from("s");
    for i in 1..=x.len() {
        text.push_str(&format!(",nu_{i}"));
    }
    text.push_str(",border\n");
    for s in quantile_grid(cli.grid) {
        let (nu, b) = (c.nu(s), c.border_direct(s));
        text.push_str(&num(s));
        for u in nu {
            text.push(',');
            text.push_str(&num(u));
        }
        text.push(',');
        text.push_str(&num(b));
        text.push('\n');
    }
    emit(cli.out.as_deref(), "curve.csv", &text)?;
    Ok(EXIT_OK)
}

fn path_csv(path: &SolverPath<f64>) -> String {
    let n = path.n();
    let mut text = String::from("t,p_sharp");
    for i in 1..=n {
        text.push_str(&format!(",delta_sharp_{i}"));
    }
    for i in 1..=n {
        text.push_str(&format!(",delta_star_{i}"));
    }
    text.push('\n');
    for (k, &t) in path.t_grid.iter().enumerate() {
        let mut row = vec![num(t), num(path.p_sharp[k])];
        row.extend(path.delta_sharp.iter().map(|d| num(d.deltas()[k])));
        row.extend(path.delta_star.iter().map(|d| num(d.eval(t))));
        text.push_str(&row.join(","));
        text.push('\n');
    }
    text
}

fn solve(cli: &Cli, env_path: &Path) -> Outcome {
    let env = read_env(env_path, cli.tmax)?;
    let path = solve_path(&env)?;
    let x = optimal_reduced_form(&path)?;
    let rule = optimal_fractions(&path).ok();
    let grid = quantile_grid(cli.grid);

    let mut alloc = String::from("bidder,u,x_star,pvv,fraction\n");
    for (i, xi) in x.iter().enumerate() {
        for &u in &grid {
            let frac = rule.as_ref().map_or(String::new(), |r| num(r.fraction(i, u)));
            alloc.push_str(&format!("{},{},{},{},{}\n", i + 1, num(u), num(xi.eval(u)), num(path.pvv(i, u)), frac));
        }
    }

    let revenue = expected_revenue(&env, &x)?;
    let myerson = myerson_reduced_form(&env).and_then(|m| expected_revenue(&env, &m)).ok();
    let reg = path.regularity();
    let summary = json!({
        "T": path.cutoff.map_or(json!("Infinite"), |t| json!(round12(t))),
        "regime": path.regime.to_string(),
        "revenue": round12(revenue),
        "revenue_myerson": myerson.map(round12),
        "mre_residual": round12(mre_residual(&path)),
        "regularity": {
            "margin_a": round12(reg.margin_a),
            "margin_b": round12(reg.margin_b),
            "holds": reg.holds(),
        },
        "grid_points": path.t_grid.len(),
        "warnings": path.warnings,
    });
    let text = serde_json::to_string_pretty(&summary).expect("json values serialize") + "\n";

    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    emit(Some(&dir), "path.csv", &path_csv(&path))?;
    emit(Some(&dir), "allocation.csv", &alloc)?;
    emit(Some(&dir), "summary.json", &text)?;
    if cli.json {
        print!("{text}");
    } else {
        let cutoff = path.cutoff.map_or("Infinite".to_string(), num);
        println!("regime: {}", path.regime);
        println!("cutoff T: {cutoff}");
        println!("revenue: {}", num(revenue));
        if let Some(m) = myerson {
            println!("revenue of the highest-virtual-value rule: {}", num(m));
        }
        println!("wrote path.csv, allocation.csv, summary.json to {}", dir.display());
    }
    Ok(EXIT_OK)
}

fn simulate(cli: &Cli, inputs: &[PathBuf]) -> Outcome {
    let env_mode = inputs.len() == 1 && inputs[0].extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let (rule, exact) = if env_mode {
        let env = read_env(&inputs[0], cli.tmax)?;
        let path = solve_path(&env)?;
        (optimal_fractions(&path)?, optimal_reduced_form(&path)?)
    } else {
        let rule = ScoreRule::new(read_forms(inputs)?)?;
        let exact = induced_reduced_form_exact(&rule)?;
        (rule, exact)
    };
    if cli.samples == 0 {
        return Err(Failure::Usage("--samples must be positive".into()));
    }
    let grid = quantile_grid(cli.grid);
    let mc = induced_reduced_form_mc(&rule, &grid, cli.samples, cli.seed);
    let mut text = String::from("bidder,u,x_exact,x_mc,stderr\n");
    let mut worst_z: f64 = 0.0;
    for (i, xi) in exact.iter().enumerate() {
        for (k, &u) in mc.grid.iter().enumerate() {
            // The terminal value at u = 1 is a convention; the top type wins with the left limit.
            let e = if u >= 1.0 { xi.eval_left(u) } else { xi.eval(u) };
            let (m, s) = (mc.x[i][k], mc.stderr[i][k]);
            if s > 0.0 {
                worst_z = worst_z.max((m - e).abs() / s);
            }
            text.push_str(&format!("{},{},{},{},{}\n", i + 1, num(u), num(e), num(m), num(s)));
        }
    }
    emit(cli.out.as_deref(), "simulate.csv", &text)?;
    if cli.json {
        print_json(&json!({ "samples": cli.samples, "seed": cli.seed, "max_abs_z": round12(worst_z) }));
    } else if cli.out.is_some() {
        println!("samples: {}, seed: {}, max |z|: {}", cli.samples, cli.seed, num(worst_z));
    }
    Ok(EXIT_OK)
}

fn revenue(cli: &Cli, env_path: &Path, paths: &[PathBuf]) -> Outcome {
    let env = read_env(env_path, cli.tmax)?;
    let x = read_forms(paths)?;
    if x.len() != env.n() {
        return Err(Failure::Usage(format!("environment has {} bidders but {} reduced forms were given", env.n(), x.len())));
    }
    let v = check_feasible(&x, cli.tol)?;
    if v.status == Status::Infeasible {
        if cli.json {
            print_json(&json!({ "status": "infeasible", "sup_b": round12(v.sup_b) }));
        } else {
            println!("infeasible: sup B = {}", num(v.sup_b));
        }
        return Ok(EXIT_NEGATIVE);
    }
    let r = expected_revenue(&env, &x)?;
    // Monte Carlo needs a score implementation, which exists for extremal forms.
    let mc = if cli.samples > 0 && check_extremal(&x, cli.tol).unwrap_or(false) {
        canonical_scores_from_extremal(&x, cli.tol)
            .and_then(|rule| expected_revenue_mc(&env, &rule, cli.samples, cli.seed))
            .ok()
    } else {
        None
    };
    if cli.json {
        print_json(&json!({
            "revenue": round12(r),
            "revenue_mc": mc.map(|m| round12(m.0)),
            "stderr_mc": mc.map(|m| round12(m.1)),
        }));
    } else {
        println!("revenue: {}", num(r));
        if let Some((m, s)) = mc {
            println!("monte carlo: {} +/- {}", num(m), num(s));
        }
    }
    Ok(EXIT_OK)
}
