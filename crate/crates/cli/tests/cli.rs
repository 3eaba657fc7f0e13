use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use border_curve::allocation::expected_revenue;
use border_curve::feasibility::{check_feasible, Status};
use border_curve::fixtures::{cra_mixed, exclusive, power_family, staircase_pair};
use border_curve::monotone::{read_breakpoints_csv, write_breakpoints_csv, Breakpoint, MonotoneFn};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_border-curve"));
    c.env("BORDER_CURVE_THREADS", "2");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_forms(dir: &Path, stem: &str, forms: &[MonotoneFn<f64>]) -> Vec<String> {
    forms
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let name = format!("{stem}{i}.csv");
            write_breakpoints_csv(f, fs::File::create(dir.join(&name)).unwrap()).unwrap();
            name
        })
        .collect()
}

const CRA_K2: &str = r#"{"bidders":[
  {"family":"cra","g":"quadratic","alpha":0,"dist":"uniform"},
  {"family":"cra","g":"quadratic","alpha":0,"dist":"uniform"},
  {"family":"cra","g":"quadratic","alpha":1,"dist":"uniform"}]}"#;

const EV: &str = r#"{"bidders":[{"family":"ev-power","beta":1},{"family":"ev-power","beta":0.5}]}"#;

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cra.json"), CRA_K2).unwrap();
    fs::write(dir.path().join("ev.json"), EV).unwrap();
    dir
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let head = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (head, rows)
}

#[test]
fn verify_passes() {
    let dir = setup();
    let o = run(&["verify"], dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    assert!(!text.contains("FAIL"));
    assert!(text.contains("0.47619047619"));
    assert!(text.contains("2.48490664979"));
    assert!(text.contains("0.707106781"));

    let o = run(&["--json", "verify"], dir.path());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["all_pass"], true);
}

#[test]
fn infeasible_power_tables_exit_one_with_witness() {
    let dir = setup();
    let files = write_forms(dir.path(), "p", &power_family(&[0.6, 0.6]).unwrap());
    let mut args = vec!["feasible"];
    args.extend(files.iter().map(String::as_str));
    let o = run(&args, dir.path());
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("witness"));

    let mut args = vec!["--json", "feasible"];
    args.extend(files.iter().map(String::as_str));
    let v: Value = serde_json::from_slice(&run(&args, dir.path()).stdout).unwrap();
    assert_eq!(v["status"], "infeasible");
    assert!(v["sup_b"].as_f64().unwrap() > 1.1);
    assert_eq!(v["witness_u"].as_array().unwrap().len(), 2);
}

#[test]
fn feasible_and_extremal_verdicts() {
    let dir = setup();
    let inner = write_forms(dir.path(), "q", &power_family(&[0.5, 0.3]).unwrap());
    let mut args = vec!["feasible"];
    args.extend(inner.iter().map(String::as_str));
    assert_eq!(code(&run(&args, dir.path())), 0);
    args[0] = "extremal";
    assert_eq!(code(&run(&args, dir.path())), 1);

    let pair = write_forms(dir.path(), "s", &staircase_pair().unwrap());
    let mut args = vec!["extremal"];
    args.extend(pair.iter().map(String::as_str));
    assert_eq!(code(&run(&args, dir.path())), 0);
}

#[test]
fn solve_reports_cutoff_and_outputs_parse() {
    let dir = setup();
    let o = run(&["--grid", "201", "solve", "cra.json", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!((summary["T"].as_f64().unwrap() - 12f64.ln()).abs() < 1e-6);
    assert_eq!(summary["regime"], "fractional");
    assert!(summary["mre_residual"].as_f64().unwrap() < 1e-7);
    assert_eq!(summary["regularity"]["holds"], true);

    let (head, rows) = read_csv(&out.join("allocation.csv"));
    assert_eq!(head, ["bidder", "u", "x_star", "pvv", "fraction"]);
    assert_eq!(rows.len(), 3 * 201);
    // The tabulated optimum read back as reduced forms is feasible and earns the reported revenue.
    let mut forms = Vec::new();
    for i in 1..=3 {
        let pts: Vec<Breakpoint<f64>> = rows
            .iter()
            .filter(|r| r[0] == i.to_string())
            .map(|r| {
                let (u, x): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
                Breakpoint { u, left: x, right: x }
            })
            .collect();
        forms.push(MonotoneFn::from_breakpoints(&pts).unwrap());
    }
    assert_ne!(check_feasible(&forms, 1e-3).unwrap().status, Status::Infeasible);
    let rev = expected_revenue(&cra_mixed(2, 3).unwrap(), &forms).unwrap();
    assert!((rev - summary["revenue"].as_f64().unwrap()).abs() < 5e-3);

    let (head, rows) = read_csv(&out.join("path.csv"));
    assert_eq!(head.len(), 2 + 2 * 3);
    assert_eq!(rows.len() as u64, summary["grid_points"].as_u64().unwrap());
    for r in &rows {
        for v in r {
            let _: f64 = v.parse().unwrap();
        }
    }
}

#[test]
fn outputs_are_deterministic() {
    let dir = setup();
    let outs: Vec<PathBuf> = ["a", "b"].iter().map(|d| dir.path().join(d)).collect();
    for d in &outs {
        let o = run(&["--samples", "20000", "--seed", "7", "simulate", "cra.json", "--out", d.to_str().unwrap()], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let o = run(&["--grid", "101", "solve", "cra.json", "--out", d.to_str().unwrap()], dir.path());
        assert_eq!(code(&o), 0);
    }
    for name in ["simulate.csv", "path.csv", "allocation.csv", "summary.json"] {
        assert_eq!(fs::read(outs[0].join(name)).unwrap(), fs::read(outs[1].join(name)).unwrap(), "{name}");
    }
    let (head, rows) = read_csv(&outs[0].join("simulate.csv"));
    assert_eq!(head, ["bidder", "u", "x_exact", "x_mc", "stderr"]);
    assert!(!rows.is_empty());
}

#[test]
fn curve_table_round_trips() {
    let dir = setup();
    let files = write_forms(dir.path(), "p", &power_family(&[0.5, 0.3]).unwrap());
    for f in &files {
        let back: MonotoneFn<f64> = read_breakpoints_csv(fs::File::open(dir.path().join(f)).unwrap()).unwrap();
        assert!(back.validate_cdf().is_ok());
    }
    let mut args = vec!["--grid", "11", "curve"];
    args.extend(files.iter().map(String::as_str));
    let o = run(&args, dir.path());
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,nu_1,nu_2,border"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 11);
    assert!((rows[10][3] - 1.0).abs() < 1e-9);
    assert!(rows.iter().all(|r| r[3] <= 1.0 + 1e-7));
}

#[test]
fn revenue_of_exclusive_and_infeasible_forms() {
    let dir = setup();
    let files = write_forms(dir.path(), "e", &exclusive(2, 0).unwrap());
    let mut args = vec!["--json", "revenue", "ev.json"];
    args.extend(files.iter().map(String::as_str));
    let o = run(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["revenue"].as_f64().unwrap() - 0.5).abs() < 1e-9, "{v}");

    let bad = write_forms(dir.path(), "b", &power_family(&[0.6, 0.6]).unwrap());
    let mut args = vec!["revenue", "ev.json"];
    args.extend(bad.iter().map(String::as_str));
    assert_eq!(code(&run(&args, dir.path())), 1);

    let mut args = vec!["revenue", "cra.json"];
    args.extend(files.iter().map(String::as_str));
    assert_eq!(code(&run(&args, dir.path())), 2);
}

#[test]
fn usage_and_input_errors_exit_two() {
    let dir = setup();
    assert_eq!(code(&run(&["bogus"], dir.path())), 2);
    assert_eq!(code(&run(&["feasible"], dir.path())), 2);
    assert_eq!(code(&run(&["--tol", "-1", "verify"], dir.path())), 2);
    assert_eq!(code(&run(&["feasible", "missing.csv"], dir.path())), 2);
    assert_eq!(code(&run(&["solve", "missing.json"], dir.path())), 2);
    fs::write(dir.path().join("broken.json"), "{\"bidders\": [{\"family\": \"nope\"}]}").unwrap();
    assert_eq!(code(&run(&["solve", "broken.json"], dir.path())), 2);
    fs::write(dir.path().join("down.csv"), "u,left,right\n0,0.5,0.5\n1,0.2,1\n").unwrap();
    assert_eq!(code(&run(&["feasible", "down.csv"], dir.path())), 2);
    let o = bin().args(["verify"]).env("BORDER_CURVE_THREADS", "zero").current_dir(dir.path()).output().unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&run(&["--help"], dir.path())), 0);
}
