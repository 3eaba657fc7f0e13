use border_curve::allocation::expected_revenue;
use border_curve::feasibility::{check_extremal, check_feasible, Status, DEFAULT_ETA};
use border_curve::fixtures::{cra_mixed, ev_power, exclusive, power_family, staircase_pair};
use border_curve::monotone::MonotoneFn;
use border_curve::numeric::bisect_increasing;
use border_curve::solver::{myerson_reduced_form, optimal_reduced_form, solve_path, Regime};
use serde_json::json;

use crate::{num, Outcome, EXIT_NEGATIVE, EXIT_OK};

struct Check {
    name: &'static str,
    expected: String,
    got: String,
    pass: bool,
}

fn close(name: &'static str, want: f64, got: f64, tol: f64) -> Check {
    Check { name, expected: format!("{} (tol {tol:e})", num(want)), got: num(got), pass: (got - want).abs() <= tol }
}

fn sup_on(f: impl Fn(f64) -> f64, points: usize, hi: f64) -> f64 {
    (0..=points).map(|k| f(hi * k as f64 / points as f64)).fold(0.0, f64::max)
}

fn revenue_checks(out: &mut Vec<Check>) -> anyhow::Result<()> {
    let env = ev_power(&[1.0, 0.5])?;
    let my = expected_revenue(&env, &myerson_reduced_form(&env)?)?;
    out.push(close("highest-virtual-value revenue, beta=(1,1/2)", 10.0 / 21.0, my, 1e-6));
    let ex = expected_revenue(&env, &exclusive(2, 0)?)?;
    out.push(close("exclusive bidder-1 revenue", 0.5, ex, 1e-9));
    let x = optimal_reduced_form(&solve_path(&env)?)?;
    out.push(close("optimal revenue, beta=(1,1/2)", 0.5, expected_revenue(&env, &x)?, 1e-6));
    out.push(close("optimal x_1 sup deviation from 1", 0.0, sup_on(|u| (x[0].eval(u) - 1.0).abs(), 1000, 1.0), 1e-6));
    Ok(())
}

fn power_path_checks(out: &mut Vec<Check>) -> anyhow::Result<()> {
    let path = solve_path(&ev_power::<f64>(&[0.9, 0.5])?)?;
    let mut err: f64 = 0.0;
    for (k, &t) in path.t_grid.iter().enumerate() {
        let t: f64 = t;
        if t > 20.0 {
            break;
        }
        err = err
            .max((path.delta_sharp[0].deltas()[k] - 0.9 * t).abs())
            .max((path.delta_sharp[1].deltas()[k] - 0.1 * t).abs())
            .max((path.p_sharp[k] - 2.0 * (-1.1 * t).exp()).abs());
    }
    out.push(close("beta=(0.9,0.5) delta and p sup error", 0.0, err, 1e-6));
    Ok(())
}

fn crossing(a: &MonotoneFn<f64>, b: &MonotoneFn<f64>, lo: f64, hi: f64) -> f64 {
    bisect_increasing(lo, hi, 1e-12, |u| a.eval(u) - b.eval(u))
}

fn cra_checks(out: &mut Vec<Check>) -> anyhow::Result<()> {
    let path = solve_path(&cra_mixed(2, 3)?)?;
    let t = path.cutoff.unwrap_or(f64::INFINITY);
    out.push(close("cutoff time, two risk-neutral bidders", 12f64.ln(), t, 1e-6));
    let x = optimal_reduced_form(&path)?;
    out.push(close("risk-neutral jump at u = 1/2", 1.0 / 6.0, x[0].eval(0.5), 1e-5));
    out.push(close("risk-neutral allocation just below 1/2", 0.0, x[0].eval(0.5 - 1e-9), 1e-5));
    let c = crossing(&x[0], &x[2], 0.5 + 1e-9, 0.99);
    out.push(close("crossing of risk-neutral and risk-averse", std::f64::consts::FRAC_1_SQRT_2, c, 1e-4));

    let single = solve_path(&cra_mixed(1, 3)?)?;
    out.push(Check {
        name: "one risk-neutral bidder: regime",
        expected: "extremal, T = Infinite".into(),
        got: format!("{}, T = {}", single.regime, single.cutoff.map_or("Infinite".into(), num)),
        pass: single.regime == Regime::Extremal && single.cutoff.is_none(),
    });
    Ok(())
}

fn feasibility_checks(out: &mut Vec<Check>) -> anyhow::Result<()> {
    let cases: [(&[f64], Status); 3] = [
        (&[0.5, 0.3], Status::Feasible),
        (&[0.6, 0.6], Status::Infeasible),
        (&[0.5, 0.5], Status::BoundaryExtremal),
    ];
    for (alphas, want) in cases {
        let got = check_feasible(&power_family(alphas)?, DEFAULT_ETA)?.status;
        out.push(Check {
            name: "power family verdict",
            expected: format!("{alphas:?} -> {want:?}"),
            got: format!("{got:?}"),
            pass: got == want,
        });
    }
    let pair = check_extremal(&staircase_pair()?, 1e-9)?;
    out.push(Check { name: "staircase pair is extremal", expected: "true".into(), got: pair.to_string(), pass: pair });
    Ok(())
}

pub(crate) fn run(as_json: bool) -> Outcome {
    let mut checks = Vec::new();
    revenue_checks(&mut checks)?;
    power_path_checks(&mut checks)?;
    cra_checks(&mut checks)?;
    feasibility_checks(&mut checks)?;
    let all = checks.iter().all(|c| c.pass);
    if as_json {
        let rows: Vec<_> = checks
            .iter()
            .map(|c| json!({ "check": c.name, "expected": c.expected, "got": c.got, "pass": c.pass }))
            .collect();
        crate::print_json(&json!({ "checks": rows, "all_pass": all }));
    } else {
        let w = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &checks {
            let mark = if c.pass { "PASS" } else { "FAIL" };
            println!("{mark}  {:<w$}  expected {}  got {}", c.name, c.expected, c.got);
        }
        let passed = checks.iter().filter(|c| c.pass).count();
        println!("{passed}/{} checks passed", checks.len());
    }
    Ok(if all { EXIT_OK } else { EXIT_NEGATIVE })
}
