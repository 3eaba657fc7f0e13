#![allow(dead_code)]

use border_curve::allocation::{expected_revenue, induced_reduced_form_exact, ScoreRule};
use border_curve::environments::{Bidder, CertaintyEquivalent, Dist, Environment};
use border_curve::fixtures::{cra_mixed, ev_power};
use border_curve::monotone::{Breakpoint, MonotoneFn};
use border_curve::transforms::{delta_to_cdf, delta_transform, psi_to_cdf, psi_transform, T_MAX};
use rand::Rng;

/// Random piecewise-affine CDF with up to `pieces` interior knots, jumps and flat stretches.
pub fn random_cdf<R: Rng>(rng: &mut R, pieces: usize, scale: f64) -> MonotoneFn<f64> {
    let m = rng.gen_range(1..=pieces);
    let mut knots: Vec<f64> = (0..m).map(|_| rng.gen_range(0.02..0.98)).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let mut pts = Vec::with_capacity(knots.len() + 2);
    let mut v: f64 = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.3) };
    pts.push((0.0, v, v));
    for &u in &knots {
        let rise = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) };
        let left = v + rise;
        let jump = if rng.gen_bool(0.3) { rng.gen_range(0.0..0.5) } else { 0.0 };
        v = left + jump;
        pts.push((u, left, v));
    }
    let top = v + rng.gen_range(0.0..1.0);
    let norm = scale / top.max(1e-9);
    let mut bps: Vec<Breakpoint<f64>> =
        pts.iter().map(|&(u, l, r)| Breakpoint { u, left: l * norm, right: r * norm }).collect();
    bps.push(Breakpoint { u: 1.0, left: top * norm, right: 1.0 });
    MonotoneFn::from_breakpoints(&bps).expect("generated breakpoints are monotone")
}

/// Random strictly increasing piecewise-affine score, possibly with jumps and negative values.
pub fn random_score<R: Rng>(rng: &mut R, pieces: usize) -> MonotoneFn<f64> {
    let m = rng.gen_range(1..=pieces);
    let mut knots: Vec<f64> = (0..m).map(|_| rng.gen_range(0.02..0.98)).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let mut v: f64 = rng.gen_range(-0.2..0.2);
    let mut bps = vec![Breakpoint { u: 0.0, left: v, right: v }];
    let mut last = 0.0;
    for &u in knots.iter().chain(std::iter::once(&1.0)) {
        let left = v + (u - last) * rng.gen_range(0.1..2.0);
        v = left + if rng.gen_bool(0.3) { rng.gen_range(0.0..0.3) } else { 0.0 };
        bps.push(Breakpoint { u, left, right: v });
        last = u;
    }
    MonotoneFn::from_breakpoints(&bps).expect("generated score is increasing")
}

/// Feasible reduced form induced by random scores.
pub fn random_feasible<R: Rng>(rng: &mut R, n: usize, pieces: usize) -> Vec<MonotoneFn<f64>> {
    let scores = (0..n).map(|_| random_score(rng, pieces)).collect();
    induced_reduced_form_exact(&ScoreRule::new(scores).unwrap()).unwrap()
}

/// Evenly spaced points of `[0, 1]` that stay `1e-9` away from the knots of every form.
pub fn continuity_grid(forms: &[&MonotoneFn<f64>], points: usize) -> Vec<f64> {
    (0..=points)
        .map(|k| k as f64 / points as f64)
        .filter(|&u| forms.iter().all(|f| f.knots().iter().all(|&k| k == 0.0 || k == 1.0 || (u - k).abs() > 1e-9)))
        .collect()
}

pub fn sup_diff(a: &MonotoneFn<f64>, b: &MonotoneFn<f64>, grid: &[f64]) -> f64 {
    grid.iter().map(|&u| (a.eval(u) - b.eval(u)).abs()).fold(0.0, f64::max)
}

pub fn psi_round_trip(x: &MonotoneFn<f64>) -> f64 {
    let back = psi_to_cdf(&psi_transform(x).unwrap()).unwrap();
    sup_diff(x, &back, &continuity_grid(&[x], 10_000))
}

/// Round trip through the log-space path, on the types `u >= exp(-delta(t_max))` the horizon retains.
pub fn delta_round_trip(x: &MonotoneFn<f64>) -> f64 {
    let delta = delta_transform(x, T_MAX).unwrap();
    let back = delta_to_cdf(&delta).unwrap();
    let u_min = (-delta.eval(T_MAX)).exp();
    let grid: Vec<f64> = continuity_grid(&[x], 10_000).into_iter().filter(|&u| u >= u_min).collect();
    sup_diff(x, &back, &grid)
}

/// Largest gap between `int_{psi(iota)}^1 x` and `int_iota^1 s dln psi(s)` over `iotas`.
pub fn psi_integral_gap(x: &MonotoneFn<f64>, iotas: &[f64]) -> f64 {
    let psi = psi_transform(x).unwrap();
    iotas
        .iter()
        .map(|&i| (x.integral(psi.eval(i), 1.0) - psi.log_stieltjes_to_one(i)).abs())
        .fold(0.0, f64::max)
}

/// `|sum int H_i(x_i(u), u) du - sum int e^{-t} R_i(delta_i(t), t) dt|`.
pub fn revenue_identity_gap(env: &Environment<f64>, x: &[MonotoneFn<f64>]) -> f64 {
    let direct = expected_revenue(env, x).unwrap();
    let deltas: Vec<_> = x.iter().map(|f| delta_transform(f, env.t_max).unwrap()).collect();
    (direct - env.revenue_from_delta(&deltas).unwrap()).abs()
}

/// Relative gap between the analytic marginal and a central difference with relative step `1e-6`.
pub fn marginal_fd_gap(b: &Bidder<f64>, x: f64, u: f64) -> f64 {
    let h = 1e-6 * x.max(1e-3);
    let fd = (b.h(x + h, u) - b.h(x - h, u)) / (2.0 * h);
    let m = b.marginal(x, u);
    (m - fd).abs() / m.abs().max(1.0)
}

/// One bidder of every family, with parameters inside their regular ranges.
pub fn bidder_families() -> Vec<(&'static str, Bidder<f64>)> {
    let quad = |alpha| CertaintyEquivalent::Quadratic { alpha };
    vec![
        ("linear-uniform", Bidder::Linear { dist: Dist::Uniform }),
        ("linear-power", Bidder::Linear { dist: Dist::PowerMvv { beta: 0.6 } }),
        ("ev-power", Bidder::EvPower { beta: 0.7 }),
        ("ev-h", Bidder::EvH { dist: Dist::PowerMvv { beta: 0.8 }, gamma: 2.0 }),
        ("cra-quadratic", Bidder::Cra { dist: Dist::Uniform, g: quad(0.5) }),
        ("cra-gul", Bidder::Cra { dist: Dist::Uniform, g: CertaintyEquivalent::Gul { alpha: 0.7 } }),
    ]
}

/// Environments the solver is expected to handle.
pub fn solver_fixtures() -> Vec<(&'static str, Environment<f64>)> {
    vec![
        ("ev beta=(0.9,0.5)", ev_power(&[0.9, 0.5]).unwrap()),
        ("ev beta=(0.5,0.75,0.6)", ev_power(&[0.5, 0.75, 0.6]).unwrap()),
        ("ev beta=(1,0.5)", ev_power(&[1.0, 0.5]).unwrap()),
        ("cra k=2 n=3", cra_mixed(2, 3).unwrap()),
        ("cra k=1 n=3", cra_mixed(1, 3).unwrap()),
    ]
}
