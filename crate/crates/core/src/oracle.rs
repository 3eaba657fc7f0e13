//! Brute-force validators that share no code path with the principal-curve machinery:
//! exhaustive Border grids, the constrained slice maximum `G(s)`, and random local
//! perturbations of a candidate optimum.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::environments::Environment;
use crate::error::{Error, Result};
use crate::monotone::{MonotoneFn, ABSCISSA_TOL};
use crate::numeric::GaussLegendre;
use crate::transforms::psi_transform;
use crate::Scalar;

/// Largest number of Border evaluations a grid sweep may perform.
pub const GRID_BUDGET: f64 = 1e7;

/// Gain in expected revenue above which a perturbation counts as an improvement.
pub const IMPROVEMENT_TOL: f64 = 1e-7;

const PERTURB_BISECTIONS: usize = 30;
const PERTURB_ETA: f64 = 1e-10;
const PERTURB_NODES: usize = 6;
const PERTURB_HORIZON: f64 = 12.0;
const PERTURB_CELLS: usize = 3000;

/// Outcome of an exhaustive grid sweep.
#[derive(Debug, Clone)]
pub struct GridReport<F> {
    /// Points per axis, breakpoints included.
    pub resolution: Vec<usize>,
    pub max_b: F,
    pub argmax: Vec<F>,
    pub runtime: Duration,
}

/// Uniform `k`-point grid on `[lo, 1]` merged with the knots of `x` in that range.
fn axis<F: Scalar>(x: &MonotoneFn<F>, lo: F, k: usize) -> Vec<F> {
    let k = k.max(2);
    let mut g: Vec<F> = (0..k).map(|j| lo + (F::one() - lo) * F::from_usize_lossy(j) / F::from_usize_lossy(k - 1)).collect();
    g.extend(x.knots().iter().copied().filter(|&u| u > lo && u < F::one()));
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g.dedup();
    g
}

fn tails<F: Scalar>(x: &MonotoneFn<F>, g: &[F]) -> Vec<F> {
    g.iter().map(|&u| x.integral(u, F::one())).collect()
}

fn check_budget(sizes: &[usize]) -> Result<()> {
    let points = sizes.iter().map(|&m| m as f64).product::<f64>();
    if points > GRID_BUDGET {
        return Err(Error::TooLarge { points, budget: GRID_BUDGET });
    }
    Ok(())
}

/// Odometer over the mixed-radix index `idx` with radices `sizes`; false once exhausted.
fn advance(idx: &mut [usize], sizes: &[usize]) -> bool {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < sizes[d] {
            return true;
        }
        idx[d] = 0;
    }
    false
}

/// Exhaustive maximum of `B(u) = prod u_i + sum_i int_{u_i}^1 x_i` over a product grid.
pub fn border_grid_max<F: Scalar>(x: &[MonotoneFn<F>], k: usize) -> Result<GridReport<F>> {
    let start = Instant::now();
    if x.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    let grids: Vec<Vec<F>> = x.iter().map(|f| axis(f, F::zero(), k)).collect();
    let sizes: Vec<usize> = grids.iter().map(Vec::len).collect();
    check_budget(&sizes)?;
    let tables: Vec<Vec<F>> = x.iter().zip(&grids).map(|(f, g)| tails(f, g)).collect();
    let rest = &sizes[1..];
    let slabs: Vec<(F, Vec<usize>)> = (0..sizes[0])
        .into_par_iter()
        .map(|i0| {
            let mut idx = vec![0usize; rest.len()];
            let mut best = (F::neg_infinity(), Vec::new());
            loop {
                let mut prod = grids[0][i0];
                let mut sum = tables[0][i0];
                for (d, &j) in idx.iter().enumerate() {
                    prod = prod * grids[d + 1][j];
                    sum = sum + tables[d + 1][j];
                }
                if prod + sum > best.0 {
                    best = (prod + sum, idx.clone());
                }
                if !advance(&mut idx, rest) {
                    break;
                }
            }
            let mut full = vec![i0];
            full.extend(best.1);
            (best.0, full)
        })
        .collect();
    let (max_b, arg) = slabs
        .into_iter()
        .fold((F::neg_infinity(), Vec::new()), |acc, s| if s.0 > acc.0 { s } else { acc });
    let argmax = arg.iter().enumerate().map(|(d, &j)| grids[d][j]).collect();
    Ok(GridReport { resolution: sizes, max_b, argmax, runtime: start.elapsed() })
}

/// `G(s) = max { s^n + sum_i int_{u_i}^1 x_i : prod u_i >= s^n }` on a grid over the first
/// `n - 1` cutoffs; the last one makes the constraint bind.
pub fn g_of_s<F: Scalar>(x: &[MonotoneFn<F>], s: F, k: usize) -> Result<F> {
    let n = x.len();
    if n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    if !(s >= F::zero() && s <= F::one()) {
        return Err(Error::DomainError(format!("s = {s} must lie in [0, 1]")));
    }
    let target = s.powi(n as i32);
    let last = &x[n - 1];
    if n == 1 {
        return Ok(target + last.integral(target, F::one()));
    }
    let grids: Vec<Vec<F>> = x[..n - 1].iter().map(|f| axis(f, target, k)).collect();
    let sizes: Vec<usize> = grids.iter().map(Vec::len).collect();
    check_budget(&sizes)?;
    let tables: Vec<Vec<F>> = x[..n - 1].iter().zip(&grids).map(|(f, g)| tails(f, g)).collect();
    let rest = &sizes[1..];
    let best = (0..sizes[0])
        .into_par_iter()
        .map(|i0| {
            let mut idx = vec![0usize; rest.len()];
            let mut best = F::neg_infinity();
            loop {
                let mut prod = grids[0][i0];
                let mut sum = tables[0][i0];
                for (d, &j) in idx.iter().enumerate() {
                    prod = prod * grids[d + 1][j];
                    sum = sum + tables[d + 1][j];
                }
                if prod >= target {
                    let un = if target > F::zero() { (target / prod).min(F::one()) } else { F::zero() };
                    best = best.max(target + sum + last.integral(un, F::one()));
                }
                if !advance(&mut idx, rest) {
                    break;
                }
            }
            best
        })
        .collect::<Vec<F>>()
        .into_iter()
        .fold(F::neg_infinity(), F::max);
    Ok(best)
}

/// Outcome of a perturbation search.
#[derive(Debug, Clone)]
pub struct PerturbationReport<F> {
    pub trials: usize,
    /// Largest revenue gain found; negative when every perturbation lost revenue.
    pub best_gain: F,
    /// Trials that produced a feasible perturbation with positive step.
    pub effective: usize,
}

impl<F: Scalar> PerturbationReport<F> {
    pub fn passes(&self) -> bool {
        self.best_gain <= F::c(IMPROVEMENT_TOL)
    }
}

/// Log-coordinate paths of a profile on one merged grid.
struct Paths<F> {
    t: Vec<F>,
    /// `values[i][k] = delta_i(t[k])`.
    values: Vec<Vec<F>>,
}

impl<F: Scalar> Paths<F> {
    /// Paths on a uniform grid merged with the images of every psi breakpoint, affine in between.
    fn of(x: &[MonotoneFn<F>], t_max: F) -> Result<Self> {
        let psi = x.iter().map(psi_transform).collect::<Result<Vec<_>>>()?;
        let m = PERTURB_CELLS;
        let mut t: Vec<F> = (0..=m).map(|k| t_max * F::from_usize_lossy(k) / F::from_usize_lossy(m)).collect();
        for p in &psi {
            t.extend(p.inner().knots().iter().filter(|&&i| i > F::zero()).map(|&i| -i.ln()).filter(|&s| s > F::zero() && s < t_max));
        }
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let gap = F::tol(ABSCISSA_TOL);
        t.dedup_by(|a, b| *a - *b <= gap);
        let values = psi
            .iter()
            .map(|p| {
                let mut prev = F::zero();
                t.iter()
                    .map(|&s| {
                        let d = if s > F::zero() { -p.eval((-s).exp()).ln() } else { F::zero() };
                        prev = d.max(prev).min(s);
                        prev
                    })
                    .collect()
            })
            .collect();
        Ok(Paths { t, values })
    }

    fn slopes(&self, i: usize) -> Vec<F> {
        let v = &self.values[i];
        self.t.windows(2).enumerate().map(|(k, w)| (v[k + 1] - v[k]) / (w[1] - w[0])).collect()
    }

    fn from_slopes(&self, slopes: &[Vec<F>]) -> Self {
        let values = slopes
            .iter()
            .map(|sl| {
                let mut acc = F::zero();
                let mut out = Vec::with_capacity(self.t.len());
                out.push(acc);
                for (k, &s) in sl.iter().enumerate() {
                    acc = acc + s.max(F::zero()).min(F::one()) * (self.t[k + 1] - self.t[k]);
                    out.push(acc);
                }
                out
            })
            .collect();
        Paths { t: self.t.clone(), values }
    }

    /// Largest violation of `int_0^t e^{-tau} sum delta_i' <= 1 - e^{-sum delta_i(t)}` at grid times.
    /// Within a cell the slack can only grow, so grid times suffice.
    fn margin(&self) -> F {
        let n = self.values.len();
        let mut lhs = F::zero();
        let mut worst = F::neg_infinity();
        for k in 1..self.t.len() {
            let (a, b) = (self.t[k - 1], self.t[k]);
            let rise: F = (0..n).map(|i| self.values[i][k] - self.values[i][k - 1]).sum();
            lhs = lhs + rise / (b - a) * ((-a).exp() - (-b).exp());
            let total: F = (0..n).map(|i| self.values[i][k]).sum();
            worst = worst.max(lhs - (F::one() - (-total).exp()));
        }
        worst
    }
}

/// `sum_i int e^{-t} int_{delta_i(t)}^{delta'_i(t)} R_i'(s, t) ds dt`, the exact revenue change.
fn revenue_gain<F: Scalar>(env: &Environment<F>, base: &Paths<F>, other: &Paths<F>, rule: &GaussLegendre) -> F {
    let mut total = F::zero();
    for (i, b) in env.bidders.iter().enumerate() {
        let (v0, v1) = (&base.values[i], &other.values[i]);
        for k in 1..base.t.len() {
            if v0[k - 1] == v1[k - 1] && v0[k] == v1[k] {
                continue;
            }
            let (a, c) = (base.t[k - 1], base.t[k]);
            let h = c - a;
            let d0 = |t: F| v0[k - 1] + (v0[k] - v0[k - 1]) * (t - a) / h;
            let d1 = |t: F| v1[k - 1] + (v1[k] - v1[k - 1]) * (t - a) / h;
            total = total
                + rule.integrate(a, c, |t| {
                    let (lo, hi) = (d0(t).min(t), d1(t).min(t));
                    (-t).exp() * rule.integrate(lo, hi, |s| b.r_partial_unchecked(s, t))
                });
        }
    }
    total
}

enum Move<F> {
    /// Raise bidder `up`'s slope on `[a, b]` and lower bidder `down`'s on `[c, d]` by the step.
    Shift { up: usize, a: F, b: F, down: usize, c: F, d: F },
    /// Mix with the exclusive allocation to `bidder`; `full` jumps straight to it.
    Toward { bidder: usize, full: bool },
}

fn random_move<F: Scalar>(rng: &mut ChaCha8Rng, n: usize, horizon: f64, trial: usize) -> Move<F> {
    if n < 2 || trial % 4 == 3 {
        return Move::Toward { bidder: rng.gen_range(0..n), full: rng.gen_bool(0.5) };
    }
    let interval = |rng: &mut ChaCha8Rng| {
        let a: f64 = rng.gen_range(0.0..horizon);
        let b: f64 = rng.gen_range(0.0..horizon);
        (F::c(a.min(b)), F::c(a.max(b) + 1e-3))
    };
    let up = rng.gen_range(0..n);
    let down = (up + rng.gen_range(1..n)) % n;
    let (a, b) = interval(rng);
    let (c, d) = if trial % 2 == 0 { (a, b) } else { interval(rng) };
    Move::Shift { up, a, b, down, c, d }
}

/// Searches `trials` random feasible perturbations of `x` for a revenue improvement.
///
/// Perturbations act on the log-coordinate paths of `x`: a trial either trades slope between
/// two bidders on random time intervals (slopes clipped to `[0, 1]`), or mixes the paths with
/// those of an exclusive allocation. The step is bisected to the largest feasible size and the
/// resulting revenue change is integrated directly.
pub fn perturbation_report<F: Scalar>(
    env: &Environment<F>,
    x: &[MonotoneFn<F>],
    trials: usize,
    seed: u64,
) -> Result<PerturbationReport<F>> {
    let n = env.n();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x.len() });
    }
    let base = Paths::of(x, env.t_max)?;
    let limit = base.margin().max(F::zero()) + F::c(PERTURB_ETA);
    let slopes: Vec<Vec<F>> = (0..n).map(|i| base.slopes(i)).collect();
    let mids: Vec<F> = base.t.windows(2).map(|w| F::c(0.5) * (w[0] + w[1])).collect();
    let rule = GaussLegendre::new(PERTURB_NODES);
    let horizon = env.t_max.to_f64_lossy().min(PERTURB_HORIZON);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_gain = F::neg_infinity();
    let mut effective = 0;
    for trial in 0..trials {
        let mv = random_move::<F>(&mut rng, n, horizon, trial);
        let scale = F::c(rng.gen_range(0.05..1.0));
        let perturbed = |eps: F| -> Paths<F> {
            let mut sl = slopes.clone();
            match mv {
                Move::Shift { up, a, b, down, c, d } => {
                    for (k, &m) in mids.iter().enumerate() {
                        if m >= a && m <= b {
                            sl[up][k] = sl[up][k] + eps;
                        }
                        if m >= c && m <= d {
                            sl[down][k] = sl[down][k] - eps;
                        }
                    }
                }
                Move::Toward { bidder, full } => {
                    let lambda = if full { F::one() } else { eps };
                    for (i, row) in sl.iter_mut().enumerate() {
                        let target = if i == bidder { F::one() } else { F::zero() };
                        for s in row.iter_mut() {
                            *s = *s + lambda * (target - *s);
                        }
                    }
                }
            }
            base.from_slopes(&sl)
        };
        let mut candidate = Some(perturbed(scale)).filter(|p| p.margin() <= limit);
        if candidate.is_none() {
            let (mut lo, mut hi) = (F::zero(), scale);
            for _ in 0..PERTURB_BISECTIONS {
                let mid = F::c(0.5) * (lo + hi);
                let p = perturbed(mid);
                if p.margin() <= limit {
                    lo = mid;
                    candidate = Some(p);
                } else {
                    hi = mid;
                }
            }
        }
        if let Some(p) = candidate {
            effective += 1;
            best_gain = best_gain.max(revenue_gain(env, &base, &p, &rule));
        }
    }
    Ok(PerturbationReport { trials, best_gain, effective })
}

/// True iff no perturbation found by [`perturbation_report`] improves revenue by more than
/// [`IMPROVEMENT_TOL`].
pub fn revenue_perturbation_test<F: Scalar>(
    env: &Environment<F>,
    x: &[MonotoneFn<F>],
    trials: usize,
    seed: u64,
) -> Result<bool> {
    Ok(perturbation_report(env, x, trials, seed)?.passes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{ev_power, power_family, power_family_border, staircase_pair};
    use crate::feasibility::{border_at, PrincipalCurve};
    use crate::solver::{myerson_reduced_form, optimal_reduced_form, solve_path};
    use approx::assert_relative_eq;

    #[test]
    fn constant_one_pair() {
        let x = vec![MonotoneFn::<f64>::constant(0.0, 1.0, 1.0); 2];
        let r = border_grid_max(&x, 11).unwrap();
        assert_relative_eq!(r.max_b, 2.0, epsilon = 1e-15);
        assert_eq!(r.argmax, vec![0.0, 0.0]);
    }

    #[test]
    fn power_family_infeasible_on_grid() {
        let x = power_family(&[0.6, 0.6]).unwrap();
        let r = border_grid_max(&x, 60).unwrap();
        assert_relative_eq!(r.max_b, 1.2, epsilon = 1e-12);
        assert_eq!(r.argmax, vec![0.0, 0.0]);
        let interior = border_at(&x, &[0.05, 0.05]).unwrap();
        assert!(interior > 1.0);
    }

    #[test]
    fn staircase_binds_at_one() {
        let x = staircase_pair::<f64>().unwrap();
        let r = border_grid_max(&x, 100).unwrap();
        assert_relative_eq!(r.max_b, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn budget_guard() {
        let x = power_family(&[0.2, 0.2, 0.2, 0.2]).unwrap();
        assert!(matches!(border_grid_max(&x, 100), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn g_endpoints() {
        let x = power_family(&[0.3, 0.5]).unwrap();
        assert_relative_eq!(g_of_s(&x, 1.0, 50).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g_of_s(&x, 0.0, 50).unwrap(), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn g_matches_power_closed_form() {
        let alphas = [0.3, 0.5];
        let x = power_family(&alphas).unwrap();
        let c = PrincipalCurve::new(&x).unwrap();
        for s in [0.2, 0.5, 0.8] {
            let g: f64 = g_of_s(&x, s, 4000).unwrap();
            let want = power_family_border(&alphas, s);
            assert!((g - want).abs() < 1e-5, "s = {s}: {g} vs {want}");
            assert!(g >= c.border_direct(s) - 1e-5);
        }
    }

    #[test]
    fn perturbation_accepts_optimum_and_rejects_myerson() {
        let env = ev_power(&[0.9, 0.5]).unwrap();
        let path = solve_path(&env).unwrap();
        let x = optimal_reduced_form(&path).unwrap();
        let r = perturbation_report(&env, &x, 12, 7).unwrap();
        assert!(r.passes(), "gain {}", r.best_gain);
        assert!(r.effective > 0);

        let env = ev_power(&[1.0, 0.5]).unwrap();
        let my = myerson_reduced_form(&env).unwrap();
        let r = perturbation_report(&env, &my, 12, 7).unwrap();
        assert!(!r.passes());
        assert_relative_eq!(r.best_gain, 0.5 - 10.0 / 21.0, epsilon = 1e-9);
    }

    #[test]
    fn perturbation_detects_misspecified_optimum() {
        let x = optimal_reduced_form(&solve_path(&ev_power(&[0.9, 0.5]).unwrap()).unwrap()).unwrap();
        let env = ev_power(&[0.85, 0.5]).unwrap();
        let r = perturbation_report(&env, &x, 20, 3).unwrap();
        assert!(!r.passes(), "gain {}", r.best_gain);
    }

    #[test]
    fn perturbation_is_deterministic() {
        let env = ev_power(&[1.0, 0.5]).unwrap();
        let my = myerson_reduced_form(&env).unwrap();
        let a = perturbation_report(&env, &my, 8, 11).unwrap();
        let b = perturbation_report(&env, &my, 8, 11).unwrap();
        assert_eq!(a.best_gain, b.best_gain);
        assert_eq!(a.effective, b.effective);
    }
}
