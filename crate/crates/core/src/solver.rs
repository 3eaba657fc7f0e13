//! Marginal-revenue equalization in log coordinates.
//!
//! At each `t` the solver finds `delta(t)` with `sum_i delta_i = t` and a common marginal revenue
//! `p`, follows that path until `p` reaches zero at `T`, and continues with either the frozen or
//! the zero-marginal-revenue path depending on its shape.

use rayon::prelude::*;

use crate::allocation::{induced_reduced_form_exact, induced_reduced_form_uncut, FractionFn, ScoreRule};
use crate::environments::{regularity_report, Environment, RegularityReport};
use crate::error::{Error, Result};
use crate::monotone::{Breakpoint, MonotoneFn, ABSCISSA_TOL};
use crate::numeric::{illinois_decreasing, interp::Pchip};
use crate::transforms::{delta_to_cdf, DeltaPath};
use crate::Scalar;

/// Shape of the continuation after the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Extremal,
    Fractional,
    Unsupported,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Extremal => "extremal",
            Regime::Fractional => "fractional",
            Regime::Unsupported => "unsupported",
        })
    }
}

/// Grid and refinement settings.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig<F> {
    /// Uniform points on `[0, t_max]`.
    pub uniform_points: usize,
    /// Geometric points between `1e-6` and the first uniform step.
    pub geometric_points: usize,
    /// Midpoints are inserted while linear interpolation misses them by more than this.
    pub refine_tol: F,
    pub max_points: usize,
}

impl<F: Scalar> Default for SolverConfig<F> {
    fn default() -> Self {
        SolverConfig { uniform_points: 2048, geometric_points: 64, refine_tol: F::c(1e-9), max_points: 1 << 17 }
    }
}

/// Solution of the equalization system at one `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FocSolution<F> {
    pub delta: Vec<F>,
    pub p: F,
    /// `delta_i` at `0` or `t`.
    pub clamped: Vec<bool>,
}

fn clamp_flags<F: Scalar>(delta: &[F], t: F) -> Vec<bool> {
    let tol = F::tol(1e-12) * (F::one() + t);
    delta.iter().map(|&d| d <= tol || d >= t - tol).collect()
}

/// Root of `R_i'(., t) = p` on `[0, t]`, clamped at the ends.
fn delta_for_p<F: Scalar>(env: &Environment<F>, i: usize, p: F, t: F, r0: F, rt: F) -> F {
    if p >= r0 {
        return F::zero();
    }
    if p <= rt {
        return t;
    }
    let b = &env.bidders[i];
    let (lo, hi) = illinois_decreasing(F::zero(), t, r0 - p, rt - p, F::tol(1e-15) * t.max(F::one()), |d| {
        b.r_partial_unchecked(d, t) - p
    });
    (lo + hi) * F::c(0.5)
}

/// Solves `R_i'(delta_i, t) = p` for all `i` with `sum_i delta_i = t`.
///
/// `tol` bounds the budget residual relative to `max(1, t)`.
pub fn solve_foc_at<F: Scalar>(env: &Environment<F>, t: F, tol: F) -> Result<FocSolution<F>> {
    let n = env.n();
    if !(t >= F::zero()) {
        return Err(Error::DomainError(format!("t = {t} must be nonnegative")));
    }
    if t <= F::zero() {
        let p = (0..n).map(|i| env.bidders[i].r_partial_unchecked(F::zero(), F::zero())).fold(F::neg_infinity(), F::max);
        return Ok(FocSolution { delta: vec![F::zero(); n], p, clamped: vec![true; n] });
    }
    let mut r0 = Vec::with_capacity(n);
    let mut rt = Vec::with_capacity(n);
    for (i, b) in env.bidders.iter().enumerate() {
        let (a, z) = (b.r_partial_unchecked(F::zero(), t), b.r_partial_unchecked(t, t));
        if !(a.is_finite() && z.is_finite()) {
            return Err(Error::RegularityViolation(format!("marginal revenue of bidder {i} not finite at t = {t}")));
        }
        if z > a + F::tol(1e-12) * (F::one() + a.abs()) {
            return Err(Error::RegularityViolation(format!("marginal revenue of bidder {i} increases in delta at t = {t}")));
        }
        r0.push(a);
        rt.push(z);
    }
    let deltas = |p: F| -> Vec<F> { (0..n).map(|i| delta_for_p(env, i, p, t, r0[i], rt[i])).collect() };
    let excess = |d: &[F]| d.iter().copied().sum::<F>() - t;
    let p_lo = rt.iter().copied().fold(F::infinity(), F::min);
    let p_hi = r0.iter().copied().fold(F::neg_infinity(), F::max);
    let ftol = tol * t.max(F::one());
    let (a, b) = if p_hi > p_lo {
        let g_lo = excess(&deltas(p_lo));
        let g_hi = excess(&deltas(p_hi));
        illinois_decreasing(p_lo, p_hi, g_lo, g_hi, F::zero(), |p| {
            let g = excess(&deltas(p));
            if g.abs() <= ftol * F::c(1e-3) {
                F::zero()
            } else {
                g
            }
        })
    } else {
        (p_lo, p_hi)
    };
    let (dlo, dhi) = (deltas(a), deltas(b));
    let (glo, ghi) = (excess(&dlo), excess(&dhi));
    let (delta, p) = if glo.abs() <= ftol * F::c(1e-3) {
        (dlo, a)
    } else if ghi.abs() <= ftol * F::c(1e-3) {
        (dhi, b)
    } else {
        // A flat marginal revenue makes the budget jump at this price; split the remainder.
        let den = glo - ghi;
        let th = if den > F::zero() { glo / den } else { F::c(0.5) };
        let mut d: Vec<F> = dlo.iter().zip(&dhi).map(|(l, h)| *l + th * (*h - *l)).collect();
        if den <= F::zero() {
            let k = t / F::from_usize_lossy(n);
            d.iter_mut().for_each(|v| *v = k);
        }
        (d, a + th * (b - a))
    };
    let resid = excess(&delta).abs();
    if resid > ftol {
        return Err(Error::InternalInconsistency(format!("budget residual {resid} at t = {t}")));
    }
    let clamped = clamp_flags(&delta, t);
    Ok(FocSolution { delta, p, clamped })
}

/// Solved path with its cutoff, continuation and optimal log-space paths.
#[derive(Debug, Clone)]
pub struct SolverPath<F> {
    pub env: Environment<F>,
    pub t_grid: Vec<F>,
    pub delta_sharp: Vec<DeltaPath<F>>,
    pub p_sharp: Vec<F>,
    /// Cutoff time; `None` when the common marginal revenue stays positive up to `t_max`.
    pub cutoff: Option<F>,
    /// Grid on `[T, t_max]` for the zero-marginal-revenue path.
    pub dagger_t: Vec<F>,
    /// `delta_dagger[i][k]` at `dagger_t[k]`.
    pub delta_dagger: Vec<Vec<F>>,
    pub delta_star: Vec<DeltaPath<F>>,
    pub regime: Regime,
    /// `clamped[i][k]` for `t_grid[k]`.
    pub clamped: Vec<Vec<bool>>,
    pub warnings: Vec<String>,
    p_interp: Pchip<F>,
}

impl<F: Scalar> SolverPath<F> {
    pub fn n(&self) -> usize {
        self.env.n()
    }

    /// Common marginal revenue at `t` (monotone cubic interpolation).
    pub fn p_at(&self, t: F) -> F {
        self.p_interp.eval(t)
    }

    /// Principal virtual value of bidder `i` at quantile `u`; the equalization system is re-solved at
    /// the interpolated time.
    pub fn pvv(&self, i: usize, u: F) -> F {
        let d = &self.delta_sharp[i];
        match d.lower_inverse(-u.ln()) {
            Some(t) => solve_foc_at(&self.env, t, F::c(1e-12)).map_or_else(|_| self.p_at(t), |s| s.p),
            None => self.pvv_beyond(i, -u.ln()).unwrap_or_else(|| self.tail_value(i, u)),
        }
    }

    /// Solves the first-order condition past `t_max` until `delta_i` reaches `y`.
    fn pvv_beyond(&self, i: usize, y: F) -> Option<F> {
        let tol = F::c(1e-12);
        let delta_at = |t: F| solve_foc_at(&self.env, t, tol).ok().map(|s| s.delta[i]);
        let mut lo = self.env.t_max;
        let mut hi = lo;
        let cap = F::c(600.0);
        loop {
            hi = (hi * F::c(2.0)).min(cap);
            if delta_at(hi)? >= y {
                break;
            }
            if hi >= cap {
                return None;
            }
            lo = hi;
        }
        while hi - lo > tol * (F::one() + hi) {
            let mid = F::c(0.5) * (lo + hi);
            if delta_at(mid)? >= y {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        solve_foc_at(&self.env, hi, tol).ok().map(|s| s.p)
    }

    /// Strictly increasing stand-in below `exp(-delta_i(t_max))`.
    fn tail_value(&self, i: usize, u: F) -> F {
        let u_min = (-*self.delta_sharp[i].deltas().last().unwrap()).exp();
        let p_last = *self.p_sharp.last().unwrap();
        if p_last > F::zero() {
            p_last * u / u_min
        } else {
            p_last - (u_min - u)
        }
    }

    /// Principal virtual value of bidder `i` as a piecewise-affine score, exact at the grid images.
    pub fn pvv_fn(&self, i: usize) -> Result<MonotoneFn<F>> {
        let d = self.delta_sharp[i].deltas();
        let mut pts: Vec<Breakpoint<F>> = Vec::with_capacity(d.len() + 1);
        let u_min = (-*d.last().unwrap()).exp();
        if u_min > F::tol(ABSCISSA_TOL) {
            let v = self.tail_value(i, F::zero());
            pts.push(Breakpoint { u: F::zero(), left: v, right: v });
        }
        // Near-coincident abscissae are merged here so rounding cannot
        // produce a downward jump.
        for k in (0..d.len()).rev() {
            let (u, p) = ((-d[k]).exp(), self.p_sharp[k]);
            match pts.last_mut() {
                Some(last) if u - last.u <= F::tol(ABSCISSA_TOL) => {
                    last.right = last.right.max(p);
                }
                Some(last) => {
                    let p = p.max(last.right);
                    pts.push(Breakpoint { u, left: p, right: p });
                }
                None => pts.push(Breakpoint { u, left: p, right: p }),
            }
        }
        pts[0].u = F::zero();
        MonotoneFn::from_breakpoints(&pts)
    }

    /// Conditions (A) and (B) along `delta_sharp` up to the cutoff.
    pub fn regularity(&self) -> RegularityReport<F> {
        regularity_report(&self.env, &self.delta_sharp, self.cutoff)
    }
}

fn base_grid<F: Scalar>(t_max: F, cfg: &SolverConfig<F>) -> Vec<F> {
    let m = cfg.uniform_points.max(2);
    let step = t_max / F::from_usize_lossy(m - 1);
    let mut g: Vec<F> = (0..m).map(|k| step * F::from_usize_lossy(k)).collect();
    let g0 = F::c(1e-6).min(step * F::c(0.5));
    let q = cfg.geometric_points;
    if q >= 2 {
        let ratio = (step / g0).ln() / F::from_usize_lossy(q);
        for k in 0..q {
            g.push(g0 * (ratio * F::from_usize_lossy(k)).exp());
        }
    }
    *g.last_mut().unwrap() = t_max;
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g.dedup_by(|a, b| (*a - *b).abs() <= F::tol(1e-13));
    g
}

/// Inserts midpoints where affine interpolation misses `solve(mid)` by more than `tol`.
fn refine_grid<F: Scalar, S: Clone + Send + Sync>(
    mut pts: Vec<(F, S)>,
    tol: F,
    max_points: usize,
    values: impl Fn(&S) -> Vec<F> + Sync,
    solve: impl Fn(F) -> Result<S> + Sync,
) -> Result<Vec<(F, S)>> {
    let mut work: Vec<(F, F)> = pts.windows(2).map(|w| (w[0].0, w[1].0)).collect();
    let min_width = F::tol(1e-10);
    while !work.is_empty() && pts.len() < max_points {
        let lookup = |t: F| {
            let k = pts.partition_point(|(s, _)| *s < t);
            values(&pts[k].1)
        };
        let tasks: Vec<(F, F, Vec<F>, Vec<F>)> = work.iter().map(|&(a, b)| (a, b, lookup(a), lookup(b))).collect();
        let found: Vec<Option<(F, S, F, F)>> = tasks
            .par_iter()
            .map(|(a, b, va, vb)| -> Result<Option<(F, S, F, F)>> {
                if *b - *a <= min_width {
                    return Ok(None);
                }
                let m = (*a + *b) * F::c(0.5);
                let s = solve(m)?;
                let err = values(&s)
                    .iter()
                    .zip(va.iter().zip(vb))
                    .map(|(v, (x, y))| (*v - (*x + *y) * F::c(0.5)).abs())
                    .fold(F::zero(), F::max);
                Ok((err > tol).then_some((m, s, *a, *b)))
            })
            .collect::<Result<Vec<_>>>()?;
        work.clear();
        let mut inserted: Vec<(F, S)> = Vec::new();
        for (m, s, a, b) in found.into_iter().flatten() {
            inserted.push((m, s));
            work.push((a, m));
            work.push((m, b));
        }
        if inserted.is_empty() {
            break;
        }
        pts.extend(inserted);
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    }
    Ok(pts)
}

/// Root of `R_i'(., t) = 0` on `[0, t]`, clamped.
fn dagger_at<F: Scalar>(env: &Environment<F>, t: F) -> Vec<F> {
    (0..env.n())
        .map(|i| {
            let b = &env.bidders[i];
            delta_for_p(env, i, F::zero(), t, b.r_partial_unchecked(F::zero(), t), b.r_partial_unchecked(t, t))
        })
        .collect()
}

/// Solves the path with default grid settings.
pub fn solve_path<F: Scalar>(env: &Environment<F>) -> Result<SolverPath<F>> {
    solve_path_with(env, &SolverConfig::default())
}

pub fn solve_path_with<F: Scalar>(env: &Environment<F>, cfg: &SolverConfig<F>) -> Result<SolverPath<F>> {
    let mut warnings = env.validate()?;
    let n = env.n();
    let t_max = env.t_max;
    let tol = F::c(1e-12);
    let solve = |t: F| solve_foc_at(env, t, tol);
    let grid = base_grid(t_max, cfg);
    let sols: Vec<FocSolution<F>> = grid.par_iter().map(|&t| solve(t)).collect::<Result<_>>()?;
    let pts: Vec<(F, FocSolution<F>)> = grid.into_iter().zip(sols).collect();
    let mut pts = refine_grid(pts, cfg.refine_tol, cfg.max_points, |s: &FocSolution<F>| s.delta.clone(), solve)?;

    // p must fall along the path.
    for w in pts.windows(2) {
        let (p0, p1) = (w[0].1.p, w[1].1.p);
        if p1 > p0 + F::tol(1e-12) * (F::one() + p0.abs()) {
            return Err(Error::RegularityViolation(format!("marginal revenue increases at t = {}", w[1].0)));
        }
    }

    let p_end = pts.last().unwrap().1.p;
    let cutoff = if p_end > F::zero() {
        None
    } else {
        let k = pts.iter().position(|(_, s)| s.p <= F::zero()).unwrap();
        if k == 0 {
            Some(F::zero())
        } else {
            let (a, b) = (pts[k - 1].0, pts[k].0);
            let (pa, pb) = (pts[k - 1].1.p, pts[k].1.p);
            let mut err = None;
            let (lo, hi) = illinois_decreasing(a, b, pa, pb, F::tol(1e-15) * t_max.max(F::one()), |t| match solve(t) {
                Ok(s) => s.p,
                Err(e) => {
                    err.get_or_insert(e);
                    F::zero()
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            let t_cut = (lo + hi) * F::c(0.5);
            if (t_cut - a).abs() > F::tol(1e-13) && (t_cut - b).abs() > F::tol(1e-13) {
                let s = solve(t_cut)?;
                pts.insert(k, (t_cut, s));
            }
            Some(t_cut)
        }
    };

    let t_grid: Vec<F> = pts.iter().map(|(t, _)| *t).collect();
    let p_sharp: Vec<F> = pts.iter().map(|(_, s)| s.p).collect();
    let mut delta_sharp = Vec::with_capacity(n);
    let mut clamped = Vec::with_capacity(n);
    for i in 0..n {
        let d: Vec<F> = pts.iter().map(|(_, s)| s.delta[i]).collect();
        delta_sharp.push(
            DeltaPath::new(t_grid.clone(), d)
                .map_err(|e| Error::RegularityViolation(format!("candidate path of bidder {i}: {e}")))?,
        );
        clamped.push(pts.iter().map(|(_, s)| s.clamped[i]).collect::<Vec<bool>>());
    }
    if let Some(c) = cutoff {
        let interior_clamp = (0..n).any(|i| t_grid.iter().zip(&clamped[i]).any(|(t, f)| *f && *t > F::zero() && *t < c));
        if interior_clamp {
            warnings.push("candidate path touches a boundary before the cutoff".into());
        }
    }

    // Continuation after the cutoff.
    let (dagger_t, delta_dagger, regime) = match cutoff {
        None => (Vec::new(), vec![Vec::new(); n], Regime::Extremal),
        Some(c) => {
            let mut g: Vec<F> = t_grid.iter().copied().filter(|&t| t >= c).collect();
            if g.len() < 2 {
                g = vec![c, t_max.max(c)];
            }
            let sols: Vec<(F, Vec<F>)> = g.iter().map(|&t| (t, dagger_at(env, t))).collect();
            let sols = refine_grid(sols, cfg.refine_tol, cfg.max_points, |v: &Vec<F>| v.clone(), |t| Ok(dagger_at(env, t)))?;
            let dt: Vec<F> = sols.iter().map(|(t, _)| *t).collect();
            let dd: Vec<Vec<F>> = (0..n).map(|i| sols.iter().map(|(_, v)| v[i]).collect()).collect();
            let slack = F::c(1e-8);
            let decreasing = dd.iter().all(|d| d.windows(2).all(|w| w[1] - w[0] <= slack));
            let increasing = dd.iter().all(|d| {
                d.windows(2).zip(dt.windows(2)).all(|(w, s)| w[1] - w[0] >= -slack && w[1] - w[0] <= (s[1] - s[0]) * (F::one() + slack) + slack * F::c(1e-3))
            });
            let regime = if decreasing {
                Regime::Extremal
            } else if increasing {
                Regime::Fractional
            } else {
                Regime::Unsupported
            };
            (dt, dd, regime)
        }
    };
    if regime == Regime::Unsupported {
        warnings.push("zero-marginal-revenue path is neither weakly decreasing nor increasing with slope at most one".into());
    }

    let delta_star = star_paths(&t_grid, &delta_sharp, cutoff, &dagger_t, &delta_dagger, regime, t_max)?;
    let p_interp = Pchip::new(t_grid.clone(), p_sharp.clone());
    Ok(SolverPath {
        env: env.clone(),
        t_grid,
        delta_sharp,
        p_sharp,
        cutoff,
        dagger_t,
        delta_dagger,
        delta_star,
        regime,
        clamped,
        warnings,
        p_interp,
    })
}

fn star_paths<F: Scalar>(
    t_grid: &[F],
    sharp: &[DeltaPath<F>],
    cutoff: Option<F>,
    dagger_t: &[F],
    dagger: &[Vec<F>],
    regime: Regime,
    t_max: F,
) -> Result<Vec<DeltaPath<F>>> {
    let Some(c) = cutoff else {
        return Ok(sharp.to_vec());
    };
    let mut out = Vec::with_capacity(sharp.len());
    for (i, d) in sharp.iter().enumerate() {
        let mut ts: Vec<F> = t_grid.iter().copied().filter(|&t| t <= c).collect();
        let mut ds: Vec<F> = ts.iter().map(|&t| d.eval(t)).collect();
        if ts.is_empty() || ts[0] > F::zero() {
            ts.insert(0, F::zero());
            ds.insert(0, F::zero());
        }
        let at_cut = d.eval(c);
        match regime {
            Regime::Fractional => {
                for (t, v) in dagger_t.iter().zip(&dagger[i]) {
                    if *t > *ts.last().unwrap() + F::tol(1e-13) {
                        ts.push(*t);
                        ds.push(*v);
                    }
                }
            }
            _ => {
                if t_max > *ts.last().unwrap() + F::tol(1e-13) {
                    ts.push(t_max);
                    ds.push(at_cut);
                }
            }
        }
        if ts.len() < 2 {
            ts.push(t_max.max(F::one()));
            ds.push(at_cut);
        }
        out.push(DeltaPath::new(ts, ds).map_err(|e| Error::RegularityViolation(format!("optimal path of bidder {i}: {e}")))?);
    }
    Ok(out)
}

/// `x*_i` from the optimal log-space paths.
pub fn optimal_reduced_form<F: Scalar>(path: &SolverPath<F>) -> Result<Vec<MonotoneFn<F>>> {
    if path.regime == Regime::Unsupported {
        return Err(Error::RegularityViolation("continuation regime is unsupported".into()));
    }
    path.delta_star.iter().map(delta_to_cdf).collect()
}

/// Principal virtual value `p_sharp((delta_sharp_i)^{-1}(-ln u))`.
pub fn pvv<F: Scalar>(path: &SolverPath<F>, i: usize, u: F) -> F {
    path.pvv(i, u)
}

/// Score implementation of the optimum: principal virtual values, with winning fractions
/// `x*_i / x_sharp_i` below `exp(-delta*_i(T))` in the fractional regime.
pub fn optimal_fractions<F: Scalar>(path: &SolverPath<F>) -> Result<ScoreRule<F>> {
    let scores: Vec<MonotoneFn<F>> = (0..path.n()).map(|i| path.pvv_fn(i)).collect::<Result<_>>()?;
    match path.regime {
        Regime::Unsupported => Err(Error::RegularityViolation("continuation regime is unsupported".into())),
        Regime::Extremal => ScoreRule::new(scores),
        Regime::Fractional => {
            let c = path.cutoff.unwrap_or(path.env.t_max);
            let x_star = optimal_reduced_form(path)?;
            let x_sharp = induced_reduced_form_uncut(&scores)?;
            let fractions = x_star
                .into_iter()
                .zip(x_sharp)
                .zip(&path.delta_star)
                .map(|((num, den), d)| FractionFn::Ratio { num, den, cut: (-d.eval(c)).exp() })
                .collect();
            ScoreRule::with_fractions(scores, fractions)
        }
    }
}

/// Reduced form of the rule that awards the good to the highest nonnegative virtual value.
pub fn myerson_reduced_form<F: Scalar>(env: &Environment<F>) -> Result<Vec<MonotoneFn<F>>> {
    let scores = env.bidders.iter().map(|b| b.mvv_fn()).collect::<Result<Vec<_>>>()?;
    induced_reduced_form_exact(&ScoreRule::new(scores)?)
}

/// Largest marginal-revenue gap between interior bidders at grid times before the cutoff.
pub fn mre_residual<F: Scalar>(path: &SolverPath<F>) -> F {
    mre_residual_of(&path.env, &path.t_grid, &path.delta_star, path.cutoff)
}

/// [`mre_residual`] for arbitrary paths evaluated on `t_grid`.
pub fn mre_residual_of<F: Scalar>(env: &Environment<F>, t_grid: &[F], deltas: &[DeltaPath<F>], cutoff: Option<F>) -> F {
    let mut worst = F::zero();
    for &t in t_grid {
        if cutoff.is_some_and(|c| t >= c) {
            break;
        }
        let d: Vec<F> = deltas.iter().map(|p| p.eval(t).min(t)).collect();
        let flags = clamp_flags(&d, t);
        let mr: Vec<F> = (0..env.n())
            .filter(|&i| !flags[i])
            .map(|i| env.bidders[i].r_partial_unchecked(d[i], t))
            .collect();
        if let (Some(hi), Some(lo)) = (
            mr.iter().copied().reduce(F::max),
            mr.iter().copied().reduce(F::min),
        ) {
            worst = worst.max(hi - lo);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{Bidder, CertaintyEquivalent, Dist};
    use approx::assert_relative_eq;

    fn ev(betas: &[f64]) -> Environment<f64> {
        Environment::new(betas.iter().map(|&beta| Bidder::EvPower { beta }).collect()).unwrap()
    }

    #[test]
    fn foc_examples() {
        let s = solve_foc_at(&ev(&[0.5, 0.5]), 2.0, 1e-12).unwrap();
        assert_relative_eq!(s.delta[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(s.p, 2.0 * (-3.0f64).exp(), epsilon = 1e-12);
        let lin = Environment::new(vec![Bidder::Linear { dist: Dist::Uniform }; 2]).unwrap();
        let s = solve_foc_at(&lin, 1.0, 1e-12).unwrap();
        assert_relative_eq!(s.delta[1], 0.5, epsilon = 1e-10);
        assert_relative_eq!(s.p, 2.0 * (-0.5f64).exp() - 1.0, epsilon = 1e-12);
        let s = solve_foc_at(&lin, 0.0, 1e-12).unwrap();
        assert_eq!(s.delta, vec![0.0, 0.0]);
        assert_eq!(s.p, 1.0);
    }

    #[test]
    fn flat_bidder_takes_whole_budget() {
        let s = solve_foc_at(&ev(&[1.0, 0.5]), 3.0, 1e-12).unwrap();
        assert!((s.delta[0] - 3.0).abs() < 1e-9 && s.delta[1] < 1e-9, "{:?}", s.delta);
    }

    #[test]
    fn myerson_uniform_cutoff() {
        let lin = Environment::new(vec![Bidder::Linear { dist: Dist::Uniform }; 2]).unwrap();
        let cfg = SolverConfig { uniform_points: 256, ..Default::default() };
        let path = solve_path_with(&lin, &cfg).unwrap();
        assert_eq!(path.regime, Regime::Extremal);
        assert_relative_eq!(path.cutoff.unwrap(), 2.0 * std::f64::consts::LN_2, epsilon = 1e-10);
        let x = optimal_reduced_form(&path).unwrap();
        for u in [0.3, 0.49, 0.5, 0.7, 1.0] {
            let want = if u >= 0.5 { u } else { 0.0 };
            assert!((x[0].eval(u) - want).abs() < 1e-9, "u {u}: {}", x[0].eval(u));
            if u >= 0.5 {
                assert_relative_eq!(path.pvv(0, u), 2.0 * u - 1.0, epsilon = 1e-8);
            }
        }
        assert!(mre_residual(&path) < 1e-10);
    }

    #[test]
    fn cra_single_bidder() {
        let env = Environment::new(vec![Bidder::Cra { dist: Dist::Uniform, g: CertaintyEquivalent::Quadratic { alpha: 1.0 } }]).unwrap();
        let cfg = SolverConfig { uniform_points: 512, ..Default::default() };
        let path = solve_path_with(&env, &cfg).unwrap();
        assert_relative_eq!(path.cutoff.unwrap(), 1.5f64.ln(), epsilon = 1e-10);
        assert_eq!(path.regime, Regime::Fractional);
        let x = optimal_reduced_form(&path).unwrap();
        for u in [0.1, 0.3, 0.5, 0.6] {
            let want = f64::min(0.5 * u / (1.0 - u), 1.0);
            assert!((x[0].eval(u) - want).abs() < 1e-6, "u {u}: {} vs {want}", x[0].eval(u));
        }
    }
}
