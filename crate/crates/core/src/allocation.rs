//! Score and fractional score allocations, their induced reduced forms (exact and Monte Carlo),
//! expected revenue, and axiom checks on sampled profiles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::environments::{Bidder, CertaintyEquivalent, Dist, Environment};
use crate::error::{Error, Result};
use crate::feasibility::{check_feasible, Status, DEFAULT_ETA};
use crate::monotone::{MonotoneFn, Segment, ABSCISSA_TOL};
use crate::numeric::adaptive_gauss_legendre;
use crate::transforms::psi_transform;
use crate::Scalar;

/// Chord tolerance used when an induced piece has no closed form.
const TABULATION_TOL: f64 = 1e-12;
/// Tilt added below the active region of canonical scores.
const CANONICAL_TILT: f64 = 1e-9;
/// Samples per Monte Carlo substream.
const MC_CHUNK: usize = 1 << 14;

/// Winning fraction `r_i(u)` of a fractional score allocation.
#[derive(Debug, Clone)]
pub enum FractionFn<F> {
    One,
    Constant(F),
    /// `num(u) / den(u)` below `cut` (with `0 / 0 = 0`, clamped to `[0, 1]`), one from `cut` on.
    Ratio { num: MonotoneFn<F>, den: MonotoneFn<F>, cut: F },
}

impl<F: Scalar> FractionFn<F> {
    pub fn eval(&self, u: F) -> F {
        self.eval_with(u, false)
    }

    pub fn eval_left(&self, u: F) -> F {
        self.eval_with(u, true)
    }

    fn eval_with(&self, u: F, left: bool) -> F {
        match self {
            FractionFn::One => F::one(),
            FractionFn::Constant(c) => *c,
            FractionFn::Ratio { num, den, cut } => {
                if u > *cut || (!left && u >= *cut) {
                    return F::one();
                }
                let (a, b) = if left { (num.eval_left(u), den.eval_left(u)) } else { (num.eval(u), den.eval(u)) };
                if b <= F::min_positive_value() {
                    F::zero()
                } else {
                    (a / b).max(F::zero()).min(F::one())
                }
            }
        }
    }

    fn critical_points(&self) -> Vec<F> {
        match self {
            FractionFn::Ratio { num, den, cut } => {
                let mut v: Vec<F> = num.knots().iter().chain(den.knots()).copied().filter(|u| u < cut).collect();
                v.push(*cut);
                v
            }
            _ => Vec::new(),
        }
    }

    fn constant_on(&self, a: F, b: F) -> Option<F> {
        match self {
            FractionFn::One => Some(F::one()),
            FractionFn::Constant(c) => Some(*c),
            FractionFn::Ratio { cut, .. } => (a >= *cut && b > a).then_some(F::one()),
        }
    }
}

/// Ex-post allocation rule evaluated on a quantile profile.
pub trait AllocationRule<F> {
    fn n(&self) -> usize;
    /// Allocation vector `z(u)`.
    fn allocate(&self, u: &[F]) -> Vec<F>;
}

/// Score allocation, optionally with winning fractions.
///
/// A pure rule awards the good to the highest nonnegative score. With fractions the highest score
/// wins regardless of sign and receives `r_i(u_i)`.
#[derive(Debug, Clone)]
pub struct ScoreRule<F> {
    scores: Vec<MonotoneFn<F>>,
    fractions: Option<Vec<FractionFn<F>>>,
}

fn check_score<F: Scalar>(i: usize, q: &MonotoneFn<F>) -> Result<()> {
    let tol = F::tol(ABSCISSA_TOL);
    if q.lo().abs() > tol || (q.hi() - F::one()).abs() > tol {
        return Err(Error::InvalidScore(format!("score {i} must be defined on [0, 1]")));
    }
    q.validate().map_err(|e| Error::InvalidScore(format!("score {i}: {e}")))?;
    for (k, s) in q.segments().iter().enumerate() {
        let (a, b) = (q.knots()[k], q.knots()[k + 1]);
        let mut prev = s.eval(a);
        let slack = F::tol(1e-13) * (F::one() + q.left_at(k).abs());
        if k > 0 && !(prev >= q.left_at(k) - slack) {
            return Err(Error::InvalidScore(format!("score {i} decreases at u = {a}")));
        }
        for r in 1..=4 {
            let v = s.eval(a + (b - a) * F::from_usize_lossy(r) / F::c(4.0));
            if !(v > prev) {
                return Err(Error::InvalidScore(format!("score {i} is not strictly increasing on [{a}, {b}]")));
            }
            prev = v;
        }
    }
    Ok(())
}

impl<F: Scalar> ScoreRule<F> {
    /// Pure score rule; every score must be strictly increasing on `[0, 1]`.
    pub fn new(scores: Vec<MonotoneFn<F>>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidScore("no bidders".into()));
        }
        for (i, q) in scores.iter().enumerate() {
            check_score(i, q)?;
        }
        Ok(ScoreRule { scores, fractions: None })
    }

    /// Fractional score rule.
    pub fn with_fractions(scores: Vec<MonotoneFn<F>>, fractions: Vec<FractionFn<F>>) -> Result<Self> {
        if fractions.len() != scores.len() {
            return Err(Error::DimensionMismatch { expected: scores.len(), found: fractions.len() });
        }
        let mut rule = Self::new(scores)?;
        for (i, r) in fractions.iter().enumerate() {
            if let FractionFn::Constant(c) = r {
                if !(*c >= F::zero() && *c <= F::one()) {
                    return Err(Error::InvalidScore(format!("fraction {i} outside [0, 1]")));
                }
            }
        }
        rule.fractions = Some(fractions);
        Ok(rule)
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &[MonotoneFn<F>] {
        &self.scores
    }

    pub fn fractions(&self) -> Option<&[FractionFn<F>]> {
        self.fractions.as_deref()
    }

    /// Whether winning requires a nonnegative score.
    pub fn has_cutoff(&self) -> bool {
        self.fractions.is_none()
    }

    pub fn fraction(&self, i: usize, u: F) -> F {
        self.fractions.as_ref().map_or(F::one(), |r| r[i].eval(u))
    }

    /// Winning bidder at `u`; ties go to the lowest index.
    pub fn winner(&self, u: &[F]) -> Option<usize> {
        let mut best: Option<(usize, F)> = None;
        for (i, (q, &ui)) in self.scores.iter().zip(u).enumerate() {
            let s = q.eval(ui);
            if self.has_cutoff() && s < F::zero() {
                continue;
            }
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best.map(|(i, _)| i)
    }
}

impl<F: Scalar> AllocationRule<F> for ScoreRule<F> {
    fn n(&self) -> usize {
        self.scores.len()
    }

    fn allocate(&self, u: &[F]) -> Vec<F> {
        let mut z = vec![F::zero(); self.n()];
        if let Some(w) = self.winner(u) {
            z[w] = self.fraction(w, u[w]);
        }
        z
    }
}

// ---------------------------------------------------------------------------
// Exact inducement

fn const_value<F: Scalar>(s: &Segment<F>) -> Option<F> {
    match s {
        Segment::Rational { a, b, c } if a.is_zero() && c.is_zero() => Some(*b),
        Segment::Quadratic { a, b, c } if a.is_zero() && b.is_zero() => Some(*c),
        Segment::Power { scale, exponent, .. } if scale.is_zero() || exponent.is_zero() => Some(*scale),
        _ => None,
    }
}

/// `k * s` inside the closed family.
fn scale_segment<F: Scalar>(s: &Segment<F>, k: F) -> Option<Segment<F>> {
    Some(match s {
        Segment::Rational { a, b, c } => Segment::Rational { a: *a * k, b: *b * k, c: *c * k },
        Segment::Quadratic { a, b, c } => Segment::Quadratic { a: *a * k, b: *b * k, c: *c * k },
        Segment::Power { scale, anchor, exponent } => Segment::Power { scale: *scale * k, anchor: *anchor, exponent: *exponent },
        _ if k.is_zero() => Segment::constant(F::zero()),
        _ => return compose(&Segment::Rational { a: k, b: F::zero(), c: F::zero() }, s),
    })
}

/// `s * t` inside the closed family.
fn mul_segments<F: Scalar>(s: &Segment<F>, t: &Segment<F>) -> Option<Segment<F>> {
    if let Some(k) = const_value(s) {
        return scale_segment(t, k);
    }
    if let Some(k) = const_value(t) {
        return scale_segment(s, k);
    }
    match (s, t) {
        (
            Segment::Power { scale: s1, anchor: a1, exponent: p1 },
            Segment::Power { scale: s2, anchor: a2, exponent: p2 },
        ) => Some(Segment::Power { scale: *s1 * *s2 * (*a1 / *a2).powf(*p2), anchor: *a1, exponent: *p1 + *p2 }),
        (Segment::Rational { a: a1, b: b1, c: c1 }, Segment::Rational { a: a2, b: b2, c: c2 })
            if c1.is_zero() && c2.is_zero() =>
        {
            Some(Segment::Quadratic { a: *a1 * *a2, b: *a1 * *b2 + *a2 * *b1, c: *b1 * *b2 })
        }
        _ => None,
    }
}

/// `outer(inner(u))` inside the closed family.
fn compose<F: Scalar>(outer: &Segment<F>, inner: &Segment<F>) -> Option<Segment<F>> {
    if let Some(w) = const_value(inner) {
        return Some(Segment::constant(outer.eval(w)));
    }
    let two = F::c(2.0);
    match outer {
        Segment::Rational { a, b, c } if c.is_zero() => {
            let (a, b) = (*a, *b);
            if a.is_zero() {
                return Some(Segment::constant(b));
            }
            match inner {
                Segment::Rational { a: a2, b: b2, c: c2 } => Some(Segment::Rational { a: a * *a2, b: a * *b2 + b, c: a * *c2 }),
                Segment::Quadratic { a: a2, b: b2, c: c2 } => Some(Segment::Quadratic { a: a * *a2, b: a * *b2, c: a * *c2 + b }),
                Segment::Power { scale, anchor, exponent } if b.is_zero() => {
                    Some(Segment::Power { scale: a * *scale, anchor: *anchor, exponent: *exponent })
                }
                Segment::QuadRoot { a: qa, b: qb, c: qc } if a > F::zero() => {
                    let (qa, qb, qc) = (*qa, *qb, *qc);
                    Some(Segment::QuadRoot {
                        a: qa / (a * a),
                        b: qb / a - two * qa * b / (a * a),
                        c: qa * b * b / (a * a) - qb * b / a + qc,
                    })
                }
                _ => None,
            }
        }
        Segment::Power { scale, anchor, exponent } => match inner {
            Segment::Power { scale: s2, anchor: a2, exponent: p2 } if *s2 > F::zero() => Some(Segment::Power {
                scale: *scale * (*s2 / *anchor).powf(*exponent),
                anchor: *a2,
                exponent: *exponent * *p2,
            }),
            Segment::Rational { a, b, c } if b.is_zero() && c.is_zero() && *a > F::zero() => {
                Some(Segment::Power { scale: *scale, anchor: *anchor / *a, exponent: *exponent })
            }
            _ => None,
        },
        Segment::QuadRoot { a: qa, b: qb, c: qc } => match inner {
            Segment::Rational { a, b, c } if c.is_zero() && *a > F::zero() => {
                Some(Segment::QuadRoot { a: *qa / *a, b: *qb / *a, c: (*qc - *b) / *a })
            }
            Segment::Power { scale, anchor, exponent } if qb.is_zero() && qc.is_zero() && *qa > F::zero() && *scale > F::zero() => {
                Some(Segment::Power { scale: (*scale / *qa).sqrt(), anchor: *anchor, exponent: *exponent * F::c(0.5) })
            }
            Segment::Quadratic { a, b, c } if qb.is_zero() && qc.is_zero() && b.is_zero() && c.is_zero() && *qa > F::zero() => {
                let k = (*a / *qa).sqrt();
                (k > F::zero()).then_some(Segment::Rational { a: k, b: F::zero(), c: F::zero() })
            }
            _ => None,
        },
        _ => None,
    }
}

/// The piece of `c -> inf { u : q(u) >= c }` valid on an open level interval containing `c`.
fn inverse_piece<F: Scalar>(q: &MonotoneFn<F>, c: F) -> Option<Segment<F>> {
    let knots = q.knots();
    let last = knots.len() - 1;
    if c <= q.right_at(0) {
        return Some(Segment::constant(F::zero()));
    }
    if c > q.left_at(last) {
        return Some(Segment::constant(F::one()));
    }
    // First piece k whose left limit at its right end reaches c.
    let (mut lo, mut hi) = (0usize, last - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if q.left_at(mid + 1) < c {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let k = lo;
    if c <= q.right_at(k) {
        return Some(Segment::constant(knots[k]));
    }
    q.segments()[k].inverse(knots[k], knots[k + 1])
}

/// Exact interim probability `r_i(u) prod_{j != i} |{ u_j : q_j(u_j) < q_i(u) }|`.
fn interim<F: Scalar>(rule: &ScoreRule<F>, cutoff: bool, i: usize, u: F, left: bool) -> F {
    let q = &rule.scores[i];
    let level = if left { q.eval_left(u) } else { q.eval(u) };
    if cutoff && level < F::zero() {
        return F::zero();
    }
    let mut p = match &rule.fractions {
        Some(r) => {
            if left {
                r[i].eval_left(u)
            } else {
                r[i].eval(u)
            }
        }
        None => F::one(),
    };
    for (j, qj) in rule.scores.iter().enumerate() {
        if j != i {
            p = p * qj.lower_inverse(level);
        }
    }
    p
}

/// Interim winning probability of bidder `i` at quantile `u`.
pub fn induced_interim<F: Scalar>(rule: &ScoreRule<F>, i: usize, u: F) -> F {
    interim(rule, rule.has_cutoff(), i, u, false)
}

fn induced_one<F: Scalar>(rule: &ScoreRule<F>, cutoff: bool, i: usize) -> Result<MonotoneFn<F>> {
    let q = &rule.scores[i];
    let atol = F::tol(ABSCISSA_TOL);
    let mut crit: Vec<F> = q.knots().to_vec();
    let mut levels: Vec<F> = Vec::new();
    if cutoff {
        levels.push(F::zero());
    }
    for (j, qj) in rule.scores.iter().enumerate() {
        if j != i {
            for bp in qj.breakpoints() {
                levels.push(bp.left);
                levels.push(bp.right);
            }
        }
    }
    for c in levels {
        if c > q.right_at(0) && c <= q.end_value() {
            crit.push(q.lower_inverse(c));
        }
    }
    if let Some(r) = &rule.fractions {
        crit.extend(r[i].critical_points());
    }
    crit.retain(|u| *u >= F::zero() && *u <= F::one());
    crit.push(F::zero());
    crit.push(F::one());
    crit.sort_by(|a, b| a.partial_cmp(b).unwrap());
    crit.dedup_by(|a, b| (*a - *b).abs() <= atol);

    let f = |u: F| interim(rule, cutoff, i, u, false);
    let f_left = |u: F| interim(rule, cutoff, i, u, true);
    let mut knots: Vec<F> = Vec::with_capacity(crit.len());
    let mut segs: Vec<Segment<F>> = Vec::with_capacity(crit.len());
    for w in crit.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = (a + b) * F::c(0.5);
        if let Some(s) = closed_piece(rule, cutoff, i, a, b, m) {
            knots.push(a);
            segs.push(s);
        } else {
            let t = MonotoneFn::tabulate(&[a, b], &f, &f_left, F::tol(TABULATION_TOL))?;
            knots.extend_from_slice(&t.knots()[..t.knots().len() - 1]);
            segs.extend_from_slice(t.segments());
        }
    }
    knots.push(F::one());
    // The top type is a single point; reduced forms carry the terminal value one there.
    let out = MonotoneFn::from_segments_unchecked(knots, segs, F::one())?;
    if rule.fractions.is_some() {
        out.validate().map_err(|e| Error::InvalidScore(format!("induced form of bidder {i} with these fractions: {e}")))?;
    }
    Ok(out)
}

fn closed_piece<F: Scalar>(rule: &ScoreRule<F>, cutoff: bool, i: usize, a: F, b: F, m: F) -> Option<Segment<F>> {
    let q = &rule.scores[i];
    let level = q.eval(m);
    if cutoff && level < F::zero() {
        return Some(Segment::constant(F::zero()));
    }
    let r = match &rule.fractions {
        Some(r) => r[i].constant_on(a, b)?,
        None => F::one(),
    };
    let k = q.knots().partition_point(|&v| v <= m).saturating_sub(1).min(q.segments().len() - 1);
    let inner = &q.segments()[k];
    let mut acc = Segment::constant(r);
    for (j, qj) in rule.scores.iter().enumerate() {
        if j == i {
            continue;
        }
        let inv = inverse_piece(qj, level)?;
        let piece = compose(&inv, inner)?;
        acc = mul_segments(&acc, &piece)?;
    }
    // Guard against closed forms that drift from the pointwise definition.
    let direct = interim(rule, cutoff, i, m, false);
    let err = (acc.eval(m) - direct).abs();
    (err <= F::tol(1e-10) * (F::one() + direct.abs())).then_some(acc)
}

/// Reduced form induced by `rule`; exact where the pieces compose in closed form.
pub fn induced_reduced_form_exact<F: Scalar>(rule: &ScoreRule<F>) -> Result<Vec<MonotoneFn<F>>> {
    (0..rule.n()).map(|i| induced_one(rule, rule.has_cutoff(), i)).collect()
}

/// Reduced form induced by the scores alone, with the highest score winning regardless of sign.
pub fn induced_reduced_form_uncut<F: Scalar>(scores: &[MonotoneFn<F>]) -> Result<Vec<MonotoneFn<F>>> {
    let rule = ScoreRule::new(scores.to_vec())?;
    (0..rule.n()).map(|i| induced_one(&rule, false, i)).collect()
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// Monte Carlo estimates of interim winning probabilities on a quantile grid.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate<F> {
    pub grid: Vec<F>,
    /// `x[i][k]` at `grid[k]`.
    pub x: Vec<Vec<F>>,
    pub stderr: Vec<Vec<F>>,
    pub samples: usize,
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunks(samples: usize) -> Vec<(usize, usize)> {
    (0..samples.div_ceil(MC_CHUNK)).map(|c| (c, MC_CHUNK.min(samples - c * MC_CHUNK))).collect()
}

/// Frequencies of winning against `samples` opponent profiles, for each bidder at each grid point.
///
/// Deterministic given `seed`; independent of the thread count.
pub fn induced_reduced_form_mc<F: Scalar>(rule: &ScoreRule<F>, grid: &[F], samples: usize, seed: u64) -> McEstimate<F> {
    let n = rule.n();
    let mut grid: Vec<F> = grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let g = grid.len();
    let levels: Vec<Vec<F>> = rule.scores.iter().map(|q| grid.iter().map(|&u| q.eval(u)).collect()).collect();
    let cutoff = rule.has_cutoff();
    let parts: Vec<Vec<u64>> = chunks(samples)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            let mut start = vec![0u64; n * (g + 1)];
            let mut s = vec![F::zero(); n];
            let mut pre = vec![F::neg_infinity(); n + 1];
            let mut suf = vec![F::neg_infinity(); n + 1];
            for _ in 0..len {
                for (j, q) in rule.scores.iter().enumerate() {
                    s[j] = q.eval(F::c(rng.gen::<f64>()));
                }
                for j in 0..n {
                    pre[j + 1] = pre[j].max(s[j]);
                    suf[n - 1 - j] = suf[n - j].max(s[n - 1 - j]);
                }
                for i in 0..n {
                    let (a, mut b) = (pre[i], suf[i + 1]);
                    if cutoff {
                        b = b.max(F::zero());
                    }
                    let k = levels[i].partition_point(|&v| !(v > a && v >= b));
                    start[i * (g + 1) + k] += 1;
                }
            }
            start
        })
        .collect();
    let mut total = vec![0u64; n * (g + 1)];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let nn = F::from_usize_lossy(samples.max(1));
    let mut x = vec![vec![F::zero(); g]; n];
    let mut se = vec![vec![F::zero(); g]; n];
    for i in 0..n {
        let mut wins = 0u64;
        for k in 0..g {
            wins += total[i * (g + 1) + k];
            let f = F::from_usize_lossy(wins as usize) / nn;
            let r = rule.fraction(i, grid[k]);
            x[i][k] = r * f;
            se[i][k] = r * (f * (F::one() - f) / nn).sqrt();
        }
    }
    McEstimate { grid, x, stderr: se, samples }
}

fn wins_against<F: Scalar>(rule: &ScoreRule<F>, i: usize, own: F, opp: &[F]) -> F {
    let s = rule.scores[i].eval(own);
    if rule.has_cutoff() && s < F::zero() {
        return F::zero();
    }
    for (j, &o) in opp.iter().enumerate() {
        if j == i {
            continue;
        }
        let t = rule.scores[j].eval(o);
        if t > s || (t == s && j < i) {
            return F::zero();
        }
    }
    rule.fraction(i, own)
}

/// Number of independent opponent draws needed for an unbiased estimate of `H_i`.
fn draws_needed<F: Scalar>(b: &Bidder<F>) -> Result<usize> {
    match b {
        Bidder::Linear { .. } => Ok(1),
        Bidder::EvPower { .. } => Ok(2),
        Bidder::EvH { gamma, .. } => {
            let k = gamma.round();
            if (*gamma - k).abs() < F::c(1e-12) && k >= F::one() && k <= F::c(4.0) {
                Ok(k.to_usize().unwrap_or(1))
            } else {
                Err(Error::InvalidEnvironment("Monte Carlo revenue needs an integer exponent up to 4".into()))
            }
        }
        Bidder::Cra { g: CertaintyEquivalent::Quadratic { .. }, dist, .. } => match dist {
            Dist::Uniform => Ok(2),
            _ => Err(Error::InvalidEnvironment("Monte Carlo revenue for CRA supports the uniform quantile only".into())),
        },
        Bidder::Cra { .. } => Err(Error::InvalidEnvironment("Monte Carlo revenue needs a quadratic certainty equivalent".into())),
    }
}

/// Unbiased estimate of `H_i(x_i(u), u)` from independent allocation draws `z`.
fn h_estimate<F: Scalar>(b: &Bidder<F>, u: F, z: &[F]) -> F {
    match b {
        Bidder::Linear { .. } => b.h(z[0], u),
        Bidder::EvPower { beta } => u.powf(beta.recip()) * z[0] * z[1],
        Bidder::EvH { gamma, .. } => {
            let k = gamma.round().to_usize().unwrap_or(1);
            b.mvv(u) * z[..k].iter().fold(F::one(), |p, &v| p * v)
        }
        Bidder::Cra { g: CertaintyEquivalent::Quadratic { alpha }, .. } => {
            let gx = *alpha * z[0] * z[1] + (F::one() - *alpha) * z[0];
            u * z[0] - (F::one() - u) * gx
        }
        Bidder::Cra { .. } => F::nan(),
    }
}

/// Monte Carlo expected revenue `(mean, standard error)`.
///
/// Nonlinear families use products of independent allocation draws, so the estimate is unbiased
/// for the polynomial families supported.
pub fn expected_revenue_mc<F: Scalar>(env: &Environment<F>, rule: &ScoreRule<F>, samples: usize, seed: u64) -> Result<(F, F)> {
    if env.n() != rule.n() {
        return Err(Error::DimensionMismatch { expected: env.n(), found: rule.n() });
    }
    let n = env.n();
    let mut draws = 1;
    for b in &env.bidders {
        draws = draws.max(draws_needed(b)?);
    }
    let parts: Vec<(f64, f64)> = chunks(samples)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            let (mut s1, mut s2) = (0.0f64, 0.0f64);
            let mut own = vec![F::zero(); n];
            let mut opp = vec![vec![F::zero(); n]; draws];
            let mut z = vec![F::zero(); draws];
            for _ in 0..len {
                for v in own.iter_mut() {
                    *v = F::c(rng.gen::<f64>());
                }
                for prof in opp.iter_mut() {
                    for v in prof.iter_mut() {
                        *v = F::c(rng.gen::<f64>());
                    }
                }
                let mut y = F::zero();
                for (i, b) in env.bidders.iter().enumerate() {
                    for (d, prof) in opp.iter().enumerate() {
                        z[d] = wins_against(rule, i, own[i], prof);
                    }
                    y = y + h_estimate(b, own[i], &z);
                }
                let y = y.to_f64_lossy();
                s1 += y;
                s2 += y * y;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let nn = samples.max(1) as f64;
    let mean = s1 / nn;
    let var = ((s2 / nn - mean * mean) * nn / (nn - 1.0).max(1.0)).max(0.0);
    Ok((F::c(mean), F::c((var / nn).sqrt())))
}

// ---------------------------------------------------------------------------
// Canonical scores and revenue

/// Scores `q_i(u) = u x_i(u)` on `[psi_i(0), 1]`, tilted just below `-1` elsewhere.
pub fn canonical_scores_from_extremal<F: Scalar>(x: &[MonotoneFn<F>], tol: F) -> Result<ScoreRule<F>> {
    let v = check_feasible(x, F::c(DEFAULT_ETA))?;
    if v.status == Status::Infeasible {
        return Err(Error::NotFeasible);
    }
    if v.extremality_gap > tol {
        return Err(Error::NotExtremal(v.extremality_gap.to_f64_lossy()));
    }
    let atol = F::tol(ABSCISSA_TOL);
    let mut scores = Vec::with_capacity(x.len());
    for xi in x {
        let a = psi_transform(xi)?.at_zero();
        let p = xi.product_with_identity();
        let tilt = |hi: F| Segment::affine(F::zero(), -F::one() - F::c(CANONICAL_TILT), hi, -F::one());
        let q = if a >= F::one() - atol {
            MonotoneFn::from_segments_unchecked(vec![F::zero(), F::one()], vec![tilt(F::one())], p.end_value())?
        } else if a <= atol {
            p
        } else {
            let k = p.knots().partition_point(|&v| v <= a).saturating_sub(1);
            let mut knots = vec![F::zero(), a];
            let mut segs = vec![tilt(a), p.segments()[k].clone()];
            for j in k + 1..p.segments().len() {
                if p.knots()[j] > a + atol {
                    knots.push(p.knots()[j]);
                    segs.push(p.segments()[j].clone());
                }
            }
            knots.push(F::one());
            MonotoneFn::from_segments_unchecked(knots, segs, p.end_value())?
        };
        scores.push(q);
    }
    ScoreRule::new(scores)
}

/// `sum_i int_0^1 H_i(x_i(u), u) du`, split at the pieces of each `x_i`.
pub fn expected_revenue<F: Scalar>(env: &Environment<F>, x: &[MonotoneFn<F>]) -> Result<F> {
    if env.n() != x.len() {
        return Err(Error::DimensionMismatch { expected: env.n(), found: x.len() });
    }
    let mut total = F::zero();
    for (b, xi) in env.bidders.iter().zip(x) {
        for (k, s) in xi.segments().iter().enumerate() {
            let (lo, hi) = (xi.knots()[k], xi.knots()[k + 1]);
            let tol = F::tol(1e-11) * (hi - lo);
            total = total + adaptive_gauss_legendre(lo, hi, tol, &mut |u| b.h(s.eval(u), u));
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Axioms

/// Outcome of [`axiom_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub deterministic: bool,
    pub monotone: bool,
    pub nonbossy: bool,
    pub profiles: usize,
    /// First violation found, if any.
    pub violation: Option<String>,
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.deterministic && self.monotone && self.nonbossy
    }
}

/// Checks determinism, own-type monotonicity and nonbossiness on random profiles and type swaps.
pub fn axiom_check<F: Scalar, R: AllocationRule<F> + ?Sized>(rule: &R, profiles: usize, seed: u64) -> AxiomReport {
    let n = rule.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = AxiomReport { deterministic: true, monotone: true, nonbossy: true, profiles, violation: None };
    let note = |rep: &mut AxiomReport, m: String| {
        if rep.violation.is_none() {
            rep.violation = Some(m);
        }
    };
    let is_unit = |z: &[F]| {
        let ones = z.iter().filter(|&&v| v == F::one()).count();
        z.iter().all(|&v| v == F::zero() || v == F::one()) && ones <= 1
    };
    for _ in 0..profiles {
        let u: Vec<F> = (0..n).map(|_| F::c(rng.gen::<f64>())).collect();
        let z = rule.allocate(&u);
        if !is_unit(&z) {
            rep.deterministic = false;
            note(&mut rep, format!("allocation {z:?} at {u:?} is not a single unit"));
        }
        for i in 0..n {
            let mut v = u.clone();
            v[i] = F::c(rng.gen::<f64>());
            let w = rule.allocate(&v);
            let (lo, hi, zlo, zhi) = if v[i] > u[i] { (&u, &v, &z, &w) } else { (&v, &u, &w, &z) };
            if zlo[i] > zhi[i] {
                rep.monotone = false;
                note(&mut rep, format!("bidder {i} loses by raising type from {} to {}", lo[i], hi[i]));
            }
            if w[i] == z[i] && (0..n).any(|j| j != i && w[j] != z[j]) {
                rep.nonbossy = false;
                note(&mut rep, format!("bidder {i} changes others' allocation between {u:?} and {v:?}"));
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monotone::Breakpoint;
    use approx::assert_relative_eq;

    fn affine(lo: f64, hi: f64) -> MonotoneFn<f64> {
        MonotoneFn::from_breakpoints(&[Breakpoint { u: 0.0, left: lo, right: lo }, Breakpoint { u: 1.0, left: hi, right: hi }]).unwrap()
    }

    fn grid(k: usize) -> Vec<f64> {
        (0..=k).map(|j| j as f64 / k as f64).collect()
    }

    #[test]
    fn winner_examples() {
        let rule = ScoreRule::new(vec![affine(-0.5, 0.5); 3]).unwrap();
        assert_eq!(rule.winner(&[0.9, 0.2, 0.4]), Some(0));
        assert_eq!(rule.winner(&[0.1, 0.2, 0.4]), None);
        assert_eq!(rule.winner(&[0.6, 0.6, 0.1]), Some(0));
    }

    #[test]
    fn rejects_flat_scores() {
        assert!(matches!(ScoreRule::new(vec![MonotoneFn::constant(0.0, 1.0, 0.3)]), Err(Error::InvalidScore(_))));
    }

    #[test]
    fn myerson_uniform_pair() {
        let rule = ScoreRule::new(vec![affine(-1.0, 1.0); 2]).unwrap();
        let x = induced_reduced_form_exact(&rule).unwrap();
        for u in grid(200) {
            let want = if u >= 0.5 { u } else { 0.0 };
            assert_relative_eq!(x[0].eval(u), want, epsilon = 1e-13);
        }
        assert!(x[0].is_piecewise_affine());
    }

    #[test]
    fn single_bidder_threshold() {
        let rule = ScoreRule::new(vec![affine(-0.3, 0.7)]).unwrap();
        let x = induced_reduced_form_exact(&rule).unwrap();
        assert_eq!(x[0].eval(0.29), 0.0);
        assert_eq!(x[0].eval(0.3), 1.0);
    }

    #[test]
    fn power_scores_compose_exactly() {
        // q_1 = u, q_2 = u^2: bidder 1 wins iff u_1 > u_2^2.
        let q1 = affine(0.0, 1.0);
        let q2 = MonotoneFn::from_segments(vec![0.0, 1.0], vec![Segment::Power { scale: 1.0, anchor: 1.0, exponent: 2.0 }], 1.0).unwrap();
        let rule = ScoreRule::new(vec![q1, q2]).unwrap();
        let x = induced_reduced_form_exact(&rule).unwrap();
        for u in grid(100) {
            assert_relative_eq!(x[0].eval(u), u.sqrt(), epsilon = 1e-14);
            assert_relative_eq!(x[1].eval(u), u * u, epsilon = 1e-14);
        }
        assert!(x[0].segments().len() <= 3);
    }

    #[test]
    fn mc_is_deterministic_and_close() {
        let rule = ScoreRule::new(vec![affine(-1.0, 1.0), affine(-0.5, 1.0)]).unwrap();
        let g = grid(20);
        let a = induced_reduced_form_mc(&rule, &g, 40_000, 7);
        let b = induced_reduced_form_mc(&rule, &g, 40_000, 7);
        assert_eq!(a, b);
        let x = induced_reduced_form_exact(&rule).unwrap();
        for i in 0..2 {
            for (k, &u) in a.grid.iter().enumerate() {
                let e = x[i].eval(u);
                assert!((a.x[i][k] - e).abs() <= 5.0 * a.stderr[i][k] + 1e-12, "bidder {i} u {u}: {} vs {e}", a.x[i][k]);
            }
        }
    }

    #[test]
    fn revenue_zero_allocation() {
        let env = Environment::new(vec![Bidder::EvPower { beta: 0.5 }, Bidder::Linear { dist: Dist::Uniform }]).unwrap();
        let zero = vec![MonotoneFn::constant(0.0, 1.0, 0.0); 2];
        assert_eq!(expected_revenue(&env, &zero).unwrap(), 0.0);
    }

    struct Counterexample;

    impl AllocationRule<f64> for Counterexample {
        fn n(&self) -> usize {
            3
        }
        fn allocate(&self, u: &[f64]) -> Vec<f64> {
            let mut z = vec![0.0; 3];
            if u[0] > (u[1] + u[2]) / 2.0 {
                z[0] = 1.0;
            } else if u[1] > u[2] {
                z[1] = 1.0;
            } else {
                z[2] = 1.0;
            }
            z
        }
    }

    struct Nobody;

    impl AllocationRule<f64> for Nobody {
        fn n(&self) -> usize {
            2
        }
        fn allocate(&self, _: &[f64]) -> Vec<f64> {
            vec![0.0; 2]
        }
    }

    #[test]
    fn axioms() {
        let rule = ScoreRule::new(vec![affine(-1.0, 1.0), affine(-0.2, 0.9), affine(-0.6, 1.5)]).unwrap();
        assert!(axiom_check(&rule, 2000, 1).all_pass());
        let bad = axiom_check(&Counterexample, 2000, 1);
        assert!(bad.deterministic && bad.monotone && !bad.nonbossy);
        let r = axiom_check(&Nobody, 100, 1);
        assert!(r.deterministic && r.monotone);
    }

    #[test]
    fn segment_composition_matches_pointwise() {
        let segs = [
            Segment::Rational { a: 2.0, b: 0.1, c: 0.0 },
            Segment::Quadratic { a: 1.0, b: 0.5, c: 0.0 },
            Segment::Power { scale: 0.7, anchor: 0.9, exponent: 1.7 },
            Segment::QuadRoot { a: 1.0, b: 0.2, c: 0.0 },
        ];
        for o in &segs {
            for i in &segs {
                if let Some(c) = compose(o, i) {
                    for u in [0.2, 0.5, 0.9] {
                        assert_relative_eq!(c.eval(u), o.eval(i.eval(u)), epsilon = 1e-12);
                    }
                }
                if let Some(m) = mul_segments(o, i) {
                    for u in [0.2, 0.5, 0.9] {
                        assert_relative_eq!(m.eval(u), o.eval(u) * i.eval(u), epsilon = 1e-12);
                    }
                }
            }
        }
    }
}
