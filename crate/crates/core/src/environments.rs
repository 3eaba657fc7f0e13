//! Revenue families `H_i(x, u)` in quantile space, their marginals and regularity diagnostics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monotone::{read_breakpoints_csv, MonotoneFn, Segment};
use crate::numeric::adaptive_gauss_legendre;
use crate::transforms::DeltaPath;
use crate::Scalar;

/// Type distribution, described through the quantile function `v` or its virtual value `zeta`.
#[derive(Debug, Clone)]
pub enum Dist<F> {
    /// `v(u) = u`, `zeta(u) = 2u - 1`.
    Uniform,
    /// `zeta(u) = u^{1/beta}`.
    PowerMvv { beta: F },
    /// Tabulated function: `zeta` for linear and `h`-families, `v` for CRA.
    Tabulated(MonotoneFn<F>),
}

/// Certainty-equivalent map `g` of a CRA bidder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CertaintyEquivalent<F> {
    /// `alpha x^2 + (1 - alpha) x`.
    Quadratic { alpha: F },
    /// `x / (1 + alpha (1 - x))`.
    Gul { alpha: F },
}

impl<F: Scalar> CertaintyEquivalent<F> {
    pub fn g(&self, x: F) -> F {
        match *self {
            Self::Quadratic { alpha } => alpha * x * x + (F::one() - alpha) * x,
            Self::Gul { alpha } => x / (F::one() + alpha * (F::one() - x)),
        }
    }

    pub fn g1(&self, x: F) -> F {
        match *self {
            Self::Quadratic { alpha } => F::c(2.0) * alpha * x + F::one() - alpha,
            Self::Gul { alpha } => {
                let d = F::one() + alpha * (F::one() - x);
                (F::one() + alpha) / (d * d)
            }
        }
    }

    pub fn g2(&self, x: F) -> F {
        match *self {
            Self::Quadratic { alpha } => F::c(2.0) * alpha,
            Self::Gul { alpha } => {
                let d = F::one() + alpha * (F::one() - x);
                F::c(2.0) * alpha * (F::one() + alpha) / (d * d * d)
            }
        }
    }
}

/// One bidder's revenue family.
#[derive(Debug, Clone)]
pub enum Bidder<F> {
    /// `H = zeta(u) x`.
    Linear { dist: Dist<F> },
    /// `H = u^{1/beta} x^2`.
    EvPower { beta: F },
    /// `H = zeta(u) x^gamma`.
    EvH { dist: Dist<F>, gamma: F },
    /// `H = v(u) x - (1 - u) v'(u) g(x)`.
    Cra { dist: Dist<F>, g: CertaintyEquivalent<F> },
}

fn zeta_of<F: Scalar>(d: &Dist<F>, u: F) -> F {
    match d {
        Dist::Uniform => F::c(2.0) * u - F::one(),
        Dist::PowerMvv { beta } => u.powf(beta.recip()),
        Dist::Tabulated(f) => f.eval(u),
    }
}

fn zeta_slope<F: Scalar>(d: &Dist<F>, u: F) -> F {
    match d {
        Dist::Uniform => F::c(2.0),
        Dist::PowerMvv { beta } => {
            let e = beta.recip();
            if u <= F::zero() {
                if e > F::one() {
                    F::zero()
                } else {
                    F::infinity()
                }
            } else {
                e * u.powf(e - F::one())
            }
        }
        Dist::Tabulated(f) => piece_slope(f, u),
    }
}

/// Slope of the piece containing `u` (right derivative).
fn piece_slope<F: Scalar>(f: &MonotoneFn<F>, u: F) -> F {
    let k = f.knots().partition_point(|&v| v <= u).saturating_sub(1).min(f.segments().len() - 1);
    f.segments()[k].derivative(u.max(f.lo()).min(f.hi()))
}

/// `(v, v', v'')` of a CRA quantile function.
fn quantile_triplet<F: Scalar>(d: &Dist<F>, u: F) -> (F, F, F) {
    match d {
        Dist::Uniform => (u, F::one(), F::zero()),
        Dist::Tabulated(f) => (f.eval(u), piece_slope(f, u), F::zero()),
        Dist::PowerMvv { .. } => (F::nan(), F::nan(), F::nan()),
    }
}

impl<F: Scalar> Bidder<F> {
    /// `H(x, u)`.
    pub fn h(&self, x: F, u: F) -> F {
        match self {
            Bidder::Linear { dist } => zeta_of(dist, u) * x,
            Bidder::EvPower { beta } => u.powf(beta.recip()) * x * x,
            Bidder::EvH { dist, gamma } => zeta_of(dist, u) * x.powf(*gamma),
            Bidder::Cra { dist, g } => {
                let (v, v1, _) = quantile_triplet(dist, u);
                v * x - (F::one() - u) * v1 * g.g(x)
            }
        }
    }

    /// `dH/dx (x, u)`.
    pub fn marginal(&self, x: F, u: F) -> F {
        match self {
            Bidder::Linear { dist } => zeta_of(dist, u),
            Bidder::EvPower { beta } => F::c(2.0) * u.powf(beta.recip()) * x,
            Bidder::EvH { dist, gamma } => *gamma * zeta_of(dist, u) * x.powf(*gamma - F::one()),
            Bidder::Cra { dist, g } => {
                let (v, v1, _) = quantile_triplet(dist, u);
                v - (F::one() - u) * v1 * g.g1(x)
            }
        }
    }

    /// Quantile-space Myerson virtual value.
    pub fn mvv(&self, u: F) -> F {
        match self {
            Bidder::Linear { dist } | Bidder::EvH { dist, .. } => zeta_of(dist, u),
            Bidder::EvPower { beta } => u.powf(beta.recip()),
            Bidder::Cra { dist, .. } => {
                let (v, v1, _) = quantile_triplet(dist, u);
                v - (F::one() - u) * v1
            }
        }
    }

    /// The virtual value as a function on `[0, 1]`, exact where the family allows.
    pub fn mvv_fn(&self) -> Result<MonotoneFn<F>> {
        let one = F::one();
        let power = |beta: F| {
            MonotoneFn::from_segments(
                vec![F::zero(), one],
                vec![Segment::Power { scale: one, anchor: one, exponent: beta.recip() }],
                one,
            )
        };
        let uniform = || MonotoneFn::from_segments(vec![F::zero(), one], vec![Segment::affine(F::zero(), -one, one, one)], one);
        match self {
            Bidder::Linear { dist } | Bidder::EvH { dist, .. } => match dist {
                Dist::Uniform => uniform(),
                Dist::PowerMvv { beta } => power(*beta),
                Dist::Tabulated(f) => Ok(f.clone()),
            },
            Bidder::EvPower { beta } => power(*beta),
            Bidder::Cra { dist, .. } => match dist {
                Dist::Uniform => uniform(),
                Dist::Tabulated(v) => {
                    let segs = v
                        .segments()
                        .iter()
                        .enumerate()
                        .map(|(k, s)| {
                            let (a, b) = (v.knots()[k], v.knots()[k + 1]);
                            let sl = s.derivative(a);
                            Segment::affine(a, s.eval(a) - (one - a) * sl, b, s.eval(b) - (one - b) * sl)
                        })
                        .collect();
                    MonotoneFn::from_segments(v.knots().to_vec(), segs, v.end_value())
                        .map_err(|e| Error::InvalidEnvironment(format!("virtual value not monotone: {e}")))
                }
                Dist::PowerMvv { .. } => Err(Error::InvalidEnvironment("CRA needs a uniform or tabulated quantile function".into())),
            },
        }
    }

    /// `(x d/dx m, u d/du m)` where `m = dH/dx`; finite differences for tabulated inputs.
    pub fn semi_elasticities(&self, x: F, u: F) -> (F, F) {
        match self {
            Bidder::Linear { dist } => (F::zero(), u * zeta_slope(dist, u)),
            Bidder::EvPower { beta } => {
                let m = F::c(2.0) * u.powf(beta.recip()) * x;
                (m, m / *beta)
            }
            Bidder::EvH { dist, gamma } => {
                let m = *gamma * x.powf(*gamma - F::one());
                ((*gamma - F::one()) * m * zeta_of(dist, u), u * zeta_slope(dist, u) * m)
            }
            Bidder::Cra { dist, g } => {
                let (_, v1, v2) = quantile_triplet(dist, u);
                let xi_x = -x * (F::one() - u) * v1 * g.g2(x);
                let xi_u = u * (v1 + v1 * g.g1(x) - (F::one() - u) * v2 * g.g1(x));
                (xi_x, xi_u)
            }
        }
    }

    /// `dR/d delta` at `x = e^{delta - t}`, `u = e^{-delta}`, without domain checks.
    #[inline]
    pub fn r_partial_unchecked(&self, delta: F, t: F) -> F {
        self.marginal((delta - t).exp(), (-delta).exp())
    }

    fn validate(&self, warnings: &mut Vec<String>) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEnvironment(m));
        let check_dist = |d: &Dist<F>| -> Result<()> {
            match d {
                Dist::PowerMvv { beta } if !(*beta > F::zero()) => bad(format!("power-mvv beta must be positive, got {beta}")),
                _ => Ok(()),
            }
        };
        match self {
            Bidder::Linear { dist } | Bidder::EvH { dist, .. } => {
                check_dist(dist)?;
                if let Bidder::EvH { gamma, .. } = self {
                    if !(*gamma > F::one()) {
                        return bad(format!("ev-h requires gamma > 1, got {gamma}"));
                    }
                }
                let n = 1024;
                let mut prev = zeta_of(dist, F::zero());
                for k in 1..=n {
                    let z = zeta_of(dist, F::from_usize_lossy(k) / F::from_usize_lossy(n));
                    if !(z > prev) {
                        return bad("virtual value must be strictly increasing".into());
                    }
                    prev = z;
                }
                Ok(())
            }
            Bidder::EvPower { beta } => {
                if !(*beta > F::zero() && *beta <= F::one()) {
                    return bad(format!("ev-power requires beta in (0, 1], got {beta}"));
                }
                if *beta == F::one() {
                    warnings.push("ev-power with beta = 1 is the linear boundary case; R is affine in delta".into());
                }
                Ok(())
            }
            Bidder::Cra { dist, g } => {
                match g {
                    CertaintyEquivalent::Quadratic { alpha } if !(*alpha >= F::zero() && *alpha <= F::one()) => {
                        return bad(format!("quadratic certainty equivalent needs alpha in [0, 1], got {alpha}"));
                    }
                    CertaintyEquivalent::Gul { alpha } if !(*alpha >= F::zero()) => {
                        return bad(format!("gul certainty equivalent needs alpha >= 0, got {alpha}"));
                    }
                    _ => {}
                }
                match dist {
                    Dist::PowerMvv { .. } => bad("CRA needs a uniform or tabulated quantile function".into()),
                    Dist::Tabulated(v) => {
                        if v.segments().iter().enumerate().any(|(k, s)| !(s.derivative(v.knots()[k]) > F::zero())) {
                            return bad("tabulated quantile function needs v' > 0".into());
                        }
                        Ok(())
                    }
                    Dist::Uniform => Ok(()),
                }
            }
        }
    }
}

/// Solver and quadrature tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<F> {
    pub eta: F,
    pub quad: F,
    pub root: F,
}

impl<F: Scalar> Default for Tolerances<F> {
    fn default() -> Self {
        Tolerances { eta: F::c(1e-7), quad: F::c(1e-9), root: F::c(1e-10) }
    }
}

/// A profile of bidders with a common log-space horizon.
#[derive(Debug, Clone)]
pub struct Environment<F> {
    pub bidders: Vec<Bidder<F>>,
    pub t_max: F,
    pub tolerances: Tolerances<F>,
}

impl<F: Scalar> Environment<F> {
    /// Validated environment with default horizon and tolerances.
    pub fn new(bidders: Vec<Bidder<F>>) -> Result<Self> {
        let env = Environment { bidders, t_max: F::c(crate::transforms::T_MAX), tolerances: Tolerances::default() };
        env.validate()?;
        Ok(env)
    }

    pub fn n(&self) -> usize {
        self.bidders.len()
    }

    /// Checks every family; returns warnings for admitted boundary cases.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.bidders.is_empty() {
            return Err(Error::InvalidEnvironment("no bidders".into()));
        }
        if !(self.t_max > F::zero()) {
            return Err(Error::InvalidEnvironment("t_max must be positive".into()));
        }
        let t = &self.tolerances;
        if !(t.eta > F::zero() && t.quad > F::zero() && t.root > F::zero()) {
            return Err(Error::InvalidEnvironment("tolerances must be positive".into()));
        }
        let mut w = Vec::new();
        for b in &self.bidders {
            b.validate(&mut w)?;
        }
        Ok(w)
    }

    fn bidder(&self, i: usize) -> Result<&Bidder<F>> {
        self.bidders.get(i).ok_or(Error::DimensionMismatch { expected: self.n(), found: i + 1 })
    }

    pub fn h(&self, i: usize, x: F, u: F) -> Result<F> {
        Ok(self.bidder(i)?.h(x, u))
    }

    pub fn marginal(&self, i: usize, x: F, u: F) -> Result<F> {
        Ok(self.bidder(i)?.marginal(x, u))
    }

    pub fn mvv(&self, i: usize, u: F) -> Result<F> {
        Ok(self.bidder(i)?.mvv(u))
    }

    pub fn semi_elasticities(&self, i: usize, x: F, u: F) -> Result<(F, F)> {
        Ok(self.bidder(i)?.semi_elasticities(x, u))
    }

    /// `dR_i/d delta (delta, t)`; requires `0 <= delta <= t`.
    pub fn r_partial(&self, i: usize, delta: F, t: F) -> Result<F> {
        let slack = F::tol(1e-12) * (F::one() + t);
        if !(delta >= -slack && delta <= t + slack) {
            return Err(Error::DomainError(format!("delta = {delta} outside [0, {t}]")));
        }
        Ok(self.bidder(i)?.r_partial_unchecked(delta.max(F::zero()).min(t), t))
    }

    /// `R_i(delta, t) = int_0^delta dR_i/d delta (tau, t) dtau`.
    pub fn r(&self, i: usize, delta: F, t: F) -> Result<F> {
        self.r_partial(i, delta, t)?;
        let b = self.bidder(i)?;
        Ok(adaptive_gauss_legendre(F::zero(), delta.min(t), F::c(1e-13), &mut |d| b.r_partial_unchecked(d, t)))
    }

    /// Quantile function `v(u)` where the family has one in closed form.
    pub fn quantile_value(&self, i: usize, u: F) -> Result<Option<F>> {
        let d = match self.bidder(i)? {
            Bidder::Linear { dist } | Bidder::EvH { dist, .. } | Bidder::Cra { dist, .. } => dist,
            Bidder::EvPower { beta } => return Ok(Some(power_quantile(*beta, u))),
        };
        Ok(match d {
            Dist::Uniform => Some(u),
            Dist::PowerMvv { beta } => Some(power_quantile(*beta, u)),
            Dist::Tabulated(_) => None,
        })
    }

    /// `sum_i int_0^{t_max} e^{-t} R_i(delta_i(t), t) dt`.
    pub fn revenue_from_delta(&self, deltas: &[DeltaPath<F>]) -> Result<F> {
        if deltas.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: deltas.len() });
        }
        let mut total = F::zero();
        let rule = crate::numeric::gauss_legendre();
        for (b, d) in self.bidders.iter().zip(deltas) {
            let inner = |t: F| -> F {
                let dt = d.eval(t).min(t);
                rule.integrate(F::zero(), dt, |s| b.r_partial_unchecked(s, t))
            };
            for w in revenue_panels(d).windows(2) {
                total = total + rule.integrate(w[0], w[1], |t| (-t).exp() * inner(t));
            }
        }
        Ok(total)
    }

    /// Parses the JSON description; tabulated inputs are CSV paths relative to `base`.
    pub fn from_json_str(text: &str, base: Option<&Path>) -> Result<Self> {
        let spec: EnvironmentSpec = serde_json::from_str(text)?;
        spec.build(base)
    }
}

fn power_quantile<F: Scalar>(beta: F, u: F) -> F {
    let e = beta.recip() + F::one();
    let w = F::one() - u;
    if w < F::c(1e-7) {
        // mean of s^{1/beta} over [u, 1] for a short interval
        return F::one() - beta.recip() * w * F::c(0.5);
    }
    (F::one() - u.powf(e)) / (e * w)
}

/// Regularity margins along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport<F> {
    /// `min (xi^u - xi^x) / (|xi^u| + |xi^x|)` over bidders and grid points.
    pub margin_a: F,
    pub worst_t_a: F,
    /// `min (1 - sum_j (xi_j^x - max(0, xi^x)) / (xi_j^x - xi_j^u))`.
    pub margin_b: F,
    pub worst_t_b: F,
    /// Per grid point `(t, margin_a, margin_b)`.
    pub per_t: Vec<(F, F, F)>,
}

impl<F: Scalar> RegularityReport<F> {
    pub fn holds(&self) -> bool {
        self.margin_a > F::c(1e-9) && self.margin_b > F::zero()
    }
}

/// Conditions (A) and (B) along `delta_sharp` at its grid points up to `t_upto`.
///
/// Margin (A) is normalized by the size of the semi-elasticities so that it does not vanish with `x`.
pub fn regularity_report<F: Scalar>(env: &Environment<F>, delta_sharp: &[DeltaPath<F>], t_upto: Option<F>) -> RegularityReport<F> {
    let ts = delta_sharp[0].ts();
    let mut per_t = Vec::with_capacity(ts.len());
    let (mut ma, mut ta, mut mb, mut tb) = (F::infinity(), F::zero(), F::infinity(), F::zero());
    for &t in ts {
        if t_upto.is_some_and(|c| t > c) {
            break;
        }
        let xi: Vec<(F, F)> = env
            .bidders
            .iter()
            .zip(delta_sharp)
            .map(|(b, d)| {
                let dl = d.eval(t);
                b.semi_elasticities((dl - t).exp(), (-dl).exp())
            })
            .collect();
        let a = xi
            .iter()
            .map(|(x, u)| {
                let s = x.abs() + u.abs();
                if s > F::zero() {
                    (*u - *x) / s
                } else {
                    F::one()
                }
            })
            .fold(F::infinity(), F::min);
        let top = xi.iter().map(|(x, _)| *x).fold(F::zero(), F::max);
        let sum: F = xi
            .iter()
            .map(|(x, u)| {
                let den = *x - *u;
                if den.abs() <= F::min_positive_value() {
                    F::zero()
                } else {
                    (*x - top) / den
                }
            })
            .sum();
        let b = F::one() - sum;
        if a < ma {
            ma = a;
            ta = t;
        }
        if b < mb {
            mb = b;
            tb = t;
        }
        per_t.push((t, a, b));
    }
    RegularityReport { margin_a: ma, worst_t_a: ta, margin_b: mb, worst_t_b: tb, per_t }
}

// ---------------------------------------------------------------------------
// JSON interchange

/// Integration panels for a path: slope kinks above `1e-6` plus a uniform grid of width at most `0.05`.
fn revenue_panels<F: Scalar>(d: &DeltaPath<F>) -> Vec<F> {
    let (t, v) = (d.ts(), d.deltas());
    let width = F::c(0.05);
    let kink = F::c(1e-3);
    let mut out = vec![t[0]];
    let slope = |k: usize| (v[k + 1] - v[k]) / (t[k + 1] - t[k]);
    let mut prev = slope(0);
    for k in 1..t.len() {
        let s = if k + 1 < t.len() { slope(k) } else { prev };
        let last = *out.last().unwrap();
        if k + 1 == t.len() || (s - prev).abs() > kink {
            let parts = ((t[k] - last) / width).ceil().to_usize().unwrap_or(1).max(1);
            for j in 1..=parts {
                out.push(last + (t[k] - last) * F::from_usize_lossy(j) / F::from_usize_lossy(parts));
            }
            *out.last_mut().unwrap() = t[k];
        }
        prev = s;
    }
    out
}

/// Top-level JSON description of an environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub bidders: Vec<BidderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum DistName {
    Uniform,
    PowerMvv,
    Tabulated,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum GName {
    Quadratic,
    Gul,
}

/// One bidder in the JSON description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BidderSpec {
    Linear {
        dist: DistName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table: Option<String>,
    },
    EvPower {
        beta: f64,
    },
    EvH {
        gamma: f64,
        dist: DistName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table: Option<String>,
    },
    Cra {
        g: GName,
        alpha: f64,
        dist: DistName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table: Option<String>,
    },
}

fn build_dist<F: Scalar>(d: DistName, beta: Option<f64>, table: &Option<String>, base: Option<&Path>) -> Result<Dist<F>> {
    match d {
        DistName::Uniform => Ok(Dist::Uniform),
        DistName::PowerMvv => {
            let b = beta.ok_or_else(|| Error::InvalidEnvironment("power-mvv needs \"beta\"".into()))?;
            Ok(Dist::PowerMvv { beta: F::c(b) })
        }
        DistName::Tabulated => {
            let rel = table.as_ref().ok_or_else(|| Error::InvalidEnvironment("tabulated needs \"table\"".into()))?;
            let path = match base {
                Some(b) => b.join(rel),
                None => rel.into(),
            };
            let file = std::fs::File::open(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            Ok(Dist::Tabulated(read_breakpoints_csv(file)?))
        }
    }
}

impl EnvironmentSpec {
    pub fn build<F: Scalar>(&self, base: Option<&Path>) -> Result<Environment<F>> {
        let mut bidders = Vec::with_capacity(self.bidders.len());
        for b in &self.bidders {
            bidders.push(match b {
                BidderSpec::Linear { dist, beta, table } => Bidder::Linear { dist: build_dist(*dist, *beta, table, base)? },
                BidderSpec::EvPower { beta } => Bidder::EvPower { beta: F::c(*beta) },
                BidderSpec::EvH { gamma, dist, beta, table } => {
                    Bidder::EvH { dist: build_dist(*dist, *beta, table, base)?, gamma: F::c(*gamma) }
                }
                BidderSpec::Cra { g, alpha, dist, table } => {
                    let a = F::c(*alpha);
                    let g = match g {
                        GName::Quadratic => CertaintyEquivalent::Quadratic { alpha: a },
                        GName::Gul => CertaintyEquivalent::Gul { alpha: a },
                    };
                    Bidder::Cra { dist: build_dist(*dist, None, table, base)?, g }
                }
            });
        }
        let mut tol = Tolerances::default();
        if let Some(t) = self.tolerances {
            if let Some(v) = t.eta {
                tol.eta = F::c(v);
            }
            if let Some(v) = t.quad {
                tol.quad = F::c(v);
            }
            if let Some(v) = t.root {
                tol.root = F::c(v);
            }
        }
        let env = Environment {
            bidders,
            t_max: F::c(self.t_max.unwrap_or(crate::transforms::T_MAX)),
            tolerances: tol,
        };
        env.validate()?;
        Ok(env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cra(alpha: f64) -> Bidder<f64> {
        Bidder::Cra { dist: Dist::Uniform, g: CertaintyEquivalent::Quadratic { alpha } }
    }

    #[test]
    fn family_values() {
        let ev = Bidder::EvPower { beta: 0.5 };
        assert_relative_eq!(ev.h(0.5, 0.8), 0.16, epsilon = 1e-15);
        assert_relative_eq!(ev.marginal(1.0, 1.0), 2.0);
        assert_relative_eq!(cra(1.0).h(1.0, 1.0), 1.0);
        assert_relative_eq!(cra(1.0).marginal(0.5, 0.5), 0.0);
        let lin = Bidder::Linear { dist: Dist::Uniform };
        assert_relative_eq!(lin.marginal(0.3, 0.75), 0.5);
        assert_eq!(lin.h(0.0, 0.4), 0.0);
    }

    #[test]
    fn r_partial_closed_forms() {
        let env = Environment::new(vec![Bidder::EvPower { beta: 0.4 }, cra(1.0)]).unwrap();
        for (d, t) in [(0.3, 1.0), (1.2, 2.5), (0.0, 0.7)] {
            let want = 2.0 * f64::exp(-(1.0 / 0.4 - 1.0) * d) * f64::exp(-t);
            assert_relative_eq!(env.r_partial(0, d, t).unwrap(), want, epsilon = 1e-14);
            let want = f64::exp(-d) - (1.0 - f64::exp(-d)) * 2.0 * f64::exp(d - t);
            assert_relative_eq!(env.r_partial(1, d, t).unwrap(), want, epsilon = 1e-14);
        }
        assert!(matches!(env.r_partial(0, 2.0, 1.0), Err(Error::DomainError(_))));
    }

    #[test]
    fn semi_elasticity_examples() {
        let ev = Bidder::EvPower { beta: 0.5 };
        let (xx, xu) = ev.semi_elasticities(0.4, 0.7);
        assert_relative_eq!(xx, 2.0 * 0.49 * 0.4, epsilon = 1e-14);
        assert_relative_eq!(xu, 4.0 * 0.49 * 0.4, epsilon = 1e-14);
        let (xx, _) = cra(0.7).semi_elasticities(0.3, 0.6);
        assert_relative_eq!(xx, -2.0 * 0.7 * 0.3 * 0.4, epsilon = 1e-14);
        assert_eq!(Bidder::Linear { dist: Dist::Uniform }.semi_elasticities(0.5, 0.5).0, 0.0);
    }

    #[test]
    fn validation() {
        assert!(Environment::new(vec![Bidder::EvPower { beta: 1.5 }]).is_err());
        assert!(Environment::new(vec![cra(1.5)]).is_err());
        assert!(Environment::new(vec![Bidder::EvH { dist: Dist::Uniform, gamma: 1.0 }]).is_err());
        let env = Environment::new(vec![Bidder::EvPower { beta: 1.0 }]).unwrap();
        assert_eq!(env.validate().unwrap().len(), 1);
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let text = r#"{"bidders":[{"family":"linear","dist":"uniform"},
            {"family":"linear","dist":"power-mvv","beta":0.5},
            {"family":"ev-power","beta":0.5},
            {"family":"ev-h","gamma":2.0,"dist":"uniform"},
            {"family":"cra","g":"quadratic","alpha":1.0,"dist":"uniform"},
            {"family":"cra","g":"gul","alpha":0.5,"dist":"uniform"}],"t_max":25,"tolerances":{"eta":1e-6}}"#;
        let env: Environment<f64> = Environment::from_json_str(text, None).unwrap();
        assert_eq!(env.n(), 6);
        assert_eq!(env.t_max, 25.0);
        assert_eq!(env.tolerances.eta, 1e-6);
        let bad = r#"{"bidders":[{"family":"ev-power","beta":0.5,"extra":1}]}"#;
        assert!(Environment::<f64>::from_json_str(bad, None).is_err());
        let bad = r#"{"bidders":[],"colour":1}"#;
        assert!(Environment::<f64>::from_json_str(bad, None).is_err());
    }

    #[test]
    fn power_quantile_matches_integral() {
        let beta = 0.5;
        for u in [0.0, 0.3, 0.9, 0.999_999_99] {
            let direct = adaptive_gauss_legendre(u, 1.0, 1e-14, &mut |s: f64| s.powf(1.0 / beta)) / (1.0 - u);
            assert_relative_eq!(power_quantile(beta, u), direct, epsilon = 1e-7);
        }
    }
}
