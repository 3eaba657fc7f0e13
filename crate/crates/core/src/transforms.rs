//! The two coordinate changes of an interim allocation: the quantile-of-virtual-mass map `psi`
//! and its log-space form `delta(t) = -ln psi(e^-t)`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::monotone::{chords, MonotoneFn, Segment, ABSCISSA_TOL};
use crate::numeric::bisect_increasing;
use crate::Scalar;

/// Default log-space horizon.
pub const T_MAX: f64 = 30.0;

/// Uniform seed points used when a log-space path must be sampled.
const DELTA_SEED_POINTS: usize = 4096;

/// Interpolation tolerance on `delta` for non-affine log-space pieces.
const DELTA_INTERP_TOL: f64 = 1e-10;

/// A continuous nondecreasing map of `[0, 1]` onto `[psi(0), 1]` with `iota / psi(iota)` nondecreasing.
#[derive(Debug, Clone)]
pub struct PsiFn<F> {
    f: MonotoneFn<F>,
}

impl<F: Scalar> PsiFn<F> {
    /// Wraps and validates a candidate.
    pub fn new(f: MonotoneFn<F>) -> Result<Self> {
        let tol = F::tol(1e-9);
        if f.lo().abs() > F::tol(ABSCISSA_TOL) || (f.hi() - F::one()).abs() > F::tol(ABSCISSA_TOL) {
            return Err(Error::InvalidPsi("domain must be [0, 1]".into()));
        }
        if (f.end_value() - F::one()).abs() > tol {
            return Err(Error::InvalidPsi("psi(1) must equal 1".into()));
        }
        if f.eval(F::zero()) < F::zero() {
            return Err(Error::InvalidPsi("psi(0) must be nonnegative".into()));
        }
        for k in 1..f.knots().len() {
            if (f.right_at(k) - f.left_at(k)).abs() > tol {
                return Err(Error::InvalidPsi(format!("discontinuous at {}", f.knots()[k])));
            }
        }
        // iota / psi(iota) must not decrease; probe knots and interior points.
        let mut prev = F::zero();
        for (k, w) in f.knots().windows(2).enumerate() {
            for j in 0..=4 {
                let i = w[0] + (w[1] - w[0]) * F::from_usize_lossy(j) / F::c(4.0);
                if i <= F::zero() {
                    continue;
                }
                let v = f.segments()[k].eval(i);
                if v <= F::zero() {
                    return Err(Error::InvalidPsi(format!("psi vanishes at {i} > 0")));
                }
                let r = i / v;
                if r < prev - tol * (F::one() + prev) {
                    return Err(Error::InvalidPsi(format!("iota/psi decreases near {i}")));
                }
                prev = prev.max(r);
            }
        }
        Ok(PsiFn { f })
    }

    pub(crate) fn new_unchecked(f: MonotoneFn<F>) -> Self {
        PsiFn { f }
    }

    pub fn inner(&self) -> &MonotoneFn<F> {
        &self.f
    }

    pub fn eval(&self, iota: F) -> F {
        self.f.eval(iota)
    }

    pub fn at_zero(&self) -> F {
        self.f.eval(F::zero())
    }

    /// `sup { iota : psi(iota) <= s }`.
    pub fn generalized_inverse(&self, s: F) -> F {
        self.f.generalized_inverse(s)
    }

    /// `int_a^1 iota d ln psi(iota)`.
    pub fn log_stieltjes_to_one(&self, a: F) -> F {
        self.f.log_stieltjes(a, F::one())
    }
}

/// Log-space path: affine interpolation of `(t, delta)` samples with slopes in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaPath<F> {
    t: Vec<F>,
    delta: Vec<F>,
}

impl<F: Scalar> DeltaPath<F> {
    /// Validates samples; slopes within `1e-9` of `[0, 1]` are projected into it.
    pub fn new(t: Vec<F>, delta: Vec<F>) -> Result<Self> {
        if t.len() != delta.len() {
            return Err(Error::DimensionMismatch { expected: t.len(), found: delta.len() });
        }
        if t.len() < 2 {
            return Err(Error::InvalidDelta("need at least two samples".into()));
        }
        if t[0].abs() > F::tol(ABSCISSA_TOL) || delta[0].abs() > F::tol(1e-9) {
            return Err(Error::InvalidDelta("path must start at (0, 0)".into()));
        }
        let slack = F::tol(1e-9);
        let mut out = Vec::with_capacity(delta.len());
        out.push(F::zero());
        for k in 1..t.len() {
            let h = t[k] - t[k - 1];
            if !(h > F::zero()) || !delta[k].is_finite() {
                return Err(Error::InvalidDelta("abscissae must be strictly increasing".into()));
            }
            let step = delta[k] - delta[k - 1];
            if step < -slack * h.max(F::one()) || step > h + slack * h.max(F::one()) {
                return Err(Error::InvalidDelta(format!("slope {} outside [0, 1] at t = {}", step / h, t[k])));
            }
            let prev = out[k - 1];
            out.push(delta[k].max(prev).min(prev + h));
        }
        Ok(DeltaPath { t, delta: out })
    }

    pub fn ts(&self) -> &[F] {
        &self.t
    }

    pub fn deltas(&self) -> &[F] {
        &self.delta
    }

    pub fn t_max(&self) -> F {
        *self.t.last().unwrap()
    }

    /// Affine interpolation, constant beyond the horizon.
    pub fn eval(&self, t: F) -> F {
        if t <= F::zero() {
            return F::zero();
        }
        if t >= self.t_max() {
            return *self.delta.last().unwrap();
        }
        let k = self.t.partition_point(|&v| v <= t) - 1;
        let h = self.t[k + 1] - self.t[k];
        self.delta[k] + (self.delta[k + 1] - self.delta[k]) * (t - self.t[k]) / h
    }

    /// Slope on the piece containing `t`.
    pub fn slope_at(&self, t: F) -> F {
        let k = (self.t.partition_point(|&v| v <= t).max(1) - 1).min(self.t.len() - 2);
        (self.delta[k + 1] - self.delta[k]) / (self.t[k + 1] - self.t[k])
    }

    /// `inf { t : delta(t) >= y }`, or `None` above `delta(t_max)`.
    pub fn lower_inverse(&self, y: F) -> Option<F> {
        if y <= F::zero() {
            return Some(F::zero());
        }
        if y > *self.delta.last().unwrap() {
            return None;
        }
        let j = self.delta.partition_point(|&d| d < y);
        let (d0, d1) = (self.delta[j - 1], self.delta[j]);
        let (t0, t1) = (self.t[j - 1], self.t[j]);
        if d1 <= d0 {
            return Some(t1);
        }
        Some((t0 + (t1 - t0) * (y - d0) / (d1 - d0)).min(t1))
    }

    /// Reads a `t,delta` table with header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let h = rdr.headers()?.clone();
        if h.len() != 2 || &h[0] != "t" || &h[1] != "delta" {
            return Err(Error::Parse("expected header t,delta".into()));
        }
        let (mut t, mut d) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let p = |s: &str| s.parse::<f64>().map(F::c).map_err(|_| Error::Parse(format!("bad number {s:?}")));
            t.push(p(&rec[0])?);
            d.push(p(&rec[1])?);
        }
        Self::new(t, d)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "delta"])?;
        for (t, d) in self.t.iter().zip(&self.delta) {
            w.write_record([t.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Drops pieces narrower than the abscissa tolerance and assembles a function.
fn assemble<F: Scalar>(pieces: Vec<(F, Segment<F>)>, hi: F, end: F, lo: F) -> Result<MonotoneFn<F>> {
    let tol = F::tol(ABSCISSA_TOL);
    let mut knots: Vec<F> = Vec::with_capacity(pieces.len() + 1);
    let mut segs: Vec<Segment<F>> = Vec::with_capacity(pieces.len());
    for (start, seg) in pieces {
        if start >= hi - tol {
            continue;
        }
        while let Some(&last) = knots.last() {
            if start - last <= tol {
                knots.pop();
                segs.pop();
            } else {
                break;
            }
        }
        // A piece stretched over dropped neighbours can overshoot the next start when it is
        // steep; fall back to the chord in that case.
        if let (Some(&a), Some(prev)) = (knots.last(), segs.last_mut()) {
            let (ya, y, over) = (prev.eval(a), seg.eval(start), prev.eval(start));
            if over > y + F::tol(1e-13) * (F::one() + y.abs()) {
                *prev = Segment::affine(a, ya.min(y), start, y);
            }
        }
        knots.push(start);
        segs.push(seg);
    }
    if knots.is_empty() {
        knots.push(lo);
        segs.push(Segment::constant(end));
    }
    if knots[0] > lo + tol {
        let v = segs[0].eval(knots[0]);
        knots.insert(0, lo);
        segs.insert(0, Segment::constant(v));
    }
    knots[0] = lo;
    knots.push(hi);
    MonotoneFn::from_segments(knots, segs, end)
}

/// `psi = (u x(u))^{-1}`, the generalized inverse of `u -> u x(u)`.
pub fn psi_transform<F: Scalar>(x: &MonotoneFn<F>) -> Result<PsiFn<F>> {
    x.validate_cdf()?;
    let tol = F::tol(ABSCISSA_TOL);
    let knots = x.knots();
    let last = knots.len() - 1;
    let mut pieces: Vec<(F, Segment<F>)> = Vec::new();
    for k in 0..=last {
        let u = knots[k];
        let (l, r) = (if k == 0 { F::zero() } else { u * x.left_at(k) }, u * x.right_at(k));
        if r > l + tol {
            pieces.push((l, Segment::constant(u)));
        }
        if k < last {
            let seg = &x.segments()[k];
            let (a, b) = (u, knots[k + 1]);
            let (ia, ib) = (r, b * seg.eval(b));
            if ib <= ia + tol {
                continue;
            }
            match seg.mul_identity(a, b) {
                Some(p) => match p.inverse(a, b) {
                    Some(inv) => pieces.push((ia, inv)),
                    None => pieces.extend(chords(ia, ib, |i| p.solve(i, a, b))),
                },
                // Chord the inverse of the exact product so no error is divided by small u later.
                None => {
                    let (sa, sb) = (seg.eval(a), seg.eval(b));
                    pieces.extend(chords(ia, ib, |i| {
                        if i <= ia {
                            return a;
                        }
                        if i >= ib {
                            return b;
                        }
                        // Monotone x brackets the root by i / x(b) and i / x(a).
                        let lo = (i / sb).max(a);
                        let hi = if sa > F::zero() { (i / sa).min(b) } else { b };
                        bisect_increasing(lo, hi, (hi - lo) * F::epsilon(), |v| v * seg.eval(v) - i)
                    }));
                }
            }
        }
    }
    let f = assemble(pieces, F::one(), F::one(), F::zero())?;
    Ok(PsiFn::new_unchecked(f))
}

/// `x(u) = psi^{-1}(u) / u`, the inverse of [`psi_transform`].
pub fn psi_to_cdf<F: Scalar>(psi: &PsiFn<F>) -> Result<MonotoneFn<F>> {
    let f = psi.inner();
    let tol = F::tol(ABSCISSA_TOL);
    let mut pieces: Vec<(F, Segment<F>)> = Vec::new();
    let p0 = f.eval(F::zero());
    if p0 > tol {
        pieces.push((F::zero(), Segment::constant(F::zero())));
    }
    for (k, seg) in f.segments().iter().enumerate() {
        let (ia, ib) = (f.knots()[k], f.knots()[k + 1]);
        let (ua, ub) = (seg.eval(ia), seg.eval(ib));
        if ub <= ua + tol {
            continue;
        }
        let closed = seg.inverse(ia, ib).and_then(|inv| inv.div_identity(ua, ub));
        match closed {
            Some(s) => pieces.push((ua, s)),
            None => pieces.extend(chords(ua, ub, |u| {
                let i = seg.solve(u, ia, ib);
                if u > F::zero() {
                    i / u
                } else {
                    F::zero()
                }
            })),
        }
    }
    assemble(pieces, F::one(), F::one(), F::zero())
}

/// Geometric mean `(prod psi_i)^{1/n}` on the union of breakpoints.
pub fn geometric_mean_psi<F: Scalar>(list: &[PsiFn<F>]) -> Result<PsiFn<F>> {
    if list.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    if list.len() == 1 {
        return Ok(list[0].clone());
    }
    let tol = F::tol(ABSCISSA_TOL);
    let mut knots: Vec<F> = list.iter().flat_map(|p| p.inner().knots().iter().copied()).collect();
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup_by(|a, b| (*a - *b).abs() <= tol);
    let n = F::from_usize_lossy(list.len());
    let mut segs = Vec::with_capacity(knots.len());
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = (a + b) * F::c(0.5);
        let parts: Vec<Segment<F>> = list
            .iter()
            .map(|p| {
                let f = p.inner();
                let k = f.knots().partition_point(|&v| v <= mid).saturating_sub(1).min(f.segments().len() - 1);
                f.segments()[k].clone()
            })
            .collect();
        let all_power = parts.iter().all(|s| match s {
            Segment::Power { scale, .. } => *scale > F::zero(),
            Segment::Rational { a, c, b } => a.is_zero() && c.is_zero() && *b > F::zero(),
            _ => false,
        });
        if all_power {
            let exponent = parts
                .iter()
                .map(|s| match s {
                    Segment::Power { exponent, .. } => *exponent,
                    _ => F::zero(),
                })
                .sum::<F>()
                / n;
            let g = Segment::GeoMean(parts);
            segs.push(Segment::Power { scale: g.eval(b), anchor: b, exponent });
        } else {
            segs.push(Segment::GeoMean(parts));
        }
    }
    let f = MonotoneFn::from_segments_unchecked(knots, segs, F::one())?;
    Ok(PsiFn::new_unchecked(f))
}

/// Log-space path of `x` on `[0, t_max]`: exact at breakpoint images, with non-affine pieces
/// seeded by a uniform grid and refined until chords are within `1e-10` of `delta`.
pub fn delta_transform<F: Scalar>(x: &MonotoneFn<F>, t_max: F) -> Result<DeltaPath<F>> {
    let psi = psi_transform(x)?;
    delta_from_psi(&psi, t_max)
}

/// Log-space path of a `psi` function.
pub fn delta_from_psi<F: Scalar>(psi: &PsiFn<F>, t_max: F) -> Result<DeltaPath<F>> {
    if !(t_max > F::zero()) {
        return Err(Error::DomainError("t_max must be positive".into()));
    }
    let f = psi.inner();
    let delta_at = |t: F| -> F {
        if t <= F::zero() {
            return F::zero();
        }
        let v = f.eval((-t).exp());
        -(v.ln())
    };
    // Breakpoint images in t.
    let mut cuts: Vec<F> = f
        .knots()
        .iter()
        .filter(|&&i| i > F::zero())
        .map(|&i| -i.ln())
        .filter(|&t| t > F::zero() && t < t_max)
        .collect();
    cuts.push(F::zero());
    cuts.push(t_max);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() <= F::tol(ABSCISSA_TOL));
    let h0 = t_max / F::from_usize_lossy(DELTA_SEED_POINTS);
    let tol = F::tol(DELTA_INTERP_TOL);
    let mut ts = vec![F::zero()];
    let mut ds = vec![F::zero()];
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = (-(a + b) * F::c(0.5)).exp();
        let k = f.knots().partition_point(|&v| v <= mid).saturating_sub(1).min(f.segments().len() - 1);
        let linear = match &f.segments()[k] {
            Segment::Power { .. } => true,
            s => s.is_constant(),
        };
        if linear {
            ts.push(b);
            ds.push(delta_at(b));
            continue;
        }
        let m = ((b - a) / h0).ceil().to_usize().unwrap_or(1).max(1);
        let mut ta = a;
        let mut da = delta_at(a);
        for j in 1..=m {
            let tb = if j == m { b } else { a + (b - a) * F::from_usize_lossy(j) / F::from_usize_lossy(m) };
            let db = delta_at(tb);
            refine_delta(ta, da, tb, db, tol, 0, &delta_at, &mut ts, &mut ds);
            ts.push(tb);
            ds.push(db);
            ta = tb;
            da = db;
        }
    }
    DeltaPath::new(ts, ds)
}

#[allow(clippy::too_many_arguments)]
fn refine_delta<F: Scalar>(
    a: F,
    da: F,
    b: F,
    db: F,
    tol: F,
    depth: usize,
    f: &impl Fn(F) -> F,
    ts: &mut Vec<F>,
    ds: &mut Vec<F>,
) {
    if depth >= 30 {
        return;
    }
    let m = (a + b) * F::c(0.5);
    let dm = f(m);
    if (dm - (da + db) * F::c(0.5)).abs() <= tol {
        return;
    }
    refine_delta(a, da, m, dm, tol, depth + 1, f, ts, ds);
    ts.push(m);
    ds.push(dm);
    refine_delta(m, dm, b, db, tol, depth + 1, f, ts, ds);
}

/// `x(u) = exp(delta(t) - t)` at `t = inf { t : delta(t) >= -ln u }`, and zero when no such `t <= t_max`.
///
/// Each affine piece of slope `m > 0` becomes an exact power piece with exponent `1/m - 1`.
pub fn delta_to_cdf<F: Scalar>(delta: &DeltaPath<F>) -> Result<MonotoneFn<F>> {
    let (t, d) = (delta.ts(), delta.deltas());
    let mut pieces: Vec<(F, Segment<F>)> = Vec::with_capacity(t.len());
    let u_min = (-*d.last().unwrap()).exp();
    if u_min > F::tol(ABSCISSA_TOL) {
        pieces.push((F::zero(), Segment::constant(F::zero())));
    }
    for k in (0..t.len() - 1).rev() {
        let h = t[k + 1] - t[k];
        let m = (d[k + 1] - d[k]) / h;
        if m <= F::zero() {
            continue;
        }
        let lo = (-d[k + 1]).exp();
        let anchor = (-d[k]).exp();
        if anchor - lo <= F::tol(ABSCISSA_TOL) {
            continue;
        }
        let scale = (d[k] - t[k]).exp();
        let exponent = (m.recip() - F::one()).max(F::zero());
        pieces.push((lo, Segment::Power { scale, anchor, exponent }));
    }
    if pieces.is_empty() {
        pieces.push((F::zero(), Segment::constant(F::zero())));
    }
    assemble(pieces, F::one(), F::one(), F::zero())
}
