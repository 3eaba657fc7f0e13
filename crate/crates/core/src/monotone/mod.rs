//! Right-continuous nondecreasing functions on a closed interval, built from closed-form pieces.

mod io;
mod segment;

use std::sync::OnceLock;

pub use io::{read_breakpoints_csv, write_breakpoints_csv};
pub use segment::Segment;

use crate::error::{Error, Result};
use crate::Scalar;

/// Breakpoints closer than this are merged.
pub const ABSCISSA_TOL: f64 = 1e-12;

/// Midpoint tolerance of chord approximations, and their bisection depth range.
const CHORD_TOL: f64 = 1e-9;
const CHORD_MIN_DEPTH: usize = 4;
const CHORD_MAX_DEPTH: usize = 40;
const CHORD_SLOPE_CAP: f64 = 100.0;

/// Affine chords of `f` on `[a, b]`, bisected until each midpoint is within `1e-9 * min(|f|, 1)` of `f`
/// in both coordinates, the horizontal one with slopes capped at `1 / 100`.
pub(crate) fn chords<F: Scalar>(a: F, b: F, f: impl Fn(F) -> F) -> Vec<(F, Segment<F>)> {
    let mut out = Vec::new();
    let (fa, fb) = (f(a), f(b));
    chord_split(a, fa, b, fb, 0, &f, &mut out);
    out
}

fn chord_split<F: Scalar>(a: F, fa: F, b: F, fb: F, depth: usize, f: &impl Fn(F) -> F, out: &mut Vec<(F, Segment<F>)>) {
    let m = (a + b) * F::c(0.5);
    let fm = f(m);
    // Horizontal distance counts too, so inverses of the chords are accurate as well.
    let flat = ((b - a) / (fb - fa).abs()).min(F::c(CHORD_SLOPE_CAP)).max(F::one());
    let off = (fm - (fa + fb) * F::c(0.5)).abs() * flat;
    let splittable = depth < CHORD_MAX_DEPTH && b - a > F::tol(ABSCISSA_TOL) * F::c(4.0);
    let allowed = F::tol(CHORD_TOL) * fm.abs().min(F::one());
    if splittable && (depth < CHORD_MIN_DEPTH || off > allowed) {
        chord_split(a, fa, m, fm, depth + 1, f, out);
        chord_split(m, fm, b, fb, depth + 1, f, out);
    } else {
        out.push((a, Segment::affine(a, fa, b, fb)));
    }
}

/// A breakpoint with its left and right limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint<F> {
    pub u: F,
    pub left: F,
    pub right: F,
}

/// Nondecreasing, right-continuous function on `[knots[0], knots[last]]`.
///
/// Piece `k` holds on `[knots[k], knots[k+1])`; the value at the last knot is `end`.
#[derive(Debug, Clone)]
pub struct MonotoneFn<F> {
    knots: Vec<F>,
    segments: Vec<Segment<F>>,
    end: F,
    cumulative: OnceLock<Vec<F>>,
}

impl<F: Scalar> MonotoneFn<F> {
    /// Piecewise-affine function from breakpoints `(u, left, right)`.
    ///
    /// The left value of the first breakpoint is ignored; the right value of the last is the terminal value.
    pub fn from_breakpoints(points: &[Breakpoint<F>]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidMonotone("need at least two breakpoints".into()));
        }
        let tol = F::tol(ABSCISSA_TOL);
        let mut merged: Vec<Breakpoint<F>> = Vec::with_capacity(points.len());
        for p in points {
            if !(p.u.is_finite() && p.left.is_finite() && p.right.is_finite()) {
                return Err(Error::InvalidMonotone("non-finite breakpoint".into()));
            }
            if let Some(last) = merged.last_mut() {
                if p.u < last.u - tol {
                    return Err(Error::InvalidMonotone("abscissae not sorted".into()));
                }
                if p.u - last.u <= tol {
                    last.right = p.right;
                    continue;
                }
            }
            merged.push(*p);
        }
        if merged.len() < 2 {
            return Err(Error::InvalidMonotone("domain has zero length".into()));
        }
        let knots: Vec<F> = merged.iter().map(|p| p.u).collect();
        let segments = merged
            .windows(2)
            .map(|w| Segment::affine(w[0].u, w[0].right, w[1].u, w[1].left))
            .collect();
        let end = merged.last().unwrap().right;
        Self::from_segments(knots, segments, end)
    }

    /// Function from explicit pieces; validates monotonicity.
    pub fn from_segments(knots: Vec<F>, segments: Vec<Segment<F>>, end: F) -> Result<Self> {
        let f = Self::from_segments_unchecked(knots, segments, end)?;
        f.validate()?;
        Ok(f)
    }

    /// Function from explicit pieces; checks only the shape of the arrays.
    pub fn from_segments_unchecked(knots: Vec<F>, segments: Vec<Segment<F>>, end: F) -> Result<Self> {
        if knots.len() < 2 || segments.len() + 1 != knots.len() {
            return Err(Error::InvalidMonotone(format!(
                "{} knots but {} segments",
                knots.len(),
                segments.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || !end.is_finite() {
            return Err(Error::InvalidMonotone("knots must be strictly increasing".into()));
        }
        Ok(MonotoneFn { knots, segments, end, cumulative: OnceLock::new() })
    }

    pub fn constant(lo: F, hi: F, v: F) -> Self {
        MonotoneFn { knots: vec![lo, hi], segments: vec![Segment::constant(v)], end: v, cumulative: OnceLock::new() }
    }

    pub fn identity(lo: F, hi: F) -> Self {
        MonotoneFn {
            knots: vec![lo, hi],
            segments: vec![Segment::affine(lo, lo, hi, hi)],
            end: hi,
            cumulative: OnceLock::new(),
        }
    }

    /// Piecewise-affine tabulation of `f`, exact at the `critical` points and refined
    /// by bisection until midpoints deviate from the chord by at most `tol`.
    ///
    /// `f` gives right values and `f_left` left limits; `f` must be continuous between critical points.
    pub fn tabulate(
        critical: &[F],
        f: &(dyn Fn(F) -> F + Sync),
        f_left: &(dyn Fn(F) -> F + Sync),
        tol: F,
    ) -> Result<Self> {
        let atol = F::tol(ABSCISSA_TOL);
        let mut crit: Vec<F> = critical.to_vec();
        crit.sort_by(|a, b| a.partial_cmp(b).unwrap());
        crit.dedup_by(|a, b| (*a - *b).abs() <= atol);
        if crit.len() < 2 {
            return Err(Error::InvalidMonotone("tabulation needs a non-degenerate domain".into()));
        }
        let mut pts: Vec<Breakpoint<F>> = Vec::new();
        let last = crit.len() - 1;
        for k in 0..last {
            let (a, b) = (crit[k], crit[k + 1]);
            let ya = f(a);
            let yb = f_left(b);
            let left_a = if k == 0 { ya } else { f_left(a) };
            pts.push(Breakpoint { u: a, left: left_a, right: ya });
            refine(a, ya, b, yb, tol, 0, f, &mut pts);
        }
        let b = crit[last];
        pts.push(Breakpoint { u: b, left: f_left(b), right: f(b) });
        // Remove rounding-level decreases.
        let mut run = F::neg_infinity();
        for p in pts.iter_mut() {
            p.left = p.left.max(run);
            p.right = p.right.max(p.left);
            run = p.right;
        }
        Self::from_breakpoints(&pts)
    }

    pub fn lo(&self) -> F {
        self.knots[0]
    }

    pub fn hi(&self) -> F {
        *self.knots.last().unwrap()
    }

    pub fn knots(&self) -> &[F] {
        &self.knots
    }

    pub fn segments(&self) -> &[Segment<F>] {
        &self.segments
    }

    /// Value at the right end of the domain.
    pub fn end_value(&self) -> F {
        self.end
    }

    /// Right value at knot `k`.
    pub fn right_at(&self, k: usize) -> F {
        if k + 1 == self.knots.len() {
            self.end
        } else {
            self.segments[k].eval(self.knots[k])
        }
    }

    /// Left limit at knot `k` (equal to the right value at the first knot).
    pub fn left_at(&self, k: usize) -> F {
        if k == 0 {
            self.right_at(0)
        } else {
            self.segments[k - 1].eval(self.knots[k])
        }
    }

    pub fn breakpoints(&self) -> Vec<Breakpoint<F>> {
        (0..self.knots.len()).map(|k| Breakpoint { u: self.knots[k], left: self.left_at(k), right: self.right_at(k) }).collect()
    }

    /// True when every piece is affine.
    pub fn is_piecewise_affine(&self) -> bool {
        self.segments.iter().all(|s| matches!(s, Segment::Rational { c, .. } if c.is_zero()))
    }

    /// Index of the piece containing `u` (clamped to the domain).
    fn segment_index(&self, u: F) -> usize {
        let k = self.knots.partition_point(|&v| v <= u);
        k.saturating_sub(1).min(self.segments.len() - 1)
    }

    /// Right-continuous evaluation; arguments outside the domain are clamped.
    pub fn eval(&self, u: F) -> F {
        if u >= self.hi() {
            return self.end;
        }
        let u = u.max(self.lo());
        self.segments[self.segment_index(u)].eval(u)
    }

    /// Left limit `f(u-)`; equals `f(lo)` at the left end.
    pub fn eval_left(&self, u: F) -> F {
        if u <= self.lo() {
            return self.eval(self.lo());
        }
        let u = u.min(self.hi());
        let k = self.knots.partition_point(|&v| v < u) - 1;
        self.segments[k].eval(u)
    }

    fn cumulative(&self) -> &[F] {
        self.cumulative.get_or_init(|| {
            let mut c = Vec::with_capacity(self.knots.len());
            let mut acc = F::zero();
            c.push(acc);
            for (k, s) in self.segments.iter().enumerate() {
                acc = acc + s.integral(self.knots[k], self.knots[k + 1]);
                c.push(acc);
            }
            c
        })
    }

    /// `int_lo^u f`.
    fn primitive(&self, u: F) -> F {
        let cum = self.cumulative();
        if u >= self.hi() {
            return *cum.last().unwrap();
        }
        if u <= self.lo() {
            return F::zero();
        }
        let k = self.segment_index(u);
        cum[k] + self.segments[k].integral(self.knots[k], u)
    }

    /// `int_a^b f(u) du` (negative when `b < a`).
    pub fn integral(&self, a: F, b: F) -> F {
        if b < a {
            return -self.integral(b, a);
        }
        let (ka, kb) = (self.segment_index(a.max(self.lo())), self.segment_index(b.min(self.hi())));
        if ka == kb && b < self.hi() && a >= self.lo() {
            return self.segments[ka].integral(a, b);
        }
        self.primitive(b) - self.primitive(a)
    }

    /// `int_a^b u d ln f(u)` including jump terms; requires `f > 0` on `[a, b]`.
    pub fn log_stieltjes(&self, a: F, b: F) -> F {
        let (a, b) = (a.max(self.lo()), b.min(self.hi()));
        if b <= a {
            return F::zero();
        }
        let mut acc = F::zero();
        let ka = self.segment_index(a);
        for k in ka..self.segments.len() {
            let (s, e) = (self.knots[k].max(a), self.knots[k + 1].min(b));
            if s >= b {
                break;
            }
            if e > s {
                acc = acc + self.segments[k].log_stieltjes(s, e);
            }
            let kn = self.knots[k + 1];
            if kn <= b {
                let (l, r) = (self.left_at(k + 1), self.right_at(k + 1));
                if r > l && l > F::zero() {
                    acc = acc + kn * (r / l).ln();
                }
            }
        }
        acc
    }

    /// `sup { u : f(u) <= y }`, with `sup of the empty set = lo`.
    pub fn generalized_inverse(&self, y: F) -> F {
        let last = self.knots.len() - 1;
        if self.end <= y {
            return self.hi();
        }
        if self.right_at(0) > y {
            return self.lo();
        }
        // Largest k < last with right value <= y.
        let (mut lo, mut hi) = (0usize, last);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.right_at(mid) <= y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = lo;
        let seg = &self.segments[k];
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        if seg.eval(b) <= y {
            return b;
        }
        if seg.is_constant() {
            return b;
        }
        seg.solve(y, a, b)
    }

    /// `inf { u : f(u) >= y }`, with `inf of the empty set = hi`.
    pub fn lower_inverse(&self, y: F) -> F {
        let last = self.knots.len() - 1;
        if self.right_at(0) >= y {
            return self.lo();
        }
        if self.end < y {
            return self.hi();
        }
        // Smallest j >= 1 with right value >= y.
        let (mut lo, mut hi) = (0usize, last);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.right_at(mid) >= y {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let j = hi;
        let seg = &self.segments[j - 1];
        let (a, b) = (self.knots[j - 1], self.knots[j]);
        if seg.eval(b) < y || seg.is_constant() {
            return b;
        }
        seg.solve(y, a, b)
    }

    /// `u -> u * f(u)`; pieces outside the closed family are replaced by 16 affine chords.
    pub fn product_with_identity(&self) -> Self {
        self.map_pieces(|s, a, b| s.mul_identity(a, b), |u, v| u * v)
    }

    /// `u -> f(u) / u` on a domain bounded away from zero at pieces where division is needed.
    pub fn divide_by_identity(&self) -> Self {
        self.map_pieces(|s, a, b| s.div_identity(a, b), |u, v| if u > F::zero() { v / u } else { F::zero() })
    }

    fn map_pieces(
        &self,
        closed: impl Fn(&Segment<F>, F, F) -> Option<Segment<F>>,
        pointwise: impl Fn(F, F) -> F,
    ) -> Self {
        let mut knots = Vec::with_capacity(self.knots.len());
        let mut segs = Vec::with_capacity(self.segments.len());
        for (k, s) in self.segments.iter().enumerate() {
            let (a, b) = (self.knots[k], self.knots[k + 1]);
            match closed(s, a, b) {
                Some(t) => {
                    knots.push(a);
                    segs.push(t);
                }
                None => {
                    for (ua, seg) in chords(a, b, |u| pointwise(u, s.eval(u))) {
                        knots.push(ua);
                        segs.push(seg);
                    }
                }
            }
        }
        knots.push(self.hi());
        let end = pointwise(self.hi(), self.end);
        MonotoneFn { knots, segments: segs, end, cumulative: OnceLock::new() }
    }

    /// Checks that the function is finite and nondecreasing.
    pub fn validate(&self) -> Result<()> {
        let n = self.segments.len();
        let mut prev = F::neg_infinity();
        for k in 0..n {
            let (a, b) = (self.knots[k], self.knots[k + 1]);
            let s = &self.segments[k];
            let (ya, yb) = (s.eval(a), s.eval(b));
            let tol = F::tol(1e-12) * (F::one() + ya.abs().max(yb.abs()));
            if !(ya.is_finite() && yb.is_finite()) {
                return Err(Error::InvalidMonotone(format!("non-finite value on piece {k}")));
            }
            if ya < prev - tol {
                return Err(Error::InvalidMonotone(format!("downward jump at u = {a}")));
            }
            if yb < ya - tol {
                return Err(Error::InvalidMonotone(format!("decreasing piece on [{a}, {b}]")));
            }
            if matches!(s, Segment::Rational { .. } | Segment::Quadratic { .. }) {
                let dtol = F::tol(1e-9) * (F::one() + (yb - ya).abs() / (b - a));
                let da = if a > F::zero() || !matches!(s, Segment::Rational { c, .. } if !c.is_zero()) {
                    s.derivative(a)
                } else {
                    F::zero()
                };
                if da < -dtol || s.derivative(b) < -dtol {
                    return Err(Error::InvalidMonotone(format!("decreasing piece on [{a}, {b}]")));
                }
            }
            prev = yb;
        }
        let tol = F::tol(1e-12) * (F::one() + prev.abs());
        if self.end < prev - tol {
            return Err(Error::InvalidMonotone("downward jump at the right end".into()));
        }
        Ok(())
    }

    /// Checks the interim-allocation shape: domain `[0, 1]`, values in `[0, 1]`, value one at `u = 1`.
    pub fn validate_cdf(&self) -> Result<()> {
        let tol = F::tol(ABSCISSA_TOL);
        if self.lo().abs() > tol || (self.hi() - F::one()).abs() > tol {
            return Err(Error::InvalidCdf("domain must be [0, 1]".into()));
        }
        let t = F::tol(1e-12);
        if self.right_at(0) < -t {
            return Err(Error::InvalidCdf("negative value".into()));
        }
        if (self.end - F::one()).abs() > t {
            return Err(Error::InvalidCdf(format!("value at 1 is {} instead of 1", self.end)));
        }
        if self.left_at(self.knots.len() - 1) > F::one() + t {
            return Err(Error::InvalidCdf("value above one".into()));
        }
        Ok(())
    }

    /// Breakpoint table suitable for CSV output; non-affine pieces are sampled `refine` times.
    pub fn to_table(&self, refine: usize) -> Vec<Breakpoint<F>> {
        let refine = refine.max(1);
        let mut out = Vec::with_capacity(self.knots.len() * 2);
        for (k, s) in self.segments.iter().enumerate() {
            let (a, b) = (self.knots[k], self.knots[k + 1]);
            out.push(Breakpoint { u: a, left: self.left_at(k), right: self.right_at(k) });
            let affine = matches!(s, Segment::Rational { c, .. } if c.is_zero());
            if !affine {
                for r in 1..refine {
                    let u = a + (b - a) * F::from_usize_lossy(r) / F::from_usize_lossy(refine);
                    let v = s.eval(u);
                    out.push(Breakpoint { u, left: v, right: v });
                }
            }
        }
        let last = self.knots.len() - 1;
        out.push(Breakpoint { u: self.hi(), left: self.left_at(last), right: self.end });
        out
    }

    /// Sup-norm distance on the points of `grid`.
    pub fn sup_distance_on(&self, other: &MonotoneFn<F>, grid: &[F]) -> F {
        grid.iter().map(|&u| (self.eval(u) - other.eval(u)).abs()).fold(F::zero(), F::max)
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Scalar>(
    a: F,
    ya: F,
    b: F,
    yb: F,
    tol: F,
    depth: usize,
    f: &(dyn Fn(F) -> F + Sync),
    out: &mut Vec<Breakpoint<F>>,
) {
    const MIN_DEPTH: usize = 2;
    const MAX_DEPTH: usize = 40;
    let m = (a + b) * F::c(0.5);
    if depth >= MAX_DEPTH || b - a <= F::tol(1e-13) {
        return;
    }
    let ym = f(m);
    let chord = (ya + yb) * F::c(0.5);
    if depth >= MIN_DEPTH && (ym - chord).abs() <= tol {
        return;
    }
    refine(a, ya, m, ym, tol, depth + 1, f, out);
    out.push(Breakpoint { u: m, left: ym, right: ym });
    refine(m, ym, b, yb, tol, depth + 1, f, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn bp(u: f64, left: f64, right: f64) -> Breakpoint<f64> {
        Breakpoint { u, left, right }
    }

    fn staircase() -> MonotoneFn<f64> {
        // 0 on [0, 1/4), u on [1/4, 1/2), 1/2 on [1/2, 3/4), u on [3/4, 1].
        MonotoneFn::from_breakpoints(&[
            bp(0.0, 0.0, 0.0),
            bp(0.25, 0.0, 0.25),
            bp(0.5, 0.5, 0.5),
            bp(0.75, 0.5, 0.75),
            bp(1.0, 1.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn right_continuous_evaluation() {
        let x = staircase();
        assert_eq!(x.eval(0.1), 0.0);
        assert_eq!(x.eval(0.25), 0.25);
        assert_eq!(x.eval_left(0.25), 0.0);
        assert_eq!(x.eval(0.6), 0.5);
        assert_eq!(x.eval(0.75), 0.75);
        assert_eq!(x.eval_left(0.75), 0.5);
        assert_eq!(x.eval(1.0), 1.0);
    }

    #[test]
    fn exact_integrals() {
        let x = staircase();
        assert_relative_eq!(x.integral(0.0, 1.0), 7.0 / 16.0, epsilon = 1e-15);
        assert_relative_eq!(x.integral(0.75, 1.0), 7.0 / 32.0, epsilon = 1e-15);
        assert_relative_eq!(x.integral(0.3, 0.6) + x.integral(0.6, 0.9), x.integral(0.3, 0.9), epsilon = 1e-15);
    }

    #[test]
    fn inverses() {
        let x = staircase();
        assert_eq!(x.generalized_inverse(0.6), 0.75);
        assert_eq!(x.generalized_inverse(0.5), 0.75);
        assert_relative_eq!(x.generalized_inverse(0.3), 0.3, epsilon = 1e-15);
        assert_eq!(x.generalized_inverse(-0.1), 0.0);
        assert_eq!(x.generalized_inverse(0.0), 0.25);
        assert_eq!(x.lower_inverse(0.5), 0.5);
        assert_eq!(x.lower_inverse(0.6), 0.75);
        assert_eq!(x.lower_inverse(0.0), 0.0);
        assert_eq!(x.lower_inverse(0.1), 0.25);
        assert_eq!(x.lower_inverse(2.0), 1.0);
    }

    #[test]
    fn product_with_identity_is_exact() {
        let x = staircase();
        let ux = x.product_with_identity();
        for k in 0..=100 {
            let u = k as f64 / 100.0;
            assert_relative_eq!(ux.eval(u), u * x.eval(u), epsilon = 1e-15);
        }
        assert_relative_eq!(ux.eval(0.75), 9.0 / 16.0);
        assert_relative_eq!(ux.eval_left(0.75), 3.0 / 8.0);
    }

    #[test]
    fn rejects_decreasing_input() {
        let err = MonotoneFn::from_breakpoints(&[bp(0.0, 0.0, 0.5), bp(1.0, 0.2, 1.0)]);
        assert!(matches!(err, Err(Error::InvalidMonotone(_))));
        let err = MonotoneFn::from_breakpoints(&[bp(0.0, 0.0, 0.0), bp(0.5, 0.6, 0.4), bp(1.0, 1.0, 1.0)]);
        assert!(matches!(err, Err(Error::InvalidMonotone(_))));
    }

    #[test]
    fn merges_close_abscissae() {
        let f = MonotoneFn::from_breakpoints(&[bp(0.0, 0.0, 0.0), bp(0.5, 0.5, 0.5), bp(0.5 + 1e-14, 0.5, 0.8), bp(1.0, 1.0, 1.0)])
            .unwrap();
        assert_eq!(f.knots().len(), 3);
        assert_eq!(f.eval(0.5), 0.8);
    }

    #[test]
    fn tabulation_tracks_smooth_functions() {
        let f = |u: f64| u.powf(2.5);
        let t = MonotoneFn::tabulate(&[0.0, 1.0], &f, &f, 1e-10).unwrap();
        for k in 0..=1000 {
            let u = k as f64 / 1000.0;
            assert!((t.eval(u) - f(u)).abs() < 1e-9);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let x = MonotoneFn::<f32>::from_breakpoints(&[
            Breakpoint { u: 0.0, left: 0.0, right: 0.0 },
            Breakpoint { u: 0.5, left: 0.25, right: 0.5 },
            Breakpoint { u: 1.0, left: 1.0, right: 1.0 },
        ])
        .unwrap();
        assert!((x.integral(0.0, 1.0) - 0.4375).abs() < 1e-6);
        assert!((x.generalized_inverse(0.2) - 0.4).abs() < 1e-6);
    }
}
