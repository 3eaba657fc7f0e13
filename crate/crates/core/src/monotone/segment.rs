//! Closed-form pieces a monotone function is assembled from.

use crate::numeric::{bisect_increasing, gauss_legendre};
use crate::Scalar;

/// One piece of a piecewise function, valid on the interval between two breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub enum Segment<F> {
    /// `a u + b + c / u`; affine when `c = 0`.
    Rational { a: F, b: F, c: F },
    /// `a u^2 + b u + c`.
    Quadratic { a: F, b: F, c: F },
    /// `scale * (u / anchor)^exponent` with `anchor > 0`.
    Power { scale: F, anchor: F, exponent: F },
    /// The increasing solution `v` of `a v^2 + b v + c = u`.
    QuadRoot { a: F, b: F, c: F },
    /// Geometric mean of the parts.
    GeoMean(Vec<Segment<F>>),
}

impl<F: Scalar> Segment<F> {
    /// Affine piece through `(u0, y0)` and `(u1, y1)`.
    pub fn affine(u0: F, y0: F, u1: F, y1: F) -> Self {
        let a = if u1 > u0 { (y1 - y0) / (u1 - u0) } else { F::zero() };
        Segment::Rational { a, b: y0 - a * u0, c: F::zero() }
    }

    pub fn constant(v: F) -> Self {
        Segment::Rational { a: F::zero(), b: v, c: F::zero() }
    }

    pub fn eval(&self, u: F) -> F {
        match self {
            Segment::Rational { a, b, c } => {
                if c.is_zero() {
                    *a * u + *b
                } else {
                    *a * u + *b + *c / u
                }
            }
            Segment::Quadratic { a, b, c } => (*a * u + *b) * u + *c,
            Segment::Power { scale, anchor, exponent } => {
                if exponent.is_zero() || scale.is_zero() {
                    *scale
                } else {
                    *scale * (u / *anchor).powf(*exponent)
                }
            }
            Segment::QuadRoot { a, b, c } => quad_root(*a, *b, *c, u),
            Segment::GeoMean(parts) => geo_mean(parts.iter().map(|p| p.eval(u))),
        }
    }

    pub fn derivative(&self, u: F) -> F {
        match self {
            Segment::Rational { a, c, .. } => {
                if c.is_zero() {
                    *a
                } else {
                    *a - *c / (u * u)
                }
            }
            Segment::Quadratic { a, b, .. } => F::c(2.0) * *a * u + *b,
            Segment::Power { scale, anchor, exponent } => {
                if exponent.is_zero() || scale.is_zero() {
                    F::zero()
                } else {
                    *scale * *exponent / *anchor * (u / *anchor).powf(*exponent - F::one())
                }
            }
            Segment::QuadRoot { a, b, .. } => {
                let v = self.eval(u);
                let d = F::c(2.0) * *a * v + *b;
                if d > F::zero() {
                    d.recip()
                } else {
                    F::infinity()
                }
            }
            Segment::GeoMean(parts) => {
                let n = F::from_usize_lossy(parts.len());
                let v = self.eval(u);
                let s: F = parts.iter().map(|p| p.derivative(u) / p.eval(u)).sum();
                v * s / n
            }
        }
    }

    /// True when the piece is constant on any interval.
    pub fn is_constant(&self) -> bool {
        match self {
            Segment::Rational { a, c, .. } => a.is_zero() && c.is_zero(),
            Segment::Quadratic { a, b, .. } => a.is_zero() && b.is_zero(),
            Segment::Power { scale, exponent, .. } => scale.is_zero() || exponent.is_zero(),
            Segment::QuadRoot { .. } => false,
            Segment::GeoMean(parts) => parts.iter().all(|p| p.is_constant()),
        }
    }

    /// `int_lo^hi f(u) du`.
    pub fn integral(&self, lo: F, hi: F) -> F {
        if hi <= lo {
            return F::zero();
        }
        let half = F::c(0.5);
        let third = F::one() / F::c(3.0);
        match self {
            Segment::Rational { a, b, c } => {
                let mut v = *a * (hi * hi - lo * lo) * half + *b * (hi - lo);
                if !c.is_zero() {
                    v = v + *c * (hi / lo).ln();
                }
                v
            }
            Segment::Quadratic { a, b, c } => {
                *a * (hi * hi * hi - lo * lo * lo) * third + *b * (hi * hi - lo * lo) * half + *c * (hi - lo)
            }
            Segment::Power { scale, anchor, exponent } => {
                if scale.is_zero() {
                    return F::zero();
                }
                if exponent.is_zero() {
                    return *scale * (hi - lo);
                }
                let p1 = *exponent + F::one();
                if p1.abs() < F::epsilon() {
                    *scale * *anchor * (hi / lo).ln()
                } else {
                    *scale * *anchor / p1 * ((hi / *anchor).powf(p1) - (lo / *anchor).powf(p1))
                }
            }
            Segment::QuadRoot { a, b, .. } => {
                let prim = |v: F| F::c(2.0) * *a * v * v * v * third + *b * v * v * half;
                prim(self.eval(hi)) - prim(self.eval(lo))
            }
            Segment::GeoMean(_) => quad(lo, hi, |u| self.eval(u)),
        }
    }

    /// `int_lo^hi u d ln f(u)` for a positive piece.
    pub fn log_stieltjes(&self, lo: F, hi: F) -> F {
        if hi <= lo || self.is_constant() {
            return F::zero();
        }
        let half = F::c(0.5);
        match self {
            Segment::Power { exponent, .. } => *exponent * (hi - lo),
            Segment::QuadRoot { a, b, c } => {
                let (vl, vh) = (self.eval(lo), self.eval(hi));
                let mut s = *a * (vh * vh - vl * vl) * half + *b * (vh - vl);
                if !c.is_zero() {
                    s = s + *c * (vh / vl).ln();
                }
                s
            }
            Segment::Rational { a, b, c } if c.is_zero() => {
                // u a / (a u + b)
                if b.is_zero() {
                    hi - lo
                } else {
                    (hi - lo) - *b / *a * ((*a * hi + *b) / (*a * lo + *b)).ln()
                }
            }
            Segment::GeoMean(parts) => {
                let n = F::from_usize_lossy(parts.len());
                parts.iter().map(|p| p.log_stieltjes(lo, hi)).sum::<F>() / n
            }
            _ => quad(lo, hi, |u| u * self.derivative(u) / self.eval(u)),
        }
    }

    /// `u * f(u)` on `[lo, hi]` when it stays inside the closed family.
    pub fn mul_identity(&self, _lo: F, hi: F) -> Option<Segment<F>> {
        match self {
            Segment::Rational { a, b, c } => {
                let z = F::zero();
                Some(if a.is_zero() && c.is_zero() {
                    Segment::Power { scale: *b * hi, anchor: hi, exponent: F::one() }
                } else if b.is_zero() && c.is_zero() {
                    Segment::Power { scale: *a * hi * hi, anchor: hi, exponent: F::c(2.0) }
                } else if a.is_zero() && b.is_zero() {
                    Segment::Power { scale: *c, anchor: hi, exponent: z }
                } else {
                    Segment::Quadratic { a: *a, b: *b, c: *c }
                })
            }
            Segment::Power { scale, anchor, exponent } => {
                Some(Segment::Power { scale: *scale * *anchor, anchor: *anchor, exponent: *exponent + F::one() })
            }
            _ => None,
        }
    }

    /// `f(u) / u` on `[lo, hi]` when it stays inside the closed family.
    pub fn div_identity(&self, _lo: F, _hi: F) -> Option<Segment<F>> {
        match self {
            Segment::Quadratic { a, b, c } => Some(Segment::Rational { a: *a, b: *b, c: *c }),
            Segment::Rational { a, b, c } if c.is_zero() => Some(Segment::Rational { a: F::zero(), b: *a, c: *b }),
            Segment::Power { scale, anchor, exponent } => {
                Some(Segment::Power { scale: *scale / *anchor, anchor: *anchor, exponent: *exponent - F::one() })
            }
            _ => None,
        }
    }

    /// Functional inverse of a strictly increasing piece, when it stays inside the closed family.
    pub fn inverse(&self, _lo: F, _hi: F) -> Option<Segment<F>> {
        match self {
            Segment::Rational { a, b, c } if c.is_zero() && *a > F::zero() => {
                Some(Segment::Rational { a: a.recip(), b: -*b / *a, c: F::zero() })
            }
            Segment::Quadratic { a, b, c } => {
                if a.is_zero() && c.is_zero() && *b > F::zero() {
                    Some(Segment::Rational { a: b.recip(), b: F::zero(), c: F::zero() })
                } else {
                    Some(Segment::QuadRoot { a: *a, b: *b, c: *c })
                }
            }
            Segment::QuadRoot { a, b, c } => Some(Segment::Quadratic { a: *a, b: *b, c: *c }),
            Segment::Power { scale, anchor, exponent } if *scale > F::zero() && *exponent > F::zero() => {
                Some(Segment::Power { scale: *anchor, anchor: *scale, exponent: exponent.recip() })
            }
            _ => None,
        }
    }

    /// A `u` in `[lo, hi]` with `f(u) = y`, for a strictly increasing piece with `f(lo) <= y <= f(hi)`.
    pub fn solve(&self, y: F, lo: F, hi: F) -> F {
        let guess = match self {
            Segment::Rational { a, b, c } => {
                if c.is_zero() {
                    if a.is_zero() {
                        None
                    } else {
                        Some((y - *b) / *a)
                    }
                } else {
                    quadratic_root_in(*a, *b - y, *c, lo, hi)
                }
            }
            Segment::Quadratic { a, b, c } => quadratic_root_in(*a, *b, *c - y, lo, hi),
            Segment::Power { scale, anchor, exponent } => {
                if scale.is_zero() || exponent.is_zero() {
                    None
                } else {
                    Some(*anchor * (y / *scale).powf(exponent.recip()))
                }
            }
            Segment::QuadRoot { a, b, c } => Some((*a * y + *b) * y + *c),
            Segment::GeoMean(_) => None,
        };
        let tol = F::tol(1e-13);
        match guess {
            Some(g) if g.is_finite() && g >= lo - tol && g <= hi + tol => g.max(lo).min(hi),
            _ => {
                let eps = (hi - lo) * F::epsilon();
                bisect_increasing(lo, hi, eps, |u| self.eval(u) - y)
            }
        }
    }
}

fn quad<F: Scalar>(lo: F, hi: F, f: impl FnMut(F) -> F) -> F {
    gauss_legendre().integrate(lo, hi, f)
}

fn geo_mean<F: Scalar>(vals: impl Iterator<Item = F>) -> F {
    let mut n = 0usize;
    let mut log_sum = F::zero();
    let mut zero = false;
    for v in vals {
        n += 1;
        if v <= F::zero() {
            zero = true;
        } else {
            log_sum = log_sum + v.ln();
        }
    }
    if zero || n == 0 {
        F::zero()
    } else {
        (log_sum / F::from_usize_lossy(n)).exp()
    }
}

/// Increasing-branch solution `v` of `a v^2 + b v + c = u`.
pub(crate) fn quad_root<F: Scalar>(a: F, b: F, c: F, u: F) -> F {
    let r = u - c;
    if a.is_zero() {
        return r / b;
    }
    let disc = (b * b + F::c(4.0) * a * r).max(F::zero());
    let sq = disc.sqrt();
    if b >= F::zero() {
        let den = b + sq;
        if den.is_zero() {
            F::zero()
        } else {
            F::c(2.0) * r / den
        }
    } else {
        (sq - b) / (F::c(2.0) * a)
    }
}

/// A root of `a u^2 + b u + c = 0` inside `[lo, hi]` (with slack), if any.
fn quadratic_root_in<F: Scalar>(a: F, b: F, c: F, lo: F, hi: F) -> Option<F> {
    let slack = F::tol(1e-10) * (F::one() + hi.abs());
    let inside = |x: F| x.is_finite() && x >= lo - slack && x <= hi + slack;
    if a.is_zero() {
        if b.is_zero() {
            return None;
        }
        let x = -c / b;
        return inside(x).then_some(x);
    }
    let disc = b * b - F::c(4.0) * a * c;
    if disc < F::zero() {
        return None;
    }
    let sq = disc.sqrt();
    let q = if b >= F::zero() { -(b + sq) * F::c(0.5) } else { (sq - b) * F::c(0.5) };
    let r1 = q / a;
    let r2 = if q.is_zero() { r1 } else { c / q };
    [r1, r2].into_iter().find(|&x| inside(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn samples() -> Vec<(Segment<f64>, f64, f64)> {
        vec![
            (Segment::affine(0.2, 0.1, 0.8, 0.7), 0.2, 0.8),
            (Segment::Rational { a: 0.5, b: 0.1, c: -0.02 }, 0.3, 0.9),
            (Segment::Quadratic { a: 0.7, b: 0.2, c: 0.01 }, 0.1, 0.9),
            (Segment::Power { scale: 0.8, anchor: 0.9, exponent: 2.5 }, 0.05, 0.9),
            (Segment::QuadRoot { a: 1.0, b: 0.5, c: 0.0 }, 0.01, 1.5),
        ]
    }

    #[test]
    fn integrals_match_quadrature() {
        for (s, lo, hi) in samples() {
            let q = crate::numeric::adaptive_gauss_legendre(lo, hi, 1e-14, &mut |u| s.eval(u));
            assert_relative_eq!(s.integral(lo, hi), q, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_stieltjes_matches_quadrature() {
        for (s, lo, hi) in samples() {
            let q = crate::numeric::adaptive_gauss_legendre(lo, hi, 1e-14, &mut |u| u * s.derivative(u) / s.eval(u));
            assert_relative_eq!(s.log_stieltjes(lo, hi), q, epsilon = 1e-10);
        }
    }

    #[test]
    fn inverse_and_solve_agree() {
        for (s, lo, hi) in samples() {
            let inv = s.inverse(lo, hi);
            assert_eq!(inv.is_none(), matches!(s, Segment::Rational { c, .. } if c != 0.0));
            for k in 0..=10 {
                let u = lo + (hi - lo) * k as f64 / 10.0;
                let y = s.eval(u);
                if let Some(inv) = &inv {
                    assert_relative_eq!(inv.eval(y), u, epsilon = 1e-11);
                }
                assert_relative_eq!(s.solve(y, lo, hi), u, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn identity_products() {
        for (s, lo, hi) in samples() {
            if let Some(m) = s.mul_identity(lo, hi) {
                for k in 0..=10 {
                    let u = lo + (hi - lo) * k as f64 / 10.0;
                    assert_relative_eq!(m.eval(u), u * s.eval(u), epsilon = 1e-13);
                    if let Some(d) = m.div_identity(lo, hi) {
                        assert_relative_eq!(d.eval(u), s.eval(u), epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn geo_mean_of_powers() {
        let g = Segment::GeoMean(vec![
            Segment::Power { scale: 1.0, anchor: 1.0, exponent: 0.3 },
            Segment::Power { scale: 1.0, anchor: 1.0, exponent: 0.7 },
        ]);
        assert_relative_eq!(g.eval(0.25), 0.5, epsilon = 1e-14);
        assert_relative_eq!(g.log_stieltjes(0.2, 0.6), 0.5 * 0.4, epsilon = 1e-14);
        assert_relative_eq!(g.solve(0.5, 0.0, 1.0), 0.25, epsilon = 1e-12);
    }
}
