use crate::Scalar;

/// Largest-to-tolerance root of a nonincreasing `f` on `[lo, hi]`, assuming `f(lo) >= 0 >= f(hi)`.
pub fn bisect_decreasing<F: Scalar>(mut lo: F, mut hi: F, tol: F, mut f: impl FnMut(F) -> F) -> F {
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) * F::c(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > F::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * F::c(0.5)
}

/// Root of a nondecreasing `f` on `[lo, hi]`, assuming `f(lo) <= 0 <= f(hi)`.
pub fn bisect_increasing<F: Scalar>(lo: F, hi: F, tol: F, mut f: impl FnMut(F) -> F) -> F {
    bisect_decreasing(lo, hi, tol, |x| -f(x))
}

/// Root of a nonincreasing `f` on `[lo, hi]` with `f(lo) = flo >= 0 >= fhi = f(hi)`, by the Illinois
/// variant of regula falsi with a bisection step whenever the bracket fails to halve.
///
/// Returns the final bracket `(lo, hi)`; the root lies inside it.
pub fn illinois_decreasing<F: Scalar>(
    mut lo: F,
    mut hi: F,
    mut flo: F,
    mut fhi: F,
    xtol: F,
    mut f: impl FnMut(F) -> F,
) -> (F, F) {
    let half = F::c(0.5);
    let mut side = 0i8;
    let mut width = hi - lo;
    for _ in 0..400 {
        if hi - lo <= xtol || flo == F::zero() || fhi == F::zero() {
            break;
        }
        let mut x = if flo - fhi > F::zero() { lo + (hi - lo) * flo / (flo - fhi) } else { (lo + hi) * half };
        if !(x > lo && x < hi) {
            x = (lo + hi) * half;
            if !(x > lo && x < hi) {
                break;
            }
        }
        let fx = f(x);
        if fx > F::zero() {
            lo = x;
            flo = fx;
            if side == 1 {
                fhi = fhi * half;
            }
            side = 1;
        } else if fx < F::zero() {
            hi = x;
            fhi = fx;
            if side == -1 {
                flo = flo * half;
            }
            side = -1;
        } else {
            return (x, x);
        }
        // Force a bisection when two steps failed to halve the bracket.
        if hi - lo > width * half {
            let m = (lo + hi) * half;
            if m > lo && m < hi {
                let fm = f(m);
                if fm > F::zero() {
                    lo = m;
                    flo = fm;
                } else if fm < F::zero() {
                    hi = m;
                    fhi = fm;
                } else {
                    return (m, m);
                }
                side = 0;
            }
        }
        width = hi - lo;
    }
    if flo == F::zero() {
        return (lo, lo);
    }
    if fhi == F::zero() {
        return (hi, hi);
    }
    (lo, hi)
}

/// Golden-section search for a maximum of a unimodal `f` on `[lo, hi]`. Returns `(argmax, max)`.
pub fn golden_max<F: Scalar>(mut lo: F, mut hi: F, tol: F, mut f: impl FnMut(F) -> F) -> (F, F) {
    let g = F::c(0.618_033_988_749_894_8);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn illinois_finds_roots_across_scales() {
        let (a, b) = super::illinois_decreasing(0.0, 40.0, 1.0 - 1e-12, (-40f64).exp() - 1e-12, 1e-14, |x: f64| (-x).exp() - 1e-12);
        let r = 12.0 * std::f64::consts::LN_10;
        assert!(a <= r + 1e-12 && b >= r - 1e-12 && b - a <= 1e-12);
        let (a, _) = super::illinois_decreasing(-1.0, 1.0, 1.0, -1.0, 1e-15, |x: f64| -x * x * x);
        assert!(a.abs() < 1e-5);
    }

    use super::*;

    #[test]
    fn bisection_finds_sqrt_two() {
        let r = bisect_increasing(0.0f64, 2.0, 1e-14, |x| x * x - 2.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(0.0f64, 1.0, 1e-10, |x| -(x - 0.3) * (x - 0.3));
        assert!((x - 0.3).abs() < 1e-8);
        assert!(v.abs() < 1e-15);
    }
}
