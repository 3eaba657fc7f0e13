//! Feasibility and extremality of interim allocations, decided along the principal curve.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::monotone::MonotoneFn;
use crate::numeric::golden_max;
use crate::transforms::{geometric_mean_psi, psi_transform, DeltaPath, PsiFn};
use crate::Scalar;

/// Default band around one for feasibility verdicts.
pub const DEFAULT_ETA: f64 = 1e-7;

const GRID_POINTS: usize = 4096;
const REFINE_TOP: usize = 8;
const GOLDEN_TOL: f64 = 1e-10;
const CLOSED_FORM_TOL: f64 = 1e-6;

/// `B(u) = prod u_i + sum_i int_{u_i}^1 x_i`.
pub fn border_at<F: Scalar>(x: &[MonotoneFn<F>], u: &[F]) -> Result<F> {
    if x.len() != u.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: u.len() });
    }
    if u.iter().any(|&v| !(v >= F::zero() && v <= F::one())) {
        return Err(Error::DomainError("cutoffs must lie in [0, 1]".into()));
    }
    Ok(border_unchecked(x, u))
}

fn border_unchecked<F: Scalar>(x: &[MonotoneFn<F>], u: &[F]) -> F {
    let prod = u.iter().fold(F::one(), |p, &v| p * v);
    prod + x.iter().zip(u).map(|(f, &v)| f.integral(v, F::one())).sum::<F>()
}

/// The principal curve `nu_i(s) = psi_i(psibar^{-1}(s))` of a profile of interim allocations.
#[derive(Debug, Clone)]
pub struct PrincipalCurve<F> {
    x: Vec<MonotoneFn<F>>,
    psi: Vec<PsiFn<F>>,
    psi_bar: PsiFn<F>,
}

impl<F: Scalar> PrincipalCurve<F> {
    pub fn new(x: &[MonotoneFn<F>]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        let psi = x.iter().map(psi_transform).collect::<Result<Vec<_>>>()?;
        let psi_bar = geometric_mean_psi(&psi)?;
        Ok(PrincipalCurve { x: x.to_vec(), psi, psi_bar })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn psi(&self) -> &[PsiFn<F>] {
        &self.psi
    }

    pub fn psi_bar(&self) -> &PsiFn<F> {
        &self.psi_bar
    }

    pub fn reduced_forms(&self) -> &[MonotoneFn<F>] {
        &self.x
    }

    /// `psibar(0)`; the curve is constant below it.
    pub fn start(&self) -> F {
        self.psi_bar.at_zero()
    }

    /// `psibar^{-1}(max(s, psibar(0)))`.
    pub fn iota_of(&self, s: F) -> F {
        self.psi_bar.generalized_inverse(s.max(self.start()))
    }

    pub fn point_at_iota(&self, iota: F) -> Vec<F> {
        self.psi.iter().map(|p| p.eval(iota)).collect()
    }

    pub fn nu(&self, s: F) -> Vec<F> {
        self.point_at_iota(self.iota_of(s))
    }

    /// `B(nu(s))` evaluated directly.
    pub fn border_direct(&self, s: F) -> F {
        border_unchecked(&self.x, &self.nu(s))
    }

    /// `B(nu(s)) = max(psibar(0), s)^n + n int_{psibar^{-1}(s)}^1 iota d ln psibar(iota)`.
    pub fn border_closed(&self, s: F) -> F {
        let s_eff = s.max(self.start());
        let n = F::from_usize_lossy(self.n());
        s_eff.powi(self.n() as i32) + n * self.psi_bar.log_stieltjes_to_one(self.iota_of(s))
    }

    /// Sup-norm distance between `psibar` and the extremal shape `max(psibar(0), iota^{1/n})`.
    pub fn extremality_gap(&self) -> F {
        let p0 = self.start();
        let inv_n = F::one() / F::from_usize_lossy(self.n());
        let mut grid: Vec<F> = self.psi_bar.inner().knots().to_vec();
        grid.extend((0..=GRID_POINTS).map(|k| F::from_usize_lossy(k) / F::from_usize_lossy(GRID_POINTS)));
        grid.extend((0..=240).map(|k| F::c(10f64.powf(-12.0 + 12.0 * k as f64 / 240.0))));
        grid.par_iter()
            .map(|&i| (self.psi_bar.eval(i) - p0.max(i.powf(inv_n))).abs())
            .reduce(F::zero, F::max)
    }
}

/// `principal_curve(x)`.
pub fn principal_curve<F: Scalar>(x: &[MonotoneFn<F>]) -> Result<PrincipalCurve<F>> {
    PrincipalCurve::new(x)
}

/// `B(nu(s))` computed directly and through the closed form; errors if they disagree beyond `1e-6`.
pub fn border_along_curve<F: Scalar>(x: &[MonotoneFn<F>], s: F) -> Result<(F, F)> {
    let c = PrincipalCurve::new(x)?;
    curve_border_pair(&c, s)
}

fn curve_border_pair<F: Scalar>(c: &PrincipalCurve<F>, s: F) -> Result<(F, F)> {
    let (d, cl) = (c.border_direct(s), c.border_closed(s));
    if (d - cl).abs() > F::tol(CLOSED_FORM_TOL) {
        return Err(Error::InternalInconsistency(format!("border along curve at s = {s}: direct {d}, closed form {cl}")));
    }
    Ok((d, cl))
}

/// Verdict category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Feasible,
    BoundaryExtremal,
    Infeasible,
}

/// Outcome of [`check_feasible`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityVerdict<F> {
    pub status: Status,
    /// Curve parameter where the largest border value was found.
    pub witness_s: F,
    /// Cutoff vector `nu(witness_s)`.
    pub witness_u: Vec<F>,
    pub sup_b: F,
    pub extremality_gap: F,
}

impl<F: Scalar> FeasibilityVerdict<F> {
    /// Feasible or boundary-extremal.
    pub fn is_feasible(&self) -> bool {
        self.status != Status::Infeasible
    }
}

/// Maximizes `B(nu(s))` over breakpoint images plus a uniform grid, refines the best local maxima
/// by golden section, and classifies against `1 +- eta`.
pub fn check_feasible<F: Scalar>(x: &[MonotoneFn<F>], eta: F) -> Result<FeasibilityVerdict<F>> {
    let c = PrincipalCurve::new(x)?;
    check_feasible_curve(&c, eta)
}

/// [`check_feasible`] on a prebuilt curve.
pub fn check_feasible_curve<F: Scalar>(c: &PrincipalCurve<F>, eta: F) -> Result<FeasibilityVerdict<F>> {
    let (s, b) = curve_sup(c)?;
    let gap = c.extremality_gap();
    let status = if b > F::one() + eta {
        Status::Infeasible
    } else if b >= F::one() - eta && gap <= eta {
        Status::BoundaryExtremal
    } else {
        Status::Feasible
    };
    Ok(FeasibilityVerdict { status, witness_s: s, witness_u: c.nu(s), sup_b: b, extremality_gap: gap })
}

/// Grid of curve parameters used by the feasibility search.
pub fn curve_grid<F: Scalar>(c: &PrincipalCurve<F>) -> Vec<F> {
    let s0 = c.start();
    let mut grid: Vec<F> = (0..=GRID_POINTS)
        .map(|k| s0 + (F::one() - s0) * F::from_usize_lossy(k) / F::from_usize_lossy(GRID_POINTS))
        .collect();
    grid.extend(c.psi_bar().inner().knots().iter().map(|&i| c.psi_bar().eval(i)));
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid
}

fn curve_sup<F: Scalar>(c: &PrincipalCurve<F>) -> Result<(F, F)> {
    let grid = curve_grid(c);
    let vals: Vec<F> = grid.par_iter().map(|&s| c.border_direct(s)).collect();
    let m = grid.len();
    let mut peaks: Vec<usize> = (0..m)
        .filter(|&j| (j == 0 || vals[j] >= vals[j - 1]) && (j + 1 == m || vals[j] >= vals[j + 1]))
        .collect();
    peaks.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    peaks.truncate(REFINE_TOP);
    let mut best = (grid[peaks[0]], vals[peaks[0]]);
    for &j in &peaks {
        let lo = grid[j.saturating_sub(1)];
        let hi = grid[(j + 1).min(m - 1)];
        if hi > lo {
            let (s, v) = golden_max(lo, hi, F::tol(GOLDEN_TOL), |s| c.border_direct(s));
            if v > best.1 {
                best = (s, v);
            }
        }
    }
    curve_border_pair(c, best.0)?;
    Ok(best)
}

/// True iff `x` is feasible and `psibar` is within `tol` of `max(psibar(0), iota^{1/n})`.
pub fn check_extremal<F: Scalar>(x: &[MonotoneFn<F>], tol: F) -> Result<bool> {
    let c = PrincipalCurve::new(x)?;
    let v = check_feasible_curve(&c, F::c(DEFAULT_ETA).max(tol))?;
    if v.status == Status::Infeasible {
        return Err(Error::NotFeasible);
    }
    Ok(v.extremality_gap <= tol)
}

/// Largest violation of `int_0^t e^{-tau} sum_i delta_i'(tau) dtau <= 1 - e^{-sum_i delta_i(t)}`
/// over the merged grid; feasible when it is at most `1e-9`.
pub fn delta_feasibility_margin<F: Scalar>(deltas: &[DeltaPath<F>]) -> Result<F> {
    if deltas.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    let t_max = deltas.iter().map(|d| d.t_max()).fold(F::infinity(), F::min);
    let mut grid: Vec<F> = deltas.iter().flat_map(|d| d.ts().iter().copied()).filter(|&t| t <= t_max).collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let mut lhs = F::zero();
    let mut worst = F::neg_infinity();
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = (a + b) * F::c(0.5);
        let slope: F = deltas.iter().map(|d| d.slope_at(mid)).sum();
        lhs = lhs + slope * ((-a).exp() - (-b).exp());
        let total: F = deltas.iter().map(|d| d.eval(b)).sum();
        let rhs = F::one() - (-total).exp();
        worst = worst.max(lhs - rhs);
    }
    Ok(worst)
}

/// Feasibility test in log coordinates with slack `1e-9`.
pub fn check_feasible_delta<F: Scalar>(deltas: &[DeltaPath<F>]) -> Result<bool> {
    Ok(delta_feasibility_margin(deltas)? <= F::tol(1e-9))
}

/// Rows `(s, nu_1..nu_n, B)` along the curve at the feasibility grid.
pub fn curve_table<F: Scalar>(c: &PrincipalCurve<F>) -> Vec<(F, Vec<F>, F)> {
    curve_grid(c)
        .into_iter()
        .map(|s| {
            let nu = c.nu(s);
            let b = border_unchecked(c.reduced_forms(), &nu);
            (s, nu, b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monotone::{Breakpoint, Segment};
    use approx::assert_relative_eq;

    fn power(alpha: f64) -> MonotoneFn<f64> {
        MonotoneFn::from_segments(vec![0.0, 1.0], vec![Segment::Power { scale: 1.0, anchor: 1.0, exponent: 1.0 / alpha - 1.0 }], 1.0)
            .unwrap()
    }

    fn bp(u: f64, left: f64, right: f64) -> Breakpoint<f64> {
        Breakpoint { u, left, right }
    }

    #[test]
    fn power_family_closed_form() {
        let x = vec![power(0.3), power(0.5)];
        let c = PrincipalCurve::new(&x).unwrap();
        for s in [0.0, 0.1, 0.4, 0.77, 1.0] {
            let want = s * s + (1.0 - f64::powf(s, 2.0 / 0.8)) * 0.8;
            assert_relative_eq!(c.border_direct(s), want, epsilon = 1e-12);
            assert_relative_eq!(c.border_closed(s), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn power_family_verdicts() {
        let eta = DEFAULT_ETA;
        assert_eq!(check_feasible(&[power(0.5), power(0.3)], eta).unwrap().status, Status::Feasible);
        assert_eq!(check_feasible(&[power(0.6), power(0.6)], eta).unwrap().status, Status::Infeasible);
        assert_eq!(check_feasible(&[power(0.5), power(0.5)], eta).unwrap().status, Status::BoundaryExtremal);
    }

    #[test]
    fn figure_pair_is_extremal() {
        let x1 = MonotoneFn::from_breakpoints(&[
            bp(0.0, 0.0, 0.0),
            bp(0.25, 0.0, 0.25),
            bp(0.5, 0.5, 0.5),
            bp(0.75, 0.5, 0.75),
            bp(1.0, 1.0, 1.0),
        ])
        .unwrap();
        let x2 = MonotoneFn::from_breakpoints(&[
            bp(0.0, 0.25, 0.25),
            bp(0.25, 0.25, 0.25),
            bp(0.5, 0.5, 0.75),
            bp(0.75, 0.75, 0.75),
            bp(1.0, 1.0, 1.0),
        ])
        .unwrap();
        let x = vec![x1, x2];
        assert_relative_eq!(border_at(&x, &[0.75, 0.75]).unwrap(), 1.0, epsilon = 1e-15);
        assert!(check_extremal(&x, 1e-9).unwrap());
    }

    #[test]
    fn extremal_rejects_infeasible() {
        assert_eq!(check_extremal(&[power(0.6), power(0.6)], 1e-7), Err(Error::NotFeasible));
    }

    #[test]
    fn delta_criterion_matches_power_family() {
        let path = |a: f64| DeltaPath::new(vec![0.0, 30.0], vec![0.0, 30.0 * a]).unwrap();
        assert!(check_feasible_delta(&[path(0.5), path(0.3)]).unwrap());
        assert!(check_feasible_delta(&[path(0.5), path(0.5)]).unwrap());
        assert!(!check_feasible_delta(&[path(0.6), path(0.6)]).unwrap());
    }

    #[test]
    fn dimension_and_domain_errors() {
        let x = vec![power(0.5), power(0.5)];
        assert!(matches!(border_at(&x, &[0.5]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(border_at(&x, &[0.5, 1.5]), Err(Error::DomainError(_))));
    }
}
