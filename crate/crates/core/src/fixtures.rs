//! Reference reduced forms and environments with known closed-form answers.

use crate::environments::{Bidder, CertaintyEquivalent, Dist, Environment};
use crate::error::Result;
use crate::monotone::{Breakpoint, MonotoneFn, Segment};
use crate::Scalar;

/// `x(u) = u^{1/alpha - 1}`, whose psi-transform is `iota^alpha`.
pub fn power_form<F: Scalar>(alpha: F) -> Result<MonotoneFn<F>> {
    let seg = Segment::Power { scale: F::one(), anchor: F::one(), exponent: alpha.recip() - F::one() };
    MonotoneFn::from_segments(vec![F::zero(), F::one()], vec![seg], F::one())
}

/// One power form per exponent.
pub fn power_family<F: Scalar>(alphas: &[F]) -> Result<Vec<MonotoneFn<F>>> {
    alphas.iter().map(|&a| power_form(a)).collect()
}

/// Border value along the principal curve of a power family: `s^n + (1 - s^{n/A}) A`, `A = sum alpha`.
pub fn power_family_border<F: Scalar>(alphas: &[F], s: F) -> F {
    let a: F = alphas.iter().copied().sum();
    let n = F::from_usize_lossy(alphas.len());
    s.powf(n) + (F::one() - s.powf(n / a)) * a
}

fn bp<F: Scalar>(u: f64, left: f64, right: f64) -> Breakpoint<F> {
    Breakpoint { u: F::c(u), left: F::c(left), right: F::c(right) }
}

/// Two-bidder extremal staircase: each form is the other's inverse where positive.
pub fn staircase_pair<F: Scalar>() -> Result<Vec<MonotoneFn<F>>> {
    let x1 = MonotoneFn::from_breakpoints(&[
        bp(0.0, 0.0, 0.0),
        bp(0.25, 0.0, 0.25),
        bp(0.5, 0.5, 0.5),
        bp(0.75, 0.5, 0.75),
        bp(1.0, 1.0, 1.0),
    ])?;
    let x2 = MonotoneFn::from_breakpoints(&[
        bp(0.0, 0.25, 0.25),
        bp(0.25, 0.25, 0.25),
        bp(0.5, 0.5, 0.75),
        bp(0.75, 0.75, 0.75),
        bp(1.0, 1.0, 1.0),
    ])?;
    Ok(vec![x1, x2])
}

/// Expected-value bidders with `H = u^{1/beta} x^2`.
pub fn ev_power<F: Scalar>(betas: &[F]) -> Result<Environment<F>> {
    Environment::new(betas.iter().map(|&beta| Bidder::EvPower { beta }).collect())
}

/// Uniform values, `n` bidders, the first `k` risk neutral and the rest with `g(x) = x^2`.
pub fn cra_mixed<F: Scalar>(k: usize, n: usize) -> Result<Environment<F>> {
    let bidder = |alpha: f64| Bidder::Cra { dist: Dist::Uniform, g: CertaintyEquivalent::Quadratic { alpha: F::c(alpha) } };
    Environment::new((0..n).map(|i| bidder(if i < k { 0.0 } else { 1.0 })).collect())
}

/// Exclusive allocation to bidder `i`; the others keep only the terminal value one.
pub fn exclusive<F: Scalar>(n: usize, i: usize) -> Result<Vec<MonotoneFn<F>>> {
    (0..n)
        .map(|j| {
            let v = if i == j { F::one() } else { F::zero() };
            MonotoneFn::from_segments(vec![F::zero(), F::one()], vec![Segment::constant(v)], F::one())
        })
        .collect()
}
