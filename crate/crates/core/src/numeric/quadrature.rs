use std::sync::OnceLock;

use crate::Scalar;

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on the Legendre polynomial roots.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { z } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = nf * (z * pn - pm) / (z * z - 1.0);
                let dz = pn / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            if n == 1 {
                dp = 1.0;
                z = 0.0;
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n == 1 {
            weights[0] = 2.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: Scalar>(&self, a: F, b: F, mut f: impl FnMut(F) -> F) -> F {
        let half = (b - a) * F::c(0.5);
        let mid = (a + b) * F::c(0.5);
        let mut acc = F::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + F::c(*w) * f(mid + half * F::c(*x));
        }
        acc * half
    }
}

/// The shared 32-point rule.
pub fn gauss_legendre() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(32))
}

/// Adaptive 32-point Gauss-Legendre with bisection until halves agree with the whole to `tol`.
pub fn adaptive_gauss_legendre<F: Scalar>(a: F, b: F, tol: F, f: &mut impl FnMut(F) -> F) -> F {
    fn rec<F: Scalar>(a: F, b: F, whole: F, tol: F, depth: usize, f: &mut impl FnMut(F) -> F) -> F {
        let rule = gauss_legendre();
        let m = (a + b) * F::c(0.5);
        let left = rule.integrate(a, m, &mut *f);
        let right = rule.integrate(m, b, &mut *f);
        let both = left + right;
        if depth == 0 || (both - whole).abs() <= tol {
            return both;
        }
        let half = tol * F::c(0.5);
        rec(a, m, left, half, depth - 1, f) + rec(m, b, right, half, depth - 1, f)
    }
    if b <= a {
        return F::zero();
    }
    let whole = gauss_legendre().integrate(a, b, &mut *f);
    rec(a, b, whole, tol, 24, f)
}
