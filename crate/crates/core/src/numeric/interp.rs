use crate::Scalar;

/// Monotone-preserving cubic Hermite interpolant (Fritsch-Carlson slopes) through `(x, y)`.
#[derive(Debug, Clone)]
pub struct Pchip<F> {
    x: Vec<F>,
    y: Vec<F>,
    d: Vec<F>,
}

impl<F: Scalar> Pchip<F> {
    pub fn new(x: Vec<F>, y: Vec<F>) -> Self {
        assert_eq!(x.len(), y.len());
        let n = x.len();
        let mut d = vec![F::zero(); n];
        if n >= 2 {
            let h: Vec<F> = x.windows(2).map(|w| w[1] - w[0]).collect();
            let s: Vec<F> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
            d[0] = s[0];
            d[n - 1] = s[n - 2];
            for k in 1..n - 1 {
                if s[k - 1] * s[k] <= F::zero() {
                    d[k] = F::zero();
                } else {
                    let w1 = F::c(2.0) * h[k] + h[k - 1];
                    let w2 = h[k] + F::c(2.0) * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / s[k - 1] + w2 / s[k]);
                }
            }
        }
        Pchip { x, y, d }
    }

    pub fn xs(&self) -> &[F] {
        &self.x
    }

    pub fn ys(&self) -> &[F] {
        &self.y
    }

    pub fn eval(&self, t: F) -> F {
        let n = self.x.len();
        if n == 1 || t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let two = F::c(2.0);
        let three = F::c(3.0);
        let h00 = two * s3 - three * s2 + F::one();
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}
