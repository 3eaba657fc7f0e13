/// Pool-adjacent-violators fit: the nondecreasing sequence closest to `y` in weighted least squares.
pub fn isotonic_fit<F: crate::Scalar>(y: &[F], w: &[F]) -> Vec<F> {
    assert_eq!(y.len(), w.len());
    let mut means: Vec<F> = Vec::with_capacity(y.len());
    let mut weights: Vec<F> = Vec::with_capacity(y.len());
    let mut counts: Vec<usize> = Vec::with_capacity(y.len());
    for (&v, &wt) in y.iter().zip(w) {
        means.push(v);
        weights.push(wt);
        counts.push(1);
        while means.len() > 1 && means[means.len() - 2] > means[means.len() - 1] {
            let (m1, w1, c1) = (means.pop().unwrap(), weights.pop().unwrap(), counts.pop().unwrap());
            let k = means.len() - 1;
            let wt = weights[k] + w1;
            means[k] = if wt > F::zero() { (means[k] * weights[k] + m1 * w1) / wt } else { (means[k] + m1) * F::c(0.5) };
            weights[k] = wt;
            counts[k] += c1;
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (m, c) in means.into_iter().zip(counts) {
        out.extend(std::iter::repeat(m).take(c));
    }
    out
}
