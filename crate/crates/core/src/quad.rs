//! Composite Simpson quadrature on piecewise-uniform grids.

/// Simpson's rule over `f` sampled on a grid whose pieces `[breaks[i], breaks[i+1]]`
/// are uniform with an even number of intervals. `stride` 2 uses every other
/// sample, which the Richardson error estimate compares against.
pub fn simpson_piecewise(times: &[f64], breaks: &[usize], f: &[f64], stride: usize) -> f64 {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = (b - a) / stride;
        debug_assert!(n.is_multiple_of(2) && (b - a) % stride == 0);
        let h = (times[b] - times[a]) / n as f64;
        let mut s = f[a] + f[b];
        for j in 1..n {
            let w = if j % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f[a + j * stride];
        }
        total += s * h / 3.0;
    }
    total
}

/// Integral and Richardson error estimate |S_h - S_2h| / 15.
pub fn simpson_with_error(times: &[f64], breaks: &[usize], f: &[f64]) -> (f64, f64) {
    let fine = simpson_piecewise(times, breaks, f, 1);
    let coarse = simpson_piecewise(times, breaks, f, 2);
    (fine, (fine - coarse).abs() / 15.0)
}
