//! Scalar diagonal-Gaussian helpers shared by the decoder, the verification
//! suites, and tests. Mirrors the tape-side math bit-for-bit where both
//! exist.

/// ln(2π).
pub const LN_2PI: f64 = 1.8378770664093453;

/// Product of independent diagonal Gaussians, renormalized: pooled precision
/// is the sum of factor precisions and the pooled mean is the
/// precision-weighted average. Inputs and output are (mean, variance) per
/// dimension.
pub fn pool_gaussians(factors: &[(Vec<f64>, Vec<f64>)]) -> (Vec<f64>, Vec<f64>) {
    assert!(!factors.is_empty(), "empty factor set");
    let d = factors[0].0.len();
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    for j in 0..d {
        let mut lam = 0.0;
        let mut mw = 0.0;
        for (m, v) in factors {
            lam += 1.0 / v[j];
            mw += m[j] / v[j];
        }
        var[j] = 1.0 / lam;
        mean[j] = mw / lam;
    }
    (mean, var)
}

/// Log-density of a diagonal Gaussian at `z`.
pub fn log_density(mean: &[f64], var: &[f64], z: &[f64]) -> f64 {
    mean.iter()
        .zip(var)
        .zip(z)
        .map(|((&m, &v), &x)| -0.5 * (LN_2PI + v.ln() + (x - m) * (x - m) / v))
        .sum()
}

/// Differential entropy ½ Σ (ln σ² + ln 2πe) of a diagonal Gaussian.
pub fn entropy(var: &[f64]) -> f64 {
    var.iter().map(|&v| 0.5 * (v.ln() + LN_2PI + 1.0)).sum()
}
