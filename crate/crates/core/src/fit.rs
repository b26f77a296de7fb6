//! Least-squares line fits for λ→0 extrapolation and convergence-rate checks.

use serde::Serialize;

/// `y ≈ intercept + slope·x` by ordinary least squares.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

/// Ordinary least-squares line through `(xs[i], ys[i])`.
///
/// Panics if fewer than two points are given or all `xs` coincide.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len(), "mismatched fit inputs");
    assert!(xs.len() >= 2, "need at least two points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    assert!(sxx > 0.0, "degenerate abscissae");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    LinearFit {
        intercept,
        slope,
        residual: (ss / n).sqrt(),
    }
}

/// λ→0 extrapolation of `ys` sampled at couplings `lambdas`, for quantities
/// even in λ: a line in `λ^2`.
pub fn extrapolate_even(lambdas: &[f64], ys: &[f64]) -> LinearFit {
    let l2: Vec<f64> = lambdas.iter().map(|l| l * l).collect();
    linear_fit(&l2, ys)
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
    linear_fit(&lx, &ly).slope
}
