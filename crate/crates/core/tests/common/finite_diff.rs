//! Central finite differences over a flat parameter vector.

#![allow(dead_code)]

pub fn central_gradient<F: FnMut(&[f64]) -> f64>(params: &[f64], step: f64, mut f: F) -> Vec<f64> {
    let mut x = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let hi = f(&x);
            x[i] = orig - step;
            let lo = f(&x);
            x[i] = orig;
            (hi - lo) / (2.0 * step)
        })
        .collect()
}

/// Largest componentwise difference relative to the largest reference entry.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric
        .iter()
        .chain(analytic)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max)
        / scale
}
