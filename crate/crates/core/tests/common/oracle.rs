//! Reference implementations used only by tests.
//!
//! The normal CDF is evaluated by composite Gauss-Legendre quadrature of the
//! density and inverted by plain bisection. None of this shares code with the
//! library's series / continued-fraction / rational-approximation path.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

const GL_ORDER: usize = 16;
const PANEL_WIDTH: f64 = 0.25;

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
fn gauss_legendre() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(compute_gauss_legendre)
}

fn compute_gauss_legendre() -> ([f64; GL_ORDER], [f64; GL_ORDER]) {
    let n = GL_ORDER;
    let mut nodes = [0.0; GL_ORDER];
    let mut weights = [0.0; GL_ORDER];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-17 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre();
    let panels = ((b - a).abs() / PANEL_WIDTH).ceil().max(1.0) as usize;
    let h = (b - a) / panels as f64;
    // Neumaier summation over panels.
    let mut sum = 0.0;
    let mut comp = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * h;
        let mid = lo + 0.5 * h;
        let mut panel = 0.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            panel += w * f(mid + 0.5 * h * x);
        }
        panel *= 0.5 * h;
        let t = sum + panel;
        if sum.abs() >= panel.abs() {
            comp += (sum - t) + panel;
        } else {
            comp += (panel - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// erf(x) = 2/sqrt(pi) * integral_0^x exp(-t^2) dt.
pub fn erf(x: f64) -> f64 {
    let upper = x.clamp(-10.0, 10.0);
    2.0 / PI.sqrt() * integrate(|t| (-t * t).exp(), 0.0, upper)
}

/// erfc(x) for x >= 0, integrated directly over the tail so it stays
/// accurate in relative terms.
pub fn erfc(x: f64) -> f64 {
    assert!(x >= 0.0);
    2.0 / PI.sqrt() * integrate(|t| (-t * t).exp(), x, x + 12.0)
}

/// Phi(x) = 1/2 + integral_0^x phi(t) dt.
pub fn normal_cdf(x: f64) -> f64 {
    let upper = x.clamp(-40.0, 40.0);
    0.5 + integrate(|t| (-0.5 * t * t).exp() / (2.0 * PI).sqrt(), 0.0, upper)
}

/// Phi^{-1}(p) by bisection on [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    let (mut lo, mut hi) = (-12.0_f64, 12.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Target quantiles Phi^{-1}((i - 0.5)/n) for i = 1..=n, using antisymmetry
/// to halve the number of bisections.
pub fn target_quantiles(n: usize) -> Vec<f64> {
    static CACHE: Mutex<BTreeMap<usize, Vec<f64>>> = Mutex::new(BTreeMap::new());
    if let Some(hit) = CACHE.lock().unwrap().get(&n) {
        return hit.clone();
    }
    let mut out = vec![0.0; n];
    for i in 0..n / 2 {
        let q = normal_quantile((i as f64 + 0.5) / n as f64);
        out[i] = q;
        out[n - 1 - i] = -q;
    }
    CACHE.lock().unwrap().insert(n, out.clone());
    out
}

/// Brute-force G-GRPO advantages: O(N^2) rank counting, tie sets averaged.
pub fn brute_force_advantages(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len();
    let quantiles = target_quantiles(n);
    rewards
        .iter()
        .map(|&r| {
            let below = rewards.iter().filter(|&&x| x < r).count();
            let equal = rewards.iter().filter(|&&x| x == r).count();
            quantiles[below..below + equal].iter().sum::<f64>() / equal as f64
        })
        .collect()
}
