//! Scalar probability functions for the standard normal target.
//!
//! `erf` uses the positive-term Maclaurin series below |x| = 3 and a
//! Lentz-evaluated continued fraction for `erfc` above it. The quantile
//! function starts from a rational approximation with a central and two tail
//! branches and is polished by a single Halley step against the CDF.
//! Everything is `f64` end to end.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{domain, Result};

const SERIES_CUTOFF: f64 = 3.0;
const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// A probability strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            domain(format!("probability must lie in (0, 1), got {value}"))
        }
    }

    /// The plotting position `(rank - 0.5) / n` for a 1-based, possibly
    /// fractional (mid-)rank.
    pub fn from_rank(rank: f64, n: usize) -> Result<Self> {
        Self::new((rank - 0.5) / n as f64)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A finite, non-decreasing, non-empty sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
}

impl SortedSample {
    /// Wraps values that are already sorted.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite_nonempty(&values)?;
        if values.windows(2).any(|w| w[0] > w[1]) {
            return domain("sample values must be non-decreasing");
        }
        Ok(Self { values })
    }

    /// Sorts arbitrary finite values.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        check_finite_nonempty(&values)?;
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_finite_nonempty(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return domain("sample must be non-empty");
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return domain(format!("sample contains non-finite value {bad}"));
    }
    Ok(())
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let a = x.abs();
    let magnitude = if a < SERIES_CUTOFF {
        erf_series(a)
    } else {
        1.0 - erfc_fraction(a)
    };
    magnitude.copysign(x)
}

/// Complementary error function, accurate in relative terms for large x.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= SERIES_CUTOFF {
        erfc_fraction(x)
    } else if x >= 0.0 {
        1.0 - erf_series(x)
    } else if x > -SERIES_CUTOFF {
        1.0 + erf_series(-x)
    } else {
        2.0 - erfc_fraction(-x)
    }
}

// erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n (2x^2)^n x / (2n+1)!!, all terms positive.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    2.0 * INV_SQRT_PI * (-x2).exp() * sum
}

// erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), x > 0.
fn erfc_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..2000 {
        let a = k as f64 * 0.5;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() * INV_SQRT_PI / f
}

/// Standard normal CDF, Φ(x) = ½(1 + erf(x/√2)).
pub fn normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return domain(format!("normal_cdf requires a finite argument, got {x}"));
    }
    Ok(cdf_unchecked(x))
}

fn cdf_unchecked(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    } else {
        1.0 - 0.5 * erfc(x * FRAC_1_SQRT_2)
    }
}

/// Standard normal quantile, Φ⁻¹(p) = √2·erfinv(2p − 1).
///
/// Exactly antisymmetric: the upper half is computed as `-Φ⁻¹(1 - p)`, and
/// `1 - p` is exact for p ≥ 0.5.
pub fn normal_quantile(p: Probability) -> f64 {
    let p = p.value();
    if p < 0.5 {
        lower_quantile(p)
    } else if p > 0.5 {
        -lower_quantile(1.0 - p)
    } else {
        0.0
    }
}

/// `erfinv(y)` for y in (-1, 1), via the normal quantile.
pub fn erfinv(y: f64) -> Result<f64> {
    let p = Probability::new(0.5 * (y + 1.0))?;
    Ok(normal_quantile(p) * FRAC_1_SQRT_2)
}

// p in (0, 0.5).
fn lower_quantile(p: f64) -> f64 {
    let x = rational_quantile(p);
    // Halley refinement; the lower tail keeps Φ(x) accurate in relative terms.
    let e = cdf_unchecked(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    let refined = x - u / (1.0 + 0.5 * x * u);
    if refined.is_finite() {
        refined
    } else {
        x
    }
}

#[rustfmt::skip]
fn rational_quantile(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4) * r + 4.592_195_393_154_987e4) * r
            + 1.373_169_376_550_946e4) * r + 1.971_590_950_306_551_3e3) * r
            + 1.331_416_678_917_843_7e2) * r + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4) * r + 2.121_379_430_158_659_7e4) * r
            + 5.394_196_021_424_751e3) * r + 6.871_870_074_920_579e2) * r
            + 4.231_333_070_160_091e1) * r + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1) * r + 1.270_458_252_452_368_4) * r
            + 3.647_848_324_763_204_5) * r + 5.769_497_221_460_691) * r
            + 4.630_337_846_156_545) * r + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2) * r + 1.481_039_764_274_800_8e-1) * r
            + 6.897_673_349_851e-1) * r + 1.676_384_830_183_803_8) * r
            + 2.053_191_626_637_759) * r + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3) * r + 2.653_218_952_657_612_4e-2) * r
            + 2.965_605_718_285_048_7e-1) * r + 1.784_826_539_917_291_3) * r
            + 5.463_784_911_164_114) * r + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5) * r + 7.868_691_311_456_133e-4) * r
            + 1.487_536_129_085_061_5e-2) * r + 1.369_298_809_227_358e-1) * r
            + 5.998_322_065_558_88e-1) * r + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Mid-rank empirical CDF: `(#{v < x} + #{v = x}/2) / N`.
///
/// At the k-th order statistic (ties mid-ranked) this is `(k - 0.5) / N`, the
/// same plotting position the advantage pipeline uses.
pub fn empirical_cdf(sample: &SortedSample, x: f64) -> f64 {
    let values = sample.values();
    let below = values.partition_point(|&v| v < x);
    let at_or_below = values.partition_point(|&v| v <= x);
    (below as f64 + 0.5 * (at_or_below - below) as f64) / values.len() as f64
}

/// Closed-form 1D Wasserstein-2 distance between the sample's empirical
/// distribution and its N-point quantile discretisation of N(0, 1).
///
/// The monotone (sorted-to-sorted) coupling is optimal in one dimension, so
/// `W2 = sqrt(mean_i (x_(i) - Φ⁻¹((i - 0.5)/N))²)`.
pub fn wasserstein2_to_normal(sample: &SortedSample) -> f64 {
    let n = sample.len();
    let quantiles = target_quantiles(n);
    let sq: f64 = sample
        .values()
        .iter()
        .zip(&quantiles)
        .map(|(v, q)| (v - q) * (v - q))
        .sum();
    (sq / n as f64).sqrt()
}

/// `Φ⁻¹((i - 0.5)/n)` for `i = 1..=n`, ascending.
pub fn target_quantiles(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..n / 2 {
        let q = lower_quantile((i as f64 + 0.5) / n as f64);
        out[i] = q;
        out[n - 1 - i] = -q;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob(p: f64) -> Probability {
        Probability::new(p).unwrap()
    }

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(normal_cdf(0.0).unwrap(), 0.5);
    }

    #[test]
    fn cdf_is_symmetric() {
        for x in [0.3, 1.0, 1.959964, 4.0, 7.5] {
            let lo = normal_cdf(-x).unwrap();
            let hi = normal_cdf(x).unwrap();
            assert!((lo + hi - 1.0).abs() < 1e-15, "x={x}");
        }
        assert!((normal_cdf(-1.959964).unwrap() - 0.025).abs() < 1e-6);
    }

    #[test]
    fn cdf_rejects_non_finite() {
        assert!(normal_cdf(f64::NAN).is_err());
        assert!(normal_cdf(f64::INFINITY).is_err());
    }

    #[test]
    fn probability_rejects_endpoints() {
        assert!(Probability::new(0.0).is_err());
        assert!(Probability::new(1.0).is_err());
        assert!(Probability::new(-0.1).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert!(Probability::from_rank(1.0, 4).is_ok());
    }

    #[test]
    fn quantile_median_and_antisymmetry() {
        assert_eq!(normal_quantile(prob(0.5)), 0.0);
        assert_eq!(normal_quantile(prob(0.125)), -normal_quantile(prob(0.875)));
    }

    #[test]
    fn erf_branches_meet_at_cutoff() {
        let below = erf_series(SERIES_CUTOFF - 1e-12);
        let above = 1.0 - erfc_fraction(SERIES_CUTOFF + 1e-12);
        assert!((below - above).abs() < 1e-14);
        assert_eq!(erf(0.0), 0.0);
        assert_eq!(erf(-1.0), -erf(1.0));
        assert!((erfc(-2.0) - (2.0 - erfc(2.0))).abs() < 1e-16);
    }

    #[test]
    fn erfinv_inverts_erf() {
        for y in [-0.99, -0.5, 0.0, 0.3, 0.9, 0.999999] {
            let x = erfinv(y).unwrap();
            assert!((erf(x) - y).abs() < 1e-14, "y={y}");
        }
        assert!(erfinv(1.0).is_err());
    }

    #[test]
    fn empirical_cdf_mid_rank() {
        let s = SortedSample::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(empirical_cdf(&s, 3.0), 0.625);
        let single = SortedSample::new(vec![5.0]).unwrap();
        assert_eq!(empirical_cdf(&single, 5.0), 0.5);
        let tied = SortedSample::new(vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(empirical_cdf(&tied, 0.0), 0.25);
        assert_eq!(empirical_cdf(&tied, 1.0), 0.75);
        assert_eq!(empirical_cdf(&tied, -1.0), 0.0);
        assert_eq!(empirical_cdf(&tied, 2.0), 1.0);
    }

    #[test]
    fn sorted_sample_validation() {
        assert!(SortedSample::new(vec![]).is_err());
        assert!(SortedSample::new(vec![2.0, 1.0]).is_err());
        assert!(SortedSample::new(vec![1.0, f64::NAN]).is_err());
        let s = SortedSample::from_unsorted(vec![3.0, -1.0, 2.0]).unwrap();
        assert_eq!(s.values(), &[-1.0, 2.0, 3.0]);
    }

    #[test]
    fn w2_of_exact_quantiles_is_zero() {
        let s = SortedSample::new(target_quantiles(4)).unwrap();
        assert!(wasserstein2_to_normal(&s) < 1e-10);
    }

    #[test]
    fn w2_is_non_negative_under_shift() {
        let base = target_quantiles(8);
        let mut last = 0.0;
        for c in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let shifted = base.iter().map(|v| v + c).collect();
            let w = wasserstein2_to_normal(&SortedSample::new(shifted).unwrap());
            assert!(w >= 0.0);
            // Shifting exact quantiles by c moves every point by c.
            assert!((w - c).abs() < 1e-12);
            assert!(w >= last);
            last = w;
        }
    }
}
