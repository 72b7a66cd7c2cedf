//! Task-level reward shaping.
//!
//! A trapezoidal length envelope turns response length into a reward in
//! [0, 1], an entropy band produces a hinge penalty outside [h_min, h_max],
//! and [`composite_reward`] adds the weighted accuracy, length, format and
//! structure signals into the scalar that advantage estimation sees.

use crate::error::{usage, Result};

/// Four token-count thresholds `l_min < l_low <= l_high < l_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthEnvelope {
    l_min: usize,
    l_low: usize,
    l_high: usize,
    l_max: usize,
}

impl LengthEnvelope {
    pub fn new(l_min: usize, l_low: usize, l_high: usize, l_max: usize) -> Result<Self> {
        if l_min == 0 {
            return usage("length envelope thresholds must be positive");
        }
        if !(l_min < l_low && l_low <= l_high && l_high < l_max) {
            return usage(format!(
                "length envelope needs l_min < l_low <= l_high < l_max, got ({l_min}, {l_low}, {l_high}, {l_max})"
            ));
        }
        Ok(Self {
            l_min,
            l_low,
            l_high,
            l_max,
        })
    }

    pub fn thresholds(&self) -> [usize; 4] {
        [self.l_min, self.l_low, self.l_high, self.l_max]
    }

    pub fn l_min(&self) -> usize {
        self.l_min
    }

    pub fn l_low(&self) -> usize {
        self.l_low
    }

    pub fn l_high(&self) -> usize {
        self.l_high
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }
}

/// Exploration band in nats per token, with the penalty weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBounds {
    h_min: f64,
    h_max: f64,
    lambda_ent: f64,
}

impl EntropyBounds {
    pub fn new(h_min: f64, h_max: f64, lambda_ent: f64) -> Result<Self> {
        if !(h_min.is_finite() && h_max.is_finite() && lambda_ent.is_finite()) {
            return usage("entropy bounds must be finite");
        }
        if !(0.0 <= h_min && h_min <= h_max) {
            return usage(format!(
                "entropy bounds need 0 <= h_min <= h_max, got ({h_min}, {h_max})"
            ));
        }
        if lambda_ent < 0.0 {
            return usage(format!("lambda_ent must be non-negative, got {lambda_ent}"));
        }
        Ok(Self {
            h_min,
            h_max,
            lambda_ent,
        })
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn lambda_ent(&self) -> f64 {
        self.lambda_ent
    }

    pub fn with_lambda(self, lambda_ent: f64) -> Result<Self> {
        Self::new(self.h_min, self.h_max, lambda_ent)
    }

    pub fn contains(&self, h: f64) -> bool {
        self.h_min <= h && h <= self.h_max
    }
}

/// Broad task families with default shaping presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Reasoning,
    VisionCentric,
    Hybrid,
}

pub const DEFAULT_LAMBDA_ENT: f64 = 0.01;

impl TaskKind {
    /// Default envelope: long chains for reasoning, short answers for
    /// perception, in between for hybrids. All capped at 4096 tokens.
    pub fn default_envelope(self) -> LengthEnvelope {
        let [a, b, c, d] = match self {
            TaskKind::Reasoning => [400, 800, 2000, 4096],
            TaskKind::VisionCentric => [10, 30, 200, 1024],
            TaskKind::Hybrid => [100, 300, 1200, 4096],
        };
        LengthEnvelope::new(a, b, c, d).expect("preset envelopes are valid")
    }

    pub fn default_entropy_bounds(self) -> EntropyBounds {
        let (lo, hi) = match self {
            TaskKind::Reasoning => (0.15, 0.9),
            TaskKind::VisionCentric => (0.05, 0.5),
            // No separate hybrid band; use the wider reasoning one.
            TaskKind::Hybrid => (0.15, 0.9),
        };
        EntropyBounds::new(lo, hi, DEFAULT_LAMBDA_ENT).expect("preset bounds are valid")
    }
}

/// Weights for the composite reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeRewardWeights {
    pub accuracy: f64,
    pub length: f64,
    pub format: f64,
    pub structure: f64,
}

impl CompositeRewardWeights {
    pub fn new(accuracy: f64, length: f64, format: f64, structure: f64) -> Result<Self> {
        let w = [accuracy, length, format, structure];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return usage(format!(
                "reward weights must be finite and non-negative, got {w:?}"
            ));
        }
        if w.iter().all(|&x| x == 0.0) {
            return usage("at least one reward weight must be positive");
        }
        Ok(Self {
            accuracy,
            length,
            format,
            structure,
        })
    }
}

impl Default for CompositeRewardWeights {
    fn default() -> Self {
        Self {
            accuracy: 1.0,
            length: 0.1,
            format: 0.1,
            structure: 0.1,
        }
    }
}

/// Trapezoidal length reward.
///
/// Zero outside `[l_min, l_max]`, a rising ramp on `[l_min, l_low)`, one on
/// the plateau `[l_low, l_high]` and a falling ramp on `(l_high, l_max]`. Both
/// ramps evaluate to 0 at their outer ends, so the function is continuous.
pub fn length_reward(length: usize, env: &LengthEnvelope) -> f64 {
    let LengthEnvelope {
        l_min,
        l_low,
        l_high,
        l_max,
    } = *env;
    if length < l_min || length > l_max {
        0.0
    } else if length < l_low {
        (length - l_min) as f64 / (l_low - l_min) as f64
    } else if length <= l_high {
        1.0
    } else {
        (l_max - length) as f64 / (l_max - l_high) as f64
    }
}

/// `max(0, h - h_max) + max(0, h_min - h)`. The weight is applied by the caller.
pub fn entropy_penalty(h_task: f64, bounds: &EntropyBounds) -> f64 {
    (h_task - bounds.h_max).max(0.0) + (bounds.h_min - h_task).max(0.0)
}

/// Derivative of [`entropy_penalty`] with respect to the entropy, taking 0
/// on the band edges.
pub fn entropy_penalty_slope(h_task: f64, bounds: &EntropyBounds) -> f64 {
    if h_task > bounds.h_max {
        1.0
    } else if h_task < bounds.h_min {
        -1.0
    } else {
        0.0
    }
}

/// Weighted sum of accuracy, length reward and the binary format / structure
/// signals. An absent structure signal contributes nothing.
pub fn composite_reward(
    accuracy: f64,
    length: usize,
    format_ok: bool,
    structure_ok: Option<bool>,
    env: &LengthEnvelope,
    weights: &CompositeRewardWeights,
) -> f64 {
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    weights.accuracy * accuracy
        + weights.length * length_reward(length, env)
        + weights.format * indicator(format_ok)
        + weights.structure * indicator(structure_ok.unwrap_or(false))
}
