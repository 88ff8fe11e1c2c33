//! Behavioral memristive synapse model.
//!
//! The device is reduced to a normalized, non-volatile weight in `[0, 1]`
//! that moves only when a programming pulse is applied. Steps follow a
//! soft-bounded multiplicative law, so the effective learning rate is set by
//! the device state: potentiation steps shrink near the upper rail and
//! depression steps shrink near the lower rail. Per-pulse multiplicative
//! noise stands in for cycle-to-cycle device variability.
//!
//! The quantizers in this module are the two read-out paths of the weight:
//! a pulse count in `{2, 4, ..., 16}` for capacitive stimulation of the
//! biological side, and a burst frequency for EPSC drive on the artificial
//! side, plus the 8-bit encoding used on the wire.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::plasticity::PlasticityDecision;

/// Number of stimulation levels exposed by the pulse-count quantizer.
pub const PULSE_LEVELS: u32 = 8;
/// Lowest stimulation protocol, in pulses.
pub const PULSE_MIN: u32 = 2;
/// Highest stimulation protocol; reaching it drives the biological neuron to
/// its firing threshold.
pub const PULSE_MAX: u32 = 16;

/// Direction of a programming pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseDirection {
    Potentiate,
    Depress,
}

impl PulseDirection {
    /// Pulse derived from a plasticity decision; `NoChange` programs nothing.
    pub fn from_decision(d: PlasticityDecision) -> Option<PulseDirection> {
        match d {
            PlasticityDecision::Ltp => Some(PulseDirection::Potentiate),
            PlasticityDecision::Ltd => Some(PulseDirection::Depress),
            PlasticityDecision::NoChange => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemristorParams {
    /// Potentiation step gain.
    pub alpha_p: f64,
    /// Depression step gain.
    pub alpha_d: f64,
    /// Relative standard deviation of the per-pulse step noise.
    pub noise_sigma: f64,
}

impl Default for MemristorParams {
    fn default() -> Self {
        MemristorParams {
            alpha_p: 0.05,
            alpha_d: 0.05,
            noise_sigma: 0.1,
        }
    }
}

/// One memristive device holding a synaptic weight.
#[derive(Debug, Clone)]
pub struct MemristorDevice {
    w: f64,
    params: MemristorParams,
    rng: ChaCha8Rng,
}

impl MemristorDevice {
    pub fn new(initial_weight: f64, params: MemristorParams, seed: u64) -> Self {
        assert!(
            (0.0..=1.0).contains(&initial_weight),
            "initial weight must lie in [0, 1]"
        );
        MemristorDevice {
            w: initial_weight,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Current weight. Non-volatile: only [`MemristorDevice::apply_pulse`]
    /// ever changes it.
    pub fn weight(&self) -> f64 {
        self.w
    }

    /// Apply one programming pulse and return the new weight.
    pub fn apply_pulse(&mut self, dir: PulseDirection) -> f64 {
        let noise = if self.params.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.params.noise_sigma).expect("valid sigma");
            normal.sample(&mut self.rng)
        } else {
            0.0
        };
        let step = match dir {
            PulseDirection::Potentiate => self.params.alpha_p * (1.0 - self.w) * (1.0 + noise),
            PulseDirection::Depress => -self.params.alpha_d * self.w * (1.0 + noise),
        };
        self.w = (self.w + step).clamp(0.0, 1.0);
        self.w
    }
}

/// Map a weight to a stimulation pulse count in `{2, 4, ..., 16}`.
pub fn weight_to_pulse_count(w: f64) -> u32 {
    debug_assert!((0.0..=1.0).contains(&w));
    let level = ((w * PULSE_LEVELS as f64).floor() as i64).clamp(0, PULSE_LEVELS as i64 - 1);
    2 * (level as u32 + 1)
}

/// Map a weight to a stimulation burst frequency by linear interpolation.
pub fn weight_to_burst_rate(w: f64, f_min_hz: f64, f_max_hz: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&w));
    f_min_hz + w * (f_max_hz - f_min_hz)
}

/// Quantize a weight into the 8-bit wire field (half-up rounding).
pub fn weight_to_byte(w: f64) -> u8 {
    debug_assert!((0.0..=1.0).contains(&w));
    (w * 255.0).round() as u8
}

/// Inverse of [`weight_to_byte`] up to quantization.
pub fn byte_to_weight(b: u8) -> f64 {
    b as f64 / 255.0
}
