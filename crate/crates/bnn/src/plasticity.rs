//! Rate-coded BCM plasticity decisions.
//!
//! Each neuron the hub knows about gets a [`SpikeHistory`] window; on every
//! qualifying spike the presynaptic rate over that window is compared against
//! two fixed thresholds to pick LTD, no change, or LTP. The forward pathway
//! evaluates on presynaptic spikes alone; the reverse pathway evaluates only
//! when the postsynaptic neuron fires, against the presynaptic history at
//! that moment.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Direction of a plasticity event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlasticityDecision {
    Ltp,
    Ltd,
    NoChange,
}

impl PlasticityDecision {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlasticityDecision::Ltp => "LTP",
            PlasticityDecision::Ltd => "LTD",
            PlasticityDecision::NoChange => "NoChange",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "LTP" => Some(PlasticityDecision::Ltp),
            "LTD" => Some(PlasticityDecision::Ltd),
            "NoChange" => Some(PlasticityDecision::NoChange),
            _ => None,
        }
    }
}

impl std::fmt::Display for PlasticityDecision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rate thresholds of the BCM rule: below `low_hz` depress, above `high_hz`
/// potentiate, the closed interval `[low_hz, high_hz]` leaves the synapse
/// untouched.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcmThresholds {
    pub low_hz: f64,
    pub high_hz: f64,
    pub window_ms: u64,
}

impl Default for BcmThresholds {
    fn default() -> Self {
        BcmThresholds {
            low_hz: 5.0,
            high_hz: 20.0,
            window_ms: 1000,
        }
    }
}

impl BcmThresholds {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.low_hz > 0.0 && self.low_hz <= self.high_hz) {
            return Err(format!(
                "bcm thresholds must satisfy 0 < low_hz <= high_hz, got {} / {}",
                self.low_hz, self.high_hz
            ));
        }
        if self.window_ms == 0 {
            return Err("bcm window_ms must be positive".into());
        }
        Ok(())
    }
}

/// Pure BCM step function of the presynaptic rate.
pub fn bcm_decide(rate_hz: f64, th: &BcmThresholds) -> PlasticityDecision {
    if rate_hz < th.low_hz {
        PlasticityDecision::Ltd
    } else if rate_hz > th.high_hz {
        PlasticityDecision::Ltp
    } else {
        PlasticityDecision::NoChange
    }
}

/// Bounded window of absolute spike times (milliseconds) for one neuron.
#[derive(Debug, Clone)]
pub struct SpikeHistory {
    times_ms: VecDeque<u64>,
    window_ms: u64,
}

impl SpikeHistory {
    pub fn new(window_ms: u64) -> Self {
        assert!(window_ms > 0, "spike history window must be positive");
        SpikeHistory {
            times_ms: VecDeque::new(),
            window_ms,
        }
    }

    pub fn window_ms(&self) -> u64 {
        self.window_ms
    }

    /// Record a spike. Times normally arrive in order; a late event (possible
    /// under extreme link jitter) is inserted in place, and an exact duplicate
    /// is dropped to keep the sequence strictly increasing.
    pub fn record(&mut self, t_ms: u64) {
        match self.times_ms.back() {
            Some(&last) if t_ms > last => self.times_ms.push_back(t_ms),
            None => self.times_ms.push_back(t_ms),
            Some(_) => {
                let pos = self.times_ms.partition_point(|&x| x < t_ms);
                if self.times_ms.get(pos) != Some(&t_ms) {
                    self.times_ms.insert(pos, t_ms);
                }
            }
        }
        let newest = *self.times_ms.back().unwrap();
        let cutoff = newest.saturating_sub(self.window_ms);
        while let Some(&front) = self.times_ms.front() {
            if front <= cutoff {
                self.times_ms.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.times_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ms.is_empty()
    }

    /// Spikes in the half-open window `(now - window, now]`.
    pub fn count_in_window(&self, now_ms: u64) -> usize {
        let lo = now_ms.saturating_sub(self.window_ms);
        self.times_ms
            .iter()
            .filter(|&&t| t > lo && t <= now_ms)
            .count()
    }
}

/// Firing rate over the history window ending at `now_ms`, in Hz.
pub fn estimate_rate(history: &SpikeHistory, now_ms: u64) -> f64 {
    let count = history.count_in_window(now_ms) as f64;
    count * 1000.0 / history.window_ms() as f64
}

/// Forward-pathway rule: plasticity is driven by presynaptic activity alone,
/// evaluated on each presynaptic spike (which is itself in the window).
pub fn evaluate_forward(
    pre_history: &SpikeHistory,
    now_ms: u64,
    th: &BcmThresholds,
) -> PlasticityDecision {
    bcm_decide(estimate_rate(pre_history, now_ms), th)
}

/// Reverse-pathway rule: evaluated only when the postsynaptic neuron spikes,
/// with direction set by the presynaptic rate leading up to that spike.
pub fn evaluate_reverse(
    pre_history: &SpikeHistory,
    post_spike_ms: u64,
    th: &BcmThresholds,
) -> PlasticityDecision {
    bcm_decide(estimate_rate(pre_history, post_spike_ms), th)
}
