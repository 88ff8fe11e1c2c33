//! Moves 8-octet event packets between nodes.
//!
//! Two backends expose the same fire-and-forget contract: a deterministic
//! virtual-time scheduler for experiments and tests, and plain UDP sockets
//! for live runs. Loss is silent in both; there are no retransmissions.

pub mod sim;
pub mod udp;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::LinkConfig;

/// Delivery characteristics of one directed link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkProfile {
    pub static_delay_us: u64,
    /// Half-width of the uniform per-packet jitter.
    pub jitter_us: u64,
    pub loss_prob: f64,
}

impl LinkProfile {
    pub fn ideal() -> Self {
        LinkProfile {
            static_delay_us: 0,
            jitter_us: 0,
            loss_prob: 0.0,
        }
    }
}

/// A directed link: a profile plus the RNG stream that drives its jitter and
/// loss draws. The static delay is resolved once, at construction.
#[derive(Debug, Clone)]
pub struct Link {
    profile: LinkProfile,
    rng: ChaCha8Rng,
}

impl Link {
    pub fn new(profile: LinkProfile, seed: u64) -> Self {
        Link {
            profile,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Resolve a config into a concrete profile, drawing the static delay
    /// from its range (if configured) with the given seed.
    pub fn from_config(cfg: &LinkConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let static_delay_ms = match (cfg.static_delay_ms, cfg.static_delay_range_ms) {
            (Some(fixed), _) => fixed,
            (None, Some([lo, hi])) => {
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            }
            (None, None) => 0.0,
        };
        Link {
            profile: LinkProfile {
                static_delay_us: (static_delay_ms * 1000.0).round() as u64,
                jitter_us: (cfg.jitter_ms * 1000.0).round() as u64,
                loss_prob: cfg.loss_prob,
            },
            rng,
        }
    }

    pub fn profile(&self) -> LinkProfile {
        self.profile
    }

    /// Sample a delivery time for a packet sent at `now_us`, or `None` if the
    /// packet is lost. Deliveries never precede the send.
    pub fn transmit(&mut self, now_us: u64) -> Option<u64> {
        if self.profile.loss_prob > 0.0 && self.rng.random::<f64>() < self.profile.loss_prob {
            return None;
        }
        let jitter = if self.profile.jitter_us > 0 {
            let j = self.profile.jitter_us as i64;
            self.rng.random_range(-j..=j)
        } else {
            0
        };
        let nominal = now_us as i64 + self.profile.static_delay_us as i64 + jitter;
        Some(nominal.max(now_us as i64) as u64)
    }
}
