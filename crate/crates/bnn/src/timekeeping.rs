//! Per-role time protocols and translations between them.
//!
//! The primary partner stamps packets in *general relative time*: each
//! timestamp is the interval since the previous emitted spike, regardless of
//! which neuron emitted it. The hub translates those intervals onto its own
//! constantly advancing absolute axis and informs the partners in absolute
//! time. The secondary partner keeps a wall-clock that is reset whenever a
//! primary-originated stimulus arrives and reports its own events as
//! `t0 + elapsed`. Referencing everything to the primary chain this way keeps
//! relative spike timing intact across arbitrary link delays, with no clock
//! synchronization between sites.

use crate::protocol::MAX_24BIT;

/// Modulus of the 24-bit millisecond timestamp field.
pub const TS_MODULUS: u64 = (MAX_24BIT as u64) + 1;

/// Half the timestamp modulus; elapsed intervals are assumed below this, so
/// modular deltas are unambiguous.
pub const MAX_UNAMBIGUOUS_MS: u64 = TS_MODULUS / 2;

/// `(later - earlier) mod 2^24` for 24-bit millisecond timestamps.
///
/// Correct whenever the true elapsed time is below [`MAX_UNAMBIGUOUS_MS`].
pub fn wrap_delta(later: u32, earlier: u32) -> u32 {
    debug_assert!(later <= MAX_24BIT && earlier <= MAX_24BIT);
    later.wrapping_sub(earlier) & MAX_24BIT
}

/// Truncate an unbounded millisecond time to the 24-bit wire field.
pub fn to_wire_ms(abs_ms: u64) -> u32 {
    (abs_ms % TS_MODULUS) as u32
}

/// Reconstruct the unbounded millisecond time whose 24-bit truncation is
/// `ts24`, choosing the candidate closest to `near`.
pub fn unwrap_near(near: u64, ts24: u32) -> u64 {
    let base = near & !(TS_MODULUS - 1);
    let candidate = base + ts24 as u64;
    if candidate + MAX_UNAMBIGUOUS_MS < near {
        candidate + TS_MODULUS
    } else if candidate >= near + MAX_UNAMBIGUOUS_MS && candidate >= TS_MODULUS {
        candidate - TS_MODULUS
    } else {
        candidate
    }
}

/// Sender-side clock of the primary partner.
///
/// Tracks the local running time of the previous emitted spike; packets carry
/// only the delta to it.
#[derive(Debug, Clone, Default)]
pub struct PrimaryClock {
    last_emitted_ms: u64,
}

impl PrimaryClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Produce the 24-bit wire delta for a spike at local time `now_ms` and
    /// advance the chain. The chain is shared by every neuron the node hosts.
    pub fn emit(&mut self, now_ms: u64) -> u32 {
        debug_assert!(
            now_ms >= self.last_emitted_ms,
            "primary clock must be monotone"
        );
        let dt = now_ms.saturating_sub(self.last_emitted_ms);
        self.last_emitted_ms = now_ms;
        (dt % TS_MODULUS) as u32
    }

    pub fn last_emitted_ms(&self) -> u64 {
        self.last_emitted_ms
    }
}

/// Absolute-time bookkeeping of the synapse hub.
#[derive(Debug, Clone, Default)]
pub struct HubClock {
    axis_now_ms: u64,
    last_primary_abs_ms: u64,
}

impl HubClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Translate a general-relative delta from the primary partner into
    /// absolute time and advance the primary chain.
    pub fn primary_to_absolute(&mut self, dt_ms: u32) -> u64 {
        let abs = self.last_primary_abs_ms + dt_ms as u64;
        self.last_primary_abs_ms = abs;
        self.axis_now_ms = self.axis_now_ms.max(abs);
        abs
    }

    /// Reconstruct the absolute time of a secondary-reported event from its
    /// 24-bit wire timestamp.
    pub fn secondary_to_absolute(&mut self, ts24: u32) -> u64 {
        let abs = unwrap_near(self.axis_now_ms, ts24);
        self.axis_now_ms = self.axis_now_ms.max(abs);
        abs
    }

    /// Advance the axis with the local clock (wall time in UDP mode, the
    /// virtual scheduler in simulated mode). Never moves backwards.
    pub fn observe_local(&mut self, now_ms: u64) {
        self.axis_now_ms = self.axis_now_ms.max(now_ms);
    }

    pub fn axis_now_ms(&self) -> u64 {
        self.axis_now_ms
    }

    pub fn last_primary_abs_ms(&self) -> u64 {
        self.last_primary_abs_ms
    }

    #[cfg(test)]
    pub(crate) fn with_state(axis_now_ms: u64, last_primary_abs_ms: u64) -> Self {
        HubClock {
            axis_now_ms,
            last_primary_abs_ms,
        }
    }
}

/// Reset-relative clock of the secondary partner.
///
/// `t0` is the absolute time of the last primary-originated stimulus as told
/// by the hub; local wall time elapsed since that arrival is added on report.
/// Spontaneous activity before any stimulus has ever arrived is reported
/// against session start (`t0 = 0`).
#[derive(Debug, Clone, Default)]
pub struct SecondaryClock {
    t0_ms: u32,
    reset_local_us: u64,
    has_reference: bool,
}

impl SecondaryClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reset the wall-clock on arrival of a primary-originated stimulus.
    pub fn reset(&mut self, t0_ms: u32, local_now_us: u64) {
        self.t0_ms = t0_ms & MAX_24BIT;
        self.reset_local_us = local_now_us;
        self.has_reference = true;
    }

    /// Report an event at local time `local_now_us` as `t0 + elapsed`,
    /// truncated to the 24-bit wire field.
    pub fn report_time(&self, local_now_us: u64) -> u32 {
        let elapsed_ms = local_now_us.saturating_sub(self.reset_local_us) / 1000;
        ((self.t0_ms as u64 + elapsed_ms) % TS_MODULUS) as u32
    }

    pub fn has_reference(&self) -> bool {
        self.has_reference
    }

    pub fn t0_ms(&self) -> u32 {
        self.t0_ms
    }
}
