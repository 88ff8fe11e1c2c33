//! The secondary partner: a behavioral model of the biological neuron under
//! graded capacitive stimulation. Stimulation strength arrives as a pulse
//! count in 2..=16; sub-threshold counts evoke PSPs with amplitude growing in
//! the count, the top of the range reaches the firing threshold. Every
//! response is reported back with reset-relative timing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use crate::config::{BioConfig, NodeIds};
use crate::memristor::{byte_to_weight, weight_to_pulse_count, PULSE_MAX, PULSE_MIN};
use crate::node::{Node, Outbox, TimerKind};
use crate::protocol::{AerPacket, EventKind, PartnerRole, RoleTags};
use crate::timekeeping::SecondaryClock;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BioError {
    #[error("pulse count {0} outside the stimulation range {PULSE_MIN}..={PULSE_MAX}")]
    OutOfRange(u32),
}

/// Outcome of one stimulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StimResponse {
    pub kind: EventKind,
    pub amplitude: f64,
}

/// Behavioral biological neuron.
#[derive(Debug, Clone)]
pub struct BioNeuron {
    cfg: BioConfig,
    rng: ChaCha8Rng,
    refractory_until_us: u64,
    summation_acc: f64,
    last_stim_us: u64,
}

impl BioNeuron {
    pub fn new(cfg: BioConfig, seed: u64) -> Self {
        BioNeuron {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            refractory_until_us: 0,
            summation_acc: 0.0,
            last_stim_us: 0,
        }
    }

    pub fn in_refractory(&self, now_us: u64) -> bool {
        now_us < self.refractory_until_us
    }

    /// Apply one capacitive stimulation of `pulse_count` pulses at local time
    /// `now_us`.
    pub fn stimulate(&mut self, pulse_count: u32, now_us: u64) -> Result<StimResponse, BioError> {
        if !(PULSE_MIN..=PULSE_MAX).contains(&pulse_count) {
            return Err(BioError::OutOfRange(pulse_count));
        }
        let jitter = if self.cfg.jitter > 0.0 {
            Normal::new(0.0, self.cfg.jitter)
                .expect("valid jitter sigma")
                .sample(&mut self.rng)
        } else {
            0.0
        };
        let effective = (pulse_count as f64 * (1.0 + jitter)).round().max(0.0);

        let drive = if self.cfg.summation_mode {
            let dt_ms = (now_us - self.last_stim_us) as f64 / 1000.0;
            self.summation_acc =
                self.summation_acc * (-dt_ms / self.cfg.summation_tau_ms).exp() + effective;
            self.last_stim_us = now_us;
            self.summation_acc
        } else {
            effective
        };

        if drive >= self.cfg.ap_threshold_pulses as f64 && !self.in_refractory(now_us) {
            self.refractory_until_us = now_us + (self.cfg.refractory_ms * 1000.0) as u64;
            if self.cfg.summation_mode {
                self.summation_acc = 0.0;
            }
            Ok(StimResponse {
                kind: EventKind::ForcedAp,
                amplitude: self.cfg.psp_amp_max,
            })
        } else {
            Ok(StimResponse {
                kind: EventKind::Psp,
                amplitude: self.cfg.psp_amp_max * effective.min(PULSE_MAX as f64)
                    / PULSE_MAX as f64,
            })
        }
    }

    /// Register a spontaneous action potential if the neuron is excitable;
    /// returns false during refractoriness.
    pub fn try_spontaneous_ap(&mut self, now_us: u64) -> bool {
        if self.in_refractory(now_us) {
            return false;
        }
        self.refractory_until_us = now_us + (self.cfg.refractory_ms * 1000.0) as u64;
        true
    }

    pub fn config(&self) -> &BioConfig {
        &self.cfg
    }
}

/// Row of the secondary node's event log; times follow the reset-relative
/// reporting protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecondaryEvent {
    pub time_ms: u64,
    pub neuron_id: u32,
    pub kind: EventKind,
}

/// The secondary node event loop.
pub struct SecondaryNode {
    ids: NodeIds,
    tags: RoleTags,
    neuron: BioNeuron,
    clock: SecondaryClock,
    spont_rng: ChaCha8Rng,
    spont_rate_hz: f64,
    duration_us: u64,
    event_log: Vec<SecondaryEvent>,
}

impl SecondaryNode {
    pub fn new(
        ids: NodeIds,
        tags: RoleTags,
        bio_cfg: BioConfig,
        duration_us: u64,
        seed: u64,
    ) -> Self {
        SecondaryNode {
            ids,
            tags,
            neuron: BioNeuron::new(bio_cfg, seed),
            clock: SecondaryClock::new(),
            spont_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)),
            spont_rate_hz: bio_cfg.spont_rate_hz,
            duration_us,
            event_log: Vec::new(),
        }
    }

    pub fn event_log(&self) -> &[SecondaryEvent] {
        &self.event_log
    }

    fn schedule_next_spontaneous(&mut self, now_us: u64, out: &mut Outbox) {
        if self.spont_rate_hz <= 0.0 {
            return;
        }
        let exp = Exp::new(self.spont_rate_hz).expect("positive rate");
        let gap_s: f64 = exp.sample(&mut self.spont_rng);
        let at = now_us + (gap_s * 1_000_000.0).round().max(1.0) as u64;
        if at <= self.duration_us {
            out.schedule_at(at, TimerKind::Spontaneous);
        }
    }

    fn report(&mut self, kind: EventKind, now_us: u64, out: &mut Outbox) {
        let report_ms = self.clock.report_time(now_us);
        let pkt = AerPacket::new(self.tags.secondary, self.ids.bn_id, kind.to_r2(), report_ms)
            .expect("report fields are in range");
        out.send(PartnerRole::Synapse, pkt.encode());
        self.event_log.push(SecondaryEvent {
            time_ms: report_ms as u64,
            neuron_id: self.ids.bn_id,
            kind,
        });
    }
}

impl Node for SecondaryNode {
    fn role(&self) -> PartnerRole {
        PartnerRole::Secondary
    }

    fn start(&mut self, now_us: u64, out: &mut Outbox) {
        self.schedule_next_spontaneous(now_us, out);
    }

    fn on_packet(&mut self, now_us: u64, octets: &[u8], out: &mut Outbox) {
        let pkt = match AerPacket::decode(octets) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("secondary could not decode datagram: {e}");
                return;
            }
        };
        if pkt.r1() != self.tags.synapse {
            log::warn!("secondary ignoring packet with r1 {:#04x}", pkt.r1());
            return;
        }
        if pkt.neuron_id() != self.ids.bn_id {
            log::warn!("secondary hosts no neuron {}", pkt.neuron_id());
            return;
        }
        // A primary-originated stimulus: reset the wall-clock reference, then
        // stimulate and report the response.
        self.clock.reset(pkt.timestamp(), now_us);
        let pulse_count = weight_to_pulse_count(byte_to_weight(pkt.r2()));
        match self.neuron.stimulate(pulse_count, now_us) {
            Ok(resp) => self.report(resp.kind, now_us, out),
            Err(e) => log::warn!("stimulation rejected: {e}"),
        }
    }

    fn on_timer(&mut self, now_us: u64, kind: TimerKind, out: &mut Outbox) {
        if kind != TimerKind::Spontaneous {
            return;
        }
        if self.neuron.try_spontaneous_ap(now_us) {
            self.report(EventKind::SpontaneousAp, now_us, out);
        }
        self.schedule_next_spontaneous(now_us, out);
    }
}
