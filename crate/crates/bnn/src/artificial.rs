//! The primary partner: a forced-schedule spike generator (the presynaptic
//! artificial neuron) and a spontaneously active adaptive exponential
//! integrate-and-fire neuron (the postsynaptic one) that turns weighted
//! stimulation packets into EPSC bursts. Both share one general-relative
//! emission clock.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{NeuronConfig, NodeIds, ScheduleConfig, StimConfig};
use crate::memristor::{byte_to_weight, weight_to_burst_rate};
use crate::node::{Node, Outbox, TimerKind};
use crate::protocol::{AerPacket, PartnerRole, RoleTags};
use crate::timekeeping::PrimaryClock;

/// Spike times (microseconds) of the forced schedule: within each phase the
/// train is periodic at the phase rate, with the first spike one period after
/// phase start. Deterministic and independent of all network state.
pub fn forced_spike_times_us(schedule: &ScheduleConfig) -> Vec<u64> {
    let mut times = Vec::new();
    let mut phase_start = 0u64;
    for phase in &schedule.phases {
        let phase_len = (phase.duration_s * 1_000_000.0).round() as u64;
        let period = (1_000_000.0 / phase.rate_hz).round() as u64;
        let end = phase_start + phase_len;
        let mut t = phase_start + period;
        while t <= end {
            times.push(t);
            t += period;
        }
        phase_start = end;
    }
    times
}

/// Build the wire packet for a spike of `neuron_id` at local time `now_ms`,
/// advancing the shared general-relative chain.
pub fn emit_spike_packet(
    neuron_id: u32,
    clock: &mut PrimaryClock,
    now_ms: u64,
    tags: &RoleTags,
) -> AerPacket {
    let dt = clock.emit(now_ms);
    AerPacket::new(tags.primary, neuron_id, 0, dt).expect("spike packet fields are in range")
}

/// Adaptive exponential integrate-and-fire neuron with an additive EPSC
/// accumulator. Integrated with fixed-step explicit Euler.
#[derive(Debug, Clone)]
pub struct AdaptiveNeuron {
    cfg: NeuronConfig,
    stim: StimConfig,
    v: f64,
    w_adapt: f64,
    i_syn: f64,
    external_drive: f64,
    refractory_until_us: u64,
    /// Pending EPSC quantum arrival times from scheduled bursts.
    burst_queue: BinaryHeap<Reverse<u64>>,
    rng: ChaCha8Rng,
}

impl AdaptiveNeuron {
    pub fn new(cfg: NeuronConfig, stim: StimConfig, seed: u64) -> Self {
        AdaptiveNeuron {
            v: cfg.v_rest,
            w_adapt: 0.0,
            i_syn: 0.0,
            external_drive: 0.0,
            refractory_until_us: 0,
            burst_queue: BinaryHeap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
            stim,
        }
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn i_syn(&self) -> f64 {
        self.i_syn
    }

    /// Constant extra drive, used by calibration and tests.
    pub fn set_external_drive(&mut self, i: f64) {
        self.external_drive = i;
    }

    /// Schedule the EPSC burst encoding a stimulation weight byte: a regular
    /// spike train at the weight-mapped frequency for the burst duration,
    /// starting immediately. Each burst spike adds one EPSC quantum.
    pub fn on_stimulation(&mut self, weight_byte: u8, now_us: u64) {
        let w = byte_to_weight(weight_byte);
        let rate_hz = weight_to_burst_rate(w, self.stim.f_min_hz, self.stim.f_max_hz);
        if rate_hz <= 0.0 {
            return;
        }
        let period_us = 1_000_000.0 / rate_hz;
        let dur_us = self.stim.burst_duration_ms * 1000.0;
        let mut k = 0u32;
        loop {
            let offset = k as f64 * period_us;
            if offset >= dur_us {
                break;
            }
            self.burst_queue
                .push(Reverse(now_us + offset.round() as u64));
            k += 1;
        }
    }

    /// Advance the neuron by one Euler step ending at `now_us`. Returns true
    /// when a spike is emitted at this step.
    pub fn step(&mut self, now_us: u64) -> bool {
        let dt = self.cfg.dt_ms;
        while let Some(&Reverse(t)) = self.burst_queue.peek() {
            if t <= now_us {
                self.burst_queue.pop();
                self.i_syn += self.stim.epsc_quantum;
            } else {
                break;
            }
        }
        self.i_syn *= (-dt / self.cfg.tau_syn_ms).exp();

        // Adaptation integrates through refractoriness; the membrane is held.
        let dw =
            (self.cfg.adapt_a * (self.v - self.cfg.v_rest) - self.w_adapt) * dt / self.cfg.tau_w_ms;
        self.w_adapt += dw;

        if now_us < self.refractory_until_us {
            self.v = self.cfg.v_reset;
            return false;
        }

        let noise = if self.cfg.i_noise_sigma > 0.0 {
            Normal::new(0.0, self.cfg.i_noise_sigma)
                .expect("valid sigma")
                .sample(&mut self.rng)
        } else {
            0.0
        };
        let exp_arg = ((self.v - self.cfg.v_threshold) / self.cfg.delta_t).min(30.0);
        let dv = (-(self.v - self.cfg.v_rest) + self.cfg.delta_t * exp_arg.exp() - self.w_adapt
            + self.cfg.i_background
            + self.external_drive
            + noise
            + self.i_syn)
            * dt
            / self.cfg.tau_m_ms;
        self.v += dv;

        if self.v >= self.cfg.v_cutoff {
            self.v = self.cfg.v_reset;
            self.w_adapt += self.cfg.adapt_b;
            self.refractory_until_us = now_us + (self.cfg.t_refractory_ms * 1000.0) as u64;
            return true;
        }
        false
    }
}

/// Row of a per-node spike log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalSpike {
    pub time_ms: u64,
    pub neuron_id: u32,
}

/// Minimum spacing between consecutive emissions of the primary node.
///
/// The general-relative chain survives link jitter only while packets cannot
/// reorder, which per-link holds when inter-send gaps exceed twice the
/// worst-case jitter (2 ms measured). Forced spikes define the grid; the
/// postsynaptic neuron's emissions are deferred out of the exclusion window
/// around it. The spike itself is not moved, only its report.
pub const EMIT_MIN_GAP_US: u64 = 5_000;

/// The primary node event loop: forced spikes, neuron integration, spike
/// emission and inbound stimulation handling.
pub struct PrimaryNode {
    ids: NodeIds,
    tags: RoleTags,
    clock: PrimaryClock,
    neuron: AdaptiveNeuron,
    forced_us: Vec<u64>,
    next_forced: usize,
    dt_us: u64,
    duration_us: u64,
    last_emit_us: Option<u64>,
    spike_log: Vec<LocalSpike>,
}

impl PrimaryNode {
    pub fn new(
        ids: NodeIds,
        tags: RoleTags,
        schedule: &ScheduleConfig,
        neuron_cfg: NeuronConfig,
        stim_cfg: StimConfig,
        duration_us: u64,
        seed: u64,
    ) -> Self {
        PrimaryNode {
            ids,
            tags,
            clock: PrimaryClock::new(),
            neuron: AdaptiveNeuron::new(neuron_cfg, stim_cfg, seed),
            forced_us: forced_spike_times_us(schedule),
            next_forced: 0,
            dt_us: (neuron_cfg.dt_ms * 1000.0).round() as u64,
            duration_us,
            last_emit_us: None,
            spike_log: Vec::new(),
        }
    }

    pub fn spike_log(&self) -> &[LocalSpike] {
        &self.spike_log
    }

    fn emit(&mut self, neuron_id: u32, now_us: u64, out: &mut Outbox) {
        let now_ms = now_us / 1000;
        let pkt = emit_spike_packet(neuron_id, &mut self.clock, now_ms, &self.tags);
        out.send(PartnerRole::Synapse, pkt.encode());
        self.last_emit_us = Some(now_us);
        self.spike_log.push(LocalSpike {
            time_ms: now_ms,
            neuron_id,
        });
    }

    /// Earliest emission time at or after `want_us` that keeps the minimum
    /// spacing to the previous emission and to every forced-grid spike.
    fn free_emit_slot(&self, want_us: u64) -> u64 {
        let mut slot = match self.last_emit_us {
            Some(last) => want_us.max(last + EMIT_MIN_GAP_US),
            None => want_us,
        };
        loop {
            // First forced time beyond slot - gap; a conflict means it also
            // lies below slot + gap.
            let idx = self
                .forced_us
                .partition_point(|&f| f + EMIT_MIN_GAP_US <= slot);
            match self.forced_us.get(idx) {
                Some(&f) if f < slot + EMIT_MIN_GAP_US => slot = f + EMIT_MIN_GAP_US,
                _ => return slot,
            }
        }
    }

    /// Emit the postsynaptic neuron's spike now, or defer the report just
    /// past the exclusion window.
    fn emit_or_defer_anpost(&mut self, now_us: u64, out: &mut Outbox) {
        let slot = self.free_emit_slot(now_us);
        if slot <= now_us {
            self.emit(self.ids.anpost_id, now_us, out);
        } else {
            out.schedule_at(slot, TimerKind::DeferredEmit);
        }
    }
}

impl Node for PrimaryNode {
    fn role(&self) -> PartnerRole {
        PartnerRole::Primary
    }

    fn start(&mut self, now_us: u64, out: &mut Outbox) {
        for &t in &self.forced_us {
            out.schedule_at(t, TimerKind::ForcedSpike);
        }
        if self.dt_us > 0 && self.duration_us > 0 {
            out.schedule_at(now_us + self.dt_us, TimerKind::NeuronStep);
        }
    }

    fn on_packet(&mut self, now_us: u64, octets: &[u8], out: &mut Outbox) {
        let _ = out;
        let pkt = match AerPacket::decode(octets) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("primary could not decode datagram: {e}");
                return;
            }
        };
        if pkt.r1() != self.tags.synapse {
            log::warn!("primary ignoring packet with r1 {:#04x}", pkt.r1());
            return;
        }
        if pkt.neuron_id() != self.ids.anpost_id {
            log::warn!("primary has no neuron {} to stimulate", pkt.neuron_id());
            return;
        }
        self.neuron.on_stimulation(pkt.r2(), now_us);
    }

    fn on_timer(&mut self, now_us: u64, kind: TimerKind, out: &mut Outbox) {
        match kind {
            TimerKind::ForcedSpike => {
                debug_assert!(self.next_forced < self.forced_us.len());
                self.next_forced += 1;
                self.emit(self.ids.anpre_id, now_us, out);
            }
            TimerKind::NeuronStep => {
                if self.neuron.step(now_us) {
                    self.emit_or_defer_anpost(now_us, out);
                }
                let next = now_us + self.dt_us;
                if next <= self.duration_us {
                    out.schedule_at(next, TimerKind::NeuronStep);
                }
            }
            TimerKind::DeferredEmit => {
                // A forced emission may have landed in between; re-check.
                self.emit_or_defer_anpost(now_us, out);
            }
            TimerKind::Spontaneous => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Phase;

    fn schedule(phases: &[(f64, f64)]) -> ScheduleConfig {
        ScheduleConfig {
            phases: phases
                .iter()
                .map(|&(rate_hz, duration_s)| Phase {
                    rate_hz,
                    duration_s,
                })
                .collect(),
        }
    }

    #[test]
    fn canned_schedule_spike_count() {
        let s = schedule(&[(10.0, 20.0), (25.0, 20.0), (10.0, 20.0), (4.0, 40.0)]);
        let times = forced_spike_times_us(&s);
        assert_eq!(times.len(), 1060);
        assert_eq!(times.first(), Some(&100_000));
        assert_eq!(times.last(), Some(&100_000_000));
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_phase_periodic() {
        let times = forced_spike_times_us(&schedule(&[(1.0, 3.0)]));
        assert_eq!(times, vec![1_000_000, 2_000_000, 3_000_000]);
    }

    #[test]
    fn empty_schedule_no_spikes() {
        assert!(forced_spike_times_us(&ScheduleConfig::default()).is_empty());
    }

    #[test]
    fn first_session_spike_carries_its_own_time() {
        let mut clock = PrimaryClock::new();
        let pkt = emit_spike_packet(7, &mut clock, 0, &RoleTags::default());
        assert_eq!(pkt.timestamp(), 0);
    }

    #[test]
    fn worked_chain_example() {
        let mut clock = PrimaryClock::new();
        clock.emit(12_000);
        let pkt = emit_spike_packet(2, &mut clock, 12_012, &RoleTags::default());
        assert_eq!(pkt.timestamp(), 12);
    }

    #[test]
    fn interleaved_chain_uses_previous_spike_of_any_origin() {
        let mut clock = PrimaryClock::new();
        let tags = RoleTags::default();
        let a = emit_spike_packet(1, &mut clock, 100, &tags);
        let b = emit_spike_packet(2, &mut clock, 140, &tags);
        let c = emit_spike_packet(1, &mut clock, 150, &tags);
        assert_eq!([a.timestamp(), b.timestamp(), c.timestamp()], [100, 40, 10]);
    }

    fn quiet_neuron() -> AdaptiveNeuron {
        let cfg = NeuronConfig {
            i_background: 0.0,
            i_noise_sigma: 0.0,
            ..Default::default()
        };
        AdaptiveNeuron::new(cfg, StimConfig::default(), 1)
    }

    #[test]
    fn rest_is_quiescent() {
        let mut n = quiet_neuron();
        let mut t = 0u64;
        for _ in 0..120_000 {
            t += 500;
            assert!(!n.step(t), "no spikes without drive");
        }
        assert!(
            (n.v() - (-70.0)).abs() < 1.0,
            "v stayed near rest: {}",
            n.v()
        );
    }

    #[test]
    fn spontaneous_rate_hits_configured_target() {
        let cfg = NeuronConfig::default();
        let mut n = AdaptiveNeuron::new(cfg, StimConfig::default(), 3);
        let mut t = 0u64;
        let mut spikes = 0u32;
        let steps = (60_000.0 / cfg.dt_ms) as u64;
        for _ in 0..steps {
            t += (cfg.dt_ms * 1000.0) as u64;
            if n.step(t) {
                spikes += 1;
            }
        }
        let rate = spikes as f64 / 60.0;
        let target = cfg.spont_target_hz;
        assert!(
            (rate - target).abs() <= 0.2 * target,
            "spontaneous rate {rate} Hz vs target {target} Hz"
        );
    }

    #[test]
    fn rate_is_monotone_in_sustained_drive() {
        let mut rates = Vec::new();
        for drive in [0.0, 5.0, 15.0] {
            let cfg = NeuronConfig::default();
            let mut n = AdaptiveNeuron::new(cfg, StimConfig::default(), 3);
            n.set_external_drive(drive);
            let mut t = 0u64;
            let mut spikes = 0u32;
            for _ in 0..((30_000.0 / cfg.dt_ms) as u64) {
                t += (cfg.dt_ms * 1000.0) as u64;
                if n.step(t) {
                    spikes += 1;
                }
            }
            rates.push(spikes as f64 / 30.0);
        }
        assert!(
            rates[0] <= rates[1] && rates[1] <= rates[2],
            "rates not monotone: {rates:?}"
        );
        assert!(rates[2] > rates[0], "drive had no effect: {rates:?}");
    }

    #[test]
    fn refractory_separates_spikes() {
        let cfg = NeuronConfig::default();
        let mut n = AdaptiveNeuron::new(cfg, StimConfig::default(), 5);
        n.set_external_drive(200.0); // drive it hard
        let mut t = 0u64;
        let mut spike_times = Vec::new();
        for _ in 0..40_000 {
            t += 500;
            if n.step(t) {
                spike_times.push(t);
            }
        }
        assert!(spike_times.len() > 10);
        let min_gap = spike_times.windows(2).map(|w| w[1] - w[0]).min().unwrap();
        assert!(
            min_gap >= (cfg.t_refractory_ms * 1000.0) as u64,
            "gap {min_gap} below refractory"
        );
    }

    #[test]
    fn zero_weight_with_zero_floor_adds_no_current() {
        let stim = StimConfig {
            f_min_hz: 0.0,
            ..Default::default()
        };
        let cfg = NeuronConfig {
            i_background: 0.0,
            i_noise_sigma: 0.0,
            ..Default::default()
        };
        let mut n = AdaptiveNeuron::new(cfg, stim, 1);
        n.on_stimulation(0, 0);
        for k in 1..=1000 {
            n.step(k * 500);
        }
        assert_eq!(n.i_syn(), 0.0);
    }

    #[test]
    fn full_weight_burst_matches_decaying_sum() {
        let stim = StimConfig::default();
        let cfg = NeuronConfig {
            i_background: 0.0,
            i_noise_sigma: 0.0,
            ..Default::default()
        };
        let mut n = AdaptiveNeuron::new(cfg, stim, 1);
        n.on_stimulation(255, 0);
        let t_end_us = (stim.burst_duration_ms * 1000.0) as u64 + 500;
        let mut t = 0;
        while t < t_end_us {
            t += 500;
            n.step(t);
        }
        // Independent closed form: quanta at k/f_max for k*period < duration,
        // each decayed to t_end.
        let period_us = 1_000_000.0 / stim.f_max_hz;
        let mut expected = 0.0;
        let mut k = 0;
        loop {
            let at = k as f64 * period_us;
            if at >= stim.burst_duration_ms * 1000.0 {
                break;
            }
            expected += stim.epsc_quantum * (-((t as f64 - at) / 1000.0) / cfg.tau_syn_ms).exp();
            k += 1;
        }
        let got = n.i_syn();
        assert!(
            (got - expected).abs() / expected < 0.02,
            "i_syn {got} vs closed form {expected}"
        );
    }

    #[test]
    fn overlapping_bursts_superpose() {
        let run = |second_burst: bool| {
            let stim = StimConfig::default();
            let cfg = NeuronConfig {
                i_background: 0.0,
                i_noise_sigma: 0.0,
                ..Default::default()
            };
            let mut n = AdaptiveNeuron::new(cfg, stim, 1);
            n.on_stimulation(255, 0);
            if second_burst {
                n.on_stimulation(255, 30_000);
            }
            let mut peak: f64 = 0.0;
            let mut t = 0;
            while t < 200_000 {
                t += 500;
                n.step(t);
                peak = peak.max(n.i_syn());
            }
            peak
        };
        assert!(run(true) > run(false));
    }
}
