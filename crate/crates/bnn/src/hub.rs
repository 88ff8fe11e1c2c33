//! The synapse hub: receives every spike packet, normalizes its timing onto
//! the absolute axis, consults the connectome, evaluates the BCM rule,
//! programs the memristive devices and emits weighted stimulation packets.
//! Devices are always programmed before the outgoing weight byte is read, so
//! stimulation reflects the plasticity triggered by the same inbound spike.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::config::{derive_seed, ConnectivityMatrix, MemristorConfig, Pathway};
use crate::memristor::{weight_to_byte, MemristorDevice, PulseDirection};
use crate::node::{Node, Outbox, TimerKind};
use crate::plasticity::{
    bcm_decide, estimate_rate, BcmThresholds, PlasticityDecision, SpikeHistory,
};
use crate::protocol::{AerPacket, EventKind, PartnerRole, RoleTags};
use crate::timekeeping::{to_wire_ms, HubClock};

/// A hub-normalized event on the absolute time axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub abs_time_ms: u64,
    pub neuron_id: u32,
    pub source: PartnerRole,
    pub kind: EventKind,
}

/// One plasticity evaluation and its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasticityRecord {
    pub abs_time_ms: u64,
    pub synapse_id: String,
    pub decision: PlasticityDecision,
    pub weight_after: f64,
}

/// Complete hub state: connectome, devices, spike histories, clock and the
/// append-only event/plasticity logs.
pub struct HubState {
    matrix: ConnectivityMatrix,
    devices: BTreeMap<String, MemristorDevice>,
    histories: BTreeMap<u32, SpikeHistory>,
    clock: HubClock,
    thresholds: BcmThresholds,
    tags: RoleTags,
    events: Vec<EventRecord>,
    plasticity: Vec<PlasticityRecord>,
    accepted_packets: u64,
}

impl HubState {
    pub fn new(
        matrix: ConnectivityMatrix,
        memristor_cfg: &MemristorConfig,
        thresholds: BcmThresholds,
        tags: RoleTags,
        seed: u64,
    ) -> Self {
        let mut devices = BTreeMap::new();
        for entry in matrix.entries() {
            devices.insert(
                entry.synapse.clone(),
                MemristorDevice::new(
                    memristor_cfg.initial_weight_of(&entry.synapse),
                    memristor_cfg.params,
                    derive_seed(seed, &format!("memristor/{}", entry.synapse)),
                ),
            );
        }
        HubState {
            matrix,
            devices,
            histories: BTreeMap::new(),
            clock: HubClock::new(),
            thresholds,
            tags,
            events: Vec::new(),
            plasticity: Vec::new(),
            accepted_packets: 0,
        }
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn plasticity(&self) -> &[PlasticityRecord] {
        &self.plasticity
    }

    pub fn accepted_packets(&self) -> u64 {
        self.accepted_packets
    }

    pub fn weight_of(&self, synapse_id: &str) -> Option<f64> {
        self.devices.get(synapse_id).map(|d| d.weight())
    }

    pub fn clock(&self) -> &HubClock {
        &self.clock
    }

    /// Process one inbound packet. `local_now_ms` is the hub's own clock at
    /// arrival (wall time over UDP, virtual time in simulation); the returned
    /// packets are the stimulations to relay, addressed by partner role.
    pub fn on_packet(
        &mut self,
        pkt: &AerPacket,
        source: PartnerRole,
        local_now_ms: u64,
    ) -> Vec<(PartnerRole, AerPacket)> {
        self.clock.observe_local(local_now_ms);

        let kind = match EventKind::from_r2(source, pkt.r2()) {
            Ok(k) => k,
            Err(e) => {
                log::warn!("dropping packet from {source}: {e}");
                return Vec::new();
            }
        };

        let abs_ms = match source {
            PartnerRole::Primary => self.clock.primary_to_absolute(pkt.timestamp()),
            PartnerRole::Secondary => self.clock.secondary_to_absolute(pkt.timestamp()),
            PartnerRole::Synapse => {
                log::warn!("hub received a synapse-tagged packet, dropping");
                return Vec::new();
            }
        };

        let neuron_id = pkt.neuron_id();
        self.accepted_packets += 1;
        self.events.push(EventRecord {
            abs_time_ms: abs_ms,
            neuron_id,
            source,
            kind,
        });

        // Sub-threshold events are recorded but drive no plasticity and no
        // stimulation; the BCM rule is defined on spiking.
        if kind == EventKind::Psp {
            return Vec::new();
        }

        if !self.matrix.knows_neuron(neuron_id) {
            log::warn!("spike from neuron {neuron_id} absent from connectome, emitting nothing");
            return Vec::new();
        }

        let window_ms = self.thresholds.window_ms;
        self.histories
            .entry(neuron_id)
            .or_insert_with(|| SpikeHistory::new(window_ms))
            .record(abs_ms);

        let mut outbound = Vec::new();

        // Pass 1: entries where the firing neuron is presynaptic. Forward
        // entries evaluate on the presynaptic rate alone; every entry then
        // relays one stimulation packet carrying the post-update weight.
        for entry in self.matrix.entries() {
            if entry.pre != neuron_id {
                continue;
            }
            if entry.pathway == Pathway::Forward {
                let rate = estimate_rate(&self.histories[&neuron_id], abs_ms);
                let decision = bcm_decide(rate, &self.thresholds);
                let device = self
                    .devices
                    .get_mut(&entry.synapse)
                    .expect("device exists for every connectome entry");
                if let Some(dir) = PulseDirection::from_decision(decision) {
                    device.apply_pulse(dir);
                }
                self.plasticity.push(PlasticityRecord {
                    abs_time_ms: abs_ms,
                    synapse_id: entry.synapse.clone(),
                    decision,
                    weight_after: device.weight(),
                });
            }
            let weight = self.devices[&entry.synapse].weight();
            let stim = AerPacket::new(
                self.tags.tag_of(PartnerRole::Synapse),
                entry.post,
                weight_to_byte(weight),
                to_wire_ms(abs_ms),
            )
            .expect("stimulation fields are in range");
            outbound.push((PartnerRole::from(entry.post_partner), stim));
        }

        // Pass 2: reverse entries gated by this neuron firing postsynaptically.
        for entry in self.matrix.entries() {
            if entry.post != neuron_id || entry.pathway != Pathway::Reverse {
                continue;
            }
            let rate = match self.histories.get(&entry.pre) {
                Some(h) => estimate_rate(h, abs_ms),
                None => 0.0,
            };
            let decision = bcm_decide(rate, &self.thresholds);
            let device = self
                .devices
                .get_mut(&entry.synapse)
                .expect("device exists for every connectome entry");
            if let Some(dir) = PulseDirection::from_decision(decision) {
                device.apply_pulse(dir);
            }
            self.plasticity.push(PlasticityRecord {
                abs_time_ms: abs_ms,
                synapse_id: entry.synapse.clone(),
                decision,
                weight_after: device.weight(),
            });
        }

        outbound
    }

    /// Write the two log streams as CSV, each sorted by absolute time with
    /// processing order breaking ties.
    pub fn export_log(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_events_csv(&self.events, &dir.join("events.csv"))?;
        write_plasticity_csv(&self.plasticity, &dir.join("plasticity.csv"))?;
        Ok(())
    }
}

pub fn write_events_csv(events: &[EventRecord], path: &Path) -> std::io::Result<()> {
    let mut rows: Vec<&EventRecord> = events.iter().collect();
    rows.sort_by_key(|r| r.abs_time_ms);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "abs_time_ms,neuron_id,source,kind")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{}",
            r.abs_time_ms,
            r.neuron_id,
            r.source.as_str(),
            r.kind.as_str()
        )?;
    }
    f.flush()
}

pub fn write_plasticity_csv(records: &[PlasticityRecord], path: &Path) -> std::io::Result<()> {
    let mut rows: Vec<&PlasticityRecord> = records.iter().collect();
    rows.sort_by_key(|r| r.abs_time_ms);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "abs_time_ms,synapse_id,decision,weight_after")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{:.6}",
            r.abs_time_ms, r.synapse_id, r.decision, r.weight_after
        )?;
    }
    f.flush()
}

/// Hub node driving [`HubState`] inside an event loop.
pub struct HubNode {
    state: HubState,
    tags: RoleTags,
}

impl HubNode {
    pub fn new(state: HubState, tags: RoleTags) -> Self {
        HubNode { state, tags }
    }

    pub fn state(&self) -> &HubState {
        &self.state
    }

    pub fn into_state(self) -> HubState {
        self.state
    }
}

impl Node for HubNode {
    fn role(&self) -> PartnerRole {
        PartnerRole::Synapse
    }

    fn start(&mut self, _now_us: u64, _out: &mut Outbox) {}

    fn on_packet(&mut self, now_us: u64, octets: &[u8], out: &mut Outbox) {
        let pkt = match AerPacket::decode(octets) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("hub could not decode datagram: {e}");
                return;
            }
        };
        let source = match self.tags.role_of(pkt.r1()) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("hub dropping packet: {e}");
                return;
            }
        };
        for (dest, stim) in self.state.on_packet(&pkt, source, now_us / 1000) {
            out.send(dest, stim.encode());
        }
    }

    fn on_timer(&mut self, _now_us: u64, _kind: TimerKind, _out: &mut Outbox) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{canned_config, load_connectome};
    use crate::memristor::MemristorParams;

    fn hub_with(initial_ab: f64, initial_ba: f64, params: MemristorParams) -> HubState {
        let cfg = canned_config();
        let matrix = load_connectome(&cfg.connectome).unwrap();
        let mut mem = MemristorConfig {
            params,
            ..Default::default()
        };
        mem.initial_weight.insert("ABm".into(), initial_ab);
        mem.initial_weight.insert("BAm".into(), initial_ba);
        HubState::new(
            matrix,
            &mem,
            BcmThresholds::default(),
            RoleTags::default(),
            1,
        )
    }

    fn quiet_hub(initial_ab: f64, initial_ba: f64) -> HubState {
        hub_with(
            initial_ab,
            initial_ba,
            MemristorParams {
                noise_sigma: 0.0,
                ..Default::default()
            },
        )
    }

    fn primary_spike(id: u32, dt_ms: u32) -> AerPacket {
        AerPacket::new(RoleTags::default().primary, id, 0, dt_ms).unwrap()
    }

    #[test]
    fn anpre_spike_relays_weighted_stimulation() {
        // Zero step gains pin the weight at 0.6 through the 10 Hz ramp-up, so
        // the relayed byte is exactly the current weight.
        let mut hub = hub_with(
            0.6,
            0.5,
            MemristorParams {
                alpha_p: 0.0,
                alpha_d: 0.0,
                noise_sigma: 0.0,
            },
        );
        let mut out = Vec::new();
        for k in 1..=10u32 {
            out = hub.on_packet(
                &primary_spike(1, 100),
                PartnerRole::Primary,
                (k * 100) as u64,
            );
            assert_eq!(out.len(), 1, "one stimulation per forward entry");
        }
        let (dest, stim) = &out[0];
        assert_eq!(*dest, PartnerRole::Secondary);
        assert_eq!(stim.r1(), RoleTags::default().synapse);
        assert_eq!(stim.neuron_id(), 3);
        assert_eq!(stim.r2(), weight_to_byte(0.6));
        assert_eq!(stim.timestamp(), 1000);
        assert_eq!(hub.weight_of("ABm"), Some(0.6));
    }

    #[test]
    fn unknown_neuron_emits_nothing() {
        let mut hub = quiet_hub(0.5, 0.5);
        let out = hub.on_packet(&primary_spike(999, 5), PartnerRole::Primary, 5);
        assert!(out.is_empty());
        assert_eq!(hub.events().len(), 1);
        assert!(hub.plasticity().is_empty());
    }

    #[test]
    fn anpost_spike_with_silent_bn_depresses_bam_and_emits_nothing() {
        let mut hub = quiet_hub(0.3, 0.5);
        let out = hub.on_packet(&primary_spike(2, 1000), PartnerRole::Primary, 1000);
        assert!(out.is_empty(), "ANPOST has no postsynaptic targets");
        assert_eq!(hub.plasticity().len(), 1);
        let rec = &hub.plasticity()[0];
        assert_eq!(rec.synapse_id, "BAm");
        assert_eq!(rec.decision, PlasticityDecision::Ltd);
        assert!((rec.weight_after - 0.475).abs() < 1e-12);
        assert_eq!(hub.weight_of("BAm"), Some(0.475));
    }

    #[test]
    fn program_then_stimulate_ordering() {
        let mut hub = quiet_hub(0.5, 0.5);
        // Drive ANPRE above the LTP threshold: 25 spikes at 40 ms steps, the
        // relayed weight of the last packet must equal the post-pulse weight.
        let mut last = Vec::new();
        for _ in 0..25 {
            last = hub.on_packet(&primary_spike(1, 40), PartnerRole::Primary, 0);
        }
        let w_after = hub.weight_of("ABm").unwrap();
        assert_eq!(last[0].1.r2(), weight_to_byte(w_after));
        let rec = hub.plasticity().last().unwrap();
        assert_eq!(rec.decision, PlasticityDecision::Ltp);
        assert_eq!(rec.weight_after, w_after);
    }

    #[test]
    fn psp_events_are_logged_but_inert() {
        let mut hub = quiet_hub(0.5, 0.5);
        let psp = AerPacket::new(
            RoleTags::default().secondary,
            3,
            crate::protocol::R2_PSP,
            100,
        )
        .unwrap();
        let out = hub.on_packet(&psp, PartnerRole::Secondary, 100);
        assert!(out.is_empty());
        assert_eq!(hub.events().len(), 1);
        assert_eq!(hub.events()[0].kind, EventKind::Psp);
        assert!(hub.plasticity().is_empty());
        // The PSP never enters the BN spike history: a later ANPOST spike
        // still sees a silent presynaptic window.
        hub.on_packet(&primary_spike(2, 200), PartnerRole::Primary, 200);
        assert_eq!(hub.plasticity()[0].decision, PlasticityDecision::Ltd);
    }

    #[test]
    fn bn_ap_relays_to_anpost_with_bam_weight() {
        let mut hub = quiet_hub(0.3, 0.5);
        let ap = AerPacket::new(
            RoleTags::default().secondary,
            3,
            crate::protocol::R2_FORCED_AP,
            123,
        )
        .unwrap();
        let out = hub.on_packet(&ap, PartnerRole::Secondary, 150);
        assert_eq!(out.len(), 1);
        let (dest, stim) = &out[0];
        assert_eq!(*dest, PartnerRole::Primary);
        assert_eq!(stim.neuron_id(), 2);
        assert_eq!(stim.r2(), weight_to_byte(0.5));
        assert_eq!(stim.timestamp(), 123);
        // Reverse pathway did not evaluate: BN fired presynaptically.
        assert!(hub.plasticity().is_empty());
    }

    #[test]
    fn malformed_event_kind_is_dropped() {
        let mut hub = quiet_hub(0.5, 0.5);
        let bad = AerPacket::new(RoleTags::default().secondary, 3, 0x7F, 10).unwrap();
        let out = hub.on_packet(&bad, PartnerRole::Secondary, 10);
        assert!(out.is_empty());
        assert!(hub.events().is_empty());
    }

    #[test]
    fn one_outbound_packet_per_forward_entry() {
        use crate::config::{ConnectomeEntry, PostPartner};
        // One presynaptic neuron fanning out through two synapses.
        let entries = vec![
            ConnectomeEntry {
                pre: 1,
                synapse: "S1".into(),
                post: 3,
                post_partner: PostPartner::Secondary,
                pathway: Pathway::Forward,
            },
            ConnectomeEntry {
                pre: 1,
                synapse: "S2".into(),
                post: 4,
                post_partner: PostPartner::Secondary,
                pathway: Pathway::Forward,
            },
        ];
        let matrix = load_connectome(&entries).unwrap();
        let mut hub = HubState::new(
            matrix,
            &MemristorConfig::default(),
            BcmThresholds::default(),
            RoleTags::default(),
            1,
        );
        let out = hub.on_packet(&primary_spike(1, 100), PartnerRole::Primary, 100);
        assert_eq!(out.len(), 2);
        let ids: Vec<u32> = out.iter().map(|(_, p)| p.neuron_id()).collect();
        assert_eq!(ids, vec![3, 4]);
        assert_eq!(hub.plasticity().len(), 2);
    }

    #[test]
    fn log_length_counts_packets_and_evaluations() {
        let mut hub = quiet_hub(0.5, 0.5);
        for _ in 0..7 {
            hub.on_packet(&primary_spike(1, 100), PartnerRole::Primary, 0);
        }
        hub.on_packet(&primary_spike(2, 10), PartnerRole::Primary, 0);
        // 8 accepted packets, 7 forward + 1 reverse evaluations.
        assert_eq!(hub.accepted_packets(), 8);
        assert_eq!(hub.events().len(), 8);
        assert_eq!(hub.plasticity().len(), 8);
    }

    #[test]
    fn export_with_zero_packets_writes_headers_only() {
        let hub = quiet_hub(0.5, 0.5);
        let dir = tempfile::tempdir().unwrap();
        hub.export_log(dir.path()).unwrap();
        let events = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
        assert_eq!(events, "abs_time_ms,neuron_id,source,kind\n");
        let plast = std::fs::read_to_string(dir.path().join("plasticity.csv")).unwrap();
        assert_eq!(plast, "abs_time_ms,synapse_id,decision,weight_after\n");
    }

    #[test]
    fn export_single_nochange_spike() {
        let mut hub = hub_with(
            0.5,
            0.5,
            MemristorParams {
                alpha_p: 0.0,
                alpha_d: 0.0,
                noise_sigma: 0.0,
            },
        );
        // 10 Hz preload then inspect the last row only.
        for _ in 0..10 {
            hub.on_packet(&primary_spike(1, 100), PartnerRole::Primary, 0);
        }
        let dir = tempfile::tempdir().unwrap();
        hub.export_log(dir.path()).unwrap();
        let plast = std::fs::read_to_string(dir.path().join("plasticity.csv")).unwrap();
        let last = plast.lines().last().unwrap();
        assert_eq!(last, "1000,ABm,NoChange,0.500000");
        let events = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
        assert_eq!(events.lines().count(), 11);
        assert_eq!(events.lines().nth(1).unwrap(), "100,1,primary,ap");
    }
}
