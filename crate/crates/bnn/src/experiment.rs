//! Full-run orchestration over the virtual-time network: wires the three
//! nodes together, drives the forced schedule to completion, exports the
//! artifact CSVs and computes phase-by-phase summaries.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::artificial::{LocalSpike, PrimaryNode};
use crate::bio::{SecondaryEvent, SecondaryNode};
use crate::config::{derive_seed, load_connectome, ConfigError, RunConfig, TransportMode};
use crate::hub::{EventRecord, HubNode, HubState, PlasticityRecord};
use crate::node::{Node, Outbox};
use crate::plasticity::PlasticityDecision;
use crate::protocol::{EventKind, PartnerRole};
use crate::transport::sim::{Payload, SimScheduler};
use crate::transport::Link;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("failed to write artifacts: {0}")]
    OutputIo(#[from] std::io::Error),
    #[error("run_experiment drives sim mode only; start UDP nodes with run-hub / run-primary / run-secondary")]
    UdpModeNotOrchestrated,
    #[error("malformed artifact file {path}: {reason}")]
    MalformedArtifact { path: String, reason: String },
}

/// Everything a run leaves behind, in memory and on disk.
#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub events: Vec<EventRecord>,
    pub plasticity: Vec<PlasticityRecord>,
    pub primary_spikes: Vec<LocalSpike>,
    pub secondary_events: Vec<SecondaryEvent>,
    pub summary: Vec<PhaseSummary>,
}

struct Links {
    primary_to_hub: Link,
    hub_to_primary: Link,
    secondary_to_hub: Link,
    hub_to_secondary: Link,
}

impl Links {
    fn from_config(cfg: &RunConfig) -> Self {
        let seed = cfg.run.seed;
        Links {
            primary_to_hub: Link::from_config(
                &cfg.transport.primary_to_hub,
                derive_seed(seed, "link/primary_to_hub"),
            ),
            hub_to_primary: Link::from_config(
                &cfg.transport.hub_to_primary,
                derive_seed(seed, "link/hub_to_primary"),
            ),
            secondary_to_hub: Link::from_config(
                &cfg.transport.secondary_to_hub,
                derive_seed(seed, "link/secondary_to_hub"),
            ),
            hub_to_secondary: Link::from_config(
                &cfg.transport.hub_to_secondary,
                derive_seed(seed, "link/hub_to_secondary"),
            ),
        }
    }

    fn get_mut(&mut self, src: PartnerRole, dest: PartnerRole) -> Option<&mut Link> {
        match (src, dest) {
            (PartnerRole::Primary, PartnerRole::Synapse) => Some(&mut self.primary_to_hub),
            (PartnerRole::Synapse, PartnerRole::Primary) => Some(&mut self.hub_to_primary),
            (PartnerRole::Secondary, PartnerRole::Synapse) => Some(&mut self.secondary_to_hub),
            (PartnerRole::Synapse, PartnerRole::Secondary) => Some(&mut self.hub_to_secondary),
            _ => None,
        }
    }
}

struct World {
    primary: PrimaryNode,
    hub: HubNode,
    secondary: SecondaryNode,
    links: Links,
    sched: SimScheduler,
}

impl World {
    fn flush(&mut self, src: PartnerRole, out: Outbox) {
        let now = self.sched.virtual_now_us();
        for (dest, octets) in out.packets {
            match self.links.get_mut(src, dest) {
                Some(link) => {
                    self.sched.send(link, dest, octets, now);
                }
                None => log::warn!("no link from {src} to {dest}, dropping packet"),
            }
        }
        for (at_us, kind) in out.timers {
            self.sched
                .schedule(at_us, Payload::Timer { node: src, kind });
        }
    }

    fn node_mut(&mut self, role: PartnerRole) -> &mut dyn Node {
        match role {
            PartnerRole::Primary => &mut self.primary,
            PartnerRole::Synapse => &mut self.hub,
            PartnerRole::Secondary => &mut self.secondary,
        }
    }
}

/// Execute one full run on the virtual-time network and write all artifacts
/// into `out_dir`. A run is a pure function of its configuration.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<RunArtifacts, RunError> {
    if cfg.transport.mode != TransportMode::Sim {
        return Err(RunError::UdpModeNotOrchestrated);
    }
    cfg.validate()?;
    let matrix = load_connectome(&cfg.connectome)?;
    let tags = cfg.protocol.role_tags();
    let duration_us = cfg.duration_ms() * 1000;

    let mut world = World {
        primary: PrimaryNode::new(
            cfg.nodes,
            tags,
            &cfg.schedule,
            cfg.neuron,
            cfg.stim,
            duration_us,
            derive_seed(cfg.run.seed, "node/primary"),
        ),
        hub: HubNode::new(
            HubState::new(matrix, &cfg.memristor, cfg.bcm, tags, cfg.run.seed),
            tags,
        ),
        secondary: SecondaryNode::new(
            cfg.nodes,
            tags,
            cfg.bio,
            duration_us,
            derive_seed(cfg.run.seed, "node/secondary"),
        ),
        links: Links::from_config(cfg),
        sched: SimScheduler::new(),
    };

    for role in [
        PartnerRole::Primary,
        PartnerRole::Synapse,
        PartnerRole::Secondary,
    ] {
        let mut out = Outbox::default();
        world.node_mut(role).start(0, &mut out);
        world.flush(role, out);
    }

    while let Some(delivery) = world.sched.pop_due(duration_us) {
        let (role, action): (PartnerRole, _) = match delivery.payload {
            Payload::Packet { dest, octets } => (dest, Ok(octets)),
            Payload::Timer { node, kind } => (node, Err(kind)),
        };
        let mut out = Outbox::default();
        match action {
            Ok(octets) => world
                .node_mut(role)
                .on_packet(delivery.at_us, &octets, &mut out),
            Err(kind) => world
                .node_mut(role)
                .on_timer(delivery.at_us, kind, &mut out),
        }
        world.flush(role, out);
    }
    world.sched.finish_at(duration_us);

    let hub_state = world.hub.into_state();
    std::fs::create_dir_all(out_dir)?;
    hub_state.export_log(out_dir)?;
    write_local_spikes_csv(
        world.primary.spike_log(),
        &out_dir.join("primary_spikes.csv"),
    )?;
    write_secondary_events_csv(
        world.secondary.event_log(),
        &out_dir.join("secondary_spikes.csv"),
    )?;

    let summary = summarize(cfg, hub_state.events(), hub_state.plasticity());
    write_summary_csv(&summary, &out_dir.join("summary.csv"))?;

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        events: hub_state.events().to_vec(),
        plasticity: hub_state.plasticity().to_vec(),
        primary_spikes: world.primary.spike_log().to_vec(),
        secondary_events: world.secondary.event_log().to_vec(),
        summary,
    })
}

/// Per-synapse decision statistics within one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SynapsePhaseStats {
    pub synapse_id: String,
    pub n_ltp: usize,
    pub n_ltd: usize,
    pub n_none: usize,
    pub mean_weight: f64,
}

impl SynapsePhaseStats {
    pub fn total(&self) -> usize {
        self.n_ltp + self.n_ltd + self.n_none
    }

    pub fn fractions(&self) -> (f64, f64, f64) {
        let n = self.total();
        if n == 0 {
            return (0.0, 0.0, 0.0);
        }
        (
            self.n_ltp as f64 / n as f64,
            self.n_ltd as f64 / n as f64,
            self.n_none as f64 / n as f64,
        )
    }

    /// Decision with the highest count; ties resolve LTP > LTD > NoChange.
    pub fn majority(&self) -> PlasticityDecision {
        if self.n_ltp >= self.n_ltd && self.n_ltp >= self.n_none {
            PlasticityDecision::Ltp
        } else if self.n_ltd >= self.n_none {
            PlasticityDecision::Ltd
        } else {
            PlasticityDecision::NoChange
        }
    }
}

/// Summary of one schedule phase. Phase boundaries are annotated from the
/// schedule itself, never inferred from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSummary {
    pub index: usize,
    pub start_ms: u64,
    pub end_ms: u64,
    pub sched_rate_hz: f64,
    pub synapses: Vec<SynapsePhaseStats>,
    pub bn_ap_count: usize,
    pub anpost_rate_hz: f64,
}

fn phase_of(t_ms: u64, boundaries: &[u64]) -> Option<usize> {
    if boundaries.len() < 2 {
        return None;
    }
    let total = *boundaries.last().unwrap();
    if t_ms >= total {
        // The final instant belongs to the last phase.
        return if t_ms == total {
            Some(boundaries.len() - 2)
        } else {
            None
        };
    }
    Some(boundaries.partition_point(|&b| b <= t_ms) - 1)
}

/// Phase-by-phase statistics of a finished run.
pub fn summarize(
    cfg: &RunConfig,
    events: &[EventRecord],
    plasticity: &[PlasticityRecord],
) -> Vec<PhaseSummary> {
    let boundaries = cfg.schedule.boundaries_ms();
    let n_phases = cfg.schedule.phases.len();
    let synapse_ids: Vec<String> = {
        let mut ids: Vec<String> = cfg.connectome.iter().map(|e| e.synapse.clone()).collect();
        ids.sort();
        ids
    };

    let mut summaries: Vec<PhaseSummary> = (0..n_phases)
        .map(|i| PhaseSummary {
            index: i,
            start_ms: boundaries[i],
            end_ms: boundaries[i + 1],
            sched_rate_hz: cfg.schedule.phases[i].rate_hz,
            synapses: synapse_ids
                .iter()
                .map(|s| SynapsePhaseStats {
                    synapse_id: s.clone(),
                    n_ltp: 0,
                    n_ltd: 0,
                    n_none: 0,
                    mean_weight: f64::NAN,
                })
                .collect(),
            bn_ap_count: 0,
            anpost_rate_hz: 0.0,
        })
        .collect();

    // Decision counts and per-phase weight means.
    let mut weight_sums: Vec<Vec<(f64, usize)>> = vec![vec![(0.0, 0); synapse_ids.len()]; n_phases];
    let mut sorted_plast: Vec<&PlasticityRecord> = plasticity.iter().collect();
    sorted_plast.sort_by_key(|r| r.abs_time_ms);
    for rec in &sorted_plast {
        let Some(phase) = phase_of(rec.abs_time_ms, &boundaries) else {
            continue;
        };
        let Some(si) = synapse_ids.iter().position(|s| *s == rec.synapse_id) else {
            continue;
        };
        let stats = &mut summaries[phase].synapses[si];
        match rec.decision {
            PlasticityDecision::Ltp => stats.n_ltp += 1,
            PlasticityDecision::Ltd => stats.n_ltd += 1,
            PlasticityDecision::NoChange => stats.n_none += 1,
        }
        let (sum, n) = &mut weight_sums[phase][si];
        *sum += rec.weight_after;
        *n += 1;
    }
    // Phases without plasticity rows carry the last weight seen (or the
    // configured initial weight before any event).
    let mut last_weight: Vec<f64> = synapse_ids
        .iter()
        .map(|s| cfg.memristor.initial_weight_of(s))
        .collect();
    for phase in 0..n_phases {
        for si in 0..synapse_ids.len() {
            let (sum, n) = weight_sums[phase][si];
            let mean = if n > 0 {
                sum / n as f64
            } else {
                last_weight[si]
            };
            summaries[phase].synapses[si].mean_weight = mean;
            if let Some(rec) = sorted_plast.iter().rfind(|r| {
                r.synapse_id == synapse_ids[si]
                    && phase_of(r.abs_time_ms, &boundaries) == Some(phase)
            }) {
                last_weight[si] = rec.weight_after;
            }
        }
    }

    for ev in events {
        let Some(phase) = phase_of(ev.abs_time_ms, &boundaries) else {
            continue;
        };
        if ev.neuron_id == cfg.nodes.bn_id
            && matches!(ev.kind, EventKind::ForcedAp | EventKind::SpontaneousAp)
        {
            summaries[phase].bn_ap_count += 1;
        }
        if ev.neuron_id == cfg.nodes.anpost_id && ev.source == PartnerRole::Primary {
            summaries[phase].anpost_rate_hz += 1.0;
        }
    }
    for s in &mut summaries {
        let len_s = (s.end_ms - s.start_ms) as f64 / 1000.0;
        if len_s > 0.0 {
            s.anpost_rate_hz /= len_s;
        }
    }
    summaries
}

pub fn write_summary_csv(summary: &[PhaseSummary], path: &Path) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "phase,start_ms,end_ms,sched_rate_hz,synapse_id,n_ltp,n_ltd,n_none,frac_ltp,frac_ltd,frac_none,mean_weight,bn_ap_count,anpost_rate_hz"
    )?;
    for s in summary {
        for syn in &s.synapses {
            let (fp, fd, fn_) = syn.fractions();
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{:.6},{},{:.4}",
                s.index,
                s.start_ms,
                s.end_ms,
                s.sched_rate_hz,
                syn.synapse_id,
                syn.n_ltp,
                syn.n_ltd,
                syn.n_none,
                fp,
                fd,
                fn_,
                syn.mean_weight,
                s.bn_ap_count,
                s.anpost_rate_hz
            )?;
        }
    }
    f.flush()
}

fn write_local_spikes_csv(spikes: &[LocalSpike], path: &Path) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "time_ms,neuron_id,kind")?;
    for s in spikes {
        writeln!(f, "{},{},ap", s.time_ms, s.neuron_id)?;
    }
    f.flush()
}

fn write_secondary_events_csv(events: &[SecondaryEvent], path: &Path) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "time_ms,neuron_id,kind")?;
    for e in events {
        writeln!(f, "{},{},{}", e.time_ms, e.neuron_id, e.kind.as_str())?;
    }
    f.flush()
}

/// Reload the hub event stream from an exported `events.csv`.
pub fn read_events_csv(path: &Path) -> Result<Vec<EventRecord>, RunError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let malformed = |reason: &str| RunError::MalformedArtifact {
            path: path.display().to_string(),
            reason: format!("line {}: {}", i + 1, reason),
        };
        if fields.len() != 4 {
            return Err(malformed("expected 4 fields"));
        }
        let abs_time_ms = fields[0].parse().map_err(|_| malformed("bad time"))?;
        let neuron_id = fields[1].parse().map_err(|_| malformed("bad neuron id"))?;
        let source = match fields[2] {
            "primary" => PartnerRole::Primary,
            "secondary" => PartnerRole::Secondary,
            "synapse" => PartnerRole::Synapse,
            _ => return Err(malformed("bad source")),
        };
        let kind = match fields[3] {
            "ap" => EventKind::Unused,
            "psp" => EventKind::Psp,
            "forced_ap" => EventKind::ForcedAp,
            "spontaneous_ap" => EventKind::SpontaneousAp,
            _ => return Err(malformed("bad kind")),
        };
        out.push(EventRecord {
            abs_time_ms,
            neuron_id,
            source,
            kind,
        });
    }
    Ok(out)
}

/// Reload the plasticity stream from an exported `plasticity.csv`.
pub fn read_plasticity_csv(path: &Path) -> Result<Vec<PlasticityRecord>, RunError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let malformed = |reason: &str| RunError::MalformedArtifact {
            path: path.display().to_string(),
            reason: format!("line {}: {}", i + 1, reason),
        };
        if fields.len() != 4 {
            return Err(malformed("expected 4 fields"));
        }
        out.push(PlasticityRecord {
            abs_time_ms: fields[0].parse().map_err(|_| malformed("bad time"))?,
            synapse_id: fields[1].to_string(),
            decision: PlasticityDecision::parse(fields[2])
                .ok_or_else(|| malformed("bad decision"))?,
            weight_after: fields[3].parse().map_err(|_| malformed("bad weight"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::canned_config;

    #[test]
    fn zero_duration_schedule_yields_empty_artifacts() {
        let mut cfg = canned_config();
        cfg.schedule.phases.clear();
        let dir = tempfile::tempdir().unwrap();
        let art = run_experiment(&cfg, dir.path()).unwrap();
        assert!(art.events.is_empty());
        assert!(art.plasticity.is_empty());
        assert!(art.summary.is_empty());
        for file in [
            "events.csv",
            "plasticity.csv",
            "primary_spikes.csv",
            "secondary_spikes.csv",
            "summary.csv",
        ] {
            let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
            assert_eq!(text.lines().count(), 1, "{file} should be header-only");
        }
    }

    #[test]
    fn udp_mode_is_not_orchestrated_here() {
        let mut cfg = canned_config();
        cfg.transport.mode = TransportMode::Udp;
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            run_experiment(&cfg, dir.path()),
            Err(RunError::UdpModeNotOrchestrated)
        ));
    }

    #[test]
    fn summarize_counting_oracle() {
        let cfg = canned_config();
        let plast: Vec<PlasticityRecord> = [
            (1000, PlasticityDecision::Ltp),
            (2000, PlasticityDecision::Ltp),
            (3000, PlasticityDecision::Ltp),
            (4000, PlasticityDecision::Ltd),
        ]
        .into_iter()
        .map(|(t, d)| PlasticityRecord {
            abs_time_ms: t,
            synapse_id: "ABm".into(),
            decision: d,
            weight_after: 0.5,
        })
        .collect();
        let summary = summarize(&cfg, &[], &plast);
        let abm = &summary[0].synapses[0];
        assert_eq!(abm.synapse_id, "ABm");
        let (fp, fd, fn_) = abm.fractions();
        assert_eq!((fp, fd, fn_), (0.75, 0.25, 0.0));
        // A phase with no decisions reports zero fractions.
        let abm3 = &summary[3].synapses[0];
        assert_eq!(abm3.fractions(), (0.0, 0.0, 0.0));
        // Weight carries forward into empty phases.
        assert_eq!(abm3.mean_weight, 0.5);
    }

    #[test]
    fn all_nochange_phase_fractions() {
        let cfg = canned_config();
        let plast: Vec<PlasticityRecord> = (1..=10)
            .map(|k| PlasticityRecord {
                abs_time_ms: k * 100,
                synapse_id: "BAm".into(),
                decision: PlasticityDecision::NoChange,
                weight_after: 0.4,
            })
            .collect();
        let summary = summarize(&cfg, &[], &plast);
        let bam = summary[0]
            .synapses
            .iter()
            .find(|s| s.synapse_id == "BAm")
            .unwrap();
        assert_eq!(bam.fractions(), (0.0, 0.0, 1.0));
        assert_eq!(bam.majority(), PlasticityDecision::NoChange);
    }

    #[test]
    fn phase_attribution_boundaries() {
        let cfg = canned_config();
        let b = cfg.schedule.boundaries_ms();
        assert_eq!(b, vec![0, 20_000, 40_000, 60_000, 100_000]);
        assert_eq!(phase_of(0, &b), Some(0));
        assert_eq!(phase_of(19_999, &b), Some(0));
        assert_eq!(phase_of(20_000, &b), Some(1));
        assert_eq!(phase_of(99_999, &b), Some(3));
        assert_eq!(phase_of(100_000, &b), Some(3));
        assert_eq!(phase_of(100_001, &b), None);
    }

    #[test]
    fn artifact_round_trip_through_csv() {
        let mut cfg = canned_config();
        cfg.schedule.phases.truncate(1);
        cfg.schedule.phases[0].duration_s = 3.0;
        let dir = tempfile::tempdir().unwrap();
        let art = run_experiment(&cfg, dir.path()).unwrap();
        let events = read_events_csv(&dir.path().join("events.csv")).unwrap();
        assert_eq!(events.len(), art.events.len());
        let plast = read_plasticity_csv(&dir.path().join("plasticity.csv")).unwrap();
        assert_eq!(plast.len(), art.plasticity.len());
        // Timestamps non-decreasing within each exported file.
        assert!(events
            .windows(2)
            .all(|w| w[0].abs_time_ms <= w[1].abs_time_ms));
        assert!(plast
            .windows(2)
            .all(|w| w[0].abs_time_ms <= w[1].abs_time_ms));
        // Every plasticity row references a synapse of the connectome.
        assert!(plast
            .iter()
            .all(|r| cfg.connectome.iter().any(|e| e.synapse == r.synapse_id)));
    }
}
