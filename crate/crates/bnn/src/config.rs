//! Run configuration: one TOML file covers the whole stack — transport mode
//! and link profiles, protocol tags, node identities, the forced firing
//! schedule, plasticity thresholds, device and neuron parameters, and the
//! connectome.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memristor::MemristorParams;
use crate::plasticity::BcmThresholds;
use crate::protocol::{PartnerRole, RoleTags};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("duplicate synapse id {0:?} in connectome")]
    DuplicateSynapseId(String),
    #[error("connectome entry for synapse {0:?} is a self-loop (pre == post)")]
    SelfLoop(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    Sim,
    Udp,
}

/// Per-link delivery profile. A link either has a fixed static delay or draws
/// one once per run from `static_delay_range_ms` using the run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub static_delay_ms: Option<f64>,
    pub static_delay_range_ms: Option<[f64; 2]>,
    pub jitter_ms: f64,
    pub loss_prob: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            static_delay_ms: None,
            static_delay_range_ms: Some([10.0, 90.0]),
            jitter_ms: 2.0,
            loss_prob: 0.0,
        }
    }
}

impl LinkConfig {
    pub fn fixed(delay_ms: f64, jitter_ms: f64) -> Self {
        LinkConfig {
            static_delay_ms: Some(delay_ms),
            static_delay_range_ms: None,
            jitter_ms,
            loss_prob: 0.0,
        }
    }

    fn validate(&self, name: &str) -> Result<(), ConfigError> {
        if let Some(d) = self.static_delay_ms {
            if d < 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "link {name}: static_delay_ms must be >= 0"
                )));
            }
        }
        if let Some([lo, hi]) = self.static_delay_range_ms {
            if lo < 0.0 || hi < lo {
                return Err(ConfigError::Invalid(format!(
                    "link {name}: static_delay_range_ms must be an ascending non-negative pair"
                )));
            }
        }
        if self.jitter_ms < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "link {name}: jitter_ms must be >= 0"
            )));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(ConfigError::Invalid(format!(
                "link {name}: loss_prob must be in [0, 1]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub mode: TransportMode,
    pub primary_to_hub: LinkConfig,
    pub hub_to_primary: LinkConfig,
    pub secondary_to_hub: LinkConfig,
    pub hub_to_secondary: LinkConfig,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            mode: TransportMode::Sim,
            primary_to_hub: LinkConfig::default(),
            hub_to_primary: LinkConfig::default(),
            secondary_to_hub: LinkConfig::default(),
            hub_to_secondary: LinkConfig::default(),
        }
    }
}

impl TransportConfig {
    /// Replace every link with the same fixed profile.
    pub fn set_all_links(&mut self, link: LinkConfig) {
        self.primary_to_hub = link.clone();
        self.hub_to_primary = link.clone();
        self.secondary_to_hub = link.clone();
        self.hub_to_secondary = link;
    }
}

/// UDP-mode addressing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HubNetConfig {
    pub listen_port: u16,
    pub primary_addr: String,
    pub secondary_addr: String,
}

impl Default for HubNetConfig {
    fn default() -> Self {
        HubNetConfig {
            listen_port: 9700,
            primary_addr: "127.0.0.1:9701".into(),
            secondary_addr: "127.0.0.1:9702".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub primary_tag: u8,
    pub synapse_tag: u8,
    pub secondary_tag: u8,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        let tags = RoleTags::default();
        ProtocolConfig {
            primary_tag: tags.primary,
            synapse_tag: tags.synapse,
            secondary_tag: tags.secondary,
        }
    }
}

impl ProtocolConfig {
    pub fn role_tags(&self) -> RoleTags {
        RoleTags {
            primary: self.primary_tag,
            synapse: self.synapse_tag,
            secondary: self.secondary_tag,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeIds {
    pub anpre_id: u32,
    pub anpost_id: u32,
    pub bn_id: u32,
}

impl Default for NodeIds {
    fn default() -> Self {
        NodeIds {
            anpre_id: 1,
            anpost_id: 2,
            bn_id: 3,
        }
    }
}

/// One phase of the forced firing schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub rate_hz: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub phases: Vec<Phase>,
}

impl ScheduleConfig {
    pub fn total_duration_ms(&self) -> u64 {
        self.phases
            .iter()
            .map(|p| (p.duration_s * 1000.0).round() as u64)
            .sum()
    }

    /// Phase boundaries in ms: `[0, b1, ..., total]`.
    pub fn boundaries_ms(&self) -> Vec<u64> {
        let mut acc = 0u64;
        let mut out = vec![0u64];
        for p in &self.phases {
            acc += (p.duration_s * 1000.0).round() as u64;
            out.push(acc);
        }
        out
    }

    fn validate(&self) -> Result<(), ConfigError> {
        for (i, p) in self.phases.iter().enumerate() {
            if p.rate_hz <= 0.0 || p.duration_s <= 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "schedule phase {i}: rate_hz and duration_s must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Weight-to-stimulation conversion for the artificial side.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimConfig {
    #[serde(rename = "f_min")]
    pub f_min_hz: f64,
    #[serde(rename = "f_max")]
    pub f_max_hz: f64,
    pub burst_duration_ms: f64,
    pub epsc_quantum: f64,
}

impl Default for StimConfig {
    fn default() -> Self {
        StimConfig {
            f_min_hz: 10.0,
            f_max_hz: 200.0,
            burst_duration_ms: 50.0,
            epsc_quantum: 14.0,
        }
    }
}

/// Adaptive exponential integrate-and-fire parameters for the spontaneously
/// active artificial neuron.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronConfig {
    pub tau_m_ms: f64,
    pub tau_w_ms: f64,
    pub tau_syn_ms: f64,
    pub v_rest: f64,
    pub v_threshold: f64,
    pub v_reset: f64,
    pub v_cutoff: f64,
    pub delta_t: f64,
    pub adapt_a: f64,
    pub adapt_b: f64,
    pub t_refractory_ms: f64,
    pub dt_ms: f64,
    /// Constant background drive; calibrated so the free-running neuron fires
    /// near `spont_target_hz`.
    pub i_background: f64,
    pub i_noise_sigma: f64,
    pub spont_target_hz: f64,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        NeuronConfig {
            tau_m_ms: 20.0,
            tau_w_ms: 100.0,
            tau_syn_ms: 100.0,
            v_rest: -70.0,
            v_threshold: -50.0,
            v_reset: -58.0,
            v_cutoff: 0.0,
            delta_t: 2.0,
            adapt_a: 0.0,
            adapt_b: 150.0,
            t_refractory_ms: 5.0,
            dt_ms: 0.5,
            i_background: 20.475,
            i_noise_sigma: 0.2,
            spont_target_hz: 2.0,
        }
    }
}

/// Biological neuron behavioral parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BioConfig {
    pub ap_threshold_pulses: u32,
    pub psp_amp_max: f64,
    /// Multiplicative jitter on the effective pulse count per stimulus.
    pub jitter: f64,
    pub spont_rate_hz: f64,
    pub refractory_ms: f64,
    /// Leaky cross-stimulus summation of effective pulses; off by default.
    pub summation_mode: bool,
    pub summation_tau_ms: f64,
}

impl Default for BioConfig {
    fn default() -> Self {
        BioConfig {
            ap_threshold_pulses: 16,
            psp_amp_max: 1.0,
            jitter: 0.05,
            spont_rate_hz: 0.0,
            refractory_ms: 50.0,
            summation_mode: false,
            summation_tau_ms: 50.0,
        }
    }
}

impl BioConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if !(2..=16).contains(&self.ap_threshold_pulses) {
            return Err(ConfigError::Invalid(
                "bio.ap_threshold_pulses must lie in 2..=16".into(),
            ));
        }
        if self.spont_rate_hz < 0.0 || self.jitter < 0.0 || self.refractory_ms < 0.0 {
            return Err(ConfigError::Invalid(
                "bio rates, jitter and refractory must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemristorConfig {
    #[serde(flatten)]
    pub params: MemristorParams,
    /// Initial weight per synapse id; unlisted synapses start at 0.5.
    pub initial_weight: BTreeMap<String, f64>,
}

impl Default for MemristorConfig {
    fn default() -> Self {
        let mut initial_weight = BTreeMap::new();
        initial_weight.insert("ABm".to_string(), 0.3);
        initial_weight.insert("BAm".to_string(), 0.5);
        MemristorConfig {
            params: MemristorParams::default(),
            initial_weight,
        }
    }
}

impl MemristorConfig {
    pub fn initial_weight_of(&self, synapse_id: &str) -> f64 {
        self.initial_weight.get(synapse_id).copied().unwrap_or(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pathway {
    Forward,
    Reverse,
}

impl Pathway {
    pub fn as_str(&self) -> &'static str {
        match self {
            Pathway::Forward => "forward",
            Pathway::Reverse => "reverse",
        }
    }
}

/// Partner that hosts a postsynaptic neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostPartner {
    Primary,
    Secondary,
}

impl From<PostPartner> for PartnerRole {
    fn from(p: PostPartner) -> PartnerRole {
        match p {
            PostPartner::Primary => PartnerRole::Primary,
            PostPartner::Secondary => PartnerRole::Secondary,
        }
    }
}

/// One connectome entry: a presynaptic neuron wired through a memristive
/// synapse to a postsynaptic neuron hosted by `post_partner`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectomeEntry {
    pub pre: u32,
    pub synapse: String,
    pub post: u32,
    pub post_partner: PostPartner,
    pub pathway: Pathway,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 42,
            out_dir: "out".into(),
        }
    }
}

/// Complete configuration of one run. A seed plus this structure fully
/// determines a sim-mode run.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub transport: TransportConfig,
    pub hub: HubNetConfig,
    pub protocol: ProtocolConfig,
    pub nodes: NodeIds,
    pub schedule: ScheduleConfig,
    pub bcm: BcmThresholds,
    pub memristor: MemristorConfig,
    pub stim: StimConfig,
    pub neuron: NeuronConfig,
    pub bio: BioConfig,
    pub connectome: Vec<ConnectomeEntry>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.schedule.validate()?;
        self.bcm.validate().map_err(ConfigError::Invalid)?;
        self.bio.validate()?;
        for (name, link) in [
            ("primary_to_hub", &self.transport.primary_to_hub),
            ("hub_to_primary", &self.transport.hub_to_primary),
            ("secondary_to_hub", &self.transport.secondary_to_hub),
            ("hub_to_secondary", &self.transport.hub_to_secondary),
        ] {
            link.validate(name)?;
        }
        for (syn, &w) in &self.memristor.initial_weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(ConfigError::Invalid(format!(
                    "memristor.initial_weight.{syn} must lie in [0, 1]"
                )));
            }
        }
        load_connectome(&self.connectome)?;
        Ok(())
    }

    pub fn duration_ms(&self) -> u64 {
        self.schedule.total_duration_ms()
    }
}

/// Validated connectivity matrix with index maps for pre/post lookup.
#[derive(Debug, Clone, Default)]
pub struct ConnectivityMatrix {
    entries: Vec<ConnectomeEntry>,
}

impl ConnectivityMatrix {
    pub fn entries(&self) -> &[ConnectomeEntry] {
        &self.entries
    }

    /// All entries whose presynaptic neuron is `neuron_id` (possibly empty).
    pub fn pre_entries(&self, neuron_id: u32) -> impl Iterator<Item = &ConnectomeEntry> {
        self.entries.iter().filter(move |e| e.pre == neuron_id)
    }

    /// All entries whose postsynaptic neuron is `neuron_id` (possibly empty).
    pub fn post_entries(&self, neuron_id: u32) -> impl Iterator<Item = &ConnectomeEntry> {
        self.entries.iter().filter(move |e| e.post == neuron_id)
    }

    pub fn knows_neuron(&self, neuron_id: u32) -> bool {
        self.entries
            .iter()
            .any(|e| e.pre == neuron_id || e.post == neuron_id)
    }

    pub fn synapse_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.synapse.as_str()).collect()
    }
}

/// Build the connectivity matrix, rejecting duplicate synapse ids and
/// self-loops.
pub fn load_connectome(entries: &[ConnectomeEntry]) -> Result<ConnectivityMatrix, ConfigError> {
    let mut seen = std::collections::BTreeSet::new();
    for e in entries {
        if !seen.insert(e.synapse.as_str()) {
            return Err(ConfigError::DuplicateSynapseId(e.synapse.clone()));
        }
        if e.pre == e.post {
            return Err(ConfigError::SelfLoop(e.synapse.clone()));
        }
    }
    Ok(ConnectivityMatrix {
        entries: entries.to_vec(),
    })
}

/// Stable per-component sub-seed derivation (FNV-1a over the label, folded
/// into the run seed).
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    root ^ h
}

/// The experiment configuration shipped in-repo: four forced phases at
/// 10/25/10/4 Hz lasting 20/20/20/40 s over the two-synapse connectome.
pub fn canned_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.schedule.phases = vec![
        Phase {
            rate_hz: 10.0,
            duration_s: 20.0,
        },
        Phase {
            rate_hz: 25.0,
            duration_s: 20.0,
        },
        Phase {
            rate_hz: 10.0,
            duration_s: 20.0,
        },
        Phase {
            rate_hz: 4.0,
            duration_s: 40.0,
        },
    ];
    cfg.connectome = vec![
        ConnectomeEntry {
            pre: cfg.nodes.anpre_id,
            synapse: "ABm".into(),
            post: cfg.nodes.bn_id,
            post_partner: PostPartner::Secondary,
            pathway: Pathway::Forward,
        },
        ConnectomeEntry {
            pre: cfg.nodes.bn_id,
            synapse: "BAm".into(),
            post: cfg.nodes.anpost_id,
            post_partner: PostPartner::Primary,
            pathway: Pathway::Reverse,
        },
    ];
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canned_connectome_has_two_entries() {
        let cfg = canned_config();
        let matrix = load_connectome(&cfg.connectome).unwrap();
        assert_eq!(matrix.entries().len(), 2);
        let fwd = matrix.pre_entries(cfg.nodes.anpre_id).next().unwrap();
        assert_eq!(fwd.synapse, "ABm");
        assert_eq!(fwd.post, cfg.nodes.bn_id);
        assert_eq!(fwd.pathway, Pathway::Forward);
        let rev = matrix.pre_entries(cfg.nodes.bn_id).next().unwrap();
        assert_eq!(rev.synapse, "BAm");
        assert_eq!(rev.post, cfg.nodes.anpost_id);
        assert_eq!(rev.pathway, Pathway::Reverse);
    }

    #[test]
    fn empty_connectome_is_valid_and_empty() {
        let matrix = load_connectome(&[]).unwrap();
        assert!(matrix.entries().is_empty());
        assert!(!matrix.knows_neuron(1));
    }

    #[test]
    fn self_loop_rejected() {
        let entry = ConnectomeEntry {
            pre: 1,
            synapse: "X".into(),
            post: 1,
            post_partner: PostPartner::Secondary,
            pathway: Pathway::Forward,
        };
        assert!(matches!(
            load_connectome(&[entry]),
            Err(ConfigError::SelfLoop(_))
        ));
    }

    #[test]
    fn duplicate_synapse_rejected() {
        let mk = |pre, post| ConnectomeEntry {
            pre,
            synapse: "X".into(),
            post,
            post_partner: PostPartner::Secondary,
            pathway: Pathway::Forward,
        };
        assert!(matches!(
            load_connectome(&[mk(1, 2), mk(2, 3)]),
            Err(ConfigError::DuplicateSynapseId(_))
        ));
    }

    #[test]
    fn canned_round_trips_through_toml() {
        let cfg = canned_config();
        let text = toml::to_string(&cfg).unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.schedule.phases.len(), 4);
        assert_eq!(back.duration_ms(), 100_000);
        assert_eq!(back.memristor.initial_weight_of("ABm"), 0.3);
        assert_eq!(back.memristor.initial_weight_of("BAm"), 0.5);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml_str("[bcm]\nlow_hz = 5.0\nnot_a_key = 1\n");
        assert!(err.is_err());
    }

    #[test]
    fn derive_seed_is_stable_and_label_sensitive() {
        assert_eq!(derive_seed(42, "ABm"), derive_seed(42, "ABm"));
        assert_ne!(derive_seed(42, "ABm"), derive_seed(42, "BAm"));
        assert_ne!(derive_seed(42, "ABm"), derive_seed(43, "ABm"));
    }
}
