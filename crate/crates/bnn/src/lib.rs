//! Simulator and protocol stack for a geographically distributed bio-hybrid
//! spiking network: an artificial-neuron node, a memristive-synapse hub and a
//! biological-neuron node exchange spike events as 8-octet AER datagrams,
//! either over real UDP or over a deterministic virtual-time network.
//!
//! The hub owns the connectome, normalizes all event timing onto one absolute
//! axis, runs a rate-coded BCM plasticity rule against per-neuron spike
//! histories and programs the memristive synapse models that weight every
//! stimulation it relays.

pub mod artificial;
pub mod bio;
pub mod config;
pub mod experiment;
pub mod hub;
pub mod memristor;
pub mod node;
pub mod plasticity;
pub mod protocol;
pub mod render;
pub mod scenarios;
pub mod timekeeping;
pub mod transport;

pub use config::RunConfig;
pub use experiment::{run_experiment, summarize, RunArtifacts};
pub use protocol::{AerPacket, EventKind, PartnerRole};
