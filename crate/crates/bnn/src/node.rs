//! Backend-agnostic node event loop contract.
//!
//! Every node (primary, hub, secondary) is a single-threaded state machine
//! driven by two kinds of events: an inbound 8-octet packet or a timer it
//! scheduled for itself. Outputs are collected in an [`Outbox`] and routed by
//! whichever backend drives the loop — the virtual-time scheduler or a real
//! UDP socket.

use crate::protocol::PartnerRole;

/// Timers a node can ask for. Interpretation is private to the node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    /// Fixed-step integration tick of the artificial neuron.
    NeuronStep,
    /// Next spike of the forced schedule.
    ForcedSpike,
    /// Next candidate spontaneous event of the biological neuron.
    Spontaneous,
    /// A spike emission postponed to keep the minimum inter-send spacing.
    DeferredEmit,
}

/// Outputs of one event-handling step.
#[derive(Debug, Default)]
pub struct Outbox {
    /// Packets to send, addressed by destination role.
    pub packets: Vec<(PartnerRole, [u8; 8])>,
    /// Timers to schedule at absolute local time (microseconds).
    pub timers: Vec<(u64, TimerKind)>,
}

impl Outbox {
    pub fn send(&mut self, dest: PartnerRole, octets: [u8; 8]) {
        self.packets.push((dest, octets));
    }

    pub fn schedule_at(&mut self, at_us: u64, kind: TimerKind) {
        self.timers.push((at_us, kind));
    }
}

/// A node participating in the network.
pub trait Node {
    fn role(&self) -> PartnerRole;

    /// Called once before any traffic; schedules initial timers.
    fn start(&mut self, now_us: u64, out: &mut Outbox);

    /// An 8-octet datagram arrived at local time `now_us`.
    fn on_packet(&mut self, now_us: u64, octets: &[u8], out: &mut Outbox);

    /// A previously scheduled timer fired at local time `now_us`.
    fn on_timer(&mut self, now_us: u64, kind: TimerKind, out: &mut Outbox);
}
