//! Real-UDP backend: drives one node's event loop from a socket and a
//! wall-clock timer queue. Used for live multi-process runs and smoke tests;
//! acceptance runs use the virtual-time backend.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::time::{Duration, Instant};

use std::collections::BTreeMap;

use crate::node::{Node, Outbox, TimerKind};
use crate::protocol::{PartnerRole, PACKET_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TimerEntry {
    at_us: u64,
    seq: u64,
    kind: TimerKind,
}

impl Ord for TimerEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at_us
            .cmp(&self.at_us)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for TimerEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Runs a node over a bound UDP socket until `duration_us` of wall time has
/// elapsed. Local time starts at zero when the runner starts; the referencing
/// protocol means no epoch needs to be shared between nodes.
pub struct UdpRunner<'a> {
    node: &'a mut dyn Node,
    socket: UdpSocket,
    peers: BTreeMap<PartnerRole, SocketAddr>,
    timers: BinaryHeap<TimerEntry>,
    seq: u64,
    epoch: Instant,
}

impl<'a> UdpRunner<'a> {
    pub fn new(
        node: &'a mut dyn Node,
        socket: UdpSocket,
        peers: BTreeMap<PartnerRole, SocketAddr>,
    ) -> Self {
        UdpRunner {
            node,
            socket,
            peers,
            timers: BinaryHeap::new(),
            seq: 0,
            epoch: Instant::now(),
        }
    }

    fn now_us(&self) -> u64 {
        self.epoch.elapsed().as_micros() as u64
    }

    fn flush(&mut self, out: Outbox) -> io::Result<()> {
        for (dest, octets) in out.packets {
            match self.peers.get(&dest) {
                Some(addr) => {
                    self.socket.send_to(&octets, addr)?;
                }
                None => log::warn!("no peer address configured for {dest}, dropping packet"),
            }
        }
        for (at_us, kind) in out.timers {
            self.timers.push(TimerEntry {
                at_us,
                seq: self.seq,
                kind,
            });
            self.seq += 1;
        }
        Ok(())
    }

    pub fn run(mut self, duration_us: u64) -> io::Result<()> {
        let mut out = Outbox::default();
        self.node.start(0, &mut out);
        self.flush(out)?;

        let mut buf = [0u8; 64];
        loop {
            let now = self.now_us();
            if now >= duration_us {
                break;
            }

            // Fire due timers at their scheduled logical time.
            while let Some(&entry) = self.timers.peek() {
                if entry.at_us <= self.now_us() {
                    self.timers.pop();
                    let mut out = Outbox::default();
                    self.node.on_timer(entry.at_us, entry.kind, &mut out);
                    self.flush(out)?;
                } else {
                    break;
                }
            }

            let now = self.now_us();
            let next_due = self.timers.peek().map(|e| e.at_us).unwrap_or(duration_us);
            let wait_us = next_due
                .min(duration_us)
                .saturating_sub(now)
                .clamp(1, 50_000);
            self.socket
                .set_read_timeout(Some(Duration::from_micros(wait_us)))?;
            match self.socket.recv_from(&mut buf) {
                Ok((n, _peer)) => {
                    if n != PACKET_LEN {
                        log::warn!("dropping datagram of {n} octets (expected {PACKET_LEN})");
                        continue;
                    }
                    let mut out = Outbox::default();
                    let now = self.now_us();
                    self.node.on_packet(now, &buf[..n], &mut out);
                    self.flush(out)?;
                }
                Err(ref e)
                    if e.kind() == io::ErrorKind::WouldBlock
                        || e.kind() == io::ErrorKind::TimedOut => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}
