//! Bit-exact codec for the 64-bit AER event packet.
//!
//! Every event travels as exactly one 8-octet datagram laid out big-endian as
//! `R1(8) | NeuronID(24) | R2(8) | Timestamp(24)`. `R1` tags the sending
//! partner role, `R2` carries role-dependent payload (event kind for the
//! biological node, a quantized weight for the synapse hub, nothing for the
//! artificial node) and the timestamp semantics follow the sender's timing
//! protocol (see [`crate::timekeeping`]).

use thiserror::Error;

/// Wire size of one AER event.
pub const PACKET_LEN: usize = 8;

/// Maximum value of a 24-bit field (neuron id, timestamp).
pub const MAX_24BIT: u32 = 0x00FF_FFFF;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("packet must be exactly {PACKET_LEN} octets, got {0}")]
    WrongLength(usize),
    #[error("field {field} value {value} exceeds {bits}-bit width")]
    FieldTooWide {
        field: &'static str,
        value: u32,
        bits: u8,
    },
    #[error("r2 value {0:#04x} is not a valid event kind for a secondary packet")]
    MalformedEventKind(u8),
    #[error("r1 tag {0:#04x} does not match any configured partner role")]
    UnknownPartnerTag(u8),
}

/// The three node roles of the network, as identified by the `R1` tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartnerRole {
    Primary,
    Synapse,
    Secondary,
}

impl PartnerRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            PartnerRole::Primary => "primary",
            PartnerRole::Synapse => "synapse",
            PartnerRole::Secondary => "secondary",
        }
    }
}

impl std::fmt::Display for PartnerRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mapping between partner roles and the `R1` tag values on the wire.
///
/// The assignment is fixed by configuration, not by the packet format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoleTags {
    pub primary: u8,
    pub synapse: u8,
    pub secondary: u8,
}

impl Default for RoleTags {
    fn default() -> Self {
        RoleTags {
            primary: 0x01,
            synapse: 0x02,
            secondary: 0x03,
        }
    }
}

impl RoleTags {
    pub fn tag_of(&self, role: PartnerRole) -> u8 {
        match role {
            PartnerRole::Primary => self.primary,
            PartnerRole::Synapse => self.synapse,
            PartnerRole::Secondary => self.secondary,
        }
    }

    pub fn role_of(&self, tag: u8) -> Result<PartnerRole, ProtocolError> {
        if tag == self.primary {
            Ok(PartnerRole::Primary)
        } else if tag == self.synapse {
            Ok(PartnerRole::Synapse)
        } else if tag == self.secondary {
            Ok(PartnerRole::Secondary)
        } else {
            Err(ProtocolError::UnknownPartnerTag(tag))
        }
    }
}

/// Role-dependent meaning of the `R2` octet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Secondary-origin: sub-threshold post-synaptic potential.
    Psp,
    /// Secondary-origin: action potential evoked by stimulation.
    ForcedAp,
    /// Secondary-origin: self-generated action potential.
    SpontaneousAp,
    /// Synapse-origin: quantized synaptic weight of the stimulation.
    WeightByte(u8),
    /// Primary-origin: the octet carries nothing.
    Unused,
}

pub const R2_PSP: u8 = 0x00;
pub const R2_FORCED_AP: u8 = 0x01;
pub const R2_SPONTANEOUS_AP: u8 = 0x02;

impl EventKind {
    /// Encode the kind into the `R2` octet for the given sender role.
    pub fn to_r2(&self) -> u8 {
        match self {
            EventKind::Psp => R2_PSP,
            EventKind::ForcedAp => R2_FORCED_AP,
            EventKind::SpontaneousAp => R2_SPONTANEOUS_AP,
            EventKind::WeightByte(b) => *b,
            EventKind::Unused => 0x00,
        }
    }

    /// Interpret an `R2` octet according to the sender role. Payload-semantic
    /// validation happens here, at the receiving node, not in the codec.
    pub fn from_r2(sender: PartnerRole, r2: u8) -> Result<EventKind, ProtocolError> {
        match sender {
            PartnerRole::Primary => Ok(EventKind::Unused),
            PartnerRole::Synapse => Ok(EventKind::WeightByte(r2)),
            PartnerRole::Secondary => match r2 {
                R2_PSP => Ok(EventKind::Psp),
                R2_FORCED_AP => Ok(EventKind::ForcedAp),
                R2_SPONTANEOUS_AP => Ok(EventKind::SpontaneousAp),
                other => Err(ProtocolError::MalformedEventKind(other)),
            },
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Psp => "psp",
            EventKind::ForcedAp => "forced_ap",
            EventKind::SpontaneousAp => "spontaneous_ap",
            EventKind::WeightByte(_) => "weight",
            EventKind::Unused => "ap",
        }
    }
}

/// One 64-bit AER event.
///
/// Field widths are enforced at construction so encoding is infallible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AerPacket {
    r1: u8,
    neuron_id: u32,
    r2: u8,
    timestamp: u32,
}

impl AerPacket {
    pub fn new(r1: u8, neuron_id: u32, r2: u8, timestamp: u32) -> Result<Self, ProtocolError> {
        if neuron_id > MAX_24BIT {
            return Err(ProtocolError::FieldTooWide {
                field: "neuron_id",
                value: neuron_id,
                bits: 24,
            });
        }
        if timestamp > MAX_24BIT {
            return Err(ProtocolError::FieldTooWide {
                field: "timestamp",
                value: timestamp,
                bits: 24,
            });
        }
        Ok(AerPacket {
            r1,
            neuron_id,
            r2,
            timestamp,
        })
    }

    pub fn r1(&self) -> u8 {
        self.r1
    }

    pub fn neuron_id(&self) -> u32 {
        self.neuron_id
    }

    pub fn r2(&self) -> u8 {
        self.r2
    }

    /// Timestamp field, milliseconds; semantics depend on the sender role.
    pub fn timestamp(&self) -> u32 {
        self.timestamp
    }

    /// Big-endian concatenation `R1 | NeuronID | R2 | Timestamp`.
    pub fn encode(&self) -> [u8; PACKET_LEN] {
        let id = self.neuron_id.to_be_bytes();
        let ts = self.timestamp.to_be_bytes();
        [self.r1, id[1], id[2], id[3], self.r2, ts[1], ts[2], ts[3]]
    }

    /// Inverse of [`AerPacket::encode`]. Total over all 8-octet inputs; the
    /// only failure mode is a wrong input length.
    pub fn decode(octets: &[u8]) -> Result<Self, ProtocolError> {
        if octets.len() != PACKET_LEN {
            return Err(ProtocolError::WrongLength(octets.len()));
        }
        Ok(AerPacket {
            r1: octets[0],
            neuron_id: u32::from_be_bytes([0, octets[1], octets[2], octets[3]]),
            r2: octets[4],
            timestamp: u32::from_be_bytes([0, octets[5], octets[6], octets[7]]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_all_zero() {
        let p = AerPacket::new(0x00, 0, 0x00, 0).unwrap();
        assert_eq!(p.encode(), [0u8; 8]);
    }

    #[test]
    fn encode_all_ones_saturation() {
        let p = AerPacket::new(0xFF, MAX_24BIT, 0xFF, MAX_24BIT).unwrap();
        assert_eq!(p.encode(), [0xFFu8; 8]);
    }

    #[test]
    fn encode_id1_dt12() {
        let p = AerPacket::new(0x01, 1, 0x00, 12).unwrap();
        assert_eq!(p.encode(), [0x01, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x0C]);
    }

    #[test]
    fn decode_id1_dt12() {
        let p = AerPacket::decode(&[0x01, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x0C]).unwrap();
        assert_eq!(p, AerPacket::new(0x01, 1, 0x00, 12).unwrap());
    }

    #[test]
    fn decode_rejects_wrong_length() {
        assert_eq!(
            AerPacket::decode(&[0u8; 7]),
            Err(ProtocolError::WrongLength(7))
        );
        assert_eq!(
            AerPacket::decode(&[0u8; 9]),
            Err(ProtocolError::WrongLength(9))
        );
        assert_eq!(AerPacket::decode(&[]), Err(ProtocolError::WrongLength(0)));
    }

    #[test]
    fn new_rejects_wide_fields() {
        assert!(AerPacket::new(0, MAX_24BIT + 1, 0, 0).is_err());
        assert!(AerPacket::new(0, 0, 0, MAX_24BIT + 1).is_err());
    }

    #[test]
    fn field_boundary_round_trips() {
        for &r1 in &[0x00u8, 0xFF] {
            for &id in &[0u32, MAX_24BIT] {
                for &r2 in &[0x00u8, 0xFF] {
                    for &ts in &[0u32, MAX_24BIT] {
                        let p = AerPacket::new(r1, id, r2, ts).unwrap();
                        assert_eq!(AerPacket::decode(&p.encode()).unwrap(), p);
                    }
                }
            }
        }
    }

    #[test]
    fn secondary_event_kinds() {
        assert_eq!(
            EventKind::from_r2(PartnerRole::Secondary, 0x00).unwrap(),
            EventKind::Psp
        );
        assert_eq!(
            EventKind::from_r2(PartnerRole::Secondary, 0x01).unwrap(),
            EventKind::ForcedAp
        );
        assert_eq!(
            EventKind::from_r2(PartnerRole::Secondary, 0x02).unwrap(),
            EventKind::SpontaneousAp
        );
        assert_eq!(
            EventKind::from_r2(PartnerRole::Secondary, 0x03),
            Err(ProtocolError::MalformedEventKind(0x03))
        );
    }

    #[test]
    fn synapse_and_primary_r2_are_total() {
        assert_eq!(
            EventKind::from_r2(PartnerRole::Synapse, 0xAB).unwrap(),
            EventKind::WeightByte(0xAB)
        );
        assert_eq!(
            EventKind::from_r2(PartnerRole::Primary, 0xAB).unwrap(),
            EventKind::Unused
        );
    }

    #[test]
    fn default_role_tags_round_trip() {
        let tags = RoleTags::default();
        for role in [
            PartnerRole::Primary,
            PartnerRole::Synapse,
            PartnerRole::Secondary,
        ] {
            assert_eq!(tags.role_of(tags.tag_of(role)).unwrap(), role);
        }
        assert_eq!(
            tags.role_of(0x7F),
            Err(ProtocolError::UnknownPartnerTag(0x7F))
        );
    }

    proptest! {
        #[test]
        fn round_trip(r1 in any::<u8>(), id in 0u32..=MAX_24BIT, r2 in any::<u8>(), ts in 0u32..=MAX_24BIT) {
            let p = AerPacket::new(r1, id, r2, ts).unwrap();
            let octets = p.encode();
            prop_assert_eq!(octets.len(), PACKET_LEN);
            prop_assert_eq!(AerPacket::decode(&octets).unwrap(), p);
        }

        #[test]
        fn decode_is_total_over_8_octets(octets in any::<[u8; 8]>()) {
            let p = AerPacket::decode(&octets).unwrap();
            // Re-encoding reproduces the input bits exactly.
            prop_assert_eq!(p.encode(), octets);
        }
    }
}
