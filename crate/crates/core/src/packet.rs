//! Link/network/transport decapsulation down to UDP payloads.

use alloc::vec::Vec;
use core::fmt;
use core::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use crate::time::Timestamp;

/// Link-layer framing, as announced by the capture file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkType {
    Ethernet,
    RawIp,
    LinuxCooked,
}

impl LinkType {
    pub fn from_code(code: u32) -> Option<LinkType> {
        match code {
            1 => Some(LinkType::Ethernet),
            101 => Some(LinkType::RawIp),
            113 => Some(LinkType::LinuxCooked),
            _ => None,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            LinkType::Ethernet => 1,
            LinkType::RawIp => 101,
            LinkType::LinuxCooked => 113,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPacket {
    pub timestamp: Timestamp,
    pub link_type: LinkType,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub addr: IpAddr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(addr: IpAddr, port: u16) -> Self {
        Endpoint { addr, port }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.addr {
            IpAddr::V4(a) => write!(f, "{}:{}", a, self.port),
            IpAddr::V6(a) => write!(f, "[{}]:{}", a, self.port),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transport {
    Udp,
}

/// Direction-free identity of a UDP conversation.
///
/// `(address_low, port_low) <= (address_high, port_high)` always holds, so
/// both directions of a conversation produce the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub address_low: IpAddr,
    pub address_high: IpAddr,
    pub port_low: u16,
    pub port_high: u16,
    pub transport: Transport,
}

impl FlowKey {
    pub fn new(a: Endpoint, b: Endpoint) -> Self {
        let (lo, hi) = if (a.addr, a.port) <= (b.addr, b.port) { (a, b) } else { (b, a) };
        FlowKey {
            address_low: lo.addr,
            address_high: hi.addr,
            port_low: lo.port,
            port_high: hi.port,
            transport: Transport::Udp,
        }
    }

    pub fn low(&self) -> Endpoint {
        Endpoint::new(self.address_low, self.port_low)
    }

    pub fn high(&self) -> Endpoint {
        Endpoint::new(self.address_high, self.port_high)
    }

    pub fn has_port(&self, port: u16) -> bool {
        self.port_low == port || self.port_high == port
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}<->{}/udp", self.low(), self.high())
    }
}

/// Packet direction relative to the endpoint that opened the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    InitiatorToResponder,
    ResponderToInitiator,
}

impl Direction {
    pub fn reverse(self) -> Direction {
        match self {
            Direction::InitiatorToResponder => Direction::ResponderToInitiator,
            Direction::ResponderToInitiator => Direction::InitiatorToResponder,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Direction::InitiatorToResponder => 0,
            Direction::ResponderToInitiator => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    NonIp,
    NonUdp,
    IpFragment,
    Truncated,
    EncapTooDeep,
    Malformed,
}

impl DropReason {
    pub const ALL: [DropReason; 6] = [
        DropReason::NonIp,
        DropReason::NonUdp,
        DropReason::IpFragment,
        DropReason::Truncated,
        DropReason::EncapTooDeep,
        DropReason::Malformed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NonIp => "non-ip",
            DropReason::NonUdp => "non-udp",
            DropReason::IpFragment => "ip-fragment",
            DropReason::Truncated => "truncated",
            DropReason::EncapTooDeep => "encap-too-deep",
            DropReason::Malformed => "malformed",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A decapsulated UDP datagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Datagram<'a> {
    pub key: FlowKey,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub payload: &'a [u8],
}

impl Datagram<'_> {
    pub fn direction(&self, initiator: Endpoint) -> Direction {
        if self.src == initiator {
            Direction::InitiatorToResponder
        } else {
            Direction::ResponderToInitiator
        }
    }
}

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86DD;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88A8;
const IPPROTO_UDP: u8 = 17;

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

/// Strips link, IP and UDP headers. Anything that is not an unfragmented
/// IPv4/IPv6 UDP datagram comes back as a [`DropReason`].
pub fn decapsulate(packet: &RawPacket) -> Result<Datagram<'_>, DropReason> {
    let data = packet.payload.as_slice();
    let (ethertype, ip) = match packet.link_type {
        LinkType::Ethernet => {
            if data.len() < 14 {
                return Err(DropReason::Truncated);
            }
            let mut ethertype = be16(data, 12);
            let mut offset = 14;
            if ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ {
                if data.len() < 18 {
                    return Err(DropReason::Truncated);
                }
                ethertype = be16(data, 16);
                offset = 18;
                if ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ {
                    return Err(DropReason::EncapTooDeep);
                }
            }
            (Some(ethertype), &data[offset..])
        }
        LinkType::LinuxCooked => {
            if data.len() < 16 {
                return Err(DropReason::Truncated);
            }
            (Some(be16(data, 14)), &data[16..])
        }
        LinkType::RawIp => (None, data),
    };

    let version = match ethertype {
        Some(ETHERTYPE_IPV4) => 4,
        Some(ETHERTYPE_IPV6) => 6,
        Some(_) => return Err(DropReason::NonIp),
        None => match ip.first() {
            Some(b) => b >> 4,
            None => return Err(DropReason::Truncated),
        },
    };

    let (src_ip, dst_ip, udp) = match version {
        4 => ipv4_payload(ip)?,
        6 => ipv6_payload(ip)?,
        _ => return Err(DropReason::NonIp),
    };

    if udp.len() < 8 {
        return Err(DropReason::Truncated);
    }
    let udp_len = be16(udp, 4) as usize;
    if udp_len < 8 {
        return Err(DropReason::Malformed);
    }
    if udp_len > udp.len() {
        return Err(DropReason::Truncated);
    }
    let src = Endpoint::new(src_ip, be16(udp, 0));
    let dst = Endpoint::new(dst_ip, be16(udp, 2));
    Ok(Datagram { key: FlowKey::new(src, dst), src, dst, payload: &udp[8..udp_len] })
}

fn ipv4_payload(ip: &[u8]) -> Result<(IpAddr, IpAddr, &[u8]), DropReason> {
    if ip.len() < 20 {
        return Err(DropReason::Truncated);
    }
    if ip[0] >> 4 != 4 {
        return Err(DropReason::Malformed);
    }
    let header_len = (ip[0] & 0x0f) as usize * 4;
    let total_len = be16(ip, 2) as usize;
    if header_len < 20 || total_len < header_len {
        return Err(DropReason::Malformed);
    }
    if total_len > ip.len() {
        return Err(DropReason::Truncated);
    }
    let flags_offset = be16(ip, 6);
    if flags_offset & 0x2000 != 0 || flags_offset & 0x1fff != 0 {
        return Err(DropReason::IpFragment);
    }
    if ip[9] != IPPROTO_UDP {
        return Err(DropReason::NonUdp);
    }
    let src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    Ok((src.into(), dst.into(), &ip[header_len..total_len]))
}

fn ipv6_payload(ip: &[u8]) -> Result<(IpAddr, IpAddr, &[u8]), DropReason> {
    if ip.len() < 40 {
        return Err(DropReason::Truncated);
    }
    if ip[0] >> 4 != 6 {
        return Err(DropReason::Malformed);
    }
    let payload_len = be16(ip, 4) as usize;
    if payload_len == 0 {
        return Err(DropReason::Malformed);
    }
    if 40 + payload_len > ip.len() {
        return Err(DropReason::Truncated);
    }
    let mut src = [0u8; 16];
    let mut dst = [0u8; 16];
    src.copy_from_slice(&ip[8..24]);
    dst.copy_from_slice(&ip[24..40]);

    let body = &ip[40..40 + payload_len];
    let mut next = ip[6];
    let mut offset = 0usize;
    for _ in 0..8 {
        match next {
            IPPROTO_UDP => {
                return Ok((Ipv6Addr::from(src).into(), Ipv6Addr::from(dst).into(), &body[offset..]));
            }
            // hop-by-hop, routing, destination options
            0 | 43 | 60 => {
                if body.len() < offset + 2 {
                    return Err(DropReason::Truncated);
                }
                let len = (body[offset + 1] as usize + 1) * 8;
                if body.len() < offset + len {
                    return Err(DropReason::Truncated);
                }
                next = body[offset];
                offset += len;
            }
            44 => return Err(DropReason::IpFragment),
            _ => return Err(DropReason::NonUdp),
        }
    }
    Err(DropReason::Malformed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    // Ethernet II + IPv4 (no options) + UDP 50000 -> 3478, payload de ad be ef.
    // Laid out by hand from the header formats; checksums are real.
    const ETH_IPV4_UDP: [u8; 46] = [
        0x00, 0x11, 0x22, 0x33, 0x44, 0x55, // dst mac
        0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, // src mac
        0x08, 0x00, // ipv4
        0x45, 0x00, 0x00, 0x20, // v4 ihl5, tos, total length 32
        0x00, 0x01, 0x00, 0x00, // id, flags/offset
        0x40, 0x11, 0xf7, 0x5d, // ttl 64, udp, header checksum
        0xc0, 0xa8, 0x01, 0x0a, // 192.168.1.10
        0xc0, 0xa8, 0x01, 0x14, // 192.168.1.20
        0xc3, 0x50, 0x0d, 0x96, // 50000 -> 3478
        0x00, 0x0c, 0x00, 0x00, // udp length 12, checksum 0
        0xde, 0xad, 0xbe, 0xef,
    ];

    fn raw(link_type: LinkType, bytes: &[u8]) -> RawPacket {
        RawPacket { timestamp: Timestamp::default(), link_type, payload: bytes.to_vec() }
    }

    fn ipv4_header_checksum(h: &[u8]) -> u16 {
        let mut sum = 0u32;
        for (i, pair) in h.chunks(2).enumerate() {
            if i == 5 {
                continue;
            }
            sum += u16::from_be_bytes([pair[0], pair[1]]) as u32;
        }
        while sum > 0xffff {
            sum = (sum & 0xffff) + (sum >> 16);
        }
        !(sum as u16)
    }

    #[test]
    fn hand_built_header_checksum_is_valid() {
        assert_eq!(ipv4_header_checksum(&ETH_IPV4_UDP[14..34]), 0xf75d);
    }

    #[test]
    fn minimal_ethernet_ipv4_udp() {
        let pkt = raw(LinkType::Ethernet, &ETH_IPV4_UDP);
        let d = decapsulate(&pkt).unwrap();
        assert_eq!(d.payload, &[0xde, 0xad, 0xbe, 0xef]);
        assert_eq!(d.src.port, 50000);
        assert_eq!(d.dst.port, 3478);
        assert_eq!(d.key.port_low, 50000);
        assert_eq!(d.key.port_high, 3478);
        assert!(d.key.has_port(3478));
        assert_eq!(d.key.address_low, IpAddr::V4(Ipv4Addr::new(192, 168, 1, 10)));
    }

    #[test]
    fn tcp_is_non_udp() {
        let mut bytes = ETH_IPV4_UDP;
        bytes[14 + 9] = 6;
        assert_eq!(decapsulate(&raw(LinkType::Ethernet, &bytes)), Err(DropReason::NonUdp));
    }

    #[test]
    fn more_fragments_flag_drops() {
        let mut bytes = ETH_IPV4_UDP;
        bytes[14 + 6] = 0x20;
        assert_eq!(decapsulate(&raw(LinkType::Ethernet, &bytes)), Err(DropReason::IpFragment));
        let mut bytes = ETH_IPV4_UDP;
        bytes[14 + 7] = 0x10;
        assert_eq!(decapsulate(&raw(LinkType::Ethernet, &bytes)), Err(DropReason::IpFragment));
    }

    #[test]
    fn one_vlan_tag_is_skipped_two_are_too_deep() {
        let mut tagged = ETH_IPV4_UDP[..12].to_vec();
        tagged.extend_from_slice(&[0x81, 0x00, 0x00, 0x05]);
        tagged.extend_from_slice(&ETH_IPV4_UDP[12..]);
        let r = raw(LinkType::Ethernet, &tagged);
        let d = decapsulate(&r).unwrap();
        assert_eq!(d.payload.len(), 4);

        let mut double = ETH_IPV4_UDP[..12].to_vec();
        double.extend_from_slice(&[0x88, 0xa8, 0x00, 0x05, 0x81, 0x00, 0x00, 0x06]);
        double.extend_from_slice(&ETH_IPV4_UDP[12..]);
        assert_eq!(decapsulate(&raw(LinkType::Ethernet, &double)), Err(DropReason::EncapTooDeep));
    }

    #[test]
    fn raw_ip_and_cooked_framings() {
        let r = raw(LinkType::RawIp, &ETH_IPV4_UDP[14..]);
        let d = decapsulate(&r).unwrap();
        assert_eq!(d.payload.len(), 4);

        let mut sll = vec![0u8; 14];
        sll.extend_from_slice(&[0x08, 0x00]);
        sll.extend_from_slice(&ETH_IPV4_UDP[14..]);
        let r = raw(LinkType::LinuxCooked, &sll);
        let d = decapsulate(&r).unwrap();
        assert_eq!(d.dst.port, 3478);
    }

    #[test]
    fn ethernet_trailer_padding_is_ignored() {
        let mut padded = ETH_IPV4_UDP.to_vec();
        padded.extend_from_slice(&[0u8; 14]);
        assert_eq!(decapsulate(&raw(LinkType::Ethernet, &padded)).unwrap().payload.len(), 4);
    }

    #[test]
    fn truncation_and_non_ip() {
        assert_eq!(
            decapsulate(&raw(LinkType::Ethernet, &ETH_IPV4_UDP[..40])),
            Err(DropReason::Truncated)
        );
        let mut arp = ETH_IPV4_UDP;
        arp[12] = 0x08;
        arp[13] = 0x06;
        assert_eq!(decapsulate(&raw(LinkType::Ethernet, &arp)), Err(DropReason::NonIp));
        assert_eq!(decapsulate(&raw(LinkType::RawIp, &[])), Err(DropReason::Truncated));
    }

    #[test]
    fn ipv6_udp_with_destination_options() {
        let mut ip = vec![0x60, 0, 0, 0, 0, 20, 60, 64];
        ip.extend_from_slice(&[0x20, 0x01, 0x0d, 0xb8, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1]);
        ip.extend_from_slice(&[0x20, 0x01, 0x0d, 0xb8, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2]);
        ip.extend_from_slice(&[17, 0, 1, 4, 0, 0, 0, 0]); // dest opts: next udp, len 8
        ip.extend_from_slice(&[0x13, 0x88, 0x0d, 0x96, 0x00, 0x0c, 0x00, 0x00, 1, 2, 3, 4]);
        let r = raw(LinkType::RawIp, &ip);
        let d = decapsulate(&r).unwrap();
        assert_eq!(d.payload, &[1, 2, 3, 4]);
        assert_eq!(d.src.port, 5000);

        let mut frag = ip.clone();
        frag[6] = 44;
        assert_eq!(decapsulate(&raw(LinkType::RawIp, &frag)), Err(DropReason::IpFragment));
    }

    #[test]
    fn flow_key_is_canonical() {
        let a = Endpoint::new(IpAddr::V4(Ipv4Addr::new(10, 0, 0, 2)), 1);
        let b = Endpoint::new(IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1)), 9);
        assert_eq!(FlowKey::new(a, b), FlowKey::new(b, a));
        assert_eq!(FlowKey::new(a, b).low(), b);
    }
}
