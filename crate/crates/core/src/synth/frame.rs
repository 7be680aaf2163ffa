use alloc::vec::Vec;
use core::net::IpAddr;

use super::SynthError;
use crate::packet::Endpoint;

fn mac(addr: IpAddr) -> [u8; 6] {
    let tail = match addr {
        IpAddr::V4(a) => a.octets(),
        IpAddr::V6(a) => {
            let o = a.octets();
            [o[12], o[13], o[14], o[15]]
        }
    };
    [0x02, 0x00, tail[0], tail[1], tail[2], tail[3]]
}

fn ones_complement(data: &[u8]) -> u16 {
    let mut sum: u32 = data
        .chunks(2)
        .map(|c| u32::from(c[0]) << 8 | u32::from(*c.get(1).unwrap_or(&0)))
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Ethernet II + IPv4 or IPv6 + UDP around `payload`. UDP checksums are
/// left at zero, which IPv4 allows and most tools tolerate for IPv6.
pub fn udp_frame(src: Endpoint, dst: Endpoint, ip_id: u16, payload: &[u8]) -> Result<Vec<u8>, SynthError> {
    let udp_len = u16::try_from(payload.len() + 8).map_err(|_| SynthError::TooLong("UDP datagram"))?;
    let mut udp = Vec::with_capacity(udp_len as usize);
    udp.extend_from_slice(&src.port.to_be_bytes());
    udp.extend_from_slice(&dst.port.to_be_bytes());
    udp.extend_from_slice(&udp_len.to_be_bytes());
    udp.extend_from_slice(&[0, 0]);
    udp.extend_from_slice(payload);

    let mut frame = Vec::with_capacity(14 + 40 + udp.len());
    frame.extend_from_slice(&mac(dst.addr));
    frame.extend_from_slice(&mac(src.addr));
    match (src.addr, dst.addr) {
        (IpAddr::V4(s), IpAddr::V4(d)) => {
            let total = u16::try_from(20 + udp.len()).map_err(|_| SynthError::TooLong("IPv4 packet"))?;
            frame.extend_from_slice(&0x0800u16.to_be_bytes());
            let mut ip = [0u8; 20];
            ip[0] = 0x45;
            ip[2..4].copy_from_slice(&total.to_be_bytes());
            ip[4..6].copy_from_slice(&ip_id.to_be_bytes());
            ip[6] = 0x40;
            ip[8] = 64;
            ip[9] = 17;
            ip[12..16].copy_from_slice(&s.octets());
            ip[16..20].copy_from_slice(&d.octets());
            let sum = ones_complement(&ip);
            ip[10..12].copy_from_slice(&sum.to_be_bytes());
            frame.extend_from_slice(&ip);
        }
        (IpAddr::V6(s), IpAddr::V6(d)) => {
            frame.extend_from_slice(&0x86DDu16.to_be_bytes());
            frame.extend_from_slice(&[0x60, 0, 0, 0]);
            frame.extend_from_slice(&udp_len.to_be_bytes());
            frame.extend_from_slice(&[17, 64]);
            frame.extend_from_slice(&s.octets());
            frame.extend_from_slice(&d.octets());
        }
        _ => return Err(SynthError::AddressFamilyMismatch),
    }
    frame.extend(udp);
    Ok(frame)
}
