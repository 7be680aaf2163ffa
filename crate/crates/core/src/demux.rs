//! First-octet demultiplexing of WebRTC UDP payloads.
//!
//! STUN, DTLS and SRTP share a 5-tuple in WebRTC and are told apart by the
//! first byte: 0..=3 STUN, 20..=63 DTLS, 128..=191 RTP/SRTP. A STUN
//! candidate is only accepted when its header checks out.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::stun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PayloadClass {
    Stun,
    Dtls,
    Srtp,
    Other,
}

impl PayloadClass {
    pub const ALL: [PayloadClass; 4] =
        [PayloadClass::Stun, PayloadClass::Dtls, PayloadClass::Srtp, PayloadClass::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            PayloadClass::Stun => "stun",
            PayloadClass::Dtls => "dtls",
            PayloadClass::Srtp => "srtp",
            PayloadClass::Other => "other",
        }
    }

    pub fn from_name(name: &str) -> Option<PayloadClass> {
        PayloadClass::ALL.into_iter().find(|c| c.as_str() == name)
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for PayloadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify_payload(payload: &[u8]) -> PayloadClass {
    match payload.first() {
        None => PayloadClass::Other,
        Some(0..=3) => {
            if stun::check_header(payload).is_ok() {
                PayloadClass::Stun
            } else {
                PayloadClass::Other
            }
        }
        Some(20..=63) => PayloadClass::Dtls,
        Some(128..=191) => PayloadClass::Srtp,
        Some(_) => PayloadClass::Other,
    }
}

/// The set of payload classes seen on a flow. Only ever grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ChannelSet(u8);

impl ChannelSet {
    pub const fn empty() -> Self {
        ChannelSet(0)
    }

    pub fn insert(&mut self, class: PayloadClass) {
        self.0 |= class.bit();
    }

    pub fn contains(&self, class: PayloadClass) -> bool {
        self.0 & class.bit() != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = PayloadClass> + '_ {
        PayloadClass::ALL.into_iter().filter(|c| self.contains(*c))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.iter().map(PayloadClass::as_str).collect()
    }

    /// STUN and SRTP without any DTLS: media keyed out-of-band (SDES).
    pub fn is_sdes_media(&self) -> bool {
        self.contains(PayloadClass::Stun)
            && self.contains(PayloadClass::Srtp)
            && !self.contains(PayloadClass::Dtls)
    }

    /// Comma-joined names in the fixed order stun, dtls, srtp, other.
    pub fn to_text(&self) -> String {
        self.names().join(",")
    }

    /// Inverse of [`ChannelSet::to_text`]; the empty string is the empty set.
    pub fn parse(text: &str) -> Option<ChannelSet> {
        let mut set = ChannelSet::empty();
        for name in text.split(',').filter(|s| !s.is_empty()) {
            set.insert(PayloadClass::from_name(name.trim())?);
        }
        Some(set)
    }
}

impl FromIterator<PayloadClass> for ChannelSet {
    fn from_iter<T: IntoIterator<Item = PayloadClass>>(iter: T) -> Self {
        let mut set = ChannelSet::empty();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl fmt::Display for ChannelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn stun_binding_request() -> Vec<u8> {
        let mut p = vec![0x00, 0x01, 0x00, 0x00, 0x21, 0x12, 0xa4, 0x42];
        p.extend_from_slice(&[7u8; 12]);
        p
    }

    #[test]
    fn dtls_handshake_record() {
        assert_eq!(classify_payload(&[0x16, 0xfe, 0xff, 0, 0]), PayloadClass::Dtls);
    }

    #[test]
    fn stun_needs_valid_header() {
        assert_eq!(classify_payload(&stun_binding_request()), PayloadClass::Stun);
        let mut bad = stun_binding_request();
        bad[4] = 0;
        assert_eq!(classify_payload(&bad), PayloadClass::Other);
        assert_eq!(classify_payload(&[0x00, 0x01]), PayloadClass::Other);
    }

    #[test]
    fn rtp_version_two() {
        assert_eq!(classify_payload(&[0x80, 0x60]), PayloadClass::Srtp);
        assert_eq!(classify_payload(&[0xbf]), PayloadClass::Srtp);
        assert_eq!(classify_payload(&[0xc0]), PayloadClass::Other);
        assert_eq!(classify_payload(&[]), PayloadClass::Other);
    }

    #[test]
    fn channel_patterns() {
        let data: ChannelSet = [PayloadClass::Stun, PayloadClass::Dtls].into_iter().collect();
        assert_eq!(data.to_text(), "stun,dtls");
        assert!(!data.is_sdes_media());

        let media: ChannelSet = [PayloadClass::Srtp, PayloadClass::Stun].into_iter().collect();
        assert_eq!(media.to_text(), "stun,srtp");
        assert!(media.is_sdes_media());

        assert!(ChannelSet::empty().is_empty());
        assert_eq!(ChannelSet::parse("stun,srtp"), Some(media));
        assert_eq!(ChannelSet::parse(""), Some(ChannelSet::empty()));
        assert_eq!(ChannelSet::parse("stun,rtp"), None);
    }
}
