use alloc::vec::Vec;

use super::Cursor;

pub const RECORD_HEADER_LEN: usize = 13;
pub const HANDSHAKE_HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContentType {
    ChangeCipherSpec,
    Alert,
    Handshake,
    ApplicationData,
    Other(u8),
}

impl ContentType {
    pub fn from_code(code: u8) -> Self {
        match code {
            20 => ContentType::ChangeCipherSpec,
            21 => ContentType::Alert,
            22 => ContentType::Handshake,
            23 => ContentType::ApplicationData,
            other => ContentType::Other(other),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ContentType::ChangeCipherSpec => 20,
            ContentType::Alert => 21,
            ContentType::Handshake => 22,
            ContentType::ApplicationData => 23,
            ContentType::Other(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DtlsRecord {
    pub content_type: ContentType,
    pub wire_version: u16,
    pub epoch: u16,
    /// 48-bit record sequence number.
    pub sequence_number: u64,
    pub fragment: Vec<u8>,
}

impl DtlsRecord {
    /// Records past epoch 0 are encrypted and opaque.
    pub fn is_encrypted(&self) -> bool {
        self.epoch > 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordBatch {
    pub records: Vec<DtlsRecord>,
    /// 1 when the datagram ended in bytes that do not form a whole record.
    pub malformed_tail: u32,
}

/// Splits a datagram into back-to-back DTLS records.
pub fn parse_records(payload: &[u8]) -> RecordBatch {
    let mut batch = RecordBatch::default();
    let mut c = Cursor::new(payload);
    while c.remaining() > 0 {
        if c.remaining() < RECORD_HEADER_LEN {
            batch.malformed_tail = 1;
            break;
        }
        let content_type = ContentType::from_code(c.u8().unwrap());
        let wire_version = c.u16().unwrap();
        let epoch = c.u16().unwrap();
        let seq = c.bytes(6).unwrap();
        let sequence_number = seq.iter().fold(0u64, |acc, b| acc << 8 | *b as u64);
        match c.vec16() {
            Some(fragment) => batch.records.push(DtlsRecord {
                content_type,
                wire_version,
                epoch,
                sequence_number,
                fragment: fragment.to_vec(),
            }),
            None => {
                batch.malformed_tail = 1;
                break;
            }
        }
    }
    batch
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HandshakeType {
    ClientHello,
    ServerHello,
    HelloVerifyRequest,
    Certificate,
    ServerKeyExchange,
    CertificateRequest,
    ServerHelloDone,
    CertificateVerify,
    ClientKeyExchange,
    Finished,
    Other(u8),
}

impl HandshakeType {
    pub fn from_code(code: u8) -> Self {
        match code {
            1 => HandshakeType::ClientHello,
            2 => HandshakeType::ServerHello,
            3 => HandshakeType::HelloVerifyRequest,
            11 => HandshakeType::Certificate,
            12 => HandshakeType::ServerKeyExchange,
            13 => HandshakeType::CertificateRequest,
            14 => HandshakeType::ServerHelloDone,
            15 => HandshakeType::CertificateVerify,
            16 => HandshakeType::ClientKeyExchange,
            20 => HandshakeType::Finished,
            other => HandshakeType::Other(other),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            HandshakeType::ClientHello => 1,
            HandshakeType::ServerHello => 2,
            HandshakeType::HelloVerifyRequest => 3,
            HandshakeType::Certificate => 11,
            HandshakeType::ServerKeyExchange => 12,
            HandshakeType::CertificateRequest => 13,
            HandshakeType::ServerHelloDone => 14,
            HandshakeType::CertificateVerify => 15,
            HandshakeType::ClientKeyExchange => 16,
            HandshakeType::Finished => 20,
            HandshakeType::Other(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandshakeHeader {
    pub msg_type: HandshakeType,
    pub total_length: usize,
    pub message_seq: u16,
    pub fragment_offset: usize,
    pub fragment_length: usize,
}

impl HandshakeHeader {
    /// Reads one handshake fragment header and its bytes. `None` when the
    /// header is short, the fragment overruns, or the range exceeds the
    /// message length.
    pub fn parse(data: &[u8]) -> Option<(HandshakeHeader, &[u8], &[u8])> {
        let mut c = Cursor::new(data);
        let msg_type = HandshakeType::from_code(c.u8()?);
        let total_length = c.u24()?;
        let message_seq = c.u16()?;
        let fragment_offset = c.u24()?;
        let fragment_length = c.u24()?;
        if fragment_offset + fragment_length > total_length {
            return None;
        }
        let body = c.bytes(fragment_length)?;
        let header = HandshakeHeader { msg_type, total_length, message_seq, fragment_offset, fragment_length };
        Some((header, body, &data[HANDSHAKE_HEADER_LEN + fragment_length..]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn record(ct: u8, epoch: u16, seq: u64, body: &[u8]) -> Vec<u8> {
        let mut r = vec![ct, 0xfe, 0xff];
        r.extend_from_slice(&epoch.to_be_bytes());
        r.extend_from_slice(&seq.to_be_bytes()[2..]);
        r.extend_from_slice(&(body.len() as u16).to_be_bytes());
        r.extend_from_slice(body);
        r
    }

    #[test]
    fn back_to_back_records() {
        let mut dgram = record(22, 0, 0, &[1, 2, 3]);
        dgram.extend(record(22, 0, 1, &[4]));
        let batch = parse_records(&dgram);
        assert_eq!(batch.records.len(), 2);
        assert_eq!(batch.malformed_tail, 0);
        assert_eq!(batch.records[1].sequence_number, 1);
        assert_eq!(batch.records[0].fragment, vec![1, 2, 3]);
    }

    #[test]
    fn overlong_record_is_malformed_tail() {
        let mut r = record(22, 0, 0, &[1, 2, 3]);
        r[12] = 40;
        let batch = parse_records(&r);
        assert!(batch.records.is_empty());
        assert_eq!(batch.malformed_tail, 1);

        let mut r = record(22, 0, 0, &[1]);
        r.extend_from_slice(&[22, 0xfe]);
        let batch = parse_records(&r);
        assert_eq!(batch.records.len(), 1);
        assert_eq!(batch.malformed_tail, 1);
    }

    #[test]
    fn epoch_one_application_data() {
        let batch = parse_records(&record(23, 1, 0x0000_0102_0304, &[0xaa; 32]));
        assert_eq!(batch.records.len(), 1);
        let rec = &batch.records[0];
        assert!(rec.is_encrypted());
        assert_eq!(rec.content_type, ContentType::ApplicationData);
        assert_eq!(rec.sequence_number, 0x0102_0304);
    }

    #[test]
    fn handshake_header_range_check() {
        let mut h = vec![1, 0, 0, 10, 0, 0, 0, 0, 8, 0, 0, 4];
        h.extend_from_slice(&[0; 4]);
        assert!(HandshakeHeader::parse(&h).is_none());
        h[10] = 0;
        h[11] = 2;
        let (hdr, body, rest) = HandshakeHeader::parse(&h).unwrap();
        assert_eq!(hdr.msg_type, HandshakeType::ClientHello);
        assert_eq!(hdr.fragment_offset, 8);
        assert_eq!(body.len(), 2);
        assert_eq!(rest.len(), 2);
    }
}
