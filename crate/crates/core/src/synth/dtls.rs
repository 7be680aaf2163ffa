use alloc::vec;
use alloc::vec::Vec;

use super::cert::build_certificate;
use super::SynthError;
use crate::dtls::{
    is_ecdhe_suite, CertificateFeatures, ClientHelloFeatures, ServerHelloFeatures, DTLS_1_0, DTLS_1_2,
};

const CT_CHANGE_CIPHER_SPEC: u8 = 20;
const CT_ALERT: u8 = 21;
const CT_HANDSHAKE: u8 = 22;
const CT_APPLICATION_DATA: u8 = 23;

const HS_CLIENT_HELLO: u8 = 1;
const HS_SERVER_HELLO: u8 = 2;
const HS_HELLO_VERIFY_REQUEST: u8 = 3;
const HS_CERTIFICATE: u8 = 11;
const HS_SERVER_KEY_EXCHANGE: u8 = 12;
const HS_SERVER_HELLO_DONE: u8 = 14;

const EXT_SUPPORTED_GROUPS: u16 = 0x000a;
const EXT_EC_POINT_FORMATS: u16 = 0x000b;
const EXT_SIGNATURE_ALGORITHMS: u16 = 0x000d;
const EXT_USE_SRTP: u16 = 0x000e;
const EXT_HEARTBEAT: u16 = 0x000f;
const EXT_RENEGOTIATION_INFO: u16 = 0xff01;

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_u24(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_be_bytes()[1..]);
}

fn put_vec8(out: &mut Vec<u8>, v: &[u8], what: &'static str) -> Result<(), SynthError> {
    let len = u8::try_from(v.len()).map_err(|_| SynthError::TooLong(what))?;
    out.push(len);
    out.extend_from_slice(v);
    Ok(())
}

fn put_vec16(out: &mut Vec<u8>, v: &[u8], what: &'static str) -> Result<(), SynthError> {
    let len = u16::try_from(v.len()).map_err(|_| SynthError::TooLong(what))?;
    put_u16(out, len);
    out.extend_from_slice(v);
    Ok(())
}

fn put_vec24(out: &mut Vec<u8>, v: &[u8], what: &'static str) -> Result<(), SynthError> {
    if v.len() >= 1 << 24 {
        return Err(SynthError::TooLong(what));
    }
    put_u24(out, v.len());
    out.extend_from_slice(v);
    Ok(())
}

fn u16_bytes(list: &[u16]) -> Vec<u8> {
    list.iter().flat_map(|v| v.to_be_bytes()).collect()
}

fn client_extension_body(code: u16, f: &ClientHelloFeatures) -> Result<Vec<u8>, SynthError> {
    let mut body = Vec::new();
    match code {
        EXT_SUPPORTED_GROUPS => put_vec16(&mut body, &u16_bytes(&f.elliptic_curves), "supported groups")?,
        EXT_SIGNATURE_ALGORITHMS => {
            put_vec16(&mut body, &u16_bytes(&[0x0403, 0x0401, 0x0503, 0x0501, 0x0203, 0x0201]), "sigalgs")?
        }
        EXT_USE_SRTP => {
            put_vec16(&mut body, &u16_bytes(&f.srtp_profiles), "srtp profiles")?;
            body.push(0);
        }
        EXT_EC_POINT_FORMATS => body.extend_from_slice(&[1, 0]),
        EXT_RENEGOTIATION_INFO => body.push(0),
        EXT_HEARTBEAT => body.push(1),
        _ => {}
    }
    Ok(body)
}

/// ClientHello body for `f`. Fails when the flags and lists disagree with
/// the extension list, since such a hello cannot exist on the wire.
pub fn encode_client_hello(f: &ClientHelloFeatures) -> Result<Vec<u8>, SynthError> {
    let has = |code| f.extensions.contains(&code);
    if f.elliptic_curves.is_empty() == has(EXT_SUPPORTED_GROUPS) {
        return Err(SynthError::Inconsistent("curves and supported_groups must come together"));
    }
    if has(EXT_USE_SRTP) != f.use_srtp_present {
        return Err(SynthError::Inconsistent("use_srtp flag disagrees with extensions"));
    }
    if !f.srtp_profiles.is_empty() && !has(EXT_USE_SRTP) {
        return Err(SynthError::Inconsistent("srtp profiles without use_srtp"));
    }
    if has(EXT_SIGNATURE_ALGORITHMS) != f.signature_algorithms_present {
        return Err(SynthError::Inconsistent("signature_algorithms flag disagrees with extensions"));
    }
    if f.cipher_suites.is_empty() {
        return Err(SynthError::Inconsistent("no cipher suites"));
    }

    let mut b = Vec::new();
    put_u16(&mut b, f.hello_version);
    b.extend_from_slice(&[0x5a; 32]);
    put_vec8(&mut b, &[], "session id")?;
    put_vec8(&mut b, &vec![0xc0; f.cookie_length], "cookie")?;
    put_vec16(&mut b, &u16_bytes(&f.cipher_suites), "cipher suites")?;
    put_vec8(&mut b, &f.compression_methods, "compression methods")?;
    if !f.extensions.is_empty() {
        let mut block = Vec::new();
        for code in &f.extensions {
            put_u16(&mut block, *code);
            put_vec16(&mut block, &client_extension_body(*code, f)?, "extension")?;
        }
        put_vec16(&mut b, &block, "extensions")?;
    }
    Ok(b)
}

pub fn encode_server_hello(s: &ServerHelloFeatures) -> Result<Vec<u8>, SynthError> {
    let mut b = Vec::new();
    put_u16(&mut b, s.negotiated_version);
    b.extend_from_slice(&[0x3c; 32]);
    put_vec8(&mut b, &[], "session id")?;
    put_u16(&mut b, s.chosen_cipher_suite);
    b.push(s.chosen_compression);
    if !s.extensions.is_empty() {
        let mut block = Vec::new();
        for code in &s.extensions {
            put_u16(&mut block, *code);
            let body: &[u8] = match *code {
                EXT_USE_SRTP => &[0, 2, 0, 1, 0],
                EXT_RENEGOTIATION_INFO => &[0],
                EXT_EC_POINT_FORMATS => &[1, 0],
                _ => &[],
            };
            put_vec16(&mut block, body, "extension")?;
        }
        put_vec16(&mut b, &block, "extensions")?;
    }
    Ok(b)
}

/// Record and handshake sequencing for one side of one association.
#[derive(Debug, Clone)]
pub struct FlightBuilder {
    wire_version: u16,
    epoch: u16,
    record_seq: u64,
    message_seq: u16,
}

impl Default for FlightBuilder {
    fn default() -> Self {
        FlightBuilder { wire_version: DTLS_1_0, epoch: 0, record_seq: 0, message_seq: 0 }
    }
}

impl FlightBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_wire_version(mut self, wire_version: u16) -> Self {
        self.wire_version = wire_version;
        self
    }

    fn record(&mut self, content_type: u8, fragment: &[u8]) -> Vec<u8> {
        let mut r = vec![content_type];
        put_u16(&mut r, self.wire_version);
        put_u16(&mut r, self.epoch);
        r.extend_from_slice(&self.record_seq.to_be_bytes()[2..]);
        put_u16(&mut r, fragment.len() as u16);
        r.extend_from_slice(fragment);
        self.record_seq += 1;
        r
    }

    fn handshake_fragment(msg_type: u8, message_seq: u16, body: &[u8], offset: usize, len: usize) -> Vec<u8> {
        let mut h = vec![msg_type];
        put_u24(&mut h, body.len());
        put_u16(&mut h, message_seq);
        put_u24(&mut h, offset);
        put_u24(&mut h, len);
        h.extend_from_slice(&body[offset..offset + len]);
        h
    }

    fn whole_message(&mut self, msg_type: u8, body: &[u8]) -> Vec<u8> {
        let seq = self.message_seq;
        self.message_seq += 1;
        Self::handshake_fragment(msg_type, seq, body, 0, body.len())
    }

    /// One datagram per record. `fragment_plan` lists fragment lengths and
    /// must sum to the body length. With `duplicate_anomaly` every record
    /// is sent a second time, byte-identical apart from a fresh record
    /// sequence number.
    pub fn client_hello(
        &mut self,
        f: &ClientHelloFeatures,
        fragment_plan: Option<&[usize]>,
        duplicate_anomaly: bool,
    ) -> Result<Vec<Vec<u8>>, SynthError> {
        let body = encode_client_hello(f)?;
        if body.len() > 0xffff - 12 {
            return Err(SynthError::TooLong("client hello"));
        }
        let whole = [body.len()];
        let plan = fragment_plan.unwrap_or(&whole);
        if plan.iter().sum::<usize>() != body.len() || plan.contains(&0) {
            return Err(SynthError::InvalidFragmentPlan { body_len: body.len() });
        }
        let message_seq = self.message_seq;
        self.message_seq += 1;

        let mut fragments = Vec::new();
        let mut offset = 0;
        for len in plan {
            fragments.push(Self::handshake_fragment(HS_CLIENT_HELLO, message_seq, &body, offset, *len));
            offset += len;
        }
        let copies = if duplicate_anomaly { 2 } else { 1 };
        let mut out = Vec::new();
        for _ in 0..copies {
            for frag in &fragments {
                out.push(self.record(CT_HANDSHAKE, frag));
            }
        }
        Ok(out)
    }

    pub fn hello_verify_request(&mut self, cookie_length: usize) -> Result<Vec<u8>, SynthError> {
        let mut body = Vec::new();
        put_u16(&mut body, DTLS_1_0);
        put_vec8(&mut body, &vec![0xc0; cookie_length], "cookie")?;
        let msg = self.whole_message(HS_HELLO_VERIFY_REQUEST, &body);
        Ok(self.record(CT_HANDSHAKE, &msg))
    }

    /// ServerHello, Certificate, ServerKeyExchange (when a curve is set)
    /// and ServerHelloDone, one record each, in a single datagram.
    pub fn server_flight(
        &mut self,
        s: &ServerHelloFeatures,
        certificate: Option<&CertificateFeatures>,
    ) -> Result<Vec<u8>, SynthError> {
        if s.chosen_curve.is_some() && !is_ecdhe_suite(s.chosen_cipher_suite) {
            return Err(SynthError::Inconsistent("named curve with a non-ECDHE suite"));
        }
        let mut datagram = Vec::new();
        let hello = encode_server_hello(s)?;
        let msg = self.whole_message(HS_SERVER_HELLO, &hello);
        datagram.extend(self.record(CT_HANDSHAKE, &msg));

        if let Some(c) = certificate {
            let der = build_certificate(c.subject_common_name.as_deref(), c.not_before, c.not_after)?;
            let mut entry = Vec::new();
            put_vec24(&mut entry, &der, "certificate")?;
            let mut body = Vec::new();
            put_vec24(&mut body, &entry, "certificate list")?;
            let msg = self.whole_message(HS_CERTIFICATE, &body);
            datagram.extend(self.record(CT_HANDSHAKE, &msg));
        }

        if let Some(curve) = s.chosen_curve {
            let mut body = vec![3];
            put_u16(&mut body, curve);
            let mut point = vec![0x04];
            point.extend_from_slice(&[0x42; 64]);
            put_vec8(&mut body, &point, "ecdh point")?;
            if s.negotiated_version == DTLS_1_2 {
                put_u16(&mut body, 0x0401);
            }
            put_vec16(&mut body, &[0x99; 64], "signature")?;
            let msg = self.whole_message(HS_SERVER_KEY_EXCHANGE, &body);
            datagram.extend(self.record(CT_HANDSHAKE, &msg));
        }

        let msg = self.whole_message(HS_SERVER_HELLO_DONE, &[]);
        datagram.extend(self.record(CT_HANDSHAKE, &msg));
        Ok(datagram)
    }

    /// ChangeCipherSpec, then an opaque epoch-1 Finished.
    pub fn change_cipher_spec(&mut self) -> Vec<u8> {
        let mut datagram = self.record(CT_CHANGE_CIPHER_SPEC, &[1]);
        self.epoch += 1;
        self.record_seq = 0;
        datagram.extend(self.record(CT_HANDSHAKE, &[0xe7; 48]));
        datagram
    }

    /// Plaintext before the cipher change, opaque after it.
    pub fn alert(&mut self, level: u8, description: u8) -> Vec<u8> {
        if self.epoch == 0 {
            self.record(CT_ALERT, &[level, description])
        } else {
            self.record(CT_ALERT, &[0xa1; 26])
        }
    }

    pub fn application_data(&mut self, length: usize) -> Result<Vec<u8>, SynthError> {
        if length > 0xffff {
            return Err(SynthError::TooLong("application data"));
        }
        Ok(self.record(CT_APPLICATION_DATA, &vec![0xda; length]))
    }
}

/// ClientHello records from a fresh association (record sequence from 0).
pub fn build_client_hello(
    f: &ClientHelloFeatures,
    fragment_plan: Option<&[usize]>,
    duplicate_anomaly: bool,
) -> Result<Vec<Vec<u8>>, SynthError> {
    FlightBuilder::new().client_hello(f, fragment_plan, duplicate_anomaly)
}
