//! Fixed-template DER certificates. Structurally valid, cryptographically
//! meaningless: the key and signature are placeholder bytes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::SynthError;
use crate::time::civil_from_days;

/// X.520 upper bound for commonName.
pub const MAX_COMMON_NAME: usize = 64;

const OID_COMMON_NAME: &[u8] = &[0x55, 0x04, 0x03];
const OID_ORGANIZATION: &[u8] = &[0x55, 0x04, 0x0a];
const OID_ECDSA_SHA256: &[u8] = &[0x2a, 0x86, 0x48, 0xce, 0x3d, 0x04, 0x03, 0x02];
const OID_EC_PUBLIC_KEY: &[u8] = &[0x2a, 0x86, 0x48, 0xce, 0x3d, 0x02, 0x01];
const OID_PRIME256V1: &[u8] = &[0x2a, 0x86, 0x48, 0xce, 0x3d, 0x03, 0x01, 0x07];

fn der(tag: u8, content: &[u8]) -> Vec<u8> {
    let mut out = vec![tag];
    let len = content.len();
    match len {
        0..=0x7f => out.push(len as u8),
        0x80..=0xff => out.extend_from_slice(&[0x81, len as u8]),
        0x100..=0xffff => out.extend_from_slice(&[0x82, (len >> 8) as u8, len as u8]),
        _ => out.extend_from_slice(&[0x83, (len >> 16) as u8, (len >> 8) as u8, len as u8]),
    }
    out.extend_from_slice(content);
    out
}

fn seq(parts: &[&[u8]]) -> Vec<u8> {
    der(0x30, &parts.concat())
}

fn name(cn: Option<&str>) -> Vec<u8> {
    let (oid, value) = match cn {
        Some(cn) => (OID_COMMON_NAME, cn.as_bytes()),
        None => (OID_ORGANIZATION, &b"synthetic"[..]),
    };
    let atv = seq(&[&der(0x06, oid), &der(0x0c, value)]);
    seq(&[&der(0x31, &atv)])
}

/// UTCTime for 1950..=2049, GeneralizedTime otherwise.
fn time(epoch_secs: i64) -> Result<Vec<u8>, SynthError> {
    let days = epoch_secs.div_euclid(86_400);
    let secs = epoch_secs.rem_euclid(86_400);
    let (year, month, day) = civil_from_days(days);
    if !(1..=9999).contains(&year) {
        return Err(SynthError::TimeOutOfRange);
    }
    let clock = format!("{:02}{:02}{:02}{:02}{:02}Z", month, day, secs / 3600, secs / 60 % 60, secs % 60);
    Ok(if (1950..2050).contains(&year) {
        der(0x17, format!("{:02}{}", year % 100, clock).as_bytes())
    } else {
        der(0x18, format!("{:04}{}", year, clock).as_bytes())
    })
}

pub fn build_certificate(cn: Option<&str>, not_before: i64, not_after: i64) -> Result<Vec<u8>, SynthError> {
    if let Some(cn) = cn {
        if cn.len() > MAX_COMMON_NAME {
            return Err(SynthError::CommonNameTooLong { max: MAX_COMMON_NAME });
        }
    }
    if not_before > not_after {
        return Err(SynthError::InvertedValidity);
    }
    let sig_alg = seq(&[&der(0x06, OID_ECDSA_SHA256)]);
    let subject = name(cn);
    let validity = seq(&[&time(not_before)?, &time(not_after)?]);
    let mut point = vec![0x00, 0x04];
    point.extend_from_slice(&[0x42; 64]);
    let spki = seq(&[&seq(&[&der(0x06, OID_EC_PUBLIC_KEY), &der(0x06, OID_PRIME256V1)]), &der(0x03, &point)]);
    let tbs = seq(&[
        &der(0xa0, &der(0x02, &[2])),
        &der(0x02, &[0x00, 0xf1, 0xe2, 0xd3, 0xc4, 0xb5, 0xa6, 0x97]),
        &sig_alg,
        &subject,
        &validity,
        &subject,
        &spki,
    ]);
    let signature = seq(&[&der(0x02, &[1]), &der(0x02, &[1])]);
    let mut sig_bits = vec![0x00];
    sig_bits.extend(signature);
    Ok(seq(&[&tbs, &sig_alg, &der(0x03, &sig_bits)]))
}
