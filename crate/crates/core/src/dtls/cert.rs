//! Just enough DER to pull the subject CN and validity out of a leaf
//! certificate. Nothing is verified.

use alloc::string::String;
use alloc::vec::Vec;

use super::Cursor;
use crate::time::{civil_from_days, days_from_civil};

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateFeatures {
    pub subject_common_name: Option<String>,
    /// Seconds since the Unix epoch.
    pub not_before: i64,
    pub not_after: i64,
    pub validity_days: f64,
}

impl CertificateFeatures {
    pub fn new(subject_common_name: Option<String>, not_before: i64, not_after: i64) -> Self {
        CertificateFeatures {
            subject_common_name,
            not_before,
            not_after,
            validity_days: (not_after - not_before) as f64 / 86_400.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CertError {
    #[error("empty certificate list")]
    NoCertificate,
    #[error("certificate list truncated")]
    Truncated,
    #[error("DER structure error: {0}")]
    Der(&'static str),
    #[error("invalid time value")]
    BadTime,
    #[error("notBefore is after notAfter")]
    InvertedValidity,
}

const TAG_INTEGER: u8 = 0x02;
const TAG_OID: u8 = 0x06;
const TAG_UTF8: u8 = 0x0c;
const TAG_PRINTABLE: u8 = 0x13;
const TAG_T61: u8 = 0x14;
const TAG_IA5: u8 = 0x16;
const TAG_UTC_TIME: u8 = 0x17;
const TAG_GENERALIZED_TIME: u8 = 0x18;
const TAG_BMP: u8 = 0x1e;
const TAG_SEQUENCE: u8 = 0x30;
const TAG_SET: u8 = 0x31;
const TAG_EXPLICIT_0: u8 = 0xa0;

const OID_COMMON_NAME: [u8; 3] = [0x55, 0x04, 0x03];

/// One TLV: (tag, contents, rest).
fn tlv(data: &[u8]) -> Result<(u8, &[u8], &[u8]), CertError> {
    let (&tag, rest) = data.split_first().ok_or(CertError::Der("missing tag"))?;
    if tag & 0x1f == 0x1f {
        return Err(CertError::Der("high tag number"));
    }
    let (&first, rest) = rest.split_first().ok_or(CertError::Der("missing length"))?;
    let (len, rest) = if first < 0x80 {
        (first as usize, rest)
    } else {
        let n = (first & 0x7f) as usize;
        if n == 0 || n > 4 || rest.len() < n {
            return Err(CertError::Der("bad length"));
        }
        let len = rest[..n].iter().fold(0usize, |acc, b| acc << 8 | *b as usize);
        (len, &rest[n..])
    };
    if rest.len() < len {
        return Err(CertError::Der("length overrun"));
    }
    Ok((tag, &rest[..len], &rest[len..]))
}

fn expect(data: &[u8], want: u8) -> Result<(&[u8], &[u8]), CertError> {
    let (tag, content, rest) = tlv(data)?;
    if tag != want {
        return Err(CertError::Der("unexpected tag"));
    }
    Ok((content, rest))
}

/// Features of the leaf certificate in a Certificate handshake body.
pub fn parse_certificate_features(body: &[u8]) -> Result<CertificateFeatures, CertError> {
    let mut c = Cursor::new(body);
    let list = c.vec24().ok_or(CertError::Truncated)?;
    if list.is_empty() {
        return Err(CertError::NoCertificate);
    }
    let leaf = Cursor::new(list).vec24().ok_or(CertError::Truncated)?;
    parse_der_certificate(leaf)
}

pub fn parse_der_certificate(der: &[u8]) -> Result<CertificateFeatures, CertError> {
    let (cert, _) = expect(der, TAG_SEQUENCE)?;
    let (tbs, _) = expect(cert, TAG_SEQUENCE)?;

    let mut rest = tbs;
    let (tag, _, after) = tlv(rest)?;
    if tag == TAG_EXPLICIT_0 {
        rest = after;
    }
    let (_serial, rest) = expect(rest, TAG_INTEGER)?;
    let (_sig_alg, rest) = expect(rest, TAG_SEQUENCE)?;
    let (_issuer, rest) = expect(rest, TAG_SEQUENCE)?;
    let (validity, rest) = expect(rest, TAG_SEQUENCE)?;
    let (subject, _) = expect(rest, TAG_SEQUENCE)?;

    let (t1, c1, after) = tlv(validity)?;
    let (t2, c2, _) = tlv(after)?;
    let not_before = parse_time(t1, c1)?;
    let not_after = parse_time(t2, c2)?;
    if not_before > not_after {
        return Err(CertError::InvertedValidity);
    }

    Ok(CertificateFeatures::new(common_name(subject)?, not_before, not_after))
}

fn common_name(name: &[u8]) -> Result<Option<String>, CertError> {
    let mut rdns = name;
    while !rdns.is_empty() {
        let (set, next) = expect(rdns, TAG_SET)?;
        rdns = next;
        let mut atvs = set;
        while !atvs.is_empty() {
            let (atv, next) = expect(atvs, TAG_SEQUENCE)?;
            atvs = next;
            let (oid, value) = expect(atv, TAG_OID)?;
            if oid == OID_COMMON_NAME {
                let (tag, text, _) = tlv(value)?;
                return decode_string(tag, text).map(Some);
            }
        }
    }
    Ok(None)
}

fn decode_string(tag: u8, bytes: &[u8]) -> Result<String, CertError> {
    match tag {
        TAG_UTF8 | TAG_PRINTABLE | TAG_IA5 | TAG_T61 => Ok(String::from_utf8_lossy(bytes).into_owned()),
        TAG_BMP => {
            if !bytes.len().is_multiple_of(2) {
                return Err(CertError::Der("odd BMPString"));
            }
            let units: Vec<u16> = bytes.chunks_exact(2).map(|p| u16::from_be_bytes([p[0], p[1]])).collect();
            Ok(char::decode_utf16(units).map(|r| r.unwrap_or(char::REPLACEMENT_CHARACTER)).collect())
        }
        _ => Err(CertError::Der("unsupported string type")),
    }
}

fn digits(b: &[u8]) -> Result<u32, CertError> {
    b.iter().try_fold(0u32, |acc, d| {
        if d.is_ascii_digit() {
            Ok(acc * 10 + (d - b'0') as u32)
        } else {
            Err(CertError::BadTime)
        }
    })
}

/// UTCTime `YYMMDDHHMMSSZ` or GeneralizedTime `YYYYMMDDHHMMSSZ`.
fn parse_time(tag: u8, text: &[u8]) -> Result<i64, CertError> {
    let (year, rest) = match tag {
        TAG_UTC_TIME if text.len() == 13 => {
            let yy = digits(&text[..2])? as i64;
            (if yy < 50 { 2000 + yy } else { 1900 + yy }, &text[2..])
        }
        TAG_GENERALIZED_TIME if text.len() == 15 => (digits(&text[..4])? as i64, &text[4..]),
        TAG_UTC_TIME | TAG_GENERALIZED_TIME => return Err(CertError::BadTime),
        _ => return Err(CertError::Der("expected a time")),
    };
    if rest[10] != b'Z' {
        return Err(CertError::BadTime);
    }
    let month = digits(&rest[0..2])?;
    let day = digits(&rest[2..4])?;
    let hour = digits(&rest[4..6])?;
    let minute = digits(&rest[6..8])?;
    let second = digits(&rest[8..10])?;
    if !(1..=12).contains(&month) || day == 0 || hour > 23 || minute > 59 || second > 59 {
        return Err(CertError::BadTime);
    }
    let days = days_from_civil(year, month, day);
    if civil_from_days(days) != (year, month, day) {
        return Err(CertError::BadTime);
    }
    Ok(days * 86_400 + (hour * 3600 + minute * 60 + second) as i64)
}
