use alloc::vec::Vec;

use super::SynthError;
use crate::stun::{Class, Method, StunAttribute, ATTR_ERROR_CODE, ATTR_REALM, ATTR_SOFTWARE, ATTR_USERNAME, MAGIC_COOKIE};

fn message_type(method: Method, class: Class) -> u16 {
    let m = method.code() & 0x0fff;
    let c: u16 = match class {
        Class::Request => 0b00,
        Class::Indication => 0b01,
        Class::SuccessResponse => 0b10,
        Class::ErrorResponse => 0b11,
    };
    (m & 0x000f) | (m & 0x0070) << 1 | (m & 0x0f80) << 2 | (c & 0b01) << 4 | (c & 0b10) << 7
}

/// Serializes a STUN message, attributes in the given order, each value
/// zero-padded to a 4-byte boundary.
pub fn build_stun_message(
    method: Method,
    class: Class,
    transaction_id: [u8; 12],
    attributes: &[StunAttribute],
) -> Result<Vec<u8>, SynthError> {
    let mut body = Vec::new();
    for attr in attributes {
        let len = u16::try_from(attr.value.len()).map_err(|_| SynthError::TooLong("STUN attribute"))?;
        body.extend_from_slice(&attr.attr_type.to_be_bytes());
        body.extend_from_slice(&len.to_be_bytes());
        body.extend_from_slice(&attr.value);
        body.resize(body.len().next_multiple_of(4), 0);
    }
    let length = u16::try_from(body.len()).map_err(|_| SynthError::TooLong("STUN message"))?;

    let mut out = Vec::with_capacity(20 + body.len());
    out.extend_from_slice(&message_type(method, class).to_be_bytes());
    out.extend_from_slice(&length.to_be_bytes());
    out.extend_from_slice(&MAGIC_COOKIE.to_be_bytes());
    out.extend_from_slice(&transaction_id);
    out.extend(body);
    Ok(out)
}

pub fn software(text: &str) -> StunAttribute {
    StunAttribute::new(ATTR_SOFTWARE, text.as_bytes().to_vec())
}

pub fn realm(text: &str) -> StunAttribute {
    StunAttribute::new(ATTR_REALM, text.as_bytes().to_vec())
}

pub fn username(text: &str) -> StunAttribute {
    StunAttribute::new(ATTR_USERNAME, text.as_bytes().to_vec())
}

pub fn error_code(code: u16, reason: &str) -> StunAttribute {
    let mut v = Vec::with_capacity(4 + reason.len());
    v.extend_from_slice(&[0, 0, (code / 100) as u8 & 0x07, (code % 100) as u8]);
    v.extend_from_slice(reason.as_bytes());
    StunAttribute::new(ATTR_ERROR_CODE, v)
}
