//! Handshake feature sets for the five studied applications. Values the
//! published observations state are reproduced as given; everything else
//! (extension order, curve lists, SRTP profiles, dates) is a plausible filler.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::dtls::{
    CertificateFeatures, ClientHelloFeatures, ServerHelloFeatures, CURVE_SECP256R1, CURVE_SECP384R1,
    CURVE_SECP521R1, DTLS_1_0, DTLS_1_2, EXT_EC_POINT_FORMATS, EXT_HEARTBEAT, EXT_RENEGOTIATION_INFO,
    EXT_SIGNATURE_ALGORITHMS, EXT_SUPPORTED_GROUPS, EXT_USE_SRTP, SUITE_ECDHE_RSA_AES_128_GCM_SHA256,
    SUITE_ECDHE_RSA_AES_256_CBC_SHA,
};

/// 2016-04-01T00:00:00Z
pub const CERT_NOT_BEFORE: i64 = 1_459_468_800;
pub const CERT_NOT_AFTER: i64 = CERT_NOT_BEFORE + 30 * 86_400;

const SRTP_AES128_CM_SHA1_80: u16 = 0x0001;
const SRTP_AES128_CM_SHA1_32: u16 = 0x0002;

pub fn webrtc_certificate() -> CertificateFeatures {
    CertificateFeatures::new(Some("WebRTC".to_string()), CERT_NOT_BEFORE, CERT_NOT_AFTER)
}

fn nine_suite_client() -> ClientHelloFeatures {
    ClientHelloFeatures {
        hello_version: DTLS_1_0,
        cipher_suites: vec![0xc02b, 0xc02f, 0xc00a, 0xc009, 0xc013, 0xc014, 0x0033, 0x0039, 0x002f],
        compression_methods: vec![0],
        extensions: vec![EXT_SUPPORTED_GROUPS, EXT_EC_POINT_FORMATS, EXT_USE_SRTP],
        elliptic_curves: vec![CURVE_SECP256R1, CURVE_SECP384R1],
        signature_algorithms_present: false,
        use_srtp_present: true,
        srtp_profiles: vec![SRTP_AES128_CM_SHA1_80, SRTP_AES128_CM_SHA1_32],
        cookie_length: 0,
    }
}

fn c014_server(chosen_curve: Option<u16>) -> ServerHelloFeatures {
    ServerHelloFeatures {
        negotiated_version: DTLS_1_0,
        chosen_cipher_suite: SUITE_ECDHE_RSA_AES_256_CBC_SHA,
        chosen_compression: 0,
        extensions: vec![EXT_RENEGOTIATION_INFO, EXT_USE_SRTP],
        chosen_curve,
    }
}

pub fn facebook_client() -> ClientHelloFeatures {
    nine_suite_client()
}

pub fn facebook_server() -> (ServerHelloFeatures, CertificateFeatures) {
    (c014_server(Some(CURVE_SECP256R1)), webrtc_certificate())
}

pub fn opentok_client() -> ClientHelloFeatures {
    let cipher_suites: Vec<u16> = (0xc001..=0xc032).chain(0x0001..=0x0017).collect();
    ClientHelloFeatures {
        hello_version: DTLS_1_0,
        cipher_suites,
        compression_methods: vec![0],
        extensions: vec![EXT_SUPPORTED_GROUPS, EXT_EC_POINT_FORMATS, EXT_USE_SRTP, EXT_HEARTBEAT],
        elliptic_curves: vec![CURVE_SECP256R1, CURVE_SECP384R1, CURVE_SECP521R1],
        signature_algorithms_present: false,
        use_srtp_present: true,
        srtp_profiles: vec![SRTP_AES128_CM_SHA1_80, SRTP_AES128_CM_SHA1_32],
        cookie_length: 0,
    }
}

pub fn opentok_server() -> (ServerHelloFeatures, CertificateFeatures) {
    (c014_server(Some(CURVE_SECP256R1)), webrtc_certificate())
}

pub fn sharefest_client() -> ClientHelloFeatures {
    nine_suite_client()
}

pub fn sharefest_server() -> (ServerHelloFeatures, CertificateFeatures) {
    (c014_server(Some(CURVE_SECP256R1)), webrtc_certificate())
}

pub fn snowflake_client() -> ClientHelloFeatures {
    ClientHelloFeatures {
        hello_version: DTLS_1_0,
        cipher_suites: vec![
            0xc02b, 0xc02f, 0x009e, 0xcca9, 0xcca8, 0xccaa, 0xc00a, 0xc014, 0x0039, 0xc009, 0xc013, 0x0033,
            0x009c, 0x0035, 0x002f, 0x000a, 0x00ff,
        ],
        compression_methods: vec![0],
        extensions: vec![EXT_RENEGOTIATION_INFO, EXT_SIGNATURE_ALGORITHMS, EXT_USE_SRTP],
        elliptic_curves: vec![],
        signature_algorithms_present: true,
        use_srtp_present: true,
        srtp_profiles: vec![SRTP_AES128_CM_SHA1_80],
        cookie_length: 0,
    }
}

pub fn snowflake_server() -> (ServerHelloFeatures, CertificateFeatures) {
    let server = ServerHelloFeatures {
        negotiated_version: DTLS_1_2,
        chosen_cipher_suite: SUITE_ECDHE_RSA_AES_128_GCM_SHA256,
        chosen_compression: 0,
        extensions: vec![EXT_USE_SRTP, EXT_RENEGOTIATION_INFO],
        chosen_curve: None,
    };
    (server, webrtc_certificate())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stated_counts() {
        assert_eq!(facebook_client().cipher_suites.len(), 9);
        assert_eq!(facebook_client().elliptic_curves.len(), 2);
        assert_eq!(opentok_client().cipher_suites.len(), 73);
        assert!(opentok_client().extensions.contains(&0x000f));
        assert_eq!(snowflake_client().cipher_suites.len(), 17);
        assert_eq!(webrtc_certificate().validity_days, 30.0);
    }
}
