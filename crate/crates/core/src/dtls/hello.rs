use alloc::vec::Vec;

use super::{Cursor, EXT_SIGNATURE_ALGORITHMS, EXT_SUPPORTED_GROUPS, EXT_USE_SRTP};

/// Ordered feature vector of a ClientHello. Lists keep wire order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ClientHelloFeatures {
    pub hello_version: u16,
    pub cipher_suites: Vec<u16>,
    pub compression_methods: Vec<u8>,
    pub extensions: Vec<u16>,
    /// Body of the supported-groups extension; empty when it is absent.
    pub elliptic_curves: Vec<u16>,
    pub signature_algorithms_present: bool,
    pub use_srtp_present: bool,
    pub srtp_profiles: Vec<u16>,
    pub cookie_length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ServerHelloFeatures {
    pub negotiated_version: u16,
    pub chosen_cipher_suite: u16,
    pub chosen_compression: u8,
    pub extensions: Vec<u16>,
    /// Named curve from the ServerKeyExchange, when one was parsed.
    pub chosen_curve: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum HelloError {
    #[error("malformed hello: truncated {0}")]
    Truncated(&'static str),
    #[error("malformed hello: {0}")]
    Invalid(&'static str),
}

fn need<T>(v: Option<T>, what: &'static str) -> Result<T, HelloError> {
    v.ok_or(HelloError::Truncated(what))
}

fn u16_list(bytes: &[u8], what: &'static str) -> Result<Vec<u16>, HelloError> {
    if !bytes.len().is_multiple_of(2) {
        return Err(HelloError::Invalid(what));
    }
    Ok(bytes.chunks_exact(2).map(|p| u16::from_be_bytes([p[0], p[1]])).collect())
}

/// Extension codes in order, handing each body to `on_ext`.
fn walk_extensions(
    c: &mut Cursor<'_>,
    mut on_ext: impl FnMut(u16, &[u8]) -> Result<(), HelloError>,
) -> Result<Vec<u16>, HelloError> {
    let mut codes = Vec::new();
    if c.remaining() == 0 {
        return Ok(codes);
    }
    let block = need(c.vec16(), "extensions")?;
    if c.remaining() != 0 {
        return Err(HelloError::Invalid("trailing bytes after extensions"));
    }
    let mut e = Cursor::new(block);
    while e.remaining() > 0 {
        let code = need(e.u16(), "extension type")?;
        let body = need(e.vec16(), "extension body")?;
        on_ext(code, body)?;
        codes.push(code);
    }
    Ok(codes)
}

/// Parses a reassembled ClientHello body.
pub fn parse_client_hello(body: &[u8]) -> Result<ClientHelloFeatures, HelloError> {
    let mut c = Cursor::new(body);
    let hello_version = need(c.u16(), "version")?;
    need(c.bytes(32), "random")?;
    need(c.vec8(), "session id")?;
    let cookie = need(c.vec8(), "cookie")?;
    let cipher_suites = u16_list(need(c.vec16(), "cipher suites")?, "odd cipher suite length")?;
    if cipher_suites.is_empty() {
        return Err(HelloError::Invalid("empty cipher suite list"));
    }
    let compression_methods = need(c.vec8(), "compression methods")?.to_vec();

    let mut f = ClientHelloFeatures {
        hello_version,
        cipher_suites,
        compression_methods,
        cookie_length: cookie.len(),
        ..Default::default()
    };
    f.extensions = walk_extensions(&mut c, |code, ext| {
        match code {
            EXT_SUPPORTED_GROUPS => {
                let mut e = Cursor::new(ext);
                f.elliptic_curves = u16_list(need(e.vec16(), "supported groups")?, "odd group list")?;
            }
            EXT_SIGNATURE_ALGORITHMS => f.signature_algorithms_present = true,
            EXT_USE_SRTP => {
                let mut e = Cursor::new(ext);
                f.srtp_profiles = u16_list(need(e.vec16(), "srtp profiles")?, "odd srtp profile list")?;
                need(e.vec8(), "srtp mki")?;
                f.use_srtp_present = true;
            }
            _ => {}
        }
        Ok(())
    })?;
    Ok(f)
}

/// Parses a reassembled ServerHello body. `chosen_curve` is left empty;
/// it comes from the ServerKeyExchange.
pub fn parse_server_hello(body: &[u8]) -> Result<ServerHelloFeatures, HelloError> {
    let mut c = Cursor::new(body);
    let negotiated_version = need(c.u16(), "version")?;
    need(c.bytes(32), "random")?;
    need(c.vec8(), "session id")?;
    let chosen_cipher_suite = need(c.u16(), "cipher suite")?;
    let chosen_compression = need(c.u8(), "compression")?;
    let extensions = walk_extensions(&mut c, |_, _| Ok(()))?;
    Ok(ServerHelloFeatures {
        negotiated_version,
        chosen_cipher_suite,
        chosen_compression,
        extensions,
        chosen_curve: None,
    })
}

/// Named curve from an ECDHE ServerKeyExchange (curve_type 3 layout).
pub fn parse_server_key_exchange_curve(body: &[u8]) -> Option<u16> {
    let mut c = Cursor::new(body);
    if c.u8()? != 3 {
        return None;
    }
    c.u16()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    // Assembled by hand, independent of the synth builders.
    fn client_hello(suites: &[u16], exts: &[(u16, Vec<u8>)]) -> Vec<u8> {
        let mut b = vec![0xfe, 0xff];
        b.extend_from_slice(&[0x11; 32]);
        b.push(0); // session id
        b.push(0); // cookie
        b.extend_from_slice(&((suites.len() * 2) as u16).to_be_bytes());
        for s in suites {
            b.extend_from_slice(&s.to_be_bytes());
        }
        b.extend_from_slice(&[1, 0]); // null compression
        if !exts.is_empty() {
            let mut block = Vec::new();
            for (code, body) in exts {
                block.extend_from_slice(&code.to_be_bytes());
                block.extend_from_slice(&(body.len() as u16).to_be_bytes());
                block.extend_from_slice(body);
            }
            b.extend_from_slice(&(block.len() as u16).to_be_bytes());
            b.extend(block);
        }
        b
    }

    fn suites(n: u16) -> Vec<u16> {
        (0..n).map(|i| 0xc000 + i).collect()
    }

    #[test]
    fn seventeen_suites_with_sigalgs_srtp_reneg() {
        let body = client_hello(
            &suites(17),
            &[
                (0xff01, vec![0]),
                (0x000d, vec![0, 4, 4, 1, 4, 3]),
                (0x000e, vec![0, 4, 0, 1, 0, 2, 0]),
            ],
        );
        let f = parse_client_hello(&body).unwrap();
        assert_eq!(f.hello_version, 0xfeff);
        assert_eq!(f.cipher_suites.len(), 17);
        assert!(f.signature_algorithms_present);
        assert!(f.use_srtp_present);
        assert_eq!(f.srtp_profiles, vec![1, 2]);
        assert!(f.extensions.contains(&0xff01));
        assert_eq!(f.extensions, vec![0xff01, 0x000d, 0x000e]);
        assert!(f.elliptic_curves.is_empty());
    }

    #[test]
    fn seventy_three_suites_with_heartbeat() {
        let f = parse_client_hello(&client_hello(&suites(73), &[(0x000f, vec![1])])).unwrap();
        assert_eq!(f.cipher_suites.len(), 73);
        assert!(f.extensions.contains(&0x000f));
    }

    #[test]
    fn nine_suites_two_curves() {
        let body = client_hello(
            &suites(9),
            &[(0x000e, vec![0, 2, 0, 1, 0]), (0x000a, vec![0, 4, 0, 0x17, 0, 0x18])],
        );
        let f = parse_client_hello(&body).unwrap();
        assert_eq!(
            (f.cipher_suites.len(), f.compression_methods.len(), f.elliptic_curves.len()),
            (9, 1, 2)
        );
        assert_eq!(f.compression_methods, vec![0]);
        assert_eq!(f.elliptic_curves, vec![0x0017, 0x0018]);
    }

    #[test]
    fn structural_overruns() {
        let body = client_hello(&suites(3), &[]);
        assert!(matches!(parse_client_hello(&body[..40]), Err(HelloError::Truncated(_))));
        let mut bad = body.clone();
        bad.push(0xee);
        assert!(parse_client_hello(&bad).is_err());
        assert!(parse_client_hello(&client_hello(&[], &[])).is_err());
    }

    fn server_hello(version: u16, suite: u16, exts: &[u16]) -> Vec<u8> {
        let mut b = version.to_be_bytes().to_vec();
        b.extend_from_slice(&[0x22; 32]);
        b.push(0);
        b.extend_from_slice(&suite.to_be_bytes());
        b.push(0);
        let mut block = Vec::new();
        for code in exts {
            block.extend_from_slice(&code.to_be_bytes());
            if *code == 0x000e {
                block.extend_from_slice(&[0, 5, 0, 2, 0, 1, 0]);
            } else {
                block.extend_from_slice(&[0, 1, 0]);
            }
        }
        b.extend_from_slice(&(block.len() as u16).to_be_bytes());
        b.extend(block);
        b
    }

    #[test]
    fn server_hello_features() {
        let s = parse_server_hello(&server_hello(0xfefd, 0xc02f, &[0x000e, 0xff01])).unwrap();
        assert_eq!(s.negotiated_version, 0xfefd);
        assert_eq!(s.chosen_cipher_suite, 0xc02f);
        assert_eq!(super::super::cipher_suite_name(s.chosen_cipher_suite), Some("TLS_ECDHE_RSA_WITH_AES_128_GCM_SHA256"));
        assert_eq!(s.extensions, vec![0x000e, 0xff01]);

        let s = parse_server_hello(&server_hello(0xfeff, 0xc014, &[0x000e])).unwrap();
        assert_eq!(super::super::cipher_suite_name(s.chosen_cipher_suite), Some("TLS_ECDHE_RSA_WITH_AES_256_CBC_SHA"));
        assert!(s.extensions.contains(&0x000e));
    }

    #[test]
    fn ske_named_curve() {
        assert_eq!(parse_server_key_exchange_curve(&[3, 0, 0x17, 65]), Some(0x0017));
        assert_eq!(parse_server_key_exchange_curve(&[1, 0, 0x17]), None);
        assert_eq!(parse_server_key_exchange_curve(&[3, 0]), None);
    }
}
