//! Scenario files: a line-oriented description of flows and a packet
//! timeline, rendered to a capture by `rtcfp synth`.
//!
//! ```text
//! # definitions
//! flow   NAME  INITIATOR  RESPONDER          # 10.0.0.1:5000  or  [2001:db8::1]:5000
//! hello  NAME  version=feff suites=c02b,c02f,c001..c005 exts=000a,000e curves=0017 comp=00 srtp=0001 cookie=0
//! server NAME  version=fefd suite=c02f comp=00 exts=000e,ff01 [curve=0017]
//! cert   NAME  [cn=TEXT] not_before=RFC3339 (not_after=RFC3339 | days=N)
//!
//! # timeline: at SECONDS FLOW (>|<) EVENT ...
//! at 0.0 f > stun binding request [txid=HEX24] [software=TEXT] [realm=TEXT] [username=TEXT] [error=CODE[:REASON]] [attr=TYPE:HEX]
//! at 1.0 f > hello NAME [frag=N,N,...,rest] [dup]
//! at 1.0 f < hvr COOKIE_LEN
//! at 1.1 f < server NAME [cert=NAME]
//! at 1.2 f > ccs
//! at 1.3 f < alert LEVEL DESCRIPTION
//! at 1.4 f > appdata LEN
//! at 1.5 f > srtp LEN
//! at 1.6 f > raw HEX
//! ```
//!
//! `>` is initiator to responder. Tokens may be double-quoted. The hello
//! flags for signature_algorithms and use_srtp follow from `exts`.

use std::collections::BTreeMap;
use std::net::IpAddr;

use chrono::DateTime;
use rtcfp_core::dtls::{CertificateFeatures, ClientHelloFeatures, ServerHelloFeatures};
use rtcfp_core::dtls::{EXT_SIGNATURE_ALGORITHMS, EXT_USE_SRTP};
use rtcfp_core::stun::{Class, Method, StunAttribute};
use rtcfp_core::synth::dtls::encode_client_hello;
use rtcfp_core::synth::{self, stun as sstun, PayloadSpec, SynthError, SynthEvent, SynthFlow, SynthPacket, SynthScenario};
use rtcfp_core::{Direction, Endpoint, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("scenario line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub synth: SynthScenario,
    /// Source line of each timeline event.
    pub event_lines: Vec<usize>,
    pub hellos: BTreeMap<String, ClientHelloFeatures>,
    pub servers: BTreeMap<String, ServerHelloFeatures>,
    pub certs: BTreeMap<String, CertificateFeatures>,
}

impl Scenario {
    pub fn render(&self) -> Result<Vec<SynthPacket>, ScenarioError> {
        synth::render(&self.synth).map_err(|e| {
            let index = match e {
                SynthError::UnorderedTimeline { index } | SynthError::UnknownFlow { index } => Some(index),
                _ => None,
            };
            let line = index.and_then(|i| self.event_lines.get(i).copied()).unwrap_or(0);
            ScenarioError { line, message: e.to_string() }
        })
    }
}

fn parse_hex_u16(s: &str) -> Result<u16, String> {
    u16::from_str_radix(s.trim_start_matches("0x"), 16).map_err(|_| format!("bad 16-bit hex code {s:?}"))
}

fn parse_hex_u8(s: &str) -> Result<u8, String> {
    u8::from_str_radix(s.trim_start_matches("0x"), 16).map_err(|_| format!("bad 8-bit hex code {s:?}"))
}

/// `a,b,c` with `lo..hi` inclusive ranges.
fn parse_u16_list(s: &str) -> Result<Vec<u16>, String> {
    let mut out = Vec::new();
    for item in s.split(',').filter(|i| !i.is_empty()) {
        match item.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (parse_hex_u16(lo)?, parse_hex_u16(hi)?);
                if lo > hi {
                    return Err(format!("empty range {item:?}"));
                }
                out.extend(lo..=hi);
            }
            None => out.push(parse_hex_u16(item)?),
        }
    }
    Ok(out)
}

fn parse_bytes(s: &str) -> Result<Vec<u8>, String> {
    if !s.len().is_multiple_of(2) {
        return Err(format!("odd-length hex {s:?}"));
    }
    (0..s.len()).step_by(2).map(|i| parse_hex_u8(&s[i..i + 2])).collect()
}

fn parse_endpoint(s: &str) -> Result<Endpoint, String> {
    let bad = || format!("bad endpoint {s:?}");
    let (addr, port) = match s.strip_prefix('[') {
        Some(rest) => {
            let (a, p) = rest.split_once("]:").ok_or_else(bad)?;
            (a, p)
        }
        None => s.rsplit_once(':').ok_or_else(bad)?,
    };
    let addr: IpAddr = addr.parse().map_err(|_| bad())?;
    Ok(Endpoint::new(addr, port.parse().map_err(|_| bad())?))
}

/// Decimal seconds with at most six fractional digits.
fn parse_time(s: &str) -> Result<Timestamp, String> {
    let bad = || format!("bad time {s:?}");
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let secs: u64 = whole.parse().map_err(|_| bad())?;
    let micros: u32 = if frac.is_empty() { 0 } else { format!("{frac:0<6}").parse().map_err(|_| bad())? };
    if secs > u64::from(u32::MAX) {
        return Err(bad());
    }
    Ok(Timestamp::from_parts(secs, micros))
}

fn parse_rfc3339(s: &str) -> Result<i64, String> {
    DateTime::parse_from_rfc3339(s).map(|d| d.timestamp()).map_err(|e| format!("bad time {s:?}: {e}"))
}

/// `key=value` arguments, in order, with duplicate keys rejected.
fn key_values<'a>(args: &'a [String], allowed: &[&str]) -> Result<Vec<(&'a str, &'a str)>, String> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for a in args {
        let (k, v) = a.split_once('=').ok_or_else(|| format!("expected key=value, got {a:?}"))?;
        if !allowed.contains(&k) {
            return Err(format!("unknown key {k:?}"));
        }
        if seen.contains(&k) && k != "attr" && k != "error" {
            return Err(format!("duplicate key {k:?}"));
        }
        seen.push(k);
        out.push((k, v));
    }
    Ok(out)
}

fn parse_hello(args: &[String]) -> Result<ClientHelloFeatures, String> {
    let mut f = ClientHelloFeatures::default();
    let mut version = None;
    for (k, v) in key_values(args, &["version", "suites", "exts", "curves", "comp", "srtp", "cookie"])? {
        match k {
            "version" => version = Some(parse_hex_u16(v)?),
            "suites" => f.cipher_suites = parse_u16_list(v)?,
            "exts" => f.extensions = parse_u16_list(v)?,
            "curves" => f.elliptic_curves = parse_u16_list(v)?,
            "comp" => f.compression_methods = v.split(',').map(parse_hex_u8).collect::<Result<_, _>>()?,
            "srtp" => f.srtp_profiles = parse_u16_list(v)?,
            "cookie" => f.cookie_length = v.parse().map_err(|_| format!("bad cookie length {v:?}"))?,
            _ => unreachable!(),
        }
    }
    f.hello_version = version.ok_or("hello needs version=")?;
    if f.compression_methods.is_empty() {
        f.compression_methods = vec![0];
    }
    f.signature_algorithms_present = f.extensions.contains(&EXT_SIGNATURE_ALGORITHMS);
    f.use_srtp_present = f.extensions.contains(&EXT_USE_SRTP);
    encode_client_hello(&f).map_err(|e| e.to_string())?;
    Ok(f)
}

fn parse_server(args: &[String]) -> Result<ServerHelloFeatures, String> {
    let mut s = ServerHelloFeatures::default();
    let (mut version, mut suite) = (None, None);
    for (k, v) in key_values(args, &["version", "suite", "comp", "exts", "curve"])? {
        match k {
            "version" => version = Some(parse_hex_u16(v)?),
            "suite" => suite = Some(parse_hex_u16(v)?),
            "comp" => s.chosen_compression = parse_hex_u8(v)?,
            "exts" => s.extensions = parse_u16_list(v)?,
            "curve" => s.chosen_curve = Some(parse_hex_u16(v)?),
            _ => unreachable!(),
        }
    }
    s.negotiated_version = version.ok_or("server needs version=")?;
    s.chosen_cipher_suite = suite.ok_or("server needs suite=")?;
    Ok(s)
}

fn parse_cert(args: &[String]) -> Result<CertificateFeatures, String> {
    let (mut cn, mut nb, mut na, mut days) = (None, None, None, None);
    for (k, v) in key_values(args, &["cn", "not_before", "not_after", "days"])? {
        match k {
            "cn" => cn = Some(v.to_string()),
            "not_before" => nb = Some(parse_rfc3339(v)?),
            "not_after" => na = Some(parse_rfc3339(v)?),
            "days" => days = Some(v.parse::<u32>().map_err(|_| format!("bad day count {v:?}"))?),
            _ => unreachable!(),
        }
    }
    let nb = nb.ok_or("cert needs not_before=")?;
    let na = match (na, days) {
        (Some(na), None) => na,
        (None, Some(d)) => nb + i64::from(d) * 86_400,
        _ => return Err("cert needs exactly one of not_after= and days=".into()),
    };
    rtcfp_core::synth::build_certificate(cn.as_deref(), nb, na).map_err(|e| e.to_string())?;
    Ok(CertificateFeatures::new(cn, nb, na))
}

fn parse_stun_event(args: &[String], index: usize) -> Result<PayloadSpec, String> {
    let [method, class, rest @ ..] = args else {
        return Err("stun needs METHOD CLASS".into());
    };
    let method = Method::from_name(method).ok_or_else(|| format!("unknown STUN method {method:?}"))?;
    let class = Class::from_name(class).ok_or_else(|| format!("unknown STUN class {class:?}"))?;
    let mut transaction_id = [0u8; 12];
    transaction_id[..4].copy_from_slice(b"rtcf");
    transaction_id[4..].copy_from_slice(&(index as u64).to_be_bytes());
    let mut attributes = Vec::new();
    for (k, v) in key_values(rest, &["txid", "software", "realm", "username", "error", "attr"])? {
        match k {
            "txid" => {
                transaction_id = parse_bytes(v)?.try_into().map_err(|_| "txid must be 12 bytes".to_string())?;
            }
            "software" => attributes.push(sstun::software(v)),
            "realm" => attributes.push(sstun::realm(v)),
            "username" => attributes.push(sstun::username(v)),
            "error" => {
                let (code, reason) = v.split_once(':').unwrap_or((v, ""));
                let code: u16 = code.parse().ok().filter(|c| (300..700).contains(c)).ok_or("error code must be 300..699")?;
                attributes.push(sstun::error_code(code, reason));
            }
            "attr" => {
                let (t, hex) = v.split_once(':').ok_or("attr needs TYPE:HEX")?;
                attributes.push(StunAttribute::new(parse_hex_u16(t)?, parse_bytes(hex)?));
            }
            _ => unreachable!(),
        }
    }
    Ok(PayloadSpec::Stun { method, class, transaction_id, attributes })
}

struct Parser {
    flows: BTreeMap<String, usize>,
    scenario: Scenario,
}

impl Parser {
    fn lookup<'a, T>(map: &'a BTreeMap<String, T>, what: &str, name: &str) -> Result<&'a T, String> {
        map.get(name).ok_or_else(|| format!("unknown {what} {name:?}"))
    }

    fn definition(&mut self, kind: &str, name: &str, args: &[String]) -> Result<(), String> {
        let taken = match kind {
            "flow" => self.flows.contains_key(name),
            "hello" => self.scenario.hellos.contains_key(name),
            "server" => self.scenario.servers.contains_key(name),
            _ => self.scenario.certs.contains_key(name),
        };
        if taken {
            return Err(format!("{kind} {name:?} defined twice"));
        }
        match kind {
            "flow" => {
                let [a, b] = args else {
                    return Err("flow needs INITIATOR RESPONDER".into());
                };
                let (initiator, responder) = (parse_endpoint(a)?, parse_endpoint(b)?);
                if initiator.addr.is_ipv4() != responder.addr.is_ipv4() {
                    return Err("flow endpoints mix IPv4 and IPv6".into());
                }
                if initiator == responder {
                    return Err("flow endpoints are identical".into());
                }
                self.flows.insert(name.to_string(), self.scenario.synth.flows.len());
                self.scenario.synth.flows.push(SynthFlow { name: name.to_string(), initiator, responder });
            }
            "hello" => {
                self.scenario.hellos.insert(name.to_string(), parse_hello(args)?);
            }
            "server" => {
                self.scenario.servers.insert(name.to_string(), parse_server(args)?);
            }
            _ => {
                self.scenario.certs.insert(name.to_string(), parse_cert(args)?);
            }
        }
        Ok(())
    }

    fn event(&mut self, tokens: &[String], line: usize) -> Result<(), String> {
        let [time, flow, dir, kind, args @ ..] = tokens else {
            return Err("expected: at TIME FLOW (>|<) EVENT ...".into());
        };
        let timestamp = parse_time(time)?;
        if let Some(prev) = self.scenario.synth.events.last() {
            if timestamp < prev.timestamp {
                return Err("timeline goes back in time".into());
            }
        }
        let flow = *Self::lookup(&self.flows, "flow", flow)?;
        let direction = match dir.as_str() {
            ">" => Direction::InitiatorToResponder,
            "<" => Direction::ResponderToInitiator,
            _ => return Err(format!("direction must be > or <, got {dir:?}")),
        };
        let index = self.scenario.synth.events.len();
        let count = |what: &str, args: &[String]| -> Result<usize, String> {
            match args {
                [n] => n.parse().map_err(|_| format!("bad {what} {n:?}")),
                _ => Err(format!("expected a single {what}")),
            }
        };
        let payload = match kind.as_str() {
            "stun" => parse_stun_event(args, index)?,
            "hello" => {
                let [name, opts @ ..] = args else {
                    return Err("hello needs a NAME".into());
                };
                let features = Self::lookup(&self.scenario.hellos, "hello", name)?.clone();
                let mut fragment_plan = None;
                let mut duplicate = false;
                for opt in opts {
                    if opt == "dup" {
                        duplicate = true;
                    } else if let Some(plan) = opt.strip_prefix("frag=") {
                        let body_len = encode_client_hello(&features).map_err(|e| e.to_string())?.len();
                        fragment_plan = Some(parse_plan(plan, body_len)?);
                    } else {
                        return Err(format!("unknown hello option {opt:?}"));
                    }
                }
                PayloadSpec::ClientHello { features, fragment_plan, duplicate }
            }
            "hvr" => PayloadSpec::HelloVerifyRequest { cookie_length: count("cookie length", args)? },
            "server" => {
                let [name, opts @ ..] = args else {
                    return Err("server needs a NAME".into());
                };
                let server = Self::lookup(&self.scenario.servers, "server", name)?.clone();
                let certificate = match opts {
                    [] => None,
                    [c] => {
                        let cname = c.strip_prefix("cert=").ok_or_else(|| format!("unknown server option {c:?}"))?;
                        Some(Self::lookup(&self.scenario.certs, "cert", cname)?.clone())
                    }
                    _ => return Err("server takes at most cert=NAME".into()),
                };
                PayloadSpec::ServerFlight { server, certificate }
            }
            "ccs" if args.is_empty() => PayloadSpec::ChangeCipherSpec,
            "alert" => {
                let [level, description] = args else {
                    return Err("alert needs LEVEL DESCRIPTION".into());
                };
                let level = level.parse().map_err(|_| format!("bad alert level {level:?}"))?;
                let description = description.parse().map_err(|_| format!("bad alert description {description:?}"))?;
                PayloadSpec::Alert { level, description }
            }
            "appdata" => PayloadSpec::ApplicationData { length: count("length", args)? },
            "srtp" => PayloadSpec::Srtp { length: count("length", args)? },
            "raw" => match args {
                [hex] => PayloadSpec::Raw(parse_bytes(hex)?),
                _ => return Err("raw needs one HEX argument".into()),
            },
            _ => return Err(format!("unknown event {kind:?}")),
        };
        self.scenario.synth.events.push(SynthEvent { timestamp, flow, direction, payload });
        self.scenario.event_lines.push(line);
        Ok(())
    }
}

/// `N,N,...` optionally ending in `rest` (whatever remains of the body).
fn parse_plan(text: &str, body_len: usize) -> Result<Vec<usize>, String> {
    let mut plan = Vec::new();
    let items: Vec<&str> = text.split(',').collect();
    for (i, item) in items.iter().enumerate() {
        if *item == "rest" && i == items.len() - 1 {
            let used: usize = plan.iter().sum();
            plan.push(body_len.checked_sub(used).filter(|r| *r > 0).ok_or("fragment plan exceeds the hello")?);
        } else {
            plan.push(item.parse().map_err(|_| format!("bad fragment length {item:?}"))?);
        }
    }
    if plan.iter().sum::<usize>() != body_len || plan.contains(&0) {
        return Err(format!("fragment plan must cover the {body_len}-byte hello exactly"));
    }
    Ok(plan)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut p = Parser {
        flows: BTreeMap::new(),
        scenario: Scenario {
            synth: SynthScenario::default(),
            event_lines: Vec::new(),
            hellos: BTreeMap::new(),
            servers: BTreeMap::new(),
            certs: BTreeMap::new(),
        },
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| ScenarioError { line, message };
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let tokens = shlex::split(content).ok_or_else(|| err("unbalanced quotes".into()))?;
        let tokens: Vec<String> = tokens.into_iter().take_while(|t| !t.starts_with('#')).collect();
        match tokens.as_slice() {
            [kw, rest @ ..] if kw == "at" => p.event(rest, line).map_err(err)?,
            [kw, name, args @ ..] if matches!(kw.as_str(), "flow" | "hello" | "server" | "cert") => {
                p.definition(kw, name, args).map_err(err)?
            }
            _ => return Err(err(format!("unrecognized line {content:?}"))),
        }
    }
    Ok(p.scenario)
}
