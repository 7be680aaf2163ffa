//! Canonical fingerprint strings, the known-application matcher and trace
//! summaries.
//!
//! Client string: `version|suites|extensions|curves|compression|srtp`.
//! Server string: `version|suite|compression|extensions|curve|cn|days`.
//! Lists are `-`-joined lowercase hex in wire order.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
use core::hash::Hasher;
use core::net::IpAddr;

use crate::demux::ChannelSet;
use crate::dtls::{AlertInfo, CertificateFeatures, ClientHelloFeatures, ServerHelloFeatures};
use crate::packet::FlowKey;
use crate::stun::{kind_name, parse_kind_name, StunFlowFeatures};
use crate::time::Timestamp;

fn hex_list<T: Copy + Into<u32>>(items: &[T], width: usize) -> String {
    let mut out = String::new();
    for (i, v) in items.iter().enumerate() {
        if i > 0 {
            out.push('-');
        }
        let _ = write!(out, "{:0width$x}", (*v).into(), width = width);
    }
    out
}

/// `%` and `|` are the only characters escaped.
pub fn escape_field(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '%' => out.push_str("%25"),
            '|' => out.push_str("%7C"),
            c => out.push(c),
        }
    }
    out
}

/// Decodes any `%XX` escape. Malformed escapes are kept literally.
pub fn unescape_field(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            let (hi, lo) = ((bytes[i + 1] as char).to_digit(16), (bytes[i + 2] as char).to_digit(16));
            if let (Some(hi), Some(lo)) = (hi, lo) {
                out.push((hi * 16 + lo) as u8);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

pub fn format_days(days: f64) -> String {
    format!("{:.2}", days)
}

pub fn canonicalize_client(f: &ClientHelloFeatures) -> String {
    format!(
        "{:04x}|{}|{}|{}|{}|{}",
        f.hello_version,
        hex_list(&f.cipher_suites, 4),
        hex_list(&f.extensions, 4),
        hex_list(&f.elliptic_curves, 4),
        hex_list(&f.compression_methods, 2),
        hex_list(&f.srtp_profiles, 4),
    )
}

pub fn canonicalize_server(s: &ServerHelloFeatures, c: Option<&CertificateFeatures>) -> String {
    let curve = s.chosen_curve.map(|c| format!("{:04x}", c)).unwrap_or_default();
    let cn = c.and_then(|c| c.subject_common_name.as_deref()).map(escape_field).unwrap_or_default();
    let days = c.map(|c| format_days(c.validity_days)).unwrap_or_default();
    format!(
        "{:04x}|{:04x}|{:02x}|{}|{}|{}|{}",
        s.negotiated_version,
        s.chosen_cipher_suite,
        s.chosen_compression,
        hex_list(&s.extensions, 4),
        curve,
        cn,
        days
    )
}

/// Stable per-flow id: FNV-1a 64 over the first timestamp and the
/// canonical key, as 16 hex digits.
pub fn flow_uid(first_seen: Timestamp, key: &FlowKey) -> String {
    let mut h = fnv::FnvHasher::default();
    h.write(&first_seen.as_micros().to_be_bytes());
    for ep in [key.low(), key.high()] {
        match ep.addr {
            IpAddr::V4(a) => h.write(&a.octets()),
            IpAddr::V6(a) => h.write(&a.octets()),
        }
        h.write(&ep.port.to_be_bytes());
    }
    h.write(&[17]);
    format!("{:016x}", h.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Established,
    Alerted,
    Failed,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Established => "established",
            Outcome::Alerted => "alerted",
            Outcome::Failed => "failed",
        }
    }

    pub fn from_name(name: &str) -> Option<Outcome> {
        [Outcome::Established, Outcome::Alerted, Outcome::Failed].into_iter().find(|o| o.as_str() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Anomaly {
    DuplicateClientHello,
    VersionMismatch,
    MalformedTail,
    /// A record or hello version outside DTLS 1.0/1.2.
    UnknownVersion,
}

impl Anomaly {
    pub const ALL: [Anomaly; 4] =
        [Anomaly::DuplicateClientHello, Anomaly::VersionMismatch, Anomaly::MalformedTail, Anomaly::UnknownVersion];

    pub fn as_str(self) -> &'static str {
        match self {
            Anomaly::DuplicateClientHello => "duplicate_client_hello",
            Anomaly::VersionMismatch => "version_mismatch",
            Anomaly::MalformedTail => "malformed_tail",
            Anomaly::UnknownVersion => "unknown_version",
        }
    }

    pub fn from_name(name: &str) -> Option<Anomaly> {
        Anomaly::ALL.into_iter().find(|a| a.as_str() == name)
    }
}

/// One logged DTLS handshake.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintRecord {
    /// Time of the first ClientHello fragment.
    pub timestamp: Timestamp,
    pub flow_uid: String,
    pub key: FlowKey,
    pub client_fp: String,
    /// Absent when no ServerHello was seen (e.g. an alert right after the
    /// ClientHello).
    pub server_fp: Option<String>,
    pub client_features: ClientHelloFeatures,
    pub server_features: Option<ServerHelloFeatures>,
    pub certificate: Option<CertificateFeatures>,
    pub stun_summary: Option<StunFlowFeatures>,
    pub channels: ChannelSet,
    pub outcome: Outcome,
    pub alert: Option<AlertInfo>,
    pub anomalies: BTreeSet<Anomaly>,
}

/// STUN activity of a flow that carried no logged handshake.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StunFlowRecord {
    pub timestamp: Timestamp,
    pub flow_uid: String,
    pub key: FlowKey,
    pub stun: StunFlowFeatures,
    pub channels: ChannelSet,
}

/// Every matchable field. The string form is the database key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    ClientVersion,
    ClientSuites,
    ClientCompression,
    ClientExtensions,
    ClientCurves,
    ClientSrtpProfiles,
    ClientSignatureAlgorithms,
    ClientUseSrtp,
    ClientCookieLength,
    ServerVersion,
    ServerSuite,
    ServerCompression,
    ServerExtensions,
    ServerCurve,
    CertCommonName,
    CertDays,
    StunKinds,
    StunSoftware,
    StunRealm,
    StunErrors,
    StunTurn,
    Channels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ValueKind {
    Hex16,
    Hex8,
    Bool,
    Count,
    Text,
    Days,
    Kind,
    Channel,
    Decimal,
}

impl Field {
    pub const ALL: [Field; 22] = [
        Field::ClientVersion,
        Field::ClientSuites,
        Field::ClientCompression,
        Field::ClientExtensions,
        Field::ClientCurves,
        Field::ClientSrtpProfiles,
        Field::ClientSignatureAlgorithms,
        Field::ClientUseSrtp,
        Field::ClientCookieLength,
        Field::ServerVersion,
        Field::ServerSuite,
        Field::ServerCompression,
        Field::ServerExtensions,
        Field::ServerCurve,
        Field::CertCommonName,
        Field::CertDays,
        Field::StunKinds,
        Field::StunSoftware,
        Field::StunRealm,
        Field::StunErrors,
        Field::StunTurn,
        Field::Channels,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::ClientVersion => "client.version",
            Field::ClientSuites => "client.suites",
            Field::ClientCompression => "client.compression",
            Field::ClientExtensions => "client.extensions",
            Field::ClientCurves => "client.curves",
            Field::ClientSrtpProfiles => "client.srtp_profiles",
            Field::ClientSignatureAlgorithms => "client.sig_algs",
            Field::ClientUseSrtp => "client.use_srtp",
            Field::ClientCookieLength => "client.cookie_len",
            Field::ServerVersion => "server.version",
            Field::ServerSuite => "server.suite",
            Field::ServerCompression => "server.compression",
            Field::ServerExtensions => "server.extensions",
            Field::ServerCurve => "server.curve",
            Field::CertCommonName => "server.cert_cn",
            Field::CertDays => "server.cert_days",
            Field::StunKinds => "stun.kinds",
            Field::StunSoftware => "stun.software",
            Field::StunRealm => "stun.realm",
            Field::StunErrors => "stun.errors",
            Field::StunTurn => "stun.turn",
            Field::Channels => "stun.channels",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Set-valued fields compare without regard to order.
    pub fn is_set(self) -> bool {
        matches!(
            self,
            Field::StunKinds | Field::StunSoftware | Field::StunRealm | Field::StunErrors | Field::Channels
        )
    }

    fn kind(self) -> ValueKind {
        match self {
            Field::ClientVersion
            | Field::ClientSuites
            | Field::ClientExtensions
            | Field::ClientCurves
            | Field::ClientSrtpProfiles
            | Field::ServerVersion
            | Field::ServerSuite
            | Field::ServerExtensions
            | Field::ServerCurve => ValueKind::Hex16,
            Field::ClientCompression | Field::ServerCompression => ValueKind::Hex8,
            Field::ClientSignatureAlgorithms | Field::ClientUseSrtp | Field::StunTurn => ValueKind::Bool,
            Field::ClientCookieLength => ValueKind::Count,
            Field::CertCommonName | Field::StunSoftware | Field::StunRealm => ValueKind::Text,
            Field::CertDays => ValueKind::Days,
            Field::StunKinds => ValueKind::Kind,
            Field::Channels => ValueKind::Channel,
            Field::StunErrors => ValueKind::Decimal,
        }
    }

    fn normalize(self, raw: &str) -> Result<String, PatternError> {
        let bad = || PatternError::BadValue { field: self, value: raw.to_string() };
        match self.kind() {
            ValueKind::Hex16 => {
                let digits = raw.trim_start_matches("0x");
                u16::from_str_radix(digits, 16).map(|v| format!("{:04x}", v)).map_err(|_| bad())
            }
            ValueKind::Hex8 => {
                let digits = raw.trim_start_matches("0x");
                u8::from_str_radix(digits, 16).map(|v| format!("{:02x}", v)).map_err(|_| bad())
            }
            ValueKind::Bool => match raw {
                "true" | "false" => Ok(raw.to_string()),
                _ => Err(bad()),
            },
            ValueKind::Count | ValueKind::Decimal => raw.parse::<u64>().map(|v| v.to_string()).map_err(|_| bad()),
            ValueKind::Text => Ok(unescape_field(raw)),
            ValueKind::Days => raw.parse::<f64>().ok().filter(|d| d.is_finite()).map(format_days).ok_or_else(bad),
            ValueKind::Kind => parse_kind_name(raw).map(|(m, c)| kind_name(m, c)).ok_or_else(bad),
            ValueKind::Channel => match crate::demux::PayloadClass::from_name(raw) {
                Some(c) => Ok(c.as_str().to_string()),
                None => Err(bad()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("bad value {value:?} for {}", field.name())]
    BadValue { field: Field, value: String },
    #[error("bad length in {0:?}")]
    BadLength(String),
    #[error("{0:?} takes a single value")]
    NotAList(&'static str),
    #[error("entry {0:?} has no non-wildcard field")]
    AllWildcards(String),
    #[error("empty application name")]
    EmptyName,
}

/// Per-field pattern. Text form: `*`, `len:N`, `has:a,b`, or an exact
/// comma-separated list (`%`-escapes allowed in elements; empty text is
/// the empty list).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldPattern {
    Any,
    Len(usize),
    Has(Vec<String>),
    Exact(Vec<String>),
}

fn split_elements(field: Field, text: &str) -> Result<Vec<String>, PatternError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',').map(|e| field.normalize(e.trim())).collect()
}

impl FieldPattern {
    pub fn parse(field: Field, text: &str) -> Result<FieldPattern, PatternError> {
        let text = text.trim();
        if text == "*" {
            return Ok(FieldPattern::Any);
        }
        if let Some(n) = text.strip_prefix("len:") {
            return n.parse().map(FieldPattern::Len).map_err(|_| PatternError::BadLength(text.to_string()));
        }
        if let Some(items) = text.strip_prefix("has:") {
            return Ok(FieldPattern::Has(split_elements(field, items)?));
        }
        let mut items = split_elements(field, text)?;
        if field.is_set() {
            items.sort();
            items.dedup();
        }
        Ok(FieldPattern::Exact(items))
    }

    pub fn is_wildcard(&self) -> bool {
        *self == FieldPattern::Any
    }

    fn matches(&self, field: Field, value: &[String]) -> bool {
        match self {
            FieldPattern::Any => true,
            FieldPattern::Len(n) => value.len() == *n,
            FieldPattern::Has(items) => items.iter().all(|i| value.contains(i)),
            FieldPattern::Exact(items) if field.is_set() => {
                let mut v = value.to_vec();
                v.sort();
                v.dedup();
                v == *items
            }
            FieldPattern::Exact(items) => value == items.as_slice(),
        }
    }
}

impl core::fmt::Display for FieldPattern {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let join = |items: &[String]| {
            items.iter().map(|i| i.replace('%', "%25").replace(',', "%2C")).collect::<Vec<_>>().join(",")
        };
        match self {
            FieldPattern::Any => f.write_str("*"),
            FieldPattern::Len(n) => write!(f, "len:{}", n),
            FieldPattern::Has(items) => write!(f, "has:{}", join(items)),
            FieldPattern::Exact(items) => f.write_str(&join(items)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownAppEntry {
    pub app_name: String,
    /// Fields not listed are wildcards.
    pub patterns: BTreeMap<Field, FieldPattern>,
    pub notes: String,
}

impl KnownAppEntry {
    pub fn new(app_name: &str, notes: &str) -> Self {
        KnownAppEntry { app_name: app_name.to_string(), patterns: BTreeMap::new(), notes: notes.to_string() }
    }

    /// Builder-style helper; `text` is parsed with [`FieldPattern::parse`].
    pub fn with(mut self, field: Field, text: &str) -> Result<Self, PatternError> {
        self.patterns.insert(field, FieldPattern::parse(field, text)?);
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), PatternError> {
        if self.app_name.trim().is_empty() {
            return Err(PatternError::EmptyName);
        }
        if self.patterns.values().all(FieldPattern::is_wildcard) {
            return Err(PatternError::AllWildcards(self.app_name.clone()));
        }
        Ok(())
    }
}

/// Flattened field values of one log record. A missing section (no
/// ServerHello, no STUN, ...) leaves its fields absent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Observation {
    values: BTreeMap<Field, Vec<String>>,
}

fn hex16(items: &[u16]) -> Vec<String> {
    items.iter().map(|v| format!("{:04x}", v)).collect()
}

fn flag(b: bool) -> Vec<String> {
    vec![b.to_string()]
}

impl Observation {
    pub fn get(&self, field: Field) -> Option<&[String]> {
        self.values.get(&field).map(Vec::as_slice)
    }

    fn add_stun(&mut self, s: &StunFlowFeatures) {
        self.values.insert(Field::StunKinds, s.kind_names());
        self.values.insert(Field::StunSoftware, s.software_values.iter().cloned().collect());
        self.values.insert(Field::StunRealm, s.realm_values.iter().cloned().collect());
        self.values.insert(Field::StunErrors, s.error_codes.iter().map(|c| c.to_string()).collect());
        self.values.insert(Field::StunTurn, flag(s.used_turn_relaying));
    }

    fn add_channels(&mut self, channels: ChannelSet) {
        self.values.insert(Field::Channels, channels.names().into_iter().map(String::from).collect());
    }

    pub fn from_handshake(r: &FingerprintRecord) -> Observation {
        let mut o = Observation::default();
        let c = &r.client_features;
        o.values.insert(Field::ClientVersion, hex16(&[c.hello_version]));
        o.values.insert(Field::ClientSuites, hex16(&c.cipher_suites));
        o.values.insert(
            Field::ClientCompression,
            c.compression_methods.iter().map(|m| format!("{:02x}", m)).collect(),
        );
        o.values.insert(Field::ClientExtensions, hex16(&c.extensions));
        o.values.insert(Field::ClientCurves, hex16(&c.elliptic_curves));
        o.values.insert(Field::ClientSrtpProfiles, hex16(&c.srtp_profiles));
        o.values.insert(Field::ClientSignatureAlgorithms, flag(c.signature_algorithms_present));
        o.values.insert(Field::ClientUseSrtp, flag(c.use_srtp_present));
        o.values.insert(Field::ClientCookieLength, vec![c.cookie_length.to_string()]);
        if let Some(s) = &r.server_features {
            o.values.insert(Field::ServerVersion, hex16(&[s.negotiated_version]));
            o.values.insert(Field::ServerSuite, hex16(&[s.chosen_cipher_suite]));
            o.values.insert(Field::ServerCompression, vec![format!("{:02x}", s.chosen_compression)]);
            o.values.insert(Field::ServerExtensions, hex16(&s.extensions));
            o.values.insert(Field::ServerCurve, s.chosen_curve.map(|c| hex16(&[c])).unwrap_or_default());
        }
        if let Some(cert) = &r.certificate {
            o.values.insert(Field::CertCommonName, cert.subject_common_name.iter().cloned().collect());
            o.values.insert(Field::CertDays, vec![format_days(cert.validity_days)]);
        }
        if let Some(s) = &r.stun_summary {
            o.add_stun(s);
        }
        o.add_channels(r.channels);
        o
    }

    pub fn from_stun_flow(r: &StunFlowRecord) -> Observation {
        let mut o = Observation::default();
        o.add_stun(&r.stun);
        o.add_channels(r.channels);
        o
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub app_name: Option<String>,
    pub score: f64,
    pub mismatched_fields: Vec<Field>,
}

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.5;

/// Scores one entry: matched fraction of its non-wildcard fields, plus
/// the fields that did not match.
pub fn score_entry(obs: &Observation, entry: &KnownAppEntry) -> (f64, Vec<Field>) {
    let mut total = 0usize;
    let mut mismatched = Vec::new();
    for (field, pattern) in &entry.patterns {
        if pattern.is_wildcard() {
            continue;
        }
        total += 1;
        let ok = obs.get(*field).is_some_and(|v| pattern.matches(*field, v));
        if !ok {
            mismatched.push(*field);
        }
    }
    if total == 0 {
        return (0.0, mismatched);
    }
    ((total - mismatched.len()) as f64 / total as f64, mismatched)
}

/// Best-scoring entry; ties go to the earlier entry. Below `threshold`
/// the app name is withheld but the score is still reported.
pub fn match_fingerprint(obs: &Observation, db: &[KnownAppEntry], threshold: f64) -> MatchResult {
    let mut best: Option<(usize, f64, Vec<Field>)> = None;
    for (i, entry) in db.iter().enumerate() {
        let (score, mismatched) = score_entry(obs, entry);
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((i, score, mismatched));
        }
    }
    match best {
        Some((i, score, mismatched_fields)) => MatchResult {
            app_name: (score >= threshold && score > 0.0).then(|| db[i].app_name.clone()),
            score,
            mismatched_fields,
        },
        None => MatchResult { app_name: None, score: 0.0, mismatched_fields: Vec::new() },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceSummary {
    pub handshakes_total: usize,
    pub unique_client_fps: usize,
    pub unique_server_fps: usize,
    pub alerts: usize,
    /// Keyed by channel text such as `stun,dtls`; one count per logged flow.
    pub flows_by_channel_pattern: BTreeMap<String, usize>,
}

/// Incremental [`TraceSummary`] builder, usable from records or from
/// parsed log lines.
#[derive(Debug, Clone, Default)]
pub struct Summarizer {
    summary: TraceSummary,
    clients: BTreeSet<String>,
    servers: BTreeSet<String>,
    seen_flows: BTreeSet<String>,
}

impl Summarizer {
    pub fn new() -> Self {
        Self::default()
    }

    fn flow(&mut self, uid: &str, channels: &str) {
        if self.seen_flows.insert(uid.to_string()) {
            *self.summary.flows_by_channel_pattern.entry(channels.to_string()).or_default() += 1;
        }
    }

    pub fn add_handshake(
        &mut self,
        uid: &str,
        client_fp: &str,
        server_fp: Option<&str>,
        outcome: Outcome,
        channels: &str,
    ) {
        self.summary.handshakes_total += 1;
        if outcome == Outcome::Alerted {
            self.summary.alerts += 1;
        }
        self.clients.insert(client_fp.to_string());
        if let Some(s) = server_fp {
            self.servers.insert(s.to_string());
        }
        self.flow(uid, channels);
    }

    pub fn add_stun_flow(&mut self, uid: &str, channels: &str) {
        self.flow(uid, channels);
    }

    pub fn finish(mut self) -> TraceSummary {
        self.summary.unique_client_fps = self.clients.len();
        self.summary.unique_server_fps = self.servers.len();
        self.summary
    }
}

pub fn summarize(handshakes: &[FingerprintRecord], stun_flows: &[StunFlowRecord]) -> TraceSummary {
    let mut s = Summarizer::new();
    for r in handshakes {
        s.add_handshake(&r.flow_uid, &r.client_fp, r.server_fp.as_deref(), r.outcome, &r.channels.to_text());
    }
    for r in stun_flows {
        s.add_stun_flow(&r.flow_uid, &r.channels.to_text());
    }
    s.finish()
}

impl TraceSummary {
    pub fn headline(&self) -> String {
        format!(
            "{} handshakes, {} unique client fingerprints, {} unique server fingerprints",
            self.handshakes_total, self.unique_client_fps, self.unique_server_fps
        )
    }
}
