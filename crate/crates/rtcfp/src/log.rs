//! Log lines: one object per handshake or STUN flow, as JSON Lines or as
//! tab-separated values with a `#fields` header.

use std::io::{self, Write};

use rtcfp_core::dtls::{cipher_suite_name, AlertInfo};
use rtcfp_core::fingerprint::{format_days, Outcome, Summarizer, TraceSummary};
use rtcfp_core::Event;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub ts: String,
    pub uid: String,
    pub flow: String,
    /// `dtls` for handshakes, `stun` for STUN-only flows.
    pub kind: String,
    pub outcome: Option<String>,
    /// `LEVEL:DESCRIPTION`, or `encrypted` after the cipher change.
    pub alert: Option<String>,
    pub client_fp: Option<String>,
    pub server_fp: Option<String>,
    pub server_suite: Option<String>,
    pub cert_cn: Option<String>,
    pub cert_days: Option<String>,
    pub stun_kinds: Vec<String>,
    pub stun_software: Vec<String>,
    pub channels: Vec<String>,
    pub anomalies: Vec<String>,
    pub match_app: Option<String>,
    pub match_score: Option<f64>,
}

pub const FIELDS: [&str; 17] = [
    "ts",
    "uid",
    "flow",
    "kind",
    "outcome",
    "alert",
    "client_fp",
    "server_fp",
    "server_suite",
    "cert_cn",
    "cert_days",
    "stun_kinds",
    "stun_software",
    "channels",
    "anomalies",
    "match_app",
    "match_score",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogFormat {
    #[default]
    JsonLines,
    Tsv,
}

impl LogLine {
    pub fn from_event(event: &Event) -> LogLine {
        let (app, score) = match event.matched() {
            Some(m) => (m.app_name.clone(), Some(m.score)),
            None => (None, None),
        };
        match event {
            Event::Handshake { record: r, .. } => {
                let stun = r.stun_summary.as_ref();
                LogLine {
                    ts: r.timestamp.to_string(),
                    uid: r.flow_uid.clone(),
                    flow: r.key.to_string(),
                    kind: "dtls".into(),
                    outcome: Some(r.outcome.as_str().into()),
                    alert: r.alert.map(|a| match a {
                        AlertInfo::Plain { level, description } => format!("{level}:{description}"),
                        AlertInfo::Encrypted => "encrypted".into(),
                    }),
                    client_fp: Some(r.client_fp.clone()),
                    server_fp: r.server_fp.clone(),
                    server_suite: r.server_features.as_ref().map(|s| {
                        cipher_suite_name(s.chosen_cipher_suite)
                            .map(str::to_string)
                            .unwrap_or_else(|| format!("{:04x}", s.chosen_cipher_suite))
                    }),
                    cert_cn: r.certificate.as_ref().and_then(|c| c.subject_common_name.clone()),
                    cert_days: r.certificate.as_ref().map(|c| format_days(c.validity_days)),
                    stun_kinds: stun.map(|s| s.kind_names()).unwrap_or_default(),
                    stun_software: stun.map(|s| s.software_values.iter().cloned().collect()).unwrap_or_default(),
                    channels: r.channels.names().into_iter().map(String::from).collect(),
                    anomalies: r.anomalies.iter().map(|a| a.as_str().to_string()).collect(),
                    match_app: app,
                    match_score: score,
                }
            }
            Event::StunFlow { record: r, .. } => LogLine {
                ts: r.timestamp.to_string(),
                uid: r.flow_uid.clone(),
                flow: r.key.to_string(),
                kind: "stun".into(),
                outcome: None,
                alert: None,
                client_fp: None,
                server_fp: None,
                server_suite: None,
                cert_cn: None,
                cert_days: None,
                stun_kinds: r.stun.kind_names(),
                stun_software: r.stun.software_values.iter().cloned().collect(),
                channels: r.channels.names().into_iter().map(String::from).collect(),
                anomalies: Vec::new(),
                match_app: app,
                match_score: score,
            },
        }
    }

    fn tsv_row(&self) -> String {
        let opt = |v: &Option<String>| v.as_deref().map(escape_scalar).unwrap_or_else(|| "-".into());
        let list = |v: &[String]| {
            if v.is_empty() {
                "-".to_string()
            } else {
                v.iter().map(|i| escape_item(i)).collect::<Vec<_>>().join(",")
            }
        };
        let ts = escape_scalar(&self.ts);
        let ts = match ts.strip_prefix('#') {
            Some(rest) => format!("%23{rest}"),
            None => ts,
        };
        [
            ts,
            escape_scalar(&self.uid),
            escape_scalar(&self.flow),
            escape_scalar(&self.kind),
            opt(&self.outcome),
            opt(&self.alert),
            opt(&self.client_fp),
            opt(&self.server_fp),
            opt(&self.server_suite),
            opt(&self.cert_cn),
            opt(&self.cert_days),
            list(&self.stun_kinds),
            list(&self.stun_software),
            list(&self.channels),
            list(&self.anomalies),
            opt(&self.match_app),
            self.match_score.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
        ]
        .join("\t")
    }

    fn from_tsv_row(row: &str) -> Result<LogLine, String> {
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != FIELDS.len() {
            return Err(format!("expected {} columns, found {}", FIELDS.len(), cols.len()));
        }
        let opt = |c: &str| (c != "-").then(|| unescape(c));
        let list = |c: &str| if c == "-" { Vec::new() } else { c.split(',').map(unescape).collect() };
        Ok(LogLine {
            ts: unescape(cols[0]),
            uid: unescape(cols[1]),
            flow: unescape(cols[2]),
            kind: unescape(cols[3]),
            outcome: opt(cols[4]),
            alert: opt(cols[5]),
            client_fp: opt(cols[6]),
            server_fp: opt(cols[7]),
            server_suite: opt(cols[8]),
            cert_cn: opt(cols[9]),
            cert_days: opt(cols[10]),
            stun_kinds: list(cols[11]),
            stun_software: list(cols[12]),
            channels: list(cols[13]),
            anomalies: list(cols[14]),
            match_app: opt(cols[15]),
            match_score: match cols[16] {
                "-" => None,
                s => Some(s.parse().map_err(|_| format!("bad match_score {s:?}"))?),
            },
        })
    }
}

fn escape_with(text: &str, extra: &[char]) -> String {
    if text == "-" {
        return "%2D".into();
    }
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c == '%' || c == '\t' || c == '\n' || c == '\r' || extra.contains(&c) {
            out.push_str(&format!("%{:02X}", c as u32));
        } else {
            out.push(c);
        }
    }
    out
}

fn escape_scalar(text: &str) -> String {
    escape_with(text, &[])
}

fn escape_item(text: &str) -> String {
    escape_with(text, &[','])
}

fn unescape(text: &str) -> String {
    rtcfp_core::fingerprint::unescape_field(text)
}

pub fn write_header<W: Write>(out: &mut W, format: LogFormat) -> io::Result<()> {
    match format {
        LogFormat::JsonLines => Ok(()),
        LogFormat::Tsv => writeln!(out, "#fields\t{}", FIELDS.join("\t")),
    }
}

pub fn write_line<W: Write>(out: &mut W, line: &LogLine, format: LogFormat) -> io::Result<()> {
    match format {
        LogFormat::JsonLines => {
            serde_json::to_writer(&mut *out, line)?;
            out.write_all(b"\n")
        }
        LogFormat::Tsv => writeln!(out, "{}", line.tsv_row()),
    }
}

#[derive(Debug, thiserror::Error)]
#[error("log line {line}: {message}")]
pub struct LogParseError {
    pub line: usize,
    pub message: String,
}

/// Reads JSON Lines or TSV (recognized by its `#fields` header).
pub fn parse_log(text: &str) -> Result<Vec<LogLine>, LogParseError> {
    let mut tsv = false;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(header) = raw.strip_prefix("#fields\t") {
            if header.split('\t').ne(FIELDS) {
                return Err(LogParseError { line, message: "unexpected #fields header".into() });
            }
            tsv = true;
            continue;
        }
        if raw.starts_with('#') {
            continue;
        }
        let parsed = if tsv {
            LogLine::from_tsv_row(raw)
        } else {
            serde_json::from_str(raw).map_err(|e| e.to_string())
        };
        out.push(parsed.map_err(|message| LogParseError { line, message })?);
    }
    Ok(out)
}

/// The same summary `summarize` computes from analyzer records.
pub fn summarize_log(lines: &[LogLine]) -> TraceSummary {
    let mut s = Summarizer::new();
    for l in lines {
        let channels = l.channels.join(",");
        match (l.kind.as_str(), l.outcome.as_deref().and_then(Outcome::from_name), &l.client_fp) {
            ("dtls", Some(outcome), Some(client_fp)) => {
                s.add_handshake(&l.uid, client_fp, l.server_fp.as_deref(), outcome, &channels)
            }
            _ => s.add_stun_flow(&l.uid, &channels),
        }
    }
    s.finish()
}
