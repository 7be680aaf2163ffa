//! File formats and the analysis driver behind the `rtcfp` tool: pcap
//! capture IO, the known-application database, scenario files and logs.

pub mod db;
pub mod log;
pub mod pcap;
pub mod scenario;

use std::io::Read;
use std::path::Path;

use rtcfp_core::fingerprint::KnownAppEntry;
use rtcfp_core::{Analyzer, AnalyzerConfig, AnalyzerStats, Event};

pub use crate::log::{LogFormat, LogLine};
pub use crate::pcap::{PcapError, PcapReader, PcapWriter};

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub events: Vec<Event>,
    pub stats: AnalyzerStats,
    /// A capture cut off mid-record is analyzed up to the cut.
    pub warning: Option<String>,
}

pub fn analyze_reader<R: Read>(
    reader: PcapReader<R>,
    config: AnalyzerConfig,
    db: Vec<KnownAppEntry>,
) -> Analysis {
    let mut analyzer = Analyzer::new(config, db);
    let mut events = Vec::new();
    let mut warning = None;
    for packet in reader {
        match packet {
            Ok(p) => analyzer.process(&p, &mut events),
            Err(e) => {
                warning = Some(e.to_string());
                break;
            }
        }
    }
    analyzer.finish(&mut events);
    Analysis { events, stats: analyzer.stats().clone(), warning }
}

pub fn analyze_file(path: &Path, config: AnalyzerConfig, db: Vec<KnownAppEntry>) -> Result<Analysis, PcapError> {
    Ok(analyze_reader(PcapReader::open(path)?, config, db))
}

/// Renders scenario text straight to capture bytes.
pub fn scenario_to_pcap(text: &str) -> Result<Vec<u8>, scenario::ScenarioError> {
    let packets = scenario::parse_scenario(text)?.render()?;
    let mut w = PcapWriter::new(Vec::new(), pcap::PcapFormat::default()).expect("writing to memory");
    for p in &packets {
        w.write_packet(p.timestamp, &p.frame).map_err(|e| scenario::ScenarioError { line: 0, message: e.to_string() })?;
    }
    Ok(w.into_inner().expect("writing to memory"))
}
