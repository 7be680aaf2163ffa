use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rtcfp::log::{parse_log, summarize_log, write_header, write_line};
use rtcfp::pcap::{write_pcap_file, PcapFormat};
use rtcfp::{analyze_file, db, scenario, LogFormat, LogLine};
use rtcfp_core::fingerprint::TraceSummary;
use rtcfp_core::{AnalyzerConfig, DropReason};

/// Passive WebRTC fingerprinting for pcap captures.
#[derive(Parser)]
#[command(name = "rtcfp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one log line per established or alerted DTLS handshake.
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, value_enum, default_value_t = Format::Jsonlines)]
        format: Format,
        /// Output file (default: standard output).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print packet and drop counters to standard error.
        #[arg(long)]
        stats: bool,
    },
    /// Count handshakes and unique fingerprints in a capture or a log.
    Summarize {
        input: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Render a scenario file to a pcap capture.
    Synth { scenario: PathBuf, output: PathBuf },
}

#[derive(Args)]
struct AnalysisArgs {
    /// Fingerprint database (JSON Lines); the built-in one by default.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Also log flows that carried STUN but no handshake.
    #[arg(long)]
    stun_flows: bool,
    /// Skip classification.
    #[arg(long)]
    no_match: bool,
    /// Finalize flows idle for longer than this many seconds.
    #[arg(long, default_value_t = 600)]
    idle_timeout: u64,
    /// Minimum score for a named match.
    #[arg(long, default_value_t = rtcfp_core::fingerprint::DEFAULT_MATCH_THRESHOLD)]
    match_threshold: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonlines,
    Tsv,
}

struct Failure {
    code: u8,
    message: String,
}

fn input_error(message: impl ToString) -> Failure {
    Failure { code: 2, message: message.to_string() }
}

fn usage_error(message: impl ToString) -> Failure {
    Failure { code: 1, message: message.to_string() }
}

impl AnalysisArgs {
    fn config(&self) -> Result<AnalyzerConfig, Failure> {
        if !(0.0..=1.0).contains(&self.match_threshold) {
            return Err(usage_error("--match-threshold must be within 0..=1"));
        }
        Ok(AnalyzerConfig {
            idle_timeout_micros: self.idle_timeout.saturating_mul(1_000_000),
            emit_stun_flows: self.stun_flows,
            matching: !self.no_match,
            match_threshold: self.match_threshold,
        })
    }

    fn analyze(&self, input: &Path) -> Result<rtcfp::Analysis, Failure> {
        let config = self.config()?;
        let entries = db::load_db(self.db.as_deref()).map_err(input_error)?;
        let analysis = analyze_file(input, config, entries)
            .map_err(|e| input_error(format!("{}: {e}", input.display())))?;
        if let Some(w) = &analysis.warning {
            eprintln!("rtcfp: warning: {}: {w}; analyzed up to that point", input.display());
        }
        Ok(analysis)
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn cmd_analyze(
    input: &Path,
    analysis: &AnalysisArgs,
    format: Format,
    output: Option<&Path>,
    stats: bool,
) -> Result<(), Failure> {
    let result = analysis.analyze(input)?;
    let format = match format {
        Format::Jsonlines => LogFormat::JsonLines,
        Format::Tsv => LogFormat::Tsv,
    };
    let mut buf = Vec::new();
    write_header(&mut buf, format).map_err(input_error)?;
    for event in &result.events {
        write_line(&mut buf, &LogLine::from_event(event), format).map_err(input_error)?;
    }
    match output {
        Some(path) => write_atomically(path, &buf).map_err(|e| input_error(format!("{}: {e}", path.display())))?,
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            out.write_all(&buf).and_then(|_| out.flush()).map_err(input_error)?;
        }
    }
    if stats {
        let s = &result.stats;
        let drops: Vec<String> =
            DropReason::ALL.iter().map(|r| format!("{}={}", r.as_str(), s.drops_for(*r))).collect();
        eprintln!(
            "packets={} decapsulated={} flows={} handshakes={} failed={} incomplete={} out_of_order={} drops: {}",
            s.packets_read,
            s.packets_decapsulated,
            s.flows,
            s.handshakes_logged,
            s.failed_handshakes,
            s.incomplete_handshakes,
            s.out_of_order_timestamps,
            drops.join(" ")
        );
    }
    Ok(())
}

fn is_pcap(path: &Path) -> Result<bool, Failure> {
    let mut magic = [0u8; 4];
    let mut f = fs::File::open(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    let n = f.read(&mut magic).map_err(input_error)?;
    let le = u32::from_le_bytes(magic);
    let be = u32::from_be_bytes(magic);
    Ok(n == 4 && [le, be].iter().any(|m| *m == 0xa1b2_c3d4 || *m == 0xa1b2_3c4d))
}

fn print_summary(summary: &TraceSummary) {
    println!("{}", summary.headline());
    let obj = serde_json::json!({
        "handshakes": summary.handshakes_total,
        "unique_client_fingerprints": summary.unique_client_fps,
        "unique_server_fingerprints": summary.unique_server_fps,
        "alerts": summary.alerts,
        "flows_by_channel_pattern": summary.flows_by_channel_pattern,
    });
    println!("{obj}");
}

fn cmd_summarize(input: &Path, analysis: &AnalysisArgs) -> Result<(), Failure> {
    let lines: Vec<LogLine> = if is_pcap(input)? {
        analysis.analyze(input)?.events.iter().map(LogLine::from_event).collect()
    } else {
        let text = fs::read_to_string(input).map_err(|e| input_error(format!("{}: {e}", input.display())))?;
        parse_log(&text).map_err(|e| input_error(format!("{}: {e}", input.display())))?
    };
    print_summary(&summarize_log(&lines));
    Ok(())
}

fn cmd_synth(scenario_path: &Path, output: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(scenario_path)
        .map_err(|e| input_error(format!("{}: {e}", scenario_path.display())))?;
    let packets = scenario::parse_scenario(&text)
        .and_then(|s| s.render())
        .map_err(|e| input_error(format!("{}: {e}", scenario_path.display())))?;
    let count = write_pcap_file(output, PcapFormat::default(), packets.iter().map(|p| (p.timestamp, &p.frame[..])))
        .map_err(|e| input_error(format!("{}: {e}", output.display())))?;
    println!("wrote {count} packets to {}", output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Analyze { input, analysis, format, output, stats } => {
            cmd_analyze(input, analysis, *format, output.as_deref(), *stats)
        }
        Command::Summarize { input, analysis } => cmd_summarize(input, analysis),
        Command::Synth { scenario, output } => cmd_synth(scenario, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rtcfp: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
