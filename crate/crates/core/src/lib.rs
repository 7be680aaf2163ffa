//! Passive WebRTC fingerprinting.
//!
//! Extracts STUN/TURN and DTLS handshake features from captured UDP
//! traffic, canonicalizes them into fingerprint strings and classifies
//! flows against a database of known applications.
//!
//! This crate is `no_std` and only needs `alloc`. Capture files, the
//! database/scenario text formats and the command-line tool live in the
//! `rtcfp` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analyzer;
pub mod demux;
pub mod dtls;
pub mod fingerprint;
pub mod flow;
pub mod packet;
pub mod stun;
pub mod synth;
mod time;

pub use analyzer::{Analyzer, AnalyzerConfig, AnalyzerStats, Event};
pub use demux::{classify_payload, ChannelSet, PayloadClass};
pub use flow::{FlowState, FlowTable};
pub use packet::{decapsulate, Datagram, Direction, DropReason, Endpoint, FlowKey, LinkType, RawPacket};
pub use time::Timestamp;
