//! Bidirectional UDP flow table with idle eviction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::demux::{ChannelSet, PayloadClass};
use crate::dtls::HandshakeTracker;
use crate::fingerprint::flow_uid;
use crate::packet::{Direction, Endpoint, FlowKey};
use crate::stun::StunFlowFeatures;
use crate::time::Timestamp;

#[derive(Debug, Clone)]
pub struct FlowState {
    pub key: FlowKey,
    pub first_seen: Timestamp,
    pub last_seen: Timestamp,
    /// Sender of the flow's first packet.
    pub initiator: Endpoint,
    pub channels: ChannelSet,
    pub stun: StunFlowFeatures,
    pub tracker: HandshakeTracker,
    pub uid: String,
    /// Time of the first DTLS datagram.
    pub first_dtls: Option<Timestamp>,
    /// Some DTLS datagram ended in bytes that were not a whole record.
    pub malformed_tail: bool,
}

impl FlowState {
    fn new(key: FlowKey, initiator: Endpoint, timestamp: Timestamp) -> Self {
        FlowState {
            key,
            first_seen: timestamp,
            last_seen: timestamp,
            initiator,
            channels: ChannelSet::empty(),
            stun: StunFlowFeatures::default(),
            tracker: HandshakeTracker::new(),
            uid: flow_uid(timestamp, &key),
            first_dtls: None,
            malformed_tail: false,
        }
    }

    pub fn responder(&self) -> Endpoint {
        if self.key.low() == self.initiator {
            self.key.high()
        } else {
            self.key.low()
        }
    }

    pub fn direction_of(&self, src: Endpoint) -> Direction {
        if src == self.initiator {
            Direction::InitiatorToResponder
        } else {
            Direction::ResponderToInitiator
        }
    }

    pub fn update_channels(&mut self, class: PayloadClass) {
        self.channels.insert(class);
    }
}

/// Flows by canonical key, plus a `(last_seen, key)` index so idle flows
/// come out oldest first and ties resolve by key.
#[derive(Debug, Clone, Default)]
pub struct FlowTable {
    flows: BTreeMap<FlowKey, FlowState>,
    by_last_seen: BTreeSet<(Timestamp, FlowKey)>,
}

impl FlowTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn get(&self, key: &FlowKey) -> Option<&FlowState> {
        self.flows.get(key)
    }

    /// Existing flow or a new one opened by `src`. `last_seen` never moves
    /// backwards, so out-of-order timestamps keep `first_seen <= last_seen`.
    /// The flag reports whether the flow was created.
    pub fn flow_of(&mut self, key: FlowKey, src: Endpoint, timestamp: Timestamp) -> (&mut FlowState, bool) {
        let mut created = false;
        let flow = self.flows.entry(key).or_insert_with(|| {
            created = true;
            FlowState::new(key, src, timestamp)
        });
        if created {
            self.by_last_seen.insert((timestamp, key));
        } else if timestamp > flow.last_seen {
            self.by_last_seen.remove(&(flow.last_seen, key));
            flow.last_seen = timestamp;
            self.by_last_seen.insert((timestamp, key));
        }
        (flow, created)
    }

    /// Removes flows idle for more than `timeout_micros` at `now`.
    pub fn evict_idle(&mut self, now: Timestamp, timeout_micros: u64) -> Vec<FlowState> {
        let mut out = Vec::new();
        while let Some(&(last, key)) = self.by_last_seen.first() {
            if now.as_micros().saturating_sub(last.as_micros()) <= timeout_micros {
                break;
            }
            self.by_last_seen.pop_first();
            out.extend(self.flows.remove(&key));
        }
        out
    }

    /// Removes every flow, in `(last_seen, key)` order.
    pub fn drain(&mut self) -> Vec<FlowState> {
        let order = core::mem::take(&mut self.by_last_seen);
        order.into_iter().filter_map(|(_, key)| self.flows.remove(&key)).collect()
    }
}
