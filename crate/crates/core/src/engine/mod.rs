//! Deterministic discrete-event core and the fluid link-sharing model.

mod fairshare;
mod queue;

use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{FlowId, FogId, LinkId, NodeId};
use crate::topology::Attachment;

pub use fairshare::{
    canonical_link_totals, clamp_to_capacity, max_min_fair, recompute_fair_shares, Demand,
    ShareRequest, RATE_EPS,
};
pub use queue::EventQueue;

/// Milliseconds since scenario start.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(secs: f64) -> SimTime {
        SimTime((secs * 1000.0).round().max(0.0) as u64)
    }

    pub fn as_ms(self) -> u64 {
        self.0
    }

    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, ms: u64) -> SimTime {
        SimTime(self.0 + ms)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    FlowArrival {
        flow: FlowId,
    },
    FlowDeparture {
        flow: FlowId,
    },
    LinkStateChange {
        link: LinkId,
        up: bool,
    },
    NodeStateChange {
        node: NodeId,
        up: bool,
    },
    HandoverTrigger {
        user: NodeId,
        attachment: Attachment,
    },
    MetricsTick,
    /// A cloud-hosted control function answered a request for `flow`.
    ControlResponse {
        flow: FlowId,
    },
    /// A fog-to-cloud state synchronisation round trip completed.
    SyncComplete {
        fog: FogId,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::FlowArrival { .. } => "FlowArrival",
            EventKind::FlowDeparture { .. } => "FlowDeparture",
            EventKind::LinkStateChange { .. } => "LinkStateChange",
            EventKind::NodeStateChange { .. } => "NodeStateChange",
            EventKind::HandoverTrigger { .. } => "HandoverTrigger",
            EventKind::MetricsTick => "MetricsTick",
            EventKind::ControlResponse { .. } => "ControlResponse",
            EventKind::SyncComplete { .. } => "SyncComplete",
        }
    }

    /// Subject ids rendered for the event trace, comma separated.
    pub fn subjects(&self) -> String {
        match self {
            EventKind::FlowArrival { flow }
            | EventKind::FlowDeparture { flow }
            | EventKind::ControlResponse { flow } => flow.to_string(),
            EventKind::LinkStateChange { link, up } => {
                format!("{link},{}", if *up { "up" } else { "down" })
            }
            EventKind::NodeStateChange { node, up } => {
                format!("{node},{}", if *up { "up" } else { "down" })
            }
            EventKind::HandoverTrigger { user, attachment } => format!("{user},{attachment}"),
            EventKind::MetricsTick => "-".to_string(),
            EventKind::SyncComplete { fog } => fog.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event<K = EventKind> {
    pub time: SimTime,
    pub seq: u64,
    pub kind: K,
}

/// Column order of `events.log`.
pub const EVENT_TRACE_HEADER: &str = "time_ms\tseq\tkind\tsubjects";

impl Event<EventKind> {
    pub fn trace_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.time,
            self.seq,
            self.kind.name(),
            self.kind.subjects()
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("cannot schedule at {at} ms, clock is already at {now} ms")]
    SchedulingInPast { at: SimTime, now: SimTime },
    #[error("guaranteed reservations exceed the capacity of link index {link}")]
    GbrOvercommit { link: usize },
}
