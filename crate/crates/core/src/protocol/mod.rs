//! The per-node state machine.
//!
//! [`SnowNode`] owns one node's view, dedup sets, acknowledgment tables and
//! failure-detector state. Drivers feed it envelopes, timer firings and send
//! failures, and carry out the returned [`Effects`].

mod envelope;
mod node;

pub use envelope::{Body, Control, Envelope, Kind, Payload};
pub use node::{Counters, SnowNode};

use crate::id::NodeId;
use crate::message::{Mode, MsgId, TreeTag};
use crate::routing::Fanout;
use crate::Millis;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Joining,
    Active,
    Leaving,
    Dead,
}

/// When a request for a colored broadcast is honored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColoringPolicy {
    /// Only while the view is stable: no open suspicions and no membership
    /// change within the stability window.
    Auto,
    Always,
    Never,
}

#[derive(Clone, Debug)]
pub struct NodeConfig {
    pub fanout: Fanout,
    pub probe_period: Millis,
    pub probe_timeout: Millis,
    pub suspect_timeout: Millis,
    pub sync_period: Millis,
    pub linger: Millis,
    pub tombstone_ttl: Millis,
    pub dedup_ttl: Millis,
    /// Retry interval for an unanswered SYNC_REQ while joining.
    pub join_retry: Millis,
    pub max_attempts: u32,
    /// Fixed root timeout; `None` derives it from the tree height bound.
    pub root_timeout: Option<Millis>,
    /// Upper bound on a single hop, used for the derived root timeout.
    pub max_hop_delay: Millis,
    pub failure_detector: bool,
    pub anti_entropy: bool,
    pub coloring: ColoringPolicy,
    pub stability_window: Millis,
}

impl NodeConfig {
    pub fn new(fanout: Fanout) -> Self {
        NodeConfig {
            fanout,
            probe_period: 1000,
            probe_timeout: 500,
            suspect_timeout: 2000,
            sync_period: 5000,
            linger: 500,
            tombstone_ttl: 30_000,
            dedup_ttl: 60_000,
            join_retry: 2000,
            max_attempts: 3,
            root_timeout: None,
            max_hop_delay: 1200,
            failure_detector: true,
            anti_entropy: true,
            coloring: ColoringPolicy::Auto,
            stability_window: 5000,
        }
    }

    pub fn root_timeout_for(&self, n: usize) -> Millis {
        self.root_timeout.unwrap_or_else(|| {
            2 * crate::routing::tree_height_bound(n.max(2), self.fanout.k()) as Millis * self.max_hop_delay
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    ProbeTick,
    ProbeTimeout { seq: u64 },
    SuspectDeadline { target: NodeId },
    SyncTick,
    RootTimeout { msg: MsgId, attempt: u32 },
    Linger,
    JoinRetry,
}

/// A copy of a broadcast handed to the application.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub msg: MsgId,
    pub payload: Payload,
    pub hops: u32,
    pub tree: TreeTag,
    pub attempt: u32,
    pub mode: Mode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeEvent {
    Converged { msg: MsgId, at: Millis, attempts: u32 },
    BroadcastFailed { msg: MsgId, at: Millis, attempts: u32 },
    Suspected { target: NodeId },
    Refuted { target: NodeId },
    ConfirmedDead { target: NodeId },
    Joined,
    Departed,
    /// A colored request was sent uncolored.
    ColoringDowngraded { msg: MsgId },
}

/// Everything a handler wants done. Timers are absolute times.
#[derive(Clone, Debug, Default)]
pub struct Effects {
    pub sends: Vec<Envelope>,
    pub timers: Vec<(Millis, Timer)>,
    pub deliveries: Vec<Delivery>,
    pub events: Vec<NodeEvent>,
}

impl Effects {
    pub fn is_empty(&self) -> bool {
        self.sends.is_empty() && self.timers.is_empty() && self.deliveries.is_empty() && self.events.is_empty()
    }

    pub fn extend(&mut self, other: Effects) {
        self.sends.extend(other.sends);
        self.timers.extend(other.timers);
        self.deliveries.extend(other.deliveries);
        self.events.extend(other.events);
    }
}
