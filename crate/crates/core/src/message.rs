//! Broadcast identities and the forwarding task carried by every DATA message.

use std::fmt;

use crate::id::NodeId;
use crate::routing::Region;

/// Unique message id: origin plus a per-origin sequence number.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgId {
    pub origin: NodeId,
    pub seq: u64,
}

impl fmt::Debug for MsgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.origin, self.seq)
    }
}

/// How a broadcast is disseminated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Standard,
    Colored,
    Reliable,
    ColoredReliable,
}

impl Mode {
    pub fn is_colored(self) -> bool {
        matches!(self, Mode::Colored | Mode::ColoredReliable)
    }

    pub fn is_reliable(self) -> bool {
        matches!(self, Mode::Reliable | Mode::ColoredReliable)
    }

    pub fn with_coloring(self, colored: bool) -> Mode {
        match (self.is_reliable(), colored) {
            (false, false) => Mode::Standard,
            (false, true) => Mode::Colored,
            (true, false) => Mode::Reliable,
            (true, true) => Mode::ColoredReliable,
        }
    }
}

/// Which of the two colored trees a copy travels on. Uncolored broadcasts
/// only use `Primary`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TreeTag {
    Primary,
    Secondary,
}

/// The unit of forwarding work: which message, whose frame, and which arc
/// the receiver is responsible for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BroadcastTask {
    pub msg: MsgId,
    /// Node whose ring offsets the region is measured against.
    pub root: NodeId,
    pub region: Region,
    pub mode: Mode,
    pub tree: TreeTag,
    /// Node whose offsets define the color parity.
    pub color_root: NodeId,
    /// Retransmission wave, 0 for the first transmission.
    pub attempt: u32,
    /// Hops travelled so far by the copy carrying this task.
    pub hops: u32,
}
