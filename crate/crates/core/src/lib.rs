//! Core of the Snow self-organizing broadcast protocol.
//!
//! Every node keeps the full membership as a sorted ring. A broadcast
//! carries the arc of the ring each receiver is responsible for; receivers
//! split their arc and forward, so messages follow a k-ary balanced tree
//! that no node ever stores. On top of that:
//!
//! - [`reliable`] aggregates acknowledgments leaf-to-root and retransmits on
//!   timeout;
//! - [`coloring`] builds a second, internally disjoint tree for stable
//!   clusters;
//! - [`protocol`] is the per-node state machine with join, leave, failure
//!   detection and anti-entropy.
//!
//! Nothing here does I/O. The node consumes envelopes and timer firings and
//! returns [`protocol::Effects`]; a transport or the simulator in `snow-sim`
//! moves them around.

pub mod coloring;
pub mod error;
pub mod id;
pub mod membership;
pub mod message;
pub mod protocol;
pub mod reliable;
pub mod routing;
pub mod tree;

/// Milliseconds on whatever clock drives the node.
pub type Millis = u64;

pub use error::{Error, Result};
pub use id::NodeId;
pub use membership::{MembershipView, RingOffset, Tombstones};
pub use message::{BroadcastTask, Mode, MsgId, TreeTag};
pub use routing::{ChildAssignment, Fanout, Region, Span};
pub use tree::DisseminationTree;
