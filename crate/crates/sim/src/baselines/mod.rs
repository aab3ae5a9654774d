//! Comparison protocols: flooding, push gossip and a simplified Plumtree.
//!
//! None of them has a membership layer; the engine tells them about joins
//! and graceful departures directly.

mod flood;
mod gossip;
mod plumtree;

pub use flood::Flood;
pub use gossip::Gossip;
pub use plumtree::Plumtree;

use rand::seq::index::sample;
use rand::Rng;
use snow_core::{MsgId, NodeId};

use crate::engine::Wire;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BaseMsg {
    Payload { msg: MsgId, size: u32, hops: u32 },
    IHave { msg: MsgId },
    Prune,
    Graft { msg: MsgId },
    /// Asks the receiver to push to the sender from now on.
    Neighbor,
}

impl Wire for BaseMsg {
    fn payload_of(&self) -> Option<MsgId> {
        match self {
            BaseMsg::Payload { msg, .. } => Some(*msg),
            _ => None,
        }
    }

    fn ack_of(&self) -> Option<MsgId> {
        None
    }

    fn is_forwarding(&self) -> bool {
        matches!(self, BaseMsg::Payload { .. })
    }

    fn label(&self) -> &'static str {
        match self {
            BaseMsg::Payload { .. } => "PAYLOAD",
            BaseMsg::IHave { .. } => "IHAVE",
            BaseMsg::Prune => "PRUNE",
            BaseMsg::Graft { .. } => "GRAFT",
            BaseMsg::Neighbor => "NEIGHBOR",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum BaseTimer {
    /// An announced message has not arrived yet.
    Missing { msg: MsgId },
}

/// Up to `k` distinct members of `view` other than `me`, uniformly.
pub fn pick_peers<R: Rng>(view: &[NodeId], me: &NodeId, k: usize, rng: &mut R) -> Vec<NodeId> {
    let others: Vec<NodeId> = view.iter().copied().filter(|p| p != me).collect();
    let k = k.min(others.len());
    sample(rng, others.len(), k).into_iter().map(|i| others[i]).collect()
}

fn insert_sorted(view: &mut Vec<NodeId>, id: NodeId) {
    if let Err(pos) = view.binary_search(&id) {
        view.insert(pos, id);
    }
}

fn remove_sorted(view: &mut Vec<NodeId>, id: &NodeId) {
    if let Ok(pos) = view.binary_search(id) {
        view.remove(pos);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn picks_distinct_non_self() {
        let view: Vec<NodeId> = (0..10).map(|i| NodeId::v4(10, 0, 0, i, 1)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let p = pick_peers(&view, &view[3], 4, &mut rng);
            assert_eq!(p.len(), 4);
            assert!(!p.contains(&view[3]));
            let mut d = p.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 4);
        }
        assert_eq!(pick_peers(&view[..3], &view[0], 4, &mut rng).len(), 2);
    }
}
