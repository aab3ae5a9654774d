use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snow_core::{MsgId, NodeId};

use super::{insert_sorted, pick_peers, remove_sorted, BaseMsg, BaseTimer};
use crate::engine::{BroadcastRequest, Ctx, Note, PeerEvent, SimNode};

/// Push gossip: on first receipt, forward to `k` random members.
#[derive(Clone, Debug)]
pub struct Gossip {
    me: NodeId,
    k: usize,
    view: Vec<NodeId>,
    seen: HashSet<MsgId>,
    seq: u64,
    rng: ChaCha8Rng,
    gone: bool,
}

impl Gossip {
    pub fn new(me: NodeId, mut view: Vec<NodeId>, k: usize, seed: u64) -> Self {
        view.sort();
        view.dedup();
        Gossip {
            me,
            k,
            view,
            seen: HashSet::new(),
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            gone: false,
        }
    }

    fn push(&mut self, msg: MsgId, size: u32, hops: u32, cx: &mut Ctx<BaseMsg, BaseTimer>) {
        for p in pick_peers(&self.view, &self.me, self.k, &mut self.rng) {
            cx.send(p, BaseMsg::Payload { msg, size, hops });
        }
    }
}

impl SimNode for Gossip {
    type Msg = BaseMsg;
    type Timer = BaseTimer;

    fn id(&self) -> NodeId {
        self.me
    }

    fn start(&mut self, _cx: &mut Ctx<BaseMsg, BaseTimer>) {}

    fn on_message(&mut self, _from: NodeId, msg: BaseMsg, cx: &mut Ctx<BaseMsg, BaseTimer>) {
        if let BaseMsg::Payload { msg, size, hops } = msg {
            if self.seen.insert(msg) {
                cx.deliver(msg, hops);
                self.push(msg, size, hops + 1, cx);
            }
        }
    }

    fn on_timer(&mut self, _timer: BaseTimer, _cx: &mut Ctx<BaseMsg, BaseTimer>) {}

    fn broadcast(&mut self, req: BroadcastRequest, cx: &mut Ctx<BaseMsg, BaseTimer>) -> Option<MsgId> {
        let msg = MsgId {
            origin: self.me,
            seq: self.seq,
        };
        self.seq += 1;
        self.seen.insert(msg);
        self.push(msg, req.size, 1, cx);
        Some(msg)
    }

    fn leave(&mut self, cx: &mut Ctx<BaseMsg, BaseTimer>) -> bool {
        self.gone = true;
        cx.note(Note::Departed);
        true
    }

    fn on_peer_event(&mut self, event: PeerEvent, _cx: &mut Ctx<BaseMsg, BaseTimer>) {
        match event {
            PeerEvent::Joined(id) => insert_sorted(&mut self.view, id),
            PeerEvent::Left(id) => remove_sorted(&mut self.view, &id),
        }
    }

    fn is_member(&self) -> bool {
        !self.gone
    }
}
