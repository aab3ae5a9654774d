use std::collections::HashSet;

use snow_core::{MsgId, NodeId};

use super::{insert_sorted, remove_sorted, BaseMsg, BaseTimer};
use crate::engine::{BroadcastRequest, Ctx, Note, PeerEvent, SimNode};

/// The origin sends to everyone; receivers never forward.
#[derive(Clone, Debug)]
pub struct Flood {
    me: NodeId,
    view: Vec<NodeId>,
    seen: HashSet<MsgId>,
    seq: u64,
    gone: bool,
}

impl Flood {
    pub fn new(me: NodeId, mut view: Vec<NodeId>) -> Self {
        view.sort();
        view.dedup();
        Flood {
            me,
            view,
            seen: HashSet::new(),
            seq: 0,
            gone: false,
        }
    }
}

impl SimNode for Flood {
    type Msg = BaseMsg;
    type Timer = BaseTimer;

    fn id(&self) -> NodeId {
        self.me
    }

    fn start(&mut self, _cx: &mut Ctx<BaseMsg, BaseTimer>) {}

    fn on_message(&mut self, _from: NodeId, msg: BaseMsg, cx: &mut Ctx<BaseMsg, BaseTimer>) {
        if let BaseMsg::Payload { msg, hops, .. } = msg {
            if self.seen.insert(msg) {
                cx.deliver(msg, hops);
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
        for p in self.view.iter().filter(|p| **p != self.me) {
            cx.send(*p, BaseMsg::Payload { msg, size: req.size, hops: 1 });
        }
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
