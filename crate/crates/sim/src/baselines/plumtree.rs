use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snow_core::{Millis, MsgId, NodeId};

use super::{insert_sorted, pick_peers, remove_sorted, BaseMsg, BaseTimer};
use crate::engine::{BroadcastRequest, Ctx, Note, PeerEvent, SimNode};

/// Eager push along a pruned overlay, lazy IHAVE announcements to the rest.
///
/// Links are directed: `eager` is who this node pushes payloads to. A
/// receiver that sees a duplicate PRUNEs the sender, which demotes it to
/// lazy; a receiver missing an announced message GRAFTs the announcer, which
/// promotes it back to eager and resends.
#[derive(Clone, Debug)]
pub struct Plumtree {
    me: NodeId,
    view: Vec<NodeId>,
    eager: BTreeSet<NodeId>,
    lazy: BTreeSet<NodeId>,
    /// Received messages: size and hop count, kept for GRAFT replies.
    cache: HashMap<MsgId, (u32, u32)>,
    announcers: BTreeMap<MsgId, VecDeque<NodeId>>,
    missing_timeout: Millis,
    seq: u64,
    gone: bool,
}

impl Plumtree {
    /// `k/2` random eager peers and `k` further random lazy peers. Eager
    /// links are made symmetric at start, so the eager degree begins near
    /// `k` and drifts with PRUNE and GRAFT.
    pub fn new(me: NodeId, mut view: Vec<NodeId>, k: usize, missing_timeout: Millis, seed: u64) -> Self {
        view.sort();
        view.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = (k / 2).max(1);
        let picked = pick_peers(&view, &me, half + k, &mut rng);
        let eager = picked.iter().take(half).copied().collect();
        let lazy = picked.iter().skip(half).copied().collect();
        Plumtree {
            me,
            view,
            eager,
            lazy,
            cache: HashMap::new(),
            announcers: BTreeMap::new(),
            missing_timeout,
            seq: 0,
            gone: false,
        }
    }

    pub fn eager(&self) -> &BTreeSet<NodeId> {
        &self.eager
    }

    pub fn lazy(&self) -> &BTreeSet<NodeId> {
        &self.lazy
    }

    fn push(&self, msg: MsgId, size: u32, hops: u32, except: Option<NodeId>, cx: &mut Ctx<BaseMsg, BaseTimer>) {
        for p in self.eager.iter().filter(|p| Some(**p) != except) {
            cx.send(*p, BaseMsg::Payload { msg, size, hops });
        }
        for p in self.lazy.iter().filter(|p| Some(**p) != except) {
            cx.send(*p, BaseMsg::IHave { msg });
        }
    }

    fn forget_peer(&mut self, id: &NodeId) {
        remove_sorted(&mut self.view, id);
        self.eager.remove(id);
        self.lazy.remove(id);
        for a in self.announcers.values_mut() {
            a.retain(|p| p != id);
        }
    }
}

impl SimNode for Plumtree {
    type Msg = BaseMsg;
    type Timer = BaseTimer;

    fn id(&self) -> NodeId {
        self.me
    }

    /// Asks the eager peers to push back.
    fn start(&mut self, cx: &mut Ctx<BaseMsg, BaseTimer>) {
        for p in &self.eager {
            cx.send(*p, BaseMsg::Neighbor);
        }
    }

    fn on_message(&mut self, from: NodeId, msg: BaseMsg, cx: &mut Ctx<BaseMsg, BaseTimer>) {
        match msg {
            BaseMsg::Payload { msg, size, hops } => {
                if self.cache.contains_key(&msg) {
                    cx.send(from, BaseMsg::Prune);
                    return;
                }
                self.cache.insert(msg, (size, hops));
                self.announcers.remove(&msg);
                cx.deliver(msg, hops);
                self.push(msg, size, hops + 1, Some(from), cx);
            }
            BaseMsg::IHave { msg } => {
                if self.cache.contains_key(&msg) {
                    return;
                }
                let queue = self.announcers.entry(msg).or_default();
                if queue.is_empty() {
                    cx.set_timer(cx.now() + self.missing_timeout, BaseTimer::Missing { msg });
                }
                queue.push_back(from);
            }
            BaseMsg::Prune => {
                if self.eager.remove(&from) {
                    self.lazy.insert(from);
                }
            }
            BaseMsg::Graft { msg } => {
                self.lazy.remove(&from);
                self.eager.insert(from);
                if let Some(&(size, hops)) = self.cache.get(&msg) {
                    cx.send(from, BaseMsg::Payload { msg, size, hops: hops + 1 });
                }
            }
            BaseMsg::Neighbor => {
                insert_sorted(&mut self.view, from);
                self.lazy.remove(&from);
                self.eager.insert(from);
            }
        }
    }

    fn on_timer(&mut self, timer: BaseTimer, cx: &mut Ctx<BaseMsg, BaseTimer>) {
        let BaseTimer::Missing { msg } = timer;
        if self.cache.contains_key(&msg) {
            return;
        }
        let Some(queue) = self.announcers.get_mut(&msg) else {
            return;
        };
        if let Some(a) = queue.pop_front() {
            cx.send(a, BaseMsg::Graft { msg });
            cx.set_timer(cx.now() + self.missing_timeout, BaseTimer::Missing { msg });
        } else {
            self.announcers.remove(&msg);
        }
    }

    fn on_send_failure(&mut self, to: NodeId, _msg: BaseMsg, _cx: &mut Ctx<BaseMsg, BaseTimer>) {
        self.forget_peer(&to);
    }

    fn broadcast(&mut self, req: BroadcastRequest, cx: &mut Ctx<BaseMsg, BaseTimer>) -> Option<MsgId> {
        let msg = MsgId {
            origin: self.me,
            seq: self.seq,
        };
        self.seq += 1;
        self.cache.insert(msg, (req.size, 0));
        self.push(msg, req.size, 1, None, cx);
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
            PeerEvent::Left(id) => self.forget_peer(&id),
        }
    }

    fn is_member(&self) -> bool {
        !self.gone
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Ctx;

    fn id(i: u8) -> NodeId {
        NodeId::v4(10, 0, 0, i, 1)
    }

    fn node(me: u8) -> Plumtree {
        Plumtree::new(id(me), (0..8).map(id).collect(), 4, 1000, 3)
    }

    fn msg() -> MsgId {
        MsgId { origin: id(7), seq: 0 }
    }

    #[test]
    fn duplicate_prunes_sender_who_demotes_us() {
        let mut a = node(0);
        let mut cx = Ctx::new(0, id(0));
        a.on_message(id(1), BaseMsg::Payload { msg: msg(), size: 1, hops: 1 }, &mut cx);
        assert_eq!(cx.deliveries().len(), 1);
        let mut cx = Ctx::new(5, id(0));
        a.on_message(id(2), BaseMsg::Payload { msg: msg(), size: 1, hops: 2 }, &mut cx);
        assert!(cx.deliveries().is_empty());
        assert_eq!(cx.sends(), &[(id(2), BaseMsg::Prune)]);

        let mut b = node(2);
        b.eager.insert(id(0));
        let mut cx = Ctx::new(6, id(2));
        b.on_message(id(0), BaseMsg::Prune, &mut cx);
        assert!(!b.eager().contains(&id(0)));
        assert!(b.lazy().contains(&id(0)));
    }

    #[test]
    fn missing_message_is_grafted_from_announcer() {
        let mut a = node(0);
        let mut cx = Ctx::new(0, id(0));
        a.on_message(id(3), BaseMsg::IHave { msg: msg() }, &mut cx);
        a.on_message(id(4), BaseMsg::IHave { msg: msg() }, &mut cx);
        let mut cx = Ctx::new(1000, id(0));
        a.on_timer(BaseTimer::Missing { msg: msg() }, &mut cx);
        assert_eq!(cx.sends(), &[(id(3), BaseMsg::Graft { msg: msg() })]);

        let mut b = node(3);
        b.cache.insert(msg(), (10, 2));
        let mut cx = Ctx::new(1100, id(3));
        b.on_message(id(0), BaseMsg::Graft { msg: msg() }, &mut cx);
        assert!(b.eager().contains(&id(0)));
        assert_eq!(cx.sends(), &[(id(0), BaseMsg::Payload { msg: msg(), size: 10, hops: 3 })]);
    }

    #[test]
    fn failed_peer_is_forgotten() {
        let mut a = node(0);
        let peer = *a.eager().iter().next().unwrap();
        let mut cx = Ctx::new(0, id(0));
        a.on_send_failure(peer, BaseMsg::Prune, &mut cx);
        assert!(!a.eager().contains(&peer) && !a.lazy().contains(&peer));
    }
}
