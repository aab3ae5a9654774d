//! Single-timeline discrete-event engine.
//!
//! The engine owns every node and a priority queue of envelope deliveries
//! and timer firings ordered by `(at, seq)`. Handlers run one at a time and
//! hand their output back through a [`Ctx`].

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt::Debug;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snow_core::{Millis, MsgId, NodeId};

use crate::latency::LatencyModel;
use crate::metrics::Recorder;

/// What the engine needs to know about a message type.
pub trait Wire: Clone + Debug {
    /// Broadcast whose application payload this message carries.
    fn payload_of(&self) -> Option<MsgId>;
    fn ack_of(&self) -> Option<MsgId>;
    /// Broadcast forwarding, which stragglers delay.
    fn is_forwarding(&self) -> bool;
    fn label(&self) -> &'static str;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BroadcastRequest {
    pub size: u32,
    pub reliable: bool,
    pub colored: bool,
}

/// Membership changes announced to protocols that have no membership layer
/// of their own.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeerEvent {
    Joined(NodeId),
    Left(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Note {
    Converged { msg: MsgId, attempts: u32 },
    Failed { msg: MsgId, attempts: u32 },
    Joined,
    Departed,
}

/// Output collected from one handler invocation.
#[derive(Debug)]
pub struct Ctx<M, T> {
    now: Millis,
    me: NodeId,
    sends: Vec<(NodeId, M)>,
    timers: Vec<(Millis, T)>,
    deliveries: Vec<(MsgId, u32)>,
    notes: Vec<Note>,
}

impl<M, T> Ctx<M, T> {
    pub fn new(now: Millis, me: NodeId) -> Self {
        Ctx {
            now,
            me,
            sends: Vec::new(),
            timers: Vec::new(),
            deliveries: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn me(&self) -> NodeId {
        self.me
    }

    pub fn send(&mut self, to: NodeId, msg: M) {
        self.sends.push((to, msg));
    }

    pub fn set_timer(&mut self, at: Millis, timer: T) {
        self.timers.push((at, timer));
    }

    /// Application delivery of `msg`, `hops` away from its origin.
    pub fn deliver(&mut self, msg: MsgId, hops: u32) {
        self.deliveries.push((msg, hops));
    }

    pub fn note(&mut self, note: Note) {
        self.notes.push(note);
    }

    pub fn sends(&self) -> &[(NodeId, M)] {
        &self.sends
    }

    pub fn deliveries(&self) -> &[(MsgId, u32)] {
        &self.deliveries
    }
}

/// A protocol instance the engine can drive.
pub trait SimNode {
    type Msg: Wire;
    type Timer: Clone + Debug;

    fn id(&self) -> NodeId;
    fn start(&mut self, cx: &mut Ctx<Self::Msg, Self::Timer>);
    fn on_message(&mut self, from: NodeId, msg: Self::Msg, cx: &mut Ctx<Self::Msg, Self::Timer>);
    fn on_timer(&mut self, timer: Self::Timer, cx: &mut Ctx<Self::Msg, Self::Timer>);
    /// A send to `to` was refused because `to` is down.
    fn on_send_failure(&mut self, _to: NodeId, _msg: Self::Msg, _cx: &mut Ctx<Self::Msg, Self::Timer>) {}
    fn broadcast(&mut self, req: BroadcastRequest, cx: &mut Ctx<Self::Msg, Self::Timer>) -> Option<MsgId>;
    /// Starts a graceful departure; `false` if not possible now.
    fn leave(&mut self, cx: &mut Ctx<Self::Msg, Self::Timer>) -> bool;
    fn on_peer_event(&mut self, _event: PeerEvent, _cx: &mut Ctx<Self::Msg, Self::Timer>) {}
    /// Counted as a broadcast target.
    fn is_member(&self) -> bool;
    /// Current membership view, for protocols that keep one.
    fn view(&self) -> Option<Vec<NodeId>> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Life {
    Up,
    Crashed,
    /// Left gracefully; connections are refused like for a crashed node.
    Gone,
}

#[derive(Debug)]
enum Ev<M, T> {
    Deliver { from: usize, to: usize, msg: M },
    Timer { node: usize, timer: T },
}

#[derive(Debug)]
struct Queued<M, T> {
    at: Millis,
    seq: u64,
    ev: Ev<M, T>,
}

impl<M, T> PartialEq for Queued<M, T> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<M, T> Eq for Queued<M, T> {}

impl<M, T> PartialOrd for Queued<M, T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M, T> Ord for Queued<M, T> {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct Stats {
    pub sent: u64,
    pub delivered: u64,
    /// In flight when the target went down.
    pub dropped_at_down: u64,
    /// Refused at send time because the target was already down.
    pub refused: u64,
    pub timers_fired: u64,
    /// Timers discarded because the node was down or the engine draining.
    pub timers_skipped: u64,
    pub by_label: BTreeMap<&'static str, u64>,
    pub clock_regressions: u64,
}

impl Stats {
    /// Envelopes neither delivered, dropped nor refused.
    pub fn unaccounted(&self, queued: u64) -> i128 {
        self.sent as i128 - (self.delivered + self.dropped_at_down + self.refused + queued) as i128
    }
}

pub struct Engine<N: SimNode> {
    now: Millis,
    seq: u64,
    queue: BinaryHeap<Queued<N::Msg, N::Timer>>,
    nodes: Vec<N>,
    life: Vec<Life>,
    index: HashMap<NodeId, usize>,
    latency: LatencyModel,
    rng: ChaCha8Rng,
    recorder: Recorder,
    crash_on_delivery: BTreeSet<(usize, MsgId)>,
    failures: VecDeque<(usize, NodeId, N::Msg)>,
    stats: Stats,
    trace: DefaultHasher,
    draining: bool,
    crash_log: Vec<(NodeId, Millis)>,
}

impl<N: SimNode> Engine<N> {
    pub fn new(latency: LatencyModel, seed: u64) -> Self {
        Engine {
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            nodes: Vec::new(),
            life: Vec::new(),
            index: HashMap::new(),
            latency,
            rng: ChaCha8Rng::seed_from_u64(seed),
            recorder: Recorder::default(),
            crash_on_delivery: BTreeSet::new(),
            failures: VecDeque::new(),
            stats: Stats::default(),
            trace: DefaultHasher::new(),
            draining: false,
            crash_log: Vec::new(),
        }
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn nodes(&self) -> &[N] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &N {
        &self.nodes[i]
    }

    pub fn life(&self, i: usize) -> Life {
        self.life[i]
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn recorder(&self) -> &Recorder {
        &self.recorder
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    pub fn crashes(&self) -> &[(NodeId, Millis)] {
        &self.crash_log
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn queued_deliveries(&self) -> u64 {
        self.queue.iter().filter(|q| matches!(q.ev, Ev::Deliver { .. })).count() as u64
    }

    /// Hash over every processed event; equal for equal runs.
    pub fn trace_hash(&self) -> u64 {
        self.trace.finish()
    }

    /// Adds a node. Nodes beyond the latency model's initial population get
    /// a fresh, non-straggler latency slot. Other nodes are told about it.
    pub fn add_node(&mut self, node: N) -> usize {
        let i = self.nodes.len();
        let id = node.id();
        self.index.insert(id, i);
        self.nodes.push(node);
        self.life.push(Life::Up);
        if self.latency.slots() <= i {
            self.latency.add_node(&mut self.rng);
        }
        self.invoke(i, |n, cx| n.start(cx));
        for j in 0..self.nodes.len() {
            if j != i && self.life[j] == Life::Up {
                self.invoke(j, |n, cx| n.on_peer_event(PeerEvent::Joined(id), cx));
            }
        }
        self.settle_failures();
        i
    }

    /// Adds a node without calling its start handler or notifying peers.
    pub fn add_silent(&mut self, node: N) -> usize {
        let i = self.nodes.len();
        self.index.insert(node.id(), i);
        self.nodes.push(node);
        self.life.push(Life::Up);
        if self.latency.slots() <= i {
            self.latency.add_node(&mut self.rng);
        }
        i
    }

    pub fn start(&mut self, i: usize) {
        self.invoke(i, |n, cx| n.start(cx));
        self.settle_failures();
    }

    /// Members at this instant, for broadcast targeting.
    pub fn members(&self) -> BTreeSet<NodeId> {
        self.nodes
            .iter()
            .zip(&self.life)
            .filter(|(n, l)| **l == Life::Up && n.is_member())
            .map(|(n, _)| n.id())
            .collect()
    }

    pub fn broadcast(&mut self, i: usize, req: BroadcastRequest) -> Option<MsgId> {
        if self.life[i] != Life::Up {
            return None;
        }
        let members = self.members();
        let mut cx = Ctx::new(self.now, self.nodes[i].id());
        let msg = self.nodes[i].broadcast(req, &mut cx)?;
        self.recorder.start(msg, self.now, members, req.reliable);
        self.apply(i, cx);
        self.settle_failures();
        Some(msg)
    }

    pub fn leave(&mut self, i: usize) -> bool {
        if self.life[i] != Life::Up {
            return false;
        }
        let mut cx = Ctx::new(self.now, self.nodes[i].id());
        let ok = self.nodes[i].leave(&mut cx);
        self.apply(i, cx);
        self.settle_failures();
        ok
    }

    /// Stops `i` instantly. Envelopes already addressed to it are refused
    /// when they arrive.
    pub fn crash(&mut self, i: usize) {
        if self.life[i] == Life::Up {
            self.life[i] = Life::Crashed;
            self.crash_log.push((self.nodes[i].id(), self.now));
            self.trace_event(3, i, i, "crash");
        }
    }

    /// Crashes `node` as it first delivers `msg`, before it forwards.
    pub fn crash_on_delivery(&mut self, node: usize, msg: MsgId) {
        self.crash_on_delivery.insert((node, msg));
    }

    fn invoke<F>(&mut self, i: usize, f: F)
    where
        F: FnOnce(&mut N, &mut Ctx<N::Msg, N::Timer>),
    {
        let mut cx = Ctx::new(self.now, self.nodes[i].id());
        f(&mut self.nodes[i], &mut cx);
        self.apply(i, cx);
    }

    fn push(&mut self, at: Millis, ev: Ev<N::Msg, N::Timer>) {
        self.seq += 1;
        self.queue.push(Queued { at, seq: self.seq, ev });
    }

    fn apply(&mut self, i: usize, cx: Ctx<N::Msg, N::Timer>) {
        let me = cx.me;
        let mut crash_now = false;
        for (msg, hops) in cx.deliveries {
            self.recorder.delivered(me, &msg, self.now, hops);
            crash_now |= self.crash_on_delivery.remove(&(i, msg));
        }
        if crash_now {
            // Dies while handling the envelope: nothing it produced leaves.
            self.crash(i);
            return;
        }
        for (at, timer) in cx.timers {
            let at = if at < self.now {
                self.stats.clock_regressions += 1;
                self.now
            } else {
                at
            };
            self.push(at, Ev::Timer { node: i, timer });
        }
        let mut departed = false;
        for note in cx.notes {
            match note {
                Note::Converged { msg, attempts } => self.recorder.converged(&msg, self.now, attempts),
                Note::Failed { msg, attempts } => self.recorder.failed(&msg, self.now, attempts),
                Note::Departed => departed = true,
                Note::Joined => {}
            }
        }
        for (to, msg) in cx.sends {
            self.transmit(i, to, msg);
        }
        if departed && self.life[i] == Life::Up {
            self.life[i] = Life::Gone;
            self.trace_event(4, i, i, "gone");
            for j in 0..self.nodes.len() {
                if j != i && self.life[j] == Life::Up {
                    self.invoke(j, |n, cx| n.on_peer_event(PeerEvent::Left(me), cx));
                }
            }
        }
    }

    fn transmit(&mut self, from: usize, to: NodeId, msg: N::Msg) {
        self.stats.sent += 1;
        *self.stats.by_label.entry(msg.label()).or_default() += 1;
        if let Some(m) = msg.payload_of() {
            self.recorder.payload_sent(&m);
        }
        if let Some(m) = msg.ack_of() {
            self.recorder.ack_sent(&m);
        }
        match self.index.get(&to).copied() {
            Some(j) if self.life[j] == Life::Up && j != from => {
                let delay = self.latency.delay(j, msg.is_forwarding(), &mut self.rng);
                self.push(self.now + delay, Ev::Deliver { from, to: j, msg });
            }
            _ => {
                self.stats.refused += 1;
                self.failures.push_back((from, to, msg));
            }
        }
    }

    fn settle_failures(&mut self) {
        while let Some((i, to, msg)) = self.failures.pop_front() {
            if self.life[i] == Life::Up {
                self.invoke(i, |n, cx| n.on_send_failure(to, msg, cx));
            }
        }
    }

    fn trace_event(&mut self, kind: u8, a: usize, b: usize, label: &str) {
        (self.now, kind, a, b, label).hash(&mut self.trace);
    }

    /// Processes the next event; `false` if none is due by `until`.
    fn step(&mut self, until: Millis) -> bool {
        match self.queue.peek() {
            Some(q) if q.at <= until => {}
            _ => return false,
        }
        let q = self.queue.pop().expect("peeked");
        if q.at < self.now {
            self.stats.clock_regressions += 1;
        }
        self.now = self.now.max(q.at);
        match q.ev {
            Ev::Deliver { from, to, msg } => {
                self.trace_event(1, from, to, msg.label());
                if self.life[to] != Life::Up {
                    self.stats.dropped_at_down += 1;
                    let target = self.nodes[to].id();
                    self.failures.push_back((from, target, msg));
                } else {
                    self.stats.delivered += 1;
                    let sender = self.nodes[from].id();
                    self.invoke(to, |n, cx| n.on_message(sender, msg, cx));
                }
            }
            Ev::Timer { node, timer } => {
                if self.draining || self.life[node] != Life::Up {
                    self.stats.timers_skipped += 1;
                } else {
                    self.trace_event(2, node, node, "timer");
                    self.stats.timers_fired += 1;
                    self.invoke(node, |n, cx| n.on_timer(timer, cx));
                }
            }
        }
        self.settle_failures();
        true
    }

    /// Runs every event due at or before `t`, then advances the clock to `t`.
    pub fn run_until(&mut self, t: Millis) {
        while self.step(t) {}
        self.now = self.now.max(t);
    }

    /// Stops firing timers and runs until no envelope is left in flight.
    pub fn drain(&mut self) {
        self.draining = true;
        while self.step(Millis::MAX) {}
    }
}
