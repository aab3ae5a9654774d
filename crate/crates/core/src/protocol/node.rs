use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Body, ColoringPolicy, Control, Delivery, Effects, Envelope, NodeConfig, NodeEvent, Payload, Status, Timer};
use crate::coloring::{compute_children_colored, spawn_secondary};
use crate::error::{Error, Result};
use crate::id::NodeId;
use crate::membership::{MembershipView, Tombstones};
use crate::message::{BroadcastTask, Mode, MsgId, TreeTag};
use crate::reliable::{AckTable, ReliableOut, RootEntry, TimeoutDecision};
use crate::routing::{compute_children, ChildAssignment, Region};
use crate::Millis;

/// Things a node noticed but did not act on, or worked around.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub duplicates: u64,
    pub malformed: u64,
    /// DATA sends that failed and whose region this node took over.
    pub proxied: u64,
    /// Tombstoned nodes named in a task and routed around.
    pub phantoms: u64,
    /// CONFIRM_DEAD broadcasts naming this node.
    pub false_confirms: u64,
    pub refutations: u64,
}

#[derive(Clone, Copy, Debug)]
struct Suspicion {
    deadline: Millis,
    /// Raised by this node, which is then the one to confirm it.
    own: bool,
}

#[derive(Clone, Copy, Debug)]
struct Origination {
    payload: Payload,
    mode: Mode,
}

type WaveId = (MsgId, u32, TreeTag);

#[derive(Clone, Debug)]
pub struct SnowNode {
    me: NodeId,
    config: NodeConfig,
    status: Status,
    view: MembershipView,
    tombstones: Tombstones,
    next_seq: u64,
    seen: HashMap<WaveId, Millis>,
    delivered: HashMap<MsgId, Millis>,
    acks: AckTable,
    suspects: BTreeMap<NodeId, Suspicion>,
    probes: BTreeMap<u64, NodeId>,
    probe_seq: u64,
    rng: ChaCha8Rng,
    seeds: Vec<NodeId>,
    seed_cursor: usize,
    last_change: Option<Millis>,
    originated: BTreeMap<MsgId, Origination>,
    leave_msg: Option<MsgId>,
    counters: Counters,
}

impl SnowNode {
    fn blank(me: NodeId, config: NodeConfig, status: Status, view: MembershipView, seed: u64) -> Self {
        SnowNode {
            me,
            config,
            status,
            view,
            tombstones: Tombstones::default(),
            next_seq: 0,
            seen: HashMap::new(),
            delivered: HashMap::new(),
            acks: AckTable::new(),
            suspects: BTreeMap::new(),
            probes: BTreeMap::new(),
            probe_seq: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seeds: Vec::new(),
            seed_cursor: 0,
            last_change: None,
            originated: BTreeMap::new(),
            leave_msg: None,
            counters: Counters::default(),
        }
    }

    /// An already active member with a preloaded view.
    pub fn member(me: NodeId, mut view: MembershipView, config: NodeConfig, seed: u64) -> Self {
        view.insert(me);
        Self::blank(me, config, Status::Active, view, seed)
    }

    /// A node that still has to join through one of `seeds`.
    pub fn joiner(me: NodeId, seeds: Vec<NodeId>, config: NodeConfig, seed: u64) -> Self {
        let mut node = Self::blank(me, config, Status::Joining, MembershipView::new(), seed);
        node.seeds = seeds;
        node
    }

    pub fn id(&self) -> NodeId {
        self.me
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn view(&self) -> &MembershipView {
        &self.view
    }

    pub fn tombstones(&self) -> &Tombstones {
        &self.tombstones
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn acks(&self) -> &AckTable {
        &self.acks
    }

    pub fn root_entry(&self, msg: &MsgId) -> Option<&RootEntry> {
        self.acks.root(msg)
    }

    pub fn is_suspected(&self, id: &NodeId) -> bool {
        self.suspects.contains_key(id)
    }

    pub fn has_delivered(&self, msg: &MsgId) -> bool {
        self.delivered.contains_key(msg)
    }

    /// No open suspicions and no membership change within the stability
    /// window.
    pub fn view_is_stable(&self, now: Millis) -> bool {
        self.suspects.is_empty()
            && self
                .last_change
                .is_none_or(|t| now.saturating_sub(t) >= self.config.stability_window)
    }

    /// Arms the periodic timers of an active node, or sends the first
    /// SYNC_REQ of a joining one.
    pub fn start(&mut self, now: Millis) -> Effects {
        let mut fx = Effects::default();
        match self.status {
            Status::Active => self.arm_periodic(now, &mut fx),
            Status::Joining if !self.seeds.is_empty() => self.send_sync_to_seed(now, &mut fx),
            _ => {}
        }
        fx
    }

    pub fn join_cluster(&mut self, now: Millis) -> Result<Effects> {
        if self.status != Status::Joining {
            return Err(Error::InvalidStatus(self.status));
        }
        if self.seeds.is_empty() {
            return Err(Error::NoSeeds);
        }
        let mut fx = Effects::default();
        self.send_sync_to_seed(now, &mut fx);
        Ok(fx)
    }

    /// Starts a broadcast rooted here. Colored requests may be sent
    /// uncolored depending on the coloring policy and cluster size.
    pub fn initiate_broadcast(&mut self, payload: Payload, mode: Mode, now: Millis) -> Result<(MsgId, Effects)> {
        if self.status != Status::Active {
            return Err(Error::InvalidStatus(self.status));
        }
        let mut fx = Effects::default();
        let msg = self.originate(payload, mode, now, &mut fx)?;
        Ok((msg, fx))
    }

    /// Graceful departure: a reliable LEAVE, then DEAD once it converged and
    /// the linger delay passed.
    pub fn leave_cluster(&mut self, now: Millis) -> Result<Effects> {
        if self.status != Status::Active {
            return Err(Error::InvalidStatus(self.status));
        }
        let mut fx = Effects::default();
        self.status = Status::Leaving;
        match self.originate(Payload::Control(Control::Leave(self.me)), Mode::Reliable, now, &mut fx) {
            Ok(msg) => self.leave_msg = Some(msg),
            Err(_) => {
                self.status = Status::Dead;
                fx.events.push(NodeEvent::Departed);
            }
        }
        Ok(fx)
    }

    pub fn handle_envelope(&mut self, env: &Envelope, now: Millis) -> Effects {
        let mut fx = Effects::default();
        if self.status == Status::Dead {
            return fx;
        }
        if self.suspects.remove(&env.from).is_some() {
            fx.events.push(NodeEvent::Refuted { target: env.from });
        }
        match &env.body {
            Body::Data { task, payload } => self.on_data(env.from, *task, *payload, now, &mut fx),
            Body::Ack(ack) => {
                let (_, outs) = self.acks.on_ack(self.me, *ack, now);
                self.apply_reliable(outs, now, &mut fx);
            }
            Body::SyncReq => {
                if matches!(self.status, Status::Active | Status::Leaving) {
                    let tombstones = self
                        .tombstones
                        .entries()
                        .filter(|&(_, until)| until > now)
                        .map(|(id, until)| (id, until - now))
                        .collect();
                    fx.sends.push(self.envelope(
                        env.from,
                        Body::SyncResp {
                            members: self.view.members().to_vec(),
                            tombstones,
                        },
                    ));
                }
            }
            Body::SyncResp { members, tombstones } => self.on_sync_resp(members, tombstones, now, &mut fx),
            Body::Probe { seq } => fx.sends.push(self.envelope(env.from, Body::ProbeAck { seq: *seq })),
            Body::ProbeAck { seq } => {
                self.probes.remove(seq);
            }
        }
        fx
    }

    pub fn handle_timer(&mut self, timer: Timer, now: Millis) -> Effects {
        let mut fx = Effects::default();
        if self.status == Status::Dead {
            return fx;
        }
        match timer {
            Timer::ProbeTick => {
                if self.status != Status::Active || !self.config.failure_detector {
                    return fx;
                }
                self.housekeeping(now);
                fx.timers.push((now + self.config.probe_period, Timer::ProbeTick));
                if let Some(target) = self.random_peer() {
                    self.probe_seq += 1;
                    let seq = self.probe_seq;
                    self.probes.insert(seq, target);
                    fx.sends.push(self.envelope(target, Body::Probe { seq }));
                    fx.timers.push((now + self.config.probe_timeout, Timer::ProbeTimeout { seq }));
                }
            }
            Timer::ProbeTimeout { seq } => {
                if let Some(target) = self.probes.remove(&seq) {
                    self.suspect(target, now, &mut fx);
                }
            }
            Timer::SuspectDeadline { target } => {
                let due = self
                    .suspects
                    .get(&target)
                    .is_some_and(|s| s.own && s.deadline <= now);
                if due && self.status == Status::Active {
                    self.suspects.remove(&target);
                    self.remove_member(target, now);
                    fx.events.push(NodeEvent::ConfirmedDead { target });
                    let _ = self.originate(Payload::Control(Control::ConfirmDead(target)), Mode::Standard, now, &mut fx);
                }
            }
            Timer::SyncTick => {
                if self.status != Status::Active || !self.config.anti_entropy {
                    return fx;
                }
                self.housekeeping(now);
                fx.timers.push((now + self.config.sync_period, Timer::SyncTick));
                if let Some(target) = self.random_peer() {
                    fx.sends.push(self.envelope(target, Body::SyncReq));
                }
            }
            Timer::RootTimeout { msg, attempt } => {
                match self.acks.on_root_timeout(msg, attempt, now, self.config.max_attempts) {
                    TimeoutDecision::Rebroadcast { attempt } => self.emit_root_wave(msg, attempt, now, &mut fx),
                    TimeoutDecision::Failed => {
                        fx.events.push(NodeEvent::BroadcastFailed {
                            msg,
                            at: now,
                            attempts: attempt + 1,
                        });
                        self.finish_origination(msg, now, &mut fx);
                    }
                    TimeoutDecision::NotDue | TimeoutDecision::Settled => {}
                }
            }
            Timer::Linger => {
                if self.status == Status::Leaving {
                    self.status = Status::Dead;
                    fx.events.push(NodeEvent::Departed);
                }
            }
            Timer::JoinRetry => {
                if self.status == Status::Joining {
                    self.seed_cursor += 1;
                    self.send_sync_to_seed(now, &mut fx);
                }
            }
        }
        fx
    }

    /// `env`, sent by this node, could not be delivered (connection
    /// refused). The target becomes suspect; a DATA payload is forwarded
    /// straight to the children the target would have used.
    pub fn handle_send_failure(&mut self, env: &Envelope, now: Millis) -> Effects {
        let mut fx = Effects::default();
        if self.status == Status::Dead {
            return fx;
        }
        let failed = env.to;
        self.suspect(failed, now, &mut fx);
        match &env.body {
            Body::Data { task, payload } => {
                self.counters.proxied += 1;
                let kids = self.children_for(task, failed, &task.region, now).unwrap_or_else(|_| {
                    self.counters.malformed += 1;
                    Vec::new()
                });
                for c in &kids {
                    let sub = BroadcastTask { region: c.region, ..*task };
                    fx.sends.push(self.envelope(c.child, Body::Data { task: sub, payload: *payload }));
                }
                if task.mode.is_reliable() {
                    let pairs: Vec<_> = kids.iter().map(|c| (c.child, task.tree)).collect();
                    let outs = self
                        .acks
                        .replace_child(self.me, task.msg, task.attempt, (failed, task.tree), &pairs, now);
                    self.apply_reliable(outs, now, &mut fx);
                }
            }
            Body::SyncReq if self.status == Status::Joining => {
                self.seed_cursor += 1;
                self.send_sync_to_seed(now, &mut fx);
            }
            _ => {}
        }
        fx
    }

    fn envelope(&self, to: NodeId, body: Body) -> Envelope {
        Envelope { from: self.me, to, body }
    }

    fn arm_periodic(&mut self, now: Millis, fx: &mut Effects) {
        if self.config.failure_detector {
            let phase = self.rng.gen_range(0..self.config.probe_period.max(1));
            fx.timers.push((now + phase, Timer::ProbeTick));
        }
        if self.config.anti_entropy {
            let phase = self.rng.gen_range(0..self.config.sync_period.max(1));
            fx.timers.push((now + phase, Timer::SyncTick));
        }
    }

    fn send_sync_to_seed(&mut self, now: Millis, fx: &mut Effects) {
        let seed = self.seeds[self.seed_cursor % self.seeds.len()];
        fx.sends.push(self.envelope(seed, Body::SyncReq));
        fx.timers.push((now + self.config.join_retry, Timer::JoinRetry));
    }

    /// Uniformly random member other than this node.
    fn random_peer(&mut self) -> Option<NodeId> {
        let n = self.view.len();
        let me = self.view.position(&self.me)?;
        if n < 2 {
            return None;
        }
        let mut i = self.rng.gen_range(0..n - 1);
        if i >= me {
            i += 1;
        }
        self.view.get(i)
    }

    fn insert_member(&mut self, id: NodeId, now: Millis) {
        if self.view.insert(id) {
            self.last_change = Some(now);
        }
    }

    fn remove_member(&mut self, id: NodeId, now: Millis) {
        if self.view.remove(&id) {
            self.last_change = Some(now);
        }
        self.tombstones.insert(id, now + self.config.tombstone_ttl);
    }

    fn housekeeping(&mut self, now: Millis) {
        self.seen.retain(|_, until| *until > now);
        let mut expired = Vec::new();
        self.delivered.retain(|msg, until| {
            let keep = *until > now;
            if !keep {
                expired.push(*msg);
            }
            keep
        });
        expired.sort();
        for msg in expired {
            self.acks.forget(&msg);
        }
        self.tombstones.expire(now);
        let grace = self.config.suspect_timeout;
        self.suspects.retain(|_, s| s.own || s.deadline + grace > now);
    }

    fn suspect(&mut self, target: NodeId, now: Millis, fx: &mut Effects) {
        if self.status != Status::Active || target == self.me || !self.view.contains(&target) {
            return;
        }
        let already = match self.suspects.get(&target) {
            Some(s) if s.own => return,
            Some(_) => true,
            None => false,
        };
        let deadline = now + self.config.suspect_timeout;
        self.suspects.insert(target, Suspicion { deadline, own: true });
        fx.events.push(NodeEvent::Suspected { target });
        fx.timers.push((deadline, Timer::SuspectDeadline { target }));
        if !already {
            let suspicion = Control::Suspect {
                target,
                reporter: self.me,
            };
            let _ = self.originate(Payload::Control(suspicion), Mode::Standard, now, fx);
        }
    }

    fn originate(&mut self, payload: Payload, mode: Mode, now: Millis, fx: &mut Effects) -> Result<MsgId> {
        if self.view.len() < 2 {
            return Err(Error::SingletonCluster);
        }
        let colored = mode.is_colored()
            && self.view.len() >= 3
            && match self.config.coloring {
                ColoringPolicy::Always => true,
                ColoringPolicy::Never => false,
                ColoringPolicy::Auto => self.view_is_stable(now),
            };
        let msg = MsgId {
            origin: self.me,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        if mode.is_colored() && !colored {
            fx.events.push(NodeEvent::ColoringDowngraded { msg });
        }
        let mode = mode.with_coloring(colored);
        self.delivered.insert(msg, now + self.config.dedup_ttl);
        self.originated.insert(msg, Origination { payload, mode });
        self.emit_root_wave(msg, 0, now, fx);
        if !mode.is_reliable() {
            self.originated.remove(&msg);
        }
        Ok(msg)
    }

    /// Sends wave `attempt` of an own broadcast, routed on the current view.
    fn emit_root_wave(&mut self, msg: MsgId, attempt: u32, now: Millis, fx: &mut Effects) {
        let Some(orig) = self.originated.get(&msg).copied() else {
            return;
        };
        let n = self.view.len();
        let mut pairs = Vec::new();
        if n >= 2 {
            let region = Region::whole_ring(&self.view, &self.me).expect("self in view");
            let task = BroadcastTask {
                msg,
                root: self.me,
                region,
                mode: orig.mode,
                tree: TreeTag::Primary,
                color_root: self.me,
                attempt,
                hops: 1,
            };
            let colored = orig.mode.is_colored() && n >= 3;
            let children = if colored {
                compute_children_colored(&self.view, &self.me, &self.me, &region, self.config.fanout, &self.me)
            } else {
                compute_children(&self.view, &self.me, &self.me, &region, self.config.fanout)
            }
            .expect("root frame is valid");
            for c in &children {
                let sub = BroadcastTask { region: c.region, ..task };
                fx.sends.push(self.envelope(c.child, Body::Data { task: sub, payload: orig.payload }));
                pairs.push((c.child, TreeTag::Primary));
            }
            self.seen.insert((msg, attempt, TreeTag::Primary), now + self.config.dedup_ttl);
            if colored {
                let (second, sub) = spawn_secondary(&self.view, &self.me, &task).expect("n >= 3");
                fx.sends.push(self.envelope(second, Body::Data { task: sub, payload: orig.payload }));
                pairs.push((second, TreeTag::Secondary));
                self.seen.insert((msg, attempt, TreeTag::Secondary), now + self.config.dedup_ttl);
            }
        }
        if orig.mode.is_reliable() {
            let timeout = self.config.root_timeout_for(n);
            let outs = self.acks.arm_root(msg, attempt, &pairs, now, timeout);
            fx.timers.push((now + timeout, Timer::RootTimeout { msg, attempt }));
            self.apply_reliable(outs, now, fx);
        }
    }

    fn finish_origination(&mut self, msg: MsgId, now: Millis, fx: &mut Effects) {
        self.originated.remove(&msg);
        if self.leave_msg == Some(msg) && self.status == Status::Leaving {
            fx.timers.push((now + self.config.linger, Timer::Linger));
        }
    }

    fn apply_reliable(&mut self, outs: Vec<ReliableOut>, now: Millis, fx: &mut Effects) {
        for out in outs {
            match out {
                // DATA is emitted by the caller, which knows the regions.
                ReliableOut::Data { .. } => {}
                ReliableOut::Ack { to, ack } => fx.sends.push(self.envelope(to, Body::Ack(ack))),
                ReliableOut::Converged { msg, at, attempts } => {
                    fx.events.push(NodeEvent::Converged { msg, at, attempts });
                    self.finish_origination(msg, now, fx);
                }
                ReliableOut::Failed { msg, at, attempts } => {
                    fx.events.push(NodeEvent::BroadcastFailed { msg, at, attempts });
                    self.finish_origination(msg, now, fx);
                }
            }
        }
    }

    fn on_data(&mut self, from: NodeId, task: BroadcastTask, payload: Payload, now: Millis, fx: &mut Effects) {
        let wave = (task.msg, task.attempt, task.tree);
        if self.seen.contains_key(&wave) {
            self.counters.duplicates += 1;
            return;
        }
        self.seen.insert(wave, now + self.config.dedup_ttl);
        if let Payload::Control(Control::Join(joiner)) = payload {
            if joiner != self.me && self.status != Status::Joining {
                self.tombstones.remove(&joiner);
                self.insert_member(joiner, now);
            }
        }
        let children = match self.children_for(&task, self.me, &task.region, now) {
            Ok(c) => c,
            Err(_) => {
                self.counters.malformed += 1;
                return;
            }
        };
        let first = !self.delivered.contains_key(&task.msg);
        if first {
            self.delivered.insert(task.msg, now + self.config.dedup_ttl);
            fx.deliveries.push(Delivery {
                msg: task.msg,
                payload,
                hops: task.hops,
                tree: task.tree,
                attempt: task.attempt,
                mode: task.mode,
            });
        }
        for c in &children {
            let sub = BroadcastTask {
                region: c.region,
                hops: task.hops + 1,
                ..task
            };
            fx.sends.push(self.envelope(c.child, Body::Data { task: sub, payload }));
        }
        if task.mode.is_reliable() {
            let pairs: Vec<_> = children.iter().map(|c| (c.child, task.tree)).collect();
            let outs = self
                .acks
                .on_deliver_reliable(self.me, task.msg, task.attempt, task.tree, from, &pairs);
            self.apply_reliable(outs, now, fx);
        }
        if first {
            if let Payload::Control(control) = payload {
                self.apply_control(control, now, fx);
            }
        }
    }

    fn apply_control(&mut self, control: Control, now: Millis, fx: &mut Effects) {
        match control {
            Control::Join(_) => {}
            Control::Leave(id) => {
                if id != self.me {
                    self.suspects.remove(&id);
                    self.remove_member(id, now);
                }
            }
            Control::ConfirmDead(id) => {
                if id == self.me {
                    self.counters.false_confirms += 1;
                } else {
                    self.suspects.remove(&id);
                    self.remove_member(id, now);
                }
            }
            Control::Suspect { target, reporter } => {
                if target == self.me {
                    self.counters.refutations += 1;
                    fx.sends.push(self.envelope(reporter, Body::ProbeAck { seq: 0 }));
                } else if self.view.contains(&target) && !self.suspects.contains_key(&target) {
                    self.suspects.insert(
                        target,
                        Suspicion {
                            deadline: now + self.config.suspect_timeout,
                            own: false,
                        },
                    );
                }
            }
        }
    }

    fn on_sync_resp(&mut self, members: &[NodeId], tombstones: &[(NodeId, Millis)], now: Millis, fx: &mut Effects) {
        if !matches!(self.status, Status::Joining | Status::Active | Status::Leaving) {
            return;
        }
        for &(id, remaining) in tombstones {
            if id != self.me {
                self.tombstones.insert(id, now + remaining);
            }
        }
        let remote = MembershipView::from_members(members.iter().copied());
        let mut merged = self.view.merge(&remote, &self.tombstones.ids());
        merged.insert(self.me);
        if merged.members() != self.view.members() {
            self.last_change = Some(now);
        }
        self.view = merged;
        if self.status == Status::Joining {
            self.status = Status::Active;
            fx.events.push(NodeEvent::Joined);
            self.arm_periodic(now, fx);
            let _ = self.originate(Payload::Control(Control::Join(self.me)), Mode::Standard, now, fx);
        }
    }

    /// Children of `acting` for `task` over `region`, expanding tombstoned
    /// nodes by proxy. Ids the task names that are missing from the view
    /// are inserted, unless tombstoned; those only live in a scratch copy.
    fn children_for(
        &mut self,
        task: &BroadcastTask,
        acting: NodeId,
        region: &Region,
        now: Millis,
    ) -> Result<Vec<ChildAssignment>> {
        let named = [task.root, region.left, region.right, task.color_root, acting];
        let mut scratch = BTreeSet::new();
        for id in named {
            if self.view.contains(&id) {
                continue;
            }
            let keep = id != self.me
                && id != acting
                && !self.tombstones.contains(&id)
                && matches!(self.status, Status::Active | Status::Leaving);
            if keep {
                self.insert_member(id, now);
            } else {
                scratch.insert(id);
            }
        }
        let phantoms: BTreeSet<NodeId> = scratch
            .iter()
            .copied()
            .filter(|id| self.tombstones.contains(id) && *id != acting)
            .collect();
        let view = if scratch.is_empty() {
            std::borrow::Cow::Borrowed(&self.view)
        } else {
            let mut v = self.view.clone();
            for id in &scratch {
                v.insert(*id);
            }
            std::borrow::Cow::Owned(v)
        };
        let fanout = self.config.fanout;
        let compute = |who: &NodeId, region: &Region| {
            if task.mode.is_colored() {
                compute_children_colored(&view, &task.root, who, region, fanout, &task.color_root)
            } else {
                compute_children(&view, &task.root, who, region, fanout)
            }
        };
        let mut queue: VecDeque<_> = compute(&acting, region)?.into();
        let mut out = Vec::new();
        let mut expanded = 0;
        while let Some(c) = queue.pop_front() {
            if phantoms.contains(&c.child) {
                expanded += 1;
                queue.extend(compute(&c.child, &c.region)?);
            } else if c.child != self.me {
                out.push(c);
            }
        }
        self.counters.phantoms += expanded;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Kind;
    use crate::routing::Fanout;

    fn id(i: u16) -> NodeId {
        NodeId::v4(10, 0, 0, i as u8, 7000)
    }

    fn ring(n: u16) -> MembershipView {
        MembershipView::from_members((1..=n).map(id))
    }

    fn cfg(k: usize) -> NodeConfig {
        NodeConfig::new(Fanout::new(k).unwrap())
    }

    fn node(i: u16, n: u16, k: usize) -> SnowNode {
        SnowNode::member(id(i), ring(n), cfg(k), i as u64)
    }

    fn app() -> Payload {
        Payload::App { size: 100 }
    }

    fn data_targets(fx: &Effects) -> Vec<NodeId> {
        fx.sends
            .iter()
            .filter(|e| matches!(e.body, Body::Data { .. }))
            .map(|e| e.to)
            .collect()
    }

    #[test]
    fn standard_root_sends_to_section_midpoints() {
        let mut n0 = node(10, 10, 2);
        let (_, fx) = n0.initiate_broadcast(app(), Mode::Standard, 0).unwrap();
        assert_eq!(data_targets(&fx), vec![id(7), id(3)]);
    }

    #[test]
    fn colored_root_adds_secondary_root() {
        let mut n0 = node(10, 10, 2);
        let (_, fx) = n0.initiate_broadcast(app(), Mode::Colored, 0).unwrap();
        let targets = data_targets(&fx);
        assert_eq!(targets.len(), 3);
        assert_eq!(*targets.last().unwrap(), id(9));
    }

    #[test]
    fn colored_request_downgrades_when_view_unstable() {
        let mut n0 = node(10, 10, 2);
        n0.suspects.insert(id(4), Suspicion { deadline: 10, own: false });
        let (msg, fx) = n0.initiate_broadcast(app(), Mode::Colored, 0).unwrap();
        assert_eq!(data_targets(&fx).len(), 2);
        assert!(fx.events.contains(&NodeEvent::ColoringDowngraded { msg }));
    }

    #[test]
    fn singleton_cannot_broadcast() {
        let mut solo = SnowNode::member(id(1), MembershipView::new(), cfg(2), 0);
        assert_eq!(solo.initiate_broadcast(app(), Mode::Standard, 0).unwrap_err(), Error::SingletonCluster);
    }

    #[test]
    fn first_receipt_delivers_and_forwards_duplicate_does_nothing() {
        let mut root = node(10, 10, 2);
        let (_, fx) = root.initiate_broadcast(app(), Mode::Standard, 0).unwrap();
        let to3 = fx.sends.iter().find(|e| e.to == id(3)).unwrap().clone();
        let mut n3 = node(3, 10, 2);
        let out = n3.handle_envelope(&to3, 5);
        assert_eq!(out.deliveries.len(), 1);
        assert!(!out.sends.is_empty() && out.sends.len() <= 2);
        let again = n3.handle_envelope(&to3, 6);
        assert!(again.sends.is_empty() && again.deliveries.is_empty());
        assert_eq!(n3.counters().duplicates, 1);
    }

    #[test]
    fn unknown_boundary_is_inserted_before_routing() {
        let mut root = node(10, 10, 2);
        let (_, fx) = root.initiate_broadcast(app(), Mode::Standard, 0).unwrap();
        let to3 = fx.sends.iter().find(|e| e.to == id(3)).unwrap().clone();
        let mut partial = MembershipView::from_members((2..=10).map(id));
        partial.remove(&id(5));
        let mut n3 = SnowNode::member(id(3), partial, cfg(2), 0);
        let out = n3.handle_envelope(&to3, 0);
        assert!(n3.view().contains(&id(1)));
        assert_eq!(out.deliveries.len(), 1);
    }

    #[test]
    fn tombstoned_boundary_is_routed_around() {
        let mut root = node(10, 10, 2);
        let (_, fx) = root.initiate_broadcast(app(), Mode::Standard, 0).unwrap();
        let to3 = fx.sends.iter().find(|e| e.to == id(3)).unwrap().clone();
        let mut n3 = node(3, 10, 2);
        n3.remove_member(id(1), 0);
        n3.remove_member(id(2), 0);
        let out = n3.handle_envelope(&to3, 1);
        assert!(!n3.view().contains(&id(1)));
        let targets = data_targets(&out);
        assert!(!targets.contains(&id(1)) && !targets.contains(&id(2)));
        assert!(targets.contains(&id(4)));
    }

    #[test]
    fn reliable_leaf_acks_parent() {
        let mut root = node(9, 9, 8);
        let (msg, fx) = root.initiate_broadcast(app(), Mode::Reliable, 0).unwrap();
        assert_eq!(data_targets(&fx).len(), 8);
        let mut acks = Vec::new();
        for e in fx.sends.iter() {
            let mut child = node(e.to.addr()[15] as u16, 9, 8);
            acks.extend(child.handle_envelope(e, 1).sends);
        }
        assert!(acks.iter().all(|e| e.kind() == Kind::Ack && e.to == id(9)));
        let mut events = Vec::new();
        for a in &acks {
            events.extend(root.handle_envelope(a, 2).events);
        }
        assert_eq!(events, vec![NodeEvent::Converged { msg, at: 2, attempts: 1 }]);
    }

    #[test]
    fn send_failure_proxies_region_and_suspects() {
        let mut root = node(10, 10, 2);
        let (_, fx) = root.initiate_broadcast(app(), Mode::Standard, 0).unwrap();
        let to3 = fx.sends.iter().find(|e| e.to == id(3)).unwrap().clone();
        let out = root.handle_send_failure(&to3, 1);
        let targets = data_targets(&out);
        assert!(targets.contains(&id(2)) && targets.contains(&id(4)));
        assert!(root.is_suspected(&id(3)));
        assert!(out.sends.iter().any(|e| e.kind() == Kind::Suspect));
    }

    #[test]
    fn suspect_confirms_after_timeout_unless_refuted() {
        let mut a = node(1, 5, 2);
        let mut fx = Effects::default();
        a.suspect(id(3), 0, &mut fx);
        let deadline = fx.timers.iter().find(|t| matches!(t.1, Timer::SuspectDeadline { .. })).unwrap().0;
        assert_eq!(deadline, 2000);
        let out = a.handle_timer(Timer::SuspectDeadline { target: id(3) }, deadline);
        assert!(!a.view().contains(&id(3)));
        assert!(a.tombstones().contains(&id(3)));
        assert!(out.sends.iter().any(|e| e.kind() == Kind::ConfirmDead));

        let mut b = node(1, 5, 2);
        let mut fx = Effects::default();
        b.suspect(id(3), 0, &mut fx);
        let ping = Envelope {
            from: id(3),
            to: id(1),
            body: Body::ProbeAck { seq: 0 },
        };
        let out = b.handle_envelope(&ping, 100);
        assert!(out.events.contains(&NodeEvent::Refuted { target: id(3) }));
        b.handle_timer(Timer::SuspectDeadline { target: id(3) }, 2000);
        assert!(b.view().contains(&id(3)));
    }

    #[test]
    fn probes_never_target_self() {
        let mut a = node(1, 2, 2);
        for t in 0..50 {
            let fx = a.handle_timer(Timer::ProbeTick, t * 1000);
            for e in fx.sends {
                assert_eq!(e.to, id(2));
            }
        }
    }

    #[test]
    fn join_adopts_view_before_announcing() {
        let mut j = SnowNode::joiner(id(11), vec![id(1)], cfg(4), 0);
        let fx = j.start(0);
        assert_eq!(fx.sends[0].kind(), Kind::SyncReq);
        let mut seed = node(1, 10, 4);
        let resp = seed.handle_envelope(&fx.sends[0], 5);
        let out = j.handle_envelope(&resp.sends[0], 10);
        assert_eq!(j.status(), Status::Active);
        assert_eq!(j.view().len(), 11);
        assert!(out.events.contains(&NodeEvent::Joined));
        assert!(out.sends.iter().any(|e| e.kind() == Kind::Join));
    }

    #[test]
    fn unreachable_seed_moves_to_next() {
        let mut j = SnowNode::joiner(id(11), vec![id(1), id(2)], cfg(4), 0);
        let fx = j.start(0);
        let out = j.handle_send_failure(&fx.sends[0], 1);
        assert_eq!(out.sends[0].to, id(2));
    }

    #[test]
    fn leave_goes_dead_after_convergence_and_linger() {
        let mut a = node(1, 3, 2);
        let fx = a.leave_cluster(0).unwrap();
        assert_eq!(a.status(), Status::Leaving);
        assert!(a.initiate_broadcast(app(), Mode::Standard, 1).is_err());
        let mut acks = Vec::new();
        for e in &fx.sends {
            let mut peer = node(e.to.addr()[15] as u16, 3, 2);
            acks.extend(peer.handle_envelope(e, 1).sends);
            assert!(!peer.view().contains(&id(1)));
        }
        let mut linger = None;
        for ack in &acks {
            let out = a.handle_envelope(ack, 2);
            linger = linger.or(out.timers.iter().find(|t| t.1 == Timer::Linger).copied());
        }
        let (at, timer) = linger.expect("linger armed");
        assert_eq!(at, 502);
        a.handle_timer(timer, at);
        assert_eq!(a.status(), Status::Dead);
    }

    #[test]
    fn sync_never_resurrects_tombstoned() {
        let mut a = node(1, 5, 2);
        a.remove_member(id(4), 0);
        let resp = Envelope {
            from: id(2),
            to: id(1),
            body: Body::SyncResp {
                members: ring(5).members().to_vec(),
                tombstones: vec![],
            },
        };
        a.handle_envelope(&resp, 10);
        assert!(!a.view().contains(&id(4)));
        assert_eq!(a.view().len(), 4);
    }

    #[test]
    fn root_timeout_rebroadcasts_then_fails() {
        let mut a = node(1, 5, 2);
        let (msg, fx) = a.initiate_broadcast(app(), Mode::Reliable, 0).unwrap();
        let (at, t) = *fx.timers.iter().find(|t| matches!(t.1, Timer::RootTimeout { .. })).unwrap();
        let out = a.handle_timer(t, at);
        assert!(!data_targets(&out).is_empty());
        let (at, t) = *out.timers.iter().find(|t| matches!(t.1, Timer::RootTimeout { .. })).unwrap();
        let out = a.handle_timer(t, at);
        let (at, t) = *out.timers.iter().find(|t| matches!(t.1, Timer::RootTimeout { .. })).unwrap();
        let out = a.handle_timer(t, at);
        assert!(matches!(out.events[..], [NodeEvent::BroadcastFailed { msg: m, attempts: 3, .. }] if m == msg));
    }
}
