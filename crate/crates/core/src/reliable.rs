//! Reliable Messages: acknowledgments aggregated from the leaves up to the
//! root, with root-side timeout and retransmission.
//!
//! A node acknowledges a wave to its parent only once every child it
//! forwarded that wave to has acknowledged. The root treats an empty pending
//! set as convergence; if that does not happen before the deadline it starts
//! a new wave, routed against its then-current view.

use std::collections::{BTreeMap, BTreeSet};

use crate::id::NodeId;
use crate::message::{MsgId, TreeTag};
use crate::Millis;

/// Acknowledgment for one wave of one message. Carries no payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ack {
    pub msg: MsgId,
    pub attempt: u32,
    /// Tree the acknowledging node received the wave on.
    pub tree: TreeTag,
    pub from: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct WaveKey {
    msg: MsgId,
    attempt: u32,
    tree: TreeTag,
}

/// Children still owing an acknowledgment for one wave at one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AckState {
    pub pending: BTreeSet<(NodeId, TreeTag)>,
    /// `None` at the origin.
    pub parent: Option<NodeId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RootStatus {
    Pending,
    Converged { at: Millis },
    Failed { at: Millis },
}

/// Origin-side bookkeeping for a reliable broadcast.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RootEntry {
    pub attempt: u32,
    pub deadline: Millis,
    pub started: Millis,
    pub status: RootStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReliableOut {
    /// Forward the wave's DATA to this child.
    Data { to: NodeId, tree: TreeTag },
    Ack { to: NodeId, ack: Ack },
    Converged { msg: MsgId, at: Millis, attempts: u32 },
    Failed { msg: MsgId, at: Millis, attempts: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AckOutcome {
    Accepted,
    /// No state for this wave, e.g. it already completed.
    UnknownMessage,
    /// State exists but the sender is not a pending child.
    UnexpectedAcker,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeoutDecision {
    /// Stale timer or deadline not reached.
    NotDue,
    Settled,
    Rebroadcast { attempt: u32 },
    Failed,
}

#[derive(Clone, Debug, Default)]
pub struct AckTable {
    waves: BTreeMap<WaveKey, AckState>,
    handled: BTreeSet<WaveKey>,
    roots: BTreeMap<MsgId, RootEntry>,
    unexpected_acks: u64,
    unknown_acks: u64,
}

impl AckTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// A non-root node received a reliable wave and will forward it to
    /// `children`. Returns nothing on a repeated delivery of the same wave.
    pub fn on_deliver_reliable(
        &mut self,
        me: NodeId,
        msg: MsgId,
        attempt: u32,
        tree: TreeTag,
        parent: NodeId,
        children: &[(NodeId, TreeTag)],
    ) -> Vec<ReliableOut> {
        let key = WaveKey { msg, attempt, tree };
        if !self.handled.insert(key) {
            return Vec::new();
        }
        if children.is_empty() {
            return vec![ReliableOut::Ack {
                to: parent,
                ack: Ack { msg, attempt, tree, from: me },
            }];
        }
        self.waves.insert(
            key,
            AckState {
                pending: children.iter().copied().collect(),
                parent: Some(parent),
            },
        );
        children
            .iter()
            .map(|&(to, tree)| ReliableOut::Data { to, tree })
            .collect()
    }

    /// The origin starts wave `attempt` towards `children`.
    pub fn arm_root(
        &mut self,
        msg: MsgId,
        attempt: u32,
        children: &[(NodeId, TreeTag)],
        now: Millis,
        timeout: Millis,
    ) -> Vec<ReliableOut> {
        let key = WaveKey {
            msg,
            attempt,
            tree: TreeTag::Primary,
        };
        self.handled.insert(key);
        self.waves.insert(
            key,
            AckState {
                pending: children.iter().copied().collect(),
                parent: None,
            },
        );
        let entry = self.roots.entry(msg).or_insert(RootEntry {
            attempt,
            deadline: now + timeout,
            started: now,
            status: RootStatus::Pending,
        });
        entry.attempt = attempt;
        entry.deadline = now + timeout;
        let mut out: Vec<ReliableOut> = children
            .iter()
            .map(|&(to, tree)| ReliableOut::Data { to, tree })
            .collect();
        if children.is_empty() {
            out.extend(self.settle(msg.origin, key, now));
        }
        out
    }

    fn find_wave(&self, msg: MsgId, attempt: u32, child: (NodeId, TreeTag)) -> Option<WaveKey> {
        [TreeTag::Primary, TreeTag::Secondary]
            .into_iter()
            .map(|tree| WaveKey { msg, attempt, tree })
            .find(|k| self.waves.get(k).is_some_and(|s| s.pending.contains(&child)))
    }

    fn has_wave(&self, msg: MsgId, attempt: u32) -> bool {
        [TreeTag::Primary, TreeTag::Secondary]
            .into_iter()
            .any(|tree| self.waves.contains_key(&WaveKey { msg, attempt, tree }))
    }

    pub fn on_ack(&mut self, me: NodeId, ack: Ack, now: Millis) -> (AckOutcome, Vec<ReliableOut>) {
        let Some(key) = self.find_wave(ack.msg, ack.attempt, (ack.from, ack.tree)) else {
            let outcome = if self.has_wave(ack.msg, ack.attempt) {
                self.unexpected_acks += 1;
                AckOutcome::UnexpectedAcker
            } else {
                self.unknown_acks += 1;
                AckOutcome::UnknownMessage
            };
            return (outcome, Vec::new());
        };
        let state = self.waves.get_mut(&key).expect("found above");
        state.pending.remove(&(ack.from, ack.tree));
        (AckOutcome::Accepted, self.settle(me, key, now))
    }

    /// A DATA send to `failed` could not be delivered; the caller took over
    /// its region and forwarded to `replacements` instead.
    pub fn replace_child(
        &mut self,
        me: NodeId,
        msg: MsgId,
        attempt: u32,
        failed: (NodeId, TreeTag),
        replacements: &[(NodeId, TreeTag)],
        now: Millis,
    ) -> Vec<ReliableOut> {
        let Some(key) = self.find_wave(msg, attempt, failed) else {
            return Vec::new();
        };
        let state = self.waves.get_mut(&key).expect("found above");
        state.pending.remove(&failed);
        state.pending.extend(replacements.iter().copied());
        self.settle(me, key, now)
    }

    fn settle(&mut self, me: NodeId, key: WaveKey, now: Millis) -> Vec<ReliableOut> {
        if !self.waves[&key].pending.is_empty() {
            return Vec::new();
        }
        let state = self.waves.remove(&key).expect("present");
        match state.parent {
            Some(parent) => vec![ReliableOut::Ack {
                to: parent,
                ack: Ack {
                    msg: key.msg,
                    attempt: key.attempt,
                    tree: key.tree,
                    from: me,
                },
            }],
            None => {
                let Some(entry) = self.roots.get_mut(&key.msg) else {
                    return Vec::new();
                };
                if entry.status != RootStatus::Pending {
                    return Vec::new();
                }
                entry.status = RootStatus::Converged { at: now };
                vec![ReliableOut::Converged {
                    msg: key.msg,
                    at: now,
                    attempts: entry.attempt + 1,
                }]
            }
        }
    }

    /// Root deadline for wave `attempt` passed. `max_attempts` bounds the
    /// total number of waves.
    pub fn on_root_timeout(&mut self, msg: MsgId, attempt: u32, now: Millis, max_attempts: u32) -> TimeoutDecision {
        let Some(entry) = self.roots.get_mut(&msg) else {
            return TimeoutDecision::NotDue;
        };
        match entry.status {
            RootStatus::Pending => {}
            _ => return TimeoutDecision::Settled,
        }
        if entry.attempt != attempt || now < entry.deadline {
            return TimeoutDecision::NotDue;
        }
        self.waves.remove(&WaveKey {
            msg,
            attempt,
            tree: TreeTag::Primary,
        });
        if attempt + 1 >= max_attempts {
            entry.status = RootStatus::Failed { at: now };
            TimeoutDecision::Failed
        } else {
            TimeoutDecision::Rebroadcast { attempt: attempt + 1 }
        }
    }

    pub fn root(&self, msg: &MsgId) -> Option<&RootEntry> {
        self.roots.get(msg)
    }

    pub fn pending(&self, msg: MsgId, attempt: u32, tree: TreeTag) -> Option<&AckState> {
        self.waves.get(&WaveKey { msg, attempt, tree })
    }

    pub fn unexpected_acks(&self) -> u64 {
        self.unexpected_acks
    }

    pub fn unknown_acks(&self) -> u64 {
        self.unknown_acks
    }

    /// Drops all per-wave state for `msg` (root entries are kept).
    pub fn forget(&mut self, msg: &MsgId) {
        self.waves.retain(|k, _| k.msg != *msg);
        self.handled.retain(|k| k.msg != *msg);
    }
}
