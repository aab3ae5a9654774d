//! The sorted membership ring.
//!
//! Every node keeps the full cluster membership as an ascending array of
//! [`NodeId`]s. Broadcast routing never looks at absolute array indices; it
//! works with [`RingOffset`]s measured clockwise (ascending id) from the
//! message root, so two nodes whose views agree on the relevant ids make the
//! same routing decisions.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::id::NodeId;
use crate::Millis;

/// Position of a node relative to a chosen root, root at 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RingOffset(pub usize);

/// A node's local picture of the cluster.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MembershipView {
    members: Vec<NodeId>,
    version: u64,
}

impl MembershipView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_members<I: IntoIterator<Item = NodeId>>(ids: I) -> Self {
        let mut members: Vec<NodeId> = ids.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        MembershipView {
            members,
            version: 0,
        }
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Local change counter. Never compared across nodes.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn position(&self, id: &NodeId) -> Option<usize> {
        self.members.binary_search(id).ok()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.position(id).is_some()
    }

    pub fn get(&self, index: usize) -> Option<NodeId> {
        self.members.get(index).copied()
    }

    /// Inserts `id`; returns whether the view changed.
    pub fn insert(&mut self, id: NodeId) -> bool {
        match self.members.binary_search(&id) {
            Ok(_) => false,
            Err(at) => {
                self.members.insert(at, id);
                self.version += 1;
                true
            }
        }
    }

    /// Removes `id`; returns whether the view changed.
    pub fn remove(&mut self, id: &NodeId) -> bool {
        match self.members.binary_search(id) {
            Ok(at) => {
                self.members.remove(at);
                self.version += 1;
                true
            }
            Err(_) => false,
        }
    }

    fn require(&self, id: &NodeId) -> Result<usize> {
        self.position(id).ok_or(Error::UnknownNode(*id))
    }

    /// `(position(id) - position(root)) mod n`.
    pub fn ring_offset(&self, root: &NodeId, id: &NodeId) -> Result<RingOffset> {
        let r = self.require(root)?;
        let i = self.require(id)?;
        let n = self.members.len();
        Ok(RingOffset((i + n - r) % n))
    }

    /// Inverse of [`ring_offset`](Self::ring_offset).
    pub fn by_offset(&self, root: &NodeId, offset: RingOffset) -> Result<NodeId> {
        let r = self.require(root)?;
        let n = self.members.len();
        if offset.0 >= n {
            return Err(Error::OutOfRange {
                offset: offset.0,
                len: n,
            });
        }
        Ok(self.members[(r + offset.0) % n])
    }

    /// Union of both views minus `tombstones`.
    pub fn merge(&self, remote: &MembershipView, tombstones: &BTreeSet<NodeId>) -> MembershipView {
        let mut merged = Vec::with_capacity(self.members.len().max(remote.members.len()));
        let (mut a, mut b) = (self.members.iter().peekable(), remote.members.iter().peekable());
        loop {
            let next = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) if x < y => a.next(),
                (Some(x), Some(y)) if y < x => b.next(),
                (Some(_), Some(_)) => {
                    b.next();
                    a.next()
                }
                (Some(_), None) => a.next(),
                (None, Some(_)) => b.next(),
                (None, None) => break,
            };
            let id = *next.expect("peeked");
            if !tombstones.contains(&id) {
                merged.push(id);
            }
        }
        let version = if merged == self.members {
            self.version
        } else {
            self.version + 1
        };
        MembershipView {
            members: merged,
            version,
        }
    }
}

/// Ids of departed nodes, remembered until an expiry time so that
/// anti-entropy cannot bring them back.
#[derive(Clone, Debug, Default)]
pub struct Tombstones {
    until: BTreeMap<NodeId, Millis>,
}

impl Tombstones {
    pub fn insert(&mut self, id: NodeId, until: Millis) {
        let slot = self.until.entry(id).or_insert(until);
        *slot = (*slot).max(until);
    }

    pub fn remove(&mut self, id: &NodeId) {
        self.until.remove(id);
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.until.contains_key(id)
    }

    pub fn expire(&mut self, now: Millis) {
        self.until.retain(|_, until| *until > now);
    }

    /// Each tombstone with its expiry time.
    pub fn entries(&self) -> impl Iterator<Item = (NodeId, Millis)> + '_ {
        self.until.iter().map(|(id, until)| (*id, *until))
    }

    pub fn ids(&self) -> BTreeSet<NodeId> {
        self.until.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.until.len()
    }

    pub fn is_empty(&self) -> bool {
        self.until.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(i: u16) -> NodeId {
        NodeId::v4(10, 0, (i >> 8) as u8, i as u8, 7000)
    }

    fn ring(n: usize) -> MembershipView {
        MembershipView::from_members((0..n as u16).map(id))
    }

    fn assert_sorted(v: &MembershipView) {
        assert!(v.members().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn insert_keeps_order() {
        let (a, b, c) = (id(1), id(2), id(3));
        let mut v = MembershipView::from_members([a, c]);
        assert!(v.insert(b));
        assert_eq!(v.members(), &[a, b, c]);
        assert_eq!(v.version(), 1);
    }

    #[test]
    fn duplicate_insert_is_noop() {
        let (a, b) = (id(1), id(2));
        let mut v = MembershipView::from_members([a, b]);
        assert!(!v.insert(b));
        assert_eq!(v.members(), &[a, b]);
        assert_eq!(v.version(), 0);
    }

    #[test]
    fn insert_into_empty() {
        let mut v = MembershipView::new();
        v.insert(id(9));
        assert_eq!(v.members(), &[id(9)]);
    }

    #[test]
    fn remove_cases() {
        let (a, b, c) = (id(1), id(2), id(3));
        let mut v = MembershipView::from_members([a, b, c]);
        assert!(v.remove(&b));
        assert_eq!(v.members(), &[a, c]);
        assert!(!v.remove(&b));
        assert_eq!(v.members(), &[a, c]);
        assert_eq!(v.version(), 1);

        let mut single = MembershipView::from_members([a]);
        single.remove(&a);
        assert!(single.is_empty());
    }

    #[test]
    fn offsets() {
        let v = ring(10);
        assert_eq!(v.ring_offset(&id(0), &id(3)).unwrap(), RingOffset(3));
        // (2 - 7) mod 10
        assert_eq!(v.ring_offset(&id(7), &id(2)).unwrap(), RingOffset(5));
        assert_eq!(v.ring_offset(&id(4), &id(4)).unwrap(), RingOffset(0));
        assert_eq!(
            v.ring_offset(&id(0), &id(99)),
            Err(Error::UnknownNode(id(99)))
        );
    }

    #[test]
    fn by_offset_neighbours() {
        let v = ring(10);
        assert_eq!(v.by_offset(&id(0), RingOffset(1)).unwrap(), id(1));
        assert_eq!(v.by_offset(&id(0), RingOffset(9)).unwrap(), id(9));
        assert_eq!(v.by_offset(&id(6), RingOffset(5)).unwrap(), id(1));
        assert_eq!(
            v.by_offset(&id(0), RingOffset(10)),
            Err(Error::OutOfRange { offset: 10, len: 10 })
        );
    }

    #[test]
    fn offset_round_trip_exhaustive() {
        for n in 1..=64 {
            let v = ring(n);
            for root in v.members() {
                for (i, member) in v.members().iter().enumerate() {
                    let off = v.ring_offset(root, member).unwrap();
                    assert_eq!(v.by_offset(root, off).unwrap(), *member);
                    assert_eq!(v.ring_offset(root, &v.by_offset(root, RingOffset(i)).unwrap()).unwrap(), RingOffset(i));
                }
            }
        }
    }

    #[test]
    fn merge_cases() {
        let (a, b, c) = (id(1), id(2), id(3));
        let ab = MembershipView::from_members([a, b]);
        let bc = MembershipView::from_members([b, c]);
        let none = BTreeSet::new();
        assert_eq!(ab.merge(&bc, &none).members(), &[a, b, c]);
        assert_eq!(ab.merge(&bc, &BTreeSet::from([c])).members(), &[a, b]);
        let same = ab.merge(&ab, &none);
        assert_eq!(same, ab);
    }

    #[test]
    fn tombstones_expire() {
        let mut t = Tombstones::default();
        t.insert(id(1), 100);
        t.insert(id(2), 300);
        t.expire(100);
        assert!(!t.contains(&id(1)));
        assert!(t.contains(&id(2)));
    }

    fn view_strategy() -> impl Strategy<Value = MembershipView> {
        prop::collection::vec(0u16..400, 0..80).prop_map(|v| MembershipView::from_members(v.into_iter().map(id)))
    }

    proptest! {
        #[test]
        fn mutations_keep_strict_order(ops in prop::collection::vec((any::<bool>(), 0u16..64), 0..200)) {
            let mut v = MembershipView::new();
            for (ins, x) in ops {
                let before = v.clone();
                let changed = if ins { v.insert(id(x)) } else { v.remove(&id(x)) };
                assert_sorted(&v);
                prop_assert_eq!(changed, before.members() != v.members());
                prop_assert_eq!(v.version(), before.version() + changed as u64);
                prop_assert_eq!(v.contains(&id(x)), ins);
            }
        }

        #[test]
        fn merge_commutes_and_is_idempotent(a in view_strategy(), b in view_strategy(), t in prop::collection::btree_set(0u16..400, 0..20)) {
            let tomb: BTreeSet<NodeId> = t.into_iter().map(id).collect();
            let ab = a.merge(&b, &tomb);
            let ba = b.merge(&a, &tomb);
            prop_assert_eq!(ab.members(), ba.members());
            let again = ab.merge(&ab, &tomb);
            prop_assert_eq!(again.members(), ab.members());
            assert_sorted(&ab);
            prop_assert!(ab.members().iter().all(|m| !tomb.contains(m)));
        }

        #[test]
        fn offsets_round_trip_random(n in 65usize..400, root in 0usize..400, member in 0usize..400) {
            let v = ring(n);
            let root = v.get(root % n).unwrap();
            let member = v.get(member % n).unwrap();
            let off = v.ring_offset(&root, &member).unwrap();
            prop_assert_eq!(v.by_offset(&root, off).unwrap(), member);
        }
    }
}
