//! A materialized dissemination tree.
//!
//! The protocol never builds one of these; they exist so tests, the verifier
//! and the metrics code can reason about the tree a broadcast implicitly
//! follows.

use std::collections::BTreeSet;

use crate::id::NodeId;

#[derive(Clone, Debug)]
pub struct DisseminationTree {
    members: Vec<NodeId>,
    root: usize,
    parent: Vec<Option<usize>>,
    depth: Vec<Option<u32>>,
    receipts: Vec<u32>,
    children: Vec<u32>,
}

/// A node that was not delivered exactly the expected number of times.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoverageFault {
    pub node: NodeId,
    pub expected: u32,
    pub receipts: u32,
}

impl DisseminationTree {
    pub(crate) fn new(members: Vec<NodeId>, root: usize) -> Self {
        let n = members.len();
        let mut depth = vec![None; n];
        depth[root] = Some(0);
        DisseminationTree {
            members,
            root,
            parent: vec![None; n],
            depth,
            receipts: vec![0; n],
            children: vec![0; n],
        }
    }

    /// Records a send from `parent` to `child`. Returns true on the child's
    /// first receipt.
    pub(crate) fn attach(&mut self, child: usize, parent: usize, depth: u32) -> bool {
        self.receipts[child] += 1;
        self.children[parent] += 1;
        if self.receipts[child] == 1 && child != self.root {
            self.parent[child] = Some(parent);
            self.depth[child] = Some(depth);
            true
        } else {
            false
        }
    }

    fn index(&self, id: &NodeId) -> Option<usize> {
        self.members.binary_search(id).ok()
    }

    pub fn root(&self) -> NodeId {
        self.members[self.root]
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn parent(&self, id: &NodeId) -> Option<NodeId> {
        self.index(id).and_then(|i| self.parent[i]).map(|p| self.members[p])
    }

    pub fn depth(&self, id: &NodeId) -> Option<u32> {
        self.index(id).and_then(|i| self.depth[i])
    }

    pub fn receipts(&self, id: &NodeId) -> u32 {
        self.index(id).map_or(0, |i| self.receipts[i])
    }

    pub fn child_count(&self, id: &NodeId) -> u32 {
        self.index(id).map_or(0, |i| self.children[i])
    }

    /// Root plus every node that received the message.
    pub fn reached(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.members.len())
            .filter(|&i| self.depth[i].is_some())
            .map(|i| self.members[i])
    }

    /// Nodes that forwarded to at least one child.
    pub fn internal_nodes(&self) -> BTreeSet<NodeId> {
        (0..self.members.len())
            .filter(|&i| self.children[i] > 0)
            .map(|i| self.members[i])
            .collect()
    }

    /// Reached non-root nodes without children.
    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.members.len())
            .filter(|&i| i != self.root && self.depth[i].is_some() && self.children[i] == 0)
            .map(|i| self.members[i])
            .collect()
    }

    pub fn is_leaf(&self, id: &NodeId) -> bool {
        self.index(id)
            .is_some_and(|i| i != self.root && self.depth[i].is_some() && self.children[i] == 0)
    }

    pub fn max_depth(&self) -> u32 {
        self.depth.iter().flatten().copied().max().unwrap_or(0)
    }

    /// `(min, max)` depth over leaves, `None` when there are none.
    pub fn leaf_depth_range(&self) -> Option<(u32, u32)> {
        let depths = (0..self.members.len())
            .filter(|&i| i != self.root && self.children[i] == 0)
            .filter_map(|i| self.depth[i]);
        depths.fold(None, |acc, d| match acc {
            None => Some((d, d)),
            Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
        })
    }

    /// Number of nodes at each depth, index = depth.
    pub fn depth_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.max_depth() as usize + 1];
        for d in self.depth.iter().flatten() {
            hist[*d as usize] += 1;
        }
        hist
    }

    /// Intermediate nodes between `id` and the root, nearest first.
    pub fn path_to_root(&self, id: &NodeId) -> Vec<NodeId> {
        let mut path = Vec::new();
        let Some(mut at) = self.index(id) else {
            return path;
        };
        while let Some(p) = self.parent[at] {
            if p == self.root {
                break;
            }
            path.push(self.members[p]);
            at = p;
        }
        path
    }

    /// Every member must be delivered exactly once, except the root and
    /// `excluded`, which must not be delivered at all.
    pub fn delivery_faults(&self, excluded: &[NodeId]) -> Vec<CoverageFault> {
        self.members
            .iter()
            .enumerate()
            .filter_map(|(i, id)| {
                let expected = u32::from(i != self.root && !excluded.contains(id));
                (self.receipts[i] != expected).then_some(CoverageFault {
                    node: *id,
                    expected,
                    receipts: self.receipts[i],
                })
            })
            .collect()
    }
}
