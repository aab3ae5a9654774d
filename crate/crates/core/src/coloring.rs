//! Node coloring for stable clusters.
//!
//! Nodes are split by the parity of their ring offset from a color root.
//! The primary tree prefers SAME-colored children, which pushes every
//! OTHER-colored node into a leaf position. A secondary tree rooted at the
//! origin's left neighbour uses the opposite parity, so the internal nodes of
//! one tree are leaves of the other and every node gets two disjoint paths.

use crate::error::{Error, Result};
use crate::id::NodeId;
use crate::membership::{MembershipView, RingOffset};
use crate::message::{BroadcastTask, TreeTag};
use crate::routing::{
    build_tree_with, compute_children_with, section_midpoint, ChildAssignment, ChildRule, Fanout, Frame, Region,
    Span,
};
use crate::tree::DisseminationTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Color {
    /// Same parity as the color root.
    Same,
    Other,
}

pub fn node_color(view: &MembershipView, color_root: &NodeId, id: &NodeId) -> Result<Color> {
    let RingOffset(off) = view.ring_offset(color_root, id)?;
    Ok(if off % 2 == 0 { Color::Same } else { Color::Other })
}

/// Picks the SAME-colored node nearest the section midpoint, ties to the
/// right; falls back to the midpoint when the section has none.
#[derive(Clone, Copy, Debug)]
pub struct SameColorRule {
    n: usize,
    color_root: usize,
}

impl SameColorRule {
    pub fn new(frame: &Frame<'_>, color_root: &NodeId) -> Result<Self> {
        let color_root = frame.offset_of(color_root).ok_or(Error::UnknownNode(*color_root))?;
        Ok(SameColorRule {
            n: frame.len(),
            color_root,
        })
    }

    fn is_same(&self, offset: usize) -> bool {
        ((offset + self.n - self.color_root) % self.n).is_multiple_of(2)
    }
}

impl ChildRule for SameColorRule {
    fn pick(&self, section: Span) -> usize {
        let mid = section_midpoint(section);
        if self.is_same(mid) {
            return mid;
        }
        for d in 1..section.len() {
            if mid + d <= section.hi && self.is_same(mid + d) {
                return mid + d;
            }
            if mid >= section.lo + d && self.is_same(mid - d) {
                return mid - d;
            }
        }
        mid
    }
}

/// Colored counterpart of [`crate::routing::compute_children`].
pub fn compute_children_colored(
    view: &MembershipView,
    root: &NodeId,
    me: &NodeId,
    region: &Region,
    fanout: Fanout,
    color_root: &NodeId,
) -> Result<Vec<ChildAssignment>> {
    let frame = Frame::new(view, root)?;
    let rule = SameColorRule::new(&frame, color_root)?;
    compute_children_with(view, root, me, region, fanout, &rule)
}

/// The origin's left neighbour, root of the secondary tree.
pub fn secondary_root(view: &MembershipView, origin: &NodeId) -> Result<NodeId> {
    let n = view.len();
    if n < 3 {
        if !view.contains(origin) {
            return Err(Error::UnknownNode(*origin));
        }
        return Err(Error::ClusterTooSmall { n, min: 3 });
    }
    view.by_offset(origin, RingOffset(n - 1))
}

/// Derives the secondary-tree task from a primary task at the origin.
/// Returns the node to send it to and the task. The region covers everyone
/// except the origin and the secondary root itself.
pub fn spawn_secondary(view: &MembershipView, origin: &NodeId, task: &BroadcastTask) -> Result<(NodeId, BroadcastTask)> {
    let second = secondary_root(view, origin)?;
    let n = view.len();
    let region = Region {
        left: view.by_offset(origin, RingOffset(1))?,
        right: view.by_offset(origin, RingOffset(n - 2))?,
    };
    Ok((
        second,
        BroadcastTask {
            root: *origin,
            region,
            tree: TreeTag::Secondary,
            color_root: second,
            ..*task
        },
    ))
}

/// Both colored trees for a broadcast from `origin`. The secondary tree is
/// rooted at the secondary root (depth 0 there); the origin's send to it is
/// not part of either tree.
#[derive(Clone, Debug)]
pub struct ColoredTrees {
    pub primary: DisseminationTree,
    pub secondary: DisseminationTree,
}

pub fn build_colored_trees(view: &MembershipView, origin: &NodeId, fanout: Fanout) -> Result<ColoredTrees> {
    let second = secondary_root(view, origin)?;
    let frame = Frame::new(view, origin)?;
    let n = view.len();
    let primary = build_tree_with(
        view,
        origin,
        origin,
        &Region::whole_ring(view, origin)?,
        fanout,
        &SameColorRule::new(&frame, origin)?,
    )?;
    let secondary_region = Region {
        left: frame.node_at(1),
        right: frame.node_at(n - 2),
    };
    let secondary = build_tree_with(
        view,
        origin,
        &second,
        &secondary_region,
        fanout,
        &SameColorRule::new(&frame, &second)?,
    )?;
    Ok(ColoredTrees { primary, secondary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{Mode, MsgId};
    use crate::routing::Midpoint;

    fn id(i: u16) -> NodeId {
        NodeId::v4(10, 0, (i >> 8) as u8, i as u8, 7000)
    }

    fn ring(n: usize) -> MembershipView {
        MembershipView::from_members((0..n as u16).map(id))
    }

    #[test]
    fn colors_alternate() {
        let v = ring(10);
        assert_eq!(node_color(&v, &id(0), &id(0)).unwrap(), Color::Same);
        assert_eq!(node_color(&v, &id(0), &id(1)).unwrap(), Color::Other);
        assert_eq!(node_color(&v, &id(0), &id(2)).unwrap(), Color::Same);
        assert!(node_color(&v, &id(0), &id(77)).is_err());
    }

    #[test]
    fn odd_ring_seam_shares_color() {
        let v = ring(7);
        assert_eq!(node_color(&v, &id(0), &id(6)).unwrap(), Color::Same);
        assert_eq!(node_color(&v, &id(0), &id(0)).unwrap(), Color::Same);
    }

    #[test]
    fn picks_nearest_same_color_ties_right() {
        let v = ring(10);
        let frame = Frame::new(&v, &id(0)).unwrap();
        let rule = SameColorRule::new(&frame, &id(0)).unwrap();
        assert_eq!(rule.pick(Span::new(1, 4)), 4);
        // a lone OTHER node is still chosen
        assert_eq!(rule.pick(Span::single(3)), 3);
        // midpoint already SAME
        assert_eq!(rule.pick(Span::new(5, 9)), 8);
        assert_eq!(rule.pick(Span::new(1, 3)), 2);
    }

    #[test]
    fn exhaustive_scan_agrees_with_rule() {
        // independent oracle: scan the whole section for the best candidate
        let v = ring(40);
        let frame = Frame::new(&v, &id(0)).unwrap();
        let rule = SameColorRule::new(&frame, &id(0)).unwrap();
        for lo in 1..39 {
            for hi in lo..40 {
                let s = Span::new(lo, hi);
                let mid = section_midpoint(s);
                let oracle = (lo..=hi)
                    .filter(|x| x % 2 == 0)
                    .min_by_key(|&x| (x.abs_diff(mid), std::cmp::Reverse(x)))
                    .unwrap_or(mid);
                assert_eq!(rule.pick(s), oracle, "[{lo}..{hi}]");
            }
        }
    }

    #[test]
    fn same_colored_midpoints_match_uncolored() {
        // n=6, k=2: the root's sections are [1..2] and [3..5], midpoints 2 and 4.
        let v = ring(6);
        let k2 = Fanout::new(2).unwrap();
        let region = Region::whole_ring(&v, &id(0)).unwrap();
        let plain = compute_children_with(&v, &id(0), &id(0), &region, k2, &Midpoint).unwrap();
        let colored = compute_children_colored(&v, &id(0), &id(0), &region, k2, &id(0)).unwrap();
        assert_eq!(plain, colored);
    }

    #[test]
    fn secondary_task() {
        let v = ring(10);
        let task = BroadcastTask {
            msg: MsgId { origin: id(0), seq: 1 },
            root: id(0),
            region: Region::whole_ring(&v, &id(0)).unwrap(),
            mode: Mode::Colored,
            tree: TreeTag::Primary,
            color_root: id(0),
            attempt: 0,
            hops: 0,
        };
        let (to, sec) = spawn_secondary(&v, &id(0), &task).unwrap();
        assert_eq!(to, id(9));
        assert_eq!(sec.region, Region { left: id(1), right: id(8) });
        assert_eq!(sec.color_root, id(9));
        assert_eq!(sec.tree, TreeTag::Secondary);

        assert_eq!(
            spawn_secondary(&ring(2), &id(0), &task),
            Err(Error::ClusterTooSmall { n: 2, min: 3 })
        );
    }

    #[test]
    fn colored_ten_node_trees() {
        let v = ring(10);
        let trees = build_colored_trees(&v, &id(0), Fanout::new(2).unwrap()).unwrap();
        assert!(trees.primary.delivery_faults(&[]).is_empty());
        assert!(trees.secondary.delivery_faults(&[id(0)]).is_empty());
        let a = trees.primary.internal_nodes();
        let b = trees.secondary.internal_nodes();
        assert!(a.is_disjoint(&b), "{a:?} {b:?}");
        for odd in (1..10).step_by(2) {
            assert!(trees.primary.is_leaf(&id(odd)), "N{odd}");
        }
    }
}
