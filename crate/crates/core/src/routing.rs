//! Region splitting: how a node that holds a message decides who to forward it to.
//!
//! A node is responsible for an arc of the ring (its [`Region`]). It splits the
//! part of that arc on each side of itself into at most `k/2` balanced
//! sections, forwards to one node per section and hands that node the
//! section as its own region. Applied recursively from the root this yields a
//! k-ary balanced tree that nobody ever stores.
//!
//! All arithmetic happens on ring offsets relative to the message root (the
//! *frame*); regions travel on the wire as a pair of boundary [`NodeId`]s.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::id::NodeId;
use crate::membership::MembershipView;
use crate::tree::DisseminationTree;

/// Fan-out `k`; always a positive even number so it splits evenly between
/// the two sides of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fanout(usize);

impl Fanout {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || !k.is_multiple_of(2) {
            return Err(Error::InvalidFanout(k));
        }
        Ok(Fanout(k))
    }

    pub fn k(self) -> usize {
        self.0
    }

    /// Children per side.
    pub fn half(self) -> usize {
        self.0 / 2
    }
}

/// Inclusive range of ring offsets. Empty when `lo > hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Span {
    pub lo: usize,
    pub hi: usize,
}

impl Span {
    pub const EMPTY: Span = Span { lo: 1, hi: 0 };

    pub fn new(lo: usize, hi: usize) -> Self {
        if lo > hi {
            Span::EMPTY
        } else {
            Span { lo, hi }
        }
    }

    pub fn single(x: usize) -> Self {
        Span { lo: x, hi: x }
    }

    pub fn len(&self) -> usize {
        if self.lo > self.hi {
            0
        } else {
            self.hi - self.lo + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, x: usize) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }
}

/// Which end of an arc lies closest to the node splitting it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NearEnd {
    Low,
    High,
}

/// Splits `arc` into `k_half` contiguous sections whose sizes differ by at most
/// one, the larger sections nearest `near`. Arcs no longer than `k_half`
/// become singletons.
pub fn split_arc(arc: Span, k_half: usize, near: NearEnd) -> Result<Vec<Span>> {
    if arc.is_empty() {
        return Err(Error::EmptyArc);
    }
    if k_half == 0 {
        return Err(Error::InvalidFanout(0));
    }
    let m = arc.len();
    if m <= k_half {
        return Ok((arc.lo..=arc.hi).map(Span::single).collect());
    }
    let (base, extra) = (m / k_half, m % k_half);
    let size = |i: usize| base + usize::from(i < extra);
    let mut sections = Vec::with_capacity(k_half);
    match near {
        NearEnd::Low => {
            let mut lo = arc.lo;
            for i in 0..k_half {
                sections.push(Span::new(lo, lo + size(i) - 1));
                lo += size(i);
            }
        }
        NearEnd::High => {
            let mut hi = arc.hi;
            for i in 0..k_half {
                sections.push(Span::new(hi + 1 - size(i), hi));
                hi -= size(i);
            }
            sections.reverse();
        }
    }
    Ok(sections)
}

/// Middle of a section; of two middle candidates the right (higher) one.
pub fn section_midpoint(section: Span) -> usize {
    debug_assert!(!section.is_empty());
    (section.lo + section.hi).div_ceil(2)
}

/// The root's two arcs `(left, right)`: right covers offsets
/// `1..=(n-1)/2`, left the rest, so the left arc takes the extra node.
pub fn root_regions(view: &MembershipView, root: &NodeId) -> Result<(Span, Span)> {
    if !view.contains(root) {
        return Err(Error::UnknownNode(*root));
    }
    let n = view.len();
    if n < 2 {
        return Err(Error::SingletonCluster);
    }
    let (right, left) = halve(Span::new(1, n - 1));
    Ok((left, right))
}

/// Splits into `(lower, upper)` halves, the upper one taking the extra node.
fn halve(region: Span) -> (Span, Span) {
    let h = region.len() / 2;
    match h {
        0 => (Span::EMPTY, region),
        _ => (Span::new(region.lo, region.lo + h - 1), Span::new(region.lo + h, region.hi)),
    }
}

/// Upper bound on the number of levels of a k-ary dissemination tree over
/// `n` nodes: `ceil(log_k((k-1) n) + 1)`, computed in integers.
pub fn tree_height_bound(n: usize, k: usize) -> usize {
    assert!(n >= 1 && k >= 2, "tree_height_bound needs n >= 1, k >= 2");
    let target = (k as u128 - 1) * n as u128;
    let mut power: u128 = 1;
    let mut e = 0;
    while power < target {
        power *= k as u128;
        e += 1;
    }
    e + 1
}

/// Strategy for choosing the child inside a section.
pub trait ChildRule {
    /// Returns a frame offset inside `section`.
    fn pick(&self, section: Span) -> usize;
}

/// The standard rule: the section midpoint.
#[derive(Clone, Copy, Debug, Default)]
pub struct Midpoint;

impl ChildRule for Midpoint {
    fn pick(&self, section: Span) -> usize {
        section_midpoint(section)
    }
}

impl<R: ChildRule + ?Sized> ChildRule for &R {
    fn pick(&self, section: Span) -> usize {
        (**self).pick(section)
    }
}

fn ring_distance(n: usize, a: usize, b: usize) -> usize {
    let d = (a + n - b) % n;
    d.min(n - d)
}

/// Offset-level planning for the node at frame offset `me` holding `region`
/// on a ring of `n` nodes. Returns `(child, child_region)` pairs; a direct
/// leaf gets the single-node region containing just itself.
///
/// When `me` lies inside its region the two sides of `me` are split
/// independently. When it does not (the root, or the root of a secondary
/// tree) the region is halved first, the upper half taking the extra node.
pub fn plan_offsets<R: ChildRule + ?Sized>(
    n: usize,
    me: usize,
    region: Span,
    k_half: usize,
    rule: &R,
) -> Vec<(usize, Span)> {
    if region.is_empty() || k_half == 0 {
        return Vec::new();
    }
    let arcs = if region.contains(me) {
        let left = if me > region.lo {
            Span::new(region.lo, me - 1)
        } else {
            Span::EMPTY
        };
        [(left, NearEnd::High), (Span::new(me + 1, region.hi), NearEnd::Low)]
    } else {
        let (low, high) = halve(region);
        let near = |s: Span| {
            if s.is_empty() || ring_distance(n, s.lo, me) <= ring_distance(n, s.hi, me) {
                NearEnd::Low
            } else {
                NearEnd::High
            }
        };
        [(high, near(high)), (low, near(low))]
    };

    let mut out = Vec::with_capacity(2 * k_half);
    for (arc, near) in arcs {
        if arc.is_empty() {
            continue;
        }
        if arc.len() <= k_half {
            out.extend((arc.lo..=arc.hi).map(|x| (x, Span::single(x))));
            continue;
        }
        for section in split_arc(arc, k_half, near).expect("non-empty arc") {
            out.push((rule.pick(section), section));
        }
    }
    out
}

/// Inclusive arc of the ring a node is responsible for, named by its two
/// boundary nodes. `left == right == self` marks a leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    pub left: NodeId,
    pub right: NodeId,
}

impl Region {
    pub fn leaf(id: NodeId) -> Self {
        Region { left: id, right: id }
    }

    pub fn is_single(&self) -> bool {
        self.left == self.right
    }

    /// Everything but the root: the region a root implicitly starts from.
    pub fn whole_ring(view: &MembershipView, root: &NodeId) -> Result<Region> {
        let pos = view.position(root).ok_or(Error::UnknownNode(*root))?;
        let n = view.len();
        if n < 2 {
            return Err(Error::SingletonCluster);
        }
        Ok(Region {
            left: view.members()[(pos + 1) % n],
            right: view.members()[(pos + n - 1) % n],
        })
    }
}

/// A child to forward to, and the region it becomes responsible for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChildAssignment {
    pub child: NodeId,
    pub region: Region,
}

/// A membership view seen from a message root.
#[derive(Clone, Copy, Debug)]
pub struct Frame<'a> {
    view: &'a MembershipView,
    root_pos: usize,
}

impl<'a> Frame<'a> {
    pub fn new(view: &'a MembershipView, root: &NodeId) -> Result<Self> {
        let root_pos = view.position(root).ok_or(Error::UnknownNode(*root))?;
        Ok(Frame { view, root_pos })
    }

    pub fn len(&self) -> usize {
        self.view.len()
    }

    pub fn is_empty(&self) -> bool {
        self.view.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.view.members()[self.root_pos]
    }

    pub fn offset_of(&self, id: &NodeId) -> Option<usize> {
        let n = self.len();
        self.view.position(id).map(|i| (i + n - self.root_pos) % n)
    }

    pub fn index_of(&self, offset: usize) -> usize {
        (self.root_pos + offset) % self.len()
    }

    pub fn node_at(&self, offset: usize) -> NodeId {
        self.view.members()[self.index_of(offset)]
    }

    /// Resolves boundary ids to an offset span.
    pub fn resolve(&self, region: &Region) -> Result<Span> {
        let lo = self
            .offset_of(&region.left)
            .ok_or(Error::BoundaryNotFound(region.left))?;
        let hi = self
            .offset_of(&region.right)
            .ok_or(Error::BoundaryNotFound(region.right))?;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidRegion {
                root: self.root(),
                left: region.left,
                right: region.right,
            });
        }
        Ok(Span::new(lo, hi))
    }
}

/// Children of `me` for a message rooted at `root`, using the midpoint rule.
pub fn compute_children(
    view: &MembershipView,
    root: &NodeId,
    me: &NodeId,
    region: &Region,
    fanout: Fanout,
) -> Result<Vec<ChildAssignment>> {
    compute_children_with(view, root, me, region, fanout, &Midpoint)
}

/// [`compute_children`] with a custom [`ChildRule`].
pub fn compute_children_with<R: ChildRule + ?Sized>(
    view: &MembershipView,
    root: &NodeId,
    me: &NodeId,
    region: &Region,
    fanout: Fanout,
    rule: &R,
) -> Result<Vec<ChildAssignment>> {
    let frame = Frame::new(view, root)?;
    let me_off = frame.offset_of(me).ok_or(Error::UnknownNode(*me))?;
    let span = frame.resolve(region)?;
    Ok(plan_offsets(frame.len(), me_off, span, fanout.half(), rule)
        .into_iter()
        .map(|(child, sub)| ChildAssignment {
            child: frame.node_at(child),
            region: Region {
                left: frame.node_at(sub.lo),
                right: frame.node_at(sub.hi),
            },
        })
        .collect())
}

/// Materializes the whole tree a broadcast from `root` follows.
pub fn build_full_tree(view: &MembershipView, root: &NodeId, fanout: Fanout) -> Result<DisseminationTree> {
    if view.len() == 1 && view.contains(root) {
        return Ok(DisseminationTree::new(view.members().to_vec(), 0));
    }
    let region = Region::whole_ring(view, root)?;
    build_tree_with(view, root, root, &region, fanout, &Midpoint)
}

/// Grows a tree from `tree_root` holding `region`, with offsets measured from
/// `frame_root`. Each node is expanded only on its first receipt; repeated
/// receipts are recorded so callers can detect them.
pub fn build_tree_with<R: ChildRule + ?Sized>(
    view: &MembershipView,
    frame_root: &NodeId,
    tree_root: &NodeId,
    region: &Region,
    fanout: Fanout,
    rule: &R,
) -> Result<DisseminationTree> {
    let frame = Frame::new(view, frame_root)?;
    let n = frame.len();
    let start = frame.offset_of(tree_root).ok_or(Error::UnknownNode(*tree_root))?;
    let span = frame.resolve(region)?;
    let mut tree = DisseminationTree::new(view.members().to_vec(), frame.index_of(start));
    let mut queue = VecDeque::from([(start, span, 0u32)]);
    while let Some((me, span, depth)) = queue.pop_front() {
        for (child, sub) in plan_offsets(n, me, span, fanout.half(), rule) {
            let first = tree.attach(frame.index_of(child), frame.index_of(me), depth + 1);
            if first {
                queue.push_back((child, sub, depth + 1));
            }
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(i: u16) -> NodeId {
        NodeId::v4(10, 0, (i >> 8) as u8, i as u8, 7000)
    }

    fn ring(n: usize) -> MembershipView {
        MembershipView::from_members((0..n as u16).map(id))
    }

    #[test]
    fn fanout_must_be_even() {
        assert!(Fanout::new(0).is_err());
        assert!(Fanout::new(3).is_err());
        assert_eq!(Fanout::new(4).unwrap().half(), 2);
    }

    #[test]
    fn root_regions_examples() {
        let v = ring(10);
        assert_eq!(root_regions(&v, &id(0)).unwrap(), (Span::new(5, 9), Span::new(1, 4)));
        let v = ring(3);
        assert_eq!(root_regions(&v, &id(0)).unwrap(), (Span::new(2, 2), Span::new(1, 1)));
        let v = ring(2);
        let (left, right) = root_regions(&v, &id(0)).unwrap();
        assert_eq!(left, Span::new(1, 1));
        assert!(right.is_empty());
        assert_eq!(root_regions(&ring(1), &id(0)), Err(Error::SingletonCluster));
    }

    #[test]
    fn split_arc_examples() {
        assert_eq!(split_arc(Span::new(1, 4), 1, NearEnd::Low).unwrap(), vec![Span::new(1, 4)]);
        assert_eq!(
            split_arc(Span::new(1, 7), 2, NearEnd::Low).unwrap(),
            vec![Span::new(1, 4), Span::new(5, 7)]
        );
        assert_eq!(
            split_arc(Span::new(1, 7), 2, NearEnd::High).unwrap(),
            vec![Span::new(1, 3), Span::new(4, 7)]
        );
        assert_eq!(
            split_arc(Span::new(5, 6), 4, NearEnd::Low).unwrap(),
            vec![Span::single(5), Span::single(6)]
        );
        assert_eq!(split_arc(Span::EMPTY, 2, NearEnd::Low), Err(Error::EmptyArc));
    }

    #[test]
    fn split_arc_partitions() {
        for lo in 1..5 {
            for m in 1..60 {
                for kh in 1..6 {
                    for near in [NearEnd::Low, NearEnd::High] {
                        let arc = Span::new(lo, lo + m - 1);
                        let secs = split_arc(arc, kh, near).unwrap();
                        assert_eq!(secs.len(), kh.min(m));
                        assert_eq!(secs[0].lo, arc.lo);
                        assert_eq!(secs.last().unwrap().hi, arc.hi);
                        for w in secs.windows(2) {
                            assert_eq!(w[0].hi + 1, w[1].lo);
                        }
                        let sizes: Vec<usize> = secs.iter().map(Span::len).collect();
                        let (min, max) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
                        assert!(max - min <= 1);
                        // larger sections sit at the near end
                        let ordered: Vec<usize> = match near {
                            NearEnd::Low => sizes.clone(),
                            NearEnd::High => sizes.iter().rev().copied().collect(),
                        };
                        assert!(ordered.windows(2).all(|w| w[0] >= w[1]));
                    }
                }
            }
        }
    }

    #[test]
    fn midpoint_examples() {
        assert_eq!(section_midpoint(Span::new(1, 4)), 3);
        assert_eq!(section_midpoint(Span::new(5, 9)), 7);
        assert_eq!(section_midpoint(Span::new(8, 9)), 9);
    }

    #[test]
    fn height_bound_examples() {
        assert_eq!(tree_height_bound(500, 4), 7);
        assert_eq!(tree_height_bound(10, 2), 5);
        assert_eq!(tree_height_bound(1, 2), 1);
    }

    #[test]
    fn height_bound_matches_float_formula() {
        for k in [2usize, 4, 6, 8] {
            for n in 1..2000usize {
                let x = ((k - 1) * n) as f64;
                let exact_power = (0..32).any(|e| (k as f64).powi(e) == x);
                if exact_power {
                    continue;
                }
                let float = (x.ln() / (k as f64).ln() + 1.0).ceil() as usize;
                assert_eq!(tree_height_bound(n, k), float, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn ten_node_trace() {
        let v = ring(10);
        let k2 = Fanout::new(2).unwrap();
        let root = id(0);
        let region = Region::whole_ring(&v, &root).unwrap();
        assert_eq!(region, Region { left: id(1), right: id(9) });
        let kids = compute_children(&v, &root, &root, &region, k2).unwrap();
        let mut kids: Vec<_> = kids.into_iter().map(|c| (c.child, c.region)).collect();
        kids.sort_by_key(|c| c.0);
        assert_eq!(
            kids,
            vec![
                (id(3), Region { left: id(1), right: id(4) }),
                (id(7), Region { left: id(5), right: id(9) }),
            ]
        );

        let kids = compute_children(&v, &root, &id(3), &Region { left: id(1), right: id(4) }, k2).unwrap();
        assert_eq!(
            kids,
            vec![
                ChildAssignment { child: id(2), region: Region { left: id(1), right: id(2) } },
                ChildAssignment { child: id(4), region: Region::leaf(id(4)) },
            ]
        );

        assert!(compute_children(&v, &root, &id(4), &Region::leaf(id(4)), k2).unwrap().is_empty());
    }

    #[test]
    fn missing_boundary_is_reported() {
        let v = ring(10);
        let k2 = Fanout::new(2).unwrap();
        let ghost = id(500);
        let err = compute_children(&v, &id(0), &id(3), &Region { left: id(1), right: ghost }, k2);
        assert_eq!(err, Err(Error::BoundaryNotFound(ghost)));
    }

    #[test]
    fn ten_node_tree_depths() {
        let v = ring(10);
        let tree = build_full_tree(&v, &id(0), Fanout::new(2).unwrap()).unwrap();
        let expected = [(3, 1), (7, 1), (2, 2), (4, 2), (6, 2), (9, 2), (1, 3), (5, 3), (8, 3)];
        for (node, depth) in expected {
            assert_eq!(tree.depth(&id(node)), Some(depth), "N{node}");
        }
        assert_eq!(tree.depth(&id(0)), Some(0));
        assert_eq!(tree.max_depth(), 3);
        assert!(tree.max_depth() as usize + 1 <= tree_height_bound(10, 2));
    }

    #[test]
    fn tiny_trees() {
        let k2 = Fanout::new(2).unwrap();
        let two = build_full_tree(&ring(2), &id(0), k2).unwrap();
        assert_eq!(two.depth(&id(1)), Some(1));
        assert_eq!(two.parent(&id(1)), Some(id(0)));
        let one = build_full_tree(&ring(1), &id(0), k2).unwrap();
        assert_eq!(one.reached().count(), 1);
        assert_eq!(one.max_depth(), 0);
    }

    #[test]
    fn fanout_never_exceeds_k() {
        for k in [2, 4, 6, 8] {
            let f = Fanout::new(k).unwrap();
            for n in [2usize, 3, 9, 50, 301] {
                let v = ring(n);
                let tree = build_full_tree(&v, &id(0), f).unwrap();
                for m in v.members() {
                    assert!(tree.child_count(m) as usize <= k);
                }
            }
        }
    }
}
