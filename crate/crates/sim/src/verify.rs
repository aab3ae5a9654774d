//! Exhaustive tree checks over grids of `(n, k)`.
//!
//! Every cell builds the tree from every root and checks coverage, leaf
//! balance, the height bound and the fan-out cap; colored cells also check
//! the two colored trees. The child-picking rules are pluggable so the
//! checker itself can be tested against deliberately broken rules.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use snow_core::coloring::SameColorRule;
use snow_core::routing::{build_tree_with, section_midpoint, tree_height_bound, ChildRule, Frame, Midpoint};
use snow_core::{DisseminationTree, Fanout, MembershipView, NodeId, Region, Span};

use crate::scenario::initial_id;

/// Which child each section gets, for plain and for colored trees.
pub trait Pickers: Sync {
    fn name(&self) -> &'static str;
    fn plain(&self, frame: &Frame<'_>) -> Box<dyn ChildRule>;
    fn colored(&self, frame: &Frame<'_>, color_root: &NodeId) -> Box<dyn ChildRule>;
}

/// The rules the protocol uses.
#[derive(Clone, Copy, Debug, Default)]
pub struct Standard;

impl Pickers for Standard {
    fn name(&self) -> &'static str {
        "standard"
    }

    fn plain(&self, _frame: &Frame<'_>) -> Box<dyn ChildRule> {
        Box::new(Midpoint)
    }

    fn colored(&self, frame: &Frame<'_>, color_root: &NodeId) -> Box<dyn ChildRule> {
        Box::new(SameColorRule::new(frame, color_root).expect("color root is a member"))
    }
}

/// Broken on purpose: ignores colors when picking.
#[derive(Clone, Copy, Debug, Default)]
pub struct ColorBlind;

impl Pickers for ColorBlind {
    fn name(&self) -> &'static str {
        "color-blind"
    }

    fn plain(&self, _frame: &Frame<'_>) -> Box<dyn ChildRule> {
        Box::new(Midpoint)
    }

    fn colored(&self, _frame: &Frame<'_>, _color_root: &NodeId) -> Box<dyn ChildRule> {
        Box::new(Midpoint)
    }
}

/// Broken on purpose: picks the node just past the section.
#[derive(Clone, Copy, Debug, Default)]
pub struct OutOfSection;

struct PastEnd {
    n: usize,
}

impl ChildRule for PastEnd {
    fn pick(&self, section: Span) -> usize {
        if section.len() < 2 {
            return section_midpoint(section);
        }
        if section.hi + 1 < self.n {
            section.hi + 1
        } else {
            section.lo - 1
        }
    }
}

impl Pickers for OutOfSection {
    fn name(&self) -> &'static str {
        "out-of-section"
    }

    fn plain(&self, frame: &Frame<'_>) -> Box<dyn ChildRule> {
        Box::new(PastEnd { n: frame.len() })
    }

    fn colored(&self, frame: &Frame<'_>, _color_root: &NodeId) -> Box<dyn ChildRule> {
        Box::new(PastEnd { n: frame.len() })
    }
}

/// Grid to check. Ranges are inclusive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_n")]
    pub n: [usize; 2],
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    #[serde(default = "default_colored_n")]
    pub colored_n: [usize; 2],
    #[serde(default = "default_colored_k")]
    pub colored_k: Vec<usize>,
}

fn default_n() -> [usize; 2] {
    [1, 300]
}
fn default_k() -> Vec<usize> {
    vec![2, 4, 6, 8]
}
fn default_colored_n() -> [usize; 2] {
    [3, 200]
}
fn default_colored_k() -> Vec<usize> {
    vec![2, 4]
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            n: default_n(),
            k: default_k(),
            colored_n: default_colored_n(),
            colored_k: default_colored_k(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Plain,
    Colored,
}

/// First property a tree broke.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub kind: CellKind,
    pub rule: &'static str,
    pub n: usize,
    pub k: usize,
    /// Ring offset of the root (plain) or origin (colored) from the first node.
    pub root: usize,
    pub detail: String,
    /// Parent of every node, by ring position, for small trees.
    pub repro: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CellResult {
    pub kind: CellKind,
    pub n: usize,
    pub k: usize,
    pub roots: usize,
    pub failure: Option<Counterexample>,
}

fn ring(n: usize) -> MembershipView {
    MembershipView::from_members((0..n).map(initial_id))
}

fn pos(view: &MembershipView, id: &NodeId) -> usize {
    view.position(id).expect("member")
}

fn dump(view: &MembershipView, tree: &DisseminationTree) -> String {
    if view.len() > 64 {
        return format!("{} nodes, too large to dump", view.len());
    }
    let mut s = String::new();
    for (i, m) in view.members().iter().enumerate() {
        let parent = tree.parent(m).map_or("-".to_string(), |p| pos(view, &p).to_string());
        let _ = write!(s, "{i}<-{parent} ");
    }
    s.trim_end().to_string()
}

fn plain_tree(view: &MembershipView, root: &NodeId, fanout: Fanout, pickers: &dyn Pickers) -> DisseminationTree {
    if view.len() == 1 {
        return snow_core::routing::build_full_tree(view, root, fanout).expect("single node");
    }
    let frame = Frame::new(view, root).expect("member");
    let rule = pickers.plain(&frame);
    let region = Region::whole_ring(view, root).expect("member");
    build_tree_with(view, root, root, &region, fanout, rule.as_ref()).expect("valid region")
}

/// Coverage, balance, height and fan-out for every root of one cell.
pub fn check_plain(n: usize, k: usize, pickers: &dyn Pickers) -> CellResult {
    let view = ring(n);
    let fanout = Fanout::new(k).expect("even k >= 2");
    let bound = tree_height_bound(n, k);
    for r in 0..n {
        let root = initial_id(r);
        let tree = plain_tree(&view, &root, fanout, pickers);
        let fail = |rule, detail: String| CellResult {
            kind: CellKind::Plain,
            n,
            k,
            roots: r + 1,
            failure: Some(Counterexample {
                kind: CellKind::Plain,
                rule,
                n,
                k,
                root: r,
                detail,
                repro: dump(&view, &tree),
            }),
        };
        let faults = tree.delivery_faults(&[]);
        if let Some(f) = faults.first() {
            return fail(
                "coverage",
                format!("node {} received {} copies, expected {}", pos(&view, &f.node), f.receipts, f.expected),
            );
        }
        if let Some((lo, hi)) = tree.leaf_depth_range() {
            if hi - lo > 1 {
                return fail("balance", format!("leaf depths span {lo}..{hi}"));
            }
        }
        if tree.max_depth() as usize + 1 > bound {
            return fail("height", format!("depth {} exceeds bound {bound}", tree.max_depth()));
        }
        if let Some(m) = view.members().iter().find(|m| tree.child_count(m) as usize > k) {
            return fail("fanout", format!("node {} has {} children", pos(&view, m), tree.child_count(m)));
        }
    }
    CellResult {
        kind: CellKind::Plain,
        n,
        k,
        roots: n,
        failure: None,
    }
}

/// Both colored trees from every origin of one cell.
pub fn check_colored(n: usize, k: usize, pickers: &dyn Pickers) -> CellResult {
    let view = ring(n);
    let fanout = Fanout::new(k).expect("even k >= 2");
    for o in 0..n {
        let origin = initial_id(o);
        let frame = Frame::new(&view, &origin).expect("member");
        let second = frame.node_at(n - 1);
        let primary = build_tree_with(
            &view,
            &origin,
            &origin,
            &Region::whole_ring(&view, &origin).expect("member"),
            fanout,
            pickers.colored(&frame, &origin).as_ref(),
        )
        .expect("valid region");
        let region = Region {
            left: frame.node_at(1),
            right: frame.node_at(n - 2),
        };
        let secondary = build_tree_with(&view, &origin, &second, &region, fanout, pickers.colored(&frame, &second).as_ref())
            .expect("valid region");

        let fail = |rule, detail: String, tree: &DisseminationTree| CellResult {
            kind: CellKind::Colored,
            n,
            k,
            roots: o + 1,
            failure: Some(Counterexample {
                kind: CellKind::Colored,
                rule,
                n,
                k,
                root: o,
                detail,
                repro: dump(&view, tree),
            }),
        };
        if let Some(f) = primary.delivery_faults(&[]).first() {
            return fail("primary-coverage", format!("node {} received {} copies", pos(&view, &f.node), f.receipts), &primary);
        }
        if let Some(f) = secondary.delivery_faults(&[origin]).first() {
            return fail(
                "secondary-coverage",
                format!("node {} received {} copies", pos(&view, &f.node), f.receipts),
                &secondary,
            );
        }
        // Odd rings have one parity seam at the secondary root.
        let seam = |m: &NodeId| n % 2 == 1 && *m == second;
        for step in (1..n).step_by(2) {
            let m = frame.node_at(step);
            if !primary.is_leaf(&m) && !seam(&m) {
                return fail("other-color-leaf", format!("node {} forwards in the primary tree", pos(&view, &m)), &primary);
            }
        }
        let si = secondary.internal_nodes();
        if let Some(m) = primary.internal_nodes().intersection(&si).find(|m| !seam(m)) {
            return fail("disjoint-internals", format!("node {} forwards in both trees", pos(&view, m)), &primary);
        }
    }
    CellResult {
        kind: CellKind::Colored,
        n,
        k,
        roots: n,
        failure: None,
    }
}

/// Every cell of `spec`, plain cells first, each list in `(n, k)` order.
/// Stops at the first counterexample when `stop_early` is set.
pub fn verify(spec: &VerifySpec, pickers: &dyn Pickers, stop_early: bool) -> Vec<CellResult> {
    let mut out = Vec::new();
    for n in spec.n[0].max(1)..=spec.n[1] {
        for &k in &spec.k {
            let r = check_plain(n, k, pickers);
            let failed = r.failure.is_some();
            out.push(r);
            if failed && stop_early {
                return out;
            }
        }
    }
    for n in spec.colored_n[0].max(3)..=spec.colored_n[1] {
        for &k in &spec.colored_k {
            let r = check_colored(n, k, pickers);
            let failed = r.failure.is_some();
            out.push(r);
            if failed && stop_early {
                return out;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_is_vacuous() {
        let r = check_plain(1, 4, &Standard);
        assert!(r.failure.is_none());
        assert_eq!(r.roots, 1);
    }

    #[test]
    fn small_grid_passes() {
        let spec = VerifySpec {
            n: [1, 40],
            k: vec![2, 4],
            colored_n: [3, 30],
            colored_k: vec![2, 4],
        };
        assert!(verify(&spec, &Standard, true).iter().all(|c| c.failure.is_none()));
    }

    #[test]
    fn color_blind_rule_is_caught() {
        let spec = VerifySpec {
            n: [1, 0],
            k: vec![],
            colored_n: [3, 40],
            colored_k: vec![2, 4],
        };
        let res = verify(&spec, &ColorBlind, true);
        let cx = res.last().and_then(|c| c.failure.clone()).expect("counterexample");
        assert_eq!(cx.kind, CellKind::Colored);
        assert!(cx.rule == "other-color-leaf" || cx.rule == "disjoint-internals", "{cx:?}");
    }

    #[test]
    fn out_of_section_rule_is_caught() {
        let spec = VerifySpec {
            n: [1, 40],
            k: vec![2],
            colored_n: [3, 2],
            colored_k: vec![],
        };
        let res = verify(&spec, &OutOfSection, true);
        let cx = res.last().and_then(|c| c.failure.clone()).expect("counterexample");
        assert_eq!(cx.rule, "coverage");
        assert!(!cx.repro.is_empty());
    }
}
