//! The two internally disjoint trees of a colored broadcast: every node is
//! internal in at most one of them, so any single crash leaves the other
//! tree intact.
//!
//! cargo run -p snow-core --example colored_trees -- 30 4

use snow_core::coloring::{build_colored_trees, node_color, secondary_root};
use snow_core::{Fanout, MembershipView, NodeId};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let n = args.first().copied().unwrap_or(30);
    let k = args.get(1).copied().unwrap_or(4);

    let view = MembershipView::from_members((0..n).map(|i| NodeId::v4(10, 0, 0, i as u8, 7000)));
    let origin = view.get(0).expect("non-empty view");
    let second = secondary_root(&view, &origin).expect("n >= 3");
    let trees = build_colored_trees(&view, &origin, Fanout::new(k).expect("even k >= 2")).expect("n >= 3");

    println!("origin {origin}, secondary root {second}");
    let a = trees.primary.internal_nodes();
    let b = trees.secondary.internal_nodes();
    println!("primary:   depth {}, {} internal", trees.primary.max_depth(), a.len());
    println!("secondary: depth {}, {} internal", trees.secondary.max_depth(), b.len());
    println!("shared internal nodes: {}", a.intersection(&b).count());

    for id in view.members() {
        let color = node_color(&view, &origin, id).expect("member");
        let role = |t: &snow_core::DisseminationTree| if t.is_leaf(id) { "leaf" } else { "internal" };
        println!("  {:<16} {color:?} primary={} secondary={}", id.to_string(), role(&trees.primary), role(&trees.secondary));
    }
}
