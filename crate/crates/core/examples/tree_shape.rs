//! The tree a broadcast follows on an n-node ring, built from the
//! membership view alone.
//!
//! cargo run -p snow-core --example tree_shape -- 40 4

use snow_core::routing::{build_full_tree, tree_height_bound};
use snow_core::{Fanout, MembershipView, NodeId};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let n = args.first().copied().unwrap_or(40);
    let k = args.get(1).copied().unwrap_or(4);

    let view = MembershipView::from_members((0..n).map(|i| NodeId::v4(10, 0, (i >> 8) as u8, (i & 255) as u8, 7000)));
    let root = view.get(n / 3).expect("non-empty view");
    let tree = build_full_tree(&view, &root, Fanout::new(k).expect("even k >= 2")).expect("root in view");

    println!("n={n} k={k} root={root}");
    println!("max depth {} (bound {})", tree.max_depth(), tree_height_bound(n, k) - 1);
    if let Some((lo, hi)) = tree.leaf_depth_range() {
        println!("leaves at depth {lo}..={hi}");
    }
    for (d, count) in tree.depth_histogram().iter().enumerate() {
        println!("  depth {d}: {count} node(s)");
    }
    println!("internal nodes: {}", tree.internal_nodes().len());
    let faults = tree.delivery_faults(&[]);
    println!("coverage faults: {}", faults.len());

    let far = tree.leaves().into_iter().max_by_key(|id| tree.depth(id)).expect("a leaf");
    let mut path = vec![far];
    path.extend(tree.path_to_root(&far));
    path.push(root);
    let path: Vec<String> = path.iter().map(|id| id.to_string()).collect();
    println!("deepest leaf to root: {}", path.join(" -> "));
}
