//! Exhaustive checks of the two colored trees.

use snow_core::coloring::{build_colored_trees, node_color, secondary_root, Color};
use snow_core::routing::build_full_tree;
use snow_core::{Fanout, MembershipView, NodeId};

fn id(i: usize) -> NodeId {
    NodeId::v4(10, 0, (i >> 8) as u8, i as u8, 7000)
}

fn ring(n: usize) -> MembershipView {
    MembershipView::from_members((0..n).map(id))
}

#[test]
fn colored_trees_hold_their_guarantees() {
    for k in [2, 4] {
        let fanout = Fanout::new(k).unwrap();
        for n in 3..=200 {
            let view = ring(n);
            for o in 0..n {
                let origin = id(o);
                let second = secondary_root(&view, &origin).unwrap();
                let trees = build_colored_trees(&view, &origin, fanout).unwrap();
                let ctx = format!("n={n} k={k} origin={o}");

                // Every non-origin node gets one copy per tree; the secondary
                // root's copy comes straight from the origin.
                assert!(trees.primary.delivery_faults(&[]).is_empty(), "{ctx}");
                assert!(trees.secondary.delivery_faults(&[origin]).is_empty(), "{ctx}");
                assert_eq!(trees.secondary.root(), second);
                assert_eq!(trees.secondary.receipts(&origin), 0, "{ctx}");

                // With odd n the secondary root sits on the parity seam and
                // may also forward in the primary tree; nothing else is shared.
                let seam: &[NodeId] = if n % 2 == 1 { &[second] } else { &[] };
                let pi = trees.primary.internal_nodes();
                let si = trees.secondary.internal_nodes();
                let shared: Vec<_> = pi.intersection(&si).filter(|x| !seam.contains(x)).collect();
                assert!(shared.is_empty(), "{ctx}: shared internal nodes {shared:?}");
                for m in view.members().iter().filter(|m| **m != origin) {
                    let a = trees.primary.path_to_root(m);
                    let b = trees.secondary.path_to_root(m);
                    let met = a.iter().any(|x| b.contains(x) || (*x == second && !seam.contains(x)));
                    assert!(!met, "{ctx}: paths of {m} meet");
                }

                for m in view.members() {
                    if node_color(&view, &origin, m).unwrap() == Color::Other {
                        let seam = n % 2 == 1 && *m == second;
                        assert!(trees.primary.is_leaf(m) || seam, "{ctx}: {m} is internal");
                    }
                }

                let plain = build_full_tree(&view, &origin, fanout).unwrap();
                assert!(trees.primary.max_depth() <= plain.max_depth() + 1, "{ctx}: height penalty");
            }
        }
    }
}

#[test]
fn colored_rmr_is_exactly_one() {
    for n in [3, 10, 64, 199] {
        let view = ring(n);
        let trees = build_colored_trees(&view, &id(0), Fanout::new(4).unwrap()).unwrap();
        let received: u32 = view
            .members()
            .iter()
            .map(|m| trees.primary.receipts(m) + trees.secondary.receipts(m))
            .sum();
        // secondary root's copy is the secondary tree root itself
        let copies = received + 1;
        assert_eq!(copies as usize, 2 * (n - 1));
        let rmr = copies as f64 / (n - 1) as f64 - 1.0;
        assert_eq!(rmr, 1.0);
    }
}
