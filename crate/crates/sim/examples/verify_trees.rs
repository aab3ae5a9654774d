//! Exhaustive tree checks over a small grid, then the same checks against
//! two deliberately broken child rules to show what a counterexample looks
//! like.
//!
//! cargo run --release -p snow-sim --example verify_trees -- 120

use snow_sim::verify::{verify, ColorBlind, OutOfSection, Pickers, Standard, VerifySpec};

fn main() {
    let max_n: usize = std::env::args().nth(1).map_or(120, |a| a.parse().expect("numeric n"));
    let spec = VerifySpec {
        n: [1, max_n],
        k: vec![2, 4, 6, 8],
        colored_n: [3, max_n],
        colored_k: vec![2, 4],
    };
    let controls: [&dyn Pickers; 3] = [&Standard, &ColorBlind, &OutOfSection];
    for pickers in controls {
        let cells = verify(&spec, pickers, true);
        let roots: usize = cells.iter().map(|c| c.roots).sum();
        match cells.iter().find_map(|c| c.failure.as_ref()) {
            None => println!("{:<15} {} cell(s), {roots} tree(s): all rules hold", pickers.name(), cells.len()),
            Some(cx) => println!(
                "{:<15} fails {} at n={} k={} root={}: {}",
                pickers.name(),
                cx.rule,
                cx.n,
                cx.k,
                cx.root,
                cx.detail
            ),
        }
    }
}
