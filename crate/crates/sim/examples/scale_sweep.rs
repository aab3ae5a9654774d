//! Hop count, RMR and delivery time as the cluster grows, next to the
//! tree height bound, using the same aggregation as `snow sweep`.
//!
//! cargo run --release -p snow-sim --example scale_sweep -- 4

use snow_sim::config::{Algorithm, OneOrMany, ScenarioConfig, Sweep};
use snow_sim::metrics::Scope;
use snow_sim::output::{aggregate, render_table};
use snow_sim::scenario::run_all;

fn main() {
    let k: usize = std::env::args().nth(1).map_or(4, |a| a.parse().expect("numeric fan-out"));
    let mut cfg = ScenarioConfig::new(Algorithm::Snow, 100, k);
    cfg.algorithm = OneOrMany::Many(vec![Algorithm::Snow, Algorithm::SnowColored, Algorithm::Gossip]);
    cfg.messages = 20;
    cfg.sweep = Some(Sweep {
        n: Some(vec![50, 100, 200, 400, 800]),
        k: None,
    });
    cfg.validate().expect("valid sweep");
    let threads = std::thread::available_parallelism().map_or(1, |t| t.get());
    let results = run_all(&cfg, Scope::All, threads).expect("valid config");
    print!("{}", render_table(&aggregate(&results), true));
}
