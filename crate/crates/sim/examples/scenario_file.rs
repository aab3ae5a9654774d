//! Loads a scenario file, runs every replication on all cores and writes
//! the per-run CSVs, the aggregate and the JSON sidecar.
//!
//! cargo run --release -p snow-sim --example scenario_file -- crates/sim/scenarios/crash.json /tmp/snow-crash

use std::path::PathBuf;

use snow_sim::config::ScenarioConfig;
use snow_sim::output::{aggregate, render_table, write_all};
use snow_sim::scenario::run_all;

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/crash.json"), PathBuf::from);
    let cfg = ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let out = args
        .next()
        .map_or_else(|| std::env::temp_dir().join(format!("snow-{}", cfg.name())), PathBuf::from);

    let threads = std::thread::available_parallelism().map_or(1, |t| t.get());
    let results = run_all(&cfg, cfg.scope, threads).expect("valid config");
    let files = write_all(&out, cfg.name(), &results, true).expect("writable output directory");
    print!("{}", render_table(&aggregate(&results), false));
    println!("{} file(s) in {}", files.len(), out.display());
    for r in results.iter().filter(|r| !r.passed()) {
        println!("seed {} violated {:?}", r.seed, r.violations);
    }
}
