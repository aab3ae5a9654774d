//! A tree node crashes while forwarding the first broadcast. Without
//! acknowledgments its subtree misses the message; with them the root times
//! out and a second wave reaches everyone.
//!
//! cargo run --release -p snow-sim --example crash_recovery -- 64 10

use snow_sim::config::{Algorithm, CrashPlan, ScenarioConfig};
use snow_sim::metrics::Scope;
use snow_sim::scenario::run;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let n = args.first().copied().unwrap_or(64) as usize;
    let trials = args.get(1).copied().unwrap_or(10);

    for reliable in [false, true] {
        let mut cfg = ScenarioConfig::new(Algorithm::Snow, n, 4);
        cfg.reliable = reliable;
        cfg.crash = Some(CrashPlan { msg: 0, depth: 1 });
        let timeout = cfg.node_config(4).root_timeout_for(n);
        println!("reliable={reliable} (root timeout {timeout} ms)");
        for seed in 1..=trials {
            let r = run(&cfg, Algorithm::Snow, n, 4, seed, Scope::Fixed).expect("valid config");
            let rec = &r.records[0];
            let log = &r.logs[0];
            let conv = log.converged_at.map_or("-".to_string(), |t| format!("{} ms", t - log.t0));
            println!(
                "  seed {seed:>2}: crashed {:<16} reliability {:.4} attempts {} converged after {conv}",
                r.crashed.first().map_or("-".to_string(), |c| c.to_string()),
                rec.reliability,
                log.attempts,
            );
        }
    }
}
