//! Reliability under churn: a node joins, broadcasts run, then it leaves.
//! Fixed scope counts only nodes present for the whole run.
//!
//! cargo run --release -p snow-sim --example churn_reliability -- 200 10

use snow_sim::config::{Algorithm, Churn, ScenarioConfig};
use snow_sim::metrics::Scope;
use snow_sim::scenario::run;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let n = args.first().copied().unwrap_or(200) as usize;
    let seeds = args.get(1).copied().unwrap_or(10);

    println!("{:<13} {:>10} {:>10} {:>9}", "algorithm", "rel_fixed", "rel_all", "min_fixed");
    for alg in [Algorithm::Snow, Algorithm::SnowColored, Algorithm::Gossip, Algorithm::Plumtree] {
        let mut cfg = ScenarioConfig::new(alg, n, 4);
        cfg.messages = 10;
        cfg.churn = Some(Churn { cycles: 1 });
        let (mut fixed, mut all, mut worst, mut m) = (0.0, 0.0, 1.0f64, 0.0);
        for seed in 1..=seeds {
            let f = run(&cfg, alg, n, 4, seed, Scope::Fixed).expect("valid config");
            let a = run(&cfg, alg, n, 4, seed, Scope::All).expect("valid config");
            for (x, y) in f.records.iter().zip(&a.records) {
                fixed += x.reliability;
                all += y.reliability;
                worst = worst.min(x.reliability);
                m += 1.0;
            }
        }
        println!("{:<13} {:>10.4} {:>10.4} {:>9.4}", alg.name(), fixed / m, all / m, worst);
    }
}
