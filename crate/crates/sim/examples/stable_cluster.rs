//! Every algorithm on the same stable cluster: reliability, RMR, LDT and
//! hop count per broadcast, averaged.
//!
//! cargo run --release -p snow-sim --example stable_cluster -- 500 4 100

use snow_sim::config::{Algorithm, ScenarioConfig};
use snow_sim::metrics::Scope;
use snow_sim::scenario::run;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let n = args.first().copied().unwrap_or(200);
    let k = args.get(1).copied().unwrap_or(4);
    let messages = args.get(2).copied().unwrap_or(20);

    println!("{:<13} {:>8} {:>8} {:>9} {:>6} {:>8}", "algorithm", "rel", "rmr", "ldt_ms", "hops", "sends");
    for alg in Algorithm::ALL {
        let mut cfg = ScenarioConfig::new(alg, n, k);
        cfg.messages = messages;
        let r = run(&cfg, alg, n, k, 7, Scope::All).expect("valid config");
        let m = r.records.len() as f64;
        let rel = r.records.iter().map(|x| x.reliability).sum::<f64>() / m;
        let rmr = r.records.iter().filter_map(|x| x.rmr).sum::<f64>() / m;
        let ldt: Vec<u64> = r.records.iter().filter_map(|x| x.ldt_ms).collect();
        let ldt = if ldt.is_empty() { f64::NAN } else { ldt.iter().sum::<u64>() as f64 / ldt.len() as f64 };
        let hops = r.records.iter().filter_map(|x| x.max_hops).max().unwrap_or(0);
        let sends = r.records.iter().map(|x| x.payload_sends).sum::<u64>() as f64 / m;
        println!("{:<13} {:>8.4} {:>8.3} {:>9.0} {:>6} {:>8.0}", alg.name(), rel, rmr, ldt, hops, sends);
        for v in &r.violations {
            println!("  violation {}: {}", v.rule, v.detail);
        }
    }
}
