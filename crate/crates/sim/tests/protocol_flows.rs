//! Join, leave and crash flows driven through the simulator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snow_core::protocol::{NodeConfig, SnowNode, Status};
use snow_core::{Fanout, MembershipView};
use snow_sim::config::{Action, Algorithm, CrashPlan, ScenarioConfig};
use snow_sim::engine::{BroadcastRequest, Engine, Life};
use snow_sim::latency::{LatencyModel, LatencyParams};
use snow_sim::metrics::Scope;
use snow_sim::scenario::{initial_id, joiner_id, run};
use snow_sim::snow_node::SnowSim;

fn cfg(alg: Algorithm, n: usize, k: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(alg, n, k);
    c.name = Some("flow".into());
    c
}

#[test]
fn joiner_ends_up_in_every_view() {
    let mut c = cfg(Algorithm::Snow, 20, 4);
    c.script = vec![Action::Join { at: 500 }];
    c.start_ms = 5000;
    c.messages = 3;
    let r = run(&c, Algorithm::Snow, 20, 4, 1, Scope::All).unwrap();
    assert!(r.passed(), "{:?}", r.violations);
    assert_eq!(r.live.len(), 21);
    assert!(r.live.contains(&joiner_id(0)));
    // Broadcasts after the join reach the newcomer.
    for log in &r.logs {
        assert!(log.receipts.contains_key(&joiner_id(0)) || log.msg.origin == joiner_id(0));
    }
}

#[test]
fn leaver_disconnects_only_after_everyone_dropped_it() {
    let n = 16;
    let k = Fanout::new(4).unwrap();
    let view = MembershipView::from_members((0..n).map(initial_id));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let latency = LatencyModel::new(LatencyParams::default(), n, &mut rng);
    let mut engine = Engine::new(latency, 3);
    for i in 0..n {
        let node = SnowNode::member(initial_id(i), view.clone(), NodeConfig::new(k), i as u64);
        engine.add_silent(SnowSim::new(node, false));
    }
    for i in 0..n {
        engine.start(i);
    }
    engine.run_until(1000);
    assert!(engine.leave(5));
    let leaver = initial_id(5);
    let mut t = 1000;
    while engine.life(5) == Life::Up {
        t += 10;
        assert!(t < 20_000, "leave never completed");
        engine.run_until(t);
    }
    for i in (0..n).filter(|&i| i != 5) {
        let v = engine.node(i).inner().view();
        assert!(!v.contains(&leaver), "node {i} still lists the leaver at disconnect");
    }
    assert_eq!(engine.node(5).inner().status(), Status::Dead);
    engine.run_until(t + 10_000);
    engine.drain();
    assert_eq!(engine.stats().unaccounted(0), 0);
}

#[test]
fn graceful_leave_keeps_views_consistent() {
    let mut c = cfg(Algorithm::Snow, 30, 4);
    c.script = vec![Action::Leave { at: 500, node: 7, joiner: false }];
    c.messages = 5;
    c.start_ms = 3000;
    let r = run(&c, Algorithm::Snow, 30, 4, 2, Scope::Fixed).unwrap();
    assert!(r.passed(), "{:?}", r.violations);
    assert_eq!(r.live.len(), 29);
    assert!(r.crashed.is_empty());
    assert!(r.records.iter().all(|x| x.reliability == 1.0));
}

#[test]
fn crash_mid_broadcast_fires_root_timeout() {
    let mut c = cfg(Algorithm::Snow, 40, 4);
    c.reliable = true;
    c.crash = Some(CrashPlan { msg: 0, depth: 1 });
    let r = run(&c, Algorithm::Snow, 40, 4, 9, Scope::All).unwrap();
    let log = &r.logs[0];
    let timeout = c.node_config(4).root_timeout_for(40);
    assert_eq!(r.crashed.len(), 1);
    assert_eq!(log.attempts, 2);
    assert!(log.converged_at.unwrap() - log.t0 >= timeout);
    assert!(r.passed(), "{:?}", r.violations);
}

#[test]
fn unreliable_broadcast_loses_the_crashed_subtree_once() {
    let mut c = cfg(Algorithm::Snow, 40, 4);
    c.crash = Some(CrashPlan { msg: 0, depth: 1 });
    c.messages = 2;
    c.message_interval_ms = 8000;
    let r = run(&c, Algorithm::Snow, 40, 4, 9, Scope::Fixed).unwrap();
    assert!(r.records[0].reliability < 1.0);
    // By the next message the detector has removed the crashed node.
    assert_eq!(r.records[1].reliability, 1.0);
    assert!(r.passed(), "{:?}", r.violations);
}

#[test]
fn colored_broadcasts_downgrade_after_a_join() {
    let mut c = cfg(Algorithm::SnowColored, 30, 4);
    c.script = vec![Action::Join { at: 900 }];
    c.messages = 2;
    c.start_ms = 6000;
    c.message_interval_ms = 10_000;
    let r = run(&c, Algorithm::SnowColored, 30, 4, 4, Scope::All).unwrap();
    // Everyone knows the joiner by 6 s, but the view changed too recently.
    assert_eq!(r.records[0].rmr, Some(0.0));
    assert_eq!(r.records[1].rmr, Some(1.0));
}

#[test]
fn flood_sends_exactly_once_per_member() {
    let r = run(&cfg(Algorithm::Flood, 50, 4), Algorithm::Flood, 50, 4, 1, Scope::All).unwrap();
    assert_eq!(r.records[0].payload_sends, 49);
    assert_eq!(r.records[0].max_hops, Some(1));
}

#[test]
fn plumtree_prunes_towards_a_tree() {
    let mut c = cfg(Algorithm::Plumtree, 200, 4);
    c.messages = 30;
    let r = run(&c, Algorithm::Plumtree, 200, 4, 5, Scope::All).unwrap();
    assert!(r.records.iter().all(|x| x.reliability == 1.0));
    let first = r.records[0].rmr.unwrap();
    let late = r.records[20..].iter().map(|x| x.rmr.unwrap()).sum::<f64>() / 10.0;
    assert!(late < first, "rmr {first} -> {late}");
}

#[test]
fn engine_broadcast_to_crashed_origin_is_refused() {
    let n = 5;
    let view = MembershipView::from_members((0..n).map(initial_id));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut engine = Engine::new(LatencyModel::new(LatencyParams::default(), n, &mut rng), 1);
    for i in 0..n {
        let node = SnowNode::member(initial_id(i), view.clone(), NodeConfig::new(Fanout::new(2).unwrap()), 0);
        engine.add_silent(SnowSim::new(node, false));
    }
    engine.crash(2);
    let req = BroadcastRequest {
        size: 10,
        reliable: false,
        colored: false,
    };
    assert!(engine.broadcast(2, req).is_none());
    assert!(engine.broadcast(0, req).is_some());
}
