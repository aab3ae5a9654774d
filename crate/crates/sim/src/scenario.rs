//! Turns a [`ScenarioConfig`] into engine runs and metric records.
//!
//! The action timeline is drawn once per seed and shared by every
//! algorithm, so algorithms see the same origins, crashes and churn.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use snow_core::protocol::SnowNode;
use snow_core::routing::build_full_tree;
use snow_core::{Fanout, MembershipView, Millis, NodeId};

use crate::baselines::{Flood, Gossip, Plumtree};
use crate::config::{Action, Algorithm, ConfigError, OriginChoice, ScenarioConfig};
use crate::engine::{BroadcastRequest, Engine, Life, SimNode, Stats};
use crate::latency::{LatencyModel, ProcDelayMode};
use crate::metrics::{scope_to_fixed_subset, unscoped, BroadcastLog, MetricsRecord, RunLabel, Scope};
use crate::snow_node::SnowSim;

/// Address of the `i`-th initial node.
pub fn initial_id(i: usize) -> NodeId {
    NodeId::v4(10, 0, (i >> 8) as u8, (i & 255) as u8, 7000)
}

/// Address of the `j`-th node to join during the run.
pub fn joiner_id(j: usize) -> NodeId {
    NodeId::v4(10, 1, (j >> 8) as u8, (j & 255) as u8, 7000)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent seed for one random stream of a run.
pub fn sub_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ stream) ^ index)
}

const PLAN: u64 = 1;
const LATENCY: u64 = 2;
const ENGINE: u64 = 3;
const MEMBER: u64 = 4;
const JOINER: u64 = 5;

/// Delay before retrying a leave the node could not start yet.
const LEAVE_RETRY: Millis = 100;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepKind {
    /// `msg` counts generated and scripted broadcasts in time order.
    Broadcast { origin: usize, size: u32, reliable: bool, msg: usize },
    Crash { node: usize },
    Join { joiner: usize },
    Leave { node: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub at: Millis,
    pub kind: StepKind,
}

/// Concrete timeline for one `(n, k, seed)`. Node numbers are engine
/// indices: initial nodes first, then joiners in join order.
#[derive(Clone, Debug)]
pub struct Plan {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub steps: Vec<Step>,
    pub joiners: usize,
    /// Initial nodes that neither crash nor leave.
    pub fixed: BTreeSet<NodeId>,
    /// Node crashed on delivery of the given broadcast.
    pub crash_on: Option<(usize, usize)>,
    pub join_seeds: Vec<NodeId>,
}

impl Plan {
    pub fn build(cfg: &ScenarioConfig, n: usize, k: usize, seed: u64) -> Result<Plan, ConfigError> {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, PLAN, 0));
        let mut steps = Vec::new();
        let mut joiners = 0;
        let mut removed: BTreeSet<usize> = BTreeSet::new();
        for a in &cfg.script {
            match *a {
                Action::Crash { node, .. } => {
                    removed.insert(node);
                }
                Action::Leave { node, joiner: false, .. } => {
                    removed.insert(node);
                }
                _ => {}
            }
        }
        let mut candidates: Vec<usize> = (0..n).filter(|i| !removed.contains(i)).collect();
        if candidates.is_empty() {
            candidates.push(0);
        }

        // Generated broadcast times, with churn steps around them.
        let mut times = Vec::new();
        let interval = cfg.message_interval_ms;
        match cfg.churn {
            None => times.extend((0..cfg.messages).map(|i| cfg.start_ms + i as Millis * interval)),
            Some(churn) => {
                let mut t = cfg.start_ms;
                for _ in 0..churn.cycles {
                    let j = joiners;
                    joiners += 1;
                    steps.push(Step {
                        at: t,
                        kind: StepKind::Join { joiner: j },
                    });
                    let first = t + 1;
                    times.extend((0..cfg.messages).map(|i| first + i as Millis * interval));
                    let last = first + (cfg.messages as Millis - 1) * interval;
                    steps.push(Step {
                        at: last + 1,
                        kind: StepKind::Leave { node: n + j },
                    });
                    t = last + interval;
                }
            }
        }

        let mut broadcasts: Vec<(Millis, Option<usize>, u32, bool)> = times
            .into_iter()
            .map(|t| (t, None, cfg.message_size_bytes, cfg.reliable))
            .collect();
        for a in &cfg.script {
            match *a {
                Action::Broadcast {
                    at,
                    origin,
                    size,
                    reliable,
                } => broadcasts.push((
                    at,
                    Some(origin),
                    size.unwrap_or(cfg.message_size_bytes),
                    reliable.unwrap_or(cfg.reliable),
                )),
                Action::Crash { at, node } => steps.push(Step {
                    at,
                    kind: StepKind::Crash { node },
                }),
                Action::Join { at } => {
                    steps.push(Step {
                        at,
                        kind: StepKind::Join { joiner: joiners },
                    });
                    joiners += 1;
                }
                Action::Leave { at, node, joiner } => steps.push(Step {
                    at,
                    kind: StepKind::Leave {
                        node: if joiner { n + node } else { node },
                    },
                }),
            }
        }
        broadcasts.sort_by_key(|b| b.0);

        let initial = MembershipView::from_members((0..n).map(initial_id));
        let mut crash_on = None;
        for (msg, (at, origin, size, reliable)) in broadcasts.into_iter().enumerate() {
            let origin = origin.unwrap_or_else(|| match cfg.origin {
                OriginChoice::Fixed => 0,
                OriginChoice::Random => *candidates.choose(&mut rng).expect("nonempty"),
            });
            if let Some(plan) = cfg.crash.filter(|c| c.msg == msg) {
                let victim = pick_internal(&initial, origin, k, plan.depth, &mut rng).ok_or_else(|| ConfigError::Invalid {
                    field: "crash",
                    reason: format!("no internal node at depth {} for n={n}, k={k}", plan.depth),
                })?;
                crash_on = Some((msg, victim));
                removed.insert(victim);
                candidates.retain(|&c| c != victim);
            }
            steps.push(Step {
                at,
                kind: StepKind::Broadcast {
                    origin,
                    size,
                    reliable,
                    msg,
                },
            });
        }
        // Stable: equal times keep their insertion order.
        steps.sort_by_key(|s| s.at);

        let fixed: BTreeSet<NodeId> = (0..n).filter(|i| !removed.contains(i)).map(initial_id).collect();
        let mut pool: Vec<NodeId> = fixed.iter().copied().collect();
        pool.shuffle(&mut rng);
        pool.truncate(3);
        Ok(Plan {
            n,
            k,
            seed,
            steps,
            joiners,
            fixed,
            crash_on,
            join_seeds: pool,
        })
    }

    pub fn last_action(&self) -> Millis {
        self.steps.last().map_or(0, |s| s.at)
    }
}

/// A node at `depth` in the broadcast tree from `origin` that has children.
fn pick_internal<R: Rng>(view: &MembershipView, origin: usize, k: usize, depth: u32, rng: &mut R) -> Option<usize> {
    let fanout = Fanout::new(k).ok()?;
    let tree = build_full_tree(view, &initial_id(origin), fanout).ok()?;
    let candidates: Vec<usize> = (0..view.len())
        .filter(|&i| {
            let id = initial_id(i);
            tree.depth(&id) == Some(depth) && tree.child_count(&id) > 0
        })
        .collect();
    candidates.choose(rng).copied()
}

/// An invariant the run broke.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub rule: &'static str,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub proc_delay_mode: ProcDelayMode,
    pub stragglers: usize,
    pub trace_hash: u64,
    pub end_ms: Millis,
    pub duplicate_deliveries: u64,
    pub stats: Stats,
    pub violations: Vec<Violation>,
    #[serde(skip)]
    pub records: Vec<MetricsRecord>,
    #[serde(skip)]
    pub logs: Vec<BroadcastLog>,
    /// Up nodes at the end of the run.
    #[serde(skip)]
    pub live: BTreeSet<NodeId>,
    #[serde(skip)]
    pub crashed: Vec<NodeId>,
}

impl RunResult {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs one algorithm on one cell for one seed.
pub fn run(
    cfg: &ScenarioConfig,
    algorithm: Algorithm,
    n: usize,
    k: usize,
    seed: u64,
    scope: Scope,
) -> Result<RunResult, ConfigError> {
    let plan = Plan::build(cfg, n, k, seed)?;
    let view: Vec<NodeId> = (0..n).map(initial_id).collect();
    let mut lat_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, LATENCY, 0));
    let latency = LatencyModel::new(cfg.latency(), n, &mut lat_rng);
    let engine_seed = sub_seed(seed, ENGINE, 0);
    let node_config = cfg.node_config(k);
    let colored = cfg.colored || algorithm == Algorithm::SnowColored;
    let missing = cfg.missing_timeout();

    let outcome = match algorithm {
        Algorithm::Snow | Algorithm::SnowColored => {
            let ring = MembershipView::from_members(view.iter().copied());
            let members = (0..n).map(|i| {
                let node = SnowNode::member(initial_id(i), ring.clone(), node_config.clone(), sub_seed(seed, MEMBER, i as u64));
                SnowSim::new(node, colored)
            });
            let seeds = plan.join_seeds.clone();
            drive(cfg, &plan, latency, engine_seed, members, |j, _| {
                let node = SnowNode::joiner(joiner_id(j), seeds.clone(), node_config.clone(), sub_seed(seed, JOINER, j as u64));
                SnowSim::new(node, colored)
            })
        }
        Algorithm::Flood => {
            let members = view.iter().map(|&id| Flood::new(id, view.clone()));
            drive(cfg, &plan, latency, engine_seed, members, |j, now_members| {
                Flood::new(joiner_id(j), with(now_members, joiner_id(j)))
            })
        }
        Algorithm::Gossip => {
            let members = (0..n).map(|i| Gossip::new(initial_id(i), view.clone(), k, sub_seed(seed, MEMBER, i as u64)));
            drive(cfg, &plan, latency, engine_seed, members, |j, now_members| {
                Gossip::new(joiner_id(j), with(now_members, joiner_id(j)), k, sub_seed(seed, JOINER, j as u64))
            })
        }
        Algorithm::Plumtree => {
            let members =
                (0..n).map(|i| Plumtree::new(initial_id(i), view.clone(), k, missing, sub_seed(seed, MEMBER, i as u64)));
            drive(cfg, &plan, latency, engine_seed, members, |j, now_members| {
                Plumtree::new(joiner_id(j), with(now_members, joiner_id(j)), k, missing, sub_seed(seed, JOINER, j as u64))
            })
        }
    };

    let label = RunLabel {
        scenario: cfg.name().to_string(),
        algorithm: algorithm.name().to_string(),
        k,
        seed,
    };
    let records = match scope {
        Scope::All => unscoped(&outcome.logs, &label),
        Scope::Fixed => scope_to_fixed_subset(&outcome.logs, &plan.fixed, &label),
    };
    let mut violations = outcome.violations;
    if algorithm.is_snow() {
        check_snow(cfg, &plan.fixed, &outcome.logs, &outcome.live, colored, &mut violations);
    }
    Ok(RunResult {
        scenario: cfg.name().to_string(),
        algorithm,
        n,
        k,
        seed,
        proc_delay_mode: cfg.proc_delay_mode,
        stragglers: outcome.stragglers,
        trace_hash: outcome.trace_hash,
        end_ms: outcome.end_ms,
        duplicate_deliveries: outcome.duplicate_deliveries,
        stats: outcome.stats,
        violations,
        records,
        logs: outcome.logs,
        live: outcome.live,
        crashed: outcome.crashed,
    })
}

fn with(members: &BTreeSet<NodeId>, me: NodeId) -> Vec<NodeId> {
    let mut v: Vec<NodeId> = members.iter().copied().collect();
    v.push(me);
    v
}

struct Outcome {
    logs: Vec<BroadcastLog>,
    live: BTreeSet<NodeId>,
    crashed: Vec<NodeId>,
    stats: Stats,
    trace_hash: u64,
    end_ms: Millis,
    stragglers: usize,
    duplicate_deliveries: u64,
    violations: Vec<Violation>,
}

fn drive<N, I, J>(cfg: &ScenarioConfig, plan: &Plan, latency: LatencyModel, seed: u64, members: I, mut joiner: J) -> Outcome
where
    N: SimNode,
    I: IntoIterator<Item = N>,
    J: FnMut(usize, &BTreeSet<NodeId>) -> N,
{
    let mut engine = Engine::new(latency, seed);
    let ids: Vec<usize> = members.into_iter().map(|m| engine.add_silent(m)).collect();
    for i in ids {
        engine.start(i);
    }
    let mut queue: std::collections::VecDeque<Step> = plan.steps.iter().cloned().collect();
    let mut last = plan.last_action();
    while let Some(step) = queue.pop_front() {
        engine.run_until(step.at);
        match step.kind {
            StepKind::Broadcast {
                origin,
                size,
                reliable,
                msg: this,
            } => {
                let req = BroadcastRequest {
                    size,
                    reliable,
                    colored: false,
                };
                let issued = engine.broadcast(origin, req);
                if let (Some(msg), Some((m, victim))) = (issued, plan.crash_on) {
                    if m == this {
                        engine.crash_on_delivery(victim, msg);
                    }
                }
            }
            StepKind::Crash { node } => engine.crash(node),
            StepKind::Join { joiner: j } => {
                let node = joiner(j, &engine.members());
                engine.add_node(node);
            }
            StepKind::Leave { node } => {
                let exists = node < engine.nodes().len();
                if exists && engine.life(node) == Life::Up && !engine.leave(node) && step.at < last + cfg.drain_ms {
                    // Not a member yet: try again shortly.
                    let retry = Step {
                        at: step.at + LEAVE_RETRY,
                        kind: StepKind::Leave { node },
                    };
                    last = last.max(retry.at);
                    let pos = queue.iter().position(|s| s.at > retry.at).unwrap_or(queue.len());
                    queue.insert(pos, retry);
                }
            }
        }
    }
    engine.run_until(last + cfg.drain_ms);
    let end_ms = engine.now();
    engine.drain();

    let mut violations = Vec::new();
    let stats = engine.stats().clone();
    let left = stats.unaccounted(engine.queued_deliveries());
    if left != 0 || engine.queued_deliveries() != 0 {
        violations.push(Violation {
            rule: "conservation",
            detail: format!("{left} envelope(s) unaccounted, {} still queued", engine.queued_deliveries()),
        });
    }
    if stats.clock_regressions > 0 {
        violations.push(Violation {
            rule: "clock-monotonicity",
            detail: format!("{} regression(s)", stats.clock_regressions),
        });
    }
    let live: BTreeSet<NodeId> = (0..engine.nodes().len())
        .filter(|&i| engine.life(i) == Life::Up)
        .map(|i| engine.node(i).id())
        .collect();
    // Up nodes that keep a view must agree on exactly the live set.
    for i in 0..engine.nodes().len() {
        if engine.life(i) != Life::Up {
            continue;
        }
        if let Some(v) = engine.node(i).view() {
            let v: BTreeSet<NodeId> = v.into_iter().collect();
            if v != live {
                violations.push(Violation {
                    rule: "view-convergence",
                    detail: format!(
                        "{} sees {} members, {} are live",
                        engine.node(i).id(),
                        v.len(),
                        live.len()
                    ),
                });
                break;
            }
        }
    }
    Outcome {
        logs: engine.recorder().logs().to_vec(),
        live,
        crashed: engine.crashes().iter().map(|c| c.0).collect(),
        trace_hash: engine.trace_hash(),
        stragglers: engine.latency().stragglers(),
        duplicate_deliveries: engine.recorder().duplicate_deliveries,
        stats,
        end_ms,
        violations,
    }
}

/// Properties every Snow run must have.
fn check_snow(
    cfg: &ScenarioConfig,
    fixed: &BTreeSet<NodeId>,
    logs: &[BroadcastLog],
    live: &BTreeSet<NodeId>,
    colored: bool,
    out: &mut Vec<Violation>,
) {
    for log in logs {
        let dups: Vec<_> = log.receipts.iter().filter(|(_, r)| r.count > 1).collect();
        if let Some((id, r)) = dups.first() {
            out.push(Violation {
                rule: "at-most-once",
                detail: format!("message {} delivered {} times at {id}", log.seq, r.count),
            });
        }
        // Joiners may be members before the origin hears of them, so only
        // fixed nodes are owed the message.
        if log.converged_at.is_some() {
            let missing = log.targets(Some(fixed)).intersection(live).filter(|t| !log.receipts.contains_key(t)).count();
            if missing > 0 {
                out.push(Violation {
                    rule: "convergence-implies-coverage",
                    detail: format!("message {} converged with {missing} live fixed node(s) missing", log.seq),
                });
            }
        }
    }
    let quiet = cfg.script.is_empty() && cfg.churn.is_none() && cfg.crash.is_none();
    if !quiet {
        return;
    }
    for log in logs {
        let targets = log.targets(None);
        let missing = targets.iter().filter(|t| !log.receipts.contains_key(t)).count();
        if missing > 0 {
            out.push(Violation {
                rule: "coverage",
                detail: format!("message {} missed {missing} node(s) in a fault-free run", log.seq),
            });
        }
        let n = log.members.len() as u64;
        if n >= 2 {
            // Colored broadcasts need n >= 3 and may fall back to one tree.
            let plain = n - 1;
            let ok = log.payload_sends == plain || (colored && n >= 3 && log.payload_sends == 2 * plain);
            if !ok {
                out.push(Violation {
                    rule: "payload-count",
                    detail: format!("message {} used {} payload sends for n={n}", log.seq, log.payload_sends),
                });
            }
        }
    }
}

/// Every `(algorithm, n, k, seed)` combination of a config.
pub fn jobs(cfg: &ScenarioConfig) -> Vec<(Algorithm, usize, usize, u64)> {
    let mut out = Vec::new();
    for (n, k) in cfg.cells() {
        for alg in cfg.algorithms() {
            for seed in cfg.seeds() {
                out.push((alg, n, k, seed));
            }
        }
    }
    out
}

/// Runs every job, using up to `threads` OS threads. Results come back in
/// job order whatever the thread count.
pub fn run_all(cfg: &ScenarioConfig, scope: Scope, threads: usize) -> Result<Vec<RunResult>, ConfigError> {
    let jobs = jobs(cfg);
    let threads = threads.max(1).min(jobs.len().max(1));
    let mut slots: Vec<Option<Result<RunResult, ConfigError>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = slots.chunks_mut(jobs.len().div_ceil(threads).max(1)).collect();
        let mut start = 0;
        for chunk in chunks {
            let mine = &jobs[start..start + chunk.len()];
            start += chunk.len();
            s.spawn(move || {
                for (slot, &(alg, n, k, seed)) in chunk.iter_mut().zip(mine) {
                    *slot = Some(run(cfg, alg, n, k, seed, scope));
                }
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every job ran")).collect()
}
