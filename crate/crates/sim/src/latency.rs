//! Per-hop delay model: receiver processing time, straggler penalty and a
//! constant network delay.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use snow_core::Millis;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcDelayMode {
    /// A fresh draw for every delivered envelope.
    #[default]
    PerMessage,
    /// One draw per node, fixed for the run.
    PerNode,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyParams {
    pub proc_min: Millis,
    pub proc_max: Millis,
    pub straggler_fraction: f64,
    pub straggler_delay: Millis,
    pub net_delay: Millis,
    pub mode: ProcDelayMode,
}

impl Default for LatencyParams {
    fn default() -> Self {
        LatencyParams {
            proc_min: 10,
            proc_max: 200,
            straggler_fraction: 0.05,
            straggler_delay: 1000,
            net_delay: 0,
            mode: ProcDelayMode::PerMessage,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LatencyModel {
    params: LatencyParams,
    straggler: Vec<bool>,
    fixed: Vec<Millis>,
}

impl LatencyModel {
    /// Picks `round(fraction * n)` stragglers among the first `n` nodes.
    pub fn new<R: Rng>(params: LatencyParams, n: usize, rng: &mut R) -> Self {
        let count = ((params.straggler_fraction * n as f64).round() as usize).min(n);
        let mut straggler = vec![false; n];
        for i in sample(rng, n, count) {
            straggler[i] = true;
        }
        let fixed = (0..n).map(|_| rng.gen_range(params.proc_min..=params.proc_max)).collect();
        LatencyModel {
            params,
            straggler,
            fixed,
        }
    }

    /// Registers a node added after the start. Late joiners are never
    /// stragglers.
    pub fn add_node<R: Rng>(&mut self, rng: &mut R) {
        self.straggler.push(false);
        self.fixed.push(rng.gen_range(self.params.proc_min..=self.params.proc_max));
    }

    /// Nodes the model has a slot for.
    pub fn slots(&self) -> usize {
        self.straggler.len()
    }

    pub fn is_straggler(&self, node: usize) -> bool {
        self.straggler[node]
    }

    pub fn stragglers(&self) -> usize {
        self.straggler.iter().filter(|s| **s).count()
    }

    pub fn params(&self) -> &LatencyParams {
        &self.params
    }

    /// Delay until `to` has processed an envelope. The straggler penalty
    /// only applies to broadcast forwarding.
    pub fn delay<R: Rng>(&self, to: usize, forwarding: bool, rng: &mut R) -> Millis {
        let p = &self.params;
        let proc = match p.mode {
            ProcDelayMode::PerMessage => rng.gen_range(p.proc_min..=p.proc_max),
            ProcDelayMode::PerNode => self.fixed[to],
        };
        let lag = if forwarding && self.straggler[to] { p.straggler_delay } else { 0 };
        proc + lag + p.net_delay
    }

    /// Largest possible single-hop delay.
    pub fn max_hop(&self) -> Millis {
        self.params.proc_max + self.params.straggler_delay + self.params.net_delay
    }
}
