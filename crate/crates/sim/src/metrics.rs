//! Per-message metrics: reliability, RMR, LDT, hop counts and
//! acknowledgment traffic, optionally scoped to a fixed node subset.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use snow_core::{Millis, MsgId, NodeId};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("RMR is undefined for a cluster of {0} node(s)")]
    DegenerateCluster(usize),
}

/// Relative message redundancy: `m / (n - 1) - 1`.
pub fn compute_rmr(m: u64, n: usize) -> Result<f64, MetricsError> {
    if n < 2 {
        return Err(MetricsError::DegenerateCluster(n));
    }
    Ok(m as f64 / (n - 1) as f64 - 1.0)
}

/// Last delivery time relative to `t0`; `None` if any target never
/// delivered.
pub fn compute_ldt<I: IntoIterator<Item = Option<Millis>>>(times: I, t0: Millis) -> Option<Millis> {
    let mut last = t0;
    for t in times {
        last = last.max(t?);
    }
    Some(last - t0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    All,
    Fixed,
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scope::All => "all",
            Scope::Fixed => "fixed",
        })
    }
}

/// First delivery of a message at one node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub at: Millis,
    pub hops: u32,
    pub count: u32,
}

/// Raw trace of one broadcast.
#[derive(Clone, Debug)]
pub struct BroadcastLog {
    pub msg: MsgId,
    pub seq: u64,
    pub t0: Millis,
    /// Members when the broadcast started, origin included.
    pub members: BTreeSet<NodeId>,
    pub reliable: bool,
    pub payload_sends: u64,
    pub acks: u64,
    pub converged_at: Option<Millis>,
    pub failed_at: Option<Millis>,
    pub attempts: u32,
    pub receipts: BTreeMap<NodeId, Receipt>,
}

impl BroadcastLog {
    /// Everyone the broadcast was meant for under `scope`.
    pub fn targets(&self, fixed: Option<&BTreeSet<NodeId>>) -> BTreeSet<NodeId> {
        let base = match fixed {
            Some(f) => f.intersection(&self.members).copied().collect(),
            None => self.members.clone(),
        };
        let mut t: BTreeSet<NodeId> = base;
        t.remove(&self.msg.origin);
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: String,
    pub algorithm: String,
    pub msg_seq: u64,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub scope: Scope,
    pub reliability: f64,
    pub rmr: Option<f64>,
    pub ldt_ms: Option<Millis>,
    pub max_hops: Option<u32>,
    pub payload_sends: u64,
    pub acks: u64,
    pub converged: Option<bool>,
    pub convergence_ms: Option<Millis>,
}

/// Identifies a run in the records it produces.
#[derive(Clone, Debug)]
pub struct RunLabel {
    pub scenario: String,
    pub algorithm: String,
    pub k: usize,
    pub seed: u64,
}

/// Reliability, LDT and hops over `targets`; RMR always over every member.
pub fn evaluate(log: &BroadcastLog, targets: &BTreeSet<NodeId>, label: &RunLabel, scope: Scope) -> MetricsRecord {
    let delivered = targets.iter().filter(|t| log.receipts.contains_key(t)).count();
    let reliability = if targets.is_empty() {
        1.0
    } else {
        delivered as f64 / targets.len() as f64
    };
    let ldt = compute_ldt(targets.iter().map(|t| log.receipts.get(t).map(|r| r.at)), log.t0);
    let max_hops = targets.iter().filter_map(|t| log.receipts.get(t).map(|r| r.hops)).max();
    let n = log.members.len();
    MetricsRecord {
        scenario: label.scenario.clone(),
        algorithm: label.algorithm.clone(),
        msg_seq: log.seq,
        n,
        k: label.k,
        seed: label.seed,
        scope,
        reliability,
        rmr: compute_rmr(log.payload_sends, n).ok(),
        ldt_ms: ldt,
        max_hops,
        payload_sends: log.payload_sends,
        acks: log.acks,
        converged: log.reliable.then_some(log.converged_at.is_some()),
        convergence_ms: log.converged_at.map(|t| t - log.t0),
    }
}

/// Recomputes reliability and LDT over `fixed` only. RMR keeps counting
/// every payload send.
pub fn scope_to_fixed_subset(logs: &[BroadcastLog], fixed: &BTreeSet<NodeId>, label: &RunLabel) -> Vec<MetricsRecord> {
    logs.iter()
        .map(|log| evaluate(log, &log.targets(Some(fixed)), label, Scope::Fixed))
        .collect()
}

pub fn unscoped(logs: &[BroadcastLog], label: &RunLabel) -> Vec<MetricsRecord> {
    logs.iter()
        .map(|log| evaluate(log, &log.targets(None), label, Scope::All))
        .collect()
}

/// Collects broadcast traces while the engine runs.
#[derive(Clone, Debug, Default)]
pub struct Recorder {
    logs: Vec<BroadcastLog>,
    index: BTreeMap<MsgId, usize>,
    /// Deliveries of a message already delivered at that node.
    pub duplicate_deliveries: u64,
}

impl Recorder {
    pub fn start(&mut self, msg: MsgId, t0: Millis, members: BTreeSet<NodeId>, reliable: bool) {
        let seq = self.logs.len() as u64;
        self.index.insert(msg, self.logs.len());
        self.logs.push(BroadcastLog {
            msg,
            seq,
            t0,
            members,
            reliable,
            payload_sends: 0,
            acks: 0,
            converged_at: None,
            failed_at: None,
            attempts: 0,
            receipts: BTreeMap::new(),
        });
    }

    fn log_mut(&mut self, msg: &MsgId) -> Option<&mut BroadcastLog> {
        self.index.get(msg).map(|&i| &mut self.logs[i])
    }

    pub fn payload_sent(&mut self, msg: &MsgId) {
        if let Some(log) = self.log_mut(msg) {
            log.payload_sends += 1;
        }
    }

    pub fn ack_sent(&mut self, msg: &MsgId) {
        if let Some(log) = self.log_mut(msg) {
            log.acks += 1;
        }
    }

    pub fn delivered(&mut self, node: NodeId, msg: &MsgId, at: Millis, hops: u32) {
        let mut dup = false;
        if let Some(log) = self.log_mut(msg) {
            let r = log.receipts.entry(node).or_insert(Receipt { at, hops, count: 0 });
            r.count += 1;
            dup = r.count > 1;
        }
        if dup {
            self.duplicate_deliveries += 1;
        }
    }

    pub fn converged(&mut self, msg: &MsgId, at: Millis, attempts: u32) {
        if let Some(log) = self.log_mut(msg) {
            log.converged_at.get_or_insert(at);
            log.attempts = attempts;
        }
    }

    pub fn failed(&mut self, msg: &MsgId, at: Millis, attempts: u32) {
        if let Some(log) = self.log_mut(msg) {
            log.failed_at.get_or_insert(at);
            log.attempts = attempts;
        }
    }

    pub fn logs(&self) -> &[BroadcastLog] {
        &self.logs
    }

    pub fn get(&self, msg: &MsgId) -> Option<&BroadcastLog> {
        self.index.get(msg).map(|&i| &self.logs[i])
    }
}

/// Writes records with the standard column set.
pub fn write_csv<W: Write>(out: W, records: &[MetricsRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<MetricsRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub const CSV_HEADER: &str = "scenario,algorithm,msg_seq,n,k,seed,scope,reliability,rmr,ldt_ms,max_hops,payload_sends,acks,converged,convergence_ms";

#[cfg(test)]
mod tests {
    use super::*;

    fn id(i: u8) -> NodeId {
        NodeId::v4(10, 0, 0, i, 7000)
    }

    fn label() -> RunLabel {
        RunLabel {
            scenario: "t".into(),
            algorithm: "snow".into(),
            k: 4,
            seed: 1,
        }
    }

    fn log(n: u8) -> BroadcastLog {
        BroadcastLog {
            msg: MsgId { origin: id(0), seq: 0 },
            seq: 0,
            t0: 100,
            members: (0..n).map(id).collect(),
            reliable: false,
            payload_sends: 0,
            acks: 0,
            converged_at: None,
            failed_at: None,
            attempts: 0,
            receipts: BTreeMap::new(),
        }
    }

    #[test]
    fn rmr_values() {
        assert_eq!(compute_rmr(9, 10).unwrap(), 0.0);
        assert_eq!(compute_rmr(18, 10).unwrap(), 1.0);
        assert_eq!(compute_rmr(5, 1), Err(MetricsError::DegenerateCluster(1)));
    }

    #[test]
    fn ldt_values() {
        assert_eq!(compute_ldt([Some(600), Some(600)], 100), Some(500));
        assert_eq!(compute_ldt([Some(600), None], 100), None);
    }

    #[test]
    fn missing_target_lowers_reliability() {
        let mut l = log(4);
        l.payload_sends = 2;
        for i in 1..3 {
            l.receipts.insert(id(i), Receipt { at: 150, hops: 1, count: 1 });
        }
        let r = evaluate(&l, &l.targets(None), &label(), Scope::All);
        assert!((r.reliability - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.ldt_ms, None);
        assert!((r.rmr.unwrap() + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_scope_of_everyone_equals_unscoped() {
        let mut l = log(5);
        l.payload_sends = 4;
        for i in 1..5 {
            l.receipts.insert(id(i), Receipt { at: 100 + i as u64 * 10, hops: i as u32, count: 1 });
        }
        let everyone: BTreeSet<_> = (0..5).map(id).collect();
        let a = unscoped(std::slice::from_ref(&l), &label());
        let mut f = scope_to_fixed_subset(std::slice::from_ref(&l), &everyone, &label());
        f[0].scope = Scope::All;
        assert_eq!(a, f);
        assert_eq!(a[0].ldt_ms, Some(40));
        assert_eq!(a[0].max_hops, Some(4));
    }

    #[test]
    fn csv_round_trip_uses_standard_columns() {
        let l = log(3);
        let recs = unscoped(&[l], &label());
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(read_csv(&buf[..]).unwrap(), recs);
    }
}
