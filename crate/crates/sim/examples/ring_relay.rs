//! Plugging a new protocol into the simulator: each node hands the message
//! to its ring successor. The engine supplies latency, stragglers, crashes
//! and the broadcast log; the protocol only implements `SimNode`.
//!
//! cargo run --release -p snow-sim --example ring_relay -- 50

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snow_core::{MsgId, NodeId};
use snow_sim::engine::{BroadcastRequest, Ctx, Engine, SimNode, Wire};
use snow_sim::latency::{LatencyModel, LatencyParams};
use snow_sim::metrics::{unscoped, RunLabel};
use snow_sim::scenario::initial_id;

#[derive(Clone, Debug)]
struct Relay {
    msg: MsgId,
    hops: u32,
}

impl Wire for Relay {
    fn payload_of(&self) -> Option<MsgId> {
        Some(self.msg)
    }

    fn ack_of(&self) -> Option<MsgId> {
        None
    }

    fn is_forwarding(&self) -> bool {
        true
    }

    fn label(&self) -> &'static str {
        "RELAY"
    }
}

struct RingNode {
    me: NodeId,
    next: NodeId,
    seq: u64,
}

impl SimNode for RingNode {
    type Msg = Relay;
    type Timer = ();

    fn id(&self) -> NodeId {
        self.me
    }

    fn start(&mut self, _cx: &mut Ctx<Relay, ()>) {}

    fn on_message(&mut self, _from: NodeId, m: Relay, cx: &mut Ctx<Relay, ()>) {
        cx.deliver(m.msg, m.hops);
        if self.next != m.msg.origin {
            cx.send(self.next, Relay { msg: m.msg, hops: m.hops + 1 });
        }
    }

    fn on_timer(&mut self, _timer: (), _cx: &mut Ctx<Relay, ()>) {}

    fn broadcast(&mut self, _req: BroadcastRequest, cx: &mut Ctx<Relay, ()>) -> Option<MsgId> {
        let msg = MsgId {
            origin: self.me,
            seq: self.seq,
        };
        self.seq += 1;
        cx.send(self.next, Relay { msg, hops: 1 });
        Some(msg)
    }

    fn leave(&mut self, _cx: &mut Ctx<Relay, ()>) -> bool {
        false
    }

    fn is_member(&self) -> bool {
        true
    }
}

fn main() {
    let n: usize = std::env::args().nth(1).map_or(50, |a| a.parse().expect("numeric n"));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut engine = Engine::new(LatencyModel::new(LatencyParams::default(), n, &mut rng), 1);
    for i in 0..n {
        engine.add_silent(RingNode {
            me: initial_id(i),
            next: initial_id((i + 1) % n),
            seq: 0,
        });
    }
    let req = BroadcastRequest {
        size: 100,
        reliable: false,
        colored: false,
    };
    engine.broadcast(0, req).expect("origin is up");
    engine.run_until(1_000_000);
    engine.crash(n / 2);
    engine.broadcast(0, req).expect("origin is up");
    engine.run_until(2_000_000);
    engine.drain();

    let label = RunLabel {
        scenario: "ring".into(),
        algorithm: "ring_relay".into(),
        k: 1,
        seed: 1,
    };
    for rec in unscoped(engine.recorder().logs(), &label) {
        println!(
            "msg {}: reliability {:.3} rmr {:?} ldt {:?} ms, max hops {:?}",
            rec.msg_seq, rec.reliability, rec.rmr, rec.ldt_ms, rec.max_hops
        );
    }
}
