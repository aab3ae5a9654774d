//! Snow nodes inside the simulator.

use snow_core::protocol::{Body, Effects, Envelope, NodeEvent, Payload, SnowNode, Status, Timer};
use snow_core::{Mode, MsgId, NodeId};

use crate::engine::{BroadcastRequest, Ctx, Note, SimNode, Wire};

impl Wire for Envelope {
    fn payload_of(&self) -> Option<MsgId> {
        self.app_task().map(|t| t.msg)
    }

    fn ack_of(&self) -> Option<MsgId> {
        match &self.body {
            Body::Ack(a) => Some(a.msg),
            _ => None,
        }
    }

    fn is_forwarding(&self) -> bool {
        matches!(self.body, Body::Data { .. })
    }

    fn label(&self) -> &'static str {
        use snow_core::protocol::Kind;
        match self.kind() {
            Kind::Data => "DATA",
            Kind::Ack => "ACK",
            Kind::Join => "JOIN",
            Kind::Leave => "LEAVE",
            Kind::Suspect => "SUSPECT",
            Kind::ConfirmDead => "CONFIRM_DEAD",
            Kind::SyncReq => "SYNC_REQ",
            Kind::SyncResp => "SYNC_RESP",
            Kind::Probe => "PROBE",
            Kind::ProbeAck => "PROBE_ACK",
        }
    }
}

/// A [`SnowNode`] plus the broadcast mode its application asks for.
#[derive(Clone, Debug)]
pub struct SnowSim {
    node: SnowNode,
    colored: bool,
}

impl SnowSim {
    pub fn new(node: SnowNode, colored: bool) -> Self {
        SnowSim { node, colored }
    }

    pub fn inner(&self) -> &SnowNode {
        &self.node
    }

    fn emit(fx: Effects, cx: &mut Ctx<Envelope, Timer>) {
        for (at, t) in fx.timers {
            cx.set_timer(at, t);
        }
        for d in fx.deliveries {
            if let Payload::App { .. } = d.payload {
                cx.deliver(d.msg, d.hops);
            }
        }
        for e in fx.events {
            match e {
                NodeEvent::Converged { msg, attempts, .. } => cx.note(Note::Converged { msg, attempts }),
                NodeEvent::BroadcastFailed { msg, attempts, .. } => cx.note(Note::Failed { msg, attempts }),
                NodeEvent::Joined => cx.note(Note::Joined),
                NodeEvent::Departed => cx.note(Note::Departed),
                _ => {}
            }
        }
        for env in fx.sends {
            cx.send(env.to, env);
        }
    }
}

impl SimNode for SnowSim {
    type Msg = Envelope;
    type Timer = Timer;

    fn id(&self) -> NodeId {
        self.node.id()
    }

    fn start(&mut self, cx: &mut Ctx<Envelope, Timer>) {
        let fx = self.node.start(cx.now());
        Self::emit(fx, cx);
    }

    fn on_message(&mut self, _from: NodeId, msg: Envelope, cx: &mut Ctx<Envelope, Timer>) {
        let fx = self.node.handle_envelope(&msg, cx.now());
        Self::emit(fx, cx);
    }

    fn on_timer(&mut self, timer: Timer, cx: &mut Ctx<Envelope, Timer>) {
        let fx = self.node.handle_timer(timer, cx.now());
        Self::emit(fx, cx);
    }

    fn on_send_failure(&mut self, _to: NodeId, msg: Envelope, cx: &mut Ctx<Envelope, Timer>) {
        let fx = self.node.handle_send_failure(&msg, cx.now());
        Self::emit(fx, cx);
    }

    fn broadcast(&mut self, req: BroadcastRequest, cx: &mut Ctx<Envelope, Timer>) -> Option<MsgId> {
        let mode = Mode::Standard.with_coloring(req.colored || self.colored);
        let mode = if req.reliable {
            match mode {
                Mode::Colored => Mode::ColoredReliable,
                _ => Mode::Reliable,
            }
        } else {
            mode
        };
        let (msg, fx) = self
            .node
            .initiate_broadcast(Payload::App { size: req.size }, mode, cx.now())
            .ok()?;
        Self::emit(fx, cx);
        Some(msg)
    }

    fn leave(&mut self, cx: &mut Ctx<Envelope, Timer>) -> bool {
        match self.node.leave_cluster(cx.now()) {
            Ok(fx) => {
                Self::emit(fx, cx);
                true
            }
            Err(_) => false,
        }
    }

    fn is_member(&self) -> bool {
        self.node.status() == Status::Active
    }

    fn view(&self) -> Option<Vec<NodeId>> {
        matches!(self.node.status(), Status::Active).then(|| self.node.view().members().to_vec())
    }
}
