use crate::id::{NodeId, NODE_ID_LEN};
use crate::message::BroadcastTask;
use crate::reliable::Ack;
use crate::Millis;

const ID: u32 = NODE_ID_LEN as u32;

/// What a DATA message carries: application bytes (only their size is
/// modelled) or one of Snow's own membership notices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Payload {
    App { size: u32 },
    Control(Control),
}

/// Membership traffic; disseminated with the Snow broadcast itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Join(NodeId),
    Leave(NodeId),
    Suspect { target: NodeId, reporter: NodeId },
    ConfirmDead(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Body {
    Data { task: BroadcastTask, payload: Payload },
    Ack(Ack),
    SyncReq,
    SyncResp {
        members: Vec<NodeId>,
        /// Tombstoned ids with their remaining lifetime, so that gossiping
        /// a tombstone back and forth never extends it.
        tombstones: Vec<(NodeId, Millis)>,
    },
    Probe { seq: u64 },
    ProbeAck { seq: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Data,
    Ack,
    Join,
    Leave,
    Suspect,
    ConfirmDead,
    SyncReq,
    SyncResp,
    Probe,
    ProbeAck,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub from: NodeId,
    pub to: NodeId,
    pub body: Body,
}

impl Envelope {
    pub fn kind(&self) -> Kind {
        match &self.body {
            Body::Data { payload, .. } => match payload {
                Payload::App { .. } => Kind::Data,
                Payload::Control(Control::Join(_)) => Kind::Join,
                Payload::Control(Control::Leave(_)) => Kind::Leave,
                Payload::Control(Control::Suspect { .. }) => Kind::Suspect,
                Payload::Control(Control::ConfirmDead(_)) => Kind::ConfirmDead,
            },
            Body::Ack(_) => Kind::Ack,
            Body::SyncReq => Kind::SyncReq,
            Body::SyncResp { .. } => Kind::SyncResp,
            Body::Probe { .. } => Kind::Probe,
            Body::ProbeAck { .. } => Kind::ProbeAck,
        }
    }

    /// Application payload id, for DATA carrying application bytes.
    pub fn app_task(&self) -> Option<&BroadcastTask> {
        match &self.body {
            Body::Data {
                task,
                payload: Payload::App { .. },
            } => Some(task),
            _ => None,
        }
    }

    /// Nominal wire size. DATA: root and both boundaries (3 ids) plus body;
    /// ACK: message id (origin + sequence).
    pub fn size_bytes(&self) -> u32 {
        match &self.body {
            Body::Data { payload, .. } => {
                3 * ID
                    + match payload {
                        Payload::App { size } => *size,
                        Payload::Control(Control::Suspect { .. }) => 2 * ID,
                        Payload::Control(_) => ID,
                    }
            }
            Body::Ack(_) => ID + 8,
            Body::SyncReq => 0,
            Body::SyncResp { members, tombstones } => ID * members.len() as u32 + (ID + 8) * tombstones.len() as u32,
            Body::Probe { .. } | Body::ProbeAck { .. } => 8,
        }
    }
}
