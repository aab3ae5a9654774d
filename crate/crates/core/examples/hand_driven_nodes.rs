//! Snow nodes driven by hand: a FIFO queue stands in for the network and
//! the clock only moves when we say so. Any transport plugs in the same way.
//!
//! cargo run -p snow-core --example hand_driven_nodes

use std::collections::{BTreeMap, VecDeque};

use snow_core::protocol::{Effects, NodeConfig, Payload, SnowNode};
use snow_core::{Fanout, MembershipView, Mode, NodeId};

fn main() {
    let ids: Vec<NodeId> = (1..=12).map(|i| NodeId::v4(192, 168, 0, i, 9000)).collect();
    let view = MembershipView::from_members(ids.iter().copied());
    let config = NodeConfig::new(Fanout::new(2).expect("even fan-out"));
    let mut nodes: BTreeMap<NodeId, SnowNode> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, SnowNode::member(id, view.clone(), config.clone(), i as u64)))
        .collect();

    let mut wire = VecDeque::new();
    let mut now = 0;
    let absorb = |fx: Effects, wire: &mut VecDeque<_>| {
        for d in &fx.deliveries {
            println!("  delivered {:?} after {} hop(s)", d.msg, d.hops);
        }
        for e in &fx.events {
            println!("  event {e:?}");
        }
        wire.extend(fx.sends);
    };

    let origin = ids[4];
    let (msg, fx) = nodes
        .get_mut(&origin)
        .expect("origin exists")
        .initiate_broadcast(Payload::App { size: 64 }, Mode::Reliable, now)
        .expect("active member");
    println!("{origin} broadcasts {msg:?}");
    absorb(fx, &mut wire);

    while let Some(env) = wire.pop_front() {
        now += 5;
        println!("{} -> {} {:?}", env.from, env.to, env.kind());
        let fx = nodes.get_mut(&env.to).expect("known receiver").handle_envelope(&env, now);
        absorb(fx, &mut wire);
    }

    let delivered = nodes.values().filter(|n| n.has_delivered(&msg)).count();
    println!("{delivered} of {} nodes delivered by t={now}", ids.len());
}
