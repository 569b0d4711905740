//! Link and node outage schedules.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::engine::SimTime;
use crate::ids::{LinkId, NodeId};
use crate::topology::{LinkClass, NodeKind, Topology};

use super::config::{Alternating, FaultSpec};
use super::seeds::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    Link { link: LinkId, up: bool },
    Node { node: NodeId, up: bool },
}

/// Down/up instants of an alternating process that starts up.
fn alternate(rng: &mut impl Rng, a: Alternating, end: f64) -> Vec<(SimTime, bool)> {
    let up = Exp::new(1.0 / a.mean_up_ms).expect("checked");
    let down = Exp::new(1.0 / a.mean_down_ms).expect("checked");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += up.sample(rng);
        if t > end {
            break;
        }
        out.push((SimTime(t as u64), false));
        t += down.sample(rng);
        if t > end {
            break;
        }
        out.push((SimTime(t as u64), true));
    }
    out
}

/// Nodes a cluster's power outage takes down: its APs and the middle-mile
/// clients feeding them.
pub fn cluster_power_nodes(topo: &Topology, aps: &[NodeId]) -> Vec<NodeId> {
    let mut nodes: BTreeSet<NodeId> = aps.iter().copied().collect();
    for &ap in aps {
        for l in topo.links_of(ap) {
            let other = l.other(ap);
            if topo.kind(other) == Some(NodeKind::MiddleMileClient) {
                nodes.insert(other);
            }
        }
    }
    nodes.into_iter().collect()
}

/// Scheduled outages first, then random processes, stably sorted by time.
pub fn generate_faults(spec: &FaultSpec, topo: &Topology, duration: SimTime, seed: u64) -> Vec<(SimTime, Fault)> {
    let mut out = Vec::new();
    for o in &spec.backhaul_outage {
        let links = match (o.link, o.fog) {
            (Some(l), _) => vec![l],
            (None, Some(fog)) => topo.backhaul_links(fog),
            _ => Vec::new(),
        };
        for link in links {
            out.push((SimTime(o.down_at_ms), Fault::Link { link, up: false }));
            if let Some(up) = o.up_at_ms {
                out.push((SimTime(up), Fault::Link { link, up: true }));
            }
        }
    }
    for o in &spec.node_outage {
        out.push((SimTime(o.down_at_ms), Fault::Node { node: o.node, up: false }));
        if let Some(up) = o.up_at_ms {
            out.push((SimTime(up), Fault::Node { node: o.node, up: true }));
        }
    }
    let mut rng = stream_rng(seed, Stream::Faults);
    let end = duration.as_ms() as f64;
    if let Some(a) = spec.backhaul_random {
        for l in topo.links().iter().filter(|l| l.class == LinkClass::Backhaul) {
            for (t, up) in alternate(&mut rng, a, end) {
                out.push((t, Fault::Link { link: l.id, up }));
            }
        }
    }
    if let Some(a) = spec.power {
        for c in topo.clusters() {
            let nodes = cluster_power_nodes(topo, &c.wlan_aps);
            for (t, up) in alternate(&mut rng, a, end) {
                out.extend(nodes.iter().map(|&node| (t, Fault::Node { node, up })));
            }
        }
    }
    out.sort_by_key(|e| e.0);
    out
}
