use std::collections::VecDeque;

use thiserror::Error;

use crate::ids::{LinkId, NodeId};
use crate::topology::{Link, LinkClass, Topology};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("no middle-mile route from {src} to {dst}")]
pub struct NoRoute {
    pub src: NodeId,
    pub dst: NodeId,
}

fn routable(link: &Link) -> bool {
    matches!(link.class, LinkClass::MiddleMile | LinkClass::Internal)
}

/// Minimum-hop route over MiddleMile and Internal links.
///
/// `eligible(link)` decides health and residual admission for each link.
/// Among equal-length routes the lexicographically smallest node sequence
/// wins; parallel links resolve to the lowest link id. Returns the nodes
/// (starting at `src`) and links; `src == dst` yields `([src], [])`.
pub fn mesh_route(
    topo: &Topology,
    src: NodeId,
    dst: NodeId,
    eligible: impl Fn(&Link) -> bool,
) -> Result<(Vec<NodeId>, Vec<LinkId>), NoRoute> {
    let no_route = NoRoute { src, dst };
    let (Some(si), Some(di)) = (topo.node_idx(src), topo.node_idx(dst)) else {
        return Err(no_route);
    };
    if si == di {
        return Ok((vec![src], Vec::new()));
    }
    let ok = |l: &Link| routable(l) && eligible(l);

    // Hop distance to dst.
    let mut dist = vec![usize::MAX; topo.nodes().len()];
    dist[di] = 0;
    let mut queue = VecDeque::from([dst]);
    while let Some(n) = queue.pop_front() {
        let d = dist[topo.node_idx(n).unwrap()];
        for l in topo.links_of(n).filter(|l| ok(l)) {
            let m = l.other(n);
            let mi = topo.node_idx(m).unwrap();
            if dist[mi] == usize::MAX {
                dist[mi] = d + 1;
                queue.push_back(m);
            }
        }
    }
    if dist[si] == usize::MAX {
        return Err(no_route);
    }

    let mut nodes = vec![src];
    let mut links = Vec::new();
    let mut at = src;
    while at != dst {
        let d = dist[topo.node_idx(at).unwrap()];
        let (next, link) = topo
            .links_of(at)
            .filter(|l| ok(l))
            .map(|l| (l.other(at), l.id))
            .filter(|(m, _)| dist[topo.node_idx(*m).unwrap()] + 1 == d)
            .min()
            .expect("a neighbour one hop closer exists");
        nodes.push(next);
        links.push(link);
        at = next;
    }
    Ok((nodes, links))
}
