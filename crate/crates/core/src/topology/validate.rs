use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use super::{ClusterId, FogId, LinkClass, LinkId, NodeId, NodeKind, Topology};

/// A broken topology invariant, naming the offending element.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Violation {
    DuplicateNodeId { node: NodeId },
    DuplicateLinkId { link: LinkId },
    DanglingLinkEndpoint { link: LinkId, node: NodeId },
    InvalidCapacity { link: LinkId },
    InvalidLatency { link: LinkId },
    LinkClassMismatch { link: LinkId },
    CrossFogLink { link: LinkId },
    MissingFog { node: NodeId },
    GatewayCount { found: usize },
    MissingPop { fog: FogId },
    DuplicatePop { fog: FogId, node: NodeId },
    MissingMacroBs { fog: FogId },
    DuplicateMacroBs { fog: FogId, node: NodeId },
    WlanApAttachment { ap: NodeId, clients: usize },
    ClientCluster { client: NodeId, clusters: usize },
    EmptyCluster { cluster: ClusterId },
    ClusterMember { cluster: ClusterId, node: NodeId },
    ClusterOverlap { node: NodeId },
    DisconnectedWlanAp { ap: NodeId },
    UserUnreachable { user: NodeId },
}

impl Violation {
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::DuplicateNodeId { .. } => "DuplicateNodeId",
            Violation::DuplicateLinkId { .. } => "DuplicateLinkId",
            Violation::DanglingLinkEndpoint { .. } => "DanglingLinkEndpoint",
            Violation::InvalidCapacity { .. } => "InvalidCapacity",
            Violation::InvalidLatency { .. } => "InvalidLatency",
            Violation::LinkClassMismatch { .. } => "LinkClassMismatch",
            Violation::CrossFogLink { .. } => "CrossFogLink",
            Violation::MissingFog { .. } => "MissingFog",
            Violation::GatewayCount { .. } => "GatewayCount",
            Violation::MissingPop { .. } => "MissingPoP",
            Violation::DuplicatePop { .. } => "DuplicatePoP",
            Violation::MissingMacroBs { .. } => "MissingMacroBS",
            Violation::DuplicateMacroBs { .. } => "DuplicateMacroBS",
            Violation::WlanApAttachment { .. } => "WlanAPAttachment",
            Violation::ClientCluster { .. } => "ClientCluster",
            Violation::EmptyCluster { .. } => "EmptyCluster",
            Violation::ClusterMember { .. } => "ClusterMember",
            Violation::ClusterOverlap { .. } => "ClusterOverlap",
            Violation::DisconnectedWlanAp { .. } => "DisconnectedWlanAP",
            Violation::UserUnreachable { .. } => "UserUnreachable",
        }
    }

    pub fn element(&self) -> String {
        match self {
            Violation::DuplicateNodeId { node }
            | Violation::MissingFog { node }
            | Violation::ClusterOverlap { node } => node.to_string(),
            Violation::DuplicateLinkId { link }
            | Violation::InvalidCapacity { link }
            | Violation::InvalidLatency { link }
            | Violation::LinkClassMismatch { link }
            | Violation::CrossFogLink { link } => link.to_string(),
            Violation::DanglingLinkEndpoint { link, .. } => link.to_string(),
            Violation::GatewayCount { .. } => "gateway".to_string(),
            Violation::MissingPop { fog } | Violation::MissingMacroBs { fog } => fog.to_string(),
            Violation::DuplicatePop { node, .. } | Violation::DuplicateMacroBs { node, .. } => {
                node.to_string()
            }
            Violation::WlanApAttachment { ap, .. } | Violation::DisconnectedWlanAp { ap } => {
                ap.to_string()
            }
            Violation::ClientCluster { client, .. } => client.to_string(),
            Violation::EmptyCluster { cluster } => cluster.to_string(),
            Violation::ClusterMember { node, .. } => node.to_string(),
            Violation::UserUnreachable { user } => user.to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.rule(), self.element())
    }
}

fn class_allows(class: LinkClass, a: NodeKind, b: NodeKind) -> bool {
    use NodeKind::*;
    let pair = |x: NodeKind, y: NodeKind| (a == x && b == y) || (a == y && b == x);
    match class {
        LinkClass::Backhaul => pair(PoP, CloudGateway),
        LinkClass::MiddleMile => {
            pair(MiddleMileAP, MiddleMileClient) || pair(MiddleMileClient, MiddleMileClient)
        }
        LinkClass::WlanAccess => pair(User, WlanAP),
        LinkClass::MacroAccess => pair(User, MacroBS),
        LinkClass::Internal => {
            pair(PoP, MacroBS) || pair(PoP, MiddleMileAP) || pair(MiddleMileClient, WlanAP)
        }
    }
}

/// Checks every topology invariant; an empty result means the topology is valid.
///
/// Connectivity of WLAN APs is checked structurally, treating every link as Up.
pub fn validate(topo: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    let nodes = topo.nodes();
    let links = topo.links();

    let mut seen = BTreeSet::new();
    for n in nodes {
        if !seen.insert(n.id) {
            out.push(Violation::DuplicateNodeId { node: n.id });
        }
    }
    let mut seen = BTreeSet::new();
    for l in links {
        if !seen.insert(l.id) {
            out.push(Violation::DuplicateLinkId { link: l.id });
        }
    }

    for l in links {
        let mut dangling = false;
        for end in l.endpoints {
            if topo.node(end).is_none() {
                out.push(Violation::DanglingLinkEndpoint {
                    link: l.id,
                    node: end,
                });
                dangling = true;
            }
        }
        if !(l.capacity > 0.0 && l.capacity.is_finite()) {
            out.push(Violation::InvalidCapacity { link: l.id });
        }
        if !(l.latency >= 0.0 && l.latency.is_finite()) {
            out.push(Violation::InvalidLatency { link: l.id });
        }
        if dangling {
            continue;
        }
        let ka = topo.kind(l.endpoints[0]).unwrap();
        let kb = topo.kind(l.endpoints[1]).unwrap();
        if l.endpoints[0] == l.endpoints[1] || !class_allows(l.class, ka, kb) {
            out.push(Violation::LinkClassMismatch { link: l.id });
        } else if l.class != LinkClass::Backhaul
            && topo.fog_of(l.endpoints[0]) != topo.fog_of(l.endpoints[1])
        {
            out.push(Violation::CrossFogLink { link: l.id });
        }
    }

    for n in nodes {
        if n.kind != NodeKind::CloudGateway && n.fog.is_none() {
            out.push(Violation::MissingFog { node: n.id });
        }
    }

    let gateways = nodes
        .iter()
        .filter(|n| n.kind == NodeKind::CloudGateway)
        .count();
    if gateways != 1 {
        out.push(Violation::GatewayCount { found: gateways });
    }

    let mut pops: BTreeMap<FogId, Vec<NodeId>> = BTreeMap::new();
    let mut macros: BTreeMap<FogId, Vec<NodeId>> = BTreeMap::new();
    for n in nodes {
        match (n.kind, n.fog) {
            (NodeKind::PoP, Some(f)) => pops.entry(f).or_default().push(n.id),
            (NodeKind::MacroBS, Some(f)) => macros.entry(f).or_default().push(n.id),
            _ => {}
        }
    }
    for fog in topo.fogs() {
        match pops.get(&fog).map(Vec::as_slice) {
            None | Some([]) => out.push(Violation::MissingPop { fog }),
            Some([_]) => {}
            Some(many) => out.extend(
                many[1..]
                    .iter()
                    .map(|&node| Violation::DuplicatePop { fog, node }),
            ),
        }
        match macros.get(&fog).map(Vec::as_slice) {
            None | Some([]) => out.push(Violation::MissingMacroBs { fog }),
            Some([_]) => {}
            Some(many) => out.extend(
                many[1..]
                    .iter()
                    .map(|&node| Violation::DuplicateMacroBs { fog, node }),
            ),
        }
    }

    // Each WLAN AP hangs off exactly one middle-mile client.
    for ap in topo.nodes_of_kind(NodeKind::WlanAP) {
        let clients = topo
            .links_of(ap)
            .filter(|l| topo.kind(l.other(ap)) == Some(NodeKind::MiddleMileClient))
            .count();
        if clients != 1 {
            out.push(Violation::WlanApAttachment { ap, clients });
        }
    }

    // Clusters: non-empty, well-typed, disjoint.
    let mut member_of: BTreeMap<NodeId, usize> = BTreeMap::new();
    for c in topo.clusters() {
        if c.wlan_aps.is_empty() {
            out.push(Violation::EmptyCluster { cluster: c.id });
        }
        for &ap in &c.wlan_aps {
            if topo.kind(ap) != Some(NodeKind::WlanAP) {
                out.push(Violation::ClusterMember {
                    cluster: c.id,
                    node: ap,
                });
            }
        }
        for &u in &c.users {
            if topo.kind(u) != Some(NodeKind::User) {
                out.push(Violation::ClusterMember {
                    cluster: c.id,
                    node: u,
                });
            }
        }
        for &m in c.wlan_aps.iter().chain(&c.users) {
            *member_of.entry(m).or_default() += 1;
        }
    }
    for (&node, &count) in &member_of {
        if count > 1 {
            out.push(Violation::ClusterOverlap { node });
        }
    }

    // Each client belongs to exactly one cluster, through the APs it serves.
    for client in topo.nodes_of_kind(NodeKind::MiddleMileClient) {
        let clusters: BTreeSet<ClusterId> = topo
            .links_of(client)
            .map(|l| l.other(client))
            .filter(|&n| topo.kind(n) == Some(NodeKind::WlanAP))
            .filter_map(|ap| topo.cluster_of_ap(ap).map(|c| c.id))
            .collect();
        if clusters.len() != 1 {
            out.push(Violation::ClientCluster {
                client,
                clusters: clusters.len(),
            });
        }
    }

    for ap in topo.nodes_of_kind(NodeKind::WlanAP) {
        let reaches = topo
            .fog_of(ap)
            .and_then(|f| topo.pop_of(f))
            .is_some_and(|pop| mesh_connected(topo, ap, pop));
        if !reaches {
            out.push(Violation::DisconnectedWlanAp { ap });
        }
    }

    for user in topo.users() {
        let has_access = topo
            .links_of(user)
            .any(|l| matches!(l.class, LinkClass::WlanAccess | LinkClass::MacroAccess));
        if !has_access {
            out.push(Violation::UserUnreachable { user });
        }
    }

    out
}

fn mesh_connected(topo: &Topology, from: NodeId, to: NodeId) -> bool {
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(n) = queue.pop_front() {
        if n == to {
            return true;
        }
        for l in topo.links_of(n).filter(|l| l.class.is_mesh()) {
            let m = l.other(n);
            if topo.node(m).is_some() && seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    false
}
