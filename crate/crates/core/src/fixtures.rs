//! Small reference networks used by the bundled scenarios, tests and benches.

use crate::ids::{ClusterId, FogId};
use crate::topology::Cluster;
use crate::topology::{
    Link, LinkClass, LinkId, LinkState, Node, NodeId, NodeKind, Topology, TopologyDoc,
};

/// Text of the bundled single-fog, two-cluster deployment example.
pub const FIG2_TOPOLOGY: &str = include_str!("../scenarios/fig2.topo.toml");

pub fn fig2_topology() -> Topology {
    Topology::from_toml_str(FIG2_TOPOLOGY).expect("bundled topology is valid")
}

/// Incremental document builder with sequential ids.
#[derive(Default)]
pub struct DocBuilder {
    doc: TopologyDoc,
}

impl DocBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, kind: NodeKind, fog: Option<u32>) -> NodeId {
        let id = NodeId(self.doc.nodes.len() as u32);
        self.doc.nodes.push(Node {
            id,
            kind,
            fog: fog.map(FogId),
            pos: [0.0, 0.0],
        });
        id
    }

    pub fn link(
        &mut self,
        a: NodeId,
        b: NodeId,
        class: LinkClass,
        capacity: f64,
        latency: f64,
    ) -> LinkId {
        let id = LinkId(self.doc.links.len() as u32);
        self.doc.links.push(Link {
            id,
            endpoints: [a, b],
            capacity,
            latency,
            state: LinkState::Up,
            class,
        });
        id
    }

    pub fn cluster(&mut self, aps: Vec<NodeId>, users: Vec<NodeId>) -> ClusterId {
        let id = ClusterId(self.doc.clusters.len() as u32);
        self.doc.clusters.push(Cluster {
            id,
            centroid: [0.0, 0.0],
            wlan_aps: aps,
            users,
        });
        id
    }

    pub fn finish(self) -> TopologyDoc {
        self.doc
    }
}

/// Node handles of a fog built by [`add_fog`].
#[derive(Clone, Debug)]
pub struct FogNodes {
    pub pop: NodeId,
    pub macro_bs: NodeId,
    pub mm_ap: NodeId,
    pub backhaul: LinkId,
    pub clusters: Vec<ClusterNodes>,
}

#[derive(Clone, Debug)]
pub struct ClusterNodes {
    pub client: NodeId,
    pub ap: NodeId,
    pub users: Vec<NodeId>,
}

/// Adds a fog with a chain of `users_per_cluster.len()` clusters hanging off
/// the middle-mile AP. Every user gets WLAN access; users with an even
/// index within the cluster also get macro access.
pub fn add_fog(
    b: &mut DocBuilder,
    gateway: NodeId,
    fog: u32,
    users_per_cluster: &[usize],
    backhaul_capacity: f64,
) -> FogNodes {
    let pop = b.node(NodeKind::PoP, Some(fog));
    let macro_bs = b.node(NodeKind::MacroBS, Some(fog));
    let mm_ap = b.node(NodeKind::MiddleMileAP, Some(fog));
    let backhaul = b.link(pop, gateway, LinkClass::Backhaul, backhaul_capacity, 10.0);
    b.link(pop, macro_bs, LinkClass::Internal, 60.0, 0.5);
    b.link(pop, mm_ap, LinkClass::Internal, 1000.0, 0.1);
    let mut prev = mm_ap;
    let mut clusters = Vec::new();
    for &n in users_per_cluster {
        let client = b.node(NodeKind::MiddleMileClient, Some(fog));
        let ap = b.node(NodeKind::WlanAP, Some(fog));
        b.link(prev, client, LinkClass::MiddleMile, 50.0, 2.0);
        b.link(client, ap, LinkClass::Internal, 100.0, 0.5);
        let mut users = Vec::new();
        for i in 0..n {
            let u = b.node(NodeKind::User, Some(fog));
            b.link(u, ap, LinkClass::WlanAccess, 30.0, 1.0);
            if i % 2 == 0 {
                b.link(u, macro_bs, LinkClass::MacroAccess, 20.0, 5.0);
            }
            users.push(u);
        }
        b.cluster(vec![ap], users.clone());
        clusters.push(ClusterNodes { client, ap, users });
        prev = client;
    }
    FogNodes {
        pop,
        macro_bs,
        mm_ap,
        backhaul,
        clusters,
    }
}

/// Two fogs under one gateway, each with a single two-user cluster.
pub fn two_fog_topology() -> (Topology, FogNodes, FogNodes) {
    let mut b = DocBuilder::new();
    let gw = b.node(NodeKind::CloudGateway, None);
    let a = add_fog(&mut b, gw, 0, &[2], 100.0);
    let c = add_fog(&mut b, gw, 1, &[2], 100.0);
    let topo = Topology::build_from_config(b.finish()).expect("two-fog topology is valid");
    (topo, a, c)
}
