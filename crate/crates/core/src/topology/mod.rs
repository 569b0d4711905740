//! The clustered rural network graph.
//!
//! A [`Topology`] is built once (from a document or the clustered generator)
//! and is immutable afterwards; runtime link and node state lives in the
//! data plane. The graph holds one cloud gateway and, per fog element, one
//! PoP with its co-located macro BS and middle-mile AP. WLAN APs sit in
//! village clusters and reach the PoP over the multi-hop middle mile.

mod generate;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::ids::{ClusterId, FogId, LinkId, NodeId};
pub use generate::{generate_clustered, LinkDefaults, LinkParams, TopologyGenParams};
pub use validate::{validate, Violation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    CloudGateway,
    PoP,
    MacroBS,
    MiddleMileAP,
    MiddleMileClient,
    WlanAP,
    User,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkState {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LinkClass {
    Backhaul,
    MiddleMile,
    WlanAccess,
    MacroAccess,
    Internal,
}

impl LinkClass {
    pub fn name(self) -> &'static str {
        match self {
            LinkClass::Backhaul => "backhaul",
            LinkClass::MiddleMile => "middle_mile",
            LinkClass::WlanAccess => "wlan_access",
            LinkClass::MacroAccess => "macro_access",
            LinkClass::Internal => "internal",
        }
    }

    /// Classes usable for intra-fog routing between forwarding elements.
    pub fn is_mesh(self) -> bool {
        matches!(self, LinkClass::MiddleMile | LinkClass::Internal)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Absent only for the cloud gateway.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fog: Option<FogId>,
    /// Planar position in meters.
    #[serde(default)]
    pub pos: [f64; 2],
}

/// Undirected link; capacity is shared by both directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub id: LinkId,
    pub endpoints: [NodeId; 2],
    /// Megabits per second.
    pub capacity: f64,
    /// Milliseconds.
    pub latency: f64,
    pub state: LinkState,
    pub class: LinkClass,
}

impl Link {
    pub fn other(&self, node: NodeId) -> NodeId {
        if self.endpoints[0] == node {
            self.endpoints[1]
        } else {
            self.endpoints[0]
        }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.endpoints[0] == node || self.endpoints[1] == node
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cluster {
    pub id: ClusterId,
    pub centroid: [f64; 2],
    pub wlan_aps: Vec<NodeId>,
    pub users: Vec<NodeId>,
}

/// Serialized form of a topology: `nodes[]`, `links[]`, `clusters[]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    #[serde(default)]
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub links: Vec<Link>,
    #[serde(default)]
    pub clusters: Vec<Cluster>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("topology document is malformed: {0}")]
    Parse(String),
    #[error("fog {fog} has no PoP")]
    MissingPoP { fog: FogId },
    #[error("link {link} references missing node {node}")]
    DanglingLinkEndpoint { link: LinkId, node: NodeId },
    #[error("WLAN AP {ap} cannot reach the PoP of its fog over the middle mile")]
    DisconnectedWlanAP { ap: NodeId },
    #[error("link {link} has invalid capacity")]
    InvalidCapacity { link: LinkId },
    #[error("cluster placement infeasible: placed {placed} of {requested} clusters")]
    InfeasiblePlacement { placed: u32, requested: u32 },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(&'static str),
    #[error("topology invalid: {0}")]
    Invalid(Violation),
}

impl From<Violation> for TopologyError {
    fn from(v: Violation) -> Self {
        match v {
            Violation::MissingPop { fog } => TopologyError::MissingPoP { fog },
            Violation::DanglingLinkEndpoint { link, node } => {
                TopologyError::DanglingLinkEndpoint { link, node }
            }
            Violation::DisconnectedWlanAp { ap } => TopologyError::DisconnectedWlanAP { ap },
            Violation::InvalidCapacity { link } => TopologyError::InvalidCapacity { link },
            other => TopologyError::Invalid(other),
        }
    }
}

/// Which access links a user is currently covered by.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(deny_unknown_fields)]
pub struct Attachment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wlan_ap: Option<NodeId>,
    #[serde(default)]
    pub macro_bs: bool,
}

impl Attachment {
    pub fn is_detached(&self) -> bool {
        self.wlan_ap.is_none() && !self.macro_bs
    }
}

impl fmt::Display for Attachment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.wlan_ap, self.macro_bs) {
            (Some(ap), true) => write!(f, "wlan:{ap}+macro"),
            (Some(ap), false) => write!(f, "wlan:{ap}"),
            (None, true) => f.write_str("macro"),
            (None, false) => f.write_str("none"),
        }
    }
}

/// Position of each id in its document vector. Ids are normally dense, so a
/// direct table is used unless they are too sparse for one.
#[derive(Clone, Debug)]
enum IdIndex {
    Dense(Vec<u32>),
    Sparse(Vec<(u32, usize)>),
}

impl IdIndex {
    const MISSING: u32 = u32::MAX;

    fn new(ids: impl Iterator<Item = u32>) -> IdIndex {
        let ids: Vec<u32> = ids.collect();
        let max = ids.iter().copied().max().unwrap_or(0) as usize;
        if max <= 4 * ids.len() + 1024 {
            let mut table = vec![Self::MISSING; max + 1];
            for (i, &id) in ids.iter().enumerate() {
                // duplicate ids fail validation; keep the first
                if table[id as usize] == Self::MISSING {
                    table[id as usize] = i as u32;
                }
            }
            IdIndex::Dense(table)
        } else {
            let mut pairs: Vec<(u32, usize)> = ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect();
            pairs.sort();
            pairs.dedup_by_key(|p| p.0);
            IdIndex::Sparse(pairs)
        }
    }

    fn get(&self, id: u32) -> Option<usize> {
        match self {
            IdIndex::Dense(t) => t
                .get(id as usize)
                .filter(|&&i| i != Self::MISSING)
                .map(|&i| i as usize),
            IdIndex::Sparse(p) => p.binary_search_by_key(&id, |e| e.0).ok().map(|k| p[k].1),
        }
    }
}

/// An indexed network graph. Only link states change after construction.
#[derive(Clone, Debug)]
pub struct Topology {
    doc: TopologyDoc,
    node_index: IdIndex,
    link_index: IdIndex,
    adjacency: Vec<Vec<usize>>,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

impl Topology {
    /// Builds and validates; the first violation found is returned as the error.
    pub fn build_from_config(doc: TopologyDoc) -> Result<Topology, TopologyError> {
        let topo = Topology::assemble(doc);
        match validate(&topo).into_iter().next() {
            Some(v) => Err(v.into()),
            None => Ok(topo),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Topology, TopologyError> {
        let doc: TopologyDoc =
            toml::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
        Topology::build_from_config(doc)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.doc).expect("topology document serializes")
    }

    /// Indexes a document without validating it.
    pub fn assemble(doc: TopologyDoc) -> Topology {
        let node_index = IdIndex::new(doc.nodes.iter().map(|n| n.id.0));
        let link_index = IdIndex::new(doc.links.iter().map(|l| l.id.0));
        let mut adjacency = vec![Vec::new(); doc.nodes.len()];
        for (li, link) in doc.links.iter().enumerate() {
            for end in link.endpoints {
                if let Some(ni) = node_index.get(end.0) {
                    if !adjacency[ni].contains(&li) {
                        adjacency[ni].push(li);
                    }
                }
            }
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&li| doc.links[li].id);
        }
        Topology {
            doc,
            node_index,
            link_index,
            adjacency,
        }
    }

    pub fn doc(&self) -> &TopologyDoc {
        &self.doc
    }

    pub fn into_doc(self) -> TopologyDoc {
        self.doc
    }

    pub fn nodes(&self) -> &[Node] {
        &self.doc.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.doc.links
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.doc.clusters
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.node_index.get(id.0).map(|i| &self.doc.nodes[i])
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.link_index.get(id.0).map(|i| &self.doc.links[i])
    }

    pub fn node_idx(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(id.0)
    }

    pub fn link_idx(&self, id: LinkId) -> Option<usize> {
        self.link_index.get(id.0)
    }

    /// Links incident to `node`, ordered by link id.
    pub fn links_of(&self, node: NodeId) -> impl Iterator<Item = &Link> + '_ {
        self.node_index.get(node.0).into_iter().flat_map(move |ni| {
            self.adjacency[ni]
                .iter()
                .map(move |&li| &self.doc.links[li])
        })
    }

    pub fn kind(&self, node: NodeId) -> Option<NodeKind> {
        self.node(node).map(|n| n.kind)
    }

    pub fn fog_of(&self, node: NodeId) -> Option<FogId> {
        self.node(node).and_then(|n| n.fog)
    }

    /// The fog a link belongs to: the fog of any endpoint that has one.
    pub fn link_fog(&self, link: &Link) -> Option<FogId> {
        link.endpoints.iter().find_map(|&n| self.fog_of(n))
    }

    pub fn fogs(&self) -> Vec<FogId> {
        let mut fogs: Vec<FogId> = self.doc.nodes.iter().filter_map(|n| n.fog).collect();
        fogs.sort();
        fogs.dedup();
        fogs
    }

    pub fn gateway(&self) -> Option<NodeId> {
        self.nodes_of_kind(NodeKind::CloudGateway).next()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.doc
            .nodes
            .iter()
            .filter(move |n| n.kind == kind)
            .map(|n| n.id)
    }

    fn fog_node(&self, fog: FogId, kind: NodeKind) -> Option<NodeId> {
        self.doc
            .nodes
            .iter()
            .find(|n| n.kind == kind && n.fog == Some(fog))
            .map(|n| n.id)
    }

    pub fn pop_of(&self, fog: FogId) -> Option<NodeId> {
        self.fog_node(fog, NodeKind::PoP)
    }

    pub fn macro_bs_of(&self, fog: FogId) -> Option<NodeId> {
        self.fog_node(fog, NodeKind::MacroBS)
    }

    pub fn users(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes_of_kind(NodeKind::User)
    }

    pub fn users_in_fog(&self, fog: FogId) -> Vec<NodeId> {
        self.doc
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::User && n.fog == Some(fog))
            .map(|n| n.id)
            .collect()
    }

    /// Backhaul links of a fog, ordered by id.
    pub fn backhaul_links(&self, fog: FogId) -> Vec<LinkId> {
        let mut links: Vec<LinkId> = self
            .doc
            .links
            .iter()
            .filter(|l| l.class == LinkClass::Backhaul && self.link_fog(l) == Some(fog))
            .map(|l| l.id)
            .collect();
        links.sort();
        links
    }

    pub fn cluster_of_user(&self, user: NodeId) -> Option<&Cluster> {
        self.doc.clusters.iter().find(|c| c.users.contains(&user))
    }

    pub fn cluster_of_ap(&self, ap: NodeId) -> Option<&Cluster> {
        self.doc.clusters.iter().find(|c| c.wlan_aps.contains(&ap))
    }

    /// Access link of `class` between `user` and `station`, lowest id first.
    pub fn access_link(&self, user: NodeId, station: NodeId, class: LinkClass) -> Option<&Link> {
        self.links_of(user)
            .find(|l| l.class == class && l.other(user) == station)
    }

    /// The user's macro access link, if any.
    pub fn macro_link(&self, user: NodeId) -> Option<&Link> {
        self.links_of(user)
            .find(|l| l.class == LinkClass::MacroAccess)
    }

    /// Every WLAN AP the user has an access link to.
    pub fn wlan_options(&self, user: NodeId) -> Vec<NodeId> {
        let mut aps: Vec<NodeId> = self
            .links_of(user)
            .filter(|l| l.class == LinkClass::WlanAccess)
            .map(|l| l.other(user))
            .collect();
        aps.sort();
        aps.dedup();
        aps
    }

    /// Initial coverage: the AP of the user's own cluster (or its first WLAN
    /// link) plus macro when a macro access link exists.
    pub fn home_attachment(&self, user: NodeId) -> Attachment {
        let options = self.wlan_options(user);
        let home = self
            .cluster_of_user(user)
            .and_then(|c| options.iter().copied().find(|ap| c.wlan_aps.contains(ap)))
            .or_else(|| options.first().copied());
        Attachment {
            wlan_ap: home,
            macro_bs: self.macro_link(user).is_some(),
        }
    }

    /// True iff `att` only refers to access links the user actually has.
    pub fn attachment_consistent(&self, user: NodeId, att: &Attachment) -> bool {
        let wlan_ok = match att.wlan_ap {
            Some(ap) => self.access_link(user, ap, LinkClass::WlanAccess).is_some(),
            None => true,
        };
        wlan_ok && (!att.macro_bs || self.macro_link(user).is_some())
    }

    /// Sets a link's state; returns true if it changed.
    pub fn set_link_state(&mut self, id: LinkId, state: LinkState) -> bool {
        match self.link_index.get(id.0) {
            Some(i) if self.doc.links[i].state != state => {
                self.doc.links[i].state = state;
                true
            }
            _ => false,
        }
    }

    /// Propagation latency summed over the given links.
    pub fn path_latency(&self, links: &[LinkId]) -> f64 {
        links
            .iter()
            .filter_map(|&l| self.link(l))
            .map(|l| l.latency)
            .sum()
    }

    /// Copy of this topology with one link removed (unvalidated).
    pub fn without_link(&self, link: LinkId) -> Topology {
        let mut doc = self.doc.clone();
        doc.links.retain(|l| l.id != link);
        Topology::assemble(doc)
    }

    /// Copy with every link capacity multiplied by `factor`.
    pub fn scaled_capacities(&self, factor: f64) -> Topology {
        let mut doc = self.doc.clone();
        for l in &mut doc.links {
            l.capacity *= factor;
        }
        Topology::assemble(doc)
    }
}
