//! Forwarding state, middle-mile routing and the fog-resident service
//! functions (content cache, address pool).

mod cache;
mod dhcp;
mod route;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::ids::{FlowId, LinkId, NodeId, SliceId};
use crate::topology::{Link, LinkClass, LinkState, Topology};

pub use cache::{CacheOutcome, CacheState};
pub use dhcp::{AddressPool, DhcpError};
pub use route::{mesh_route, NoRoute};

/// Whether a path stays inside one fog or reaches the cloud.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Locality {
    IntraFogLocal,
    CloudBound,
}

impl Locality {
    pub fn name(self) -> &'static str {
        match self {
            Locality::IntraFogLocal => "local",
            Locality::CloudBound => "cloud",
        }
    }
}

/// Access technology used at one user end of a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccessRat {
    Macro,
    WlanViaMiddleMile,
}

impl AccessRat {
    pub fn name(self) -> &'static str {
        match self {
            AccessRat::Macro => "macro",
            AccessRat::WlanViaMiddleMile => "wlan",
        }
    }
}

/// A routed flow: `nodes[i]` forwards over `links[i]` to `nodes[i + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowPath {
    pub flow: FlowId,
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
    pub locality: Locality,
    /// Access RAT per user endpoint, in path order.
    pub access: Vec<(NodeId, AccessRat)>,
}

impl FlowPath {
    pub fn hops(&self) -> usize {
        self.links.len()
    }

    pub fn source(&self) -> Option<NodeId> {
        self.nodes.first().copied()
    }

    pub fn destination(&self) -> Option<NodeId> {
        self.nodes.last().copied()
    }

    pub fn count_class(&self, topo: &Topology, class: LinkClass) -> usize {
        self.links
            .iter()
            .filter(|&&l| topo.link(l).is_some_and(|l| l.class == class))
            .count()
    }

    /// `n1-n2-n3` rendering used by logs.
    pub fn node_string(&self) -> String {
        let mut s = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                s.push('-');
            }
            let _ = write!(s, "{}", n.0);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FlowTableEntry {
    pub flow: FlowId,
    pub node: NodeId,
    pub next_hop: LinkId,
    pub slice: SliceId,
}

/// QoS treatment of an installed flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reservation {
    Gbr(f64),
    BestEffort { demand: f64 },
}

impl Reservation {
    pub fn gbr(&self) -> Option<f64> {
        match self {
            Reservation::Gbr(g) => Some(*g),
            Reservation::BestEffort { .. } => None,
        }
    }

    pub fn demand(&self) -> f64 {
        match self {
            Reservation::Gbr(g) => *g,
            Reservation::BestEffort { demand } => *demand,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstalledFlow {
    pub path: FlowPath,
    pub slice: SliceId,
    pub reservation: Reservation,
    /// Current allocated rate, Mb/s.
    pub rate: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataplaneError {
    #[error("link {0} is down or unusable")]
    LinkDown(LinkId),
    #[error("flow {0} is already installed")]
    DuplicateFlow(FlowId),
    #[error("flow {0} is not installed")]
    UnknownFlow(FlowId),
    #[error("malformed path for {flow}: {reason}")]
    InvalidPath { flow: FlowId, reason: &'static str },
}

/// Forwarding tables of every node plus the installed flow set.
#[derive(Clone, Debug, Default)]
pub struct Dataplane {
    tables: BTreeMap<NodeId, BTreeMap<FlowId, (LinkId, SliceId)>>,
    flows: BTreeMap<FlowId, InstalledFlow>,
    down_nodes: BTreeSet<NodeId>,
}

impl Dataplane {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_up(&self, node: NodeId) -> bool {
        !self.down_nodes.contains(&node)
    }

    /// Returns true if the state changed.
    pub fn set_node_up(&mut self, node: NodeId, up: bool) -> bool {
        if up {
            self.down_nodes.remove(&node)
        } else {
            self.down_nodes.insert(node)
        }
    }

    /// A link carries traffic iff it is Up and both endpoints are powered.
    pub fn usable(&self, link: &Link) -> bool {
        link.state == LinkState::Up && link.endpoints.iter().all(|&n| self.node_up(n))
    }

    /// Checks hop structure, simplicity and link health.
    pub fn check_path(&self, topo: &Topology, path: &FlowPath) -> Result<(), DataplaneError> {
        let bad = |reason| DataplaneError::InvalidPath {
            flow: path.flow,
            reason,
        };
        if path.nodes.len() != path.links.len() + 1 || path.links.is_empty() {
            return Err(bad("hop count mismatch"));
        }
        let distinct: BTreeSet<NodeId> = path.nodes.iter().copied().collect();
        if distinct.len() != path.nodes.len() {
            return Err(bad("repeated node"));
        }
        for (i, &lid) in path.links.iter().enumerate() {
            let link = topo.link(lid).ok_or(bad("unknown link"))?;
            let (a, b) = (path.nodes[i], path.nodes[i + 1]);
            if !(link.touches(a) && link.other(a) == b) {
                return Err(bad("consecutive hops do not share a link"));
            }
            if !self.usable(link) {
                return Err(DataplaneError::LinkDown(lid));
            }
        }
        Ok(())
    }

    pub fn install_path(
        &mut self,
        topo: &Topology,
        path: FlowPath,
        slice: SliceId,
        reservation: Reservation,
    ) -> Result<(), DataplaneError> {
        if self.flows.contains_key(&path.flow) {
            return Err(DataplaneError::DuplicateFlow(path.flow));
        }
        self.check_path(topo, &path)?;
        for (node, link) in path.nodes.iter().zip(&path.links) {
            self.tables
                .entry(*node)
                .or_default()
                .insert(path.flow, (*link, slice));
        }
        self.flows.insert(
            path.flow,
            InstalledFlow {
                path,
                slice,
                reservation,
                rate: 0.0,
            },
        );
        Ok(())
    }

    pub fn remove_path(&mut self, flow: FlowId) -> Result<InstalledFlow, DataplaneError> {
        let installed = self
            .flows
            .remove(&flow)
            .ok_or(DataplaneError::UnknownFlow(flow))?;
        for node in &installed.path.nodes {
            if let Some(table) = self.tables.get_mut(node) {
                table.remove(&flow);
                if table.is_empty() {
                    self.tables.remove(node);
                }
            }
        }
        Ok(installed)
    }

    pub fn flow(&self, flow: FlowId) -> Option<&InstalledFlow> {
        self.flows.get(&flow)
    }

    /// Installed flows in id order.
    pub fn flows(&self) -> impl Iterator<Item = &InstalledFlow> {
        self.flows.values()
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn set_rate(&mut self, flow: FlowId, rate: f64) {
        if let Some(f) = self.flows.get_mut(&flow) {
            f.rate = rate;
        }
    }

    /// Flows whose path crosses `link`, in id order.
    pub fn flows_on_link(&self, link: LinkId) -> Vec<FlowId> {
        self.flows
            .values()
            .filter(|f| f.path.links.contains(&link))
            .map(|f| f.path.flow)
            .collect()
    }

    /// Flows whose path visits `node`, in id order.
    pub fn flows_through_node(&self, node: NodeId) -> Vec<FlowId> {
        self.flows
            .values()
            .filter(|f| f.path.nodes.contains(&node))
            .map(|f| f.path.flow)
            .collect()
    }

    /// Entries of one node in flow-id order.
    pub fn table(&self, node: NodeId) -> Vec<FlowTableEntry> {
        self.tables
            .get(&node)
            .map(|t| {
                t.iter()
                    .map(|(&flow, &(next_hop, slice))| FlowTableEntry {
                        flow,
                        node,
                        next_hop,
                        slice,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Every entry, ordered by (node, flow).
    pub fn entries(&self) -> Vec<FlowTableEntry> {
        self.tables.keys().flat_map(|&n| self.table(n)).collect()
    }

    /// Follows flow-table entries from `from` until no entry matches.
    /// Returns the visited nodes, or None on a loop.
    pub fn walk(&self, topo: &Topology, flow: FlowId, from: NodeId) -> Option<Vec<NodeId>> {
        let mut visited = vec![from];
        let mut at = from;
        while let Some(&(link, _)) = self.tables.get(&at).and_then(|t| t.get(&flow)) {
            at = topo.link(link)?.other(at);
            if visited.contains(&at) || visited.len() > topo.nodes().len() {
                return None;
            }
            visited.push(at);
        }
        Some(visited)
    }

    /// Per-node listing for golden files: `node\tflow\tnext_hop\tslice`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in self.entries() {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.node, e.flow, e.next_hop, e.slice);
        }
        out
    }

    /// Canonical per-link sums over installed flows in id order, indexed
    /// like `topo.links()`.
    pub fn link_totals(&self, topo: &Topology, value: impl Fn(&InstalledFlow) -> f64) -> Vec<f64> {
        let mut totals = vec![0.0; topo.links().len()];
        for f in self.flows.values() {
            let v = value(f);
            for &l in &f.path.links {
                if let Some(i) = topo.link_idx(l) {
                    totals[i] += v;
                }
            }
        }
        totals
    }

    /// Current allocated load per link.
    pub fn link_loads(&self, topo: &Topology) -> Vec<f64> {
        self.link_totals(topo, |f| f.rate)
    }

    /// Reserved GBR per link.
    pub fn link_gbr(&self, topo: &Topology) -> Vec<f64> {
        self.link_totals(topo, |f| f.reservation.gbr().unwrap_or(0.0))
    }
}

impl fmt::Display for FlowTableEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}->{} [{}]", self.flow, self.node, self.next_hop, self.slice)
    }
}
