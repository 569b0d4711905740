//! Cloud-side control: per-fog connectivity tracking, inter-fog routes and
//! the delta queues that keep the cloud's user-context replica in step with
//! each fog.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::engine::SimTime;
use crate::ids::{FlowId, FogId, LinkId, NodeId};
use crate::topology::{Attachment, LinkState, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Connectivity {
    Connected,
    Isolated,
}

impl Connectivity {
    pub fn name(self) -> &'static str {
        match self {
            Connectivity::Connected => "Connected",
            Connectivity::Isolated => "Isolated",
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConnectivityState {
    pub state: Connectivity,
    pub since: SimTime,
}

/// One row of the connectivity timeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub time: SimTime,
    pub fog: FogId,
    pub state: Connectivity,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterFogRoute {
    pub flow: FlowId,
    pub src_fog: FogId,
    pub dst_fog: FogId,
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
}

/// A user-context change recorded by a fog.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delta {
    pub time: SimTime,
    pub user: NodeId,
    pub attachment: Attachment,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SyncRecord {
    pub last_sync: Option<SimTime>,
    pub pending: Vec<Delta>,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SyncError {
    #[error("{0} is isolated; deltas retained")]
    FogIsolated(FogId),
}

#[derive(Clone, Debug)]
pub struct Cloud {
    conn: BTreeMap<FogId, ConnectivityState>,
    sync: BTreeMap<FogId, SyncRecord>,
    replica: BTreeMap<NodeId, (SimTime, Attachment)>,
    routes: BTreeMap<FlowId, InterFogRoute>,
    timeline: Vec<Transition>,
}

fn isolated(topo: &Topology, fog: FogId) -> bool {
    topo.backhaul_links(fog)
        .iter()
        .all(|&l| topo.link(l).is_some_and(|l| l.state == LinkState::Down))
}

impl Cloud {
    /// Starts with the connectivity implied by the topology's link states.
    pub fn new(topo: &Topology) -> Self {
        let conn = topo
            .fogs()
            .into_iter()
            .map(|f| {
                let state = if isolated(topo, f) {
                    Connectivity::Isolated
                } else {
                    Connectivity::Connected
                };
                (
                    f,
                    ConnectivityState {
                        state,
                        since: SimTime::ZERO,
                    },
                )
            })
            .collect();
        Cloud {
            conn,
            sync: topo.fogs().into_iter().map(|f| (f, SyncRecord::default())).collect(),
            replica: BTreeMap::new(),
            routes: BTreeMap::new(),
            timeline: Vec::new(),
        }
    }

    pub fn state(&self, fog: FogId) -> Option<ConnectivityState> {
        self.conn.get(&fog).copied()
    }

    pub fn is_connected(&self, fog: FogId) -> bool {
        self.conn
            .get(&fog)
            .is_some_and(|c| c.state == Connectivity::Connected)
    }

    /// Re-derives a fog's state from its backhaul links; returns the new
    /// state if it changed.
    pub fn on_backhaul_change(
        &mut self,
        topo: &Topology,
        fog: FogId,
        now: SimTime,
    ) -> Option<Connectivity> {
        let state = if isolated(topo, fog) {
            Connectivity::Isolated
        } else {
            Connectivity::Connected
        };
        let entry = self.conn.get_mut(&fog)?;
        if entry.state == state {
            return None;
        }
        *entry = ConnectivityState { state, since: now };
        self.timeline.push(Transition {
            time: now,
            fog,
            state,
        });
        Some(state)
    }

    pub fn timeline(&self) -> &[Transition] {
        &self.timeline
    }

    pub fn seed_replica(&mut self, user: NodeId, attachment: Attachment) {
        self.replica.insert(user, (SimTime::ZERO, attachment));
    }

    pub fn queue_delta(&mut self, fog: FogId, delta: Delta) {
        self.sync.entry(fog).or_default().pending.push(delta);
    }

    pub fn sync_record(&self, fog: FogId) -> Option<&SyncRecord> {
        self.sync.get(&fog)
    }

    pub fn has_pending(&self, fog: FogId) -> bool {
        self.sync.get(&fog).is_some_and(|s| !s.pending.is_empty())
    }

    /// Drains a connected fog's deltas in order into the replica, keeping
    /// the latest write per user. Returns the number applied.
    pub fn sync_fog_state(&mut self, fog: FogId, now: SimTime) -> Result<usize, SyncError> {
        if !self.is_connected(fog) {
            return Err(SyncError::FogIsolated(fog));
        }
        let record = self.sync.entry(fog).or_default();
        let pending = std::mem::take(&mut record.pending);
        record.last_sync = Some(now);
        let n = pending.len();
        for d in pending {
            match self.replica.get(&d.user) {
                Some(&(t, _)) if t > d.time => {}
                _ => {
                    self.replica.insert(d.user, (d.time, d.attachment));
                }
            }
        }
        Ok(n)
    }

    pub fn replica(&self, user: NodeId) -> Option<Attachment> {
        self.replica.get(&user).map(|&(_, a)| a)
    }

    pub fn replicas(&self) -> impl Iterator<Item = (NodeId, Attachment)> + '_ {
        self.replica.iter().map(|(&u, &(_, a))| (u, a))
    }

    pub fn record_route(&mut self, route: InterFogRoute) {
        self.routes.insert(route.flow, route);
    }

    pub fn drop_route(&mut self, flow: FlowId) {
        self.routes.remove(&flow);
    }

    pub fn route(&self, flow: FlowId) -> Option<&InterFogRoute> {
        self.routes.get(&flow)
    }
}
