//! Composition of topology, data plane, fog controllers and the cloud into
//! one network that reacts to flow requests, departures, mobility and
//! faults.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::cloudctrl::{Cloud, Connectivity, Delta, InterFogRoute, SyncError};
use crate::dataplane::{
    mesh_route, CacheOutcome, Dataplane, DataplaneError, DhcpError, FlowPath, Locality,
    Reservation,
};
use crate::engine::{
    canonical_link_totals, clamp_to_capacity, max_min_fair, Demand, EngineError, SimTime,
};
use crate::fogctrl::{
    decide, AuthError, CandidateRecord, ControlInput, Endpoint, FlowEnds, FlowSpec, Fog,
    FogProfile, Origin, Pcrf, QosClass, RejectReason, RouteRequest, Rule, UserEnd, UserRecord,
};
use crate::ids::{FlowId, FogId, LinkId, NodeId, SliceId};
use crate::slicing::{divide, ResourceClass, SliceError, SliceSpec};
use crate::topology::{Attachment, Link, LinkClass, LinkState, NodeKind, Topology};

/// Per-fog deployment options.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FogSetup {
    pub profile: FogProfile,
    pub cache_capacity: usize,
    pub pool_size: u32,
}

impl Default for FogSetup {
    fn default() -> Self {
        FogSetup {
            profile: FogProfile::default(),
            cache_capacity: 10,
            pool_size: 1024,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NetworkSetup {
    pub topo: Topology,
    pub fogs: BTreeMap<FogId, FogSetup>,
    pub slices: Vec<SliceSpec>,
    /// One record per user; users without one cannot authenticate.
    pub users: Vec<UserRecord>,
    /// Token each user device presents; defaults to the stored one.
    pub presented: BTreeMap<NodeId, String>,
    pub voip_gbr: f64,
    /// Round trip to cloud-hosted control functions, ms.
    pub cloud_rtt_ms: u64,
    /// Control traffic per WLAN AP, reserved along its middle-mile route.
    pub control_overhead: f64,
}

impl NetworkSetup {
    pub fn new(topo: Topology, slices: Vec<SliceSpec>, users: Vec<UserRecord>) -> Self {
        NetworkSetup {
            topo,
            fogs: BTreeMap::new(),
            slices,
            users,
            presented: BTreeMap::new(),
            voip_gbr: 0.1,
            cloud_rtt_ms: 40,
            control_overhead: 0.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("endpoint {0} does not resolve")]
    UnknownEndpoint(Endpoint),
    #[error("flow {0} has no user endpoint or connects a user to itself")]
    MalformedFlow(FlowId),
    #[error("flow {0} is already known")]
    DuplicateFlow(FlowId),
    #[error("unknown user {0}")]
    UnknownUser(NodeId),
    #[error("attachment {att} is inconsistent with the access links of {user}")]
    InconsistentAttachment { user: NodeId, att: Attachment },
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no pending control request for {0}")]
    NotPending(FlowId),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Dataplane(#[from] DataplaneError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecisionKind {
    Request,
    Reroute,
}

impl DecisionKind {
    pub fn name(self) -> &'static str {
        match self {
            DecisionKind::Request => "request",
            DecisionKind::Reroute => "reroute",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Accepted {
        path: FlowPath,
        qos: QosClass,
        slice: SliceId,
        latency: f64,
    },
    Rejected(RejectReason),
}

/// Something the network did that belongs in the logs.
#[derive(Clone, Debug, PartialEq)]
pub enum NetEvent {
    Decided {
        time: SimTime,
        flow: FlowId,
        kind: DecisionKind,
        rule: Rule,
        candidates: Vec<CandidateRecord>,
        outcome: Outcome,
        cache: Option<CacheOutcome>,
    },
    Terminated {
        time: SimTime,
        flow: FlowId,
        reason: RejectReason,
    },
    Departed {
        time: SimTime,
        flow: FlowId,
    },
    Connectivity {
        time: SimTime,
        fog: FogId,
        state: Connectivity,
    },
    /// The fog has deltas to push; a sync round trip should be scheduled.
    SyncRequested {
        fog: FogId,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RequestStatus {
    Decided,
    /// A cloud-hosted control function answers at the given time.
    Pending { ready_at: SimTime },
}

/// Control-plane facts about an admitted flow, kept for reroutes.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveFlow {
    pub spec: FlowSpec,
    pub fog: FogId,
    pub qos: QosClass,
    pub gbr: Option<f64>,
    pub slice: SliceId,
    pub prefer_local: bool,
    pub origins: Vec<Origin>,
    pub locality: Locality,
}

pub struct Network {
    pub topo: Topology,
    pub dp: Dataplane,
    pub fogs: BTreeMap<FogId, Fog>,
    pub cloud: Cloud,
    records: HashMap<NodeId, (FogId, bool)>,
    presented: BTreeMap<NodeId, String>,
    cloud_rtt_ms: u64,
    overhead: Vec<f64>,
    active: BTreeMap<FlowId, ActiveFlow>,
    pending: BTreeMap<FlowId, FlowSpec>,
    sync_outstanding: BTreeSet<FogId>,
}

impl Network {
    pub fn new(setup: NetworkSetup) -> Result<Network, NetworkError> {
        let topo = setup.topo;
        let pcrf = Pcrf {
            voip_gbr: setup.voip_gbr,
        };
        let mut fogs = BTreeMap::new();
        for fog in topo.fogs() {
            let fs = setup.fogs.get(&fog).copied().unwrap_or_default();
            let mut f = Fog::new(fog, fs.profile, pcrf, fs.cache_capacity, fs.pool_size);
            for s in &setup.slices {
                f.create_slice(s.clone())?;
            }
            fogs.insert(fog, f);
        }
        let mut cloud = Cloud::new(&topo);
        let mut records = HashMap::new();
        for rec in setup.users {
            let user = rec.user;
            if topo.kind(user) != Some(NodeKind::User) {
                return Err(NetworkError::UnknownUser(user));
            }
            let fog = topo.fog_of(user).ok_or(NetworkError::UnknownUser(user))?;
            records.insert(user, (fog, rec.mobile));
            let f = fogs.get_mut(&fog).expect("fog of a user exists");
            f.add_user(rec);
            let home = topo.home_attachment(user);
            f.attach_user(&topo, user, home)
                .map_err(|_| NetworkError::UnknownUser(user))?;
            cloud.seed_replica(user, home);
        }

        let mut overhead = vec![0.0; topo.links().len()];
        if setup.control_overhead > 0.0 {
            for ap in topo.nodes_of_kind(NodeKind::WlanAP) {
                let Some(pop) = topo.fog_of(ap).and_then(|f| topo.pop_of(f)) else {
                    continue;
                };
                if let Ok((_, links)) = mesh_route(&topo, pop, ap, |_| true) {
                    for l in links {
                        overhead[topo.link_idx(l).unwrap()] += setup.control_overhead;
                    }
                }
            }
        }

        let mut net = Network {
            topo,
            dp: Dataplane::new(),
            fogs,
            cloud,
            records,
            presented: setup.presented,
            cloud_rtt_ms: setup.cloud_rtt_ms,
            overhead,
            active: BTreeMap::new(),
            pending: BTreeMap::new(),
            sync_outstanding: BTreeSet::new(),
        };
        net.recompute()?;
        Ok(net)
    }

    pub fn active(&self) -> &BTreeMap<FlowId, ActiveFlow> {
        &self.active
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn is_mobile(&self, user: NodeId) -> bool {
        self.records.get(&user).is_some_and(|r| r.1)
    }

    pub fn fog(&self, fog: FogId) -> Option<&Fog> {
        self.fogs.get(&fog)
    }

    /// Usable capacity per link: zero when unusable, less control overhead.
    pub fn capacities(&self) -> Vec<f64> {
        self.topo
            .links()
            .iter()
            .zip(&self.overhead)
            .map(|(l, o)| {
                if self.dp.usable(l) {
                    (l.capacity - o).max(0.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn share(&self, link: &Link, slice: SliceId) -> f64 {
        match (ResourceClass::of_link(link.class), self.topo.link_fog(link)) {
            (Some(class), Some(fog)) => self
                .fogs
                .get(&fog)
                .map_or(0.0, |f| f.smf.share(slice, class)),
            _ => 1.0,
        }
    }

    fn user_fog(&self, user: NodeId) -> Result<FogId, NetworkError> {
        self.records
            .get(&user)
            .map(|r| r.0)
            .ok_or(NetworkError::UnknownUser(user))
    }

    fn check_spec(&self, spec: &FlowSpec) -> Result<FogId, NetworkError> {
        for e in [spec.src, spec.dst] {
            if let Endpoint::User(u) = e {
                if self.topo.kind(u) != Some(NodeKind::User) {
                    return Err(NetworkError::UnknownEndpoint(e));
                }
                self.user_fog(u)?;
            }
        }
        let users = spec.users();
        if users.is_empty() || (users.len() == 2 && users[0] == users[1]) {
            return Err(NetworkError::MalformedFlow(spec.id));
        }
        self.user_fog(users[0])
    }

    /// Fogs whose cloud-hosted functions this request depends on.
    fn cloud_dependencies(&self, spec: &FlowSpec, home: FogId) -> BTreeSet<FogId> {
        let mut deps = BTreeSet::new();
        let p = self.fogs[&home].profile;
        if !p.pcrf || !p.mlmf {
            deps.insert(home);
        }
        for u in spec.users() {
            let fog = self.records[&u].0;
            let f = &self.fogs[&fog];
            let needs_auth = !f.has_session(u) && !f.profile.udf;
            let needs_addr = f.pool.address_of(u).is_none() && !f.profile.dhcp;
            if needs_auth || needs_addr {
                deps.insert(fog);
            }
        }
        deps
    }

    /// Admission entry point. Requests that depend on cloud-hosted control
    /// functions complete after one cloud round trip via [`Self::complete_request`].
    pub fn request(
        &mut self,
        spec: FlowSpec,
        now: SimTime,
    ) -> Result<(RequestStatus, Vec<NetEvent>), NetworkError> {
        if self.active.contains_key(&spec.id) || self.pending.contains_key(&spec.id) {
            return Err(NetworkError::DuplicateFlow(spec.id));
        }
        let home = self.check_spec(&spec)?;
        let deps = self.cloud_dependencies(&spec, home);
        if deps.is_empty() {
            let events = self.decide_request(spec, now)?;
            return Ok((RequestStatus::Decided, events));
        }
        if deps.iter().any(|&f| !self.cloud.is_connected(f)) {
            let ev = rejected(now, spec.id, RejectReason::CloudUnreachable);
            return Ok((RequestStatus::Decided, vec![ev]));
        }
        self.pending.insert(spec.id, spec);
        Ok((
            RequestStatus::Pending {
                ready_at: now + self.cloud_rtt_ms,
            },
            Vec::new(),
        ))
    }

    pub fn complete_request(
        &mut self,
        flow: FlowId,
        now: SimTime,
    ) -> Result<Vec<NetEvent>, NetworkError> {
        let spec = self
            .pending
            .remove(&flow)
            .ok_or(NetworkError::NotPending(flow))?;
        let home = self.check_spec(&spec)?;
        if self
            .cloud_dependencies(&spec, home)
            .iter()
            .any(|&f| !self.cloud.is_connected(f))
        {
            return Ok(vec![rejected(now, flow, RejectReason::CloudUnreachable)]);
        }
        self.decide_request(spec, now)
    }

    /// Authenticates a user lazily and binds an address.
    fn ensure_session(&mut self, user: NodeId) -> Result<(), RejectReason> {
        let fog = self.records[&user].0;
        let reachable = self.cloud.is_connected(fog);
        let f = self.fogs.get_mut(&fog).expect("user fog exists");
        if !f.has_session(user) {
            let token = match self.presented.get(&user) {
                Some(t) => t.clone(),
                None => f.record(user).map(|r| r.token.clone()).unwrap_or_default(),
            };
            f.authenticate_user(user, &token, reachable)
                .map_err(|e| match e {
                    AuthError::BadCredentials(_) => RejectReason::NotAuthenticated,
                    AuthError::CloudUnreachable => RejectReason::CloudUnreachable,
                })?;
        }
        if f.pool.address_of(user).is_none() {
            if !f.profile.dhcp && !reachable {
                return Err(RejectReason::CloudUnreachable);
            }
            f.pool.assign_address(user, true).map_err(|e| match e {
                DhcpError::PoolExhausted(_) => RejectReason::AddressExhausted,
                DhcpError::NotAuthenticated(_) => RejectReason::NotAuthenticated,
            })?;
        }
        Ok(())
    }

    fn user_end(&self, user: NodeId) -> UserEnd {
        let (fog, mobile) = self.records[&user];
        UserEnd {
            node: user,
            fog,
            attachment: self.fogs[&fog].locate(user).unwrap_or_default(),
            mobile,
        }
    }

    fn ends(&self, spec: &FlowSpec, origins: &[Origin]) -> FlowEnds {
        match (spec.src, spec.dst) {
            (Endpoint::User(a), Endpoint::User(b)) => FlowEnds::Users {
                src: self.user_end(a),
                dst: self.user_end(b),
            },
            (Endpoint::User(u), _) => FlowEnds::Network {
                origins: origins.to_vec(),
                user: self.user_end(u),
                user_is_source: true,
            },
            (_, Endpoint::User(u)) => FlowEnds::Network {
                origins: origins.to_vec(),
                user: self.user_end(u),
                user_is_source: false,
            },
            _ => unreachable!("checked: at least one user endpoint"),
        }
    }

    fn run_controller(&self, req: &RouteRequest) -> crate::fogctrl::DecisionRecord {
        let caps = self.capacities();
        let share = |l: &Link, s: SliceId| self.share(l, s);
        let connected = |f: FogId| self.cloud.is_connected(f);
        let input = ControlInput {
            topo: &self.topo,
            dp: &self.dp,
            capacity: &caps,
            share: &share,
            connected: &connected,
        };
        decide(&input, req)
    }

    fn decide_request(
        &mut self,
        spec: FlowSpec,
        now: SimTime,
    ) -> Result<Vec<NetEvent>, NetworkError> {
        let flow = spec.id;
        let home = self.check_spec(&spec)?;
        for u in spec.users() {
            if let Err(reason) = self.ensure_session(u) {
                return Ok(vec![rejected(now, flow, reason)]);
            }
        }
        let class = match self.fogs[&home].classify_flow(&spec, self.cloud.is_connected(home)) {
            Ok(c) => c,
            Err(reason) => return Ok(vec![rejected(now, flow, reason)]),
        };
        let prefer_local = self.fogs[&home]
            .is_local_flow(&self.topo, &spec)
            .map_err(|_| NetworkError::UnknownEndpoint(spec.src))?;

        let content = [spec.src, spec.dst].into_iter().find_map(|e| match e {
            Endpoint::Content(c) => Some(c),
            _ => None,
        });
        let mut cache = None;
        let origins = match content {
            Some(c) => {
                let user_fog = self.user_fog(spec.subscriber().expect("checked"))?;
                match self.fogs.get_mut(&user_fog).and_then(|f| f.cache.as_mut()) {
                    Some(store) => {
                        let outcome = store.lookup(c, now);
                        cache = Some(outcome);
                        if outcome == CacheOutcome::Hit {
                            vec![Origin::FogCache(user_fog), Origin::Gateway]
                        } else {
                            vec![Origin::Gateway]
                        }
                    }
                    None => vec![Origin::Gateway],
                }
            }
            None => vec![Origin::Gateway],
        };
        let ends = self.ends(&spec, &origins);
        let gbr = (class.qos == QosClass::RealTimeGbr).then_some(class.gbr);
        let req = RouteRequest {
            flow,
            ends,
            gbr,
            slice: class.slice,
            prefer_local,
        };
        let record = self.run_controller(&req);
        let outcome = match record.outcome {
            Ok(path) => {
                let reservation = match gbr {
                    Some(g) => Reservation::Gbr(g),
                    None => Reservation::BestEffort {
                        demand: spec.demand,
                    },
                };
                let latency = self.topo.path_latency(&path.links);
                self.install(&path, class.slice, reservation, &spec)?;
                if let (Some(c), Some(CacheOutcome::Miss)) = (content, cache) {
                    let user_fog = self.user_fog(spec.subscriber().expect("checked"))?;
                    if let Some(store) = self.fogs.get_mut(&user_fog).and_then(|f| f.cache.as_mut()) {
                        store.insert(c, now);
                    }
                }
                self.fogs
                    .get_mut(&home)
                    .expect("home fog")
                    .charge(class.slice, spec.class);
                self.active.insert(
                    flow,
                    ActiveFlow {
                        spec,
                        fog: home,
                        qos: class.qos,
                        gbr,
                        slice: class.slice,
                        prefer_local,
                        origins,
                        locality: path.locality,
                    },
                );
                self.recompute()?;
                Outcome::Accepted {
                    path,
                    qos: class.qos,
                    slice: class.slice,
                    latency,
                }
            }
            Err(reason) => Outcome::Rejected(reason),
        };
        Ok(vec![NetEvent::Decided {
            time: now,
            flow,
            kind: DecisionKind::Request,
            rule: record.rule,
            candidates: record.candidates,
            outcome,
            cache,
        }])
    }

    fn install(
        &mut self,
        path: &FlowPath,
        slice: SliceId,
        reservation: Reservation,
        spec: &FlowSpec,
    ) -> Result<(), NetworkError> {
        self.dp
            .install_path(&self.topo, path.clone(), slice, reservation)?;
        let users = spec.users();
        for &u in &users {
            let fog = self.records[&u].0;
            self.fogs.get_mut(&fog).expect("fog").track_flow(slice, path.flow, &[u]);
        }
        let fogs: BTreeSet<FogId> = users.iter().map(|u| self.records[u].0).collect();
        if fogs.len() == 2 {
            let v: Vec<FogId> = fogs.into_iter().collect();
            let (src_fog, dst_fog) = if self.records[&users[0]].0 == v[0] {
                (v[0], v[1])
            } else {
                (v[1], v[0])
            };
            self.cloud.record_route(InterFogRoute {
                flow: path.flow,
                src_fog,
                dst_fog,
                nodes: path.nodes.clone(),
                links: path.links.clone(),
            });
        }
        Ok(())
    }

    fn forget(&mut self, flow: FlowId) {
        for f in self.fogs.values_mut() {
            f.untrack_flow(flow);
        }
        self.cloud.drop_route(flow);
        self.active.remove(&flow);
    }

    /// Normal end of a flow's holding time. Flows already terminated are ignored.
    pub fn depart(&mut self, flow: FlowId, now: SimTime) -> Result<Vec<NetEvent>, NetworkError> {
        if !self.active.contains_key(&flow) {
            self.pending.remove(&flow);
            return Ok(Vec::new());
        }
        self.dp.remove_path(flow)?;
        self.forget(flow);
        self.recompute()?;
        Ok(vec![NetEvent::Departed { time: now, flow }])
    }

    fn terminate(&mut self, flow: FlowId, reason: RejectReason, now: SimTime) -> NetEvent {
        let _ = self.dp.remove_path(flow);
        self.forget(flow);
        NetEvent::Terminated {
            time: now,
            flow,
            reason,
        }
    }

    /// Removes a flow's path and re-runs the controller on current state.
    /// The flow keeps its classification and content origin.
    fn reroute(&mut self, flow: FlowId, now: SimTime) -> Result<Vec<NetEvent>, NetworkError> {
        let Some(af) = self.active.get(&flow).cloned() else {
            return Ok(Vec::new());
        };
        let old = self.dp.remove_path(flow)?;
        let ends = self.ends(&af.spec, &af.origins);
        let req = RouteRequest {
            flow,
            ends,
            gbr: af.gbr,
            slice: af.slice,
            prefer_local: af.prefer_local,
        };
        let record = self.run_controller(&req);
        let mut events = Vec::new();
        match record.outcome {
            Ok(path) => {
                let latency = self.topo.path_latency(&path.links);
                self.dp
                    .install_path(&self.topo, path.clone(), af.slice, old.reservation)?;
                if let Some(a) = self.active.get_mut(&flow) {
                    a.locality = path.locality;
                }
                if let Some(r) = self.cloud.route(flow).cloned() {
                    self.cloud.record_route(InterFogRoute {
                        nodes: path.nodes.clone(),
                        links: path.links.clone(),
                        ..r
                    });
                }
                events.push(NetEvent::Decided {
                    time: now,
                    flow,
                    kind: DecisionKind::Reroute,
                    rule: record.rule,
                    candidates: record.candidates,
                    outcome: Outcome::Accepted {
                        path,
                        qos: af.qos,
                        slice: af.slice,
                        latency,
                    },
                    cache: None,
                });
            }
            Err(reason) => {
                events.push(NetEvent::Decided {
                    time: now,
                    flow,
                    kind: DecisionKind::Reroute,
                    rule: record.rule,
                    candidates: record.candidates,
                    outcome: Outcome::Rejected(reason),
                    cache: None,
                });
                // The path is already removed.
                self.forget(flow);
                events.push(NetEvent::Terminated {
                    time: now,
                    flow,
                    reason,
                });
            }
        }
        Ok(events)
    }

    fn reroute_all(
        &mut self,
        flows: Vec<FlowId>,
        now: SimTime,
        events: &mut Vec<NetEvent>,
    ) -> Result<(), NetworkError> {
        for flow in flows {
            events.extend(self.reroute(flow, now)?);
        }
        Ok(())
    }

    pub fn set_link_state(
        &mut self,
        link: LinkId,
        up: bool,
        now: SimTime,
    ) -> Result<Vec<NetEvent>, NetworkError> {
        let l = self.topo.link(link).ok_or(NetworkError::UnknownLink(link))?;
        let class = l.class;
        let fog = self.topo.link_fog(l);
        let state = if up { LinkState::Up } else { LinkState::Down };
        let mut events = Vec::new();
        if !self.topo.set_link_state(link, state) {
            return Ok(events);
        }
        if class == LinkClass::Backhaul {
            if let Some(fog) = fog {
                self.backhaul_transition(fog, now, &mut events);
            }
        }
        if !up {
            let affected = self.dp.flows_on_link(link);
            self.reroute_all(affected, now, &mut events)?;
        }
        self.recompute()?;
        Ok(events)
    }

    fn backhaul_transition(&mut self, fog: FogId, now: SimTime, events: &mut Vec<NetEvent>) {
        let Some(state) = self.cloud.on_backhaul_change(&self.topo, fog, now) else {
            return;
        };
        events.push(NetEvent::Connectivity {
            time: now,
            fog,
            state,
        });
        match state {
            Connectivity::Isolated => {
                let doomed: Vec<FlowId> = self
                    .active
                    .iter()
                    .filter(|(_, a)| a.locality == Locality::CloudBound && self.flow_touches_fog(a, fog))
                    .map(|(&id, _)| id)
                    .collect();
                for flow in doomed {
                    events.push(self.terminate(flow, RejectReason::FogIsolated, now));
                }
                self.sync_outstanding.remove(&fog);
            }
            Connectivity::Connected => {
                if self.cloud.has_pending(fog) && self.sync_outstanding.insert(fog) {
                    events.push(NetEvent::SyncRequested { fog });
                }
            }
        }
    }

    fn flow_touches_fog(&self, a: &ActiveFlow, fog: FogId) -> bool {
        a.fog == fog
            || a.spec
                .users()
                .iter()
                .any(|u| self.records.get(u).is_some_and(|r| r.0 == fog))
    }

    pub fn set_node_state(
        &mut self,
        node: NodeId,
        up: bool,
        now: SimTime,
    ) -> Result<Vec<NetEvent>, NetworkError> {
        if self.topo.node(node).is_none() {
            return Err(NetworkError::UnknownNode(node));
        }
        let mut events = Vec::new();
        if !self.dp.set_node_up(node, up) {
            return Ok(events);
        }
        if !up {
            let affected = self.dp.flows_through_node(node);
            self.reroute_all(affected, now, &mut events)?;
        }
        self.recompute()?;
        Ok(events)
    }

    /// Moves a user and re-routes each of its active flows.
    pub fn handover(
        &mut self,
        user: NodeId,
        attachment: Attachment,
        now: SimTime,
    ) -> Result<Vec<NetEvent>, NetworkError> {
        let fog = self.user_fog(user)?;
        if !self.topo.attachment_consistent(user, &attachment) {
            return Err(NetworkError::InconsistentAttachment {
                user,
                att: attachment,
            });
        }
        let f = self.fogs.get_mut(&fog).expect("user fog");
        f.update_location(&self.topo, user, attachment)
            .map_err(|_| NetworkError::UnknownUser(user))?;
        let flows = f.user_flows(user);
        let mut events = Vec::new();
        self.cloud.queue_delta(
            fog,
            Delta {
                time: now,
                user,
                attachment,
            },
        );
        if self.cloud.is_connected(fog) && self.sync_outstanding.insert(fog) {
            events.push(NetEvent::SyncRequested { fog });
        }
        self.reroute_all(flows, now, &mut events)?;
        self.recompute()?;
        Ok(events)
    }

    /// Completes a sync round trip started by [`NetEvent::SyncRequested`].
    pub fn sync(&mut self, fog: FogId, now: SimTime) -> Result<usize, SyncError> {
        self.sync_outstanding.remove(&fog);
        self.cloud.sync_fog_state(fog, now)
    }

    /// True iff the cloud replica matches every fog's mobility contexts.
    pub fn replicas_consistent(&self) -> bool {
        self.fogs.values().all(|f| {
            f.records()
                .all(|r| f.locate(r.user) == self.cloud.replica(r.user))
        })
    }

    /// Recomputes every allocation: guaranteed flows get their rate, best
    /// effort shares what is left max-min fairly with each sliced link split
    /// between slices by entitlement and idle-capacity diversion. Also
    /// refreshes every fog's slice allocations.
    pub fn recompute(&mut self) -> Result<(), NetworkError> {
        let caps = self.capacities();
        let n = caps.len();
        let flows: Vec<(FlowId, SliceId, Reservation, Vec<usize>)> = self
            .dp
            .flows()
            .map(|f| {
                let idx = f
                    .path
                    .links
                    .iter()
                    .map(|&l| self.topo.link_idx(l).expect("installed link"))
                    .collect();
                (f.path.flow, f.slice, f.reservation, idx)
            })
            .collect();
        let links_of: Vec<&[usize]> = flows.iter().map(|f| f.3.as_slice()).collect();
        let gbr: Vec<f64> = flows.iter().map(|f| f.2.gbr().unwrap_or(0.0)).collect();
        let reserved = canonical_link_totals(n, &links_of, &gbr);
        if let Some(link) = (0..n).find(|&l| reserved[l] > caps[l]) {
            return Err(EngineError::GbrOvercommit { link }.into());
        }

        // Per-slice GBR and best-effort demand on each link.
        let mut slice_gbr: Vec<BTreeMap<SliceId, f64>> = vec![BTreeMap::new(); n];
        let mut slice_be: Vec<BTreeMap<SliceId, f64>> = vec![BTreeMap::new(); n];
        for f in &flows {
            for &l in &f.3 {
                match f.2 {
                    Reservation::Gbr(g) => *slice_gbr[l].entry(f.1).or_insert(0.0) += g,
                    Reservation::BestEffort { demand } => {
                        *slice_be[l].entry(f.1).or_insert(0.0) += demand
                    }
                }
            }
        }
        let mut vcaps = Vec::new();
        // Virtual link of each (link, slice) pair; a handful of slices per link.
        let mut vlink: Vec<Vec<(SliceId, usize)>> = vec![Vec::new(); n];
        for l in 0..n {
            if slice_be[l].is_empty() {
                continue;
            }
            let link = &self.topo.links()[l];
            let free = (caps[l] - reserved[l]).max(0.0);
            if ResourceClass::of_link(link.class).is_some() {
                let slices: Vec<SliceId> = slice_be[l].keys().copied().collect();
                let entitled: Vec<f64> = slices
                    .iter()
                    .map(|s| {
                        let g = slice_gbr[l].get(s).copied().unwrap_or(0.0);
                        (self.share(link, *s) * caps[l] - g).max(0.0)
                    })
                    .collect();
                let demand: Vec<f64> = slices.iter().map(|s| slice_be[l][s]).collect();
                for (s, d) in slices.iter().zip(divide(free, &entitled, &demand)) {
                    vlink[l].push((*s, vcaps.len()));
                    vcaps.push(d.granted);
                }
            } else {
                let v = vcaps.len();
                vcaps.push(free);
                for &s in slice_be[l].keys() {
                    vlink[l].push((s, v));
                }
            }
        }
        let be_index: Vec<usize> = (0..flows.len()).filter(|&i| flows[i].2.gbr().is_none()).collect();
        let be: Vec<Demand> = be_index
            .iter()
            .map(|&i| Demand {
                links: flows[i]
                    .3
                    .iter()
                    .map(|&l| {
                        let slot = vlink[l].iter().find(|v| v.0 == flows[i].1).expect("virtual link");
                        slot.1
                    })
                    .collect(),
                rate: flows[i].2.demand(),
            })
            .collect();
        let be_alloc = max_min_fair(&vcaps, &be);
        let mut alloc = gbr;
        for (k, &i) in be_index.iter().enumerate() {
            alloc[i] = be_alloc[k];
        }
        let adjustable: Vec<bool> = flows.iter().map(|f| f.2.gbr().is_none()).collect();
        clamp_to_capacity(&caps, &links_of, &mut alloc, &adjustable)
            .map_err(|link| EngineError::GbrOvercommit { link })?;
        for (f, rate) in flows.iter().zip(alloc) {
            self.dp.set_rate(f.0, rate);
        }

        for fog in self.fogs.values_mut() {
            let view = fog.rat_abstract_view(&self.topo, &self.dp);
            fog.smf.set_physical(view.rats.map(|r| r.total));
            let demands = fog.slice_demands(&self.topo, &self.dp);
            fog.smf.compute_slice_allocations(&demands);
        }
        Ok(())
    }

    /// Current rate of every installed flow, in id order.
    pub fn rates(&self) -> Vec<(FlowId, f64)> {
        self.dp.flows().map(|f| (f.path.flow, f.rate)).collect()
    }

    /// Drains every connected fog's delta queue; used at scenario end.
    pub fn final_sync(&mut self, now: SimTime) {
        let fogs: Vec<FogId> = self.fogs.keys().copied().collect();
        for fog in fogs {
            let _ = self.sync(fog, now);
        }
    }
}

fn rejected(time: SimTime, flow: FlowId, reason: RejectReason) -> NetEvent {
    NetEvent::Decided {
        time,
        flow,
        kind: DecisionKind::Request,
        rule: Rule::None,
        candidates: Vec::new(),
        outcome: Outcome::Rejected(reason),
        cache: None,
    }
}
