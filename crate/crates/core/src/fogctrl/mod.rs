//! The fog element's control plane: subscriber database, policy, per-slice
//! mobility contexts and charging, the abstract resource view, and the flow
//! controller.

mod controller;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataplane::{AddressPool, CacheState, Dataplane, InstalledFlow};
use crate::ids::{ClusterId, ContentId, FlowId, FogId, NodeId, OperatorId, SliceId};
use crate::slicing::{ResourceClass, SliceError, SliceManager, SliceSpec};
use crate::topology::{Attachment, Topology};

pub use controller::{
    decide, CandidateRecord, CandidateStatus, ControlInput, DecisionRecord, FlowEnds, Origin, Rule,
    RouteRequest, ScoreKey, UserEnd,
};

/// Which control functions run inside the fog. The interworking function
/// towards the core is always present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FogProfile {
    pub udf: bool,
    pub pcrf: bool,
    pub mlmf: bool,
    pub cache: bool,
    pub dhcp: bool,
}

impl Default for FogProfile {
    fn default() -> Self {
        FogProfile {
            udf: true,
            pcrf: true,
            mlmf: true,
            cache: true,
            dhcp: true,
        }
    }
}

impl FogProfile {
    pub fn cniwf(&self) -> bool {
        true
    }
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum AppClass {
    Voip,
    Web,
    Bulk,
    Content,
}

impl AppClass {
    pub const ALL: [AppClass; 4] = [AppClass::Voip, AppClass::Web, AppClass::Bulk, AppClass::Content];

    pub fn name(self) -> &'static str {
        match self {
            AppClass::Voip => "voip",
            AppClass::Web => "web",
            AppClass::Bulk => "bulk",
            AppClass::Content => "content",
        }
    }
}

impl fmt::Display for AppClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QosClass {
    RealTimeGbr,
    BestEffort,
}

impl QosClass {
    pub fn name(self) -> &'static str {
        match self {
            QosClass::RealTimeGbr => "gbr",
            QosClass::BestEffort => "be",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subscription {
    pub classes: BTreeSet<AppClass>,
    /// Largest guaranteed rate the subscriber may request, Mb/s.
    pub max_gbr: f64,
}

impl Default for Subscription {
    fn default() -> Self {
        Subscription {
            classes: AppClass::ALL.into_iter().collect(),
            max_gbr: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserRecord {
    pub user: NodeId,
    pub token: String,
    pub subscription: Subscription,
    pub operator: OperatorId,
    pub mobile: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyRule {
    pub class: AppClass,
    pub qos: QosClass,
    /// Zero for best effort.
    pub gbr: f64,
}

/// Application class to QoS mapping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pcrf {
    pub voip_gbr: f64,
}

impl Pcrf {
    pub fn rule(&self, class: AppClass) -> PolicyRule {
        match class {
            AppClass::Voip => PolicyRule {
                class,
                qos: QosClass::RealTimeGbr,
                gbr: self.voip_gbr,
            },
            _ => PolicyRule {
                class,
                qos: QosClass::BestEffort,
                gbr: 0.0,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    User(NodeId),
    Content(ContentId),
    External,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::User(n) => write!(f, "user:{}", n.0),
            Endpoint::Content(c) => write!(f, "content:{}", c.0),
            Endpoint::External => f.write_str("external"),
        }
    }
}

impl std::str::FromStr for Endpoint {
    type Err = String;

    /// Inverse of `Display`: `user:8`, `content:3` or `external`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("endpoint {s:?} is not user:N, content:N or external");
        match s.split_once(':') {
            None if s == "external" => Ok(Endpoint::External),
            Some(("user", n)) => n.parse().map(|n| Endpoint::User(NodeId(n))).map_err(|_| bad()),
            Some(("content", n)) => n
                .parse()
                .map(|n| Endpoint::Content(ContentId(n)))
                .map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub id: FlowId,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub class: AppClass,
    /// Requested rate, Mb/s. Guaranteed flows use the policy rate instead.
    pub demand: f64,
    pub operator: OperatorId,
    pub start: crate::engine::SimTime,
}

impl FlowSpec {
    pub fn users(&self) -> Vec<NodeId> {
        [self.src, self.dst]
            .into_iter()
            .filter_map(|e| match e {
                Endpoint::User(u) => Some(u),
                _ => None,
            })
            .collect()
    }

    /// The user whose subscription governs the flow.
    pub fn subscriber(&self) -> Option<NodeId> {
        self.users().first().copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    NoCoverage,
    GbrAdmissionFail,
    NotAuthenticated,
    PolicyDenied,
    NoRoute,
    FogIsolated,
    /// A control function hosted in the cloud could not be reached.
    CloudUnreachable,
    /// The fog's address pool had no free address for a user endpoint.
    AddressExhausted,
}

impl RejectReason {
    pub const ALL: [RejectReason; 8] = [
        RejectReason::NoCoverage,
        RejectReason::GbrAdmissionFail,
        RejectReason::NotAuthenticated,
        RejectReason::PolicyDenied,
        RejectReason::NoRoute,
        RejectReason::FogIsolated,
        RejectReason::CloudUnreachable,
        RejectReason::AddressExhausted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RejectReason::NoCoverage => "NoCoverage",
            RejectReason::GbrAdmissionFail => "GbrAdmissionFail",
            RejectReason::NotAuthenticated => "NotAuthenticated",
            RejectReason::PolicyDenied => "PolicyDenied",
            RejectReason::NoRoute => "NoRoute",
            RejectReason::FogIsolated => "FogIsolated",
            RejectReason::CloudUnreachable => "CloudUnreachable",
            RejectReason::AddressExhausted => "AddressExhausted",
        }
    }

    pub fn from_name(s: &str) -> Option<RejectReason> {
        RejectReason::ALL.into_iter().find(|r| r.name() == s)
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FlowDecision {
    Accepted {
        path: crate::dataplane::FlowPath,
        qos: QosClass,
        slice: SliceId,
    },
    Rejected(RejectReason),
}

impl FlowDecision {
    pub fn is_accepted(&self) -> bool {
        matches!(self, FlowDecision::Accepted { .. })
    }

    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            FlowDecision::Rejected(r) => Some(*r),
            FlowDecision::Accepted { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub qos: QosClass,
    pub gbr: f64,
    pub slice: SliceId,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthError {
    #[error("credentials rejected for {0}")]
    BadCredentials(NodeId),
    #[error("subscriber database in the cloud is unreachable")]
    CloudUnreachable,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("unknown user {0}")]
    UnknownUser(NodeId),
    #[error("endpoint {0} does not resolve")]
    UnknownEndpoint(Endpoint),
}

/// Per-user mobility context held by the user's slice.
#[derive(Clone, Debug, PartialEq)]
pub struct UserContext {
    pub user: NodeId,
    pub location: Attachment,
    pub cluster: Option<ClusterId>,
    pub flows: BTreeSet<FlowId>,
}

/// Control state instantiated separately for each slice.
#[derive(Clone, Debug, Default)]
pub struct Racf {
    contexts: BTreeMap<NodeId, UserContext>,
    charging: BTreeMap<AppClass, u64>,
    flows: BTreeSet<FlowId>,
}

impl Racf {
    pub fn context(&self, user: NodeId) -> Option<&UserContext> {
        self.contexts.get(&user)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &UserContext> {
        self.contexts.values()
    }

    pub fn charging(&self, class: AppClass) -> u64 {
        self.charging.get(&class).copied().unwrap_or(0)
    }

    pub fn flows(&self) -> &BTreeSet<FlowId> {
        &self.flows
    }
}

/// One resource class in the abstract view.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RatView {
    pub total: f64,
    pub reserved_gbr: f64,
    pub best_effort_load: f64,
    pub healthy: bool,
}

impl RatView {
    pub fn utilization(&self) -> f64 {
        if self.total > 0.0 {
            (self.reserved_gbr + self.best_effort_load) / self.total
        } else {
            0.0
        }
    }
}

/// Aggregate capacity and load per resource class, indexed by
/// [`ResourceClass::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AbstractResourceView {
    pub rats: [RatView; 4],
}

impl AbstractResourceView {
    pub fn get(&self, class: ResourceClass) -> &RatView {
        &self.rats[class.index()]
    }
}

/// Builds a view over the fog's links from raw data-plane state; `select`
/// picks which installed flows count towards the loads.
pub fn aggregate_view(
    fog: FogId,
    topo: &Topology,
    dp: &Dataplane,
    select: impl Fn(&InstalledFlow) -> bool,
) -> AbstractResourceView {
    let gbr = dp.link_totals(topo, |f| {
        if select(f) {
            f.reservation.gbr().unwrap_or(0.0)
        } else {
            0.0
        }
    });
    let be = dp.link_totals(topo, |f| {
        if select(f) && f.reservation.gbr().is_none() {
            f.rate
        } else {
            0.0
        }
    });
    let mut view = AbstractResourceView::default();
    for (i, link) in topo.links().iter().enumerate() {
        let Some(class) = ResourceClass::of_link(link.class) else {
            continue;
        };
        if topo.link_fog(link) != Some(fog) {
            continue;
        }
        let rat = &mut view.rats[class.index()];
        rat.reserved_gbr += gbr[i];
        rat.best_effort_load += be[i];
        if dp.usable(link) {
            rat.total += link.capacity;
            rat.healthy = true;
        }
    }
    view
}

/// State of one fog element.
#[derive(Clone, Debug)]
pub struct Fog {
    pub id: FogId,
    pub profile: FogProfile,
    pub pcrf: Pcrf,
    udf: BTreeMap<NodeId, UserRecord>,
    sessions: BTreeSet<NodeId>,
    pub smf: SliceManager,
    racfs: BTreeMap<SliceId, Racf>,
    pub cache: Option<CacheState>,
    pub pool: AddressPool,
}

impl Fog {
    pub fn new(
        id: FogId,
        profile: FogProfile,
        pcrf: Pcrf,
        cache_capacity: usize,
        pool_size: u32,
    ) -> Self {
        Fog {
            id,
            profile,
            pcrf,
            udf: BTreeMap::new(),
            sessions: BTreeSet::new(),
            smf: SliceManager::new([0.0; 4]),
            racfs: BTreeMap::new(),
            cache: profile.cache.then(|| CacheState::new(cache_capacity)),
            pool: AddressPool::new(id, pool_size),
        }
    }

    /// Registers a slice and its own control-function instance set.
    pub fn create_slice(&mut self, spec: SliceSpec) -> Result<SliceId, SliceError> {
        let id = self.smf.create_slice(spec)?;
        self.racfs.insert(id, Racf::default());
        Ok(id)
    }

    pub fn racf(&self, slice: SliceId) -> Result<&Racf, SliceError> {
        self.racfs.get(&slice).ok_or(SliceError::UnknownSlice(slice))
    }

    pub fn add_user(&mut self, record: UserRecord) {
        self.udf.insert(record.user, record);
    }

    pub fn record(&self, user: NodeId) -> Option<&UserRecord> {
        self.udf.get(&user)
    }

    pub fn records(&self) -> impl Iterator<Item = &UserRecord> {
        self.udf.values()
    }

    pub fn has_session(&self, user: NodeId) -> bool {
        self.sessions.contains(&user)
    }

    /// Verifies a presented token. A cloud-hosted database needs the cloud.
    pub fn authenticate_user(
        &mut self,
        user: NodeId,
        token: &str,
        cloud_reachable: bool,
    ) -> Result<(), AuthError> {
        if !self.profile.udf && !cloud_reachable {
            return Err(AuthError::CloudUnreachable);
        }
        match self.udf.get(&user) {
            Some(r) if r.token == token => {
                self.sessions.insert(user);
                Ok(())
            }
            _ => Err(AuthError::BadCredentials(user)),
        }
    }

    pub fn slice_of_user(&self, user: NodeId) -> Option<SliceId> {
        let op = &self.udf.get(&user)?.operator;
        self.smf.slice_of_operator(op)
    }

    /// Application class plus subscription to QoS class and slice.
    pub fn classify_flow(
        &self,
        spec: &FlowSpec,
        cloud_reachable: bool,
    ) -> Result<Classification, RejectReason> {
        if !self.profile.pcrf && !cloud_reachable {
            return Err(RejectReason::CloudUnreachable);
        }
        let user = spec.subscriber().ok_or(RejectReason::PolicyDenied)?;
        if !self.has_session(user) {
            return Err(RejectReason::NotAuthenticated);
        }
        let record = self.udf.get(&user).ok_or(RejectReason::NotAuthenticated)?;
        if record.operator != spec.operator || !record.subscription.classes.contains(&spec.class) {
            return Err(RejectReason::PolicyDenied);
        }
        let rule = self.pcrf.rule(spec.class);
        if rule.qos == QosClass::RealTimeGbr && rule.gbr > record.subscription.max_gbr {
            return Err(RejectReason::PolicyDenied);
        }
        let slice = self
            .smf
            .slice_of_operator(&record.operator)
            .ok_or(RejectReason::PolicyDenied)?;
        Ok(Classification {
            qos: rule.qos,
            gbr: rule.gbr,
            slice,
        })
    }

    /// True iff both endpoints resolve inside this fog: two of its users, or
    /// one of its users and content resident in its cache.
    pub fn is_local_flow(&self, topo: &Topology, spec: &FlowSpec) -> Result<bool, ControlError> {
        let resolve = |e: Endpoint| -> Result<bool, ControlError> {
            match e {
                Endpoint::User(u) => {
                    if topo.kind(u) != Some(crate::topology::NodeKind::User) {
                        return Err(ControlError::UnknownEndpoint(e));
                    }
                    Ok(topo.fog_of(u) == Some(self.id))
                }
                Endpoint::Content(c) => Ok(self.cache.as_ref().is_some_and(|cache| cache.contains(c))),
                Endpoint::External => Ok(false),
            }
        };
        let (a, b) = (resolve(spec.src)?, resolve(spec.dst)?);
        Ok(a && b)
    }

    /// Creates the user's mobility context in its slice, if missing.
    pub fn attach_user(&mut self, topo: &Topology, user: NodeId, location: Attachment) -> Result<(), ControlError> {
        let slice = self.slice_of_user(user).ok_or(ControlError::UnknownUser(user))?;
        let racf = self.racfs.get_mut(&slice).ok_or(ControlError::UnknownUser(user))?;
        racf.contexts.entry(user).or_insert_with(|| UserContext {
            user,
            location,
            cluster: location.wlan_ap.and_then(|ap| topo.cluster_of_ap(ap)).map(|c| c.id),
            flows: BTreeSet::new(),
        });
        Ok(())
    }

    fn context_mut(&mut self, user: NodeId) -> Result<&mut UserContext, ControlError> {
        let slice = self.slice_of_user(user).ok_or(ControlError::UnknownUser(user))?;
        self.racfs
            .get_mut(&slice)
            .and_then(|r| r.contexts.get_mut(&user))
            .ok_or(ControlError::UnknownUser(user))
    }

    /// The user's current attachment, looked up through its own slice.
    pub fn locate(&self, user: NodeId) -> Option<Attachment> {
        let slice = self.slice_of_user(user)?;
        self.racfs.get(&slice)?.contexts.get(&user).map(|c| c.location)
    }

    pub fn user_flows(&self, user: NodeId) -> Vec<FlowId> {
        self.slice_of_user(user)
            .and_then(|s| self.racfs.get(&s))
            .and_then(|r| r.contexts.get(&user))
            .map(|c| c.flows.iter().copied().collect())
            .unwrap_or_default()
    }

    pub fn update_location(
        &mut self,
        topo: &Topology,
        user: NodeId,
        location: Attachment,
    ) -> Result<(), ControlError> {
        let ctx = self.context_mut(user)?;
        ctx.location = location;
        ctx.cluster = location
            .wlan_ap
            .and_then(|ap| topo.cluster_of_ap(ap))
            .map(|c| c.id);
        Ok(())
    }

    /// Records an active flow against its slice and the given user contexts.
    pub fn track_flow(&mut self, slice: SliceId, flow: FlowId, users: &[NodeId]) {
        if let Some(r) = self.racfs.get_mut(&slice) {
            r.flows.insert(flow);
        }
        for &u in users {
            if let Ok(ctx) = self.context_mut(u) {
                ctx.flows.insert(flow);
            }
        }
    }

    pub fn untrack_flow(&mut self, flow: FlowId) {
        for r in self.racfs.values_mut() {
            r.flows.remove(&flow);
            for ctx in r.contexts.values_mut() {
                ctx.flows.remove(&flow);
            }
        }
    }

    pub fn charge(&mut self, slice: SliceId, class: AppClass) {
        if let Some(r) = self.racfs.get_mut(&slice) {
            *r.charging.entry(class).or_insert(0) += 1;
        }
    }

    pub fn rat_abstract_view(&self, topo: &Topology, dp: &Dataplane) -> AbstractResourceView {
        aggregate_view(self.id, topo, dp, |_| true)
    }

    /// The slice's view: capacity it may plan against (grant plus unlent
    /// reserve) and only its own load.
    pub fn per_slice_view(
        &self,
        slice: SliceId,
        topo: &Topology,
        dp: &Dataplane,
    ) -> Result<AbstractResourceView, SliceError> {
        let runtime = self.smf.runtime(slice)?;
        let mut view = aggregate_view(self.id, topo, dp, |f| f.slice == slice);
        for class in ResourceClass::ALL {
            view.rats[class.index()].total = runtime.class(class).available();
        }
        Ok(view)
    }

    /// Per-class demand of each slice: rates requested on the fog's links.
    pub fn slice_demands(&self, topo: &Topology, dp: &Dataplane) -> BTreeMap<SliceId, [f64; 4]> {
        let mut out: BTreeMap<SliceId, [f64; 4]> =
            self.smf.slices().map(|s| (s.id, [0.0; 4])).collect();
        for f in dp.flows() {
            let Some(d) = out.get_mut(&f.slice) else {
                continue;
            };
            for &l in &f.path.links {
                let link = topo.link(l).expect("installed link exists");
                if topo.link_fog(link) != Some(self.id) {
                    continue;
                }
                if let Some(class) = ResourceClass::of_link(link.class) {
                    d[class.index()] += f.reservation.demand();
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests;
