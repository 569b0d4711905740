use std::cmp::Ordering;
use std::fmt::{self, Write as _};

use crate::dataplane::{mesh_route, AccessRat, Dataplane, FlowPath, Locality};
use crate::ids::{FlowId, FogId, LinkId, NodeId, SliceId};
use crate::topology::{Attachment, Link, LinkClass, Topology};

use super::RejectReason;

/// Read-only network state the flow controller decides against.
pub struct ControlInput<'a> {
    pub topo: &'a Topology,
    pub dp: &'a Dataplane,
    /// Usable capacity per link, indexed like `topo.links()`.
    pub capacity: &'a [f64],
    /// Fraction of a link owned by a slice; 1 on unsliced links.
    pub share: &'a dyn Fn(&Link, SliceId) -> f64,
    pub connected: &'a dyn Fn(FogId) -> bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserEnd {
    pub node: NodeId,
    pub fog: FogId,
    pub attachment: Attachment,
    pub mobile: bool,
}

/// Where a network-sourced flow can be served from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    FogCache(FogId),
    Gateway,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FlowEnds {
    Users { src: UserEnd, dst: UserEnd },
    Network {
        origins: Vec<Origin>,
        user: UserEnd,
        user_is_source: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RouteRequest {
    pub flow: FlowId,
    pub ends: FlowEnds,
    pub gbr: Option<f64>,
    pub slice: SliceId,
    pub prefer_local: bool,
}

/// Ranking key; smaller is better. Compared field by field in order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreKey {
    /// 0 when the candidate satisfies the locality preference.
    pub locality: u8,
    /// User ends whose access RAT goes against their mobility preference.
    pub mobility: u32,
    /// Highest load-to-capacity ratio along the path.
    pub utilization: f64,
    pub hops: usize,
    pub nodes: Vec<NodeId>,
}

impl ScoreKey {
    fn components(&self, other: &ScoreKey) -> [Ordering; 5] {
        [
            self.locality.cmp(&other.locality),
            self.mobility.cmp(&other.mobility),
            self.utilization.total_cmp(&other.utilization),
            self.hops.cmp(&other.hops),
            self.nodes.cmp(&other.nodes),
        ]
    }

    fn first_difference(&self, other: &ScoreKey) -> Option<Rule> {
        const RULES: [Rule; 5] = [
            Rule::Locality,
            Rule::Mobility,
            Rule::Utilization,
            Rule::HopCount,
            Rule::Lexicographic,
        ];
        self.components(other)
            .iter()
            .position(|o| o.is_ne())
            .map(|i| RULES[i])
    }
}

impl Eq for ScoreKey {}

impl PartialOrd for ScoreKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScoreKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.components(other)
            .into_iter()
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

impl fmt::Display for ScoreKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.locality, self.mobility, self.utilization, self.hops
        )
    }
}

/// The scoring step that separated the winner from the runner-up.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    /// Only one candidate existed.
    Single,
    /// Only one candidate passed admission.
    Admission,
    Locality,
    Mobility,
    Utilization,
    HopCount,
    Lexicographic,
    /// Nothing was chosen.
    None,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Single => "single",
            Rule::Admission => "admission",
            Rule::Locality => "locality",
            Rule::Mobility => "mobility",
            Rule::Utilization => "utilization",
            Rule::HopCount => "hops",
            Rule::Lexicographic => "lexicographic",
            Rule::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CandidateStatus {
    Feasible(ScoreKey),
    NoRoute,
    GbrAdmissionFail,
    FogIsolated,
}

impl CandidateStatus {
    fn name(&self) -> &'static str {
        match self {
            CandidateStatus::Feasible(_) => "ok",
            CandidateStatus::NoRoute => "NoRoute",
            CandidateStatus::GbrAdmissionFail => "GbrAdmissionFail",
            CandidateStatus::FogIsolated => "FogIsolated",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateRecord {
    pub access: Vec<(NodeId, AccessRat)>,
    pub origin: Option<Origin>,
    pub path: Option<FlowPath>,
    pub status: CandidateStatus,
}

impl fmt::Display for CandidateRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, rat)) in self.access.iter().enumerate() {
            if i > 0 {
                f.write_char('+')?;
            }
            write!(f, "{}:{}", n.0, rat.name())?;
        }
        match self.origin {
            Some(Origin::FogCache(fog)) => write!(f, "@cache{}", fog.0)?,
            Some(Origin::Gateway) => f.write_str("@gw")?,
            None => {}
        }
        if let Some(p) = &self.path {
            write!(f, "[{}]", p.node_string())?;
        }
        write!(f, "={}", self.status.name())?;
        if let CandidateStatus::Feasible(k) = &self.status {
            write!(f, "({k})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord {
    pub flow: FlowId,
    pub candidates: Vec<CandidateRecord>,
    pub rule: Rule,
    pub outcome: Result<FlowPath, RejectReason>,
}

struct Ctx<'a, 'b> {
    input: &'b ControlInput<'a>,
    flow: FlowId,
    slice: SliceId,
    gbr: Option<f64>,
    /// Guaranteed reservations per link index: (flow, slice, rate) in flow order.
    reserved: Vec<Vec<(FlowId, SliceId, f64)>>,
    loads: Vec<f64>,
}

impl Ctx<'_, '_> {
    fn idx(&self, link: LinkId) -> usize {
        self.input.topo.link_idx(link).expect("known link")
    }

    fn usable(&self, link: &Link) -> bool {
        self.input.dp.usable(link)
    }

    /// Approximate guaranteed headroom for this slice; admission re-checks exactly.
    fn headroom(&self, link: &Link) -> f64 {
        let i = self.idx(link.id);
        let cap = self.input.capacity[i];
        let total: f64 = self.reserved[i].iter().map(|r| r.2).sum();
        let own: f64 = self.reserved[i]
            .iter()
            .filter(|r| r.1 == self.slice)
            .map(|r| r.2)
            .sum();
        let share = (self.input.share)(link, self.slice);
        (cap - total).min(share * cap - own)
    }

    /// Exact admission: sums in flow-id order with the new flow included.
    fn admits(&self, links: &[LinkId]) -> bool {
        let Some(g) = self.gbr else {
            return true;
        };
        links.iter().all(|&l| {
            let i = self.idx(l);
            let link = &self.input.topo.links()[i];
            let cap = self.input.capacity[i];
            let share = (self.input.share)(link, self.slice);
            let mut entries = self.reserved[i].clone();
            let pos = entries.partition_point(|e| e.0 < self.flow);
            entries.insert(pos, (self.flow, self.slice, g));
            let total = entries.iter().fold(0.0, |acc, e| acc + e.2);
            let own = entries
                .iter()
                .filter(|e| e.1 == self.slice)
                .fold(0.0, |acc, e| acc + e.2);
            total <= cap && own <= share * cap
        })
    }

    fn utilization(&self, links: &[LinkId]) -> f64 {
        links
            .iter()
            .map(|&l| {
                let i = self.idx(l);
                let cap = self.input.capacity[i];
                if cap > 0.0 {
                    self.loads[i] / cap
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    fn route(&self, a: NodeId, b: NodeId) -> Result<(Vec<NodeId>, Vec<LinkId>), CandidateStatus> {
        let topo = self.input.topo;
        mesh_route(topo, a, b, |l| self.usable(l)).map_err(|_| CandidateStatus::NoRoute)?;
        match self.gbr {
            None => Ok(mesh_route(topo, a, b, |l| self.usable(l)).expect("just routed")),
            Some(g) => mesh_route(topo, a, b, |l| self.usable(l) && self.headroom(l) >= g)
                .map_err(|_| CandidateStatus::GbrAdmissionFail),
        }
    }

    fn backhaul(&self, fog: FogId) -> Result<LinkId, CandidateStatus> {
        let topo = self.input.topo;
        let usable: Vec<&Link> = topo
            .backhaul_links(fog)
            .into_iter()
            .filter_map(|l| topo.link(l))
            .filter(|l| self.usable(l))
            .collect();
        if usable.is_empty() {
            return Err(if (self.input.connected)(fog) {
                CandidateStatus::NoRoute
            } else {
                CandidateStatus::FogIsolated
            });
        }
        let pick = match self.gbr {
            Some(g) => usable.iter().find(|l| self.headroom(l) >= g).unwrap_or(&usable[0]),
            None => &usable[0],
        };
        Ok(pick.id)
    }
}

/// Access choices for one user end: (rat, station, access link).
fn access_options(input: &ControlInput, end: &UserEnd) -> Vec<(AccessRat, NodeId, LinkId)> {
    let topo = input.topo;
    let mut out = Vec::new();
    if let Some(ap) = end.attachment.wlan_ap {
        if let Some(l) = topo.access_link(end.node, ap, LinkClass::WlanAccess) {
            if input.dp.usable(l) {
                out.push((AccessRat::WlanViaMiddleMile, ap, l.id));
            }
        }
    }
    if end.attachment.macro_bs {
        if let Some(l) = topo.macro_link(end.node) {
            if input.dp.usable(l) {
                out.push((AccessRat::Macro, l.other(end.node), l.id));
            }
        }
    }
    out
}

type Access = (AccessRat, NodeId, LinkId);

fn mismatch(end: &UserEnd, rat: AccessRat) -> u32 {
    let preferred = if end.mobile {
        AccessRat::Macro
    } else {
        AccessRat::WlanViaMiddleMile
    };
    u32::from(rat != preferred)
}

fn pop(topo: &Topology, fog: FogId) -> NodeId {
    topo.pop_of(fog).expect("validated fog has a PoP")
}

/// Assembles the path between two user ends; `None` status means feasible so far.
fn user_user_path(
    ctx: &Ctx,
    a: &UserEnd,
    oa: Access,
    b: &UserEnd,
    ob: Access,
) -> Result<(Vec<NodeId>, Vec<LinkId>, Locality), CandidateStatus> {
    let topo = ctx.input.topo;
    let mut nodes = vec![a.node];
    let mut links = vec![oa.2];
    let locality;
    if a.fog == b.fog {
        let (n, l) = ctx.route(oa.1, ob.1)?;
        nodes.extend(n);
        links.extend(l);
        locality = Locality::IntraFogLocal;
    } else {
        let bha = ctx.backhaul(a.fog)?;
        let bhb = ctx.backhaul(b.fog)?;
        let (n1, l1) = ctx.route(oa.1, pop(topo, a.fog))?;
        let (n2, l2) = ctx.route(pop(topo, b.fog), ob.1)?;
        nodes.extend(n1);
        links.extend(l1);
        links.push(bha);
        nodes.push(topo.gateway().expect("validated topology has a gateway"));
        links.push(bhb);
        nodes.extend(n2);
        links.extend(l2);
        locality = Locality::CloudBound;
    }
    nodes.push(b.node);
    links.push(ob.2);
    Ok((nodes, links, locality))
}

fn network_path(
    ctx: &Ctx,
    origin: Origin,
    user: &UserEnd,
    o: Access,
) -> Result<(Vec<NodeId>, Vec<LinkId>, Locality), CandidateStatus> {
    let topo = ctx.input.topo;
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    let locality = match origin {
        Origin::FogCache(_) => Locality::IntraFogLocal,
        Origin::Gateway => {
            let bh = ctx.backhaul(user.fog)?;
            nodes.push(topo.gateway().expect("validated topology has a gateway"));
            links.push(bh);
            Locality::CloudBound
        }
    };
    let (n, l) = ctx.route(pop(topo, user.fog), o.1)?;
    nodes.extend(n);
    links.extend(l);
    nodes.push(user.node);
    links.push(o.2);
    Ok((nodes, links, locality))
}

/// Enumerates candidate paths, filters by admission and ranks the rest.
///
/// Candidates are every combination of usable access options of the user
/// ends (and every origin for network-sourced flows); the segment between
/// access stations is the middle-mile route. Ranking: locality preference,
/// mobility preference mismatches, bottleneck utilization, hop count, node
/// sequence.
pub fn decide(input: &ControlInput, req: &RouteRequest) -> DecisionRecord {
    let topo = input.topo;
    let mut reserved = vec![Vec::new(); topo.links().len()];
    for f in input.dp.flows() {
        if let Some(g) = f.reservation.gbr() {
            for &l in &f.path.links {
                if let Some(i) = topo.link_idx(l) {
                    reserved[i].push((f.path.flow, f.slice, g));
                }
            }
        }
    }
    let ctx = Ctx {
        input,
        flow: req.flow,
        slice: req.slice,
        gbr: req.gbr,
        reserved,
        loads: input.dp.link_loads(topo),
    };

    let reject = |reason, candidates| DecisionRecord {
        flow: req.flow,
        candidates,
        rule: Rule::None,
        outcome: Err(reason),
    };

    let mut candidates = Vec::new();
    let mut build = |ends: Vec<(UserEnd, AccessRat)>,
                     origin: Option<Origin>,
                     built: Result<(Vec<NodeId>, Vec<LinkId>, Locality), CandidateStatus>,
                     reverse: bool| {
        let access: Vec<(NodeId, AccessRat)> = ends.iter().map(|(e, r)| (e.node, *r)).collect();
        let (path, status) = match built {
            Err(s) => (None, s),
            Ok((mut nodes, mut links, locality)) => {
                if reverse {
                    nodes.reverse();
                    links.reverse();
                }
                let mut access = access.clone();
                if reverse {
                    access.reverse();
                }
                let status = if ctx.admits(&links) {
                    CandidateStatus::Feasible(ScoreKey {
                        locality: u8::from(req.prefer_local && locality != Locality::IntraFogLocal),
                        mobility: ends.iter().map(|(e, r)| mismatch(e, *r)).sum(),
                        utilization: ctx.utilization(&links),
                        hops: links.len(),
                        nodes: nodes.clone(),
                    })
                } else {
                    CandidateStatus::GbrAdmissionFail
                };
                (
                    Some(FlowPath {
                        flow: req.flow,
                        nodes,
                        links,
                        locality,
                        access,
                    }),
                    status,
                )
            }
        };
        candidates.push(CandidateRecord {
            access,
            origin,
            path,
            status,
        });
    };

    match &req.ends {
        FlowEnds::Users { src, dst } => {
            let (oa, ob) = (access_options(input, src), access_options(input, dst));
            if oa.is_empty() || ob.is_empty() {
                return reject(RejectReason::NoCoverage, Vec::new());
            }
            for &a in &oa {
                for &b in &ob {
                    let built = user_user_path(&ctx, src, a, dst, b);
                    build(vec![(*src, a.0), (*dst, b.0)], None, built, false);
                }
            }
        }
        FlowEnds::Network {
            origins,
            user,
            user_is_source,
        } => {
            let opts = access_options(input, user);
            if opts.is_empty() {
                return reject(RejectReason::NoCoverage, Vec::new());
            }
            for &origin in origins {
                if matches!(origin, Origin::FogCache(f) if f != user.fog) {
                    continue;
                }
                for &o in &opts {
                    let built = network_path(&ctx, origin, user, o);
                    build(vec![(*user, o.0)], Some(origin), built, *user_is_source);
                }
            }
        }
    }

    let mut feasible: Vec<(usize, &ScoreKey)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match &c.status {
            CandidateStatus::Feasible(k) => Some((i, k)),
            _ => None,
        })
        .collect();
    if feasible.is_empty() {
        let has = |s: CandidateStatus| candidates.iter().any(|c| c.status == s);
        let reason = if has(CandidateStatus::GbrAdmissionFail) {
            RejectReason::GbrAdmissionFail
        } else if has(CandidateStatus::NoRoute) || candidates.is_empty() {
            RejectReason::NoRoute
        } else {
            RejectReason::FogIsolated
        };
        return reject(reason, candidates);
    }
    feasible.sort_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)));
    let rule = if candidates.len() == 1 {
        Rule::Single
    } else if feasible.len() == 1 {
        Rule::Admission
    } else {
        feasible[0]
            .1
            .first_difference(feasible[1].1)
            .unwrap_or(Rule::Lexicographic)
    };
    let winner = feasible[0].0;
    let path = candidates[winner].path.clone().expect("feasible candidates carry a path");
    DecisionRecord {
        flow: req.flow,
        candidates,
        rule,
        outcome: Ok(path),
    }
}
