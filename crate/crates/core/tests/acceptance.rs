//! Acceptance criteria. Runs as a plain binary so every verdict line shows
//! up in `cargo test` output; exits non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{q_to_f64, water_fill, Ask, End, LruOracle, Reservation, World, Q};
use fogsim::dataplane::{Locality, Reservation as Qos};
use fogsim::engine::{max_min_fair, Demand};
use fogsim::engine::{Event, EventKind, SimTime};
use fogsim::fixtures::DocBuilder;
use fogsim::fogctrl::{AppClass, Endpoint, FlowSpec, RejectReason, Subscription, UserRecord};
use fogsim::harness::workload::scenario_arrivals;
use fogsim::harness::{run_observed, run_scenario, FlowKind, Observer, RunOutput, Scenario, ScenarioConfig};
use fogsim::ids::{FlowId, FogId, OperatorId, SliceId};
use fogsim::network::{DecisionKind, NetEvent, Network, NetworkSetup, Outcome, RequestStatus};
use fogsim::slicing::{ResourceClass, Shares, SliceManager, SliceSpec};
use fogsim::sweep::{par_map, run_replicas, seq_map};
use fogsim::topology::{LinkClass, LinkId, LinkState, NodeId, NodeKind, Topology};

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: [(u32, &str, Option<u64>, Check); 8] = [
        (1, "locality of intra-fog paths", Some(60), locality),
        (2, "isolation survival", Some(1), isolation),
        (3, "flow-controller optimality", Some(300), controller_optimality),
        (4, "max-min fairness", Some(30), fairness),
        (5, "slicing conservation and diversion", Some(30), slicing),
        (6, "cache effect", Some(10), cache_effect),
        (7, "determinism", None, determinism),
        (8, "GBR protection", None, gbr_protection),
    ];
    // Optional filter: `cargo test --test acceptance -- 3 6` runs only those.
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.trim_start_matches("AC").parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, budget, check) in checks {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let late = budget.is_some_and(|b| took > Duration::from_secs(b));
        let limit = budget.map_or(String::new(), |b| format!(" (limit {b} s)"));
        let (verdict, detail) = match result {
            Ok(d) if !late => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over time budget")),
            Err(e) => ("FAIL", e),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("AC{id} {name}: {verdict} | {detail} | {:.2} s{limit}", took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn scenario(text: &str) -> Scenario {
    let cfg = ScenarioConfig::from_toml_str(text, &scenarios_dir()).expect("test scenario parses");
    Scenario::resolve(cfg).expect("test scenario resolves")
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// 1

#[derive(Default)]
struct LocalPaths {
    local: usize,
    cloud: usize,
    bad: Vec<String>,
}

impl Observer for LocalPaths {
    fn net_event(&mut self, net: &Network, ev: &NetEvent) {
        let NetEvent::Decided { flow, outcome: Outcome::Accepted { path, .. }, .. } = ev else {
            return;
        };
        if path.locality != Locality::IntraFogLocal {
            self.cloud += 1;
            return;
        }
        self.local += 1;
        let backhaul = path.count_class(&net.topo, LinkClass::Backhaul);
        let gateway = path
            .nodes
            .iter()
            .filter(|&&n| net.topo.kind(n) == Some(NodeKind::CloudGateway))
            .count();
        if backhaul > 0 || gateway > 0 {
            self.bad.push(format!("flow {flow} path {}", path.node_string()));
        }
    }
}

fn locality_config(i: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(0xac1 ^ (i << 8));
    let clusters = rng.random_range(1..=4u32);
    let fogs = rng.random_range(1..=2u32).min(clusters);
    let users_max = (40 / clusters).min(10);
    let users_min = rng.random_range(1..=users_max);
    let mut fog_tables = String::new();
    for f in 0..fogs {
        fog_tables += &format!(
            "[[fog]]\nid = {f}\ncache = {}\npcrf = {}\ncache_capacity = {}\n",
            rng.random_bool(0.7),
            rng.random_bool(0.8),
            rng.random_range(2..=20)
        );
    }
    let faults = if rng.random_bool(0.5) {
        "[faults.backhaul_random]\nmean_up_ms = 20000\nmean_down_ms = 8000\n"
    } else {
        ""
    };
    format!(
        "duration_ms = 40000\nseed = {i}\ntick_ms = 20000\n\
         [topology.generate]\nclusters = {clusters}\nusers_min = {users_min}\nusers_max = {users_max}\n\
         cluster_radius = 300.0\narea_side = 6000.0\nmesh_degree = {}\nmacro_radius = {}\nwlan_radius = 250.0\nfogs = {fogs}\n\
         {fog_tables}\
         [workload]\nrate = {}\nmobile_fraction = {}\nrelocation_rate = 0.02\n\
         {faults}",
        rng.random_range(2..=3),
        [2000.0, 3500.0][rng.random_range(0..2)],
        rng.random_range(1..=4),
        [0.0, 0.2, 0.5][rng.random_range(0..3)],
    )
}

fn locality() -> Result<String, String> {
    let ids: Vec<u64> = (0..1000).collect();
    let results = par_map(&ids, |&i| {
        let sc = scenario(&locality_config(i));
        let users = sc.topo.users().count();
        let clusters = sc.topo.clusters().len();
        let mut obs = LocalPaths::default();
        run_observed(&sc, &mut obs).map_err(|e| format!("scenario {i}: {e}"))?;
        Ok::<_, String>((users, clusters, obs))
    });
    let (mut local, mut cloud, mut bad) = (0, 0, Vec::new());
    for r in results {
        let (users, clusters, obs) = r?;
        ensure(users <= 40 && clusters <= 4, || format!("generated {users} users in {clusters} clusters"))?;
        local += obs.local;
        cloud += obs.cloud;
        bad.extend(obs.bad);
    }
    ensure(local > 0, || "no intra-fog flow was ever admitted".into())?;
    ensure(bad.is_empty(), || format!("{} local paths leave the fog, first: {}", bad.len(), bad[0]))?;
    Ok(format!("1000 scenarios, {local} intra-fog paths clean, {cloud} cloud-bound"))
}

// ---------------------------------------------------------------------------
// 2

#[derive(Default)]
struct OutageWatch {
    /// Flow -> (rate, locality) after the previous event.
    snapshot: BTreeMap<FlowId, (f64, Locality)>,
    terminated: Vec<(FlowId, RejectReason)>,
    outage_seen: bool,
    local_before: usize,
    local_kept: usize,
    cloud_before: usize,
    cloud_cut: usize,
    new_local_voip: usize,
    down_at: Option<SimTime>,
    up_at: Option<SimTime>,
    problems: Vec<String>,
}

impl Observer for OutageWatch {
    fn net_event(&mut self, net: &Network, ev: &NetEvent) {
        match ev {
            NetEvent::Terminated { flow, reason, .. } => self.terminated.push((*flow, *reason)),
            NetEvent::Decided { flow, kind: DecisionKind::Request, outcome: Outcome::Accepted { path, .. }, .. } => {
                let during = self.down_at.is_some() && self.up_at.is_none();
                let voip = net.active().get(flow).is_some_and(|f| f.spec.class == AppClass::Voip);
                if during && voip && path.locality == Locality::IntraFogLocal {
                    self.new_local_voip += 1;
                }
            }
            _ => {}
        }
    }

    fn after_event(&mut self, net: &Network, ev: &Event) {
        if let EventKind::LinkStateChange { link, up } = ev.kind {
            let backhaul = net.topo.link(link).is_some_and(|l| l.class == LinkClass::Backhaul);
            if backhaul && !up && !self.outage_seen {
                self.outage_seen = true;
                self.down_at = Some(ev.time);
                for (&flow, &(rate, loc)) in &self.snapshot {
                    match loc {
                        Locality::IntraFogLocal => {
                            self.local_before += 1;
                            match net.dp.flow(flow) {
                                Some(f) if f.rate == rate => self.local_kept += 1,
                                Some(f) => self.problems.push(format!("local flow {flow} rate {rate} -> {}", f.rate)),
                                None => self.problems.push(format!("local flow {flow} dropped")),
                            }
                        }
                        Locality::CloudBound => {
                            self.cloud_before += 1;
                            if self.terminated.contains(&(flow, RejectReason::FogIsolated)) {
                                self.cloud_cut += 1;
                            } else {
                                self.problems.push(format!("cloud flow {flow} not cut as FogIsolated"));
                            }
                        }
                    }
                }
            }
            if backhaul && up && self.down_at.is_some() {
                self.up_at.get_or_insert(ev.time);
            }
        }
        self.terminated.clear();
        self.snapshot = net
            .dp
            .flows()
            .map(|f| (f.path.flow, (f.rate, f.path.locality)))
            .collect();
    }
}

fn isolation() -> Result<String, String> {
    let path = scenarios_dir().join("isolation.scn");
    let cfg = fogsim::harness::load_scenario(&path).map_err(|e| e.to_string())?;
    ensure(cfg.fogs.iter().all(|f| f.udf && f.pcrf && f.cache), || "fog must host UDF, PCRF and cache".into())?;
    let sc = Scenario::resolve(cfg).map_err(|e| e.to_string())?;
    let mut w = OutageWatch::default();
    run_observed(&sc, &mut w).map_err(|e| e.to_string())?;
    ensure(w.outage_seen, || "outage never happened".into())?;
    ensure(w.problems.is_empty(), || w.problems.join("; "))?;
    ensure(w.local_before > 0 && w.local_kept == w.local_before, || "no local flow to protect".into())?;
    ensure(w.cloud_before > 0 && w.cloud_cut == w.cloud_before, || "no cloud flow to cut".into())?;
    ensure(w.new_local_voip > 0, || "no new local VoIP admitted during the outage".into())?;
    Ok(format!(
        "outage at {} ms: {}/{} local flows kept their rate, {}/{} cloud-bound flows cut, {} new local VoIP admitted",
        w.down_at.unwrap().as_ms(),
        w.local_kept,
        w.local_before,
        w.cloud_cut,
        w.cloud_before,
        w.new_local_voip
    ))
}

// ---------------------------------------------------------------------------
// 3

const CAPS: [f64; 5] = [2.0, 5.0, 10.0, 20.0, 50.0];

struct Case {
    topo: Topology,
    /// Node ids of the users, in order.
    users: Vec<NodeId>,
}

fn cap(rng: &mut ChaCha8Rng) -> f64 {
    CAPS[rng.random_range(0..CAPS.len())]
}

/// One fog with `aps` clusters; `mesh` selects optional middle-mile links
/// among the middle-mile AP and the clients.
fn one_fog_case(aps: usize, users: usize, mesh: u32, rng: &mut ChaCha8Rng) -> Option<Case> {
    let mut b = DocBuilder::new();
    let gw = b.node(NodeKind::CloudGateway, None);
    let pop = b.node(NodeKind::PoP, Some(0));
    let bs = b.node(NodeKind::MacroBS, Some(0));
    let mm = b.node(NodeKind::MiddleMileAP, Some(0));
    let clients: Vec<NodeId> = (0..aps).map(|_| b.node(NodeKind::MiddleMileClient, Some(0))).collect();
    let ap_nodes: Vec<NodeId> = (0..aps).map(|_| b.node(NodeKind::WlanAP, Some(0))).collect();
    let user_nodes: Vec<NodeId> = (0..users).map(|_| b.node(NodeKind::User, Some(0))).collect();
    b.link(pop, gw, LinkClass::Backhaul, cap(rng), 10.0);
    b.link(pop, bs, LinkClass::Internal, cap(rng), 0.5);
    b.link(pop, mm, LinkClass::Internal, cap(rng), 0.1);
    for (c, a) in clients.iter().zip(&ap_nodes) {
        b.link(*c, *a, LinkClass::Internal, cap(rng), 0.5);
    }
    let mesh_nodes: Vec<NodeId> = std::iter::once(mm).chain(clients.iter().copied()).collect();
    let mut bit = 0;
    for i in 0..mesh_nodes.len() {
        for j in i + 1..mesh_nodes.len() {
            if mesh >> bit & 1 == 1 {
                b.link(mesh_nodes[i], mesh_nodes[j], LinkClass::MiddleMile, cap(rng), 2.0);
            }
            bit += 1;
        }
    }
    let mut members = vec![Vec::new(); aps];
    for &u in &user_nodes {
        let wlan = rng.random_bool(0.85);
        let macro_access = !wlan || rng.random_bool(0.6);
        if wlan {
            let k = rng.random_range(0..aps);
            b.link(u, ap_nodes[k], LinkClass::WlanAccess, cap(rng), 1.0);
            members[k].push(u);
        }
        if macro_access {
            b.link(u, bs, LinkClass::MacroAccess, cap(rng), 5.0);
        }
    }
    for (a, m) in ap_nodes.iter().zip(members) {
        b.cluster(vec![*a], m);
    }
    let topo = Topology::build_from_config(b.finish()).ok()?;
    Some(Case { topo, users: user_nodes })
}

/// Fog 0 with one WLAN cluster and two users; fog 1 macro-only with two users.
fn two_fog_case(rng: &mut ChaCha8Rng) -> Option<Case> {
    let mut b = DocBuilder::new();
    let gw = b.node(NodeKind::CloudGateway, None);
    let pop0 = b.node(NodeKind::PoP, Some(0));
    let bs0 = b.node(NodeKind::MacroBS, Some(0));
    let mm0 = b.node(NodeKind::MiddleMileAP, Some(0));
    let c0 = b.node(NodeKind::MiddleMileClient, Some(0));
    let ap0 = b.node(NodeKind::WlanAP, Some(0));
    let pop1 = b.node(NodeKind::PoP, Some(1));
    let bs1 = b.node(NodeKind::MacroBS, Some(1));
    let users: Vec<NodeId> = (0..4)
        .map(|i| b.node(NodeKind::User, Some(if i < 2 { 0 } else { 1 })))
        .collect();
    b.link(pop0, gw, LinkClass::Backhaul, cap(rng), 10.0);
    b.link(pop1, gw, LinkClass::Backhaul, cap(rng), 10.0);
    b.link(pop0, bs0, LinkClass::Internal, cap(rng), 0.5);
    b.link(pop1, bs1, LinkClass::Internal, cap(rng), 0.5);
    b.link(pop0, mm0, LinkClass::Internal, cap(rng), 0.1);
    b.link(mm0, c0, LinkClass::MiddleMile, cap(rng), 2.0);
    b.link(c0, ap0, LinkClass::Internal, cap(rng), 0.5);
    let mut members = Vec::new();
    for &u in &users[..2] {
        let wlan = rng.random_bool(0.8);
        if wlan {
            b.link(u, ap0, LinkClass::WlanAccess, cap(rng), 1.0);
            members.push(u);
        }
        if !wlan || rng.random_bool(0.5) {
            b.link(u, bs0, LinkClass::MacroAccess, cap(rng), 5.0);
        }
    }
    for &u in &users[2..] {
        b.link(u, bs1, LinkClass::MacroAccess, cap(rng), 5.0);
    }
    b.cluster(vec![ap0], members);
    let topo = Topology::build_from_config(b.finish()).ok()?;
    Some(Case { topo, users })
}

#[derive(Default)]
struct Tallies {
    cases: usize,
    decisions: usize,
    by_outcome: BTreeMap<String, usize>,
    mismatches: Vec<String>,
}

fn play(case: Case, rng: &mut ChaCha8Rng, label: &str, t: &mut Tallies) {
    let Case { topo, users } = case;
    let shares: Vec<f64> = match rng.random_range(0..3) {
        0 => vec![1.0],
        1 => vec![0.5, 0.5],
        _ => vec![0.7, 0.3],
    };
    let slices: Vec<SliceSpec> = shares
        .iter()
        .enumerate()
        .map(|(i, &s)| SliceSpec {
            id: SliceId(i as u32),
            operator: OperatorId::new(format!("op{i}")),
            shares: Shares::uniform(s),
        })
        .collect();
    let mut op_of = BTreeMap::new();
    let mut mobile = BTreeMap::new();
    let records: Vec<UserRecord> = users
        .iter()
        .map(|&u| {
            let op = rng.random_range(0..shares.len());
            let m = rng.random_bool(0.4);
            op_of.insert(u, op);
            mobile.insert(u, m);
            UserRecord {
                user: u,
                token: format!("k{}", u.0),
                subscription: Subscription {
                    max_gbr: 100.0,
                    ..Subscription::default()
                },
                operator: OperatorId::new(format!("op{op}")),
                mobile: m,
            }
        })
        .collect();
    let mut setup = NetworkSetup::new(topo.clone(), slices, records);
    setup.voip_gbr = [1.0, 2.0, 5.0][rng.random_range(0..3)];
    let gbr_rate = setup.voip_gbr;
    let mut net = Network::new(setup).expect("oracle case builds");
    let links: Vec<(LinkId, LinkClass)> = topo.links().iter().map(|l| (l.id, l.class)).collect();
    for (id, class) in links {
        let p = if class == LinkClass::Backhaul { 0.15 } else { 0.1 };
        if rng.random_bool(p) {
            net.set_link_state(id, false, SimTime(0)).expect("known link");
        }
    }
    t.cases += 1;

    let requests = rng.random_range(1..=6);
    let mut next = 0u64;
    for step in 0..requests {
        let now = SimTime(step as u64 * 10);
        if rng.random_bool(0.25) {
            let active: Vec<FlowId> = net.active().keys().copied().collect();
            if !active.is_empty() {
                let f = active[rng.random_range(0..active.len())];
                net.depart(f, now).expect("departure");
            }
        }
        let a = users[rng.random_range(0..users.len())];
        let (src, dst) = match rng.random_range(0..4) {
            0 => (Endpoint::External, Endpoint::User(a)),
            1 => (Endpoint::User(a), Endpoint::External),
            _ => {
                let others: Vec<NodeId> = users.iter().copied().filter(|&u| u != a).collect();
                (Endpoint::User(a), Endpoint::User(others[rng.random_range(0..others.len())]))
            }
        };
        let class = [AppClass::Voip, AppClass::Voip, AppClass::Web, AppClass::Bulk][rng.random_range(0..4)];
        let subscriber = match src {
            Endpoint::User(u) => u,
            _ => a,
        };
        next += 1;
        let spec = FlowSpec {
            id: FlowId(next),
            src,
            dst,
            class,
            demand: rng.random_range(1..=20) as f64,
            operator: OperatorId::new(format!("op{}", op_of[&subscriber])),
            start: now,
        };

        let end = |u: NodeId| End {
            node: u,
            fog: topo.fog_of(u).unwrap(),
            wlan_ap: net
                .topo
                .links_of(u)
                .find(|l| l.class == LinkClass::WlanAccess)
                .map(|l| l.other(u)),
            macro_access: topo.links_of(u).any(|l| l.class == LinkClass::MacroAccess),
            mobile: mobile[&u],
        };
        let ask = match (src, dst) {
            (Endpoint::User(x), Endpoint::User(y)) => Ask::Users(end(x), end(y)),
            (Endpoint::User(x), _) => Ask::Internet { user: end(x), upstream: true },
            (_, Endpoint::User(y)) => Ask::Internet { user: end(y), upstream: false },
            _ => unreachable!(),
        };
        let prefer_local = matches!(ask, Ask::Users(x, y) if x.fog == y.fog);
        let slice = SliceId(op_of[&subscriber] as u32);
        let gbr = (class == AppClass::Voip).then_some(gbr_rate);

        let mut load = BTreeMap::new();
        let mut reserved: BTreeMap<LinkId, Vec<Reservation>> = BTreeMap::new();
        for f in net.dp.flows() {
            for &l in &f.path.links {
                *load.entry(l).or_insert(0.0) += f.rate;
                if let Qos::Gbr(g) = f.reservation {
                    reserved.entry(l).or_default().push(Reservation {
                        flow: f.path.flow.0,
                        slice: f.slice,
                        rate: g,
                    });
                }
            }
        }
        let share_of = shares.clone();
        let share = move |c: LinkClass, s: SliceId| {
            if c == LinkClass::Internal {
                1.0
            } else {
                share_of[s.0 as usize]
            }
        };
        let topo_now = net.topo.clone();
        let connected = |f: FogId| {
            topo_now.links().iter().any(|l| {
                l.class == LinkClass::Backhaul
                    && l.state == LinkState::Up
                    && l.endpoints.iter().any(|&n| topo_now.kind(n) == Some(NodeKind::PoP) && topo_now.fog_of(n) == Some(f))
            })
        };
        let world = World {
            topo: &topo_now,
            down_nodes: &[],
            load,
            reserved,
            share: &share,
            connected: &connected,
        };
        let want = world.choose(next, &ask, slice, gbr, prefer_local);

        let (status, events) = net.request(spec, now).expect("request is well formed");
        assert_eq!(status, RequestStatus::Decided);
        let got = events
            .iter()
            .find_map(|e| match e {
                NetEvent::Decided { outcome: Outcome::Accepted { path, .. }, .. } => Some(Ok(path.nodes.clone())),
                NetEvent::Decided { outcome: Outcome::Rejected(r), .. } => Some(Err(*r)),
                _ => None,
            })
            .expect("a decision");
        t.decisions += 1;
        let key = match &got {
            Ok(_) => "accepted".to_string(),
            Err(r) => format!("{r:?}"),
        };
        *t.by_outcome.entry(key).or_default() += 1;
        if got != want {
            t.mismatches.push(format!("{label} flow {next}: controller {got:?}, oracle {want:?}"));
        }
    }
}

fn controller_optimality() -> Result<String, String> {
    let mut t = Tallies::default();
    // Every subset of the six possible middle-mile links among four nodes.
    for mesh in 0..64u32 {
        for seed in 0..6u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1 << 32 | u64::from(mesh) << 8 | seed);
            if let Some(case) = one_fog_case(3, 2, mesh, &mut rng) {
                play(case, &mut rng, &format!("three-cluster mesh {mesh:06b} seed {seed}"), &mut t);
            }
        }
    }
    // Every subset of the three possible links among three nodes.
    for mesh in 0..8u32 {
        for seed in 0..40u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(2 << 32 | u64::from(mesh) << 8 | seed);
            if let Some(case) = one_fog_case(2, 4, mesh, &mut rng) {
                play(case, &mut rng, &format!("two-cluster mesh {mesh:03b} seed {seed}"), &mut t);
            }
        }
    }
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3 << 32 | seed);
        if let Some(case) = two_fog_case(&mut rng) {
            play(case, &mut rng, &format!("two-fog seed {seed}"), &mut t);
        }
    }
    ensure(t.mismatches.is_empty(), || {
        format!("{} of {} decisions differ; first: {}", t.mismatches.len(), t.decisions, t.mismatches[0])
    })?;
    ensure(t.by_outcome.len() >= 4, || format!("outcome mix too narrow: {:?}", t.by_outcome))?;
    Ok(format!("{} topologies, {} decisions identical; outcomes {:?}", t.cases, t.decisions, t.by_outcome))
}

// ---------------------------------------------------------------------------
// 4

const FAIR_TOL: f64 = 1e-9;

fn fairness() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    let mut flows_seen = 0;
    for i in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xfa1 ^ i);
        let n_links = rng.random_range(1..=6);
        let caps: Vec<i64> = (0..n_links)
            .map(|_| if rng.random_bool(0.05) { 0 } else { rng.random_range(1..=100) })
            .collect();
        let n_flows = rng.random_range(1..=8);
        let flows: Vec<(Vec<usize>, i64)> = (0..n_flows)
            .map(|_| {
                let k = if rng.random_bool(0.05) { 0 } else { rng.random_range(1..=3.min(n_links)) };
                let mut links: Vec<usize> = Vec::new();
                while links.len() < k {
                    let l = rng.random_range(0..n_links);
                    if !links.contains(&l) {
                        links.push(l);
                    }
                }
                let demand = if rng.random_bool(0.3) { 1000 } else { rng.random_range(0..=80) };
                (links, demand)
            })
            .collect();
        let got = max_min_fair(
            &caps.iter().map(|&c| c as f64).collect::<Vec<_>>(),
            &flows
                .iter()
                .map(|(l, d)| Demand { links: l.clone(), rate: *d as f64 })
                .collect::<Vec<_>>(),
        );
        let want = water_fill(
            &caps.iter().map(|&c| Q::from_integer(c.into())).collect::<Vec<_>>(),
            &flows
                .iter()
                .map(|(l, d)| (l.clone(), Q::from_integer((*d).into())))
                .collect::<Vec<_>>(),
        );
        for (k, (g, w)) in got.iter().zip(&want).enumerate() {
            let w = q_to_f64(w);
            let err = if w == 0.0 { g.abs() } else { (g - w).abs() / w.abs() };
            worst = worst.max(err);
            ensure(err <= FAIR_TOL, || format!("instance {i} flow {k}: engine {g}, oracle {w}"))?;
        }
        flows_seen += n_flows;
    }
    Ok(format!("500 instances, {flows_seen} flows, worst relative error {worst:.1e} (limit {FAIR_TOL:.0e})"))
}

// ---------------------------------------------------------------------------
// 5

fn two_slice_manager(physical: f64) -> SliceManager {
    let mut m = SliceManager::new([physical; 4]);
    for (i, (op, s)) in [("A", 0.6), ("B", 0.4)].into_iter().enumerate() {
        m.create_slice(SliceSpec {
            id: SliceId(i as u32),
            operator: OperatorId::new(op),
            shares: Shares::uniform(s),
        })
        .expect("shares fit");
    }
    m
}

fn grants(m: &mut SliceManager, a: f64, b: f64) -> (f64, f64) {
    let demands = BTreeMap::from([(SliceId(0), [a; 4]), (SliceId(1), [b; 4])]);
    let rt = m.compute_slice_allocations(&demands);
    let c = ResourceClass::Backhaul;
    (rt[0].class(c).granted, rt[1].class(c).granted)
}

#[derive(Default)]
struct SliceWatch {
    events: usize,
    violations: Vec<String>,
}

impl Observer for SliceWatch {
    fn after_event(&mut self, net: &Network, ev: &Event) {
        self.events += 1;
        for fog in net.fogs.values() {
            for class in ResourceClass::ALL {
                let total: f64 = fog
                    .smf
                    .slices()
                    .map(|s| fog.smf.runtime(s.id).expect("registered").class(class).granted)
                    .sum();
                if total > fog.smf.physical(class) {
                    self.violations.push(format!("{} {class}: {total} > {}", ev.time.as_ms(), fog.smf.physical(class)));
                }
            }
        }
    }
}

fn slicing() -> Result<String, String> {
    let mut m = two_slice_manager(100.0);
    let idle_b = grants(&mut m, 90.0, 0.0);
    ensure(idle_b == (90.0, 0.0), || format!("A 90 / B 0 gave {idle_b:?}"))?;
    let both = grants(&mut m, 90.0, 30.0);
    ensure(both == (70.0, 30.0), || format!("A 90 / B 30 gave {both:?}"))?;

    let mut events = 0;
    for trace in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x51ce ^ trace);
        let mut m = two_slice_manager(rng.random_range(1..=200) as f64);
        for _ in 0..20 {
            if rng.random_bool(0.2) {
                let p: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..200.0));
                m.set_physical(p);
            }
            let mut d = || -> [f64; 4] {
                std::array::from_fn(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..150.0) })
            };
            let demands = BTreeMap::from([(SliceId(0), d()), (SliceId(1), d())]);
            let rt = m.compute_slice_allocations(&demands);
            events += 1;
            for class in ResourceClass::ALL {
                let total: f64 = rt.iter().map(|r| r.class(class).granted).sum();
                ensure(total <= m.physical(class), || {
                    format!("trace {trace} {class}: granted {total} > physical {}", m.physical(class))
                })?;
                for r in &rt {
                    let c = r.class(class);
                    ensure(c.granted >= c.demand.min(c.entitled), || {
                        format!("trace {trace} {class}: slice {} granted {} below protected {}", r.slice, c.granted, c.demand.min(c.entitled))
                    })?;
                }
            }
        }
    }

    let sc = fogsim::harness::load_scenario(&scenarios_dir().join("fig2.scn"))
        .and_then(Scenario::resolve)
        .map_err(|e| e.to_string())?;
    let mut w = SliceWatch::default();
    run_observed(&sc, &mut w).map_err(|e| e.to_string())?;
    ensure(w.violations.is_empty(), || format!("simulation: {}", w.violations[0]))?;
    Ok(format!(
        "hand cases 90/0 and 70/30 exact; 1000 traces ({events} allocations) and {} simulated events conserve capacity",
        w.events
    ))
}

// ---------------------------------------------------------------------------
// 6

const HIT_RATE_TOL: f64 = 0.05;

fn cache_scenario(cache: bool) -> Scenario {
    scenario(&format!(
        "duration_ms = 600000\nseed = 606\ntick_ms = 60000\n\
         [topology]\nfile = \"fig2.topo.toml\"\n\
         [[fog]]\nid = 0\ncache = {cache}\ncache_capacity = 10\n\
         [workload]\ncatalog = 100\nzipf = 1.0\n\
         [workload.content]\nrate = 20.0\ndemand = 0.5\nholding_mean_ms = 1000.0\n\
         [workload.local_voip]\nrate = 0.0\n[workload.external_web]\nrate = 0.0\n"
    ))
}

fn cache_effect() -> Result<String, String> {
    let on = cache_scenario(true);
    let trace: Vec<u64> = scenario_arrivals(&on)
        .iter()
        .filter(|a| a.kind == FlowKind::Content)
        .filter_map(|a| match a.src {
            Endpoint::Content(c) => Some(u64::from(c.0)),
            _ => None,
        })
        .collect();
    ensure(trace.len() >= 10_000, || format!("only {} content requests", trace.len()))?;
    let mut lru = LruOracle::new(10);
    for &c in &trace {
        lru.access(c);
    }
    let with = run_scenario(&on).map_err(|e| e.to_string())?.summary;
    let without = run_scenario(&cache_scenario(false)).map_err(|e| e.to_string())?.summary;
    let lookups = with.cache_hits + with.cache_misses;
    ensure(lookups as usize == trace.len(), || format!("{lookups} lookups for {} requests", trace.len()))?;
    let gap = (with.cache_hit_rate - lru.hit_rate()).abs();
    ensure(gap <= HIT_RATE_TOL, || {
        format!("hit rate {:.4} vs oracle {:.4}", with.cache_hit_rate, lru.hit_rate())
    })?;
    ensure(with.backhaul_bytes < without.backhaul_bytes, || {
        format!("backhaul bytes with cache {} not below {}", with.backhaul_bytes, without.backhaul_bytes)
    })?;
    Ok(format!(
        "{} requests, hit rate {:.4} vs LRU oracle {:.4} (limit {HIT_RATE_TOL}), backhaul {} B vs {} B without cache",
        trace.len(),
        with.cache_hit_rate,
        lru.hit_rate(),
        with.backhaul_bytes,
        without.backhaul_bytes
    ))
}

// ---------------------------------------------------------------------------
// 7

fn written(out: &RunOutput) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    out.write_to(dir.path()).map_err(|e| e.to_string())?;
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir.path()).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
        files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(files)
}

fn determinism() -> Result<String, String> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    names.sort();
    let mut files = 0;
    let mut bytes = 0;
    for path in &names {
        let cfg = fogsim::harness::load_scenario(path).map_err(|e| e.to_string())?;
        let first = written(&run_scenario(&Scenario::resolve(cfg.clone()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?)?;
        let second = written(&run_scenario(&Scenario::resolve(cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?)?;
        ensure(first.keys().eq(second.keys()), || format!("{}: file sets differ", path.display()))?;
        for (name, a) in &first {
            ensure(second[name] == *a, || format!("{}: {name} differs between runs", path.display()))?;
            files += 1;
            bytes += a.len();
        }
    }
    // Parallel replicas must match one-at-a-time runs.
    let cfg = fogsim::harness::load_scenario(&scenarios_dir().join("fig2.scn")).map_err(|e| e.to_string())?;
    let seeds = [1, 2, 3, 4];
    let par = run_replicas(&cfg, &seeds);
    let seq = seq_map(&seeds, |&s| fogsim::sweep::run_replica(&cfg, s));
    for (k, (p, s)) in par.into_iter().zip(seq).enumerate() {
        let (p, s) = (p.map_err(|e| e.to_string())?, s.map_err(|e| e.to_string())?);
        ensure(p == s, || format!("replica {k} differs between parallel and sequential runs"))?;
    }
    Ok(format!(
        "{} bundled scenarios twice: {files} files, {bytes} bytes identical; 4 parallel replicas match sequential",
        names.len()
    ))
}

// ---------------------------------------------------------------------------
// 8

#[derive(Default)]
struct GbrWatch {
    events: usize,
    gbr_seen: BTreeSet<FlowId>,
    admitted: usize,
    refused: usize,
    violations: Vec<String>,
}

impl Observer for GbrWatch {
    fn net_event(&mut self, _net: &Network, ev: &NetEvent) {
        if let NetEvent::Decided { kind: DecisionKind::Request, outcome, .. } = ev {
            match outcome {
                Outcome::Accepted { .. } => self.admitted += 1,
                Outcome::Rejected(RejectReason::GbrAdmissionFail) => self.refused += 1,
                _ => {}
            }
        }
    }

    fn after_event(&mut self, net: &Network, ev: &Event) {
        self.events += 1;
        let caps = net.capacities();
        let mut reserved = vec![Vec::new(); caps.len()];
        for f in net.dp.flows() {
            if let Qos::Gbr(g) = f.reservation {
                self.gbr_seen.insert(f.path.flow);
                if f.rate != g {
                    self.violations.push(format!("{} ms: flow {} rate {} != {g}", ev.time.as_ms(), f.path.flow, f.rate));
                }
                for &l in &f.path.links {
                    let i = net.topo.link_idx(l).expect("known link");
                    reserved[i].push((f.path.flow, g));
                }
            }
        }
        for (i, mut rs) in reserved.into_iter().enumerate() {
            rs.sort_by_key(|r| r.0);
            let total = rs.iter().fold(0.0, |a, r| a + r.1);
            if total > caps[i] {
                self.violations.push(format!("{} ms: link {i} reserves {total} > {}", ev.time.as_ms(), caps[i]));
            }
        }
    }
}

fn gbr_config(i: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b2 ^ (i << 4));
    format!(
        "duration_ms = 120000\nseed = {i}\ntick_ms = 30000\n\
         [topology.generate]\nclusters = {}\nusers_min = 3\nusers_max = 8\n\
         cluster_radius = 300.0\narea_side = 6000.0\nmesh_degree = 2\nmacro_radius = 3500.0\nwlan_radius = 250.0\nfogs = {}\n\
         [topology.generate.links]\nbackhaul = {{ capacity = {}, latency = 10.0 }}\nmiddle_mile = {{ capacity = {}, latency = 2.0 }}\n\
         wlan_access = {{ capacity = 3.0, latency = 1.0 }}\nmacro_access = {{ capacity = 2.0, latency = 5.0 }}\n\
         macro_cell = {{ capacity = 4.0, latency = 0.5 }}\n\
         [[slice]]\nid = 0\noperator = \"opA\"\nshares = {{ macro = 0.6, wlan = 0.6, middle_mile = 0.6, backhaul = 0.6 }}\n\
         [[slice]]\nid = 1\noperator = \"opB\"\nshares = {{ macro = 0.4, wlan = 0.4, middle_mile = 0.4, backhaul = 0.4 }}\n\
         [policy]\nvoip_gbr = {}\n\
         [workload]\nrate = {}\nmix = {{ local_voip = 0.7, content = 0.1, external_web = 0.2 }}\nmobile_fraction = 0.3\nrelocation_rate = 0.02\n\
         [workload.local_voip]\nholding_mean_ms = 40000.0\n\
         [faults.backhaul_random]\nmean_up_ms = 40000\nmean_down_ms = 10000\n\
         [faults.power]\nmean_up_ms = 60000\nmean_down_ms = 15000\n",
        rng.random_range(1..=4),
        rng.random_range(1..=2),
        [2.0, 3.0, 5.0][rng.random_range(0..3)],
        [2.0, 4.0][rng.random_range(0..2)],
        [0.3, 0.5, 1.0][rng.random_range(0..3)],
        rng.random_range(1..=4),
    )
}

fn gbr_protection() -> Result<String, String> {
    let ids: Vec<u64> = (0..60).collect();
    let results = par_map(&ids, |&i| {
        let text = gbr_config(i);
        let cfg = ScenarioConfig::from_toml_str(&text, &scenarios_dir()).map_err(|e| e.to_string())?;
        let sc = Scenario::resolve(cfg).map_err(|e| e.to_string())?;
        let mut w = GbrWatch::default();
        run_observed(&sc, &mut w).map_err(|e| format!("scenario {i}: {e}"))?;
        Ok::<_, String>(w)
    });
    let (mut events, mut flows, mut admitted, mut refused) = (0, 0, 0, 0);
    for r in results {
        let w = r?;
        ensure(w.violations.is_empty(), || w.violations[0].clone())?;
        events += w.events;
        flows += w.gbr_seen.len();
        admitted += w.admitted;
        refused += w.refused;
    }
    ensure(flows > 0 && refused > 0, || format!("admission never binding ({flows} GBR flows, {refused} refused)"))?;
    Ok(format!(
        "60 scenarios, {events} events: {flows} GBR flows always at their rate, reservations within capacity; {admitted} admissions, {refused} GBR refusals"
    ))
}
