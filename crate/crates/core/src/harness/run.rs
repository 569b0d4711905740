//! Drives one scenario through the event queue and records its traces.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::cloudctrl::Connectivity;
use crate::engine::{EngineError, Event, EventKind, EventQueue, SimTime, EVENT_TRACE_HEADER};
use crate::fogctrl::{FlowSpec, RejectReason};
use crate::ids::{FlowId, FogId, NodeId, OperatorId};
use crate::network::{DecisionKind, NetEvent, Network, NetworkError, Outcome, RequestStatus};
use crate::slicing::ResourceClass;
use crate::topology::LinkClass;

use super::config::{FlowKind, Scenario};
use super::faults::{generate_faults, Fault};
use super::trace::{BackhaulMeter, DecisionRow, RateRow, RowEvent, RowOutcome, Summary, Tally, DECISIONS_HEADER, RATES_HEADER};
use super::workload::{generate_mobility, scenario_arrivals, Arrival};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("at {time} ms: {source}")]
    Network {
        time: SimTime,
        #[source]
        source: NetworkError,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Hooks for tests that inspect the network while a scenario runs.
pub trait Observer {
    /// Called for each network reaction, in emission order.
    fn net_event(&mut self, _net: &Network, _ev: &NetEvent) {}
    /// Called once each queued event is fully processed.
    fn after_event(&mut self, _net: &Network, _ev: &Event) {}
}

impl Observer for () {}

/// Output file names and contents, in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub summary: Summary,
    pub files: Vec<(&'static str, String)>,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| *n == name).map(|(_, s)| s.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in &self.files {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

struct Flow {
    arrival: Arrival,
    subscriber: NodeId,
}

struct Run<'o> {
    net: Network,
    queue: EventQueue,
    flows: Vec<Flow>,
    operator: HashMap<NodeId, OperatorId>,
    home: HashMap<NodeId, FogId>,
    rtt: u64,
    tally: Tally,
    meter: BackhaulMeter,
    last_rate: BTreeMap<FlowId, (f64, u32)>,
    decisions: String,
    events: String,
    rates: String,
    connectivity: String,
    metrics: String,
    slices: String,
    observer: &'o mut dyn Observer,
}

fn metrics_header() -> String {
    let mut h = String::from("time_ms\trequests\tadmitted\trejected");
    for r in RejectReason::ALL {
        write!(h, "\trejected_{}", r.name()).unwrap();
    }
    h.push_str("\tterminated\tactive_flows\tbackhaul_bytes\tcache_hit_rate\tisolation_survivors");
    for k in FlowKind::ALL {
        write!(h, "\tlatency_{}", k.name()).unwrap();
    }
    for c in ResourceClass::ALL {
        write!(h, "\tutil_{}", c.name()).unwrap();
    }
    h
}

const SLICES_HEADER: &str = "time_ms\tfog\tslice\tclass\tentitled\tdemand\tgranted\tunlent";
const CONNECTIVITY_HEADER: &str = "time_ms\tfog\tstate";

impl Run<'_> {
    fn flow(&self, id: FlowId) -> &Flow {
        &self.flows[(id.0 - 1) as usize]
    }

    fn err(time: SimTime) -> impl Fn(NetworkError) -> RunError {
        move |source| RunError::Network { time, source }
    }

    fn row(&mut self, row: DecisionRow) {
        self.tally.feed(&row);
        self.decisions.push_str(&row.line());
        self.decisions.push('\n');
    }

    fn flow_row(&self, time: SimTime, flow: FlowId, event: RowEvent) -> DecisionRow {
        let f = self.flow(flow);
        let mut row = DecisionRow::new(time, Some(flow), event, self.home[&f.subscriber]);
        row.kind = Some(f.arrival.kind);
        row
    }

    fn handle_net(&mut self, events: Vec<NetEvent>) -> Result<(), RunError> {
        for ev in events {
            self.observer.net_event(&self.net, &ev);
            match &ev {
                NetEvent::Decided {
                    time,
                    flow,
                    kind,
                    rule,
                    candidates,
                    outcome,
                    cache,
                } => {
                    let event = match kind {
                        DecisionKind::Request => RowEvent::Request,
                        DecisionKind::Reroute => RowEvent::Reroute,
                    };
                    let mut row = self.flow_row(*time, *flow, event);
                    row.rule = Some(rule.name().to_string());
                    row.cache = *cache;
                    if !candidates.is_empty() {
                        let c: Vec<String> = candidates.iter().map(ToString::to_string).collect();
                        row.candidates = Some(c.join(","));
                    }
                    match outcome {
                        Outcome::Accepted {
                            path,
                            qos,
                            slice,
                            latency,
                        } => {
                            row.outcome = RowOutcome::Accepted;
                            row.locality = Some(path.locality);
                            row.slice = Some(slice.0);
                            row.qos = Some(qos.name().to_string());
                            row.latency = Some(*latency);
                            row.path = Some(path.node_string());
                            if *kind == DecisionKind::Request {
                                let hold = self.flow(*flow).arrival.holding_ms;
                                self.queue
                                    .schedule(*time + hold, EventKind::FlowDeparture { flow: *flow })?;
                            }
                        }
                        Outcome::Rejected(r) => row.outcome = RowOutcome::Rejected(*r),
                    }
                    self.row(row);
                }
                NetEvent::Terminated { time, flow, reason } => {
                    let mut row = self.flow_row(*time, *flow, RowEvent::Terminate);
                    row.outcome = RowOutcome::Rejected(*reason);
                    self.row(row);
                }
                NetEvent::Departed { time, flow } => {
                    let row = self.flow_row(*time, *flow, RowEvent::Depart);
                    self.row(row);
                }
                NetEvent::Connectivity { time, fog, state } => {
                    let event = match state {
                        Connectivity::Isolated => RowEvent::Isolated,
                        Connectivity::Connected => RowEvent::Connected,
                    };
                    self.row(DecisionRow::new(*time, None, event, *fog));
                    writeln!(self.connectivity, "{time}\t{}\t{state}", fog.0).unwrap();
                }
                NetEvent::SyncRequested { fog } => {
                    let at = self.queue.now() + self.rtt;
                    self.queue.schedule(at, EventKind::SyncComplete { fog: *fog })?;
                }
            }
        }
        Ok(())
    }

    fn backhaul_count(&self, flow: FlowId) -> u32 {
        self.net
            .dp
            .flow(flow)
            .map_or(0, |f| f.path.count_class(&self.net.topo, LinkClass::Backhaul) as u32)
    }

    /// Writes a rate row for every flow whose allocation or backhaul
    /// crossing count changed.
    fn log_rates(&mut self, now: SimTime) {
        let current: BTreeMap<FlowId, (f64, u32)> = self
            .net
            .rates()
            .into_iter()
            .map(|(f, r)| (f, (r, self.backhaul_count(f))))
            .collect();
        let mut changed: Vec<RateRow> = Vec::new();
        for (&flow, &(rate, n)) in &current {
            if self.last_rate.get(&flow) != Some(&(rate, n)) {
                changed.push(RateRow {
                    time: now,
                    flow,
                    rate,
                    backhaul_links: n,
                });
            }
        }
        for &flow in self.last_rate.keys() {
            if !current.contains_key(&flow) {
                changed.push(RateRow {
                    time: now,
                    flow,
                    rate: 0.0,
                    backhaul_links: 0,
                });
            }
        }
        changed.sort_by_key(|r| r.flow);
        for r in changed {
            self.meter.feed(&r);
            self.rates.push_str(&r.line());
            self.rates.push('\n');
        }
        self.last_rate = current;
    }

    fn metrics_row(&mut self, label: &str, now: SimTime) {
        let t = &self.tally;
        let mut s = format!("{label}\t{}\t{}\t{}", t.requests, t.admitted, t.rejected_total());
        for n in t.rejected {
            write!(s, "\t{n}").unwrap();
        }
        write!(
            s,
            "\t{}\t{}\t{}\t{}\t{}",
            t.terminated.iter().sum::<u64>(),
            self.net.active().len(),
            self.meter.bytes_at(now),
            t.hit_rate(),
            t.survivors
        )
        .unwrap();
        for k in FlowKind::ALL {
            match t.mean_latency(k) {
                Some(l) => write!(s, "\t{l}").unwrap(),
                None => s.push_str("\t-"),
            }
        }
        let mut used = [0.0; 4];
        let mut total = [0.0; 4];
        for fog in self.net.fogs.values() {
            let view = fog.rat_abstract_view(&self.net.topo, &self.net.dp);
            for c in ResourceClass::ALL {
                let r = view.get(c);
                used[c.index()] += r.reserved_gbr + r.best_effort_load;
                total[c.index()] += r.total;
            }
        }
        for i in 0..4 {
            let u = if total[i] > 0.0 { used[i] / total[i] } else { 0.0 };
            write!(s, "\t{u}").unwrap();
        }
        self.metrics.push_str(&s);
        self.metrics.push('\n');

        for fog in self.net.fogs.values() {
            for spec in fog.smf.slices() {
                let rt = fog.smf.runtime(spec.id).expect("registered slice");
                for c in ResourceClass::ALL {
                    let cr = rt.class(c);
                    writeln!(
                        self.slices,
                        "{label}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        fog.id.0,
                        spec.id.0,
                        c.name(),
                        cr.entitled,
                        cr.demand,
                        cr.granted,
                        cr.unlent
                    )
                    .unwrap();
                }
            }
        }
    }

    fn step(&mut self, ev: &Event) -> Result<(), RunError> {
        let now = ev.time;
        let e = Self::err(now);
        let out = match &ev.kind {
            EventKind::FlowArrival { flow } => {
                let f = self.flow(*flow);
                let spec = FlowSpec {
                    id: *flow,
                    src: f.arrival.src,
                    dst: f.arrival.dst,
                    class: f.arrival.class,
                    demand: f.arrival.demand,
                    operator: self.operator[&f.subscriber].clone(),
                    start: now,
                };
                let (status, events) = self.net.request(spec, now).map_err(&e)?;
                if let RequestStatus::Pending { ready_at } = status {
                    self.queue.schedule(ready_at, EventKind::ControlResponse { flow: *flow })?;
                }
                events
            }
            EventKind::ControlResponse { flow } => self.net.complete_request(*flow, now).map_err(&e)?,
            EventKind::FlowDeparture { flow } => self.net.depart(*flow, now).map_err(&e)?,
            EventKind::LinkStateChange { link, up } => self.net.set_link_state(*link, *up, now).map_err(&e)?,
            EventKind::NodeStateChange { node, up } => self.net.set_node_state(*node, *up, now).map_err(&e)?,
            EventKind::HandoverTrigger { user, attachment } => {
                self.net.handover(*user, *attachment, now).map_err(&e)?
            }
            EventKind::SyncComplete { fog } => {
                // An isolated fog keeps its deltas; reconnection asks again.
                let _ = self.net.sync(*fog, now);
                Vec::new()
            }
            EventKind::MetricsTick => {
                self.metrics_row(&now.to_string(), now);
                Vec::new()
            }
        };
        self.handle_net(out)?;
        self.log_rates(now);
        Ok(())
    }
}

/// Runs a scenario to its duration.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput, RunError> {
    run_observed(sc, &mut ())
}

pub fn run_observed(sc: &Scenario, observer: &mut dyn Observer) -> Result<RunOutput, RunError> {
    let cfg = &sc.cfg;
    let end = SimTime(cfg.duration_ms);
    let net = Network::new(sc.setup.clone()).map_err(Run::err(SimTime::ZERO))?;
    let operator: HashMap<NodeId, OperatorId> =
        sc.setup.users.iter().map(|r| (r.user, r.operator.clone())).collect();
    let home: HashMap<NodeId, FogId> = sc
        .topo
        .users()
        .map(|u| (u, sc.topo.fog_of(u).expect("user in a fog")))
        .collect();

    let mut queue = EventQueue::new();
    for (t, fault) in generate_faults(&cfg.faults, &sc.topo, end, cfg.seed) {
        let kind = match fault {
            Fault::Link { link, up } => EventKind::LinkStateChange { link, up },
            Fault::Node { node, up } => EventKind::NodeStateChange { node, up },
        };
        queue.schedule(t, kind)?;
    }
    let mut mobile: Vec<NodeId> = sc.setup.users.iter().filter(|r| r.mobile).map(|r| r.user).collect();
    mobile.sort();
    let mut moves = generate_mobility(&sc.topo, &mobile, cfg.workload.relocation_rate, end, cfg.seed);
    moves.extend(cfg.workload.handovers.iter().map(|h| {
        (
            SimTime(h.at_ms),
            h.user,
            crate::topology::Attachment {
                wlan_ap: h.wlan_ap,
                macro_bs: h.macro_bs,
            },
        )
    }));
    moves.sort_by_key(|m| m.0);
    for (t, user, attachment) in moves {
        queue.schedule(t, EventKind::HandoverTrigger { user, attachment })?;
    }
    let mut flows = Vec::new();
    for (i, a) in scenario_arrivals(sc).into_iter().enumerate() {
        let id = FlowId(i as u64 + 1);
        queue.schedule(a.time, EventKind::FlowArrival { flow: id })?;
        let subscriber = [a.src, a.dst]
            .into_iter()
            .find_map(|e| match e {
                crate::fogctrl::Endpoint::User(u) => Some(u),
                _ => None,
            })
            .expect("arrivals have a user end");
        flows.push(Flow { arrival: a, subscriber });
    }
    let mut t = cfg.tick_ms;
    while t <= cfg.duration_ms {
        queue.schedule(SimTime(t), EventKind::MetricsTick)?;
        t += cfg.tick_ms;
    }

    let mut run = Run {
        net,
        queue,
        flows,
        operator,
        home,
        rtt: cfg.cloud_rtt_ms,
        tally: Tally::default(),
        meter: BackhaulMeter::default(),
        last_rate: BTreeMap::new(),
        decisions: format!("{DECISIONS_HEADER}\n"),
        events: format!("{EVENT_TRACE_HEADER}\n"),
        rates: format!("{RATES_HEADER}\n"),
        connectivity: format!("{CONNECTIVITY_HEADER}\n"),
        metrics: format!("{}\n", metrics_header()),
        slices: format!("{SLICES_HEADER}\n"),
        observer,
    };

    while run.queue.peek_time().is_some_and(|t| t <= end) {
        let ev = run.queue.pop().expect("peeked");
        run.events.push_str(&ev.trace_line());
        run.events.push('\n');
        run.step(&ev)?;
        run.observer.after_event(&run.net, &ev);
    }

    run.net.final_sync(end);
    for flow in run.meter.open_flows() {
        let r = RateRow {
            time: end,
            flow,
            rate: 0.0,
            backhaul_links: 0,
        };
        run.meter.feed(&r);
        run.rates.push_str(&r.line());
        run.rates.push('\n');
    }
    run.tally.finish();
    run.metrics_row("end", end);
    let summary = Summary::from_parts(&run.tally, &run.meter);
    let files = vec![
        ("resolved.toml", sc.resolved_toml()),
        ("metrics.tsv", run.metrics),
        ("decisions.log", run.decisions),
        ("events.log", run.events),
        ("connectivity.log", run.connectivity),
        ("slices.tsv", run.slices),
        ("rates.log", run.rates),
        ("summary.tsv", summary.to_tsv()),
    ];
    Ok(RunOutput { summary, files })
}
