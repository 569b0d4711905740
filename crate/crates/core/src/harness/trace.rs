//! Trace rows and the accounting derived from them.
//!
//! The run and `report` feed the same rows through [`Tally`] and
//! [`BackhaulMeter`], so a summary recomputed from the trace files matches
//! the one computed live.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::dataplane::{CacheOutcome, Locality};
use crate::engine::SimTime;
use crate::fogctrl::RejectReason;
use crate::ids::{FlowId, FogId};

use super::config::FlowKind;

pub const DECISIONS_HEADER: &str =
    "time_ms\tflow\tevent\tkind\tfog\toutcome\trule\tlocality\tslice\tqos\tlatency_ms\tpath\tcache\tcandidates";
pub const RATES_HEADER: &str = "time_ms\tflow\trate_mbps\tbackhaul_links";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowEvent {
    Request,
    Reroute,
    Terminate,
    Depart,
    Isolated,
    Connected,
}

impl RowEvent {
    const ALL: [RowEvent; 6] = [
        RowEvent::Request,
        RowEvent::Reroute,
        RowEvent::Terminate,
        RowEvent::Depart,
        RowEvent::Isolated,
        RowEvent::Connected,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RowEvent::Request => "request",
            RowEvent::Reroute => "reroute",
            RowEvent::Terminate => "terminate",
            RowEvent::Depart => "depart",
            RowEvent::Isolated => "isolated",
            RowEvent::Connected => "connected",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowOutcome {
    Accepted,
    Rejected(RejectReason),
    None,
}

/// One line of `decisions.log`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRow {
    pub time: SimTime,
    pub flow: Option<FlowId>,
    pub event: RowEvent,
    pub kind: Option<FlowKind>,
    pub fog: FogId,
    pub outcome: RowOutcome,
    pub rule: Option<String>,
    pub locality: Option<Locality>,
    pub slice: Option<u32>,
    pub qos: Option<String>,
    pub latency: Option<f64>,
    pub path: Option<String>,
    pub cache: Option<CacheOutcome>,
    pub candidates: Option<String>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), T::to_string)
}

pub fn cache_name(c: CacheOutcome) -> &'static str {
    match c {
        CacheOutcome::Hit => "hit",
        CacheOutcome::Miss => "miss",
    }
}

impl DecisionRow {
    pub fn new(time: SimTime, flow: Option<FlowId>, event: RowEvent, fog: FogId) -> Self {
        DecisionRow {
            time,
            flow,
            event,
            kind: None,
            fog,
            outcome: RowOutcome::None,
            rule: None,
            locality: None,
            slice: None,
            qos: None,
            latency: None,
            path: None,
            cache: None,
            candidates: None,
        }
    }

    pub fn line(&self) -> String {
        let outcome = match self.outcome {
            RowOutcome::Accepted => "accepted".to_string(),
            RowOutcome::Rejected(r) => r.name().to_string(),
            RowOutcome::None => "-".to_string(),
        };
        let mut s = String::new();
        write!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.time,
            opt(&self.flow.map(|f| f.0)),
            self.event.name(),
            opt(&self.kind.map(FlowKind::name)),
            self.fog.0,
            outcome,
            opt(&self.rule),
            opt(&self.locality.map(Locality::name)),
            opt(&self.slice),
            opt(&self.qos),
            opt(&self.latency),
            opt(&self.path),
            opt(&self.cache.map(cache_name)),
            opt(&self.candidates),
        )
        .expect("string write");
        s
    }

    pub fn parse(line: &str) -> Result<DecisionRow, String> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 14 {
            return Err(format!("expected 14 columns, found {}", cols.len()));
        }
        let some = |s: &str| (s != "-").then(|| s.to_string());
        let num = |s: &str, what: &str| -> Result<Option<u64>, String> {
            if s == "-" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| format!("bad {what} {s:?}"))
            }
        };
        let event = RowEvent::ALL
            .into_iter()
            .find(|e| e.name() == cols[2])
            .ok_or_else(|| format!("bad event {:?}", cols[2]))?;
        let outcome = match cols[5] {
            "-" => RowOutcome::None,
            "accepted" => RowOutcome::Accepted,
            r => RowOutcome::Rejected(RejectReason::from_name(r).ok_or_else(|| format!("bad outcome {r:?}"))?),
        };
        Ok(DecisionRow {
            time: SimTime(num(cols[0], "time")?.ok_or("missing time")?),
            flow: num(cols[1], "flow")?.map(FlowId),
            event,
            kind: match cols[3] {
                "-" => None,
                k => Some(FlowKind::from_name(k).ok_or_else(|| format!("bad kind {k:?}"))?),
            },
            fog: FogId(num(cols[4], "fog")?.ok_or("missing fog")? as u32),
            outcome,
            rule: some(cols[6]),
            locality: match cols[7] {
                "-" => None,
                "local" => Some(Locality::IntraFogLocal),
                "cloud" => Some(Locality::CloudBound),
                l => return Err(format!("bad locality {l:?}")),
            },
            slice: num(cols[8], "slice")?.map(|s| s as u32),
            qos: some(cols[9]),
            latency: match cols[10] {
                "-" => None,
                l => Some(l.parse().map_err(|_| format!("bad latency {l:?}"))?),
            },
            path: some(cols[11]),
            cache: match cols[12] {
                "-" => None,
                "hit" => Some(CacheOutcome::Hit),
                "miss" => Some(CacheOutcome::Miss),
                c => return Err(format!("bad cache outcome {c:?}")),
            },
            candidates: some(cols[13]),
        })
    }
}

/// One line of `rates.log`: a flow's allocation and backhaul crossing
/// count from `time` on. Zero/zero closes the flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateRow {
    pub time: SimTime,
    pub flow: FlowId,
    pub rate: f64,
    pub backhaul_links: u32,
}

impl RateRow {
    pub fn line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.time, self.flow.0, self.rate, self.backhaul_links)
    }

    pub fn parse(line: &str) -> Result<RateRow, String> {
        let cols: Vec<&str> = line.split('\t').collect();
        let [t, f, r, b] = cols[..] else {
            return Err(format!("expected 4 columns, found {}", cols.len()));
        };
        let bad = |what: &str, s: &str| format!("bad {what} {s:?}");
        Ok(RateRow {
            time: SimTime(t.parse().map_err(|_| bad("time", t))?),
            flow: FlowId(f.parse().map_err(|_| bad("flow", f))?),
            rate: r.parse().map_err(|_| bad("rate", r))?,
            backhaul_links: b.parse().map_err(|_| bad("backhaul count", b))?,
        })
    }
}

fn reason_index(r: RejectReason) -> usize {
    RejectReason::ALL.iter().position(|&x| x == r).expect("listed")
}

/// Counters over decision rows.
#[derive(Clone, Debug, Default)]
pub struct Tally {
    pub requests: u64,
    pub admitted: u64,
    pub rejected: [u64; 8],
    pub terminated: [u64; 8],
    pub departed: u64,
    pub reroutes: u64,
    latency_sum: [f64; 4],
    latency_n: [u64; 4],
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub isolations: u64,
    pub survivors: u64,
    active: BTreeMap<FlowId, FogId>,
    onset: Option<(SimTime, BTreeSet<FlowId>)>,
}

impl Tally {
    fn close_onset(&mut self) {
        if let Some((_, alive)) = self.onset.take() {
            self.survivors += alive.len() as u64;
        }
    }

    pub fn feed(&mut self, row: &DecisionRow) {
        let same_onset = matches!(
            (&self.onset, row.event, row.outcome),
            (Some((t, _)), RowEvent::Terminate, RowOutcome::Rejected(RejectReason::FogIsolated)) if *t == row.time
        );
        if !same_onset {
            self.close_onset();
        }
        match row.event {
            RowEvent::Request => {
                self.requests += 1;
                match row.outcome {
                    RowOutcome::Accepted => {
                        self.admitted += 1;
                        if let (Some(k), Some(l)) = (row.kind, row.latency) {
                            self.latency_sum[k.index()] += l;
                            self.latency_n[k.index()] += 1;
                        }
                        if let Some(f) = row.flow {
                            self.active.insert(f, row.fog);
                        }
                    }
                    RowOutcome::Rejected(r) => self.rejected[reason_index(r)] += 1,
                    RowOutcome::None => {}
                }
                match row.cache {
                    Some(CacheOutcome::Hit) => self.cache_hits += 1,
                    Some(CacheOutcome::Miss) => self.cache_misses += 1,
                    None => {}
                }
            }
            RowEvent::Reroute => self.reroutes += 1,
            RowEvent::Terminate => {
                if let RowOutcome::Rejected(r) = row.outcome {
                    self.terminated[reason_index(r)] += 1;
                }
                if let Some(f) = row.flow {
                    self.active.remove(&f);
                    if let Some((_, alive)) = self.onset.as_mut() {
                        alive.remove(&f);
                    }
                }
            }
            RowEvent::Depart => {
                self.departed += 1;
                if let Some(f) = row.flow {
                    self.active.remove(&f);
                }
            }
            RowEvent::Isolated => {
                self.isolations += 1;
                let alive = self
                    .active
                    .iter()
                    .filter(|(_, &fog)| fog == row.fog)
                    .map(|(&f, _)| f)
                    .collect();
                self.onset = Some((row.time, alive));
            }
            RowEvent::Connected => {}
        }
    }

    pub fn finish(&mut self) {
        self.close_onset();
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected.iter().sum()
    }

    pub fn mean_latency(&self, kind: FlowKind) -> Option<f64> {
        let i = kind.index();
        (self.latency_n[i] > 0).then(|| self.latency_sum[i] / self.latency_n[i] as f64)
    }

    pub fn hit_rate(&self) -> f64 {
        let n = self.cache_hits + self.cache_misses;
        if n == 0 {
            0.0
        } else {
            self.cache_hits as f64 / n as f64
        }
    }
}

/// Integrates rate times backhaul crossings over time, per flow.
#[derive(Clone, Debug, Default)]
pub struct BackhaulMeter {
    open: BTreeMap<FlowId, (f64, u32, SimTime)>,
    /// Mb/s times ms, per flow.
    acc: BTreeMap<FlowId, f64>,
}

/// Mb/s over one millisecond, in bytes.
const BYTES_PER_MBPS_MS: f64 = 125.0;

impl BackhaulMeter {
    pub fn feed(&mut self, row: &RateRow) {
        if let Some((rate, n, since)) = self.open.remove(&row.flow) {
            *self.acc.entry(row.flow).or_insert(0.0) += rate * n as f64 * row.time.since(since) as f64;
        }
        if row.rate != 0.0 || row.backhaul_links != 0 {
            self.open.insert(row.flow, (row.rate, row.backhaul_links, row.time));
        }
    }

    /// Closed segments only, summed in flow-id order.
    pub fn bytes(&self) -> f64 {
        self.acc.values().sum::<f64>() * BYTES_PER_MBPS_MS
    }

    /// Including open segments up to `now`.
    pub fn bytes_at(&self, now: SimTime) -> f64 {
        let mut acc = self.acc.clone();
        for (&f, &(rate, n, since)) in &self.open {
            *acc.entry(f).or_insert(0.0) += rate * n as f64 * now.since(since) as f64;
        }
        acc.values().sum::<f64>() * BYTES_PER_MBPS_MS
    }

    pub fn open_flows(&self) -> Vec<FlowId> {
        self.open.keys().copied().collect()
    }
}

/// End-of-run figures recomputable from `decisions.log` and `rates.log`.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub requests: u64,
    pub admitted: u64,
    pub rejected: [u64; 8],
    pub terminated: [u64; 8],
    pub departed: u64,
    pub reroutes: u64,
    pub mean_latency_ms: [Option<f64>; 4],
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub cache_hit_rate: f64,
    pub isolations: u64,
    pub isolation_survivors: u64,
    pub backhaul_bytes: f64,
}

impl Summary {
    pub fn from_parts(tally: &Tally, meter: &BackhaulMeter) -> Summary {
        Summary {
            requests: tally.requests,
            admitted: tally.admitted,
            rejected: tally.rejected,
            terminated: tally.terminated,
            departed: tally.departed,
            reroutes: tally.reroutes,
            mean_latency_ms: FlowKind::ALL.map(|k| tally.mean_latency(k)),
            cache_hits: tally.cache_hits,
            cache_misses: tally.cache_misses,
            cache_hit_rate: tally.hit_rate(),
            isolations: tally.isolations,
            isolation_survivors: tally.survivors,
            backhaul_bytes: meter.bytes(),
        }
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected.iter().sum()
    }

    pub fn rejected_for(&self, r: RejectReason) -> u64 {
        self.rejected[reason_index(r)]
    }

    pub fn terminated_for(&self, r: RejectReason) -> u64 {
        self.terminated[reason_index(r)]
    }

    /// `key<TAB>value` lines.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("metric\tvalue\n");
        let mut put = |k: &str, v: String| {
            writeln!(s, "{k}\t{v}").expect("string write");
        };
        put("requests", self.requests.to_string());
        put("admitted", self.admitted.to_string());
        put("rejected", self.rejected_total().to_string());
        for (r, n) in RejectReason::ALL.iter().zip(self.rejected) {
            put(&format!("rejected.{}", r.name()), n.to_string());
        }
        for (r, n) in RejectReason::ALL.iter().zip(self.terminated) {
            put(&format!("terminated.{}", r.name()), n.to_string());
        }
        put("departed", self.departed.to_string());
        put("reroutes", self.reroutes.to_string());
        for (k, l) in FlowKind::ALL.iter().zip(self.mean_latency_ms) {
            put(&format!("mean_latency_ms.{}", k.name()), opt(&l));
        }
        put("cache_hits", self.cache_hits.to_string());
        put("cache_misses", self.cache_misses.to_string());
        put("cache_hit_rate", self.cache_hit_rate.to_string());
        put("isolations", self.isolations.to_string());
        put("isolation_survivors", self.isolation_survivors.to_string());
        put("backhaul_bytes", self.backhaul_bytes.to_string());
        s
    }
}
