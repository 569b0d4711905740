//! Traffic and mobility generation.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Exp, Zipf};

use crate::engine::SimTime;
use crate::fogctrl::{AppClass, Endpoint};
use crate::ids::{ContentId, NodeId};
use crate::topology::{Attachment, Topology};

use super::config::{FlowKind, Scenario, WorkloadSpec};
use super::seeds::{stream_rng, Stream};

/// One flow request before it is given an id.
#[derive(Clone, Debug, PartialEq)]
pub struct Arrival {
    pub time: SimTime,
    pub kind: FlowKind,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub class: AppClass,
    pub demand: f64,
    pub holding_ms: u64,
}

/// Whole milliseconds, at least one.
fn holding(rng: &mut impl Rng, mean_ms: f64) -> u64 {
    let d = Exp::new(1.0 / mean_ms).expect("mean checked positive");
    (d.sample(rng).ceil() as u64).max(1)
}

/// Poisson arrivals per class over `[0, duration]`, sorted by time with ties
/// in class order. Local voice pairs two users of one fog; content ids
/// follow a Zipf law over the catalog; web traffic downloads to a uniformly
/// chosen user.
pub fn generate_workload(spec: &WorkloadSpec, topo: &Topology, duration: SimTime, seed: u64) -> Vec<Arrival> {
    let mut rng = stream_rng(seed, Stream::Workload);
    let users: Vec<NodeId> = topo.users().collect();
    let voice_users: Vec<NodeId> = users
        .iter()
        .copied()
        .filter(|&u| topo.fog_of(u).is_some_and(|f| topo.users_in_fog(f).len() >= 2))
        .collect();
    let zipf = Zipf::new(spec.catalog as f64, spec.zipf).expect("catalog and exponent checked");
    let end = duration.as_ms() as f64;

    let mut out = Vec::new();
    for c in spec.classes() {
        let pool = match c.kind {
            FlowKind::LocalVoip => &voice_users,
            _ => &users,
        };
        if !(c.rate > 0.0) || pool.is_empty() {
            continue;
        }
        let gap = Exp::new(c.rate / 1000.0).expect("rate checked positive");
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            if t > end {
                break;
            }
            let user = *pool.choose(&mut rng).expect("non-empty");
            let (src, dst, class) = match c.kind {
                FlowKind::LocalVoip => {
                    let fog = topo.fog_of(user).expect("users belong to a fog");
                    let peers: Vec<NodeId> = topo.users_in_fog(fog).into_iter().filter(|&p| p != user).collect();
                    let peer = *peers.choose(&mut rng).expect("fog has two users");
                    (Endpoint::User(user), Endpoint::User(peer), AppClass::Voip)
                }
                FlowKind::Content => {
                    let id = zipf.sample(&mut rng) as u32;
                    (Endpoint::Content(ContentId(id)), Endpoint::User(user), AppClass::Content)
                }
                _ => (Endpoint::External, Endpoint::User(user), AppClass::Web),
            };
            out.push(Arrival {
                time: SimTime(t as u64),
                kind: c.kind,
                src,
                dst,
                class,
                demand: c.demand,
                holding_ms: holding(&mut rng, c.holding_mean_ms),
            });
        }
    }
    out.sort_by_key(|a| a.time);
    out
}

/// Generated plus scripted arrivals of a scenario, in the order flow ids
/// are assigned.
pub fn scenario_arrivals(sc: &Scenario) -> Vec<Arrival> {
    let duration = SimTime(sc.cfg.duration_ms);
    let mut out = generate_workload(&sc.cfg.workload, &sc.topo, duration, sc.cfg.seed);
    out.extend(sc.scripted.iter().map(|(f, src, dst)| Arrival {
        time: SimTime(f.at_ms),
        kind: FlowKind::Scripted,
        src: *src,
        dst: *dst,
        class: f.class,
        demand: f.demand,
        holding_ms: f.holding_ms,
    }));
    out.sort_by_key(|a| a.time);
    out
}

/// The `round(fraction * users)` users that move, chosen by seed.
pub fn pick_mobile(topo: &Topology, fraction: f64, seed: u64) -> BTreeSet<NodeId> {
    let mut users: Vec<NodeId> = topo.users().collect();
    users.sort();
    let n = (fraction * users.len() as f64).round() as usize;
    users.shuffle(&mut stream_rng(seed, Stream::Mobility));
    users.into_iter().take(n).collect()
}

/// Every non-empty attachment the user's access links allow.
pub fn attachment_options(topo: &Topology, user: NodeId) -> Vec<Attachment> {
    let has_macro = topo.macro_link(user).is_some();
    let mut out: Vec<Attachment> = topo
        .wlan_options(user)
        .into_iter()
        .map(|ap| Attachment {
            wlan_ap: Some(ap),
            macro_bs: has_macro,
        })
        .collect();
    if has_macro {
        out.push(Attachment {
            wlan_ap: None,
            macro_bs: true,
        });
    }
    out
}

/// Relocations of each mobile user as a Poisson process, each to a
/// different attachment drawn uniformly from its options.
pub fn generate_mobility(
    topo: &Topology,
    mobile: &[NodeId],
    rate_per_s: f64,
    duration: SimTime,
    seed: u64,
) -> Vec<(SimTime, NodeId, Attachment)> {
    let mut out = Vec::new();
    if !(rate_per_s > 0.0) {
        return out;
    }
    let mut rng = stream_rng(seed, Stream::Roaming);
    let gap = Exp::new(rate_per_s / 1000.0).expect("rate checked positive");
    let end = duration.as_ms() as f64;
    for &user in mobile {
        let options = attachment_options(topo, user);
        let mut current = topo.home_attachment(user);
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            if t > end {
                break;
            }
            let choices: Vec<&Attachment> = options.iter().filter(|a| **a != current).collect();
            let Some(&&next) = choices.choose(&mut rng) else {
                continue;
            };
            current = next;
            out.push((SimTime(t as u64), user, next));
        }
    }
    out.sort_by_key(|e| e.0);
    out
}
