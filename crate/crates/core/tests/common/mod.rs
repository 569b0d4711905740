//! Reference implementations the integration tests compare against. Each is
//! written from the rule it checks, not from the library code.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use num_rational::Ratio;

use fogsim::fogctrl::RejectReason;
use fogsim::ids::{FogId, SliceId};
use fogsim::topology::{Link, LinkClass, LinkId, LinkState, NodeId, NodeKind, Topology};

pub type Q = Ratio<i128>;

/// Exact water filling. Every unfrozen flow sits at the same level; the next
/// level is the lowest point where a link fills or a demand is met.
pub fn water_fill(caps: &[Q], flows: &[(Vec<usize>, Q)]) -> Vec<Q> {
    let n = flows.len();
    let mut alloc = vec![Q::from_integer(0); n];
    let mut frozen = vec![false; n];
    for (i, (links, demand)) in flows.iter().enumerate() {
        if *demand <= Q::from_integer(0) {
            frozen[i] = true;
        } else if links.is_empty() {
            alloc[i] = *demand;
            frozen[i] = true;
        }
    }
    loop {
        let open: Vec<usize> = (0..n).filter(|&i| !frozen[i]).collect();
        if open.is_empty() {
            return alloc;
        }
        let on = |i: usize, l: usize| flows[i].0.contains(&l);
        let fixed = |l: usize, alloc: &[Q]| -> Q {
            (0..n).filter(|&i| frozen[i] && on(i, l)).map(|i| alloc[i]).sum()
        };
        let mut level: Option<Q> = None;
        for (l, cap) in caps.iter().enumerate() {
            let k = open.iter().filter(|&&i| on(i, l)).count();
            if k > 0 {
                let lv = (*cap - fixed(l, &alloc)) / Q::from(k as i128);
                level = Some(level.map_or(lv, |m| m.min(lv)));
            }
        }
        for &i in &open {
            level = Some(level.map_or(flows[i].1, |m| m.min(flows[i].1)));
        }
        let level = level.expect("open flows cross links or have demand");
        for &i in &open {
            alloc[i] = level;
        }
        let full: Vec<usize> = (0..caps.len())
            .filter(|&l| {
                open.iter().any(|&i| on(i, l))
                    && fixed(l, &alloc)
                        + Q::from(open.iter().filter(|&&i| on(i, l)).count() as i128) * level
                        >= caps[l]
            })
            .collect();
        for &i in &open {
            if flows[i].1 <= level || full.iter().any(|&l| on(i, l)) {
                frozen[i] = true;
            }
        }
    }
}

pub fn q_to_f64(q: &Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Least-recently-used cache that always admits on a miss.
pub struct LruOracle {
    capacity: usize,
    recent: VecDeque<u64>,
    pub hits: u64,
    pub misses: u64,
}

impl LruOracle {
    pub fn new(capacity: usize) -> Self {
        LruOracle {
            capacity,
            recent: VecDeque::new(),
            hits: 0,
            misses: 0,
        }
    }

    /// Returns the evicted id on a miss that overflowed.
    pub fn access(&mut self, id: u64) -> (bool, Option<u64>) {
        if let Some(pos) = self.recent.iter().position(|&x| x == id) {
            self.recent.remove(pos);
            self.recent.push_front(id);
            self.hits += 1;
            return (true, None);
        }
        self.misses += 1;
        self.recent.push_front(id);
        let evicted = if self.recent.len() > self.capacity {
            self.recent.pop_back()
        } else {
            None
        };
        (false, evicted)
    }

    pub fn hit_rate(&self) -> f64 {
        let n = self.hits + self.misses;
        if n == 0 {
            0.0
        } else {
            self.hits as f64 / n as f64
        }
    }
}

// ---------------------------------------------------------------------------
// Path selection by exhaustive enumeration.

#[derive(Clone, Copy, Debug)]
pub struct End {
    pub node: NodeId,
    pub fog: FogId,
    pub wlan_ap: Option<NodeId>,
    pub macro_access: bool,
    pub mobile: bool,
}

#[derive(Clone, Copy, Debug)]
pub enum Ask {
    Users(End, End),
    /// Flow between the internet and a user; `upstream` if the user sends.
    Internet { user: End, upstream: bool },
}

#[derive(Clone, Debug)]
pub struct Reservation {
    pub flow: u64,
    pub slice: SliceId,
    pub rate: f64,
}

/// Network state the oracle decides on.
pub struct World<'a> {
    pub topo: &'a Topology,
    pub down_nodes: &'a [NodeId],
    /// Current allocated rate summed per link id.
    pub load: BTreeMap<LinkId, f64>,
    pub reserved: BTreeMap<LinkId, Vec<Reservation>>,
    /// Share of a slice on a link class, 1 for internal links.
    pub share: &'a dyn Fn(LinkClass, SliceId) -> f64,
    pub connected: &'a dyn Fn(FogId) -> bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fail {
    Gbr,
    NoRoute,
    Isolated,
}

struct Built {
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
    local: bool,
}

impl World<'_> {
    fn link(&self, id: LinkId) -> &Link {
        self.topo.links().iter().find(|l| l.id == id).unwrap()
    }

    fn alive(&self, l: &Link) -> bool {
        l.state == LinkState::Up && l.endpoints.iter().all(|n| !self.down_nodes.contains(n))
    }

    fn cap(&self, l: &Link) -> f64 {
        if self.alive(l) {
            l.capacity
        } else {
            0.0
        }
    }

    fn reservations(&self, l: LinkId) -> &[Reservation] {
        self.reserved.get(&l).map_or(&[], |v| v.as_slice())
    }

    fn room(&self, l: &Link, slice: SliceId) -> f64 {
        let cap = self.cap(l);
        let all: f64 = self.reservations(l.id).iter().map(|r| r.rate).sum();
        let mine: f64 = self
            .reservations(l.id)
            .iter()
            .filter(|r| r.slice == slice)
            .map(|r| r.rate)
            .sum();
        (cap - all).min((self.share)(l.class, slice) * cap - mine)
    }

    fn fits(&self, links: &[LinkId], flow: u64, slice: SliceId, gbr: f64) -> bool {
        links.iter().all(|&id| {
            let l = self.link(id);
            let cap = self.cap(l);
            let mut rs: Vec<Reservation> = self.reservations(id).to_vec();
            rs.push(Reservation { flow, slice, rate: gbr });
            rs.sort_by_key(|r| r.flow);
            let all = rs.iter().fold(0.0, |a, r| a + r.rate);
            let mine = rs.iter().filter(|r| r.slice == slice).fold(0.0, |a, r| a + r.rate);
            all <= cap && mine <= (self.share)(l.class, slice) * cap
        })
    }

    fn busiest(&self, links: &[LinkId]) -> f64 {
        links
            .iter()
            .map(|&id| {
                let cap = self.cap(self.link(id));
                let load = self.load.get(&id).copied().unwrap_or(0.0);
                if cap > 0.0 {
                    load / cap
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    /// Every simple path between two nodes over internal and middle-mile links.
    fn simple_paths(&self, a: NodeId, b: NodeId, ok: &dyn Fn(&Link) -> bool) -> Vec<(Vec<NodeId>, Vec<LinkId>)> {
        let mut out = Vec::new();
        let mut nodes = vec![a];
        let mut links = Vec::new();
        self.dfs(b, ok, &mut nodes, &mut links, &mut out);
        out
    }

    fn dfs(
        &self,
        goal: NodeId,
        ok: &dyn Fn(&Link) -> bool,
        nodes: &mut Vec<NodeId>,
        links: &mut Vec<LinkId>,
        out: &mut Vec<(Vec<NodeId>, Vec<LinkId>)>,
    ) {
        let at = *nodes.last().unwrap();
        if at == goal {
            out.push((nodes.clone(), links.clone()));
            return;
        }
        for l in self.topo.links() {
            if !matches!(l.class, LinkClass::Internal | LinkClass::MiddleMile) || !ok(l) {
                continue;
            }
            let next = if l.endpoints[0] == at {
                l.endpoints[1]
            } else if l.endpoints[1] == at {
                l.endpoints[0]
            } else {
                continue;
            };
            if nodes.contains(&next) {
                continue;
            }
            nodes.push(next);
            links.push(l.id);
            self.dfs(goal, ok, nodes, links, out);
            nodes.pop();
            links.pop();
        }
    }

    /// Fewest hops, then smallest node sequence, then smallest link ids.
    fn segment(&self, a: NodeId, b: NodeId, slice: SliceId, gbr: Option<f64>) -> Result<(Vec<NodeId>, Vec<LinkId>), Fail> {
        let alive = |l: &Link| self.alive(l);
        if self.simple_paths(a, b, &alive).is_empty() {
            return Err(Fail::NoRoute);
        }
        let roomy = |l: &Link| self.alive(l) && gbr.is_none_or(|g| self.room(l, slice) >= g);
        self.simple_paths(a, b, &roomy)
            .into_iter()
            .min_by(|x, y| (x.1.len(), &x.0, &x.1).cmp(&(y.1.len(), &y.0, &y.1)))
            .ok_or(Fail::Gbr)
    }

    fn pop(&self, fog: FogId) -> NodeId {
        self.topo
            .nodes()
            .iter()
            .find(|n| n.kind == NodeKind::PoP && n.fog == Some(fog))
            .unwrap()
            .id
    }

    fn gateway(&self) -> NodeId {
        self.topo.nodes().iter().find(|n| n.kind == NodeKind::CloudGateway).unwrap().id
    }

    fn uplink(&self, fog: FogId, slice: SliceId, gbr: Option<f64>) -> Result<LinkId, Fail> {
        let pop = self.pop(fog);
        let mut ups: Vec<&Link> = self
            .topo
            .links()
            .iter()
            .filter(|l| l.class == LinkClass::Backhaul && l.endpoints.contains(&pop) && self.alive(l))
            .collect();
        ups.sort_by_key(|l| l.id);
        if ups.is_empty() {
            return Err(if (self.connected)(fog) { Fail::NoRoute } else { Fail::Isolated });
        }
        Ok(match gbr {
            Some(g) => ups.iter().find(|l| self.room(l, slice) >= g).unwrap_or(&ups[0]).id,
            None => ups[0].id,
        })
    }

    /// Access choices: (wlan?, station, access link), WLAN first.
    fn accesses(&self, e: &End) -> Vec<(bool, NodeId, LinkId)> {
        let mut out = Vec::new();
        let find = |class: LinkClass, station: Option<NodeId>| {
            self.topo.links().iter().find(|l| {
                l.class == class
                    && l.endpoints.contains(&e.node)
                    && station.is_none_or(|s| l.endpoints.contains(&s))
            })
        };
        if let Some(ap) = e.wlan_ap {
            if let Some(l) = find(LinkClass::WlanAccess, Some(ap)).filter(|l| self.alive(l)) {
                out.push((true, ap, l.id));
            }
        }
        if e.macro_access {
            if let Some(l) = find(LinkClass::MacroAccess, None).filter(|l| self.alive(l)) {
                let bs = if l.endpoints[0] == e.node { l.endpoints[1] } else { l.endpoints[0] };
                out.push((false, bs, l.id));
            }
        }
        out
    }

    /// The chosen node sequence, or the reason nothing qualifies.
    pub fn choose(&self, flow: u64, ask: &Ask, slice: SliceId, gbr: Option<f64>, prefer_local: bool) -> Result<Vec<NodeId>, RejectReason> {
        let miss = |e: &End, wlan: bool| u32::from(wlan == e.mobile);
        // (status, mobility penalty) per candidate in enumeration order
        let mut cands: Vec<(Result<Built, Fail>, u32)> = Vec::new();
        match ask {
            Ask::Users(a, b) => {
                let (oa, ob) = (self.accesses(a), self.accesses(b));
                if oa.is_empty() || ob.is_empty() {
                    return Err(RejectReason::NoCoverage);
                }
                for &(wa, sa, la) in &oa {
                    for &(wb, sb, lb) in &ob {
                        let built = (|| {
                            let mut nodes = vec![a.node];
                            let mut links = vec![la];
                            let local = a.fog == b.fog;
                            if local {
                                let (n, l) = self.segment(sa, sb, slice, gbr)?;
                                nodes.extend(n);
                                links.extend(l);
                            } else {
                                let ua = self.uplink(a.fog, slice, gbr)?;
                                let ub = self.uplink(b.fog, slice, gbr)?;
                                let (n1, l1) = self.segment(sa, self.pop(a.fog), slice, gbr)?;
                                let (n2, l2) = self.segment(self.pop(b.fog), sb, slice, gbr)?;
                                nodes.extend(n1);
                                links.extend(l1);
                                nodes.push(self.gateway());
                                links.extend([ua, ub]);
                                nodes.extend(n2);
                                links.extend(l2);
                            }
                            nodes.push(b.node);
                            links.push(lb);
                            Ok(Built { nodes, links, local })
                        })();
                        cands.push((built, miss(a, wa) + miss(b, wb)));
                    }
                }
            }
            Ask::Internet { user, upstream } => {
                let opts = self.accesses(user);
                if opts.is_empty() {
                    return Err(RejectReason::NoCoverage);
                }
                for &(w, s, l) in &opts {
                    let built = (|| {
                        let up = self.uplink(user.fog, slice, gbr)?;
                        let (n, ls) = self.segment(self.pop(user.fog), s, slice, gbr)?;
                        let mut nodes = vec![self.gateway()];
                        nodes.extend(n);
                        nodes.push(user.node);
                        let mut links = vec![up];
                        links.extend(ls);
                        links.push(l);
                        if *upstream {
                            nodes.reverse();
                            links.reverse();
                        }
                        Ok(Built { nodes, links, local: false })
                    })();
                    cands.push((built, miss(user, w)));
                }
            }
        }

        let mut best: Option<((u8, u32, f64, usize), Vec<NodeId>)> = None;
        let mut fails = Vec::new();
        for (built, mobility) in cands {
            let b = match built {
                Ok(b) => b,
                Err(f) => {
                    fails.push(f);
                    continue;
                }
            };
            if let Some(g) = gbr {
                if !self.fits(&b.links, flow, slice, g) {
                    fails.push(Fail::Gbr);
                    continue;
                }
            }
            let key = (u8::from(prefer_local && !b.local), mobility, self.busiest(&b.links), b.links.len());
            let better = match &best {
                None => true,
                Some((k, nodes)) => {
                    let ord = key.0.cmp(&k.0)
                        .then(key.1.cmp(&k.1))
                        .then(key.2.total_cmp(&k.2))
                        .then(key.3.cmp(&k.3))
                        .then(b.nodes.cmp(nodes));
                    ord.is_lt()
                }
            };
            if better {
                best = Some((key, b.nodes));
            }
        }
        match best {
            Some((_, nodes)) => Ok(nodes),
            None if fails.contains(&Fail::Gbr) => Err(RejectReason::GbrAdmissionFail),
            None if fails.contains(&Fail::NoRoute) || fails.is_empty() => Err(RejectReason::NoRoute),
            None => Err(RejectReason::FogIsolated),
        }
    }
}
