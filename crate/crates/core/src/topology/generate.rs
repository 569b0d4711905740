use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Cluster, ClusterId, FogId, Link, LinkClass, LinkId, LinkState, Node, NodeId, NodeKind,
    Topology, TopologyDoc, TopologyError,
};

/// Attempts per cluster before placement is declared infeasible.
const PLACEMENT_RETRIES: u32 = 2_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub capacity: f64,
    pub latency: f64,
}

impl LinkParams {
    const fn new(capacity: f64, latency: f64) -> Self {
        LinkParams { capacity, latency }
    }
}

/// Capacity (Mb/s) and latency (ms) per link role.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkDefaults {
    pub backhaul: LinkParams,
    pub middle_mile: LinkParams,
    pub wlan_access: LinkParams,
    pub macro_access: LinkParams,
    /// PoP to macro BS; carries the macro cell's aggregate capacity.
    pub macro_cell: LinkParams,
    /// Middle-mile client to WLAN AP; carries the AP's aggregate capacity.
    pub wlan_cell: LinkParams,
    /// PoP to middle-mile AP.
    pub internal: LinkParams,
}

impl Default for LinkDefaults {
    fn default() -> Self {
        LinkDefaults {
            backhaul: LinkParams::new(100.0, 10.0),
            middle_mile: LinkParams::new(50.0, 2.0),
            wlan_access: LinkParams::new(30.0, 1.0),
            macro_access: LinkParams::new(20.0, 5.0),
            macro_cell: LinkParams::new(60.0, 0.5),
            wlan_cell: LinkParams::new(100.0, 0.5),
            internal: LinkParams::new(1000.0, 0.1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyGenParams {
    pub clusters: u32,
    pub users_min: u32,
    pub users_max: u32,
    /// Meters.
    pub cluster_radius: f64,
    pub area_side: f64,
    /// Maximum middle-mile links per middle-mile node.
    pub mesh_degree: u32,
    pub macro_radius: f64,
    pub wlan_radius: f64,
    pub seed: u64,
    #[serde(default = "one")]
    pub fogs: u32,
    #[serde(default)]
    pub links: LinkDefaults,
}

fn one() -> u32 {
    1
}

impl Default for TopologyGenParams {
    fn default() -> Self {
        TopologyGenParams {
            clusters: 4,
            users_min: 3,
            users_max: 10,
            cluster_radius: 300.0,
            area_side: 7_000.0,
            mesh_degree: 3,
            macro_radius: 3_000.0,
            wlan_radius: 250.0,
            seed: 1,
            fogs: 1,
            links: LinkDefaults::default(),
        }
    }
}

impl TopologyGenParams {
    fn check(&self) -> Result<(), TopologyError> {
        if self.clusters == 0 || self.users_min == 0 || self.mesh_degree == 0 || self.fogs == 0 {
            return Err(TopologyError::InvalidParams("counts must be at least 1"));
        }
        if self.users_max < self.users_min {
            return Err(TopologyError::InvalidParams("users_max < users_min"));
        }
        let radii = [
            self.cluster_radius,
            self.area_side,
            self.macro_radius,
            self.wlan_radius,
        ];
        if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(TopologyError::InvalidParams("radii must be positive"));
        }
        Ok(())
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

struct Builder {
    doc: TopologyDoc,
    next_node: u32,
    next_link: u32,
}

impl Builder {
    fn node(&mut self, kind: NodeKind, fog: Option<FogId>, pos: [f64; 2]) -> NodeId {
        let id = NodeId(self.next_node);
        self.next_node += 1;
        self.doc.nodes.push(Node { id, kind, fog, pos });
        id
    }

    fn link(&mut self, a: NodeId, b: NodeId, class: LinkClass, p: LinkParams) -> LinkId {
        let id = LinkId(self.next_link);
        self.next_link += 1;
        self.doc.links.push(Link {
            id,
            endpoints: [a, b],
            capacity: p.capacity,
            latency: p.latency,
            state: LinkState::Up,
            class,
        });
        id
    }
}

/// Generates a clustered rural topology. Deterministic in `params.seed`.
///
/// Node ids are assigned in a fixed order: gateway, then per fog its PoP,
/// macro BS and middle-mile AP, then per cluster its client, WLAN AP and
/// users. Each middle-mile client attaches to the nearest already-connected
/// middle-mile node with spare degree; if every connected node is at the
/// degree bound, the nearest one is used regardless so the mesh stays
/// connected.
pub fn generate_clustered(params: &TopologyGenParams) -> Result<Topology, TopologyError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let side = params.area_side;
    let r = params.cluster_radius;

    let mut b = Builder {
        doc: TopologyDoc::default(),
        next_node: 0,
        next_link: 0,
    };
    let centre = [side / 2.0, side / 2.0];
    let gateway = b.node(NodeKind::CloudGateway, None, centre);

    struct FogSite {
        macro_bs: NodeId,
        mm_ap: NodeId,
        pos: [f64; 2],
    }
    let mut sites = Vec::new();
    for f in 0..params.fogs {
        let fog = FogId(f);
        let pos = [(f as f64 + 0.5) / params.fogs as f64 * side, side / 2.0];
        let pop = b.node(NodeKind::PoP, Some(fog), pos);
        let macro_bs = b.node(NodeKind::MacroBS, Some(fog), pos);
        let mm_ap = b.node(NodeKind::MiddleMileAP, Some(fog), pos);
        b.link(pop, gateway, LinkClass::Backhaul, params.links.backhaul);
        b.link(pop, macro_bs, LinkClass::Internal, params.links.macro_cell);
        b.link(pop, mm_ap, LinkClass::Internal, params.links.internal);
        sites.push(FogSite {
            macro_bs,
            mm_ap,
            pos,
        });
    }

    // Cluster centroids, pairwise separated by at least two radii.
    let lo = r.min(side / 2.0);
    let hi = (side - r).max(side / 2.0);
    let mut centroids: Vec<[f64; 2]> = Vec::new();
    for placed in 0..params.clusters {
        let mut found = None;
        for _ in 0..PLACEMENT_RETRIES {
            let c = [rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
            if centroids.iter().all(|o| dist(*o, c) >= 2.0 * r) {
                found = Some(c);
                break;
            }
        }
        match found {
            Some(c) => centroids.push(c),
            None => {
                return Err(TopologyError::InfeasiblePlacement {
                    placed,
                    requested: params.clusters,
                })
            }
        }
    }

    let user_disk = r.min(params.wlan_radius);
    let mut clients_by_fog: Vec<Vec<(NodeId, [f64; 2])>> = vec![Vec::new(); sites.len()];
    for (ci, &centroid) in centroids.iter().enumerate() {
        let fog_idx = (0..sites.len())
            .min_by(|&a, &b| {
                dist(sites[a].pos, centroid)
                    .total_cmp(&dist(sites[b].pos, centroid))
                    .then(a.cmp(&b))
            })
            .unwrap();
        let fog = FogId(fog_idx as u32);
        let client = b.node(NodeKind::MiddleMileClient, Some(fog), centroid);
        let ap = b.node(NodeKind::WlanAP, Some(fog), centroid);
        b.link(client, ap, LinkClass::Internal, params.links.wlan_cell);
        clients_by_fog[fog_idx].push((client, centroid));

        let n_users = rng.random_range(params.users_min..=params.users_max);
        let mut users = Vec::new();
        for _ in 0..n_users {
            let rho = user_disk * rng.random::<f64>().sqrt();
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            let pos = [
                centroid[0] + rho * theta.cos(),
                centroid[1] + rho * theta.sin(),
            ];
            let user = b.node(NodeKind::User, Some(fog), pos);
            b.link(user, ap, LinkClass::WlanAccess, params.links.wlan_access);
            if dist(pos, sites[fog_idx].pos) <= params.macro_radius {
                b.link(
                    user,
                    sites[fog_idx].macro_bs,
                    LinkClass::MacroAccess,
                    params.links.macro_access,
                );
            }
            users.push(user);
        }
        b.doc.clusters.push(Cluster {
            id: ClusterId(ci as u32),
            centroid,
            wlan_aps: vec![ap],
            users,
        });
    }

    for (site, clients) in sites.iter().zip(clients_by_fog.iter_mut()) {
        clients.sort_by(|a, b| {
            dist(a.1, site.pos)
                .total_cmp(&dist(b.1, site.pos))
                .then(a.0.cmp(&b.0))
        });
        // (node, position, mesh degree)
        let mut connected: Vec<(NodeId, [f64; 2], u32)> = vec![(site.mm_ap, site.pos, 0)];
        for &(client, pos) in clients.iter() {
            let nearest = |pool: &mut dyn Iterator<Item = usize>| {
                pool.min_by(|&a, &b| {
                    dist(connected[a].1, pos)
                        .total_cmp(&dist(connected[b].1, pos))
                        .then(connected[a].0.cmp(&connected[b].0))
                })
            };
            let pick =
                nearest(&mut (0..connected.len()).filter(|&i| connected[i].2 < params.mesh_degree))
                    .or_else(|| nearest(&mut (0..connected.len())))
                    .unwrap();
            let peer = connected[pick].0;
            b.link(
                peer,
                client,
                LinkClass::MiddleMile,
                params.links.middle_mile,
            );
            connected[pick].2 += 1;
            connected.push((client, pos, 1));
        }
    }

    Ok(Topology::assemble(b.doc))
}
