use proptest::prelude::*;

use super::*;
use crate::dataplane::{FlowPath, Locality, Reservation};
use crate::engine::SimTime;
use crate::fixtures::fig2_topology;
use crate::ids::LinkId;
use crate::slicing::Shares;

fn fog(profile: FogProfile) -> Fog {
    let mut f = Fog::new(FogId(0), profile, Pcrf { voip_gbr: 0.5 }, 4, 16);
    f.create_slice(SliceSpec {
        id: SliceId(0),
        operator: OperatorId::new("opA"),
        shares: Shares::uniform(1.0),
    })
    .unwrap();
    for u in 8..=12 {
        f.add_user(UserRecord {
            user: NodeId(u),
            token: format!("t{u}"),
            subscription: Subscription {
                classes: [AppClass::Voip, AppClass::Web, AppClass::Bulk].into_iter().collect(),
                max_gbr: 1.0,
            },
            operator: OperatorId::new("opA"),
            mobile: false,
        });
    }
    f
}

fn spec(src: Endpoint, dst: Endpoint, class: AppClass) -> FlowSpec {
    FlowSpec {
        id: FlowId(1),
        src,
        dst,
        class,
        demand: 2.0,
        operator: OperatorId::new("opA"),
        start: SimTime(0),
    }
}

#[test]
fn fog_resident_database_authenticates_while_isolated() {
    let mut f = fog(FogProfile::default());
    assert_eq!(f.authenticate_user(NodeId(8), "t8", false), Ok(()));
    assert!(f.has_session(NodeId(8)));
}

#[test]
fn cloud_resident_database_needs_the_cloud() {
    let mut f = fog(FogProfile {
        udf: false,
        ..FogProfile::default()
    });
    assert_eq!(
        f.authenticate_user(NodeId(8), "t8", false),
        Err(AuthError::CloudUnreachable)
    );
    assert_eq!(f.authenticate_user(NodeId(8), "t8", true), Ok(()));
}

#[test]
fn wrong_token_is_rejected_under_any_profile() {
    for udf in [true, false] {
        let mut f = fog(FogProfile {
            udf,
            ..FogProfile::default()
        });
        assert_eq!(
            f.authenticate_user(NodeId(8), "nope", true),
            Err(AuthError::BadCredentials(NodeId(8)))
        );
        assert!(!f.has_session(NodeId(8)));
    }
}

#[test]
fn voip_is_guaranteed_rate_in_the_operator_slice() {
    let mut f = fog(FogProfile::default());
    f.authenticate_user(NodeId(8), "t8", true).unwrap();
    let c = f
        .classify_flow(&spec(Endpoint::User(NodeId(8)), Endpoint::User(NodeId(9)), AppClass::Voip), true)
        .unwrap();
    assert_eq!(
        c,
        Classification {
            qos: QosClass::RealTimeGbr,
            gbr: 0.5,
            slice: SliceId(0)
        }
    );
}

#[test]
fn bulk_is_best_effort() {
    let mut f = fog(FogProfile::default());
    f.authenticate_user(NodeId(8), "t8", true).unwrap();
    let c = f
        .classify_flow(&spec(Endpoint::External, Endpoint::User(NodeId(8)), AppClass::Bulk), true)
        .unwrap();
    assert_eq!((c.qos, c.gbr), (QosClass::BestEffort, 0.0));
}

#[test]
fn unsubscribed_class_is_denied() {
    let mut f = fog(FogProfile::default());
    f.authenticate_user(NodeId(8), "t8", true).unwrap();
    let r = f.classify_flow(
        &spec(Endpoint::Content(ContentId(1)), Endpoint::User(NodeId(8)), AppClass::Content),
        true,
    );
    assert_eq!(r, Err(RejectReason::PolicyDenied));
}

#[test]
fn guaranteed_rate_above_subscription_is_denied() {
    let mut f = fog(FogProfile::default());
    f.pcrf.voip_gbr = 2.0;
    f.authenticate_user(NodeId(8), "t8", true).unwrap();
    let r = f.classify_flow(&spec(Endpoint::User(NodeId(8)), Endpoint::User(NodeId(9)), AppClass::Voip), true);
    assert_eq!(r, Err(RejectReason::PolicyDenied));
}

#[test]
fn cloud_policy_needs_the_cloud() {
    let mut f = fog(FogProfile {
        pcrf: false,
        ..FogProfile::default()
    });
    f.authenticate_user(NodeId(8), "t8", true).unwrap();
    let s = spec(Endpoint::User(NodeId(8)), Endpoint::User(NodeId(9)), AppClass::Web);
    assert_eq!(f.classify_flow(&s, false), Err(RejectReason::CloudUnreachable));
    assert!(f.classify_flow(&s, true).is_ok());
}

#[test]
fn endpoint_resolution_table() {
    let topo = fig2_topology();
    let mut f = fog(FogProfile::default());
    f.cache.as_mut().unwrap().insert(ContentId(3), SimTime(0));
    let u = |n| Endpoint::User(NodeId(n));
    let cases = [
        (u(8), u(11), true),
        (u(8), u(9), true),
        (u(12), u(10), true),
        (Endpoint::External, u(8), false),
        (u(9), Endpoint::External, false),
        (Endpoint::Content(ContentId(3)), u(10), true),
        (Endpoint::Content(ContentId(4)), u(10), false),
    ];
    for (src, dst, local) in cases {
        assert_eq!(f.is_local_flow(&topo, &spec(src, dst, AppClass::Web)), Ok(local), "{src}->{dst}");
    }
    let off = fog(FogProfile {
        cache: false,
        ..FogProfile::default()
    });
    assert_eq!(
        off.is_local_flow(&topo, &spec(Endpoint::Content(ContentId(3)), u(10), AppClass::Web)),
        Ok(false)
    );
    assert_eq!(
        f.is_local_flow(&topo, &spec(u(4), u(8), AppClass::Web)),
        Err(ControlError::UnknownEndpoint(u(4)))
    );
}

#[test]
fn idle_network_view_totals_link_capacities() {
    let topo = fig2_topology();
    let dp = Dataplane::new();
    let view = fog(FogProfile::default()).rat_abstract_view(&topo, &dp);
    let expect = |class| {
        topo.links()
            .iter()
            .filter(|l| ResourceClass::of_link(l.class) == Some(class))
            .map(|l| l.capacity)
            .sum::<f64>()
    };
    for class in ResourceClass::ALL {
        let rat = view.get(class);
        assert_eq!(rat.total, expect(class));
        assert_eq!(rat.reserved_gbr + rat.best_effort_load, 0.0);
        assert!(rat.healthy);
    }
}

fn install(dp: &mut Dataplane, topo: &Topology, flow: u64, nodes: &[u32], rate: f64, gbr: bool) {
    let nodes: Vec<NodeId> = nodes.iter().map(|&n| NodeId(n)).collect();
    let links: Vec<LinkId> = nodes
        .windows(2)
        .map(|w| topo.links_of(w[0]).find(|l| l.other(w[0]) == w[1]).unwrap().id)
        .collect();
    let p = FlowPath {
        flow: FlowId(flow),
        nodes,
        links,
        locality: Locality::IntraFogLocal,
        access: Vec::new(),
    };
    let r = if gbr {
        Reservation::Gbr(rate)
    } else {
        Reservation::BestEffort { demand: rate }
    };
    dp.install_path(topo, p, SliceId(0), r).unwrap();
    dp.set_rate(FlowId(flow), rate);
}

#[test]
fn macro_flow_shows_as_macro_load() {
    let topo = fig2_topology();
    let mut dp = Dataplane::new();
    install(&mut dp, &topo, 1, &[2, 12], 5.0, false);
    let view = fog(FogProfile::default()).rat_abstract_view(&topo, &dp);
    assert_eq!(view.get(ResourceClass::Macro).best_effort_load, 5.0);
    assert_eq!(view.get(ResourceClass::Wlan).best_effort_load, 0.0);
}

proptest! {
    #[test]
    fn view_equals_per_link_summation(flows in proptest::collection::vec((0usize..4, 0.0f64..10.0, any::<bool>()), 0..12)) {
        let topo = fig2_topology();
        let routes: [&[u32]; 4] = [&[1, 3, 4, 5, 8], &[2, 12], &[1, 3, 4, 6, 7, 11], &[8, 5, 4, 6, 7, 10]];
        let mut dp = Dataplane::new();
        for (i, (r, rate, gbr)) in flows.iter().enumerate() {
            install(&mut dp, &topo, i as u64, routes[*r], *rate, *gbr);
        }
        let view = fog(FogProfile::default()).rat_abstract_view(&topo, &dp);
        for class in ResourceClass::ALL {
            let mut gbr = 0.0;
            let mut be = 0.0;
            for link in topo.links().iter().filter(|l| ResourceClass::of_link(l.class) == Some(class)) {
                let (mut g, mut b) = (0.0, 0.0);
                for f in dp.flows().filter(|f| f.path.links.contains(&link.id)) {
                    match f.reservation {
                        Reservation::Gbr(r) => g += r,
                        Reservation::BestEffort { .. } => b += f.rate,
                    }
                }
                gbr += g;
                be += b;
            }
            prop_assert_eq!(view.get(class).reserved_gbr, gbr);
            prop_assert_eq!(view.get(class).best_effort_load, be);
        }
    }
}

#[test]
fn full_share_slice_view_is_the_physical_view() {
    let topo = fig2_topology();
    let dp = Dataplane::new();
    let mut f = fog(FogProfile::default());
    let physical = f.rat_abstract_view(&topo, &dp);
    f.smf.set_physical(physical.rats.map(|r| r.total));
    assert_eq!(f.per_slice_view(SliceId(0), &topo, &dp).unwrap(), physical);
    assert!(matches!(
        f.per_slice_view(SliceId(7), &topo, &dp),
        Err(SliceError::UnknownSlice(SliceId(7)))
    ));
}

#[test]
fn idle_minor_slice_sees_its_fraction() {
    let topo = fig2_topology();
    let dp = Dataplane::new();
    let mut f = Fog::new(FogId(0), FogProfile::default(), Pcrf { voip_gbr: 0.5 }, 4, 16);
    for (id, op, share) in [(0, "A", 0.6), (1, "B", 0.4)] {
        f.create_slice(SliceSpec {
            id: SliceId(id),
            operator: OperatorId::new(op),
            shares: Shares::uniform(share),
        })
        .unwrap();
    }
    let physical = f.rat_abstract_view(&topo, &dp);
    f.smf.set_physical(physical.rats.map(|r| r.total));
    let demands = f.slice_demands(&topo, &dp);
    f.smf.compute_slice_allocations(&demands);
    let view = f.per_slice_view(SliceId(1), &topo, &dp).unwrap();
    for class in ResourceClass::ALL {
        assert_eq!(view.get(class).total, 0.4 * physical.get(class).total);
    }
}

#[test]
fn slices_keep_separate_contexts_and_counters() {
    let topo = fig2_topology();
    let mut f = Fog::new(FogId(0), FogProfile::default(), Pcrf { voip_gbr: 0.5 }, 4, 16);
    for (id, op) in [(0, "A"), (1, "B")] {
        f.create_slice(SliceSpec {
            id: SliceId(id),
            operator: OperatorId::new(op),
            shares: Shares::uniform(0.5),
        })
        .unwrap();
    }
    for (u, op) in [(8, "A"), (9, "B")] {
        f.add_user(UserRecord {
            user: NodeId(u),
            token: String::new(),
            subscription: Subscription::default(),
            operator: OperatorId::new(op),
            mobile: false,
        });
        f.attach_user(&topo, NodeId(u), topo.home_attachment(NodeId(u))).unwrap();
    }
    f.track_flow(SliceId(0), FlowId(4), &[NodeId(8)]);
    f.charge(SliceId(0), AppClass::Web);
    let a = f.racf(SliceId(0)).unwrap();
    let b = f.racf(SliceId(1)).unwrap();
    assert!(a.context(NodeId(9)).is_none());
    assert!(b.context(NodeId(8)).is_none());
    assert_eq!(a.charging(AppClass::Web), 1);
    assert_eq!(b.charging(AppClass::Web), 0);
    assert!(b.flows().is_empty());
    assert_eq!(f.user_flows(NodeId(8)), vec![FlowId(4)]);
}
