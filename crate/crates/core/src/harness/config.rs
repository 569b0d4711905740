//! Scenario files: strict TOML, resolved against the topology they name.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fogctrl::{AppClass, Endpoint, FogProfile, Subscription, UserRecord};
use crate::ids::{FogId, LinkId, NodeId, OperatorId, SliceId};
use crate::network::{FogSetup, NetworkSetup};
use crate::slicing::{SliceManager, SliceSpec, Shares};
use crate::topology::{generate_clustered, LinkClass, NodeKind, Topology, TopologyError, TopologyGenParams};

use super::seeds::{sub_seed, Stream};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario: {field}: {rule}")]
    Validation { field: String, rule: String },
    #[error("topology {source_name}: {error}")]
    Topology {
        source_name: String,
        error: TopologyError,
    },
}

fn invalid(field: impl Into<String>, rule: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        rule: rule.into(),
    }
}

fn yes() -> bool {
    true
}
fn default_tick() -> u64 {
    1_000
}
fn default_rtt() -> u64 {
    40
}
fn default_cache() -> usize {
    10
}
fn default_pool() -> u32 {
    1024
}
fn default_gbr() -> f64 {
    0.1
}
fn default_max_gbr() -> f64 {
    1.0
}
fn default_catalog() -> u32 {
    100
}
fn default_zipf() -> f64 {
    1.0
}
fn default_demand() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub duration_ms: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tick")]
    pub tick_ms: u64,
    /// Round trip to control functions hosted in the cloud.
    #[serde(default = "default_rtt")]
    pub cloud_rtt_ms: u64,
    pub topology: TopologySource,
    #[serde(default, rename = "fog", skip_serializing_if = "Vec::is_empty")]
    pub fogs: Vec<FogConfig>,
    #[serde(default, rename = "slice", skip_serializing_if = "Vec::is_empty")]
    pub slices: Vec<SliceSpec>,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub subscriber_defaults: SubscriberDefaults,
    #[serde(default, rename = "subscriber", skip_serializing_if = "Vec::is_empty")]
    pub subscribers: Vec<SubscriberConfig>,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub faults: FaultSpec,
    /// Directory relative topology files are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Exactly one of `file` or `generate`. A generator table without `seed`
/// gets one derived from the scenario seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<toml::Table>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FogConfig {
    pub id: FogId,
    #[serde(default = "yes")]
    pub udf: bool,
    #[serde(default = "yes")]
    pub pcrf: bool,
    #[serde(default = "yes")]
    pub mlmf: bool,
    #[serde(default = "yes")]
    pub cache: bool,
    #[serde(default = "yes")]
    pub dhcp: bool,
    #[serde(default = "default_cache")]
    pub cache_capacity: usize,
    #[serde(default = "default_pool")]
    pub dhcp_pool: u32,
}

impl FogConfig {
    pub fn setup(&self) -> FogSetup {
        FogSetup {
            profile: FogProfile {
                udf: self.udf,
                pcrf: self.pcrf,
                mlmf: self.mlmf,
                cache: self.cache,
                dhcp: self.dhcp,
            },
            cache_capacity: self.cache_capacity,
            pool_size: self.dhcp_pool,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// Guaranteed rate of voice flows, Mb/s.
    #[serde(default = "default_gbr")]
    pub voip_gbr: f64,
    /// Control traffic per WLAN AP reserved on its middle-mile route, Mb/s.
    #[serde(default)]
    pub wlan_control_overhead: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            voip_gbr: default_gbr(),
            wlan_control_overhead: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscriberDefaults {
    /// Defaults to the first slice's operator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorId>,
    #[serde(default = "all_classes")]
    pub classes: BTreeSet<AppClass>,
    #[serde(default = "default_max_gbr")]
    pub max_gbr: f64,
}

fn all_classes() -> BTreeSet<AppClass> {
    AppClass::ALL.into_iter().collect()
}

impl Default for SubscriberDefaults {
    fn default() -> Self {
        SubscriberDefaults {
            operator: None,
            classes: all_classes(),
            max_gbr: default_max_gbr(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscriberConfig {
    pub user: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    /// What the device presents; a mismatch fails authentication.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presented_token: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mobile: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<BTreeSet<AppClass>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_gbr: Option<f64>,
}

/// Arrival rate, demand and holding time of one traffic class.
/// Unset fields take the class defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassLoad {
    /// Flows per second; overrides the share of the total rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holding_mean_ms: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mix {
    pub local_voip: f64,
    pub content: f64,
    pub external_web: f64,
}

impl Default for Mix {
    fn default() -> Self {
        Mix {
            local_voip: 0.5,
            content: 0.3,
            external_web: 0.2,
        }
    }
}

/// Generated traffic classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowKind {
    LocalVoip,
    Content,
    ExternalWeb,
    Scripted,
}

impl FlowKind {
    pub const ALL: [FlowKind; 4] = [
        FlowKind::LocalVoip,
        FlowKind::Content,
        FlowKind::ExternalWeb,
        FlowKind::Scripted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FlowKind::LocalVoip => "local_voip",
            FlowKind::Content => "content",
            FlowKind::ExternalWeb => "external_web",
            FlowKind::Scripted => "scripted",
        }
    }

    pub fn from_name(s: &str) -> Option<FlowKind> {
        FlowKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Resolved parameters of one generated class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassParams {
    pub kind: FlowKind,
    pub rate: f64,
    pub demand: f64,
    pub holding_mean_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Total generated flows per second, split by `mix`.
    #[serde(default)]
    pub rate: f64,
    #[serde(default)]
    pub mix: Mix,
    #[serde(default)]
    pub local_voip: ClassLoad,
    #[serde(default)]
    pub content: ClassLoad,
    #[serde(default)]
    pub external_web: ClassLoad,
    #[serde(default = "default_catalog")]
    pub catalog: u32,
    #[serde(default = "default_zipf")]
    pub zipf: f64,
    /// Share of users that move; subscriber entries override per user.
    #[serde(default)]
    pub mobile_fraction: f64,
    /// Relocations per mobile user per second.
    #[serde(default)]
    pub relocation_rate: f64,
    #[serde(default, rename = "flow", skip_serializing_if = "Vec::is_empty")]
    pub flows: Vec<ScriptedFlow>,
    #[serde(default, rename = "handover", skip_serializing_if = "Vec::is_empty")]
    pub handovers: Vec<ScriptedHandover>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            rate: 0.0,
            mix: Mix::default(),
            local_voip: ClassLoad::default(),
            content: ClassLoad::default(),
            external_web: ClassLoad::default(),
            catalog: default_catalog(),
            zipf: default_zipf(),
            mobile_fraction: 0.0,
            relocation_rate: 0.0,
            flows: Vec::new(),
            handovers: Vec::new(),
        }
    }
}

impl WorkloadSpec {
    pub fn classes(&self) -> [ClassParams; 3] {
        let resolve = |kind, load: &ClassLoad, share: f64, demand: f64, hold: f64| ClassParams {
            kind,
            rate: load.rate.unwrap_or(self.rate * share),
            demand: load.demand.unwrap_or(demand),
            holding_mean_ms: load.holding_mean_ms.unwrap_or(hold),
        };
        [
            resolve(FlowKind::LocalVoip, &self.local_voip, self.mix.local_voip, 0.1, 120_000.0),
            resolve(FlowKind::Content, &self.content, self.mix.content, 2.0, 30_000.0),
            resolve(FlowKind::ExternalWeb, &self.external_web, self.mix.external_web, 1.0, 20_000.0),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedFlow {
    pub at_ms: u64,
    /// `user:N`, `content:N` or `external`.
    pub src: String,
    pub dst: String,
    pub class: AppClass,
    #[serde(default = "default_demand")]
    pub demand: f64,
    pub holding_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedHandover {
    pub at_ms: u64,
    pub user: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wlan_ap: Option<NodeId>,
    #[serde(default, rename = "macro")]
    pub macro_bs: bool,
}

/// A scheduled outage of one backhaul link, or of all of a fog's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackhaulOutage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fog: Option<FogId>,
    pub down_at_ms: u64,
    /// Absent: down for the rest of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up_at_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeOutage {
    pub node: NodeId,
    pub down_at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up_at_ms: Option<u64>,
}

/// Alternating up/down process with exponential durations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alternating {
    pub mean_up_ms: f64,
    pub mean_down_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub backhaul_outage: Vec<BackhaulOutage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_outage: Vec<NodeOutage>,
    /// Independent process per backhaul link.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backhaul_random: Option<Alternating>,
    /// Independent process per cluster; takes down its APs and their
    /// middle-mile clients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<Alternating>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: base_dir.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// Reads and parses a scenario file. Call [`Scenario::resolve`] to validate.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = ScenarioConfig::from_toml_str(&text, base).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })?;
    cfg.base_dir = base.to_path_buf();
    Ok(cfg)
}

/// A validated scenario with its topology and network setup resolved.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub topo: Topology,
    /// Effective generator parameters when the topology was generated.
    pub gen_params: Option<TopologyGenParams>,
    pub setup: NetworkSetup,
    /// Scripted flows with endpoints parsed.
    pub scripted: Vec<(ScriptedFlow, Endpoint, Endpoint)>,
}

impl Scenario {
    pub fn resolve(cfg: ScenarioConfig) -> Result<Scenario, ConfigError> {
        check_scalars(&cfg)?;
        let (topo, gen_params) = build_topology(&cfg)?;
        let fog_ids: BTreeSet<FogId> = topo.fogs().into_iter().collect();

        let mut fogs = BTreeMap::new();
        for (i, f) in cfg.fogs.iter().enumerate() {
            if !fog_ids.contains(&f.id) {
                return Err(invalid(format!("fog[{i}].id"), format!("{} is not in the topology", f.id)));
            }
            if fogs.insert(f.id, f.setup()).is_some() {
                return Err(invalid(format!("fog[{i}].id"), format!("{} listed twice", f.id)));
            }
            if f.dhcp_pool == 0 || f.dhcp_pool > crate::dataplane::AddressPool::MAX_SIZE {
                return Err(invalid(format!("fog[{i}].dhcp_pool"), "must be in 1..=65534"));
            }
        }

        let slices = if cfg.slices.is_empty() {
            vec![SliceSpec {
                id: SliceId(0),
                operator: OperatorId::new("default"),
                shares: Shares::uniform(1.0),
            }]
        } else {
            cfg.slices.clone()
        };
        let mut smf = SliceManager::new([0.0; 4]);
        for (i, s) in slices.iter().enumerate() {
            smf.create_slice(s.clone())
                .map_err(|e| invalid(format!("slice[{i}]"), e.to_string()))?;
        }
        let operators: BTreeSet<&OperatorId> = slices.iter().map(|s| &s.operator).collect();
        let default_op = match &cfg.subscriber_defaults.operator {
            Some(op) if !operators.contains(op) => {
                return Err(invalid(
                    "subscriber_defaults.operator",
                    format!("no slice for operator {op}"),
                ))
            }
            Some(op) => op.clone(),
            None => slices[0].operator.clone(),
        };

        let users: BTreeSet<NodeId> = topo.users().collect();
        let mut overrides: BTreeMap<NodeId, &SubscriberConfig> = BTreeMap::new();
        for (i, s) in cfg.subscribers.iter().enumerate() {
            if !users.contains(&s.user) {
                return Err(invalid(format!("subscriber[{i}].user"), format!("{} is not a user", s.user)));
            }
            if let Some(op) = &s.operator {
                if !operators.contains(op) {
                    return Err(invalid(
                        format!("subscriber[{i}].operator"),
                        format!("no slice for operator {op}"),
                    ));
                }
            }
            if overrides.insert(s.user, s).is_some() {
                return Err(invalid(format!("subscriber[{i}].user"), "listed twice"));
            }
        }
        let mobile = super::workload::pick_mobile(&topo, cfg.workload.mobile_fraction, cfg.seed);
        let mut records = Vec::new();
        let mut presented = BTreeMap::new();
        for &u in &users {
            let o = overrides.get(&u);
            let token = o
                .and_then(|o| o.token.clone())
                .unwrap_or_else(|| format!("key-{}", u.0));
            if let Some(p) = o.and_then(|o| o.presented_token.clone()) {
                presented.insert(u, p);
            }
            records.push(UserRecord {
                user: u,
                token,
                subscription: Subscription {
                    classes: o
                        .and_then(|o| o.classes.clone())
                        .unwrap_or_else(|| cfg.subscriber_defaults.classes.clone()),
                    max_gbr: o
                        .and_then(|o| o.max_gbr)
                        .unwrap_or(cfg.subscriber_defaults.max_gbr),
                },
                operator: o
                    .and_then(|o| o.operator.clone())
                    .unwrap_or_else(|| default_op.clone()),
                mobile: o
                    .and_then(|o| o.mobile)
                    .unwrap_or_else(|| mobile.contains(&u)),
            });
        }

        let mut scripted = Vec::new();
        for (i, f) in cfg.workload.flows.iter().enumerate() {
            let parse = |s: &str, field: &str| -> Result<Endpoint, ConfigError> {
                let e: Endpoint = s
                    .parse()
                    .map_err(|m: String| invalid(format!("workload.flow[{i}].{field}"), m))?;
                if let Endpoint::User(u) = e {
                    if !users.contains(&u) {
                        return Err(invalid(format!("workload.flow[{i}].{field}"), format!("{u} is not a user")));
                    }
                }
                Ok(e)
            };
            let (src, dst) = (parse(&f.src, "src")?, parse(&f.dst, "dst")?);
            let n_users = [src, dst].iter().filter(|e| matches!(e, Endpoint::User(_))).count();
            if n_users == 0 || src == dst {
                return Err(invalid(format!("workload.flow[{i}]"), "needs a user endpoint and distinct ends"));
            }
            if !(f.demand > 0.0) || f.holding_ms == 0 {
                return Err(invalid(format!("workload.flow[{i}]"), "demand and holding_ms must be > 0"));
            }
            scripted.push((f.clone(), src, dst));
        }
        for (i, h) in cfg.workload.handovers.iter().enumerate() {
            let att = crate::topology::Attachment {
                wlan_ap: h.wlan_ap,
                macro_bs: h.macro_bs,
            };
            if !users.contains(&h.user) || !topo.attachment_consistent(h.user, &att) {
                return Err(invalid(
                    format!("workload.handover[{i}]"),
                    format!("{att} is not reachable from {}", h.user),
                ));
            }
        }
        check_faults(&cfg.faults, &topo)?;

        let mut setup = NetworkSetup::new(topo.clone(), slices, records);
        setup.fogs = fogs;
        setup.presented = presented;
        setup.voip_gbr = cfg.policy.voip_gbr;
        setup.cloud_rtt_ms = cfg.cloud_rtt_ms;
        setup.control_overhead = cfg.policy.wlan_control_overhead;
        Ok(Scenario {
            cfg,
            topo,
            gen_params,
            setup,
            scripted,
        })
    }

    /// Resolved configuration with generator seeds filled in.
    pub fn resolved_toml(&self) -> String {
        let mut cfg = self.cfg.clone();
        if let (Some(p), Some(table)) = (&self.gen_params, cfg.topology.generate.as_mut()) {
            table.insert("seed".into(), toml::Value::Integer(p.seed as i64));
        }
        cfg.to_toml_string()
    }
}

fn check_scalars(cfg: &ScenarioConfig) -> Result<(), ConfigError> {
    if cfg.duration_ms == 0 {
        return Err(invalid("duration_ms", "must be > 0"));
    }
    if cfg.tick_ms == 0 {
        return Err(invalid("tick_ms", "must be > 0"));
    }
    let p = &cfg.policy;
    if !(p.voip_gbr > 0.0 && p.voip_gbr.is_finite()) {
        return Err(invalid("policy.voip_gbr", "must be > 0"));
    }
    if !(p.wlan_control_overhead >= 0.0 && p.wlan_control_overhead.is_finite()) {
        return Err(invalid("policy.wlan_control_overhead", "must be >= 0"));
    }
    let w = &cfg.workload;
    let nonneg = |v: f64| v >= 0.0 && v.is_finite();
    if !nonneg(w.rate) {
        return Err(invalid("workload.rate", "must be >= 0"));
    }
    for (name, v) in [
        ("workload.mix.local_voip", w.mix.local_voip),
        ("workload.mix.content", w.mix.content),
        ("workload.mix.external_web", w.mix.external_web),
        ("workload.mobile_fraction", w.mobile_fraction),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(invalid(name, "must lie in [0, 1]"));
        }
    }
    if !nonneg(w.relocation_rate) {
        return Err(invalid("workload.relocation_rate", "must be >= 0"));
    }
    if !(w.zipf > 0.0 && w.zipf.is_finite()) {
        return Err(invalid("workload.zipf", "must be > 0"));
    }
    if w.catalog == 0 {
        return Err(invalid("workload.catalog", "must be >= 1"));
    }
    for c in w.classes() {
        let name = c.kind.name();
        if !nonneg(c.rate) {
            return Err(invalid(format!("workload.{name}.rate"), "must be >= 0"));
        }
        if !(c.demand > 0.0 && c.demand.is_finite()) {
            return Err(invalid(format!("workload.{name}.demand"), "must be > 0"));
        }
        if !(c.holding_mean_ms > 0.0 && c.holding_mean_ms.is_finite()) {
            return Err(invalid(format!("workload.{name}.holding_mean_ms"), "must be > 0"));
        }
    }
    Ok(())
}

fn build_topology(cfg: &ScenarioConfig) -> Result<(Topology, Option<TopologyGenParams>), ConfigError> {
    match (&cfg.topology.file, &cfg.topology.generate) {
        (Some(file), None) => {
            let path = cfg.base_dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::Io {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let topo = Topology::from_toml_str(&text).map_err(|error| ConfigError::Topology {
                source_name: path.display().to_string(),
                error,
            })?;
            Ok((topo, None))
        }
        (None, Some(table)) => {
            let mut table = table.clone();
            if !table.contains_key("seed") {
                let seed = sub_seed(cfg.seed, Stream::Topology) >> 1;
                table.insert("seed".into(), toml::Value::Integer(seed as i64));
            }
            let params: TopologyGenParams = toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| invalid("topology.generate", e.to_string()))?;
            let topo = generate_clustered(&params).map_err(|error| ConfigError::Topology {
                source_name: "topology.generate".into(),
                error,
            })?;
            Ok((topo, Some(params)))
        }
        _ => Err(invalid("topology", "set exactly one of `file` or `generate`")),
    }
}

fn check_faults(f: &FaultSpec, topo: &Topology) -> Result<(), ConfigError> {
    let check_window = |field: String, down: u64, up: Option<u64>| match up {
        Some(up) if up <= down => Err(invalid(field, "up_at_ms must be after down_at_ms")),
        _ => Ok(()),
    };
    for (i, o) in f.backhaul_outage.iter().enumerate() {
        let field = format!("faults.backhaul_outage[{i}]");
        match (o.link, o.fog) {
            (Some(l), None) => {
                if topo.link(l).map(|l| l.class) != Some(LinkClass::Backhaul) {
                    return Err(invalid(field, format!("{l} is not a backhaul link")));
                }
            }
            (None, Some(fog)) => {
                if topo.backhaul_links(fog).is_empty() {
                    return Err(invalid(field, format!("{fog} has no backhaul link")));
                }
            }
            _ => return Err(invalid(field, "set exactly one of `link` or `fog`")),
        }
        check_window(format!("faults.backhaul_outage[{i}]"), o.down_at_ms, o.up_at_ms)?;
    }
    for (i, o) in f.node_outage.iter().enumerate() {
        let field = format!("faults.node_outage[{i}]");
        match topo.kind(o.node) {
            None => return Err(invalid(field, format!("{} does not exist", o.node))),
            Some(NodeKind::CloudGateway) => return Err(invalid(field, "the gateway cannot fail")),
            _ => {}
        }
        check_window(field, o.down_at_ms, o.up_at_ms)?;
    }
    for (name, a) in [("faults.backhaul_random", f.backhaul_random), ("faults.power", f.power)] {
        if let Some(a) = a {
            if !(a.mean_up_ms > 0.0 && a.mean_down_ms > 0.0 && a.mean_up_ms.is_finite() && a.mean_down_ms.is_finite()) {
                return Err(invalid(name, "mean durations must be > 0"));
            }
        }
    }
    Ok(())
}
