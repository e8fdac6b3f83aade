// SPDX-License-Identifier: Apache-2.0

//! Simulated cloud-edge continuum: nodes, deployment descriptors, greedy
//! placement, and a registry that deploys, monitors, recovers and scales
//! logical service instances over a logical clock.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Logical simulation time in seconds.
pub type LogicalTime = u64;

pub const DEFAULT_HEARTBEAT_INTERVAL: u64 = 10;
pub const DEFAULT_HEARTBEAT_TIMEOUT: u64 = 3 * DEFAULT_HEARTBEAT_INTERVAL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrchestratorError {
    #[error("invalid node `{0}`: {1}")]
    InvalidNode(String, String),
    #[error("invalid descriptor `{0}`: {1}")]
    InvalidDescriptor(String, String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("event log: {0}")]
    Log(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Edge,
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub node_id: String,
    pub tier: Tier,
    pub cpu_capacity: u32,
    /// MB.
    pub memory_capacity: u32,
    /// Milliseconds to each data source (asset id).
    #[serde(default)]
    pub latency_to_source: BTreeMap<String, u32>,
    /// Used for sources missing from `latency_to_source`.
    pub default_latency_ms: u32,
    #[serde(default = "yes")]
    pub healthy: bool,
}

fn yes() -> bool {
    true
}

impl NodeSpec {
    pub fn new(node_id: impl Into<String>, tier: Tier, cpu: u32, memory_mb: u32, latency_ms: u32) -> Self {
        Self {
            node_id: node_id.into(),
            tier,
            cpu_capacity: cpu,
            memory_capacity: memory_mb,
            latency_to_source: BTreeMap::new(),
            default_latency_ms: latency_ms,
            healthy: true,
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.cpu_capacity == 0 || self.memory_capacity == 0 {
            return Err(OrchestratorError::InvalidNode(self.node_id.clone(), "capacities must be > 0".into()));
        }
        Ok(())
    }

    /// Worst latency to any of `sources`; the default latency when empty.
    pub fn latency_to(&self, sources: &[String]) -> u32 {
        sources
            .iter()
            .map(|s| self.latency_to_source.get(s).copied().unwrap_or(self.default_latency_ms))
            .max()
            .unwrap_or(self.default_latency_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlacementPreference {
    EdgePreferred,
    CloudPreferred,
    Any,
}

impl PlacementPreference {
    fn matches(self, tier: Tier) -> bool {
        match self {
            PlacementPreference::EdgePreferred => tier == Tier::Edge,
            PlacementPreference::CloudPreferred => tier == Tier::Cloud,
            PlacementPreference::Any => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentDescriptor {
    pub service_id: String,
    pub cpu_request: u32,
    /// MB.
    pub memory_request: u32,
    pub placement_preference: PlacementPreference,
    #[serde(default)]
    pub latency_bound: Option<u32>,
    #[serde(default)]
    pub data_dependencies: Vec<String>,
    pub replicas: u32,
}

impl DeploymentDescriptor {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: &str| Err(OrchestratorError::InvalidDescriptor(self.service_id.clone(), m.into()));
        if self.cpu_request == 0 || self.memory_request == 0 {
            return bad("requests must be > 0");
        }
        if self.latency_bound == Some(0) {
            return bad("latency_bound must be > 0");
        }
        if self.replicas == 0 {
            return bad("replicas must be positive");
        }
        Ok(())
    }
}

pub fn instance_id(service_id: &str, replica: u32) -> String {
    format!("{service_id}-{replica}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnplacedReason {
    Capacity,
    Latency,
    NoNodes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub instance_id: String,
    pub service_id: String,
    pub replica: u32,
    pub node_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unplaced {
    pub instance_id: String,
    pub service_id: String,
    pub replica: u32,
    pub reason: UnplacedReason,
}

/// Placements in decision order plus the replicas that did not fit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub placements: Vec<Placement>,
    pub unplaced: Vec<Unplaced>,
}

impl PlacementPlan {
    pub fn node_of(&self, instance_id: &str) -> Option<&str> {
        self.placements.iter().find(|p| p.instance_id == instance_id).map(|p| p.node_id.as_str())
    }
}

/// Free capacity per node while a plan is being built.
#[derive(Debug, Clone, Default)]
struct Ledger {
    free: BTreeMap<String, (i64, i64)>,
    hosting: BTreeMap<String, BTreeSet<String>>,
}

impl Ledger {
    fn new(nodes: &[NodeSpec]) -> Self {
        let free = nodes.iter().map(|n| (n.node_id.clone(), (i64::from(n.cpu_capacity), i64::from(n.memory_capacity)))).collect();
        Self { free, hosting: BTreeMap::new() }
    }

    fn take(&mut self, node: &str, d: &DeploymentDescriptor) {
        if let Some(f) = self.free.get_mut(node) {
            f.0 -= i64::from(d.cpu_request);
            f.1 -= i64::from(d.memory_request);
        }
        self.hosting.entry(node.to_string()).or_default().insert(d.service_id.clone());
    }
}

/// Best node for one replica of `d`, or why there is none.
fn choose<'a>(d: &DeploymentDescriptor, nodes: &'a [NodeSpec], ledger: &Ledger) -> Result<&'a NodeSpec, UnplacedReason> {
    let healthy: Vec<&NodeSpec> = nodes.iter().filter(|n| n.healthy).collect();
    if healthy.is_empty() {
        return Err(UnplacedReason::NoNodes);
    }
    let fits = |n: &NodeSpec| {
        let (cpu, mem) = ledger.free.get(&n.node_id).copied().unwrap_or((0, 0));
        cpu >= i64::from(d.cpu_request) && mem >= i64::from(d.memory_request)
    };
    let in_bound = |n: &NodeSpec| d.latency_bound.map_or(true, |b| n.latency_to(&d.data_dependencies) <= b);
    let with_capacity: Vec<&NodeSpec> = healthy.into_iter().filter(|n| fits(n)).collect();
    if with_capacity.is_empty() {
        return Err(UnplacedReason::Capacity);
    }
    with_capacity
        .into_iter()
        .filter(|n| in_bound(n))
        .min_by_key(|n| {
            let free_cpu = ledger.free.get(&n.node_id).map_or(0, |f| f.0);
            let already = ledger.hosting.get(&n.node_id).is_some_and(|s| s.contains(&d.service_id));
            (
                !d.placement_preference.matches(n.tier),
                already,
                n.latency_to(&d.data_dependencies),
                std::cmp::Reverse(free_cpu),
                n.node_id.clone(),
            )
        })
        .ok_or(UnplacedReason::Latency)
}

fn order(descriptors: &[DeploymentDescriptor]) -> Vec<&DeploymentDescriptor> {
    let mut v: Vec<&DeploymentDescriptor> = descriptors.iter().collect();
    v.sort_by(|a, b| b.cpu_request.cmp(&a.cpu_request).then_with(|| a.service_id.cmp(&b.service_id)));
    v
}

/// Greedy placement: descriptors by descending cpu request (then id), each
/// replica to the first candidate ordered by (preference match, not already
/// hosting the service, latency ascending, free cpu descending, node id).
pub fn place(descriptors: &[DeploymentDescriptor], nodes: &[NodeSpec]) -> PlacementPlan {
    let mut ledger = Ledger::new(nodes);
    let mut plan = PlacementPlan::default();
    for d in order(descriptors) {
        for r in 0..d.replicas {
            place_replica(d, r, nodes, &mut ledger, &mut plan);
        }
    }
    plan
}

fn place_replica(d: &DeploymentDescriptor, replica: u32, nodes: &[NodeSpec], ledger: &mut Ledger, plan: &mut PlacementPlan) {
    let id = instance_id(&d.service_id, replica);
    match choose(d, nodes, ledger) {
        Ok(n) => {
            ledger.take(&n.node_id, d);
            plan.placements.push(Placement { instance_id: id, service_id: d.service_id.clone(), replica, node_id: n.node_id.clone() });
        }
        Err(reason) => plan.unplaced.push(Unplaced { instance_id: id, service_id: d.service_id.clone(), replica, reason }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InstanceState {
    Running,
    Failed,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub service_id: String,
    pub replica: u32,
    pub node_id: Option<String>,
    pub state: InstanceState,
    pub last_heartbeat: LogicalTime,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub logical_time: LogicalTime,
    pub event: String,
    pub subject: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    pub failed: Vec<String>,
    pub recovered: Vec<(String, String)>,
    pub pending: Vec<String>,
}

impl SweepReport {
    pub fn is_empty(&self) -> bool {
        self.failed.is_empty() && self.recovered.is_empty() && self.pending.is_empty()
    }
}

/// Single-writer registry of nodes, descriptors and instances. Every state
/// change is appended to the event log.
pub struct Registry {
    nodes: Vec<NodeSpec>,
    descriptors: BTreeMap<String, DeploymentDescriptor>,
    instances: BTreeMap<String, Instance>,
    events: Vec<Event>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry").field("nodes", &self.nodes).field("instances", &self.instances).finish()
    }
}

impl Registry {
    pub fn new(nodes: Vec<NodeSpec>) -> Result<Self, OrchestratorError> {
        let mut seen = BTreeSet::new();
        for n in &nodes {
            n.validate()?;
            if !seen.insert(n.node_id.clone()) {
                return Err(OrchestratorError::DuplicateNode(n.node_id.clone()));
            }
        }
        Ok(Self { nodes, descriptors: BTreeMap::new(), instances: BTreeMap::new(), events: Vec::new(), sink: None })
    }

    /// Also write every event as an NDJSON line to `sink`.
    pub fn with_event_sink(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.sink = Some(sink);
        self
    }

    fn emit(&mut self, t: LogicalTime, event: &str, subject: &str, detail: String) {
        let e = Event { logical_time: t, event: event.into(), subject: subject.into(), detail };
        log::info!("[t={t}] {event} {subject} {}", e.detail);
        if let Some(s) = &mut self.sink {
            let line = serde_json::to_string(&e).expect("events serialize");
            if let Err(err) = writeln!(s, "{line}").and_then(|()| s.flush()) {
                log::warn!("event log write failed: {err}");
            }
        }
        self.events.push(e);
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.instances.values()
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.instances.get(id)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &DeploymentDescriptor> {
        self.descriptors.values()
    }

    /// (cpu, memory) requested by RUNNING instances, per node.
    pub fn usage(&self) -> BTreeMap<String, (u64, u64)> {
        let mut used: BTreeMap<String, (u64, u64)> = self.nodes.iter().map(|n| (n.node_id.clone(), (0, 0))).collect();
        for i in self.instances.values().filter(|i| i.state == InstanceState::Running) {
            let (Some(node), Some(d)) = (&i.node_id, self.descriptors.get(&i.service_id)) else { continue };
            let e = used.entry(node.clone()).or_default();
            e.0 += u64::from(d.cpu_request);
            e.1 += u64::from(d.memory_request);
        }
        used
    }

    /// Nodes whose placed requests exceed their capacity (empty when safe).
    pub fn over_capacity(&self) -> Vec<String> {
        let used = self.usage();
        self.nodes
            .iter()
            .filter(|n| used.get(&n.node_id).is_some_and(|&(c, m)| c > u64::from(n.cpu_capacity) || m > u64::from(n.memory_capacity)))
            .map(|n| n.node_id.clone())
            .collect()
    }

    fn current_ledger(&self) -> Ledger {
        let mut ledger = Ledger::new(&self.nodes);
        for i in self.instances.values().filter(|i| i.state == InstanceState::Running) {
            if let (Some(node), Some(d)) = (&i.node_id, self.descriptors.get(&i.service_id)) {
                ledger.take(node, d);
            }
        }
        ledger
    }

    /// Plans `descriptors` against the current free capacity.
    pub fn plan(&self, descriptors: &[DeploymentDescriptor]) -> PlacementPlan {
        let mut ledger = self.current_ledger();
        let mut plan = PlacementPlan::default();
        for d in order(descriptors) {
            for r in 0..d.replicas {
                let id = instance_id(&d.service_id, r);
                if self.instances.get(&id).is_some_and(|i| i.state == InstanceState::Running) {
                    continue;
                }
                place_replica(d, r, &self.nodes, &mut ledger, &mut plan);
            }
        }
        plan
    }

    /// Starts every placed replica. Re-deploying an identical plan is a
    /// no-op; replicas whose node is gone or full are parked PENDING.
    pub fn deploy(&mut self, descriptors: &[DeploymentDescriptor], plan: &PlacementPlan, now: LogicalTime) -> Result<Vec<String>, OrchestratorError> {
        for d in descriptors {
            d.validate()?;
            self.descriptors.insert(d.service_id.clone(), d.clone());
        }
        let mut started = Vec::new();
        for p in &plan.placements {
            let d = self.descriptors.get(&p.service_id).cloned().ok_or_else(|| OrchestratorError::UnknownService(p.service_id.clone()))?;
            if let Some(i) = self.instances.get(&p.instance_id) {
                if i.state == InstanceState::Running && i.node_id.as_deref() == Some(p.node_id.as_str()) {
                    started.push(p.instance_id.clone());
                    continue;
                }
            }
            let ledger = self.current_ledger();
            let ok = self.nodes.iter().any(|n| n.node_id == p.node_id && n.healthy)
                && ledger.free.get(&p.node_id).is_some_and(|&(c, m)| c >= i64::from(d.cpu_request) && m >= i64::from(d.memory_request));
            if ok {
                self.run_on(&p.instance_id, &p.service_id, p.replica, &p.node_id, now);
                started.push(p.instance_id.clone());
            } else {
                self.park(&p.instance_id, &p.service_id, p.replica, now, "no-nodes");
            }
        }
        for u in &plan.unplaced {
            let detail = serde_json::to_value(u.reason).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            self.park(&u.instance_id, &u.service_id, u.replica, now, &detail);
        }
        Ok(started)
    }

    fn run_on(&mut self, id: &str, service: &str, replica: u32, node: &str, now: LogicalTime) {
        self.instances.insert(
            id.to_string(),
            Instance {
                instance_id: id.to_string(),
                service_id: service.to_string(),
                replica,
                node_id: Some(node.to_string()),
                state: InstanceState::Running,
                last_heartbeat: now,
            },
        );
        self.emit(now, "running", id, format!("node={node}"));
    }

    fn park(&mut self, id: &str, service: &str, replica: u32, now: LogicalTime, reason: &str) {
        if self.instances.get(id).is_some_and(|i| i.state == InstanceState::Pending) {
            return;
        }
        self.instances.insert(
            id.to_string(),
            Instance {
                instance_id: id.to_string(),
                service_id: service.to_string(),
                replica,
                node_id: None,
                state: InstanceState::Pending,
                last_heartbeat: now,
            },
        );
        self.emit(now, "pending", id, format!("reason={reason}"));
    }

    /// Records a heartbeat; heartbeats from failed or unknown instances are ignored.
    pub fn heartbeat(&mut self, instance_id: &str, now: LogicalTime) {
        if let Some(i) = self.instances.get_mut(instance_id) {
            if i.state == InstanceState::Running {
                i.last_heartbeat = i.last_heartbeat.max(now);
            }
        }
    }

    /// Every RUNNING instance on a healthy node sends a heartbeat.
    pub fn tick(&mut self, now: LogicalTime) {
        let healthy: BTreeSet<String> = self.nodes.iter().filter(|n| n.healthy).map(|n| n.node_id.clone()).collect();
        let ids: Vec<String> = self
            .instances
            .values()
            .filter(|i| i.state == InstanceState::Running && i.node_id.as_ref().is_some_and(|n| healthy.contains(n)))
            .map(|i| i.instance_id.clone())
            .collect();
        for id in ids {
            self.heartbeat(&id, now);
        }
    }

    /// Marks a node unhealthy. Its instances go silent and are caught by the next sweep.
    pub fn kill_node(&mut self, node_id: &str, now: LogicalTime) -> Result<(), OrchestratorError> {
        let n = self.nodes.iter_mut().find(|n| n.node_id == node_id).ok_or_else(|| OrchestratorError::UnknownNode(node_id.into()))?;
        n.healthy = false;
        self.emit(now, "node-down", node_id, String::new());
        Ok(())
    }

    pub fn revive_node(&mut self, node_id: &str, now: LogicalTime) -> Result<(), OrchestratorError> {
        let n = self.nodes.iter_mut().find(|n| n.node_id == node_id).ok_or_else(|| OrchestratorError::UnknownNode(node_id.into()))?;
        n.healthy = true;
        self.emit(now, "node-up", node_id, String::new());
        Ok(())
    }

    /// Fails instances silent for more than `timeout` and re-places every
    /// failed or pending replica on the healthy nodes.
    pub fn heartbeat_sweep(&mut self, now: LogicalTime, timeout: u64) -> Result<SweepReport, OrchestratorError> {
        if timeout == 0 {
            return Err(OrchestratorError::InvalidParameter("timeout must be > 0".into()));
        }
        let mut report = SweepReport::default();
        let silent: Vec<String> = self
            .instances
            .values()
            .filter(|i| i.state == InstanceState::Running && now.saturating_sub(i.last_heartbeat) > timeout)
            .map(|i| i.instance_id.clone())
            .collect();
        for id in silent {
            let node = self.instances[&id].node_id.clone().unwrap_or_default();
            let i = self.instances.get_mut(&id).expect("listed above");
            i.state = InstanceState::Failed;
            self.emit(now, "failed", &id, format!("node={node}"));
            report.failed.push(id);
        }
        let waiting: Vec<Instance> = self
            .instances
            .values()
            .filter(|i| matches!(i.state, InstanceState::Failed | InstanceState::Pending))
            .cloned()
            .collect();
        let mut ledger = self.current_ledger();
        for inst in waiting {
            let Some(d) = self.descriptors.get(&inst.service_id).cloned() else { continue };
            match choose(&d, &self.nodes, &ledger) {
                Ok(n) => {
                    let node = n.node_id.clone();
                    ledger.take(&node, &d);
                    self.run_on(&inst.instance_id, &inst.service_id, inst.replica, &node, now);
                    report.recovered.push((inst.instance_id.clone(), node));
                }
                Err(reason) => {
                    let was_pending = inst.state == InstanceState::Pending;
                    let detail = serde_json::to_value(reason).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
                    self.park(&inst.instance_id, &inst.service_id, inst.replica, now, &detail);
                    if !was_pending {
                        report.pending.push(inst.instance_id.clone());
                    }
                }
            }
        }
        Ok(report)
    }

    /// Applies a replica delta of -1, 0 or +1 to a deployed service.
    pub fn scale(&mut self, service_id: &str, delta: i8, now: LogicalTime) -> Result<u32, OrchestratorError> {
        let d = self.descriptors.get(service_id).cloned().ok_or_else(|| OrchestratorError::UnknownService(service_id.into()))?;
        match delta.signum() {
            1 => {
                let mut grown = d.clone();
                grown.replicas += 1;
                self.descriptors.insert(service_id.into(), grown.clone());
                let mut ledger = self.current_ledger();
                let mut plan = PlacementPlan::default();
                place_replica(&grown, d.replicas, &self.nodes, &mut ledger, &mut plan);
                self.deploy(&[], &plan, now)?;
                self.emit(now, "scaled", service_id, format!("replicas={}", grown.replicas));
                Ok(grown.replicas)
            }
            -1 if d.replicas > 1 => {
                let id = instance_id(service_id, d.replicas - 1);
                self.instances.remove(&id);
                let mut shrunk = d;
                shrunk.replicas -= 1;
                let n = shrunk.replicas;
                self.descriptors.insert(service_id.into(), shrunk);
                self.emit(now, "stopped", &id, String::new());
                self.emit(now, "scaled", service_id, format!("replicas={n}"));
                Ok(n)
            }
            _ => Ok(d.replicas),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleThresholds {
    /// Readings per minute.
    pub high: f64,
    pub low: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicaBounds {
    pub min: u32,
    pub max: u32,
}

/// +1 above `high` below the max, -1 under `low` above the min, else 0.
pub fn scale_decision(load: f64, thresholds: ScaleThresholds, current: u32, bounds: ReplicaBounds) -> i8 {
    if load > thresholds.high && current < bounds.max {
        1
    } else if load < thresholds.low && current > bounds.min {
        -1
    } else {
        0
    }
}

/// `scale_decision` with a cooldown between non-zero decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoscaler {
    pub thresholds: ScaleThresholds,
    pub bounds: ReplicaBounds,
    pub cooldown: u64,
    last_change: Option<LogicalTime>,
}

impl Autoscaler {
    pub fn new(thresholds: ScaleThresholds, bounds: ReplicaBounds, cooldown: u64) -> Result<Self, OrchestratorError> {
        if !(thresholds.low < thresholds.high) {
            return Err(OrchestratorError::InvalidParameter("low threshold must be below high".into()));
        }
        if bounds.min < 1 || bounds.min > bounds.max {
            return Err(OrchestratorError::InvalidParameter("bounds need 1 <= min <= max".into()));
        }
        Ok(Self { thresholds, bounds, cooldown, last_change: None })
    }

    pub fn decide(&mut self, load: f64, current: u32, now: LogicalTime) -> i8 {
        if self.last_change.is_some_and(|t| now < t + self.cooldown) {
            return 0;
        }
        let d = scale_decision(load, self.thresholds, current, self.bounds);
        if d != 0 {
            self.last_change = Some(now);
        }
        d
    }
}

/// One edge node next to the sensors and one cloud node.
pub fn default_topology() -> Vec<NodeSpec> {
    vec![NodeSpec::new("edge-1", Tier::Edge, 4, 4096, 5), NodeSpec::new("cloud-1", Tier::Cloud, 32, 65536, 50)]
}

/// The platform's services: ingestion and the three models near the data,
/// the building service in the cloud.
pub fn default_descriptors(sources: &[String]) -> Vec<DeploymentDescriptor> {
    let d = |id: &str, cpu, mem, pref, bound| DeploymentDescriptor {
        service_id: id.into(),
        cpu_request: cpu,
        memory_request: mem,
        placement_preference: pref,
        latency_bound: bound,
        data_dependencies: sources.to_vec(),
        replicas: 1,
    };
    vec![
        d("forecaster", 2, 1024, PlacementPreference::EdgePreferred, Some(100)),
        d("anomaly-detector", 1, 512, PlacementPreference::EdgePreferred, Some(100)),
        d("presence-detector", 1, 512, PlacementPreference::EdgePreferred, Some(100)),
        d("building-service", 2, 2048, PlacementPreference::CloudPreferred, None),
    ]
}
