// SPDX-License-Identifier: Apache-2.0

//! Random deploy / fail / recover / scale sequences against the registry,
//! with an independent capacity ledger replaying every placement decision.

use std::collections::BTreeMap;

use edgespace_core::orchestrator::{
    place, DeploymentDescriptor, InstanceState, NodeSpec, PlacementPlan, PlacementPreference, Registry, Tier,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SOURCES: [&str; 2] = ["src-a", "src-b"];

#[derive(Debug, Default, Clone, Copy)]
pub struct Stats {
    pub steps: usize,
    pub placements_checked: usize,
    pub edge_choices_checked: usize,
}

fn topology(rng: &mut ChaCha8Rng) -> Vec<NodeSpec> {
    let mut nodes = Vec::new();
    for k in 0..rng.random_range(1..=3) {
        let mut n = NodeSpec::new(format!("edge-{k}"), Tier::Edge, rng.random_range(2..=8), rng.random_range(1024..=8192), 5);
        for s in SOURCES {
            n.latency_to_source.insert(s.into(), rng.random_range(1..=20));
        }
        nodes.push(n);
    }
    for k in 0..rng.random_range(1..=2) {
        let mut n = NodeSpec::new(format!("cloud-{k}"), Tier::Cloud, rng.random_range(8..=32), rng.random_range(8192..=65536), 50);
        for s in SOURCES {
            n.latency_to_source.insert(s.into(), rng.random_range(30..=100));
        }
        nodes.push(n);
    }
    nodes
}

fn descriptors(rng: &mut ChaCha8Rng) -> Vec<DeploymentDescriptor> {
    let prefs = [PlacementPreference::EdgePreferred, PlacementPreference::CloudPreferred, PlacementPreference::Any];
    (0..rng.random_range(1..=4))
        .map(|k| DeploymentDescriptor {
            service_id: format!("svc{k}"),
            cpu_request: rng.random_range(1..=4),
            memory_request: rng.random_range(128..=2048),
            placement_preference: *prefs.choose(rng).unwrap(),
            latency_bound: if rng.random_bool(0.5) { Some(rng.random_range(10..=120)) } else { None },
            data_dependencies: SOURCES.iter().filter(|_| rng.random_bool(0.6)).map(|s| s.to_string()).collect(),
            replicas: rng.random_range(1..=3),
        })
        .collect()
}

/// Free (cpu, mem) per node given RUNNING usage.
fn free(nodes: &[NodeSpec], used: &BTreeMap<String, (u64, u64)>) -> BTreeMap<String, (i64, i64)> {
    nodes
        .iter()
        .map(|n| {
            let (c, m) = used.get(&n.node_id).copied().unwrap_or((0, 0));
            (n.node_id.clone(), (i64::from(n.cpu_capacity) - c as i64, i64::from(n.memory_capacity) - m as i64))
        })
        .collect()
}

fn feasible(n: &NodeSpec, d: &DeploymentDescriptor, free: &BTreeMap<String, (i64, i64)>) -> bool {
    let (c, m) = free[&n.node_id];
    n.healthy
        && c >= i64::from(d.cpu_request)
        && m >= i64::from(d.memory_request)
        && d.latency_bound.map_or(true, |b| n.latency_to(&d.data_dependencies) <= b)
}

/// Replays one placement decision against the oracle ledger.
fn replay(
    d: &DeploymentDescriptor,
    node_id: &str,
    nodes: &[NodeSpec],
    free: &mut BTreeMap<String, (i64, i64)>,
    stats: &mut Stats,
) -> Result<(), String> {
    let n = nodes.iter().find(|n| n.node_id == node_id).ok_or("unknown node")?;
    if !feasible(n, d, free) {
        return Err(format!("{} placed on infeasible node {node_id}", d.service_id));
    }
    if d.placement_preference == PlacementPreference::EdgePreferred && nodes.iter().any(|e| e.tier == Tier::Edge && feasible(e, d, free)) {
        stats.edge_choices_checked += 1;
        if n.tier != Tier::Edge {
            return Err(format!("{} went to cloud node {node_id} with a feasible edge node", d.service_id));
        }
    }
    let f = free.get_mut(node_id).expect("known node");
    f.0 -= i64::from(d.cpu_request);
    f.1 -= i64::from(d.memory_request);
    stats.placements_checked += 1;
    Ok(())
}

fn replay_plan(plan: &PlacementPlan, ds: &BTreeMap<String, DeploymentDescriptor>, nodes: &[NodeSpec], mut free: BTreeMap<String, (i64, i64)>, stats: &mut Stats) -> Result<(), String> {
    for p in &plan.placements {
        replay(&ds[&p.service_id], &p.node_id, nodes, &mut free, stats)?;
    }
    Ok(())
}

fn check_registry(reg: &Registry) -> Result<(), String> {
    let over = reg.over_capacity();
    if !over.is_empty() {
        return Err(format!("over capacity: {over:?}"));
    }
    let ds: BTreeMap<&str, &DeploymentDescriptor> = reg.descriptors().map(|d| (d.service_id.as_str(), d)).collect();
    for i in reg.instances().filter(|i| i.state == InstanceState::Running) {
        let d = ds[i.service_id.as_str()];
        let node = reg.nodes().iter().find(|n| Some(&n.node_id) == i.node_id.as_ref()).ok_or("running without node")?;
        if let Some(b) = d.latency_bound {
            if node.latency_to(&d.data_dependencies) > b {
                return Err(format!("{} violates latency bound {b} on {}", i.instance_id, node.node_id));
            }
        }
    }
    Ok(())
}

/// One random event sequence of `steps` events.
pub fn simulate(seed: u64, steps: usize) -> Result<Stats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = topology(&mut rng);
    let descs = descriptors(&mut rng);
    let mut stats = Stats::default();

    // Pure planner: deterministic and oracle-consistent.
    let plan = place(&descs, &nodes);
    if plan != place(&descs, &nodes) {
        return Err("placement is not deterministic".into());
    }
    let by_id: BTreeMap<String, DeploymentDescriptor> = descs.iter().map(|d| (d.service_id.clone(), d.clone())).collect();
    replay_plan(&plan, &by_id, &nodes, free(&nodes, &BTreeMap::new()), &mut stats)?;

    let mut reg = Registry::new(nodes.clone()).map_err(|e| e.to_string())?;
    let mut now = 0u64;
    for _ in 0..steps {
        now += rng.random_range(1..=15);
        stats.steps += 1;
        match rng.random_range(0..7) {
            0 => {
                let plan = reg.plan(&descs);
                let cur: BTreeMap<String, DeploymentDescriptor> = reg.descriptors().map(|d| (d.service_id.clone(), d.clone())).chain(by_id.clone()).collect();
                replay_plan(&plan, &cur, reg.nodes(), free(reg.nodes(), &reg.usage()), &mut stats)?;
                reg.deploy(&descs, &plan, now).map_err(|e| e.to_string())?;
            }
            1 => {
                let id = reg.nodes().choose(&mut rng).unwrap().node_id.clone();
                reg.kill_node(&id, now).map_err(|e| e.to_string())?;
            }
            2 => {
                let id = reg.nodes().choose(&mut rng).unwrap().node_id.clone();
                reg.revive_node(&id, now).map_err(|e| e.to_string())?;
            }
            3 => reg.tick(now),
            4 => {
                let timeout = 30;
                // Oracle ledger after the silent instances are failed.
                let mut used: BTreeMap<String, (u64, u64)> = BTreeMap::new();
                let cur: BTreeMap<String, DeploymentDescriptor> = reg.descriptors().map(|d| (d.service_id.clone(), d.clone())).collect();
                for i in reg.instances().filter(|i| i.state == InstanceState::Running && now.saturating_sub(i.last_heartbeat) <= timeout) {
                    let d = &cur[&i.service_id];
                    let e = used.entry(i.node_id.clone().unwrap()).or_default();
                    e.0 += u64::from(d.cpu_request);
                    e.1 += u64::from(d.memory_request);
                }
                let mut oracle = free(reg.nodes(), &used);
                let report = reg.heartbeat_sweep(now, timeout).map_err(|e| e.to_string())?;
                for (id, node) in &report.recovered {
                    let svc = &reg.instance(id).ok_or("recovered instance vanished")?.service_id;
                    replay(&cur[svc], node, reg.nodes(), &mut oracle, &mut stats)?;
                }
            }
            _ => {
                let services: Vec<String> = reg.descriptors().map(|d| d.service_id.clone()).collect();
                if let Some(s) = services.choose(&mut rng) {
                    let delta = if rng.random_bool(0.5) { 1 } else { -1 };
                    reg.scale(s, delta, now).map_err(|e| e.to_string())?;
                }
            }
        }
        check_registry(&reg)?;
    }
    Ok(stats)
}
