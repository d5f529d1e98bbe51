//! Scenario configuration, the lockstep tick loop, and run metrics.

mod config;
mod metrics;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;

pub use config::{ConfigError, ScenarioConfig};
pub use metrics::{export_metrics, CommSample, CoverageSample, RunMetrics, Termination, Timings};

use crate::comms::{
    baseline_chunk_share, canonical_bytes, decode, links_payload, receive, GraphDelta, NetworkSim, Payload,
    ProtocolError, Received, TargetIntentMsg,
};
use crate::dtg::{eroi_layout, AgentId, DtgAgent, EroiId, EroiState, MrDtg, NodeId, NodeRef, ViewpointState};
use crate::partition::{global_partition, local_partition};
use crate::planner::{
    advance_motion, frontier_route, plan, retrieve_path, DirectSearch, ExplorationTarget, Intent, PeerIntents, PlanInput, PlanOutcome,
};
use crate::world::{
    integrate_scan, simulate_scan, wrap_angle, AgentPose, GroundTruthWorld, OccupancyState, SensorModel, Vec3, VoxelGrid, VoxelIndex,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentStatus {
    Exploring,
    Idle,
    Finished,
}

/// Everything one simulated agent owns. Agents only learn about each other
/// through delivered messages.
#[derive(Debug)]
pub struct Agent {
    pub id: AgentId,
    pub pose: AgentPose,
    pub grid: VoxelGrid,
    pub replica: MrDtg,
    pub dtg: DtgAgent,
    pub intents: PeerIntents,
    pub target: Option<ExplorationTarget>,
    pub status: AgentStatus,
    pub local: BTreeMap<EroiId, f64>,
    pub global: BTreeMap<NodeId, f64>,
    pub path: Vec<Vec3>,
    pending: GraphDelta,
    sent_links: Option<BTreeMap<NodeRef, f64>>,
    /// Frontier voxel being approached while no region can be targeted.
    frontier: Option<(VoxelIndex, f64)>,
    tried: BTreeSet<VoxelIndex>,
    replan: bool,
    pose_errors: u64,
}

/// Ground-truth voxels that count towards coverage: free voxels reachable
/// from the starts and the obstacle voxels bordering them.
#[derive(Debug, Clone)]
struct CoverageTracker {
    relevant: Vec<bool>,
    total: usize,
    union: Vec<bool>,
    union_count: usize,
    per_agent: Vec<usize>,
}

impl CoverageTracker {
    fn new(world: &GroundTruthWorld, grid: &VoxelGrid, starts: &[AgentPose], agents: usize) -> Self {
        let n = grid.len();
        let blocked: Vec<bool> = (0..n as VoxelIndex).map(|v| world.is_blocked(&grid.center(v))).collect();
        let mut relevant = vec![false; n];
        let mut queue = VecDeque::new();
        for s in starts {
            if let Some(v) = grid.voxel_at(&s.position) {
                if !blocked[v as usize] && !relevant[v as usize] {
                    relevant[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
        let mut surface = Vec::new();
        while let Some(v) = queue.pop_front() {
            for w in grid.neighbors6(v) {
                if relevant[w as usize] {
                    continue;
                }
                if blocked[w as usize] {
                    surface.push(w);
                } else {
                    relevant[w as usize] = true;
                    queue.push_back(w);
                }
            }
        }
        for v in surface {
            relevant[v as usize] = true;
        }
        let total = relevant.iter().filter(|r| **r).count();
        Self {
            relevant,
            total,
            union: vec![false; n],
            union_count: 0,
            per_agent: vec![0; agents],
        }
    }

    fn observe(&mut self, agent: usize, changed: &[VoxelIndex]) {
        for v in changed {
            let i = *v as usize;
            if !self.relevant[i] {
                continue;
            }
            self.per_agent[agent] += 1;
            if !self.union[i] {
                self.union[i] = true;
                self.union_count += 1;
            }
        }
    }

    fn union_fraction(&self) -> f64 {
        self.union_count as f64 / self.total.max(1) as f64
    }

    fn agent_fraction(&self, a: usize) -> f64 {
        self.per_agent[a] as f64 / self.total.max(1) as f64
    }
}

/// Lockstep multi-agent simulation.
pub struct Simulation {
    cfg: ScenarioConfig,
    scan_sensor: SensorModel,
    pub agents: Vec<Agent>,
    pub net: NetworkSim,
    time: f64,
    tick: u64,
    plan_every: u64,
    coverage: CoverageTracker,
    voxel_eroi: Arc<Vec<EroiId>>,
    metrics: RunMetrics,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let starts = cfg.start_poses()?;
        let grid = VoxelGrid::new(&cfg.world.bounds, cfg.resolution);
        let (layout, erois) = eroi_layout(&cfg.world.bounds, &grid, &cfg.dtg);
        let voxel_eroi = Arc::new(layout.voxel_map(&grid));
        let replica = MrDtg::new(layout, erois);
        let agents = starts
            .iter()
            .enumerate()
            .map(|(i, pose)| Agent {
                id: i as AgentId,
                pose: *pose,
                grid: grid.clone(),
                replica: replica.clone(),
                dtg: DtgAgent::new(i as AgentId, Arc::clone(&voxel_eroi)),
                intents: PeerIntents::default(),
                target: None,
                status: AgentStatus::Idle,
                local: BTreeMap::new(),
                global: BTreeMap::new(),
                path: Vec::new(),
                pending: GraphDelta::default(),
                sent_links: None,
                frontier: None,
                tried: BTreeSet::new(),
                replan: true,
                pose_errors: 0,
            })
            .collect();
        let coverage = CoverageTracker::new(&cfg.world, &grid, &starts, cfg.agents);
        let mut net_cfg = cfg.network.clone();
        net_cfg.seed = cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ cfg.network.seed;
        Ok(Self {
            scan_sensor: cfg.scan_sensor(),
            agents,
            net: NetworkSim::new(cfg.agents, net_cfg),
            time: 0.0,
            tick: 0,
            plan_every: ((1.0 / (cfg.plan_hz * cfg.dt)).round() as u64).max(1),
            coverage,
            voxel_eroi,
            metrics: RunMetrics::new(cfg.agents, cfg.seed),
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn plan_every(&self) -> u64 {
        self.plan_every
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn union_coverage(&self) -> f64 {
        self.coverage.union_fraction()
    }

    /// Runs ticks until a termination condition holds.
    pub fn run(mut self) -> RunMetrics {
        loop {
            if let Some(t) = self.step() {
                self.metrics.termination = Some(t);
                break;
            }
        }
        self.finish()
    }

    pub fn finish(mut self) -> RunMetrics {
        self.metrics.ledger = *self.net.ledger();
        self.metrics.illegal_transitions = self.agents.iter().map(|a| a.replica.recorder().illegal.len()).sum();
        self.metrics
    }

    /// Advances one tick: sensing, mapping, graph maintenance, broadcast,
    /// partition and planning, motion. Returns why the run ended, if it did.
    pub fn step(&mut self) -> Option<Termination> {
        if self.time >= self.cfg.time_limit - 1e-9 {
            return Some(Termination::TimeLimit);
        }
        let plan_tick = self.tick.is_multiple_of(self.plan_every);
        let now = self.time;
        for i in 0..self.agents.len() {
            self.check_arrival(i);
            self.sense_and_maintain(i, plan_tick);
        }
        self.deliver(now);
        let planners: Vec<usize> = (0..self.agents.len()).filter(|i| plan_tick || self.agents[*i].replan).collect();
        for &i in &planners {
            self.allocate(i);
        }
        if plan_tick {
            self.check_allocations();
        }
        for &i in &planners {
            self.plan_for(i);
        }
        self.deliver(now);
        for i in 0..self.agents.len() {
            self.move_agent(i);
        }
        self.tick += 1;
        self.time = self.tick as f64 * self.cfg.dt;
        self.sample();
        if self.coverage.union_fraction() >= self.cfg.coverage_target {
            self.metrics.exploration_time.get_or_insert(self.time);
            return Some(Termination::CoverageReached);
        }
        if plan_tick && self.agents.iter().all(|a| a.status == AgentStatus::Finished) {
            return Some(Termination::AllFinished);
        }
        None
    }

    fn check_arrival(&mut self, i: usize) {
        let pcfg = &self.cfg.planner;
        let a = &mut self.agents[i];
        let Some(t) = &a.target else { return };
        let Some(region) = a.replica.eroi(t.eroi) else { return };
        let vp = &region.viewpoints[t.viewpoint as usize];
        if region.state != EroiState::Active || vp.state == ViewpointState::Dead {
            a.target = None;
            a.path.clear();
            a.replan = true;
            return;
        }
        let yaw_err = wrap_angle(a.pose.yaw - vp.yaw).abs().to_degrees();
        if (a.pose.position - vp.position).norm() <= pcfg.arrival_radius && yaw_err <= pcfg.arrival_yaw_deg {
            let (e, idx) = (t.eroi, t.viewpoint);
            a.dtg
                .retire_viewpoint(&mut a.replica, e, idx, &mut a.pending)
                .expect("target viewpoint exists");
            a.target = None;
            a.path.clear();
            a.replan = true;
        }
    }

    fn sense_and_maintain(&mut self, i: usize, plan_tick: bool) {
        let now = self.time;
        let t0 = Instant::now();
        let a = &mut self.agents[i];
        let scan = simulate_scan(&self.cfg.world, &a.pose, &self.scan_sensor);
        let changed = integrate_scan(&mut a.grid, &a.pose, &scan);
        self.metrics.timings.record("mapping", ms_since(t0));
        self.coverage.observe(i, &changed);
        if self.cfg.baseline && !changed.is_empty() {
            baseline_chunk_share(&mut self.net, &a.grid, &changed, a.id, now).expect("chunk fits");
        }
        let t0 = Instant::now();
        let result = a.dtg.maintain(
            &mut a.replica,
            &a.grid,
            &a.pose,
            &changed,
            &self.cfg.sensor,
            &self.cfg.dtg,
            &mut a.pending,
        );
        if result.is_err() {
            a.pose_errors += 1;
        }
        self.metrics.timings.record("maintenance", ms_since(t0));
        for p in a.pending.to_payloads() {
            self.net.broadcast(a.id, p, now).expect("delta fits");
        }
        a.pending.clear();
        if plan_tick {
            let links = a.dtg.refresh_uav_links(&mut a.replica, &a.grid);
            let tol = self.cfg.link_tolerance;
            let resend = match &a.sent_links {
                None => true,
                Some(old) => {
                    old.len() != links.len()
                        || old.iter().zip(&links).any(|((k0, d0), (k1, d1))| k0 != k1 || (d0 - d1).abs() > tol)
                }
            };
            if resend {
                self.net.broadcast(a.id, links_payload(&links), now).expect("links fit");
                a.sent_links = Some(links);
            }
        }
    }

    fn deliver(&mut self, now: f64) {
        for d in self.net.flush(now) {
            let a = &mut self.agents[d.recipient as usize];
            match receive(&mut a.replica, &d.bytes) {
                Ok(Received::Intent { sender, seq, intent }) => {
                    a.intents.update(
                        sender,
                        Intent {
                            seq,
                            eroi: intent.eroi,
                            node: intent.node,
                            t_j: intent.t_i as f64,
                            received_at: now,
                        },
                    );
                }
                Ok(_) => {}
                Err(ProtocolError::Wire(_)) | Err(ProtocolError::Graph(_)) => self.metrics.protocol_errors += 1,
            }
        }
    }

    fn allocate(&mut self, i: usize) {
        let t0 = Instant::now();
        let a = &mut self.agents[i];
        a.local = local_partition(&a.replica, a.id);
        a.global = global_partition(&a.replica, a.id);
        self.metrics.timings.record("partition", ms_since(t0));
    }

    /// Local allocations must not overlap and the global cells must split
    /// the history nodes among the agents.
    fn check_allocations(&mut self) {
        self.metrics.allocation_checks += 1;
        let t = self.time;
        let mut seen: BTreeMap<EroiId, AgentId> = BTreeMap::new();
        for a in &self.agents {
            for e in a.local.keys() {
                if let Some(other) = seen.insert(*e, a.id) {
                    self.metrics
                        .allocation_violations
                        .push(format!("t={t:.1}: region {e} allocated to agents {other} and {}", a.id));
                }
            }
        }
        let mut owner: BTreeMap<NodeId, AgentId> = BTreeMap::new();
        for a in &self.agents {
            for n in a.global.keys() {
                if let Some(other) = owner.insert(*n, a.id) {
                    self.metrics
                        .allocation_violations
                        .push(format!("t={t:.1}: node {n} in cells of agents {other} and {}", a.id));
                }
            }
        }
        let all: BTreeSet<NodeId> = self.agents[0].replica.nodes().keys().copied().collect();
        for n in all.iter().filter(|n| !owner.contains_key(n)) {
            self.metrics.allocation_violations.push(format!("t={t:.1}: node {n} in no cell"));
        }
    }

    fn plan_for(&mut self, i: usize) {
        let now = self.time;
        let t0 = Instant::now();
        let a = &mut self.agents[i];
        a.replan = false;
        let Some(field) = a.dtg.field() else { return };
        let input = PlanInput {
            agent: a.id,
            dtg: &a.replica,
            local: &a.local,
            global: &a.global,
            intents: &a.intents,
            now,
        };
        let mut direct: Option<DirectSearch> = None;
        let (grid, pose) = (&a.grid, &a.pose);
        let outcome = plan(&input, &self.cfg.planner, |c| {
            let d = direct.get_or_insert_with(|| DirectSearch::new(grid, field.root()));
            retrieve_path(&a.replica, grid, field, pose, c.eroi, d).ok()
        });
        let mut fallback = false;
        if matches!(outcome, PlanOutcome::Idle | PlanOutcome::Finished) {
            let (replica, map) = (&a.replica, &self.voxel_eroi);
            let open = |n: VoxelIndex| replica.eroi(map[n as usize]).is_some_and(|r| r.state != EroiState::Dead);
            let still_open = !a.path.is_empty() && a.frontier.is_some_and(|(v, _)| is_frontier(grid, v));
            if still_open {
                fallback = true;
            } else {
                let d = direct.get_or_insert_with(|| DirectSearch::new(grid, field.root()));
                let tried = &a.tried;
                a.frontier = None;
                a.path.clear();
                let found = frontier_route(grid, pose, d, |v, n| !tried.contains(&v) && open(n))
                    .or_else(|| frontier_route(grid, pose, d, |v, _| !tried.contains(&v)));
                if let Some((v, path, yaw)) = found {
                    a.tried.insert(v);
                    a.frontier = Some((v, yaw));
                    a.path = path;
                    fallback = true;
                }
            }
        }
        self.metrics.timings.record("planning", ms_since(t0));
        match outcome {
            PlanOutcome::Target(t) => {
                a.frontier = None;
                a.status = AgentStatus::Exploring;
                let same = a.target.as_ref().is_some_and(|o| (o.eroi, o.viewpoint) == (t.eroi, t.viewpoint));
                if !same || a.path.is_empty() {
                    a.path = t.path.clone();
                }
                let intent = TargetIntentMsg {
                    eroi: t.eroi,
                    node: t.node,
                    t_i: t.t_i as f32,
                };
                a.target = Some(t);
                self.net
                    .broadcast(a.id, Payload::TargetIntent(intent), now)
                    .expect("intent fits");
            }
            PlanOutcome::Idle => {
                a.status = AgentStatus::Idle;
                a.target = None;
            }
            PlanOutcome::Finished if fallback => {
                a.status = AgentStatus::Idle;
                a.target = None;
            }
            PlanOutcome::Finished => {
                a.frontier = None;
                a.status = AgentStatus::Finished;
                a.target = None;
                a.path.clear();
            }
        }
    }

    fn move_agent(&mut self, i: usize) {
        let dt = self.cfg.dt;
        let a = &mut self.agents[i];
        if let Some(t) = &a.target {
            let yaw = a.replica.eroi(t.eroi).map(|r| r.viewpoints[t.viewpoint as usize].yaw);
            a.pose = advance_motion(&a.pose, &mut a.path, dt, self.cfg.planner.vel_max, yaw);
        } else if let (Some((_, yaw)), false) = (a.frontier, a.path.is_empty()) {
            a.pose = advance_motion(&a.pose, &mut a.path, dt, self.cfg.planner.vel_max, Some(yaw));
        } else {
            // Nothing to do: look around.
            a.pose.yaw = wrap_angle(a.pose.yaw + self.cfg.spin_rate_deg.to_radians() * dt);
        }
    }

    fn sample(&mut self) {
        self.metrics.coverage.push(CoverageSample {
            time: self.time,
            union: self.coverage.union_fraction(),
            per_agent: (0..self.agents.len()).map(|i| self.coverage.agent_fraction(i)).collect(),
        });
        let l = self.net.ledger();
        self.metrics.comm.push(CommSample {
            time: self.time,
            cooperation: l.cooperation,
            mapping: l.mapping,
        });
    }

    /// Sends every pending change and delivers everything in flight.
    pub fn quiesce(&mut self) {
        let now = self.time;
        for a in &mut self.agents {
            for p in a.pending.to_payloads() {
                self.net.broadcast(a.id, p, now).expect("delta fits");
            }
            a.pending.clear();
        }
        let all = self.net.drain();
        for d in all {
            let a = &mut self.agents[d.recipient as usize];
            if receive(&mut a.replica, &d.bytes).is_err() {
                self.metrics.protocol_errors += 1;
            }
        }
    }

    /// Canonical serialization of every agent's replica.
    pub fn replica_bytes(&self) -> Vec<Vec<u8>> {
        self.agents.iter().map(|a| canonical_bytes(&a.replica)).collect()
    }

    /// Replica elements on which agents disagree, and how many of them no
    /// lost message accounts for.
    pub fn divergence(&self) -> Divergence {
        let lost = lost_elements(&self.net);
        let mut differing = BTreeSet::new();
        let base = &self.agents[0].replica;
        for a in &self.agents[1..] {
            differing.extend(replica_diff(base, &a.replica));
        }
        let unexplained = differing.iter().filter(|e| !e.explained_by(&lost)).cloned().collect();
        Divergence {
            differing,
            lost,
            unexplained,
        }
    }

    pub fn pose_errors(&self) -> u64 {
        self.agents.iter().map(|a| a.pose_errors).sum()
    }
}

fn is_frontier(grid: &VoxelGrid, v: VoxelIndex) -> bool {
    let c = grid.center(v);
    grid.neighbors6(v)
        .any(|n| (grid.center(n) - c).z.abs() < 1e-9 && grid.state(n) == OccupancyState::Unknown)
}

/// A shared replica element, named by id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Element {
    Node(NodeId),
    Edge(NodeRef, NodeRef),
    Region(EroiId),
    Viewpoint(EroiId, u8),
}

impl Element {
    /// Whether losing the elements in `lost` can explain a disagreement on
    /// `self`.
    fn explained_by(&self, lost: &BTreeSet<Element>) -> bool {
        if lost.contains(self) {
            return true;
        }
        match self {
            Element::Edge(a, b) => [a, b].iter().any(|r| match r {
                NodeRef::History(n) => lost.contains(&Element::Node(*n)),
                NodeRef::Eroi(e) => {
                    lost.contains(&Element::Region(*e))
                        || lost.iter().any(|l| matches!(l, Element::Viewpoint(x, _) if x == e))
                }
            }),
            Element::Viewpoint(e, _) => lost.contains(&Element::Region(*e)),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Divergence {
    pub differing: BTreeSet<Element>,
    pub lost: BTreeSet<Element>,
    pub unexplained: BTreeSet<Element>,
}

fn lost_elements(net: &NetworkSim) -> BTreeSet<Element> {
    let mut out = BTreeSet::new();
    for d in net.dropped() {
        let Ok(msg) = decode(&d.bytes) else { continue };
        let Some(delta) = msg.payload.as_delta() else { continue };
        out.extend(delta.nodes.iter().map(|n| Element::Node(n.id)));
        out.extend(delta.edges_added.iter().map(|e| Element::Edge(e.id.a, e.id.b)));
        out.extend(delta.edges_removed.iter().map(|e| Element::Edge(e.a, e.b)));
        out.extend(delta.eroi_states.iter().map(|s| Element::Region(s.id)));
        out.extend(delta.viewpoint_states.iter().map(|s| Element::Viewpoint(s.eroi, s.index)));
    }
    out
}

fn replica_diff(x: &MrDtg, y: &MrDtg) -> BTreeSet<Element> {
    let mut out = BTreeSet::new();
    let ids: BTreeSet<NodeId> = x.nodes().keys().chain(y.nodes().keys()).copied().collect();
    for n in ids {
        if x.node(n) != y.node(n) {
            out.insert(Element::Node(n));
        }
    }
    let edges = |g: &MrDtg| -> BTreeMap<(NodeRef, NodeRef), crate::dtg::TopoEdge> {
        g.history_edges()
            .values()
            .chain(g.all_eroi_candidates())
            .map(|e| ((e.id.a, e.id.b), e.clone()))
            .collect()
    };
    let (ex, ey) = (edges(x), edges(y));
    for k in ex.keys().chain(ey.keys()) {
        if ex.get(k) != ey.get(k) {
            out.insert(Element::Edge(k.0, k.1));
        }
    }
    for (rx, ry) in x.erois().iter().zip(y.erois()) {
        if rx.state != ry.state {
            out.insert(Element::Region(rx.id));
        }
        for (i, (vx, vy)) in rx.viewpoints.iter().zip(&ry.viewpoints).enumerate() {
            if vx.state != vy.state {
                out.insert(Element::Viewpoint(rx.id, i as u8));
            }
        }
    }
    out
}

/// Validates, runs and returns the metrics of one scenario.
pub fn run(cfg: ScenarioConfig) -> Result<RunMetrics, ConfigError> {
    Ok(Simulation::new(cfg)?.run())
}
