//! Discrete-time execution of all agents' plans over the shared world:
//! straight-line movement with battery drain, instantaneous actions on
//! arrival, depot-stock arbitration, event injection with replanning, and
//! full trace/metric recording.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::SimError;
use crate::fitness::{distance, FitnessParams};
use crate::ga::{evolve, genome_to_actions, stops_for_requests, EvolutionReport, GaConfig};
use crate::replan::{on_event, plan_context_for, revise_actions, RevisionOutcome};
use crate::scenario::{ScenarioDocument, SimConfig};
use crate::world::{
    battery_rule, ActionKind, AgentId, AgentSpec, ArticleId, DepotId, Event, Point2D, RequestId,
    Stop, SystemState,
};

/// One agent's row in a tick record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentTraceRow {
    pub position: Point2D,
    pub battery: f64,
    /// What the agent worked on this tick, e.g. "move" or "delivery";
    /// `None` when idle.
    pub action: Option<String>,
    pub request: Option<RequestId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrationDecision {
    pub depot: DepotId,
    pub article: ArticleId,
    pub request: RequestId,
    pub agent: AgentId,
    pub granted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub agents: BTreeMap<AgentId, AgentTraceRow>,
    pub events_fired: usize,
    pub arbitration: Vec<ArbitrationDecision>,
    pub completed: Vec<RequestId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AgentMetrics {
    pub total_distance: f64,
    pub replan_count: u32,
    /// Aggregate fitness of each installed plan, initial plan first.
    pub plan_fitness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub completed: bool,
    pub completion_tick: Option<u64>,
    pub ticks: u64,
    pub agents: BTreeMap<AgentId, AgentMetrics>,
}

/// Why the run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    /// Every request done and no event pending.
    Completed { tick: u64 },
    /// A full tick passed with no movement, no material action, no event,
    /// and work remaining.
    Stalled { tick: u64 },
    MaxTicksExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub termination: Termination,
    pub metrics: RunMetrics,
    pub trace: Vec<TraceRecord>,
    pub reports: BTreeMap<AgentId, Vec<EvolutionReport>>,
    pub final_state: SystemState,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        matches!(self.termination, Termination::Completed { .. })
    }
}

/// A Take due this tick, competing for depot stock.
#[derive(Debug, Clone, PartialEq)]
pub struct TakeClaim {
    pub agent: AgentId,
    pub request: RequestId,
    pub quantity: u32,
}

/// Deterministic stock arbitration: grants claims in ascending request-id
/// order while the remaining stock covers them; from the first shortfall on,
/// every remaining claim is refused. Returns (granted, refused).
pub fn arbitrate(mut claims: Vec<TakeClaim>, available: u32) -> (Vec<TakeClaim>, Vec<TakeClaim>) {
    claims.sort_by_key(|c| c.request);
    let mut granted = Vec::new();
    let mut refused = Vec::new();
    let mut remaining = available;
    let mut exhausted = false;
    for claim in claims {
        if !exhausted && claim.quantity <= remaining {
            remaining -= claim.quantity;
            granted.push(claim);
        } else {
            exhausted = true;
            refused.push(claim);
        }
    }
    (granted, refused)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one agent's nth plan: the base seed xored with a per-agent
/// stream and the replan ordinal.
pub fn plan_seed(base: u64, agent_index: u64, ordinal: u64) -> u64 {
    splitmix64(base ^ splitmix64(agent_index.wrapping_add(1)) ^ ordinal.rotate_left(17))
}

pub struct Simulation {
    specs: BTreeMap<AgentId, AgentSpec>,
    ga: GaConfig,
    fitness: FitnessParams,
    config: SimConfig,
    pub state: SystemState,
    events: Vec<Event>,
    next_event: usize,
    trace: Vec<TraceRecord>,
    reports: BTreeMap<AgentId, Vec<EvolutionReport>>,
    metrics: BTreeMap<AgentId, AgentMetrics>,
}

impl Simulation {
    pub fn from_scenario(doc: &ScenarioDocument) -> Self {
        let specs: BTreeMap<AgentId, AgentSpec> = doc
            .agents
            .iter()
            .map(|a| (a.id.clone(), a.clone()))
            .collect();
        let metrics = specs
            .keys()
            .map(|id| (id.clone(), AgentMetrics::default()))
            .collect();
        let reports = specs.keys().map(|id| (id.clone(), Vec::new())).collect();
        Self {
            specs,
            ga: doc.ga.config,
            fitness: doc.ga.fitness,
            config: doc.sim,
            state: doc.initial_state(),
            events: doc.sorted_events(),
            next_event: 0,
            trace: Vec::new(),
            reports,
            metrics,
        }
    }

    /// Resumes over a prepared mid-run state: agents keep whatever plans and
    /// progress the state carries, and only the given events remain to fire.
    pub fn from_state(doc: &ScenarioDocument, state: SystemState, events: Vec<Event>) -> Self {
        let mut sim = Self::from_scenario(doc);
        sim.state = state;
        sim.events = events;
        sim
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.ga.seed = seed;
        self
    }

    pub fn with_max_ticks(mut self, max_ticks: u64) -> Self {
        self.config.max_ticks = max_ticks;
        self
    }

    pub fn with_fitness(mut self, fitness: FitnessParams) -> Self {
        self.fitness = fitness;
        self
    }

    fn agent_index(&self, id: &AgentId) -> u64 {
        self.specs.keys().position(|k| k == id).expect("known agent") as u64
    }

    /// Plans `stops` for one agent from `origin` and installs the result.
    fn plan_and_install(
        &mut self,
        agent_id: &AgentId,
        stops: &[Stop],
        origin: Point2D,
        snapshot: Option<&SystemState>,
    ) -> Result<(), SimError> {
        let spec = self.specs.get(agent_id).expect("known agent").clone();
        let ordinal = self.reports[agent_id].len() as u64;
        let config = GaConfig {
            seed: plan_seed(self.ga.seed, self.agent_index(agent_id), ordinal),
            ..self.ga
        };
        let system = snapshot.unwrap_or(&self.state);
        let ctx = plan_context_for(&spec, origin, stops, system, self.fitness)
            .map_err(SimError::Fitness)?;
        let report = evolve(stops, &ctx, &config);

        let actions = genome_to_actions(&report.best, &system.requests);
        let agent = self
            .state
            .agents
            .get_mut(agent_id)
            .expect("known agent");
        agent.set_plan(actions);

        let metrics = self.metrics.get_mut(agent_id).expect("known agent");
        metrics.plan_fitness.push(report.best_breakdown.aggregate);
        if ordinal > 0 {
            metrics.replan_count += 1;
        }
        self.reports.get_mut(agent_id).expect("known agent").push(report);
        Ok(())
    }

    /// Generates every agent's initial plan at tick 0 and records the
    /// initial trace snapshot.
    pub fn plan_initial(&mut self) -> Result<(), SimError> {
        let agent_ids: Vec<AgentId> = self.specs.keys().cloned().collect();
        for agent_id in &agent_ids {
            let pending = self.state.pending_requests_of(agent_id);
            let stops = stops_for_requests(pending);
            let origin = self.specs[agent_id].start;
            self.plan_and_install(agent_id, &stops, origin, None)?;
        }
        if self.config.record_trace {
            let record = TraceRecord {
                tick: 0,
                agents: self.snapshot_rows(),
                events_fired: 0,
                arbitration: Vec::new(),
                completed: Vec::new(),
            };
            self.trace.push(record);
        }
        Ok(())
    }

    fn snapshot_rows(&self) -> BTreeMap<AgentId, AgentTraceRow> {
        self.state
            .agents
            .iter()
            .map(|(id, a)| {
                (
                    id.clone(),
                    AgentTraceRow {
                        position: a.position,
                        battery: a.battery,
                        action: None,
                        request: None,
                    },
                )
            })
            .collect()
    }

    fn replan_from_outcome(&mut self, outcome: &RevisionOutcome) -> Result<(), SimError> {
        let stops = outcome.stop_set();
        let agent = outcome.agent.clone();
        let origin = outcome.agent_snapshot.position;
        self.plan_and_install(&agent, &stops, origin, Some(&outcome.system_snapshot))
    }

    fn work_remains(&self) -> bool {
        self.next_event < self.events.len()
            || self.state.requests.values().any(|r| !r.done)
    }

    fn is_complete(&self) -> bool {
        !self.work_remains()
    }

    /// Advances one tick. Returns whether anything material happened
    /// (movement, an instantaneous action, an event, or a completion).
    pub fn step(&mut self) -> Result<bool, SimError> {
        let tick = self.state.time + 1;
        self.state.time = tick;

        let mut rows: BTreeMap<AgentId, AgentTraceRow> = BTreeMap::new();
        let mut arbitration: Vec<ArbitrationDecision> = Vec::new();
        let mut events_fired = 0usize;
        let mut material = false;

        // Events fire before any movement.
        while self.next_event < self.events.len() && self.events[self.next_event].time == tick {
            let event = self.events[self.next_event].clone();
            self.next_event += 1;
            events_fired += 1;
            material = true;
            let outcomes = on_event(&mut self.state, &event)?;
            for outcome in &outcomes {
                self.replan_from_outcome(outcome)?;
            }
        }

        let done_before: Vec<RequestId> = self
            .state
            .requests
            .values()
            .filter(|r| r.done)
            .map(|r| r.id)
            .collect();

        // Movement phase. Resolve targets first, then advance each agent.
        let agent_ids: Vec<AgentId> = self.specs.keys().cloned().collect();
        let mut due: Vec<(AgentId, usize)> = Vec::new();
        for agent_id in &agent_ids {
            let (next_index, kind) = {
                let agent = &self.state.agents[agent_id];
                match agent.next_action_index() {
                    None => {
                        rows.insert(
                            agent_id.clone(),
                            AgentTraceRow {
                                position: agent.position,
                                battery: agent.battery,
                                action: None,
                                request: None,
                            },
                        );
                        continue;
                    }
                    Some(i) => (i, agent.plan[i].kind.clone()),
                }
            };

            match kind {
                ActionKind::Move { ref target } => {
                    let target_pos = self.state.location_position(target)?;
                    let spec = &self.specs[agent_id];
                    let (speed, drain_per_unit) =
                        (spec.speed, spec.consumption / spec.battery_capacity);
                    let request = self.state.agents[agent_id].plan[next_index].request;

                    let agent = self.state.agents.get_mut(agent_id).expect("known agent");
                    let gap = distance(agent.position, target_pos);
                    let step = gap.min(speed);
                    if gap <= speed {
                        agent.position = target_pos;
                    } else {
                        let t = speed / gap;
                        agent.position = Point2D::new(
                            agent.position.x + (target_pos.x - agent.position.x) * t,
                            agent.position.y + (target_pos.y - agent.position.y) * t,
                        );
                    }
                    agent.battery = (agent.battery - step * drain_per_unit).clamp(0.0, 1.0);
                    if step > 0.0 {
                        material = true;
                    }
                    self.metrics
                        .get_mut(agent_id)
                        .expect("known agent")
                        .total_distance += step;

                    rows.insert(
                        agent_id.clone(),
                        AgentTraceRow {
                            position: self.state.agents[agent_id].position,
                            battery: self.state.agents[agent_id].battery,
                            action: Some("move".to_owned()),
                            request,
                        },
                    );

                    if gap <= speed {
                        // Arrived: the move completes, and its paired
                        // instantaneous action applies in the same tick.
                        self.state.apply_action(agent_id, next_index)?;
                        let agent = &self.state.agents[agent_id];
                        if let Some(i) = agent.next_action_index() {
                            if !matches!(agent.plan[i].kind, ActionKind::Move { .. }) {
                                due.push((agent_id.clone(), i));
                            }
                        }
                    }
                }
                _ => {
                    // A bare instantaneous action at the plan head (the
                    // paired move already executed earlier).
                    due.push((agent_id.clone(), next_index));
                }
            }
        }

        // Arbitration: group due takes per (depot, article).
        let mut take_groups: BTreeMap<(DepotId, ArticleId), Vec<(TakeClaim, usize)>> =
            BTreeMap::new();
        let mut others: Vec<(AgentId, usize)> = Vec::new();
        for (agent_id, index) in due {
            let action = &self.state.agents[&agent_id].plan[index];
            match &action.kind {
                ActionKind::Take {
                    depot,
                    article,
                    quantity,
                } => {
                    let claim = TakeClaim {
                        agent: agent_id.clone(),
                        request: action.request.expect("takes are request-tagged"),
                        quantity: *quantity,
                    };
                    take_groups
                        .entry((depot.clone(), article.clone()))
                        .or_default()
                        .push((claim, index));
                }
                _ => others.push((agent_id, index)),
            }
        }

        let mut refused_agents: Vec<AgentId> = Vec::new();
        for ((depot, article), group) in take_groups {
            let available = self
                .state
                .depots
                .get(&depot)
                .and_then(|d| d.stock.get(&article))
                .copied()
                .unwrap_or(0);
            let index_of: BTreeMap<RequestId, (AgentId, usize)> = group
                .iter()
                .map(|(c, i)| (c.request, (c.agent.clone(), *i)))
                .collect();
            let claims: Vec<TakeClaim> = group.into_iter().map(|(c, _)| c).collect();
            let (granted, refused) = arbitrate(claims, available);

            for claim in granted {
                let (agent_id, index) = index_of[&claim.request].clone();
                self.state.apply_action(&agent_id, index)?;
                material = true;
                if let Some(row) = rows.get_mut(&agent_id) {
                    row.action = Some("take".to_owned());
                    row.request = Some(claim.request);
                } else {
                    let agent = &self.state.agents[&agent_id];
                    rows.insert(
                        agent_id.clone(),
                        AgentTraceRow {
                            position: agent.position,
                            battery: agent.battery,
                            action: Some("take".to_owned()),
                            request: Some(claim.request),
                        },
                    );
                }
                arbitration.push(ArbitrationDecision {
                    depot: depot.clone(),
                    article: article.clone(),
                    request: claim.request,
                    agent: agent_id,
                    granted: true,
                });
            }
            for claim in refused {
                arbitration.push(ArbitrationDecision {
                    depot: depot.clone(),
                    article: article.clone(),
                    request: claim.request,
                    agent: claim.agent.clone(),
                    granted: false,
                });
                refused_agents.push(claim.agent);
            }
        }

        for (agent_id, index) in others {
            let action_name = self.state.agents[&agent_id].plan[index].kind.name().to_owned();
            let request = self.state.agents[&agent_id].plan[index].request;
            self.state.apply_action(&agent_id, index)?;
            material = true;
            let agent = &self.state.agents[&agent_id];
            rows.insert(
                agent_id.clone(),
                AgentTraceRow {
                    position: agent.position,
                    battery: agent.battery,
                    action: Some(action_name),
                    request,
                },
            );
        }

        // A refused take means the plan as ordered cannot proceed; the agent
        // replans from here with the failed stop retained.
        for agent_id in refused_agents {
            let agent_state = self.state.agents[&agent_id].clone();
            let outcome =
                revise_actions(&agent_id, &agent_state.plan, &[], &agent_state, &self.state);
            self.replan_from_outcome(&outcome)?;
        }

        // Reg2 check after the tick's drain; the detour lands at the next
        // action boundary.
        for agent_id in &agent_ids {
            let needs_charge = {
                let agent = &self.state.agents[agent_id];
                agent.battery <= crate::world::BATTERY_THRESHOLD && !self.heading_to_charge(agent)
            };
            if needs_charge {
                let charge = battery_rule(
                    &self.state.agents[agent_id],
                    self.state.chargers.values(),
                )?
                .expect("threshold already checked");
                let ActionKind::ChargeBattery { charger } = &charge.kind else {
                    unreachable!("battery rule yields a charge action");
                };
                let move_to = crate::world::Action::new(
                    ActionKind::Move {
                        target: crate::world::LocationRef::Charger(charger.clone()),
                    },
                    None,
                );
                let agent = self.state.agents.get_mut(agent_id).expect("known agent");
                let at = agent.next_action_index().unwrap_or(agent.plan.len());
                agent.plan.insert(at, charge);
                agent.plan.insert(at, move_to);
                agent.total_count += 2;
            }
        }

        let completed: Vec<RequestId> = self
            .state
            .requests
            .values()
            .filter(|r| r.done && !done_before.contains(&r.id))
            .map(|r| r.id)
            .collect();
        if !completed.is_empty() {
            material = true;
        }

        if self.config.record_trace {
            self.trace.push(TraceRecord {
                tick,
                agents: rows,
                events_fired,
                arbitration,
                completed,
            });
        }
        Ok(material)
    }

    fn heading_to_charge(&self, agent: &crate::world::AgentState) -> bool {
        let Some(i) = agent.next_action_index() else {
            return false;
        };
        agent.plan[i..].iter().take(2).any(|a| {
            matches!(
                a.kind,
                ActionKind::ChargeBattery { .. }
                    | ActionKind::Move {
                        target: crate::world::LocationRef::Charger(_)
                    }
            )
        })
    }

    /// Plans at tick 0, then steps until every request is done or a limit
    /// hits.
    pub fn run(mut self) -> Result<RunOutcome, SimError> {
        self.plan_initial()?;
        self.run_to_termination()
    }

    /// Steps from the current state until every request is done or a limit
    /// hits, without planning first. Plans must already be installed.
    pub fn run_to_termination(mut self) -> Result<RunOutcome, SimError> {
        if self.config.record_trace && self.trace.is_empty() {
            let record = TraceRecord {
                tick: self.state.time,
                agents: self.snapshot_rows(),
                events_fired: 0,
                arbitration: Vec::new(),
                completed: Vec::new(),
            };
            self.trace.push(record);
        }

        let termination = if self.is_complete() {
            Termination::Completed {
                tick: self.state.time,
            }
        } else {
            loop {
                if self.state.time >= self.config.max_ticks {
                    break Termination::MaxTicksExceeded;
                }
                let material = self.step()?;
                if self.is_complete() {
                    break Termination::Completed {
                        tick: self.state.time,
                    };
                }
                // Idle waiting for a scheduled event is not a stall.
                if !material && self.next_event >= self.events.len() {
                    break Termination::Stalled {
                        tick: self.state.time,
                    };
                }
            }
        };

        let completion_tick = match termination {
            Termination::Completed { tick } => Some(tick),
            _ => None,
        };
        let metrics = RunMetrics {
            completed: completion_tick.is_some(),
            completion_tick,
            ticks: self.state.time,
            agents: self.metrics,
        };
        Ok(RunOutcome {
            termination,
            metrics,
            trace: self.trace,
            reports: self.reports,
            final_state: self.state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn scenario(json: serde_json::Value) -> ScenarioDocument {
        parse_scenario(&json.to_string()).unwrap()
    }

    fn base_world() -> serde_json::Value {
        serde_json::json!({
            "bounds": { "min": {"x": -1000.0, "y": -1000.0}, "max": {"x": 1000.0, "y": 1000.0} },
            "chargers": [ { "id": "C1", "position": {"x": 0.0, "y": 100.0} } ]
        })
    }

    #[test]
    fn arbitrate_grants_a_lone_take() {
        let claims = vec![TakeClaim {
            agent: "A1".into(),
            request: RequestId(1),
            quantity: 100,
        }];
        let (granted, refused) = arbitrate(claims, 100);
        assert_eq!(granted.len(), 1);
        assert!(refused.is_empty());
    }

    #[test]
    fn arbitrate_prefers_the_lower_request_id() {
        let claims = vec![
            TakeClaim {
                agent: "A2".into(),
                request: RequestId(9),
                quantity: 100,
            },
            TakeClaim {
                agent: "A1".into(),
                request: RequestId(4),
                quantity: 100,
            },
        ];
        let (granted, refused) = arbitrate(claims, 150);
        assert_eq!(granted.len(), 1);
        assert_eq!(granted[0].request, RequestId(4));
        assert_eq!(refused.len(), 1);
        assert_eq!(refused[0].request, RequestId(9));
    }

    #[test]
    fn arbitrate_grants_everyone_without_scarcity() {
        let claims = vec![
            TakeClaim {
                agent: "A2".into(),
                request: RequestId(9),
                quantity: 100,
            },
            TakeClaim {
                agent: "A1".into(),
                request: RequestId(4),
                quantity: 100,
            },
        ];
        let (granted, refused) = arbitrate(claims, 200);
        assert_eq!(granted.len(), 2);
        assert!(refused.is_empty());
        // Grant order is still ascending by request id.
        assert_eq!(granted[0].request, RequestId(4));
    }

    #[test]
    fn arbitrate_stops_granting_at_the_first_shortfall() {
        let claims = vec![
            TakeClaim {
                agent: "A1".into(),
                request: RequestId(1),
                quantity: 80,
            },
            TakeClaim {
                agent: "A2".into(),
                request: RequestId(2),
                quantity: 100,
            },
            TakeClaim {
                agent: "A3".into(),
                request: RequestId(3),
                quantity: 10,
            },
        ];
        let (granted, refused) = arbitrate(claims, 100);
        assert_eq!(granted.len(), 1);
        assert_eq!(refused.len(), 2);
    }

    #[test]
    fn zero_request_scenario_completes_immediately() {
        let doc = scenario(serde_json::json!({ "world": base_world() }));
        let outcome = Simulation::from_scenario(&doc).run().unwrap();
        assert_eq!(outcome.termination, Termination::Completed { tick: 0 });
        assert_eq!(outcome.metrics.ticks, 0);
        assert!(outcome.metrics.agents.is_empty());
    }

    fn single_request_scenario(start: (f64, f64), depot: (f64, f64), client: (f64, f64)) -> ScenarioDocument {
        scenario(serde_json::json!({
            "world": base_world(),
            "articles": [ { "id": "Art1" } ],
            "depots": [ { "id": "S1", "position": {"x": depot.0, "y": depot.1}, "stock": { "Art1": 100 } } ],
            "clients": [ { "id": "T1", "position": {"x": client.0, "y": client.1} } ],
            "agents": [ {
                "id": "A1",
                "start": {"x": start.0, "y": start.1},
                "battery_capacity": 10000.0,
                "speed": 5.0,
                "consumption": 1.0,
                "constraints": [
                    { "kind": "distance", "coefficient": 10.0 },
                    { "kind": "obstacles", "coefficient": 8.0 }
                ]
            } ],
            "requests": [ { "id": 1, "depot": "S1", "article": "Art1", "client": "T1",
                            "quantity": 100, "agent": "A1" } ]
        }))
    }

    #[test]
    fn movement_clamps_onto_the_target() {
        // Depot 3 units away, speed 5: the agent lands exactly on it and
        // takes in the same tick.
        let doc = single_request_scenario((0.0, 0.0), (3.0, 0.0), (3.0, 4.0));
        let mut sim = Simulation::from_scenario(&doc);
        sim.plan_initial().unwrap();
        sim.step().unwrap();
        let agent = &sim.state.agents[&"A1".into()];
        assert_eq!(agent.position, Point2D::new(3.0, 0.0));
        assert!(agent.plan[0].executed, "move completed");
        assert!(agent.plan[1].executed, "take applied on arrival");
        assert!(sim.state.progress_of(RequestId(1)).taken);
    }

    #[test]
    fn degenerate_geometry_finishes_in_action_ticks() {
        // Start, depot, and client all at one point: no travel at all.
        let doc = single_request_scenario((0.0, 0.0), (0.0, 0.0), (0.0, 0.0));
        let outcome = Simulation::from_scenario(&doc).run().unwrap();
        assert_eq!(outcome.termination, Termination::Completed { tick: 2 });
        let metrics = &outcome.metrics.agents[&"A1".into()];
        assert_eq!(metrics.total_distance, 0.0);
    }

    #[test]
    fn single_request_run_completes_and_tracks_distance() {
        let doc = single_request_scenario((0.0, 0.0), (30.0, 0.0), (30.0, 40.0));
        let outcome = Simulation::from_scenario(&doc).run().unwrap();
        assert!(outcome.completed());
        let metrics = &outcome.metrics.agents[&"A1".into()];
        assert!((metrics.total_distance - 70.0).abs() < 1e-9);
        assert_eq!(metrics.replan_count, 0);
        assert!(outcome.final_state.requests[&RequestId(1)].done);
        // 6 travel ticks to the depot + 8 to the client, actions on arrival.
        assert_eq!(outcome.termination, Termination::Completed { tick: 14 });
    }

    #[test]
    fn battery_drain_splices_a_charge_detour() {
        // Consumption tuned so battery crosses the threshold mid-route and
        // one charge covers the rest.
        let doc = scenario(serde_json::json!({
            "world": {
                "bounds": { "min": {"x": -1000.0, "y": -1000.0}, "max": {"x": 1000.0, "y": 1000.0} },
                "chargers": [ { "id": "C1", "position": {"x": 150.0, "y": 0.0} } ]
            },
            "articles": [ { "id": "Art1" } ],
            "depots": [ { "id": "S1", "position": {"x": 100.0, "y": 0.0}, "stock": { "Art1": 10 } } ],
            "clients": [ { "id": "T1", "position": {"x": 200.0, "y": 0.0} } ],
            "agents": [ {
                "id": "A1",
                "start": {"x": 0.0, "y": 0.0},
                "battery_capacity": 100.0,
                "speed": 10.0,
                "consumption": 0.5,
                "constraints": [
                    { "kind": "distance", "coefficient": 10.0 },
                    { "kind": "obstacles", "coefficient": 8.0 }
                ]
            } ],
            "requests": [ { "id": 1, "depot": "S1", "article": "Art1", "client": "T1",
                            "quantity": 10, "agent": "A1" } ]
        }));
        let outcome = Simulation::from_scenario(&doc).run().unwrap();
        assert!(outcome.completed());
        // The run needed a charge to cover 200 units on a 100-unit battery.
        let charged = outcome.trace.iter().any(|r| {
            r.agents
                .values()
                .any(|row| row.action.as_deref() == Some("charge_battery"))
        });
        assert!(charged, "expected a charge detour");
        for record in &outcome.trace {
            for row in record.agents.values() {
                assert!(
                    (0.0..=1.0).contains(&row.battery),
                    "battery out of bounds: {}",
                    row.battery
                );
            }
        }
    }

    #[test]
    fn threshold_crossing_splices_the_detour_at_the_next_boundary() {
        // Battery 0.12 draining 0.03 this tick lands at 0.09; the detour
        // must sit in front of the remaining actions after the tick.
        let doc = single_request_scenario((0.0, 0.0), (1000.0, 0.0), (1000.0, 500.0));
        let mut sim = Simulation::from_scenario(&doc);
        sim.plan_initial().unwrap();
        {
            // Speed 5, capacity 10000, consumption 1: tune drain to 0.03.
            let agent = sim.state.agents.get_mut(&"A1".into()).unwrap();
            agent.battery = 0.12;
        }
        let drain_per_tick = 5.0 * 1.0 / 10_000.0;
        assert!((drain_per_tick - 0.0005) < 1e-12);
        // Make one tick drain 0.03 by pretending a faster agent.
        let mut doc2 = doc.clone();
        doc2.agents[0].consumption = 60.0; // 60 * 5 / 10000 = 0.03 per tick
        let mut sim = Simulation::from_scenario(&doc2);
        sim.plan_initial().unwrap();
        sim.state.agents.get_mut(&"A1".into()).unwrap().battery = 0.12;

        sim.step().unwrap();

        let agent = &sim.state.agents[&"A1".into()];
        assert!((agent.battery - 0.09).abs() < 1e-12);
        let next = agent.next_action_index().unwrap();
        assert_eq!(
            agent.plan[next].kind,
            ActionKind::Move {
                target: crate::world::LocationRef::Charger("C1".into())
            }
        );
        assert!(matches!(
            agent.plan[next + 1].kind,
            ActionKind::ChargeBattery { .. }
        ));
    }

    #[test]
    fn conflicting_takes_are_arbitrated_and_the_loser_replans() {
        // Two agents, same depot and article, stock covers only one take.
        // Equidistant starts make both arrive in the same tick.
        let doc = scenario(serde_json::json!({
            "world": base_world(),
            "articles": [ { "id": "Art1" } ],
            "depots": [ { "id": "S1", "position": {"x": 0.0, "y": 0.0}, "stock": { "Art1": 100 } } ],
            "clients": [
                { "id": "T1", "position": {"x": 10.0, "y": 0.0} },
                { "id": "T2", "position": {"x": -10.0, "y": 0.0} }
            ],
            "agents": [
                {
                    "id": "A1",
                    "start": {"x": 20.0, "y": 0.0},
                    "battery_capacity": 10000.0,
                    "speed": 10.0,
                    "consumption": 0.1,
                    "constraints": [
                        { "kind": "distance", "coefficient": 10.0 },
                        { "kind": "obstacles", "coefficient": 8.0 }
                    ]
                },
                {
                    "id": "A2",
                    "start": {"x": -20.0, "y": 0.0},
                    "battery_capacity": 10000.0,
                    "speed": 10.0,
                    "consumption": 0.1,
                    "constraints": [
                        { "kind": "distance", "coefficient": 10.0 },
                        { "kind": "obstacles", "coefficient": 8.0 }
                    ]
                }
            ],
            "requests": [
                { "id": 4, "depot": "S1", "article": "Art1", "client": "T1",
                  "quantity": 100, "agent": "A1" },
                { "id": 9, "depot": "S1", "article": "Art1", "client": "T2",
                  "quantity": 100, "agent": "A2" }
            ]
        }));
        let outcome = Simulation::from_scenario(&doc).run().unwrap();

        // The winner completes; the loser replans and eventually stalls on
        // the empty depot.
        assert_eq!(outcome.termination, Termination::Stalled { tick: outcome.metrics.ticks });
        assert!(outcome.final_state.requests[&RequestId(4)].done);
        assert!(!outcome.final_state.requests[&RequestId(9)].done);

        let decisions: Vec<&ArbitrationDecision> = outcome
            .trace
            .iter()
            .flat_map(|r| r.arbitration.iter())
            .collect();
        assert!(decisions
            .iter()
            .any(|d| d.request == RequestId(4) && d.granted));
        assert!(decisions
            .iter()
            .any(|d| d.request == RequestId(9) && !d.granted));
        assert!(outcome.metrics.agents[&"A2".into()].replan_count >= 1);
    }

    #[test]
    fn event_triggers_exactly_one_replan_per_named_agent() {
        let doc = scenario(serde_json::json!({
            "world": base_world(),
            "articles": [ { "id": "Art1" }, { "id": "Art2" } ],
            "depots": [
                { "id": "S1", "position": {"x": 100.0, "y": 0.0}, "stock": { "Art1": 100 } },
                { "id": "S2", "position": {"x": 0.0, "y": 100.0}, "stock": { "Art2": 100 } }
            ],
            "clients": [
                { "id": "T1", "position": {"x": 200.0, "y": 0.0} },
                { "id": "T2", "position": {"x": 0.0, "y": 200.0} }
            ],
            "agents": [ {
                "id": "A1",
                "start": {"x": 0.0, "y": 0.0},
                "battery_capacity": 100000.0,
                "speed": 10.0,
                "consumption": 0.1,
                "constraints": [
                    { "kind": "distance", "coefficient": 10.0 },
                    { "kind": "obstacles", "coefficient": 8.0 }
                ]
            } ],
            "requests": [
                { "id": 1, "depot": "S1", "article": "Art1", "client": "T1",
                  "quantity": 100, "agent": "A1" }
            ],
            "events": [ {
                "time": 3,
                "new_requests": [
                    { "id": 2, "depot": "S2", "article": "Art2", "client": "T2",
                      "quantity": 50, "agent": "A1", "release_time": 3 }
                ]
            } ]
        }));
        let outcome = Simulation::from_scenario(&doc).run().unwrap();
        assert!(outcome.completed());
        assert_eq!(outcome.metrics.agents[&"A1".into()].replan_count, 1);
        assert!(outcome.final_state.requests[&RequestId(2)].done);
        let event_tick: Vec<_> = outcome
            .trace
            .iter()
            .filter(|r| r.events_fired > 0)
            .collect();
        assert_eq!(event_tick.len(), 1);
        assert_eq!(event_tick[0].tick, 3);
    }

    #[test]
    fn trace_ticks_are_strictly_increasing_and_deterministic() {
        let doc = single_request_scenario((0.0, 0.0), (30.0, 0.0), (30.0, 40.0));
        let a = Simulation::from_scenario(&doc).run().unwrap();
        let b = Simulation::from_scenario(&doc).run().unwrap();
        assert_eq!(a.trace, b.trace);
        for pair in a.trace.windows(2) {
            assert_eq!(pair[1].tick, pair[0].tick + 1);
        }
    }
}
