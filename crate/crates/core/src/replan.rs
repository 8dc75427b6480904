//! Dynamic plan regeneration: when the world changes, each affected agent's
//! stop set is revised to the unexecuted remnant of its old plan plus the
//! stops of its new requests, and the genetic algorithm reruns from the
//! live state.

use std::collections::{BTreeMap, HashSet};

use crate::error::{FitnessError, WorldError};
use crate::fitness::{FitnessParams, PlanContext, StopLocations};
use crate::ga::{evolve, EvolutionReport, GaConfig};
use crate::world::{
    ActionKind, Action, AgentId, AgentState, AgentSpec, Event, Request, RequestId, Stop,
    SystemState,
};

/// What a revision produced for one agent: the stops kept from the old plan,
/// the stops its new requests add, and the state snapshots the replan starts
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct RevisionOutcome {
    pub agent: AgentId,
    pub retained: Vec<Stop>,
    pub new: Vec<Stop>,
    pub agent_snapshot: AgentState,
    pub system_snapshot: SystemState,
}

impl RevisionOutcome {
    /// The stop set the replan plans over, retained first.
    pub fn stop_set(&self) -> Vec<Stop> {
        let mut stops = self.retained.clone();
        stops.extend(self.new.iter().copied());
        stops
    }
}

/// Stop-level retention: a pickup survives while its Take is unexecuted, a
/// delivery while its Delivery is unexecuted. An interrupted leg (Move done,
/// paired action not) is retained whole and re-planned from the live
/// position.
pub fn revise_stops(old_plan: &[Action], new_requests: &[Request]) -> (Vec<Stop>, Vec<Stop>) {
    let mut retained = Vec::new();
    for action in old_plan {
        let Some(request) = action.request else {
            continue; // spliced charge detours are never retained
        };
        match action.kind {
            ActionKind::Take { .. } if !action.executed => {
                retained.push(Stop::pickup(request));
            }
            ActionKind::Delivery { .. } if !action.executed => {
                retained.push(Stop::delivery(request));
            }
            _ => {}
        }
    }

    let mut new = Vec::new();
    for request in new_requests {
        new.push(Stop::pickup(request.id));
        new.push(Stop::delivery(request.id));
    }
    (retained, new)
}

/// Revision with snapshots attached. Asserts the precedence-relaxation
/// soundness condition: a retained delivery without its pickup is only legal
/// because the pickup's Take already executed.
pub fn revise_actions(
    agent: &AgentId,
    old_plan: &[Action],
    new_requests: &[Request],
    agent_snapshot: &AgentState,
    system_snapshot: &SystemState,
) -> RevisionOutcome {
    let (retained, new) = revise_stops(old_plan, new_requests);

    let retained_pickups: HashSet<RequestId> = retained
        .iter()
        .filter(|s| s.kind == crate::world::StopKind::Pickup)
        .map(|s| s.request)
        .collect();
    for stop in &retained {
        if stop.kind == crate::world::StopKind::Delivery
            && !retained_pickups.contains(&stop.request)
        {
            assert!(
                system_snapshot.progress_of(stop.request).taken,
                "delivery of {} retained without its pickup, but nothing was taken",
                stop.request
            );
        }
    }
    debug_assert!(
        retained.iter().all(|s| !new.contains(s)),
        "retained and new stop sets overlap"
    );

    RevisionOutcome {
        agent: agent.clone(),
        retained,
        new,
        agent_snapshot: agent_snapshot.clone(),
        system_snapshot: system_snapshot.clone(),
    }
}

/// Applies an event to the world and revises exactly the agents its requests
/// name. Unaffected agents keep their plans untouched.
pub fn on_event(system: &mut SystemState, event: &Event) -> Result<Vec<RevisionOutcome>, WorldError> {
    debug_assert_eq!(event.time, system.time, "event fired off its tick");

    for request in &event.new_requests {
        if !system.agents.contains_key(&request.agent) {
            return Err(WorldError::UnknownAgent(request.agent.clone()));
        }
    }

    for depot in &event.new_depots {
        system.depots.insert(depot.id.clone(), depot.clone());
    }
    for client in &event.new_clients {
        system.clients.insert(client.id.clone(), client.clone());
    }
    for request in &event.new_requests {
        system.requests.insert(request.id, request.clone());
    }

    let mut by_agent: BTreeMap<AgentId, Vec<Request>> = BTreeMap::new();
    for request in &event.new_requests {
        by_agent
            .entry(request.agent.clone())
            .or_default()
            .push(request.clone());
    }

    let mut outcomes = Vec::with_capacity(by_agent.len());
    for (agent_id, requests) in by_agent {
        let agent_state = system
            .agents
            .get(&agent_id)
            .expect("agent existence checked above")
            .clone();
        outcomes.push(revise_actions(
            &agent_id,
            &agent_state.plan,
            &requests,
            &agent_state,
            system,
        ));
    }
    Ok(outcomes)
}

/// Builds the scoring context for a replan: route origin at the snapshot
/// position, stop locations resolved against the snapshot world.
pub fn plan_context_for(
    spec: &AgentSpec,
    origin: crate::world::Point2D,
    stops: &[Stop],
    system: &SystemState,
    params: FitnessParams,
) -> Result<PlanContext, FitnessError> {
    let mut locations = BTreeMap::new();
    for stop in stops {
        let request = system
            .requests
            .get(&stop.request)
            .unwrap_or_else(|| panic!("no request {}", stop.request));
        let depot = system
            .depots
            .get(&request.depot)
            .unwrap_or_else(|| panic!("no depot {}", request.depot));
        let client = system
            .clients
            .get(&request.client)
            .unwrap_or_else(|| panic!("no client {}", request.client));
        locations.insert(
            request.id,
            StopLocations {
                pickup: depot.position,
                delivery: client.position,
            },
        );
    }
    PlanContext::new(
        origin,
        locations,
        system.obstacles.clone(),
        spec.constraints.clone(),
        params,
    )
}

/// Reruns the GA over the revised stop set from the snapshot state.
pub fn replan(
    spec: &AgentSpec,
    outcome: &RevisionOutcome,
    params: FitnessParams,
    config: &GaConfig,
) -> Result<EvolutionReport, FitnessError> {
    let stops = outcome.stop_set();
    let ctx = plan_context_for(
        spec,
        outcome.agent_snapshot.position,
        &stops,
        &outcome.system_snapshot,
        params,
    )?;
    Ok(evolve(&stops, &ctx, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::AggregationMode;
    use crate::world::{
        expand_request, AgentState, Client, ConstraintKind, ConstraintSpec, Depot, Point2D,
        RequestProgress, StopKind,
    };

    fn request(id: u32, depot: &str, article: &str, client: &str, qty: u32, agent: &str) -> Request {
        Request {
            id: RequestId(id),
            depot: depot.into(),
            article: article.into(),
            client: client.into(),
            quantity: qty,
            agent: agent.into(),
            done: false,
            release_time: 0,
        }
    }

    fn plan_of(requests: &[(Request, [bool; 4])]) -> Vec<Action> {
        let mut plan = Vec::new();
        for (req, flags) in requests {
            let mut actions = expand_request(req);
            for (action, executed) in actions.iter_mut().zip(flags) {
                action.executed = *executed;
            }
            plan.extend(actions);
        }
        plan
    }

    const DONE: [bool; 4] = [true, true, true, true];
    const FRESH: [bool; 4] = [false, false, false, false];

    #[test]
    fn revision_keeps_unexecuted_stops_and_adds_new_ones() {
        // First agent mid-run: first and third requests fully executed,
        // second untouched, one new request arriving.
        let plan = plan_of(&[
            (request(1, "S1", "Art1", "T3", 100, "A1"), DONE),
            (request(2, "S3", "Art3", "T4", 50, "A1"), FRESH),
            (request(3, "S2", "Art2", "T1", 150, "A1"), DONE),
        ]);
        let new = [request(11, "S5", "Art5", "T1", 400, "A1")];
        let (retained, added) = revise_stops(&plan, &new);
        assert_eq!(
            retained,
            vec![Stop::pickup(RequestId(2)), Stop::delivery(RequestId(2))]
        );
        assert_eq!(
            added,
            vec![Stop::pickup(RequestId(11)), Stop::delivery(RequestId(11))]
        );
    }

    #[test]
    fn revision_without_event_or_progress_keeps_everything() {
        let plan = plan_of(&[
            (request(1, "S1", "Art1", "T3", 100, "A1"), FRESH),
            (request(2, "S3", "Art3", "T4", 50, "A1"), FRESH),
        ]);
        let (retained, added) = revise_stops(&plan, &[]);
        assert_eq!(retained.len(), 4);
        assert!(added.is_empty());
        assert_eq!(
            retained,
            vec![
                Stop::pickup(RequestId(1)),
                Stop::delivery(RequestId(1)),
                Stop::pickup(RequestId(2)),
                Stop::delivery(RequestId(2)),
            ]
        );
    }

    #[test]
    fn interrupted_pickup_keeps_only_the_delivery() {
        // Third agent mid-run: one request done, one untouched, one with its
        // Take executed but its Delivery pending.
        let plan = plan_of(&[
            (request(8, "S2", "Art2", "T3", 150, "A3"), DONE),
            (request(9, "S1", "Art1", "T2", 150, "A3"), FRESH),
            (request(10, "S4", "Art4", "T1", 200, "A3"), [true, true, false, false]),
        ]);
        let new = [request(13, "S5", "Art5", "T8", 100, "A3")];
        let (retained, added) = revise_stops(&plan, &new);
        assert_eq!(
            retained,
            vec![
                Stop::pickup(RequestId(9)),
                Stop::delivery(RequestId(9)),
                Stop::delivery(RequestId(10)),
            ]
        );
        assert_eq!(
            added,
            vec![Stop::pickup(RequestId(13)), Stop::delivery(RequestId(13))]
        );
    }

    #[test]
    fn spliced_charge_actions_are_not_retained() {
        use crate::world::LocationRef;
        let mut plan = plan_of(&[(request(1, "S1", "Art1", "T3", 100, "A1"), FRESH)]);
        plan.insert(
            0,
            Action::new(
                ActionKind::Move {
                    target: LocationRef::Charger("C1".into()),
                },
                None,
            ),
        );
        plan.insert(
            1,
            Action::new(
                ActionKind::ChargeBattery {
                    charger: "C1".into(),
                },
                None,
            ),
        );
        let (retained, _) = revise_stops(&plan, &[]);
        assert_eq!(
            retained,
            vec![Stop::pickup(RequestId(1)), Stop::delivery(RequestId(1))]
        );
    }

    #[test]
    fn twice_revised_plans_match_direct_revision_of_cumulative_state() {
        // Revision must compose: revising a revised plan equals revising the
        // original against the total executed set.
        let r1 = request(1, "S1", "Art1", "T1", 10, "A1");
        let r2 = request(2, "S1", "Art1", "T2", 10, "A1");
        let r4 = request(4, "S1", "Art1", "T4", 10, "A1");
        let r5 = request(5, "S1", "Art1", "T5", 10, "A1");

        // Original plan over r1, r2; r1 executes, then an event adds r4.
        let plan0 = plan_of(&[(r1.clone(), DONE), (r2.clone(), FRESH)]);
        let (retained1, new1) = revise_stops(&plan0, std::slice::from_ref(&r4));
        let mut stops1 = retained1.clone();
        stops1.extend(&new1);

        // The replanned plan covers stops1; r2's pickup pair then executes
        // before a second event adds r5.
        assert_eq!(stops1.len(), 4);
        let plan1 = plan_of(&[(r2.clone(), [true, true, false, false]), (r4.clone(), FRESH)]);
        let (retained2, new2) = revise_stops(&plan1, std::slice::from_ref(&r5));
        let mut stops2 = retained2.clone();
        stops2.extend(&new2);

        // Direct revision: same cumulative executed flags on one flat plan.
        let direct = plan_of(&[
            (r1, DONE),
            (r2, [true, true, false, false]),
            (r4, FRESH),
        ]);
        let (direct_retained, direct_new) = revise_stops(&direct, std::slice::from_ref(&r5));
        let mut direct_stops = direct_retained.clone();
        direct_stops.extend(&direct_new);

        let as_set = |stops: &[Stop]| stops.iter().copied().collect::<std::collections::BTreeSet<_>>();
        assert_eq!(as_set(&stops2), as_set(&direct_stops));
    }

    fn tiny_system(agents: &[&str]) -> SystemState {
        let mut system = SystemState {
            time: 0,
            depots: BTreeMap::new(),
            clients: BTreeMap::new(),
            chargers: BTreeMap::new(),
            obstacles: Vec::new(),
            requests: BTreeMap::new(),
            agents: BTreeMap::new(),
            progress: BTreeMap::new(),
        };
        system.depots.insert(
            "S1".into(),
            Depot {
                id: "S1".into(),
                position: Point2D::new(0.0, 0.0),
                stock: BTreeMap::from([("Art1".into(), 1000)]),
            },
        );
        for t in ["T1", "T2", "T4", "T5", "T8"] {
            system.clients.insert(
                t.into(),
                Client {
                    id: t.into(),
                    position: Point2D::new(10.0, 10.0),
                },
            );
        }
        for a in agents {
            system
                .agents
                .insert((*a).into(), AgentState::at(Point2D::new(0.0, 0.0)));
        }
        system
    }

    #[test]
    fn event_revises_exactly_the_agents_it_names() {
        let mut system = tiny_system(&["A1", "A2", "A3"]);
        system.time = 5;
        let plan_a1 = plan_of(&[(request(1, "S1", "Art1", "T1", 10, "A1"), FRESH)]);
        let plan_a3 = plan_of(&[(request(3, "S1", "Art1", "T2", 10, "A3"), FRESH)]);
        system.agents.get_mut(&"A1".into()).unwrap().set_plan(plan_a1.clone());
        system.agents.get_mut(&"A3".into()).unwrap().set_plan(plan_a3.clone());

        let mut event = Event {
            time: 5,
            new_depots: Vec::new(),
            new_clients: Vec::new(),
            new_requests: vec![request(21, "S1", "Art1", "T4", 5, "A2")],
        };
        event.new_requests[0].release_time = 5;

        let outcomes = on_event(&mut system, &event).unwrap();
        assert_eq!(outcomes.len(), 1);
        assert_eq!(outcomes[0].agent, AgentId::from("A2"));
        // Untouched agents keep their exact plans.
        assert_eq!(system.agents[&AgentId::from("A1")].plan, plan_a1);
        assert_eq!(system.agents[&AgentId::from("A3")].plan, plan_a3);
    }

    #[test]
    fn event_with_no_requests_revises_nobody() {
        let mut system = tiny_system(&["A1"]);
        system.time = 3;
        let event = Event {
            time: 3,
            new_depots: Vec::new(),
            new_clients: Vec::new(),
            new_requests: Vec::new(),
        };
        let outcomes = on_event(&mut system, &event).unwrap();
        assert!(outcomes.is_empty());
    }

    #[test]
    fn event_naming_an_unknown_agent_is_rejected() {
        let mut system = tiny_system(&["A1"]);
        system.time = 2;
        let event = Event {
            time: 2,
            new_depots: Vec::new(),
            new_clients: Vec::new(),
            new_requests: vec![request(9, "S1", "Art1", "T1", 5, "A9")],
        };
        let err = on_event(&mut system, &event).unwrap_err();
        assert!(matches!(err, WorldError::UnknownAgent(id) if id.as_str() == "A9"));
        // The failed event must not have half-applied its requests.
        assert!(!system.requests.contains_key(&RequestId(9)));
    }

    #[test]
    fn event_extends_the_world_before_snapshotting() {
        let mut system = tiny_system(&["A1"]);
        system.time = 4;
        let event = Event {
            time: 4,
            new_depots: vec![Depot {
                id: "S5".into(),
                position: Point2D::new(300.0, 620.0),
                stock: BTreeMap::from([("Art5".into(), 10_000)]),
            }],
            new_clients: vec![Client {
                id: "T9".into(),
                position: Point2D::new(690.0, 300.0),
            }],
            new_requests: vec![request(11, "S5", "Art5", "T9", 400, "A1")],
        };
        let outcomes = on_event(&mut system, &event).unwrap();
        assert_eq!(outcomes.len(), 1);
        let snapshot = &outcomes[0].system_snapshot;
        assert!(snapshot.depots.contains_key(&"S5".into()));
        assert!(snapshot.clients.contains_key(&"T9".into()));
        assert!(snapshot.requests.contains_key(&RequestId(11)));
    }

    fn spec_for(agent: &str) -> AgentSpec {
        AgentSpec {
            id: agent.into(),
            start: Point2D::new(0.0, 0.0),
            battery_capacity: 1000.0,
            speed: 10.0,
            consumption: 0.0,
            constraints: vec![
                ConstraintSpec {
                    kind: ConstraintKind::Distance,
                    coefficient: 10.0,
                },
                ConstraintSpec {
                    kind: ConstraintKind::Obstacles,
                    coefficient: 8.0,
                },
            ],
        }
    }

    fn params() -> FitnessParams {
        FitnessParams {
            mode: AggregationMode::legacy_default(),
            zero_sum_cap: 1.0,
        }
    }

    #[test]
    fn replan_of_nothing_is_an_empty_plan() {
        let system = tiny_system(&["A1"]);
        let outcome = RevisionOutcome {
            agent: "A1".into(),
            retained: Vec::new(),
            new: Vec::new(),
            agent_snapshot: system.agents[&AgentId::from("A1")].clone(),
            system_snapshot: system,
        };
        let report = replan(&spec_for("A1"), &outcome, params(), &GaConfig::default()).unwrap();
        assert!(report.best.is_empty());
    }

    #[test]
    fn replan_of_a_lone_delivery_is_forced() {
        let mut system = tiny_system(&["A1"]);
        system
            .requests
            .insert(RequestId(10), request(10, "S1", "Art1", "T1", 10, "A1"));
        system
            .progress
            .insert(RequestId(10), RequestProgress { taken: true, delivered: 0 });
        let outcome = RevisionOutcome {
            agent: "A1".into(),
            retained: vec![Stop::delivery(RequestId(10))],
            new: Vec::new(),
            agent_snapshot: system.agents[&AgentId::from("A1")].clone(),
            system_snapshot: system,
        };
        let report = replan(&spec_for("A1"), &outcome, params(), &GaConfig::default()).unwrap();
        assert_eq!(report.best.stops(), &[Stop::delivery(RequestId(10))]);
        assert_eq!(report.best.stops()[0].kind, StopKind::Delivery);
    }

    #[test]
    fn replan_plans_over_retained_union_new_from_the_snapshot_position() {
        let mut system = tiny_system(&["A1"]);
        system.depots.insert(
            "S5".into(),
            Depot {
                id: "S5".into(),
                position: Point2D::new(300.0, 620.0),
                stock: BTreeMap::from([("Art5".into(), 10_000)]),
            },
        );
        system
            .requests
            .insert(RequestId(2), request(2, "S1", "Art1", "T2", 50, "A1"));
        system
            .requests
            .insert(RequestId(11), request(11, "S5", "Art5", "T1", 400, "A1"));
        let mut agent = system.agents[&AgentId::from("A1")].clone();
        agent.position = Point2D::new(1600.0, 670.0);
        system.agents.insert("A1".into(), agent.clone());

        let outcome = RevisionOutcome {
            agent: "A1".into(),
            retained: vec![Stop::pickup(RequestId(2)), Stop::delivery(RequestId(2))],
            new: vec![Stop::pickup(RequestId(11)), Stop::delivery(RequestId(11))],
            agent_snapshot: agent,
            system_snapshot: system.clone(),
        };
        let report = replan(&spec_for("A1"), &outcome, params(), &GaConfig::default()).unwrap();
        assert!(report.best.is_permutation_of(&outcome.stop_set()));
        assert!(report.best.is_precedence_feasible());

        // The route must originate at the snapshot position, not the spec
        // start: its distance matches a manual walk from (1600, 670).
        let ctx = plan_context_for(
            &spec_for("A1"),
            Point2D::new(1600.0, 670.0),
            &outcome.stop_set(),
            &system,
            params(),
        )
        .unwrap();
        let route = ctx.route(report.best.stops());
        assert_eq!(route[0], Point2D::new(1600.0, 670.0));
    }
}
