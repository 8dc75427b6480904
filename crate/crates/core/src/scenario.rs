//! Scenario files: a single JSON document describing the world, the agents,
//! the requests, the event timeline, and the solver defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ScenarioError, ValidationError};
use crate::fitness::FitnessParams;
use crate::ga::GaConfig;
use crate::world::{
    AgentSpec, AgentState, Article, ArticleId, Charger, Client, ConstraintKind, Depot, Event,
    Obstacle, Point2D, Request, SystemState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point2D,
    pub max: Point2D,
}

impl Bounds {
    pub fn contains(&self, p: Point2D) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSection {
    pub bounds: Bounds,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub chargers: Vec<Charger>,
}

/// Solver defaults carried by the scenario; the CLI may override the seed
/// and the aggregation mode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GaSection {
    #[serde(flatten)]
    pub config: GaConfig,
    pub fitness: FitnessParams,
}

fn default_max_ticks() -> u64 {
    10_000
}

fn default_record_trace() -> bool {
    true
}

/// Execution settings. The tick length is the implicit unit; arbitration is
/// fixed to the deterministic ascending-request-id policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub max_ticks: u64,
    pub record_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            max_ticks: default_max_ticks(),
            record_trace: default_record_trace(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    pub world: WorldSection,
    #[serde(default)]
    pub articles: Vec<Article>,
    #[serde(default)]
    pub depots: Vec<Depot>,
    #[serde(default)]
    pub clients: Vec<Client>,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub requests: Vec<Request>,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub ga: GaSection,
    #[serde(default)]
    pub sim: SimConfig,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioDocument, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioDocument, ScenarioError> {
    let doc: ScenarioDocument = serde_json::from_str(text)?;
    doc.validate()?;
    Ok(doc)
}

pub fn write_scenario(
    doc: &ScenarioDocument,
    path: impl AsRef<Path>,
) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl ScenarioDocument {
    /// The world at tick 0: initial requests pending, agents at their start
    /// positions with full batteries and no plans.
    pub fn initial_state(&self) -> SystemState {
        SystemState {
            time: 0,
            depots: self
                .depots
                .iter()
                .map(|d| (d.id.clone(), d.clone()))
                .collect(),
            clients: self
                .clients
                .iter()
                .map(|c| (c.id.clone(), c.clone()))
                .collect(),
            chargers: self
                .world
                .chargers
                .iter()
                .map(|c| (c.id.clone(), c.clone()))
                .collect(),
            obstacles: self.world.obstacles.clone(),
            requests: self.requests.iter().map(|r| (r.id, r.clone())).collect(),
            agents: self
                .agents
                .iter()
                .map(|a| (a.id.clone(), AgentState::at(a.start)))
                .collect(),
            progress: BTreeMap::new(),
        }
    }

    /// Events in firing order (stable on equal times).
    pub fn sorted_events(&self) -> Vec<Event> {
        let mut events = self.events.clone();
        events.sort_by_key(|e| e.time);
        events
    }

    pub fn agent(&self, id: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.id.as_str() == id)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.ga
            .config
            .validate()
            .map_err(|m| ValidationError::new("ga", m))?;
        if !(self.ga.fitness.zero_sum_cap > 0.0 && self.ga.fitness.zero_sum_cap.is_finite()) {
            return Err(ValidationError::new("ga.fitness.zero_sum_cap", "must be positive and finite"));
        }
        if self.sim.max_ticks == 0 {
            return Err(ValidationError::new("sim.max_ticks", "must be positive"));
        }

        let b = &self.world.bounds;
        if !(b.min.is_finite() && b.max.is_finite() && b.min.x <= b.max.x && b.min.y <= b.max.y) {
            return Err(ValidationError::new("world.bounds", "min must be finite and <= max"));
        }
        for (i, o) in self.world.obstacles.iter().enumerate() {
            if !o.is_well_formed() {
                return Err(ValidationError::new(
                    format!("world.obstacles[{i}]"),
                    "min corner must be finite and <= max corner",
                ));
            }
        }

        let mut articles = BTreeSet::new();
        for (i, a) in self.articles.iter().enumerate() {
            if a.id.as_str().is_empty() {
                return Err(ValidationError::new(format!("articles[{i}].id"), "must not be empty"));
            }
            if !articles.insert(a.id.clone()) {
                return Err(ValidationError::new(format!("articles[{i}].id"), format!("duplicate article {}", a.id)));
            }
        }

        let mut depot_positions: BTreeMap<_, _> = BTreeMap::new();
        let mut depot_stock: BTreeMap<_, BTreeMap<ArticleId, u32>> = BTreeMap::new();
        self.check_depots(&self.depots, "depots", &articles, &mut depot_positions, &mut depot_stock)?;

        let mut clients = BTreeSet::new();
        for (i, c) in self.clients.iter().enumerate() {
            self.check_position(c.position, format!("clients[{i}].position"))?;
            if !clients.insert(c.id.clone()) {
                return Err(ValidationError::new(format!("clients[{i}].id"), format!("duplicate client {}", c.id)));
            }
        }

        let mut chargers = BTreeSet::new();
        for (i, c) in self.world.chargers.iter().enumerate() {
            self.check_position(c.position, format!("world.chargers[{i}].position"))?;
            if !chargers.insert(c.id.clone()) {
                return Err(ValidationError::new(
                    format!("world.chargers[{i}].id"),
                    format!("duplicate charger {}", c.id),
                ));
            }
        }

        let mut agents = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            let path = format!("agents[{i}]");
            self.check_position(a.start, format!("{path}.start"))?;
            if !agents.insert(a.id.clone()) {
                return Err(ValidationError::new(format!("{path}.id"), format!("duplicate agent {}", a.id)));
            }
            if !(a.battery_capacity > 0.0 && a.battery_capacity.is_finite()) {
                return Err(ValidationError::new(format!("{path}.battery_capacity"), "must be positive and finite"));
            }
            if !(a.speed > 0.0 && a.speed.is_finite()) {
                return Err(ValidationError::new(format!("{path}.speed"), "must be positive and finite"));
            }
            if !(a.consumption >= 0.0 && a.consumption.is_finite()) {
                return Err(ValidationError::new(format!("{path}.consumption"), "must be non-negative and finite"));
            }
            if a.constraints.is_empty() {
                return Err(ValidationError::new(format!("{path}.constraints"), "need at least one constraint"));
            }
            for (j, c) in a.constraints.iter().enumerate() {
                if !(c.coefficient > 0.0 && c.coefficient.is_finite()) {
                    return Err(ValidationError::new(
                        format!("{path}.constraints[{j}].coefficient"),
                        "must be positive and finite",
                    ));
                }
            }
            if matches!(
                self.ga.fitness.mode,
                crate::fitness::AggregationMode::Legacy { .. }
            ) {
                let kinds: Vec<_> = a.constraints.iter().map(|c| c.kind).collect();
                if kinds != [ConstraintKind::Distance, ConstraintKind::Obstacles] {
                    return Err(ValidationError::new(
                        format!("{path}.constraints"),
                        "legacy aggregation needs exactly (distance, obstacles)",
                    ));
                }
            }
        }

        // Every agent drains battery somewhere; a scenario with drain but no
        // charger cannot honor the charge rule.
        if self.agents.iter().any(|a| a.consumption > 0.0) && self.world.chargers.is_empty() {
            return Err(ValidationError::new(
                "world.chargers",
                "at least one charger is required when agents consume battery",
            ));
        }

        let mut request_ids = BTreeSet::new();
        for (i, r) in self.requests.iter().enumerate() {
            let path = format!("requests[{i}]");
            if r.release_time != 0 {
                return Err(ValidationError::new(
                    format!("{path}.release_time"),
                    format!("top-level requests are initial: release_time must be 0 for {}", r.id),
                ));
            }
            self.check_request(
                r,
                &path,
                &articles,
                &depot_positions,
                &depot_stock,
                &clients,
                &agents,
                &mut request_ids,
            )?;
        }

        // Events extend the world cumulatively; validate against what exists
        // by the time each fires.
        let mut seen_time = 0u64;
        let mut events: Vec<&Event> = self.events.iter().collect();
        events.sort_by_key(|e| e.time);
        for (i, e) in events.iter().enumerate() {
            let path = format!("events[{i}]");
            if e.time == 0 {
                return Err(ValidationError::new(format!("{path}.time"), "must be strictly positive"));
            }
            seen_time = seen_time.max(e.time);
            self.check_depots(
                &e.new_depots,
                &format!("{path}.new_depots"),
                &articles,
                &mut depot_positions,
                &mut depot_stock,
            )?;
            for (j, c) in e.new_clients.iter().enumerate() {
                self.check_position(c.position, format!("{path}.new_clients[{j}].position"))?;
                if !clients.insert(c.id.clone()) {
                    return Err(ValidationError::new(
                        format!("{path}.new_clients[{j}].id"),
                        format!("duplicate client {}", c.id),
                    ));
                }
            }
            for (j, r) in e.new_requests.iter().enumerate() {
                let rpath = format!("{path}.new_requests[{j}]");
                if r.release_time != e.time {
                    return Err(ValidationError::new(
                        format!("{rpath}.release_time"),
                        format!("must equal the event time {} for {}", e.time, r.id),
                    ));
                }
                self.check_request(
                    r,
                    &rpath,
                    &articles,
                    &depot_positions,
                    &depot_stock,
                    &clients,
                    &agents,
                    &mut request_ids,
                )?;
            }
        }
        let _ = seen_time;

        Ok(())
    }

    fn check_depots(
        &self,
        depots: &[Depot],
        path: &str,
        articles: &BTreeSet<ArticleId>,
        positions: &mut BTreeMap<crate::world::DepotId, Point2D>,
        stocks: &mut BTreeMap<crate::world::DepotId, BTreeMap<ArticleId, u32>>,
    ) -> Result<(), ValidationError> {
        for (i, d) in depots.iter().enumerate() {
            self.check_position(d.position, format!("{path}[{i}].position"))?;
            if positions.insert(d.id.clone(), d.position).is_some() {
                return Err(ValidationError::new(
                    format!("{path}[{i}].id"),
                    format!("duplicate depot {}", d.id),
                ));
            }
            for article in d.stock.keys() {
                if !articles.contains(article) {
                    return Err(ValidationError::new(
                        format!("{path}[{i}].stock"),
                        format!("unknown article {article}"),
                    ));
                }
            }
            stocks.insert(d.id.clone(), d.stock.clone());
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn check_request(
        &self,
        r: &Request,
        path: &str,
        articles: &BTreeSet<ArticleId>,
        depots: &BTreeMap<crate::world::DepotId, Point2D>,
        stocks: &BTreeMap<crate::world::DepotId, BTreeMap<ArticleId, u32>>,
        clients: &BTreeSet<crate::world::ClientId>,
        agents: &BTreeSet<crate::world::AgentId>,
        seen: &mut BTreeSet<crate::world::RequestId>,
    ) -> Result<(), ValidationError> {
        if !seen.insert(r.id) {
            return Err(ValidationError::new(format!("{path}.id"), format!("duplicate request {}", r.id)));
        }
        if r.quantity == 0 {
            return Err(ValidationError::new(
                format!("{path}.quantity"),
                format!("{} must request a positive quantity", r.id),
            ));
        }
        if r.done {
            return Err(ValidationError::new(format!("{path}.done"), format!("{} must start pending", r.id)));
        }
        if !depots.contains_key(&r.depot) {
            return Err(ValidationError::new(
                format!("{path}.depot"),
                format!("{} references unknown depot {}", r.id, r.depot),
            ));
        }
        if !articles.contains(&r.article) {
            return Err(ValidationError::new(
                format!("{path}.article"),
                format!("{} references unknown article {}", r.id, r.article),
            ));
        }
        if !clients.contains(&r.client) {
            return Err(ValidationError::new(
                format!("{path}.client"),
                format!("{} references unknown client {}", r.id, r.client),
            ));
        }
        if !agents.contains(&r.agent) {
            return Err(ValidationError::new(
                format!("{path}.agent"),
                format!("{} references unknown agent {}", r.id, r.agent),
            ));
        }
        let available = stocks
            .get(&r.depot)
            .and_then(|s| s.get(&r.article))
            .copied()
            .unwrap_or(0);
        if available < r.quantity {
            return Err(ValidationError::new(
                format!("{path}.quantity"),
                format!(
                    "{} needs {} of {} at {}, which stocks {available} at its release",
                    r.id, r.quantity, r.article, r.depot
                ),
            ));
        }
        Ok(())
    }

    fn check_position(&self, p: Point2D, path: String) -> Result<(), ValidationError> {
        if !p.is_finite() {
            return Err(ValidationError::new(path, "coordinates must be finite"));
        }
        if !self.world.bounds.contains(p) {
            return Err(ValidationError::new(
                path,
                format!("{p} is outside the world bounds"),
            ));
        }
        Ok(())
    }
}
