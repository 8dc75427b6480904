//! Domain types for the pickup-and-delivery world and the reactive rules
//! that turn requests into action sequences and low batteries into charge
//! detours.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::WorldError;
use crate::fitness::distance;

/// A position in world units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for Point2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

macro_rules! string_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(ArticleId);
string_id!(DepotId);
string_id!(ClientId);
string_id!(ChargerId);
string_id!(AgentId);

/// Numeric request identifier. Arbitration grants conflicting takes in
/// ascending request-id order, so the ordering of this type is load-bearing.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct RequestId(pub u32);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: ArticleId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Depot {
    pub id: DepotId,
    pub position: Point2D,
    /// Remaining stock per article.
    #[serde(default)]
    pub stock: BTreeMap<ArticleId, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Client {
    pub id: ClientId,
    pub position: Point2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Charger {
    pub id: ChargerId,
    pub position: Point2D,
}

/// Axis-aligned rectangular obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub min: Point2D,
    pub max: Point2D,
}

impl Obstacle {
    pub fn new(min: Point2D, max: Point2D) -> Self {
        Self { min, max }
    }

    pub fn is_well_formed(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min.x <= self.max.x && self.min.y <= self.max.y
    }
}

/// A pickup-and-delivery job: move `quantity` of `article` from `depot` to
/// `client`, assigned to one agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub depot: DepotId,
    pub article: ArticleId,
    pub client: ClientId,
    pub quantity: u32,
    pub agent: AgentId,
    #[serde(default)]
    pub done: bool,
    /// Tick at which the request enters the system (0 for initial requests).
    #[serde(default)]
    pub release_time: u64,
}

/// Where a Move is headed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationRef {
    Depot(DepotId),
    Client(ClientId),
    Charger(ChargerId),
}

impl fmt::Display for LocationRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocationRef::Depot(id) => f.write_str(id.as_str()),
            LocationRef::Client(id) => f.write_str(id.as_str()),
            LocationRef::Charger(id) => f.write_str(id.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ActionKind {
    Move {
        target: LocationRef,
    },
    Take {
        depot: DepotId,
        article: ArticleId,
        quantity: u32,
    },
    Delivery {
        client: ClientId,
        article: ArticleId,
        quantity: u32,
    },
    ChargeBattery {
        charger: ChargerId,
    },
}

impl ActionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::Move { .. } => "move",
            ActionKind::Take { .. } => "take",
            ActionKind::Delivery { .. } => "delivery",
            ActionKind::ChargeBattery { .. } => "charge_battery",
        }
    }
}

/// One plan step with its execution flag. The flag is monotone: once an
/// action has executed it is never reset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    #[serde(flatten)]
    pub kind: ActionKind,
    #[serde(default)]
    pub executed: bool,
    /// Request this action serves; `None` for spliced charge detours.
    #[serde(default)]
    pub request: Option<RequestId>,
}

impl Action {
    pub fn new(kind: ActionKind, request: Option<RequestId>) -> Self {
        Self {
            kind,
            executed: false,
            request,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    Pickup,
    Delivery,
}

/// Genome atom: one pickup or delivery visit, expanding to a
/// (Move, Take) or (Move, Delivery) action pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stop {
    pub kind: StopKind,
    pub request: RequestId,
}

impl Stop {
    pub fn pickup(request: RequestId) -> Self {
        Self {
            kind: StopKind::Pickup,
            request,
        }
    }

    pub fn delivery(request: RequestId) -> Self {
        Self {
            kind: StopKind::Delivery,
            request,
        }
    }
}

impl fmt::Display for Stop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            StopKind::Pickup => write!(f, "pu({})", self.request),
            StopKind::Delivery => write!(f, "de({})", self.request),
        }
    }
}

/// Per-constraint weight, as carried by each agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub coefficient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Distance,
    Obstacles,
}

/// Static description of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub start: Point2D,
    /// Energy units at full charge.
    pub battery_capacity: f64,
    /// World units traveled per tick.
    pub speed: f64,
    /// Energy units consumed per world unit traveled.
    pub consumption: f64,
    pub constraints: Vec<ConstraintSpec>,
}

/// Live state of one agent: where it is, how charged it is, and the plan it
/// is executing (actions keep their executed flags so revision can tell what
/// remains).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Point2D,
    /// Fraction of capacity, in [0, 1].
    pub battery: f64,
    pub executed_count: u32,
    pub total_count: u32,
    pub plan: Vec<Action>,
    /// Carried quantity per article.
    #[serde(default)]
    pub cargo: BTreeMap<ArticleId, u32>,
}

impl AgentState {
    pub fn at(position: Point2D) -> Self {
        Self {
            position,
            battery: 1.0,
            executed_count: 0,
            total_count: 0,
            plan: Vec::new(),
            cargo: BTreeMap::new(),
        }
    }

    /// Index of the first unexecuted action, if any.
    pub fn next_action_index(&self) -> Option<usize> {
        self.plan.iter().position(|a| !a.executed)
    }

    pub fn is_idle(&self) -> bool {
        self.next_action_index().is_none()
    }

    /// Installs a fresh plan, folding the already-executed prefix into the
    /// running totals.
    pub fn set_plan(&mut self, plan: Vec<Action>) {
        self.total_count = self.executed_count + plan.len() as u32;
        self.plan = plan;
    }
}

/// Per-request execution progress, tracked outside the plan so that revised
/// plans cannot lose it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestProgress {
    /// The request's Take has executed (cargo was loaded).
    pub taken: bool,
    /// Quantity delivered so far.
    pub delivered: u32,
}

/// The whole world at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub time: u64,
    pub depots: BTreeMap<DepotId, Depot>,
    pub clients: BTreeMap<ClientId, Client>,
    pub chargers: BTreeMap<ChargerId, Charger>,
    pub obstacles: Vec<Obstacle>,
    pub requests: BTreeMap<RequestId, Request>,
    pub agents: BTreeMap<AgentId, AgentState>,
    #[serde(default)]
    pub progress: BTreeMap<RequestId, RequestProgress>,
}

impl SystemState {
    pub fn location_position(&self, loc: &LocationRef) -> Result<Point2D, WorldError> {
        match loc {
            LocationRef::Depot(id) => self
                .depots
                .get(id)
                .map(|d| d.position)
                .ok_or_else(|| WorldError::UnknownLocation(id.to_string())),
            LocationRef::Client(id) => self
                .clients
                .get(id)
                .map(|c| c.position)
                .ok_or_else(|| WorldError::UnknownLocation(id.to_string())),
            LocationRef::Charger(id) => self
                .chargers
                .get(id)
                .map(|c| c.position)
                .ok_or_else(|| WorldError::UnknownLocation(id.to_string())),
        }
    }

    pub fn progress_of(&self, id: RequestId) -> RequestProgress {
        self.progress.get(&id).copied().unwrap_or_default()
    }

    /// All requests currently assigned to `agent` that are not done.
    pub fn pending_requests_of(&self, agent: &AgentId) -> Vec<&Request> {
        self.requests
            .values()
            .filter(|r| &r.agent == agent && !r.done && r.release_time <= self.time)
            .collect()
    }

    /// Applies one instantaneous action for `agent`: the action at `index`
    /// in its plan. Take moves stock into cargo, Delivery moves cargo to the
    /// client and completes the request once its full quantity has arrived,
    /// ChargeBattery restores the battery to full, and a Move merely records
    /// arrival (the simulator integrates the movement itself). The action's
    /// executed flag becomes true.
    pub fn apply_action(&mut self, agent_id: &AgentId, index: usize) -> Result<(), WorldError> {
        let agent = self
            .agents
            .get(agent_id)
            .ok_or_else(|| WorldError::UnknownAgent(agent_id.clone()))?;
        let action = agent
            .plan
            .get(index)
            .ok_or(WorldError::NoSuchAction(index))?
            .clone();

        match &action.kind {
            ActionKind::Move { target } => {
                let pos = self.location_position(target)?;
                self.require_at(agent_id, pos, "move target")?;
            }
            ActionKind::Take {
                depot,
                article,
                quantity,
            } => {
                let pos = self
                    .depots
                    .get(depot)
                    .ok_or_else(|| WorldError::UnknownLocation(depot.to_string()))?
                    .position;
                self.require_at(agent_id, pos, "depot")?;
                let stock = self
                    .depots
                    .get_mut(depot)
                    .expect("depot just looked up")
                    .stock
                    .entry(article.clone())
                    .or_insert(0);
                if *stock < *quantity {
                    return Err(WorldError::InsufficientStock {
                        depot: depot.clone(),
                        article: article.clone(),
                        requested: *quantity,
                        available: *stock,
                    });
                }
                *stock -= *quantity;
                let agent = self.agents.get_mut(agent_id).expect("agent just looked up");
                *agent.cargo.entry(article.clone()).or_insert(0) += *quantity;
                if let Some(req) = action.request {
                    self.progress.entry(req).or_default().taken = true;
                }
            }
            ActionKind::Delivery {
                client,
                article,
                quantity,
            } => {
                let pos = self
                    .clients
                    .get(client)
                    .ok_or_else(|| WorldError::UnknownLocation(client.to_string()))?
                    .position;
                self.require_at(agent_id, pos, "client")?;
                let agent = self.agents.get_mut(agent_id).expect("agent just looked up");
                let carried = agent.cargo.entry(article.clone()).or_insert(0);
                if *carried < *quantity {
                    return Err(WorldError::InsufficientCargo {
                        agent: agent_id.clone(),
                        article: article.clone(),
                        requested: *quantity,
                        carried: *carried,
                    });
                }
                *carried -= *quantity;
                if *carried == 0 {
                    agent.cargo.remove(article);
                }
                if let Some(req_id) = action.request {
                    let progress = self.progress.entry(req_id).or_default();
                    progress.delivered += *quantity;
                    let delivered = progress.delivered;
                    if let Some(request) = self.requests.get_mut(&req_id) {
                        if delivered >= request.quantity {
                            request.done = true;
                        }
                    }
                }
            }
            ActionKind::ChargeBattery { charger } => {
                let pos = self
                    .chargers
                    .get(charger)
                    .ok_or_else(|| WorldError::UnknownLocation(charger.to_string()))?
                    .position;
                self.require_at(agent_id, pos, "charger")?;
                self.agents
                    .get_mut(agent_id)
                    .expect("agent just looked up")
                    .battery = 1.0;
            }
        }

        let agent = self.agents.get_mut(agent_id).expect("agent just looked up");
        agent.plan[index].executed = true;
        agent.executed_count += 1;
        Ok(())
    }

    fn require_at(
        &self,
        agent_id: &AgentId,
        expected: Point2D,
        what: &str,
    ) -> Result<(), WorldError> {
        let agent = self
            .agents
            .get(agent_id)
            .ok_or_else(|| WorldError::UnknownAgent(agent_id.clone()))?;
        // Exact equality: the simulator clamps positions onto targets.
        if agent.position != expected {
            return Err(WorldError::WrongLocation {
                agent: agent_id.clone(),
                expected,
                actual: agent.position,
                what: what.to_owned(),
            });
        }
        Ok(())
    }
}

/// A mid-run change: new depots, clients, and requests entering the world
/// at a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: u64,
    #[serde(default)]
    pub new_depots: Vec<Depot>,
    #[serde(default)]
    pub new_clients: Vec<Client>,
    #[serde(default)]
    pub new_requests: Vec<Request>,
}

/// Reg1: expands one pending request into its four-action sequence
/// [Move depot, Take, Move client, Delivery], all unexecuted and tagged with
/// the request id.
pub fn expand_request(r: &Request) -> Vec<Action> {
    debug_assert!(!r.done);
    vec![
        Action::new(
            ActionKind::Move {
                target: LocationRef::Depot(r.depot.clone()),
            },
            Some(r.id),
        ),
        Action::new(
            ActionKind::Take {
                depot: r.depot.clone(),
                article: r.article.clone(),
                quantity: r.quantity,
            },
            Some(r.id),
        ),
        Action::new(
            ActionKind::Move {
                target: LocationRef::Client(r.client.clone()),
            },
            Some(r.id),
        ),
        Action::new(
            ActionKind::Delivery {
                client: r.client.clone(),
                article: r.article.clone(),
                quantity: r.quantity,
            },
            Some(r.id),
        ),
    ]
}

/// Battery fraction at or below which Reg2 fires.
pub const BATTERY_THRESHOLD: f64 = 0.1;

/// Reg2: when the battery is at or below one tenth of capacity, produce a
/// ChargeBattery action for the nearest charger (ties broken by charger id).
pub fn battery_rule<'a, I>(
    state: &AgentState,
    chargers: I,
) -> Result<Option<Action>, WorldError>
where
    I: IntoIterator<Item = &'a Charger>,
{
    if state.battery > BATTERY_THRESHOLD {
        return Ok(None);
    }
    let nearest = chargers
        .into_iter()
        .min_by(|a, b| {
            let da = distance(state.position, a.position);
            let db = distance(state.position, b.position);
            da.total_cmp(&db).then_with(|| a.id.cmp(&b.id))
        })
        .ok_or(WorldError::NoCharger)?;
    Ok(Some(Action::new(
        ActionKind::ChargeBattery {
            charger: nearest.id.clone(),
        },
        None,
    )))
}
