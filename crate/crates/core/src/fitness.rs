//! Route metrics (leg distance, obstacle crossings) and the constraint
//! fitness machinery that scores a plan for one agent.
//!
//! Two aggregation modes exist. `WeightedMean` is the coefficient-weighted
//! mean of the per-constraint fitness values. `Legacy` is a
//! reciprocal-of-weighted-sums form, `1/(w1/f1 + w2/f2)`, calibrated to
//! reproduce the reference evaluation tables in the test suite.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::FitnessError;
use crate::world::{ConstraintKind, ConstraintSpec, Obstacle, Point2D, RequestId, Stop, StopKind};

/// Straight-line Euclidean distance.
pub fn distance(a: Point2D, b: Point2D) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// True when the closed segment `ab` meets the closed rectangle, boundary
/// contact included. Slab clipping; a zero-length segment degenerates to a
/// point-in-rectangle test.
pub fn segment_intersects_rect(a: Point2D, b: Point2D, rect: &Obstacle) -> bool {
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for (origin, dir, lo, hi) in [
        (a.x, b.x - a.x, rect.min.x, rect.max.x),
        (a.y, b.y - a.y, rect.min.y, rect.max.y),
    ] {
        if dir == 0.0 {
            if origin < lo || origin > hi {
                return false;
            }
            continue;
        }
        let ta = (lo - origin) / dir;
        let tb = (hi - origin) / dir;
        let (tmin, tmax) = if ta <= tb { (ta, tb) } else { (tb, ta) };
        t0 = t0.max(tmin);
        t1 = t1.min(tmax);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Number of obstacles crossed by the closed segment `ab`.
pub fn count_obstacles(a: Point2D, b: Point2D, obstacles: &[Obstacle]) -> usize {
    obstacles
        .iter()
        .filter(|rect| segment_intersects_rect(a, b, rect))
        .count()
}

/// Pickup and delivery positions of one request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopLocations {
    pub pickup: Point2D,
    pub delivery: Point2D,
}

impl StopLocations {
    pub fn of(&self, kind: StopKind) -> Point2D {
        match kind {
            StopKind::Pickup => self.pickup,
            StopKind::Delivery => self.delivery,
        }
    }
}

/// The point sequence a plan visits: the start position followed by each
/// stop's location in plan order.
pub fn route_of_plan(
    stops: &[Stop],
    start: Point2D,
    locations: &BTreeMap<RequestId, StopLocations>,
) -> Vec<Point2D> {
    let mut route = Vec::with_capacity(stops.len() + 1);
    route.push(start);
    for stop in stops {
        let locs = locations
            .get(&stop.request)
            .unwrap_or_else(|| panic!("no locations for {}", stop.request));
        route.push(locs.of(stop.kind));
    }
    route
}

/// Reciprocal fitness of a route sum: `1/sum`, or `cap` for an empty route
/// whose sum is zero.
pub fn constraint_fitness(sum: f64, cap: f64) -> f64 {
    debug_assert!(sum >= 0.0 && cap > 0.0);
    if sum > 0.0 {
        1.0 / sum
    } else {
        cap
    }
}

fn default_legacy_w1() -> f64 {
    8.0
}

fn default_legacy_w2() -> f64 {
    2.0
}

/// How per-constraint fitness values combine into the agent fitness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AggregationMode {
    /// `sum(f_i * coef_i) / sum(coef_i)`.
    #[default]
    WeightedMean,
    /// `1 / (w1/f_1 + w2/f_2)` over exactly (distance, obstacles).
    Legacy {
        #[serde(default = "default_legacy_w1")]
        w1: f64,
        #[serde(default = "default_legacy_w2")]
        w2: f64,
    },
}

impl AggregationMode {
    pub fn legacy_default() -> Self {
        AggregationMode::Legacy { w1: 8.0, w2: 2.0 }
    }
}

/// Combines `(fitness, coefficient)` pairs into the agent-level fitness.
/// In legacy mode the coefficients are ignored; the mode's weights apply to
/// the (distance, obstacles) pair, in that order.
pub fn aggregate(values: &[(f64, f64)], mode: AggregationMode) -> Result<f64, FitnessError> {
    if values.is_empty() {
        return Err(FitnessError::NoConstraints);
    }
    match mode {
        AggregationMode::WeightedMean => {
            if let [(fitness, _)] = values {
                // One constraint: the mean is that value, exactly.
                return Ok(*fitness);
            }
            let weighted: f64 = values.iter().map(|(f, c)| f * c).sum();
            let total: f64 = values.iter().map(|(_, c)| c).sum();
            Ok(weighted / total)
        }
        AggregationMode::Legacy { w1, w2 } => {
            if values.len() != 2 {
                return Err(FitnessError::LegacyArity(values.len()));
            }
            Ok(1.0 / (w1 / values[0].0 + w2 / values[1].0))
        }
    }
}

fn default_zero_sum_cap() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitnessParams {
    #[serde(rename = "aggregation")]
    pub mode: AggregationMode,
    /// Fitness assigned to a zero route sum (empty plan); keeps `1/sum`
    /// finite.
    pub zero_sum_cap: f64,
}

impl Default for FitnessParams {
    fn default() -> Self {
        Self {
            mode: AggregationMode::default(),
            zero_sum_cap: default_zero_sum_cap(),
        }
    }
}

/// One constraint's raw route sum, weight, and fitness value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintScore {
    pub kind: ConstraintKind,
    pub coefficient: f64,
    pub sum: f64,
    pub fitness: f64,
}

/// Full scoring of one plan: raw sums, per-constraint fitness values, and
/// the aggregate, tagged with the mode that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessBreakdown {
    pub scores: Vec<ConstraintScore>,
    pub aggregate: f64,
    pub mode: AggregationMode,
}

impl FitnessBreakdown {
    pub fn score_of(&self, kind: ConstraintKind) -> Option<&ConstraintScore> {
        self.scores.iter().find(|s| s.kind == kind)
    }
}

/// Scores genomes against one agent's constraints.
pub trait Evaluator {
    fn evaluate(&self, stops: &[Stop]) -> FitnessBreakdown;
}

/// Everything needed to score a plan for one agent: the route origin, where
/// each request's stops are, the obstacle layout, and the agent's
/// constraints. Pure and immutable, so populations can be evaluated in
/// parallel.
#[derive(Debug, Clone)]
pub struct PlanContext {
    origin: Point2D,
    locations: BTreeMap<RequestId, StopLocations>,
    obstacles: Vec<Obstacle>,
    constraints: Vec<ConstraintSpec>,
    params: FitnessParams,
}

impl PlanContext {
    pub fn new(
        origin: Point2D,
        locations: BTreeMap<RequestId, StopLocations>,
        obstacles: Vec<Obstacle>,
        constraints: Vec<ConstraintSpec>,
        params: FitnessParams,
    ) -> Result<Self, FitnessError> {
        if constraints.is_empty() {
            return Err(FitnessError::NoConstraints);
        }
        if let AggregationMode::Legacy { .. } = params.mode {
            let kinds: Vec<_> = constraints.iter().map(|c| c.kind).collect();
            if kinds != [ConstraintKind::Distance, ConstraintKind::Obstacles] {
                return Err(FitnessError::LegacyArity(kinds.len()));
            }
        }
        Ok(Self {
            origin,
            locations,
            obstacles,
            constraints,
            params,
        })
    }

    pub fn origin(&self) -> Point2D {
        self.origin
    }

    pub fn params(&self) -> FitnessParams {
        self.params
    }

    pub fn route(&self, stops: &[Stop]) -> Vec<Point2D> {
        route_of_plan(stops, self.origin, &self.locations)
    }
}

impl Evaluator for PlanContext {
    fn evaluate(&self, stops: &[Stop]) -> FitnessBreakdown {
        let route = self.route(stops);
        let mut sum_distance = 0.0;
        let mut sum_obstacles = 0usize;
        for leg in route.windows(2) {
            sum_distance += distance(leg[0], leg[1]);
            sum_obstacles += count_obstacles(leg[0], leg[1], &self.obstacles);
        }

        let scores: Vec<ConstraintScore> = self
            .constraints
            .iter()
            .map(|c| {
                let sum = match c.kind {
                    ConstraintKind::Distance => sum_distance,
                    ConstraintKind::Obstacles => sum_obstacles as f64,
                };
                ConstraintScore {
                    kind: c.kind,
                    coefficient: c.coefficient,
                    sum,
                    fitness: constraint_fitness(sum, self.params.zero_sum_cap),
                }
            })
            .collect();

        let values: Vec<(f64, f64)> = scores.iter().map(|s| (s.fitness, s.coefficient)).collect();
        let aggregate = aggregate(&values, self.params.mode)
            .expect("constraint arity checked at construction");

        FitnessBreakdown {
            scores,
            aggregate,
            mode: self.params.mode,
        }
    }
}
