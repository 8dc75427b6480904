//! Per-agent plan search: a genetic algorithm over precedence-feasible
//! permutations of pickup/delivery stops.
//!
//! An individual is a full ordering of the agent's pending stop set; every
//! operator preserves the two genome invariants (P1: permutation of the stop
//! set, P2: a request's pickup precedes its delivery whenever both are
//! present).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::fitness::{Evaluator, FitnessBreakdown};
use crate::world::{Action, Request, RequestId, Stop, StopKind};

/// An ordered stop sequence; one candidate plan.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genome(Vec<Stop>);

impl Genome {
    pub fn new(stops: Vec<Stop>) -> Self {
        Self(stops)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn stops(&self) -> &[Stop] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// P2: for every request with both stops present, the pickup comes
    /// first. A delivery whose pickup is absent (already executed) is
    /// unconstrained.
    pub fn is_precedence_feasible(&self) -> bool {
        let pickups: HashSet<RequestId> = self
            .0
            .iter()
            .filter(|s| s.kind == StopKind::Pickup)
            .map(|s| s.request)
            .collect();
        let mut seen: HashSet<RequestId> = HashSet::new();
        for stop in &self.0 {
            match stop.kind {
                StopKind::Pickup => {
                    seen.insert(stop.request);
                }
                StopKind::Delivery => {
                    if pickups.contains(&stop.request) && !seen.contains(&stop.request) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// P1: same stop set, no duplicates, no omissions.
    pub fn is_permutation_of(&self, stops: &[Stop]) -> bool {
        if self.0.len() != stops.len() {
            return false;
        }
        let mine: BTreeSet<Stop> = self.0.iter().copied().collect();
        let theirs: BTreeSet<Stop> = stops.iter().copied().collect();
        mine.len() == self.0.len() && mine == theirs
    }
}

/// Swaps the adjacent pair at `index` if doing so keeps the genome feasible.
/// Returns whether the swap happened.
pub fn swap_adjacent_if_feasible(genome: &mut Genome, index: usize) -> bool {
    if index + 1 >= genome.0.len() {
        return false;
    }
    let a = genome.0[index];
    let b = genome.0[index + 1];
    // Only swapping a request's own (pickup, delivery) pair can break P2.
    if a.request == b.request && a.kind == StopKind::Pickup && b.kind == StopKind::Delivery {
        return false;
    }
    genome.0.swap(index, index + 1);
    debug_assert!(genome.is_precedence_feasible());
    true
}

/// Draws a genome uniformly over all feasible orderings: shuffle uniformly,
/// then for each request whose delivery landed before its pickup, swap the
/// contents of those two positions. The map is 2^m-to-1 onto feasible
/// orderings, so the result stays uniform.
pub fn random_genome<R: Rng>(stops: &[Stop], rng: &mut R) -> Genome {
    let mut ordered = stops.to_vec();
    ordered.shuffle(rng);

    let mut pickup_at: HashMap<RequestId, usize> = HashMap::new();
    let mut delivery_at: HashMap<RequestId, usize> = HashMap::new();
    for (i, stop) in ordered.iter().enumerate() {
        match stop.kind {
            StopKind::Pickup => pickup_at.insert(stop.request, i),
            StopKind::Delivery => delivery_at.insert(stop.request, i),
        };
    }
    for (request, &pu) in &pickup_at {
        if let Some(&de) = delivery_at.get(request) {
            if de < pu {
                ordered.swap(de, pu);
            }
        }
    }

    let genome = Genome(ordered);
    debug_assert!(genome.is_precedence_feasible());
    genome
}

/// Indices of the `ceil(rate * n)` fittest genomes, fittest first, ties
/// broken by lower index.
pub fn select(fitness: &[f64], rate: f64) -> Vec<usize> {
    let n = fitness.len();
    if n == 0 {
        return Vec::new();
    }
    // The epsilon guards against 0.8 * 20 landing a hair above 16.
    let keep = (((rate * n as f64) - 1e-9).ceil() as usize).clamp(1, n);
    let mut ranked = rank_by_fitness(fitness);
    ranked.truncate(keep);
    ranked
}

fn rank_by_fitness(fitness: &[f64]) -> Vec<usize> {
    let mut ranked: Vec<usize> = (0..fitness.len()).collect();
    ranked.sort_by(|&i, &j| fitness[j].total_cmp(&fitness[i]).then(i.cmp(&j)));
    ranked
}

/// One-point crossover with duplicate repair: the child is `p1`'s prefix up
/// to `cut`, followed by the stops missing from that prefix in `p2`'s
/// relative order. Feasible parents always yield a feasible child.
pub fn crossover_one_point(p1: &Genome, p2: &Genome, cut: usize) -> Genome {
    debug_assert!(cut <= p1.len());
    let mut child: Vec<Stop> = p1.0[..cut].to_vec();
    let prefix: HashSet<Stop> = child.iter().copied().collect();
    child.extend(p2.0.iter().filter(|s| !prefix.contains(s)).copied());
    let child = Genome(child);
    debug_assert!(child.is_precedence_feasible());
    child
}

/// With probability `prob`, swaps one uniformly chosen adjacent pair,
/// redrawing the position up to 8 times when the swap would break
/// precedence; otherwise returns the genome unchanged.
pub fn mutate<R: Rng>(genome: &Genome, rng: &mut R, prob: f64) -> Genome {
    let mut out = genome.clone();
    if out.0.len() < 2 || !rng.gen_bool(prob.clamp(0.0, 1.0)) {
        return out;
    }
    for _ in 0..9 {
        let index = rng.gen_range(0..out.0.len() - 1);
        if swap_adjacent_if_feasible(&mut out, index) {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub pop_size: usize,
    /// Generation limit `k`.
    pub max_generations: usize,
    /// Per-individual probability of one adjacent-swap mutation.
    pub mutation_prob: f64,
    /// Fraction of the population kept as the parent pool.
    pub selection_rate: f64,
    /// Genomes carried unmodified into the next generation; 0 gives strict
    /// generational replacement.
    pub elitism_count: usize,
    /// Stop as soon as this fitness is reached, when set.
    pub early_stop_fitness: Option<f64>,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            pop_size: 20,
            max_generations: 30,
            mutation_prob: 0.02,
            selection_rate: 0.80,
            elitism_count: 1,
            early_stop_fitness: None,
            seed: 42,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.pop_size < 2 {
            return Err(format!("pop_size must be at least 2, got {}", self.pop_size));
        }
        if !(self.selection_rate > 0.0 && self.selection_rate <= 1.0) {
            return Err(format!(
                "selection_rate must be in (0, 1], got {}",
                self.selection_rate
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(format!(
                "mutation_prob must be in [0, 1], got {}",
                self.mutation_prob
            ));
        }
        if self.elitism_count >= self.pop_size {
            return Err(format!(
                "elitism_count {} must be below pop_size {}",
                self.elitism_count, self.pop_size
            ));
        }
        Ok(())
    }
}

/// Outcome of one evolution run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub best: Genome,
    pub best_breakdown: FitnessBreakdown,
    /// Best fitness after each generated population (at most
    /// `max_generations` entries).
    pub history: Vec<f64>,
    /// Populations generated beyond the initial one.
    pub generations: usize,
    pub early_stopped: bool,
}

/// Runs the full loop: random initial population, then per generation
/// evaluate -> select -> crossover -> mutate, with the top `elitism_count`
/// genomes carried over unchanged. Each generation draws one offspring per
/// selected-pool slot; the population is then filled back to `pop_size`
/// with fresh random genomes, which keeps the search from collapsing onto
/// early favorites. Returns the best genome ever seen.
pub fn evolve(stops: &[Stop], evaluator: &dyn Evaluator, config: &GaConfig) -> EvolutionReport {
    config.validate().expect("invalid GA config");

    if stops.is_empty() {
        let breakdown = evaluator.evaluate(&[]);
        return EvolutionReport {
            best: Genome::empty(),
            best_breakdown: breakdown,
            history: Vec::new(),
            generations: 0,
            early_stopped: false,
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population: Vec<Genome> = (0..config.pop_size)
        .map(|_| random_genome(stops, &mut rng))
        .collect();
    let mut breakdowns: Vec<FitnessBreakdown> =
        population.iter().map(|g| evaluator.evaluate(g.stops())).collect();
    let mut fitness: Vec<f64> = breakdowns.iter().map(|b| b.aggregate).collect();

    let initial_best = rank_by_fitness(&fitness)[0];
    let mut best = population[initial_best].clone();
    let mut best_breakdown = breakdowns[initial_best].clone();

    let mut history = Vec::with_capacity(config.max_generations);
    let mut generations = 0;
    let mut early_stopped = reached(config.early_stop_fitness, best_breakdown.aggregate);

    while !early_stopped && generations < config.max_generations {
        let ranked = rank_by_fitness(&fitness);
        let pool: Vec<usize> = {
            let mut pool = ranked.clone();
            pool.truncate(
                (((config.selection_rate * config.pop_size as f64) - 1e-9).ceil() as usize)
                    .clamp(1, config.pop_size),
            );
            pool
        };

        let mut next: Vec<Genome> = ranked
            .iter()
            .take(config.elitism_count)
            .map(|&i| population[i].clone())
            .collect();
        let offspring = pool.len().min(config.pop_size - next.len());
        for _ in 0..offspring {
            let (a, b) = draw_parent_pair(&pool, &mut rng);
            let cut = rng.gen_range(0..=population[a].len());
            let child = crossover_one_point(&population[a], &population[b], cut);
            next.push(mutate(&child, &mut rng, config.mutation_prob));
        }
        while next.len() < config.pop_size {
            next.push(random_genome(stops, &mut rng));
        }

        debug_assert_eq!(next.len(), config.pop_size);
        population = next;
        breakdowns = population.iter().map(|g| evaluator.evaluate(g.stops())).collect();
        fitness = breakdowns.iter().map(|b| b.aggregate).collect();
        generations += 1;

        let gen_best = rank_by_fitness(&fitness)[0];
        if fitness[gen_best] > best_breakdown.aggregate {
            best = population[gen_best].clone();
            best_breakdown = breakdowns[gen_best].clone();
        }
        history.push(fitness[gen_best]);

        early_stopped = reached(config.early_stop_fitness, best_breakdown.aggregate);
    }

    EvolutionReport {
        best,
        best_breakdown,
        history,
        generations,
        early_stopped,
    }
}

fn reached(threshold: Option<f64>, fitness: f64) -> bool {
    threshold.is_some_and(|t| fitness >= t)
}

fn draw_parent_pair<R: Rng>(pool: &[usize], rng: &mut R) -> (usize, usize) {
    let a = pool[rng.gen_range(0..pool.len())];
    if pool.len() == 1 {
        return (a, a);
    }
    loop {
        let b = pool[rng.gen_range(0..pool.len())];
        if b != a {
            return (a, b);
        }
    }
}

/// Expands a genome into its action sequence: every pickup becomes
/// (Move depot, Take), every delivery (Move client, Delivery), all
/// unexecuted.
pub fn genome_to_actions(genome: &Genome, requests: &BTreeMap<RequestId, Request>) -> Vec<Action> {
    use crate::world::{ActionKind, LocationRef};

    let mut actions = Vec::with_capacity(genome.len() * 2);
    for stop in genome.stops() {
        let request = requests
            .get(&stop.request)
            .unwrap_or_else(|| panic!("no request {}", stop.request));
        match stop.kind {
            StopKind::Pickup => {
                actions.push(Action::new(
                    ActionKind::Move {
                        target: LocationRef::Depot(request.depot.clone()),
                    },
                    Some(request.id),
                ));
                actions.push(Action::new(
                    ActionKind::Take {
                        depot: request.depot.clone(),
                        article: request.article.clone(),
                        quantity: request.quantity,
                    },
                    Some(request.id),
                ));
            }
            StopKind::Delivery => {
                actions.push(Action::new(
                    ActionKind::Move {
                        target: LocationRef::Client(request.client.clone()),
                    },
                    Some(request.id),
                ));
                actions.push(Action::new(
                    ActionKind::Delivery {
                        client: request.client.clone(),
                        article: request.article.clone(),
                        quantity: request.quantity,
                    },
                    Some(request.id),
                ));
            }
        }
    }
    actions
}

/// Both stops of every pending request, pickups and deliveries paired.
pub fn stops_for_requests<'a, I>(requests: I) -> Vec<Stop>
where
    I: IntoIterator<Item = &'a Request>,
{
    let mut stops = Vec::new();
    for request in requests {
        stops.push(Stop::pickup(request.id));
        stops.push(Stop::delivery(request.id));
    }
    stops
}
