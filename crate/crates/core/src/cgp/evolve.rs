//! Elitist (1 + lambda) evolution.
//!
//! [`Elitist`] is the single-population stepper. It is generic over the
//! individual so that the same selection rule drives plain genomes, genome
//! triples and each population of the coevolutionary search.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::genome::{CgpConfig, Genome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Parent fitness after this generation's selection.
    pub parent_fitness: f64,
    /// `None` for generation 0, which only scores the initial parent.
    pub best_offspring_fitness: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct EvolutionTrace<I = Genome> {
    pub records: Vec<GenerationRecord>,
    pub best: I,
    pub best_fitness: f64,
    pub evaluations: usize,
}

impl<I> EvolutionTrace<I> {
    pub fn parent_fitness_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.parent_fitness).collect()
    }
}

/// NaN and infinities score as 0.
pub fn sanitize_fitness(f: f64) -> f64 {
    if f.is_finite() {
        f
    } else {
        0.0
    }
}

/// One parent with cached fitness. The parent is never re-evaluated.
#[derive(Debug, Clone)]
pub struct Elitist<I> {
    parent: I,
    parent_fitness: f64,
    generation: usize,
    records: Vec<GenerationRecord>,
    evaluations: usize,
}

impl<I: Clone> Elitist<I> {
    /// Starts from an already-scored parent (generation 0, one evaluation).
    pub fn new(parent: I, fitness: f64) -> Self {
        let parent_fitness = sanitize_fitness(fitness);
        Self {
            parent,
            parent_fitness,
            generation: 0,
            records: vec![GenerationRecord {
                generation: 0,
                parent_fitness,
                best_offspring_fitness: None,
                accepted: false,
            }],
            evaluations: 1,
        }
    }

    pub fn parent(&self) -> &I {
        &self.parent
    }

    pub fn parent_fitness(&self) -> f64 {
        self.parent_fitness
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn records(&self) -> &[GenerationRecord] {
        &self.records
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// True once `1 - parent_fitness <= f_tol`.
    pub fn converged(&self, f_tol: f64) -> bool {
        1.0 - self.parent_fitness <= f_tol
    }

    /// Creates `lambda` offspring of the current parent.
    pub fn offspring<R, F>(&self, lambda: usize, rng: &mut R, mut mutate: F) -> Vec<I>
    where
        R: Rng + ?Sized,
        F: FnMut(&I, &mut R) -> I,
    {
        (0..lambda).map(|_| mutate(&self.parent, rng)).collect()
    }

    /// Keeps the best of parent and offspring. The first best offspring wins
    /// among offspring, and it replaces the parent on a tie. Returns whether
    /// an offspring was accepted.
    pub fn select(&mut self, offspring: Vec<I>, fitness: &[f64]) -> bool {
        assert_eq!(offspring.len(), fitness.len());
        self.generation += 1;
        self.evaluations += offspring.len();
        let mut best: Option<(usize, f64)> = None;
        for (i, &f) in fitness.iter().enumerate() {
            let f = sanitize_fitness(f);
            if best.is_none_or(|(_, b)| f > b) {
                best = Some((i, f));
            }
        }
        let accepted = match best {
            Some((i, f)) if f >= self.parent_fitness => {
                self.parent = offspring.into_iter().nth(i).expect("index in range");
                self.parent_fitness = f;
                true
            }
            _ => false,
        };
        self.records.push(GenerationRecord {
            generation: self.generation,
            parent_fitness: self.parent_fitness,
            best_offspring_fitness: best.map(|(_, f)| f),
            accepted,
        });
        accepted
    }

    pub fn into_trace(self) -> EvolutionTrace<I> {
        EvolutionTrace {
            best_fitness: self.parent_fitness,
            best: self.parent,
            records: self.records,
            evaluations: self.evaluations,
        }
    }
}

/// Generic (1 + lambda) loop.
///
/// `evaluate` scores a batch of individuals and must return one value per
/// individual in order; it receives the initial parent alone first and then
/// each generation's offspring. The loop runs `generations` generations or
/// stops once the parent is within `f_tol` of a perfect score.
pub fn evolve<I, R, M, E>(
    initial: I,
    generations: usize,
    lambda: usize,
    f_tol: f64,
    rng: &mut R,
    mut mutate: M,
    mut evaluate: E,
) -> EvolutionTrace<I>
where
    I: Clone,
    R: Rng + ?Sized,
    M: FnMut(&I, &mut R) -> I,
    E: FnMut(&[I]) -> Vec<f64>,
{
    let f0 = evaluate(std::slice::from_ref(&initial));
    let mut es = Elitist::new(initial, f0[0]);
    while es.generation() < generations && !es.converged(f_tol) {
        let kids = es.offspring(lambda, rng, &mut mutate);
        let scores = evaluate(&kids);
        es.select(kids, &scores);
    }
    es.into_trace()
}

/// (1 + lambda) over single genomes with point mutation, using
/// `config.max_iter`, `config.lambda`, `config.n_mutations` and `config.f_tol`.
pub fn evolve_one_plus_lambda<R, F>(
    initial: Genome,
    mut fitness_fn: F,
    config: &CgpConfig,
    rng: &mut R,
) -> (Genome, f64, EvolutionTrace)
where
    R: Rng + ?Sized,
    F: FnMut(&Genome) -> f64,
{
    let n_mut = config.n_mutations;
    let trace = evolve(
        initial,
        config.max_iter,
        config.lambda,
        config.f_tol,
        rng,
        |g: &Genome, r: &mut R| g.mutate(n_mut, r),
        |batch: &[Genome]| batch.iter().map(&mut fitness_fn).collect(),
    );
    (trace.best.clone(), trace.best_fitness, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afprims::PrimitiveSet;
    use crate::seed::rng_from_seed;

    fn start(seed: u64) -> Genome {
        Genome::random(CgpConfig::default(), PrimitiveSet::standard(), &mut rng_from_seed(seed)).unwrap()
    }

    #[test]
    fn perfect_fitness_stops_at_generation_zero() {
        let mut calls = 0;
        let (_, f, trace) = evolve_one_plus_lambda(
            start(0),
            |_| {
                calls += 1;
                1.0
            },
            &CgpConfig::default(),
            &mut rng_from_seed(0),
        );
        assert_eq!(calls, 1);
        assert_eq!(f, 1.0);
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn full_run_evaluation_count() {
        let mut calls = 0usize;
        let (_, _, trace) = evolve_one_plus_lambda(
            start(1),
            |_| {
                calls += 1;
                0.5
            },
            &CgpConfig::default(),
            &mut rng_from_seed(1),
        );
        assert_eq!(calls, 1 + 50 * 4);
        assert_eq!(trace.evaluations, 201);
        assert_eq!(trace.records.len(), 51);
    }

    #[test]
    fn offspring_wins_ties() {
        let mut es = Elitist::new(0u32, 0.5);
        assert!(es.select(vec![1, 2], &[0.5, 0.5]));
        assert_eq!(*es.parent(), 1);
        assert!(!es.select(vec![3], &[0.4]));
        assert_eq!(*es.parent(), 1);
    }

    #[test]
    fn nan_fitness_scores_zero() {
        let mut es = Elitist::new(0u32, f64::NAN);
        assert_eq!(es.parent_fitness(), 0.0);
        assert!(es.select(vec![7], &[f64::NAN]));
        assert_eq!(es.parent_fitness(), 0.0);
        assert!(!Elitist::new(0u32, 0.1).select(vec![7], &[f64::NAN]));
    }

    #[test]
    fn parent_fitness_never_decreases() {
        let mut noise = rng_from_seed(99);
        let (_, _, trace) = evolve_one_plus_lambda(
            start(2),
            |_| noise.random::<f64>() * 0.9,
            &CgpConfig::default(),
            &mut rng_from_seed(2),
        );
        let h = trace.parent_fitness_history();
        assert!(h.windows(2).all(|w| w[1] >= w[0]));
    }
}
