use std::sync::Arc;

use rayon::prelude::*;

use super::{Baseline, Candidate, EvaluationRecord, FitnessFunction, FitnessOutcome, Method, ParentRecord, Provenance, ScoredTriple};
use crate::afprims::PrimitiveSet;
use crate::cgp::{CgpConfig, Elitist, Genome};
use crate::error::{Error, Result};
use crate::nn::{AfTriple, Role, ScalarActivation};
use crate::seed::{derive_seed, rng_from_seed, Rng};

/// Knobs shared by all methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSettings {
    pub cgp: CgpConfig,
    pub baseline: Baseline,
    pub seed: u64,
    /// Worker threads for fitness batches; 0 or 1 evaluates in order on the
    /// calling thread.
    pub threads: usize,
    /// Start the coevolving populations from random genomes instead of the
    /// baseline.
    pub coevo_random_init: bool,
}

impl SearchSettings {
    pub fn new(baseline: Baseline, seed: u64) -> Self {
        Self {
            cgp: CgpConfig::default(),
            baseline,
            seed,
            threads: 1,
            coevo_random_init: false,
        }
    }
}

const GENOME_STREAM: u64 = 0;
const EVAL_STREAM: u64 = 1;

/// Hands out evaluation seeds, counts evaluations, keeps the history and
/// tracks the best triple seen so far.
struct Evaluator<'a> {
    fitness: &'a dyn FitnessFunction,
    method: Method,
    eval_seed: u64,
    pool: Option<rayon::ThreadPool>,
    search_evaluations: usize,
    assembly_evaluations: usize,
    history: Vec<EvaluationRecord>,
    best: Option<ScoredTriple>,
}

struct Job {
    afs: AfTriple,
    iteration: usize,
    population: Option<Role>,
}

/// Qualified beats disqualified, then higher fitness; equal keys keep the
/// earlier triple.
fn better(new: &ScoredTriple, old: &ScoredTriple) -> bool {
    match (new.disqualified, old.disqualified) {
        (false, true) => true,
        (true, false) => false,
        _ => new.fitness > old.fitness,
    }
}

impl<'a> Evaluator<'a> {
    fn new(fitness: &'a dyn FitnessFunction, method: Method, settings: &SearchSettings) -> Result<Self> {
        let pool = if settings.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(settings.threads)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start {} worker threads: {e}", settings.threads)))?,
            )
        } else {
            None
        };
        Ok(Self {
            fitness,
            method,
            eval_seed: derive_seed(settings.seed, EVAL_STREAM),
            pool,
            search_evaluations: 0,
            assembly_evaluations: 0,
            history: Vec::new(),
            best: None,
        })
    }

    fn next_index(&self) -> usize {
        self.history.len()
    }

    /// Scores a batch; outcomes come back in job order whatever the thread count.
    fn score(&mut self, jobs: Vec<Job>, assembly: bool) -> Vec<(ScoredTriple, FitnessOutcome)> {
        let base = self.next_index();
        let (fitness, eval_seed) = (self.fitness, self.eval_seed);
        let run = |k: usize, job: &Job| {
            let out = fitness.evaluate(&job.afs, derive_seed(eval_seed, (base + k) as u64));
            if out.disqualified || !out.fitness.is_finite() {
                FitnessOutcome::disqualified()
            } else {
                out
            }
        };
        let outcomes: Vec<FitnessOutcome> = match &self.pool {
            Some(pool) => pool.install(|| jobs.par_iter().enumerate().map(|(k, j)| run(k, j)).collect()),
            None => jobs.iter().enumerate().map(|(k, j)| run(k, j)).collect(),
        };
        let mut scored = Vec::with_capacity(jobs.len());
        for (k, (job, out)) in jobs.into_iter().zip(outcomes).enumerate() {
            let evaluation = base + k;
            self.history.push(EvaluationRecord {
                evaluation,
                iteration: job.iteration,
                population: job.population,
                fitness: out.fitness,
                disqualified: out.disqualified,
                assembly,
            });
            if assembly {
                self.assembly_evaluations += 1;
            } else {
                self.search_evaluations += 1;
            }
            let s = ScoredTriple::new(
                job.afs,
                out,
                Provenance {
                    method: self.method,
                    iteration: job.iteration,
                    population: job.population,
                    evaluation: Some(evaluation),
                },
            );
            if self.best.as_ref().is_none_or(|b| better(&s, b)) {
                self.best = Some(s.clone());
            }
            scored.push((s, out));
        }
        scored
    }

    fn finish(self, seed: u64, parents: Vec<ParentRecord>, final_assembly: Option<ScoredTriple>) -> Candidate {
        let best = self.best.expect("every search evaluates at least one triple");
        Candidate {
            method: self.method,
            af_triple: best.af_triple,
            expressions: best.expressions,
            fitness: Some(best.fitness),
            disqualified: best.disqualified,
            provenance: best.provenance,
            evaluations: self.search_evaluations,
            assembly_evaluations: self.assembly_evaluations,
            seed,
            final_assembly,
            history: self.history,
            parents,
        }
    }
}

fn standard_set() -> Arc<PrimitiveSet> {
    PrimitiveSet::standard()
}

fn seeded_genome(settings: &SearchSettings, rng: &mut Rng) -> Result<Genome> {
    Genome::from_primitive(settings.baseline.primitive(), settings.cgp, standard_set(), rng)
}

fn parent_record<I: Clone>(es: &Elitist<I>, population: Option<Role>) -> ParentRecord {
    let last = es.records().last().expect("elitist keeps a generation-0 record");
    ParentRecord {
        generation: last.generation,
        population,
        parent_fitness: last.parent_fitness,
        accepted: last.accepted,
    }
}

/// Generations of the single-population searches: three times the
/// per-population budget of coevolution.
fn evo_generations(cgp: &CgpConfig) -> usize {
    3 * cgp.max_iter
}

/// The baseline everywhere; no fitness evaluation.
pub fn run_standard(settings: &SearchSettings) -> Candidate {
    let afs = settings.baseline.triple();
    Candidate {
        method: Method::Standard,
        expressions: afs.expressions(),
        af_triple: afs,
        fitness: None,
        disqualified: false,
        provenance: Provenance {
            method: Method::Standard,
            iteration: 0,
            population: None,
            evaluation: None,
        },
        evaluations: 0,
        assembly_evaluations: 0,
        seed: settings.seed,
        final_assembly: None,
        history: Vec::new(),
        parents: Vec::new(),
    }
}

/// Scores `3 * max_iter` triples of independent random genomes and keeps
/// the best.
pub fn run_random(fitness: &dyn FitnessFunction, settings: &SearchSettings) -> Result<Candidate> {
    settings.cgp.validate()?;
    let mut rng = rng_from_seed(derive_seed(settings.seed, GENOME_STREAM));
    let mut ev = Evaluator::new(fitness, Method::Random, settings)?;
    let mut jobs = Vec::new();
    for iteration in 0..evo_generations(&settings.cgp) {
        let g: Vec<Genome> = (0..3)
            .map(|_| Genome::random(settings.cgp, standard_set(), &mut rng))
            .collect::<Result<_>>()?;
        jobs.push(Job {
            afs: AfTriple::from_genomes([&g[0], &g[1], &g[2]]),
            iteration,
            population: None,
        });
    }
    ev.score(jobs, false);
    Ok(ev.finish(settings.seed, Vec::new(), None))
}

/// (1+lambda) over one genome used at all three positions.
pub fn run_evo_single(fitness: &dyn FitnessFunction, settings: &SearchSettings) -> Result<Candidate> {
    settings.cgp.validate()?;
    let cgp = settings.cgp;
    let mut rng = rng_from_seed(derive_seed(settings.seed, GENOME_STREAM));
    let mut ev = Evaluator::new(fitness, Method::EvoSingle, settings)?;
    let single = |g: &Genome| AfTriple::uniform(ScalarActivation::program(g));

    let g0 = seeded_genome(settings, &mut rng)?;
    let (_, f0) = ev.score(vec![Job { afs: single(&g0), iteration: 0, population: None }], false).remove(0);
    let mut es = Elitist::new(g0, f0.fitness);
    let mut parents = vec![parent_record(&es, None)];
    while es.generation() < evo_generations(&cgp) && !es.converged(cgp.f_tol) {
        let generation = es.generation() + 1;
        let kids = es.offspring(cgp.lambda, &mut rng, |g, r| g.mutate(cgp.n_mutations, r));
        let jobs = kids
            .iter()
            .map(|g| Job {
                afs: single(g),
                iteration: generation,
                population: None,
            })
            .collect();
        let scores: Vec<f64> = ev.score(jobs, false).iter().map(|(_, o)| o.fitness).collect();
        es.select(kids, &scores);
        parents.push(parent_record(&es, None));
    }
    Ok(ev.finish(settings.seed, parents, None))
}

/// (1+lambda) over three genomes; every offspring mutates all three.
pub fn run_evo_triple(fitness: &dyn FitnessFunction, settings: &SearchSettings) -> Result<Candidate> {
    settings.cgp.validate()?;
    let cgp = settings.cgp;
    let mut rng = rng_from_seed(derive_seed(settings.seed, GENOME_STREAM));
    let mut ev = Evaluator::new(fitness, Method::EvoTriple, settings)?;
    let triple = |g: &[Genome; 3]| AfTriple::from_genomes([&g[0], &g[1], &g[2]]);

    let g0 = [
        seeded_genome(settings, &mut rng)?,
        seeded_genome(settings, &mut rng)?,
        seeded_genome(settings, &mut rng)?,
    ];
    let (_, f0) = ev.score(vec![Job { afs: triple(&g0), iteration: 0, population: None }], false).remove(0);
    let mut es = Elitist::new(g0, f0.fitness);
    let mut parents = vec![parent_record(&es, None)];
    while es.generation() < evo_generations(&cgp) && !es.converged(cgp.f_tol) {
        let generation = es.generation() + 1;
        let kids = es.offspring(cgp.lambda, &mut rng, |g, r| g.each_ref().map(|x| x.mutate(cgp.n_mutations, r)));
        let jobs = kids
            .iter()
            .map(|g| Job {
                afs: triple(g),
                iteration: generation,
                population: None,
            })
            .collect();
        let scores: Vec<f64> = ev.score(jobs, false).iter().map(|(_, o)| o.fitness).collect();
        es.select(kids, &scores);
        parents.push(parent_record(&es, None));
    }
    Ok(ev.finish(settings.seed, parents, None))
}

/// Three cooperating (1+lambda) populations, one per position.
///
/// Each population's seed parent is scored next to baseline partners. In
/// every generation the offspring of population `r` are scored in the
/// current parents of the other two populations (a snapshot taken before
/// any population of that generation is updated); all `3 * lambda`
/// offspring form one batch, then the populations select in input, hidden,
/// output order. After `max_iter` generations the three parents are
/// assembled and scored once more. The primary result is the best triple
/// ever scored; the final assembly is kept alongside it.
pub fn run_coevo(fitness: &dyn FitnessFunction, settings: &SearchSettings) -> Result<Candidate> {
    settings.cgp.validate()?;
    let cgp = settings.cgp;
    let mut rng = rng_from_seed(derive_seed(settings.seed, GENOME_STREAM));
    let mut ev = Evaluator::new(fitness, Method::Coevo, settings)?;
    let baseline = settings.baseline.triple();

    let mut seeds = Vec::with_capacity(3);
    for _ in Role::ALL {
        seeds.push(if settings.coevo_random_init {
            Genome::random(cgp, standard_set(), &mut rng)?
        } else {
            seeded_genome(settings, &mut rng)?
        });
    }
    let jobs = Role::ALL
        .iter()
        .zip(&seeds)
        .map(|(&role, g)| Job {
            afs: baseline.with(role, ScalarActivation::program(g)),
            iteration: 0,
            population: Some(role),
        })
        .collect();
    let seed_scores = ev.score(jobs, false);
    let mut pops: Vec<Elitist<Genome>> = seeds
        .into_iter()
        .zip(&seed_scores)
        .map(|(g, (_, out))| Elitist::new(g, out.fitness))
        .collect();
    let mut parents: Vec<ParentRecord> = Role::ALL.iter().map(|&r| parent_record(&pops[r.index()], Some(r))).collect();

    for generation in 1..=cgp.max_iter {
        let snapshot = AfTriple::from_genomes([pops[0].parent(), pops[1].parent(), pops[2].parent()]);
        let mut kids = Vec::with_capacity(3);
        let mut jobs = Vec::with_capacity(3 * cgp.lambda);
        for role in Role::ALL {
            let k = pops[role.index()].offspring(cgp.lambda, &mut rng, |g, r| g.mutate(cgp.n_mutations, r));
            jobs.extend(k.iter().map(|g| Job {
                afs: snapshot.with(role, ScalarActivation::program(g)),
                iteration: generation,
                population: Some(role),
            }));
            kids.push(k);
        }
        let scores: Vec<f64> = ev.score(jobs, false).iter().map(|(_, o)| o.fitness).collect();
        for (role, (k, s)) in Role::ALL.into_iter().zip(kids.into_iter().zip(scores.chunks(cgp.lambda))) {
            pops[role.index()].select(k, s);
            parents.push(parent_record(&pops[role.index()], Some(role)));
        }
    }

    let assembled = AfTriple::from_genomes([pops[0].parent(), pops[1].parent(), pops[2].parent()]);
    let (final_assembly, _) = ev
        .score(
            vec![Job {
                afs: assembled,
                iteration: cgp.max_iter,
                population: None,
            }],
            true,
        )
        .remove(0);
    Ok(ev.finish(settings.seed, parents, Some(final_assembly)))
}

pub fn run_method(method: Method, fitness: &dyn FitnessFunction, settings: &SearchSettings) -> Result<Candidate> {
    match method {
        Method::Standard => Ok(run_standard(settings)),
        Method::Random => run_random(fitness, settings),
        Method::EvoSingle => run_evo_single(fitness, settings),
        Method::EvoTriple => run_evo_triple(fitness, settings),
        Method::Coevo => run_coevo(fitness, settings),
    }
}
