use serde::{Deserialize, Serialize};

use crate::data::{Samples, N_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{evaluate, train, AfTriple, Architecture, Model, NetworkSpec, TrainConfig};
use crate::seed::{derive_seed, rng_from_seed};

/// Epochs of local training behind one fitness value.
pub const FITNESS_EPOCHS: usize = 3;

/// Result of scoring one triple. A disqualified candidate always has
/// fitness 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessOutcome {
    pub fitness: f64,
    pub disqualified: bool,
}

impl FitnessOutcome {
    pub fn scored(fitness: f64) -> Self {
        if fitness.is_finite() {
            Self {
                fitness,
                disqualified: false,
            }
        } else {
            Self::disqualified()
        }
    }

    pub fn disqualified() -> Self {
        Self {
            fitness: 0.0,
            disqualified: true,
        }
    }
}

/// Scores an activation triple. `seed` fixes every random choice of the
/// evaluation, so equal inputs give equal outcomes.
pub trait FitnessFunction: Sync {
    fn evaluate(&self, afs: &AfTriple, seed: u64) -> FitnessOutcome;
}

impl<F> FitnessFunction for F
where
    F: Fn(&AfTriple, u64) -> FitnessOutcome + Sync,
{
    fn evaluate(&self, afs: &AfTriple, seed: u64) -> FitnessOutcome {
        self(afs, seed)
    }
}

/// The shared protocol: build a fresh network, train it on `train1`, and
/// return its accuracy on `train2`.
pub struct DataFitness<'a> {
    data: &'a dyn Samples,
    train1: &'a [usize],
    train2: &'a [usize],
    arch: Architecture,
    epochs: usize,
}

impl<'a> DataFitness<'a> {
    pub fn new(data: &'a dyn Samples, train1: &'a [usize], train2: &'a [usize], arch: Architecture) -> Result<Self> {
        if train1.is_empty() || train2.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(&i) = train1.iter().chain(train2).find(|&&i| i >= data.len()) {
            return Err(Error::Config(format!("sample index {i} out of range for {} samples", data.len())));
        }
        // Fails early on architectures that do not fit the input.
        NetworkSpec::new(arch.clone(), AfTriple::uniform(crate::nn::ScalarActivation::primitive("ReLU")?), data.dims(), N_CLASSES).plan()?;
        Ok(Self {
            data,
            train1,
            train2,
            arch,
            epochs: FITNESS_EPOCHS,
        })
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    fn run(&self, afs: &AfTriple, seed: u64) -> Result<FitnessOutcome> {
        let spec = NetworkSpec::new(self.arch.clone(), afs.clone(), self.data.dims(), N_CLASSES);
        let mut model = Model::<f32>::new(spec, &mut rng_from_seed(seed))?;
        train(&mut model, self.data, self.train1, &TrainConfig::new(self.epochs, derive_seed(seed, 1)))?;
        let eval = evaluate(&mut model, self.data, self.train2)?;
        Ok(if eval.non_finite {
            FitnessOutcome::disqualified()
        } else {
            FitnessOutcome::scored(eval.accuracy)
        })
    }
}

impl FitnessFunction for DataFitness<'_> {
    fn evaluate(&self, afs: &AfTriple, seed: u64) -> FitnessOutcome {
        // Inputs were validated at construction, so the only failure left is
        // a diverging activation.
        self.run(afs, seed).unwrap_or_else(|_| FitnessOutcome::disqualified())
    }
}
