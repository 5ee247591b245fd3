//! The five ways of choosing an activation triple, all scored with the same
//! fitness protocol (see [`DataFitness`]).
//!
//! Every search draws its genomes from one rng stream and gives the `i`-th
//! fitness evaluation the seed `derive_seed(eval_seed, i)`, so results do
//! not depend on how many threads evaluate a batch.

mod fitness;
mod methods;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AfTriple, Role, ScalarActivation};

pub use fitness::{DataFitness, FitnessFunction, FitnessOutcome, FITNESS_EPOCHS};
pub use methods::{run_coevo, run_evo_single, run_evo_triple, run_method, run_random, run_standard, SearchSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Standard,
    Random,
    EvoSingle,
    EvoTriple,
    Coevo,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Standard, Method::Random, Method::EvoSingle, Method::EvoTriple, Method::Coevo];

    pub fn name(self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::Random => "random",
            Method::EvoSingle => "evo-single",
            Method::EvoTriple => "evo-triple",
            Method::Coevo => "coevo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (expected one of standard, random, evo-single, evo-triple, coevo)")))
    }
}

/// The activation the standard network uses and the evolutionary searches
/// start from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Relu,
    LeakyRelu,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Relu => "relu",
            Baseline::LeakyRelu => "leaky-relu",
        }
    }

    /// Name of the primitive in the standard set.
    pub fn primitive(self) -> &'static str {
        match self {
            Baseline::Relu => "ReLU",
            Baseline::LeakyRelu => "LeakyReLU",
        }
    }

    pub fn activation(self) -> ScalarActivation {
        ScalarActivation::primitive(self.primitive()).expect("baseline primitives are in the standard set")
    }

    pub fn triple(self) -> AfTriple {
        AfTriple::uniform(self.activation())
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "relu" => Ok(Baseline::Relu),
            "leaky-relu" | "leakyrelu" => Ok(Baseline::LeakyRelu),
            _ => Err(Error::Config(format!("unknown baseline '{s}' (expected relu or leaky-relu)"))),
        }
    }
}

/// Where a triple came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    /// Generation (evolutionary methods) or draw index (random search).
    pub iteration: usize,
    /// The coevolving population that proposed it, if any.
    pub population: Option<Role>,
    /// Position in the evaluation sequence; `None` if never evaluated.
    pub evaluation: Option<usize>,
}

/// One fitness evaluation of a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub evaluation: usize,
    pub iteration: usize,
    pub population: Option<Role>,
    pub fitness: f64,
    pub disqualified: bool,
    /// Counted in the final-assembly budget rather than the search budget.
    pub assembly: bool,
}

/// Parent fitness of one (1+lambda) population after a generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParentRecord {
    pub generation: usize,
    pub population: Option<Role>,
    pub parent_fitness: f64,
    pub accepted: bool,
}

/// A triple with its single recorded fitness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriple {
    pub af_triple: AfTriple,
    pub expressions: [String; 3],
    pub fitness: f64,
    pub disqualified: bool,
    pub provenance: Provenance,
}

impl ScoredTriple {
    fn new(af_triple: AfTriple, outcome: FitnessOutcome, provenance: Provenance) -> Self {
        Self {
            expressions: af_triple.expressions(),
            af_triple,
            fitness: outcome.fitness,
            disqualified: outcome.disqualified,
            provenance,
        }
    }
}

/// The outcome of one search method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub method: Method,
    pub af_triple: AfTriple,
    pub expressions: [String; 3],
    /// Search fitness of the chosen triple; `None` when no search ran.
    pub fitness: Option<f64>,
    pub disqualified: bool,
    pub provenance: Provenance,
    /// Fitness evaluations spent searching.
    pub evaluations: usize,
    /// Extra evaluations of assembled final triples (coevolution only).
    pub assembly_evaluations: usize,
    pub seed: u64,
    /// The per-population final parents assembled into one triple, when that
    /// differs in kind from the primary choice (coevolution only).
    pub final_assembly: Option<ScoredTriple>,
    pub history: Vec<EvaluationRecord>,
    pub parents: Vec<ParentRecord>,
}

impl Candidate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Total fitness evaluations, search plus assembly.
    pub fn total_evaluations(&self) -> usize {
        self.evaluations + self.assembly_evaluations
    }
}
