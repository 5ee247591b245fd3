//! Cartesian genetic programming for scalar functions of one variable.
//!
//! A [`Genome`] is a grid of integer-coded nodes over the inputs `x`, `-1`
//! and `+1`. [`decode`] extracts the nodes reachable from the output gene
//! into a [`CompiledAf`], which evaluates the function and its derivative.

mod evolve;
pub mod fixtures;
mod genome;
mod program;
mod serial;

pub use evolve::{evolve, evolve_one_plus_lambda, sanitize_fitness, Elitist, EvolutionTrace, GenerationRecord};
pub use genome::{
    genome_from_primitive, mutate, random_genome, CgpConfig, ConnectionRange, Genome, NodeGene, INPUT_COUNT,
    INPUT_LABELS,
};
pub use program::{decode, CompiledAf, Instr};
pub use serial::{deserialize_genome, serialize_genome, FORMAT_TAG};
