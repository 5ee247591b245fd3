//! Small reference genomes.

use super::genome::{CgpConfig, Genome, NodeGene};
use crate::afprims::PrimitiveSet;

/// The four-node logistic sigmoid `1 / (exp(x * -1) + 1)` over the
/// elementary set (`0: Add, 1: Mul, 2: Recip, 3: Exp`), laid out as one row
/// of four columns.
pub fn sigmoid_genome() -> Genome {
    let config = CgpConfig {
        n_rows: 1,
        n_columns: 4,
        n_back: 4,
        ..CgpConfig::default()
    };
    let genes = [(1, 0, 1), (3, 3, 0), (0, 4, 2), (2, 5, 0)];
    let nodes = genes
        .iter()
        .map(|&(f_idx, in1, in2)| NodeGene { f_idx, in1, in2 })
        .collect();
    Genome::from_genes(config, PrimitiveSet::elementary(), nodes, 6).expect("fixture genome is valid")
}
