use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::afprims::PrimitiveSet;
use crate::error::{Error, Result};

/// Fixed input nodes: `x`, the constant `-1` and the constant `+1`.
pub const INPUT_COUNT: usize = 3;
pub const INPUT_LABELS: [&str; INPUT_COUNT] = ["x", "-1", "1"];

/// Grid shape and (1+lambda) settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgpConfig {
    pub n_rows: usize,
    pub n_columns: usize,
    /// Levels-back window, in columns.
    pub n_back: usize,
    /// Genes redrawn per offspring.
    pub n_mutations: usize,
    /// Generations.
    pub max_iter: usize,
    /// Offspring per generation.
    pub lambda: usize,
    /// Stop once `1 - fitness <= f_tol`.
    pub f_tol: f64,
    /// Kept for compatibility with the reference hyperparameter table; the two
    /// constant inputs are wired, not evolved.
    pub n_const: usize,
}

impl Default for CgpConfig {
    fn default() -> Self {
        Self {
            n_rows: 5,
            n_columns: 5,
            n_back: 5,
            n_mutations: 3,
            max_iter: 50,
            lambda: 4,
            f_tol: 0.01,
            n_const: 0,
        }
    }
}

impl CgpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_rows", self.n_rows),
            ("n_columns", self.n_columns),
            ("n_back", self.n_back),
            ("max_iter", self.max_iter),
            ("lambda", self.lambda),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_back > self.n_columns {
            return Err(Error::Config(format!(
                "n_back ({}) exceeds n_columns ({})",
                self.n_back, self.n_columns
            )));
        }
        if !(0.0..=1.0).contains(&self.f_tol) {
            return Err(Error::Config(format!("f_tol {} outside [0, 1]", self.f_tol)));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.n_rows * self.n_columns
    }

    /// Total number of integer genes: three per node plus the output gene.
    pub fn gene_count(&self) -> usize {
        3 * self.node_count() + 1
    }

    /// Column of the functional node with address `addr` (addresses count the
    /// inputs first).
    pub fn column_of(&self, addr: usize) -> usize {
        (addr - INPUT_COUNT) / self.n_rows
    }

    /// Addresses a node in `column` may read: every input, then the
    /// contiguous block of nodes in the `n_back` columns before it.
    pub fn connection_choices(&self, column: usize) -> ConnectionRange {
        let first_col = column.saturating_sub(self.n_back);
        ConnectionRange {
            node_start: INPUT_COUNT + first_col * self.n_rows,
            node_end: INPUT_COUNT + column * self.n_rows,
        }
    }
}

/// Inputs `0..INPUT_COUNT` plus nodes `node_start..node_end`.
#[derive(Debug, Clone, Copy)]
pub struct ConnectionRange {
    node_start: usize,
    node_end: usize,
}

impl ConnectionRange {
    pub fn len(&self) -> usize {
        INPUT_COUNT + self.node_end - self.node_start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, addr: usize) -> bool {
        addr < INPUT_COUNT || (self.node_start..self.node_end).contains(&addr)
    }

    pub fn nth(&self, k: usize) -> usize {
        if k < INPUT_COUNT {
            k
        } else {
            self.node_start + (k - INPUT_COUNT)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.nth(rng.random_range(0..self.len()))
    }
}

/// One functional node: primitive index and two connection addresses.
/// The second connection is carried but ignored by unary primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeGene {
    pub f_idx: usize,
    pub in1: usize,
    pub in2: usize,
}

/// Integer-gene encoding of a single-input, single-output program.
///
/// Node addresses start with the [`INPUT_COUNT`] inputs; functional nodes
/// follow in column-major order, so every connection points to a lower
/// address.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    config: CgpConfig,
    primitives: Arc<PrimitiveSet>,
    nodes: Vec<NodeGene>,
    output: usize,
}

impl Genome {
    /// Assembles a genome from explicit genes, checking every constraint.
    pub fn from_genes(
        config: CgpConfig,
        primitives: Arc<PrimitiveSet>,
        nodes: Vec<NodeGene>,
        output: usize,
    ) -> Result<Self> {
        let g = Self {
            config,
            primitives,
            nodes,
            output,
        };
        g.validate()?;
        Ok(g)
    }

    /// Draws every gene uniformly from its valid range.
    pub fn random<R: Rng + ?Sized>(config: CgpConfig, primitives: Arc<PrimitiveSet>, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if primitives.is_empty() {
            return Err(Error::Config("primitive set is empty".into()));
        }
        let n_prims = primitives.len();
        let nodes = (0..config.node_count())
            .map(|i| {
                let choices = config.connection_choices(i / config.n_rows);
                NodeGene {
                    f_idx: rng.random_range(0..n_prims),
                    in1: choices.sample(rng),
                    in2: choices.sample(rng),
                }
            })
            .collect();
        let output = rng.random_range(0..INPUT_COUNT + config.node_count());
        Ok(Self {
            config,
            primitives,
            nodes,
            output,
        })
    }

    /// A random genome whose program is exactly `primitive(x)`: the first node
    /// applies the primitive to `x` and the output points at it. All other
    /// genes stay random (and inactive).
    pub fn from_primitive<R: Rng + ?Sized>(
        name: &str,
        config: CgpConfig,
        primitives: Arc<PrimitiveSet>,
        rng: &mut R,
    ) -> Result<Self> {
        let f_idx = primitives
            .index_of(name)
            .ok_or_else(|| Error::Config(format!("unknown primitive '{name}' in set {}", primitives.id())))?;
        if primitives.get(f_idx).map(|p| p.arity()) != Some(1) {
            return Err(Error::Config(format!("primitive '{name}' is not unary")));
        }
        let mut g = Self::random(config, primitives, rng)?;
        g.nodes[0] = NodeGene {
            f_idx,
            in1: 0,
            in2: g.nodes[0].in2,
        };
        g.output = INPUT_COUNT;
        Ok(g)
    }

    pub fn config(&self) -> &CgpConfig {
        &self.config
    }

    pub fn primitives(&self) -> &Arc<PrimitiveSet> {
        &self.primitives
    }

    pub fn nodes(&self) -> &[NodeGene] {
        &self.nodes
    }

    pub fn output(&self) -> usize {
        self.output
    }

    /// Flat gene list: `f, in1, in2` per node, then the output gene.
    pub fn genes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.config.gene_count());
        for n in &self.nodes {
            out.extend([n.f_idx, n.in1, n.in2]);
        }
        out.push(self.output);
        out
    }

    /// Number of gene positions whose values differ.
    pub fn hamming(&self, other: &Genome) -> usize {
        self.genes().iter().zip(other.genes()).filter(|(a, b)| **a != *b).count()
    }

    /// Checks every structural invariant, naming the first offending gene.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let n = self.config.node_count();
        if self.nodes.len() != n {
            return Err(Error::Genome(format!(
                "expected {n} node genes for a {}x{} grid, found {}",
                self.config.n_rows,
                self.config.n_columns,
                self.nodes.len()
            )));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let addr = INPUT_COUNT + i;
            if node.f_idx >= self.primitives.len() {
                return Err(Error::Genome(format!(
                    "node {addr} (gene {}): function index {} out of range for primitive set {} ({} primitives)",
                    3 * i,
                    node.f_idx,
                    self.primitives.id(),
                    self.primitives.len()
                )));
            }
            let choices = self.config.connection_choices(i / self.config.n_rows);
            for (slot, c) in [(1, node.in1), (2, node.in2)] {
                if !choices.contains(c) {
                    return Err(Error::Genome(format!(
                        "node {addr} (gene {}): connection {c} outside the levels-back window",
                        3 * i + slot
                    )));
                }
            }
        }
        if self.output >= INPUT_COUNT + n {
            return Err(Error::Genome(format!(
                "output gene (gene {}): address {} out of range",
                3 * n,
                self.output
            )));
        }
        Ok(())
    }

    /// Returns a point-mutated copy: `n_mutations` distinct gene positions are
    /// redrawn uniformly from their valid ranges. A redraw may reproduce the
    /// current value.
    pub fn mutate<R: Rng + ?Sized>(&self, n_mutations: usize, rng: &mut R) -> Genome {
        let mut child = self.clone();
        let total = self.config.gene_count();
        let n_prims = self.primitives.len();
        for pos in index::sample(rng, total, n_mutations.min(total)) {
            if pos == total - 1 {
                child.output = rng.random_range(0..INPUT_COUNT + self.config.node_count());
                continue;
            }
            let (node, part) = (pos / 3, pos % 3);
            let choices = self.config.connection_choices(node / self.config.n_rows);
            let gene = &mut child.nodes[node];
            match part {
                0 => gene.f_idx = rng.random_range(0..n_prims),
                1 => gene.in1 = choices.sample(rng),
                _ => gene.in2 = choices.sample(rng),
            }
        }
        child
    }

    /// Addresses of the functional nodes reachable from the output gene, in
    /// ascending (topological) order.
    pub fn active_nodes(&self) -> Vec<usize> {
        let mut active = vec![false; self.nodes.len()];
        let mut stack = vec![self.output];
        while let Some(addr) = stack.pop() {
            if addr < INPUT_COUNT {
                continue;
            }
            let i = addr - INPUT_COUNT;
            if active[i] {
                continue;
            }
            active[i] = true;
            let node = self.nodes[i];
            stack.push(node.in1);
            if self.arity_of(i) == 2 {
                stack.push(node.in2);
            }
        }
        active
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| INPUT_COUNT + i)
            .collect()
    }

    pub(crate) fn arity_of(&self, node: usize) -> usize {
        self.primitives
            .get(self.nodes[node].f_idx)
            .map(|p| p.arity())
            .unwrap_or(1)
    }

    /// Copy with node `node` (0-based among functional nodes) replaced.
    pub fn with_node(&self, node: usize, gene: NodeGene) -> Result<Genome> {
        let mut g = self.clone();
        *g.nodes
            .get_mut(node)
            .ok_or_else(|| Error::Genome(format!("no functional node {node}")))? = gene;
        g.validate()?;
        Ok(g)
    }
}

/// Random genome per [`Genome::random`].
pub fn random_genome<R: Rng + ?Sized>(config: CgpConfig, primitives: Arc<PrimitiveSet>, rng: &mut R) -> Result<Genome> {
    Genome::random(config, primitives, rng)
}

/// Baseline-seeded genome per [`Genome::from_primitive`].
pub fn genome_from_primitive<R: Rng + ?Sized>(
    name: &str,
    config: CgpConfig,
    primitives: Arc<PrimitiveSet>,
    rng: &mut R,
) -> Result<Genome> {
    Genome::from_primitive(name, config, primitives, rng)
}

/// Point mutation per [`Genome::mutate`], using `config.n_mutations`.
pub fn mutate<R: Rng + ?Sized>(genome: &Genome, config: &CgpConfig, rng: &mut R) -> Genome {
    genome.mutate(config.n_mutations, rng)
}
