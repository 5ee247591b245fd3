//! Line-oriented genome text format.
//!
//! ```text
//! format cgp-genome/1
//! primitives elementary/1
//! config rows=1 columns=4 back=4 mutations=3 max_iter=50 lambda=4 f_tol=0.01 n_const=0
//! nodes 1,0,1 3,3,0 0,4,2 2,5,0
//! output 6
//! ```
//!
//! Lines appear in exactly this order. `nodes` lists `f_idx,in1,in2` per
//! functional node in address order. Blank lines and lines starting with `#`
//! are ignored.

use std::collections::HashMap;

use super::genome::{CgpConfig, Genome, NodeGene};
use crate::afprims::PrimitiveSet;
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "cgp-genome/1";

pub fn serialize_genome(genome: &Genome) -> String {
    let c = genome.config();
    let nodes: Vec<String> = genome
        .nodes()
        .iter()
        .map(|n| format!("{},{},{}", n.f_idx, n.in1, n.in2))
        .collect();
    format!(
        "format {FORMAT_TAG}\nprimitives {}\nconfig rows={} columns={} back={} mutations={} max_iter={} lambda={} f_tol={} n_const={}\nnodes {}\noutput {}\n",
        genome.primitives().id(),
        c.n_rows,
        c.n_columns,
        c.n_back,
        c.n_mutations,
        c.max_iter,
        c.lambda,
        c.f_tol,
        c.n_const,
        nodes.join(" "),
        genome.output()
    )
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn deserialize_genome(text: &str) -> Result<Genome> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let mut field = |key: &str| -> Result<&str> {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("genome text ended before the '{key}' line")))?;
        match line.split_once(char::is_whitespace) {
            Some((k, rest)) if k == key => Ok(rest.trim()),
            None if line == key => Ok(""),
            _ => Err(bad(format!("expected '{key}' line, found '{line}'"))),
        }
    };

    let format = field("format")?;
    if format != FORMAT_TAG {
        return Err(bad(format!("unsupported genome format '{format}'")));
    }

    let set_id = field("primitives")?;
    let (name, version) = set_id
        .split_once('/')
        .ok_or_else(|| bad(format!("primitive set id '{set_id}' is not name/version")))?;
    let version: u32 = version
        .parse()
        .map_err(|_| bad(format!("bad primitive set version '{version}'")))?;
    let primitives = PrimitiveSet::lookup(name, version)?;

    let config = parse_config(field("config")?)?;

    let nodes_text = field("nodes")?;
    let mut nodes = Vec::new();
    for (i, triple) in nodes_text.split_whitespace().enumerate() {
        let parts: Vec<&str> = triple.split(',').collect();
        if parts.len() != 3 {
            return Err(bad(format!("node gene {i}: expected f,in1,in2, found '{triple}'")));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(format!("node gene {i}: '{s}' is not a non-negative integer")))
        };
        nodes.push(NodeGene {
            f_idx: num(parts[0])?,
            in1: num(parts[1])?,
            in2: num(parts[2])?,
        });
    }

    let out_text = field("output")?;
    let output = out_text
        .parse::<usize>()
        .map_err(|_| bad(format!("output gene '{out_text}' is not a non-negative integer")))?;

    if let Some(extra) = lines.next() {
        return Err(bad(format!("unexpected trailing line '{extra}'")));
    }
    Genome::from_genes(config, primitives, nodes, output)
}

fn parse_config(text: &str) -> Result<CgpConfig> {
    let mut kv = HashMap::new();
    for item in text.split_whitespace() {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| bad(format!("config item '{item}' is not key=value")))?;
        kv.insert(k, v);
    }
    let int = |k: &str| -> Result<usize> {
        let v = kv.get(k).ok_or_else(|| bad(format!("config is missing '{k}'")))?;
        v.parse().map_err(|_| bad(format!("config {k}='{v}' is not an integer")))
    };
    let f_tol = kv
        .get("f_tol")
        .ok_or_else(|| bad("config is missing 'f_tol'"))?
        .parse::<f64>()
        .map_err(|_| bad("config f_tol is not a number"))?;
    let config = CgpConfig {
        n_rows: int("rows")?,
        n_columns: int("columns")?,
        n_back: int("back")?,
        n_mutations: int("mutations")?,
        max_iter: int("max_iter")?,
        lambda: int("lambda")?,
        f_tol,
        n_const: int("n_const")?,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgp::fixtures::sigmoid_genome;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_fixture_text() {
        let text = serialize_genome(&sigmoid_genome());
        assert_eq!(
            text,
            "format cgp-genome/1\nprimitives elementary/1\nconfig rows=1 columns=4 back=4 mutations=3 max_iter=50 lambda=4 f_tol=0.01 n_const=0\nnodes 1,0,1 3,3,0 0,4,2 2,5,0\noutput 6\n"
        );
        assert_eq!(deserialize_genome(&text).unwrap(), sigmoid_genome());
    }

    #[test]
    fn out_of_range_function_names_the_gene() {
        let text = serialize_genome(&sigmoid_genome()).replace("nodes 1,0,1 3,3,0", "nodes 1,0,1 7,3,0");
        let err = deserialize_genome(&text).unwrap_err().to_string();
        assert!(err.contains("node 4 (gene 3)"), "{err}");
        assert!(err.contains("function index 7"), "{err}");
    }

    #[test]
    fn empty_text_rejected() {
        assert!(deserialize_genome("").is_err());
        assert!(deserialize_genome("   \n# nothing\n").is_err());
    }

    #[test]
    fn unknown_set_version_rejected() {
        let text = serialize_genome(&sigmoid_genome()).replace("elementary/1", "elementary/9");
        assert!(deserialize_genome(&text).is_err());
    }

    #[test]
    fn wrong_line_order_rejected() {
        let text = "primitives elementary/1\nformat cgp-genome/1\n";
        assert!(deserialize_genome(text).is_err());
    }

    proptest! {
        #[test]
        fn random_genomes_round_trip(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
            let config = CgpConfig { n_rows: rows, n_columns: cols, n_back: cols, ..CgpConfig::default() };
            let g = Genome::random(config, PrimitiveSet::standard(), &mut rng_from_seed(seed)).unwrap();
            prop_assert_eq!(deserialize_genome(&serialize_genome(&g)).unwrap(), g);
        }
    }
}
