use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Disjoint index sets covering a corpus: train1 (local training for
/// fitness), train2 (fitness scoring) and the held-out test set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train1: Vec<usize>,
    pub train2: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl Split {
    /// train1 followed by train2.
    pub fn train_all(&self) -> Vec<usize> {
        let mut v = self.train1.clone();
        v.extend_from_slice(&self.train2);
        v
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train1.len(), self.train2.len(), self.test.len())
    }
}

/// Shuffles `0..n` with `seed` and cuts it into
/// `floor(0.6 n)`, `floor(0.25 n)` and the remainder.
pub fn split_three_way(n: usize, seed: u64) -> Result<Split> {
    if n < 20 {
        return Err(Error::Config(format!("corpus of {n} samples is too small to split (need at least 20)")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let a = n * 60 / 100;
    let b = n * 25 / 100;
    let test = idx.split_off(a + b);
    let train2 = idx.split_off(a);
    Ok(Split {
        train1: idx,
        train2,
        test,
        seed,
    })
}

/// A seeded permutation of `indices` cut into chunks of `batch_size`; the
/// final chunk may be shorter.
pub fn batches(indices: &[usize], batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut order = indices.to_vec();
    order.shuffle(&mut rng_from_seed(seed));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportions() {
        assert_eq!(split_three_way(100, 1).unwrap().sizes(), (60, 25, 15));
        assert_eq!(split_three_way(70_000, 1).unwrap().sizes(), (42_000, 17_500, 10_500));
        assert_eq!(split_three_way(21, 1).unwrap().sizes(), (12, 5, 4));
        assert!(split_three_way(19, 1).is_err());
    }

    #[test]
    fn seeded() {
        assert_eq!(split_three_way(500, 4).unwrap(), split_three_way(500, 4).unwrap());
        assert_ne!(split_three_way(500, 4).unwrap().train1, split_three_way(500, 5).unwrap().train1);
    }

    #[test]
    fn batch_chunks() {
        let idx: Vec<usize> = (0..10).collect();
        let b = batches(&idx, 3, 9);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, idx);
        let one = batches(&idx, 10, 9);
        assert_eq!(one.len(), 1);
        assert_eq!(batches(&idx, 4, 2), batches(&idx, 4, 2));
    }
}
