//! In-memory dataset and deterministic mini-batch sampling.

use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::nn::MiniBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Binary,
}

/// Preprocessed samples: an `N x d` input block and `N` targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub inputs: Mat,
    pub targets: Vec<f64>,
    pub task: TaskKind,
}

impl Dataset {
    pub fn new(name: String, inputs: Mat, targets: Vec<f64>, task: TaskKind) -> Result<Dataset> {
        if inputs.rows() != targets.len() {
            return Err(Error::ShapeMismatch {
                what: "dataset rows",
                expected: inputs.rows(),
                actual: targets.len(),
            });
        }
        Ok(Dataset {
            name,
            inputs,
            targets,
            task,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Gathers the given rows into a mini-batch.
    pub fn minibatch(&self, indices: &[usize]) -> Result<MiniBatch> {
        let mut inputs = Mat::zeros(indices.len(), self.feature_dim());
        let mut targets = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::ShapeMismatch {
                    what: "dataset index",
                    expected: self.len(),
                    actual: i,
                });
            }
            inputs.row_mut(r).copy_from_slice(self.inputs.row(i));
            targets.push(self.targets[i]);
        }
        MiniBatch::new(indices.to_vec(), inputs, targets)
    }
}

/// Draws `l` distinct indices uniformly without replacement (Floyd's
/// algorithm), then gathers them. Deterministic given the stream state.
pub fn sample_minibatch(
    dataset: &Dataset,
    l: usize,
    rng: &mut ChaCha20Rng,
) -> Result<MiniBatch> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if l == 0 || l > n {
        return Err(Error::InvalidParameter {
            what: "batch size must satisfy 1 <= L <= N",
        });
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(l);
    for j in (n - l)..n {
        let t = rng.gen_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    dataset.minibatch(&chosen)
}

/// Seeded stream of mini-batches; separate consumers given the same seed see
/// the identical batch sequence.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    rng: ChaCha20Rng,
}

impl MinibatchSampler {
    pub fn new(seed: u64) -> MinibatchSampler {
        MinibatchSampler {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn draw(&mut self, dataset: &Dataset, l: usize) -> Result<MiniBatch> {
        sample_minibatch(dataset, l, &mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn toy(n: usize) -> Dataset {
        let inputs = Mat::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let targets = (0..n).map(|i| i as f64).collect();
        Dataset::new("toy".to_string(), inputs, targets, TaskKind::Regression).unwrap()
    }

    #[test]
    fn full_batch_contains_every_index_once() {
        let ds = toy(8);
        let mut s = MinibatchSampler::new(3);
        let b = s.draw(&ds, 8).unwrap();
        let mut idx = b.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn single_sample_batch() {
        let ds = toy(5);
        let mut s = MinibatchSampler::new(1);
        let b = s.draw(&ds, 1).unwrap();
        assert_eq!(b.len(), 1);
        assert!(b.indices[0] < 5);
        assert_eq!(b.inputs.get(0, 0), b.indices[0] as f64);
    }

    #[test]
    fn oversized_batch_errors() {
        let ds = toy(4);
        let mut s = MinibatchSampler::new(1);
        assert!(s.draw(&ds, 5).is_err());
    }

    #[test]
    fn same_seed_same_stream() {
        let ds = toy(20);
        let mut a = MinibatchSampler::new(99);
        let mut b = MinibatchSampler::new(99);
        for _ in 0..10 {
            assert_eq!(a.draw(&ds, 6).unwrap().indices, b.draw(&ds, 6).unwrap().indices);
        }
    }

    #[test]
    fn batch_indices_distinct() {
        let ds = toy(30);
        let mut s = MinibatchSampler::new(7);
        for _ in 0..100 {
            let b = s.draw(&ds, 10).unwrap();
            let mut idx = b.indices.clone();
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), 10);
        }
    }
}
