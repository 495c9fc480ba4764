//! Block-parallel timing harness: builds a dense quadratic instance of the
//! requested size and measures median wall time of the block solve per
//! `(C, workers)` pair.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sca_core::blocks::{measure_speedup, SpeedupEntry};
use sca_core::linalg::Mat;
use sca_core::surrogate::{QuadPart, RidgeSurrogate};
use serde::{Deserialize, Serialize};

use crate::records::RecordError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedupConfig {
    pub q: usize,
    pub lambda: f64,
    pub tau: f64,
    pub blocks: Vec<usize>,
    pub workers: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
}

impl Default for SpeedupConfig {
    fn default() -> SpeedupConfig {
        SpeedupConfig {
            q: 2000,
            lambda: 1e-3,
            tau: 0.0,
            blocks: vec![1, 2, 4, 8],
            workers: vec![1, 2, 4, 8],
            reps: 20,
            seed: 0,
        }
    }
}

/// Random dense PSD instance: a rank-32 sum of outer products plus the
/// ridge shift keeps construction cheap while the solve cost stays cubic in
/// the block size.
pub fn build_instance(cfg: &SpeedupConfig) -> Result<RidgeSurrogate, sca_core::Error> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let q = cfg.q;
    let mut a = Mat::zeros(q, q);
    for _ in 0..32 {
        let v: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..q {
            if v[i] == 0.0 {
                continue;
            }
            let vi = v[i] / q as f64;
            let row = a.row_mut(i);
            for (j, &vj) in v.iter().enumerate() {
                row[j] += vi * vj;
            }
        }
    }
    let b: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let anchor: Vec<f64> = (0..q).map(|_| rng.gen_range(-0.5..0.5)).collect();
    RidgeSurrogate::from_parts(QuadPart::Dense(a), b, cfg.lambda, cfg.tau, anchor)
}

pub fn run_speedup(cfg: &SpeedupConfig) -> Result<Vec<SpeedupEntry>, sca_core::Error> {
    let instance = build_instance(cfg)?;
    measure_speedup(&instance, &cfg.blocks, &cfg.workers, cfg.reps)
}

pub fn write_speedup_csv(path: &Path, entries: &[SpeedupEntry]) -> Result<(), RecordError> {
    let mut out = String::from("blocks,workers,median_ms,speedup\n");
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.blocks, e.workers, e.median_ms, e.speedup
        ));
    }
    std::fs::write(path, out).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })
}
