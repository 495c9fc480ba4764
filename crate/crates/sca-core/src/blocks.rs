//! Block decomposition of the quadratic subproblem: the weight vector is
//! split into `C` disjoint blocks, every block's subproblem is solved with
//! all other blocks frozen at the current iterate (Jacobi style), and the
//! per-block minimizers are concatenated. The result does not depend on how
//! many workers execute the blocks or in which order.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::objective::Groups;
use crate::surrogate::{QuadPart, RidgeSurrogate, ShiftedSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentPolicy {
    /// Contiguous chunks, fixed across iterations.
    Static,
    /// Membership reshuffled from the seed stream every iteration.
    RandomPerIteration,
}

/// `C` disjoint index sets covering `0..Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, c: usize) -> &[usize] {
        &self.blocks[c]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }
}

/// Builds a partition of `0..q` into `c` blocks with near-equal sizes
/// (difference at most one without groups). When `groups` are given, whole
/// groups are kept inside a single block (sizes balanced greedily) and `c`
/// may not exceed the group count.
pub fn make_partition(
    q: usize,
    c: usize,
    policy: AssignmentPolicy,
    groups: Option<&Groups>,
    rng: &mut ChaCha20Rng,
) -> Result<BlockPartition> {
    if c == 0 || c > q {
        return Err(Error::InvalidParameter {
            what: "block count must satisfy 1 <= C <= Q",
        });
    }
    match groups {
        None => {
            let mut indices: Vec<usize> = (0..q).collect();
            if policy == AssignmentPolicy::RandomPerIteration {
                shuffle(&mut indices, rng);
            }
            // first (q mod c) blocks take the extra element
            let base = q / c;
            let extra = q % c;
            let mut blocks = Vec::with_capacity(c);
            let mut at = 0;
            for i in 0..c {
                let len = base + usize::from(i < extra);
                blocks.push(indices[at..at + len].to_vec());
                at += len;
            }
            Ok(BlockPartition { blocks })
        }
        Some(groups) => {
            groups.validate_partition(q)?;
            if c > groups.len() {
                return Err(Error::InvalidParameter {
                    what: "block count exceeds the number of groups",
                });
            }
            let mut order: Vec<usize> = (0..groups.len()).collect();
            if policy == AssignmentPolicy::RandomPerIteration {
                shuffle(&mut order, rng);
            }
            // largest-first greedy balance over whole groups
            order.sort_by(|&a, &b| groups.sets()[b].len().cmp(&groups.sets()[a].len()));
            let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); c];
            for &g in &order {
                let target = (0..c).min_by_key(|&i| blocks[i].len()).unwrap();
                blocks[target].extend_from_slice(&groups.sets()[g]);
            }
            if blocks.iter().any(|b| b.is_empty()) {
                return Err(Error::InvalidParameter {
                    what: "group sizes leave an empty block",
                });
            }
            Ok(BlockPartition { blocks })
        }
    }
}

fn shuffle(v: &mut [usize], rng: &mut ChaCha20Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

/// Solves block `c` of the quadratic subproblem with the other blocks frozen
/// at the anchor:
/// `(A_cc + (lambda + tau) I) w_c = b_c + tau w_{c,n} - A_{c,-c} w_{-c,n}`.
///
/// On the low-rank path the off-diagonal product is applied through the
/// factor without materializing `A`.
pub fn solve_block_ridge(
    s: &RidgeSurrogate,
    part: &BlockPartition,
    c: usize,
) -> Result<Vec<f64>> {
    if c >= part.block_count() {
        return Err(Error::InvalidParameter {
            what: "block id out of range",
        });
    }
    let a_anchor = s.quad.matvec(&s.anchor);
    solve_block_with_shared(s, part.block(c), &a_anchor)
}

/// Block solve with `A w_n` precomputed once and shared across blocks.
fn solve_block_with_shared(
    s: &RidgeSurrogate,
    idx: &[usize],
    a_anchor: &[f64],
) -> Result<Vec<f64>> {
    let shift = s.lambda + s.tau;
    let anchor_c: Vec<f64> = idx.iter().map(|&i| s.anchor[i]).collect();
    // A_{c,-c} w_{-c,n} = (A w_n)_c - A_cc w_{c,n}
    let (sub_quad, acc_wc) = match &s.quad {
        QuadPart::Dense(a) => {
            let a_cc = a.principal_submatrix(idx);
            let acc_wc = a_cc.matvec(&anchor_c);
            (QuadPart::Dense(a_cc), acc_wc)
        }
        QuadPart::LowRank { jac, scale } => {
            let jac_c = jac.gather_columns(idx);
            let jc_w = jac_c.matvec(&anchor_c);
            let mut acc_wc = jac_c.t_matvec(&jc_w);
            for v in &mut acc_wc {
                *v *= *scale;
            }
            (
                QuadPart::LowRank {
                    jac: jac_c,
                    scale: *scale,
                },
                acc_wc,
            )
        }
    };
    let mut rhs = Vec::with_capacity(idx.len());
    for (t, &i) in idx.iter().enumerate() {
        let off_diag = a_anchor[i] - acc_wc[t];
        rhs.push(s.b[i] + s.tau * s.anchor[i] - off_diag);
    }
    let solver = ShiftedSolver::prepare(&sub_quad, shift)?;
    Ok(solver.solve_refined(&rhs))
}

/// Solves every block from the same frozen anchor and scatters the results
/// into a full weight vector. All blocks read shared immutable inputs, so
/// the outcome is bit-identical for any `worker_count` and any completion
/// order; blocks may outnumber workers.
pub fn parallel_surrogate_step(
    s: &RidgeSurrogate,
    part: &BlockPartition,
    worker_count: usize,
) -> Result<Vec<f64>> {
    if worker_count == 0 {
        return Err(Error::InvalidParameter {
            what: "worker count must be at least 1",
        });
    }
    let a_anchor = s.quad.matvec(&s.anchor);
    let c = part.block_count();
    let results = run_blocks(s, part, &a_anchor, worker_count)?;
    let mut w = vec![0.0; s.dim()];
    for b in 0..c {
        for (t, &i) in part.block(b).iter().enumerate() {
            w[i] = results[b][t];
        }
    }
    Ok(w)
}

#[cfg(feature = "std")]
fn run_blocks(
    s: &RidgeSurrogate,
    part: &BlockPartition,
    a_anchor: &[f64],
    worker_count: usize,
) -> Result<Vec<Vec<f64>>> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let c = part.block_count();
    if worker_count == 1 || c == 1 {
        return part
            .blocks()
            .iter()
            .map(|idx| solve_block_with_shared(s, idx, a_anchor))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<Vec<f64>>>>> =
        (0..c).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..worker_count.min(c) {
            scope.spawn(|| loop {
                let b = next.fetch_add(1, Ordering::Relaxed);
                if b >= c {
                    break;
                }
                let out = solve_block_with_shared(s, part.block(b), a_anchor);
                *slots[b].lock().unwrap() = Some(out);
            });
        }
    });
    let mut results = Vec::with_capacity(c);
    for slot in slots {
        results.push(slot.into_inner().unwrap().expect("block solved")?);
    }
    Ok(results)
}

#[cfg(not(feature = "std"))]
fn run_blocks(
    s: &RidgeSurrogate,
    part: &BlockPartition,
    a_anchor: &[f64],
    _worker_count: usize,
) -> Result<Vec<Vec<f64>>> {
    part.blocks()
        .iter()
        .map(|idx| solve_block_with_shared(s, idx, a_anchor))
        .collect()
}

/// One row of a speedup measurement.
#[cfg(feature = "std")]
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupEntry {
    pub blocks: usize,
    pub workers: usize,
    pub median_ms: f64,
    /// Median time of the `(C = 1, workers = 1)` baseline over this entry.
    pub speedup: f64,
}

/// Times `parallel_surrogate_step` for every `(C, workers)` pair over
/// `reps` repetitions (median wall time), relative to the serial
/// single-block baseline.
#[cfg(feature = "std")]
pub fn measure_speedup(
    s: &RidgeSurrogate,
    c_values: &[usize],
    worker_counts: &[usize],
    reps: usize,
) -> Result<Vec<SpeedupEntry>> {
    use std::time::Instant;

    if reps == 0 {
        return Err(Error::InvalidParameter {
            what: "repetition count must be at least 1",
        });
    }
    let mut rng = rand::SeedableRng::seed_from_u64(0);
    let mut time_config = |c: usize, workers: usize| -> Result<f64> {
        let part = make_partition(s.dim(), c, AssignmentPolicy::Static, None, &mut rng)?;
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t0 = Instant::now();
            let _ = parallel_surrogate_step(s, &part, workers)?;
            times.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(times[times.len() / 2])
    };
    let baseline = time_config(1, 1)?;
    let mut out = Vec::new();
    for &c in c_values {
        for &workers in worker_counts {
            let median_ms = time_config(c, workers)?;
            out.push(SpeedupEntry {
                blocks: c,
                workers,
                median_ms,
                speedup: baseline / median_ms,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(11)
    }

    #[test]
    fn static_partition_is_contiguous_chunks() {
        let p = make_partition(4, 2, AssignmentPolicy::Static, None, &mut rng()).unwrap();
        assert_eq!(p.block(0), &[0, 1]);
        assert_eq!(p.block(1), &[2, 3]);
    }

    #[test]
    fn single_block_covers_everything() {
        let p = make_partition(9, 1, AssignmentPolicy::Static, None, &mut rng()).unwrap();
        assert_eq!(p.block(0), (0..9).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn uneven_split_sizes_differ_by_at_most_one() {
        let p = make_partition(100, 7, AssignmentPolicy::Static, None, &mut rng()).unwrap();
        let mut sizes: Vec<usize> = p.blocks().iter().map(|b| b.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![14, 14, 14, 14, 14, 15, 15]);
        let mut all: Vec<usize> = p.blocks().iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn random_partition_still_partitions() {
        let p =
            make_partition(23, 5, AssignmentPolicy::RandomPerIteration, None, &mut rng()).unwrap();
        let mut all: Vec<usize> = p.blocks().iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn groups_stay_whole_and_excess_blocks_error() {
        let groups = Groups::new(alloc::vec![
            alloc::vec![0, 1, 2],
            alloc::vec![3, 4],
            alloc::vec![5],
        ])
        .unwrap();
        let p = make_partition(6, 2, AssignmentPolicy::Static, Some(&groups), &mut rng()).unwrap();
        for set in groups.sets() {
            let holders: Vec<usize> = (0..2)
                .filter(|&b| set.iter().all(|i| p.block(b).contains(i)))
                .collect();
            assert_eq!(holders.len(), 1, "group {set:?} split across blocks");
        }
        assert!(make_partition(6, 4, AssignmentPolicy::Static, Some(&groups), &mut rng()).is_err());
    }
}
