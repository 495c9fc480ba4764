//! Shared test oracles. Everything here is deliberately written from
//! scratch (naive loops, no crate linalg) so it stays an independent route
//! against the implementation it checks.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sca_core::linalg::Mat;
use sca_core::nn::{MiniBatch, MlpModel, OutputHead, Topology};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn random_model(rng: &mut ChaCha20Rng, sizes: &[usize], head: OutputHead) -> MlpModel {
    let topo = Topology::new(sizes.to_vec()).unwrap();
    let w = (0..topo.param_count())
        .map(|_| rng.gen_range(-0.8..0.8))
        .collect();
    MlpModel::new(topo, head, w).unwrap()
}

pub fn random_batch(rng: &mut ChaCha20Rng, l: usize, d: usize, binary: bool) -> MiniBatch {
    let inputs = Mat::from_vec(
        l,
        d,
        (0..l * d).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    )
    .unwrap();
    let targets = (0..l)
        .map(|_| {
            if binary {
                f64::from(rng.gen_range(0..2))
            } else {
                rng.gen_range(-0.9..0.9)
            }
        })
        .collect();
    MiniBatch::new((0..l).collect(), inputs, targets).unwrap()
}

/// Relative error with a unit floor, so near-zero entries compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Central finite differences of a scalar function of the weights.
pub fn central_diff_grad<F: FnMut(&[f64]) -> f64>(mut f: F, w: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; w.len()];
    let mut probe = w.to_vec();
    for i in 0..w.len() {
        probe[i] = w[i] + h;
        let up = f(&probe);
        probe[i] = w[i] - h;
        let down = f(&probe);
        probe[i] = w[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Layer-by-layer reference evaluation straight from the documented layout
/// (layer-major; per layer a row-major `out x in` weight block then biases).
pub fn naive_forward(sizes: &[usize], w: &[f64], head: OutputHead, x: &[f64]) -> (f64, f64) {
    let mut act: Vec<f64> = x.to_vec();
    let mut off = 0;
    let mut pre = 0.0;
    for k in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[k], sizes[k + 1]);
        let w_block = &w[off..off + n_in * n_out];
        let b_block = &w[off + n_in * n_out..off + n_in * n_out + n_out];
        off += (n_in + 1) * n_out;
        let mut next = vec![0.0; n_out];
        for r in 0..n_out {
            let mut a = b_block[r];
            for c in 0..n_in {
                a += w_block[r * n_in + c] * act[c];
            }
            next[r] = a;
        }
        if k == sizes.len() - 2 {
            pre = next[0];
        } else {
            for v in &mut next {
                *v = v.tanh();
            }
            act = next;
        }
    }
    let out = match head {
        OutputHead::Identity => pre,
        OutputHead::Sigmoid => 1.0 / (1.0 + (-pre).exp()),
    };
    (out, pre)
}

/// Conjugate gradient for symmetric positive definite systems, given only a
/// matrix-vector product.
pub fn conjugate_gradient<F: Fn(&[f64]) -> Vec<f64>>(
    matvec: F,
    b: &[f64],
    tol: f64,
    max_iters: usize,
) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let b_norm = rs.sqrt().max(1e-300);
    for _ in 0..max_iters {
        if rs.sqrt() <= tol * b_norm {
            break;
        }
        let ap = matvec(&p);
        let p_ap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rs / p_ap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    x
}

/// Dense Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        for row in (col + 1)..n {
            let factor = a[row][col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in (row + 1)..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for
/// `min_w w^T A w - 2 b^T w + tau |w - w0|^2 + lambda |w|_1`.
pub fn coord_descent_lasso(
    a: &[Vec<f64>],
    b: &[f64],
    w0: &[f64],
    tau: f64,
    lambda: f64,
    sweeps: usize,
) -> Vec<f64> {
    let n = b.len();
    let mut w = w0.to_vec();
    for _ in 0..sweeps {
        let mut change: f64 = 0.0;
        for j in 0..n {
            let mut cross = 0.0;
            for k in 0..n {
                if k != j {
                    cross += a[j][k] * w[k];
                }
            }
            let target = b[j] + tau * w0[j] - cross;
            let denom = a[j][j] + tau;
            let new = soft(target, lambda / 2.0) / denom;
            change = change.max((new - w[j]).abs());
            w[j] = new;
        }
        if change < 1e-14 {
            break;
        }
    }
    w
}

/// The lasso objective the coordinate-descent oracle minimizes.
pub fn lasso_objective(a: &[Vec<f64>], b: &[f64], w0: &[f64], tau: f64, lambda: f64, w: &[f64]) -> f64 {
    let n = b.len();
    let mut v = 0.0;
    for i in 0..n {
        let mut aw = 0.0;
        for j in 0..n {
            aw += a[i][j] * w[j];
        }
        v += w[i] * aw - 2.0 * b[i] * w[i];
        let dw = w[i] - w0[i];
        v += tau * dw * dw + lambda * w[i].abs();
    }
    v
}

/// Dense copy of a crate matrix as plain nested vectors.
pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}
