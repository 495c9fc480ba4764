//! Network evaluation and differentiation against independent oracles:
//! a from-scratch layer-by-layer forward pass and central finite
//! differences.

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use sca_core::linalg::Mat;
use sca_core::nn::{
    batch_gradient, weight_jacobian, JacobianWrt, MiniBatch, MlpModel, OutputHead, Topology,
};
use sca_core::objective::LossKind;

#[test]
fn forward_matches_naive_reference() {
    let mut r = rng(42);
    for sizes in [vec![5, 4, 1], vec![3, 7, 2, 1], vec![9, 10, 6, 1]] {
        for head in [OutputHead::Identity, OutputHead::Sigmoid] {
            let model = random_model(&mut r, &sizes, head);
            for _ in 0..10 {
                let x: Vec<f64> = (0..sizes[0]).map(|_| r.gen_range(-1.0..1.0)).collect();
                let (out, pre) = model.forward(&x).unwrap();
                let (out_ref, pre_ref) = naive_forward(&sizes, model.weights(), head, &x);
                assert!((out - out_ref).abs() < 1e-14, "{out} vs {out_ref}");
                assert!((pre - pre_ref).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let mut r = rng(7);
    let model = random_model(&mut r, &[5, 4, 3, 1], OutputHead::Identity);
    let batch = random_batch(&mut r, 6, 5, false);
    let jac = weight_jacobian(&model, &batch, JacobianWrt::FullOutput).unwrap();
    for i in 0..batch.len() {
        let x = batch.inputs.row(i).to_vec();
        let fd = central_diff_grad(
            |w| {
                let m = model.with_weights(w.to_vec()).unwrap();
                m.forward(&x).unwrap().0
            },
            model.weights(),
            1e-5,
        );
        for q in 0..model.param_count() {
            assert!(
                rel_err(jac.get(i, q), fd[q]) < 1e-5,
                "sample {i} param {q}: {} vs {}",
                jac.get(i, q),
                fd[q]
            );
        }
    }
}

#[test]
fn pre_squash_jacobian_matches_central_differences_under_sigmoid() {
    let mut r = rng(8);
    let model = random_model(&mut r, &[4, 5, 1], OutputHead::Sigmoid);
    let batch = random_batch(&mut r, 4, 4, true);
    let jac = weight_jacobian(&model, &batch, JacobianWrt::PreSquash).unwrap();
    for i in 0..batch.len() {
        let x = batch.inputs.row(i).to_vec();
        let fd = central_diff_grad(
            |w| {
                let m = model.with_weights(w.to_vec()).unwrap();
                m.forward(&x).unwrap().1
            },
            model.weights(),
            1e-5,
        );
        for q in 0..model.param_count() {
            assert!(rel_err(jac.get(i, q), fd[q]) < 1e-5);
        }
    }
}

#[test]
fn batch_gradient_matches_central_differences() {
    let mut r = rng(9);
    for (head, loss, binary) in [
        (OutputHead::Identity, LossKind::Squared, false),
        (OutputHead::Sigmoid, LossKind::CrossEntropy, true),
    ] {
        let model = random_model(&mut r, &[4, 6, 3, 1], head);
        let batch = random_batch(&mut r, 5, 4, binary);
        let grad = batch_gradient(&model, &batch, loss).unwrap();
        let fd = central_diff_grad(
            |w| {
                let m = model.with_weights(w.to_vec()).unwrap();
                let mut total = 0.0;
                for i in 0..batch.len() {
                    let (f, _) = m.forward(batch.inputs.row(i)).unwrap();
                    total +=
                        sca_core::objective::loss_value(loss, batch.targets[i], f).unwrap();
                }
                total / batch.len() as f64
            },
            model.weights(),
            1e-5,
        );
        for q in 0..model.param_count() {
            assert!(
                rel_err(grad[q], fd[q]) < 1e-5,
                "{loss:?} param {q}: {} vs {}",
                grad[q],
                fd[q]
            );
        }
    }
}

#[test]
fn single_sample_gradient_is_scaled_jacobian_row() {
    let mut r = rng(10);
    let model = random_model(&mut r, &[3, 4, 1], OutputHead::Identity);
    let batch = random_batch(&mut r, 1, 3, false);
    let grad = batch_gradient(&model, &batch, LossKind::Squared).unwrap();
    let jac = weight_jacobian(&model, &batch, JacobianWrt::FullOutput).unwrap();
    let (f, _) = model.forward(batch.inputs.row(0)).unwrap();
    let dl_df = 2.0 * (f - batch.targets[0]);
    for q in 0..model.param_count() {
        assert!((grad[q] - dl_df * jac.get(0, q)).abs() < 1e-12);
    }
}

#[test]
fn batch_gradient_is_loss_weighted_jacobian_combination() {
    let mut r = rng(11);
    let model = random_model(&mut r, &[4, 5, 2, 1], OutputHead::Identity);
    let batch = random_batch(&mut r, 7, 4, false);
    let grad = batch_gradient(&model, &batch, LossKind::Squared).unwrap();
    let jac = weight_jacobian(&model, &batch, JacobianWrt::FullOutput).unwrap();
    let l = batch.len() as f64;
    for q in 0..model.param_count() {
        let mut combined = 0.0;
        for i in 0..batch.len() {
            let (f, _) = model.forward(batch.inputs.row(i)).unwrap();
            combined += 2.0 * (f - batch.targets[i]) * jac.get(i, q) / l;
        }
        assert!((grad[q] - combined).abs() < 1e-12);
    }
}

#[test]
fn gradient_difference_quotients_stay_bounded() {
    // bounded difference quotients of grad f over a weight box, including
    // nearly coincident pairs: no blow-up as the pair distance shrinks
    let mut r = rng(12);
    let model = random_model(&mut r, &[4, 3, 1], OutputHead::Identity);
    let x: Vec<f64> = (0..4).map(|_| r.gen_range(-0.5..0.5)).collect();
    let q = model.param_count();
    let grad_at = |w: &[f64]| -> Vec<f64> {
        let m = model.with_weights(w.to_vec()).unwrap();
        sca_core::nn::output_and_gradient(&m, &x, JacobianWrt::FullOutput)
            .unwrap()
            .1
    };
    let mut far_max: f64 = 0.0;
    let mut near_max: f64 = 0.0;
    for trial in 0..1000 {
        let w1: Vec<f64> = (0..q).map(|_| r.gen_range(-2.0..2.0)).collect();
        let near = trial % 2 == 1;
        let w2: Vec<f64> = if near {
            w1.iter().map(|v| v + r.gen_range(-1e-6..1e-6)).collect()
        } else {
            (0..q).map(|_| r.gen_range(-2.0..2.0)).collect()
        };
        let dist: f64 = w1
            .iter()
            .zip(&w2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist == 0.0 {
            continue;
        }
        let (g1, g2) = (grad_at(&w1), grad_at(&w2));
        let gdist: f64 = g1
            .iter()
            .zip(&g2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let ratio = gdist / dist;
        assert!(ratio.is_finite());
        if near {
            near_max = near_max.max(ratio);
        } else {
            far_max = far_max.max(ratio);
        }
    }
    assert!(far_max < 1e4, "far-pair quotient {far_max}");
    // close pairs must not reveal unbounded curvature
    assert!(
        near_max < 10.0 * far_max + 10.0,
        "near {near_max} vs far {far_max}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flattening_round_trips_bit_exactly(
        seed in 0u64..1000,
        hidden1 in 1usize..6,
        hidden2 in 1usize..5,
        d in 1usize..5,
    ) {
        let mut r = rng(seed);
        let model = random_model(&mut r, &[d, hidden1, hidden2, 1], OutputHead::Identity);
        let layers = model.layer_matrices();
        let rebuilt = MlpModel::from_layer_matrices(
            model.topology().clone(),
            model.head(),
            &layers,
        ).unwrap();
        prop_assert_eq!(model.weights(), rebuilt.weights());
    }
}

#[test]
fn jacobian_rejects_mismatched_batch() {
    let topo = Topology::new(vec![3, 2, 1]).unwrap();
    let model = MlpModel::zeroed(topo, OutputHead::Identity);
    let batch = MiniBatch::new(
        vec![0],
        Mat::from_vec(1, 2, vec![0.1, 0.2]).unwrap(),
        vec![0.0],
    )
    .unwrap();
    assert!(weight_jacobian(&model, &batch, JacobianWrt::FullOutput).is_err());
}
