//! Training of feed-forward networks by successive strongly convex surrogates.
//!
//! Instead of following a noisy gradient, each iteration linearizes the
//! network (not the loss) on a mini-batch, solves the resulting strongly
//! convex subproblem exactly — in closed form for the squared loss, by
//! FISTA for `l1`/group penalties, by damped Newton for the cross-entropy
//! loss — and mixes the minimizer into the iterate with a decreasing step
//! size. A running average of mini-batch gradients keeps the subproblems
//! anchored to the full objective. The subproblem can additionally be split
//! into independent per-block solves over a partition of the weight vector.
//!
//! The crate is `no_std`-compatible (`--no-default-features`, requires
//! `alloc`); the default `std` feature enables the threaded block executor
//! and wall-clock timing in the training loop.
//!
//! Modules map one-to-one onto the moving parts:
//!
//! - [`nn`]: the MLP, forward pass, per-sample weight Jacobians, init;
//! - [`objective`]: losses, regularizers (incl. the kNN manifold term),
//!   and the full training objective;
//! - [`surrogate`]: subproblem builders and solvers;
//! - [`engine`]: the outer loop, step-size schedules, and schedule audit;
//! - [`blocks`]: partitioning and block-parallel subproblem solves;
//! - [`baselines`]: SGD / Adagrad / RMSProp / Adam for comparison runs;
//! - [`data`]: dataset container and mini-batch sampling;
//! - [`linalg`]: the small dense kernel set everything above shares.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baselines;
pub mod blocks;
pub mod data;
pub mod engine;
pub mod error;
pub mod linalg;
mod math;
pub mod nn;
pub mod objective;
pub mod surrogate;

pub use data::{Dataset, MinibatchSampler, TaskKind};
pub use error::{Error, Result};
pub use nn::{MiniBatch, MlpModel, OutputHead, Topology};
pub use objective::{LossKind, RegKind, Regularizer};
