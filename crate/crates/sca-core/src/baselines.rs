//! First-order reference optimizers (SGD, Adagrad, RMSProp, Adam) run on
//! the same objective and the same mini-batch stream as the surrogate
//! method, for head-to-head convergence comparisons.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::engine::{step_size_next, LogRow, RunStatus, TrainLog};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{batch_gradient, MlpModel};
use crate::objective::{LossKind, RegKind, Regularizer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineConfig {
    /// Steepest descent with the quadratically decaying step rule.
    Sgd { alpha0: f64, eps: f64 },
    /// Per-weight steps scaled by accumulated squared gradients.
    Adagrad { rate: f64, stability: f64 },
    /// Per-weight steps from an exponentially weighted moving average.
    RmsProp {
        rate: f64,
        gamma: f64,
        stability: f64,
    },
    /// Bias-corrected first and second moments.
    Adam {
        rate: f64,
        beta1: f64,
        beta2: f64,
        stability: f64,
    },
}

impl BaselineConfig {
    /// SGD with `alpha0 = 0.1`, `eps = 0.01`.
    pub fn sgd_default() -> BaselineConfig {
        BaselineConfig::Sgd {
            alpha0: 0.1,
            eps: 0.01,
        }
    }

    /// Adagrad at rate `0.01`.
    pub fn adagrad_default() -> BaselineConfig {
        BaselineConfig::Adagrad {
            rate: 0.01,
            stability: 1e-8,
        }
    }

    /// RMSProp at rate `0.01` with decay `gamma = 0.9`.
    pub fn rmsprop_default() -> BaselineConfig {
        BaselineConfig::RmsProp {
            rate: 0.01,
            gamma: 0.9,
            stability: 1e-8,
        }
    }

    /// Adam with its published defaults (rate `1e-3`, betas `0.9/0.999`).
    pub fn adam_default() -> BaselineConfig {
        BaselineConfig::Adam {
            rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            stability: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineConfig::Sgd { .. } => "sgd",
            BaselineConfig::Adagrad { .. } => "adagrad",
            BaselineConfig::RmsProp { .. } => "rmsprop",
            BaselineConfig::Adam { .. } => "adam",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            BaselineConfig::Sgd { alpha0, eps } => {
                alpha0 > 0.0 && eps >= 0.0 && (eps == 0.0 || alpha0 < 1.0 / eps)
            }
            BaselineConfig::Adagrad { rate, stability } => rate > 0.0 && stability > 0.0,
            BaselineConfig::RmsProp {
                rate,
                gamma,
                stability,
            } => rate > 0.0 && gamma > 0.0 && gamma < 1.0 && stability > 0.0,
            BaselineConfig::Adam {
                rate,
                beta1,
                beta2,
                stability,
            } => {
                rate > 0.0
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && stability > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                what: "baseline hyperparameters out of range",
            })
        }
    }
}

/// Plain descent step `w' = w - alpha_n * grad`.
pub fn sgd_step(w: &mut [f64], grad: &[f64], alpha_n: f64) {
    debug_assert_eq!(w.len(), grad.len());
    for i in 0..w.len() {
        w[i] -= alpha_n * grad[i];
    }
}

/// Mutable optimizer state; one instance per run.
#[derive(Debug, Clone)]
pub struct BaselineState {
    config: BaselineConfig,
    /// Current step size (SGD only).
    alpha: f64,
    accum: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl BaselineState {
    pub fn new(config: BaselineConfig, dim: usize) -> Result<BaselineState> {
        config.validate()?;
        let alpha = match config {
            BaselineConfig::Sgd { alpha0, .. } => alpha0,
            _ => 0.0,
        };
        Ok(BaselineState {
            config,
            alpha,
            accum: vec![0.0; dim],
            second: vec![0.0; dim],
            steps: 0,
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    /// Applies one update in place.
    pub fn step(&mut self, w: &mut [f64], grad: &[f64]) -> Result<()> {
        self.steps += 1;
        match self.config {
            BaselineConfig::Sgd { eps, .. } => {
                sgd_step(w, grad, self.alpha);
                self.alpha = step_size_next(self.alpha, eps)?;
            }
            BaselineConfig::Adagrad { rate, stability } => {
                for i in 0..w.len() {
                    self.accum[i] += grad[i] * grad[i];
                    w[i] -= rate * grad[i] / (math::sqrt(self.accum[i]) + stability);
                }
            }
            BaselineConfig::RmsProp {
                rate,
                gamma,
                stability,
            } => {
                for i in 0..w.len() {
                    self.second[i] = gamma * self.second[i] + (1.0 - gamma) * grad[i] * grad[i];
                    w[i] -= rate * grad[i] / (math::sqrt(self.second[i]) + stability);
                }
            }
            BaselineConfig::Adam {
                rate,
                beta1,
                beta2,
                stability,
            } => {
                let t = self.steps as i32;
                let bc1 = 1.0 - math::powf(beta1, t as f64);
                let bc2 = 1.0 - math::powf(beta2, t as f64);
                for i in 0..w.len() {
                    self.accum[i] = beta1 * self.accum[i] + (1.0 - beta1) * grad[i];
                    self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = self.accum[i] / bc1;
                    let v_hat = self.second[i] / bc2;
                    w[i] -= rate * m_hat / (math::sqrt(v_hat) + stability);
                }
            }
        }
        Ok(())
    }
}

/// Single Adagrad-style update as a free function; `state` is the running
/// squared-gradient accumulator.
pub fn adagrad_step(
    w: &mut [f64],
    accum: &mut [f64],
    grad: &[f64],
    rate: f64,
    stability: f64,
) {
    for i in 0..w.len() {
        accum[i] += grad[i] * grad[i];
        w[i] -= rate * grad[i] / (math::sqrt(accum[i]) + stability);
    }
}

/// Single RMSProp update; `mean_sq` is the moving average of squared
/// gradients.
pub fn rmsprop_step(
    w: &mut [f64],
    mean_sq: &mut [f64],
    grad: &[f64],
    rate: f64,
    gamma: f64,
    stability: f64,
) {
    for i in 0..w.len() {
        mean_sq[i] = gamma * mean_sq[i] + (1.0 - gamma) * grad[i] * grad[i];
        w[i] -= rate * grad[i] / (math::sqrt(mean_sq[i]) + stability);
    }
}

/// Single bias-corrected Adam update at step `t` (counting from 1).
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    w: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    grad: &[f64],
    t: u64,
    rate: f64,
    beta1: f64,
    beta2: f64,
    stability: f64,
) {
    let bc1 = 1.0 - math::powf(beta1, t as f64);
    let bc2 = 1.0 - math::powf(beta2, t as f64);
    for i in 0..w.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        w[i] -= rate * (m[i] / bc1) / (math::sqrt(v[i] / bc2) + stability);
    }
}

#[derive(Debug, Clone)]
pub struct BaselineRunConfig {
    pub optimizer: BaselineConfig,
    pub batch_size: usize,
    pub loss: LossKind,
    pub reg: Regularizer,
    pub max_iters: usize,
    pub rng_seed: u64,
    pub log_every: usize,
    pub eval_subsample: Option<usize>,
}

/// Runs a baseline on the stochastic objective. The regularizer enters
/// through its (sub)gradient — smooth for `l2`, sign-based for `l1`-type
/// penalties, which is why these runs never reach exactly sparse weights.
pub fn run_baseline(
    model0: &MlpModel,
    dataset: &Dataset,
    config: &BaselineRunConfig,
) -> Result<(MlpModel, TrainLog)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.loss.check_head(model0.head())?;
    config.optimizer.validate()?;
    if matches!(config.reg.kind, RegKind::Manifold(_)) {
        return Err(Error::Unsupported {
            what: "baseline runs support the separable regularizers",
        });
    }
    let clock = crate::engine::RunClock::start();
    let eval_idx =
        crate::engine::eval_indices(dataset.len(), config.eval_subsample, config.rng_seed);
    let eval_subset = if eval_idx.len() == dataset.len() {
        None
    } else {
        Some(eval_idx.as_slice())
    };
    let mut sampler = crate::data::MinibatchSampler::new(config.rng_seed);
    let mut model = model0.clone();
    let mut state = BaselineState::new(config.optimizer, model.param_count())?;

    let mut rows = Vec::new();
    let mut status = RunStatus::Completed;
    let log_objective = |model: &MlpModel, iteration: usize, rows: &mut Vec<LogRow>| -> Result<bool> {
        let value = crate::objective::objective_value_subsampled(
            model,
            dataset,
            config.loss,
            &config.reg,
            eval_subset,
        );
        let objective = match value {
            Ok(v) => v,
            Err(Error::LossDomain { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        rows.push(LogRow {
            iteration,
            objective,
            wall_ms: clock.elapsed_ms(),
        });
        Ok(objective.is_finite())
    };

    if !log_objective(&model, 0, &mut rows)? {
        return Ok((
            model,
            TrainLog {
                rows,
                status: RunStatus::Diverged { iteration: 0 },
                final_surrogate_minimizer: None,
            },
        ));
    }

    for n in 0..config.max_iters {
        let batch = sampler
            .draw(dataset, config.batch_size)
            .map_err(|e| e.at_iteration(n))?;
        let mut grad =
            batch_gradient(&model, &batch, config.loss).map_err(|e| e.at_iteration(n))?;
        let reg_grad = config
            .reg
            .subgradient(model.weights())
            .map_err(|e| e.at_iteration(n))?;
        crate::linalg::axpy(config.reg.lambda, &reg_grad, &mut grad);
        let mut w = model.weights().to_vec();
        state.step(&mut w, &grad).map_err(|e| e.at_iteration(n))?;
        model.set_weights(w)?;

        let last = n + 1 == config.max_iters;
        if last || (config.log_every > 0 && (n + 1) % config.log_every == 0) {
            if !log_objective(&model, n + 1, &mut rows)? {
                status = RunStatus::Diverged { iteration: n + 1 };
                break;
            }
        }
    }
    Ok((
        model,
        TrainLog {
            rows,
            status,
            final_surrogate_minimizer: None,
        },
    ))
}
