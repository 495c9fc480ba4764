//! The stochastic outer loop: draw a mini-batch, solve the strongly convex
//! subproblem, mix its minimizer into the iterate with step size `alpha_n`,
//! and track the running gradient average `d_n` with mixing weight `rho_n`.
//!
//! `verify_schedule` audits a schedule pair against the conditions the
//! convergence analysis needs (vanishing, non-summable, square-summable
//! steps, and `alpha_n / rho_n -> 0`) without altering the run.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::baselines;
use crate::blocks::{make_partition, parallel_surrogate_step, AssignmentPolicy};
use crate::data::{Dataset, MinibatchSampler};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{JacobianWrt, MiniBatch, MlpModel};
use crate::objective::{LossKind, RegKind, Regularizer};
use crate::surrogate::{
    build_logistic, build_ridge, linearize_model, manifold_terms, solve_l1_fista, solve_logistic,
    solve_ridge, LogisticPenalty,
};

/// Quadratically decaying step rule `a_{n+1} = a_n (1 - eps * a_n)`.
/// Strictly decreasing and positive while `a_0 < 1/eps`.
pub fn step_size_next(current: f64, eps: f64) -> Result<f64> {
    if !(current > 0.0) || !current.is_finite() {
        return Err(Error::InvalidParameter {
            what: "step size must be positive and finite",
        });
    }
    if eps < 0.0 {
        return Err(Error::InvalidParameter {
            what: "decay rate must be nonnegative",
        });
    }
    if eps > 0.0 && current >= 1.0 / eps {
        return Err(Error::InvalidParameter {
            what: "step size at or above 1/eps would turn nonpositive",
        });
    }
    Ok(current * (1.0 - eps * current))
}

/// Generator for one step-size sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleRule {
    /// `a_{n+1} = a_n (1 - eps a_n)`, starting from `init`.
    QuadraticDecay { init: f64, eps: f64 },
    /// `a_n = scale * n^{-exponent}`, `n` starting at 1.
    PowerLaw { scale: f64, exponent: f64 },
    Constant { value: f64 },
}

impl ScheduleRule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScheduleRule::QuadraticDecay { init, eps } => {
                init > 0.0 && eps >= 0.0 && (eps == 0.0 || init < 1.0 / eps)
            }
            ScheduleRule::PowerLaw { scale, exponent } => scale > 0.0 && exponent >= 0.0,
            ScheduleRule::Constant { value } => value >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                what: "schedule rule parameters out of range",
            })
        }
    }

    /// Value at iteration 0 (first value used).
    pub fn first(&self) -> f64 {
        match *self {
            ScheduleRule::QuadraticDecay { init, .. } => init,
            ScheduleRule::PowerLaw { scale, .. } => scale,
            ScheduleRule::Constant { value } => value,
        }
    }

    /// Value following `current`, where `next_iter` counts from 1.
    pub fn next(&self, current: f64, next_iter: usize) -> Result<f64> {
        match *self {
            ScheduleRule::QuadraticDecay { eps, .. } => step_size_next(current, eps),
            ScheduleRule::PowerLaw { scale, exponent } => {
                Ok(scale * math::powf((next_iter + 1) as f64, -exponent))
            }
            ScheduleRule::Constant { value } => Ok(value),
        }
    }
}

/// The pair of sequences driving the outer loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub alpha: ScheduleRule,
    pub rho: ScheduleRule,
}

impl Schedule {
    /// Both sequences on the quadratic decay rule — the experimental
    /// default (`alpha0 = 0.5`, `rho0 = 0.9`, `eps = 0.01` for both).
    pub fn quadratic(alpha0: f64, eps_alpha: f64, rho0: f64, eps_rho: f64) -> Result<Schedule> {
        let s = Schedule {
            alpha: ScheduleRule::QuadraticDecay {
                init: alpha0,
                eps: eps_alpha,
            },
            rho: ScheduleRule::QuadraticDecay {
                init: rho0,
                eps: eps_rho,
            },
        };
        s.alpha.validate()?;
        s.rho.validate()?;
        Ok(s)
    }

    pub fn paper_defaults() -> Schedule {
        Schedule::quadratic(0.5, 0.01, 0.9, 0.01).unwrap()
    }
}

/// Iterate, gradient average, and current schedule values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    pub w: Vec<f64>,
    pub d: Vec<f64>,
    pub iteration: usize,
    pub alpha: f64,
    pub rho: f64,
    pub tau: f64,
}

impl ScaState {
    /// Fresh state at `w0` with `d_0 = 0`.
    pub fn init(w0: Vec<f64>, schedule: &Schedule, tau: f64) -> ScaState {
        let q = w0.len();
        ScaState {
            w: w0,
            d: vec![0.0; q],
            iteration: 0,
            alpha: schedule.alpha.first(),
            rho: schedule.rho.first(),
            tau,
        }
    }
}

/// How `d_0` is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D0Init {
    Zero,
    /// Consumes one extra mini-batch before the loop and uses its gradient.
    FirstBatchGradient,
}

/// Block execution settings for the subproblem solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionSpec {
    pub blocks: usize,
    pub policy: AssignmentPolicy,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct ScaConfig {
    pub batch_size: usize,
    pub loss: LossKind,
    pub reg: Regularizer,
    pub schedule: Schedule,
    pub tau: f64,
    pub max_iters: usize,
    pub rng_seed: u64,
    pub partition: Option<PartitionSpec>,
    /// Log the objective every this many iterations (0 = first and last
    /// only). The final iterate is always logged.
    pub log_every: usize,
    /// Cap on the number of samples used for objective logging.
    pub eval_subsample: Option<usize>,
    pub d0: D0Init,
}

impl ScaConfig {
    pub fn new(
        batch_size: usize,
        loss: LossKind,
        reg: Regularizer,
        schedule: Schedule,
        tau: f64,
        max_iters: usize,
        rng_seed: u64,
    ) -> Result<ScaConfig> {
        if batch_size == 0 {
            return Err(Error::InvalidParameter {
                what: "batch size must be at least 1",
            });
        }
        if tau < 0.0 {
            return Err(Error::InvalidParameter {
                what: "tau must be nonnegative",
            });
        }
        schedule.alpha.validate()?;
        schedule.rho.validate()?;
        Ok(ScaConfig {
            batch_size,
            loss,
            reg,
            schedule,
            tau,
            max_iters,
            rng_seed,
            partition: None,
            log_every: 0,
            eval_subsample: Some(2000),
            d0: D0Init::Zero,
        })
    }
}

/// Result of one outer-loop step.
#[derive(Debug, Clone)]
pub struct ScaStep {
    pub state: ScaState,
    /// The subproblem minimizer `w_hat` (exactly sparse under `l1`-type
    /// penalties, unlike the averaged iterate).
    pub surrogate_minimizer: Vec<f64>,
}

/// One iteration: solve the subproblem at `(w_n, d_n, rho_n, tau)`, then
/// `w_{n+1} = (1 - alpha_n) w_n + alpha_n w_hat` and
/// `d_{n+1} = (1 - rho_n) d_n + rho_n g_n` with `g_n` the mini-batch
/// gradient at `w_n` (reusing the Jacobian already computed for the
/// subproblem). `model` must carry the state's weights.
pub fn sca_iteration(
    model: &MlpModel,
    state: &ScaState,
    batch: &MiniBatch,
    config: &ScaConfig,
) -> Result<ScaStep> {
    if model.weights() != state.w.as_slice() {
        return Err(Error::InvalidParameter {
            what: "model weights out of sync with the optimizer state",
        });
    }
    let (w_hat, grad) = solve_surrogate(model, state, batch, config)?;
    apply_updates(state, config, w_hat, &grad)
}

/// The convex-combination and gradient-average updates plus schedule
/// advance, shared by all surrogate families.
fn apply_updates(
    state: &ScaState,
    config: &ScaConfig,
    w_hat: Vec<f64>,
    grad: &[f64],
) -> Result<ScaStep> {
    let mut w_next = state.w.clone();
    for i in 0..w_next.len() {
        w_next[i] = (1.0 - state.alpha) * state.w[i] + state.alpha * w_hat[i];
    }
    let mut d_next = state.d.clone();
    for i in 0..d_next.len() {
        d_next[i] = (1.0 - state.rho) * state.d[i] + state.rho * grad[i];
    }
    let next_iter = state.iteration + 1;
    let state = ScaState {
        w: w_next,
        d: d_next,
        iteration: next_iter,
        alpha: config.schedule.alpha.next(state.alpha, next_iter)?,
        rho: config.schedule.rho.next(state.rho, next_iter)?,
        tau: state.tau,
    };
    Ok(ScaStep {
        state,
        surrogate_minimizer: w_hat,
    })
}

/// Builds and solves the subproblem; also returns the mini-batch gradient
/// of the loss at the anchor (shared Jacobian, no extra sweeps).
fn solve_surrogate(
    model: &MlpModel,
    state: &ScaState,
    batch: &MiniBatch,
    config: &ScaConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = batch.len() as f64;
    match config.loss {
        LossKind::Squared => {
            let (f_vals, jac) = linearize_model(model, batch, JacobianWrt::FullOutput)?;
            // grad l_i = 2 (f_i - y_i) J_i
            let coeff: Vec<f64> = f_vals
                .iter()
                .zip(&batch.targets)
                .map(|(f, y)| 2.0 * (f - y) / l)
                .collect();
            let grad = jac.t_matvec(&coeff);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    what: "mini-batch gradient",
                    sample: batch.indices[0],
                });
            }
            let lambda = config.reg.lambda;
            let w_hat = match &config.reg.kind {
                RegKind::L2 => {
                    let s = build_ridge(
                        &jac, &f_vals, &batch.targets, &state.d, state.rho, lambda, state.tau,
                        &state.w,
                    )?;
                    match &config.partition {
                        None => solve_ridge(&s)?,
                        Some(spec) => {
                            let mut rng = partition_rng(config.rng_seed, state.iteration);
                            let part = make_partition(
                                s.dim(),
                                spec.blocks,
                                spec.policy,
                                None,
                                &mut rng,
                            )?;
                            parallel_surrogate_step(&s, &part, spec.workers)?
                        }
                    }
                }
                RegKind::Manifold(_) => {
                    // neighbor features live in the dataset, which this
                    // entry point does not see
                    return Err(Error::Unsupported {
                        what: "manifold runs need dataset context; use train()",
                    });
                }
                RegKind::L1 => {
                    if config.partition.is_some() {
                        return Err(Error::Unsupported {
                            what: "block solving is implemented for the quadratic path only",
                        });
                    }
                    let s = build_ridge(
                        &jac, &f_vals, &batch.targets, &state.d, state.rho, lambda, state.tau,
                        &state.w,
                    )?;
                    solve_l1_fista(&s.quad, &s.b, &s.anchor, state.tau, lambda, 0.0, None)?
                }
                RegKind::ElasticNet { mix } => {
                    if config.partition.is_some() {
                        return Err(Error::Unsupported {
                            what: "block solving is implemented for the quadratic path only",
                        });
                    }
                    let s = build_ridge(
                        &jac, &f_vals, &batch.targets, &state.d, state.rho, lambda, state.tau,
                        &state.w,
                    )?;
                    // mix*lambda on the l1 part, (1-mix)*lambda*(1/2)|w|^2
                    // adds (1-mix)*lambda/2 to the quadratic shift
                    solve_l1_fista(
                        &s.quad,
                        &s.b,
                        &s.anchor,
                        state.tau,
                        mix * lambda,
                        (1.0 - mix) * lambda * 0.5,
                        None,
                    )?
                }
                RegKind::GroupSparse(groups) => {
                    if config.partition.is_some() {
                        return Err(Error::Unsupported {
                            what: "block solving is implemented for the quadratic path only",
                        });
                    }
                    let s = build_ridge(
                        &jac, &f_vals, &batch.targets, &state.d, state.rho, lambda, state.tau,
                        &state.w,
                    )?;
                    solve_l1_fista(&s.quad, &s.b, &s.anchor, state.tau, lambda, 0.0, Some(groups))?
                }
            };
            Ok((w_hat, grad))
        }
        LossKind::CrossEntropy => {
            if config.partition.is_some() {
                return Err(Error::Unsupported {
                    what: "block solving is implemented for the quadratic path only",
                });
            }
            let penalty = match &config.reg.kind {
                RegKind::L2 => LogisticPenalty::L2,
                RegKind::L1 => LogisticPenalty::L1,
                _ => {
                    return Err(Error::Unsupported {
                        what: "cross-entropy runs support l2 or l1 regularizers",
                    })
                }
            };
            let s = build_logistic(
                model,
                batch,
                &state.d,
                state.rho,
                config.reg.lambda,
                state.tau,
                penalty,
            )?;
            // grad l_i = (sigmoid(z0_i) - y_i) JL_i
            let coeff: Vec<f64> = s
                .z0
                .iter()
                .zip(&batch.targets)
                .map(|(z, y)| (math::sigmoid(*z) - y) / l)
                .collect();
            let grad = s.jl.t_matvec(&coeff);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    what: "mini-batch gradient",
                    sample: batch.indices[0],
                });
            }
            let w_hat = solve_logistic(&s)?;
            Ok((w_hat, grad))
        }
    }
}

/// Manifold-regularized squared-loss step: quadratic data surrogate plus the
/// linearized manifold penalty (needs the full input block for neighbors).
fn solve_surrogate_manifold(
    model: &MlpModel,
    state: &ScaState,
    batch: &MiniBatch,
    dataset: &Dataset,
    config: &ScaConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let graph = match &config.reg.kind {
        RegKind::Manifold(g) => g,
        _ => unreachable!("caller checks the regularizer kind"),
    };
    let l = batch.len() as f64;
    let (f_vals, jac) = linearize_model(model, batch, JacobianWrt::FullOutput)?;
    let coeff: Vec<f64> = f_vals
        .iter()
        .zip(&batch.targets)
        .map(|(f, y)| 2.0 * (f - y) / l)
        .collect();
    let grad = jac.t_matvec(&coeff);
    let mut s = build_ridge(
        &jac,
        &f_vals,
        &batch.targets,
        &state.d,
        state.rho,
        0.0,
        state.tau,
        &state.w,
    )?;
    let terms = manifold_terms(model, batch, &dataset.inputs, graph)?;
    s.augment_with_manifold(&terms, config.reg.lambda);
    let w_hat = solve_ridge(&s)?;
    Ok((w_hat, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub objective: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// The logged objective turned non-finite; the run stopped here.
    Diverged { iteration: usize },
}

/// Per-run log emitted by the training loops. Objectives and minimizers are
/// bit-reproducible for a fixed seed; wall times are not.
#[derive(Debug, Clone)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    pub status: RunStatus,
    pub final_surrogate_minimizer: Option<Vec<f64>>,
}

pub(crate) struct RunClock {
    #[cfg(feature = "std")]
    start: std::time::Instant,
}

impl RunClock {
    pub(crate) fn start() -> RunClock {
        RunClock {
            #[cfg(feature = "std")]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn elapsed_ms(&self) -> f64 {
        #[cfg(feature = "std")]
        {
            self.start.elapsed().as_secs_f64() * 1e3
        }
        #[cfg(not(feature = "std"))]
        {
            0.0
        }
    }
}

pub(crate) fn eval_indices(n: usize, cap: Option<usize>, seed: u64) -> Vec<usize> {
    match cap {
        Some(cap) if n > cap => {
            let mut rng = ChaCha20Rng::seed_from_u64(math::splitmix64(seed ^ 0xe7a1));
            let mut idx: Vec<usize> = (0..n).collect();
            for i in (1..idx.len()).rev() {
                let j = rand::Rng::gen_range(&mut rng, 0..=i);
                idx.swap(i, j);
            }
            idx.truncate(cap);
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    }
}

fn partition_rng(seed: u64, iteration: usize) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(math::splitmix64(seed.wrapping_add(iteration as u64) ^ 0xb10c))
}

/// Runs the full outer loop. Deterministic per seed (identical seeds and
/// configs give identical objective sequences and final weights); a
/// non-finite logged objective aborts with a diagnostic status instead of
/// erroring.
pub fn train(
    model0: &MlpModel,
    dataset: &Dataset,
    config: &ScaConfig,
) -> Result<(MlpModel, TrainLog)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.loss.check_head(model0.head())?;
    let clock = RunClock::start();
    let eval_idx = eval_indices(dataset.len(), config.eval_subsample, config.rng_seed);
    let eval_subset = if eval_idx.len() == dataset.len() {
        None
    } else {
        Some(eval_idx.as_slice())
    };
    let mut sampler = MinibatchSampler::new(config.rng_seed);
    let mut model = model0.clone();
    let mut state = ScaState::init(model0.weights().to_vec(), &config.schedule, config.tau);
    if config.d0 == D0Init::FirstBatchGradient {
        let batch = sampler.draw(dataset, config.batch_size)?;
        state.d = crate::nn::batch_gradient(&model, &batch, config.loss)?;
    }

    let mut rows = Vec::new();
    let mut status = RunStatus::Completed;
    let mut final_minimizer = None;

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
        let step = if matches!(config.reg.kind, RegKind::Manifold(_)) {
            if config.partition.is_some() {
                return Err(Error::Unsupported {
                    what: "block partitions require a block-separable regularizer",
                });
            }
            let (w_hat, grad) = solve_surrogate_manifold(&model, &state, &batch, dataset, config)
                .map_err(|e| e.at_iteration(n))?;
            apply_updates(&state, config, w_hat, &grad)?
        } else {
            sca_iteration(&model, &state, &batch, config).map_err(|e| e.at_iteration(n))?
        };
        state = step.state;
        final_minimizer = Some(step.surrogate_minimizer);
        model.set_weights(state.w.clone())?;

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
            final_surrogate_minimizer: final_minimizer,
        },
    ))
}

/// Runs a first-order baseline on the identical mini-batch stream (same
/// seed, same sampler) so curves are directly comparable.
pub fn train_baseline(
    model0: &MlpModel,
    dataset: &Dataset,
    config: &baselines::BaselineRunConfig,
) -> Result<(MlpModel, TrainLog)> {
    baselines::run_baseline(model0, dataset, config)
}

/// Numeric audit of a schedule pair over a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    pub horizon: usize,
    pub alpha_positive: bool,
    pub alpha_decreasing: bool,
    pub alpha_sum_diverges: bool,
    pub alpha_squares_summable: bool,
    pub rho_positive: bool,
    pub rho_decreasing: bool,
    pub rho_sum_diverges: bool,
    pub rho_squares_summable: bool,
    /// Condition (iii): `alpha_n / rho_n` decreasing toward zero.
    pub ratio_vanishes: bool,
    pub alpha_partial_sum: f64,
    pub rho_partial_sum: f64,
    pub final_ratio: f64,
    /// Fitted decay exponents of `alpha_n`, `rho_n`, and their ratio.
    pub alpha_exponent: f64,
    pub rho_exponent: f64,
    pub ratio_exponent: f64,
}

impl ScheduleReport {
    pub fn is_fully_compliant(&self) -> bool {
        self.violations().is_empty()
    }

    /// Human-readable list of violated conditions.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut flag = |ok: bool, msg: &str| {
            if !ok {
                v.push(String::from(msg));
            }
        };
        flag(self.alpha_positive, "alpha not positive over the horizon");
        flag(self.alpha_decreasing, "alpha not strictly decreasing");
        flag(self.alpha_sum_diverges, "sum of alpha appears to converge");
        flag(
            self.alpha_squares_summable,
            "sum of alpha^2 appears to diverge",
        );
        flag(self.rho_positive, "rho not positive over the horizon");
        flag(self.rho_decreasing, "rho not strictly decreasing");
        flag(self.rho_sum_diverges, "sum of rho appears to converge");
        flag(
            self.rho_squares_summable,
            "sum of rho^2 appears to diverge",
        );
        flag(
            self.ratio_vanishes,
            "alpha/rho does not tend to zero (condition iii)",
        );
        v
    }
}

/// Checks the convergence conditions on a schedule numerically over
/// `horizon >= 1000` iterations: positivity, monotone decrease, a diverging
/// step sum with summable squares for both sequences, and a vanishing
/// `alpha/rho` ratio. Divergence/summability are judged by the fitted decay
/// exponent `p` in `a_n ~ n^{-p}` (sum diverges iff `p <= 1.02`, squares
/// summable iff `p >= 0.51`); the ratio must decrease over the horizon with
/// fitted exponent at least `0.05`. Report-only: nothing is altered.
pub fn verify_schedule(schedule: &Schedule, horizon: usize) -> Result<ScheduleReport> {
    if horizon < 1000 {
        return Err(Error::InvalidParameter {
            what: "schedule audit horizon must be at least 1000",
        });
    }
    schedule.alpha.validate()?;
    schedule.rho.validate()?;

    let mut alpha = schedule.alpha.first();
    let mut rho = schedule.rho.first();
    let mut alpha_positive = alpha > 0.0;
    let mut rho_positive = rho > 0.0;
    let mut alpha_decreasing = true;
    let mut rho_decreasing = true;
    let mut ratio_decreasing = true;
    let mut alpha_sum = 0.0;
    let mut rho_sum = 0.0;
    let half = horizon / 2;
    let mut at_half = (0.0, 0.0); // (alpha, rho) at n = horizon/2

    for n in 1..=horizon {
        alpha_sum += alpha;
        rho_sum += rho;
        if n == half {
            at_half = (alpha, rho);
        }
        if n == horizon {
            break;
        }
        let alpha_next = schedule.alpha.next(alpha, n)?;
        let rho_next = schedule.rho.next(rho, n)?;
        if alpha_next >= alpha {
            alpha_decreasing = false;
        }
        if rho_next >= rho {
            rho_decreasing = false;
        }
        if rho > 0.0 && rho_next > 0.0 && alpha_next / rho_next > alpha / rho + 1e-15 {
            ratio_decreasing = false;
        }
        alpha = alpha_next;
        rho = rho_next;
        alpha_positive &= alpha > 0.0;
        rho_positive &= rho > 0.0;
    }

    let exponent = |v_half: f64, v_end: f64| -> f64 {
        if v_half <= 0.0 || v_end <= 0.0 {
            return 0.0;
        }
        math::ln(v_half / v_end) / core::f64::consts::LN_2
    };
    let alpha_exponent = exponent(at_half.0, alpha);
    let rho_exponent = exponent(at_half.1, rho);
    let ratio_half = if at_half.1 > 0.0 {
        at_half.0 / at_half.1
    } else {
        f64::INFINITY
    };
    let final_ratio = if rho > 0.0 { alpha / rho } else { f64::INFINITY };
    let ratio_exponent = exponent(ratio_half, final_ratio);

    Ok(ScheduleReport {
        horizon,
        alpha_positive,
        alpha_decreasing,
        alpha_sum_diverges: alpha_positive && alpha_exponent <= 1.02,
        alpha_squares_summable: alpha_exponent >= 0.51,
        rho_positive,
        rho_decreasing,
        rho_sum_diverges: rho_positive && rho_exponent <= 1.02,
        rho_squares_summable: rho_exponent >= 0.51,
        ratio_vanishes: ratio_decreasing && ratio_exponent >= 0.05,
        alpha_partial_sum: alpha_sum,
        rho_partial_sum: rho_sum,
        final_ratio,
        alpha_exponent,
        rho_exponent,
        ratio_exponent,
    })
}
