//! Experiment configuration and the sweep runner: for every repetition a
//! fresh split and a fresh init (shared across optimizers), an identical
//! mini-batch stream per optimizer, a full training run, and a persisted
//! record. Individual run failures are recorded without aborting the sweep.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use sca_core::baselines::{BaselineConfig, BaselineRunConfig};
use sca_core::blocks::AssignmentPolicy;
use sca_core::engine::{train, train_baseline, D0Init, PartitionSpec, ScaConfig, Schedule};
use sca_core::nn::{glorot_init, neuron_groups, MlpModel, OutputHead, Topology};
use sca_core::objective::{build_knn_graph, median_heuristic_sigma, Groups, LossKind, RegKind, Regularizer};
use sca_core::{Dataset, TaskKind};

use crate::data::{self, split, CsvSchema, DataError, SplitSpec};
use crate::metrics::{compute_mse, compute_roc_auc};
use crate::records::{status_string, RunRecord};

#[derive(Error, Debug)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Core(#[from] sca_core::Error),
    #[error("unknown dataset preset '{0}'")]
    UnknownPreset(String),
    #[error("topology input layer is {topology} but the dataset has {features} features")]
    TopologyMismatch { topology: usize, features: usize },
    #[error("config error: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSpec {
    Regression,
    Binary,
}

impl From<TaskSpec> for TaskKind {
    fn from(t: TaskSpec) -> TaskKind {
        match t {
            TaskSpec::Regression => TaskKind::Regression,
            TaskSpec::Binary => TaskKind::Binary,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    SynthRegression {
        n: usize,
        d: usize,
        #[serde(default = "default_noise")]
        noise: f64,
    },
    SynthBinary {
        n: usize,
        d: usize,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default = "default_true")]
        has_header: bool,
        target_column: usize,
        #[serde(default)]
        drop_columns: Vec<usize>,
        task: TaskSpec,
    },
    /// One of the bundled UCI presets by name, read from `data_dir`.
    Preset {
        name: String,
        #[serde(default = "default_data_dir")]
        data_dir: PathBuf,
    },
}

fn default_noise() -> f64 {
    0.05
}
fn default_delimiter() -> char {
    ','
}
fn default_true() -> bool {
    true
}
fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

impl DatasetSpec {
    /// Materializes the dataset (loading, imputation, normalization).
    pub fn load(&self, seed: u64) -> Result<Dataset, ExperimentError> {
        match self {
            DatasetSpec::SynthRegression { n, d, noise } => {
                Ok(data::synth_regression(*n, *d, *noise, seed)?)
            }
            DatasetSpec::SynthBinary { n, d } => Ok(data::synth_binary(*n, *d, seed)?),
            DatasetSpec::Csv {
                path,
                delimiter,
                has_header,
                target_column,
                drop_columns,
                task,
            } => {
                let schema = CsvSchema {
                    delimiter: *delimiter as u8,
                    has_header: *has_header,
                    target_column: *target_column,
                    drop_columns: drop_columns.clone(),
                };
                let mut table = data::load_csv(path, &schema)?;
                data::impute_median(&mut table)?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "csv".to_string());
                let (dataset, _) =
                    data::table_to_dataset(&table, &schema, &name, (*task).into())?;
                Ok(dataset)
            }
            DatasetSpec::Preset { name, data_dir } => {
                let preset = data::uci_presets()
                    .into_iter()
                    .find(|p| p.name == name)
                    .ok_or_else(|| ExperimentError::UnknownPreset(name.clone()))?;
                let path = data_dir.join(preset.filename);
                let mut table = data::load_csv(&path, &preset.schema)?;
                data::impute_median(&mut table)?;
                let (dataset, _) =
                    data::table_to_dataset(&table, &preset.schema, preset.name, preset.task)?;
                Ok(dataset)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpec {
    Squared,
    CrossEntropy,
}

impl LossSpec {
    pub fn loss_kind(self) -> LossKind {
        match self {
            LossSpec::Squared => LossKind::Squared,
            LossSpec::CrossEntropy => LossKind::CrossEntropy,
        }
    }

    pub fn head(self) -> OutputHead {
        match self {
            LossSpec::Squared => OutputHead::Identity,
            LossSpec::CrossEntropy => OutputHead::Sigmoid,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegKindSpec {
    L2,
    L1,
    ElasticNet { mix: f64 },
    /// Neuron-wise groups derived from the topology.
    GroupSparseNeurons,
    /// Output-smoothness penalty over a kNN graph built on the training
    /// inputs; `sigma` defaults to the median pairwise distance.
    Manifold { k: usize, sigma: Option<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegSpec {
    #[serde(flatten)]
    pub kind: RegKindSpec,
    pub lambda: f64,
}

impl RegSpec {
    fn build(&self, topology: &Topology, train: &Dataset) -> Result<Regularizer, ExperimentError> {
        let kind = match &self.kind {
            RegKindSpec::L2 => RegKind::L2,
            RegKindSpec::L1 => RegKind::L1,
            RegKindSpec::ElasticNet { mix } => RegKind::ElasticNet { mix: *mix },
            RegKindSpec::GroupSparseNeurons => {
                RegKind::GroupSparse(Groups::new(neuron_groups(topology))?)
            }
            RegKindSpec::Manifold { k, sigma } => {
                let sigma =
                    sigma.unwrap_or_else(|| median_heuristic_sigma(&train.inputs, 1000));
                RegKind::Manifold(build_knn_graph(&train.inputs, *k, sigma)?)
            }
        };
        Ok(Regularizer::new(kind, self.lambda)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Sca {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_alpha0")]
        alpha0: f64,
        #[serde(default = "default_eps")]
        eps_alpha: f64,
        #[serde(default = "default_rho0")]
        rho0: f64,
        #[serde(default = "default_eps")]
        eps_rho: f64,
        #[serde(default)]
        tau: f64,
        #[serde(default)]
        blocks: Option<usize>,
        #[serde(default = "default_workers")]
        workers: usize,
        #[serde(default)]
        d0_from_data: bool,
    },
    Sgd {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_sgd_alpha0")]
        alpha0: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Adagrad {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_first_order_rate")]
        rate: f64,
    },
    Rmsprop {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_first_order_rate")]
        rate: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    Adam {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_adam_rate")]
        rate: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
    },
}

fn default_alpha0() -> f64 {
    0.5
}
fn default_rho0() -> f64 {
    0.9
}
fn default_eps() -> f64 {
    0.01
}
fn default_sgd_alpha0() -> f64 {
    0.1
}
fn default_first_order_rate() -> f64 {
    0.01
}
fn default_gamma() -> f64 {
    0.9
}
fn default_adam_rate() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_workers() -> usize {
    1
}

impl OptimizerSpec {
    pub fn name(&self) -> String {
        let (label, fallback) = match self {
            OptimizerSpec::Sca { label, .. } => (label, "sca"),
            OptimizerSpec::Sgd { label, .. } => (label, "sgd"),
            OptimizerSpec::Adagrad { label, .. } => (label, "adagrad"),
            OptimizerSpec::Rmsprop { label, .. } => (label, "rmsprop"),
            OptimizerSpec::Adam { label, .. } => (label, "adam"),
        };
        label.clone().unwrap_or_else(|| fallback.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub topology: Vec<usize>,
    pub loss: LossSpec,
    pub regularizer: RegSpec,
    pub optimizers: Vec<OptimizerSpec>,
    pub iterations: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub log_every: usize,
    #[serde(default = "default_eval_subsample")]
    pub eval_subsample: Option<usize>,
}

fn default_repetitions() -> usize {
    20
}
fn default_batch_size() -> usize {
    20
}
fn default_test_fraction() -> f64 {
    0.25
}
fn default_eval_subsample() -> Option<usize> {
    Some(2000)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.optimizers.is_empty() {
            return Err(ExperimentError::Invalid(
                "at least one optimizer is required".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(ExperimentError::Invalid(
                "repetitions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn mix_seed(seed: u64, rep: u64, salt: u64) -> u64 {
    let mut z = seed ^ rep.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt.rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Test metric of a trained model: MSE in normalized target space for
/// regression, AUC of the squashed scores for binary tasks.
fn test_metric(model: &MlpModel, test: &Dataset) -> Result<f64, ExperimentError> {
    let mut scores = Vec::with_capacity(test.len());
    for i in 0..test.len() {
        let (f, _) = model.forward(test.inputs.row(i))?;
        scores.push(f);
    }
    match test.task {
        TaskKind::Regression => compute_mse(&scores, &test.targets)
            .map_err(|e| ExperimentError::Invalid(e.to_string())),
        TaskKind::Binary => compute_roc_auc(&scores, &test.targets)
            .map(|(_, auc)| auc)
            .map_err(|e| ExperimentError::Invalid(e.to_string())),
    }
}

/// Runs the full sweep. Per-run optimizer failures become records with a
/// `failed:` status; configuration and data errors abort.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>, ExperimentError> {
    config.validate()?;
    let topology = Topology::new(config.topology.clone())?;
    let head = config.loss.head();
    let loss = config.loss.loss_kind();
    let dataset = config.dataset.load(config.seed)?;
    if topology.input_dim() != dataset.feature_dim() {
        return Err(ExperimentError::TopologyMismatch {
            topology: topology.input_dim(),
            features: dataset.feature_dim(),
        });
    }
    let mut records = Vec::new();
    for rep in 0..config.repetitions as u64 {
        let (train_set, test_set) = split(
            &dataset,
            &SplitSpec {
                test_fraction: config.test_fraction,
                seed: mix_seed(config.seed, rep, 1),
            },
        )?;
        let init_seed = mix_seed(config.seed, rep, 2);
        let stream_seed = mix_seed(config.seed, rep, 3);
        let w0 = glorot_init(&topology, init_seed);
        for spec in &config.optimizers {
            let name = spec.name();
            let model0 = MlpModel::new(topology.clone(), head, w0.clone())?;
            let reg = config.regularizer.build(&topology, &train_set)?;
            let outcome = run_single(
                spec, &model0, &train_set, loss, reg, config, stream_seed,
            );
            let record = match outcome {
                Ok((model, log)) => {
                    let metric = match log.status {
                        sca_core::engine::RunStatus::Completed => {
                            test_metric(&model, &test_set).ok()
                        }
                        _ => None,
                    };
                    RunRecord {
                        optimizer: name.clone(),
                        seed_index: rep,
                        rows_file: format!("{name}_rep{rep}.csv"),
                        final_metric: metric,
                        status: status_string(&log.status),
                        rows: log.rows,
                    }
                }
                Err(e) => RunRecord {
                    optimizer: name.clone(),
                    seed_index: rep,
                    rows_file: format!("{name}_rep{rep}.csv"),
                    final_metric: None,
                    status: format!("failed: {e}"),
                    rows: Vec::new(),
                },
            };
            records.push(record);
        }
    }
    Ok(records)
}

fn run_single(
    spec: &OptimizerSpec,
    model0: &MlpModel,
    train_set: &Dataset,
    loss: LossKind,
    reg: Regularizer,
    config: &ExperimentConfig,
    stream_seed: u64,
) -> Result<(MlpModel, sca_core::engine::TrainLog), ExperimentError> {
    match spec {
        OptimizerSpec::Sca {
            alpha0,
            eps_alpha,
            rho0,
            eps_rho,
            tau,
            blocks,
            workers,
            d0_from_data,
            ..
        } => {
            let schedule = Schedule::quadratic(*alpha0, *eps_alpha, *rho0, *eps_rho)?;
            let mut sca = ScaConfig::new(
                config.batch_size,
                loss,
                reg,
                schedule,
                *tau,
                config.iterations,
                stream_seed,
            )?;
            sca.log_every = config.log_every;
            sca.eval_subsample = config.eval_subsample;
            if *d0_from_data {
                sca.d0 = D0Init::FirstBatchGradient;
            }
            if let Some(blocks) = blocks {
                sca.partition = Some(PartitionSpec {
                    blocks: *blocks,
                    policy: AssignmentPolicy::Static,
                    workers: (*workers).max(1),
                });
            }
            Ok(train(model0, train_set, &sca)?)
        }
        baseline => {
            let optimizer = match baseline {
                OptimizerSpec::Sgd { alpha0, eps, .. } => BaselineConfig::Sgd {
                    alpha0: *alpha0,
                    eps: *eps,
                },
                OptimizerSpec::Adagrad { rate, .. } => BaselineConfig::Adagrad {
                    rate: *rate,
                    stability: 1e-8,
                },
                OptimizerSpec::Rmsprop { rate, gamma, .. } => BaselineConfig::RmsProp {
                    rate: *rate,
                    gamma: *gamma,
                    stability: 1e-8,
                },
                OptimizerSpec::Adam {
                    rate, beta1, beta2, ..
                } => BaselineConfig::Adam {
                    rate: *rate,
                    beta1: *beta1,
                    beta2: *beta2,
                    stability: 1e-8,
                },
                OptimizerSpec::Sca { .. } => unreachable!(),
            };
            let run = BaselineRunConfig {
                optimizer,
                batch_size: config.batch_size,
                loss,
                reg,
                max_iters: config.iterations,
                rng_seed: stream_seed,
                log_every: config.log_every,
                eval_subsample: config.eval_subsample,
            };
            Ok(train_baseline(model0, train_set, &run)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSpec::SynthRegression {
                n: 80,
                d: 3,
                noise: 0.01,
            },
            topology: vec![3, 4, 1],
            loss: LossSpec::Squared,
            regularizer: RegSpec {
                kind: RegKindSpec::L2,
                lambda: 1e-3,
            },
            optimizers: vec![
                OptimizerSpec::Sca {
                    label: None,
                    alpha0: 0.5,
                    eps_alpha: 0.01,
                    rho0: 0.9,
                    eps_rho: 0.01,
                    tau: 0.0,
                    blocks: None,
                    workers: 1,
                    d0_from_data: false,
                },
                OptimizerSpec::Sgd {
                    label: None,
                    alpha0: 0.1,
                    eps: 0.01,
                },
            ],
            iterations: 10,
            repetitions: 1,
            batch_size: 10,
            test_fraction: 0.25,
            seed: 5,
            log_every: 1,
            eval_subsample: None,
        }
    }

    #[test]
    fn single_run_produces_one_record_with_rows() {
        let mut config = tiny_config();
        config.optimizers.truncate(1);
        let records = run_experiment(&config).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].rows.len(), 11); // initial row + 10 logged
        assert!(records[0].final_metric.is_some());
        assert_eq!(records[0].status, "completed");
    }

    #[test]
    fn optimizers_share_the_initial_objective() {
        let config = tiny_config();
        let records = run_experiment(&config).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(
            records[0].rows[0].objective.to_bits(),
            records[1].rows[0].objective.to_bits()
        );
    }

    #[test]
    fn repetitions_vary_split_and_init() {
        let mut config = tiny_config();
        config.optimizers.truncate(1);
        config.repetitions = 3;
        let records = run_experiment(&config).unwrap();
        assert_eq!(records.len(), 3);
        // different split + init per repetition -> different initial objective
        let o0 = records[0].rows[0].objective;
        let o1 = records[1].rows[0].objective;
        let o2 = records[2].rows[0].objective;
        assert!(o0 != o1 || o1 != o2);
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = tiny_config();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.topology, config.topology);
        assert_eq!(back.optimizers.len(), 2);
    }

    #[test]
    fn topology_mismatch_is_reported() {
        let mut config = tiny_config();
        config.topology = vec![5, 4, 1];
        assert!(matches!(
            run_experiment(&config),
            Err(ExperimentError::TopologyMismatch { .. })
        ));
    }
}
