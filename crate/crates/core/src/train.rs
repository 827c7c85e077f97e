//! Cross-validated training of the physics-informed network.
//!
//! Each fold gets its own train/validation split, its own scalers fitted on
//! the training subset, and an epoch loop driving Adam with plateau
//! scheduling and early stopping on the full enhanced validation loss.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    energy_matrix, feature_matrix, kfold_split, target_matrix, train_val_split, BuildingFeatures, FeatureSchema,
    JoinedSample, MinMaxScaler,
};
use crate::error::{Error, Result};
use crate::eval::{aggregate_folds, AggregateReport, MeanStd, MetricsReport};
use crate::loss::{enhanced_loss, reconstruct_energy, BuildingMeta, LossScalers, LossValue};
use crate::nn::{AdamState, EarlyStopState, MlpModel, ModelParams, PlateauSchedulerState};
use crate::physics::{self, EnvelopeState, LossBreakdown, PhysicsConstants, STATE_DIM};

pub const THREADS_ENV: &str = "EPC_PINN_THREADS";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MINI_BATCH: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub k_folds: usize,
    pub val_fraction: f64,
    pub learning_rate: f64,
    pub scheduler_patience: usize,
    pub scheduler_factor: f64,
    pub min_learning_rate: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    /// Rows per update; `None` means `DEFAULT_MINI_BATCH`. Values at or above
    /// the training subset size give full-batch training.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
    pub physics: PhysicsConstants,
    /// Weight of the energy term relative to the target term.
    pub physics_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k_folds: 10,
            val_fraction: 0.15,
            learning_rate: 1e-3,
            scheduler_patience: 5,
            scheduler_factor: 0.1,
            min_learning_rate: 1e-7,
            early_stop_patience: 8,
            max_epochs: 500,
            batch_size: None,
            seed: 0,
            hidden_layers: vec![256, 256],
            physics: PhysicsConstants::default(),
            physics_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.k_folds < 2 {
            return fail(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.scheduler_patience < 1 || self.early_stop_patience < 1 {
            return fail("patience values must be at least 1".into());
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor < 1.0) {
            return fail(format!("scheduler_factor must lie in (0, 1), got {}", self.scheduler_factor));
        }
        if !(self.min_learning_rate >= 0.0) {
            return fail("min_learning_rate must be non-negative".into());
        }
        if self.max_epochs < 1 {
            return fail("max_epochs must be at least 1".into());
        }
        if self.batch_size == Some(0) {
            return fail("batch_size must be positive".into());
        }
        if self.hidden_layers.contains(&0) {
            return fail("hidden layer widths must be positive".into());
        }
        if !(self.physics_weight >= 0.0 && self.physics_weight.is_finite()) {
            return fail(format!("physics_weight must be non-negative, got {}", self.physics_weight));
        }
        self.physics.validate()
    }

    pub fn effective_batch_size(&self, train_rows: usize) -> usize {
        self.batch_size.unwrap_or(DEFAULT_MINI_BATCH).min(train_rows).max(1)
    }

    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden_layers);
        dims.push(STATE_DIM);
        dims
    }
}

/// Per-fold seed derived from the run seed.
fn derive_seed(seed: u64, fold: usize, purpose: u64) -> u64 {
    // splitmix64 finaliser over the combined inputs
    let mut z = seed ^ (fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ purpose.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub learning_rate: Vec<f64>,
    /// Number of epochs run.
    pub stop_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub early_stopped: bool,
}

/// Hooks into the rows a fold touches. Indices refer to the sample slice.
pub trait TrainObserver: Sync {
    fn scaler_fit(&self, _fold: usize, _rows: &[usize]) {}
    fn parameter_update(&self, _fold: usize, _epoch: usize, _rows: &[usize]) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldSplit {
    pub fn check_disjoint(&self, n: usize) -> Result<()> {
        let mut seen = vec![0u8; n];
        for (tag, set) in [(1u8, &self.train), (2, &self.val), (4, &self.test)] {
            for &i in set {
                if i >= n {
                    return Err(Error::Usage(format!("fold {}: index {i} out of range {n}", self.fold)));
                }
                if seen[i] != 0 {
                    return Err(Error::Usage(format!(
                        "fold {}: index {i} appears in more than one subset",
                        self.fold
                    )));
                }
                seen[i] = tag;
            }
        }
        if self.train.is_empty() || self.val.is_empty() || self.test.is_empty() {
            return Err(Error::Usage(format!("fold {}: empty train, validation or test subset", self.fold)));
        }
        Ok(())
    }
}

/// All folds of a run, each test fold paired with a split of the remainder.
pub fn fold_splits(n: usize, config: &TrainConfig) -> Result<Vec<FoldSplit>> {
    let folds = kfold_split(n, config.k_folds, config.seed)?;
    folds
        .iter()
        .enumerate()
        .map(|(f, test)| {
            let mut in_test = vec![false; n];
            test.iter().for_each(|&i| in_test[i] = true);
            let rest: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            let (train, val) = train_val_split(&rest, config.val_fraction, derive_seed(config.seed, f, 1))?;
            Ok(FoldSplit {
                fold: f,
                train,
                val,
                test: test.clone(),
            })
        })
        .collect()
}

/// Everything needed to run a trained fold on new buildings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub fold: Option<usize>,
    pub model: ModelParams,
    pub feature_scaler: MinMaxScaler,
    pub target_scaler: MinMaxScaler,
    pub energy_scaler: MinMaxScaler,
    pub schema: FeatureSchema,
    pub physics: PhysicsConstants,
}

/// Predicted envelope and its physics decomposition for one building.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualAudit {
    pub state: EnvelopeState,
    pub breakdown: LossBreakdown,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            context: format!("encoding checkpoint {}", path.display()),
            source: e,
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cp: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if cp.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format version {}",
                path.display(),
                cp.format_version
            )));
        }
        Ok(cp)
    }

    pub fn network(&self) -> Result<MlpModel> {
        let m = MlpModel::from_params(&self.model)?;
        if m.input_dim() != self.schema.dim() || m.output_dim() != STATE_DIM {
            return Err(Error::Checkpoint(format!(
                "network dims {:?} do not match schema width {}",
                m.layer_dims(),
                self.schema.dim()
            )));
        }
        Ok(m)
    }

    /// Predicted states in physical units, clamped at zero.
    pub fn predict_states(&self, model: &MlpModel, features: &Array2<f64>) -> Result<Vec<EnvelopeState>> {
        let scaled = self.feature_scaler.transform(features.view())?;
        let out = model.predict(scaled.view())?;
        let physical = self.target_scaler.inverse_transform(out.view())?;
        physical
            .rows()
            .into_iter()
            .map(|r| EnvelopeState::from_slice(r.as_slice().expect("standard layout")).map(|s| s.clamped()))
            .collect()
    }

    pub fn virtual_audit(&self, building: &BuildingFeatures) -> Result<VirtualAudit> {
        let model = self.network()?;
        let x = Array2::from_shape_vec((1, self.schema.dim()), self.schema.encode(building)?)
            .expect("encoded width matches schema");
        let state = self.predict_states(&model, &x)?.remove(0);
        let breakdown =
            physics::energy_consumption(&state, building.useful_area, building.building_type, &self.physics)?;
        Ok(VirtualAudit { state, breakdown })
    }
}

/// Test-set predictions of one fold in physical units.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldPredictions {
    pub indices: Vec<usize>,
    pub cadastre_numbers: Vec<String>,
    pub states: Vec<[f64; STATE_DIM]>,
    pub energy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldOutcome {
    pub history: TrainHistory,
    pub predictions: FoldPredictions,
    pub checkpoint: Option<Checkpoint>,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
}

/// Trains one fold. Implemented by the network trainer and by test stubs.
pub trait FoldTrainer: Sync {
    fn train_fold(
        &self,
        samples: &[JoinedSample],
        split: &FoldSplit,
        config: &TrainConfig,
        schema: &FeatureSchema,
        observer: &dyn TrainObserver,
    ) -> Result<FoldOutcome>;
}

pub struct PinnTrainer;

/// Scaled tensors for one subset.
struct Subset {
    rows: Vec<usize>,
    x: Array2<f64>,
    y: Array2<f64>,
    meta: Vec<BuildingMeta>,
    energy: Vec<f64>,
}

struct Scalers {
    features: MinMaxScaler,
    targets: MinMaxScaler,
    energy: MinMaxScaler,
}

impl Scalers {
    fn loss(&self) -> LossScalers<'_> {
        LossScalers {
            targets: &self.targets,
            energy: &self.energy,
        }
    }
}

fn meta_of(samples: &[JoinedSample], rows: &[usize]) -> Vec<BuildingMeta> {
    rows.iter()
        .map(|&i| BuildingMeta {
            useful_area: samples[i].useful_area,
            building_type: samples[i].building_type,
        })
        .collect()
}

fn subset(samples: &[JoinedSample], rows: &[usize], scalers: &Scalers) -> Result<Subset> {
    Ok(Subset {
        rows: rows.to_vec(),
        x: scalers.features.transform(feature_matrix(samples, rows).view())?,
        y: scalers.targets.transform(target_matrix(samples, rows).view())?,
        meta: meta_of(samples, rows),
        energy: rows.iter().map(|&i| samples[i].measured_energy).collect(),
    })
}

fn select(s: &Subset, local: &[usize]) -> Subset {
    Subset {
        rows: local.iter().map(|&i| s.rows[i]).collect(),
        x: s.x.select(Axis(0), local),
        y: s.y.select(Axis(0), local),
        meta: local.iter().map(|&i| s.meta[i]).collect(),
        energy: local.iter().map(|&i| s.energy[i]).collect(),
    }
}

fn subset_loss(model: &MlpModel, s: &Subset, scalers: &Scalers, config: &TrainConfig) -> Result<LossValue> {
    let pred = model.predict(s.x.view())?;
    enhanced_loss(
        pred.view(),
        s.y.view(),
        &s.meta,
        &s.energy,
        scalers.loss(),
        &config.physics,
        config.physics_weight,
    )
}

fn as_training_error(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Training { .. } => e,
        other => Error::Training {
            epoch,
            batch,
            message: other.to_string(),
        },
    }
}

/// Epoch loop. Returns the history; `model` holds the restored best snapshot.
fn fit(
    model: &mut MlpModel,
    train: &Subset,
    val: &Subset,
    scalers: &Scalers,
    config: &TrainConfig,
    fold: usize,
    observer: &dyn TrainObserver,
) -> Result<TrainHistory> {
    let mut adam = AdamState::new(model, config.learning_rate);
    let mut scheduler = PlateauSchedulerState::new(config.scheduler_patience, config.scheduler_factor);
    scheduler.min_lr = config.min_learning_rate;
    let mut stopper = EarlyStopState::new(config.early_stop_patience);
    let mut history = TrainHistory::default();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, fold, 3));
    let n = train.rows.len();
    let batch_size = config.effective_batch_size(n);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.max_epochs {
        let lr = adam.learning_rate;
        let mut epoch_loss = 0.0;
        if batch_size == n {
            let (pred, cache) = model.forward(train.x.view())?;
            let loss = enhanced_loss(
                pred.view(),
                train.y.view(),
                &train.meta,
                &train.energy,
                scalers.loss(),
                &config.physics,
                config.physics_weight,
            )
            .map_err(|e| as_training_error(e, epoch, 0))?;
            let grads = model.backward(&cache, loss.gradient_wrt_predictions.view())?;
            observer.parameter_update(fold, epoch, &train.rows);
            adam.step(model, &grads, epoch, 0)?;
            epoch_loss = loss.total;
        } else {
            order.shuffle(&mut shuffle_rng);
            for (b, chunk) in order.chunks(batch_size).enumerate() {
                let batch = select(train, chunk);
                let (pred, cache) = model.forward(batch.x.view())?;
                let loss = enhanced_loss(
                    pred.view(),
                    batch.y.view(),
                    &batch.meta,
                    &batch.energy,
                    scalers.loss(),
                    &config.physics,
                    config.physics_weight,
                )
                .map_err(|e| as_training_error(e, epoch, b))?;
                let grads = model.backward(&cache, loss.gradient_wrt_predictions.view())?;
                observer.parameter_update(fold, epoch, &batch.rows);
                adam.step(model, &grads, epoch, b)?;
                epoch_loss += loss.total * chunk.len() as f64 / n as f64;
            }
        }
        let val_loss = subset_loss(model, val, scalers, config)
            .map_err(|e| as_training_error(e, epoch, 0))?
            .total;
        history.train_loss.push(epoch_loss);
        history.val_loss.push(val_loss);
        history.learning_rate.push(lr);
        history.stop_epoch = epoch + 1;

        if stopper.step(val_loss, model, epoch) {
            history.early_stopped = true;
            break;
        }
        adam.learning_rate = scheduler.step(val_loss, lr);
    }

    history.best_epoch = stopper.best_epoch.unwrap_or(history.stop_epoch - 1);
    history.best_val_loss = stopper.best_val_loss.min(history.val_loss[history.best_epoch]);
    if let Some(best) = stopper.take_best() {
        *model = best;
    }
    Ok(history)
}

impl FoldTrainer for PinnTrainer {
    fn train_fold(
        &self,
        samples: &[JoinedSample],
        split: &FoldSplit,
        config: &TrainConfig,
        schema: &FeatureSchema,
        observer: &dyn TrainObserver,
    ) -> Result<FoldOutcome> {
        split.check_disjoint(samples.len())?;
        let fold = split.fold;

        observer.scaler_fit(fold, &split.train);
        let scalers = Scalers {
            features: MinMaxScaler::fit(feature_matrix(samples, &split.train).view())?,
            targets: MinMaxScaler::fit(target_matrix(samples, &split.train).view())?,
            energy: MinMaxScaler::fit(energy_matrix(samples, &split.train).view())?,
        };
        let train = subset(samples, &split.train, &scalers)?;
        let val = subset(samples, &split.val, &scalers)?;

        let dims = config.layer_dims(schema.dim());
        let mut model = MlpModel::init(&dims, derive_seed(config.seed, fold, 2))?;
        let history = fit(&mut model, &train, &val, &scalers, config, fold, observer)?;

        let final_train_loss = subset_loss(&model, &train, &scalers, config)?.total;
        let final_val_loss = subset_loss(&model, &val, &scalers, config)?.total;

        let checkpoint = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            fold: Some(fold),
            model: model.to_params(),
            feature_scaler: scalers.features,
            target_scaler: scalers.targets,
            energy_scaler: scalers.energy,
            schema: schema.clone(),
            physics: config.physics.clone(),
        };
        let test_x = feature_matrix(samples, &split.test);
        let states = checkpoint.predict_states(&model, &test_x)?;
        let test_scaled = checkpoint.feature_scaler.transform(test_x.view())?;
        let energy = reconstruct_energy(
            model.predict(test_scaled.view())?.view(),
            &meta_of(samples, &split.test),
            &checkpoint.target_scaler,
            &config.physics,
        )?;
        let predictions = FoldPredictions {
            indices: split.test.clone(),
            cadastre_numbers: split.test.iter().map(|&i| samples[i].cadastre_number.clone()).collect(),
            states: states.iter().map(EnvelopeState::to_array).collect(),
            energy,
        };
        Ok(FoldOutcome {
            history,
            predictions,
            checkpoint: Some(checkpoint),
            final_train_loss,
            final_val_loss,
        })
    }
}

/// Outcome of [`fit_rows`].
#[derive(Clone, Debug)]
pub struct RowFit {
    pub model: MlpModel,
    pub loss_trace: Vec<f64>,
    pub checkpoint: Checkpoint,
}

/// Full-batch Adam on `rows` at a fixed learning rate, without validation,
/// scheduling or early stopping. Stops after `config.max_epochs` epochs or
/// as soon as the training loss drops below `target_loss`.
pub fn fit_rows(
    samples: &[JoinedSample],
    rows: &[usize],
    config: &TrainConfig,
    schema: &FeatureSchema,
    target_loss: f64,
) -> Result<RowFit> {
    config.validate()?;
    if rows.is_empty() || rows.iter().any(|&i| i >= samples.len()) {
        return Err(Error::Usage("fit_rows needs non-empty, in-range rows".into()));
    }
    let scalers = Scalers {
        features: MinMaxScaler::fit(feature_matrix(samples, rows).view())?,
        targets: MinMaxScaler::fit(target_matrix(samples, rows).view())?,
        energy: MinMaxScaler::fit(energy_matrix(samples, rows).view())?,
    };
    let data = subset(samples, rows, &scalers)?;
    let mut model = MlpModel::init(&config.layer_dims(schema.dim()), derive_seed(config.seed, 0, 2))?;
    let mut adam = AdamState::new(&model, config.learning_rate);
    let mut loss_trace = Vec::new();
    for epoch in 0..config.max_epochs {
        let (pred, cache) = model.forward(data.x.view())?;
        let loss = enhanced_loss(
            pred.view(),
            data.y.view(),
            &data.meta,
            &data.energy,
            scalers.loss(),
            &config.physics,
            config.physics_weight,
        )
        .map_err(|e| as_training_error(e, epoch, 0))?;
        loss_trace.push(loss.total);
        if loss.total < target_loss {
            break;
        }
        let grads = model.backward(&cache, loss.gradient_wrt_predictions.view())?;
        adam.step(&mut model, &grads, epoch, 0)?;
    }
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        fold: None,
        model: model.to_params(),
        feature_scaler: scalers.features,
        target_scaler: scalers.targets,
        energy_scaler: scalers.energy,
        schema: schema.clone(),
        physics: config.physics.clone(),
    };
    Ok(RowFit {
        model,
        loss_trace,
        checkpoint,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub history: TrainHistory,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub metrics: MetricsReport,
    pub predictions: FoldPredictions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: TrainConfig,
    pub n_samples: usize,
    pub folds: Vec<FoldReport>,
    pub aggregate: AggregateReport,
    pub final_train_loss: MeanStd,
    pub final_val_loss: MeanStd,
}

impl CvReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            context: "encoding results".into(),
            source: e,
        })
    }

    /// Metrics table followed by the loss summary.
    pub fn render(&self) -> String {
        let mut out = self.aggregate.render_table();
        out.push_str(&format!(
            "final training loss   {:.4} ± {:.4}\nfinal validation loss {:.4} ± {:.4}\n",
            self.final_train_loss.mean,
            self.final_train_loss.std,
            self.final_val_loss.mean,
            self.final_val_loss.std
        ));
        out
    }
}

#[derive(Debug)]
pub struct CvResult {
    pub report: CvReport,
    pub checkpoints: Vec<Option<Checkpoint>>,
}

/// Fold worker count: `EPC_PINN_THREADS` if set, else the available cores,
/// never more than `k`.
pub fn worker_threads(k: usize) -> Result<usize> {
    let requested = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    Ok(requested.min(k).max(1))
}

pub fn cross_validate(samples: &[JoinedSample], config: &TrainConfig, schema: &FeatureSchema) -> Result<CvResult> {
    cross_validate_with(samples, config, schema, &PinnTrainer, &NoObserver)
}

pub fn cross_validate_with(
    samples: &[JoinedSample],
    config: &TrainConfig,
    schema: &FeatureSchema,
    trainer: &dyn FoldTrainer,
    observer: &dyn TrainObserver,
) -> Result<CvResult> {
    config.validate()?;
    if samples.len() < config.k_folds {
        return Err(Error::Config(format!(
            "{} samples cannot fill {} folds",
            samples.len(),
            config.k_folds
        )));
    }
    let splits = fold_splits(samples.len(), config)?;
    let threads = worker_threads(config.k_folds)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    log::info!("training {} folds on {threads} worker(s)", splits.len());

    let outcomes: Vec<Result<FoldOutcome>> = pool.install(|| {
        splits
            .par_iter()
            .map(|split| {
                let out = trainer.train_fold(samples, split, config, schema, observer);
                if let Ok(o) = &out {
                    log::info!(
                        "fold {}: {} epochs, best val loss {:.5}",
                        split.fold,
                        o.history.stop_epoch,
                        o.history.best_val_loss
                    );
                }
                out
            })
            .collect()
    });

    let mut folds = Vec::with_capacity(splits.len());
    let mut checkpoints = Vec::with_capacity(splits.len());
    for (split, outcome) in splits.iter().zip(outcomes) {
        let wrap = |e: Error| Error::Fold {
            fold: split.fold,
            source: Box::new(e),
        };
        let o = outcome.map_err(wrap)?;
        let truth = target_matrix(samples, &split.test);
        let pred = Array2::from_shape_fn((o.predictions.states.len(), STATE_DIM), |(r, c)| o.predictions.states[r][c]);
        let measured: Vec<f64> = split.test.iter().map(|&i| samples[i].measured_energy).collect();
        let metrics = MetricsReport::compute(truth.view(), pred.view(), &measured, &o.predictions.energy).map_err(wrap)?;
        folds.push(FoldReport {
            fold: split.fold,
            train_size: split.train.len(),
            val_size: split.val.len(),
            test_size: split.test.len(),
            history: o.history,
            final_train_loss: o.final_train_loss,
            final_val_loss: o.final_val_loss,
            metrics,
            predictions: o.predictions,
        });
        checkpoints.push(o.checkpoint);
    }

    let aggregate = aggregate_folds(&folds.iter().map(|f| f.metrics.clone()).collect::<Vec<_>>())?;
    let losses = |f: fn(&FoldReport) -> f64| MeanStd::of(&folds.iter().map(f).collect::<Vec<_>>()).expect("k >= 2");
    let report = CvReport {
        config: config.clone(),
        n_samples: samples.len(),
        final_train_loss: losses(|f| f.final_train_loss),
        final_val_loss: losses(|f| f.final_val_loss),
        aggregate,
        folds,
    };
    Ok(CvResult { report, checkpoints })
}
