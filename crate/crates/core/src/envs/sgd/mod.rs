//! Learning-rate control for a small softmax classifier trained with Adam.
//!
//! One control step sets the learning rate to `10^-action` and runs
//! `updates_per_step` mini-batch updates. The reward is the negated
//! validation NLL.
//!
//! Observation layout (7 numbers): `[predictive-change variance mean,
//! its uncertainty, loss variance mean, its uncertainty, learning rate,
//! training loss, validation loss]`. Means and uncertainties are discounted
//! running mean and standard deviation; the learning rate is 0 before the
//! first action and the training loss is the full training-set loss at reset,
//! afterwards the mean pre-update mini-batch loss.
//!
//! The dataset is generated from `test_seed`; weight initialization and
//! mini-batch order come from `train_seed`.
//!
//! Instance CSV columns: `instance_id, dataset_id, train_seed, test_seed`,
//! where `dataset_id` is `synthetic_blobs` or `idx:<images path>;<labels path>`.

pub mod data;
pub mod net;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::BenchmarkId;
use crate::env::{Benchmark, EpisodeContext, Observation, ReferenceKind, Transition};
use crate::error::{Error, Result};
use crate::instance::{expect_column, parse_field, InstanceRecord, Split};
use crate::seed::{rng_for, Rng};
use crate::space::{Action, Interval, SpaceSpec, UNBOUNDED};

pub use data::{dataset_from_idx, parse_idx, read_idx, synthetic_blobs, BlobSpec, Dataset, IdxArray};
pub use net::{Activation, Adam, Batch, Mlp, NetworkSpec};

/// Seeds of train-split instances lie below this value, test-split seeds at or above it.
pub const SEED_POOL_BOUNDARY: u64 = 1 << 31;

pub const MAX_ACTION: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DatasetId {
    SyntheticBlobs,
    IdxFile { images: PathBuf, labels: PathBuf },
}

impl DatasetId {
    pub fn to_field(&self) -> String {
        match self {
            DatasetId::SyntheticBlobs => "synthetic_blobs".into(),
            DatasetId::IdxFile { images, labels } => format!("idx:{};{}", images.display(), labels.display()),
        }
    }

    pub fn from_field(text: &str) -> std::result::Result<Self, String> {
        if text == "synthetic_blobs" {
            return Ok(DatasetId::SyntheticBlobs);
        }
        if let Some(rest) = text.strip_prefix("idx:") {
            if let Some((images, labels)) = rest.split_once(';') {
                if !images.is_empty() && !labels.is_empty() {
                    return Ok(DatasetId::IdxFile {
                        images: images.into(),
                        labels: labels.into(),
                    });
                }
            }
        }
        Err(format!("dataset_id `{text}` is neither synthetic_blobs nor idx:<images>;<labels>"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdInstance {
    pub id: String,
    pub dataset: DatasetId,
    pub train_seed: u64,
    pub test_seed: u64,
}

impl InstanceRecord for SgdInstance {
    fn id(&self) -> &str {
        &self.id
    }

    fn csv_header(_instances: &[Self]) -> Result<Vec<String>> {
        Ok(["instance_id", "dataset_id", "train_seed", "test_seed"].map(String::from).to_vec())
    }

    fn to_csv_row(&self) -> Vec<String> {
        vec![
            self.id.clone(),
            self.dataset.to_field(),
            self.train_seed.to_string(),
            self.test_seed.to_string(),
        ]
    }

    fn from_csv_row(header: &[String], row: &[String]) -> std::result::Result<Self, String> {
        for (col, name) in ["instance_id", "dataset_id", "train_seed", "test_seed"].iter().enumerate() {
            expect_column(header, col, name)?;
        }
        Ok(SgdInstance {
            id: row[0].clone(),
            dataset: DatasetId::from_field(&row[1])?,
            train_seed: parse_field(row, 2, "train_seed")?,
            test_seed: parse_field(row, 3, "test_seed")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdParams {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    /// Mini-batch updates per control step.
    pub updates_per_step: usize,
    pub batch_size: usize,
    /// Discount of the running statistics.
    pub discount: f64,
    /// Size of the fixed probe batch, taken from the front of the validation split.
    pub probe_size: usize,
    pub classes: usize,
    pub input_dim: usize,
    pub train_size: usize,
    pub validation_size: usize,
    /// Per-coordinate noise of the synthetic blobs around standard-normal centers.
    pub noise_std: f64,
}

impl Default for SgdParams {
    fn default() -> Self {
        SgdParams {
            hidden_layers: vec![16, 16],
            activation: Activation::Relu,
            updates_per_step: 10,
            batch_size: 64,
            discount: 0.9,
            probe_size: 64,
            classes: 10,
            input_dim: 64,
            train_size: 1024,
            validation_size: 256,
            noise_std: 2.0,
        }
    }
}

impl SgdParams {
    fn blob_spec(&self) -> BlobSpec {
        BlobSpec {
            classes: self.classes,
            input_dim: self.input_dim,
            train_size: self.train_size,
            validation_size: self.validation_size,
            noise_std: self.noise_std,
        }
    }
}

/// Exponentially discounted mean and standard deviation, both starting at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountedStat {
    pub discount: f64,
    pub mean: f64,
    pub variance: f64,
}

impl DiscountedStat {
    pub fn new(discount: f64) -> Self {
        DiscountedStat {
            discount,
            mean: 0.0,
            variance: 0.0,
        }
    }

    pub fn update(&mut self, x: f64) {
        let delta = x - self.mean;
        self.mean += (1.0 - self.discount) * delta;
        self.variance = self.discount * (self.variance + (1.0 - self.discount) * delta * delta);
    }

    pub fn uncertainty(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Everything that changes during an episode.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub network: Mlp,
    pub adam: Adam,
    pub loss_variance_stat: DiscountedStat,
    pub prediction_change_stat: DiscountedStat,
    pub previous_batch_predictions: Vec<f64>,
    pub learning_rate: f64,
    pub training_loss: f64,
    pub validation_loss: f64,
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Mean squared distance of the rows of `diff` from their mean row.
fn row_variance(diff: &[f64], k: usize) -> f64 {
    let n = diff.len() / k;
    let mut centroid = vec![0.0; k];
    for row in diff.chunks(k) {
        centroid.iter_mut().zip(row).for_each(|(c, v)| *c += v / n as f64);
    }
    diff.chunks(k)
        .map(|row| row.iter().zip(&centroid).map(|(v, c)| (v - c).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n as f64
}

struct Episode {
    dataset: Arc<Dataset>,
    state: TrainerState,
    order: Vec<usize>,
    cursor: usize,
    batch_rng: Rng,
}

impl Episode {
    fn probe(&self, size: usize) -> Batch<'_> {
        let d = self.dataset.input_dim;
        Batch {
            features: &self.dataset.validation.features[..size * d],
            labels: &self.dataset.validation.labels[..size],
        }
    }

    fn validation(&self) -> Batch<'_> {
        Batch {
            features: &self.dataset.validation.features,
            labels: &self.dataset.validation.labels,
        }
    }

    /// Row indices of the next mini-batch; the order is reshuffled after each epoch.
    fn next_indices(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.batch_rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

pub struct SgdBenchmark {
    params: SgdParams,
    idx_cache: Mutex<HashMap<DatasetId, Arc<Dataset>>>,
    episode: Option<Episode>,
}

impl SgdBenchmark {
    fn dataset(&self, instance: &SgdInstance) -> Result<Arc<Dataset>> {
        let p = &self.params;
        match &instance.dataset {
            DatasetId::SyntheticBlobs => {
                let mut rng = rng_for(instance.test_seed, "data", 0);
                Ok(Arc::new(synthetic_blobs(&p.blob_spec(), &mut rng)))
            }
            DatasetId::IdxFile { images, labels } => {
                let mut cache = self.idx_cache.lock().expect("cache lock");
                if let Some(ds) = cache.get(&instance.dataset) {
                    return Ok(ds.clone());
                }
                let ds = dataset_from_idx(&read_idx(images)?, &read_idx(labels)?, p.train_size, p.validation_size)?;
                let ds = Arc::new(ds);
                cache.insert(instance.dataset.clone(), ds.clone());
                Ok(ds)
            }
        }
    }

    pub fn trainer(&self) -> Option<&TrainerState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    fn observe(&self) -> Observation {
        let s = &self.episode.as_ref().expect("episode started").state;
        vec![
            s.prediction_change_stat.mean,
            s.prediction_change_stat.uncertainty(),
            s.loss_variance_stat.mean,
            s.loss_variance_stat.uncertainty(),
            s.learning_rate,
            s.training_loss,
            s.validation_loss,
        ]
    }
}

impl Benchmark for SgdBenchmark {
    const ID: BenchmarkId = BenchmarkId::Sgd;
    const DEFAULT_CUTOFF: usize = 100;
    const REWARD_QUALITY: u8 = 2;

    type Instance = SgdInstance;
    type Params = SgdParams;

    fn validate_params(p: &SgdParams, _cutoff: usize) -> Result<()> {
        let positive = [
            ("updates_per_step", p.updates_per_step),
            ("batch_size", p.batch_size),
            ("probe_size", p.probe_size),
            ("input_dim", p.input_dim),
            ("train_size", p.train_size),
            ("validation_size", p.validation_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("benchmark_params.{name}"), "must be positive"));
            }
        }
        if p.hidden_layers.contains(&0) {
            return Err(Error::config("benchmark_params.hidden_layers", "widths must be positive"));
        }
        if p.classes < 2 {
            return Err(Error::config("benchmark_params.classes", "must be at least 2"));
        }
        if !(p.discount >= 0.0 && p.discount < 1.0) {
            return Err(Error::config("benchmark_params.discount", "must lie in [0, 1)"));
        }
        if p.probe_size > p.validation_size {
            return Err(Error::config("benchmark_params.probe_size", "must not exceed validation_size"));
        }
        if !(p.noise_std > 0.0 && p.noise_std.is_finite()) {
            return Err(Error::config("benchmark_params.noise_std", "must be positive"));
        }
        Ok(())
    }

    fn spaces(_params: &SgdParams, _cutoff: usize) -> (SpaceSpec, SpaceSpec) {
        let mut bounds = vec![Interval::non_negative(); 4];
        bounds.push(Interval::new(0.0, 1.0));
        bounds.extend([Interval::new(0.0, UNBOUNDED); 2]);
        (
            SpaceSpec::continuous(vec![Interval::new(0.0, MAX_ACTION)]),
            SpaceSpec::continuous(bounds),
        )
    }

    fn generate_instances(_params: &SgdParams, _cutoff: usize, split: Split, count: usize, rng: &mut Rng) -> Vec<SgdInstance> {
        let pool = match split {
            Split::Train => 0..SEED_POOL_BOUNDARY,
            Split::Test => SEED_POOL_BOUNDARY..2 * SEED_POOL_BOUNDARY,
        };
        (0..count)
            .map(|i| SgdInstance {
                id: format!("{}-{i:03}", split.as_str()),
                dataset: DatasetId::SyntheticBlobs,
                train_seed: rng.random_range(pool.clone()),
                test_seed: rng.random_range(pool.clone()),
            })
            .collect()
    }

    fn build(params: SgdParams, _cutoff: usize) -> Result<Self> {
        Ok(SgdBenchmark {
            params,
            idx_cache: Mutex::new(HashMap::new()),
            episode: None,
        })
    }

    fn check_instance(&self, instance: &SgdInstance) -> Result<()> {
        if let DatasetId::IdxFile { .. } = instance.dataset {
            let ds = self.dataset(instance).map_err(|e| e.context(format!("instance {}", instance.id)))?;
            if ds.validation.len() < self.params.probe_size {
                return Err(Error::config("benchmark_params.probe_size", "exceeds the IDX validation split"));
            }
        }
        Ok(())
    }

    fn begin(&mut self, instance: &SgdInstance, _ctx: EpisodeContext) -> Observation {
        // IDX datasets were loaded into the cache by check_instance
        let dataset = self.dataset(instance).expect("dataset checked at construction");
        let spec = NetworkSpec {
            input_dim: dataset.input_dim,
            hidden_layers: self.params.hidden_layers.clone(),
            output_classes: dataset.classes,
            activation: self.params.activation,
        };
        let network = Mlp::init(spec, &mut rng_for(instance.train_seed, "init", 0));
        let adam = Adam::new(network.parameters.len());
        let mut episode = Episode {
            order: (0..dataset.train.len()).collect(),
            cursor: dataset.train.len(),
            batch_rng: rng_for(instance.train_seed, "batches", 0),
            state: TrainerState {
                network,
                adam,
                loss_variance_stat: DiscountedStat::new(self.params.discount),
                prediction_change_stat: DiscountedStat::new(self.params.discount),
                previous_batch_predictions: Vec::new(),
                learning_rate: 0.0,
                training_loss: 0.0,
                validation_loss: 0.0,
            },
            dataset,
        };
        let train = Batch {
            features: &episode.dataset.train.features,
            labels: &episode.dataset.train.labels,
        };
        let net = &episode.state.network;
        let training_loss = net.mean_loss(&train).expect("standardized features are finite");
        let validation_loss = net.mean_loss(&episode.validation()).expect("standardized features are finite");
        let probe = net.probabilities(&episode.probe(self.params.probe_size)).expect("probe batch");
        episode.state.training_loss = training_loss;
        episode.state.validation_loss = validation_loss;
        episode.state.previous_batch_predictions = probe;
        self.episode = Some(episode);
        self.observe()
    }

    fn advance(&mut self, action: &Action, _step: usize) -> Result<Transition> {
        let a = action
            .as_scalar()
            .ok_or_else(|| Error::Domain(format!("sgd expects a scalar action, got {action:?}")))?;
        if !(0.0..=MAX_ACTION).contains(&a) {
            return Err(Error::Domain(format!("action {a} outside [0, 10]")));
        }
        let lr = 10f64.powf(-a);
        let p = self.params.clone();
        let ep = self.episode.as_mut().expect("episode started");
        let d = ep.dataset.input_dim;
        let mut batch_x = Vec::with_capacity(p.batch_size * d);
        let mut batch_y = Vec::with_capacity(p.batch_size);
        let mut loss_sum = 0.0;
        let mut variance_sum = 0.0;
        for _ in 0..p.updates_per_step {
            let rows = ep.next_indices(p.batch_size);
            batch_x.clear();
            batch_y.clear();
            for &r in &rows {
                batch_x.extend_from_slice(&ep.dataset.train.features[r * d..(r + 1) * d]);
                batch_y.push(ep.dataset.train.labels[r]);
            }
            let batch = Batch {
                features: &batch_x,
                labels: &batch_y,
            };
            let (losses, grads) = ep.state.network.forward_backward(&batch)?;
            loss_sum += losses.iter().sum::<f64>() / losses.len() as f64;
            variance_sum += population_variance(&losses);
            ep.state.adam.update(&mut ep.state.network.parameters, &grads, lr)?;
        }
        let k = p.updates_per_step as f64;
        let probe = ep.state.network.probabilities(&ep.probe(p.probe_size))?;
        let change: Vec<f64> = probe
            .iter()
            .zip(&ep.state.previous_batch_predictions)
            .map(|(now, before)| now - before)
            .collect();
        let change_variance = row_variance(&change, ep.dataset.classes);
        let validation_loss = ep.state.network.mean_loss(&ep.validation())?;

        let s = &mut ep.state;
        s.previous_batch_predictions = probe;
        s.prediction_change_stat.update(change_variance);
        s.loss_variance_stat.update(variance_sum / k);
        s.learning_rate = lr;
        s.training_loss = loss_sum / k;
        s.validation_loss = validation_loss;
        let stats = [
            s.prediction_change_stat.mean,
            s.prediction_change_stat.variance,
            s.loss_variance_stat.mean,
            s.loss_variance_stat.variance,
            s.training_loss,
            s.validation_loss,
        ];
        if stats.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("training diverged at learning rate {lr:e}")));
        }

        let mut info = BTreeMap::new();
        info.insert("validation_loss".to_string(), validation_loss);
        info.insert("learning_rate".to_string(), lr);
        Ok(Transition {
            observation: self.observe(),
            reward: -validation_loss,
            terminated: false,
            info,
        })
    }

    fn reference_action(&self, _kind: ReferenceKind) -> Option<Action> {
        None
    }
}
