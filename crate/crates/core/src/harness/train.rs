//! Training loops for the neural models and the feature baselines.

use rand::seq::SliceRandom;

use super::config::Denoise;
use super::metrics::recording_class;
use crate::baselines::{aggregate_recording, class_weights, window_features, zscore_apply, zscore_fit, Aggregation, FeatureSchema, Imputer, LogReg, LogRegConfig, Standardizer};
use crate::corruption::{augment_batch, CorruptionSpec};
use crate::error::{DsfError, Result};
use crate::linalg::Matrix;
use crate::model::{Model, ModelKind, ModelSpec};
use crate::nn::{adamw_step, cosine_lr, softmax, Grads, Mode, ParamStore, Tensor, TrainConfig};
use crate::par;
use crate::rng::{derive_path, rng_from_seed};
use crate::synth::Recording;

/// Shapes of the windows a model is trained on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataShape {
    pub n_channels: usize,
    pub n_times: usize,
    pub sfreq: f64,
    pub n_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,valid_loss\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.lr, e.train_loss, e.valid_loss));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum Trained {
    Neural { model: Model, params: ParamStore },
    Features { schema: FeatureSchema, sfreq: f64, imputer: Imputer, zscore: Standardizer, clf: LogReg },
}

fn aggregation(schema: FeatureSchema) -> Aggregation {
    match schema {
        FeatureSchema::Riemann => Aggregation::LogmMean,
        FeatureSchema::Handcrafted => Aggregation::Median,
    }
}

fn schema_of(kind: ModelKind) -> Option<FeatureSchema> {
    match kind {
        ModelKind::Riemann => Some(FeatureSchema::Riemann),
        ModelKind::Handcrafted => Some(FeatureSchema::Handcrafted),
        _ => None,
    }
}

impl Trained {
    /// Class probabilities for a whole recording.
    pub fn recording_proba(&self, rec: &Recording) -> Result<Vec<f64>> {
        if rec.windows.is_empty() {
            return Err(DsfError::InvalidInput(format!("recording {} has no windows", rec.id)));
        }
        match self {
            Trained::Neural { model, params } => {
                let probs = window_probs(model, params, &rec.windows)?;
                aggregate_recording(&probs, Aggregation::ProbMean)
            }
            Trained::Features { schema, sfreq, imputer, zscore, clf } => {
                let feats = window_features(&rec.windows, *schema, *sfreq)?;
                let agg = aggregate_recording(&feats, aggregation(*schema))?;
                clf.predict_proba(&zscore_apply(&imputer.apply(&agg), zscore))
            }
        }
    }

    /// Predicted class for a recording; ties go to the lowest class index.
    pub fn recording_predict(&self, rec: &Recording) -> Result<usize> {
        match self {
            Trained::Neural { model, params } => recording_class(&window_probs(model, params, &rec.windows)?),
            Trained::Features { .. } => recording_class(&[self.recording_proba(rec)?]),
        }
    }

    /// Everything needed to restore the classifier, in one parameter store.
    pub fn to_store(&self) -> Result<ParamStore> {
        match self {
            Trained::Neural { params, .. } => Ok(params.clone()),
            Trained::Features { imputer, zscore, clf, .. } => {
                let mut ps = clf.params.clone();
                let d = imputer.means.len();
                ps.add("impute.mean", Tensor::from_vec(&[d], imputer.means.clone())?)?;
                ps.add("zscore.mean", Tensor::from_vec(&[d], zscore.mean.clone())?)?;
                ps.add("zscore.std", Tensor::from_vec(&[d], zscore.std.clone())?)?;
                Ok(ps)
            }
        }
    }
}

/// Eval-mode probabilities for each window.
pub fn window_probs(model: &Model, ps: &ParamStore, windows: &[Matrix]) -> Result<Vec<Vec<f64>>> {
    par::map_slice(windows, |_, x| model.predict_proba(ps, x)).into_iter().collect()
}

fn flatten<'a>(recs: &[&'a Recording]) -> (Vec<&'a Matrix>, Vec<usize>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in recs {
        for w in &r.windows {
            xs.push(w);
            ys.push(r.label);
        }
    }
    (xs, ys)
}

/// Weighted cross-entropy and its logit gradient for one example, scaled by `1/n`.
fn example_loss(logits: &[f64], y: usize, w: f64, n: f64) -> Result<(f64, Vec<f64>)> {
    let l = logits.len();
    let p = softmax(&Tensor::from_vec(&[1, l], logits.to_vec())?)?.into_vec();
    let loss = -w * p[y].max(f64::MIN_POSITIVE).ln() / n;
    let grad = (0..l).map(|k| w * (p[k] - if k == y { 1.0 } else { 0.0 }) / n).collect();
    Ok((loss, grad))
}

fn valid_loss(model: &Model, ps: &ParamStore, xs: &[&Matrix], ys: &[usize], weights: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let losses = par::map_slice(xs, |i, x| -> Result<f64> {
        let (logits, _) = model.forward(ps, x, &mut Mode::Eval)?;
        Ok(example_loss(&logits, ys[i], weights[ys[i]], n)?.0)
    });
    losses.into_iter().sum()
}

/// Trains a neural model with AdamW, cosine annealing and early stopping on validation loss.
///
/// Returns the parameters of the epoch with the lowest validation loss.
pub fn train_neural(
    spec: &ModelSpec,
    shape: DataShape,
    train: &[&Recording],
    valid: &[&Recording],
    cfg: &TrainConfig,
    augment: Option<&CorruptionSpec>,
) -> Result<(Model, ParamStore, TrainLog)> {
    cfg.validate()?;
    let (xs, ys) = flatten(train);
    let (vxs, vys) = flatten(valid);
    if xs.is_empty() || vxs.is_empty() {
        return Err(DsfError::InvalidInput("training needs non-empty train and valid splits".into()));
    }
    let mut spec = spec.clone();
    spec.shallow.n_classes = shape.n_classes;
    spec.shallow.dropout_rate = cfg.dropout_rate;
    let (model, mut ps) = Model::build(&spec, shape.n_channels, shape.n_times, &mut rng_from_seed(derive_path(cfg.seed, &[0])))?;
    let weights = class_weights(&ys, shape.n_classes);
    let mut best = (f64::INFINITY, ps.clone(), 0usize);
    let mut since_best = 0;
    let mut log = TrainLog::default();
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 0..cfg.max_epochs {
        let lr = cosine_lr(epoch, cfg.t_max, cfg.lr0)?;
        order.shuffle(&mut rng_from_seed(derive_path(cfg.seed, &[1, epoch as u64])));
        let mut train_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let batch_seed = derive_path(cfg.seed, &[2, epoch as u64, b as u64]);
            let inputs: Vec<Matrix> = batch.iter().map(|&i| xs[i].clone()).collect();
            let inputs = match augment {
                Some(spec) => augment_batch(&inputs, spec, batch_seed)?,
                None => inputs,
            };
            let n = batch.len() as f64;
            let per_example = par::map_slice(&inputs, |k, x| -> Result<(f64, Grads)> {
                let y = ys[batch[k]];
                let mut drop_rng = rng_from_seed(derive_seed_pair(batch_seed, k));
                let (logits, cache) = model.forward(&ps, x, &mut Mode::Train(&mut drop_rng))?;
                let (loss, dlogits) = example_loss(&logits, y, weights[y], n)?;
                let mut g = ps.grads_like();
                model.backward(&ps, &cache, &dlogits, &mut g)?;
                Ok((loss, g))
            });
            let mut grads = ps.grads_like();
            for r in per_example {
                let (loss, g) = r?;
                train_loss += loss * n;
                grads.add_assign(&g);
            }
            if !grads.is_finite() {
                return Err(DsfError::InvalidInput(format!("non-finite gradient at epoch {epoch}")));
            }
            ps.set_grads(&grads);
            step += 1;
            adamw_step(&mut ps, lr, cfg, step);
            model.post_step(&mut ps);
        }
        let vl = valid_loss(&model, &ps, &vxs, &vys, &weights)?;
        log.epochs.push(EpochLog { epoch, lr, train_loss: train_loss / xs.len() as f64, valid_loss: vl });
        if vl < best.0 {
            best = (vl, ps.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    log.best_epoch = best.2;
    Ok((model, best.1, log))
}

fn derive_seed_pair(seed: u64, k: usize) -> u64 {
    derive_path(seed, &[u64::MAX, k as u64])
}

/// Fits the feature pipeline: window features, recording aggregation,
/// imputation, standardization and logistic regression.
pub fn train_features(
    schema: FeatureSchema,
    shape: DataShape,
    train: &[&Recording],
    cfg: &LogRegConfig,
    augment: Option<(&CorruptionSpec, u64)>,
) -> Result<Trained> {
    if train.is_empty() {
        return Err(DsfError::InvalidInput("training needs a non-empty train split".into()));
    }
    let rows = train
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let windows = match augment {
                Some((spec, seed)) => augment_batch(&r.windows, spec, derive_seed_pair(seed, i))?,
                None => r.windows.clone(),
            };
            aggregate_recording(&window_features(&windows, schema, shape.sfreq)?, aggregation(schema))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = train.iter().map(|r| r.label).collect();
    let imputer = Imputer::fit(&rows)?;
    let imputed: Vec<Vec<f64>> = rows.iter().map(|r| imputer.apply(r)).collect();
    let zscore = zscore_fit(&imputed)?;
    let standardized: Vec<Vec<f64>> = imputed.iter().map(|r| zscore_apply(r, &zscore)).collect();
    let clf = LogReg::fit(&standardized, &labels, shape.n_classes, cfg)?;
    Ok(Trained::Features { schema, sfreq: shape.sfreq, imputer, zscore, clf })
}

/// Trains any model kind. `seed` overrides the seeds inside `cfg` and `logreg`.
#[allow(clippy::too_many_arguments)]
pub fn train_model(
    spec: &ModelSpec,
    denoise: Denoise,
    shape: DataShape,
    train: &[&Recording],
    valid: &[&Recording],
    cfg: &TrainConfig,
    logreg: &LogRegConfig,
    augment: &CorruptionSpec,
    seed: u64,
) -> Result<(Trained, TrainLog)> {
    let aug = (denoise == Denoise::Augmentation).then_some(augment);
    match schema_of(spec.kind) {
        Some(schema) => {
            let lr = LogRegConfig { seed, ..logreg.clone() };
            let t = train_features(schema, shape, train, &lr, aug.map(|a| (a, seed)))?;
            Ok((t, TrainLog::default()))
        }
        None => {
            let tc = TrainConfig { seed, ..cfg.clone() };
            let (model, params, log) = train_neural(spec, shape, train, valid, &tc, aug)?;
            Ok((Trained::Neural { model, params }, log))
        }
    }
}
