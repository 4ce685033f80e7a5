//! Feature-based comparison pipelines: filter-bank covariance features,
//! handcrafted per-channel statistics and a logistic-regression classifier.
//!
//! Handcrafted schema, 22 values per channel in this order: mean, std, rms,
//! kurtosis (excess), skewness, q10, q25, q75, q90, peak-to-peak, log power
//! in 0–2, 2–4, 4–8, 8–13, 13–18, 18–24, 24–30, 30–49 Hz, Hjorth mobility,
//! Hjorth complexity, line length, zero crossings. Band-power ratios,
//! entropies and fractal measures are not computed.

use crate::error::{DsfError, Result};
use crate::linalg::{matrix_exp_eig, matrix_log_eig, oas_shrink, sample_covariance, vec_upper, Matrix};
use crate::nn::optim::adamw_step;
use crate::nn::{he_uniform_init, softmax, softmax_xent, Grads, Layer, Mode, ParamStore, Tensor, TrainConfig};
use crate::par;
use crate::rng::rng_from_seed;
use crate::spectral::{filterbank, periodogram};

pub const RIEMANN_BAND_EDGES: [f64; 8] = [0.1, 1.5, 4.0, 8.0, 15.0, 26.0, 35.0, 49.0];
pub const HANDCRAFTED_BAND_EDGES: [f64; 9] = [0.0, 2.0, 4.0, 8.0, 13.0, 18.0, 24.0, 30.0, 49.0];
pub const HANDCRAFTED_PER_CHANNEL: usize = 22;

const HANDCRAFTED_NAMES: [&str; HANDCRAFTED_PER_CHANNEL] = [
    "mean", "std", "rms", "kurtosis", "skewness", "q10", "q25", "q75", "q90", "ptp", "logpow_0_2", "logpow_2_4",
    "logpow_4_8", "logpow_8_13", "logpow_13_18", "logpow_18_24", "logpow_24_30", "logpow_30_49", "hjorth_mobility",
    "hjorth_complexity", "line_length", "zero_crossings",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSchema {
    Riemann,
    Handcrafted,
}

impl FeatureSchema {
    pub fn len(self, c: usize) -> usize {
        match self {
            FeatureSchema::Riemann => (RIEMANN_BAND_EDGES.len() - 1) * c * (c + 1) / 2,
            FeatureSchema::Handcrafted => HANDCRAFTED_PER_CHANNEL * c,
        }
    }

    /// Column names, used as the CSV header.
    pub fn names(self, c: usize) -> Vec<String> {
        match self {
            FeatureSchema::Riemann => {
                let mut out = Vec::with_capacity(self.len(c));
                for b in 0..RIEMANN_BAND_EDGES.len() - 1 {
                    for i in 0..c {
                        for j in i..c {
                            out.push(format!("band{b}_c{i}_c{j}"));
                        }
                    }
                }
                out
            }
            FeatureSchema::Handcrafted => {
                (0..c).flat_map(|i| HANDCRAFTED_NAMES.iter().map(move |n| format!("ch{i}_{n}"))).collect()
            }
        }
    }

    pub fn extract(self, x: &Matrix, sfreq: f64) -> Result<Vec<f64>> {
        match self {
            FeatureSchema::Riemann => riemann_features(x, sfreq),
            FeatureSchema::Handcrafted => Ok(handcrafted_features(x, sfreq)),
        }
    }
}

/// Brick-wall band decomposition; see [`crate::spectral::filterbank`].
pub fn bandpass_filterbank(x: &Matrix, edges: &[f64], sfreq: f64) -> Result<Vec<Matrix>> {
    filterbank(x, edges, sfreq)
}

/// Per band: `vec_upper(logm(OAS(cov)))`, concatenated band by band.
pub fn riemann_features(x: &Matrix, sfreq: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(FeatureSchema::Riemann.len(x.rows()));
    for band in bandpass_filterbank(x, &RIEMANN_BAND_EDGES, sfreq)? {
        let cov = sample_covariance(&band)?;
        let shrunk = oas_shrink(&cov, band.cols())?;
        out.extend(vec_upper(&matrix_log_eig(&shrunk.matrix)?));
    }
    Ok(out)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

fn zero_crossings(x: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in x {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = v;
    }
    count
}

/// Handcrafted statistics of one channel, in schema order. Undefined values are NaN.
pub fn channel_features(x: &[f64], sfreq: f64) -> [f64; HANDCRAFTED_PER_CHANNEL] {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = variance(x);
    let std = var.sqrt();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let skew = m3 / var.powf(1.5);
    let kurt = m4 / (var * var) - 3.0;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ptp = sorted[sorted.len() - 1] - sorted[0];

    let (freqs, power) = periodogram(x, sfreq);
    let df = sfreq / x.len() as f64;
    let mut bands = [0.0; 8];
    for (b, out) in bands.iter_mut().enumerate() {
        let (lo, hi) = (HANDCRAFTED_BAND_EDGES[b], HANDCRAFTED_BAND_EDGES[b + 1]);
        let p: f64 = freqs.iter().zip(&power).filter(|(&f, _)| f >= lo && f < hi).map(|(_, p)| p * df).sum();
        *out = p.ln();
    }

    let dx = diff(x);
    let ddx = diff(&dx);
    let mobility = (variance(&dx) / var).sqrt();
    let complexity = (variance(&ddx) / variance(&dx)).sqrt() / mobility;
    let line_length: f64 = dx.iter().map(|d| d.abs()).sum();

    let mut out = [0.0; HANDCRAFTED_PER_CHANNEL];
    out[..10].copy_from_slice(&[
        mean,
        std,
        rms,
        kurt,
        skew,
        quantile(&sorted, 0.1),
        quantile(&sorted, 0.25),
        quantile(&sorted, 0.75),
        quantile(&sorted, 0.9),
        ptp,
    ]);
    out[10..18].copy_from_slice(&bands);
    out[18..].copy_from_slice(&[mobility, complexity, line_length, zero_crossings(x) as f64]);
    out
}

/// Per-channel handcrafted statistics concatenated over channels.
pub fn handcrafted_features(x: &Matrix, sfreq: f64) -> Vec<f64> {
    (0..x.rows()).flat_map(|i| channel_features(x.row(i), sfreq)).collect()
}

/// Feature-wise means of finite entries, substituted for non-finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputer {
    pub means: Vec<f64>,
}

impl Imputer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let d = check_rows(rows)?;
        let means = (0..d)
            .map(|j| {
                let (sum, n) = rows.iter().map(|r| r[j]).filter(|v| v.is_finite()).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                if n == 0 {
                    0.0
                } else {
                    sum / n as f64
                }
            })
            .collect();
        Ok(Self { means })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.means).map(|(&v, &m)| if v.is_finite() { v } else { m }).collect()
    }
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let d = rows.first().map(Vec::len).ok_or_else(|| DsfError::InvalidInput("no feature rows".into()))?;
    if rows.iter().any(|r| r.len() != d) {
        return Err(DsfError::Shape("feature rows differ in length".into()));
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Column means and population standard deviations; zero deviations become 1.
pub fn zscore_fit(rows: &[Vec<f64>]) -> Result<Standardizer> {
    let d = check_rows(rows)?;
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let std = (0..d)
        .map(|j| {
            let s = (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    Ok(Standardizer { mean, std })
}

pub fn zscore_apply(row: &[f64], z: &Standardizer) -> Vec<f64> {
    row.iter().zip(z.mean.iter().zip(&z.std)).map(|(v, (m, s))| (v - m) / s).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegConfig {
    pub lr: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Weight the loss by inverse class frequency.
    pub balanced: bool,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { lr: 0.05, epochs: 300, weight_decay: 1e-3, balanced: false, seed: 0 }
    }
}

/// Multinomial logistic regression: one dense layer trained full-batch with AdamW.
#[derive(Debug, Clone)]
pub struct LogReg {
    pub params: ParamStore,
    layer: Layer,
    pub n_classes: usize,
}

impl LogReg {
    pub fn fit(features: &[Vec<f64>], labels: &[usize], n_classes: usize, cfg: &LogRegConfig) -> Result<Self> {
        let d = check_rows(features)?;
        if labels.len() != features.len() {
            return Err(DsfError::Shape(format!("{} labels for {} rows", labels.len(), features.len())));
        }
        let mut ps = ParamStore::new();
        let mut rng = rng_from_seed(cfg.seed);
        let w = ps.add("logreg.weight", he_uniform_init(&[n_classes, d], d, &mut rng))?;
        let b = ps.add("logreg.bias", Tensor::zeros(&[n_classes]))?;
        ps.set_decay(b, false);
        let layer = Layer::Dense { weight: w, bias: b, in_dim: d, out_dim: n_classes };
        let weights = if cfg.balanced { class_weights(labels, n_classes) } else { vec![1.0; n_classes] };
        let inputs: Vec<Tensor> = features.iter().map(|r| Tensor::from_vec(&[d], r.clone())).collect::<Result<_>>()?;
        let train = TrainConfig { lr0: cfg.lr, weight_decay: cfg.weight_decay, ..Default::default() };
        for step in 1..=cfg.epochs {
            let mut logits = Vec::with_capacity(inputs.len() * n_classes);
            let mut caches = Vec::with_capacity(inputs.len());
            for x in &inputs {
                let (y, cache) = layer.forward(&ps, x, &mut Mode::Eval)?;
                logits.extend_from_slice(y.data());
                caches.push(cache);
            }
            let (_, dlogits) = softmax_xent(&Tensor::from_vec(&[inputs.len(), n_classes], logits)?, labels, &weights)?;
            let mut grads: Grads = ps.grads_like();
            for (i, cache) in caches.iter().enumerate() {
                let dy = Tensor::from_vec(&[n_classes], dlogits.data()[i * n_classes..(i + 1) * n_classes].to_vec())?;
                layer.backward(&ps, cache, &dy, &mut grads)?;
            }
            ps.set_grads(&grads);
            adamw_step(&mut ps, cfg.lr, &train, step as u64);
        }
        Ok(Self { params: ps, layer, n_classes })
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        let (y, _) = self.layer.forward(&self.params, &Tensor::from_vec(&[row.len()], row.to_vec())?, &mut Mode::Eval)?;
        Ok(softmax(&y.reshape(&[1, self.n_classes])?)?.into_vec())
    }
}

/// Inverse-frequency class weights `N / (L·count_ℓ)`; absent classes get weight 0.
pub fn class_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        counts[y] += 1;
    }
    let n = labels.len() as f64;
    counts.iter().map(|&c| if c == 0 { 0.0 } else { n / (n_classes as f64 * c as f64) }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Elementwise mean of tangent vectors: for `vec_upper(logm(·))` features
    /// this is the vectorized log of the log-Euclidean mean.
    LogmMean,
    Median,
    ProbMean,
}

/// Combines per-window vectors of one recording into a single vector.
pub fn aggregate_recording(items: &[Vec<f64>], method: Aggregation) -> Result<Vec<f64>> {
    let d = check_rows(items).map_err(|_| DsfError::InvalidInput("cannot aggregate an empty recording".into()))?;
    let n = items.len() as f64;
    Ok(match method {
        Aggregation::LogmMean | Aggregation::ProbMean => (0..d).map(|j| items.iter().map(|r| r[j]).sum::<f64>() / n).collect(),
        Aggregation::Median => (0..d)
            .map(|j| {
                let mut col: Vec<f64> = items.iter().map(|r| r[j]).collect();
                col.sort_by(f64::total_cmp);
                let m = col.len() / 2;
                if col.len() % 2 == 1 {
                    col[m]
                } else {
                    0.5 * (col[m - 1] + col[m])
                }
            })
            .collect(),
    })
}

/// Log-Euclidean geometric mean `expm(mean(logm(S_i)))`.
pub fn log_euclidean_mean(mats: &[Matrix]) -> Result<Matrix> {
    let first = mats.first().ok_or_else(|| DsfError::InvalidInput("cannot average zero matrices".into()))?;
    let mut acc = Matrix::zeros(first.rows(), first.cols());
    for m in mats {
        acc = acc.add(&matrix_log_eig(m)?)?;
    }
    matrix_exp_eig(&acc.scale(1.0 / mats.len() as f64))
}

/// Window features of every window, in order.
pub fn window_features(windows: &[Matrix], schema: FeatureSchema, sfreq: f64) -> Result<Vec<Vec<f64>>> {
    par::map_slice(windows, |_, x| schema.extract(x, sfreq)).into_iter().collect()
}

/// CSV text with the schema names as header.
pub fn features_csv(names: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = names.join(",");
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
