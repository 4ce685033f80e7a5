//! Synthetic multichannel recordings with spatially mixed oscillatory sources.
//!
//! Three sources are mixed into `C` sensors by a fixed matrix with unit-norm
//! rows: a 10 Hz source boosted in class 0, a 20 Hz source boosted in class 1
//! and a low-frequency distractor. Each channel also gets independent 1/f-like
//! background activity and white sensor noise. Values are in μV.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{DsfError, Result};
use crate::io::atomic_write;
use crate::linalg::Matrix;
use crate::nn::params::Cursor;
use crate::par;
use crate::rng::{derive_path, derive_seed, normal, rng_from_seed, standard_normal, uniform, DetRng};

pub const N_SOURCES: usize = 3;
const DATASET_MAGIC: &[u8; 4] = b"DSFD";
const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub n_times: usize,
    pub sfreq: f64,
    pub n_recordings: usize,
    pub windows_per_recording: usize,
    /// Share of class-1 recordings.
    pub class1_fraction: f64,
    pub mixing_seed: u64,
    pub source_freqs: [f64; 2],
    /// Amplitude of the class-matching source.
    pub strong_uv: f64,
    /// Amplitude of the other class source.
    pub weak_uv: f64,
    pub distractor_uv: f64,
    pub background_uv: f64,
    pub sensor_noise_uv: f64,
    /// Sources observed directly on the first channels, no mixing.
    pub unmixed: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_channels: 6,
            n_times: 600,
            sfreq: 100.0,
            n_recordings: 60,
            windows_per_recording: 20,
            class1_fraction: 0.5,
            mixing_seed: 0,
            source_freqs: [10.0, 20.0],
            strong_uv: 25.0,
            weak_uv: 10.0,
            distractor_uv: 20.0,
            background_uv: 8.0,
            sensor_noise_uv: 2.0,
            unmixed: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels < 2 {
            return Err(DsfError::Config(format!("need at least 2 channels, got {}", self.n_channels)));
        }
        if self.unmixed && self.n_channels < N_SOURCES {
            return Err(DsfError::Config(format!("unmixed sources need at least {N_SOURCES} channels")));
        }
        if self.n_times < 128 {
            return Err(DsfError::Config(format!("need at least 128 samples per window, got {}", self.n_times)));
        }
        if self.sfreq <= 0.0 || self.source_freqs.iter().any(|&f| f <= 0.0 || f >= self.sfreq / 2.0) {
            return Err(DsfError::Config("source frequencies must lie below Nyquist".into()));
        }
        if self.n_recordings == 0 || self.windows_per_recording == 0 {
            return Err(DsfError::Config("need at least one recording and one window".into()));
        }
        if !(0.0..=1.0).contains(&self.class1_fraction) {
            return Err(DsfError::Config(format!("class1_fraction {} outside [0, 1]", self.class1_fraction)));
        }
        let amps = [self.strong_uv, self.weak_uv, self.distractor_uv, self.background_uv, self.sensor_noise_uv];
        if amps.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(DsfError::Config("amplitudes must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: u64,
    pub label: usize,
    pub windows: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_channels: usize,
    pub n_times: usize,
    pub sfreq: f64,
    pub recordings: Vec<Recording>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

/// Recording indices per split.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, tag: SplitTag) -> &[usize] {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::Valid => &self.valid,
            SplitTag::Test => &self.test,
        }
    }
}

impl Dataset {
    pub fn subset(&self, idx: &[usize]) -> Vec<&Recording> {
        idx.iter().map(|&i| &self.recordings[i]).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.recordings.iter().map(|r| r.label + 1).max().unwrap_or(0).max(2)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_times as u32).to_le_bytes());
        out.extend_from_slice(&self.sfreq.to_le_bytes());
        out.extend_from_slice(&(self.recordings.len() as u32).to_le_bytes());
        for rec in &self.recordings {
            out.extend_from_slice(&rec.id.to_le_bytes());
            out.push(rec.label as u8);
            out.extend_from_slice(&(rec.windows.len() as u32).to_le_bytes());
            for w in &rec.windows {
                for v in w.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        if cur.take(4)? != DATASET_MAGIC {
            return Err(DsfError::Format("not a dataset file".into()));
        }
        let version = cur.u32()?;
        if version != DATASET_VERSION {
            return Err(DsfError::Format(format!("unsupported dataset version {version}")));
        }
        let c = cur.u32()? as usize;
        let t = cur.u32()? as usize;
        let sfreq = cur.f64()?;
        let n = cur.u32()? as usize;
        let mut recordings = Vec::with_capacity(n);
        for _ in 0..n {
            let id = cur.u64()?;
            let label = cur.u8()? as usize;
            let n_windows = cur.u32()? as usize;
            let mut windows = Vec::with_capacity(n_windows);
            for _ in 0..n_windows {
                let data = (0..c * t).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
                windows.push(Matrix::from_vec(c, t, data)?);
            }
            recordings.push(Recording { id, label, windows });
        }
        if !cur.is_empty() {
            return Err(DsfError::Format("trailing bytes after last recording".into()));
        }
        Ok(Self { n_channels: c, n_times: t, sfreq, recordings })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Full-rank `C×K` mixing matrix with unit-norm rows drawn from `seed`.
pub fn mixing_matrix(c: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    loop {
        let mut a = Matrix::zeros(c, N_SOURCES);
        for i in 0..c {
            let row = a.row_mut(i);
            for v in row.iter_mut() {
                *v = standard_normal(&mut rng);
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter_mut().for_each(|v| *v /= norm);
        }
        let gram = a.transpose().matmul(&a).expect("square gram");
        if c < N_SOURCES || det3(&gram) > 1e-3 {
            return a;
        }
    }
}

fn det3(m: &Matrix) -> f64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)]) - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

fn unmixed_matrix(c: usize) -> Matrix {
    let mut a = Matrix::zeros(c, N_SOURCES);
    for k in 0..N_SOURCES {
        a[(k, k)] = 1.0;
    }
    a
}

fn generate_window(cfg: &SynthConfig, mix: &Matrix, label: usize, freqs: &[f64; 3], rng: &mut DetRng) -> Matrix {
    let (c, t) = (cfg.n_channels, cfg.n_times);
    let dt = 1.0 / cfg.sfreq;
    let amps = [
        if label == 0 { cfg.strong_uv } else { cfg.weak_uv },
        if label == 1 { cfg.strong_uv } else { cfg.weak_uv },
        cfg.distractor_uv,
    ];
    let mut sources = Matrix::zeros(N_SOURCES, t);
    for k in 0..N_SOURCES {
        let a = amps[k] * uniform(rng, 0.8, 1.2);
        let phase = uniform(rng, 0.0, 2.0 * PI);
        for (i, v) in sources.row_mut(k).iter_mut().enumerate() {
            *v = a * (2.0 * PI * freqs[k] * i as f64 * dt + phase).sin();
        }
    }
    let mut x = mix.matmul(&sources).expect("mixing shapes agree");
    // AR(1) background rescaled to the requested stationary std.
    let rho: f64 = 0.95;
    let innov = cfg.background_uv * (1.0 - rho * rho).sqrt();
    for i in 0..c {
        let mut acc = normal(rng, cfg.background_uv);
        for v in x.row_mut(i) {
            *v += acc + normal(rng, cfg.sensor_noise_uv);
            acc = rho * acc + normal(rng, innov);
        }
    }
    x
}

/// Deterministic dataset for `(cfg, seed)`; recording `i` draws from `derive_seed(seed, i)`.
pub fn generate_dataset(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mix = if cfg.unmixed { unmixed_matrix(cfg.n_channels) } else { mixing_matrix(cfg.n_channels, cfg.mixing_seed) };
    let n1 = (cfg.n_recordings as f64 * cfg.class1_fraction).round() as usize;
    let mut labels: Vec<usize> = (0..cfg.n_recordings).map(|i| usize::from(i < n1)).collect();
    labels.shuffle(&mut rng_from_seed(derive_seed(seed, u64::MAX)));
    let recordings = par::map_range(cfg.n_recordings, |r| {
        let label = labels[r];
        let mut rng = rng_from_seed(derive_seed(seed, r as u64));
        let freqs = [
            cfg.source_freqs[0] + uniform(&mut rng, -0.5, 0.5),
            cfg.source_freqs[1] + uniform(&mut rng, -0.5, 0.5),
            uniform(&mut rng, 3.0, 6.0),
        ];
        let windows = (0..cfg.windows_per_recording)
            .map(|w| {
                let mut wrng = rng_from_seed(derive_path(seed, &[r as u64, w as u64]));
                generate_window(cfg, &mix, label, &freqs, &mut wrng)
            })
            .collect();
        Recording { id: r as u64, label, windows }
    });
    Ok(Dataset { n_channels: cfg.n_channels, n_times: cfg.n_times, sfreq: cfg.sfreq, recordings })
}

/// Label-stratified, recording-wise split with the given train/valid/test fractions.
pub fn split_dataset(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DsfError::Argument(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let n_parts = fractions.iter().filter(|&&f| f > 0.0).count();
    let mut rng = rng_from_seed(seed);
    let mut splits = Splits::default();
    for class in 0..ds.n_classes() {
        let mut idx: Vec<usize> = (0..ds.recordings.len()).filter(|&i| ds.recordings[i].label == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < n_parts {
            return Err(DsfError::InvalidInput(format!(
                "class {class} has {} recordings, fewer than the {n_parts} non-empty splits",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let n_train = (fractions[0] * n).round() as usize;
        let n_valid = ((fractions[1] * n).round() as usize).min(idx.len() - n_train);
        splits.train.extend_from_slice(&idx[..n_train]);
        splits.valid.extend_from_slice(&idx[n_train..n_train + n_valid]);
        splits.test.extend_from_slice(&idx[n_train + n_valid..]);
    }
    splits.train.sort_unstable();
    splits.valid.sort_unstable();
    splits.test.sort_unstable();
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::periodogram;

    fn small_cfg() -> SynthConfig {
        SynthConfig { n_recordings: 20, windows_per_recording: 4, ..Default::default() }
    }

    fn band_power(x: &[f64], sfreq: f64, lo: f64, hi: f64) -> f64 {
        let (f, p) = periodogram(x, sfreq);
        f.iter().zip(&p).filter(|(&f, _)| f >= lo && f <= hi).map(|(_, p)| p).sum()
    }

    // Log ratio of alpha-like to beta-like band power over the given channels.
    fn contrast(rec: &Recording, sfreq: f64, channels: &[usize]) -> f64 {
        let (mut a, mut b) = (0.0, 0.0);
        for w in &rec.windows {
            for &i in channels {
                a += band_power(w.row(i), sfreq, 8.0, 12.0);
                b += band_power(w.row(i), sfreq, 18.0, 22.0);
            }
        }
        (a / b).ln()
    }

    fn oracle_accuracy(ds: &Dataset, channels: &[usize]) -> f64 {
        let hits = ds
            .recordings
            .iter()
            .filter(|r| usize::from(contrast(r, ds.sfreq, channels) < 0.0) == r.label)
            .count();
        hits as f64 / ds.recordings.len() as f64
    }

    #[test]
    fn deterministic_and_shaped() {
        let cfg = small_cfg();
        let a = generate_dataset(&cfg, 3).unwrap();
        assert_eq!(a, generate_dataset(&cfg, 3).unwrap());
        assert_ne!(a, generate_dataset(&cfg, 4).unwrap());
        assert_eq!(a.recordings.len(), 20);
        for r in &a.recordings {
            assert_eq!(r.windows.len(), 4);
            assert!(r.windows.iter().all(|w| w.rows() == 6 && w.cols() == 600 && w.is_finite()));
        }
        let ones = a.recordings.iter().filter(|r| r.label == 1).count();
        assert_eq!(ones, 10);
    }

    #[test]
    fn band_power_oracle_separates_classes() {
        let ds = generate_dataset(&SynthConfig::default(), 11).unwrap();
        let acc = oracle_accuracy(&ds, &(0..6).collect::<Vec<_>>());
        assert!(acc >= 0.9, "{acc}");
    }

    #[test]
    fn class_band_power_factor() {
        let ds = generate_dataset(&small_cfg(), 5).unwrap();
        let mean_power = |label: usize, lo: f64, hi: f64| {
            let recs: Vec<_> = ds.recordings.iter().filter(|r| r.label == label).collect();
            let total: f64 = recs
                .iter()
                .flat_map(|r| r.windows.iter())
                .map(|w| (0..6).map(|i| band_power(w.row(i), ds.sfreq, lo, hi)).sum::<f64>())
                .sum();
            total / recs.len() as f64
        };
        assert!(mean_power(0, 8.0, 12.0) > 2.0 * mean_power(1, 8.0, 12.0));
        assert!(mean_power(1, 18.0, 22.0) > 2.0 * mean_power(0, 18.0, 22.0));
    }

    #[test]
    fn clean_channels_stay_below_detector_variance() {
        let ds = generate_dataset(&small_cfg(), 6).unwrap();
        for w in ds.recordings.iter().flat_map(|r| r.windows.iter()) {
            for i in 0..w.rows() {
                let row = w.row(i);
                let m = row.iter().sum::<f64>() / row.len() as f64;
                let var = row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (row.len() - 1) as f64;
                assert!(var < 1000.0, "{var}");
            }
        }
    }

    #[test]
    fn single_channel_oracle_needs_no_mixing_when_unmixed() {
        let cfg = SynthConfig { n_recordings: 40, windows_per_recording: 5, ..Default::default() };
        let unmixed = generate_dataset(&SynthConfig { unmixed: true, ..cfg.clone() }, 2).unwrap();
        // Channel 0 carries the 10 Hz source, channel 1 the 20 Hz one.
        let direct = {
            let hits = unmixed
                .recordings
                .iter()
                .filter(|r| {
                    let w = &r.windows;
                    let a: f64 = w.iter().map(|x| band_power(x.row(0), 100.0, 8.0, 12.0)).sum();
                    let b: f64 = w.iter().map(|x| band_power(x.row(1), 100.0, 18.0, 22.0)).sum();
                    usize::from(a < b) == r.label
                })
                .count();
            hits as f64 / 40.0
        };
        assert!(direct >= 0.95, "{direct}");
    }

    #[test]
    fn mixing_is_full_rank_with_unit_rows() {
        let a = mixing_matrix(6, 9);
        for i in 0..6 {
            let n: f64 = a.row(i).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert!(det3(&a.transpose().matmul(&a).unwrap()) > 1e-3);
    }

    #[test]
    fn split_counts_and_stratification() {
        let ds = generate_dataset(&SynthConfig { n_recordings: 60, windows_per_recording: 1, ..Default::default() }, 1).unwrap();
        let s = split_dataset(&ds, [0.6, 0.2, 0.2], 7).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (36, 12, 12));
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..60).collect::<Vec<_>>());
        for part in [&s.train, &s.valid, &s.test] {
            let ones = part.iter().filter(|&&i| ds.recordings[i].label == 1).count() as f64;
            let want = part.len() as f64 * 0.5;
            assert!((ones - want).abs() <= 1.0);
        }
        let all_train = split_dataset(&ds, [1.0, 0.0, 0.0], 7).unwrap();
        assert_eq!(all_train.train.len(), 60);
        assert!(all_train.valid.is_empty() && all_train.test.is_empty());
        assert!(split_dataset(&ds, [0.5, 0.2, 0.2], 7).is_err());
    }

    #[test]
    fn split_rejects_tiny_classes() {
        let mut ds = generate_dataset(&SynthConfig { n_recordings: 4, windows_per_recording: 1, ..Default::default() }, 1).unwrap();
        ds.recordings.truncate(3);
        assert!(split_dataset(&ds, [0.6, 0.2, 0.2], 0).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let ds = generate_dataset(&small_cfg(), 8).unwrap();
        let bytes = ds.to_bytes();
        assert_eq!(&bytes[..4], b"DSFD");
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), ds);
        assert!(Dataset::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Dataset::from_bytes(&bad).is_err());
    }
}
