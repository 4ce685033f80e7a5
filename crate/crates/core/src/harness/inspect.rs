//! Per-window spatial filter dumps and channel-contribution summaries.

use std::fmt::Write as _;

use super::train::Trained;
use crate::corruption::{corrupt_recording, CorruptionSpec};
use crate::dsf::{channel_contribution, filter_csv_header, filter_csv_line};
use crate::error::{DsfError, Result};
use crate::rng::derive_seed;
use crate::synth::Recording;

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Clean,
    /// One channel replaced by white noise (η = 1) in every window.
    NoisedChannel(usize),
    Custom(CorruptionSpec),
}

impl Condition {
    pub fn name(&self) -> String {
        match self {
            Condition::Clean => "clean".into(),
            Condition::NoisedChannel(c) => format!("noised_ch{c}"),
            Condition::Custom(_) => "custom".into(),
        }
    }

    fn spec(&self, c: usize) -> Result<Option<CorruptionSpec>> {
        Ok(match self {
            Condition::Clean => None,
            Condition::NoisedChannel(i) => {
                if *i >= c {
                    return Err(DsfError::Argument(format!("channel {i} out of range for {c} channels")));
                }
                let mut mask = vec![false; c];
                mask[*i] = true;
                Some(CorruptionSpec { forced_mask: Some(mask), ..CorruptionSpec::per_recording(1.0, 1.0) })
            }
            Condition::Custom(s) => Some(s.clone()),
        })
    }
}

/// Per-channel median and quartiles of φ over windows.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiSummary {
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
}

impl PhiSummary {
    pub fn from_phis(phis: &[Vec<f64>]) -> Result<Self> {
        let c = phis.first().map(Vec::len).ok_or_else(|| DsfError::InvalidInput("no windows to summarize".into()))?;
        let mut median = Vec::with_capacity(c);
        let mut q25 = Vec::with_capacity(c);
        let mut q75 = Vec::with_capacity(c);
        for j in 0..c {
            let mut col: Vec<f64> = phis.iter().map(|p| p[j]).collect();
            col.sort_by(f64::total_cmp);
            q25.push(percentile(&col, 0.25));
            median.push(percentile(&col, 0.5));
            q75.push(percentile(&col, 0.75));
        }
        Ok(Self { median, q25, q75 })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,median,q25,q75\n");
        for j in 0..self.median.len() {
            let _ = writeln!(out, "{j},{},{},{}", self.median[j], self.q25[j], self.q75[j]);
        }
        out
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub condition: String,
    /// CSV: window index, W row-major, b, φ.
    pub dump: String,
    pub phis: Vec<Vec<f64>>,
    pub summary: PhiSummary,
}

/// Filters of a DSF model on every window of `recs` under `condition`.
pub fn inspect_filters(trained: &Trained, recs: &[&Recording], condition: &Condition, seed: u64) -> Result<FilterReport> {
    let Trained::Neural { model, params } = trained else {
        return Err(DsfError::Config("filter inspection needs a DSF model".into()));
    };
    let dsf = model.dsf().ok_or_else(|| DsfError::Config(format!("{} has no dynamic spatial filters", model.spec.kind)))?;
    let spec = condition.spec(model.n_channels)?;
    let mut dump = filter_csv_header(dsf.config.c_prime, dsf.config.c);
    dump.push('\n');
    let mut phis = Vec::new();
    let mut index = 0;
    for r in recs {
        let rec = match &spec {
            Some(s) => corrupt_recording(r, s, derive_seed(seed, r.id))?,
            None => (*r).clone(),
        };
        for x in &rec.windows {
            let f = model.filters(params, x)?;
            dump.push_str(&filter_csv_line(index, &f));
            dump.push('\n');
            phis.push(channel_contribution(&f.w));
            index += 1;
        }
    }
    let summary = PhiSummary::from_phis(&phis)?;
    Ok(FilterReport { condition: condition.name(), dump, phis, summary })
}
