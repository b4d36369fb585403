//! Wall-clock timing of forward passes.
//!
//! Warmup passes run untimed, then each timed pass is measured with the
//! monotonic clock. Inputs and outputs are allocated before timing starts.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fast::ForwardPass;

pub const DEFAULT_RUNS: usize = 10;
pub const DEFAULT_WARMUP: usize = 3;

/// One layer plus its pre-allocated buffers.
pub struct Workload {
    pass: Box<dyn ForwardPass>,
    input: Vec<f32>,
    output: Vec<f32>,
}

impl Workload {
    pub fn new(pass: Box<dyn ForwardPass>, input: Vec<f32>) -> Result<Self> {
        crate::fast::check_input(pass.as_ref(), &input)?;
        let output = vec![0.0; pass.output_len()];
        Ok(Self { pass, input, output })
    }

    pub fn output(&self) -> &[f32] {
        &self.output
    }

    fn run(&mut self) {
        self.pass.run(&self.input, &mut self.output);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub label: String,
    pub df: Option<f64>,
    pub runs: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub speedup: Option<f64>,
}

impl BenchResult {
    /// Mean and sample standard deviation of per-pass times.
    pub fn from_samples(label: impl Into<String>, df: Option<f64>, samples_ms: &[f64]) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::InvalidArgument("at least one timed run is required".into()));
        }
        let n = samples_ms.len() as f64;
        let mean = samples_ms.iter().sum::<f64>() / n;
        let std = if samples_ms.len() > 1 {
            (samples_ms.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self { label: label.into(), df, runs: samples_ms.len(), mean_ms: mean, std_ms: std, speedup: None })
    }

    pub fn with_speedup_over(mut self, baseline: &BenchResult) -> Result<Self> {
        self.speedup = Some(speedup(baseline, &self)?);
        Ok(self)
    }
}

/// Times `runs` forward passes over `layers` after `warmup` untimed ones.
pub fn time_forward(
    label: impl Into<String>,
    df: Option<f64>,
    layers: &mut [Workload],
    runs: usize,
    warmup: usize,
) -> Result<BenchResult> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    for _ in 0..warmup {
        layers.iter_mut().for_each(Workload::run);
    }
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        layers.iter_mut().for_each(Workload::run);
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    BenchResult::from_samples(label, df, &samples)
}

/// A labelled layer set competing in [`time_interleaved`].
pub struct Candidate {
    pub label: String,
    pub df: Option<f64>,
    pub layers: Vec<Workload>,
}

impl Candidate {
    pub fn new(label: impl Into<String>, df: Option<f64>, layers: Vec<Workload>) -> Self {
        Self { label: label.into(), df, layers }
    }
}

/// Like [`time_forward`] for several candidates, but each round times one
/// pass of every candidate in turn, so slow drifts in machine load affect
/// all of them alike.
pub fn time_interleaved(candidates: &mut [Candidate], runs: usize, warmup: usize) -> Result<Vec<BenchResult>> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    for _ in 0..warmup {
        for c in candidates.iter_mut() {
            c.layers.iter_mut().for_each(Workload::run);
        }
    }
    let mut samples = vec![Vec::with_capacity(runs); candidates.len()];
    for _ in 0..runs {
        for (c, s) in candidates.iter_mut().zip(&mut samples) {
            let start = Instant::now();
            c.layers.iter_mut().for_each(Workload::run);
            s.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    candidates
        .iter()
        .zip(&samples)
        .map(|(c, s)| BenchResult::from_samples(c.label.clone(), c.df, s))
        .collect()
}

/// `baseline.mean_ms / candidate.mean_ms`.
pub fn speedup(baseline: &BenchResult, candidate: &BenchResult) -> Result<f64> {
    if candidate.mean_ms.is_nan() || candidate.mean_ms <= 0.0 {
        return Err(Error::InvalidArgument("candidate mean time must be positive".into()));
    }
    Ok(baseline.mean_ms / candidate.mean_ms)
}

pub const CSV_HEADER: &str = "label,df,runs,mean_ms,std_ms,speedup";

pub fn to_csv(results: &[BenchResult]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in results {
        let df = r.df.map_or(String::new(), |d| d.to_string());
        let sp = r.speedup.map_or(String::new(), |s| format!("{s:.4}"));
        out.push_str(&format!("{},{},{},{:.4},{:.4},{}\n", r.label, df, r.runs, r.mean_ms, r.std_ms, sp));
    }
    out
}
