//! Magnitude-based filter pruning, the comparison baseline.
//!
//! Whole output channels with the smallest L2 norm are zeroed; the tensor
//! keeps its shape.

use crate::error::{Error, Result};
use crate::tucker::ConvKernel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneSpec {
    fraction: f64,
}

impl PruneSpec {
    pub fn new(fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!("prune fraction {fraction} outside [0, 1]")));
        }
        Ok(Self { fraction })
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    /// `round(fraction·channels)`, half away from zero.
    pub fn count(&self, channels: usize) -> usize {
        ((self.fraction * channels as f64).round() as usize).min(channels)
    }
}

/// L2 norm of each output-channel slice `(I, K_H, K_W, K_D)`.
pub fn channel_l2_norms(k: &ConvKernel) -> Vec<f64> {
    let per = k.tensor().len() / k.out_channels();
    k.tensor()
        .data()
        .chunks(per)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Output channels that [`prune_channels`] zeroes, ascending by norm with
/// ties going to the lower index.
pub fn channels_to_prune(k: &ConvKernel, spec: &PruneSpec) -> Vec<usize> {
    let norms = channel_l2_norms(k);
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    order.truncate(spec.count(norms.len()));
    order.sort_unstable();
    order
}

pub fn prune_channels(k: &ConvKernel, spec: &PruneSpec) -> ConvKernel {
    let mut out = k.clone();
    let per = k.tensor().len() / k.out_channels();
    let data = out.tensor_mut().data_mut();
    for c in channels_to_prune(k, spec) {
        data[c * per..(c + 1) * per].iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

/// Fraction of exactly-zero weights.
pub fn sparsity(k: &ConvKernel) -> f64 {
    let zeros = k.tensor().data().iter().filter(|&&v| v == 0.0).count();
    zeros as f64 / k.tensor().len() as f64
}
