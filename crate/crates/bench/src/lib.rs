//! Fixtures shared by the criterion benches.

use tuckerforge::fast::{DirectPlan, TuckerPlan};
use tuckerforge::{hosvd_partial, select_ranks, ConvKernel, ConvSpec, DenseTensor, RankPolicy, XorShift64Star};

/// Uniform `[-1, 1)` kernel of shape `(c, c, k, k, k)`.
pub fn square_kernel(c: usize, k: usize, seed: u64) -> ConvKernel {
    let n = c * c * k * k * k;
    let t = DenseTensor::new(vec![c, c, k, k, k], XorShift64Star::new(seed).fill_uniform(n)).expect("shape matches data");
    ConvKernel::conv3d(t).expect("five axes")
}

pub fn input(channels: usize, extent: usize, seed: u64) -> Vec<f32> {
    let n = channels * extent.pow(3);
    XorShift64Star::new(seed).fill_uniform(n).into_iter().map(|v| v as f32).collect()
}

/// "Same"-padded single-threaded plans for a square layer: the direct one and
/// one factorized plan per downsampling factor.
pub fn layer_plans(c: usize, k: usize, extent: usize, dfs: &[f64]) -> (DirectPlan, Vec<(f64, TuckerPlan)>) {
    let kernel = square_kernel(c, k, 7);
    let spec = ConvSpec::uniform(1, k / 2).expect("stride 1 is valid");
    let dims = [extent; 3];
    let direct = DirectPlan::new(&kernel, spec, dims, false).expect("valid geometry");
    let tucker = dfs
        .iter()
        .map(|&df| {
            let (t_o, t_i) = select_ranks(&RankPolicy::new(df, 8).expect("df in (0, 1]"), c, c);
            let f = hosvd_partial(&kernel, t_o, t_i).expect("ranks in range");
            (df, TuckerPlan::new(&f, spec, dims, false).expect("valid geometry"))
        })
        .collect();
    (direct, tucker)
}
