//! Partial Tucker compression of 3-D convolution kernels.
//!
//! The crate decomposes `(O, I, K_H, K_W, K_D)` kernels along their two
//! channel modes, runs the resulting three-stage factorized convolution,
//! and accounts for the parameter and FLOP budget of whole architectures.
//!
//! All numerics run in `f64`; the [`fast`] executors use `f32` GEMM and
//! exist for wall-clock comparisons only.

pub mod container;
pub mod conv;
pub mod cost;
pub mod error;
pub mod fast;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod prune;
pub mod rng;
pub mod tensor;
pub mod tucker;

pub use container::{read_container, write_container, Container, ContainerError, NamedTensor};
pub use conv::{
    conv3d_direct, conv3d_direct_counted, conv3d_tucker, conv3d_tucker_counted, output_dims,
    ConvSpec, FeatureMap,
};
pub use cost::{
    analyze_arch, compression_ratio, flops_direct, flops_tucker, params_direct, params_tucker,
    ArchDesc, CostReport, Eligibility, LayerCost, LayerDesc, LayerKind,
};
pub use error::{Error, Result};
pub use harness::{speedup, time_forward, BenchResult};
pub use linalg::leading_left_singular_vectors;
pub use prune::{channel_l2_norms, prune_channels, PruneSpec};
pub use rng::XorShift64Star;
pub use tensor::{frobenius_norm_sq, mode_n_fold, mode_n_product, mode_n_unfold, DenseTensor, Dtype, Matrix};
pub use tucker::{
    ev_grid, explained_variance, hooi_refine, hosvd_partial, reconstruct, select_ranks, ConvKernel,
    EvGrid, RankPolicy, TuckerFactors,
};
