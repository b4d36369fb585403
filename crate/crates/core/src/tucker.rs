//! Partial Tucker decomposition along the two channel modes of a 3-D
//! convolution kernel.
//!
//! A kernel `K` of shape `(O, I, K_H, K_W, K_D)` is approximated as
//! `C ×₀ U_out ×₁ U_in` with a core `C` of shape `(T_O, T_I, K_H, K_W, K_D)`.
//! The spatial modes are left untouched.

use rayon::prelude::*;

use crate::cost::LayerKind;
use crate::error::{Error, Result};
use crate::linalg::leading_left_singular_vectors;
use crate::tensor::{frobenius_dist_sq, frobenius_norm_sq, mode_n_product, mode_n_unfold, DenseTensor, Matrix};

/// Orthonormality tolerance enforced on factor matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    tensor: DenseTensor,
    kind: LayerKind,
}

impl ConvKernel {
    pub fn new(tensor: DenseTensor, kind: LayerKind) -> Result<Self> {
        if tensor.rank() != 5 {
            return Err(Error::Shape(format!(
                "convolution kernel needs 5 axes (O, I, K_H, K_W, K_D), got {:?}",
                tensor.dims()
            )));
        }
        Ok(Self { tensor, kind })
    }

    pub fn conv3d(tensor: DenseTensor) -> Result<Self> {
        Self::new(tensor, LayerKind::Conv3d)
    }

    /// Builds a kernel from a transposed-convolution weight stored as
    /// `(C_in, C_out, K_H, K_W, K_D)`, swapping the channel axes into
    /// `(O, I, ...)` order.
    pub fn from_transposed_layout(tensor: DenseTensor) -> Result<Self> {
        if tensor.rank() != 5 {
            return Err(Error::Shape(format!("expected 5 axes, got {:?}", tensor.dims())));
        }
        let d = tensor.dims().to_vec();
        let spatial = d[2] * d[3] * d[4];
        let mut data = vec![0.0; tensor.len()];
        for a in 0..d[0] {
            for b in 0..d[1] {
                let src = (a * d[1] + b) * spatial;
                let dst = (b * d[0] + a) * spatial;
                data[dst..dst + spatial].copy_from_slice(&tensor.data()[src..src + spatial]);
            }
        }
        let swapped = DenseTensor::with_dtype(vec![d[1], d[0], d[2], d[3], d[4]], data, tensor.dtype())?;
        Self::new(swapped, LayerKind::ConvTranspose3d)
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub(crate) fn tensor_mut(&mut self) -> &mut DenseTensor {
        &mut self.tensor
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.tensor
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn out_channels(&self) -> usize {
        self.tensor.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.tensor.dims()[1]
    }

    pub fn spatial(&self) -> [usize; 3] {
        let d = self.tensor.dims();
        [d[2], d[3], d[4]]
    }

    pub fn is_pointwise(&self) -> bool {
        self.spatial() == [1, 1, 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFactors {
    core: DenseTensor,
    u_out: Matrix,
    u_in: Matrix,
    kind: LayerKind,
}

impl TuckerFactors {
    /// Validates shapes, rank bounds and column orthonormality.
    pub fn new(core: DenseTensor, u_out: Matrix, u_in: Matrix, kind: LayerKind) -> Result<Self> {
        let cd = core.dims();
        if cd.len() != 5 {
            return Err(Error::Shape(format!("core needs 5 axes, got {cd:?}")));
        }
        if u_out.cols() != cd[0] || u_in.cols() != cd[1] {
            return Err(Error::DimensionMismatch(format!(
                "core ranks ({}, {}) vs factor columns ({}, {})",
                cd[0],
                cd[1],
                u_out.cols(),
                u_in.cols()
            )));
        }
        if u_out.cols() > u_out.rows() {
            return Err(Error::RankOutOfRange { rank: u_out.cols(), max: u_out.rows() });
        }
        if u_in.cols() > u_in.rows() {
            return Err(Error::RankOutOfRange { rank: u_in.cols(), max: u_in.rows() });
        }
        for (name, u) in [("u_out", &u_out), ("u_in", &u_in)] {
            let err = u.orthonormality_error();
            if err.is_nan() || err > ORTHONORMAL_TOL {
                return Err(Error::InvalidArgument(format!(
                    "{name} columns are not orthonormal (max deviation {err:.3e})"
                )));
            }
        }
        Ok(Self { core, u_out, u_in, kind })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn u_out(&self) -> &Matrix {
        &self.u_out
    }

    pub fn u_in(&self) -> &Matrix {
        &self.u_in
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    /// `(T_O, T_I)`.
    pub fn ranks(&self) -> (usize, usize) {
        (self.u_out.cols(), self.u_in.cols())
    }

    pub fn out_channels(&self) -> usize {
        self.u_out.rows()
    }

    pub fn in_channels(&self) -> usize {
        self.u_in.rows()
    }

    pub fn spatial(&self) -> [usize; 3] {
        let d = self.core.dims();
        [d[2], d[3], d[4]]
    }

    /// Stored parameter count: `T_I·I + T_O·T_I·K³ + O·T_O`.
    pub fn param_count(&self) -> usize {
        self.core.len() + self.u_out.data().len() + self.u_in.data().len()
    }
}

/// Downsampling factor plus the channel floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankPolicy {
    df: f64,
    min_rank: usize,
}

impl RankPolicy {
    pub const DEFAULT_MIN_RANK: usize = 8;

    pub fn new(df: f64, min_rank: usize) -> Result<Self> {
        if !(df > 0.0 && df <= 1.0) {
            return Err(Error::InvalidArgument(format!("downsampling factor {df} outside (0, 1]")));
        }
        if min_rank == 0 {
            return Err(Error::InvalidArgument("min_rank must be at least 1".into()));
        }
        Ok(Self { df, min_rank })
    }

    pub fn with_df(df: f64) -> Result<Self> {
        Self::new(df, Self::DEFAULT_MIN_RANK)
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn min_rank(&self) -> usize {
        self.min_rank
    }

    /// Rank kept for a mode with `channels` entries.
    pub fn rank_for(&self, channels: usize) -> usize {
        let target = (self.df * channels as f64).round() as usize;
        let floor = self.min_rank.min(channels);
        target.clamp(floor, channels)
    }
}

/// `(T_O, T_I)` for a layer with `o` output and `i` input channels.
///
/// Each rank is `round(df·c)` (half away from zero) clamped into
/// `[min(min_rank, c), c]`.
pub fn select_ranks(policy: &RankPolicy, o: usize, i: usize) -> (usize, usize) {
    (policy.rank_for(o), policy.rank_for(i))
}

/// Full left-singular bases of the two channel unfoldings.
///
/// The leading `r` columns of each basis equal
/// `leading_left_singular_vectors(unfolding, r)` exactly, so truncations of
/// these bases are the rank-`r` HOSVD factors.
pub(crate) fn channel_bases(k: &ConvKernel) -> Result<(Matrix, Matrix)> {
    if !k.tensor.is_finite() {
        return Err(Error::NonFinite("kernel"));
    }
    let out_basis = leading_left_singular_vectors(&mode_n_unfold(&k.tensor, 0)?, k.out_channels())?;
    let in_basis = leading_left_singular_vectors(&mode_n_unfold(&k.tensor, 1)?, k.in_channels())?;
    Ok((out_basis, in_basis))
}

fn project(k: &ConvKernel, u_out: Matrix, u_in: Matrix) -> Result<TuckerFactors> {
    let core = mode_n_product(&mode_n_product(&k.tensor, &u_out.transpose(), 0)?, &u_in.transpose(), 1)?;
    TuckerFactors::new(core, u_out, u_in, k.kind)
}

fn check_ranks(k: &ConvKernel, t_o: usize, t_i: usize) -> Result<()> {
    if t_o == 0 || t_o > k.out_channels() {
        return Err(Error::RankOutOfRange { rank: t_o, max: k.out_channels() });
    }
    if t_i == 0 || t_i > k.in_channels() {
        return Err(Error::RankOutOfRange { rank: t_i, max: k.in_channels() });
    }
    Ok(())
}

/// Single-pass HOSVD restricted to the channel modes.
pub fn hosvd_partial(k: &ConvKernel, t_o: usize, t_i: usize) -> Result<TuckerFactors> {
    check_ranks(k, t_o, t_i)?;
    if !k.tensor.is_finite() {
        return Err(Error::NonFinite("kernel"));
    }
    let u_out = leading_left_singular_vectors(&mode_n_unfold(&k.tensor, 0)?, t_o)?;
    let u_in = leading_left_singular_vectors(&mode_n_unfold(&k.tensor, 1)?, t_i)?;
    project(k, u_out, u_in)
}

/// Higher-order orthogonal iteration starting from `f`.
///
/// Alternates the two channel factors, each from the unfolding of the
/// kernel projected by the other factor. Stops after the first iteration
/// whose EV gain is below `tol` (or negative). Never returns factors with a
/// lower EV than the input.
pub fn hooi_refine(k: &ConvKernel, f: &TuckerFactors, max_iters: usize, tol: f64) -> Result<TuckerFactors> {
    if max_iters == 0 {
        return Ok(f.clone());
    }
    let (t_o, t_i) = f.ranks();
    check_ranks(k, t_o, t_i)?;
    let mut best = f.clone();
    let mut best_ev = explained_variance(k, &best)?;

    for _ in 0..max_iters {
        let partial_in = mode_n_product(&k.tensor, &best.u_in.transpose(), 1)?;
        let u_out = leading_left_singular_vectors(&mode_n_unfold(&partial_in, 0)?, t_o)?;
        let partial_out = mode_n_product(&k.tensor, &u_out.transpose(), 0)?;
        let u_in = leading_left_singular_vectors(&mode_n_unfold(&partial_out, 1)?, t_i)?;
        let candidate = project(k, u_out, u_in)?;
        let ev = explained_variance(k, &candidate)?;
        let gain = ev - best_ev;
        if gain > 0.0 {
            best = candidate;
            best_ev = ev;
        }
        if gain < tol {
            break;
        }
    }
    Ok(best)
}

/// `C ×₀ U_out ×₁ U_in`.
pub fn reconstruct(f: &TuckerFactors) -> Result<ConvKernel> {
    let t = mode_n_product(&mode_n_product(&f.core, &f.u_out, 0)?, &f.u_in, 1)?;
    ConvKernel::new(t, f.kind)
}

/// `1 − ‖K − K̂‖² / ‖K‖²` with `K̂ = reconstruct(f)`.
pub fn explained_variance(k: &ConvKernel, f: &TuckerFactors) -> Result<f64> {
    let norm = frobenius_norm_sq(&k.tensor);
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let approx = reconstruct(f)?;
    Ok(1.0 - frobenius_dist_sq(&k.tensor, &approx.tensor)? / norm)
}

/// EV over a rank grid: rows follow `t_o`, columns follow `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvGrid {
    pub t_o: Vec<usize>,
    pub t_i: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl EvGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row][col]
    }

    /// Header row holds the `t_i` values, the first column the `t_o`
    /// values; cells carry 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_o\\t_i");
        for t in &self.t_i {
            out.push_str(&format!(",{t}"));
        }
        out.push('\n');
        for (t, row) in self.t_o.iter().zip(&self.values) {
            out.push_str(&t.to_string());
            for v in row {
                out.push(',');
                out.push_str(&format_significant(*v, 12));
            }
            out.push('\n');
        }
        out
    }
}

/// Plain decimal rendering with `digits` significant digits.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{:.*}", digits - 1, v);
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn check_rank_list(list: &[usize], max: usize, name: &str) -> Result<()> {
    if list.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} rank list is empty")));
    }
    if list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!("{name} ranks must be strictly increasing")));
    }
    for &r in list {
        if r == 0 || r > max {
            return Err(Error::RankOutOfRange { rank: r, max });
        }
    }
    Ok(())
}

/// HOSVD explained variance for every `(t_o, t_i)` pair.
///
/// With orthonormal factors `‖K − K̂‖² = ‖K‖² − ‖C‖²`, so each cell is the
/// energy of the leading `t_o × t_i` block of the full-rank core over
/// `‖K‖²`. Block energies are prefix sums of non-negative terms, which keeps
/// every row and column non-decreasing under rounding as well.
pub fn ev_grid(k: &ConvKernel, t_o_list: &[usize], t_i_list: &[usize]) -> Result<EvGrid> {
    check_rank_list(t_o_list, k.out_channels(), "t_o")?;
    check_rank_list(t_i_list, k.in_channels(), "t_i")?;
    let norm = frobenius_norm_sq(&k.tensor);
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let (out_basis, in_basis) = channel_bases(k)?;
    let core = project(k, out_basis, in_basis)?.core;
    let (o, i) = (k.out_channels(), k.in_channels());
    let sp = core.len() / (o * i);

    // prefix[a][b] = energy of core[..a, ..b, ...]
    let energy: Vec<f64> = core.data().par_chunks(sp).map(|f| f.iter().map(|v| v * v).sum()).collect();
    let mut prefix = vec![vec![0.0; i + 1]; o + 1];
    for a in 0..o {
        let mut row = 0.0;
        for b in 0..i {
            row += energy[a * i + b];
            prefix[a + 1][b + 1] = prefix[a][b + 1] + row;
        }
    }

    Ok(EvGrid {
        t_o: t_o_list.to_vec(),
        t_i: t_i_list.to_vec(),
        values: t_o_list.iter().map(|&a| t_i_list.iter().map(|&b| prefix[a][b] / norm).collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;

    pub(crate) fn random_kernel(dims: [usize; 5], seed: u64) -> ConvKernel {
        let n = dims.iter().product();
        let t = DenseTensor::new(dims.to_vec(), XorShift64Star::new(seed).fill_uniform(n)).unwrap();
        ConvKernel::conv3d(t).unwrap()
    }

    fn rel_err(a: &DenseTensor, b: &DenseTensor) -> f64 {
        (frobenius_dist_sq(a, b).unwrap() / frobenius_norm_sq(b)).sqrt()
    }

    #[test]
    fn select_ranks_examples() {
        let p = RankPolicy::new(0.3, 8).unwrap();
        assert_eq!(p.rank_for(64), 19);
        let p = RankPolicy::new(0.05, 8).unwrap();
        assert_eq!(p.rank_for(32), 8);
        let p = RankPolicy::new(0.5, 8).unwrap();
        assert_eq!(p.rank_for(4), 4);
        assert_eq!(select_ranks(&p, 64, 32), (32, 16));
        // half rounds away from zero
        assert_eq!(RankPolicy::new(0.5, 1).unwrap().rank_for(5), 3);
    }

    #[test]
    fn rank_policy_validation() {
        assert!(RankPolicy::new(0.0, 8).is_err());
        assert!(RankPolicy::new(1.2, 8).is_err());
        assert!(RankPolicy::new(f64::NAN, 8).is_err());
        assert!(RankPolicy::new(0.5, 0).is_err());
        assert!(RankPolicy::new(1.0, 1).is_ok());
    }

    #[test]
    fn kernel_needs_five_axes() {
        let t = DenseTensor::zeros(vec![2, 2, 3, 3]).unwrap();
        assert!(ConvKernel::conv3d(t).is_err());
    }

    #[test]
    fn full_rank_round_trip() {
        let k = random_kernel([6, 5, 3, 3, 3], 1);
        let f = hosvd_partial(&k, 6, 5).unwrap();
        let back = reconstruct(&f).unwrap();
        assert!(rel_err(back.tensor(), k.tensor()) <= 1e-10);
        assert!((explained_variance(&k, &f).unwrap() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn tall_pointwise_kernel_full_rank() {
        // O exceeds I·K³, so the output basis extends into the null space
        let k = random_kernel([12, 3, 1, 1, 1], 2);
        let f = hosvd_partial(&k, 12, 3).unwrap();
        assert!(f.u_out().orthonormality_error() < 1e-12);
        assert!((explained_variance(&k, &f).unwrap() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn rank_one_kernel_is_captured() {
        let mut g = XorShift64Star::new(3);
        let a = g.fill_uniform(4);
        let b = g.fill_uniform(3);
        let s = g.fill_uniform(8);
        let mut data = Vec::new();
        for x in &a {
            for y in &b {
                for z in &s {
                    data.push(x * y * z);
                }
            }
        }
        let k = ConvKernel::conv3d(DenseTensor::new(vec![4, 3, 2, 2, 2], data).unwrap()).unwrap();
        let f = hosvd_partial(&k, 1, 1).unwrap();
        assert!((explained_variance(&k, &f).unwrap() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn ranks_checked() {
        let k = random_kernel([4, 3, 1, 1, 1], 4);
        assert!(matches!(hosvd_partial(&k, 5, 1), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(hosvd_partial(&k, 1, 0), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn non_finite_kernel_rejected() {
        let mut t = DenseTensor::zeros(vec![2, 2, 1, 1, 1]).unwrap();
        t.data_mut()[1] = f64::INFINITY;
        let k = ConvKernel::conv3d(t).unwrap();
        assert!(matches!(hosvd_partial(&k, 1, 1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_core_reconstructs_zero_kernel() {
        let k = random_kernel([4, 4, 2, 2, 2], 5);
        let f = hosvd_partial(&k, 2, 2).unwrap();
        let zero = TuckerFactors::new(
            DenseTensor::zeros(f.core().dims().to_vec()).unwrap(),
            f.u_out().clone(),
            f.u_in().clone(),
            LayerKind::Conv3d,
        )
        .unwrap();
        assert!(reconstruct(&zero).unwrap().tensor().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_one_reconstruction_per_offset() {
        let k = random_kernel([5, 4, 2, 1, 3], 6);
        let f = hosvd_partial(&k, 1, 1).unwrap();
        let r = reconstruct(&f).unwrap();
        for s in 0..6 {
            let c = f.core().data()[s];
            for o in 0..5 {
                for i in 0..4 {
                    let expect = f.u_out().get(o, 0) * c * f.u_in().get(i, 0);
                    let got = r.tensor().data()[(o * 4 + i) * 6 + s];
                    assert!((expect - got).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn zero_norm_kernel_rejected() {
        let k = ConvKernel::conv3d(DenseTensor::zeros(vec![2, 2, 1, 1, 1]).unwrap()).unwrap();
        let f = TuckerFactors::new(
            DenseTensor::zeros(vec![1, 1, 1, 1, 1]).unwrap(),
            Matrix::new(2, 1, vec![1.0, 0.0]).unwrap(),
            Matrix::new(2, 1, vec![1.0, 0.0]).unwrap(),
            LayerKind::Conv3d,
        )
        .unwrap();
        assert!(matches!(explained_variance(&k, &f), Err(Error::ZeroNorm)));
    }

    #[test]
    fn ev_of_foreign_factors_bounded() {
        let k = random_kernel([6, 6, 3, 3, 3], 7);
        let other = random_kernel([6, 6, 3, 3, 3], 8);
        let f = hosvd_partial(&other, 3, 3).unwrap();
        // project k through other's bases
        let g = project(&k, f.u_out().clone(), f.u_in().clone()).unwrap();
        let ev = explained_variance(&k, &g).unwrap();
        assert!((-1e-12..=1.0 + 1e-12).contains(&ev), "{ev}");
    }

    #[test]
    fn ev_monotone_along_diagonal() {
        let k = random_kernel([7, 7, 3, 3, 3], 9);
        let evs: Vec<f64> = (1..=7)
            .map(|r| explained_variance(&k, &hosvd_partial(&k, r, r).unwrap()).unwrap())
            .collect();
        for w in evs.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn hooi_zero_iters_is_noop() {
        let k = random_kernel([6, 6, 3, 3, 3], 10);
        let f = hosvd_partial(&k, 3, 3).unwrap();
        assert_eq!(hooi_refine(&k, &f, 0, 1e-6).unwrap(), f);
    }

    #[test]
    fn hooi_full_rank_is_noop() {
        let k = random_kernel([4, 5, 3, 3, 3], 11);
        let f = hosvd_partial(&k, 4, 5).unwrap();
        let g = hooi_refine(&k, &f, 20, 1e-6).unwrap();
        assert!((explained_variance(&k, &g).unwrap() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn hooi_does_not_lose_ev() {
        let k = random_kernel([8, 8, 3, 3, 3], 12);
        let f = hosvd_partial(&k, 3, 3).unwrap();
        let g = hooi_refine(&k, &f, 20, 1e-6).unwrap();
        let before = explained_variance(&k, &f).unwrap();
        let after = explained_variance(&k, &g).unwrap();
        assert!(after >= before - 1e-12, "{after} < {before}");
        assert!(g.u_out().orthonormality_error() < 1e-10);
    }

    #[test]
    fn ev_grid_corner_and_consistency() {
        let k = random_kernel([5, 4, 3, 3, 3], 13);
        let grid = ev_grid(&k, &[1, 3, 5], &[1, 2, 4]).unwrap();
        assert!((grid.get(2, 2) - 1.0).abs() <= 1e-10);
        let single = ev_grid(&k, &[1], &[1]).unwrap();
        let direct = explained_variance(&k, &hosvd_partial(&k, 1, 1).unwrap()).unwrap();
        assert!((single.get(0, 0) - direct).abs() <= 1e-12);
    }

    #[test]
    fn ev_grid_rejects_bad_lists() {
        let k = random_kernel([4, 4, 1, 1, 1], 14);
        assert!(ev_grid(&k, &[2, 1], &[1]).is_err());
        assert!(ev_grid(&k, &[1, 1], &[1]).is_err());
        assert!(ev_grid(&k, &[1], &[5]).is_err());
        assert!(ev_grid(&k, &[], &[1]).is_err());
    }

    #[test]
    fn csv_layout() {
        let grid = EvGrid { t_o: vec![1, 2], t_i: vec![3], values: vec![vec![0.5], vec![1.0]] };
        assert_eq!(grid.to_csv(), "t_o\\t_i,3\n1,0.500000000000\n2,1.00000000000\n");
        assert_eq!(format_significant(0.0123456789012345, 12), "0.0123456789012");
    }

    #[test]
    fn transposed_layout_swaps_channels() {
        let t = DenseTensor::new(vec![2, 3, 1, 1, 2], (0..12).map(f64::from).collect()).unwrap();
        let k = ConvKernel::from_transposed_layout(t.clone()).unwrap();
        assert_eq!(k.tensor().dims(), &[3, 2, 1, 1, 2]);
        assert_eq!(k.kind(), LayerKind::ConvTranspose3d);
        for a in 0..2 {
            for b in 0..3 {
                for s in 0..2 {
                    assert_eq!(k.tensor().get(&[b, a, 0, 0, s]), t.get(&[a, b, 0, 0, s]));
                }
            }
        }
    }
}
