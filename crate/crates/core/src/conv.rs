//! Reference 3-D convolution and the three-stage factorized equivalent.
//!
//! Both paths count multiply-accumulates as they run. A padded tap counts
//! as one MAC even though it reads a zero, which is what the analytic
//! formulas in [`crate::cost`] assume.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};
use crate::tucker::{ConvKernel, TuckerFactors};

/// Stride and zero-padding per spatial axis `(H, W, D)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvSpec {
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self { stride: [1; 3], padding: [0; 3] }
    }
}

impl ConvSpec {
    pub fn new(stride: [usize; 3], padding: [usize; 3]) -> Result<Self> {
        if stride.contains(&0) {
            return Err(Error::Geometry(format!("stride {stride:?} must be positive")));
        }
        Ok(Self { stride, padding })
    }

    pub fn uniform(stride: usize, padding: usize) -> Result<Self> {
        Self::new([stride; 3], [padding; 3])
    }
}

/// Spatial output extents: `floor((H − K + 2P) / S + 1)` per axis.
pub fn output_dims(input: [usize; 3], kernel: [usize; 3], spec: &ConvSpec) -> Result<[usize; 3]> {
    let mut out = [0; 3];
    for a in 0..3 {
        if spec.stride[a] == 0 {
            return Err(Error::Geometry("stride must be positive".into()));
        }
        let padded = input[a] + 2 * spec.padding[a];
        if padded < kernel[a] {
            return Err(Error::Geometry(format!(
                "axis {a}: padded extent {padded} smaller than kernel {}",
                kernel[a]
            )));
        }
        out[a] = (padded - kernel[a]) / spec.stride[a] + 1;
    }
    Ok(out)
}

/// Activation volume `(C, H, W, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(DenseTensor);

impl FeatureMap {
    pub fn new(tensor: DenseTensor) -> Result<Self> {
        if tensor.rank() != 4 {
            return Err(Error::Shape(format!("feature map needs 4 axes (C, H, W, D), got {:?}", tensor.dims())));
        }
        Ok(Self(tensor))
    }

    pub fn from_parts(channels: usize, spatial: [usize; 3], data: Vec<f64>) -> Result<Self> {
        Self::new(DenseTensor::new(vec![channels, spatial[0], spatial[1], spatial[2]], data)?)
    }

    pub fn channels(&self) -> usize {
        self.0.dims()[0]
    }

    pub fn spatial(&self) -> [usize; 3] {
        let d = self.0.dims();
        [d[1], d[2], d[3]]
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.0
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.0
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &FeatureMap) -> Result<f64> {
        if self.0.dims() != other.0.dims() {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", self.0.dims(), other.0.dims())));
        }
        Ok(self
            .0
            .data()
            .iter()
            .zip(other.0.data())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Direct convolution; see [`conv3d_direct_counted`].
pub fn conv3d_direct(x: &FeatureMap, k: &ConvKernel, spec: &ConvSpec) -> Result<FeatureMap> {
    conv3d_direct_counted(x, k, spec).map(|(y, _)| y)
}

/// Direct convolution, returning the number of MACs executed.
///
/// Each output voxel accumulates over input channel, then `j`, `k`, `m`
/// kernel offsets in ascending order, starting from zero. Output channels
/// are evaluated in parallel; the per-voxel order does not depend on the
/// thread count.
pub fn conv3d_direct_counted(x: &FeatureMap, k: &ConvKernel, spec: &ConvSpec) -> Result<(FeatureMap, u64)> {
    let dims = k.tensor().dims();
    conv_raw(x, k.tensor().data(), dims[0], dims[1], k.spatial(), spec)
}

fn conv_raw(
    x: &FeatureMap,
    weights: &[f64],
    out_ch: usize,
    in_ch: usize,
    ks: [usize; 3],
    spec: &ConvSpec,
) -> Result<(FeatureMap, u64)> {
    if x.channels() != in_ch {
        return Err(Error::DimensionMismatch(format!(
            "input has {} channels, kernel expects {in_ch}",
            x.channels()
        )));
    }
    let [h, w, d] = x.spatial();
    let [oh, ow, od] = output_dims([h, w, d], ks, spec)?;
    let [sh, sw, sd] = spec.stride;
    let [ph, pw, pd] = spec.padding;
    let [kh, kw, kd] = ks;
    let taps = kh * kw * kd;
    let in_plane = h * w * d;
    let out_plane = oh * ow * od;
    let xs = x.data();

    let planes: Vec<(Vec<f64>, u64)> = (0..out_ch)
        .into_par_iter()
        .map(|o| {
            let mut plane = vec![0.0; out_plane];
            let mut macs = 0u64;
            for i in 0..in_ch {
                let src = &xs[i * in_plane..(i + 1) * in_plane];
                let wk = &weights[(o * in_ch + i) * taps..(o * in_ch + i + 1) * taps];
                for j in 0..kh {
                    for kk in 0..kw {
                        for m in 0..kd {
                            let wv = wk[(j * kw + kk) * kd + m];
                            for y in 0..oh {
                                let hy = (y * sh + j) as isize - ph as isize;
                                for z in 0..ow {
                                    macs += od as u64;
                                    let wz = (z * sw + kk) as isize - pw as isize;
                                    if hy < 0 || hy >= h as isize || wz < 0 || wz >= w as isize {
                                        continue;
                                    }
                                    let row = &src[(hy as usize * w + wz as usize) * d..][..d];
                                    let dst = &mut plane[(y * ow + z) * od..][..od];
                                    // valid d' range: 0 <= d'*sd + m - pd < d
                                    let lo = if pd > m { (pd - m).div_ceil(sd) } else { 0 };
                                    let hi = if d + pd > m { ((d + pd - m - 1) / sd + 1).min(od) } else { 0 };
                                    for dz in lo..hi {
                                        dst[dz] += wv * row[dz * sd + m - pd];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            (plane, macs)
        })
        .collect();

    let macs = planes.iter().map(|(_, c)| c).sum();
    let mut data = Vec::with_capacity(out_ch * out_plane);
    for (plane, _) in planes {
        data.extend_from_slice(&plane);
    }
    Ok((FeatureMap::from_parts(out_ch, [oh, ow, od], data)?, macs))
}

/// Factorized convolution; see [`conv3d_tucker_counted`].
pub fn conv3d_tucker(x: &FeatureMap, f: &TuckerFactors, spec: &ConvSpec) -> Result<FeatureMap> {
    conv3d_tucker_counted(x, f, spec).map(|(y, _)| y)
}

/// Three-stage execution of a Tucker-factorized kernel.
///
/// 1. pointwise projection `I → T_I` with weights `U_inᵀ`
/// 2. the core convolution `T_I → T_O` carrying the layer's stride and padding
/// 3. pointwise projection `T_O → O` with weights `U_out`
pub fn conv3d_tucker_counted(x: &FeatureMap, f: &TuckerFactors, spec: &ConvSpec) -> Result<(FeatureMap, u64)> {
    let (t_o, t_i) = f.ranks();
    let unit = ConvSpec::default();
    let u_in_t = f.u_in().transpose();
    let (projected, c1) = conv_raw(x, u_in_t.data(), t_i, f.in_channels(), [1; 3], &unit)?;
    let (core_out, c2) = conv_raw(&projected, f.core().data(), t_o, t_i, f.spatial(), spec)?;
    let (y, c3) = conv_raw(&core_out, f.u_out().data(), f.out_channels(), t_o, [1; 3], &unit)?;
    Ok((y, c1 + c2 + c3))
}

/// Adds a per-channel bias in place.
pub fn add_bias(y: &mut FeatureMap, bias: &[f64]) -> Result<()> {
    if bias.len() != y.channels() {
        return Err(Error::DimensionMismatch(format!(
            "bias has {} entries for {} channels",
            bias.len(),
            y.channels()
        )));
    }
    let plane = y.0.len() / y.channels();
    for (chunk, b) in y.0.data_mut().chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
    Ok(())
}

/// Pointwise weights as a matrix `(out, in)`; convenience for callers that
/// hold factor matrices.
pub fn pointwise_kernel(weights: &Matrix) -> Result<ConvKernel> {
    ConvKernel::conv3d(DenseTensor::new(
        vec![weights.rows(), weights.cols(), 1, 1, 1],
        weights.data().to_vec(),
    )?)
}
