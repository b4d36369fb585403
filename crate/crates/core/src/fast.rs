//! `f32` GEMM executors for wall-clock comparisons.
//!
//! Direct convolution is lowered to tiles of im2col columns multiplied by
//! the `(O, I·K³)` weight matrix; pointwise stages are a single GEMM on the
//! activation. All scratch space is allocated when the plan is built, so
//! [`ForwardPass::run`] does not allocate.

use rayon::prelude::*;

use crate::conv::{output_dims, ConvSpec};
use crate::error::{Error, Result};
use crate::tucker::{ConvKernel, TuckerFactors};

/// Output voxels per im2col tile.
const TILE: usize = 256;

pub trait ForwardPass: Send {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn run(&mut self, input: &[f32], output: &mut [f32]);
}

/// `C (m×n, row stride ldc) = A (m×k, row-major) · B (k×n, row stride ldb)`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], ldb: usize, c: &mut [f32], ldc: usize) {
    assert!(n == 0 || c.len() >= (m - 1) * ldc + n);
    // SAFETY: `c` covers every element the product writes.
    unsafe { gemm_raw(m, k, n, a, b, ldb, c.as_mut_ptr(), ldc) }
}

/// # Safety
/// `c` must be valid for writes at `r * ldc + j` for all `r < m`, `j < n`,
/// and no other thread may access those elements during the call.
#[allow(clippy::too_many_arguments)]
unsafe fn gemm_raw(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], ldb: usize, c: *mut f32, ldc: usize) {
    assert!(a.len() >= m * k);
    assert!(n == 0 || b.len() >= (k - 1) * ldb + n);
    matrixmultiply::sgemm(m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), ldb as isize, 1, 0.0, c, ldc as isize, 1);
}

#[derive(Clone, Copy)]
struct SendPtr(*mut f32);
// SAFETY: tiles write disjoint column ranges of the output.
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

impl SendPtr {
    fn get(self) -> *mut f32 {
        self.0
    }
}

/// Convolution with arbitrary kernel, stride and padding.
pub struct DirectPlan {
    weights: Vec<f32>,
    out_ch: usize,
    in_ch: usize,
    kernel: [usize; 3],
    spec: ConvSpec,
    in_dims: [usize; 3],
    out_dims: [usize; 3],
    /// One im2col buffer per worker.
    scratch: Vec<Vec<f32>>,
    parallel: bool,
}

impl DirectPlan {
    pub fn new(k: &ConvKernel, spec: ConvSpec, in_dims: [usize; 3], parallel: bool) -> Result<Self> {
        let d = k.tensor().dims();
        Self::from_raw(
            k.tensor().data().iter().map(|&v| v as f32).collect(),
            d[0],
            d[1],
            k.spatial(),
            spec,
            in_dims,
            parallel,
        )
    }

    fn from_raw(
        weights: Vec<f32>,
        out_ch: usize,
        in_ch: usize,
        kernel: [usize; 3],
        spec: ConvSpec,
        in_dims: [usize; 3],
        parallel: bool,
    ) -> Result<Self> {
        let out_dims = output_dims(in_dims, kernel, &spec)?;
        let rows = in_ch * kernel.iter().product::<usize>();
        let workers = if parallel { rayon::current_num_threads().max(1) } else { 1 };
        let pointwise = kernel == [1; 3] && spec == ConvSpec::default();
        let scratch = if pointwise { Vec::new() } else { vec![vec![0.0; rows * TILE]; workers] };
        Ok(Self { weights, out_ch, in_ch, kernel, spec, in_dims, out_dims, scratch, parallel })
    }

    /// Pointwise plan for a `(out, in)` weight matrix.
    fn pointwise(weights: Vec<f32>, out_ch: usize, in_ch: usize, dims: [usize; 3], parallel: bool) -> Result<Self> {
        Self::from_raw(weights, out_ch, in_ch, [1; 3], ConvSpec::default(), dims, parallel)
    }

    pub fn out_dims(&self) -> [usize; 3] {
        self.out_dims
    }

    fn is_pointwise(&self) -> bool {
        self.scratch.is_empty()
    }

    fn fill_tile(&self, input: &[f32], start: usize, n: usize, cols: &mut [f32]) {
        let [h, w, d] = self.in_dims;
        let [_, ow, od] = self.out_dims;
        let [kh, kw, kd] = self.kernel;
        let [sh, sw, sd] = self.spec.stride;
        let [ph, pw, pd] = self.spec.padding;
        let in_plane = h * w * d;
        let mut row = 0;
        for i in 0..self.in_ch {
            let src = &input[i * in_plane..(i + 1) * in_plane];
            for j in 0..kh {
                for kk in 0..kw {
                    for m in 0..kd {
                        let dst = &mut cols[row * n..(row + 1) * n];
                        for (c, slot) in dst.iter_mut().enumerate() {
                            let v = start + c;
                            let (y, rem) = (v / (ow * od), v % (ow * od));
                            let (z, x) = (rem / od, rem % od);
                            let hy = (y * sh + j) as isize - ph as isize;
                            let wz = (z * sw + kk) as isize - pw as isize;
                            let dx = (x * sd + m) as isize - pd as isize;
                            *slot = if hy < 0 || wz < 0 || dx < 0 || hy >= h as isize || wz >= w as isize || dx >= d as isize {
                                0.0
                            } else {
                                src[(hy as usize * w + wz as usize) * d + dx as usize]
                            };
                        }
                        row += 1;
                    }
                }
            }
        }
    }
}

impl ForwardPass for DirectPlan {
    fn input_len(&self) -> usize {
        self.in_ch * self.in_dims.iter().product::<usize>()
    }

    fn output_len(&self) -> usize {
        self.out_ch * self.out_dims.iter().product::<usize>()
    }

    fn run(&mut self, input: &[f32], output: &mut [f32]) {
        assert_eq!(input.len(), self.input_len());
        assert_eq!(output.len(), self.output_len());
        let vol: usize = self.out_dims.iter().product();
        let rows = self.in_ch * self.kernel.iter().product::<usize>();
        if self.is_pointwise() {
            gemm(self.out_ch, self.in_ch, vol, &self.weights, input, vol, output, vol);
            return;
        }
        let n_tiles = vol.div_ceil(TILE);
        let mut scratch = std::mem::take(&mut self.scratch);
        let workers = scratch.len();
        let out = SendPtr(output.as_mut_ptr());
        let this = &*self;
        let work = |(wid, cols): (usize, &mut Vec<f32>)| {
            for t in (wid..n_tiles).step_by(workers) {
                let start = t * TILE;
                let n = TILE.min(vol - start);
                this.fill_tile(input, start, n, &mut cols[..rows * n]);
                // SAFETY: output is out_ch × vol; this tile alone writes columns [start, start + n).
                unsafe { gemm_raw(this.out_ch, rows, n, &this.weights, &cols[..rows * n], n, out.get().add(start), vol) };
            }
        };
        if self.parallel && workers > 1 {
            scratch.par_iter_mut().enumerate().for_each(work);
        } else {
            scratch.iter_mut().enumerate().for_each(work);
        }
        self.scratch = scratch;
    }
}

/// The three-stage factorized layer.
pub struct TuckerPlan {
    project_in: DirectPlan,
    core: DirectPlan,
    project_out: DirectPlan,
    stage1: Vec<f32>,
    stage2: Vec<f32>,
}

impl TuckerPlan {
    pub fn new(f: &TuckerFactors, spec: ConvSpec, in_dims: [usize; 3], parallel: bool) -> Result<Self> {
        let (t_o, t_i) = f.ranks();
        let u_in_t = f.u_in().transpose();
        let project_in = DirectPlan::pointwise(
            u_in_t.data().iter().map(|&v| v as f32).collect(),
            t_i,
            f.in_channels(),
            in_dims,
            parallel,
        )?;
        let core = DirectPlan::from_raw(
            f.core().data().iter().map(|&v| v as f32).collect(),
            t_o,
            t_i,
            f.spatial(),
            spec,
            in_dims,
            parallel,
        )?;
        let out_dims = core.out_dims();
        let project_out = DirectPlan::pointwise(
            f.u_out().data().iter().map(|&v| v as f32).collect(),
            f.out_channels(),
            t_o,
            out_dims,
            parallel,
        )?;
        let stage1 = vec![0.0; project_in.output_len()];
        let stage2 = vec![0.0; core.output_len()];
        Ok(Self { project_in, core, project_out, stage1, stage2 })
    }
}

impl ForwardPass for TuckerPlan {
    fn input_len(&self) -> usize {
        self.project_in.input_len()
    }

    fn output_len(&self) -> usize {
        self.project_out.output_len()
    }

    fn run(&mut self, input: &[f32], output: &mut [f32]) {
        self.project_in.run(input, &mut self.stage1);
        self.core.run(&self.stage1, &mut self.stage2);
        self.project_out.run(&self.stage2, output);
    }
}

/// Convenience check used by callers that build plans from descriptors.
pub fn check_input(pass: &dyn ForwardPass, input: &[f32]) -> Result<()> {
    if input.len() != pass.input_len() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} values, plan expects {}",
            input.len(),
            pass.input_len()
        )));
    }
    Ok(())
}
