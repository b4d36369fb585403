//! Dense row-major tensors and the multilinear primitives built on them.
//!
//! Unfoldings use the cyclic column order: for mode `n` the remaining axes
//! are visited as `n+1, n+2, ..., N-1, 0, ..., n-1`, with `n+1` varying
//! fastest. Factor matrices are serialized against this convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage width used when a tensor is serialized. Arithmetic is always `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
    dtype: Dtype,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::with_dtype(dims, data, Dtype::F64)
    }

    pub fn with_dtype(dims: Vec<usize>, data: Vec<f64>, dtype: Dtype) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Shape("tensor must have at least one axis".into()));
        }
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Shape(format!("axis {axis} has zero extent")));
        }
        let len = checked_len(&dims)?;
        if len != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} imply {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data, dtype })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = checked_len(&dims)?;
        Self::new(dims, vec![0.0; len])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn set_dtype(&mut self, dtype: Dtype) {
        self.dtype = dtype;
    }

    pub fn with_dtype_tag(mut self, dtype: Dtype) -> Self {
        self.dtype = dtype;
        self
    }

    /// Row-major strides in elements.
    pub fn strides(&self) -> Vec<usize> {
        row_major_strides(&self.dims)
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        index
            .iter()
            .zip(self.strides())
            .map(|(&i, s)| i * s)
            .sum()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::with_dtype(dims, self.data, self.dtype)
    }
}

pub(crate) fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Shape(format!("dims {dims:?} overflow usize")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("matrix extents must be positive, got {rows}x{cols}")));
        }
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// First `r` columns.
    pub fn leading_columns(&self, r: usize) -> Result<Matrix> {
        if r == 0 || r > self.cols {
            return Err(Error::RankOutOfRange { rank: r, max: self.cols });
        }
        let mut out = Matrix::zeros(self.rows, r);
        for row in 0..self.rows {
            out.data[row * r..(row + 1) * r].copy_from_slice(&self.row(row)[..r]);
        }
        Ok(out)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Largest absolute deviation of `selfᵀ·self` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..self.cols {
            for b in a..self.cols {
                let dot: f64 = (0..self.rows).map(|r| self.get(r, a) * self.get(r, b)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Mode-`n` unfolding, shape `(dims[n], prod(other dims))`.
pub fn mode_n_unfold(t: &DenseTensor, n: usize) -> Result<Matrix> {
    let rank = t.rank();
    if n >= rank {
        return Err(Error::AxisOutOfRange { axis: n, rank });
    }
    let rows = t.dims[n];
    let cols = t.len() / rows;
    let col_strides = unfold_column_strides(&t.dims, n);
    let mut out = vec![0.0; t.len()];
    let mut index = vec![0usize; rank];
    for &v in &t.data {
        let col: usize = index.iter().zip(&col_strides).map(|(i, s)| i * s).sum();
        out[index[n] * cols + col] = v;
        increment(&mut index, &t.dims);
    }
    Matrix::new(rows, cols, out)
}

/// Inverse of [`mode_n_unfold`].
pub fn mode_n_fold(m: &Matrix, n: usize, dims: &[usize]) -> Result<DenseTensor> {
    let rank = dims.len();
    if n >= rank {
        return Err(Error::AxisOutOfRange { axis: n, rank });
    }
    let len = checked_len(dims)?;
    if m.rows != dims[n] || m.rows * m.cols != len {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix cannot fold into {dims:?} along mode {n}",
            m.rows, m.cols
        )));
    }
    let col_strides = unfold_column_strides(dims, n);
    let mut data = vec![0.0; len];
    let mut index = vec![0usize; rank];
    for slot in data.iter_mut() {
        let col: usize = index.iter().zip(&col_strides).map(|(i, s)| i * s).sum();
        *slot = m.data[index[n] * m.cols + col];
        increment(&mut index, dims);
    }
    DenseTensor::new(dims.to_vec(), data)
}

/// Column stride contributed by each axis (zero for axis `n`).
fn unfold_column_strides(dims: &[usize], n: usize) -> Vec<usize> {
    let rank = dims.len();
    let mut strides = vec![0usize; rank];
    let mut stride = 1;
    for step in 1..rank {
        let axis = (n + step) % rank;
        strides[axis] = stride;
        stride *= dims[axis];
    }
    strides
}

#[inline]
fn increment(index: &mut [usize], dims: &[usize]) {
    for k in (0..dims.len()).rev() {
        index[k] += 1;
        if index[k] < dims[k] {
            return;
        }
        index[k] = 0;
    }
}

/// `t ×ₙ u`: contracts the columns of `u` against axis `n` of `t`.
pub fn mode_n_product(t: &DenseTensor, u: &Matrix, n: usize) -> Result<DenseTensor> {
    let rank = t.rank();
    if n >= rank {
        return Err(Error::AxisOutOfRange { axis: n, rank });
    }
    if u.cols != t.dims[n] {
        return Err(Error::DimensionMismatch(format!(
            "factor has {} columns but axis {n} has extent {}",
            u.cols, t.dims[n]
        )));
    }
    let pre: usize = t.dims[..n].iter().product();
    let post: usize = t.dims[n + 1..].iter().product();
    let inner = t.dims[n];
    let outer = u.rows;

    let mut out = vec![0.0; pre * outer * post];
    for p in 0..pre {
        let src = &t.data[p * inner * post..(p + 1) * inner * post];
        let dst = &mut out[p * outer * post..(p + 1) * outer * post];
        for r in 0..outer {
            let dst_row = &mut dst[r * post..(r + 1) * post];
            for i in 0..inner {
                let w = u.data[r * inner + i];
                if w == 0.0 {
                    continue;
                }
                for (d, &s) in dst_row.iter_mut().zip(&src[i * post..(i + 1) * post]) {
                    *d += w * s;
                }
            }
        }
    }
    let mut dims = t.dims.clone();
    dims[n] = outer;
    DenseTensor::new(dims, out)
}

pub fn frobenius_norm_sq(t: &DenseTensor) -> f64 {
    t.data.iter().map(|v| v * v).sum()
}

/// `‖a − b‖²_F`; shapes must agree.
pub fn frobenius_dist_sq(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.dims != b.dims {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.dims, b.dims)));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum())
}
