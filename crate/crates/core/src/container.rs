//! `TKWT` weight container.
//!
//! Byte layout, all integers little-endian:
//!
//! ```text
//! "TKWT"            4 bytes magic
//! version           u32 (= 1)
//! manifest_len      u32
//! manifest          manifest_len bytes of UTF-8
//! tensor_count      u32
//! per tensor:
//!   name_len        u16
//!   name            name_len bytes of UTF-8
//!   dtype           u8   (0 = f32, 1 = f64)
//!   ndim            u8
//!   dims            ndim × u32
//!   payload         prod(dims) × dtype size, row-major
//! ```
//!
//! Writing an `f64`-valued tensor tagged `f32` narrows it; when that loses
//! information the tensor name is appended to the manifest's
//! `lossy_narrowing` array.

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use crate::tensor::{DenseTensor, Dtype};

pub const MAGIC: &[u8; 4] = b"TKWT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic: expected \"TKWT\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0} (expected 1)")]
    UnsupportedVersion(u32),
    #[error("truncated header: file ends inside {0}")]
    TruncatedHeader(&'static str),
    #[error("invalid UTF-8 in {0}")]
    InvalidUtf8(&'static str),
    #[error("unknown dtype code {code} for tensor '{name}'")]
    UnknownDtype { name: String, code: u8 },
    #[error("invalid shape for tensor '{name}': {reason}")]
    InvalidShape { name: String, reason: String },
    #[error("payload length mismatch for tensor '{name}': dims need {expected} bytes, {available} available")]
    PayloadLengthMismatch { name: String, expected: usize, available: usize },
    #[error("duplicate tensor name '{0}'")]
    DuplicateName(String),
    #[error("{0} trailing bytes after last tensor")]
    TrailingBytes(usize),
    #[error("tensor name of {0} bytes exceeds 65535")]
    NameTooLong(usize),
    #[error("tensor '{0}' has too many axes or too large an extent for the format")]
    ShapeTooLarge(String),
    #[error("manifest must be a JSON object to record lossy narrowing")]
    ManifestNotJson,
    #[error("I/O failure: {0}")]
    Io(std::io::Error),
}

impl From<std::io::Error> for ContainerError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: DenseTensor,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub manifest: String,
    pub tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn new(manifest: impl Into<String>) -> Self {
        Self { manifest: manifest.into(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: DenseTensor) -> Result<(), ContainerError> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(ContainerError::DuplicateName(name));
        }
        self.tensors.push(NamedTensor { name, tensor });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&DenseTensor> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.tensor)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|t| t.name.as_str())
    }

    pub fn encode(&self) -> Result<Vec<u8>, ContainerError> {
        let mut seen = HashSet::new();
        let mut lossy = Vec::new();
        for t in &self.tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(ContainerError::DuplicateName(t.name.clone()));
            }
            if t.name.len() > u16::MAX as usize {
                return Err(ContainerError::NameTooLong(t.name.len()));
            }
            let dims = t.tensor.dims();
            if dims.len() > u8::MAX as usize || dims.iter().any(|&d| d > u32::MAX as usize) {
                return Err(ContainerError::ShapeTooLarge(t.name.clone()));
            }
            if t.tensor.dtype() == Dtype::F32 && t.tensor.data().iter().any(|&v| !narrows_exactly(v)) {
                lossy.push(t.name.clone());
            }
        }
        let manifest = if lossy.is_empty() {
            self.manifest.clone()
        } else {
            flag_lossy(&self.manifest, &lossy)?
        };

        let payload: usize = self
            .tensors
            .iter()
            .map(|t| 4 + t.name.len() + 4 * t.tensor.rank() + t.tensor.len() * t.tensor.dtype().size())
            .sum();
        let mut out = Vec::with_capacity(HEADER_LEN + manifest.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.tensor.dtype().code());
            out.push(t.tensor.rank() as u8);
            for &d in t.tensor.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            match t.tensor.dtype() {
                Dtype::F32 => t.tensor.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
                Dtype::F64 => t.tensor.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if &magic != MAGIC {
            return Err(ContainerError::BadMagic(magic));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        let manifest_len = r.u32("manifest length")? as usize;
        let manifest = std::str::from_utf8(r.take(manifest_len, "manifest")?)
            .map_err(|_| ContainerError::InvalidUtf8("manifest"))?
            .to_string();
        let count = r.u32("tensor count")? as usize;

        let mut c = Container { manifest, tensors: Vec::with_capacity(count.min(1 << 16)) };
        let mut seen = HashSet::new();
        for _ in 0..count {
            let name_len = r.u16("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| ContainerError::InvalidUtf8("tensor name"))?
                .to_string();
            let code = r.u8("dtype")?;
            let dtype = Dtype::from_code(code).ok_or_else(|| ContainerError::UnknownDtype { name: name.clone(), code })?;
            let ndim = r.u8("ndim")? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u32("dims")? as usize);
            }
            let shape_err = |reason: &str| ContainerError::InvalidShape { name: name.clone(), reason: reason.into() };
            if ndim == 0 {
                return Err(shape_err("zero axes"));
            }
            if dims.contains(&0) {
                return Err(shape_err("zero extent"));
            }
            let expected = dims
                .iter()
                .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| shape_err("element count overflows"))?;
            let available = r.remaining();
            let raw = r.take(expected, "payload").map_err(|_| ContainerError::PayloadLengthMismatch {
                name: name.clone(),
                expected,
                available,
            })?;
            let data: Vec<f64> = match dtype {
                Dtype::F32 => raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect(),
                Dtype::F64 => raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
            };
            if !seen.insert(name.clone()) {
                return Err(ContainerError::DuplicateName(name));
            }
            let tensor = DenseTensor::with_dtype(dims, data, dtype).map_err(|e| shape_err(&e.to_string()))?;
            c.tensors.push(NamedTensor { name, tensor });
        }
        if r.remaining() > 0 {
            return Err(ContainerError::TrailingBytes(r.remaining()));
        }
        Ok(c)
    }
}

fn narrows_exactly(v: f64) -> bool {
    v.is_nan() || (v as f32) as f64 == v
}

fn flag_lossy(manifest: &str, names: &[String]) -> Result<String, ContainerError> {
    let mut value: serde_json::Value = if manifest.trim().is_empty() {
        serde_json::Value::Object(Default::default())
    } else {
        serde_json::from_str(manifest).map_err(|_| ContainerError::ManifestNotJson)?
    };
    let obj = value.as_object_mut().ok_or(ContainerError::ManifestNotJson)?;
    let entry = obj
        .entry("lossy_narrowing")
        .or_insert_with(|| serde_json::Value::Array(Vec::new()));
    let list = entry.as_array_mut().ok_or(ContainerError::ManifestNotJson)?;
    for n in names {
        let v = serde_json::Value::String(n.clone());
        if !list.contains(&v) {
            list.push(v);
        }
    }
    Ok(serde_json::to_string(&value).expect("json value serializes"))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ContainerError> {
        if self.remaining() < n {
            return Err(ContainerError::TruncatedHeader(what));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, ContainerError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn write_container(path: &Path, c: &Container) -> Result<(), ContainerError> {
    let bytes = c.encode()?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Container, ContainerError> {
    Container::decode(&std::fs::read(path)?)
}
