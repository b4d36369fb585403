//! Model containers: manifest schema, tensor naming and the
//! compress / verify pipeline.
//!
//! Original layers store `<layer>.weight` as `(O, I, K_H, K_W, K_D)` and an
//! optional `<layer>.bias`. A decomposed layer replaces the weight with
//! `<layer>.u_in` `(I, T_I)`, `<layer>.core` `(T_O, T_I, K_H, K_W, K_D)` and
//! `<layer>.u_out` `(O, T_O)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::conv::{add_bias, conv3d_direct, conv3d_tucker, FeatureMap};
use crate::cost::{params_direct, ArchDesc, Eligibility, LayerDesc, LayerKind};
use crate::error::{Error, Result};
use crate::rng::XorShift64Star;
use crate::tensor::{DenseTensor, Dtype, Matrix};
use crate::tucker::{explained_variance, hooi_refine, hosvd_partial, reconstruct, select_ranks, ConvKernel, RankPolicy, TuckerFactors};

pub const FORMAT_TAG: &str = "tuckerforge";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Hosvd,
    Hooi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedLayer {
    pub name: String,
    pub ranks: [usize; 2],
    pub df: f64,
    pub min_rank: usize,
    pub method: FitMethod,
    pub explained_variance: f64,
    pub params_orig: u64,
    pub params_tucker: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub pointwise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub arch: ArchDesc,
    #[serde(default)]
    pub compressed: Vec<CompressedLayer>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lossy_narrowing: Vec<String>,
}

impl ModelManifest {
    pub fn new(arch: ArchDesc) -> Self {
        Self { format: FORMAT_TAG.into(), arch, compressed: Vec::new(), lossy_narrowing: Vec::new() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        if m.format != FORMAT_TAG {
            return Err(Error::Manifest(format!("unexpected format tag '{}'", m.format)));
        }
        m.arch.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn compressed_layer(&self, name: &str) -> Option<&CompressedLayer> {
        self.compressed.iter().find(|c| c.name == name)
    }
}

pub fn weight_name(layer: &str) -> String {
    format!("{layer}.weight")
}

pub fn bias_name(layer: &str) -> String {
    format!("{layer}.bias")
}

fn factor_names(layer: &str) -> [String; 3] {
    [format!("{layer}.u_in"), format!("{layer}.core"), format!("{layer}.u_out")]
}

fn expected_kernel_dims(l: &LayerDesc) -> Vec<usize> {
    vec![l.out_channels, l.in_channels, l.kernel[0], l.kernel[1], l.kernel[2]]
}

/// Reads `<layer>.weight` and checks it against the layer description.
pub fn load_kernel(c: &Container, l: &LayerDesc) -> Result<ConvKernel> {
    let name = weight_name(&l.name);
    let t = c
        .get(&name)
        .ok_or_else(|| Error::Manifest(format!("missing tensor '{name}'")))?;
    if t.dims() != expected_kernel_dims(l).as_slice() {
        return Err(Error::Manifest(format!(
            "tensor '{name}' has dims {:?}, layer declares {:?}",
            t.dims(),
            expected_kernel_dims(l)
        )));
    }
    ConvKernel::new(t.clone(), l.kind)
}

pub fn load_bias(c: &Container, l: &LayerDesc) -> Result<Option<Vec<f64>>> {
    match c.get(&bias_name(&l.name)) {
        Some(b) if b.len() == l.out_channels => Ok(Some(b.data().to_vec())),
        Some(b) => Err(Error::Manifest(format!(
            "bias of '{}' has {} entries for {} output channels",
            l.name,
            b.len(),
            l.out_channels
        ))),
        None if l.bias => Err(Error::Manifest(format!("layer '{}' declares a bias but none is stored", l.name))),
        None => Ok(None),
    }
}

pub fn store_factors(c: &mut Container, layer: &str, f: &TuckerFactors, dtype: Dtype) -> Result<()> {
    let [u_in, core, u_out] = factor_names(layer);
    let as_tensor = |m: &Matrix| DenseTensor::with_dtype(vec![m.rows(), m.cols()], m.data().to_vec(), dtype);
    c.push(u_in, as_tensor(f.u_in())?)?;
    c.push(core, f.core().clone().with_dtype_tag(dtype))?;
    c.push(u_out, as_tensor(f.u_out())?)?;
    Ok(())
}

/// Reassembles the factors of a decomposed layer and checks that their
/// ranks agree with each other, with the layer and with the manifest entry.
pub fn load_factors(c: &Container, l: &LayerDesc, entry: Option<&CompressedLayer>) -> Result<TuckerFactors> {
    let [n_in, n_core, n_out] = factor_names(&l.name);
    let fetch = |n: &str| c.get(n).ok_or_else(|| Error::Manifest(format!("missing tensor '{n}'")));
    let (u_in, core, u_out) = (fetch(&n_in)?, fetch(&n_core)?, fetch(&n_out)?);
    let matrix = |t: &DenseTensor, n: &str| -> Result<Matrix> {
        if t.rank() != 2 {
            return Err(Error::Manifest(format!("'{n}' must be a matrix, got dims {:?}", t.dims())));
        }
        Matrix::new(t.dims()[0], t.dims()[1], t.data().to_vec())
    };
    let (u_in, u_out) = (matrix(u_in, &n_in)?, matrix(u_out, &n_out)?);
    if u_in.rows() != l.in_channels || u_out.rows() != l.out_channels {
        return Err(Error::Manifest(format!(
            "factors of '{}' are {}x{} / {}x{}, layer has I={} O={}",
            l.name,
            u_in.rows(),
            u_in.cols(),
            u_out.rows(),
            u_out.cols(),
            l.in_channels,
            l.out_channels
        )));
    }
    let cd = core.dims();
    if cd.len() != 5 || cd[0] != u_out.cols() || cd[1] != u_in.cols() || cd[2..] != l.kernel {
        return Err(Error::Manifest(format!(
            "core of '{}' has dims {cd:?}, inconsistent with ranks ({}, {}) and kernel {:?}",
            l.name,
            u_out.cols(),
            u_in.cols(),
            l.kernel
        )));
    }
    if let Some(e) = entry {
        if e.ranks != [u_out.cols(), u_in.cols()] {
            return Err(Error::Manifest(format!(
                "manifest ranks {:?} for '{}' disagree with stored factors ({}, {})",
                e.ranks,
                l.name,
                u_out.cols(),
                u_in.cols()
            )));
        }
    }
    TuckerFactors::new(core.clone(), u_out, u_in, l.kind)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressOptions {
    pub policy: RankPolicy,
    pub eligibility: Eligibility,
    /// `(max_iters, tol)` when HOOI refinement is requested.
    pub hooi: Option<(usize, f64)>,
}

impl CompressOptions {
    pub fn new(policy: RankPolicy) -> Self {
        Self { policy, eligibility: Eligibility::default(), hooi: None }
    }
}

/// Decomposes every eligible layer. Layers are processed in parallel; the
/// output keeps manifest order.
pub fn compress_model(input: &Container, opts: &CompressOptions) -> Result<Container> {
    let manifest = ModelManifest::parse(&input.manifest)?;
    if !manifest.compressed.is_empty() {
        return Err(Error::Manifest("container is already compressed".into()));
    }
    let results: Vec<Option<(TuckerFactors, CompressedLayer)>> = manifest
        .arch
        .layers
        .par_iter()
        .map(|l| -> Result<_> {
            let k = load_kernel(input, l)?;
            if !opts.eligibility.accepts(l) {
                return Ok(None);
            }
            let (t_o, t_i) = select_ranks(&opts.policy, l.out_channels, l.in_channels);
            let mut f = hosvd_partial(&k, t_o, t_i)?;
            let mut method = FitMethod::Hosvd;
            if let Some((iters, tol)) = opts.hooi {
                f = hooi_refine(&k, &f, iters, tol)?;
                method = FitMethod::Hooi;
            }
            let entry = CompressedLayer {
                name: l.name.clone(),
                ranks: [t_o, t_i],
                df: opts.policy.df(),
                min_rank: opts.policy.min_rank(),
                method,
                explained_variance: explained_variance(&k, &f)?,
                params_orig: params_direct(l),
                params_tucker: f.param_count() as u64,
                pointwise: l.is_pointwise(),
            };
            Ok(Some((f, entry)))
        })
        .collect::<Result<_>>()?;

    let mut out_manifest = manifest.clone();
    let mut out = Container::default();
    for (l, r) in manifest.arch.layers.iter().zip(results) {
        match r {
            // factors stay f64: narrowing would break the orthonormality check on load
            Some((f, entry)) => {
                store_factors(&mut out, &l.name, &f, Dtype::F64)?;
                out_manifest.compressed.push(entry);
            }
            None => {
                let name = weight_name(&l.name);
                out.push(name.clone(), input.get(&name).expect("checked by load_kernel").clone())?;
            }
        }
        if let Some(b) = input.get(&bias_name(&l.name)) {
            out.push(bias_name(&l.name), b.clone())?;
        }
    }
    out.manifest = out_manifest.to_json();
    Ok(out)
}

/// Random weights for every layer of `arch`, uniform in `[-1, 1)` scaled by
/// `1/sqrt(fan_in)`. Transposed layers are stored in normalized `(O, I, ...)`
/// order.
pub fn synthetic_model(arch: &ArchDesc, seed: u64, dtype: Dtype) -> Result<Container> {
    arch.validate()?;
    let mut rng = XorShift64Star::new(seed);
    let mut c = Container::new(ModelManifest::new(arch.clone()).to_json());
    for l in &arch.layers {
        let dims = expected_kernel_dims(l);
        let n: usize = dims.iter().product();
        let scale = 1.0 / ((l.in_channels * l.kernel_volume()) as f64).sqrt();
        let mut data: Vec<f64> = (0..n).map(|_| rng.uniform() * scale).collect();
        if dtype == Dtype::F32 {
            data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        c.push(weight_name(&l.name), DenseTensor::with_dtype(dims, data, dtype)?)?;
        if l.bias {
            let b = (0..l.out_channels).map(|_| rng.uniform() * 0.1).collect();
            c.push(bias_name(&l.name), DenseTensor::with_dtype(vec![l.out_channels], b, dtype)?)?;
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCheck {
    pub name: String,
    pub ranks: [usize; 2],
    pub explained_variance: f64,
    /// Factorized output against the original kernel; `None` for
    /// transposed layers, which are not executed.
    pub rel_err_vs_original: Option<f64>,
    /// Factorized output against direct convolution with the reconstructed
    /// kernel.
    pub rel_err_vs_reconstruction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub layers: Vec<LayerCheck>,
    pub max_rel_err: f64,
    pub max_identity_err: f64,
}

/// Tolerance on the factorized-versus-reconstructed identity.
pub const IDENTITY_TOL: f64 = 1e-9;

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.max_identity_err <= IDENTITY_TOL
    }
}

/// The layer's input extent clipped to `extent`, but never below what the
/// kernel needs. Used for verification and benchmark inputs.
pub fn clipped_input_dims(l: &LayerDesc, extent: usize) -> [usize; 3] {
    std::array::from_fn(|a| {
        let need = l.kernel[a].saturating_sub(2 * l.padding[a]).max(1);
        l.input_dims[a].min(extent).max(need)
    })
}

/// Runs both execution paths for every decomposed layer on seeded random
/// inputs.
pub fn verify_model(original: &Container, compressed: &Container, seed: u64, extent: usize) -> Result<VerifyReport> {
    let orig_manifest = ModelManifest::parse(&original.manifest)?;
    let comp_manifest = ModelManifest::parse(&compressed.manifest)?;
    if orig_manifest.arch.layers != comp_manifest.arch.layers {
        return Err(Error::Manifest("containers describe different architectures".into()));
    }
    let mut rng = XorShift64Star::new(seed);
    let mut layers = Vec::new();
    for entry in &comp_manifest.compressed {
        let l = comp_manifest
            .arch
            .layer(&entry.name)
            .ok_or_else(|| Error::Manifest(format!("compressed entry '{}' has no layer", entry.name)))?;
        let k = load_kernel(original, l)?;
        let f = load_factors(compressed, l, Some(entry))?;
        let ev = explained_variance(&k, &f)?;
        let (vs_orig, vs_rec) = if l.kind == LayerKind::ConvTranspose3d {
            (None, None)
        } else {
            let dims = clipped_input_dims(l, extent);
            let n = l.in_channels * dims.iter().product::<usize>();
            let x = FeatureMap::from_parts(l.in_channels, dims, rng.fill_uniform(n))?;
            let spec = l.spec();
            let mut y_tucker = conv3d_tucker(&x, &f, &spec)?;
            let mut y_orig = conv3d_direct(&x, &k, &spec)?;
            let mut y_rec = conv3d_direct(&x, &reconstruct(&f)?, &spec)?;
            if let Some(b) = load_bias(compressed, l)? {
                add_bias(&mut y_tucker, &b)?;
                add_bias(&mut y_orig, &b)?;
                add_bias(&mut y_rec, &b)?;
            }
            let rel = |reference: &FeatureMap| -> Result<f64> {
                Ok(y_tucker.max_abs_diff(reference)? / reference.max_abs().max(f64::MIN_POSITIVE))
            };
            (Some(rel(&y_orig)?), Some(rel(&y_rec)?))
        };
        layers.push(LayerCheck {
            name: l.name.clone(),
            ranks: entry.ranks,
            explained_variance: ev,
            rel_err_vs_original: vs_orig,
            rel_err_vs_reconstruction: vs_rec,
        });
    }
    let max_of = |get: fn(&LayerCheck) -> Option<f64>| layers.iter().filter_map(get).fold(0.0f64, f64::max);
    Ok(VerifyReport {
        seed,
        max_rel_err: max_of(|c| c.rel_err_vs_original),
        max_identity_err: max_of(|c| c.rel_err_vs_reconstruction),
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> ArchDesc {
        let mut with_bias = LayerDesc::conv("b", 8, 6, 3, 2, 1, 6);
        with_bias.bias = true;
        ArchDesc::new(
            "small",
            vec![
                LayerDesc::conv("a", 4, 8, 3, 1, 1, 6),
                with_bias,
                LayerDesc::conv("pw", 6, 4, 1, 1, 0, 3),
                LayerDesc::transposed("up", 4, 4, 2, 2, 3),
            ],
        )
        .unwrap()
    }

    #[test]
    fn clipped_dims_keep_geometry_valid() {
        let l = LayerDesc::conv("a", 1, 1, 3, 1, 1, 128);
        assert_eq!(clipped_input_dims(&l, 32), [32; 3]);
        assert_eq!(clipped_input_dims(&l, 1), [1; 3]);
        let unpadded = LayerDesc::conv("b", 1, 1, 3, 1, 0, 128);
        assert_eq!(clipped_input_dims(&unpadded, 1), [3; 3]);
    }

    #[test]
    fn compress_replaces_eligible_weights() {
        let model = synthetic_model(&small_arch(), 1, Dtype::F64).unwrap();
        let out = compress_model(&model, &CompressOptions::new(RankPolicy::new(0.5, 2).unwrap())).unwrap();
        let names: Vec<&str> = out.names().collect();
        assert_eq!(
            names,
            ["a.u_in", "a.core", "a.u_out", "b.u_in", "b.core", "b.u_out", "b.bias", "pw.weight", "up.weight"]
        );
        let m = ModelManifest::parse(&out.manifest).unwrap();
        assert_eq!(m.compressed.len(), 2);
        assert_eq!(m.compressed[0].ranks, [4, 2]);
    }

    #[test]
    fn full_rank_verifies() {
        let model = synthetic_model(&small_arch(), 2, Dtype::F64).unwrap();
        let opts = CompressOptions {
            eligibility: Eligibility { pointwise: true, transposed: true },
            ..CompressOptions::new(RankPolicy::new(1.0, 1).unwrap())
        };
        let out = compress_model(&model, &opts).unwrap();
        let report = verify_model(&model, &out, 7, 5).unwrap();
        assert_eq!(report.layers.len(), 4);
        assert!(report.passed());
        assert!(report.max_rel_err <= 1e-9, "{}", report.max_rel_err);
        let up = report.layers.iter().find(|c| c.name == "up").unwrap();
        assert!(up.rel_err_vs_original.is_none());
        assert!((up.explained_variance - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rank_mismatch_detected() {
        let model = synthetic_model(&small_arch(), 3, Dtype::F64).unwrap();
        let out = compress_model(&model, &CompressOptions::new(RankPolicy::new(0.5, 2).unwrap())).unwrap();
        let mut m = ModelManifest::parse(&out.manifest).unwrap();
        m.compressed[0].ranks = [3, 2];
        let l = m.arch.layers[0].clone();
        assert!(matches!(load_factors(&out, &l, Some(&m.compressed[0])), Err(Error::Manifest(_))));
    }

    #[test]
    fn missing_bias_detected() {
        let arch = small_arch();
        let mut model = synthetic_model(&arch, 4, Dtype::F64).unwrap();
        model.tensors.retain(|t| t.name != "b.bias");
        assert!(load_bias(&model, &arch.layers[1]).is_err());
    }

    #[test]
    fn hooi_option_recorded() {
        let model = synthetic_model(&small_arch(), 5, Dtype::F32).unwrap();
        let mut opts = CompressOptions::new(RankPolicy::new(0.5, 2).unwrap());
        opts.hooi = Some((5, 1e-6));
        let out = compress_model(&model, &opts).unwrap();
        let m = ModelManifest::parse(&out.manifest).unwrap();
        assert!(m.compressed.iter().all(|c| c.method == FitMethod::Hooi));
        assert_eq!(out.get("a.core").unwrap().dtype(), Dtype::F64);
        assert_eq!(out.get("pw.weight").unwrap().dtype(), Dtype::F32);
    }
}
