//! Analytic parameter and FLOP accounting.
//!
//! One FLOP unit is one multiply-accumulate. For a layer with `I` inputs,
//! `O` outputs, kernel volume `K³`, input volume `HWD` and output volume
//! `H'W'D'`:
//!
//! | path   | parameters                    | MACs                                      |
//! |--------|-------------------------------|-------------------------------------------|
//! | direct | `O·I·K³`                      | `O·I·K³·H'W'D'`                           |
//! | tucker | `T_I·I + T_O·T_I·K³ + O·T_O`  | `T_I·I·HWD + T_O·T_I·K³·H'W'D' + O·T_O·H'W'D'` |

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conv::{output_dims, ConvSpec};
use crate::error::{Error, Result};
use crate::tucker::{select_ranks, RankPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv3d,
    #[serde(alias = "conv_transpose3d")]
    ConvTranspose3d,
    Pointwise,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv3d => "conv3d",
            LayerKind::ConvTranspose3d => "convtranspose3d",
            LayerKind::Pointwise => "pointwise",
        }
    }
}

fn zeros_mode() -> String {
    "zeros".to_string()
}

fn unit_stride() -> [usize; 3] {
    [1; 3]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub name: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    #[serde(default = "unit_stride")]
    pub stride: [usize; 3],
    #[serde(default)]
    pub padding: [usize; 3],
    pub input_dims: [usize; 3],
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub bias: bool,
    #[serde(default = "zeros_mode")]
    pub padding_mode: String,
}

impl LayerDesc {
    pub fn conv(name: &str, in_channels: usize, out_channels: usize, k: usize, stride: usize, padding: usize, input: usize) -> Self {
        let kind = if k == 1 { LayerKind::Pointwise } else { LayerKind::Conv3d };
        Self {
            name: name.to_string(),
            kind,
            in_channels,
            out_channels,
            kernel: [k; 3],
            stride: [stride; 3],
            padding: [padding; 3],
            input_dims: [input; 3],
            bias: false,
            padding_mode: zeros_mode(),
        }
    }

    pub fn transposed(name: &str, in_channels: usize, out_channels: usize, k: usize, stride: usize, input: usize) -> Self {
        Self {
            kind: LayerKind::ConvTranspose3d,
            ..Self::conv(name, in_channels, out_channels, k, stride, 0, input)
        }
    }

    pub fn spec(&self) -> ConvSpec {
        ConvSpec { stride: self.stride, padding: self.padding }
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn is_pointwise(&self) -> bool {
        self.kind == LayerKind::Pointwise || self.kernel == [1; 3]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Manifest(format!("layer '{}': {msg}", self.name)));
        if self.name.is_empty() {
            return Err(Error::Manifest("layer with empty name".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.kernel.contains(&0) || self.input_dims.contains(&0) {
            return bad("kernel and input extents must be positive".into());
        }
        if self.stride.contains(&0) {
            return bad("stride must be positive".into());
        }
        if self.padding_mode != "zeros" {
            return bad(format!("unsupported padding mode '{}' (only zero padding)", self.padding_mode));
        }
        self.output_dims().map(|_| ())
    }

    /// Spatial output extents. Transposed layers use
    /// `(H − 1)·S − 2P + K`.
    pub fn output_dims(&self) -> Result<[usize; 3]> {
        match self.kind {
            LayerKind::ConvTranspose3d => {
                let mut out = [0; 3];
                for (a, o) in out.iter_mut().enumerate() {
                    let full = (self.input_dims[a] - 1) * self.stride[a] + self.kernel[a];
                    if full <= 2 * self.padding[a] {
                        return Err(Error::Geometry(format!("layer '{}': empty transposed output", self.name)));
                    }
                    *o = full - 2 * self.padding[a];
                }
                Ok(out)
            }
            _ => output_dims(self.input_dims, self.kernel, &self.spec()),
        }
    }

    /// `(large, small)` volumes used by the FLOP formulas. Transposed layers
    /// are costed as the forward convolution they are the adjoint of, with
    /// their output volume as the large side.
    fn cost_volumes(&self) -> Result<(u64, u64)> {
        let input = volume(self.input_dims);
        let output = volume(self.output_dims()?);
        Ok(match self.kind {
            LayerKind::ConvTranspose3d => (output, input),
            _ => (input, output),
        })
    }
}

fn volume(d: [usize; 3]) -> u64 {
    d.iter().map(|&x| x as u64).product()
}

/// `O·I·K_H·K_W·K_D`; bias excluded.
pub fn params_direct(l: &LayerDesc) -> u64 {
    l.out_channels as u64 * l.in_channels as u64 * l.kernel_volume() as u64
}

/// `T_I·I + T_O·T_I·K³ + O·T_O`.
pub fn params_tucker(l: &LayerDesc, t_o: usize, t_i: usize) -> u64 {
    let (o, i, t_o, t_i) = (l.out_channels as u64, l.in_channels as u64, t_o as u64, t_i as u64);
    t_i * i + t_o * t_i * l.kernel_volume() as u64 + o * t_o
}

/// `O·I·K³·H'W'D'` MACs.
pub fn flops_direct(l: &LayerDesc) -> Result<u64> {
    let (_, out) = l.cost_volumes()?;
    Ok(params_direct(l) * out)
}

/// `T_I·I·HWD + T_O·T_I·K³·H'W'D' + O·T_O·H'W'D'` MACs. The first stage runs
/// at the input resolution.
pub fn flops_tucker(l: &LayerDesc, t_o: usize, t_i: usize) -> Result<u64> {
    let (input, out) = l.cost_volumes()?;
    let (o, i, t_o, t_i) = (l.out_channels as u64, l.in_channels as u64, t_o as u64, t_i as u64);
    Ok(t_i * i * input + t_o * t_i * l.kernel_volume() as u64 * out + o * t_o * out)
}

pub fn compression_ratio(p_orig: u64, p_comp: u64) -> Result<f64> {
    if p_comp == 0 {
        return Err(Error::InvalidArgument("compressed parameter count is zero".into()));
    }
    Ok(p_orig as f64 / p_comp as f64)
}

/// Which layer kinds are replaced by Tucker layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Eligibility {
    pub pointwise: bool,
    pub transposed: bool,
}

impl Eligibility {
    pub fn accepts(&self, l: &LayerDesc) -> bool {
        match l.kind {
            LayerKind::ConvTranspose3d => self.transposed,
            _ if l.is_pointwise() => self.pointwise,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchDesc {
    #[serde(default)]
    pub model: String,
    pub layers: Vec<LayerDesc>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ArchFile {
    Labeled(ArchDesc),
    Bare(Vec<LayerDesc>),
}

impl ArchDesc {
    pub fn new(model: impl Into<String>, layers: Vec<LayerDesc>) -> Result<Self> {
        let arch = Self { model: model.into(), layers };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for l in &self.layers {
            if !seen.insert(l.name.as_str()) {
                return Err(Error::Manifest(format!("duplicate layer name '{}'", l.name)));
            }
            l.validate()?;
        }
        Ok(())
    }

    /// Accepts either `{"model": ..., "layers": [...]}` or a bare layer array.
    pub fn from_json(text: &str) -> Result<Self> {
        let arch = match serde_json::from_str::<ArchFile>(text)? {
            ArchFile::Labeled(a) => a,
            ArchFile::Bare(layers) => ArchDesc { model: String::new(), layers },
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("arch serializes")
    }

    pub fn layer(&self, name: &str) -> Option<&LayerDesc> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// A six-level 3-D U-Net in the nnU-Net mould: two 3³ convolutions per
    /// level, stride-2 downsampling, transposed-convolution upsampling, skip
    /// concatenation and a pointwise segmentation head. Input 1×128³.
    pub fn unet_like() -> Self {
        const WIDTHS: [usize; 6] = [32, 64, 128, 256, 320, 320];
        const PATCH: usize = 128;
        const CLASSES: usize = 25;
        let mut layers = Vec::new();
        let mut res = PATCH;
        let mut prev = 1;
        for (s, &c) in WIDTHS.iter().enumerate() {
            let stride = if s == 0 { 1 } else { 2 };
            layers.push(LayerDesc::conv(&format!("enc{s}.conv1"), prev, c, 3, stride, 1, res));
            res /= stride;
            layers.push(LayerDesc::conv(&format!("enc{s}.conv2"), c, c, 3, 1, 1, res));
            prev = c;
        }
        for s in (0..WIDTHS.len() - 1).rev() {
            let c = WIDTHS[s];
            layers.push(LayerDesc::transposed(&format!("dec{s}.up"), prev, c, 2, 2, res));
            res *= 2;
            layers.push(LayerDesc::conv(&format!("dec{s}.conv1"), 2 * c, c, 3, 1, 1, res));
            layers.push(LayerDesc::conv(&format!("dec{s}.conv2"), c, c, 3, 1, 1, res));
            prev = c;
        }
        layers.push(LayerDesc::conv("head", prev, CLASSES, 1, 1, 0, res));
        Self { model: "unet-like".into(), layers }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub kind: LayerKind,
    /// `(T_O, T_I)` when the layer is decomposed.
    pub ranks: Option<(usize, usize)>,
    pub params_orig: u64,
    pub params_tucker: u64,
    pub flops_orig: u64,
    pub flops_tucker: u64,
    pub bias_params: u64,
    pub pointwise: bool,
    /// Transposed layers are costed through the forward-equivalent formula.
    pub flops_approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub model: String,
    pub df: f64,
    pub min_rank: usize,
    pub flop_unit: String,
    pub layers: Vec<LayerCost>,
    pub params_orig: u64,
    pub params_tucker: u64,
    pub flops_orig: u64,
    pub flops_tucker: u64,
    /// `1 − tucker/orig` for parameters.
    pub param_delta: f64,
    /// `1 − tucker/orig` for FLOPs.
    pub flop_delta: f64,
    pub compression_ratio: f64,
}

pub fn analyze_arch(a: &ArchDesc, policy: &RankPolicy) -> Result<CostReport> {
    analyze_arch_with(a, policy, Eligibility::default())
}

/// Per-layer rank selection and cost totals. Layers rejected by
/// `eligibility` keep their original cost on both sides.
pub fn analyze_arch_with(a: &ArchDesc, policy: &RankPolicy, eligibility: Eligibility) -> Result<CostReport> {
    a.validate()?;
    let mut layers = Vec::with_capacity(a.layers.len());
    for l in &a.layers {
        let params_orig = params_direct(l);
        let flops_orig = flops_direct(l)?;
        let (ranks, params_tucker, flops_tucker) = if eligibility.accepts(l) {
            let (t_o, t_i) = select_ranks(policy, l.out_channels, l.in_channels);
            (Some((t_o, t_i)), params_tucker(l, t_o, t_i), flops_tucker(l, t_o, t_i)?)
        } else {
            (None, params_orig, flops_orig)
        };
        layers.push(LayerCost {
            name: l.name.clone(),
            kind: l.kind,
            ranks,
            params_orig,
            params_tucker,
            flops_orig,
            flops_tucker,
            bias_params: if l.bias { l.out_channels as u64 } else { 0 },
            pointwise: l.is_pointwise(),
            flops_approximate: l.kind == LayerKind::ConvTranspose3d && ranks.is_some(),
        });
    }
    CostReport::from_layers(a.model.clone(), policy, layers)
}

impl CostReport {
    fn from_layers(model: String, policy: &RankPolicy, layers: Vec<LayerCost>) -> Result<Self> {
        let params_orig: u64 = layers.iter().map(|l| l.params_orig).sum();
        let params_tucker: u64 = layers.iter().map(|l| l.params_tucker).sum();
        let flops_orig: u64 = layers.iter().map(|l| l.flops_orig).sum();
        let flops_tucker: u64 = layers.iter().map(|l| l.flops_tucker).sum();
        Ok(Self {
            model,
            df: policy.df(),
            min_rank: policy.min_rank(),
            flop_unit: "MAC".into(),
            param_delta: delta(params_orig, params_tucker),
            flop_delta: delta(flops_orig, flops_tucker),
            compression_ratio: compression_ratio(params_orig, params_tucker)?,
            layers,
            params_orig,
            params_tucker,
            flops_orig,
            flops_tucker,
        })
    }

    /// Reports FLOPs as separate multiplies and adds (2 per MAC).
    pub fn doubled_flops(mut self) -> Self {
        for l in &mut self.layers {
            l.flops_orig *= 2;
            l.flops_tucker *= 2;
        }
        self.flops_orig *= 2;
        self.flops_tucker *= 2;
        self.flop_unit = "FLOP".into();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-layer aligned table followed by a total row.
    pub fn to_table(&self) -> String {
        let g = if self.flop_unit == "MAC" { "G-MAC" } else { "G-FLOPs" };
        let mut out = String::new();
        let _ = writeln!(out, "model: {}  df: {}  min_rank: {}", self.model, self.df, self.min_rank);
        let _ = writeln!(
            out,
            "{:<20} {:>11} {:>10} {:>10} {:>9} {:>7} {:>11} {:>11} {:>9}",
            "layer", "ranks", "M-param", "M-tucker", "Δ", "CR", g, "tucker", "Δ"
        );
        for l in &self.layers {
            let ranks = l.ranks.map_or("-".to_string(), |(a, b)| format!("{a}x{b}"));
            let mut flags = String::new();
            if l.pointwise && l.ranks.is_some() {
                flags.push_str(" [pointwise]");
            }
            if l.flops_approximate {
                flags.push_str(" [approx]");
            }
            let _ = writeln!(
                out,
                "{:<20} {:>11} {:>10.4} {:>10.4} {:>8.2}% {:>7.2} {:>11.3} {:>11.3} {:>8.2}%{}",
                l.name,
                ranks,
                l.params_orig as f64 / 1e6,
                l.params_tucker as f64 / 1e6,
                100.0 * delta(l.params_orig, l.params_tucker),
                l.params_orig as f64 / l.params_tucker as f64,
                l.flops_orig as f64 / 1e9,
                l.flops_tucker as f64 / 1e9,
                100.0 * delta(l.flops_orig, l.flops_tucker),
                flags
            );
        }
        let _ = writeln!(
            out,
            "{:<20} {:>11} {:>10.4} {:>10.4} {:>8.2}% {:>7.2} {:>11.3} {:>11.3} {:>8.2}%",
            "total",
            "",
            self.params_orig as f64 / 1e6,
            self.params_tucker as f64 / 1e6,
            100.0 * self.param_delta,
            self.compression_ratio,
            self.flops_orig as f64 / 1e9,
            self.flops_tucker as f64 / 1e9,
            100.0 * self.flop_delta
        );
        out
    }
}

fn delta(orig: u64, new: u64) -> f64 {
    if orig == 0 {
        0.0
    } else {
        1.0 - new as f64 / orig as f64
    }
}

/// One column per downsampling factor, rows M-param / Δ / CR / G-FLOPs / Δ.
pub fn sweep_table(reports: &[CostReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let g = if first.flop_unit == "MAC" { "G-MAC" } else { "G-FLOPs" };
    let mut out = String::new();
    let _ = write!(out, "{:<10} {:>10}", first.model, "original");
    for r in reports {
        let _ = write!(out, " {:>9}", format!("DF {}", r.df));
    }
    out.push('\n');
    let row = |out: &mut String, label: &str, orig: String, cell: &dyn Fn(&CostReport) -> String| {
        let _ = write!(out, "{label:<10} {orig:>10}");
        for r in reports {
            let _ = write!(out, " {:>9}", cell(r));
        }
        out.push('\n');
    };
    row(&mut out, "M-param", format!("{:.2}", first.params_orig as f64 / 1e6), &|r| {
        format!("{:.2}", r.params_tucker as f64 / 1e6)
    });
    row(&mut out, "Δ", "-".into(), &|r| format!("{:.2}%", 100.0 * r.param_delta));
    row(&mut out, "CR", "-".into(), &|r| format!("{:.1}", r.compression_ratio));
    row(&mut out, g, format!("{:.2}", first.flops_orig as f64 / 1e9), &|r| {
        format!("{:.2}", r.flops_tucker as f64 / 1e9)
    });
    row(&mut out, "Δ", "-".into(), &|r| format!("{:.2}%", 100.0 * r.flop_delta));
    out
}
