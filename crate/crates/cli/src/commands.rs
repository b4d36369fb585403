use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use tuckerforge::cost::{sweep_table, Eligibility};
use tuckerforge::fast::{DirectPlan, ForwardPass, TuckerPlan};
use tuckerforge::harness::{time_interleaved, to_csv, BenchResult, Candidate, Workload};
use tuckerforge::model::{
    clipped_input_dims, compress_model, load_factors, load_kernel, synthetic_model, verify_model, CompressOptions, ModelManifest,
    VerifyReport, IDENTITY_TOL,
};
use tuckerforge::prune::sparsity;
use tuckerforge::tucker::format_significant;
use tuckerforge::*;

use crate::args::*;

fn eligibility(a: EligibilityArgs) -> Eligibility {
    Eligibility { pointwise: a.include_pointwise, transposed: a.include_transposed }
}

fn read(path: &Path) -> Result<Container> {
    read_container(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, c: &Container) -> Result<()> {
    write_container(path, c).with_context(|| format!("writing {}", path.display()))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn percent(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

pub fn compress(a: &CompressArgs) -> Result<String> {
    let policy = RankPolicy::new(a.ranks.df, a.ranks.min_rank)?;
    if a.hooi && (a.hooi_iters == 0 || a.hooi_tol.is_nan() || a.hooi_tol < 0.0) {
        bail!("--hooi-iters must be positive and --hooi-tol non-negative");
    }
    let input = read(&a.input)?;
    let opts = CompressOptions {
        policy,
        eligibility: eligibility(a.eligibility),
        hooi: a.hooi.then_some((a.hooi_iters, a.hooi_tol)),
    };
    let out = compress_model(&input, &opts)?;
    write(&a.output, &out)?;

    let manifest = ModelManifest::parse(&out.manifest)?;
    Ok(match a.format {
        Format::Json => json(&manifest.compressed),
        Format::Csv => {
            let mut s = String::from("layer,t_o,t_i,explained_variance,params_orig,params_tucker\n");
            for c in &manifest.compressed {
                let ev = format_significant(c.explained_variance, 12);
                let _ = writeln!(s, "{},{},{},{ev},{},{}", c.name, c.ranks[0], c.ranks[1], c.params_orig, c.params_tucker);
            }
            s
        }
        Format::Table => {
            let mut s = format!("{:<24} {:>9} {:>10} {:>12} {:>12}\n", "layer", "ranks", "EV", "params", "tucker");
            for c in &manifest.compressed {
                let ranks = format!("{}x{}", c.ranks[0], c.ranks[1]);
                let _ = writeln!(
                    s,
                    "{:<24} {ranks:>9} {:>10.6} {:>12} {:>12}{}",
                    c.name,
                    c.explained_variance,
                    c.params_orig,
                    c.params_tucker,
                    if c.pointwise { "  (pointwise)" } else { "" }
                );
            }
            let _ = write!(s, "{} layers decomposed, written to {}", manifest.compressed.len(), a.output.display());
            s
        }
    })
}

/// Architecture from a JSON description or a container manifest.
fn load_arch(path: &Path) -> Result<ArchDesc> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(tuckerforge::container::MAGIC) {
        let c = Container::decode(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        return Ok(ModelManifest::parse(&c.manifest)?.arch);
    }
    let text = String::from_utf8(bytes).map_err(|_| anyhow!("{} is neither JSON nor a container", path.display()))?;
    Ok(ArchDesc::from_json(&text)?)
}

pub fn analyze(a: &AnalyzeArgs) -> Result<String> {
    let arch = match &a.input {
        Some(p) => load_arch(p)?,
        None => ArchDesc::unet_like(),
    };
    if a.df.is_empty() {
        bail!("--df needs at least one value");
    }
    let reports = a
        .df
        .iter()
        .map(|&df| {
            let r = tuckerforge::cost::analyze_arch_with(&arch, &RankPolicy::new(df, a.min_rank)?, eligibility(a.eligibility))?;
            Ok(if a.flops_double { r.doubled_flops() } else { r })
        })
        .collect::<Result<Vec<CostReport>>>()?;
    Ok(match a.format {
        Format::Json if reports.len() == 1 => reports[0].to_json(),
        Format::Json => json(&reports),
        Format::Table if reports.len() == 1 => reports[0].to_table(),
        Format::Table => sweep_table(&reports),
        Format::Csv => {
            let unit = &reports[0].flop_unit;
            let mut s = format!("df,layer,kind,t_o,t_i,params_orig,params_tucker,{0}_orig,{0}_tucker\n", unit.to_lowercase());
            for r in &reports {
                for l in &r.layers {
                    let (t_o, t_i) = l.ranks.map_or((String::new(), String::new()), |(o, i)| (o.to_string(), i.to_string()));
                    let _ = writeln!(
                        s,
                        "{},{},{},{t_o},{t_i},{},{},{},{}",
                        r.df,
                        l.name,
                        l.kind.as_str(),
                        l.params_orig,
                        l.params_tucker,
                        l.flops_orig,
                        l.flops_tucker
                    );
                }
                let _ = writeln!(s, "{},total,,,,{},{},{},{}", r.df, r.params_orig, r.params_tucker, r.flops_orig, r.flops_tucker);
            }
            s
        }
    })
}

fn verify_text(r: &VerifyReport, format: Format) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |e| format!("{e:.3e}"));
    match format {
        Format::Json => json(r),
        Format::Csv => {
            let mut s = String::from("layer,t_o,t_i,explained_variance,rel_err_vs_original,rel_err_vs_reconstruction\n");
            for l in &r.layers {
                let csv_opt = |v: Option<f64>| v.map_or(String::new(), |e| format!("{e:e}"));
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    l.name,
                    l.ranks[0],
                    l.ranks[1],
                    format_significant(l.explained_variance, 12),
                    csv_opt(l.rel_err_vs_original),
                    csv_opt(l.rel_err_vs_reconstruction)
                );
            }
            s
        }
        Format::Table => {
            let mut s = format!("{:<24} {:>9} {:>10} {:>12} {:>12}\n", "layer", "ranks", "EV", "vs orig", "identity");
            for l in &r.layers {
                let ranks = format!("{}x{}", l.ranks[0], l.ranks[1]);
                let _ = writeln!(
                    s,
                    "{:<24} {ranks:>9} {:>10.6} {:>12} {:>12}",
                    l.name,
                    l.explained_variance,
                    opt(l.rel_err_vs_original),
                    opt(l.rel_err_vs_reconstruction)
                );
            }
            let _ = write!(
                s,
                "max relative error {:.3e}; factorized identity {:.3e} ({})",
                r.max_rel_err,
                r.max_identity_err,
                if r.passed() { "ok" } else { "FAILED" }
            );
            s
        }
    }
}

pub fn verify(a: &VerifyArgs) -> Result<String> {
    if a.extent == 0 {
        bail!("--extent must be positive");
    }
    let report = verify_model(&read(&a.original)?, &read(&a.compressed)?, a.seed, a.extent)?;
    let text = verify_text(&report, a.format);
    if !report.passed() {
        bail!(
            "{text}\nfactorized output deviates from the reconstructed kernel by {:.3e} (> {IDENTITY_TOL:e})",
            report.max_identity_err
        );
    }
    Ok(text)
}

pub fn ev_grid_cmd(a: &EvGridArgs) -> Result<String> {
    let c = read(&a.input)?;
    let manifest = ModelManifest::parse(&c.manifest)?;
    let layer = manifest
        .arch
        .layer(&a.layer)
        .ok_or_else(|| anyhow!("no layer named '{}'", a.layer))?;
    let k = load_kernel(&c, layer)?;
    let all = |n: usize| (1..=n).collect::<Vec<_>>();
    let t_o = if a.grid_to.is_empty() { all(k.out_channels()) } else { a.grid_to.clone() };
    let t_i = if a.grid_ti.is_empty() { all(k.in_channels()) } else { a.grid_ti.clone() };
    let csv = ev_grid(&k, &t_o, &t_i)?.to_csv();
    match &a.output {
        Some(p) => {
            std::fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?;
            Ok(format!("wrote {}×{} grid for '{}' to {}", t_o.len(), t_i.len(), a.layer, p.display()))
        }
        None => Ok(csv.trim_end().to_string()),
    }
}

#[derive(serde::Serialize)]
struct PrunedLayer {
    name: String,
    channels_zeroed: usize,
    sparsity: f64,
}

pub fn prune(a: &PruneArgs) -> Result<String> {
    let spec = PruneSpec::new(a.fraction)?;
    let mut c = read(&a.input)?;
    let manifest = ModelManifest::parse(&c.manifest)?;
    if !manifest.compressed.is_empty() {
        bail!("pruning applies to uncompressed weights");
    }
    let elig = eligibility(a.eligibility);
    let mut report = Vec::new();
    let (mut zeros, mut total) = (0.0, 0usize);
    for l in &manifest.arch.layers {
        let k = load_kernel(&c, l)?;
        let out = if elig.accepts(l) {
            let p = prune_channels(&k, &spec);
            report.push(PrunedLayer { name: l.name.clone(), channels_zeroed: spec.count(l.out_channels), sparsity: sparsity(&p) });
            p
        } else {
            k
        };
        zeros += sparsity(&out) * out.tensor().len() as f64;
        total += out.tensor().len();
        let name = tuckerforge::model::weight_name(&l.name);
        let slot = c.tensors.iter_mut().find(|t| t.name == name).expect("kernel was loaded from this container");
        let dtype = slot.tensor.dtype();
        slot.tensor = out.into_tensor().with_dtype_tag(dtype);
    }
    write(&a.output, &c)?;
    let overall = zeros / total.max(1) as f64;
    Ok(match a.format {
        Format::Json => json(&serde_json::json!({ "fraction": a.fraction, "layers": report, "sparsity": overall })),
        Format::Csv => {
            let mut s = String::from("layer,channels_zeroed,sparsity\n");
            for l in &report {
                let _ = writeln!(s, "{},{},{}", l.name, l.channels_zeroed, l.sparsity);
            }
            s
        }
        Format::Table => {
            let mut s = format!("{:<24} {:>8} {:>10}\n", "layer", "zeroed", "sparsity");
            for l in &report {
                let _ = writeln!(s, "{:<24} {:>8} {:>10}", l.name, l.channels_zeroed, percent(l.sparsity));
            }
            let _ = write!(s, "parameter sparsity {} over all kernels, written to {}", percent(overall), a.output.display());
            s
        }
    })
}

fn random_input(rng: &mut XorShift64Star, n: usize) -> Vec<f32> {
    rng.fill_uniform(n).into_iter().map(|v| v as f32).collect()
}

/// Forward pass over every executable layer of `model`; layers with factors
/// in `factors_from` run factorized.
fn model_workloads(
    model: &Container,
    factors_from: Option<&Container>,
    extent: usize,
    seed: u64,
    parallel: bool,
) -> Result<Vec<Workload>> {
    let arch = ModelManifest::parse(&model.manifest)?.arch;
    let compressed = factors_from.map(|c| ModelManifest::parse(&c.manifest)).transpose()?;
    let mut rng = XorShift64Star::new(seed);
    let mut out = Vec::new();
    for l in arch.layers.iter().filter(|l| l.kind != LayerKind::ConvTranspose3d) {
        let dims = clipped_input_dims(l, extent);
        let input = random_input(&mut rng, l.in_channels * dims.iter().product::<usize>());
        let entry = compressed.as_ref().and_then(|m| m.compressed_layer(&l.name));
        let pass: Box<dyn ForwardPass> = match (entry, factors_from) {
            (Some(e), Some(c)) => Box::new(TuckerPlan::new(&load_factors(c, l, Some(e))?, l.spec(), dims, parallel)?),
            _ => Box::new(DirectPlan::new(&load_kernel(model, l)?, l.spec(), dims, parallel)?),
        };
        out.push(Workload::new(pass, input)?);
    }
    Ok(out)
}

pub fn bench(a: &BenchArgs, threads: usize) -> Result<String> {
    if a.df.is_empty() || a.channels == 0 || a.kernel == 0 || a.extent == 0 {
        bail!("--df, --channels, --kernel and --extent need positive values");
    }
    if a.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let parallel = threads > 1;
    let mut candidates = Vec::new();
    match &a.model {
        Some(path) => {
            let model = read(path)?;
            candidates.push(Candidate::new("direct", None, model_workloads(&model, None, a.extent, a.seed, parallel)?));
            for &df in &a.df {
                let comp = compress_model(&model, &CompressOptions::new(RankPolicy::new(df, a.min_rank)?))?;
                let layers = model_workloads(&model, Some(&comp), a.extent, a.seed, parallel)?;
                candidates.push(Candidate::new("tucker", Some(df), layers));
            }
        }
        None => {
            let (c, k, e) = (a.channels, a.kernel, a.extent);
            if e < k {
                bail!("--extent {e} is smaller than --kernel {k}");
            }
            let mut rng = XorShift64Star::new(a.seed);
            let n = c * c * k * k * k;
            let kernel = ConvKernel::conv3d(DenseTensor::new(vec![c, c, k, k, k], rng.fill_uniform(n))?)?;
            let spec = ConvSpec::uniform(1, k / 2)?;
            let dims = [e; 3];
            let input = random_input(&mut rng, c * e * e * e);
            let direct = DirectPlan::new(&kernel, spec, dims, parallel)?;
            candidates.push(Candidate::new("direct", None, vec![Workload::new(Box::new(direct), input.clone())?]));
            for &df in &a.df {
                let (t_o, t_i) = select_ranks(&RankPolicy::new(df, a.min_rank)?, c, c);
                let plan = TuckerPlan::new(&hosvd_partial(&kernel, t_o, t_i)?, spec, dims, parallel)?;
                candidates.push(Candidate::new("tucker", Some(df), vec![Workload::new(Box::new(plan), input.clone())?]));
            }
        }
    }
    let mut results = time_interleaved(&mut candidates, a.runs, a.warmup)?;
    let base = results[0].clone();
    for r in results.iter_mut() {
        r.speedup = Some(speedup(&base, r)?);
    }
    Ok(bench_text(&results, a.format))
}

fn bench_text(results: &[BenchResult], format: Format) -> String {
    match format {
        Format::Csv => to_csv(results).trim_end().to_string(),
        Format::Json => json(&results),
        Format::Table => {
            let mut s = format!("{:<8} {:>5} {:>5} {:>12} {:>10} {:>8}\n", "label", "df", "runs", "mean ms", "std ms", "speedup");
            for r in results {
                let df = r.df.map_or("-".to_string(), |d| d.to_string());
                let sp = r.speedup.map_or("-".to_string(), |v| format!("{v:.2}x"));
                let _ = writeln!(s, "{:<8} {df:>5} {:>5} {:>12.3} {:>10.3} {sp:>8}", r.label, r.runs, r.mean_ms, r.std_ms);
            }
            s.trim_end().to_string()
        }
    }
}

pub fn synth(a: &SynthArgs) -> Result<String> {
    let arch = match &a.arch {
        Some(p) => load_arch(p)?,
        None => ArchDesc::unet_like(),
    };
    let dtype = if a.f64 { Dtype::F64 } else { Dtype::F32 };
    let c = synthetic_model(&arch, a.seed, dtype)?;
    write(&a.output, &c)?;
    let params: usize = c.tensors.iter().map(|t| t.tensor.len()).sum();
    Ok(format!("{} layers, {params} parameters, written to {}", arch.layers.len(), a.output.display()))
}
