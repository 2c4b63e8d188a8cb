//! Config-driven experiment pipeline: gen-measure -> fourier -> decay-fit ->
//! mollify -> lambda -> search, with a manifest recording every output hash
//! and the seed. Identical config and seed produce byte-identical manifests.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use salem_core::configsearch::{search_configurations, PointSet, DEFAULT_SEARCH_CAP};
use salem_core::fractal::{
    decay_exponent_fit, fourier_transform, gen_radial_product, gen_random_cantor, mollify_split,
    CantorMode, CantorParams, FourierSample, GridDensity, GridMeasure,
};
use salem_core::multiform::{
    lambda_direct, lambda_fourier, Density, DirectQuadrature, Flag, FourierEval, LambdaResult,
};

use crate::formats;
use crate::sysspec::SystemSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    pub system: SystemSpec,
    #[serde(default)]
    pub gen_measure: Option<GenMeasureStep>,
    #[serde(default)]
    pub fourier: Option<FourierStep>,
    #[serde(default)]
    pub decay_fit: Option<DecayFitStep>,
    #[serde(default)]
    pub mollify: Option<MollifyStep>,
    #[serde(default)]
    pub lambda: Option<LambdaStep>,
    #[serde(default)]
    pub search: Option<SearchStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenMeasureStep {
    /// "cantor" or "radial".
    pub mode: String,
    pub n: usize,
    pub subdivision: usize,
    pub keep: usize,
    pub stages: u32,
    pub grid: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierStep {
    pub xi_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFitStep {
    pub window: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MollifyStep {
    pub n_moll: usize,
    pub xi_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FunctionSpec {
    /// Tensor bump supported on `[lo, hi]` per axis, tabulated at `cells`.
    Bump { lo: f64, hi: f64, cells: usize },
    /// Indicator of the unit box.
    UnitBox,
    /// Indicator of a Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaStep {
    pub f: FunctionSpec,
    pub grid: usize,
    pub trunc_r: f64,
    pub quad_q: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchStep {
    pub y_resolution: usize,
    #[serde(default)]
    pub exclusion_threshold: Option<f64>,
    #[serde(default)]
    pub cap: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct StepRecord {
    pub step: String,
    pub outputs: Vec<OutputRecord>,
    pub summary: Value,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub config_sha256: String,
    pub steps: Vec<StepRecord>,
    /// Direct/frequency-side agreement of the lambda step, when both ran.
    pub lambda_agreement: Option<bool>,
}

fn record(out_dir: &Path, step: &str, files: &[&str], summary: Value) -> Result<StepRecord> {
    let mut outputs = Vec::new();
    for f in files {
        outputs.push(OutputRecord {
            file: (*f).to_string(),
            sha256: formats::sha256_file(&out_dir.join(f))?,
        });
    }
    Ok(StepRecord { step: step.to_string(), outputs, summary })
}

fn lambda_summary(r: &LambdaResult) -> Value {
    json!({
        "value": r.value,
        "imag": r.imag,
        "method": r.method,
        "truncation": r.truncation,
        "quad_points": r.quad_points,
        "est_error": if r.est_error.is_finite() { json!(r.est_error) } else { json!("inf") },
        "flags": r.flags,
    })
}

/// Runs every step present in the config, in canonical order, writing
/// outputs and `manifest.json` under `out_dir`.
pub fn run_pipeline(config_path: &Path, out_dir: &Path) -> Result<Manifest> {
    let config_text =
        fs::read_to_string(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let config: RunConfig = serde_json::from_str(&config_text).context("parsing pipeline config")?;
    fs::create_dir_all(out_dir)?;
    let config_sha256 = formats::sha256_file(config_path)?;
    let (sys, exclusions) = config.system.build().context("step system")?;
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut measure: Option<GridMeasure> = None;
    let mut sample: Option<FourierSample> = None;
    let mut lambda_agreement: Option<bool> = None;

    if let Some(g) = &config.gen_measure {
        let params = CantorParams {
            n: if g.mode == "radial" { 1 } else { g.n },
            subdivision: g.subdivision,
            keep: g.keep,
            stages: g.stages,
            seed: config.seed,
            mode: if g.mode == "radial" {
                CantorMode::RadialProduct
            } else {
                CantorMode::IndependentUniform
            },
        };
        let mu = match g.mode.as_str() {
            "cantor" => gen_random_cantor(&params, g.grid),
            "radial" => gen_radial_product(&params, g.n, g.grid),
            other => bail!("step gen-measure: unknown mode {other:?}"),
        }
        .map_err(|e| anyhow!("step gen-measure: {e}"))?;
        formats::save_measure(&out_dir.join("measure.grid"), &mu).context("step gen-measure")?;
        let summary = json!({
            "seed": config.seed,
            "support_cells": mu.support_cells().len(),
            "total_mass": mu.total_mass(),
        });
        steps.push(record(out_dir, "gen-measure", &["measure.grid"], summary)?);
        measure = Some(mu);
    }

    if let Some(f) = &config.fourier {
        let mu = measure.as_ref().ok_or_else(|| anyhow!("step fourier: no measure available"))?;
        let s = fourier_transform(mu, f.xi_max).map_err(|e| anyhow!("step fourier: {e}"))?;
        formats::save_fourier_csv(&out_dir.join("fourier.csv"), &s).context("step fourier")?;
        let summary = json!({"seed": config.seed, "xi_max": f.xi_max, "values": s.len()});
        steps.push(record(out_dir, "fourier", &["fourier.csv"], summary)?);
        sample = Some(s);
    }

    if let Some(dstep) = &config.decay_fit {
        let s = sample.as_ref().ok_or_else(|| anyhow!("step decay-fit: no transform available"))?;
        let fit = decay_exponent_fit(s, dstep.window).map_err(|e| anyhow!("step decay-fit: {e}"))?;
        formats::write_json(&out_dir.join("decay_fit.json"), &fit).context("step decay-fit")?;
        let summary = json!({"seed": config.seed, "beta_hat": fit.beta_hat, "c_hat": fit.c_hat});
        steps.push(record(out_dir, "decay-fit", &["decay_fit.json"], summary)?);
    }

    if let Some(mstep) = &config.mollify {
        let mu = measure.as_ref().ok_or_else(|| anyhow!("step mollify: no measure available"))?;
        let (mu1, mu2hat) =
            mollify_split(mu, mstep.n_moll, mstep.xi_max).map_err(|e| anyhow!("step mollify: {e}"))?;
        formats::save_density(&out_dir.join("mu1.grid"), &mu1).context("step mollify")?;
        formats::save_fourier_csv(&out_dir.join("mu2_hat.csv"), &mu2hat).context("step mollify")?;
        let summary = json!({
            "seed": config.seed,
            "n_moll": mstep.n_moll,
            "mu1_integral": mu1.integral(),
            "mu1_sup": mu1.max_value(),
        });
        steps.push(record(out_dir, "mollify", &["mu1.grid", "mu2_hat.csv"], summary)?);
    }

    if let Some(l) = &config.lambda {
        let n = sys.n();
        let (density, hat): (Density, Option<GridDensity>) = match &l.f {
            FunctionSpec::Bump { lo, hi, cells } => {
                let g = GridDensity::bump(n, *cells, *lo, *hi).map_err(|e| anyhow!("step lambda: {e}"))?;
                (Density::Sampled(g.clone()), Some(g))
            }
            FunctionSpec::UnitBox => {
                (Density::BoxIndicator { lo: vec![0.0; n], hi: vec![1.0; n] }, None)
            }
            FunctionSpec::Ball { center, radius } => {
                (Density::BallIndicator { center: center.clone(), radius: *radius }, None)
            }
        };
        let f: Vec<Density> = vec![density; sys.k()];
        let quad = DirectQuadrature { grid: l.grid, mc_samples: 400_000, seed: config.seed };
        let direct = lambda_direct(&sys, &f, &quad).map_err(|e| anyhow!("step lambda: {e}"))?;
        let mut summary = json!({
            "seed": config.seed,
            "direct": lambda_summary(&direct),
            "exact_zero": direct.flags.contains(&Flag::IntervalEmpty),
        });
        if let Some(g) = &hat {
            let evals: Vec<&dyn FourierEval> = (0..sys.k()).map(|_| g as &dyn FourierEval).collect();
            let fourier = lambda_fourier(&sys, &evals, l.trunc_r, l.quad_q)
                .map_err(|e| anyhow!("step lambda: {e}"))?;
            let denom = direct.value.abs().max(1e-12);
            let rel = (fourier.value - direct.value).abs() / denom;
            let agree = rel <= 0.05;
            lambda_agreement = Some(agree);
            summary["fourier"] = lambda_summary(&fourier);
            summary["rel_diff"] = json!(rel);
            summary["agreement"] = json!(agree);
        }
        formats::write_json(&out_dir.join("lambda.json"), &summary).context("step lambda")?;
        steps.push(record(out_dir, "lambda", &["lambda.json"], summary)?);
    }

    if let Some(srch) = &config.search {
        let mu = measure.as_ref().ok_or_else(|| anyhow!("step search: no measure available"))?;
        let cells = mu.cells_per_axis();
        let occupied: Vec<bool> = mu.weights().iter().map(|&w| w > 0.0).collect();
        let set = PointSet::from_grid(sys.n(), cells, &occupied)
            .map_err(|e| anyhow!("step search: {e}"))?;
        let threshold = srch
            .exclusion_threshold
            .unwrap_or(2.0 / (srch.y_resolution.max(2) - 1) as f64);
        let hits = search_configurations(
            &sys,
            &set,
            &exclusions,
            srch.y_resolution,
            threshold,
            srch.cap.unwrap_or(DEFAULT_SEARCH_CAP),
        )
        .map_err(|e| anyhow!("step search: {e}"))?;
        formats::save_hits_csv(&out_dir.join("hits.csv"), sys.n(), sys.m() - sys.n(), &hits)
            .context("step search")?;
        let summary = json!({
            "seed": config.seed,
            "hits": hits.len(),
            "threshold": threshold,
            "best_max_dist": hits.first().map(|h| h.max_dist),
        });
        steps.push(record(out_dir, "search", &["hits.csv"], summary)?);
    }

    let manifest = Manifest {
        name: config.name.clone(),
        seed: config.seed,
        config_sha256,
        steps,
        lambda_agreement,
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
