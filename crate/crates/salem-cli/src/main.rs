//! `salem` — configuration-counting experiments from the command line.
//!
//! Exit codes: 0 success, 1 negative verdict (e.g. a failed non-degeneracy
//! check), 2 usage or input errors. All computation is sequential and
//! deterministic; `--threads` is accepted for compatibility and results are
//! independent of its value.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use salem_cli::{formats, pipeline, sysspec};

use salem_core::approxident::{constant_cp, mollified_limit_check, SurfaceChart};
use salem_core::configsearch::{c_epsilon_measure, search_configurations, DEFAULT_SEARCH_CAP};
use salem_core::fractal::{
    decay_exponent_fit, fourier_transform, gen_radial_product, gen_random_cantor, mollify_split,
    CantorMode, CantorParams, GridDensity,
};
use salem_core::linalg::Mat;
use salem_core::linsys::{check_nondegenerate_capped, DEFAULT_SINGULARITY_TOL};
use salem_core::multiform::{lambda_direct, lambda_fourier, Density, DirectQuadrature, FourierEval};
use sysspec::SystemSpec;

#[derive(Parser)]
#[command(name = "salem", version, about = "Configuration-counting toolkit")]
struct Cli {
    /// Worker parallelism (accepted for compatibility; results are
    /// thread-count independent).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the submatrix non-degeneracy criterion and write a report.
    Nondegen {
        /// Builtin name or system JSON path.
        #[arg(long)]
        system: String,
        #[arg(long, default_value_t = DEFAULT_SINGULARITY_TOL)]
        tol: f64,
        /// Cap on enumerated matrices.
        #[arg(long, default_value_t = 1_000_000)]
        cap: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a random Cantor-type measure.
    GenMeasure {
        /// "cantor" or "radial".
        #[arg(long, default_value = "cantor")]
        mode: String,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        subdivision: usize,
        #[arg(long, default_value_t = 2)]
        keep: usize,
        #[arg(long, default_value_t = 6)]
        stages: u32,
        #[arg(long, default_value_t = 4096)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lattice Fourier transform of a measure, exported as CSV.
    Fourier {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, default_value_t = 64)]
        xi_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the Fourier-decay envelope of a measure.
    DecayFit {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, default_value_t = 256)]
        xi_max: usize,
        /// Window "lo,hi" of |xi| used in the fit.
        #[arg(long, default_value = "8,256")]
        window: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a measure into a smooth density and a rough remainder.
    Mollify {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, default_value_t = 8)]
        n_moll: usize,
        #[arg(long, default_value_t = 64)]
        xi_max: usize,
        #[arg(long)]
        out_mu1: PathBuf,
        #[arg(long)]
        out_mu2_hat: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the counting form directly and on the frequency side.
    Lambda {
        #[arg(long)]
        system: String,
        /// "box", "bump:lo,hi(,cells)", or "ball:c1,..,cn;r".
        #[arg(long, default_value = "box")]
        f: String,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        #[arg(long, default_value_t = 64.0)]
        trunc_r: f64,
        #[arg(long, default_value_t = 4096)]
        quad_q: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force search for non-trivial configurations in a point set.
    Search {
        #[arg(long)]
        system: String,
        /// "points:PATH" (point-set JSON) or "measure:PATH" (support cells).
        #[arg(long)]
        set: String,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 17)]
        y_res: usize,
        /// Minimum distance from every exceptional subspace; defaults to the
        /// y-grid spacing.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SEARCH_CAP)]
        cap: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo measure of the near-integral translation set.
    Cepsilon {
        #[arg(long)]
        system: String,
        /// Integer test vectors, semicolon-separated: "1,0;2,-1".
        #[arg(long)]
        v: String,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify the concentrating-kernel limit against the surface integral.
    AppendixA {
        /// Matrix rows, semicolon-separated: "0,1" is the 1x2 projection.
        #[arg(long, default_value = "0,1")]
        p: String,
        /// Comma-separated epsilon values.
        #[arg(long, default_value = "0.25,0.0625,0.015625")]
        eps_list: String,
        #[arg(long, default_value_t = 6.0)]
        trunc_r: f64,
        #[arg(long, default_value_t = 256)]
        quad_q: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a config-driven experiment pipeline, writing a manifest.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(',').ok_or_else(|| anyhow!("expected \"lo,hi\", got {s:?}"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_matrix(s: &str) -> Result<Mat> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("bad entry {x:?}: {e}")))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        bail!("ragged matrix {s:?}");
    }
    Ok(Mat::from_rows(&rows))
}

fn parse_density(s: &str, n: usize) -> Result<Density> {
    if s == "box" {
        return Ok(Density::BoxIndicator { lo: vec![0.0; n], hi: vec![1.0; n] });
    }
    if let Some(rest) = s.strip_prefix("bump:") {
        let parts: Vec<f64> = rest
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("{e}")))
            .collect::<Result<_>>()?;
        let (lo, hi) = (parts[0], parts[1]);
        let cells = parts.get(2).map(|&c| c as usize).unwrap_or(512);
        return Ok(Density::Sampled(GridDensity::bump(n, cells, lo, hi).map_err(|e| anyhow!("{e}"))?));
    }
    if let Some(rest) = s.strip_prefix("ball:") {
        let (c, r) = rest.split_once(';').ok_or_else(|| anyhow!("ball needs \"c1,..;r\""))?;
        let center: Vec<f64> = c
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("{e}")))
            .collect::<Result<_>>()?;
        if center.len() != n {
            bail!("ball center has {} coordinates, system has n = {n}", center.len());
        }
        return Ok(Density::BallIndicator { center, radius: r.trim().parse()? });
    }
    bail!("unknown function spec {s:?}")
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Nondegen { system, tol, cap, out } => {
            let (sys, _) = SystemSpec::parse_arg(&system)?.build()?;
            let report = check_nondegenerate_capped(&sys, tol, cap).map_err(|e| anyhow!("{e}"))?;
            let doc = serde_json::to_value(&report)?;
            match &out {
                Some(p) => formats::write_json(p, &doc)?,
                None => println!("{}", serde_json::to_string_pretty(&doc)?),
            }
            Ok(if report.passed { 0 } else { 1 })
        }
        Cmd::GenMeasure { mode, n, subdivision, keep, stages, grid, seed, out } => {
            let params = CantorParams {
                n: if mode == "radial" { 1 } else { n },
                subdivision,
                keep,
                stages,
                seed,
                mode: if mode == "radial" {
                    CantorMode::RadialProduct
                } else {
                    CantorMode::IndependentUniform
                },
            };
            let mu = match mode.as_str() {
                "cantor" => gen_random_cantor(&params, grid),
                "radial" => gen_radial_product(&params, n, grid),
                other => bail!("unknown mode {other:?}"),
            }
            .map_err(|e| anyhow!("{e}"))?;
            formats::save_measure(&out, &mu)?;
            eprintln!("wrote {} ({} support cells, seed {seed})", out.display(), mu.support_cells().len());
            Ok(0)
        }
        Cmd::Fourier { measure, xi_max, out } => {
            let mu = formats::load_measure(&measure)?;
            let s = fourier_transform(&mu, xi_max).map_err(|e| anyhow!("{e}"))?;
            formats::save_fourier_csv(&out, &s)?;
            Ok(0)
        }
        Cmd::DecayFit { measure, xi_max, window, out } => {
            let mu = formats::load_measure(&measure)?;
            let s = fourier_transform(&mu, xi_max).map_err(|e| anyhow!("{e}"))?;
            let fit = decay_exponent_fit(&s, parse_pair(&window)?).map_err(|e| anyhow!("{e}"))?;
            let doc = serde_json::to_value(&fit)?;
            match &out {
                Some(p) => formats::write_json(p, &doc)?,
                None => println!("{}", serde_json::to_string_pretty(&doc)?),
            }
            Ok(0)
        }
        Cmd::Mollify { measure, n_moll, xi_max, out_mu1, out_mu2_hat, out } => {
            let mu = formats::load_measure(&measure)?;
            let (mu1, mu2hat) = mollify_split(&mu, n_moll, xi_max).map_err(|e| anyhow!("{e}"))?;
            formats::save_density(&out_mu1, &mu1)?;
            formats::save_fourier_csv(&out_mu2_hat, &mu2hat)?;
            let doc = json!({
                "n_moll": n_moll,
                "mu1_integral": mu1.integral(),
                "mu1_sup": mu1.max_value(),
            });
            match &out {
                Some(p) => formats::write_json(p, &doc)?,
                None => println!("{}", serde_json::to_string_pretty(&doc)?),
            }
            Ok(0)
        }
        Cmd::Lambda { system, f, grid, trunc_r, quad_q, seed, out } => {
            let (sys, _) = SystemSpec::parse_arg(&system)?.build()?;
            let density = parse_density(&f, sys.n())?;
            let fs: Vec<Density> = vec![density.clone(); sys.k()];
            let quad = DirectQuadrature { grid, mc_samples: 400_000, seed };
            let direct = lambda_direct(&sys, &fs, &quad).map_err(|e| anyhow!("{e}"))?;
            let mut doc = json!({"direct": serde_json::to_value(&direct)?});
            if let Density::Sampled(g) = &density {
                let evals: Vec<&dyn FourierEval> =
                    (0..sys.k()).map(|_| g as &dyn FourierEval).collect();
                let fourier = lambda_fourier(&sys, &evals, trunc_r, quad_q).map_err(|e| anyhow!("{e}"))?;
                let rel = (fourier.value - direct.value).abs() / direct.value.abs().max(1e-12);
                doc["fourier"] = serde_json::to_value(&fourier)?;
                doc["rel_diff"] = json!(rel);
                doc["agreement"] = json!(rel <= 0.05);
            }
            match &out {
                Some(p) => formats::write_json(p, &doc)?,
                None => println!("{}", serde_json::to_string_pretty(&doc)?),
            }
            Ok(0)
        }
        Cmd::Search { system, set, tol, y_res, threshold, cap, out } => {
            let (sys, exclusions) = SystemSpec::parse_arg(&system)?.build()?;
            let pset = if let Some(path) = set.strip_prefix("points:") {
                formats::load_point_set(std::path::Path::new(path), tol)?
            } else if let Some(path) = set.strip_prefix("measure:") {
                let mu = formats::load_measure(std::path::Path::new(path))?;
                let occupied: Vec<bool> = mu.weights().iter().map(|&w| w > 0.0).collect();
                match tol {
                    Some(t) => salem_core::configsearch::PointSet::from_grid_with_tol(
                        mu.dim(),
                        mu.cells_per_axis(),
                        &occupied,
                        t,
                    ),
                    None => salem_core::configsearch::PointSet::from_grid(
                        mu.dim(),
                        mu.cells_per_axis(),
                        &occupied,
                    ),
                }
                .map_err(|e| anyhow!("{e}"))?
            } else {
                bail!("--set must be \"points:<path>\" or \"measure:<path>\"");
            };
            let thr = threshold.unwrap_or(2.0 / (y_res.max(2) - 1) as f64);
            let hits = search_configurations(&sys, &pset, &exclusions, y_res, thr, cap)
                .map_err(|e| anyhow!("{e}"))?;
            formats::save_hits_csv(&out, sys.n(), sys.m() - sys.n(), &hits)?;
            eprintln!("{} hits", hits.len());
            Ok(if hits.is_empty() { 1 } else { 0 })
        }
        Cmd::Cepsilon { system, v, eps, samples, seed, out } => {
            let (sys, _) = SystemSpec::parse_arg(&system)?.build()?;
            let vectors: Vec<Vec<i64>> = v
                .split(';')
                .map(|grp| {
                    grp.split(',')
                        .map(|x| x.trim().parse::<i64>().map_err(|e| anyhow!("bad entry {x:?}: {e}")))
                        .collect()
                })
                .collect::<Result<_>>()?;
            let (estimate, bound) =
                c_epsilon_measure(&sys, &vectors, eps, samples, seed).map_err(|e| anyhow!("{e}"))?;
            let se = ((estimate * (1.0 - estimate)).max(0.0) / samples as f64).sqrt();
            let doc = json!({
                "estimate": estimate,
                "analytic_lower_bound": bound,
                "standard_error": se,
                "samples": samples,
                "seed": seed,
            });
            match &out {
                Some(p) => formats::write_json(p, &doc)?,
                None => println!("{}", serde_json::to_string_pretty(&doc)?),
            }
            Ok(0)
        }
        Cmd::AppendixA { p, eps_list, trunc_r, quad_q, out } => {
            let mat = parse_matrix(&p)?;
            let chart = SurfaceChart::new(mat).map_err(|e| anyhow!("{e}"))?;
            let eps: Vec<f64> = eps_list
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("{e}")))
                .collect::<Result<_>>()?;
            let gaussian = |xi: &[f64]| {
                (-(std::f64::consts::PI) * xi.iter().map(|x| x * x).sum::<f64>()).exp()
            };
            let rows = mollified_limit_check(&chart, &gaussian, &eps, trunc_r, quad_q)
                .map_err(|e| anyhow!("{e}"))?;
            let doc = json!({
                "constant": constant_cp(&chart).map_err(|e| anyhow!("{e}"))?,
                "basis_residual": chart.residual(),
                "rows": rows,
            });
            match &out {
                Some(p) => formats::write_json(p, &doc)?,
                None => println!("{}", serde_json::to_string_pretty(&doc)?),
            }
            Ok(0)
        }
        Cmd::Pipeline { config, out_dir } => {
            let manifest = pipeline::run_pipeline(&config, &out_dir)?;
            eprintln!(
                "pipeline {:?}: {} steps, manifest at {}",
                manifest.name,
                manifest.steps.len(),
                out_dir.join("manifest.json").display()
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
