//! Command-line driver. Every command reads an optional TOML config (defaults
//! otherwise), writes its artifacts under `--out`, and stamps each CSV with a
//! `# config_sha256=… seed=…` line ahead of the header.
//!
//! Exit codes: 0 success, 1 config error, 2 numerical failure, 3 failed
//! self-test.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::experiments::bench2d::{run_bench2d, Bench2dConfig};
use crate::experiments::darcy::{
    build_training_set, compare_heldout, fit_monge, heldout_data, map_monotonicity,
    map_posterior_fields, pcn_posterior, DarcyConfig, DarcySetup,
};
use crate::experiments::ExperimentError;
use crate::measures::{write_samples_csv, PairedSample, Point, StandardNormalSampler};
use crate::metrics::write_table;
use crate::monge::write_trace_csv;
use crate::pcn::posterior_stats;
use crate::rng::derive_seed;

#[derive(Debug, Parser)]
#[command(
    name = "condot",
    version,
    about = "Conditional optimal transport experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plugin conditional sampling on a 2D benchmark, scored against slab rejection.
    Bench2d {
        config: Option<PathBuf>,
        #[arg(long, default_value = "out/bench2d")]
        out: PathBuf,
    },
    /// Darcy inverse problem workflow.
    Darcy {
        #[command(subcommand)]
        step: DarcyStep,
    },
    /// Fast oracle checks of the solvers, the sampler and the gradients.
    Selftest,
}

#[derive(Debug, Subcommand)]
pub enum DarcyStep {
    /// Simulate training pairs from the prior.
    Simulate(DarcyArgs),
    /// pCN reference chains at the held-out data.
    Pcn(DarcyArgs),
    /// Plugin conditional map on a subsample of the training set.
    Plugin(DarcyArgs),
    /// Train the Monge-penalized map and sample its posteriors.
    Monge(DarcyArgs),
    /// Monge map against pCN at every held-out datum.
    Compare(DarcyArgs),
}

#[derive(Debug, clap::Args)]
pub struct DarcyArgs {
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out/darcy")]
    pub out: PathBuf,
    /// Training pairs used by the plugin map (its assignment is dense in high dimension).
    #[arg(long, default_value_t = 5000)]
    pub plugin_pairs: usize,
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl<E: Into<ExperimentError>> From<E> for CliError {
    fn from(e: E) -> Self {
        let e = e.into();
        Self {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

fn config_error(message: String) -> CliError {
    CliError { code: 1, message }
}

/// Parses `path` (or defaults) and returns the config with its hash.
pub fn load_config<T: DeserializeOwned + Serialize + Default>(
    path: Option<&Path>,
) -> Result<(T, String), CliError> {
    let cfg: T = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| config_error(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?
        }
        None => T::default(),
    };
    let hash = config_hash(&cfg);
    Ok((cfg, hash))
}

/// SHA-256 of the config's canonical JSON form, hex encoded.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let canonical = serde_json::to_vec(cfg).expect("configs serialize");
    Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn stamp(hash: &str, seed: u64) -> Vec<String> {
    vec![format!("config_sha256={hash} seed={seed}")]
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_rows(
    dir: &Path,
    name: &str,
    comments: &[String],
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    write_table(&mut w, comments, header, rows).map_err(|e| CliError {
        code: 2,
        message: e.to_string(),
    })?;
    w.flush()?;
    Ok(())
}

fn column(name: &str, values: &[f64]) -> (Vec<String>, Vec<Vec<f64>>) {
    (
        vec![name.to_string()],
        values.iter().map(|&x| vec![x]).collect(),
    )
}

fn write_fields(
    dir: &Path,
    name: &str,
    comments: &[String],
    fields: &[Vec<f64>],
) -> Result<(), CliError> {
    let width = fields.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=width).map(|i| format!("u{i}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(dir, name, comments, &header, fields)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(ExperimentError::from)?;
    w.flush()?;
    Ok(())
}

fn samples_csv(
    dir: &Path,
    name: &str,
    comments: &[String],
    samples: &[PairedSample],
) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    write_samples_csv(&mut w, samples, comments).map_err(ExperimentError::from)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_bench2d(config: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let (cfg, hash): (Bench2dConfig, _) = load_config(config)?;
    let c = stamp(&hash, cfg.seed);
    let run = run_bench2d(&cfg)?;
    samples_csv(out, "dataset.csv", &c, &run.data)?;
    let json = run.map.to_json().map_err(ExperimentError::from)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("plugin_map.json"), json)?;
    let mut summary = Vec::new();
    for (i, s) in run.slices.iter().enumerate() {
        let (h, rows) = column("u1", &s.plugin);
        write_rows(out, &format!("slice{i}_plugin.csv"), &c, &[&h[0]], &rows)?;
        let (h, rows) = column("u1", &s.truth);
        write_rows(out, &format!("slice{i}_slab.csv"), &c, &[&h[0]], &rows)?;
        summary.push(vec![i as f64, s.y0, s.slab_acceptance, s.w1]);
        println!(
            "slice {i}: y0 = {:+.3}, slab acceptance {:.4}, W1 = {:.4}",
            s.y0, s.slab_acceptance, s.w1
        );
    }
    write_rows(
        out,
        "summary.csv",
        &c,
        &["slice", "y0", "slab_acceptance", "w1"],
        &summary,
    )?;
    println!("plugin fit took {:.1}s", run.fit_seconds);
    Ok(())
}

fn darcy_setup(args: &DarcyArgs) -> Result<(DarcyConfig, Vec<String>, DarcySetup), CliError> {
    let (cfg, hash): (DarcyConfig, _) = load_config(args.config.as_deref())?;
    let c = stamp(&hash, cfg.seed);
    let setup = DarcySetup::new(&cfg)?;
    Ok((cfg, c, setup))
}

fn write_heldout(
    out: &Path,
    c: &[String],
    truths: &[Vec<f64>],
    ys: &[Vec<f64>],
) -> Result<(), CliError> {
    let samples = truths
        .iter()
        .zip(ys)
        .map(|(u, y)| -> Result<PairedSample, ExperimentError> {
            Ok(PairedSample::new(
                Point::new(y.clone())?,
                Point::new(u.clone())?,
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    samples_csv(out, "heldout.csv", c, &samples)
}

pub fn cmd_darcy(step: &DarcyStep) -> Result<(), CliError> {
    match step {
        DarcyStep::Simulate(a) => {
            let (cfg, c, setup) = darcy_setup(a)?;
            let (fields, obs) = setup.simulate(cfg.n_train, derive_seed(cfg.seed, "training"))?;
            let samples = fields
                .into_iter()
                .zip(obs)
                .map(|(u, y)| -> Result<PairedSample, ExperimentError> {
                    Ok(PairedSample::new(Point::new(y)?, Point::new(u)?))
                })
                .collect::<Result<Vec<_>, _>>()?;
            samples_csv(&a.out, "training.csv", &c, &samples)?;
            println!("wrote {} training pairs", samples.len());
        }
        DarcyStep::Pcn(a) => {
            let (cfg, c, setup) = darcy_setup(a)?;
            let (truths, ys) = heldout_data(&setup, &cfg)?;
            write_heldout(&a.out, &c, &truths, &ys)?;
            for (k, y) in ys.iter().enumerate() {
                let mut pcn = cfg.pcn.clone();
                pcn.seed = derive_seed(cfg.seed, &format!("pcn{k}"));
                let chain = pcn_posterior(&setup, y, &pcn)?;
                let mut w = create(&a.out, &format!("chain{k}.csv"))?;
                chain.write_csv(&mut w, &c).map_err(ExperimentError::from)?;
                w.flush()?;
                let (mean, var) = posterior_stats(&chain.states)?;
                write_json(
                    &a.out,
                    &format!("pcn{k}_summary.json"),
                    &serde_json::json!({
                        "grid": [cfg.grid, cfg.grid],
                        "acceptance_rate": chain.acceptance_rate,
                        "final_beta": chain.final_beta(),
                        "mean": mean,
                        "variance": var,
                    }),
                )?;
                println!(
                    "y{k}: acceptance {:.3} at beta {:.4}",
                    chain.acceptance_rate,
                    chain.final_beta()
                );
            }
        }
        DarcyStep::Plugin(a) => {
            let (cfg, c, setup) = darcy_setup(a)?;
            let mut sub = cfg.clone();
            sub.n_train = a.plugin_pairs.min(cfg.n_train).max(cfg.n_modes);
            let ts = build_training_set(&setup, &sub)?;
            let sampler = StandardNormalSampler {
                dim: ts.basis.n_modes(),
            };
            let spec = crate::conditional::PerturbedCostSpec::new(cfg.plugin_epsilon)?;
            let map = crate::plugin::fit_plugin(
                &ts.samples,
                &sampler,
                &spec,
                cfg.plugin_k,
                derive_seed(cfg.seed, "plugin"),
            )?;
            fs::create_dir_all(&a.out)?;
            fs::write(
                a.out.join("plugin_map.json"),
                map.to_json().map_err(ExperimentError::from)?,
            )?;
            let (truths, ys) = heldout_data(&setup, &cfg)?;
            write_heldout(&a.out, &c, &truths, &ys)?;
            for (k, y) in ys.iter().enumerate() {
                let z = crate::plugin::conditional_sample(
                    &map,
                    y,
                    cfg.n_posterior,
                    &sampler,
                    derive_seed(cfg.seed, &format!("posterior{k}")),
                )?;
                let fields: Vec<Vec<f64>> = z
                    .iter()
                    .map(|p| ts.basis.reconstruct_whitened(p.coords()))
                    .collect();
                write_fields(&a.out, &format!("plugin_posterior{k}.csv"), &c, &fields)?;
            }
            println!("plugin map on {} pairs", ts.samples.len());
        }
        DarcyStep::Monge(a) => {
            let (cfg, c, setup) = darcy_setup(a)?;
            let ts = build_training_set(&setup, &cfg)?;
            let trained = fit_monge(&ts, &cfg)?;
            write_json(&a.out, "monge_map.json", &trained.map)?;
            write_json(&a.out, "kl_basis.json", &ts.basis)?;
            let mut w = create(&a.out, "trace.csv")?;
            for line in &c {
                writeln!(w, "# {line}")?;
            }
            write_trace_csv(&mut w, &trained.trace)?;
            w.flush()?;
            let (truths, ys) = heldout_data(&setup, &cfg)?;
            write_heldout(&a.out, &c, &truths, &ys)?;
            for (k, y) in ys.iter().enumerate() {
                let fields = map_posterior_fields(
                    &trained.map,
                    &ts.basis,
                    y,
                    cfg.n_posterior,
                    derive_seed(cfg.seed, &format!("posterior{k}")),
                );
                write_fields(&a.out, &format!("monge_posterior{k}.csv"), &c, &fields)?;
            }
            let last = trained.trace.last().expect("at least one iteration");
            println!(
                "trained map: monge term {:.4}, divergence {:.4}",
                last.monge_term, last.mmd_term
            );
        }
        DarcyStep::Compare(a) => {
            let (cfg, c, setup) = darcy_setup(a)?;
            let ts = build_training_set(&setup, &cfg)?;
            let trained = fit_monge(&ts, &cfg)?;
            let mono = map_monotonicity(&setup, &cfg, &trained.map)?;
            let (truths, ys) = heldout_data(&setup, &cfg)?;
            let mut summary = Vec::new();
            for (k, (u, y)) in truths.iter().zip(&ys).enumerate() {
                let r = compare_heldout(&setup, &cfg, &trained.map, &ts.basis, u, y, k)?;
                let rows: Vec<Vec<f64>> = (0..r.truth.len())
                    .map(|i| {
                        vec![
                            i as f64,
                            r.truth[i],
                            r.map_mean[i],
                            r.pcn_mean[i],
                            r.map_var[i],
                            r.pcn_var[i],
                        ]
                    })
                    .collect();
                write_rows(
                    &a.out,
                    &format!("fields{k}.csv"),
                    &c,
                    &[
                        "node", "truth", "map_mean", "pcn_mean", "map_var", "pcn_var",
                    ],
                    &rows,
                )?;
                let scatter: Vec<Vec<f64>> =
                    r.scatter().into_iter().map(|(a, b)| vec![a, b]).collect();
                write_rows(
                    &a.out,
                    &format!("variance_scatter{k}.csv"),
                    &c,
                    &["map_var", "pcn_var"],
                    &scatter,
                )?;
                println!(
                    "y{k}: mean rel L2 {:.3}, variance pearson {:.3}, pCN acceptance {:.3}",
                    r.mean_rel_l2, r.var_pearson, r.pcn_acceptance
                );
                summary.push(vec![
                    k as f64,
                    r.mean_rel_l2,
                    r.var_pearson,
                    r.pcn_acceptance,
                    r.pcn_beta,
                ]);
            }
            write_rows(
                &a.out,
                "summary.csv",
                &c,
                &[
                    "y_index",
                    "mean_rel_l2",
                    "var_pearson",
                    "pcn_acceptance",
                    "pcn_beta",
                ],
                &summary,
            )?;
            write_rows(
                &a.out,
                "monotonicity.csv",
                &c,
                &["n_pairs", "fraction"],
                &[vec![cfg.n_monotonicity as f64, mono]],
            )?;
            println!("monotone fraction {mono:.4}");
        }
    }
    Ok(())
}

pub fn cmd_selftest() -> Result<(), CliError> {
    let report = crate::experiments::selftest::run_all();
    let mut failed = 0;
    for r in &report {
        println!(
            "{:<28} {}  {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(CliError {
            code: 3,
            message: format!("{failed} self-test suite(s) failed"),
        });
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bench2d { config, out } => cmd_bench2d(config.as_deref(), out),
        Command::Darcy { step } => cmd_darcy(step),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
