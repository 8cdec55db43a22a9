use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use ndarray::{concatenate, Array2, Axis};

use kaplan_hr::bench::{
    config_hash, load_csv, pipeline, read_json, run_rate_study, run_split, FitConfig, OutputDir, RateStudyConfig,
};
use kaplan_hr::metrics::{c_td, dcal, ibs, ici_at, ise_survival, km_censor};
use kaplan_hr::model::HazardModel;
use kaplan_hr::simgen::{Dgp, Scenario};
use kaplan_hr::stats::median;
use kaplan_hr::survival::{read_survival_csv, TimeGrid};

/// Hazard regression with B-spline Kolmogorov-Arnold networks.
///
/// Worker threads for `rate-study` are bounded by the KAPLAN_WORKERS
/// environment variable. Log verbosity follows RUST_LOG (default `info`).
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a training set from a synthetic DGP, plus the shared test set and
    /// its ground-truth survival curves.
    Simulate {
        #[arg(long)]
        dgp: u8,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the split / standardise / fit / evaluate protocol on a CSV file for
    /// every split seed in the config.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// JSON fit config; defaults apply to omitted fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict survival curves for the rows of a CSV file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV with the model's feature columns (time/event are ignored).
        #[arg(long)]
        data: PathBuf,
        /// Quantile grid size; defaults to the training grid.
        #[arg(long)]
        grid: Option<usize>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a prediction CSV against observed outcomes.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Ground-truth survival CSV from `simulate`, for the ISE.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Convergence study over sample sizes on the synthetic DGPs.
    RateStudy {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a config document with every field at its default.
    Defaults {
        #[arg(value_enum)]
        kind: ConfigKind,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ConfigKind {
    Fit,
    RateStudy,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate { dgp, n, seed, out } => simulate(dgp, n, seed, &out),
        Command::Fit { data, config, out } => fit(&data, config.as_deref(), &out),
        Command::Predict { model, data, grid, out } => predict(&model, &data, grid, out.as_deref()),
        Command::Evaluate { pred, data, truth } => evaluate(&pred, &data, truth.as_deref()),
        Command::RateStudy { config, out } => rate_study(&config, out),
        Command::Defaults { kind } => {
            let doc = match kind {
                ConfigKind::Fit => serde_json::to_string_pretty(&FitConfig::default())?,
                ConfigKind::RateStudy => serde_json::to_string_pretty(&RateStudyConfig::default())?,
            };
            println!("{doc}");
            Ok(())
        }
    }
}

fn simulate(dgp: u8, n: usize, seed: u64, out: &Path) -> Result<()> {
    let dgp = Dgp::try_from(dgp)?;
    let scenario = Scenario::new(dgp)?;
    let data = scenario.training_set(n, seed)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_with("data.csv", |b| data.write_csv(b))?;
    dir.write_with("test.csv", |b| scenario.test.write_csv(b))?;
    dir.write_with("truth.csv", |b| scenario.truth.write_csv(b))?;
    let manifest = scenario.manifest(&data, seed);
    info!(
        "DGP-{}: {} subjects, censoring {:.3} (lambda_c {:.4})",
        dgp.id(),
        n,
        manifest.achieved_censor_rate,
        manifest.lambda_c
    );
    dir.finish(manifest)?;
    Ok(())
}

fn fit(data_path: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg: FitConfig = match config {
        Some(p) => read_json(p).with_context(|| format!("reading {}", p.display()))?,
        None => FitConfig::default(),
    };
    cfg.validate()?;
    let data = load_csv(data_path)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_json("config.json", &cfg)?;
    let mut reports = Vec::new();
    for &seed in &cfg.split_seeds {
        let o = run_split(&data, &cfg, seed)?;
        let tag = format!("split_{seed}");
        let model_path = dir.path().join(format!("{tag}/model.json"));
        fs::create_dir_all(model_path.parent().unwrap())?;
        o.model.save(&model_path)?;
        dir.write_bytes(&format!("{tag}/model.json"), &fs::read(&model_path)?)?;
        dir.write_with(&format!("{tag}/training_log.csv"), |b| o.log.write_csv(b))?;
        dir.write_json(&format!("{tag}/metrics.json"), &o.report)?;
        dir.write_json(&format!("{tag}/split.json"), &o.plan)?;
        reports.push(o.report);
    }
    let summary = pipeline::summarise(&reports);
    dir.write_with("metrics.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["split_seed", "c_td", "ibs", "ici_median", "dcal_statistic", "dcal_p", "nll_test"])?;
        for r in &reports {
            w.write_record([
                r.seed.unwrap_or_default().to_string(),
                r.c_td.to_string(),
                r.ibs.to_string(),
                r.ici_median.to_string(),
                r.dcal_statistic.to_string(),
                r.dcal_p.to_string(),
                r.nll_test.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    dir.write_json("summary.json", &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    dir.finish(serde_json::json!({
        "data": data_path.display().to_string(),
        "data_sha256": kaplan_hr::bench::sha256_hex(&fs::read(data_path)?),
        "rows_dropped": data.dropped,
        "config_sha256": config_hash(&cfg)?,
    }))?;
    Ok(())
}

/// Reads the named feature columns of a CSV in order; rows with missing
/// cells are rejected.
fn read_features(path: &Path, features: &[String]) -> Result<Array2<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let idx: Vec<usize> = features
        .iter()
        .map(|f| headers.iter().position(|h| h == f).with_context(|| format!("missing feature column `{f}`")))
        .collect::<Result<_>>()?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for &c in &idx {
            let v: f64 = rec[c]
                .trim()
                .parse()
                .with_context(|| format!("row {}: column `{}` is not a number", i + 1, headers[c]))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, idx.len()), values)?)
}

fn predict(model_path: &Path, data: &Path, grid_k: Option<usize>, out: Option<&Path>) -> Result<()> {
    let model = HazardModel::load(model_path)?;
    let x = read_features(data, &model.feature_names())?;
    let grid = match grid_k {
        Some(k) => model.quantile_grid(k)?,
        None => model.grid.clone(),
    };
    let curves = model.predict(x.view(), &grid)?;
    let time = model.time;
    match out {
        Some(p) => curves.write_csv(BufWriter::new(fs::File::create(p)?), |t| time.to_raw(t))?,
        None => curves.write_csv(io::stdout().lock(), |t| time.to_raw(t))?,
    }
    Ok(())
}

fn evaluate(pred: &Path, data: &Path, truth: Option<&Path>) -> Result<()> {
    let (times, s) = read_survival_csv(fs::File::open(pred)?)?;
    let (y, events) = read_outcomes(data)?;
    if s.nrows() != y.len() {
        bail!("{} prediction rows for {} subjects", s.nrows(), y.len());
    }
    let mut taus = vec![0.0];
    taus.extend_from_slice(&times);
    let grid = TimeGrid::new(taus)?;
    let ones = Array2::ones((s.nrows(), 1));
    let full = concatenate(Axis(1), &[ones.view(), s.view()])?;
    let censor = km_censor(&y, &events)?;
    let ev: Vec<f64> = y.iter().zip(&events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    if ev.is_empty() {
        bail!("no events in {}", data.display());
    }
    let t_star = median(&ev);
    let at = |i: usize, t: f64| -> Result<f64> { Ok(full[[i, grid.bin_index(t)?]]) };
    let s_star: Vec<f64> = (0..y.len()).map(|i| at(i, t_star)).collect::<Result<_>>()?;
    let s_y: Vec<f64> = (0..y.len()).map(|i| at(i, y[i])).collect::<Result<_>>()?;
    let d = dcal(&s_y, &events)?;
    let mut report = serde_json::json!({
        "c_td": c_td(full.view(), &grid, &y, &events)?,
        "ibs": ibs(full.view(), &grid, &y, &events, &censor)?.ibs,
        "ici_median": ici_at(t_star, &s_star, &y, &events)?.ici,
        "dcal_statistic": d.statistic,
        "dcal_p": d.p_value,
    });
    if let Some(tp) = truth {
        let (ttimes, star) = read_survival_csv(fs::File::open(tp)?)?;
        if star.nrows() != s.nrows() {
            bail!("truth has {} rows, predictions {}", star.nrows(), s.nrows());
        }
        let hat = Array2::from_shape_fn(star.dim(), |(i, j)| at(i, ttimes[j]).unwrap_or(f64::NAN));
        report["ise_s"] = serde_json::json!(ise_survival(hat.view(), star.view(), &ttimes)?);
    }
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn read_outcomes(path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let ti = headers.iter().position(|h| h == "time").context("no `time` column")?;
    let ei = headers.iter().position(|h| h == "event").context("no `event` column")?;
    let mut y = Vec::new();
    let mut e = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        y.push(rec[ti].trim().parse::<f64>().with_context(|| format!("row {}: time", i + 1))?);
        e.push(match rec[ei].trim() {
            "1" | "1.0" => true,
            "0" | "0.0" => false,
            other => bail!("row {}: event must be 0 or 1, got {other:?}", i + 1),
        });
    }
    Ok((y, e))
}

fn rate_study(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let mut cfg: RateStudyConfig = read_json(config).with_context(|| format!("reading {}", config.display()))?;
    if out.is_some() {
        cfg.out_dir = out;
    }
    let study = run_rate_study(&cfg)?;
    for s in &study.slopes {
        println!(
            "DGP-{}: slope {:?} (upper half {:?}), predicted {:.4}",
            s.dgp.id(),
            s.slope_all,
            s.slope_upper,
            s.predicted
        );
    }
    for c in &study.cells {
        println!("DGP-{} n={:>6}: median ISE {:.4e} IQR [{:.4e}, {:.4e}]", c.dgp.id(), c.n, c.median, c.q25, c.q75);
    }
    if let Some(dir) = &cfg.out_dir {
        let mut d = OutputDir::create(dir)?;
        d.write_json("config.json", &cfg)?;
        d.write_with("replicates.csv", |b| study.write_rows_csv(b))?;
        d.write_with("cells.csv", |b| study.write_cells_csv(b))?;
        d.write_json("slopes.json", &study.slopes)?;
        d.write_json("failures.json", &study.failures)?;
        d.finish(serde_json::json!({ "config_sha256": config_hash(&cfg)? }))?;
    }
    Ok(())
}
