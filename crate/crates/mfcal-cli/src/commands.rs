//! The pipelines behind the three subcommands.
//!
//! `calibrate` estimates the scaling parameter per output column and
//! writes a JSON report. `optimize` continues into the simulation
//! loop and writes the pooled optima with provenance, a summary, and
//! per-dimension histograms. `benchmark` regenerates one of the
//! built-in synthetic studies end-to-end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mfcal::bench::{tenfold_surrogate, QuadraticScenario};
use mfcal::calibrate::{
    loo_posterior_with, sample_u_posterior, CalibrationPrior, CalibrationResult, USearch,
};
use mfcal::decision::{
    mse_study_with, run_decision_analysis, run_scenario_pipelines, summarize_optima,
    DecisionConfig, ModelFactory, ObjectiveSpec, OptimaCollection, PredictiveSource, ScenarioData,
    StudyOptions,
};
use mfcal::gp::{
    fit_gp_mle_with, FitOptions, GpFit, MeanFunction, NoiseSpec, DETERMINISTIC_NUGGET,
};
use mfcal::seed::Seed;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{LoopConfig, RunConfig};
use crate::data::{load_dataset, write_dataset};
use crate::error::{CliError, Result};
use crate::report::{
    dimension_summaries, write_histograms, write_json, write_optima_csv, CalibrationReport,
    ConfigEcho, OptimaReport, OutputReport,
};

/// Histogram resolution of the optima summaries.
const BINS: usize = 30;

/// Label under which per-output seeds branch, so each output column
/// gets statistically independent fitting and sampling streams.
const OUTPUT_STREAM: u64 = 40;

/// Optimizer budget for every fit in the pipeline. The hyperparameter
/// spaces are at most six-dimensional, and the profile scan and its
/// leave-one-out folds multiply each fit by thousands, so a lean
/// multistart keeps runs interactive without moving the estimates.
fn fit_options() -> FitOptions {
    FitOptions {
        n_starts: 4,
        max_evals: 150,
    }
}

fn study_options(search: USearch) -> StudyOptions {
    StudyOptions {
        fit: fit_options(),
        search,
        prior: CalibrationPrior::Flat,
        bins: BINS,
    }
}

/// Re-wraps a library error with the output column it came from,
/// preserving the variant so exit codes stay faithful.
fn for_output(name: &str, e: mfcal::Error) -> CliError {
    use mfcal::Error as E;
    CliError::Lib(match e {
        E::Domain(m) => E::Domain(format!("output `{name}`: {m}")),
        E::Numerical { context, jitters } => E::Numerical {
            context: format!("output `{name}`: {context}"),
            jitters,
        },
        E::Fit(m) => E::Fit(format!("output `{name}`: {m}")),
        E::Estimation(m) => E::Estimation(format!("output `{name}`: {m}")),
        E::Analysis(m) => E::Analysis(format!("output `{name}`: {m}")),
    })
}

struct LoadedData {
    x_low: DMatrix<f64>,
    y_low: DMatrix<f64>,
    x_high: DMatrix<f64>,
    y_high: DMatrix<f64>,
}

fn load_pair(cfg: &RunConfig, low: &Path, high: &Path) -> Result<LoadedData> {
    let input_names = cfg.input_names();
    let (x_low, y_low) = load_dataset(low, &input_names, &cfg.outputs)?;
    let (x_high, y_high) = load_dataset(high, &input_names, &cfg.outputs)?;
    Ok(LoadedData {
        x_low,
        y_low,
        x_high,
        y_high,
    })
}

struct OutputCalibration {
    low: Arc<GpFit>,
    result: CalibrationResult,
}

/// Low-fidelity responses are treated as deterministic simulator
/// output: constant-mean emulator with a fixed near-zero nugget.
fn calibrate_single(
    x_low: &DMatrix<f64>,
    y_low: &DVector<f64>,
    x_high: &DMatrix<f64>,
    y_high: &DVector<f64>,
    prior: &CalibrationPrior,
    search: &USearch,
    seed: &Seed,
) -> mfcal::Result<OutputCalibration> {
    let opts = fit_options();
    let low = Arc::new(fit_gp_mle_with(
        x_low,
        y_low,
        MeanFunction::sample_mean(y_low),
        NoiseSpec::Fixed(DETERMINISTIC_NUGGET),
        seed,
        &opts,
    )?);
    let result = loo_posterior_with(low.as_ref(), x_high, y_high, prior, search, seed, &opts)?;
    Ok(OutputCalibration { low, result })
}

fn calibrate_outputs(cfg: &RunConfig, data: &LoadedData) -> Result<Vec<OutputCalibration>> {
    let seed = Seed::new(cfg.seed);
    let mut out = Vec::with_capacity(cfg.outputs.len());
    for (k, name) in cfg.outputs.iter().enumerate() {
        let seed_k = seed.with(&[OUTPUT_STREAM, k as u64]);
        let cal = calibrate_single(
            &data.x_low,
            &data.y_low.column(k).into_owned(),
            &data.x_high,
            &data.y_high.column(k).into_owned(),
            &cfg.prior,
            &cfg.search,
            &seed_k,
        )
        .map_err(|e| for_output(name, e))?;
        out.push(cal);
    }
    Ok(out)
}

pub struct CalibrateArtifacts {
    pub report_path: PathBuf,
    pub u_hats: Vec<f64>,
}

pub fn run_calibrate(cfg: &RunConfig, low: &Path, high: &Path) -> Result<CalibrateArtifacts> {
    let data = load_pair(cfg, low, high)?;
    let cals = calibrate_outputs(cfg, &data)?;
    let report = CalibrationReport {
        config: ConfigEcho::from_config(cfg),
        outputs: cfg
            .outputs
            .iter()
            .zip(&cals)
            .map(|(name, c)| OutputReport::from_result(name, &c.result))
            .collect(),
    };
    let report_path = cfg.out_dir.join("calibration.json");
    write_json(&report_path, &report)?;
    Ok(CalibrateArtifacts {
        report_path,
        u_hats: cals.iter().map(|c| c.result.u_hat).collect(),
    })
}

pub struct OptimizeArtifacts {
    pub optima_csv: PathBuf,
    pub summary_json: PathBuf,
    pub histogram_csvs: Vec<PathBuf>,
    pub n_recorded: usize,
    pub n_skipped: usize,
}

pub fn run_optimize(cfg: &RunConfig, low: &Path, high: &Path) -> Result<OptimizeArtifacts> {
    let data = load_pair(cfg, low, high)?;
    let bounds = cfg.input_box()?;
    let cals = calibrate_outputs(cfg, &data)?;
    let seed = Seed::new(cfg.seed);
    let p = cfg.outputs.len();

    let mut u_columns: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut factories: Vec<ModelFactory> = Vec::with_capacity(p);
    for (k, (name, cal)) in cfg.outputs.iter().zip(&cals).enumerate() {
        let seed_k = seed.with(&[OUTPUT_STREAM, k as u64]);
        u_columns.push(
            sample_u_posterior(&cal.result, cfg.n_u, &seed_k).map_err(|e| for_output(name, e))?,
        );
        factories.push(
            ModelFactory::new(
                cal.low.clone(),
                data.x_high.clone(),
                data.y_high.column(k).into_owned(),
                &seed_k,
                fit_options(),
            )
            .map_err(|e| for_output(name, e))?,
        );
    }
    let u_samples = DMatrix::from_fn(cfg.n_u, p, |s, k| u_columns[k][s]);

    let dcfg = DecisionConfig {
        n_u: cfg.n_u,
        n_rep: cfg.n_rep,
        n_candidates: cfg.n_candidates,
        bounds,
        seed: seed.clone(),
    };
    let coll = run_decision_analysis(
        |u_row| {
            let mut models: Vec<Arc<dyn PredictiveSource>> = Vec::with_capacity(p);
            for (k, factory) in factories.iter_mut().enumerate() {
                models.push(factory.model_at(u_row[k])?);
            }
            Ok(models)
        },
        &u_samples,
        &cfg.objective,
        &dcfg,
    )?;
    let summary = summarize_optima(&coll, BINS)?;

    let input_names = cfg.input_names();
    let optima_csv = cfg.out_dir.join("optima.csv");
    write_optima_csv(&optima_csv, &input_names, &coll)?;
    let report = OptimaReport {
        config: ConfigEcho::from_config(cfg),
        calibration: cfg
            .outputs
            .iter()
            .zip(&cals)
            .map(|(name, c)| OutputReport::from_result(name, &c.result))
            .collect(),
        n_recorded: coll.points.nrows(),
        n_skipped: coll.skipped.len(),
        dimensions: dimension_summaries(&input_names, &summary),
    };
    let summary_json = cfg.out_dir.join("summary.json");
    write_json(&summary_json, &report)?;
    write_histograms(&cfg.out_dir, &input_names, &summary)?;
    let histogram_csvs = input_names
        .iter()
        .map(|n| cfg.out_dir.join(format!("hist_{n}.csv")))
        .collect();
    Ok(OptimizeArtifacts {
        optima_csv,
        summary_json,
        histogram_csvs,
        n_recorded: coll.points.nrows(),
        n_skipped: coll.skipped.len(),
    })
}

/// Built-in synthetic studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScenarioKind {
    /// Two-dimensional quadratic with offset minima, three strategies.
    Illustrative,
    /// Repeats the illustrative comparison over regenerated datasets.
    MseStudy,
    /// Four-dimensional polynomial surrogate with a tenfold scaling.
    CureSurrogate,
}

#[derive(Debug, Serialize)]
pub struct LoopEcho {
    pub n_u: usize,
    pub n_rep: usize,
    pub n_candidates: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct StrategyBlock {
    pub strategy: &'static str,
    pub median: Vec<f64>,
    pub sd: Vec<f64>,
    pub n_recorded: usize,
    pub n_skipped: usize,
}

#[derive(Debug, Serialize)]
pub struct CalSummary {
    pub u_hat: f64,
    pub interval: [f64; 2],
    pub interval_width: f64,
    pub n_loo: usize,
}

impl CalSummary {
    fn from_result(cal: &CalibrationResult) -> Self {
        CalSummary {
            u_hat: cal.u_hat,
            interval: [cal.interval.0, cal.interval.1],
            interval_width: cal.interval.1 - cal.interval.0,
            n_loo: cal.loo_samples.len(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DatasetBlock {
    pub low_se: Vec<f64>,
    pub high_se: Vec<f64>,
    pub mf_se: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ConcentrationBlock {
    pub name: String,
    pub q25: f64,
    pub q75: f64,
    pub iqr: f64,
    pub box_width: f64,
}

#[derive(Debug, Serialize)]
#[serde(tag = "scenario")]
pub enum BenchmarkReport {
    #[serde(rename = "illustrative")]
    Illustrative {
        settings: LoopEcho,
        calibration: CalSummary,
        strategies: Vec<StrategyBlock>,
    },
    #[serde(rename = "mse-study")]
    MseStudy {
        settings: LoopEcho,
        n_datasets: usize,
        failed_datasets: usize,
        mse_low_only: Vec<f64>,
        mse_high_only: Vec<f64>,
        mse_multi_fidelity: Vec<f64>,
        per_dataset: Vec<DatasetBlock>,
    },
    #[serde(rename = "cure-surrogate")]
    CureSurrogate {
        settings: LoopEcho,
        calibration: CalSummary,
        optima: Vec<ConcentrationBlock>,
    },
}

pub struct BenchmarkRun {
    pub text: String,
    pub json_path: Option<PathBuf>,
}

fn fmt_vec(v: &[f64]) -> String {
    let inner: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", inner.join(", "))
}

fn strategy_block(name: &'static str, coll: &OptimaCollection) -> mfcal::Result<StrategyBlock> {
    let s = summarize_optima(coll, BINS)?;
    Ok(StrategyBlock {
        strategy: name,
        median: s.median,
        sd: s.sd,
        n_recorded: coll.points.nrows(),
        n_skipped: coll.skipped.len(),
    })
}

/// Writes the dataset a benchmark consumed, so any run can be replayed
/// through `calibrate`/`optimize` byte-for-byte.
fn export_scenario(dir: &Path, data: &ScenarioData) -> Result<()> {
    let d = data.x_low.ncols();
    let input_names: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    let output_names = vec!["y".to_string()];
    let as_col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    write_dataset(
        &dir.join("low.csv"),
        &input_names,
        &data.x_low,
        &output_names,
        &as_col(&data.y_low),
    )?;
    write_dataset(
        &dir.join("high.csv"),
        &input_names,
        &data.x_high,
        &output_names,
        &as_col(&data.y_high),
    )
}

pub fn run_benchmark(
    kind: ScenarioKind,
    n_datasets: Option<usize>,
    loops: &LoopConfig,
    seed_flag: Option<u64>,
) -> Result<BenchmarkRun> {
    // Scenario-specific loop defaults: the dataset comparison repeats
    // the whole pipeline per dataset, so it runs a reduced loop whose
    // medians are already stable.
    let (du, dr) = match kind {
        ScenarioKind::Illustrative => (100, 100),
        ScenarioKind::MseStudy => (20, 20),
        ScenarioKind::CureSurrogate => (50, 50),
    };
    let n_u = loops.n_u.unwrap_or(du);
    let n_rep = loops.n_rep.unwrap_or(dr);
    let n_candidates = loops.n_candidates.unwrap_or(200);
    let seed = seed_flag.or(loops.seed).unwrap_or(0);
    let settings = LoopEcho {
        n_u,
        n_rep,
        n_candidates,
        seed,
    };

    let mut text = String::new();
    let report = match kind {
        ScenarioKind::Illustrative => {
            let scenario = QuadraticScenario::illustrative(Seed::new(seed));
            let data = scenario.realize()?;
            let dcfg = DecisionConfig {
                n_u,
                n_rep,
                n_candidates,
                bounds: scenario.bounds.clone(),
                seed: Seed::new(seed),
            };
            let pipes = run_scenario_pipelines(&data, &dcfg, &study_options(USearch::default()))?;
            if let Some(dir) = &loops.out_dir {
                export_scenario(dir, &data)?;
            }
            let calibration = CalSummary::from_result(&pipes.calibration);
            let strategies = vec![
                strategy_block("low-only", &pipes.low_only)?,
                strategy_block("high-only", &pipes.high_only)?,
                strategy_block("multi-fidelity", &pipes.multi_fidelity)?,
            ];
            writeln!(
                text,
                "scenario: illustrative (N_u = {n_u}, n_rep = {n_rep}, N = {n_candidates}, seed = {seed})"
            )
            .unwrap();
            writeln!(
                text,
                "calibration: u_hat = {:.4}, 95% interval [{:.4}, {:.4}]",
                calibration.u_hat, calibration.interval[0], calibration.interval[1]
            )
            .unwrap();
            for b in &strategies {
                writeln!(
                    text,
                    "{:<16} median = {}  sd = {}",
                    b.strategy,
                    fmt_vec(&b.median),
                    fmt_vec(&b.sd)
                )
                .unwrap();
            }
            BenchmarkReport::Illustrative {
                settings,
                calibration,
                strategies,
            }
        }
        ScenarioKind::MseStudy => {
            let n_datasets = n_datasets.unwrap_or(50);
            let generator = QuadraticScenario::illustrative(Seed::new(seed));
            let dcfg = DecisionConfig {
                n_u,
                n_rep,
                n_candidates,
                bounds: generator.bounds.clone(),
                seed: Seed::new(seed),
            };
            let study = mse_study_with(
                &generator,
                n_datasets,
                &dcfg,
                &study_options(USearch::default()),
            )?;
            let d = generator.bounds.dim();
            let wins = study
                .per_dataset
                .iter()
                .filter(|o| (0..d).all(|j| o.mf_se[j] < o.low_se[j] && o.mf_se[j] < o.high_se[j]))
                .count();
            writeln!(
                text,
                "scenario: mse-study ({n_datasets} datasets, N_u = {n_u}, n_rep = {n_rep}, N = {n_candidates}, seed = {seed})"
            )
            .unwrap();
            writeln!(text, "mse low-only       = {}", fmt_vec(&study.low_only)).unwrap();
            writeln!(text, "mse high-only      = {}", fmt_vec(&study.high_only)).unwrap();
            writeln!(
                text,
                "mse multi-fidelity = {}",
                fmt_vec(&study.multi_fidelity)
            )
            .unwrap();
            writeln!(
                text,
                "datasets where multi-fidelity wins every dimension: {wins} of {}",
                study.per_dataset.len()
            )
            .unwrap();
            writeln!(text, "failed datasets: {}", study.failed_datasets).unwrap();
            BenchmarkReport::MseStudy {
                settings,
                n_datasets,
                failed_datasets: study.failed_datasets,
                mse_low_only: study.low_only,
                mse_high_only: study.high_only,
                mse_multi_fidelity: study.multi_fidelity,
                per_dataset: study
                    .per_dataset
                    .into_iter()
                    .map(|o| DatasetBlock {
                        low_se: o.low_se,
                        high_se: o.high_se,
                        mf_se: o.mf_se,
                    })
                    .collect(),
            }
        }
        ScenarioKind::CureSurrogate => {
            let scenario = tenfold_surrogate(Seed::new(seed));
            let data = scenario.realize()?;
            // The scaling here is an order of magnitude, so the search
            // interval brackets ten rather than one.
            let search = USearch {
                lo: 5.0,
                hi: 15.0,
                grid_points: 41,
                refine_tol: 1e-3,
            };
            let root = Seed::new(seed);
            let cal = calibrate_single(
                &data.x_low,
                &data.y_low,
                &data.x_high,
                &data.y_high,
                &CalibrationPrior::Flat,
                &search,
                &root,
            )?;
            let draws = sample_u_posterior(&cal.result, n_u, &root)?;
            let u_samples = DMatrix::from_fn(n_u, 1, |i, _| draws[i]);
            let mut factory = ModelFactory::new(
                cal.low.clone(),
                data.x_high.clone(),
                data.y_high.clone(),
                &root,
                fit_options(),
            )?;
            let dcfg = DecisionConfig {
                n_u,
                n_rep,
                n_candidates,
                bounds: scenario.bounds.clone(),
                seed: root.clone(),
            };
            let coll = run_decision_analysis(
                |u| {
                    let m: Arc<dyn PredictiveSource> = factory.model_at(u[0])?;
                    Ok(vec![m])
                },
                &u_samples,
                &ObjectiveSpec::Identity,
                &dcfg,
            )?;
            let summary = summarize_optima(&coll, BINS)?;
            if let Some(dir) = &loops.out_dir {
                export_scenario(dir, &data)?;
            }
            let calibration = CalSummary::from_result(&cal.result);
            let optima: Vec<ConcentrationBlock> = (0..scenario.bounds.dim())
                .map(|j| {
                    let q = &summary.quantiles[j];
                    ConcentrationBlock {
                        name: format!("x{}", j + 1),
                        q25: q.q25,
                        q75: q.q75,
                        iqr: q.q75 - q.q25,
                        box_width: scenario.bounds.range(j),
                    }
                })
                .collect();
            writeln!(
                text,
                "scenario: cure-surrogate (N_u = {n_u}, n_rep = {n_rep}, N = {n_candidates}, seed = {seed})"
            )
            .unwrap();
            writeln!(
                text,
                "calibration: u_hat = {:.4}, 95% interval [{:.4}, {:.4}]",
                calibration.u_hat, calibration.interval[0], calibration.interval[1]
            )
            .unwrap();
            writeln!(text, "optima concentration:").unwrap();
            for c in &optima {
                writeln!(
                    text,
                    "  {}: iqr = {:.4} ({:.1}% of box width)",
                    c.name,
                    c.iqr,
                    100.0 * c.iqr / c.box_width
                )
                .unwrap();
            }
            BenchmarkReport::CureSurrogate {
                settings,
                calibration,
                optima,
            }
        }
    };

    let json_path = match &loops.out_dir {
        Some(dir) => {
            let path = dir.join("benchmark.json");
            write_json(&path, &report)?;
            Some(path)
        }
        None => None,
    };
    Ok(BenchmarkRun { text, json_path })
}
