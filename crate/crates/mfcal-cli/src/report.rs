//! Artifact writers: atomic file replacement, fixed-precision CSV,
//! and JSON reports that embed the resolved configuration so every
//! artifact is self-describing and re-runnable.

use std::path::Path;

use mfcal::calibrate::{CalibrationPrior, CalibrationResult};
use mfcal::decision::{ObjectiveSpec, OptimaCollection, OptimaSummary};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// 17 significant digits: enough to reproduce any `f64` exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes via a sibling temp file and rename, so a crash never leaves
/// a truncated artifact behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let wrap = |source: std::io::Error| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(wrap)?;
        }
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes).map_err(wrap)?;
    std::fs::rename(&tmp, path).map_err(wrap)
}

/// The resolved configuration, echoed into every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub inputs: Vec<InputEcho>,
    pub outputs: Vec<String>,
    pub objective: ObjectiveEcho,
    pub prior: PriorEcho,
    pub u_search: SearchEcho,
    pub n_u: usize,
    pub n_rep: usize,
    pub n_candidates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputEcho {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveEcho {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PriorEcho {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchEcho {
    pub lo: f64,
    pub hi: f64,
    pub grid_points: usize,
}

impl ConfigEcho {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let objective = match &cfg.objective {
            ObjectiveSpec::Identity => ObjectiveEcho {
                kind: "identity",
                weights: None,
            },
            ObjectiveSpec::SumOfSquares => ObjectiveEcho {
                kind: "sum_of_squares",
                weights: None,
            },
            ObjectiveSpec::WeightedSumOfSquares(w) => ObjectiveEcho {
                kind: "weighted_sum_of_squares",
                weights: Some(w.clone()),
            },
        };
        let prior = match cfg.prior {
            CalibrationPrior::Flat => PriorEcho {
                kind: "flat",
                mean: None,
                sd: None,
                lo: None,
                hi: None,
            },
            CalibrationPrior::Gaussian { mean, sd } => PriorEcho {
                kind: "gaussian",
                mean: Some(mean),
                sd: Some(sd),
                lo: None,
                hi: None,
            },
            CalibrationPrior::Uniform { lo, hi } => PriorEcho {
                kind: "uniform",
                mean: None,
                sd: None,
                lo: Some(lo),
                hi: Some(hi),
            },
        };
        ConfigEcho {
            inputs: cfg
                .inputs
                .iter()
                .map(|i| InputEcho {
                    name: i.name.clone(),
                    lo: i.lo,
                    hi: i.hi,
                })
                .collect(),
            outputs: cfg.outputs.clone(),
            objective,
            prior,
            u_search: SearchEcho {
                lo: cfg.search.lo,
                hi: cfg.search.hi,
                grid_points: cfg.search.grid_points,
            },
            n_u: cfg.n_u,
            n_rep: cfg.n_rep,
            n_candidates: cfg.n_candidates,
            seed: cfg.seed,
        }
    }
}

/// Per-output calibration results.
#[derive(Debug, Clone, Serialize)]
pub struct OutputReport {
    pub output: String,
    pub u_hat: f64,
    pub interval: [f64; 2],
    pub loo_samples: Vec<f64>,
    pub discrepancy_variance: f64,
    pub discrepancy_length_scales: Vec<f64>,
    pub noise_sd: f64,
    pub failed_folds: Vec<usize>,
    pub boundary_warning: bool,
}

impl OutputReport {
    pub fn from_result(output: &str, cal: &CalibrationResult) -> Self {
        OutputReport {
            output: output.to_string(),
            u_hat: cal.u_hat,
            interval: [cal.interval.0, cal.interval.1],
            loo_samples: cal.loo_samples.clone(),
            discrepancy_variance: cal.discrepancy.params().variance(),
            discrepancy_length_scales: cal.discrepancy.params().length_scales().to_vec(),
            noise_sd: cal.discrepancy.noise_variance().sqrt(),
            failed_folds: cal.failed_folds.clone(),
            boundary_warning: cal.boundary_warning,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CalibrationReport {
    pub config: ConfigEcho,
    pub outputs: Vec<OutputReport>,
}

/// Location and spread of the optima along one input dimension.
#[derive(Debug, Clone, Serialize)]
pub struct DimensionSummary {
    pub name: String,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q25: f64,
    pub q75: f64,
    pub q975: f64,
}

#[derive(Debug, Serialize)]
pub struct OptimaReport {
    pub config: ConfigEcho,
    pub calibration: Vec<OutputReport>,
    pub n_recorded: usize,
    pub n_skipped: usize,
    pub dimensions: Vec<DimensionSummary>,
}

pub fn dimension_summaries(names: &[String], summary: &OptimaSummary) -> Vec<DimensionSummary> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| DimensionSummary {
            name: name.clone(),
            median: summary.median[j],
            mean: summary.mean[j],
            sd: summary.sd[j],
            q025: summary.quantiles[j].q025,
            q25: summary.quantiles[j].q25,
            q75: summary.quantiles[j].q75,
            q975: summary.quantiles[j].q975,
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize infallibly");
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Optima CSV: one row per recorded iteration, with the input
/// coordinates, the (s, r) provenance, and the realized objective.
pub fn write_optima_csv(
    path: &Path,
    input_names: &[String],
    coll: &OptimaCollection,
) -> Result<()> {
    let mut text = String::new();
    let mut header: Vec<String> = input_names.to_vec();
    header.push("s".into());
    header.push("r".into());
    header.push("objective".into());
    text.push_str(&header.join(","));
    text.push('\n');
    for i in 0..coll.points.nrows() {
        let mut fields: Vec<String> = Vec::with_capacity(header.len());
        for j in 0..coll.points.ncols() {
            fields.push(fmt_float(coll.points[(i, j)]));
        }
        let (s, r) = coll.provenance[i];
        fields.push(s.to_string());
        fields.push(r.to_string());
        fields.push(fmt_float(coll.per_point_objective[i]));
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// One `hist_<name>.csv` per input dimension with rows
/// `bin_left,bin_right,count`.
pub fn write_histograms(dir: &Path, input_names: &[String], summary: &OptimaSummary) -> Result<()> {
    for (j, name) in input_names.iter().enumerate() {
        let hist = &summary.histograms[j];
        let mut text = String::from("bin_left,bin_right,count\n");
        for b in 0..hist.counts.len() {
            text.push_str(&format!(
                "{},{},{}\n",
                fmt_float(hist.edges[b]),
                fmt_float(hist.edges[b + 1]),
                hist.counts[b]
            ));
        }
        atomic_write(&dir.join(format!("hist_{name}.csv")), text.as_bytes())?;
    }
    Ok(())
}
