//! Run configuration: a flat `key = value` text file.
//!
//! ```text
//! # inputs, in the order that fixes the dimension layout
//! box.a1.lo = -1.0
//! box.a1.hi = 1.0
//! box.a2.lo = -1.0
//! box.a2.hi = 1.0
//!
//! outputs = y
//! objective.kind = identity
//! prior.kind = flat
//! u_search.lo = -2.0
//! u_search.hi = 12.0
//!
//! N_u = 100
//! n_rep = 100
//! N = 200
//! seed = 42
//! out_dir = runs/demo
//! ```
//!
//! `box.<name>` entries double as the dataset input column names; the
//! order of first appearance fixes the input dimension order. Lines
//! starting with `#` and blank lines are skipped. Unknown keys are
//! rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use mfcal::calibrate::{CalibrationPrior, USearch};
use mfcal::decision::ObjectiveSpec;
use mfcal::design::InputBox;

use crate::error::{CliError, Result};

/// One input column with its candidate-region bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// Fully resolved configuration for `calibrate` and `optimize`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub inputs: Vec<InputSpec>,
    pub outputs: Vec<String>,
    pub objective: ObjectiveSpec,
    pub prior: CalibrationPrior,
    pub search: USearch,
    pub n_u: usize,
    pub n_rep: usize,
    pub n_candidates: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn input_names(&self) -> Vec<String> {
        self.inputs.iter().map(|i| i.name.clone()).collect()
    }

    pub fn input_box(&self) -> Result<InputBox> {
        let lo = self.inputs.iter().map(|i| i.lo).collect();
        let hi = self.inputs.iter().map(|i| i.hi).collect();
        InputBox::new(lo, hi).map_err(CliError::from)
    }
}

/// Loop sizes and seed for `benchmark`, read from the same file format
/// with every other key ignored. Unset keys stay `None` so each
/// scenario can fill in its own defaults.
#[derive(Debug, Clone, Default)]
pub struct LoopConfig {
    pub n_u: Option<usize>,
    pub n_rep: Option<usize>,
    pub n_candidates: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// One `key = value` line with its 1-based line number.
#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

fn scan(text: &str) -> Result<Vec<Entry>> {
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {line}: expected `key = value`, got `{trimmed}`"
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {line}: empty key")));
        }
        if value.is_empty() {
            return Err(CliError::Config(format!(
                "line {line}: key `{key}` has no value"
            )));
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(CliError::Config(format!(
                "line {line}: key `{key}` already set on line {}",
                prev.line
            )));
        }
        entries.push(Entry { key, value, line });
    }
    Ok(entries)
}

fn parse_f64(e: &Entry) -> Result<f64> {
    let v: f64 = e.value.parse().map_err(|_| {
        CliError::Config(format!(
            "line {}: `{}` is not a number for key `{}`",
            e.line, e.value, e.key
        ))
    })?;
    if !v.is_finite() {
        return Err(CliError::Config(format!(
            "line {}: key `{}` must be finite",
            e.line, e.key
        )));
    }
    Ok(v)
}

fn parse_count(e: &Entry) -> Result<usize> {
    e.value.parse().map_err(|_| {
        CliError::Config(format!(
            "line {}: `{}` is not a positive integer for key `{}`",
            e.line, e.value, e.key
        ))
    })
}

fn parse_u64(e: &Entry) -> Result<u64> {
    e.value.parse().map_err(|_| {
        CliError::Config(format!(
            "line {}: `{}` is not an unsigned integer for key `{}`",
            e.line, e.value, e.key
        ))
    })
}

fn parse_list(e: &Entry) -> Vec<String> {
    e.value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses the full configuration used by `calibrate` and `optimize`.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let entries = scan(text)?;

    let mut inputs: Vec<(String, Option<f64>, Option<f64>)> = Vec::new();
    let mut outputs: Option<Vec<String>> = None;
    let mut objective_kind: Option<String> = None;
    let mut objective_weights: Option<Vec<f64>> = None;
    let mut prior_kind: Option<String> = None;
    let mut prior_mean = None;
    let mut prior_sd = None;
    let mut prior_lo = None;
    let mut prior_hi = None;
    let mut search = USearch::default();
    let mut n_u = None;
    let mut n_rep = None;
    let mut n_candidates = None;
    let mut seed = None;
    let mut out_dir: Option<PathBuf> = None;

    for e in &entries {
        let parts: Vec<&str> = e.key.split('.').collect();
        match parts.as_slice() {
            ["box", name, side @ ("lo" | "hi")] => {
                if name.is_empty() {
                    return Err(CliError::Config(format!(
                        "line {}: box entry has an empty input name",
                        e.line
                    )));
                }
                let v = parse_f64(e)?;
                let slot = match inputs.iter_mut().find(|(n, _, _)| n == name) {
                    Some(s) => s,
                    None => {
                        inputs.push((name.to_string(), None, None));
                        inputs.last_mut().unwrap()
                    }
                };
                if *side == "lo" {
                    slot.1 = Some(v);
                } else {
                    slot.2 = Some(v);
                }
            }
            ["outputs"] => outputs = Some(parse_list(e)),
            ["objective", "kind"] => objective_kind = Some(e.value.clone()),
            ["objective", "weights"] => {
                let mut w = Vec::new();
                for tok in parse_list(e) {
                    w.push(tok.parse::<f64>().map_err(|_| {
                        CliError::Config(format!("line {}: weight `{tok}` is not a number", e.line))
                    })?);
                }
                objective_weights = Some(w);
            }
            ["prior", "kind"] => prior_kind = Some(e.value.clone()),
            ["prior", "mean"] => prior_mean = Some(parse_f64(e)?),
            ["prior", "sd"] => prior_sd = Some(parse_f64(e)?),
            ["prior", "lo"] => prior_lo = Some(parse_f64(e)?),
            ["prior", "hi"] => prior_hi = Some(parse_f64(e)?),
            ["u_search", "lo"] => search.lo = parse_f64(e)?,
            ["u_search", "hi"] => search.hi = parse_f64(e)?,
            ["N_u"] => n_u = Some(parse_count(e)?),
            ["n_rep"] => n_rep = Some(parse_count(e)?),
            ["N"] => n_candidates = Some(parse_count(e)?),
            ["seed"] => seed = Some(parse_u64(e)?),
            ["out_dir"] => out_dir = Some(PathBuf::from(&e.value)),
            _ => {
                return Err(CliError::Config(format!(
                    "line {}: unknown key `{}`",
                    e.line, e.key
                )))
            }
        }
    }

    let mut resolved_inputs = Vec::with_capacity(inputs.len());
    for (name, lo, hi) in inputs {
        let (Some(lo), Some(hi)) = (lo, hi) else {
            return Err(CliError::Config(format!(
                "input `{name}` needs both box.{name}.lo and box.{name}.hi"
            )));
        };
        if lo >= hi {
            return Err(CliError::Config(format!(
                "input `{name}` has an empty range [{lo}, {hi}]"
            )));
        }
        resolved_inputs.push(InputSpec { name, lo, hi });
    }
    if resolved_inputs.is_empty() {
        return Err(CliError::Config("no box.<name>.lo/hi entries".into()));
    }

    let outputs = outputs.ok_or_else(|| CliError::Config("missing key `outputs`".into()))?;
    if outputs.is_empty() {
        return Err(CliError::Config("`outputs` names no columns".into()));
    }
    for o in &outputs {
        if resolved_inputs.iter().any(|i| &i.name == o) {
            return Err(CliError::Config(format!(
                "column `{o}` is listed as both an input and an output"
            )));
        }
    }

    let objective = match objective_kind.as_deref().unwrap_or("identity") {
        "identity" => ObjectiveSpec::Identity,
        "sum_of_squares" => ObjectiveSpec::SumOfSquares,
        "weighted_sum_of_squares" => {
            let w = objective_weights.take().ok_or_else(|| {
                CliError::Config("weighted objective needs `objective.weights`".into())
            })?;
            ObjectiveSpec::WeightedSumOfSquares(w)
        }
        other => {
            return Err(CliError::Config(format!(
                "objective.kind `{other}` is not one of identity, sum_of_squares, \
                 weighted_sum_of_squares"
            )))
        }
    };
    if objective_weights.is_some() && !matches!(objective, ObjectiveSpec::WeightedSumOfSquares(_)) {
        return Err(CliError::Config(
            "objective.weights only applies to objective.kind = weighted_sum_of_squares".into(),
        ));
    }
    if let Some(p) = objective.n_outputs() {
        if p != outputs.len() {
            return Err(CliError::Config(format!(
                "objective expects {p} outputs but `outputs` names {}",
                outputs.len()
            )));
        }
    }

    let prior = match prior_kind.as_deref().unwrap_or("flat") {
        "flat" => CalibrationPrior::Flat,
        "gaussian" => {
            let (Some(mean), Some(sd)) = (prior_mean, prior_sd) else {
                return Err(CliError::Config(
                    "gaussian prior needs prior.mean and prior.sd".into(),
                ));
            };
            prior_mean = None;
            prior_sd = None;
            CalibrationPrior::Gaussian { mean, sd }
        }
        "uniform" => {
            let (Some(lo), Some(hi)) = (prior_lo, prior_hi) else {
                return Err(CliError::Config(
                    "uniform prior needs prior.lo and prior.hi".into(),
                ));
            };
            prior_lo = None;
            prior_hi = None;
            CalibrationPrior::Uniform { lo, hi }
        }
        other => {
            return Err(CliError::Config(format!(
                "prior.kind `{other}` is not one of flat, gaussian, uniform"
            )))
        }
    };
    if prior_mean.is_some() || prior_sd.is_some() || prior_lo.is_some() || prior_hi.is_some() {
        return Err(CliError::Config(
            "prior parameters present that the chosen prior.kind does not use".into(),
        ));
    }
    prior.validate()?;
    search.validate()?;

    Ok(RunConfig {
        inputs: resolved_inputs,
        outputs,
        objective,
        prior,
        search,
        n_u: n_u.ok_or_else(|| CliError::Config("missing key `N_u`".into()))?,
        n_rep: n_rep.ok_or_else(|| CliError::Config("missing key `n_rep`".into()))?,
        n_candidates: n_candidates.ok_or_else(|| CliError::Config("missing key `N`".into()))?,
        seed: seed.ok_or_else(|| CliError::Config("missing key `seed`".into()))?,
        out_dir: out_dir.ok_or_else(|| CliError::Config("missing key `out_dir`".into()))?,
    })
}

/// Reads only the loop keys, leaving everything else alone.
pub fn parse_loop_config(text: &str) -> Result<LoopConfig> {
    let entries = scan(text)?;
    let mut cfg = LoopConfig::default();
    for e in &entries {
        match e.key.as_str() {
            "N_u" => cfg.n_u = Some(parse_count(e)?),
            "n_rep" => cfg.n_rep = Some(parse_count(e)?),
            "N" => cfg.n_candidates = Some(parse_count(e)?),
            "seed" => cfg.seed = Some(parse_u64(e)?),
            "out_dir" => cfg.out_dir = Some(PathBuf::from(&e.value)),
            _ => {}
        }
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn load_loop_config(path: &Path) -> Result<LoopConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_loop_config(&text)
}
