//! Simulation-based decision analysis over the posterior of the
//! optimal input.
//!
//! Given posterior samples `u^(1..N_u)` of the scaling parameter, each
//! outer iteration rebuilds the joint model(s) at `u^(s)`; each inner
//! replication draws a fresh candidate design, samples one realization
//! of every output's posterior predictive, and records the candidate
//! minimizing the objective `G`. The pooled argmins approximate the
//! posterior distribution of the optimizer, and their per-dimension
//! spread quantifies decision uncertainty.
//!
//! Randomness is keyed by replication index only (common random
//! numbers across the `u` samples): iterations `(s, r)` and `(s', r)`
//! share the candidate design and the standard-normal draws, so
//! differences across `s` reflect exactly the effect of `u`. In
//! particular a constant `u` sample produces identical optima in every
//! outer iteration.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::calibrate::{fit_discrepancy_core, CalibrationResult};
use crate::design::{lhd_sample, mvn_sample, InputBox};
use crate::error::{Error, Result};
use crate::gp::{
    fit_gp_mle_with, FitOptions, GpFit, MeanFunction, NoiseSpec, DETERMINISTIC_NUGGET,
};
use crate::predict::MultiFidelityModel;
use crate::seed::{streams, Seed};
use crate::stats;

/// Scalarization of a p-dimensional response.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    /// Single output used as-is (requires p = 1).
    Identity,
    /// Sum of squared outputs.
    SumOfSquares,
    /// Weighted sum of squared outputs; the weight vector fixes p.
    WeightedSumOfSquares(Vec<f64>),
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        if let ObjectiveSpec::WeightedSumOfSquares(w) = self {
            if w.is_empty() {
                return Err(Error::domain(
                    "weighted objective needs at least one weight",
                ));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("objective weights must be finite"));
            }
        }
        Ok(())
    }

    /// Output count the objective pins down, if any.
    pub fn n_outputs(&self) -> Option<usize> {
        match self {
            ObjectiveSpec::Identity => Some(1),
            ObjectiveSpec::SumOfSquares => None,
            ObjectiveSpec::WeightedSumOfSquares(w) => Some(w.len()),
        }
    }
}

/// Evaluates the objective at one response vector.
pub fn evaluate_objective(spec: &ObjectiveSpec, y: &[f64]) -> Result<f64> {
    spec.validate()?;
    if let Some(p) = spec.n_outputs() {
        if y.len() != p {
            return Err(Error::domain(format!(
                "objective expects {p} outputs, got {}",
                y.len()
            )));
        }
    }
    if y.is_empty() {
        return Err(Error::domain("objective needs at least one output"));
    }
    Ok(match spec {
        ObjectiveSpec::Identity => y[0],
        ObjectiveSpec::SumOfSquares => y.iter().map(|v| v * v).sum(),
        ObjectiveSpec::WeightedSumOfSquares(w) => y.iter().zip(w).map(|(v, wk)| wk * v * v).sum(),
    })
}

/// Settings of the simulation loop.
#[derive(Debug, Clone)]
pub struct DecisionConfig {
    pub n_u: usize,
    pub n_rep: usize,
    pub n_candidates: usize,
    pub bounds: InputBox,
    pub seed: Seed,
}

impl DecisionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_u == 0 || self.n_rep == 0 || self.n_candidates == 0 {
            return Err(Error::domain(
                "decision analysis counts must all be at least 1",
            ));
        }
        Ok(())
    }
}

/// Anything that yields a Gaussian predictive over a candidate set.
/// Implemented by the joint two-fidelity model and by a plain GP fit,
/// so single-fidelity ablations run through the same sampling harness.
pub trait PredictiveSource {
    fn input_dim(&self) -> usize;
    fn predictive(&self, x_cand: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

impl PredictiveSource for MultiFidelityModel {
    fn input_dim(&self) -> usize {
        self.low_emulator().inputs().ncols()
    }

    fn predictive(&self, x_cand: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let p = self.predict_high(x_cand)?;
        Ok((p.mean, p.cov))
    }
}

impl PredictiveSource for GpFit {
    fn input_dim(&self) -> usize {
        self.inputs().ncols()
    }

    fn predictive(&self, x_cand: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let p = self.predict(x_cand)?;
        Ok((p.mean, p.cov))
    }
}

/// Pooled optimizer draws with their provenance.
#[derive(Debug, Clone)]
pub struct OptimaCollection {
    /// One optimum per completed iteration, row-per-point.
    pub points: DMatrix<f64>,
    /// Realized minimal objective value per recorded point.
    pub per_point_objective: Vec<f64>,
    /// (s, r) index pair of each recorded point.
    pub provenance: Vec<(usize, usize)>,
    /// (s, r) pairs that were skipped because of numerical failure.
    pub skipped: Vec<(usize, usize)>,
    /// Input region the candidates were drawn from.
    pub bounds: InputBox,
}

/// Per-dimension location and spread of a collection of optima.
#[derive(Debug, Clone)]
pub struct OptimaSummary {
    pub median: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub quantiles: Vec<DimQuantiles>,
    pub histograms: Vec<Histogram>,
}

#[derive(Debug, Clone, Copy)]
pub struct DimQuantiles {
    pub q025: f64,
    pub q25: f64,
    pub q75: f64,
    pub q975: f64,
}

/// Fixed-width histogram over one dimension of the input region.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub(crate) fn argmin(values: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] < values[best] {
            best = i;
        }
    }
    best
}

/// Runs the double simulation loop.
///
/// `models_factory` is called once per outer iteration with the row
/// `u_samples[s]` and must return one predictive source per output.
/// A factory failure skips the whole outer iteration; a factorization
/// failure inside one replication skips that iteration alone. More
/// than 10% skipped iterations aborts the analysis.
pub fn run_decision_analysis<F>(
    mut models_factory: F,
    u_samples: &DMatrix<f64>,
    spec: &ObjectiveSpec,
    cfg: &DecisionConfig,
) -> Result<OptimaCollection>
where
    F: FnMut(&[f64]) -> Result<Vec<Arc<dyn PredictiveSource>>>,
{
    cfg.validate()?;
    spec.validate()?;
    if u_samples.nrows() != cfg.n_u {
        return Err(Error::domain(format!(
            "u_samples has {} rows but the configuration says n_u = {}",
            u_samples.nrows(),
            cfg.n_u
        )));
    }
    if let Some(p) = spec.n_outputs() {
        if u_samples.ncols() != p {
            return Err(Error::domain(format!(
                "objective expects {p} outputs but u_samples has {} columns",
                u_samples.ncols()
            )));
        }
    }
    let d = cfg.bounds.dim();
    let total = cfg.n_u * cfg.n_rep;
    let mut rows: Vec<f64> = Vec::with_capacity(total * d);
    let mut per_point_objective = Vec::with_capacity(total);
    let mut provenance = Vec::with_capacity(total);
    let mut skipped = Vec::new();

    for s in 0..cfg.n_u {
        let u_row: Vec<f64> = u_samples.row(s).iter().copied().collect();
        let models = match models_factory(&u_row) {
            Ok(m) => m,
            Err(Error::Domain(msg)) => return Err(Error::Domain(msg)),
            Err(_) => {
                for r in 0..cfg.n_rep {
                    skipped.push((s, r));
                }
                continue;
            }
        };
        if models.is_empty() || models.len() != u_samples.ncols() {
            return Err(Error::domain(format!(
                "factory returned {} models for {} outputs",
                models.len(),
                u_samples.ncols()
            )));
        }
        if models.iter().any(|m| m.input_dim() != d) {
            return Err(Error::domain(
                "model input dimension disagrees with the candidate region",
            ));
        }

        'rep: for r in 0..cfg.n_rep {
            // Candidate and realization streams depend on r (and the
            // output index) only; see the module doc.
            let cand_seed = cfg.seed.with(&[streams::CANDIDATES, r as u64]);
            let x_cand = lhd_sample(cfg.n_candidates, &cfg.bounds, &cand_seed)?;
            let mut draws: Vec<DVector<f64>> = Vec::with_capacity(models.len());
            for (k, model) in models.iter().enumerate() {
                let real_seed = cfg.seed.with(&[streams::REALIZATIONS, r as u64, k as u64]);
                let (mean, cov) = match model.predictive(&x_cand) {
                    Ok(mc) => mc,
                    Err(Error::Domain(msg)) => return Err(Error::Domain(msg)),
                    Err(_) => {
                        skipped.push((s, r));
                        continue 'rep;
                    }
                };
                match mvn_sample(&mean, &cov, &real_seed) {
                    Ok(y) => draws.push(y),
                    Err(Error::Domain(msg)) => return Err(Error::Domain(msg)),
                    Err(_) => {
                        skipped.push((s, r));
                        continue 'rep;
                    }
                }
            }
            let mut g = DVector::zeros(cfg.n_candidates);
            let mut y_row = vec![0.0; models.len()];
            for m in 0..cfg.n_candidates {
                for (k, draw) in draws.iter().enumerate() {
                    y_row[k] = draw[m];
                }
                g[m] = evaluate_objective(spec, &y_row)?;
            }
            let best = argmin(&g);
            rows.extend(x_cand.row(best).iter().copied());
            per_point_objective.push(g[best]);
            provenance.push((s, r));
        }
    }

    if skipped.len() * 10 > total {
        return Err(Error::analysis(format!(
            "{} of {} iterations skipped (more than 10%)",
            skipped.len(),
            total
        )));
    }
    let points = DMatrix::from_row_slice(provenance.len(), d, &rows);
    Ok(OptimaCollection {
        points,
        per_point_objective,
        provenance,
        skipped,
        bounds: cfg.bounds.clone(),
    })
}

/// Runs the same sampling harness against a single fixed predictive
/// source (the single-fidelity ablations).
pub fn run_single_source_analysis(
    source: Arc<dyn PredictiveSource>,
    spec: &ObjectiveSpec,
    cfg: &DecisionConfig,
) -> Result<OptimaCollection> {
    let p = spec.n_outputs().unwrap_or(1);
    let u_samples = DMatrix::zeros(cfg.n_u, p);
    run_decision_analysis(|_| Ok(vec![source.clone(); p]), &u_samples, spec, cfg)
}

/// Summarizes the pooled optima per dimension.
pub fn summarize_optima(coll: &OptimaCollection, bins: usize) -> Result<OptimaSummary> {
    if coll.points.nrows() == 0 {
        return Err(Error::domain("cannot summarize an empty collection"));
    }
    if bins == 0 {
        return Err(Error::domain("histogram needs at least one bin"));
    }
    let d = coll.points.ncols();
    let n = coll.points.nrows();
    let mut median = Vec::with_capacity(d);
    let mut mean = Vec::with_capacity(d);
    let mut sd = Vec::with_capacity(d);
    let mut quantiles = Vec::with_capacity(d);
    let mut histograms = Vec::with_capacity(d);
    for j in 0..d {
        let col: Vec<f64> = coll.points.column(j).iter().copied().collect();
        median.push(stats::median(&col)?);
        mean.push(stats::mean(&col)?);
        sd.push(stats::std_dev(&col)?);
        quantiles.push(DimQuantiles {
            q025: stats::quantile(&col, 0.025)?,
            q25: stats::quantile(&col, 0.25)?,
            q75: stats::quantile(&col, 0.75)?,
            q975: stats::quantile(&col, 0.975)?,
        });
        let (lo, hi) = (coll.bounds.lower()[j], coll.bounds.upper()[j]);
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0usize; bins];
        for &v in &col {
            let mut idx = ((v - lo) / width).floor() as isize;
            idx = idx.clamp(0, bins as isize - 1);
            counts[idx as usize] += 1;
        }
        debug_assert_eq!(counts.iter().sum::<usize>(), n);
        histograms.push(Histogram { edges, counts });
    }
    Ok(OptimaSummary {
        median,
        mean,
        sd,
        quantiles,
        histograms,
    })
}

/// One synthetic dataset of paired fidelities.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub x_low: DMatrix<f64>,
    pub y_low: DVector<f64>,
    pub x_high: DMatrix<f64>,
    pub y_high: DVector<f64>,
}

/// Supplies regenerated datasets with a known true optimum.
pub trait ScenarioGenerator {
    fn generate(&self, index: usize) -> Result<ScenarioData>;
    fn true_optimum(&self) -> &[f64];
    fn input_box(&self) -> &InputBox;
}

/// Calibration settings used when a study rebuilds the pipeline per
/// dataset. The defaults match the estimation module's.
#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub fit: FitOptions,
    pub search: crate::calibrate::USearch,
    pub prior: crate::calibrate::CalibrationPrior,
    pub bins: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            fit: FitOptions::default(),
            search: crate::calibrate::USearch::default(),
            prior: crate::calibrate::CalibrationPrior::Flat,
            bins: 30,
        }
    }
}

/// Squared error of each strategy's median optimum for one dataset.
#[derive(Debug, Clone)]
pub struct DatasetOutcome {
    pub low_se: Vec<f64>,
    pub high_se: Vec<f64>,
    pub mf_se: Vec<f64>,
}

/// Aggregated mean squared errors across regenerated datasets.
#[derive(Debug, Clone)]
pub struct MseStudy {
    pub low_only: Vec<f64>,
    pub high_only: Vec<f64>,
    pub multi_fidelity: Vec<f64>,
    pub per_dataset: Vec<DatasetOutcome>,
    pub failed_datasets: usize,
}

/// Builds a factory that rebuilds the joint model per `u` sample,
/// refitting the discrepancy hyperparameters conditional on each
/// value. Hyperparameters vary smoothly in `u`, so refits are shared
/// between samples that agree to three decimals.
pub struct ModelFactory {
    low: Arc<GpFit>,
    yhat_high: DVector<f64>,
    x_high: DMatrix<f64>,
    y_high: DVector<f64>,
    fit_seed: Seed,
    options: FitOptions,
    cache: HashMap<i64, Arc<MultiFidelityModel>>,
}

impl ModelFactory {
    pub fn new(
        low: Arc<GpFit>,
        x_high: DMatrix<f64>,
        y_high: DVector<f64>,
        seed: &Seed,
        options: FitOptions,
    ) -> Result<Self> {
        let yhat_high = low.predict_mean(&x_high)?;
        Ok(ModelFactory {
            low,
            yhat_high,
            x_high,
            y_high,
            fit_seed: seed.child(streams::U_SEARCH),
            options,
            cache: HashMap::new(),
        })
    }

    pub fn model_at(&mut self, u: f64) -> Result<Arc<MultiFidelityModel>> {
        if !u.is_finite() {
            return Err(Error::domain(format!(
                "scaling sample must be finite, got {u}"
            )));
        }
        let key = (u * 1000.0).round() as i64;
        if let Some(m) = self.cache.get(&key) {
            return Ok(m.clone());
        }
        let u_fit = key as f64 / 1000.0;
        let disc = fit_discrepancy_core(
            u_fit,
            &self.yhat_high,
            &self.x_high,
            &self.y_high,
            &self.fit_seed,
            &self.options,
        )?;
        let model = Arc::new(MultiFidelityModel::from_parts(
            self.low.as_ref().clone(),
            u_fit,
            disc.params().clone(),
            disc.noise_variance(),
            self.x_high.clone(),
            self.y_high.clone(),
        )?);
        self.cache.insert(key, model.clone());
        Ok(model)
    }

    pub fn refit_count(&self) -> usize {
        self.cache.len()
    }
}

/// End-to-end single-output pipeline for one dataset: calibrate,
/// resample `u`, and run the decision analysis for the three
/// strategies (low-only, high-only, multi-fidelity).
pub struct ScenarioPipelines {
    pub low_only: OptimaCollection,
    pub high_only: OptimaCollection,
    pub multi_fidelity: OptimaCollection,
    pub calibration: CalibrationResult,
}

pub fn run_scenario_pipelines(
    data: &ScenarioData,
    cfg: &DecisionConfig,
    opts: &StudyOptions,
) -> Result<ScenarioPipelines> {
    let spec = ObjectiveSpec::Identity;
    // Both single-fidelity ablations emulate their dataset the same
    // way the low-fidelity stage does: constant mean, deterministic
    // nugget.
    let low = Arc::new(fit_gp_mle_with(
        &data.x_low,
        &data.y_low,
        MeanFunction::sample_mean(&data.y_low),
        NoiseSpec::Fixed(DETERMINISTIC_NUGGET),
        &cfg.seed.child(streams::DATASET),
        &opts.fit,
    )?);
    let high = Arc::new(fit_gp_mle_with(
        &data.x_high,
        &data.y_high,
        MeanFunction::sample_mean(&data.y_high),
        NoiseSpec::Fixed(DETERMINISTIC_NUGGET),
        &cfg.seed.child(streams::DATASET),
        &opts.fit,
    )?);
    let low_only = run_single_source_analysis(low.clone(), &spec, cfg)?;
    let high_only = run_single_source_analysis(high, &spec, cfg)?;

    let calibration = crate::calibrate::loo_posterior_with(
        low.as_ref(),
        &data.x_high,
        &data.y_high,
        &opts.prior,
        &opts.search,
        &cfg.seed,
        &opts.fit,
    )?;
    let u_draws = crate::calibrate::sample_u_posterior(&calibration, cfg.n_u, &cfg.seed)?;
    let u_samples = DMatrix::from_fn(cfg.n_u, 1, |i, _| u_draws[i]);
    let mut factory = ModelFactory::new(
        low,
        data.x_high.clone(),
        data.y_high.clone(),
        &cfg.seed,
        opts.fit.clone(),
    )?;
    let multi_fidelity = run_decision_analysis(
        |u| {
            let m = factory.model_at(u[0])?;
            Ok(vec![m as Arc<dyn PredictiveSource>])
        },
        &u_samples,
        &spec,
        cfg,
    )?;
    Ok(ScenarioPipelines {
        low_only,
        high_only,
        multi_fidelity,
        calibration,
    })
}

/// Compares the three strategies across regenerated datasets by the
/// squared error of their per-dimension median optimum against the
/// true optimum, averaged over datasets.
pub fn mse_study(
    generator: &dyn ScenarioGenerator,
    n_datasets: usize,
    cfg: &DecisionConfig,
) -> Result<MseStudy> {
    mse_study_with(generator, n_datasets, cfg, &StudyOptions::default())
}

pub fn mse_study_with(
    generator: &dyn ScenarioGenerator,
    n_datasets: usize,
    cfg: &DecisionConfig,
    opts: &StudyOptions,
) -> Result<MseStudy> {
    if n_datasets == 0 {
        return Err(Error::domain("study needs at least one dataset"));
    }
    let truth = generator.true_optimum().to_vec();
    let d = truth.len();
    let mut per_dataset = Vec::with_capacity(n_datasets);
    let mut failed = 0usize;
    for idx in 0..n_datasets {
        let data = generator.generate(idx)?;
        let mut cfg_ds = cfg.clone();
        cfg_ds.seed = cfg.seed.with(&[streams::SCENARIO, idx as u64]);
        let pipes = match run_scenario_pipelines(&data, &cfg_ds, opts) {
            Ok(p) => p,
            Err(Error::Domain(msg)) => return Err(Error::Domain(msg)),
            Err(_) => {
                failed += 1;
                continue;
            }
        };
        let se = |coll: &OptimaCollection| -> Result<Vec<f64>> {
            let s = summarize_optima(coll, 1)?;
            Ok((0..d).map(|j| (s.median[j] - truth[j]).powi(2)).collect())
        };
        per_dataset.push(DatasetOutcome {
            low_se: se(&pipes.low_only)?,
            high_se: se(&pipes.high_only)?,
            mf_se: se(&pipes.multi_fidelity)?,
        });
    }
    if per_dataset.is_empty() {
        return Err(Error::analysis("every dataset in the study failed"));
    }
    let agg = |pick: fn(&DatasetOutcome) -> &Vec<f64>| -> Vec<f64> {
        (0..d)
            .map(|j| per_dataset.iter().map(|o| pick(o)[j]).sum::<f64>() / per_dataset.len() as f64)
            .collect()
    };
    Ok(MseStudy {
        low_only: agg(|o| &o.low_se),
        high_only: agg(|o| &o.high_se),
        multi_fidelity: agg(|o| &o.mf_se),
        per_dataset,
        failed_datasets: failed,
    })
}
