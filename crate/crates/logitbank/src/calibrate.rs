//! Joint estimation of item parameters and examinee abilities.
//!
//! Minimizes the masked logit-space MSE over observed cells plus two
//! penalties that pin the 2PL gauge freedoms: a ridge on log-discrimination
//! (scale) and a squared-mean penalty on abilities (location). Optimization
//! is full-batch adaptive-moment gradient descent from a zero start, with the
//! step size annealed linearly to zero so the iterates settle instead of
//! limit-cycling; everything is deterministic given `(matrix, config)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    mean_of_present, squeeze_logit, ExamineeId, ItemBank, ItemId, ItemParams, ResponseMatrix,
    SqueezeConfig,
};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const PLATEAU_WINDOW: usize = 50;
const SIGMA_FLOOR: f64 = 1e-9;

/// Penalties, step size, stopping rule, and link constants for one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Ridge strength on log-discrimination (scale gauge).
    pub lambda_ridge: f64,
    /// Strength of the squared-mean-ability penalty (location gauge).
    pub mu_center: f64,
    /// Peak adaptive-moment step size.
    pub learning_rate: f64,
    pub max_steps: u32,
    /// Relative loss change over a 50-step window below which the fit is
    /// declared converged.
    pub rel_tol: f64,
    /// Recorded for provenance; the fit itself is deterministic and draws no
    /// randomness.
    pub seed: u64,
    pub squeeze: SqueezeConfig,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            lambda_ridge: 0.5,
            mu_center: 0.01,
            learning_rate: 1e-2,
            max_steps: 20_000,
            rel_tol: 1e-9,
            seed: 0,
            squeeze: SqueezeConfig::default(),
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda_ridge.is_finite() || self.lambda_ridge < 0.0 {
            return Err(Error::Validation(format!(
                "lambda_ridge must be non-negative, got {}",
                self.lambda_ridge
            )));
        }
        if !self.mu_center.is_finite() || self.mu_center < 0.0 {
            return Err(Error::Validation(format!(
                "mu_center must be non-negative, got {}",
                self.mu_center
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Validation(format!(
                "learning_rate must be strictly positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Validation("max_steps must be at least 1".to_owned()));
        }
        if !self.rel_tol.is_finite() || self.rel_tol <= 0.0 {
            return Err(Error::Validation(format!(
                "rel_tol must be strictly positive, got {}",
                self.rel_tol
            )));
        }
        self.squeeze.validate()
    }
}

/// Goodness-of-fit summary for one calibration run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub r_squared: f64,
    pub sigma_hat: f64,
    pub final_loss: f64,
    pub steps_run: u32,
    pub converged: bool,
}

/// Output of [`fit`]: the frozen bank, per-examinee abilities, and fit
/// statistics.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub bank: ItemBank,
    pub abilities: BTreeMap<ExamineeId, f64>,
    pub stats: FitStats,
}

/// One masked observation: examinee index, item index, squeezed logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub examinee: usize,
    pub item: usize,
    pub y: f64,
}

/// Index tables plus the observation list, sorted by (item, examinee) so
/// every summation order is fixed.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub examinees: Vec<ExamineeId>,
    pub items: Vec<ItemId>,
    pub observations: Vec<Observation>,
}

/// Free parameters of the joint fit. Discrimination is carried as `ln a`, so
/// every admissible parameter vector yields `a > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub theta: Vec<f64>,
    pub ln_a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Parameters {
    fn zeros(n_examinees: usize, n_items: usize) -> Self {
        Parameters {
            theta: vec![0.0; n_examinees],
            ln_a: vec![0.0; n_items],
            b: vec![0.0; n_items],
        }
    }
}

/// One observation per (examinee, item) pair with a non-missing epoch mean;
/// `y = squeeze_logit(epoch_mean)`. Missing cells produce no observation.
pub fn build_observations(
    matrix: &ResponseMatrix,
    squeeze: SqueezeConfig,
) -> Result<ObservationSet> {
    squeeze.validate()?;
    // (examinee, item, mean) in examinee-major order first.
    let mut triples: Vec<(ExamineeId, ItemId, f64)> = Vec::new();
    for examinee in matrix.examinees() {
        let rows = matrix.examinee_rows(examinee).expect("examinee listed");
        for (item, epochs) in rows {
            if let Some(mean) = mean_of_present(epochs) {
                triples.push((examinee.clone(), item.clone(), mean));
            }
        }
    }
    if triples.is_empty() {
        return Err(Error::Validation(
            "matrix has no observed cells: every epoch of every cell is missing".to_owned(),
        ));
    }

    let mut examinees: Vec<ExamineeId> = triples.iter().map(|(e, _, _)| e.clone()).collect();
    examinees.sort_unstable();
    examinees.dedup();
    let mut items: Vec<ItemId> = triples.iter().map(|(_, i, _)| i.clone()).collect();
    items.sort_unstable();
    items.dedup();

    let examinee_index: BTreeMap<&ExamineeId, usize> =
        examinees.iter().enumerate().map(|(k, e)| (e, k)).collect();
    let item_index: BTreeMap<&ItemId, usize> =
        items.iter().enumerate().map(|(k, i)| (i, k)).collect();

    let mut observations: Vec<Observation> = Vec::with_capacity(triples.len());
    for (e, i, mean) in &triples {
        observations.push(Observation {
            examinee: examinee_index[e],
            item: item_index[i],
            y: squeeze_logit(*mean, squeeze)?,
        });
    }
    observations.sort_unstable_by_key(|o| (o.item, o.examinee));

    Ok(ObservationSet { examinees, items, observations })
}

/// Masked penalized loss:
/// `(1/|O|) * sum (y - a(theta - b))^2 + (lambda/J) * sum (ln a)^2 + mu * (mean theta)^2`.
pub fn loss(params: &Parameters, obs: &ObservationSet, cfg: &CalibrationConfig) -> f64 {
    let a: Vec<f64> = params.ln_a.iter().map(|x| x.exp()).collect();
    let mut sq = 0.0;
    for o in &obs.observations {
        let r = o.y - a[o.item] * (params.theta[o.examinee] - params.b[o.item]);
        sq += r * r;
    }
    let n = obs.observations.len() as f64;
    let j = params.ln_a.len() as f64;
    let ridge = params.ln_a.iter().map(|x| x * x).sum::<f64>() * (cfg.lambda_ridge / j);
    let mean_theta = params.theta.iter().sum::<f64>() / params.theta.len() as f64;
    sq / n + ridge + cfg.mu_center * mean_theta * mean_theta
}

fn residuals<'a>(
    params: &'a Parameters,
    obs: &'a ObservationSet,
) -> impl Iterator<Item = f64> + 'a {
    obs.observations.iter().map(move |o| {
        let a = params.ln_a[o.item].exp();
        o.y - a * (params.theta[o.examinee] - params.b[o.item])
    })
}

/// Root-mean-square residual over observed cells, floored at `1e-9` so
/// degenerate noiseless fits never produce zero-width confidence intervals.
/// No degrees-of-freedom correction is applied.
pub fn estimate_sigma(params: &Parameters, obs: &ObservationSet) -> Result<f64> {
    let n = obs.observations.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "sigma estimation needs at least 2 observations, got {n}"
        )));
    }
    let ssr: f64 = residuals(params, obs).map(|r| r * r).sum();
    Ok((ssr / n as f64).sqrt().max(SIGMA_FLOOR))
}

/// `1 - SSR/SST` in logit space over observed cells.
pub fn r_squared(params: &Parameters, obs: &ObservationSet) -> Result<f64> {
    let n = obs.observations.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "R^2 needs at least 2 observations, got {n}"
        )));
    }
    let mean_y = obs.observations.iter().map(|o| o.y).sum::<f64>() / n as f64;
    let sst: f64 = obs.observations.iter().map(|o| (o.y - mean_y).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::UndefinedStatistic(
            "R^2 undefined: observed logits are constant".to_owned(),
        ));
    }
    let ssr: f64 = residuals(params, obs).map(|r| r * r).sum();
    Ok(1.0 - ssr / sst)
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n] }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, bc1: f64, bc2: f64) {
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * g;
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Joint fit of `{theta_i, ln a_j, b_j}`; see the module docs for the loss.
///
/// Parameters start at zero (the penalty optimum) and every summation runs in
/// a fixed order, so two fits with identical inputs are bit-identical.
pub fn fit(matrix: &ResponseMatrix, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    fit_traced(matrix, cfg).map(|(result, _)| result)
}

/// Like [`fit`] but also returns the per-step loss trace.
pub fn fit_traced(
    matrix: &ResponseMatrix,
    cfg: &CalibrationConfig,
) -> Result<(CalibrationResult, Vec<f64>)> {
    cfg.validate()?;
    let obs = build_observations(matrix, cfg.squeeze)?;

    // Every examinee and every item that appears in cells must carry at
    // least one observation, or its parameters are unconstrained.
    if matrix.n_examinees() != obs.examinees.len() {
        let missing: Vec<String> = matrix
            .examinees()
            .filter(|e| obs.examinees.binary_search(e).is_err())
            .map(|e| e.to_string())
            .collect();
        return Err(Error::Identifiability(format!(
            "examinee(s) without any observed cell: {}",
            missing.join(", ")
        )));
    }
    {
        let mut cell_items: Vec<&ItemId> = matrix
            .examinees()
            .flat_map(|e| matrix.examinee_rows(e).expect("row").keys())
            .collect();
        cell_items.sort_unstable();
        cell_items.dedup();
        let missing: Vec<String> = cell_items
            .iter()
            .filter(|i| obs.items.binary_search(i).is_err())
            .map(|i| i.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Identifiability(format!(
                "item(s) without any observed cell: {}",
                missing.join(", ")
            )));
        }
    }
    let n_examinees = obs.examinees.len();
    let n_items = obs.items.len();
    if n_examinees < 3 {
        return Err(Error::Identifiability(format!(
            "calibration needs at least 3 examinees with observations, got {n_examinees}"
        )));
    }
    if n_items < 2 {
        return Err(Error::Identifiability(format!(
            "calibration needs at least 2 items with observations, got {n_items}"
        )));
    }

    let n = obs.observations.len() as f64;
    let inv_n = 1.0 / n;
    let ridge_coeff = cfg.lambda_ridge / n_items as f64;

    let mut params = Parameters::zeros(n_examinees, n_items);
    let mut adam_theta = AdamState::new(n_examinees);
    let mut adam_lna = AdamState::new(n_items);
    let mut adam_b = AdamState::new(n_items);

    let mut g_theta = vec![0.0; n_examinees];
    let mut g_lna = vec![0.0; n_items];
    let mut g_b = vec![0.0; n_items];
    let mut a = vec![1.0; n_items];

    let mut trace: Vec<f64> = Vec::with_capacity(cfg.max_steps as usize);
    let mut converged = false;
    let mut steps_run = 0u32;
    let max_steps = cfg.max_steps as f64;

    for step in 1..=cfg.max_steps {
        for (aj, ln_aj) in a.iter_mut().zip(&params.ln_a) {
            *aj = ln_aj.exp();
        }
        g_theta.iter_mut().for_each(|g| *g = 0.0);
        g_lna.iter_mut().for_each(|g| *g = 0.0);
        g_b.iter_mut().for_each(|g| *g = 0.0);

        let mut sq = 0.0;
        for o in &obs.observations {
            let aj = a[o.item];
            let d = params.theta[o.examinee] - params.b[o.item];
            let r = o.y - aj * d;
            sq += r * r;
            let s = 2.0 * inv_n * r;
            g_theta[o.examinee] -= s * aj;
            g_b[o.item] += s * aj;
            g_lna[o.item] -= s * aj * d;
        }

        let mean_theta = params.theta.iter().sum::<f64>() / n_examinees as f64;
        let theta_pen_grad = 2.0 * cfg.mu_center * mean_theta / n_examinees as f64;
        for g in &mut g_theta {
            *g += theta_pen_grad;
        }
        let mut ridge = 0.0;
        for (g, ln_aj) in g_lna.iter_mut().zip(&params.ln_a) {
            ridge += ln_aj * ln_aj;
            *g += 2.0 * ridge_coeff * ln_aj;
        }

        let current_loss = sq * inv_n + ridge_coeff * ridge + cfg.mu_center * mean_theta * mean_theta;
        if !current_loss.is_finite() {
            return Err(Error::NumericFailure(format!(
                "loss became non-finite at step {step}"
            )));
        }
        trace.push(current_loss);
        steps_run = step;

        // Linear step-size anneal to zero. A fixed step limit-cycles at
        // amplitude ~learning_rate around the optimum, which is far too
        // coarse for the noiseless exact-fit contracts.
        let lr = cfg.learning_rate * (max_steps - step as f64) / max_steps;
        let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
        adam_theta.step(&mut params.theta, &g_theta, lr, bc1, bc2);
        adam_lna.step(&mut params.ln_a, &g_lna, lr, bc1, bc2);
        adam_b.step(&mut params.b, &g_b, lr, bc1, bc2);

        let t = trace.len();
        if t > PLATEAU_WINDOW {
            let prev = trace[t - 1 - PLATEAU_WINDOW];
            let rel = (prev - current_loss).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rel <= cfg.rel_tol {
                converged = true;
                break;
            }
        }
    }

    let sigma_hat = estimate_sigma(&params, &obs)?;
    let r2 = r_squared(&params, &obs)?;
    let final_loss = loss(&params, &obs, cfg);

    let mut entries = BTreeMap::new();
    for (j, item) in obs.items.iter().enumerate() {
        let meta = matrix
            .items()
            .get(item)
            .expect("observed item has metadata")
            .clone();
        entries.insert(
            item.clone(),
            (ItemParams::new(params.ln_a[j].exp(), params.b[j])?, meta),
        );
    }
    let version = format!("2pl-{}x{}-seed{}", n_examinees, n_items, cfg.seed);
    let bank = ItemBank::new(version, sigma_hat, cfg.squeeze, entries)?;

    let abilities: BTreeMap<ExamineeId, f64> = obs
        .examinees
        .iter()
        .enumerate()
        .map(|(i, e)| (e.clone(), params.theta[i]))
        .collect();

    let stats = FitStats {
        r_squared: r2,
        sigma_hat,
        final_loss,
        steps_run,
        converged,
    };
    Ok((CalibrationResult { bank, abilities, stats }, trace))
}
