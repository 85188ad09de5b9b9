//! Serializable report shapes shared by the subcommands.
//!
//! Every report is a flat list of rows so the JSON and CSV renderings carry
//! exactly the same values; report-level scalars (fit statistics, band
//! half-widths, summaries) are repeated on each CSV row.

use serde::{Deserialize, Serialize};

use crate::output::{fmt_f64, fmt_opt_f64, CsvTable};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRow {
    pub examinee: String,
    pub theta: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_items: u32,
    pub information: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
}

impl CsvTable for ScoreReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["examinee", "theta", "se", "ci_low", "ci_high", "n_items", "information"]
    }
    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.examinee.clone(),
                    fmt_f64(r.theta),
                    fmt_f64(r.se),
                    fmt_f64(r.ci_low),
                    fmt_f64(r.ci_high),
                    r.n_items.to_string(),
                    fmt_f64(r.information),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbilityRow {
    pub examinee: String,
    pub theta: f64,
    pub r_squared: f64,
    pub sigma_hat: f64,
    pub final_loss: f64,
    pub steps_run: u32,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbilitiesReport {
    pub rows: Vec<AbilityRow>,
}

impl CsvTable for AbilitiesReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["examinee", "theta", "r_squared", "sigma_hat", "final_loss", "steps_run", "converged"]
    }
    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.examinee.clone(),
                    fmt_f64(r.theta),
                    fmt_f64(r.r_squared),
                    fmt_f64(r.sigma_hat),
                    fmt_f64(r.final_loss),
                    r.steps_run.to_string(),
                    r.converged.to_string(),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaRow {
    pub examinee: String,
    pub theta_high: f64,
    pub se_high: f64,
    pub theta_low: f64,
    pub se_low: f64,
    pub delta: f64,
    pub se_delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaReport {
    pub rows: Vec<DeltaRow>,
}

impl CsvTable for DeltaReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["examinee", "theta_high", "se_high", "theta_low", "se_low", "delta", "se_delta"]
    }
    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.examinee.clone(),
                    fmt_f64(r.theta_high),
                    fmt_f64(r.se_high),
                    fmt_f64(r.theta_low),
                    fmt_f64(r.se_low),
                    fmt_f64(r.delta),
                    fmt_f64(r.se_delta),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LomoRow {
    pub examinee: String,
    pub theta_joint: f64,
    pub theta_heldout: f64,
    pub abs_dev: f64,
    pub summary_median: f64,
    pub summary_mean: f64,
    pub summary_p95: f64,
    pub summary_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LomoCliReport {
    pub rows: Vec<LomoRow>,
}

impl CsvTable for LomoCliReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "examinee",
            "theta_joint",
            "theta_heldout",
            "abs_dev",
            "summary_median",
            "summary_mean",
            "summary_p95",
            "summary_max",
        ]
    }
    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.examinee.clone(),
                    fmt_f64(r.theta_joint),
                    fmt_f64(r.theta_heldout),
                    fmt_f64(r.abs_dev),
                    fmt_f64(r.summary_median),
                    fmt_f64(r.summary_mean),
                    fmt_f64(r.summary_p95),
                    fmt_f64(r.summary_max),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochVarianceRow {
    pub examinee: String,
    pub epoch: u32,
    pub theta_epoch: f64,
    pub deviation_from_mean: f64,
    pub band_halfwidth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochVarianceCliReport {
    pub rows: Vec<EpochVarianceRow>,
}

impl CsvTable for EpochVarianceCliReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["examinee", "epoch", "theta_epoch", "deviation_from_mean", "band_halfwidth"]
    }
    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.examinee.clone(),
                    r.epoch.to_string(),
                    fmt_f64(r.theta_epoch),
                    fmt_f64(r.deviation_from_mean),
                    fmt_f64(r.band_halfwidth),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContaminationRow {
    pub examinee: String,
    /// False when the examinee observes no item in one of the splits.
    pub defined: bool,
    pub theta_public: Option<f64>,
    pub se_public: Option<f64>,
    pub theta_private: Option<f64>,
    pub se_private: Option<f64>,
    pub delta: Option<f64>,
    pub se_delta: Option<f64>,
    pub flagged: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContaminationCliReport {
    pub rows: Vec<ContaminationRow>,
}

impl CsvTable for ContaminationCliReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "examinee",
            "defined",
            "theta_public",
            "se_public",
            "theta_private",
            "se_private",
            "delta",
            "se_delta",
            "flagged",
        ]
    }
    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.examinee.clone(),
                    r.defined.to_string(),
                    fmt_opt_f64(r.theta_public),
                    fmt_opt_f64(r.se_public),
                    fmt_opt_f64(r.theta_private),
                    fmt_opt_f64(r.se_private),
                    fmt_opt_f64(r.delta),
                    fmt_opt_f64(r.se_delta),
                    r.flagged.map(|f| f.to_string()).unwrap_or_default(),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaturationRow {
    pub examinee: String,
    pub perfect_rate: f64,
    pub zero_rate: f64,
    pub support: u32,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaturationCliReport {
    pub rows: Vec<SaturationRow>,
}

impl CsvTable for SaturationCliReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["examinee", "perfect_rate", "zero_rate", "support", "tolerance"]
    }
    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.examinee.clone(),
                    fmt_f64(r.perfect_rate),
                    fmt_f64(r.zero_rate),
                    r.support.to_string(),
                    fmt_f64(r.tolerance),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreeReport {
    pub rows: Vec<AgreeRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreeRow {
    pub n_pairs: u32,
    pub pearson_r: f64,
    pub cohen_kappa: f64,
    pub directional_agreement: f64,
    pub threshold: f64,
}

impl CsvTable for AgreeReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["n_pairs", "pearson_r", "cohen_kappa", "directional_agreement", "threshold"]
    }
    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.n_pairs.to_string(),
                    fmt_f64(r.pearson_r),
                    fmt_f64(r.cohen_kappa),
                    fmt_f64(r.directional_agreement),
                    fmt_f64(r.threshold),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenFitReport {
    pub rows: Vec<TokenFitRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenFitRow {
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
    pub n_items: u32,
}

impl CsvTable for TokenFitReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["alpha", "beta", "r", "n_items"]
    }
    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.alpha),
                    fmt_f64(r.beta),
                    fmt_f64(r.r),
                    r.n_items.to_string(),
                ]
            })
            .collect()
    }
}
