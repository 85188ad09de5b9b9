//! Subcommand implementations: orchestrate the library, print a human table,
//! and write the machine artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use logitbank::aggregate::{cohen_kappa_with, directional_agreement_with, pearson_r};
use logitbank::calibrate::{fit, CalibrationConfig};
use logitbank::diagnostics::{
    contamination_check, epoch_variance, lomo_check, saturation_rates, token_difficulty_fit,
};
use logitbank::io::{
    load_bank, load_generator_spec, load_judge_scores, load_matrix, pair_judge_scores, save_bank,
    save_matrix,
};
use logitbank::model::{ItemId, Split, SqueezeConfig};
use logitbank::score::{delta_theta, score_examinee, AbilityEstimate, SliceSpec};
use logitbank::synth::generate;
use logitbank::Error;

use crate::output::{human_f64, print_table, say, write_report, OutputFormat};
use crate::reports::*;
use crate::{CliError, CalibrationFlags, Command};

pub fn run(command: Command, format: OutputFormat) -> Result<(), CliError> {
    match command {
        Command::Calibrate { input, out, abilities, version, calibration } => {
            run_calibrate(&input, &out, abilities.as_deref(), version, &calibration, format)
        }
        Command::Score { bank, input, slice, out } => {
            run_score(&bank, &input, &slice, out.as_deref(), format)
        }
        Command::Delta { high, low, out } => run_delta(&high, &low, out.as_deref(), format),
        Command::Lomo { input, out, calibration } => {
            run_lomo(&input, out.as_deref(), &calibration, format)
        }
        Command::EpochVariance { bank, input, out } => {
            run_epoch_variance(&bank, &input, out.as_deref(), format)
        }
        Command::Contamination { bank, input, out } => {
            run_contamination(&bank, &input, out.as_deref(), format)
        }
        Command::Saturation { input, tolerance, out } => {
            run_saturation(&input, tolerance, out.as_deref(), format)
        }
        Command::Agree { input_a, input_b, threshold, exclusive, out } => {
            run_agree(&input_a, &input_b, threshold, exclusive, out.as_deref(), format)
        }
        Command::TokenFit { bank, out } => run_token_fit(&bank, out.as_deref(), format),
        Command::Synth { config, out, seed, squeeze_offset } => {
            run_synth(&config, &out, seed, squeeze_offset)
        }
    }
}

fn calibration_config(flags: &CalibrationFlags) -> Result<CalibrationConfig, CliError> {
    let squeeze = SqueezeConfig::from_offset(flags.squeeze_offset)?;
    let cfg = CalibrationConfig {
        lambda_ridge: flags.lambda,
        mu_center: flags.mu,
        learning_rate: flags.lr,
        max_steps: flags.max_steps,
        rel_tol: flags.rel_tol,
        seed: flags.seed,
        squeeze,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_slices(specs: &[String]) -> Result<SliceSpec, CliError> {
    let mut slice = SliceSpec::all();
    let mut item_ids = Vec::new();
    for raw in specs {
        let Some((key, value)) = raw.split_once('=') else {
            return Err(CliError::Usage(format!(
                "--slice expects key=value (split=, tag=, category=, item=), got '{raw}'"
            )));
        };
        match key {
            "split" => {
                slice.split = Some(match value {
                    "public" => Split::Public,
                    "private" => Split::Private,
                    other => {
                        return Err(CliError::Usage(format!(
                            "--slice split must be 'public' or 'private', got '{other}'"
                        )))
                    }
                });
            }
            "tag" => {
                slice.tags.insert(value.to_owned());
            }
            "category" => {
                slice.categories.insert(value.to_owned());
            }
            "item" => item_ids.push(ItemId(value.to_owned())),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown --slice key '{other}' (expected split, tag, category, item)"
                )))
            }
        }
    }
    if !item_ids.is_empty() {
        slice = slice.with_item_ids(item_ids);
    }
    Ok(slice)
}

fn run_calibrate(
    input: &Path,
    out: &Path,
    abilities_out: Option<&Path>,
    version: Option<String>,
    flags: &CalibrationFlags,
    format: OutputFormat,
) -> Result<(), CliError> {
    let cfg = calibration_config(flags)?;
    let matrix = load_matrix(input)?;
    let mut result = fit(&matrix, &cfg)?;
    if let Some(v) = version {
        result.bank.set_version(v)?;
    }
    save_bank(&result.bank, out)?;

    let stats = result.stats;
    let report = AbilitiesReport {
        rows: result
            .abilities
            .iter()
            .map(|(e, theta)| AbilityRow {
                examinee: e.0.clone(),
                theta: *theta,
                r_squared: stats.r_squared,
                sigma_hat: stats.sigma_hat,
                final_loss: stats.final_loss,
                steps_run: stats.steps_run,
                converged: stats.converged,
            })
            .collect(),
    };
    if let Some(path) = abilities_out {
        write_report(&report, Some(path), format)?;
    }

    say(format!(
        "calibrated {} items x {} examinees: R^2 = {:.4}, sigma_hat = {:.4}, loss = {:.6e}, steps = {}{}",
        result.bank.len(),
        result.abilities.len(),
        stats.r_squared,
        stats.sigma_hat,
        stats.final_loss,
        stats.steps_run,
        if stats.converged { " (converged)" } else { " (max steps)" },
    ));
    say(format!("bank '{}' written to {}", result.bank.version(), out.display()));
    let rows: Vec<Vec<String>> = result
        .abilities
        .iter()
        .map(|(e, theta)| vec![e.0.clone(), human_f64(*theta)])
        .collect();
    print_table(&["examinee", "theta"], &rows);
    Ok(())
}

fn estimate_to_row(examinee: &str, est: &AbilityEstimate) -> ScoreRow {
    ScoreRow {
        examinee: examinee.to_owned(),
        theta: est.theta,
        se: est.se,
        ci_low: est.ci_low,
        ci_high: est.ci_high,
        n_items: est.n_items,
        information: est.information,
    }
}

fn run_score(
    bank_path: &Path,
    input: &Path,
    slices: &[String],
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let slice = parse_slices(slices)?;
    let bank = load_bank(bank_path)?;
    let matrix = load_matrix(input)?;

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for examinee in matrix.examinees() {
        match score_examinee(&bank, &matrix, examinee, &slice, bank.squeeze()) {
            Ok(est) => rows.push(estimate_to_row(&examinee.0, &est)),
            Err(Error::NoInformation(_)) => skipped.push(examinee.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    for examinee in &skipped {
        eprintln!("note: examinee '{examinee}' has no observed item inside the slice; skipped");
    }
    if rows.is_empty() {
        return Err(Error::NoInformation(
            "no examinee has any observed item inside the slice".to_owned(),
        )
        .into());
    }

    let report = ScoreReport { rows };
    write_report(&report, out, format)?;

    let table: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.examinee.clone(),
                human_f64(r.theta),
                human_f64(r.se),
                human_f64(r.ci_low),
                human_f64(r.ci_high),
                r.n_items.to_string(),
            ]
        })
        .collect();
    print_table(&["examinee", "theta", "se", "ci_low", "ci_high", "items"], &table);
    Ok(())
}

fn read_score_report(path: &Path) -> Result<ScoreReport, CliError> {
    let body = fs::read_to_string(path).map_err(|e| {
        CliError::Lib(Error::Io { path: path.display().to_string(), source: e })
    })?;
    serde_json::from_str(&body)
        .map_err(|e| CliError::Lib(Error::Parse(format!("{}: {e}", path.display()))))
}

fn run_delta(
    high: &Path,
    low: &Path,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let high_report = read_score_report(high)?;
    let low_report = read_score_report(low)?;
    let low_by_id: BTreeMap<&str, &ScoreRow> =
        low_report.rows.iter().map(|r| (r.examinee.as_str(), r)).collect();

    let mut rows = Vec::new();
    let mut sorted_high: Vec<&ScoreRow> = high_report.rows.iter().collect();
    sorted_high.sort_by(|a, b| a.examinee.cmp(&b.examinee));
    for h in sorted_high {
        let Some(l) = low_by_id.get(h.examinee.as_str()) else { continue };
        // Rebuild estimates so the quadrature lives in one place.
        let d = delta_theta(
            &estimate_from_row(h),
            &estimate_from_row(l),
        );
        rows.push(DeltaRow {
            examinee: h.examinee.clone(),
            theta_high: h.theta,
            se_high: h.se,
            theta_low: l.theta,
            se_low: l.se,
            delta: d.delta,
            se_delta: d.se_delta,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Lib(Error::Validation(
            "the two score reports share no examinees".to_owned(),
        )));
    }
    let report = DeltaReport { rows };
    write_report(&report, out, format)?;

    let table: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.examinee.clone(),
                human_f64(r.theta_high),
                human_f64(r.theta_low),
                human_f64(r.delta),
                human_f64(r.se_delta),
            ]
        })
        .collect();
    print_table(&["examinee", "theta_high", "theta_low", "delta", "se_delta"], &table);
    Ok(())
}

fn estimate_from_row(row: &ScoreRow) -> AbilityEstimate {
    AbilityEstimate {
        theta: row.theta,
        se: row.se,
        ci_low: row.ci_low,
        ci_high: row.ci_high,
        n_items: row.n_items,
        information: row.information,
    }
}

fn run_lomo(
    input: &Path,
    out: Option<&Path>,
    flags: &CalibrationFlags,
    format: OutputFormat,
) -> Result<(), CliError> {
    let cfg = calibration_config(flags)?;
    let matrix = load_matrix(input)?;
    let report = lomo_check(&matrix, &cfg)?;
    let s = report.summary;
    let cli_report = LomoCliReport {
        rows: report
            .per_examinee
            .iter()
            .map(|(e, entry)| LomoRow {
                examinee: e.0.clone(),
                theta_joint: entry.theta_joint,
                theta_heldout: entry.theta_heldout,
                abs_dev: entry.abs_dev,
                summary_median: s.median,
                summary_mean: s.mean,
                summary_p95: s.p95,
                summary_max: s.max,
            })
            .collect(),
    };
    write_report(&cli_report, out, format)?;

    say(format!(
        "leave-one-model-out over {} examinees: median |dev| = {:.4}, mean = {:.4}, p95 = {:.4}, max = {:.4}",
        cli_report.rows.len(),
        s.median,
        s.mean,
        s.p95,
        s.max
    ));
    let table: Vec<Vec<String>> = cli_report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.examinee.clone(),
                human_f64(r.theta_joint),
                human_f64(r.theta_heldout),
                human_f64(r.abs_dev),
            ]
        })
        .collect();
    print_table(&["examinee", "theta_joint", "theta_heldout", "abs_dev"], &table);
    Ok(())
}

fn run_epoch_variance(
    bank_path: &Path,
    input: &Path,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let bank = load_bank(bank_path)?;
    let matrix = load_matrix(input)?;
    let report = epoch_variance(&bank, &matrix, bank.squeeze())?;
    let cli_report = EpochVarianceCliReport {
        rows: report
            .per_point
            .iter()
            .map(|p| EpochVarianceRow {
                examinee: p.examinee.0.clone(),
                epoch: p.epoch,
                theta_epoch: p.theta_epoch,
                deviation_from_mean: p.deviation_from_mean,
                band_halfwidth: report.band_halfwidth,
            })
            .collect(),
    };
    write_report(&cli_report, out, format)?;

    let inside = report
        .per_point
        .iter()
        .filter(|p| p.deviation_from_mean.abs() <= report.band_halfwidth)
        .count();
    say(format!(
        "{} per-epoch scorings; band halfwidth {:.4}; {:.1}% of deviations inside the band",
        report.per_point.len(),
        report.band_halfwidth,
        100.0 * inside as f64 / report.per_point.len() as f64
    ));
    let table: Vec<Vec<String>> = cli_report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.examinee.clone(),
                r.epoch.to_string(),
                human_f64(r.theta_epoch),
                human_f64(r.deviation_from_mean),
            ]
        })
        .collect();
    print_table(&["examinee", "epoch", "theta", "deviation"], &table);
    Ok(())
}

fn run_contamination(
    bank_path: &Path,
    input: &Path,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let bank = load_bank(bank_path)?;
    let matrix = load_matrix(input)?;
    let report = contamination_check(&bank, &matrix, bank.squeeze())?;
    let cli_report = ContaminationCliReport {
        rows: report
            .per_examinee
            .iter()
            .map(|(e, entry)| match entry {
                Some(c) => ContaminationRow {
                    examinee: e.0.clone(),
                    defined: true,
                    theta_public: Some(c.theta_public),
                    se_public: Some(c.se_public),
                    theta_private: Some(c.theta_private),
                    se_private: Some(c.se_private),
                    delta: Some(c.delta),
                    se_delta: Some(c.se_delta),
                    flagged: Some(c.flagged),
                },
                None => ContaminationRow {
                    examinee: e.0.clone(),
                    defined: false,
                    theta_public: None,
                    se_public: None,
                    theta_private: None,
                    se_private: None,
                    delta: None,
                    se_delta: None,
                    flagged: None,
                },
            })
            .collect(),
    };
    write_report(&cli_report, out, format)?;

    let flagged: Vec<&ContaminationRow> = cli_report
        .rows
        .iter()
        .filter(|r| r.flagged == Some(true))
        .collect();
    say(format!(
        "{} examinees compared; {} flagged (|delta| > 2 se_delta)",
        cli_report.rows.len(),
        flagged.len()
    ));
    let table: Vec<Vec<String>> = cli_report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.examinee.clone(),
                r.theta_public.map(human_f64).unwrap_or_else(|| "-".into()),
                r.theta_private.map(human_f64).unwrap_or_else(|| "-".into()),
                r.delta.map(human_f64).unwrap_or_else(|| "-".into()),
                r.se_delta.map(human_f64).unwrap_or_else(|| "-".into()),
                r.flagged
                    .map(|f| if f { "FLAG".into() } else { "ok".to_owned() })
                    .unwrap_or_else(|| "undefined".into()),
            ]
        })
        .collect();
    print_table(
        &["examinee", "theta_pub", "theta_priv", "delta", "se_delta", "status"],
        &table,
    );
    Ok(())
}

fn run_saturation(
    input: &Path,
    tolerance: f64,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let matrix = load_matrix(input)?;
    let report = saturation_rates(&matrix, tolerance)?;
    let cli_report = SaturationCliReport {
        rows: report
            .per_examinee
            .iter()
            .map(|(e, s)| SaturationRow {
                examinee: e.0.clone(),
                perfect_rate: s.perfect_rate,
                zero_rate: s.zero_rate,
                support: s.support,
                tolerance: report.tolerance,
            })
            .collect(),
    };
    write_report(&cli_report, out, format)?;

    let table: Vec<Vec<String>> = cli_report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.examinee.clone(),
                human_f64(r.perfect_rate),
                human_f64(r.zero_rate),
                r.support.to_string(),
            ]
        })
        .collect();
    print_table(&["examinee", "perfect_rate", "zero_rate", "support"], &table);
    Ok(())
}

fn run_agree(
    input_a: &Path,
    input_b: &Path,
    threshold: f64,
    exclusive: bool,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let a = load_judge_scores(input_a)?;
    let b = load_judge_scores(input_b)?;
    let series = pair_judge_scores(&a, &b)?;
    let inclusive = !exclusive;
    let row = AgreeRow {
        n_pairs: series.len() as u32,
        pearson_r: pearson_r(&series)?,
        cohen_kappa: cohen_kappa_with(&series, threshold, inclusive)?,
        directional_agreement: directional_agreement_with(&series, threshold, inclusive)?,
        threshold,
    };
    let report = AgreeReport { rows: vec![row] };
    write_report(&report, out, format)?;

    let r = &report.rows[0];
    say(format!(
        "{} paired scores: pearson r = {:.4}, kappa = {:.4} (binarized at {}), directional agreement = {:.1}%",
        r.n_pairs,
        r.pearson_r,
        r.cohen_kappa,
        r.threshold,
        100.0 * r.directional_agreement
    ));
    Ok(())
}

fn run_token_fit(
    bank_path: &Path,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let bank = load_bank(bank_path)?;
    let fit = token_difficulty_fit(&bank)?;
    let report = TokenFitReport {
        rows: vec![TokenFitRow { alpha: fit.alpha, beta: fit.beta, r: fit.r, n_items: fit.n_items }],
    };
    write_report(&report, out, format)?;
    say(format!(
        "ln(tokens) = {:.4} + {:.4} * b over {} items (r = {:.4})",
        fit.alpha, fit.beta, fit.n_items, fit.r
    ));
    Ok(())
}

fn run_synth(
    config: &Path,
    out: &PathBuf,
    seed_override: Option<u64>,
    squeeze_offset: f64,
) -> Result<(), CliError> {
    let mut spec = load_generator_spec(config)?;
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }
    let squeeze = SqueezeConfig::from_offset(squeeze_offset)?;
    let matrix = generate(&spec, squeeze)?;
    save_matrix(&matrix, out)?;
    say(format!(
        "generated {} cells ({} examinees x {} items x {} epochs) to {}",
        matrix.n_cells(),
        matrix.n_examinees(),
        matrix.items().len(),
        matrix.epochs_per_config(),
        out.display()
    ));
    Ok(())
}
