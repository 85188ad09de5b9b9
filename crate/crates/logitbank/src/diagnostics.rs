//! Bank- and model-side diagnostics: leave-one-model-out calibration trust,
//! per-epoch reliability, public/private contamination flagging, saturation
//! and failure rates, and the token-cost-vs-difficulty regression.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{fit, CalibrationConfig};
use crate::error::{Error, Result};
use crate::model::{
    mean_of_present, squeeze_logit, ExamineeId, ItemBank, ResponseMatrix, Split, SqueezeConfig,
};
use crate::score::{score_examinee, wls_theta_with_sigma, SliceSpec};

/// Nearest-rank quantile of an already sorted slice.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((q / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Per-examinee joint-vs-held-out ability deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LomoEntry {
    pub theta_joint: f64,
    pub theta_heldout: f64,
    pub abs_dev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LomoSummary {
    pub median: f64,
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LomoReport {
    pub per_examinee: BTreeMap<ExamineeId, LomoEntry>,
    pub summary: LomoSummary,
}

/// Gauge relation between two banks calibrated over a shared item set.
///
/// The 2PL response `a (theta - b)` is invariant under the two-parameter
/// family `theta -> k theta + c`, `b -> k b + c`, `a -> a / k`; only the
/// penalties pick a representative. Returns `(k, c)` such that `other` sits
/// at `a_other = a_ref / k`, `b_other = k b_ref + c` on average over the
/// shared items; an ability read in `other`'s frame maps into `reference`'s
/// frame as `(theta - c) / k`.
pub fn bank_gauge(reference: &ItemBank, other: &ItemBank) -> Result<(f64, f64)> {
    let mut sum_ln_a_ref = 0.0;
    let mut sum_ln_a_other = 0.0;
    let mut sum_b_ref = 0.0;
    let mut sum_b_other = 0.0;
    let mut shared = 0usize;
    for (item, (other_params, _)) in other.entries() {
        if let Some((ref_params, _)) = reference.get(item) {
            sum_ln_a_ref += ref_params.a.ln();
            sum_ln_a_other += other_params.a.ln();
            sum_b_ref += ref_params.b;
            sum_b_other += other_params.b;
            shared += 1;
        }
    }
    if shared == 0 {
        return Err(Error::Validation(
            "the two banks share no items; gauge alignment is undefined".to_owned(),
        ));
    }
    let n = shared as f64;
    let k = ((sum_ln_a_ref - sum_ln_a_other) / n).exp();
    let c = sum_b_other / n - k * sum_b_ref / n;
    Ok((k, c))
}

/// Leave-one-model-out calibration check.
///
/// For each examinee: refit on everyone else with the identical config, score
/// the held-out examinee against the frozen held-out bank, and record the
/// absolute deviation from the joint ability.
///
/// The held-out ability is mapped into the joint bank's gauge frame (see
/// [`bank_gauge`]) before comparison. The penalties pin the gauge to whoever
/// is *in* the fit, so an unaligned refit shifts every ability by roughly
/// `theta_i / (n-1)` even on noiseless data; that offset is an artifact of
/// the normalization convention, not a calibration failure.
///
/// Refits run in parallel; each is internally deterministic, so the report is
/// identical at any thread count.
pub fn lomo_check(matrix: &ResponseMatrix, cfg: &CalibrationConfig) -> Result<LomoReport> {
    let examinees: Vec<ExamineeId> = matrix.examinees().cloned().collect();
    if examinees.len() < 4 {
        return Err(Error::Identifiability(format!(
            "leave-one-model-out needs at least 4 examinees so each refit keeps 3, got {}",
            examinees.len()
        )));
    }
    let joint = fit(matrix, cfg)?;

    let entries: Result<Vec<(ExamineeId, LomoEntry)>> = examinees
        .par_iter()
        .map(|examinee| {
            let reduced = matrix.without_examinee(examinee);
            let held = fit(&reduced, cfg)?;
            let (k, c) = bank_gauge(&joint.bank, &held.bank)?;
            let est =
                score_examinee(&held.bank, matrix, examinee, &SliceSpec::all(), cfg.squeeze)?;
            let theta_heldout = (est.theta - c) / k;
            let theta_joint = joint.abilities[examinee];
            Ok((
                examinee.clone(),
                LomoEntry {
                    theta_joint,
                    theta_heldout,
                    abs_dev: (theta_joint - theta_heldout).abs(),
                },
            ))
        })
        .collect();
    let entries = entries?;

    let mut devs: Vec<f64> = entries.iter().map(|(_, e)| e.abs_dev).collect();
    devs.sort_unstable_by(|x, y| x.partial_cmp(y).expect("deviations are finite"));
    let summary = LomoSummary {
        median: nearest_rank(&devs, 50.0),
        mean: devs.iter().sum::<f64>() / devs.len() as f64,
        p95: nearest_rank(&devs, 95.0),
        max: *devs.last().expect("non-empty"),
    };
    Ok(LomoReport { per_examinee: entries.into_iter().collect(), summary })
}

/// One single-epoch re-scoring of one examinee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPoint {
    pub examinee: ExamineeId,
    pub epoch: u32,
    pub theta_epoch: f64,
    pub deviation_from_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochVarianceReport {
    pub per_point: Vec<EpochPoint>,
    /// `1.96 x median per-epoch SE`. Per-epoch SEs use the single-epoch
    /// residual scale `sigma_hat * sqrt(k)`: the bank's sigma is estimated on
    /// k-epoch means, so one epoch carries `sqrt(k)` times that noise.
    pub band_halfwidth: f64,
}

/// Scores every (examinee, epoch) against the frozen bank using only that
/// epoch's scores, then centers each examinee's per-epoch abilities.
/// Epochs where an examinee has no observed item are omitted.
pub fn epoch_variance(
    bank: &ItemBank,
    matrix: &ResponseMatrix,
    squeeze: SqueezeConfig,
) -> Result<EpochVarianceReport> {
    let k = matrix.epochs_per_config();
    if k < 2 {
        return Err(Error::Validation(
            "per-epoch variance needs at least 2 epochs".to_owned(),
        ));
    }
    let sigma_epoch = bank.sigma_hat() * (k as f64).sqrt();
    let slice = SliceSpec::all();

    let mut per_point = Vec::new();
    let mut ses = Vec::new();
    for examinee in matrix.examinees() {
        let rows = matrix.examinee_rows(examinee).expect("examinee listed");
        let mut epoch_estimates: Vec<(u32, f64)> = Vec::new();
        for epoch in 0..k {
            let mut observations = BTreeMap::new();
            for (item, epochs) in rows {
                if bank.get(item).is_none() {
                    continue;
                }
                if let Some(score) =
                    epochs.iter().find(|(e, _)| *e == epoch).and_then(|(_, s)| *s)
                {
                    observations.insert(item.clone(), squeeze_logit(score, squeeze)?);
                }
            }
            if observations.is_empty() {
                continue;
            }
            let est = wls_theta_with_sigma(bank, &observations, &slice, sigma_epoch)?;
            epoch_estimates.push((epoch, est.theta));
            ses.push(est.se);
        }
        if epoch_estimates.len() < 2 {
            return Err(Error::Validation(format!(
                "examinee '{examinee}' has observed items in fewer than 2 epochs"
            )));
        }
        let mean =
            epoch_estimates.iter().map(|(_, t)| t).sum::<f64>() / epoch_estimates.len() as f64;
        for (epoch, theta) in epoch_estimates {
            per_point.push(EpochPoint {
                examinee: examinee.clone(),
                epoch,
                theta_epoch: theta,
                deviation_from_mean: theta - mean,
            });
        }
    }
    ses.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite"));
    Ok(EpochVarianceReport {
        per_point,
        band_halfwidth: 1.96 * nearest_rank(&ses, 50.0),
    })
}

/// Public-vs-private comparison for one examinee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitComparison {
    pub theta_public: f64,
    pub se_public: f64,
    pub theta_private: f64,
    pub se_private: f64,
    pub delta: f64,
    pub se_delta: f64,
    pub flagged: bool,
}

/// Per-examinee split comparisons; `None` marks an examinee that observes no
/// item in one of the splits (reported, not fatal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub per_examinee: BTreeMap<ExamineeId, Option<SplitComparison>>,
}

/// Re-scores every examinee separately on the public and private slices via
/// the same closed-form WLS (no refitting) and flags `|delta| > 2 * se_delta`.
pub fn contamination_check(
    bank: &ItemBank,
    matrix: &ResponseMatrix,
    squeeze: SqueezeConfig,
) -> Result<ContaminationReport> {
    let mut per_examinee = BTreeMap::new();
    for examinee in matrix.examinees() {
        let public = score_examinee(bank, matrix, examinee, &SliceSpec::split(Split::Public), squeeze);
        let private =
            score_examinee(bank, matrix, examinee, &SliceSpec::split(Split::Private), squeeze);
        let entry = match (public, private) {
            (Ok(pub_est), Ok(priv_est)) => {
                let delta = pub_est.theta - priv_est.theta;
                let se_delta = (pub_est.se * pub_est.se + priv_est.se * priv_est.se).sqrt();
                Some(SplitComparison {
                    theta_public: pub_est.theta,
                    se_public: pub_est.se,
                    theta_private: priv_est.theta,
                    se_private: priv_est.se,
                    delta,
                    se_delta,
                    flagged: delta.abs() > 2.0 * se_delta,
                })
            }
            (Err(Error::NoInformation(_)), _) | (_, Err(Error::NoInformation(_))) => None,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        per_examinee.insert(examinee.clone(), entry);
    }
    Ok(ContaminationReport { per_examinee })
}

/// Ceiling/floor rates for one examinee over its observed items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationEntry {
    pub perfect_rate: f64,
    pub zero_rate: f64,
    pub support: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    pub per_examinee: BTreeMap<ExamineeId, SaturationEntry>,
    pub tolerance: f64,
}

/// Fraction of observed items whose epoch mean sits within `tolerance` of the
/// ceiling (1.0) or the floor (0.0). Missing cells are excluded; examinees
/// with no observed item are omitted from the report.
pub fn saturation_rates(matrix: &ResponseMatrix, tolerance: f64) -> Result<SaturationReport> {
    if !tolerance.is_finite() || tolerance < 0.0 {
        return Err(Error::Validation(format!(
            "tolerance must be a finite non-negative number, got {tolerance}"
        )));
    }
    let mut per_examinee = BTreeMap::new();
    for examinee in matrix.examinees() {
        let rows = matrix.examinee_rows(examinee).expect("examinee listed");
        let mut support = 0u32;
        let mut perfect = 0u32;
        let mut zero = 0u32;
        for epochs in rows.values() {
            if let Some(mean) = mean_of_present(epochs) {
                support += 1;
                if mean >= 1.0 - tolerance {
                    perfect += 1;
                }
                if mean <= tolerance {
                    zero += 1;
                }
            }
        }
        if support > 0 {
            per_examinee.insert(
                examinee.clone(),
                SaturationEntry {
                    perfect_rate: perfect as f64 / support as f64,
                    zero_rate: zero as f64 / support as f64,
                    support,
                },
            );
        }
    }
    Ok(SaturationReport { per_examinee, tolerance })
}

/// Missing cells over total attempted (item x epoch) cells for one examinee.
/// Depends only on the missing mask, never on score values.
pub fn failure_rate(matrix: &ResponseMatrix, examinee: &ExamineeId) -> Result<f64> {
    let rows = matrix
        .examinee_rows(examinee)
        .ok_or_else(|| Error::Lookup(format!("unknown examinee '{examinee}'")))?;
    let mut total = 0usize;
    let mut missing = 0usize;
    for epochs in rows.values() {
        for (_, score) in epochs {
            total += 1;
            if score.is_none() {
                missing += 1;
            }
        }
    }
    Ok(missing as f64 / total as f64)
}

/// Log-linear fit of token cost on difficulty: `ln(tokens) = alpha + beta * b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenFit {
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
    pub n_items: u32,
}

/// Ordinary least squares of `ln(mean_tokens)` on difficulty over the items
/// with positive token counts.
pub fn token_difficulty_fit(bank: &ItemBank) -> Result<TokenFit> {
    let points: Vec<(f64, f64)> = bank
        .entries()
        .values()
        .filter_map(|(params, meta)| {
            meta.mean_tokens
                .filter(|t| *t > 0.0)
                .map(|t| (params.b, t.ln()))
        })
        .collect();
    if points.len() < 2 {
        return Err(Error::Validation(format!(
            "token fit needs at least 2 items with positive token counts, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean_b = points.iter().map(|(b, _)| b).sum::<f64>() / n;
    let mean_t = points.iter().map(|(_, t)| t).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_b = 0.0;
    let mut var_t = 0.0;
    for (b, t) in &points {
        let db = b - mean_b;
        let dt = t - mean_t;
        cov += db * dt;
        var_b += db * db;
        var_t += dt * dt;
    }
    if var_b == 0.0 {
        return Err(Error::Validation(
            "token fit undefined: item difficulties are constant".to_owned(),
        ));
    }
    let beta = cov / var_b;
    let alpha = mean_t - beta * mean_b;
    let r = if var_t == 0.0 { 0.0 } else { (cov / (var_b * var_t).sqrt()).clamp(-1.0, 1.0) };
    Ok(TokenFit { alpha, beta, r, n_items: points.len() as u32 })
}

/// Nearest-rank quantile summary of one parameter axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub p05: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
    pub max: f64,
}

impl Quantiles {
    fn from_sorted(sorted: &[f64]) -> Self {
        Quantiles {
            min: sorted[0],
            p05: nearest_rank(sorted, 5.0),
            p25: nearest_rank(sorted, 25.0),
            median: nearest_rank(sorted, 50.0),
            p75: nearest_rank(sorted, 75.0),
            p90: nearest_rank(sorted, 90.0),
            p95: nearest_rank(sorted, 95.0),
            max: sorted[sorted.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankSummary {
    pub n_items: u32,
    pub difficulty: Quantiles,
    pub discrimination: Quantiles,
    pub reference_theta: f64,
    /// Items whose difficulty exceeds the reference ability.
    pub items_above_reference: u32,
}

/// Difficulty/discrimination quantiles (nearest-rank convention) plus the
/// count of items harder than a reference ability.
pub fn bank_summary(bank: &ItemBank, reference_theta: f64) -> Result<BankSummary> {
    if bank.is_empty() {
        return Err(Error::Validation("bank summary needs a non-empty bank".to_owned()));
    }
    if !reference_theta.is_finite() {
        return Err(Error::Validation(format!(
            "reference theta must be finite, got {reference_theta}"
        )));
    }
    let mut bs: Vec<f64> = bank.entries().values().map(|(p, _)| p.b).collect();
    let mut aas: Vec<f64> = bank.entries().values().map(|(p, _)| p.a).collect();
    bs.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite"));
    aas.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite"));
    let above = bs.iter().filter(|b| **b > reference_theta).count();
    Ok(BankSummary {
        n_items: bs.len() as u32,
        difficulty: Quantiles::from_sorted(&bs),
        discrimination: Quantiles::from_sorted(&aas),
        reference_theta,
        items_above_reference: above as u32,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ItemId, ItemMeta, ItemParams, ResponseCell};

    fn meta(split: Split) -> ItemMeta {
        ItemMeta::new(split)
    }

    fn small_matrix(rows: &[(&str, &str, u32, Option<f64>)], k: u32) -> ResponseMatrix {
        let mut items = BTreeMap::new();
        let mut cells = Vec::new();
        for (e, i, epoch, score) in rows {
            items.entry(ItemId::from(*i)).or_insert_with(|| meta(Split::Public));
            cells.push(ResponseCell {
                examinee: (*e).into(),
                item: (*i).into(),
                epoch: *epoch,
                score: *score,
            });
        }
        ResponseMatrix::new(cells, items, k).unwrap()
    }

    #[test]
    fn saturation_examples() {
        let m = small_matrix(
            &[
                ("m", "p", 0, Some(1.0)),
                ("m", "q", 0, Some(0.0)),
                ("m", "r", 0, Some(0.5)),
                ("m", "s", 0, None),
            ],
            1,
        );
        let report = saturation_rates(&m, 1e-9).unwrap();
        let entry = report.per_examinee[&"m".into()];
        assert_eq!(entry.support, 3);
        assert!((entry.perfect_rate - 1.0 / 3.0).abs() < 1e-15);
        assert!((entry.zero_rate - 1.0 / 3.0).abs() < 1e-15);
        assert!(entry.perfect_rate + entry.zero_rate <= 1.0);
    }

    #[test]
    fn saturation_all_perfect() {
        let m = small_matrix(&[("m", "p", 0, Some(1.0)), ("m", "q", 0, Some(1.0))], 1);
        let report = saturation_rates(&m, 0.0).unwrap();
        let entry = report.per_examinee[&"m".into()];
        assert_eq!(entry.perfect_rate, 1.0);
        assert_eq!(entry.zero_rate, 0.0);
    }

    #[test]
    fn saturation_zero_tolerance_survives_epoch_averaging() {
        // Two epochs of exactly 1.0 average to exactly 1.0.
        let m = small_matrix(&[("m", "p", 0, Some(1.0)), ("m", "p", 1, Some(1.0))], 2);
        let report = saturation_rates(&m, 0.0).unwrap();
        assert_eq!(report.per_examinee[&"m".into()].perfect_rate, 1.0);
    }

    #[test]
    fn failure_rate_examples() {
        let m = small_matrix(
            &[
                ("m", "p", 0, Some(0.4)),
                ("m", "p", 1, None),
                ("m", "q", 0, None),
                ("m", "q", 1, None),
                ("m", "r", 0, Some(0.9)),
                ("m", "r", 1, Some(0.2)),
                ("m", "s", 0, Some(0.1)),
                ("m", "s", 1, Some(0.1)),
                ("m", "t", 0, Some(0.6)),
                ("m", "t", 1, Some(0.3)),
            ],
            2,
        );
        assert!((failure_rate(&m, &"m".into()).unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(failure_rate(&m, &"zzz".into()), Err(Error::Lookup(_))));

        let clean = small_matrix(&[("m", "p", 0, Some(0.5))], 1);
        assert_eq!(failure_rate(&clean, &"m".into()).unwrap(), 0.0);
    }

    #[test]
    fn failure_rate_recovers_injection_probability() {
        // 200 items x 5 epochs = 1000 attempts; a 13% injected failure rate
        // is recovered within two percentage points.
        let mut items = BTreeMap::new();
        let mut cells = Vec::new();
        for j in 0..200 {
            let id = ItemId(format!("p{j:03}"));
            items.insert(id.clone(), meta(Split::Public));
            for epoch in 0..5 {
                cells.push(ResponseCell {
                    examinee: "m".into(),
                    item: id.clone(),
                    epoch,
                    score: Some(0.5),
                });
            }
        }
        let m = ResponseMatrix::new(cells, items, 5).unwrap();
        let injected =
            crate::synth::inject_failures(&m, &"m".into(), 0.13, 404).unwrap();
        let rate = failure_rate(&injected, &"m".into()).unwrap();
        assert!((rate - 0.13).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn failure_rate_ignores_score_values() {
        let low = small_matrix(&[("m", "p", 0, Some(0.0)), ("m", "q", 0, None)], 1);
        let high = small_matrix(&[("m", "p", 0, Some(1.0)), ("m", "q", 0, None)], 1);
        assert_eq!(
            failure_rate(&low, &"m".into()).unwrap(),
            failure_rate(&high, &"m".into()).unwrap()
        );
    }

    fn bank_with_tokens(items: &[(&str, f64, f64, Option<f64>)]) -> ItemBank {
        let entries = items
            .iter()
            .map(|(id, a, b, tokens)| {
                let mut m = meta(Split::Public);
                m.mean_tokens = *tokens;
                (ItemId::from(*id), (ItemParams::new(*a, *b).unwrap(), m))
            })
            .collect();
        ItemBank::new("t", 1.0, SqueezeConfig::default(), entries).unwrap()
    }

    #[test]
    fn token_fit_exact_log_linear() {
        let items: Vec<(String, f64)> = (0..6)
            .map(|j| {
                let b = -2.0 + j as f64 * 0.8;
                (format!("p{j}"), b)
            })
            .collect();
        let rows: Vec<(&str, f64, f64, Option<f64>)> = items
            .iter()
            .map(|(id, b)| (id.as_str(), 1.0, *b, Some((2.0 + 0.5 * b).exp())))
            .collect();
        let bank = bank_with_tokens(&rows);
        let fit = token_difficulty_fit(&bank).unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-10);
        assert!((fit.beta - 0.5).abs() < 1e-10);
        assert!((fit.r - 1.0).abs() < 1e-10);
    }

    #[test]
    fn token_fit_degenerate_inputs() {
        let constant_b = bank_with_tokens(&[
            ("p", 1.0, 0.5, Some(10.0)),
            ("q", 2.0, 0.5, Some(20.0)),
        ]);
        assert!(matches!(token_difficulty_fit(&constant_b), Err(Error::Validation(_))));

        let no_tokens = bank_with_tokens(&[("p", 1.0, 0.0, None), ("q", 1.0, 1.0, Some(0.0))]);
        assert!(matches!(token_difficulty_fit(&no_tokens), Err(Error::Validation(_))));
    }

    #[test]
    fn token_fit_matches_normal_equations_oracle() {
        // Independent normal-equations evaluation on pseudo-random data.
        let mut rows = Vec::new();
        let ids: Vec<String> = (0..40).map(|j| format!("p{j:02}")).collect();
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for id in &ids {
            let b = next() * 8.0 - 4.0;
            let tokens = (1.0 + next() * 9.0) * 100.0;
            xs.push(b);
            ys.push(tokens.ln());
            rows.push((id.as_str(), 1.0, b, Some(tokens)));
        }
        let bank = bank_with_tokens(&rows);
        let fit = token_difficulty_fit(&bank).unwrap();

        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let beta = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let alpha = (sy - beta * sx) / n;
        assert!((fit.alpha - alpha).abs() < 1e-10);
        assert!((fit.beta - beta).abs() < 1e-10);
    }

    #[test]
    fn bank_summary_examples() {
        let bank = bank_with_tokens(&[
            ("p", 1.0, -1.0, None),
            ("q", 2.0, 0.0, None),
            ("r", 0.5, 1.0, None),
        ]);
        let summary = bank_summary(&bank, 0.5).unwrap();
        assert_eq!(summary.items_above_reference, 1);
        assert_eq!(summary.difficulty.min, -1.0);
        assert_eq!(summary.difficulty.max, 1.0);
        assert_eq!(summary.difficulty.median, 0.0);

        let single = bank_with_tokens(&[("p", 1.3, 0.7, None)]);
        let s = bank_summary(&single, 0.0).unwrap();
        assert_eq!(s.difficulty.p05, 0.7);
        assert_eq!(s.difficulty.p95, 0.7);
        assert_eq!(s.discrimination.median, 1.3);
    }

    #[test]
    fn epoch_variance_identical_epochs_have_zero_deviation() {
        let mut entries = BTreeMap::new();
        for id in ["p", "q"] {
            entries.insert(
                ItemId::from(id),
                (ItemParams::new(1.0, 0.0).unwrap(), meta(Split::Public)),
            );
        }
        let bank = ItemBank::new("t", 0.5, SqueezeConfig::default(), entries).unwrap();
        let m = small_matrix(
            &[
                ("m", "p", 0, Some(0.7)),
                ("m", "p", 1, Some(0.7)),
                ("m", "q", 0, Some(0.4)),
                ("m", "q", 1, Some(0.4)),
            ],
            2,
        );
        let report = epoch_variance(&bank, &m, SqueezeConfig::default()).unwrap();
        assert_eq!(report.per_point.len(), 2);
        for point in &report.per_point {
            assert_eq!(point.deviation_from_mean, 0.0);
        }
        // Deviations within the examinee sum to zero.
        let sum: f64 = report.per_point.iter().map(|p| p.deviation_from_mean).sum();
        assert_eq!(sum, 0.0);
    }

    #[test]
    fn epoch_variance_rejects_single_epoch() {
        let mut entries = BTreeMap::new();
        entries.insert(
            ItemId::from("p"),
            (ItemParams::new(1.0, 0.0).unwrap(), meta(Split::Public)),
        );
        let bank = ItemBank::new("t", 0.5, SqueezeConfig::default(), entries).unwrap();
        let m = small_matrix(&[("m", "p", 0, Some(0.7))], 1);
        assert!(matches!(
            epoch_variance(&bank, &m, SqueezeConfig::default()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn epoch_variance_omits_all_missing_epochs() {
        let mut entries = BTreeMap::new();
        for id in ["p", "q"] {
            entries.insert(
                ItemId::from(id),
                (ItemParams::new(1.0, 0.0).unwrap(), meta(Split::Public)),
            );
        }
        let bank = ItemBank::new("t", 0.5, SqueezeConfig::default(), entries).unwrap();
        let m = small_matrix(
            &[
                ("m", "p", 0, Some(0.7)),
                ("m", "p", 1, Some(0.6)),
                ("m", "p", 2, None),
                ("m", "q", 0, Some(0.4)),
                ("m", "q", 1, Some(0.5)),
                ("m", "q", 2, None),
            ],
            3,
        );
        let report = epoch_variance(&bank, &m, SqueezeConfig::default()).unwrap();
        assert_eq!(report.per_point.len(), 2); // epoch 2 omitted
        assert!(report.per_point.iter().all(|p| p.epoch < 2));
    }

    #[test]
    fn contamination_examinee_missing_one_split_is_undefined_entry() {
        let mut entries = BTreeMap::new();
        entries.insert(
            ItemId::from("pub"),
            (ItemParams::new(1.0, 0.0).unwrap(), meta(Split::Public)),
        );
        entries.insert(
            ItemId::from("priv"),
            (ItemParams::new(1.0, 0.0).unwrap(), meta(Split::Private)),
        );
        let bank = ItemBank::new("t", 0.5, SqueezeConfig::default(), entries).unwrap();

        let mut items = BTreeMap::new();
        items.insert(ItemId::from("pub"), meta(Split::Public));
        items.insert(ItemId::from("priv"), meta(Split::Private));
        let cells = vec![
            ResponseCell { examinee: "both".into(), item: "pub".into(), epoch: 0, score: Some(0.6) },
            ResponseCell { examinee: "both".into(), item: "priv".into(), epoch: 0, score: Some(0.6) },
            ResponseCell { examinee: "pub-only".into(), item: "pub".into(), epoch: 0, score: Some(0.6) },
        ];
        let m = ResponseMatrix::new(cells, items, 1).unwrap();
        let report = contamination_check(&bank, &m, SqueezeConfig::default()).unwrap();
        assert!(report.per_examinee[&"both".into()].is_some());
        assert!(report.per_examinee[&"pub-only".into()].is_none());

        let both = report.per_examinee[&"both".into()].unwrap();
        assert_eq!(both.delta, 0.0);
        assert!(!both.flagged);
    }

    #[test]
    fn lomo_rejects_three_examinees() {
        let m = small_matrix(
            &[
                ("a", "p", 0, Some(0.3)),
                ("a", "q", 0, Some(0.4)),
                ("b", "p", 0, Some(0.5)),
                ("b", "q", 0, Some(0.6)),
                ("c", "p", 0, Some(0.7)),
                ("c", "q", 0, Some(0.8)),
            ],
            1,
        );
        assert!(matches!(
            lomo_check(&m, &CalibrationConfig::default()),
            Err(Error::Identifiability(_))
        ));
    }

    #[test]
    fn quantile_convention_is_nearest_rank() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(nearest_rank(&sorted, 50.0), 2.0);
        assert_eq!(nearest_rank(&sorted, 95.0), 4.0);
        assert_eq!(nearest_rank(&sorted, 25.0), 1.0);
        assert_eq!(nearest_rank(&sorted, 0.0), 1.0);
        assert_eq!(nearest_rank(&sorted, 100.0), 4.0);
    }
}
