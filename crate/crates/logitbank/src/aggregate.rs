//! Per-sample aggregation of judge outputs and cross-judge agreement.
//!
//! A rubric-graded sample carries `n` independently judged criteria, each a
//! `(score, confidence)` pair in `[0, 1]`. The per-sample score is the
//! confidence-weighted average `(1/n) * sum(s_i * c_i)`: division is by the
//! criterion count, not by the confidence mass, so low-confidence criteria
//! drag the score toward zero rather than dropping out.

use crate::error::{Error, Result};

/// Ordered per-criterion `(score, confidence)` pairs for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RubricJudgment {
    criteria: Vec<(f64, f64)>,
}

impl RubricJudgment {
    /// Validates a non-empty criterion list with every score and confidence
    /// in `[0, 1]`.
    pub fn new(criteria: Vec<(f64, f64)>) -> Result<Self> {
        if criteria.is_empty() {
            return Err(Error::Validation("rubric judgment needs at least one criterion".to_owned()));
        }
        for (i, (s, c)) in criteria.iter().enumerate() {
            if !(0.0..=1.0).contains(s) {
                return Err(Error::Validation(format!(
                    "criterion {i}: score must lie in [0, 1], got {s}"
                )));
            }
            if !(0.0..=1.0).contains(c) {
                return Err(Error::Validation(format!(
                    "criterion {i}: confidence must lie in [0, 1], got {c}"
                )));
            }
        }
        Ok(RubricJudgment { criteria })
    }

    pub fn criteria(&self) -> &[(f64, f64)] {
        &self.criteria
    }
}

/// Confidence-weighted per-sample score: `(1/n) * sum(s_i * c_i)`.
pub fn confidence_weighted_score(judgment: &RubricJudgment) -> f64 {
    let n = judgment.criteria.len() as f64;
    judgment.criteria.iter().map(|(s, c)| s * c).sum::<f64>() / n
}

/// Verdict of the exact-answer judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactGrade {
    Correct,
    Incorrect,
}

/// Exact-answer sample score: the `n = 1` case of the confidence-weighted
/// average, with `s_1 = 1` for correct and `0` for incorrect.
pub fn exact_answer_score(grade: ExactGrade, confidence: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&confidence) {
        return Err(Error::Validation(format!(
            "confidence must lie in [0, 1], got {confidence}"
        )));
    }
    let s1 = match grade {
        ExactGrade::Correct => 1.0,
        ExactGrade::Incorrect => 0.0,
    };
    Ok(s1 * confidence)
}

/// Paired scores from two judges over the same samples or criteria.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgePairSeries {
    pairs: Vec<(f64, f64)>,
}

impl JudgePairSeries {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        for (i, (a, b)) in pairs.iter().enumerate() {
            if !(0.0..=1.0).contains(a) || !(0.0..=1.0).contains(b) {
                return Err(Error::Validation(format!(
                    "pair {i}: both values must lie in [0, 1], got ({a}, {b})"
                )));
            }
        }
        Ok(JudgePairSeries { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }
}

/// Pearson product-moment correlation of the two columns.
pub fn pearson_r(series: &JudgePairSeries) -> Result<f64> {
    let n = series.pairs.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "correlation needs at least 2 pairs, got {n}"
        )));
    }
    let nf = n as f64;
    let mean_a = series.pairs.iter().map(|(a, _)| a).sum::<f64>() / nf;
    let mean_b = series.pairs.iter().map(|(_, b)| b).sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (a, b) in &series.pairs {
        let da = a - mean_a;
        let db = b - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::UndefinedStatistic(
            "correlation undefined: at least one column is constant".to_owned(),
        ));
    }
    Ok((cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
}

#[inline]
fn binarize(value: f64, threshold: f64, inclusive: bool) -> bool {
    if inclusive {
        value >= threshold
    } else {
        value > threshold
    }
}

/// Cohen's kappa after binarizing both columns at `threshold`.
///
/// The inclusive convention (`value >= threshold` counts as met) is the
/// default; see [`cohen_kappa_with`] to flip it.
pub fn cohen_kappa(series: &JudgePairSeries, threshold: f64) -> Result<f64> {
    cohen_kappa_with(series, threshold, true)
}

/// Cohen's kappa with an explicit binarization convention.
pub fn cohen_kappa_with(series: &JudgePairSeries, threshold: f64, inclusive: bool) -> Result<f64> {
    let n = series.pairs.len();
    if n == 0 {
        return Err(Error::Validation("kappa needs at least 1 pair".to_owned()));
    }
    let nf = n as f64;
    let mut agree = 0usize;
    let mut a_pos = 0usize;
    let mut b_pos = 0usize;
    for (a, b) in &series.pairs {
        let la = binarize(*a, threshold, inclusive);
        let lb = binarize(*b, threshold, inclusive);
        if la == lb {
            agree += 1;
        }
        if la {
            a_pos += 1;
        }
        if lb {
            b_pos += 1;
        }
    }
    let po = agree as f64 / nf;
    let pa = a_pos as f64 / nf;
    let pb = b_pos as f64 / nf;
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if pe == 1.0 {
        return Err(Error::UndefinedStatistic(
            "kappa undefined: both raters are constant and identical after binarization"
                .to_owned(),
        ));
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Fraction of pairs whose binarized labels match (inclusive convention).
pub fn directional_agreement(series: &JudgePairSeries, threshold: f64) -> Result<f64> {
    directional_agreement_with(series, threshold, true)
}

/// Directional agreement with an explicit binarization convention.
pub fn directional_agreement_with(
    series: &JudgePairSeries,
    threshold: f64,
    inclusive: bool,
) -> Result<f64> {
    let n = series.pairs.len();
    if n == 0 {
        return Err(Error::Validation(
            "directional agreement needs at least 1 pair".to_owned(),
        ));
    }
    let agree = series
        .pairs
        .iter()
        .filter(|(a, b)| binarize(*a, threshold, inclusive) == binarize(*b, threshold, inclusive))
        .count();
    Ok(agree as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_score_examples() {
        let single = RubricJudgment::new(vec![(1.0, 1.0)]).unwrap();
        assert_eq!(confidence_weighted_score(&single), 1.0);

        let half = RubricJudgment::new(vec![(1.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(confidence_weighted_score(&half), 0.5);

        let mixed =
            RubricJudgment::new(vec![(0.6, 0.5), (1.0, 1.0), (0.0, 0.9)]).unwrap();
        assert!((confidence_weighted_score(&mixed) - 1.3 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn judgment_validation() {
        assert!(matches!(RubricJudgment::new(vec![]), Err(Error::Validation(_))));
        assert!(RubricJudgment::new(vec![(1.2, 0.5)]).is_err());
        assert!(RubricJudgment::new(vec![(0.5, -0.1)]).is_err());
    }

    #[test]
    fn exact_answer_examples() {
        assert_eq!(exact_answer_score(ExactGrade::Correct, 1.0).unwrap(), 1.0);
        assert_eq!(exact_answer_score(ExactGrade::Incorrect, 0.3).unwrap(), 0.0);
        assert_eq!(exact_answer_score(ExactGrade::Correct, 0.8).unwrap(), 0.8);
        assert!(exact_answer_score(ExactGrade::Correct, 1.5).is_err());
    }

    #[test]
    fn exact_answer_matches_single_criterion_weighting() {
        for c in [0.0, 0.25, 0.8, 1.0] {
            let j = RubricJudgment::new(vec![(1.0, c)]).unwrap();
            assert_eq!(
                exact_answer_score(ExactGrade::Correct, c).unwrap(),
                confidence_weighted_score(&j)
            );
        }
    }

    #[test]
    fn pearson_examples() {
        let identical =
            JudgePairSeries::new(vec![(0.1, 0.1), (0.5, 0.5), (0.9, 0.9)]).unwrap();
        assert!((pearson_r(&identical).unwrap() - 1.0).abs() < 1e-12);

        let mirrored =
            JudgePairSeries::new(vec![(0.1, 0.9), (0.5, 0.5), (0.8, 0.2)]).unwrap();
        assert!((pearson_r(&mirrored).unwrap() + 1.0).abs() < 1e-12);

        let constant = JudgePairSeries::new(vec![(0.5, 0.1), (0.5, 0.9)]).unwrap();
        assert!(matches!(pearson_r(&constant), Err(Error::UndefinedStatistic(_))));

        let short = JudgePairSeries::new(vec![(0.5, 0.1)]).unwrap();
        assert!(matches!(pearson_r(&short), Err(Error::Validation(_))));
    }

    #[test]
    fn kappa_hand_case_is_zero() {
        let series = JudgePairSeries::new(vec![
            (1.0, 1.0),
            (1.0, 0.0),
            (0.0, 0.0),
            (0.0, 1.0),
        ])
        .unwrap();
        assert!(cohen_kappa(&series, 0.5).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kappa_perfect_agreement() {
        let series =
            JudgePairSeries::new(vec![(1.0, 1.0), (0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert_eq!(cohen_kappa(&series, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn kappa_boundary_binarizes_inclusive() {
        // 0.5 counts as met under the inclusive convention, so these columns
        // binarize identically; the exclusive convention splits them.
        let series =
            JudgePairSeries::new(vec![(0.5, 1.0), (0.5, 0.9), (0.0, 0.0), (0.2, 0.1)]).unwrap();
        assert_eq!(cohen_kappa(&series, 0.5).unwrap(), 1.0);
        assert!(cohen_kappa_with(&series, 0.5, false).unwrap() < 1.0);
    }

    #[test]
    fn kappa_undefined_when_both_constant_identical() {
        let series = JudgePairSeries::new(vec![(1.0, 1.0), (0.9, 0.8)]).unwrap();
        assert!(matches!(
            cohen_kappa(&series, 0.5),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn directional_examples() {
        let identical = JudgePairSeries::new(vec![(1.0, 1.0), (0.0, 0.0)]).unwrap();
        assert_eq!(directional_agreement(&identical, 0.5).unwrap(), 1.0);

        let hand = JudgePairSeries::new(vec![
            (1.0, 1.0),
            (1.0, 0.0),
            (0.0, 0.0),
            (0.0, 1.0),
        ])
        .unwrap();
        assert_eq!(directional_agreement(&hand, 0.5).unwrap(), 0.5);

        let empty = JudgePairSeries::new(vec![]).unwrap();
        assert!(matches!(
            directional_agreement(&empty, 0.5),
            Err(Error::Validation(_))
        ));
    }
}
