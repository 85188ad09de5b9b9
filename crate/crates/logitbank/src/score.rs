//! Closed-form weighted least squares ability scoring against a frozen bank.
//!
//! For observed logits `y_j` on an item subset `S`,
//! `theta = sum_S a_j (y_j + a_j b_j) / sum_S a_j^2` and
//! `SE = sigma_hat / sqrt(sum_S a_j^2)`. No optimization, missing items
//! contribute nothing, and high-discrimination items dominate.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    mean_of_present, squeeze_logit, ExamineeId, ItemBank, ItemId, ItemMeta, ResponseMatrix, Split,
    SqueezeConfig,
};

/// Ability estimate with analytic uncertainty on one item subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbilityEstimate {
    pub theta: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_items: u32,
    /// Fisher-style information `sum a_j^2` over the scored items.
    pub information: f64,
}

impl AbilityEstimate {
    fn from_parts(theta: f64, sigma_hat: f64, information: f64, n_items: u32) -> Self {
        let se = sigma_hat / information.sqrt();
        AbilityEstimate {
            theta,
            se,
            ci_low: theta - 1.96 * se,
            ci_high: theta + 1.96 * se,
            n_items,
            information,
        }
    }
}

/// Deterministic item-subset predicate over bank metadata: any combination of
/// split, tags, categories, and an explicit id list. All listed constraints
/// must hold (conjunction); listed tags/categories must each be present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceSpec {
    pub split: Option<Split>,
    pub tags: BTreeSet<String>,
    pub categories: BTreeSet<String>,
    pub item_ids: Option<BTreeSet<ItemId>>,
}

impl SliceSpec {
    /// The whole bank.
    pub fn all() -> Self {
        SliceSpec::default()
    }

    pub fn split(split: Split) -> Self {
        SliceSpec { split: Some(split), ..SliceSpec::default() }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tags.insert(tag.into());
        self
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.categories.insert(category.into());
        self
    }

    pub fn with_item_ids(mut self, ids: impl IntoIterator<Item = ItemId>) -> Self {
        self.item_ids = Some(ids.into_iter().collect());
        self
    }

    pub fn matches(&self, id: &ItemId, meta: &ItemMeta) -> bool {
        if let Some(split) = self.split {
            if meta.split != split {
                return false;
            }
        }
        if !self.tags.iter().all(|t| meta.tags.contains(t)) {
            return false;
        }
        if !self.categories.iter().all(|c| meta.categories.contains(c)) {
            return false;
        }
        if let Some(ids) = &self.item_ids {
            if !ids.contains(id) {
                return false;
            }
        }
        true
    }
}

/// Closed-form WLS ability on `slice ∩ observed`. `observations` maps item id
/// to an already-squeezed logit.
pub fn wls_theta(
    bank: &ItemBank,
    observations: &BTreeMap<ItemId, f64>,
    slice: &SliceSpec,
) -> Result<AbilityEstimate> {
    wls_theta_with_sigma(bank, observations, slice, bank.sigma_hat())
}

/// [`wls_theta`] with an explicit residual scale for the standard error;
/// the point estimate is unchanged. Used by the per-epoch reliability
/// diagnostic, where single-epoch noise exceeds the bank's epoch-mean scale.
pub fn wls_theta_with_sigma(
    bank: &ItemBank,
    observations: &BTreeMap<ItemId, f64>,
    slice: &SliceSpec,
    sigma_hat: f64,
) -> Result<AbilityEstimate> {
    let mut numerator = 0.0;
    let mut information = 0.0;
    let mut n_items = 0u32;
    for (id, y) in observations {
        let Some((params, meta)) = bank.get(id) else {
            return Err(Error::Lookup(format!("item '{id}' is not in the bank")));
        };
        if !slice.matches(id, meta) {
            continue;
        }
        if !y.is_finite() {
            return Err(Error::Validation(format!(
                "observed logit for item '{id}' must be finite, got {y}"
            )));
        }
        numerator += params.a * (y + params.a * params.b);
        information += params.a * params.a;
        n_items += 1;
    }
    if n_items == 0 {
        return Err(Error::NoInformation(
            "no observed item falls inside the slice".to_owned(),
        ));
    }
    Ok(AbilityEstimate::from_parts(
        numerator / information,
        sigma_hat,
        information,
        n_items,
    ))
}

fn check_squeeze(bank: &ItemBank, squeeze: SqueezeConfig) -> Result<()> {
    let bank_sq = bank.squeeze();
    if (bank_sq.scale - squeeze.scale).abs() > 1e-12
        || (bank_sq.offset - squeeze.offset).abs() > 1e-12
    {
        return Err(Error::Validation(format!(
            "squeeze config (offset {}) does not match the bank's calibrated transform (offset {}); \
             scores would land on a different scale",
            squeeze.offset, bank_sq.offset
        )));
    }
    Ok(())
}

/// Epoch means -> squeezed logits -> closed-form WLS for one examinee.
/// Failure cells drop out of the sum. The supplied squeeze config is checked
/// against the bank's embedded transform so mismatched link constants can
/// never silently shift the scale.
pub fn score_examinee(
    bank: &ItemBank,
    matrix: &ResponseMatrix,
    examinee: &ExamineeId,
    slice: &SliceSpec,
    squeeze: SqueezeConfig,
) -> Result<AbilityEstimate> {
    check_squeeze(bank, squeeze)?;
    let rows = matrix
        .examinee_rows(examinee)
        .ok_or_else(|| Error::Lookup(format!("unknown examinee '{examinee}'")))?;
    let mut observations = BTreeMap::new();
    for (item, epochs) in rows {
        if bank.get(item).is_none() {
            continue; // unbanked items cannot be scored
        }
        if let Some(mean) = mean_of_present(epochs) {
            observations.insert(item.clone(), squeeze_logit(mean, squeeze)?);
        }
    }
    wls_theta(bank, &observations, slice)
}

/// Difference between two ability estimates with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaTheta {
    pub delta: f64,
    /// Independence quadrature `sqrt(se_high^2 + se_low^2)`: exact for
    /// disjoint item sets, an approximation when the sets share items.
    pub se_delta: f64,
}

/// Marginal gain `theta_high - theta_low` with quadrature standard error.
pub fn delta_theta(high: &AbilityEstimate, low: &AbilityEstimate) -> DeltaTheta {
    DeltaTheta {
        delta: high.theta - low.theta,
        se_delta: (high.se * high.se + low.se * low.se).sqrt(),
    }
}

/// Unweighted mean of epoch means over the examinee's observed items inside
/// the slice (matrix metadata, no bank involved). Items with fewer surviving
/// epochs count the same as full cells.
pub fn raw_mean(
    matrix: &ResponseMatrix,
    examinee: &ExamineeId,
    slice: &SliceSpec,
) -> Result<f64> {
    let rows = matrix
        .examinee_rows(examinee)
        .ok_or_else(|| Error::Lookup(format!("unknown examinee '{examinee}'")))?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (item, epochs) in rows {
        let meta = matrix.items().get(item).expect("cell item has metadata");
        if !slice.matches(item, meta) {
            continue;
        }
        if let Some(mean) = mean_of_present(epochs) {
            sum += mean;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoInformation(format!(
            "examinee '{examinee}' has no observed item inside the slice"
        )));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ItemParams, ResponseCell};

    fn bank_from(items: &[(&str, f64, f64)], sigma: f64) -> ItemBank {
        let entries = items
            .iter()
            .map(|(id, a, b)| {
                (
                    ItemId::from(*id),
                    (ItemParams::new(*a, *b).unwrap(), ItemMeta::new(Split::Public)),
                )
            })
            .collect();
        ItemBank::new("test", sigma, SqueezeConfig::default(), entries).unwrap()
    }

    #[test]
    fn single_item_solve() {
        let bank = bank_from(&[("p", 1.0, 0.0)], 0.7);
        let obs: BTreeMap<ItemId, f64> = [(ItemId::from("p"), 0.0)].into_iter().collect();
        let est = wls_theta(&bank, &obs, &SliceSpec::all()).unwrap();
        assert_eq!(est.theta, 0.0);
        assert_eq!(est.se, 0.7);
        assert_eq!(est.n_items, 1);
        assert_eq!(est.information, 1.0);
        assert!((est.ci_low - (-1.372)).abs() < 1e-12);
        assert!((est.ci_high - 1.372).abs() < 1e-12);
    }

    #[test]
    fn hand_worked_three_item_solve() {
        // Noiseless responses from theta* = 1.5 on items (1,0), (2,1), (0.5,-2):
        // numerator 7.875, denominator 5.25.
        let bank = bank_from(&[("p", 1.0, 0.0), ("q", 2.0, 1.0), ("r", 0.5, -2.0)], 1.0);
        let theta_star = 1.5;
        let obs: BTreeMap<ItemId, f64> = [
            (ItemId::from("p"), 1.0 * (theta_star - 0.0)),
            (ItemId::from("q"), 2.0 * (theta_star - 1.0)),
            (ItemId::from("r"), 0.5 * (theta_star + 2.0)),
        ]
        .into_iter()
        .collect();
        let est = wls_theta(&bank, &obs, &SliceSpec::all()).unwrap();
        assert!((est.theta - 1.5).abs() < 1e-12);
        assert_eq!(est.information, 5.25);
    }

    #[test]
    fn noiseless_recovery_on_random_subsets() {
        let bank = bank_from(
            &[("a", 0.3, -3.0), ("b", 1.2, 0.5), ("c", 2.4, 2.0), ("d", 0.9, -0.7)],
            1.0,
        );
        for theta_star in [-2.5, 0.0, 1.75] {
            let obs: BTreeMap<ItemId, f64> = bank
                .entries()
                .iter()
                .map(|(id, (p, _))| (id.clone(), p.a * (theta_star - p.b)))
                .collect();
            let est = wls_theta(&bank, &obs, &SliceSpec::all()).unwrap();
            assert!((est.theta - theta_star).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_item_is_lookup_error() {
        let bank = bank_from(&[("p", 1.0, 0.0)], 1.0);
        let obs: BTreeMap<ItemId, f64> = [(ItemId::from("zzz"), 0.0)].into_iter().collect();
        assert!(matches!(
            wls_theta(&bank, &obs, &SliceSpec::all()),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn empty_slice_is_no_information() {
        let bank = bank_from(&[("p", 1.0, 0.0)], 1.0);
        let obs: BTreeMap<ItemId, f64> = [(ItemId::from("p"), 0.3)].into_iter().collect();
        let private_only = SliceSpec::split(Split::Private);
        assert!(matches!(
            wls_theta(&bank, &obs, &private_only),
            Err(Error::NoInformation(_))
        ));
    }

    #[test]
    fn slice_uses_exactly_the_matching_items() {
        let mut entries = BTreeMap::new();
        for (id, split) in [("p", Split::Public), ("q", Split::Private), ("r", Split::Public)] {
            entries.insert(
                ItemId::from(id),
                (ItemParams::new(1.0, 0.0).unwrap(), ItemMeta::new(split)),
            );
        }
        let bank = ItemBank::new("t", 1.0, SqueezeConfig::default(), entries).unwrap();
        let obs: BTreeMap<ItemId, f64> = ["p", "q", "r"]
            .into_iter()
            .map(|id| (ItemId::from(id), 0.4))
            .collect();
        let public = wls_theta(&bank, &obs, &SliceSpec::split(Split::Public)).unwrap();
        assert_eq!(public.n_items, 2);
        let private = wls_theta(&bank, &obs, &SliceSpec::split(Split::Private)).unwrap();
        assert_eq!(private.n_items, 1);
        let all = wls_theta(&bank, &obs, &SliceSpec::all()).unwrap();
        assert_eq!(all.n_items, 3);
    }

    #[test]
    fn information_monotonicity() {
        let bank = bank_from(&[("p", 1.0, 0.0), ("q", 0.8, 1.0)], 1.0);
        let one: BTreeMap<ItemId, f64> = [(ItemId::from("p"), 0.2)].into_iter().collect();
        let two: BTreeMap<ItemId, f64> =
            [(ItemId::from("p"), 0.2), (ItemId::from("q"), 0.6)].into_iter().collect();
        let est1 = wls_theta(&bank, &one, &SliceSpec::all()).unwrap();
        let est2 = wls_theta(&bank, &two, &SliceSpec::all()).unwrap();
        assert!(est2.se < est1.se);
        assert!(est2.information > est1.information);
    }

    #[test]
    fn high_discrimination_items_dominate() {
        let bank = bank_from(&[("hi", 3.0, 0.0), ("lo", 0.5, 0.0)], 1.0);
        let base: BTreeMap<ItemId, f64> =
            [(ItemId::from("hi"), 0.0), (ItemId::from("lo"), 0.0)].into_iter().collect();
        let theta0 = wls_theta(&bank, &base, &SliceSpec::all()).unwrap().theta;
        let eps = 0.1;
        let mut bump_hi = base.clone();
        bump_hi.insert("hi".into(), eps);
        let mut bump_lo = base.clone();
        bump_lo.insert("lo".into(), eps);
        let d_hi = (wls_theta(&bank, &bump_hi, &SliceSpec::all()).unwrap().theta - theta0).abs();
        let d_lo = (wls_theta(&bank, &bump_lo, &SliceSpec::all()).unwrap().theta - theta0).abs();
        assert!(d_hi > d_lo);
    }

    #[test]
    fn score_examinee_drops_failure_cells() {
        let bank = bank_from(&[("p", 1.0, 0.0), ("q", 1.0, 1.0)], 1.0);
        let mut items = BTreeMap::new();
        items.insert(ItemId::from("p"), ItemMeta::new(Split::Public));
        items.insert(ItemId::from("q"), ItemMeta::new(Split::Public));
        let cells = vec![
            ResponseCell { examinee: "m".into(), item: "p".into(), epoch: 0, score: Some(0.5) },
            ResponseCell { examinee: "m".into(), item: "q".into(), epoch: 0, score: None },
            ResponseCell { examinee: "n".into(), item: "p".into(), epoch: 0, score: Some(0.5) },
            ResponseCell { examinee: "n".into(), item: "q".into(), epoch: 0, score: Some(0.5) },
        ];
        let matrix = ResponseMatrix::new(cells, items, 1).unwrap();
        let sq = SqueezeConfig::default();
        let sparse = score_examinee(&bank, &matrix, &"m".into(), &SliceSpec::all(), sq).unwrap();
        let dense = score_examinee(&bank, &matrix, &"n".into(), &SliceSpec::all(), sq).unwrap();
        assert_eq!(sparse.n_items, 1);
        assert_eq!(dense.n_items, 2);
        assert!(sparse.se > dense.se);
    }

    #[test]
    fn score_examinee_all_missing_is_no_information() {
        let bank = bank_from(&[("p", 1.0, 0.0)], 1.0);
        let mut items = BTreeMap::new();
        items.insert(ItemId::from("p"), ItemMeta::new(Split::Public));
        let cells = vec![ResponseCell {
            examinee: "m".into(),
            item: "p".into(),
            epoch: 0,
            score: None,
        }];
        let matrix = ResponseMatrix::new(cells, items, 1).unwrap();
        assert!(matches!(
            score_examinee(&bank, &matrix, &"m".into(), &SliceSpec::all(), SqueezeConfig::default()),
            Err(Error::NoInformation(_))
        ));
    }

    #[test]
    fn score_examinee_rejects_mismatched_squeeze() {
        let bank = bank_from(&[("p", 1.0, 0.0)], 1.0);
        let mut items = BTreeMap::new();
        items.insert(ItemId::from("p"), ItemMeta::new(Split::Public));
        let cells = vec![ResponseCell {
            examinee: "m".into(),
            item: "p".into(),
            epoch: 0,
            score: Some(0.5),
        }];
        let matrix = ResponseMatrix::new(cells, items, 1).unwrap();
        let other = SqueezeConfig::from_offset(1e-2).unwrap();
        assert!(matches!(
            score_examinee(&bank, &matrix, &"m".into(), &SliceSpec::all(), other),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn missing_data_invariance_is_bit_exact() {
        let bank = bank_from(&[("p", 1.3, 0.2), ("q", 0.7, -1.0), ("x", 2.0, 3.0)], 1.0);
        let mut items = BTreeMap::new();
        for id in ["p", "q", "x"] {
            items.insert(ItemId::from(id), ItemMeta::new(Split::Public));
        }
        let observed = vec![
            ResponseCell { examinee: "m".into(), item: "p".into(), epoch: 0, score: Some(0.81) },
            ResponseCell { examinee: "m".into(), item: "q".into(), epoch: 0, score: Some(0.33) },
        ];
        let mut with_missing = observed.clone();
        with_missing.push(ResponseCell {
            examinee: "m".into(),
            item: "x".into(),
            epoch: 0,
            score: None,
        });
        let sq = SqueezeConfig::default();
        let m1 = ResponseMatrix::new(observed, items.clone(), 1).unwrap();
        let m2 = ResponseMatrix::new(with_missing, items, 1).unwrap();
        let e1 = score_examinee(&bank, &m1, &"m".into(), &SliceSpec::all(), sq).unwrap();
        let e2 = score_examinee(&bank, &m2, &"m".into(), &SliceSpec::all(), sq).unwrap();
        assert_eq!(e1.theta.to_bits(), e2.theta.to_bits());
        assert_eq!(e1.se.to_bits(), e2.se.to_bits());
    }

    #[test]
    fn delta_theta_quadrature() {
        let hi = AbilityEstimate::from_parts(2.0, 0.1, 1.0, 1);
        let lo = AbilityEstimate::from_parts(1.0, 0.1, 1.0, 1);
        let d = delta_theta(&hi, &lo);
        assert!((d.delta - 1.0).abs() < 1e-12);
        assert!((d.se_delta - (0.02f64).sqrt()).abs() < 1e-12);

        let same = delta_theta(&hi, &hi);
        assert_eq!(same.delta, 0.0);
    }

    #[test]
    fn raw_mean_examples() {
        let mut items = BTreeMap::new();
        for id in ["p", "q", "r"] {
            items.insert(ItemId::from(id), ItemMeta::new(Split::Public));
        }
        let cells = vec![
            ResponseCell { examinee: "m".into(), item: "p".into(), epoch: 0, score: Some(1.0) },
            ResponseCell { examinee: "m".into(), item: "q".into(), epoch: 0, score: Some(0.0) },
            ResponseCell { examinee: "m".into(), item: "r".into(), epoch: 0, score: Some(0.5) },
        ];
        let matrix = ResponseMatrix::new(cells, items.clone(), 1).unwrap();
        assert_eq!(raw_mean(&matrix, &"m".into(), &SliceSpec::all()).unwrap(), 0.5);

        let all_missing = vec![ResponseCell {
            examinee: "m".into(),
            item: "p".into(),
            epoch: 0,
            score: None,
        }];
        let matrix2 = ResponseMatrix::new(all_missing, items, 1).unwrap();
        assert!(matches!(
            raw_mean(&matrix2, &"m".into(), &SliceSpec::all()),
            Err(Error::NoInformation(_))
        ));
    }
}
