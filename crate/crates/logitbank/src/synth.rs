//! Synthetic response matrices from known ground-truth parameters.
//!
//! The generator instantiates the response model `y = a (theta - b) + eps`
//! per epoch and inverts it through the squeeze link, yielding matrices whose
//! true parameters are known. It exists to validate the math, not to imitate
//! real score distributions.
//!
//! All randomness flows from `spec.seed` through per-purpose, per-cell
//! substreams, so generation is reproducible, order-independent, and changing
//! `missing_prob` never perturbs the noise draws.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    inverse_squeeze, squeeze_logit, ExamineeId, ItemId, ItemMeta, ResponseCell, ResponseMatrix,
    Split, SqueezeConfig,
};

const STREAM_NOISE: u64 = 0x4e01;
const STREAM_MASK: u64 = 0x4e02;
const STREAM_FAIL: u64 = 0x4e03;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fresh generator for one (stream, index) pair of a base seed.
fn substream(seed: u64, stream: u64, index: u64) -> Pcg64Mcg {
    let s = splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index);
    Pcg64Mcg::seed_from_u64(s)
}

/// Ground-truth description of one generated item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenItem {
    /// Item id; autogenerated as `item-XXXX` when absent.
    #[serde(default)]
    pub id: Option<String>,
    pub a: f64,
    pub b: f64,
    pub split: Split,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default)]
    pub categories: BTreeSet<String>,
    /// Explicit mean token count; overrides `token_curve` when present.
    #[serde(default)]
    pub mean_tokens: Option<f64>,
}

/// Log-linear token curve `mean_tokens = exp(alpha + beta * b)` used to fill
/// items without an explicit token count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenCurve {
    pub alpha: f64,
    pub beta: f64,
}

/// Full recipe for one synthetic matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    /// True abilities; examinee ids are `examinee-XXX` by index.
    pub thetas: Vec<f64>,
    pub items: Vec<GenItem>,
    /// Per-epoch residual standard deviation in logit space.
    pub sigma: f64,
    pub epochs: u32,
    pub missing_prob: f64,
    pub seed: u64,
    #[serde(default)]
    pub token_curve: Option<TokenCurve>,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() {
            return Err(Error::Validation("generator needs at least one examinee".to_owned()));
        }
        if self.items.is_empty() {
            return Err(Error::Validation("generator needs at least one item".to_owned()));
        }
        for (i, t) in self.thetas.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Validation(format!("theta {i} must be finite, got {t}")));
            }
        }
        for (j, item) in self.items.iter().enumerate() {
            if !item.a.is_finite() || item.a <= 0.0 {
                return Err(Error::Validation(format!(
                    "item {j}: discrimination must be strictly positive, got {}",
                    item.a
                )));
            }
            if !item.b.is_finite() {
                return Err(Error::Validation(format!(
                    "item {j}: difficulty must be finite, got {}",
                    item.b
                )));
            }
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::Validation(format!(
                "sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        if self.epochs < 1 {
            return Err(Error::Validation("epochs must be at least 1".to_owned()));
        }
        if !(0.0..=1.0).contains(&self.missing_prob) {
            return Err(Error::Validation(format!(
                "missing_prob must lie in [0, 1], got {}",
                self.missing_prob
            )));
        }
        Ok(())
    }

    pub fn examinee_id(&self, i: usize) -> ExamineeId {
        ExamineeId(format!("examinee-{i:03}"))
    }

    pub fn item_id(&self, j: usize) -> ItemId {
        match &self.items[j].id {
            Some(id) => ItemId(id.clone()),
            None => ItemId(format!("item-{j:04}")),
        }
    }

    fn item_meta(&self, j: usize) -> ItemMeta {
        let item = &self.items[j];
        let mean_tokens = item.mean_tokens.or_else(|| {
            self.token_curve
                .map(|c| (c.alpha + c.beta * item.b).exp())
        });
        ItemMeta {
            split: item.split,
            tags: item.tags.clone(),
            categories: item.categories.clone(),
            mean_tokens,
        }
    }
}

/// Draws `y = a (theta - b) + eps` per (examinee, item, epoch), inverts it
/// through the link, and masks each cell missing with `missing_prob`.
/// Bit-reproducible from the seed.
pub fn generate(spec: &GeneratorSpec, squeeze: SqueezeConfig) -> Result<ResponseMatrix> {
    spec.validate()?;
    squeeze.validate()?;

    let n_items = spec.items.len();
    let n_epochs = spec.epochs as usize;
    let mut items = BTreeMap::new();
    for j in 0..n_items {
        if items.insert(spec.item_id(j), spec.item_meta(j)).is_some() {
            return Err(Error::Validation(format!(
                "duplicate item id '{}' in generator spec",
                spec.item_id(j)
            )));
        }
    }

    let mut cells = Vec::with_capacity(spec.thetas.len() * n_items * n_epochs);
    for (i, theta) in spec.thetas.iter().enumerate() {
        for (j, item) in spec.items.iter().enumerate() {
            let item_id = spec.item_id(j);
            for e in 0..spec.epochs {
                let idx = ((i * n_items + j) * n_epochs + e as usize) as u64;
                let missing = spec.missing_prob > 0.0 && {
                    let mut rng = substream(spec.seed, STREAM_MASK, idx);
                    rng.random::<f64>() < spec.missing_prob
                };
                let score = if missing {
                    None
                } else {
                    let eps: f64 = if spec.sigma > 0.0 {
                        let mut rng = substream(spec.seed, STREAM_NOISE, idx);
                        spec.sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                    } else {
                        0.0
                    };
                    let y = item.a * (theta - item.b) + eps;
                    Some(inverse_squeeze(y, squeeze))
                };
                cells.push(ResponseCell {
                    examinee: spec.examinee_id(i),
                    item: item_id.clone(),
                    epoch: e,
                    score,
                });
            }
        }
    }
    ResponseMatrix::new(cells, items, spec.epochs)
}

/// Adds `shift` to the squeezed logit of every present public-split cell of
/// one examinee; private cells and other examinees are untouched bit-exactly.
pub fn inject_public_shift(
    matrix: &ResponseMatrix,
    examinee: &ExamineeId,
    shift: f64,
    squeeze: SqueezeConfig,
) -> Result<ResponseMatrix> {
    if !shift.is_finite() {
        return Err(Error::Validation(format!("shift must be finite, got {shift}")));
    }
    if !matrix.contains_examinee(examinee) {
        return Err(Error::Lookup(format!("unknown examinee '{examinee}'")));
    }
    squeeze.validate()?;
    if shift == 0.0 {
        return Ok(matrix.clone());
    }
    let cells = matrix
        .cells()
        .map(|mut cell| {
            let is_public = matrix.items()[&cell.item].split == Split::Public;
            if &cell.examinee == examinee && is_public {
                if let Some(p) = cell.score {
                    let y = squeeze_logit(p, squeeze).expect("matrix scores are in range");
                    cell.score = Some(inverse_squeeze(y + shift, squeeze));
                }
            }
            cell
        })
        .collect();
    ResponseMatrix::new(cells, matrix.items().clone(), matrix.epochs_per_config())
}

/// Independently turns each of one examinee's cells missing with probability
/// `prob`, from a seeded substream; all other cells are preserved bit-exactly.
pub fn inject_failures(
    matrix: &ResponseMatrix,
    examinee: &ExamineeId,
    prob: f64,
    seed: u64,
) -> Result<ResponseMatrix> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::Validation(format!(
            "failure probability must lie in [0, 1], got {prob}"
        )));
    }
    if !matrix.contains_examinee(examinee) {
        return Err(Error::Lookup(format!("unknown examinee '{examinee}'")));
    }
    if prob == 0.0 {
        return Ok(matrix.clone());
    }
    let mut target_index = 0u64;
    let cells = matrix
        .cells()
        .map(|mut cell| {
            if &cell.examinee == examinee {
                // Cells arrive in deterministic (item, epoch) order, so the
                // running index is a stable per-cell substream key.
                let mut rng = substream(seed, STREAM_FAIL, target_index);
                target_index += 1;
                if rng.random::<f64>() < prob {
                    cell.score = None;
                }
            }
            cell
        })
        .collect();
    ResponseMatrix::new(cells, matrix.items().clone(), matrix.epochs_per_config())
}
