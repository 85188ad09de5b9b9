//! Shared domain types and the edge-corrected logit link.
//!
//! Bounded scores in `[0, 1]` are affinely compressed into
//! `[offset, 1 - offset]` before the logit, so perfect and zero scores map to
//! finite values. Missing scores are a first-class state (`None`), distinct
//! from `0.0` at every layer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of one examinee (a model configuration, a human cohort, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExamineeId(pub String);

/// Identifier of one item (prompt) in the bank.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub String);

impl fmt::Display for ExamineeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<&str> for ExamineeId {
    fn from(s: &str) -> Self {
        ExamineeId(s.to_owned())
    }
}

impl From<String> for ExamineeId {
    fn from(s: String) -> Self {
        ExamineeId(s)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId(s.to_owned())
    }
}

impl From<String> for ItemId {
    fn from(s: String) -> Self {
        ItemId(s)
    }
}

/// Release split an item belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Public,
    Private,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Public => f.write_str("public"),
            Split::Private => f.write_str("private"),
        }
    }
}

/// Per-item metadata carried alongside the calibrated parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub split: Split,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default)]
    pub categories: BTreeSet<String>,
    /// Mean total tokens spent on this item, when known.
    #[serde(default)]
    pub mean_tokens: Option<f64>,
}

impl ItemMeta {
    pub fn new(split: Split) -> Self {
        ItemMeta {
            split,
            tags: BTreeSet::new(),
            categories: BTreeSet::new(),
            mean_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.mean_tokens {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Validation(format!(
                    "mean_tokens must be a finite non-negative number, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Discrimination and difficulty of one calibrated item.
///
/// `a` is the slope of the item's expected logit response in ability;
/// `b` is the ability at which the expected score is 0.5 (zero logit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    pub a: f64,
    pub b: f64,
}

impl ItemParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || a <= 0.0 {
            return Err(Error::Validation(format!(
                "discrimination must be strictly positive and finite, got {a}"
            )));
        }
        if !b.is_finite() {
            return Err(Error::Validation(format!("difficulty must be finite, got {b}")));
        }
        Ok(ItemParams { a, b })
    }
}

/// Affine compression of `[0, 1]` into `[offset, 1 - offset]` applied before
/// the logit. `scale + 2 * offset = 1` always holds, so the transform is a
/// single-parameter family in `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeConfig {
    pub scale: f64,
    pub offset: f64,
}

impl Default for SqueezeConfig {
    fn default() -> Self {
        SqueezeConfig { scale: 0.998, offset: 0.001 }
    }
}

impl SqueezeConfig {
    /// Builds the config for a given edge offset, with `scale = 1 - 2 * offset`.
    pub fn from_offset(offset: f64) -> Result<Self> {
        let cfg = SqueezeConfig { scale: 1.0 - 2.0 * offset, offset };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.offset.is_finite() || self.offset <= 0.0 || self.offset >= 0.5 {
            return Err(Error::Validation(format!(
                "squeeze offset must lie in (0, 0.5), got {}",
                self.offset
            )));
        }
        if !self.scale.is_finite() || self.scale <= 0.0 || self.scale >= 1.0 {
            return Err(Error::Validation(format!(
                "squeeze scale must lie in (0, 1), got {}",
                self.scale
            )));
        }
        if (self.scale + 2.0 * self.offset - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "squeeze constants must satisfy scale + 2*offset = 1, got scale={} offset={}",
                self.scale, self.offset
            )));
        }
        Ok(())
    }

    /// The largest magnitude the squeezed logit can reach: `ln((1-offset)/offset)`.
    pub fn max_logit(&self) -> f64 {
        ((1.0 - self.offset) / self.offset).ln()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps a bounded score to the real line: `ln(q / (1-q))` with
/// `q = scale * p + offset`. Strictly increasing on `[0, 1]`, bounded by
/// `±max_logit()`.
pub fn squeeze_logit(p: f64, cfg: SqueezeConfig) -> Result<f64> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("score must lie in [0, 1], got {p}")));
    }
    let q = cfg.scale * p + cfg.offset;
    Ok((q / (1.0 - q)).ln())
}

/// Inverse of [`squeeze_logit`]: `(sigmoid(y) - offset) / scale`, clamped to
/// `[0, 1]`. Clamping absorbs `|y|` beyond the squeeze range, so this never
/// fails. Expects a validated `cfg`.
pub fn inverse_squeeze(y: f64, cfg: SqueezeConfig) -> f64 {
    ((sigmoid(y) - cfg.offset) / cfg.scale).clamp(0.0, 1.0)
}

/// One observed (or failed) presentation of an item to an examinee.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCell {
    pub examinee: ExamineeId,
    pub item: ItemId,
    pub epoch: u32,
    /// `None` encodes a generation failure: missing, never zero.
    pub score: Option<f64>,
}

/// Per-cell-group scores: `(epoch, score)` pairs sorted by epoch, with `None`
/// marking a failed generation.
pub type EpochScores = Vec<(u32, Option<f64>)>;

/// One examinee's cells, keyed by item.
pub type ExamineeRows = BTreeMap<ItemId, EpochScores>;

/// Sparse (examinee x item x epoch) matrix of bounded scores with explicit
/// missing cells and per-item metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    items: BTreeMap<ItemId, ItemMeta>,
    epochs_per_config: u32,
    groups: BTreeMap<ExamineeId, ExamineeRows>,
    n_cells: usize,
}

impl ResponseMatrix {
    /// Validates and indexes a cell collection.
    ///
    /// Enforces: `epochs_per_config >= 1`, every cell's item appears in the
    /// metadata map, epoch indices `< epochs_per_config`, scores in `[0, 1]`,
    /// and unique `(examinee, item, epoch)` keys.
    pub fn new(
        cells: Vec<ResponseCell>,
        items: BTreeMap<ItemId, ItemMeta>,
        epochs_per_config: u32,
    ) -> Result<Self> {
        if epochs_per_config < 1 {
            return Err(Error::Validation(
                "epochs_per_config must be at least 1".to_owned(),
            ));
        }
        for meta in items.values() {
            meta.validate()?;
        }
        let n_cells = cells.len();
        let mut groups: BTreeMap<ExamineeId, ExamineeRows> = BTreeMap::new();
        for cell in cells {
            if !items.contains_key(&cell.item) {
                return Err(Error::Validation(format!(
                    "cell references item '{}' absent from the item metadata map",
                    cell.item
                )));
            }
            if cell.epoch >= epochs_per_config {
                return Err(Error::Validation(format!(
                    "cell ({}, {}) has epoch {} but epochs_per_config is {}",
                    cell.examinee, cell.item, cell.epoch, epochs_per_config
                )));
            }
            if let Some(s) = cell.score {
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::Validation(format!(
                        "score for ({}, {}, epoch {}) must lie in [0, 1], got {s}",
                        cell.examinee, cell.item, cell.epoch
                    )));
                }
            }
            let epochs = groups
                .entry(cell.examinee.clone())
                .or_default()
                .entry(cell.item.clone())
                .or_default();
            if epochs.iter().any(|(e, _)| *e == cell.epoch) {
                return Err(Error::Validation(format!(
                    "duplicate cell ({}, {}, epoch {})",
                    cell.examinee, cell.item, cell.epoch
                )));
            }
            epochs.push((cell.epoch, cell.score));
        }
        for row in groups.values_mut() {
            for epochs in row.values_mut() {
                epochs.sort_unstable_by_key(|(e, _)| *e);
            }
        }
        Ok(ResponseMatrix { items, epochs_per_config, groups, n_cells })
    }

    pub fn epochs_per_config(&self) -> u32 {
        self.epochs_per_config
    }

    pub fn items(&self) -> &BTreeMap<ItemId, ItemMeta> {
        &self.items
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn examinees(&self) -> impl Iterator<Item = &ExamineeId> {
        self.groups.keys()
    }

    pub fn n_examinees(&self) -> usize {
        self.groups.len()
    }

    pub fn contains_examinee(&self, examinee: &ExamineeId) -> bool {
        self.groups.contains_key(examinee)
    }

    /// All cells of one examinee, keyed by item, epoch-sorted.
    pub fn examinee_rows(&self, examinee: &ExamineeId) -> Option<&ExamineeRows> {
        self.groups.get(examinee)
    }

    /// Reconstructs the cell collection in deterministic
    /// (examinee, item, epoch) order.
    pub fn cells(&self) -> impl Iterator<Item = ResponseCell> + '_ {
        self.groups.iter().flat_map(|(examinee, row)| {
            row.iter().flat_map(move |(item, epochs)| {
                epochs.iter().map(move |(epoch, score)| ResponseCell {
                    examinee: examinee.clone(),
                    item: item.clone(),
                    epoch: *epoch,
                    score: *score,
                })
            })
        })
    }

    /// Mean of the present epoch scores for one (examinee, item) pair.
    ///
    /// Averaging happens in probability space. Returns `Ok(None)` iff every
    /// epoch for the pair is missing or absent.
    pub fn epoch_mean(&self, examinee: &ExamineeId, item: &ItemId) -> Result<Option<f64>> {
        let row = self.groups.get(examinee).ok_or_else(|| {
            Error::Lookup(format!("unknown examinee '{examinee}'"))
        })?;
        if !self.items.contains_key(item) {
            return Err(Error::Lookup(format!("unknown item '{item}'")));
        }
        let Some(epochs) = row.get(item) else {
            return Ok(None);
        };
        Ok(mean_of_present(epochs))
    }

    /// Copy of this matrix with one examinee's cells removed. The item
    /// metadata map is preserved unchanged.
    pub fn without_examinee(&self, examinee: &ExamineeId) -> ResponseMatrix {
        let mut out = self.clone();
        if let Some(row) = out.groups.remove(examinee) {
            out.n_cells -= row.values().map(Vec::len).sum::<usize>();
        }
        out
    }
}

pub(crate) fn mean_of_present(epochs: &[(u32, Option<f64>)]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (_, score) in epochs {
        if let Some(s) = score {
            sum += s;
            n += 1;
        }
    }
    if n == 0 {
        None
    } else {
        Some(sum / n as f64)
    }
}

/// The frozen artifact future examinees are scored against: calibrated
/// per-item parameters, the global residual scale, the squeeze transform the
/// parameters are tied to, and a version tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemBank {
    version: String,
    sigma_hat: f64,
    squeeze: SqueezeConfig,
    entries: BTreeMap<ItemId, (ItemParams, ItemMeta)>,
}

impl ItemBank {
    pub fn new(
        version: impl Into<String>,
        sigma_hat: f64,
        squeeze: SqueezeConfig,
        entries: BTreeMap<ItemId, (ItemParams, ItemMeta)>,
    ) -> Result<Self> {
        let version = version.into();
        if version.is_empty() {
            return Err(Error::Validation("bank version must be non-empty".to_owned()));
        }
        if !sigma_hat.is_finite() || sigma_hat <= 0.0 {
            return Err(Error::Validation(format!(
                "sigma_hat must be strictly positive and finite, got {sigma_hat}"
            )));
        }
        squeeze.validate()?;
        for (id, (params, meta)) in &entries {
            ItemParams::new(params.a, params.b)
                .map_err(|e| Error::Validation(format!("item '{id}': {e}")))?;
            meta.validate()
                .map_err(|e| Error::Validation(format!("item '{id}': {e}")))?;
        }
        Ok(ItemBank { version, sigma_hat, squeeze, entries })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat
    }

    pub fn squeeze(&self) -> SqueezeConfig {
        self.squeeze
    }

    pub fn entries(&self) -> &BTreeMap<ItemId, (ItemParams, ItemMeta)> {
        &self.entries
    }

    pub fn get(&self, item: &ItemId) -> Option<&(ItemParams, ItemMeta)> {
        self.entries.get(item)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn set_version(&mut self, version: impl Into<String>) -> Result<()> {
        let version = version.into();
        if version.is_empty() {
            return Err(Error::Validation("bank version must be non-empty".to_owned()));
        }
        self.version = version;
        Ok(())
    }
}
