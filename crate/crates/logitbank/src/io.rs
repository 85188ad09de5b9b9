//! File formats: line-delimited response records, the bank file, generator
//! specs, and paired judge scores.
//!
//! Responses travel as JSONL (one object per line) because the data is sparse
//! by nature and appends cheaply. A `null` score encodes a generation
//! failure, never zero. The bank file embeds its squeeze constants so scoring
//! can never silently use a mismatched link transform. Numbers are serialized
//! with full round-trip precision.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregate::JudgePairSeries;
use crate::error::{Error, Result};
use crate::model::{
    ItemBank, ItemId, ItemMeta, ItemParams, ResponseCell, ResponseMatrix, Split, SqueezeConfig,
};
use crate::synth::GeneratorSpec;

/// Wire form of one response cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub model: String,
    pub prompt: String,
    pub epoch: u32,
    /// `null` means the generation failed: the cell is missing, not zero.
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u64>,
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(BufReader::new(file).lines())
}

/// Loads and validates a line-delimited response file into a matrix.
///
/// Per-record metadata is aggregated per item: splits must agree, tags and
/// categories are unioned, token counts are averaged. Rejects out-of-range
/// scores and duplicate `(model, prompt, epoch)` keys with line-numbered
/// messages.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<ResponseMatrix> {
    let path = path.as_ref();
    let display = path.display().to_string();

    let mut cells: Vec<ResponseCell> = Vec::new();
    let mut seen: BTreeSet<(String, String, u32)> = BTreeSet::new();
    let mut splits: BTreeMap<ItemId, Split> = BTreeMap::new();
    let mut tags: BTreeMap<ItemId, BTreeSet<String>> = BTreeMap::new();
    let mut categories: BTreeMap<ItemId, BTreeSet<String>> = BTreeMap::new();
    let mut token_sums: BTreeMap<ItemId, (f64, u64)> = BTreeMap::new();
    let mut max_epoch = 0u32;

    for (lineno, line) in open_lines(path)?.enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|source| Error::Io { path: display.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ResponseRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Parse(format!("{display} line {lineno}: {e}"))
        })?;
        if let Some(score) = record.score {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::Validation(format!(
                    "{display} line {lineno}: score must lie in [0, 1] or be null, got {score}"
                )));
            }
        }
        let key = (record.model.clone(), record.prompt.clone(), record.epoch);
        if !seen.insert(key) {
            return Err(Error::Validation(format!(
                "{display} line {lineno}: duplicate (model, prompt, epoch) = ({}, {}, {})",
                record.model, record.prompt, record.epoch
            )));
        }
        let item = ItemId(record.prompt.clone());
        if let Some(split) = record.split {
            if let Some(prev) = splits.insert(item.clone(), split) {
                if prev != split {
                    return Err(Error::Validation(format!(
                        "{display} line {lineno}: item '{item}' declared as {split} but earlier records say {prev}"
                    )));
                }
            }
        }
        if let Some(ts) = &record.tags {
            tags.entry(item.clone()).or_default().extend(ts.iter().cloned());
        }
        if let Some(cs) = &record.categories {
            categories.entry(item.clone()).or_default().extend(cs.iter().cloned());
        }
        if let Some(t) = record.tokens {
            let entry = token_sums.entry(item.clone()).or_insert((0.0, 0));
            entry.0 += t as f64;
            entry.1 += 1;
        }
        max_epoch = max_epoch.max(record.epoch);
        cells.push(ResponseCell {
            examinee: record.model.into(),
            item,
            epoch: record.epoch,
            score: record.score,
        });
    }

    if cells.is_empty() {
        return Err(Error::Validation(format!("{display}: no records in file")));
    }

    let mut items: BTreeMap<ItemId, ItemMeta> = BTreeMap::new();
    for cell in &cells {
        items.entry(cell.item.clone()).or_insert_with(|| ItemMeta::new(Split::Public));
    }
    for (item, meta) in items.iter_mut() {
        if let Some(split) = splits.get(item) {
            meta.split = *split;
        }
        if let Some(ts) = tags.remove(item) {
            meta.tags = ts;
        }
        if let Some(cs) = categories.remove(item) {
            meta.categories = cs;
        }
        if let Some((sum, n)) = token_sums.get(item) {
            meta.mean_tokens = Some(sum / *n as f64);
        }
    }

    ResponseMatrix::new(cells, items, max_epoch + 1)
}

/// Writes a matrix as JSONL, one record per cell in deterministic order.
/// Item metadata rides on every record; token counts round to integers.
pub fn save_matrix(matrix: &ResponseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for cell in matrix.cells() {
        let meta = &matrix.items()[&cell.item];
        let record = ResponseRecord {
            model: cell.examinee.0,
            prompt: cell.item.0,
            epoch: cell.epoch,
            score: cell.score,
            split: Some(meta.split),
            tags: if meta.tags.is_empty() {
                None
            } else {
                Some(meta.tags.iter().cloned().collect())
            },
            categories: if meta.categories.is_empty() {
                None
            } else {
                Some(meta.categories.iter().cloned().collect())
            },
            tokens: meta.mean_tokens.map(|t| t.round() as u64),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Wire form of the frozen bank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankFile {
    pub version: String,
    pub sigma: f64,
    pub squeeze: SqueezeConfig,
    pub items: Vec<BankItemRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankItemRow {
    pub prompt: String,
    pub a: f64,
    pub b: f64,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_tokens: Option<f64>,
}

/// Serializes a bank to JSON; `save_bank` then `load_bank` round-trips
/// bit-exactly.
pub fn save_bank(bank: &ItemBank, path: impl AsRef<Path>) -> Result<()> {
    let file = BankFile {
        version: bank.version().to_owned(),
        sigma: bank.sigma_hat(),
        squeeze: bank.squeeze(),
        items: bank
            .entries()
            .iter()
            .map(|(id, (params, meta))| BankItemRow {
                prompt: id.0.clone(),
                a: params.a,
                b: params.b,
                split: meta.split,
                tags: meta.tags.iter().cloned().collect(),
                categories: meta.categories.iter().cloned().collect(),
                mean_tokens: meta.mean_tokens,
            })
            .collect(),
    };
    let mut body = serde_json::to_string_pretty(&file).expect("bank serializes");
    body.push('\n');
    write_file(path.as_ref(), body.as_bytes())
}

/// Parses and validates a bank file.
pub fn load_bank(path: impl AsRef<Path>) -> Result<ItemBank> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let body = fs::read_to_string(path).map_err(|source| Error::Io {
        path: display.clone(),
        source,
    })?;
    let file: BankFile =
        serde_json::from_str(&body).map_err(|e| Error::Parse(format!("{display}: {e}")))?;
    let mut entries = BTreeMap::new();
    for row in file.items {
        let params = ItemParams::new(row.a, row.b)
            .map_err(|e| Error::Validation(format!("{display}: item '{}': {e}", row.prompt)))?;
        let meta = ItemMeta {
            split: row.split,
            tags: row.tags.into_iter().collect(),
            categories: row.categories.into_iter().collect(),
            mean_tokens: row.mean_tokens,
        };
        if entries.insert(ItemId(row.prompt.clone()), (params, meta)).is_some() {
            return Err(Error::Validation(format!(
                "{display}: duplicate item '{}'",
                row.prompt
            )));
        }
    }
    ItemBank::new(file.version, file.sigma, file.squeeze, entries)
        .map_err(|e| Error::Validation(format!("{display}: {e}")))
}

/// Parses a generator spec from JSON.
pub fn load_generator_spec(path: impl AsRef<Path>) -> Result<GeneratorSpec> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let body = fs::read_to_string(path).map_err(|source| Error::Io {
        path: display.clone(),
        source,
    })?;
    let spec: GeneratorSpec =
        serde_json::from_str(&body).map_err(|e| Error::Parse(format!("{display}: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

/// Wire form of one judge score: an opaque stable id plus a score in [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeRecord {
    pub id: String,
    pub score: f64,
}

/// Loads a JSONL judge-score file into an id-keyed map.
pub fn load_judge_scores(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut scores = BTreeMap::new();
    for (lineno, line) in open_lines(path)?.enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|source| Error::Io { path: display.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JudgeRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{display} line {lineno}: {e}")))?;
        if !(0.0..=1.0).contains(&record.score) {
            return Err(Error::Validation(format!(
                "{display} line {lineno}: score must lie in [0, 1], got {}",
                record.score
            )));
        }
        if scores.insert(record.id.clone(), record.score).is_some() {
            return Err(Error::Validation(format!(
                "{display} line {lineno}: duplicate id '{}'",
                record.id
            )));
        }
    }
    if scores.is_empty() {
        return Err(Error::Validation(format!("{display}: no records in file")));
    }
    Ok(scores)
}

/// Joins two judge-score maps on their shared ids, in id order.
pub fn pair_judge_scores(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> Result<JudgePairSeries> {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .filter_map(|(id, sa)| b.get(id).map(|sb| (*sa, *sb)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Validation(
            "the two judge files share no ids".to_owned(),
        ));
    }
    JudgePairSeries::new(pairs)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SqueezeConfig;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("logitbank-io-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn load_matrix_null_score_is_missing() {
        let path = tmp("null-score.jsonl");
        fs::write(
            &path,
            r#"{"model":"m1","prompt":"p1","epoch":0,"score":null}
{"model":"m1","prompt":"p1","epoch":1,"score":0.75}
"#,
        )
        .unwrap();
        let matrix = load_matrix(&path).unwrap();
        assert_eq!(matrix.n_cells(), 2);
        assert_eq!(
            matrix.epoch_mean(&"m1".into(), &"p1".into()).unwrap(),
            Some(0.75)
        );
    }

    #[test]
    fn load_matrix_rejects_out_of_range_score_with_line() {
        let path = tmp("bad-score.jsonl");
        fs::write(
            &path,
            r#"{"model":"m1","prompt":"p1","epoch":0,"score":0.5}
{"model":"m1","prompt":"p2","epoch":0,"score":1.2}
"#,
        )
        .unwrap();
        let err = load_matrix(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn load_matrix_rejects_duplicates() {
        let path = tmp("dup.jsonl");
        fs::write(
            &path,
            r#"{"model":"m1","prompt":"p1","epoch":0,"score":0.5}
{"model":"m1","prompt":"p1","epoch":0,"score":0.6}
"#,
        )
        .unwrap();
        let err = load_matrix(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn load_matrix_counting_fixture() {
        // 2 models x 3 prompts x 5 epochs with one all-missing cell group.
        let path = tmp("counting.jsonl");
        let mut body = String::new();
        for model in ["m1", "m2"] {
            for prompt in ["p1", "p2", "p3"] {
                for epoch in 0..5 {
                    let score = if model == "m2" && prompt == "p3" {
                        "null".to_owned()
                    } else {
                        format!("{}", 0.1 * (epoch + 1) as f64)
                    };
                    body.push_str(&format!(
                        r#"{{"model":"{model}","prompt":"{prompt}","epoch":{epoch},"score":{score},"split":"public"}}"#
                    ));
                    body.push('\n');
                }
            }
        }
        fs::write(&path, body).unwrap();
        let matrix = load_matrix(&path).unwrap();
        assert_eq!(matrix.n_cells(), 30);
        assert_eq!(matrix.epochs_per_config(), 5);
        assert_eq!(matrix.epoch_mean(&"m2".into(), &"p3".into()).unwrap(), None);
    }

    #[test]
    fn load_matrix_empty_file_is_error() {
        let path = tmp("empty.jsonl");
        fs::write(&path, "").unwrap();
        assert!(matches!(load_matrix(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn matrix_save_load_roundtrips_missing_mask_and_scores() {
        let path = tmp("roundtrip.jsonl");
        let spec = GeneratorSpec {
            thetas: vec![-0.5, 0.0, 0.5],
            items: (0..8)
                .map(|j| crate::synth::GenItem {
                    id: None,
                    a: 1.0 + 0.1 * j as f64,
                    b: -1.0 + 0.25 * j as f64,
                    split: if j % 3 == 0 { Split::Private } else { Split::Public },
                    tags: Default::default(),
                    categories: Default::default(),
                    mean_tokens: None,
                })
                .collect(),
            sigma: 0.6,
            epochs: 3,
            missing_prob: 0.25,
            seed: 17,
            token_curve: None,
        };
        let matrix = crate::synth::generate(&spec, SqueezeConfig::default()).unwrap();
        save_matrix(&matrix, &path).unwrap();
        let loaded = load_matrix(&path).unwrap();
        assert_eq!(loaded.n_cells(), matrix.n_cells());
        for (a, b) in matrix.cells().zip(loaded.cells()) {
            assert_eq!(a.examinee, b.examinee);
            assert_eq!(a.item, b.item);
            assert_eq!(a.epoch, b.epoch);
            assert_eq!(a.score.map(f64::to_bits), b.score.map(f64::to_bits));
        }
    }

    #[test]
    fn bank_roundtrip_is_bit_exact() {
        let path = tmp("bank.json");
        let mut entries = BTreeMap::new();
        for j in 0..12 {
            let mut meta = ItemMeta::new(if j % 2 == 0 { Split::Public } else { Split::Private });
            meta.tags.insert(format!("tag{}", j % 3));
            meta.mean_tokens = Some(123.456789 + j as f64 / 7.0);
            entries.insert(
                ItemId(format!("p{j:02}")),
                (
                    ItemParams::new(0.1 + j as f64 / 3.0, -2.0 + j as f64 / 5.0).unwrap(),
                    meta,
                ),
            );
        }
        let bank =
            ItemBank::new("v-test", 2.53, SqueezeConfig::default(), entries).unwrap();
        save_bank(&bank, &path).unwrap();
        let loaded = load_bank(&path).unwrap();
        assert_eq!(loaded.version(), bank.version());
        assert_eq!(loaded.sigma_hat().to_bits(), bank.sigma_hat().to_bits());
        assert_eq!(loaded.len(), bank.len());
        for (id, (params, meta)) in bank.entries() {
            let (lp, lm) = loaded.get(id).unwrap();
            assert_eq!(lp.a.to_bits(), params.a.to_bits());
            assert_eq!(lp.b.to_bits(), params.b.to_bits());
            assert_eq!(lm, meta);
        }
    }

    #[test]
    fn handwritten_bank_loads() {
        let path = tmp("handwritten.json");
        fs::write(
            &path,
            r#"{
  "version": "v1",
  "sigma": 1.5,
  "squeeze": {"scale": 0.998, "offset": 0.001},
  "items": [
    {"prompt": "alpha", "a": 1.0, "b": 0.0, "split": "public"},
    {"prompt": "beta", "a": 2.0, "b": -1.0, "split": "private", "tags": ["x"]}
  ]
}"#,
        )
        .unwrap();
        let bank = load_bank(&path).unwrap();
        assert_eq!(bank.len(), 2);
        assert_eq!(bank.get(&"beta".into()).unwrap().0.a, 2.0);
    }

    #[test]
    fn bank_validation_errors() {
        let missing_version = tmp("no-version.json");
        fs::write(
            &missing_version,
            r#"{"sigma": 1.0, "squeeze": {"scale": 0.998, "offset": 0.001}, "items": []}"#,
        )
        .unwrap();
        assert!(matches!(load_bank(&missing_version), Err(Error::Parse(_))));

        let bad_a = tmp("bad-a.json");
        fs::write(
            &bad_a,
            r#"{"version":"v1","sigma":1.0,"squeeze":{"scale":0.998,"offset":0.001},
               "items":[{"prompt":"p","a":-1.0,"b":0.0,"split":"public"}]}"#,
        )
        .unwrap();
        assert!(matches!(load_bank(&bad_a), Err(Error::Validation(_))));

        let corrupt = tmp("corrupt.json");
        fs::write(
            &corrupt,
            r#"{"version":"v1","sigma":1.0e+,"squeeze":{"scale":0.998,"offset":0.001},"items":[]}"#,
        )
        .unwrap();
        let err = load_bank(&corrupt).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("corrupt.json"));
    }

    #[test]
    fn judge_scores_load_and_pair() {
        let pa = tmp("judge-a.jsonl");
        let pb = tmp("judge-b.jsonl");
        fs::write(
            &pa,
            r#"{"id":"s1","score":0.9}
{"id":"s2","score":0.2}
{"id":"only-a","score":0.5}
"#,
        )
        .unwrap();
        fs::write(
            &pb,
            r#"{"id":"s1","score":0.8}
{"id":"s2","score":0.1}
"#,
        )
        .unwrap();
        let a = load_judge_scores(&pa).unwrap();
        let b = load_judge_scores(&pb).unwrap();
        let series = pair_judge_scores(&a, &b).unwrap();
        assert_eq!(series.len(), 2);
    }
}
