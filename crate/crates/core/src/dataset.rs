//! Dataset records and their JSON Lines files.
//!
//! `items.jsonl`:
//! `{"id": "a", "feature": [..] | "image": "path", "global_votes": [n1, n2, n3], "split": "train"|"test"}`
//!
//! `pairs.jsonl`: `{"first": "a", "second": "b", "votes": [v-2, v-1, v0, v+1, v+2]}`
//!
//! `features.jsonl`: `{"id": "a", "feature": [..]}`
//!
//! Blank lines and lines starting with `#schema:` are skipped. Unknown
//! fields are ignored with a warning. Image paths are resolved relative to
//! the directory of the items file and point at JSON tensor files
//! (`{"height", "width", "channels", "data"}`, `HWC` order).

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::net::{ImageTensor, Input};
use crate::rating::{GlobalVotes, PairwiseVotes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemRecord {
    pub id: String,
    pub input: Input,
    pub global_votes: GlobalVotes,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub first: String,
    pub second: String,
    pub votes: PairwiseVotes,
}

/// Items plus pairs, validated and indexed by id.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<ItemRecord>,
    pub pairs: Vec<PairRecord>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Checks id uniqueness, that pairs reference known, distinct items of
    /// the same split, and that all inputs share one shape.
    pub fn new(items: Vec<ItemRecord>, pairs: Vec<PairRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if index.insert(item.id.clone(), i).is_some() {
                return Err(Error::Dataset(format!("duplicate item id `{}`", item.id)));
            }
        }
        if let Some(first) = items.first() {
            let shape = first.input.shape();
            if let Some(bad) = items.iter().find(|it| it.input.shape() != shape) {
                return Err(Error::Dataset(format!(
                    "item `{}` has input shape {}, expected {shape}",
                    bad.id,
                    bad.input.shape()
                )));
            }
        }
        let ds = Dataset { items, pairs, index };
        for pair in &ds.pairs {
            ds.check_pair(pair)?;
        }
        Ok(ds)
    }

    fn check_pair(&self, pair: &PairRecord) -> Result<()> {
        let name = || format!("pair ({}, {})", pair.first, pair.second);
        if pair.first == pair.second {
            return Err(Error::Dataset(format!("{}: an item cannot be paired with itself", name())));
        }
        let a = self
            .get(&pair.first)
            .ok_or_else(|| Error::Dataset(format!("{}: unknown item `{}`", name(), pair.first)))?;
        let b = self
            .get(&pair.second)
            .ok_or_else(|| Error::Dataset(format!("{}: unknown item `{}`", name(), pair.second)))?;
        if a.split != b.split {
            return Err(Error::Dataset(format!("{}: members belong to different splits", name())));
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ItemRecord> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Split of a (validated) pair.
    pub fn pair_split(&self, pair: &PairRecord) -> Split {
        self.get(&pair.first).map(|it| it.split).unwrap_or(Split::Train)
    }

    pub fn items_in(&self, split: Split) -> impl Iterator<Item = &ItemRecord> {
        self.items.iter().filter(move |it| it.split == split)
    }

    pub fn pairs_in(&self, split: Split) -> impl Iterator<Item = &PairRecord> {
        self.pairs.iter().filter(move |p| self.pair_split(p) == split)
    }

    /// The subset of items and pairs in one split.
    pub fn subset(&self, split: Split) -> Dataset {
        let items: Vec<_> = self.items_in(split).cloned().collect();
        let pairs: Vec<_> = self.pairs_in(split).cloned().collect();
        let index = items.iter().enumerate().map(|(i, it)| (it.id.clone(), i)).collect();
        Dataset { items, pairs, index }
    }
}

/// Reads one JSON object per line, warning once per unknown field.
fn read_jsonl<T: DeserializeOwned>(path: &Path, known: &[&str]) -> Result<Vec<T>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    let mut warned: HashSet<String> = HashSet::new();
    let display = path.display().to_string();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("#schema:") {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: display.clone(),
            line: n + 1,
            message,
        };
        let value: Value = serde_json::from_str(trimmed).map_err(|e| parse_err(e.to_string()))?;
        let Value::Object(map) = &value else {
            return Err(parse_err("expected a JSON object".into()));
        };
        for key in map.keys() {
            if !known.contains(&key.as_str()) && warned.insert(key.clone()) {
                log::warn!("{display}: ignoring unknown field `{key}`");
            }
        }
        out.push(serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ItemLine {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    global_votes: GlobalVotes,
    split: Split,
}

#[derive(Serialize, Deserialize)]
pub struct FeatureLine {
    pub id: String,
    pub feature: Vec<f64>,
}

pub fn read_tensor(path: &Path) -> Result<ImageTensor> {
    let t: ImageTensor = serde_json::from_reader(BufReader::new(fs::File::open(path)?))?;
    if t.data.len() != t.height * t.width * t.channels {
        return Err(Error::Dataset(format!(
            "{}: tensor data has {} values, expected {}x{}x{}",
            path.display(),
            t.data.len(),
            t.height,
            t.width,
            t.channels
        )));
    }
    Ok(t)
}

pub fn write_tensor(path: &Path, tensor: &ImageTensor) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut w, tensor)?;
    w.flush()?;
    Ok(())
}

pub fn read_items(path: &Path) -> Result<Vec<ItemRecord>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let lines: Vec<ItemLine> = read_jsonl(path, &["id", "feature", "image", "global_votes", "split"])?;
    lines
        .into_iter()
        .map(|l| {
            let input = match (l.feature, l.image) {
                (Some(f), None) => Input::Feature(f),
                (None, Some(img)) => Input::Image(read_tensor(&base.join(img))?),
                _ => {
                    return Err(Error::Dataset(format!(
                        "item `{}` must have exactly one of `feature` or `image`",
                        l.id
                    )))
                }
            };
            Ok(ItemRecord {
                id: l.id,
                input,
                global_votes: l.global_votes,
                split: l.split,
            })
        })
        .collect()
}

/// Writes items; image inputs go to `images/<id>.json` next to the file.
pub fn write_items(path: &Path, items: &[ItemRecord]) -> Result<()> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut lines = Vec::with_capacity(items.len());
    for it in items {
        let (feature, image) = match &it.input {
            Input::Feature(f) => (Some(f.clone()), None),
            Input::Image(t) => {
                let rel = PathBuf::from("images").join(format!("{}.json", it.id));
                fs::create_dir_all(base.join("images"))?;
                write_tensor(&base.join(&rel), t)?;
                (None, Some(rel.to_string_lossy().into_owned()))
            }
        };
        lines.push(ItemLine {
            id: it.id.clone(),
            feature,
            image,
            global_votes: it.global_votes,
            split: it.split,
        });
    }
    write_jsonl(path, lines)
}

pub fn read_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    read_jsonl(path, &["first", "second", "votes"])
}

pub fn write_pairs(path: &Path, pairs: &[PairRecord]) -> Result<()> {
    write_jsonl(path, pairs)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureLine>> {
    read_jsonl(path, &["id", "feature"])
}

pub fn write_features(path: &Path, rows: &[FeatureLine]) -> Result<()> {
    write_jsonl(path, rows)
}

/// Unvoted pair list produced by the sampler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRef {
    pub first: String,
    pub second: String,
}

pub fn write_pair_refs(path: &Path, pairs: &[PairRef]) -> Result<()> {
    write_jsonl(path, pairs)
}

pub fn read_pair_refs(path: &Path) -> Result<Vec<PairRef>> {
    read_jsonl(path, &["first", "second"])
}

pub fn load_dataset(items: &Path, pairs: &Path) -> Result<Dataset> {
    Dataset::new(read_items(items)?, read_pairs(pairs)?)
}
