//! Embedding storage: the `.ddig` matrix format, the JSON Lines manifest that
//! ties rows to items, and slicing by split/region/class/view.
//!
//! One `.ddig` file is written per view. Items whose object could not be
//! segmented keep their full and background rows and carry
//! `has_object_segmentation = false` in the manifest, with no object row.

mod format;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{
    read_ddig, read_embedding_file, read_manifest, write_ddig, write_embedding_file,
    write_manifest, DdigMatrix, DDIG_HEADER_LEN, DDIG_MAGIC, DDIG_VERSION,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("MagicMismatch: {path} does not start with \"DDIG\"")]
    MagicMismatch { path: PathBuf },
    #[error("VersionUnsupported: {path} has format version {version}")]
    VersionUnsupported { path: PathBuf, version: u16 },
    #[error("TruncatedPayload: {path} expected {expected} bytes, found {actual}")]
    TruncatedPayload {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("NonFiniteValue: row {row}, column {column}")]
    NonFiniteValue { row: usize, column: usize },
    #[error("ManifestMismatch: {0}")]
    ManifestMismatch(String),
    #[error("DuplicateItem: item_id {item_id:?} appears twice in the {view} view")]
    DuplicateItem { item_id: String, view: View },
    #[error("InvalidRecord: {0}")]
    InvalidRecord(String),
    #[error("DimensionMismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("ManifestParse: line {line}: {source}")]
    ManifestParse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("IoFailure: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Real,
    Generated,
}

/// Which part of the image an embedding encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Full,
    Object,
    Background,
}

impl View {
    pub const ALL: [View; 3] = [View::Full, View::Object, View::Background];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Full => "full",
            View::Object => "object",
            View::Background => "background",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "full" => Ok(View::Full),
            "object" => Ok(View::Object),
            "background" => Ok(View::Background),
            other => Err(format!("unknown view {other:?}")),
        }
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub item_id: String,
    pub split: Split,
    pub region: String,
    pub object_class: String,
    pub view: View,
    /// Row of this record inside the view's `.ddig` file.
    pub row_index: usize,
    pub has_object_segmentation: bool,
}

/// Label used to disaggregate records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    #[default]
    Region,
    ObjectClass,
}

impl GroupKey {
    pub fn label<'a>(&self, record: &'a EmbeddingRecord) -> &'a str {
        match self {
            GroupKey::Region => &record.region,
            GroupKey::ObjectClass => &record.object_class,
        }
    }
}

impl FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "region" => Ok(GroupKey::Region),
            "object_class" | "class" => Ok(GroupKey::ObjectClass),
            other => Err(format!("unknown group-by key {other:?}")),
        }
    }
}

/// Paths of the three per-view matrices plus the shared manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingPaths {
    pub manifest: PathBuf,
    pub full: PathBuf,
    pub object: PathBuf,
    pub background: PathBuf,
}

impl EmbeddingPaths {
    /// `stem.manifest.jsonl`, `stem.full.ddig`, `stem.object.ddig`, `stem.background.ddig`.
    pub fn from_stem(stem: impl Into<PathBuf>) -> Self {
        let stem: PathBuf = stem.into();
        let with = |suffix: &str| {
            let mut s = stem.clone().into_os_string();
            s.push(suffix);
            PathBuf::from(s)
        };
        EmbeddingPaths {
            manifest: with(".manifest.jsonl"),
            full: with(".full.ddig"),
            object: with(".object.ddig"),
            background: with(".background.ddig"),
        }
    }

    pub fn view(&self, view: View) -> &PathBuf {
        match view {
            View::Full => &self.full,
            View::Object => &self.object,
            View::Background => &self.background,
        }
    }
}

/// A dense row-major f32 matrix with one manifest record per row.
///
/// Immutable once built; every constructor validates the record invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dimension: usize,
    vectors: Vec<f32>,
    records: Vec<EmbeddingRecord>,
}

impl EmbeddingSet {
    pub fn new(
        dimension: usize,
        vectors: Vec<f32>,
        records: Vec<EmbeddingRecord>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(StoreError::InvalidRecord("dimension must be positive".into()));
        }
        if vectors.len() != records.len() * dimension {
            return Err(StoreError::ManifestMismatch(format!(
                "{} records but {} values at dimension {dimension}",
                records.len(),
                vectors.len()
            )));
        }
        let set = EmbeddingSet {
            dimension,
            vectors,
            records,
        };
        set.check_finite()?;
        set.check_records()?;
        Ok(set)
    }

    pub fn empty(dimension: usize) -> Self {
        EmbeddingSet {
            dimension,
            vectors: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&EmbeddingRecord, &[f32])> {
        self.records
            .iter()
            .zip(self.vectors.chunks_exact(self.dimension))
    }

    fn check_finite(&self) -> Result<()> {
        for (record, row) in self.rows() {
            if let Some(column) = row.iter().position(|v| !v.is_finite()) {
                return Err(StoreError::NonFiniteValue {
                    row: record.row_index,
                    column,
                });
            }
        }
        Ok(())
    }

    fn check_records(&self) -> Result<()> {
        let mut seen: HashSet<(View, &str)> = HashSet::with_capacity(self.records.len());
        // (split, item_id) -> (region, class, flag) must agree across views
        let mut items: HashMap<(Split, &str), &EmbeddingRecord> = HashMap::new();
        for record in &self.records {
            if !seen.insert((record.view, record.item_id.as_str())) {
                return Err(StoreError::DuplicateItem {
                    item_id: record.item_id.clone(),
                    view: record.view,
                });
            }
            if record.view == View::Object && !record.has_object_segmentation {
                return Err(StoreError::InvalidRecord(format!(
                    "item {:?} has an object row but has_object_segmentation=false",
                    record.item_id
                )));
            }
            match items.get(&(record.split, record.item_id.as_str())) {
                Some(first)
                    if first.region != record.region
                        || first.object_class != record.object_class
                        || first.has_object_segmentation != record.has_object_segmentation =>
                {
                    return Err(StoreError::InvalidRecord(format!(
                        "item {:?} has inconsistent labels across views",
                        record.item_id
                    )));
                }
                Some(_) => {}
                None => {
                    items.insert((record.split, record.item_id.as_str()), record);
                }
            }
        }
        Ok(())
    }

    /// File-level invariant: per view, row indexes are exactly `0..n`.
    pub(crate) fn check_contiguous(&self) -> Result<()> {
        for view in View::ALL {
            let mut rows: Vec<usize> = self
                .records
                .iter()
                .filter(|r| r.view == view)
                .map(|r| r.row_index)
                .collect();
            rows.sort_unstable();
            if let Some((expected, &found)) =
                rows.iter().enumerate().find(|(i, &r)| *i != r)
            {
                return Err(StoreError::ManifestMismatch(format!(
                    "{view} view row indexes are not contiguous: expected {expected}, found {found}"
                )));
            }
        }
        Ok(())
    }

    pub fn view_len(&self, view: View) -> usize {
        self.records.iter().filter(|r| r.view == view).count()
    }

    pub fn slice(&self, query: &SliceQuery) -> EmbeddingSet {
        slice(self, query)
    }

    /// Distinct item ids over all views, in first-seen order.
    pub fn item_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.item_id.as_str()))
            .map(|r| r.item_id.as_str())
            .collect()
    }

    /// Distinct labels under `key`, sorted.
    pub fn groups(&self, key: GroupKey) -> BTreeSet<String> {
        self.records
            .iter()
            .map(|r| key.label(r).to_owned())
            .collect()
    }

    pub fn object_classes(&self) -> BTreeSet<String> {
        self.groups(GroupKey::ObjectClass)
    }

    /// Concatenates two sets of the same dimension.
    pub fn concat(&self, other: &EmbeddingSet) -> Result<EmbeddingSet> {
        if self.dimension != other.dimension {
            return Err(StoreError::DimensionMismatch {
                expected: self.dimension,
                found: other.dimension,
            });
        }
        let mut vectors = self.vectors.clone();
        vectors.extend_from_slice(&other.vectors);
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        EmbeddingSet::new(self.dimension, vectors, records)
    }
}

/// Record filter. `None` fields match everything; the view is always fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceQuery {
    pub split: Option<Split>,
    pub region: Option<String>,
    pub object_class: Option<String>,
    pub view: View,
}

impl SliceQuery {
    pub fn view(view: View) -> Self {
        SliceQuery {
            split: None,
            region: None,
            object_class: None,
            view,
        }
    }

    pub fn split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }

    pub fn region(mut self, region: impl Into<String>) -> Self {
        self.region = Some(region.into());
        self
    }

    pub fn object_class(mut self, class: impl Into<String>) -> Self {
        self.object_class = Some(class.into());
        self
    }

    pub fn matches(&self, record: &EmbeddingRecord) -> bool {
        record.view == self.view
            && self.split.is_none_or(|s| s == record.split)
            && self.region.as_deref().is_none_or(|r| r == record.region)
            && self
                .object_class
                .as_deref()
                .is_none_or(|c| c == record.object_class)
    }
}

/// Rows matching every filter in `query`, in their original order. Row
/// indexes keep pointing at the source file.
pub fn slice(set: &EmbeddingSet, query: &SliceQuery) -> EmbeddingSet {
    let mut vectors = Vec::new();
    let mut records = Vec::new();
    for (record, row) in set.rows() {
        if query.matches(record) {
            vectors.extend_from_slice(row);
            records.push(record.clone());
        }
    }
    EmbeddingSet {
        dimension: set.dimension,
        vectors,
        records,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceDeficit {
    pub region: String,
    pub object_class: String,
    pub count: usize,
}

/// Every (region, class) cell holding fewer than `min_per_cell` distinct
/// items. Cells are the cross product of all regions and classes present, so
/// a missing combination reports a count of zero. Never re-balances.
pub fn validate_class_balance(set: &EmbeddingSet, min_per_cell: usize) -> Vec<BalanceDeficit> {
    let mut items: BTreeMap<(&str, &str), HashSet<&str>> = BTreeMap::new();
    let mut regions = BTreeSet::new();
    let mut classes = BTreeSet::new();
    for r in set.records() {
        regions.insert(r.region.as_str());
        classes.insert(r.object_class.as_str());
        items
            .entry((r.region.as_str(), r.object_class.as_str()))
            .or_default()
            .insert(r.item_id.as_str());
    }
    let mut deficits = Vec::new();
    for region in &regions {
        for class in &classes {
            let count = items.get(&(*region, *class)).map_or(0, HashSet::len);
            if count < min_per_cell {
                deficits.push(BalanceDeficit {
                    region: (*region).to_owned(),
                    object_class: (*class).to_owned(),
                    count,
                });
            }
        }
    }
    deficits
}
