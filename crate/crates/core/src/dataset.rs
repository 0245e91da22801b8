//! Tabular input: schema, loading, encoding, sub-groups and splits.
//!
//! A [`Schema`] describes the columns of a delimited text file, which column
//! is the class, which value of it is the positive class, and which column is
//! the sensitive attribute together with the value that marks the protected
//! group. [`load_table`] turns matching files into an [`EncodedDataset`]:
//! categorical columns are one-hot encoded and numeric columns are kept raw
//! until [`split`] standardizes them with training-split statistics.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Environment variable overriding the directory datasets are read from.
pub const DATA_DIR_ENV: &str = "FAE_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
    /// Declared domain of a categorical attribute. When present, values
    /// outside it are load errors; when absent the domain is taken from the
    /// loaded rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

/// Layout and semantics of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    /// Data files, relative to the data directory.
    #[serde(default)]
    pub files: Vec<String>,
    /// Data directory, relative to the schema file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    /// Printed when a data file is missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub download: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub has_header: bool,
    /// Lines starting with this character are skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<char>,
    /// Tokens that mark a missing value.
    #[serde(default)]
    pub missing_values: Vec<String>,
    /// Columns checked for missing values; all columns when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_columns: Option<Vec<String>>,
    /// Every column of the file, in file order.
    pub attributes: Vec<Attribute>,
    pub class_attribute: String,
    pub positive_label: String,
    /// Suffix stripped from class values before mapping (the Adult test file
    /// writes ">50K." where the training file writes ">50K").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_suffix: Option<String>,
    pub sensitive_attribute: String,
    pub protected_value: String,
    #[serde(default)]
    pub drop: Vec<String>,
    /// Whether the sensitive attribute is a model feature.
    #[serde(default = "default_true")]
    pub include_sensitive: bool,
}

impl Schema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    /// Reads a schema file. A relative `data_dir` is resolved against the
    /// schema file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut schema = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        schema.data_dir = Some(match schema.data_dir.take() {
            Some(dir) if dir.is_relative() => base.join(dir),
            Some(dir) => dir,
            None => base.to_path_buf(),
        });
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for attr in &self.attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(Error::Schema(format!("attribute {} declared twice", attr.name)));
            }
            if attr.kind == AttributeKind::Numeric && attr.values.is_some() {
                return Err(Error::Schema(format!(
                    "numeric attribute {} cannot declare values",
                    attr.name
                )));
            }
        }
        let sa = self.attribute(&self.sensitive_attribute).ok_or_else(|| {
            Error::Schema(format!(
                "sensitive attribute {} is not an attribute",
                self.sensitive_attribute
            ))
        })?;
        if sa.kind != AttributeKind::Categorical {
            return Err(Error::Schema(format!(
                "sensitive attribute {} must be categorical",
                sa.name
            )));
        }
        if let Some(values) = &sa.values {
            if !values.contains(&self.protected_value) {
                return Err(Error::Schema(format!(
                    "protected value {} is not in the domain of {}",
                    self.protected_value, sa.name
                )));
            }
        }
        let class = self.attribute(&self.class_attribute).ok_or_else(|| {
            Error::Schema(format!("class attribute {} is not an attribute", self.class_attribute))
        })?;
        if class.kind != AttributeKind::Categorical {
            return Err(Error::Schema(format!("class attribute {} must be categorical", class.name)));
        }
        if class.name == sa.name {
            return Err(Error::Schema("class and sensitive attribute coincide".into()));
        }
        if let Some(values) = &class.values {
            let distinct: BTreeSet<&str> = values.iter().map(|v| self.normalize_label(v)).collect();
            if !distinct.contains(self.positive_label.as_str()) {
                return Err(Error::Schema(format!(
                    "positive label {} is not in the domain of {}",
                    self.positive_label, class.name
                )));
            }
            if distinct.len() != 2 {
                return Err(Error::Schema(format!(
                    "class attribute {} must be binary, found {} values",
                    class.name,
                    distinct.len()
                )));
            }
        }
        for name in &self.drop {
            if self.attribute(name).is_none() {
                return Err(Error::Schema(format!("dropped column {name} is not an attribute")));
            }
            if *name == self.class_attribute || *name == self.sensitive_attribute {
                return Err(Error::Schema(format!("column {name} cannot be dropped")));
            }
        }
        for name in self.missing_columns.iter().flatten() {
            if self.attribute(name).is_none() {
                return Err(Error::Schema(format!("missing-value column {name} is not an attribute")));
            }
        }
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    fn position(&self, name: &str) -> usize {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .expect("validated attribute")
    }

    fn normalize_label<'a>(&self, value: &'a str) -> &'a str {
        match &self.label_suffix {
            Some(suffix) => value.strip_suffix(suffix.as_str()).unwrap_or(value),
            None => value,
        }
    }

    /// Data directory: `$FAE_DATA_DIR/<name>` when the variable is set,
    /// otherwise the schema's `data_dir`, otherwise the working directory.
    pub fn resolved_data_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            return PathBuf::from(dir).join(&self.name);
        }
        self.data_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn data_paths(&self) -> Vec<PathBuf> {
        let dir = self.resolved_data_dir();
        self.files.iter().map(|f| dir.join(f)).collect()
    }

    fn missing_error(&self, path: &Path) -> Error {
        Error::MissingDataset {
            path: path.to_path_buf(),
            instructions: self
                .download
                .clone()
                .unwrap_or_else(|| format!("place the {} files under {}", self.name, path.display())),
        }
    }
}

/// Group membership derived from the sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// The protected (discriminated) group `s`.
    Protected,
    /// The non-protected group `s̄`.
    NonProtected,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::Protected => Group::NonProtected,
            Group::NonProtected => Group::Protected,
        }
    }
}

/// The four (group, class) sub-groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubGroup {
    ProtectedPositive,
    ProtectedNegative,
    NonProtectedPositive,
    NonProtectedNegative,
}

impl SubGroup {
    pub const ALL: [SubGroup; 4] = [
        SubGroup::ProtectedPositive,
        SubGroup::ProtectedNegative,
        SubGroup::NonProtectedPositive,
        SubGroup::NonProtectedNegative,
    ];

    pub fn of(label: i8, group: Group) -> SubGroup {
        match (group, label > 0) {
            (Group::Protected, true) => SubGroup::ProtectedPositive,
            (Group::Protected, false) => SubGroup::ProtectedNegative,
            (Group::NonProtected, true) => SubGroup::NonProtectedPositive,
            (Group::NonProtected, false) => SubGroup::NonProtectedNegative,
        }
    }
}

impl fmt::Display for SubGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubGroup::ProtectedPositive => "s+",
            SubGroup::ProtectedNegative => "s-",
            SubGroup::NonProtectedPositive => "s̄+",
            SubGroup::NonProtectedNegative => "s̄-",
        })
    }
}

/// One encoded attribute in the feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureBlock {
    Numeric {
        name: String,
        column: usize,
        offset: usize,
    },
    Categorical {
        name: String,
        column: usize,
        offset: usize,
        values: Vec<String>,
    },
}

/// Mapping from raw columns to feature indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub blocks: Vec<FeatureBlock>,
    pub width: usize,
}

impl FeatureLayout {
    /// Encodes one raw row. Categorical values outside a block's domain leave
    /// the whole block at zero when `strict` is false.
    fn encode_into(&self, raw: &[String], out: &mut [f64], strict: bool) -> Result<()> {
        out.fill(0.0);
        for block in &self.blocks {
            match block {
                FeatureBlock::Numeric { name, column, offset } => {
                    let text = &raw[*column];
                    let value: f64 = text.parse().map_err(|_| {
                        Error::Data(format!("column {name}: value {text:?} is not numeric"))
                    })?;
                    if !value.is_finite() {
                        return Err(Error::Data(format!("column {name}: non-finite value {text:?}")));
                    }
                    out[*offset] = value;
                }
                FeatureBlock::Categorical {
                    name,
                    column,
                    offset,
                    values,
                } => {
                    let text = &raw[*column];
                    match values.iter().position(|v| v == text) {
                        Some(i) => out[offset + i] = 1.0,
                        None if strict => {
                            return Err(Error::Data(format!(
                                "column {name}: unknown categorical value {text:?}"
                            )))
                        }
                        None => {}
                    }
                }
            }
        }
        Ok(())
    }

    pub fn numeric_offsets(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                FeatureBlock::Numeric { offset, .. } => Some(*offset),
                _ => None,
            })
            .collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.width];
        for block in &self.blocks {
            match block {
                FeatureBlock::Numeric { name, offset, .. } => names[*offset] = name.clone(),
                FeatureBlock::Categorical {
                    name, offset, values, ..
                } => {
                    for (i, v) in values.iter().enumerate() {
                        names[offset + i] = format!("{name}={v}");
                    }
                }
            }
        }
        names
    }
}

/// Per-column affine map `(x - mean) / scale` over the numeric features.
/// Constant columns have scale 0 and map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: ArrayView2<'_, f64>, columns: &[usize]) -> Self {
        let n = features.nrows().max(1) as f64;
        let mut means = Vec::with_capacity(columns.len());
        let mut scales = Vec::with_capacity(columns.len());
        for &c in columns {
            let col = features.column(c);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means.push(mean);
            scales.push(var.sqrt());
        }
        Standardizer {
            columns: columns.to_vec(),
            means,
            scales,
        }
    }

    pub fn apply(&self, features: &mut Array2<f64>) {
        for mut row in features.rows_mut() {
            self.apply_row(row.as_slice_mut().expect("standard layout"));
        }
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((&c, &mean), &scale) in self.columns.iter().zip(&self.means).zip(&self.scales) {
            row[c] = if scale > 0.0 { (row[c] - mean) / scale } else { 0.0 };
        }
    }
}

/// Numeric features, ±1 labels (+1 is the positive class) and group flags.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub features: Array2<f64>,
    pub labels: Vec<i8>,
    pub groups: Vec<Group>,
    pub layout: FeatureLayout,
    /// Set once numeric columns are standardized.
    pub standardizer: Option<Standardizer>,
    /// Record index of every row in the loaded input, after filtering.
    pub source_rows: Vec<usize>,
}

impl EncodedDataset {
    pub fn new(features: Array2<f64>, labels: Vec<i8>, groups: Vec<Group>) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || groups.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows, {} labels, {} group flags",
                n,
                labels.len(),
                groups.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::InvalidArgument(format!("label {bad} is not ±1")));
        }
        let width = features.ncols();
        let layout = FeatureLayout {
            blocks: (0..width)
                .map(|i| FeatureBlock::Numeric {
                    name: format!("x{i}"),
                    column: i,
                    offset: i,
                })
                .collect(),
            width,
        };
        Ok(EncodedDataset {
            features,
            labels,
            groups,
            layout,
            standardizer: None,
            source_rows: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            layout: self.layout.clone(),
            standardizer: self.standardizer.clone(),
            source_rows: indices.iter().map(|&i| self.source_rows[i]).collect(),
        }
    }

    /// Fits a standardizer on this data and applies it.
    pub fn standardize(&mut self) -> Result<()> {
        if self.standardizer.is_some() {
            return Err(Error::InvalidArgument("dataset is already standardized".into()));
        }
        let scaler = Standardizer::fit(self.features.view(), &self.layout.numeric_offsets());
        scaler.apply(&mut self.features);
        self.standardizer = Some(scaler);
        Ok(())
    }
}

/// Options for reading rows; training loads filter duplicates, prediction
/// loads keep every usable row.
#[derive(Debug, Clone, Copy)]
struct ReadOptions {
    dedup: bool,
}

struct RawTable {
    rows: Vec<Vec<String>>,
    source_rows: Vec<usize>,
}

fn read_raw(paths: &[PathBuf], schema: &Schema, opts: ReadOptions) -> Result<RawTable> {
    schema.validate()?;
    if !schema.delimiter.is_ascii() {
        return Err(Error::Schema("delimiter must be an ASCII character".into()));
    }
    let width = schema.attributes.len();
    let check: Vec<usize> = match &schema.missing_columns {
        Some(cols) => cols.iter().map(|c| schema.position(c)).collect(),
        None => (0..width).collect(),
    };
    let class_col = schema.position(&schema.class_attribute);

    let mut rows = Vec::new();
    let mut source_rows = Vec::new();
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut record_index = 0usize;
    for path in paths {
        if !path.exists() {
            return Err(schema.missing_error(path));
        }
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(schema.delimiter as u8)
            .has_headers(schema.has_header)
            .comment(schema.comment.map(|c| c as u8))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;

        let order: Vec<usize> = if schema.has_header {
            let header = reader
                .headers()
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
                .clone();
            schema
                .attributes
                .iter()
                .map(|a| {
                    header.iter().position(|h| h == a.name).ok_or_else(|| {
                        Error::Schema(format!("{}: column {} missing from header", path.display(), a.name))
                    })
                })
                .collect::<Result<_>>()?
        } else {
            (0..width).collect()
        };

        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            if record.len() == 1 && record[0].is_empty() {
                continue;
            }
            let this = record_index;
            record_index += 1;
            if record.len() < order.iter().max().map_or(0, |m| m + 1) {
                return Err(Error::Data(format!(
                    "{} record {}: expected {} fields, found {}",
                    path.display(),
                    line + 1,
                    width,
                    record.len()
                )));
            }
            let mut row: Vec<String> = order.iter().map(|&i| record[i].to_string()).collect();
            row[class_col] = schema.normalize_label(&row[class_col]).to_string();
            let missing = check
                .iter()
                .any(|&c| row[c].is_empty() || schema.missing_values.iter().any(|m| *m == row[c]));
            if missing {
                continue;
            }
            if opts.dedup && !seen.insert(row.clone()) {
                continue;
            }
            rows.push(row);
            source_rows.push(this);
        }
    }
    Ok(RawTable { rows, source_rows })
}

fn build_layout(schema: &Schema, rows: &[Vec<String>]) -> FeatureLayout {
    let mut blocks = Vec::new();
    let mut offset = 0;
    for (column, attr) in schema.attributes.iter().enumerate() {
        if attr.name == schema.class_attribute
            || schema.drop.contains(&attr.name)
            || (attr.name == schema.sensitive_attribute && !schema.include_sensitive)
        {
            continue;
        }
        match attr.kind {
            AttributeKind::Numeric => {
                blocks.push(FeatureBlock::Numeric {
                    name: attr.name.clone(),
                    column,
                    offset,
                });
                offset += 1;
            }
            AttributeKind::Categorical => {
                let values = match &attr.values {
                    Some(v) => v.clone(),
                    None => rows
                        .iter()
                        .map(|r| r[column].clone())
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect(),
                };
                let width = values.len();
                blocks.push(FeatureBlock::Categorical {
                    name: attr.name.clone(),
                    column,
                    offset,
                    values,
                });
                offset += width;
            }
        }
    }
    FeatureLayout { blocks, width: offset }
}

fn encode_rows(
    schema: &Schema,
    table: RawTable,
    layout: FeatureLayout,
    strict: bool,
) -> Result<EncodedDataset> {
    let class_col = schema.position(&schema.class_attribute);
    let sa_col = schema.position(&schema.sensitive_attribute);
    let n = table.rows.len();
    let mut features = Array2::zeros((n, layout.width));
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    let mut class_values = BTreeSet::new();
    for (i, row) in table.rows.iter().enumerate() {
        let out = features.row_mut(i).into_slice().expect("standard layout");
        layout.encode_into(row, out, strict)?;
        if strict {
            for (block_attr, value) in schema.attributes.iter().zip(row) {
                if let Some(domain) = &block_attr.values {
                    let known = if block_attr.name == schema.class_attribute {
                        domain.iter().any(|d| schema.normalize_label(d) == value)
                    } else {
                        domain.contains(value)
                    };
                    if !known {
                        return Err(Error::Data(format!(
                            "column {}: unknown categorical value {value:?}",
                            block_attr.name
                        )));
                    }
                }
            }
            class_values.insert(row[class_col].as_str());
        }
        labels.push(if row[class_col] == schema.positive_label { 1 } else { -1 });
        groups.push(if row[sa_col] == schema.protected_value {
            Group::Protected
        } else {
            Group::NonProtected
        });
    }
    if class_values.len() > 2 {
        return Err(Error::Schema(format!(
            "class attribute {} is not binary: values {:?}",
            schema.class_attribute, class_values
        )));
    }
    Ok(EncodedDataset {
        features,
        labels,
        groups,
        layout,
        standardizer: None,
        source_rows: table.source_rows,
    })
}

/// Loads one file. See [`load_tables`].
pub fn load_table(path: impl AsRef<Path>, schema: &Schema) -> Result<EncodedDataset> {
    load_tables(&[path.as_ref().to_path_buf()], schema)
}

/// Loads and concatenates files, dropping rows with missing values and then
/// exact duplicate rows (compared on raw values, across all files), and
/// one-hot encodes the result. Numeric columns are left unscaled.
pub fn load_tables(paths: &[PathBuf], schema: &Schema) -> Result<EncodedDataset> {
    let table = read_raw(paths, schema, ReadOptions { dedup: true })?;
    let layout = build_layout(schema, &table.rows);
    encode_rows(schema, table, layout, true)
}

/// Loads the files listed in the schema.
pub fn load_schema_files(schema: &Schema) -> Result<EncodedDataset> {
    if schema.files.is_empty() {
        return Err(Error::Schema(format!("schema {} lists no data files", schema.name)));
    }
    load_tables(&schema.data_paths(), schema)
}

/// Loads rows for a trained model: no duplicate filtering, categorical values
/// outside the model's domain encode as all-zero blocks, and the model's
/// standardizer is applied. Labels are read when present but never required
/// by prediction.
pub fn load_with_layout(
    paths: &[PathBuf],
    schema: &Schema,
    layout: &FeatureLayout,
    standardizer: Option<&Standardizer>,
) -> Result<EncodedDataset> {
    let table = read_raw(paths, schema, ReadOptions { dedup: false })?;
    let mut ds = encode_rows(schema, table, layout.clone(), false)?;
    if let Some(s) = standardizer {
        s.apply(&mut ds.features);
        ds.standardizer = Some(s.clone());
    }
    Ok(ds)
}

/// Row indices of the four sub-groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub s_pos: Vec<usize>,
    pub s_neg: Vec<usize>,
    pub ns_pos: Vec<usize>,
    pub ns_neg: Vec<usize>,
}

impl GroupPartition {
    /// Tallies rows into sub-groups without requiring any to be non-empty.
    pub fn tally(labels: &[i8], groups: &[Group]) -> Self {
        let mut p = GroupPartition {
            s_pos: Vec::new(),
            s_neg: Vec::new(),
            ns_pos: Vec::new(),
            ns_neg: Vec::new(),
        };
        for (i, (&l, &g)) in labels.iter().zip(groups).enumerate() {
            p.members_mut(SubGroup::of(l, g)).push(i);
        }
        p
    }

    pub fn members(&self, g: SubGroup) -> &[usize] {
        match g {
            SubGroup::ProtectedPositive => &self.s_pos,
            SubGroup::ProtectedNegative => &self.s_neg,
            SubGroup::NonProtectedPositive => &self.ns_pos,
            SubGroup::NonProtectedNegative => &self.ns_neg,
        }
    }

    fn members_mut(&mut self, g: SubGroup) -> &mut Vec<usize> {
        match g {
            SubGroup::ProtectedPositive => &mut self.s_pos,
            SubGroup::ProtectedNegative => &mut self.s_neg,
            SubGroup::NonProtectedPositive => &mut self.ns_pos,
            SubGroup::NonProtectedNegative => &mut self.ns_neg,
        }
    }

    pub fn sizes(&self) -> GroupSizes {
        GroupSizes {
            s_pos: self.s_pos.len(),
            s_neg: self.s_neg.len(),
            ns_pos: self.ns_pos.len(),
            ns_neg: self.ns_neg.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSizes {
    pub s_pos: usize,
    pub s_neg: usize,
    pub ns_pos: usize,
    pub ns_neg: usize,
}

/// Partitions rows into the four sub-groups; every sub-group must be
/// non-empty.
pub fn partition_groups(ds: &EncodedDataset) -> Result<GroupPartition> {
    if ds.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let p = GroupPartition::tally(&ds.labels, &ds.groups);
    for g in SubGroup::ALL {
        if p.members(g).is_empty() {
            return Err(Error::EmptyGroup(g));
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub index: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64, index: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction {train_fraction} must lie strictly between 0 and 1"
            )));
        }
        Ok(SplitSpec {
            train_fraction,
            seed,
            index,
        })
    }

    /// Number of training rows out of `n`: `ceil(fraction * n)`.
    pub fn train_size(&self, n: usize) -> usize {
        // the epsilon absorbs representation error, e.g. (2/3) * 9
        ((self.train_fraction * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize
    }
}

/// Seeded random train/test split. Both sides keep input row order. Numeric
/// columns are standardized with statistics from the training side only.
pub fn split(ds: &EncodedDataset, spec: &SplitSpec) -> Result<(EncodedDataset, EncodedDataset)> {
    SplitSpec::new(spec.train_fraction, spec.seed, spec.index)?;
    if ds.standardizer.is_some() {
        return Err(Error::InvalidArgument("split expects unstandardized features".into()));
    }
    let (mut train_idx, mut test_idx) = split_indices(ds.len(), spec);
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let mut train = ds.subset(&train_idx);
    let mut test = ds.subset(&test_idx);
    train.standardize()?;
    let scaler = train.standardizer.clone().expect("just fitted");
    scaler.apply(&mut test.features);
    test.standardizer = Some(scaler);
    Ok((train, test))
}

/// Shuffled train and test index lists for `n` rows.
pub fn split_indices(n: usize, spec: &SplitSpec) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng_for(seed::derive(spec.seed, spec.index), seed::stream::SPLIT);
    idx.shuffle(&mut rng);
    let test = idx.split_off(spec.train_size(n));
    (idx, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn toy_schema() -> Schema {
        Schema::from_toml_str(
            r#"
            name = "toy"
            missing_values = ["?"]
            class_attribute = "y"
            positive_label = "yes"
            sensitive_attribute = "sex"
            protected_value = "F"
            [[attributes]]
            name = "age"
            kind = "numeric"
            [[attributes]]
            name = "sex"
            kind = "categorical"
            values = ["F", "M"]
            [[attributes]]
            name = "job"
            kind = "categorical"
            [[attributes]]
            name = "y"
            kind = "categorical"
            values = ["yes", "no"]
            "#,
        )
        .unwrap()
    }

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn duplicate_and_missing_rows_are_removed() {
        let f = write("30, F, a, yes\n30, F, a, yes\n40, ?, b, no\n");
        let ds = load_table(f.path(), &toy_schema()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.labels, vec![1]);
        assert_eq!(ds.groups, vec![Group::Protected]);
        assert_eq!(ds.source_rows, vec![0]);
    }

    #[test]
    fn one_hot_blocks_have_one_active_indicator() {
        let f = write("30,F,a,yes\n41,M,b,no\n52,M,c,no\n");
        let ds = load_table(f.path(), &toy_schema()).unwrap();
        // age + sex(2) + job(3)
        assert_eq!(ds.n_features(), 6);
        for row in ds.features.rows() {
            assert_eq!(row[1] + row[2], 1.0);
            assert_eq!(row[3] + row[4] + row[5], 1.0);
        }
        assert_eq!(ds.features[[1, 0]], 41.0);
    }

    #[test]
    fn unknown_declared_value_names_column_and_value() {
        let f = write("30,X,a,yes\n");
        let err = load_table(f.path(), &toy_schema()).unwrap_err().to_string();
        assert!(err.contains("sex") && err.contains("\"X\""), "{err}");
    }

    #[test]
    fn non_binary_class_is_a_schema_error() {
        let mut schema = toy_schema();
        schema.attributes[3].values = None;
        let f = write("30,F,a,yes\n31,M,a,no\n32,M,a,maybe\n");
        let err = load_table(f.path(), &schema).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn schema_rejects_bad_declarations() {
        let mut schema = toy_schema();
        schema.protected_value = "X".into();
        assert!(matches!(schema.validate(), Err(Error::Schema(_))));

        let mut schema = toy_schema();
        schema.attributes.push(Attribute {
            name: "sex".into(),
            kind: AttributeKind::Categorical,
            values: None,
        });
        assert!(matches!(schema.validate(), Err(Error::Schema(_))));

        let mut schema = toy_schema();
        schema.attributes[3].values = Some(vec!["yes".into(), "no".into(), "maybe".into()]);
        assert!(matches!(schema.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn sensitive_attribute_can_be_excluded() {
        let mut schema = toy_schema();
        schema.include_sensitive = false;
        let f = write("30,F,a,yes\n41,M,b,no\n");
        let ds = load_table(f.path(), &schema).unwrap();
        assert_eq!(ds.n_features(), 3);
        assert_eq!(ds.groups, vec![Group::Protected, Group::NonProtected]);
    }

    #[test]
    fn label_suffix_is_stripped_before_dedup() {
        let mut schema = toy_schema();
        schema.label_suffix = Some(".".into());
        let f = write("30,F,a,yes\n30,F,a,yes.\n");
        let ds = load_table(f.path(), &schema).unwrap();
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn header_files_are_matched_by_name() {
        let mut schema = toy_schema();
        schema.has_header = true;
        schema.delimiter = ';';
        let f = write("\"y\";\"job\";\"sex\";\"age\"\n\"no\";\"b\";\"M\";41\n");
        let ds = load_table(f.path(), &schema).unwrap();
        assert_eq!(ds.labels, vec![-1]);
        assert_eq!(ds.features[[0, 0]], 41.0);
    }

    #[test]
    fn unseen_category_encodes_as_zero_block_for_prediction() {
        let f = write("30,F,a,yes\n41,M,b,no\n");
        let schema = toy_schema();
        let ds = load_table(f.path(), &schema).unwrap();
        let g = write("50,M,zzz,no\n");
        let pred = load_with_layout(&[g.path().to_path_buf()], &schema, &ds.layout, None).unwrap();
        let row = pred.features.row(0);
        assert_eq!(row[3] + row[4], 0.0);
    }

    fn four_rows() -> EncodedDataset {
        let x = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        EncodedDataset::new(
            x,
            vec![1, -1, 1, -1],
            vec![Group::Protected, Group::Protected, Group::NonProtected, Group::NonProtected],
        )
        .unwrap()
    }

    #[test]
    fn partition_of_one_row_per_subgroup() {
        let p = partition_groups(&four_rows()).unwrap();
        assert_eq!(p.s_pos, vec![0]);
        assert_eq!(p.s_neg, vec![1]);
        assert_eq!(p.ns_pos, vec![2]);
        assert_eq!(p.ns_neg, vec![3]);
    }

    #[test]
    fn missing_protected_positives_is_an_error() {
        let mut ds = four_rows();
        ds.labels[0] = -1;
        let err = partition_groups(&ds).unwrap_err();
        assert_eq!(err.to_string(), "empty group s+");
    }

    #[test]
    fn split_sizes_and_determinism() {
        let x = Array2::from_shape_fn((9, 2), |(i, j)| (i * 2 + j) as f64);
        let ds = EncodedDataset::new(x, vec![1; 9], vec![Group::Protected; 9]).unwrap();
        let spec = SplitSpec::new(2.0 / 3.0, 5, 0).unwrap();
        let (tr, te) = split(&ds, &spec).unwrap();
        assert_eq!((tr.len(), te.len()), (6, 3));
        let (tr2, te2) = split(&ds, &spec).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        let mut all: Vec<usize> = tr.source_rows.iter().chain(&te.source_rows).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_degenerate_fraction() {
        assert!(SplitSpec::new(1.0, 0, 0).is_err());
        assert!(SplitSpec::new(0.0, 0, 0).is_err());
    }

    #[test]
    fn standardized_training_columns() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| if j == 0 { (i * i) as f64 } else { 4.0 });
        let ds = EncodedDataset::new(x, vec![1; 30], vec![Group::Protected; 30]).unwrap();
        let (tr, _) = split(&ds, &SplitSpec::new(0.5, 1, 0).unwrap()).unwrap();
        let col = tr.features.column(0);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
        assert!(tr.features.column(1).iter().all(|&v| v == 0.0));
    }
}
