//! Categorical tables: schemas, encoded datasets, and empirical joint
//! distributions over attribute subsets.
//!
//! Every column is treated as opaque categorical text. Category `c` of
//! attribute `i` is stored as its index in the schema's category list;
//! inferred schemas order categories lexicographically.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dense joint distribution that [`empirical_marginal`] will build.
pub const DEFAULT_CELL_CAP: usize = 1 << 24;

/// Tolerance used when validating that a distribution sums to one.
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub categories: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawSchema {
    attributes: Vec<Attribute>,
}

/// Ordered attribute names with their ordered category lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
    #[serde(skip)]
    lookup: Vec<HashMap<String, u32>>,
}

impl PartialEq for AttributeSchema {
    fn eq(&self, other: &Self) -> bool {
        self.attributes == other.attributes
    }
}

impl Eq for AttributeSchema {}

impl TryFrom<RawSchema> for AttributeSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        AttributeSchema::new(raw.attributes)
    }
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::InvalidSchema("schema has no attributes".into()));
        }
        let mut names = HashSet::new();
        let mut lookup = Vec::with_capacity(attributes.len());
        for attr in &attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate attribute name {:?}",
                    attr.name
                )));
            }
            if attr.categories.len() < 2 {
                return Err(Error::InvalidSchema(format!(
                    "attribute {:?} needs at least two categories, has {}",
                    attr.name,
                    attr.categories.len()
                )));
            }
            if attr.categories.len() > u32::MAX as usize {
                return Err(Error::InvalidSchema(format!(
                    "attribute {:?} has too many categories",
                    attr.name
                )));
            }
            let mut map = HashMap::with_capacity(attr.categories.len());
            for (idx, cat) in attr.categories.iter().enumerate() {
                if map.insert(cat.clone(), idx as u32).is_some() {
                    return Err(Error::InvalidSchema(format!(
                        "attribute {:?} lists category {:?} twice",
                        attr.name, cat
                    )));
                }
            }
            lookup.push(map);
        }
        Ok(Self { attributes, lookup })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// Number of attributes `d`.
    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, index: usize) -> &Attribute {
        &self.attributes[index]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.attributes[index].name
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    /// Domain size `|Ω_i|` of attribute `index`.
    pub fn domain_size(&self, index: usize) -> usize {
        self.attributes[index].categories.len()
    }

    pub fn domain_sizes(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.categories.len()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn encode(&self, attribute: usize, value: &str) -> Result<u32> {
        self.lookup[attribute]
            .get(value)
            .copied()
            .ok_or_else(|| Error::UnknownCategory {
                attribute: self.attributes[attribute].name.clone(),
                value: value.to_string(),
            })
    }

    pub fn decode(&self, attribute: usize, index: u32) -> &str {
        &self.attributes[attribute].categories[index as usize]
    }

    pub fn is_all_binary(&self) -> bool {
        self.attributes.iter().all(|a| a.categories.len() == 2)
    }
}

/// `n` records encoded as category indices, stored column-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDataset {
    schema: Arc<AttributeSchema>,
    columns: Vec<Vec<u32>>,
    rows: usize,
}

impl EncodedDataset {
    pub fn from_columns(schema: Arc<AttributeSchema>, columns: Vec<Vec<u32>>) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} columns for a schema of {} attributes",
                columns.len(),
                schema.len()
            )));
        }
        let rows = columns[0].len();
        if rows == 0 {
            return Err(Error::EmptyData);
        }
        for (i, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::SchemaMismatch(format!(
                    "column {} has {} rows, expected {}",
                    i,
                    col.len(),
                    rows
                )));
            }
            let size = schema.domain_size(i);
            if let Some(&bad) = col.iter().find(|&&v| v as usize >= size) {
                return Err(Error::IndexOutOfRange {
                    index: bad as usize,
                    size,
                });
            }
        }
        Ok(Self { schema, columns, rows })
    }

    pub fn from_rows(schema: Arc<AttributeSchema>, rows: &[Vec<u32>]) -> Result<Self> {
        let d = schema.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); d];
        for row in rows {
            if row.len() != d {
                return Err(Error::SchemaMismatch(format!(
                    "record has {} values, schema has {} attributes",
                    row.len(),
                    d
                )));
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        if rows.is_empty() {
            return Err(Error::EmptyData);
        }
        Self::from_columns(schema, columns)
    }

    /// A dataset over the same schema with replacement columns.
    pub fn with_columns(&self, columns: Vec<Vec<u32>>) -> Result<Self> {
        Self::from_columns(Arc::clone(&self.schema), columns)
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<AttributeSchema> {
        Arc::clone(&self.schema)
    }

    /// Number of records `n`.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn num_attributes(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, attribute: usize) -> &[u32] {
        &self.columns[attribute]
    }

    pub fn columns(&self) -> &[Vec<u32>] {
        &self.columns
    }

    pub fn row(&self, index: usize) -> Vec<u32> {
        self.columns.iter().map(|c| c[index]).collect()
    }

    pub fn decoded_row(&self, index: usize) -> Vec<&str> {
        self.columns
            .iter()
            .enumerate()
            .map(|(i, c)| self.schema.decode(i, c[index]))
            .collect()
    }

    pub fn decoded_rows(&self) -> Vec<Vec<&str>> {
        (0..self.rows).map(|r| self.decoded_row(r)).collect()
    }
}

/// Reads a CSV table from `path`. See [`read_csv`].
pub fn load_csv(path: impl AsRef<Path>, schema: Option<&AttributeSchema>) -> Result<EncodedDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema)
}

/// Parses a headed CSV table. With a schema, the header must list the
/// schema's attribute names in order; without one, a schema is inferred
/// with each column's observed values sorted lexicographically.
pub fn read_csv<R: Read>(reader: R, schema: Option<&AttributeSchema>) -> Result<EncodedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if let Some(schema) = schema {
        let expected: Vec<String> = schema.names().map(str::to_string).collect();
        if expected != header {
            return Err(Error::HeaderMismatch {
                expected,
                found: header,
            });
        }
    }
    let d = header.len();
    let mut raw: Vec<csv::StringRecord> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != d {
            return Err(Error::RaggedRow {
                line: record.position().map_or(0, |p| p.line()),
                expected: d,
                found: record.len(),
            });
        }
        raw.push(record);
    }
    if raw.is_empty() {
        return Err(Error::EmptyData);
    }

    let schema = match schema {
        Some(s) => s.clone(),
        None => {
            let mut observed = vec![BTreeSet::new(); d];
            for record in &raw {
                for (set, value) in observed.iter_mut().zip(record.iter()) {
                    if !set.contains(value) {
                        set.insert(value.to_string());
                    }
                }
            }
            let attributes = header
                .iter()
                .zip(observed)
                .map(|(name, cats)| Attribute {
                    name: name.clone(),
                    categories: cats.into_iter().collect(),
                })
                .collect();
            AttributeSchema::new(attributes)?
        }
    };

    let mut columns = vec![Vec::with_capacity(raw.len()); d];
    for record in &raw {
        for (i, value) in record.iter().enumerate() {
            columns[i].push(schema.encode(i, value)?);
        }
    }
    EncodedDataset::from_columns(Arc::new(schema), columns)
}

/// Writes the dataset as CSV with the schema's names as the header.
pub fn write_csv<W: Write>(writer: W, data: &EncodedDataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(data.schema().names())?;
    for r in 0..data.len() {
        wtr.write_record(data.decoded_row(r))?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, data: &EncodedDataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(std::io::BufWriter::new(file), data)
}

/// Dense probability vector over a product domain, row-major with the
/// last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionVector {
    domain_sizes: Vec<usize>,
    probabilities: Vec<f64>,
}

impl DistributionVector {
    pub fn new(domain_sizes: Vec<usize>, probabilities: Vec<f64>) -> Result<Self> {
        let cells: usize = domain_sizes.iter().product();
        if domain_sizes.is_empty() || cells != probabilities.len() {
            return Err(Error::DomainMismatch(format!(
                "{} probabilities for domain {:?}",
                probabilities.len(),
                domain_sizes
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "probability {p} is negative or not finite"
            )));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self {
            domain_sizes,
            probabilities,
        })
    }

    /// Single-axis distribution.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        Self::new(vec![probabilities.len()], probabilities)
    }

    pub fn from_counts(domain_sizes: Vec<usize>, counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyData);
        }
        let n = total as f64;
        Self::new(domain_sizes, counts.iter().map(|&c| c as f64 / n).collect())
    }

    pub fn uniform(domain_sizes: Vec<usize>) -> Result<Self> {
        let cells: usize = domain_sizes.iter().product();
        Self::new(domain_sizes, vec![1.0 / cells as f64; cells])
    }

    pub fn domain_sizes(&self) -> &[usize] {
        &self.domain_sizes
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn into_probabilities(self) -> Vec<f64> {
        self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Sums out every axis not listed in `axes`; the result's axes follow
    /// the order given, so this also permutes.
    pub fn marginalize(&self, axes: &[usize]) -> Result<Self> {
        check_distinct(axes, self.domain_sizes.len())?;
        let strides = strides(&self.domain_sizes);
        let out_sizes: Vec<usize> = axes.iter().map(|&a| self.domain_sizes[a]).collect();
        let out_strides = strides_of(&out_sizes);
        let mut out = vec![0.0; out_sizes.iter().product()];
        for (cell, &p) in self.probabilities.iter().enumerate() {
            let mut target = 0;
            for (k, &axis) in axes.iter().enumerate() {
                let coord = (cell / strides[axis]) % self.domain_sizes[axis];
                target += coord * out_strides[k];
            }
            out[target] += p;
        }
        Ok(Self {
            domain_sizes: out_sizes,
            probabilities: out,
        })
    }
}

/// Row-major strides for a product domain.
pub(crate) fn strides_of(sizes: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; sizes.len()];
    for i in (0..sizes.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * sizes[i + 1];
    }
    strides
}

fn strides(sizes: &[usize]) -> Vec<usize> {
    strides_of(sizes)
}

fn check_distinct(attrs: &[usize], bound: usize) -> Result<()> {
    if attrs.is_empty() {
        return Err(Error::InvalidAttributes("attribute list is empty".into()));
    }
    let mut seen = HashSet::with_capacity(attrs.len());
    for &a in attrs {
        if a >= bound {
            return Err(Error::InvalidAttributes(format!(
                "attribute index {a} out of range for {bound} attributes"
            )));
        }
        if !seen.insert(a) {
            return Err(Error::InvalidAttributes(format!("attribute index {a} listed twice")));
        }
    }
    Ok(())
}

/// Cell counts of the joint over `attrs`, in the same layout as
/// [`DistributionVector`].
pub fn marginal_counts(data: &EncodedDataset, attrs: &[usize], cell_cap: usize) -> Result<Vec<u64>> {
    check_distinct(attrs, data.num_attributes())?;
    let cells = attrs
        .iter()
        .map(|&a| data.schema().domain_size(a) as u128)
        .product::<u128>();
    if cells > cell_cap as u128 {
        return Err(Error::CellCapExceeded { cells, cap: cell_cap });
    }
    let mut index = vec![0usize; data.len()];
    for &a in attrs {
        let size = data.schema().domain_size(a);
        for (slot, &v) in index.iter_mut().zip(data.column(a)) {
            *slot = *slot * size + v as usize;
        }
    }
    let mut counts = vec![0u64; cells as usize];
    for i in index {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Empirical joint distribution of `attrs`, capped at [`DEFAULT_CELL_CAP`] cells.
pub fn empirical_marginal(data: &EncodedDataset, attrs: &[usize]) -> Result<DistributionVector> {
    empirical_marginal_capped(data, attrs, DEFAULT_CELL_CAP)
}

pub fn empirical_marginal_capped(
    data: &EncodedDataset,
    attrs: &[usize],
    cell_cap: usize,
) -> Result<DistributionVector> {
    let counts = marginal_counts(data, attrs, cell_cap)?;
    let sizes = attrs.iter().map(|&a| data.schema().domain_size(a)).collect();
    DistributionVector::from_counts(sizes, &counts)
}
