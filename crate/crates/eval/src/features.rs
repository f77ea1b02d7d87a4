//! Feature vectors keyed by scan id.
//!
//! Binary layout (little-endian): `"F3DF"`, `u32` dim, `u32` count, then
//! `count * dim` `f32` values, row-major. A sidecar JSON index lists the scan
//! id of each row.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::EvalError;

pub const MAGIC: &[u8; 4] = b"F3DF";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    ids: Vec<String>,
    values: Vec<f32>,
    lookup: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureIndex {
    pub dim: usize,
    pub count: usize,
    pub ids: Vec<String>,
}

/// Sidecar index path: `feats.bin` -> `feats.json`.
pub fn index_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

impl FeatureSet {
    pub fn new(dim: usize, ids: Vec<String>, values: Vec<f32>) -> Result<Self, EvalError> {
        if dim == 0 {
            return Err(EvalError::Format("dimension is zero".into()));
        }
        if values.len() != dim * ids.len() {
            return Err(EvalError::DimensionMismatch {
                expected: dim * ids.len(),
                found: values.len(),
            });
        }
        let mut lookup = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(EvalError::Format(format!("duplicate id {id}")));
            }
        }
        Ok(Self {
            dim,
            ids,
            values,
            lookup,
        })
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f32>]) -> Result<Self, EvalError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(EvalError::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        Self::new(dim, ids, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.lookup.get(id).map(|&i| self.row(i))
    }

    pub fn index(&self) -> FeatureIndex {
        FeatureIndex {
            dim: self.dim,
            count: self.ids.len(),
            ids: self.ids.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], index: FeatureIndex) -> Result<Self, EvalError> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(EvalError::Format("missing F3DF header".into()));
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() != 12 + 4 * dim * count {
            return Err(EvalError::Format(format!(
                "expected {} payload bytes, found {}",
                4 * dim * count,
                bytes.len() - 12
            )));
        }
        if index.dim != dim || index.count != count || index.ids.len() != count {
            return Err(EvalError::Format("index does not match header".into()));
        }
        let values = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dim, index.ids, values)
    }

    /// Writes the binary file and its JSON index.
    pub fn save(&self, bin: &Path) -> Result<(), EvalError> {
        std::fs::write(bin, self.to_bytes())?;
        std::fs::write(index_path(bin), serde_json::to_vec_pretty(&self.index())?)?;
        Ok(())
    }

    /// Loads `.csv` files with the CSV reader and everything else as F3DF.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            return Self::load_csv(path);
        }
        let bytes = std::fs::read(path)?;
        let index: FeatureIndex = serde_json::from_slice(&std::fs::read(index_path(path))?)?;
        Self::from_bytes(&bytes, index)
    }

    /// One row per line: `id,v1,...,vd`. Blank lines and `#` comments are
    /// skipped; a first line whose values do not parse is taken as a header.
    pub fn load_csv(path: &Path) -> Result<Self, EvalError> {
        Self::parse_csv(BufReader::new(std::fs::File::open(path)?))
    }

    pub fn parse_csv(reader: impl BufRead) -> Result<Self, EvalError> {
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let id = fields.next().unwrap_or_default().to_string();
            let parsed: Result<Vec<f32>, _> = fields.map(str::parse::<f32>).collect();
            match parsed {
                Ok(v) => {
                    ids.push(id);
                    rows.push(v);
                }
                Err(_) if ids.is_empty() => continue,
                Err(e) => return Err(EvalError::Format(format!("line {}: {e}", n + 1))),
            }
        }
        Self::from_rows(ids, &rows)
    }
}
