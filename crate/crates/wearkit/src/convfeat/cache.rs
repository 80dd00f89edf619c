//! On-disk feature cache: extracted features are expensive to compute and
//! independent of the downstream classification task, so they are stored
//! once and reused.

use std::io::{Read, Write};
use std::path::Path;

use super::Cursor;
use crate::error::{Error, Result};

/// Row-major sample-by-feature matrix of 32-bit floats with one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_features: usize,
    ids: Vec<String>,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(n_features: usize, ids: Vec<String>, values: Vec<f32>) -> Result<Self> {
        if values.len() != ids.len() * n_features {
            return Err(Error::ShapeMismatch(format!(
                "feature values length {} != {} samples x {} features",
                values.len(),
                ids.len(),
                n_features
            )));
        }
        if let Some(bad) = ids.iter().find(|id| id.contains('\0')) {
            return Err(Error::InvalidData(format!(
                "sample id {bad:?} contains a NUL byte"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("feature matrix has non-finite values".into()));
        }
        Ok(FeatureMatrix {
            n_features,
            ids,
            values,
        })
    }

    pub fn empty(n_features: usize) -> Self {
        FeatureMatrix {
            n_features,
            ids: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push_row(&mut self, id: String, row: Vec<f32>) -> Result<()> {
        if row.len() != self.n_features {
            return Err(Error::ShapeMismatch(format!(
                "row length {} != {} features",
                row.len(),
                self.n_features
            )));
        }
        if id.contains('\0') {
            return Err(Error::InvalidData(format!(
                "sample id {id:?} contains a NUL byte"
            )));
        }
        self.ids.push(id);
        self.values.extend_from_slice(&row);
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Copies the given rows into a new matrix (used for fold subsets).
    pub fn subset(&self, rows: &[usize]) -> FeatureMatrix {
        let mut ids = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * self.n_features);
        for &r in rows {
            ids.push(self.ids[r].clone());
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            n_features: self.n_features,
            ids,
            values,
        }
    }

    const MAGIC: &'static [u8; 4] = b"WFC1";

    /// Writes the cache: magic `WFC1`, `u32` sample count, `u32` feature
    /// count, NUL-terminated ids, then the row-major little-endian floats.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if self.ids.len() > u32::MAX as usize || self.n_features > u32::MAX as usize {
            return Err(Error::bad_format("feature cache", "dimension overflow"));
        }
        let mut buf = Vec::with_capacity(16 + self.values.len() * 4);
        buf.extend_from_slice(Self::MAGIC);
        buf.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        for id in &self.ids {
            buf.extend_from_slice(id.as_bytes());
            buf.push(0);
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io_path(path, "create", e))?;
        f.write_all(&buf)
            .map_err(|e| Error::io_path(path, "write", e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io_path(path, "read", e))?;
        let mut cur = Cursor::new(&bytes);
        if cur.take_bytes(4, "magic")? != Self::MAGIC {
            return Err(Error::bad_format("feature cache", "magic mismatch"));
        }
        let n_samples = cur.read_u32("sample count")? as usize;
        let n_features = cur.read_u32("feature count")? as usize;
        let total = n_samples
            .checked_mul(n_features)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::bad_format("feature cache", "dimension overflow"))?;
        let mut ids = Vec::with_capacity(n_samples);
        for i in 0..n_samples {
            ids.push(cur.read_cstring(&format!("id {i}"))?);
        }
        if cur.remaining() < total {
            return Err(Error::bad_format(
                "feature cache",
                format!("truncated values: need {total} bytes, have {}", cur.remaining()),
            ));
        }
        let values = cur.read_f32s(n_samples * n_features, "values")?;
        FeatureMatrix::new(n_features, ids, values)
    }
}
