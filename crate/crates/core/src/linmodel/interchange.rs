//! JSON interchange for matrices and spectral models: row-major arrays of rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SpectralModel;
use crate::error::{Error, Result};

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!(
            "row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn vector_to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Serialized form of a [`SpectralModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub n: usize,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub covariance: Vec<Vec<f64>>,
}

impl From<&SpectralModel> for ModelDocument {
    fn from(model: &SpectralModel) -> Self {
        Self {
            n: model.n(),
            eigenvalues: model.eigenvalues().to_vec(),
            eigenvectors: matrix_to_rows(model.eigenvectors()),
            covariance: matrix_to_rows(model.covariance()),
        }
    }
}

impl TryFrom<ModelDocument> for SpectralModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let vectors = matrix_from_rows(&doc.eigenvectors)?;
        let covariance = matrix_from_rows(&doc.covariance)?;
        if doc.eigenvalues.len() != doc.n || vectors.shape() != (doc.n, doc.n) || covariance.shape() != (doc.n, doc.n) {
            return Err(Error::Dimension(format!("model document is inconsistent with n = {}", doc.n)));
        }
        SpectralModel::from_parts(vectors, doc.eigenvalues, covariance)
    }
}

impl SpectralModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelDocument::from(self)).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::Dimension(format!("invalid model JSON: {e}")))?;
        doc.try_into()
    }
}
