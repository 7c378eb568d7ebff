use super::ModelError;

/// Row-major design matrix with one target (age in years) per row.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, ModelError> {
        if rows.len() != targets.len() {
            return Err(ModelError::InvalidData(format!(
                "{} rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(ModelError::Shape {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::InvalidData(format!(
                    "row {i} has a non-finite feature"
                )));
            }
        }
        if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
            return Err(ModelError::InvalidData(format!("non-finite target {t}")));
        }
        Ok(Dataset { rows, targets, dim })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn mean_target(&self) -> f64 {
        if self.targets.is_empty() {
            return 0.0;
        }
        self.targets.iter().sum::<f64>() / self.targets.len() as f64
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            dim: self.dim,
        }
    }
}
