use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n × d` observation matrix with column labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    pub values: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.ncols() {
            return Err(Error::Shape(format!(
                "{} labels for {} columns",
                labels.len(),
                values.ncols()
            )));
        }
        Ok(Self { values, labels })
    }

    /// Labels `V1..Vd`.
    pub fn unlabeled(values: DMatrix<f64>) -> Self {
        let labels = (1..=values.ncols()).map(|j| format!("V{j}")).collect();
        Self { values, labels }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    /// Subtracts each column mean.
    pub fn centered(&self) -> Self {
        let mut values = self.values.clone();
        for mut col in values.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        Self {
            values,
            labels: self.labels.clone(),
        }
    }
}
