//! Supervised dataset container: an input matrix paired with a target
//! matrix, one row per observation.

use crate::error::CoreError;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Matrix,
    pub task: Task,
}

impl Dataset {
    /// Validates row counts and, for classification, that target rows are
    /// one-hot (entries in {0,1}, summing to 1).
    pub fn new(inputs: Matrix, targets: Matrix, task: Task) -> Result<Self, CoreError> {
        if inputs.rows() != targets.rows() {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} target rows", inputs.rows()),
                got: format!("{}", targets.rows()),
            });
        }
        if task == Task::Classification {
            for r in 0..targets.rows() {
                let row = targets.row(r);
                let sum: f64 = row.iter().sum();
                let one_hot = (sum - 1.0).abs() < 1e-12
                    && row.iter().all(|&x| x == 0.0 || (x - 1.0).abs() < 1e-12);
                if !one_hot {
                    return Err(CoreError::Invalid(format!(
                        "target row {r} is not one-hot"
                    )));
                }
            }
        }
        Ok(Dataset {
            inputs,
            targets,
            task,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// New dataset from a subset of row indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let in_rows: Vec<Vec<f64>> = indices.iter().map(|&i| self.inputs.row(i).to_vec()).collect();
        let tg_rows: Vec<Vec<f64>> = indices.iter().map(|&i| self.targets.row(i).to_vec()).collect();
        Dataset {
            inputs: Matrix::from_rows(&in_rows).expect("consistent rows"),
            targets: Matrix::from_rows(&tg_rows).expect("consistent rows"),
            task: self.task,
        }
    }

    /// Class index per row (argmax of the one-hot target).
    pub fn labels(&self) -> Vec<usize> {
        (0..self.targets.rows())
            .map(|r| {
                let row = self.targets.row(r);
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect()
    }
}
