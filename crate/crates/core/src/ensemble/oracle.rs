//! Software reference for ensemble inference.

use serde::{Deserialize, Serialize};

use super::model::{Ensemble, Task};
use super::quant::{Code, QuantizedEnsemble};
use super::EnsembleError;

/// Decided model output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Value(f64),
    Class(usize),
}

impl Decision {
    pub fn as_f64(&self) -> f64 {
        match *self {
            Decision::Value(v) => v,
            Decision::Class(c) => c as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Per-class summed logits (length `n_classes`).
    pub logits: Vec<f64>,
    pub decision: Decision,
}

/// Decision function shared by every consumer of class sums: identity for
/// regression, `sum >= threshold` for binary, argmax (lowest index on ties) for
/// multiclass.
pub fn decide<T: PartialOrd + Copy + Into<f64>>(task: Task, sums: &[T], threshold: T) -> Decision {
    match task {
        Task::Regression => Decision::Value(sums[0].into()),
        Task::BinaryClassification => Decision::Class(usize::from(sums[0] >= threshold)),
        Task::MulticlassClassification => {
            let mut best = 0;
            for (i, s) in sums.iter().enumerate().skip(1) {
                if *s > sums[best] {
                    best = i;
                }
            }
            Decision::Class(best)
        }
    }
}

/// A model the oracle can evaluate.
pub trait Predictor {
    type Input: Copy;
    fn oracle_predict(&self, input: &[Self::Input]) -> Result<Prediction, EnsembleError>;
}

impl Predictor for Ensemble {
    type Input = f64;

    fn oracle_predict(&self, x: &[f64]) -> Result<Prediction, EnsembleError> {
        check_dim(self.n_features, x.len())?;
        let mut sums = vec![0.0f64; self.n_classes];
        for tree in &self.trees {
            let leaf = tree.leaf_index(x);
            let (value, class) = tree.leaf(leaf).expect("traversal ends on a leaf");
            sums[class] += *value;
        }
        let decision = decide(self.task, &sums, self.decision_threshold);
        Ok(Prediction {
            logits: sums,
            decision,
        })
    }
}

impl QuantizedEnsemble {
    /// Raw fixed-point class sums for a code vector.
    pub fn raw_sums(&self, codes: &[Code]) -> Result<Vec<i64>, EnsembleError> {
        check_dim(self.model.n_features, codes.len())?;
        let mut sums = vec![0i64; self.model.n_classes];
        for tree in &self.model.trees {
            let leaf = tree.leaf_index(codes);
            let (value, class) = tree.leaf(leaf).expect("traversal ends on a leaf");
            sums[class] += *value as i64;
        }
        Ok(sums)
    }

    /// Turns raw class sums into a [`Prediction`], exactly as the co-processor does.
    pub fn prediction_from_raw(&self, sums: &[i64]) -> Prediction {
        let decision = match self.model.task {
            Task::Regression => Decision::Value(self.logit_format.to_f64(sums[0])),
            task => {
                let as_f64: Vec<f64> = sums.iter().map(|&s| s as f64).collect();
                decide(task, &as_f64, self.threshold_raw() as f64)
            }
        };
        Prediction {
            logits: sums.iter().map(|&s| self.logit_format.to_f64(s)).collect(),
            decision,
        }
    }
}

impl Predictor for QuantizedEnsemble {
    type Input = Code;

    fn oracle_predict(&self, codes: &[Code]) -> Result<Prediction, EnsembleError> {
        let sums = self.raw_sums(codes)?;
        Ok(self.prediction_from_raw(&sums))
    }
}

/// Free-function form of [`Predictor::oracle_predict`].
pub fn oracle_predict<M: Predictor>(model: &M, input: &[M::Input]) -> Result<Prediction, EnsembleError> {
    model.oracle_predict(input)
}

fn check_dim(expected: usize, got: usize) -> Result<(), EnsembleError> {
    if expected != got {
        return Err(EnsembleError::Dimension { expected, got });
    }
    Ok(())
}
