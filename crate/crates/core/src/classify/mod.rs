//! Classifiers, voting and cross-validation.

pub mod cv;
pub mod glmnet;
pub mod svm;
pub mod vote;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cv::{cross_validate, stratified_folds, AccuracyReport, ResultsTable, Split};
pub use glmnet::{glm_fit_lambda, glmnet_train, GlmModel, GlmParams};
pub use svm::{svm_train, SvmModel, SvmParams};
pub use vote::majority_vote;

/// A predicted label with per-class scores used for tie-breaking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifierKind {
    Svm,
    Glmnet,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svm" => Ok(Self::Svm),
            "glmnet" | "glm" => Ok(Self::Glmnet),
            other => Err(Error::config(format!("unknown classifier '{other}' (expected svm or glmnet)"))),
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Svm => "svm",
            Self::Glmnet => "glmnet",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Svm(SvmModel),
    Glm(GlmModel),
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        match self {
            Self::Svm(m) => m.predict(x),
            Self::Glm(m) => m.predict(x),
        }
    }
}

/// Validates a training set and returns its feature count.
pub(crate) fn check_rows(x: &[Vec<f64>], y: &[usize], num_classes: usize) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::data("empty training set"));
    }
    if x.len() != y.len() {
        return Err(Error::dim(x.len(), y.len(), "label count"));
    }
    let d = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(Error::dim(d, r.len(), "feature count"));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= num_classes) {
        return Err(Error::data(format!("label {bad} outside 0..{num_classes}")));
    }
    Ok(d)
}
