use serde::{Deserialize, Serialize};

use crate::error::{OcanError, Result};
use crate::tensor::Tensor;

/// Ground-truth class, used only for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(Label::Benign),
            1 => Some(Label::Malicious),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Label::Benign => 0,
            Label::Malicious => 1,
        }
    }

    pub fn is_malicious(self) -> bool {
        self == Label::Malicious
    }
}

/// One user's ordered activity: `len x width`, one feature vector per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivitySequence {
    pub user_id: String,
    steps: Tensor,
}

impl ActivitySequence {
    pub fn new(user_id: impl Into<String>, steps: Tensor) -> Result<Self> {
        let user_id = user_id.into();
        if steps.rows() == 0 {
            return Err(OcanError::Sequence {
                user: user_id,
                msg: "sequence has no steps".into(),
            });
        }
        Ok(Self { user_id, steps })
    }

    pub fn from_steps(user_id: impl Into<String>, steps: &[Vec<f64>]) -> Result<Self> {
        let user_id = user_id.into();
        let t = Tensor::from_rows(steps).map_err(|e| OcanError::Sequence {
            user: user_id.clone(),
            msg: e.to_string(),
        })?;
        Self::new(user_id, t)
    }

    pub fn len(&self) -> usize {
        self.steps.rows()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> usize {
        self.steps.cols()
    }

    pub fn steps(&self) -> &Tensor {
        &self.steps
    }

    pub fn step(&self, t: usize) -> &[f64] {
        self.steps.row(t)
    }

    /// The first `k` steps, `1 <= k <= len`.
    pub fn prefix(&self, k: usize) -> Result<ActivitySequence> {
        if k == 0 || k > self.len() {
            return Err(OcanError::InvalidArgument(format!(
                "prefix length {k} out of range 1..={}",
                self.len()
            )));
        }
        Ok(Self {
            user_id: self.user_id.clone(),
            steps: self.steps.slice_rows(0, k)?,
        })
    }
}

/// A sequence with its optional evaluation label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub sequence: ActivitySequence,
    pub label: Option<Label>,
}

/// Fixed-width instance (e.g. a transaction) with its optional label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledVector {
    pub id: String,
    pub values: Vec<f64>,
    pub label: Option<Label>,
}
