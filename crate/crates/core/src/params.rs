use serde::{Deserialize, Serialize};

use crate::error::{OcanError, Result};
use crate::rng::SeededRng;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

/// Named parameter tensors with matching gradient accumulators.
///
/// Iteration order is insertion order and never changes, so a group can be
/// bound to a tape, optimized, and serialized positionally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    names: Vec<String>,
    values: Vec<Tensor>,
    #[serde(skip)]
    grads: Vec<Tensor>,
}

impl Default for ParamGroup {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamGroup {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(OcanError::InvalidArgument(format!(
                "duplicate parameter name {name}"
            )));
        }
        let (r, c) = value.shape();
        self.names.push(name);
        self.values.push(value);
        self.grads.push(Tensor::zeros(r, c));
        Ok(self.values.len() - 1)
    }

    /// Weight matrix drawn uniformly from `[-k, k]`, `k = sqrt(1 / fan_in)`.
    pub fn push_weight(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut SeededRng,
    ) -> Result<usize> {
        let k = (1.0 / fan_in.max(1) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.uniform(-k, k)).collect();
        self.push(name, Tensor::from_vec(fan_in, fan_out, data)?)
    }

    pub fn push_bias(
        &mut self,
        name: impl Into<String>,
        width: usize,
        value: f64,
    ) -> Result<usize> {
        self.push(name, Tensor::filled(1, width, value)?)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn grads(&self) -> &[Tensor] {
        &self.grads
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| OcanError::InvalidArgument(format!("no parameter named {name}")))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.values[self.index_of(name)?])
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.grads[self.index_of(name)?])
    }

    pub fn value_at(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    /// Replaces a parameter, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = self.index_of(name)?;
        if self.values[i].shape() != value.shape() {
            return Err(OcanError::ShapeMismatch {
                op: "ParamGroup::set",
                lhs: self.values[i].shape(),
                rhs: value.shape(),
            });
        }
        self.values[i] = value;
        Ok(())
    }

    pub(crate) fn value_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.values[i]
    }

    /// Sets every parameter entry to zero.
    pub fn zero_values(&mut self) {
        for v in &mut self.values {
            v.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn zero_grad(&mut self) {
        if self.grads.len() != self.values.len() {
            self.grads = self
                .values
                .iter()
                .map(|v| Tensor::zeros(v.rows(), v.cols()))
                .collect();
            return;
        }
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Registers every parameter as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|v| tape.leaf(v.clone())).collect()
    }

    /// Registers every parameter as a constant (frozen network).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.values
            .iter()
            .map(|v| tape.constant(v.clone()))
            .collect()
    }

    /// Adds the gradients of the bound leaves into the accumulators.
    pub fn accumulate(&mut self, grads: &Gradients, vars: &[Var]) -> Result<()> {
        if vars.len() != self.values.len() {
            return Err(OcanError::InvalidArgument(format!(
                "bound {} vars for {} parameters",
                vars.len(),
                self.values.len()
            )));
        }
        if self.grads.len() != self.values.len() {
            self.zero_grad();
        }
        for (g, &v) in self.grads.iter_mut().zip(vars) {
            if let Some(d) = grads.get(v) {
                *g = g.add(d)?;
            }
        }
        Ok(())
    }

    /// `backward` into this group's accumulators.
    pub fn backward(&mut self, tape: &Tape, loss: Var, vars: &[Var]) -> Result<()> {
        let grads = tape.backward(loss)?;
        self.accumulate(&grads, vars)
    }

    /// Same names and shapes, in the same order.
    pub fn same_layout(&self, other: &ParamGroup) -> bool {
        self.names == other.names
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.shape() == b.shape())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let mut group = ParamGroup::new();
        group
            .push("w", Tensor::row_vector(&[1.0, 2.0]).unwrap())
            .unwrap();
        for _ in 0..2 {
            let mut tape = Tape::new();
            let vars = group.bind(&mut tape);
            let sq = tape.square(vars[0]).unwrap();
            let loss = tape.sum(sq).unwrap();
            group.backward(&tape, loss, &vars).unwrap();
        }
        assert_eq!(group.grad("w").unwrap().data(), &[4.0, 8.0]);
        group.zero_grad();
        assert!(group.grad("w").unwrap().data().iter().all(|&g| g == 0.0));
        assert_eq!(group.grads()[0].shape(), group.values()[0].shape());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut group = ParamGroup::new();
        group.push("w", Tensor::zeros(1, 1)).unwrap();
        assert!(group.push("w", Tensor::zeros(1, 1)).is_err());
    }

    #[test]
    fn weight_init_range() {
        let mut rng = SeededRng::new(3);
        let mut group = ParamGroup::new();
        group.push_weight("w", 16, 8, &mut rng).unwrap();
        let k = 0.25;
        assert!(group.get("w").unwrap().data().iter().all(|v| v.abs() <= k));
    }
}
