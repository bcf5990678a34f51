//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation of one forward pass. Nodes are
//! appended in evaluation order, so a single reverse sweep from the loss
//! visits each node after all of its consumers. The tape is rebuilt for
//! every training step.
//!
//! ```
//! use ocan::tape::Tape;
//! use ocan::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Tensor::row_vector(&[1.0, 2.0]).unwrap());
//! let sq = tape.square(w).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap().data(), &[2.0, 4.0]);
//! ```

use crate::error::{OcanError, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    SumCols(Var),
    RowNorms(Var),
    RowSoftmax(Var),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    SliceRows(Var, usize),
    Column(Var, usize),
    Transpose(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that required them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn accumulate(slot: &mut Option<Tensor>, delta: Tensor) -> Result<()> {
    match slot {
        Some(g) => *g = g.add(&delta)?,
        None => *slot = Some(delta),
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn unary(&mut self, a: Var, op: Op, value: Tensor) -> Var {
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, value: Tensor) -> Var {
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    /// A differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Const, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, Op::MatMul(a, b), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.binary(a, b, Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.binary(a, b, Op::Sub(a, b), value))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        Ok(self.binary(a, b, Op::Mul(a, b), value))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).div(self.value(b))?;
        Ok(self.binary(a, b, Op::Div(a, b), value))
    }

    /// Broadcast-adds a `1 x n` row to each row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = self.value(a).add_row(self.value(bias))?;
        Ok(self.binary(a, bias, Op::AddRow(a, bias), value))
    }

    /// Scales row `i` of `a` by entry `i` of the column `col`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let value = self.value(a).mul_col(self.value(col))?;
        Ok(self.binary(a, col, Op::MulCol(a, col), value))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let value = self.value(a).scale(k)?;
        Ok(self.unary(a, Op::Scale(a, k), value))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        let value = self.value(a).add_scalar(k)?;
        Ok(self.unary(a, Op::AddScalar(a), value))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let n = self.neg(a)?;
        self.add_scalar(n, 1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).sigmoid()?;
        Ok(self.unary(a, Op::Sigmoid(a), value))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).tanh()?;
        Ok(self.unary(a, Op::Tanh(a), value))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).relu()?;
        Ok(self.unary(a, Op::Relu(a), value))
    }

    /// Natural log; errors on non-positive entries.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).ln()?;
        Ok(self.unary(a, Op::Log(a), value))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).square()?;
        Ok(self.unary(a, Op::Square(a), value))
    }

    /// Clamp into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let value = self.value(a).clamp(lo, hi)?;
        Ok(self.unary(a, Op::Clamp(a, lo, hi), value))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum())?;
        Ok(self.unary(a, Op::Sum(a), value))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).mean()?)?;
        Ok(self.unary(a, Op::Mean(a), value))
    }

    /// Column means (`B x n` to `1 x n`).
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).mean_rows()?;
        Ok(self.unary(a, Op::MeanRows(a), value))
    }

    /// Row sums (`B x n` to `B x 1`).
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).sum_cols();
        Ok(self.unary(a, Op::SumCols(a), value))
    }

    /// Row L2 norms (`B x n` to `B x 1`).
    pub fn row_norms(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).row_norms();
        Ok(self.unary(a, Op::RowNorms(a), value))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).row_softmax()?;
        Ok(self.unary(a, Op::RowSoftmax(a), value))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_cols(self.value(b))?;
        Ok(self.binary(a, b, Op::ConcatCols(a, b), value))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_rows(self.value(b))?;
        Ok(self.binary(a, b, Op::ConcatRows(a, b), value))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_rows(start, end)?;
        Ok(self.unary(a, Op::SliceRows(a, start), value))
    }

    pub fn column(&mut self, a: Var, c: usize) -> Result<Var> {
        let value = self.value(a).column(c)?;
        Ok(self.unary(a, Op::Column(a, c), value))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        Ok(self.unary(a, Op::Transpose(a), value))
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// Reverse sweep from a `1 x 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(OcanError::NotScalar(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0)?);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        let y = &node.value;
        macro_rules! send {
            ($v:expr, $delta:expr) => {
                if self.rg($v) {
                    let d = $delta;
                    accumulate(&mut grads[$v.0], d)?;
                }
            };
        }
        match node.op {
            Op::Leaf | Op::Const => {}
            Op::MatMul(a, b) => {
                send!(a, g.matmul_nt(val(b))?);
                send!(b, val(a).matmul_tn(g)?);
            }
            Op::Add(a, b) => {
                send!(a, g.clone());
                send!(b, g.clone());
            }
            Op::Sub(a, b) => {
                send!(a, g.clone());
                send!(b, g.scale(-1.0)?);
            }
            Op::Mul(a, b) => {
                send!(a, g.mul(val(b))?);
                send!(b, g.mul(val(a))?);
            }
            Op::Div(a, b) => {
                send!(a, g.div(val(b))?);
                send!(b, {
                    let bv = val(b);
                    let num = g.mul(val(a))?;
                    num.div(&bv.square()?)?.scale(-1.0)?
                });
            }
            Op::AddRow(a, b) => {
                send!(a, g.clone());
                send!(b, {
                    let s = g.transpose().sum_cols();
                    Tensor::from_vec(1, g.cols(), s.into_data())?
                });
            }
            Op::MulCol(a, c) => {
                send!(a, g.mul_col(val(c))?);
                send!(c, g.mul(val(a))?.sum_cols());
            }
            Op::Scale(a, k) => send!(a, g.scale(k)?),
            Op::AddScalar(a) => send!(a, g.clone()),
            Op::Sigmoid(a) => send!(a, {
                let dy = y.map("sigmoid'", |s| s * (1.0 - s))?;
                g.mul(&dy)?
            }),
            Op::Tanh(a) => send!(a, {
                let dy = y.map("tanh'", |t| 1.0 - t * t)?;
                g.mul(&dy)?
            }),
            Op::Relu(a) => send!(a, {
                let mask = val(a).map("relu'", |x| if x > 0.0 { 1.0 } else { 0.0 })?;
                g.mul(&mask)?
            }),
            Op::Log(a) => send!(a, g.div(val(a))?),
            Op::Square(a) => send!(a, g.mul(&val(a).scale(2.0)?)?),
            Op::Clamp(a, lo, hi) => send!(a, {
                let mask =
                    val(a).map("clamp'", |x| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 })?;
                g.mul(&mask)?
            }),
            Op::Sum(a) => send!(a, {
                let (r, c) = val(a).shape();
                Tensor::filled(r, c, g.item()?)?
            }),
            Op::Mean(a) => send!(a, {
                let (r, c) = val(a).shape();
                Tensor::filled(r, c, g.item()? / (r * c) as f64)?
            }),
            Op::MeanRows(a) => send!(a, {
                let (r, c) = val(a).shape();
                let scaled = g.scale(1.0 / r as f64)?;
                let mut data = Vec::with_capacity(r * c);
                for _ in 0..r {
                    data.extend_from_slice(scaled.data());
                }
                Tensor::from_vec(r, c, data)?
            }),
            Op::SumCols(a) => send!(a, {
                let (r, c) = val(a).shape();
                Tensor::filled(r, c, 1.0)?.mul_col(g)?
            }),
            Op::RowNorms(a) => send!(a, {
                let x = val(a);
                let coeff: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&g, &n)| if n > 0.0 { g / n } else { 0.0 })
                    .collect();
                let coeff = Tensor::from_vec(g.rows(), 1, coeff)?;
                x.mul_col(&coeff)?
            }),
            Op::RowSoftmax(a) => send!(a, {
                let dot = g.mul(y)?.sum_cols();
                let (r, c) = y.shape();
                let shifted = g.sub(&Tensor::filled(r, c, 1.0)?.mul_col(&dot)?)?;
                shifted.mul(y)?
            }),
            Op::ConcatCols(a, b) => {
                let ca = val(a).cols();
                let (r, c) = g.shape();
                let mut ga = Vec::with_capacity(r * ca);
                let mut gb = Vec::with_capacity(r * (c - ca));
                for row in g.row_iter() {
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                send!(a, Tensor::from_vec(r, ca, ga)?);
                send!(b, Tensor::from_vec(r, c - ca, gb)?);
            }
            Op::ConcatRows(a, b) => {
                let ra = val(a).rows();
                send!(a, g.slice_rows(0, ra)?);
                send!(b, g.slice_rows(ra, g.rows())?);
            }
            Op::SliceRows(a, start) => send!(a, {
                let (r, c) = val(a).shape();
                let mut data = vec![0.0; r * c];
                data[start * c..start * c + g.len()].copy_from_slice(g.data());
                Tensor::from_vec(r, c, data)?
            }),
            Op::Column(a, col) => send!(a, {
                let (r, c) = val(a).shape();
                let mut data = vec![0.0; r * c];
                for (i, gv) in g.data().iter().enumerate() {
                    data[i * c + col] = *gv;
                }
                Tensor::from_vec(r, c, data)?
            }),
            Op::Transpose(a) => send!(a, g.transpose()),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::row_vector(&[1.0, 2.0]).unwrap());
        let sq = tape.square(w).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(0.0).unwrap());
        let s = tape.sigmoid(w).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(w).unwrap().item().unwrap(), 0.25);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::row_vector(&[1.0, 2.0]).unwrap());
        assert!(matches!(
            tape.backward(w),
            Err(OcanError::NotScalar((1, 2)))
        ));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(3.0).unwrap());
        let c = tape.constant(Tensor::scalar(2.0).unwrap());
        let p = tape.mul(w, c).unwrap();
        let grads = tape.backward(p).unwrap();
        assert_eq!(grads.get(w).unwrap().item().unwrap(), 2.0);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn reused_node_accumulates() {
        // loss = w*w + w  =>  d/dw = 2w + 1
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(1.5).unwrap());
        let ww = tape.mul(w, w).unwrap();
        let loss = tape.add(ww, w).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().item().unwrap(), 4.0);
    }

    #[test]
    fn log_domain_error_propagates() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(-1.0).unwrap());
        assert!(matches!(tape.log(w), Err(OcanError::LogDomain { .. })));
    }
}
