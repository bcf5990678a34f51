//! Single-layer LSTM cell.
//!
//! Gate order everywhere is cell candidate, input, forget, output. Inputs
//! are row-major batches, so the preactivation of each gate is
//! `x · W + h · U + b` with `W: input x hidden`, `U: hidden x hidden`.

use serde::{Deserialize, Serialize};

use crate::error::{OcanError, Result};
use crate::params::ParamGroup;
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

const GATES: [&str; 4] = ["c", "i", "f", "o"];
const FORGET: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    input: usize,
    hidden: usize,
    pub group: ParamGroup,
}

/// Hidden and cell state for a batch (`rows x hidden` each).
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Tensor::zeros(batch, hidden),
            c: Tensor::zeros(batch, hidden),
        }
    }
}

impl LstmParams {
    /// Uniform weights, zero biases except the forget gate at 1.0.
    pub fn new(input: usize, hidden: usize, rng: &mut SeededRng) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(OcanError::InvalidArgument(format!(
                "LSTM widths must be positive, got input {input} hidden {hidden}"
            )));
        }
        let mut group = ParamGroup::new();
        for g in GATES {
            group.push_weight(format!("w_{g}"), input, hidden, rng)?;
        }
        for g in GATES {
            group.push_weight(format!("u_{g}"), hidden, hidden, rng)?;
        }
        for (k, g) in GATES.iter().enumerate() {
            let init = if k == FORGET { 1.0 } else { 0.0 };
            group.push_bias(format!("b_{g}"), hidden, init)?;
        }
        Ok(Self {
            input,
            hidden,
            group,
        })
    }

    /// All-zero parameters.
    pub fn zeros(input: usize, hidden: usize) -> Result<Self> {
        let mut p = Self::new(input, hidden, &mut SeededRng::new(0))?;
        p.group.zero_values();
        Ok(p)
    }

    pub fn from_group(input: usize, hidden: usize, group: ParamGroup) -> Result<Self> {
        let reference = Self::zeros(input, hidden)?;
        if !reference.group.same_layout(&group) {
            return Err(OcanError::Checkpoint(format!(
                "LSTM parameter layout does not match input {input} hidden {hidden}"
            )));
        }
        Ok(Self {
            input,
            hidden,
            group,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    fn w(&self, k: usize) -> &Tensor {
        self.group.value_at(k)
    }

    fn u(&self, k: usize) -> &Tensor {
        self.group.value_at(4 + k)
    }

    fn b(&self, k: usize) -> &Tensor {
        self.group.value_at(8 + k)
    }

    fn check_widths(&self, x: &Tensor, prev: &LstmState) -> Result<()> {
        if x.cols() != self.input {
            return Err(OcanError::ShapeMismatch {
                op: "lstm_step input",
                lhs: x.shape(),
                rhs: (x.rows(), self.input),
            });
        }
        for s in [&prev.h, &prev.c] {
            if s.shape() != (x.rows(), self.hidden) {
                return Err(OcanError::ShapeMismatch {
                    op: "lstm_step state",
                    lhs: s.shape(),
                    rhs: (x.rows(), self.hidden),
                });
            }
        }
        Ok(())
    }
}

/// One LSTM update on plain tensors.
pub fn lstm_step(params: &LstmParams, x: &Tensor, prev: &LstmState) -> Result<LstmState> {
    params.check_widths(x, prev)?;
    let pre = |k: usize| -> Result<Tensor> {
        x.matmul(params.w(k))?
            .add(&prev.h.matmul(params.u(k))?)?
            .add_row(params.b(k))
    };
    let cand = pre(0)?.tanh()?;
    let input = pre(1)?.sigmoid()?;
    let forget = pre(2)?.sigmoid()?;
    let output = pre(3)?.sigmoid()?;
    let c = input.mul(&cand)?.add(&forget.mul(&prev.c)?)?;
    let h = output.mul(&c.tanh()?)?;
    Ok(LstmState { h, c })
}

/// LSTM parameters bound to a tape.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    w: [Var; 4],
    u: [Var; 4],
    b: [Var; 4],
}

impl LstmVars {
    pub fn new(vars: &[Var]) -> Result<Self> {
        if vars.len() != 12 {
            return Err(OcanError::InvalidArgument(format!(
                "expected 12 LSTM parameter vars, got {}",
                vars.len()
            )));
        }
        let pick = |o: usize| [vars[o], vars[o + 1], vars[o + 2], vars[o + 3]];
        Ok(Self {
            w: pick(0),
            u: pick(4),
            b: pick(8),
        })
    }

    /// Tape version of [`lstm_step`]; identical arithmetic order.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let pre = |tape: &mut Tape, k: usize| -> Result<Var> {
            let xw = tape.matmul(x, self.w[k])?;
            let hu = tape.matmul(h, self.u[k])?;
            let s = tape.add(xw, hu)?;
            tape.add_row(s, self.b[k])
        };
        let p0 = pre(tape, 0)?;
        let cand = tape.tanh(p0)?;
        let p1 = pre(tape, 1)?;
        let input = tape.sigmoid(p1)?;
        let p2 = pre(tape, 2)?;
        let forget = tape.sigmoid(p2)?;
        let p3 = pre(tape, 3)?;
        let output = tape.sigmoid(p3)?;
        let ic = tape.mul(input, cand)?;
        let fc = tape.mul(forget, c)?;
        let c_new = tape.add(ic, fc)?;
        let tc = tape.tanh(c_new)?;
        let h_new = tape.mul(output, tc)?;
        Ok((h_new, c_new))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::GradCheck;

    #[test]
    fn zero_params_give_zero_state() {
        let p = LstmParams::zeros(4, 3).unwrap();
        let x = Tensor::row_vector(&[1.0, 0.0, 1.0, 1.0]).unwrap();
        let s = lstm_step(&p, &x, &LstmState::zeros(1, 3)).unwrap();
        assert!(s.h.data().iter().chain(s.c.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut p = LstmParams::zeros(2, 3).unwrap();
        p.group
            .set("b_f", Tensor::filled(1, 3, 10.0).unwrap())
            .unwrap();
        let prev = LstmState {
            h: Tensor::zeros(1, 3),
            c: Tensor::filled(1, 3, 1.0).unwrap(),
        };
        let s = lstm_step(&p, &Tensor::row_vector(&[1.0, 1.0]).unwrap(), &prev).unwrap();
        // sigmoid(10) = 0.9999546; candidate is tanh(0) = 0.
        for &c in s.c.data() {
            assert!((c - 0.999_954_6).abs() < 1e-7, "{c}");
        }
    }

    #[test]
    fn tape_step_matches_plain_step() {
        let mut rng = SeededRng::new(4);
        let p = LstmParams::new(3, 5, &mut rng).unwrap();
        let x = Tensor::from_vec(2, 3, (0..6).map(|i| i as f64 * 0.3 - 0.7).collect()).unwrap();
        let prev = LstmState {
            h: Tensor::from_vec(
                2,
                5,
                (0..10).map(|i| (i as f64 * 0.17).sin() * 0.5).collect(),
            )
            .unwrap(),
            c: Tensor::from_vec(2, 5, (0..10).map(|i| (i as f64 * 0.23).cos()).collect()).unwrap(),
        };
        let plain = lstm_step(&p, &x, &prev).unwrap();
        let mut tape = Tape::new();
        let vars = LstmVars::new(&p.group.bind(&mut tape)).unwrap();
        let (xv, hv, cv) = (
            tape.constant(x.clone()),
            tape.constant(prev.h.clone()),
            tape.constant(prev.c.clone()),
        );
        let (h, c) = vars.step(&mut tape, xv, hv, cv).unwrap();
        assert_eq!(tape.value(h), &plain.h);
        assert_eq!(tape.value(c), &plain.c);
    }

    #[test]
    fn step_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(9);
        let p = LstmParams::new(4, 6, &mut rng).unwrap();
        let x = Tensor::from_vec(3, 4, (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let h0 = Tensor::from_vec(3, 6, (0..18).map(|_| rng.uniform(-0.5, 0.5)).collect()).unwrap();
        let c0 = Tensor::from_vec(3, 6, (0..18).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let report = GradCheck::default()
            .run(&p.group, |tape, vars| {
                let lv = LstmVars::new(vars)?;
                let (xv, hv, cv) = (
                    tape.constant(x.clone()),
                    tape.constant(h0.clone()),
                    tape.constant(c0.clone()),
                );
                let (h, _) = lv.step(tape, xv, hv, cv)?;
                tape.sum(h)
            })
            .unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.coordinates_checked, 4 * 24 + 4 * 36 + 4 * 6);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let p = LstmParams::zeros(4, 3).unwrap();
        let x = Tensor::row_vector(&[1.0, 0.0]).unwrap();
        assert!(lstm_step(&p, &x, &LstmState::zeros(1, 3)).is_err());
    }
}
