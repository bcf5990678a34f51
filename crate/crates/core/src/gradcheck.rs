//! Central finite-difference verification of tape gradients.

use crate::error::{OcanError, Result};
use crate::params::ParamGroup;
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|a - n| / max(1, |a|, |n|)` seen.
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates_checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub step: f64,
    pub tolerance: f64,
    /// Tensors larger than this are checked on a seeded coordinate sample.
    pub max_coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_coords_per_tensor: 48,
            seed: 0,
        }
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1f64.max(a.abs()).max(n.abs())
}

impl GradCheck {
    /// Compares tape gradients of `loss_fn` against central differences.
    ///
    /// `loss_fn` receives a fresh tape and the group's bound leaves and must
    /// return a scalar. Anything else it touches is treated as a constant.
    pub fn run<F>(&self, params: &ParamGroup, loss_fn: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        if self.step <= 0.0 {
            return Err(OcanError::InvalidArgument(format!(
                "finite-difference step must be positive, got {}",
                self.step
            )));
        }
        let eval = |group: &ParamGroup| -> Result<f64> {
            let mut tape = Tape::new();
            let vars = group.bind(&mut tape);
            let loss = loss_fn(&mut tape, &vars)?;
            tape.value(loss).item()
        };

        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let loss = loss_fn(&mut tape, &vars)?;
        let base = tape.value(loss).item()?;
        let grads = tape.backward(loss)?;

        let again = eval(params)?;
        if base.to_bits() != again.to_bits() {
            return Err(OcanError::NonDeterministic {
                first: base,
                second: again,
            });
        }

        let mut rng = SeededRng::new(self.seed);
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst_param: String::new(),
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            coordinates_checked: 0,
            tolerance: self.tolerance,
        };
        let mut probe = params.clone();
        for (t, var) in vars.iter().enumerate() {
            let n = params.value_at(t).len();
            let coords: Vec<usize> = if n <= self.max_coords_per_tensor {
                (0..n).collect()
            } else {
                (0..self.max_coords_per_tensor)
                    .map(|_| rng.below(n))
                    .collect()
            };
            let analytic_grad = grads.get(*var);
            for i in coords {
                let original = params.value_at(t).data()[i];
                probe.value_mut(t).data_mut()[i] = original + self.step;
                let plus = eval(&probe)?;
                probe.value_mut(t).data_mut()[i] = original - self.step;
                let minus = eval(&probe)?;
                probe.value_mut(t).data_mut()[i] = original;

                let numeric = (plus - minus) / (2.0 * self.step);
                let analytic = analytic_grad.map_or(0.0, |g| g.data()[i]);
                let err = relative_error(analytic, numeric);
                report.coordinates_checked += 1;
                if err > report.max_rel_error || report.worst_param.is_empty() {
                    report.max_rel_error = err;
                    report.worst_param = params.names()[t].clone();
                    report.worst_index = i;
                    report.analytic = analytic;
                    report.numeric = numeric;
                }
            }
        }
        Ok(report)
    }
}

/// [`GradCheck::run`] with the default coordinate sampling.
pub fn finite_diff_check<F>(
    loss_fn: F,
    params: &ParamGroup,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    GradCheck {
        step,
        tolerance,
        ..GradCheck::default()
    }
    .run(params, loss_fn)
}
