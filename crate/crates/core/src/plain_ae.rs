//! Single-hidden-layer autoencoder for fixed-width instances.
//!
//! Encoder: `tanh(x · W_enc + b_enc)`; decoder: `v · W_dec + b_dec`.

use serde::{Deserialize, Serialize};

use crate::data::minibatches;
use crate::error::{OcanError, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::params::ParamGroup;
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainAeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for PlainAeConfig {
    fn default() -> Self {
        Self {
            hidden: 50,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainAutoencoder {
    pub group: ParamGroup,
}

impl PlainAutoencoder {
    pub fn new(input: usize, hidden: usize, rng: &mut SeededRng) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(OcanError::InvalidArgument(
                "autoencoder widths must be positive".into(),
            ));
        }
        let mut group = ParamGroup::new();
        group.push_weight("w_enc", input, hidden, rng)?;
        group.push_bias("b_enc", hidden, 0.0)?;
        group.push_weight("w_dec", hidden, input, rng)?;
        group.push_bias("b_dec", input, 0.0)?;
        Ok(Self { group })
    }

    pub fn zeros(input: usize, hidden: usize) -> Result<Self> {
        let mut p = Self::new(input, hidden, &mut SeededRng::new(0))?;
        p.group.zero_values();
        Ok(p)
    }

    pub fn from_group(group: ParamGroup) -> Result<Self> {
        let names: Vec<&str> = group.names().iter().map(String::as_str).collect();
        if names != ["w_enc", "b_enc", "w_dec", "b_dec"] {
            return Err(OcanError::Checkpoint(format!(
                "unexpected plain autoencoder layout {names:?}"
            )));
        }
        let v = group.values();
        let (input, hidden) = v[0].shape();
        if v[1].shape() != (1, hidden)
            || v[2].shape() != (hidden, input)
            || v[3].shape() != (1, input)
        {
            return Err(OcanError::Checkpoint(
                "plain autoencoder shapes are inconsistent".into(),
            ));
        }
        Ok(Self { group })
    }

    pub fn input_width(&self) -> usize {
        self.group.value_at(0).rows()
    }

    pub fn hidden_width(&self) -> usize {
        self.group.value_at(0).cols()
    }

    /// `N x input` to `N x hidden`; entries in `(-1, 1)`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(self.group.value_at(0))?
            .add_row(self.group.value_at(1))?
            .tanh()
    }

    pub fn decode(&self, v: &Tensor) -> Result<Tensor> {
        v.matmul(self.group.value_at(2))?
            .add_row(self.group.value_at(3))
    }

    /// Mean over rows of the per-instance summed squared error.
    pub fn loss(&self, x: &Tensor) -> Result<f64> {
        let recon = self.decode(&self.encode(x)?)?;
        Ok(recon.sub(x)?.square()?.sum() / x.rows() as f64)
    }
}

/// Tape version of [`PlainAutoencoder::loss`].
pub fn plain_loss_on_tape(tape: &mut Tape, vars: &[Var], x: &Tensor) -> Result<Var> {
    let xv = tape.constant(x.clone());
    let pre = tape.linear(xv, vars[0], vars[1])?;
    let v = tape.tanh(pre)?;
    let recon = tape.linear(v, vars[2], vars[3])?;
    let diff = tape.sub(recon, xv)?;
    let sq = tape.square(diff)?;
    let s = tape.sum(sq)?;
    tape.scale(s, 1.0 / x.rows() as f64)
}

#[derive(Clone, Debug)]
pub struct TrainedPlainAutoencoder {
    pub params: PlainAutoencoder,
    pub epoch_losses: Vec<f64>,
}

pub fn train_plain_autoencoder(
    data: &Tensor,
    config: &PlainAeConfig,
) -> Result<TrainedPlainAutoencoder> {
    if data.rows() == 0 {
        return Err(OcanError::Empty("training instances"));
    }
    let mut init_rng = SeededRng::derive(config.seed, 1);
    let mut shuffle_rng = SeededRng::derive(config.seed, 2);
    let mut params = PlainAutoencoder::new(data.cols(), config.hidden, &mut init_rng)?;
    let mut adam = AdamState::new(&params.group, config.adam);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for batch in minibatches(data.rows(), config.batch_size, &mut shuffle_rng) {
            let x = data.gather_rows(&batch)?;
            params.group.zero_grad();
            let mut tape = Tape::new();
            let vars = params.group.bind(&mut tape);
            let loss =
                plain_loss_on_tape(&mut tape, &vars, &x).map_err(|_| OcanError::Diverged {
                    epoch,
                    what: "plain autoencoder loss",
                })?;
            total += tape.value(loss).item()? * batch.len() as f64;
            params.group.backward(&tape, loss, &vars)?;
            adam.step(&mut params.group)?;
        }
        epoch_losses.push(total / data.rows() as f64);
    }
    Ok(TrainedPlainAutoencoder {
        params,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::GradCheck;

    #[test]
    fn zero_params_give_zero_representation() {
        let ae = PlainAutoencoder::zeros(28, 50).unwrap();
        let x = Tensor::filled(3, 28, 0.7).unwrap();
        let v = ae.encode(&x).unwrap();
        assert_eq!(v.shape(), (3, 50));
        assert!(v.data().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn representation_in_open_interval() {
        let ae = PlainAutoencoder::new(5, 7, &mut SeededRng::new(1)).unwrap();
        let x = Tensor::from_vec(2, 5, (0..10).map(|i| i as f64 - 5.0).collect()).unwrap();
        assert!(ae.encode(&x).unwrap().data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let ae = PlainAutoencoder::new(6, 4, &mut SeededRng::new(2)).unwrap();
        let mut rng = SeededRng::new(3);
        let x = Tensor::from_vec(8, 6, (0..48).map(|_| rng.normal()).collect()).unwrap();
        let report = GradCheck::default()
            .run(&ae.group, |tape, vars| plain_loss_on_tape(tape, vars, &x))
            .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn memorizes_a_repeated_vector() {
        let row: Vec<f64> = (0..6).map(|i| (i as f64 * 0.7).sin()).collect();
        let data = Tensor::from_rows(&vec![row; 64]).unwrap();
        let cfg = PlainAeConfig {
            hidden: 8,
            epochs: 40,
            batch_size: 8,
            seed: 5,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
        };
        let trained = train_plain_autoencoder(&data, &cfg).unwrap();
        assert!(
            *trained.epoch_losses.last().unwrap() < 1e-3,
            "{:?}",
            trained.epoch_losses
        );
    }
}
