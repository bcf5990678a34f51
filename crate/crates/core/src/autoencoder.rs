//! LSTM autoencoder: variable-length activity sequences to fixed-width user
//! representations and back.
//!
//! The encoder folds an LSTM over the sequence from a zero state and keeps
//! the last hidden vector as the representation `v`. The decoder is a second
//! LSTM that receives `v` as its input at every step (zero initial state),
//! and an affine map with an output nonlinearity turns each decoder hidden
//! state into a reconstructed feature vector.

use serde::{Deserialize, Serialize};

use crate::data::minibatches;
use crate::error::{OcanError, Result};
use crate::lstm::{lstm_step, LstmParams, LstmState, LstmVars};
use crate::optim::{AdamConfig, AdamState};
use crate::params::ParamGroup;
use crate::rng::SeededRng;
use crate::sequence::ActivitySequence;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

/// Nonlinearity applied to reconstructed features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    /// For binary features.
    Sigmoid,
    /// For real-valued features.
    Identity,
}

impl OutputActivation {
    fn apply(self, t: Tensor) -> Result<Tensor> {
        match self {
            OutputActivation::Sigmoid => t.sigmoid(),
            OutputActivation::Identity => Ok(t),
        }
    }

    fn apply_tape(self, tape: &mut Tape, v: Var) -> Result<Var> {
        match self {
            OutputActivation::Sigmoid => tape.sigmoid(v),
            OutputActivation::Identity => Ok(v),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub output: OutputActivation,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            hidden: 200,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
            output: OutputActivation::Sigmoid,
        }
    }
}

/// Fixed-width embedding of one user; every entry lies in `(-1, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRepresentation(Vec<f64>);

impl UserRepresentation {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::row_vector(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    /// `w_out: hidden x input`, `b_out: 1 x input`.
    pub output: ParamGroup,
    pub activation: OutputActivation,
}

impl AutoencoderParams {
    pub fn new(
        input: usize,
        hidden: usize,
        activation: OutputActivation,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let encoder = LstmParams::new(input, hidden, rng)?;
        let decoder = LstmParams::new(hidden, hidden, rng)?;
        let mut output = ParamGroup::new();
        output.push_weight("w_out", hidden, input, rng)?;
        output.push_bias("b_out", input, 0.0)?;
        Ok(Self {
            encoder,
            decoder,
            output,
            activation,
        })
    }

    pub fn zeros(input: usize, hidden: usize, activation: OutputActivation) -> Result<Self> {
        let mut p = Self::new(input, hidden, activation, &mut SeededRng::new(0))?;
        p.encoder.group.zero_values();
        p.decoder.group.zero_values();
        p.output.zero_values();
        Ok(p)
    }

    pub fn input_width(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn hidden_width(&self) -> usize {
        self.encoder.hidden_width()
    }

    fn check_sequence(&self, seq: &ActivitySequence) -> Result<()> {
        if seq.width() != self.input_width() {
            return Err(OcanError::Sequence {
                user: seq.user_id.clone(),
                msg: format!(
                    "feature width {} does not match model input width {}",
                    seq.width(),
                    self.input_width()
                ),
            });
        }
        Ok(())
    }

    fn bind(&self, tape: &mut Tape) -> Result<AeVars> {
        let enc_raw = self.encoder.group.bind(tape);
        let dec_raw = self.decoder.group.bind(tape);
        let out_raw = self.output.bind(tape);
        Ok(AeVars {
            enc: LstmVars::new(&enc_raw)?,
            dec: LstmVars::new(&dec_raw)?,
            w_out: out_raw[0],
            b_out: out_raw[1],
            enc_raw,
            dec_raw,
            out_raw,
        })
    }
}

/// Streaming encoder state for early detection.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStreamState {
    state: LstmState,
    steps: usize,
}

impl EncoderStreamState {
    pub fn new(hidden: usize) -> Self {
        Self {
            state: LstmState::zeros(1, hidden),
            steps: 0,
        }
    }

    pub fn steps_consumed(&self) -> usize {
        self.steps
    }

    /// Representation of the prefix consumed so far.
    pub fn representation(&self) -> UserRepresentation {
        UserRepresentation(self.state.h.data().to_vec())
    }
}

/// Applies one encoder step to a streaming state.
pub fn stream_encode(
    params: &AutoencoderParams,
    state: &EncoderStreamState,
    x_t: &[f64],
) -> Result<EncoderStreamState> {
    if x_t.len() != params.input_width() {
        return Err(OcanError::ShapeMismatch {
            op: "stream_encode",
            lhs: (1, x_t.len()),
            rhs: (1, params.input_width()),
        });
    }
    if state.state.h.cols() != params.hidden_width() {
        return Err(OcanError::ShapeMismatch {
            op: "stream_encode state",
            lhs: state.state.h.shape(),
            rhs: (1, params.hidden_width()),
        });
    }
    let x = Tensor::row_vector(x_t)?;
    Ok(EncoderStreamState {
        state: lstm_step(&params.encoder, &x, &state.state)?,
        steps: state.steps + 1,
    })
}

/// Final encoder hidden state of the whole sequence.
pub fn encode_sequence(
    params: &AutoencoderParams,
    seq: &ActivitySequence,
) -> Result<UserRepresentation> {
    params.check_sequence(seq)?;
    let mut state = EncoderStreamState::new(params.hidden_width());
    for t in 0..seq.len() {
        state = stream_encode(params, &state, seq.step(t))?;
    }
    Ok(state.representation())
}

/// Encodes every sequence into one `N x hidden` matrix.
pub fn encode_corpus(params: &AutoencoderParams, seqs: &[ActivitySequence]) -> Result<Tensor> {
    if seqs.is_empty() {
        return Err(OcanError::Empty("no sequences to encode"));
    }
    let rows = seqs
        .iter()
        .map(|s| encode_sequence(params, s).map(|v| v.0))
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

/// Reconstructs `len` feature vectors from a representation.
pub fn decode_sequence(
    params: &AutoencoderParams,
    v: &UserRepresentation,
    len: usize,
) -> Result<Tensor> {
    if len == 0 {
        return Err(OcanError::InvalidArgument(
            "decode length must be at least 1".into(),
        ));
    }
    let v = v.to_tensor()?;
    if v.cols() != params.hidden_width() {
        return Err(OcanError::ShapeMismatch {
            op: "decode_sequence",
            lhs: v.shape(),
            rhs: (1, params.hidden_width()),
        });
    }
    let w_out = params.output.value_at(0);
    let b_out = params.output.value_at(1);
    let mut state = LstmState::zeros(1, params.hidden_width());
    let mut rows = Vec::with_capacity(len);
    for _ in 0..len {
        state = lstm_step(&params.decoder, &v, &state)?;
        let out = params
            .activation
            .apply(state.h.matmul(w_out)?.add_row(b_out)?)?;
        rows.push(out.into_data());
    }
    Tensor::from_rows(&rows)
}

/// Sum over steps and features of the squared reconstruction error.
pub fn reconstruction_loss(reconstructed: &Tensor, target: &Tensor) -> Result<f64> {
    if reconstructed.shape() != target.shape() {
        return Err(OcanError::ShapeMismatch {
            op: "reconstruction_loss",
            lhs: reconstructed.shape(),
            rhs: target.shape(),
        });
    }
    Ok(reconstructed.sub(target)?.square()?.sum())
}

/// Encode then decode at the original length.
pub fn reconstruct(params: &AutoencoderParams, seq: &ActivitySequence) -> Result<Tensor> {
    let v = encode_sequence(params, seq)?;
    decode_sequence(params, &v, seq.len())
}

pub(crate) struct AeVars {
    enc: LstmVars,
    dec: LstmVars,
    w_out: Var,
    b_out: Var,
    enc_raw: Vec<Var>,
    dec_raw: Vec<Var>,
    out_raw: Vec<Var>,
}

/// Mean over the batch of each user's summed reconstruction error, recorded
/// on the tape.
///
/// Sequences are sorted by decreasing length so that the users still active
/// at step `t` form a prefix of the rows; finished users drop out and no
/// padded step enters the loss.
fn batch_loss(
    params: &AutoencoderParams,
    tape: &mut Tape,
    vars: &AeVars,
    seqs: &[&ActivitySequence],
) -> Result<Var> {
    if seqs.is_empty() {
        return Err(OcanError::Empty("autoencoder minibatch"));
    }
    let mut sorted: Vec<&ActivitySequence> = seqs.to_vec();
    sorted.sort_by(|a, b| b.len().cmp(&a.len()));
    let batch = sorted.len();
    let hidden = params.hidden_width();
    let max_len = sorted[0].len();
    let active = |t: usize| sorted.iter().take_while(|s| s.len() > t).count();

    let mut inputs = Vec::with_capacity(max_len);
    for t in 0..max_len {
        let n = active(t);
        let mut data = Vec::with_capacity(n * params.input_width());
        for s in &sorted[..n] {
            data.extend_from_slice(s.step(t));
        }
        inputs.push(Tensor::from_vec(n, params.input_width(), data)?);
    }

    let mut h = tape.constant(Tensor::zeros(batch, hidden));
    let mut c = tape.constant(Tensor::zeros(batch, hidden));
    let mut rows = batch;
    let mut finished = Vec::new();
    for (t, x) in inputs.iter().enumerate() {
        let n = active(t);
        if n < rows {
            finished.push(tape.slice_rows(h, n, rows)?);
            h = tape.slice_rows(h, 0, n)?;
            c = tape.slice_rows(c, 0, n)?;
            rows = n;
        }
        let xv = tape.constant(x.clone());
        (h, c) = vars.enc.step(tape, xv, h, c)?;
    }
    finished.push(h);
    let mut v = finished.pop().expect("at least one chunk");
    while let Some(chunk) = finished.pop() {
        v = tape.concat_rows(v, chunk)?;
    }

    let mut h = tape.constant(Tensor::zeros(batch, hidden));
    let mut c = tape.constant(Tensor::zeros(batch, hidden));
    let mut rows = batch;
    let mut total: Option<Var> = None;
    for (t, x) in inputs.iter().enumerate() {
        let n = active(t);
        if n < rows {
            h = tape.slice_rows(h, 0, n)?;
            c = tape.slice_rows(c, 0, n)?;
            v = tape.slice_rows(v, 0, n)?;
            rows = n;
        }
        (h, c) = vars.dec.step(tape, v, h, c)?;
        let lin = tape.linear(h, vars.w_out, vars.b_out)?;
        let out = params.activation.apply_tape(tape, lin)?;
        let target = tape.constant(x.clone());
        let diff = tape.sub(out, target)?;
        let sq = tape.square(diff)?;
        let s = tape.sum(sq)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, s)?,
            None => s,
        });
    }
    tape.scale(total.expect("max_len >= 1"), 1.0 / batch as f64)
}

/// Mean per-user reconstruction loss of a minibatch, with gradients
/// accumulated into all three parameter groups.
pub fn minibatch_loss_and_grads(
    params: &mut AutoencoderParams,
    seqs: &[&ActivitySequence],
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape)?;
    let loss = batch_loss(params, &mut tape, &vars, seqs)?;
    let value = tape.value(loss).item()?;
    let grads = tape.backward(loss)?;
    params.encoder.group.accumulate(&grads, &vars.enc_raw)?;
    params.decoder.group.accumulate(&grads, &vars.dec_raw)?;
    params.output.accumulate(&grads, &vars.out_raw)?;
    Ok(value)
}

/// Minibatch loss on the tape for gradient checking one parameter group.
/// `which` selects the differentiated group: 0 encoder, 1 decoder, 2 output.
pub fn minibatch_loss_on_tape(
    params: &AutoencoderParams,
    which: usize,
    tape: &mut Tape,
    bound: &[Var],
    seqs: &[&ActivitySequence],
) -> Result<Var> {
    let enc_raw = if which == 0 {
        bound.to_vec()
    } else {
        params.encoder.group.bind_frozen(tape)
    };
    let dec_raw = if which == 1 {
        bound.to_vec()
    } else {
        params.decoder.group.bind_frozen(tape)
    };
    let out_raw = if which == 2 {
        bound.to_vec()
    } else {
        params.output.bind_frozen(tape)
    };
    let vars = AeVars {
        enc: LstmVars::new(&enc_raw)?,
        dec: LstmVars::new(&dec_raw)?,
        w_out: out_raw[0],
        b_out: out_raw[1],
        enc_raw,
        dec_raw,
        out_raw,
    };
    batch_loss(params, tape, &vars, seqs)
}

#[derive(Clone, Debug)]
pub struct TrainedAutoencoder {
    pub params: AutoencoderParams,
    /// Mean per-user reconstruction loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn check_corpus_width(corpus: &[ActivitySequence]) -> Result<usize> {
    let first = corpus.first().ok_or(OcanError::Empty("training corpus"))?;
    let width = first.width();
    if let Some(bad) = corpus.iter().find(|s| s.width() != width) {
        return Err(OcanError::Sequence {
            user: bad.user_id.clone(),
            msg: format!(
                "feature width {} differs from corpus width {width}",
                bad.width()
            ),
        });
    }
    Ok(width)
}

pub fn train_autoencoder(
    corpus: &[ActivitySequence],
    config: &AeConfig,
) -> Result<TrainedAutoencoder> {
    let width = check_corpus_width(corpus)?;
    if config.batch_size == 0 || config.hidden == 0 {
        return Err(OcanError::InvalidArgument(
            "batch size and hidden width must be positive".into(),
        ));
    }
    let mut init_rng = SeededRng::derive(config.seed, STREAM_INIT);
    let mut shuffle_rng = SeededRng::derive(config.seed, STREAM_SHUFFLE);
    let mut params = AutoencoderParams::new(width, config.hidden, config.output, &mut init_rng)?;
    let mut adam_enc = AdamState::new(&params.encoder.group, config.adam);
    let mut adam_dec = AdamState::new(&params.decoder.group, config.adam);
    let mut adam_out = AdamState::new(&params.output, config.adam);

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for batch in minibatches(corpus.len(), config.batch_size, &mut shuffle_rng) {
            let seqs: Vec<&ActivitySequence> = batch.iter().map(|&i| &corpus[i]).collect();
            params.encoder.group.zero_grad();
            params.decoder.group.zero_grad();
            params.output.zero_grad();
            let loss = minibatch_loss_and_grads(&mut params, &seqs).map_err(|e| match e {
                OcanError::NonFinite { .. } => OcanError::Diverged {
                    epoch,
                    what: "autoencoder loss",
                },
                other => other,
            })?;
            total += loss * seqs.len() as f64;
            adam_enc.step(&mut params.encoder.group)?;
            adam_dec.step(&mut params.decoder.group)?;
            adam_out.step(&mut params.output)?;
        }
        let mean = total / corpus.len() as f64;
        if !mean.is_finite() {
            return Err(OcanError::Diverged {
                epoch,
                what: "autoencoder loss",
            });
        }
        epoch_losses.push(mean);
    }
    Ok(TrainedAutoencoder {
        params,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::GradCheck;

    fn random_seq(rng: &mut SeededRng, id: &str, len: usize, width: usize) -> ActivitySequence {
        let steps: Vec<Vec<f64>> = (0..len)
            .map(|_| {
                (0..width)
                    .map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        ActivitySequence::from_steps(id, &steps).unwrap()
    }

    #[test]
    fn zero_params_encode_to_zero() {
        let p = AutoencoderParams::zeros(4, 5, OutputActivation::Sigmoid).unwrap();
        let seq = random_seq(&mut SeededRng::new(1), "u", 6, 4);
        let v = encode_sequence(&p, &seq).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_decoder_outputs_half() {
        let p = AutoencoderParams::zeros(4, 5, OutputActivation::Sigmoid).unwrap();
        let out = decode_sequence(&p, &UserRepresentation::new(vec![0.3; 5]), 7).unwrap();
        assert_eq!(out.shape(), (7, 4));
        assert!(out.data().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn decode_lengths() {
        let p = AutoencoderParams::new(4, 5, OutputActivation::Sigmoid, &mut SeededRng::new(2))
            .unwrap();
        let v = UserRepresentation::new(vec![0.1; 5]);
        for len in [1, 7, 50] {
            assert_eq!(decode_sequence(&p, &v, len).unwrap().rows(), len);
        }
        assert!(decode_sequence(&p, &v, 0).is_err());
    }

    #[test]
    fn length_one_sequence_is_one_step() {
        let p = AutoencoderParams::new(4, 5, OutputActivation::Sigmoid, &mut SeededRng::new(3))
            .unwrap();
        let seq = random_seq(&mut SeededRng::new(4), "u", 1, 4);
        let v = encode_sequence(&p, &seq).unwrap();
        let s = lstm_step(&p.encoder, seq.steps(), &LstmState::zeros(1, 5)).unwrap();
        assert_eq!(v.values(), s.h.data());
    }

    #[test]
    fn stream_prefixes_match_batch_encoding() {
        let p = AutoencoderParams::new(4, 6, OutputActivation::Sigmoid, &mut SeededRng::new(5))
            .unwrap();
        let seq = random_seq(&mut SeededRng::new(6), "u", 12, 4);
        let mut state = EncoderStreamState::new(6);
        for k in 1..=seq.len() {
            state = stream_encode(&p, &state, seq.step(k - 1)).unwrap();
            assert_eq!(state.steps_consumed(), k);
            let direct = encode_sequence(&p, &seq.prefix(k).unwrap()).unwrap();
            assert_eq!(state.representation(), direct);
        }
    }

    #[test]
    fn representation_is_bounded() {
        let p = AutoencoderParams::new(4, 8, OutputActivation::Sigmoid, &mut SeededRng::new(7))
            .unwrap();
        let seq = random_seq(&mut SeededRng::new(8), "u", 30, 4);
        let v = encode_sequence(&p, &seq).unwrap();
        assert!(v.values().iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn reconstruction_loss_cases() {
        let x = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(reconstruction_loss(&x, &x).unwrap(), 0.0);
        let mut y = x.clone().into_data();
        y[0] = 0.0;
        let y = Tensor::from_vec(2, 2, y).unwrap();
        assert_eq!(reconstruction_loss(&y, &x).unwrap(), 1.0);
        assert!(reconstruction_loss(&x.slice_rows(0, 1).unwrap(), &x).is_err());
    }

    #[test]
    fn tape_batch_loss_matches_plain_reconstruction() {
        let mut rng = SeededRng::new(10);
        let p = AutoencoderParams::new(3, 4, OutputActivation::Sigmoid, &mut rng).unwrap();
        let seqs: Vec<ActivitySequence> = [5, 2, 9, 2, 1]
            .iter()
            .map(|&l| random_seq(&mut rng, "u", l, 3))
            .collect();
        let refs: Vec<&ActivitySequence> = seqs.iter().collect();
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape).unwrap();
        let loss = batch_loss(&p, &mut tape, &vars, &refs).unwrap();
        let plain: f64 = seqs
            .iter()
            .map(|s| reconstruction_loss(&reconstruct(&p, s).unwrap(), s.steps()).unwrap())
            .sum::<f64>()
            / seqs.len() as f64;
        assert!((tape.value(loss).item().unwrap() - plain).abs() < 1e-12);
    }

    #[test]
    fn autoencoder_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(12);
        let p = AutoencoderParams::new(4, 5, OutputActivation::Sigmoid, &mut rng).unwrap();
        let seqs: Vec<ActivitySequence> = (0..8)
            .map(|i| random_seq(&mut rng, "u", 2 + i % 5, 4))
            .collect();
        let refs: Vec<&ActivitySequence> = seqs.iter().collect();
        let groups = [&p.encoder.group, &p.decoder.group, &p.output];
        for (which, group) in groups.into_iter().enumerate() {
            let report = GradCheck::default()
                .run(group, |tape, bound| {
                    minibatch_loss_on_tape(&p, which, tape, bound, &refs)
                })
                .unwrap();
            assert!(report.passed(), "group {which}: {report:?}");
        }
    }

    #[test]
    fn training_is_deterministic_and_decreasing() {
        let mut rng = SeededRng::new(13);
        let corpus: Vec<ActivitySequence> = (0..40)
            .map(|i| random_seq(&mut rng, &format!("u{i}"), 4 + i % 6, 3))
            .collect();
        let config = AeConfig {
            hidden: 8,
            epochs: 6,
            batch_size: 8,
            seed: 99,
            ..AeConfig::default()
        };
        let a = train_autoencoder(&corpus, &config).unwrap();
        let b = train_autoencoder(&corpus, &config).unwrap();
        assert_eq!(a.epoch_losses, b.epoch_losses);
        assert_eq!(a.params, b.params);
        assert!(a.epoch_losses.last().unwrap() < &a.epoch_losses[0]);
    }

    #[test]
    fn inconsistent_widths_rejected() {
        let mut rng = SeededRng::new(14);
        let corpus = vec![
            random_seq(&mut rng, "a", 4, 3),
            random_seq(&mut rng, "b", 4, 2),
        ];
        let err = train_autoencoder(&corpus, &AeConfig::default()).unwrap_err();
        assert!(err.to_string().contains("user b"), "{err}");
    }
}
