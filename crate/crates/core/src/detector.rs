//! Fraud detection: encoder followed by the complementary discriminator.

use serde::{Deserialize, Serialize};

use crate::autoencoder::{encode_sequence, stream_encode, AutoencoderParams, EncoderStreamState};
use crate::error::{OcanError, Result};
use crate::gan::{discriminator_forward, Discriminator};
use crate::plain_ae::PlainAutoencoder;
use crate::sequence::{ActivitySequence, Label};
use crate::tensor::Tensor;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// How raw inputs become discriminator inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Encoder {
    /// LSTM autoencoder over activity sequences.
    Lstm(AutoencoderParams),
    /// Feedforward autoencoder over fixed-width vectors.
    Plain(PlainAutoencoder),
    /// Fixed-width vectors fed to the discriminator unchanged.
    Raw { width: usize },
}

impl Encoder {
    pub fn output_width(&self) -> usize {
        match self {
            Encoder::Lstm(p) => p.hidden_width(),
            Encoder::Plain(p) => p.hidden_width(),
            Encoder::Raw { width } => *width,
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Encoder::Lstm(p) => p.input_width(),
            Encoder::Plain(p) => p.input_width(),
            Encoder::Raw { width } => *width,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Encoder::Lstm(_) => "lstm",
            Encoder::Plain(_) => "plain",
            Encoder::Raw { .. } => "raw",
        }
    }
}

/// `benign` iff `p_benign > threshold`.
pub fn label_for(p_benign: f64, threshold: f64) -> Label {
    if p_benign > threshold {
        Label::Benign
    } else {
        Label::Malicious
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub user_id: String,
    pub p_benign: f64,
    pub label: Label,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepScore {
    /// 1-based number of activities consumed.
    pub step: usize,
    pub p_benign: f64,
    /// Label of the prefix ending at this step.
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FraudDetector {
    encoder: Encoder,
    discriminator: Discriminator,
    threshold: f64,
}

impl FraudDetector {
    pub fn new(encoder: Encoder, discriminator: Discriminator, threshold: f64) -> Result<Self> {
        if encoder.output_width() != discriminator.input_width() {
            return Err(OcanError::Checkpoint(format!(
                "encoder produces width {} but the discriminator expects {}",
                encoder.output_width(),
                discriminator.input_width()
            )));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(OcanError::InvalidArgument(format!(
                "threshold {threshold} is outside [0, 1]"
            )));
        }
        Ok(Self {
            encoder,
            discriminator,
            threshold,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(OcanError::InvalidArgument(format!(
                "threshold {threshold} is outside [0, 1]"
            )));
        }
        self.threshold = threshold;
        Ok(self)
    }

    fn lstm(&self) -> Result<&AutoencoderParams> {
        match &self.encoder {
            Encoder::Lstm(p) => Ok(p),
            other => Err(OcanError::InvalidArgument(format!(
                "sequence input needs an LSTM encoder, detector has a {} encoder",
                other.kind()
            ))),
        }
    }

    /// Benign probability of one representation row.
    pub fn score_representation(&self, v: &[f64]) -> Result<f64> {
        let out = discriminator_forward(&self.discriminator, &Tensor::row_vector(v)?)?;
        Ok(out.p_benign.data()[0])
    }

    fn predict(&self, user_id: &str, v: &[f64]) -> Result<Prediction> {
        let p_benign = self.score_representation(v)?;
        Ok(Prediction {
            user_id: user_id.to_string(),
            p_benign,
            label: label_for(p_benign, self.threshold),
        })
    }

    /// Scores a fixed-width instance with a plain or raw encoder.
    pub fn detect_vector(&self, id: &str, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.encoder.input_width() {
            return Err(OcanError::ShapeMismatch {
                op: "detect_vector",
                lhs: (1, x.len()),
                rhs: (1, self.encoder.input_width()),
            });
        }
        match &self.encoder {
            Encoder::Plain(p) => {
                let v = p.encode(&Tensor::row_vector(x)?)?;
                self.predict(id, v.data())
            }
            Encoder::Raw { .. } => self.predict(id, x),
            Encoder::Lstm(_) => Err(OcanError::InvalidArgument(
                "vector input needs a plain or raw encoder, detector has an lstm encoder".into(),
            )),
        }
    }

    pub fn start_stream(&self, user_id: &str) -> Result<UserStream> {
        let p = self.lstm()?;
        Ok(UserStream {
            user_id: user_id.to_string(),
            state: EncoderStreamState::new(p.hidden_width()),
            scores: Vec::new(),
            first_flag: None,
        })
    }
}

/// Full-sequence prediction.
pub fn detect_user(detector: &FraudDetector, seq: &ActivitySequence) -> Result<Prediction> {
    let v = encode_sequence(detector.lstm()?, seq)?;
    detector.predict(&seq.user_id, v.values())
}

/// Predictions in corpus order.
pub fn score_batch(
    detector: &FraudDetector,
    corpus: &[ActivitySequence],
) -> Result<Vec<Prediction>> {
    if let Some(first) = corpus.first() {
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
    }
    corpus.iter().map(|s| detect_user(detector, s)).collect()
}

/// Per-user streaming scorer.
#[derive(Clone, Debug)]
pub struct UserStream {
    user_id: String,
    state: EncoderStreamState,
    scores: Vec<StepScore>,
    first_flag: Option<usize>,
}

impl UserStream {
    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    /// Consumes the activity with 1-based index `step` and returns its score.
    /// The user is flagged at the first step with `p_benign <= flag_threshold`.
    pub fn push(
        &mut self,
        detector: &FraudDetector,
        step: usize,
        x: &[f64],
        flag_threshold: f64,
    ) -> Result<StepScore> {
        let expected = self.state.steps_consumed() + 1;
        if step != expected {
            return Err(OcanError::Sequence {
                user: self.user_id.clone(),
                msg: format!("step_index {step} arrived out of order, expected {expected}"),
            });
        }
        self.state =
            stream_encode(detector.lstm()?, &self.state, x).map_err(|e| OcanError::Sequence {
                user: self.user_id.clone(),
                msg: e.to_string(),
            })?;
        let p_benign = detector.score_representation(self.state.representation().values())?;
        let score = StepScore {
            step,
            p_benign,
            label: label_for(p_benign, detector.threshold),
        };
        if self.first_flag.is_none() && p_benign <= flag_threshold {
            self.first_flag = Some(step);
        }
        self.scores.push(score);
        Ok(score)
    }

    pub fn scores(&self) -> &[StepScore] {
        &self.scores
    }

    pub fn first_flag(&self) -> Option<usize> {
        self.first_flag
    }

    pub fn finish(self) -> (Vec<StepScore>, Option<usize>) {
        (self.scores, self.first_flag)
    }
}

/// Scores every prefix of one user's ordered event stream.
/// `events` holds `(step_index, features)` pairs with 1-based indices.
pub fn early_detect(
    detector: &FraudDetector,
    user_id: &str,
    events: &[(usize, Vec<f64>)],
    flag_threshold: f64,
) -> Result<(Vec<StepScore>, Option<usize>)> {
    let mut stream = detector.start_stream(user_id)?;
    for (step, x) in events {
        stream.push(detector, *step, x, flag_threshold)?;
    }
    Ok(stream.finish())
}

/// [`early_detect`] over a whole in-memory sequence.
pub fn early_detect_sequence(
    detector: &FraudDetector,
    seq: &ActivitySequence,
    flag_threshold: f64,
) -> Result<(Vec<StepScore>, Option<usize>)> {
    let mut stream = detector.start_stream(&seq.user_id)?;
    for t in 0..seq.len() {
        stream.push(detector, t + 1, seq.step(t), flag_threshold)?;
    }
    Ok(stream.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::OutputActivation;
    use crate::rng::SeededRng;

    fn detector(zero_d: bool) -> FraudDetector {
        let mut rng = SeededRng::new(7);
        let ae = AutoencoderParams::new(3, 6, OutputActivation::Sigmoid, &mut rng).unwrap();
        let mut d = Discriminator::new(6, 8, 4, &mut rng).unwrap();
        if zero_d {
            d.group.zero_values();
        }
        FraudDetector::new(Encoder::Lstm(ae), d, DEFAULT_THRESHOLD).unwrap()
    }

    fn seq(id: &str, len: usize, seed: u64) -> ActivitySequence {
        let mut rng = SeededRng::new(seed);
        let rows: Vec<Vec<f64>> = (0..len)
            .map(|_| {
                (0..3)
                    .map(|_| f64::from(u8::from(rng.bernoulli(0.5))))
                    .collect()
            })
            .collect();
        ActivitySequence::from_steps(id, &rows).unwrap()
    }

    #[test]
    fn threshold_rule() {
        assert_eq!(label_for(0.7, 0.5), Label::Benign);
        assert_eq!(label_for(0.5, 0.5), Label::Malicious);
        assert_eq!(label_for(0.2, 0.5), Label::Malicious);
    }

    #[test]
    fn zero_discriminator_flags_everyone() {
        let det = detector(true);
        for k in 0..5 {
            let p = detect_user(&det, &seq("u", 3 + k, k as u64)).unwrap();
            assert_eq!(p.p_benign, 0.5);
            assert_eq!(p.label, Label::Malicious);
        }
    }

    #[test]
    fn stream_matches_prefixes_exactly() {
        let det = detector(false);
        let s = seq("u1", 12, 3);
        let (scores, _) = early_detect_sequence(&det, &s, 0.5).unwrap();
        for (t, score) in scores.iter().enumerate() {
            let p = detect_user(&det, &s.prefix(t + 1).unwrap()).unwrap();
            assert_eq!(score.step, t + 1);
            assert_eq!(score.p_benign.to_bits(), p.p_benign.to_bits());
        }
    }

    #[test]
    fn first_crossing_is_reported() {
        let det = detector(false);
        let s = seq("u1", 10, 4);
        let (scores, _) = early_detect_sequence(&det, &s, 0.0).unwrap();
        let cut = scores[6].p_benign;
        let (scores, flag) = early_detect_sequence(&det, &s, cut).unwrap();
        let expected = scores.iter().find(|s| s.p_benign <= cut).unwrap().step;
        assert_eq!(flag, Some(expected));
        assert!(expected <= 7);
        assert_eq!(scores.len(), 10);
    }

    #[test]
    fn out_of_order_events_are_rejected() {
        let det = detector(false);
        let events = vec![(1, vec![0.0, 1.0, 0.0]), (3, vec![1.0, 1.0, 0.0])];
        let err = early_detect(&det, "u9", &events, 0.5).unwrap_err();
        assert!(err.to_string().contains("u9"), "{err}");
    }

    #[test]
    fn batch_preserves_order() {
        let det = detector(false);
        let corpus: Vec<_> = (0..6)
            .map(|k| seq(&format!("u{k}"), 4 + k, k as u64))
            .collect();
        let preds = score_batch(&det, &corpus).unwrap();
        let mut rev = corpus.clone();
        rev.reverse();
        let rev_preds = score_batch(&det, &rev).unwrap();
        for (a, b) in preds.iter().zip(rev_preds.iter().rev()) {
            assert_eq!(a, b);
        }
        assert_eq!(
            score_batch(&det, &corpus[..1]).unwrap()[0],
            detect_user(&det, &corpus[0]).unwrap()
        );
    }

    #[test]
    fn incompatible_widths_fail_at_construction() {
        let mut rng = SeededRng::new(1);
        let ae = AutoencoderParams::new(3, 6, OutputActivation::Sigmoid, &mut rng).unwrap();
        let d = Discriminator::new(5, 8, 4, &mut rng).unwrap();
        assert!(matches!(
            FraudDetector::new(Encoder::Lstm(ae), d, 0.5),
            Err(OcanError::Checkpoint(_))
        ));
    }

    #[test]
    fn raw_and_plain_encoders_score_vectors() {
        let mut rng = SeededRng::new(2);
        let d = Discriminator::new(4, 8, 4, &mut rng).unwrap();
        let raw = FraudDetector::new(Encoder::Raw { width: 4 }, d.clone(), 0.5).unwrap();
        let p = raw.detect_vector("t", &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!((0.0..=1.0).contains(&p.p_benign));
        assert!(detect_user(&raw, &seq("x", 3, 0)).is_err());
        let ae = PlainAutoencoder::new(7, 4, &mut rng).unwrap();
        let plain = FraudDetector::new(Encoder::Plain(ae), d, 0.5).unwrap();
        assert!(plain.detect_vector("t", &[0.0; 7]).is_ok());
        assert!(plain.detect_vector("t", &[0.0; 4]).is_err());
    }
}
