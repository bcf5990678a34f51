use std::collections::HashMap;
use std::path::Path;

use ocan::autoencoder::encode_corpus;
use ocan::checkpoint::{lstm_ae_from_checkpoint, plain_ae_from_checkpoint, Checkpoint, OcanBundle};
use ocan::data::{
    is_creditcard_file, is_sequence_file, load_creditcard, load_sequences, load_vectors,
    vectors_to_tensor, LengthFilter,
};
use ocan::detector::Encoder;
use ocan::sequence::{ActivitySequence, Label, LabeledSequence, LabeledVector};
use ocan::tensor::Tensor;
use ocan::{OcanError, Result};

use crate::LengthArgs;

pub enum Corpus {
    Sequences(Vec<LabeledSequence>),
    Vectors(Vec<LabeledVector>),
}

impl LengthArgs {
    pub fn filter(&self) -> Result<Option<LengthFilter>> {
        if self.no_length_filter {
            return Ok(None);
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(OcanError::InvalidArgument(format!(
                "invalid length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        Ok(Some(LengthFilter {
            min: self.min_len,
            max: self.max_len,
        }))
    }
}

impl Corpus {
    pub fn load(path: &Path, filter: Option<LengthFilter>) -> Result<Self> {
        if is_sequence_file(path)? {
            Ok(Corpus::Sequences(load_sequences(path, filter)?))
        } else if is_creditcard_file(path)? {
            Ok(Corpus::Vectors(load_creditcard(path)?))
        } else {
            Ok(Corpus::Vectors(load_vectors(path)?))
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Corpus::Sequences(s) => s.len(),
            Corpus::Vectors(v) => v.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Corpus::Sequences(_) => "sequence",
            Corpus::Vectors(_) => "vector",
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Corpus::Sequences(s) => s.first().map_or(0, |s| s.sequence.width()),
            Corpus::Vectors(v) => v.first().map_or(0, |v| v.values.len()),
        }
    }

    pub fn labels(&self) -> Vec<(String, Option<Label>)> {
        match self {
            Corpus::Sequences(s) => s
                .iter()
                .map(|s| (s.sequence.user_id.clone(), s.label))
                .collect(),
            Corpus::Vectors(v) => v.iter().map(|v| (v.id.clone(), v.label)).collect(),
        }
    }

    /// Drops malicious records; returns how many were dropped.
    pub fn retain_benign(&mut self) -> usize {
        let before = self.len();
        let keep = |l: &Option<Label>| *l != Some(Label::Malicious);
        match self {
            Corpus::Sequences(s) => s.retain(|s| keep(&s.label)),
            Corpus::Vectors(v) => v.retain(|v| keep(&v.label)),
        }
        before - self.len()
    }

    pub fn split_by_label(self) -> (Corpus, Corpus) {
        let is_mal = |l: &Option<Label>| *l == Some(Label::Malicious);
        match self {
            Corpus::Sequences(s) => {
                let (m, b): (Vec<_>, Vec<_>) = s.into_iter().partition(|s| is_mal(&s.label));
                (Corpus::Sequences(b), Corpus::Sequences(m))
            }
            Corpus::Vectors(v) => {
                let (m, b): (Vec<_>, Vec<_>) = v.into_iter().partition(|v| is_mal(&v.label));
                (Corpus::Vectors(b), Corpus::Vectors(m))
            }
        }
    }

    pub fn sequences(&self) -> Vec<ActivitySequence> {
        match self {
            Corpus::Sequences(s) => s.iter().map(|s| s.sequence.clone()).collect(),
            Corpus::Vectors(_) => Vec::new(),
        }
    }

    pub fn require_nonempty(&self, what: &str) -> Result<()> {
        if self.len() == 0 {
            return Err(OcanError::Insufficient(format!(
                "{what} has no usable records"
            )));
        }
        Ok(())
    }
}

/// Autoencoder checkpoint, or a bundle whose encoder is reused.
pub fn load_encoder(path: &Path) -> Result<Encoder> {
    let ckpt = Checkpoint::load(path)?;
    match ckpt.kind.as_str() {
        "lstm-ae" => Ok(Encoder::Lstm(lstm_ae_from_checkpoint(&ckpt)?)),
        "plain-ae" => Ok(Encoder::Plain(plain_ae_from_checkpoint(&ckpt)?)),
        "ocan-bundle" => Ok(OcanBundle::from_checkpoint(&ckpt)?.encoder),
        other => Err(OcanError::Checkpoint(format!(
            "{} holds a '{other}', not an encoder",
            path.display()
        ))),
    }
}

/// The encoder for training data: the given checkpoint, or raw vectors.
pub fn encoder_for(ae: Option<&Path>, corpus: &Corpus) -> Result<Encoder> {
    match ae {
        Some(path) => load_encoder(path),
        None => match corpus {
            Corpus::Vectors(_) => Ok(Encoder::Raw {
                width: corpus.width(),
            }),
            Corpus::Sequences(_) => Err(OcanError::InvalidArgument(
                "sequence data needs an autoencoder checkpoint (--ae)".into(),
            )),
        },
    }
}

pub fn check_compatible(encoder: &Encoder, corpus: &Corpus) -> Result<()> {
    let fits_kind = matches!(
        (encoder, corpus),
        (Encoder::Lstm(_), Corpus::Sequences(_))
            | (Encoder::Plain(_) | Encoder::Raw { .. }, Corpus::Vectors(_))
    );
    if !fits_kind {
        return Err(OcanError::Checkpoint(format!(
            "{} encoder cannot read {} data",
            encoder.kind(),
            corpus.kind()
        )));
    }
    if corpus.len() > 0 && corpus.width() != encoder.input_width() {
        return Err(OcanError::Checkpoint(format!(
            "encoder expects {} features, data has {}",
            encoder.input_width(),
            corpus.width()
        )));
    }
    Ok(())
}

/// One representation row per record.
pub fn represent(encoder: &Encoder, corpus: &Corpus) -> Result<Tensor> {
    check_compatible(encoder, corpus)?;
    match (encoder, corpus) {
        (Encoder::Lstm(p), Corpus::Sequences(_)) => encode_corpus(p, &corpus.sequences()),
        (Encoder::Plain(p), Corpus::Vectors(v)) => p.encode(&vectors_to_tensor(v)?),
        (Encoder::Raw { .. }, Corpus::Vectors(v)) => vectors_to_tensor(v),
        _ => unreachable!("checked above"),
    }
}

pub fn label_name(l: Label) -> &'static str {
    match l {
        Label::Benign => "benign",
        Label::Malicious => "malicious",
    }
}

pub struct PredictionRow {
    pub id: String,
    pub p_benign: f64,
    pub label: Label,
}

/// Reads `user_id,p_benign,label` as written by detect.
pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    if !path.exists() {
        return Err(OcanError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let bad = |row: usize, msg: String| OcanError::Parse {
        path: path.display().to_string(),
        row,
        msg,
    };
    let headers = reader.headers()?.clone();
    if headers.iter().take(3).collect::<Vec<_>>() != ["user_id", "p_benign", "label"] {
        return Err(bad(1, "expected header user_id,p_benign,label".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let p_benign: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| bad(line, format!("p_benign '{}' is not a number", &rec[1])))?;
        let label = match rec[2].trim() {
            "benign" | "0" => Label::Benign,
            "malicious" | "1" => Label::Malicious,
            other => return Err(bad(line, format!("unknown label '{other}'"))),
        };
        out.push(PredictionRow {
            id: rec[0].to_string(),
            p_benign,
            label,
        });
    }
    Ok(out)
}

/// Ground truth for each prediction, matched by id.
pub fn join_labels(preds: &[PredictionRow], truth: &Corpus) -> Result<Vec<Label>> {
    let map: HashMap<String, Option<Label>> = truth.labels().into_iter().collect();
    preds
        .iter()
        .map(|p| match map.get(&p.id) {
            Some(Some(l)) => Ok(*l),
            Some(None) => Err(OcanError::Insufficient(format!(
                "record {} has no label",
                p.id
            ))),
            None => Err(OcanError::Insufficient(format!(
                "no labeled record with id {}",
                p.id
            ))),
        })
        .collect()
}
