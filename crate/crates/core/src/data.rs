//! Dataset files, splits, minibatching and synthetic corpora.
//!
//! Both file formats are comma-separated UTF-8 with a header row:
//!
//! * sequences: `user_id,step_index,<feature columns...>[,label]`, one row
//!   per activity step, `step_index` contiguous from 1 within each user;
//! * vectors: `id,<feature columns...>[,label]`, one row per instance.
//!
//! A trailing column named `label` holds `0` (benign) or `1` (malicious).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OcanError, Result};
use crate::rng::SeededRng;
use crate::sequence::{ActivitySequence, Label, LabeledSequence, LabeledVector};
use crate::tensor::Tensor;

/// Inclusive bounds on retained sequence length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthFilter {
    pub min: usize,
    pub max: usize,
}

impl Default for LengthFilter {
    fn default() -> Self {
        Self { min: 4, max: 50 }
    }
}

impl LengthFilter {
    pub fn keeps(&self, len: usize) -> bool {
        (self.min..=self.max).contains(&len)
    }
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    if !path.exists() {
        return Err(OcanError::MissingFile(path.to_path_buf()));
    }
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> OcanError {
    OcanError::Parse {
        path: path.display().to_string(),
        row: line,
        msg: msg.into(),
    }
}

fn parse_value(path: &Path, line: usize, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| {
        parse_err(
            path,
            line,
            format!("column {column}: '{cell}' is not a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("column {column}: non-finite value '{cell}'"),
        ));
    }
    Ok(v)
}

fn parse_label(path: &Path, line: usize, cell: &str) -> Result<Label> {
    cell.trim()
        .parse::<i64>()
        .ok()
        .and_then(Label::from_code)
        .ok_or_else(|| parse_err(path, line, format!("label '{cell}' is not 0 or 1")))
}

/// Line number of the `i`-th data record (the header is line 1).
fn line_of(i: usize) -> usize {
    i + 2
}

/// Loads a sequence file. With `filter`, users outside the length bounds
/// are dropped after validation.
pub fn load_sequences(path: &Path, filter: Option<LengthFilter>) -> Result<Vec<LabeledSequence>> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let has_label = headers.iter().last() == Some("label");
    let width = headers
        .len()
        .checked_sub(2 + usize::from(has_label))
        .unwrap_or(0);
    if width == 0 {
        return Err(parse_err(
            path,
            1,
            "expected user_id, step_index and at least one feature column",
        ));
    }

    struct Pending {
        steps: Vec<(usize, usize, Vec<f64>)>,
        label: Option<Label>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut users: HashMap<String, Pending> = HashMap::new();

    for (i, record) in reader.records().enumerate() {
        let line = line_of(i);
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", headers.len(), record.len()),
            ));
        }
        let user = record[0].to_string();
        let step: usize = record[1].trim().parse().map_err(|_| {
            parse_err(
                path,
                line,
                format!("step_index '{}' is not a positive integer", &record[1]),
            )
        })?;
        let features = (0..width)
            .map(|k| parse_value(path, line, &headers[2 + k], &record[2 + k]))
            .collect::<Result<Vec<_>>>()?;
        let label = if has_label {
            Some(parse_label(path, line, &record[2 + width])?)
        } else {
            None
        };
        let entry = users.entry(user.clone()).or_insert_with(|| {
            order.push(user.clone());
            Pending {
                steps: Vec::new(),
                label,
            }
        });
        if entry.label != label {
            return Err(parse_err(
                path,
                line,
                format!("user {user} has conflicting labels"),
            ));
        }
        entry.steps.push((step, line, features));
    }

    let mut out = Vec::with_capacity(order.len());
    for user in order {
        let mut pending = users.remove(&user).expect("user recorded");
        pending.steps.sort_by_key(|(s, line, _)| (*s, *line));
        for (k, (s, line, _)) in pending.steps.iter().enumerate() {
            if *s != k + 1 {
                let msg = if *s == k { "duplicate" } else { "gap before" };
                return Err(OcanError::Sequence {
                    user,
                    msg: format!("{msg} step_index {s} (line {line}); steps must run 1..=T"),
                });
            }
        }
        if filter.is_some_and(|f| !f.keeps(pending.steps.len())) {
            continue;
        }
        let rows: Vec<Vec<f64>> = pending.steps.into_iter().map(|(_, _, f)| f).collect();
        out.push(LabeledSequence {
            sequence: ActivitySequence::from_steps(user, &rows)?,
            label: pending.label,
        });
    }
    Ok(out)
}

/// One row of a sequence file, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityEvent {
    pub user_id: String,
    pub step: usize,
    pub values: Vec<f64>,
    pub label: Option<Label>,
}

/// Reads a sequence file row by row without regrouping, for streaming.
pub fn load_events(path: &Path) -> Result<Vec<ActivityEvent>> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let has_label = headers.iter().last() == Some("label");
    let width = headers
        .len()
        .checked_sub(2 + usize::from(has_label))
        .unwrap_or(0);
    if width == 0 || headers.get(1) != Some("step_index") {
        return Err(parse_err(
            path,
            1,
            "expected user_id, step_index and at least one feature column",
        ));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = line_of(i);
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", headers.len(), record.len()),
            ));
        }
        let step: usize = record[1].trim().parse().map_err(|_| {
            parse_err(
                path,
                line,
                format!("step_index '{}' is not a positive integer", &record[1]),
            )
        })?;
        let values = (0..width)
            .map(|k| parse_value(path, line, &headers[2 + k], &record[2 + k]))
            .collect::<Result<Vec<_>>>()?;
        let label = if has_label {
            Some(parse_label(path, line, &record[2 + width])?)
        } else {
            None
        };
        out.push(ActivityEvent {
            user_id: record[0].to_string(),
            step,
            values,
            label,
        });
    }
    Ok(out)
}

/// True when the file's second header column is `step_index`.
pub fn is_sequence_file(path: &Path) -> Result<bool> {
    let mut reader = open(path)?;
    Ok(reader.headers()?.get(1) == Some("step_index"))
}

fn feature_header(width: usize) -> impl Iterator<Item = String> {
    (1..=width).map(|k| format!("f{k}"))
}

fn all_or_none_labeled<'a>(labels: impl Iterator<Item = Option<Label>> + 'a) -> Result<bool> {
    let labels: Vec<Option<Label>> = labels.collect();
    let labeled = labels.iter().filter(|l| l.is_some()).count();
    if labeled != 0 && labeled != labels.len() {
        return Err(OcanError::InvalidArgument(
            "either every record or no record must carry a label".into(),
        ));
    }
    Ok(labeled != 0)
}

/// Writes a sequence file; the label column appears when records are labeled.
pub fn write_sequences(path: &Path, seqs: &[LabeledSequence]) -> Result<()> {
    let with_label = all_or_none_labeled(seqs.iter().map(|s| s.label))?;
    let width = seqs.first().map_or(0, |s| s.sequence.width());
    let mut out = BufWriter::new(File::create(path)?);
    write_sequences_to(&mut out, seqs, width, with_label)?;
    out.flush()?;
    Ok(())
}

fn write_sequences_to(
    out: &mut impl Write,
    seqs: &[LabeledSequence],
    width: usize,
    with_label: bool,
) -> Result<()> {
    let mut header: Vec<String> = vec!["user_id".into(), "step_index".into()];
    header.extend(feature_header(width));
    if with_label {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for s in seqs {
        if s.sequence.width() != width {
            return Err(OcanError::Sequence {
                user: s.sequence.user_id.clone(),
                msg: format!("width {} differs from {width}", s.sequence.width()),
            });
        }
        for t in 0..s.sequence.len() {
            write!(out, "{},{}", s.sequence.user_id, t + 1)?;
            for v in s.sequence.step(t) {
                write!(out, ",{v}")?;
            }
            if let Some(l) = s.label {
                write!(out, ",{}", l.code())?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn load_vectors(path: &Path) -> Result<Vec<LabeledVector>> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let has_label = headers.iter().last() == Some("label");
    let width = headers
        .len()
        .checked_sub(1 + usize::from(has_label))
        .unwrap_or(0);
    if width == 0 {
        return Err(parse_err(
            path,
            1,
            "expected id and at least one feature column",
        ));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = line_of(i);
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", headers.len(), record.len()),
            ));
        }
        let values = (0..width)
            .map(|k| parse_value(path, line, &headers[1 + k], &record[1 + k]))
            .collect::<Result<Vec<_>>>()?;
        let label = if has_label {
            Some(parse_label(path, line, &record[1 + width])?)
        } else {
            None
        };
        out.push(LabeledVector {
            id: record[0].to_string(),
            values,
            label,
        });
    }
    Ok(out)
}

pub fn write_vectors(path: &Path, items: &[LabeledVector]) -> Result<()> {
    let with_label = all_or_none_labeled(items.iter().map(|s| s.label))?;
    let width = items.first().map_or(0, |s| s.values.len());
    let mut out = BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = vec!["id".into()];
    header.extend(feature_header(width));
    if with_label {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for item in items {
        if item.values.len() != width {
            return Err(OcanError::InvalidArgument(format!(
                "instance {} has width {}, expected {width}",
                item.id,
                item.values.len()
            )));
        }
        write!(out, "{}", item.id)?;
        for v in &item.values {
            write!(out, ",{v}")?;
        }
        if let Some(l) = item.label {
            write!(out, ",{}", l.code())?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// True when the header has the public credit-card layout
/// (`Time, V1..V28, Amount, Class`).
pub fn is_creditcard_file(path: &Path) -> Result<bool> {
    let mut reader = open(path)?;
    let headers = reader.headers()?;
    Ok(headers.get(0) == Some("Time") && headers.iter().last() == Some("Class"))
}

/// Reads the public credit-card transactions file, keeping the 28 PCA
/// features `V1..V28`. Ids are `t{row}` with 0-based rows.
pub fn load_creditcard(path: &Path) -> Result<Vec<LabeledVector>> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let features: Vec<usize> = (1..=28)
        .map(|k| {
            col(&format!("V{k}")).ok_or_else(|| parse_err(path, 1, format!("missing column V{k}")))
        })
        .collect::<Result<_>>()?;
    let class = col("Class").ok_or_else(|| parse_err(path, 1, "missing column Class"))?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = line_of(i);
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", headers.len(), record.len()),
            ));
        }
        let values = features
            .iter()
            .map(|&c| parse_value(path, line, &headers[c], &record[c]))
            .collect::<Result<Vec<_>>>()?;
        out.push(LabeledVector {
            id: format!("t{i}"),
            values,
            label: Some(parse_label(path, line, &record[class])?),
        });
    }
    Ok(out)
}

/// Stacks vectors into an `N x width` matrix.
pub fn vectors_to_tensor(items: &[LabeledVector]) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = items.iter().map(|v| v.values.clone()).collect();
    Tensor::from_rows(&rows)
}

/// Anything with an id and an optional label can be split.
pub trait Record {
    fn id(&self) -> &str;
    fn label(&self) -> Option<Label>;
}

impl Record for LabeledSequence {
    fn id(&self) -> &str {
        &self.sequence.user_id
    }
    fn label(&self) -> Option<Label> {
        self.label
    }
}

impl Record for LabeledVector {
    fn id(&self) -> &str {
        &self.id
    }
    fn label(&self) -> Option<Label> {
        self.label
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_benign: usize,
    pub test_benign: usize,
    pub test_malicious: usize,
    pub seed: u64,
}

/// Seeded benign-only training split and mixed test split, disjoint by id.
pub fn split<T: Record + Clone>(corpus: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    let mut benign = Vec::new();
    let mut malicious = Vec::new();
    for (i, r) in corpus.iter().enumerate() {
        match r.label() {
            Some(Label::Benign) => benign.push(i),
            Some(Label::Malicious) => malicious.push(i),
            None => {
                return Err(OcanError::InvalidArgument(format!(
                    "record {} has no label; splitting needs labeled data",
                    r.id()
                )))
            }
        }
    }
    let need_benign = spec.train_benign + spec.test_benign;
    if benign.len() < need_benign || malicious.len() < spec.test_malicious {
        return Err(OcanError::Insufficient(format!(
            "split needs {need_benign} benign and {} malicious, corpus has {} and {} (short by {} and {})",
            spec.test_malicious,
            benign.len(),
            malicious.len(),
            need_benign.saturating_sub(benign.len()),
            spec.test_malicious.saturating_sub(malicious.len()),
        )));
    }
    let mut rng = SeededRng::new(spec.seed);
    rng.shuffle(&mut benign);
    rng.shuffle(&mut malicious);
    let train = benign[..spec.train_benign]
        .iter()
        .map(|&i| corpus[i].clone())
        .collect();
    let mut test_idx: Vec<usize> = benign[spec.train_benign..need_benign]
        .iter()
        .chain(&malicious[..spec.test_malicious])
        .copied()
        .collect();
    rng.shuffle(&mut test_idx);
    let test = test_idx.into_iter().map(|i| corpus[i].clone()).collect();
    Ok((train, test))
}

/// Seeded shuffle of `0..n` cut into contiguous chunks; the last chunk may
/// be short. A size of zero is treated as one.
pub fn minibatches(n: usize, size: usize, rng: &mut SeededRng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    idx.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

/// [`minibatches`] over items, from a seed.
pub fn minibatch_items<T: Clone>(items: &[T], size: usize, seed: u64) -> Vec<Vec<T>> {
    minibatches(items.len(), size, &mut SeededRng::new(seed))
        .into_iter()
        .map(|b| b.into_iter().map(|i| items[i].clone()).collect())
        .collect()
}

/// Two-class Bernoulli activity generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub benign_users: usize,
    pub malicious_users: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Per-feature probability of a 1 for benign users.
    pub benign_probs: Vec<f64>,
    pub malicious_probs: Vec<f64>,
    /// Added to each feature probability linearly over a sequence: at the
    /// last step the probability has moved by the full drift.
    pub benign_drift: Vec<f64>,
    pub malicious_drift: Vec<f64>,
    /// 0 keeps the classes apart; 1 makes malicious users benign-like.
    pub overlap: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            benign_users: 1000,
            malicious_users: 1000,
            min_len: 4,
            max_len: 50,
            benign_probs: vec![0.25, 0.15, 0.7, 0.05],
            malicious_probs: vec![0.05, 0.85, 0.15, 0.8],
            benign_drift: vec![0.0; 4],
            malicious_drift: vec![0.0, 0.1, 0.0, 0.15],
            overlap: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let d = self.benign_probs.len();
        if d == 0
            || self.malicious_probs.len() != d
            || self.benign_drift.len() != d
            || self.malicious_drift.len() != d
        {
            return Err(OcanError::InvalidArgument(
                "probability and drift vectors must be non-empty and of equal width".into(),
            ));
        }
        let bad_p = |p: &f64| !(0.0..=1.0).contains(p);
        if self
            .benign_probs
            .iter()
            .chain(&self.malicious_probs)
            .any(bad_p)
        {
            return Err(OcanError::InvalidArgument(
                "feature probabilities must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(OcanError::InvalidArgument(format!(
                "overlap {} outside [0, 1]",
                self.overlap
            )));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(OcanError::InvalidArgument(format!(
                "invalid length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        if self
            .benign_drift
            .iter()
            .chain(&self.malicious_drift)
            .any(|d| !d.is_finite())
        {
            return Err(OcanError::InvalidArgument("drift must be finite".into()));
        }
        Ok(())
    }

    /// Malicious per-feature probabilities after mixing in the benign ones.
    pub fn effective_malicious_probs(&self) -> Vec<f64> {
        self.malicious_probs
            .iter()
            .zip(&self.benign_probs)
            .map(|(m, b)| (1.0 - self.overlap) * m + self.overlap * b)
            .collect()
    }

    fn effective_malicious_drift(&self) -> Vec<f64> {
        self.malicious_drift
            .iter()
            .zip(&self.benign_drift)
            .map(|(m, b)| (1.0 - self.overlap) * m + self.overlap * b)
            .collect()
    }
}

fn synth_user(
    rng: &mut SeededRng,
    id: String,
    cfg: &SyntheticConfig,
    probs: &[f64],
    drift: &[f64],
) -> Result<ActivitySequence> {
    let len = rng.range_inclusive(cfg.min_len, cfg.max_len);
    let steps: Vec<Vec<f64>> = (0..len)
        .map(|t| {
            let frac = if len > 1 {
                t as f64 / (len - 1) as f64
            } else {
                0.0
            };
            probs
                .iter()
                .zip(drift)
                .map(|(p, d)| {
                    if rng.bernoulli((p + d * frac).clamp(0.0, 1.0)) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    ActivitySequence::from_steps(id, &steps)
}

/// Benign users `b0..` followed by malicious users `m0..`, labels attached.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<LabeledSequence>> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let mal_probs = cfg.effective_malicious_probs();
    let mal_drift = cfg.effective_malicious_drift();
    let mut out = Vec::with_capacity(cfg.benign_users + cfg.malicious_users);
    for i in 0..cfg.benign_users {
        out.push(LabeledSequence {
            sequence: synth_user(
                &mut rng,
                format!("b{i}"),
                cfg,
                &cfg.benign_probs,
                &cfg.benign_drift,
            )?,
            label: Some(Label::Benign),
        });
    }
    for i in 0..cfg.malicious_users {
        out.push(LabeledSequence {
            sequence: synth_user(&mut rng, format!("m{i}"), cfg, &mal_probs, &mal_drift)?,
            label: Some(Label::Malicious),
        });
    }
    Ok(out)
}

/// Gaussian fixed-width instances: benign around the origin, malicious
/// around a shifted mean, with heavier spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVectorConfig {
    pub benign: usize,
    pub malicious: usize,
    pub width: usize,
    /// Distance between the class means.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticVectorConfig {
    fn default() -> Self {
        Self {
            benign: 1000,
            malicious: 500,
            width: 28,
            separation: 4.0,
            seed: 0,
        }
    }
}

pub fn generate_synthetic_vectors(cfg: &SyntheticVectorConfig) -> Result<Vec<LabeledVector>> {
    if cfg.width == 0 || !cfg.separation.is_finite() {
        return Err(OcanError::InvalidArgument(
            "width must be positive and separation finite".into(),
        ));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let direction: Vec<f64> = {
        let raw: Vec<f64> = (0..cfg.width).map(|_| rng.normal()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        raw.into_iter().map(|v| v / norm).collect()
    };
    let mut out = Vec::with_capacity(cfg.benign + cfg.malicious);
    for i in 0..cfg.benign {
        let values = (0..cfg.width).map(|_| rng.normal()).collect();
        out.push(LabeledVector {
            id: format!("b{i}"),
            values,
            label: Some(Label::Benign),
        });
    }
    for i in 0..cfg.malicious {
        let values = direction
            .iter()
            .map(|d| d * cfg.separation + 1.5 * rng.normal())
            .collect();
        out.push(LabeledVector {
            id: format!("m{i}"),
            values,
            label: Some(Label::Malicious),
        });
    }
    Ok(out)
}
