//! Multi-seed experiment driver and discriminator probes.
//!
//! One run trains the encoder on benign training users, trains the regular
//! GAN, fits the density threshold, trains the complementary GAN and scores
//! the held-out test users. The regular discriminator doubles as the OCAN-r
//! baseline.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::{encode_corpus, train_autoencoder, AeConfig};
use crate::data::{split, SplitSpec};
use crate::detector::label_for;
use crate::error::{OcanError, Result};
use crate::eval::{confusion_metrics, mean_std, roc_auc, Metrics};
use crate::gan::{
    discriminator_forward, generator_forward, mean_p_benign, train_complementary_gan_with,
    train_regular_gan_with, DensityProxy, Discriminator, GanConfig, Generator,
};
use crate::plain_ae::{train_plain_autoencoder, PlainAeConfig};
use crate::rng::{sample_noise, SeededRng};
use crate::sequence::{ActivitySequence, Label, LabeledSequence, LabeledVector};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub enum ExperimentData {
    Sequences(Vec<LabeledSequence>),
    Vectors(Vec<LabeledVector>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VectorMode {
    /// Learn a plain autoencoder and feed its representations to the GANs.
    Representation,
    /// Feed the raw vectors to the GANs.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub split: SplitSpec,
    pub ae: AeConfig,
    pub plain: PlainAeConfig,
    pub vector_mode: VectorMode,
    pub gan: GanConfig,
    pub runs: usize,
    pub seed_base: u64,
    pub threshold: f64,
    /// Also score with the regular discriminator (OCAN-r).
    pub include_regular: bool,
    /// Generated samples per probe evaluation.
    pub probe_samples: usize,
    /// Seeds run concurrently on this many threads; results do not depend on it.
    pub workers: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            split: SplitSpec {
                train_benign: 2000,
                test_benign: 600,
                test_malicious: 600,
                seed: 0,
            },
            ae: AeConfig::default(),
            plain: PlainAeConfig::default(),
            vector_mode: VectorMode::Representation,
            gan: GanConfig::default(),
            runs: 10,
            seed_base: 0,
            threshold: 0.5,
            include_regular: true,
            probe_samples: 500,
            workers: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub epoch: usize,
    pub real_benign: f64,
    pub generated: f64,
    pub malicious: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub metrics: Metrics,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub ocan: Option<ModelResult>,
    pub regular: Option<ModelResult>,
    pub epsilon: Option<f64>,
    /// Complementary GAN probes per epoch.
    pub probes: Vec<ProbeRow>,
    /// Regular GAN probes per epoch.
    pub regular_probes: Vec<ProbeRow>,
    /// `stage: message` when the run failed.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub metric: String,
    pub mean: f64,
    pub std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub protocol: Protocol,
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn mean(&self, model: &str, metric: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.model == model && r.metric == metric)
            .map(|r| r.mean)
    }
}

/// Mean benign probability on the three probe groups.
pub fn probe_epoch(
    epoch: usize,
    generator: &Generator,
    discriminator: &Discriminator,
    benign: &Tensor,
    malicious: &Tensor,
    noise: &Tensor,
) -> Result<ProbeRow> {
    let generated = generator_forward(generator, noise)?;
    Ok(ProbeRow {
        epoch,
        real_benign: mean_p_benign(discriminator, benign)?,
        generated: mean_p_benign(discriminator, &generated)?,
        malicious: mean_p_benign(discriminator, malicious)?,
    })
}

/// Probe rows for a list of per-epoch model states.
pub fn training_probes(
    states: &[(Generator, Discriminator)],
    benign: &Tensor,
    malicious: &Tensor,
    noise: &Tensor,
) -> Result<Vec<ProbeRow>> {
    states
        .iter()
        .enumerate()
        .map(|(e, (g, d))| probe_epoch(e, g, d, benign, malicious, noise))
        .collect()
}

/// Three rows per epoch: `epoch,curve,mean_p_benign`.
pub fn probes_csv(rows: &[ProbeRow]) -> String {
    let mut out = String::from("epoch,curve,mean_p_benign\n");
    for r in rows {
        for (name, v) in [
            ("real_benign", r.real_benign),
            ("generated", r.generated),
            ("malicious", r.malicious),
        ] {
            let _ = writeln!(out, "{},{name},{v}", r.epoch);
        }
    }
    out
}

fn fingerprint(data: &ExperimentData, hasher: &mut Sha256) {
    let put_label = |h: &mut Sha256, l: Option<Label>| h.update([l.map_or(2, Label::code)]);
    match data {
        ExperimentData::Sequences(seqs) => {
            for s in seqs {
                hasher.update(s.sequence.user_id.as_bytes());
                put_label(hasher, s.label);
                for v in s.sequence.steps().data() {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
        ExperimentData::Vectors(items) => {
            for it in items {
                hasher.update(it.id.as_bytes());
                put_label(hasher, it.label);
                for v in &it.values {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
    }
}

/// SHA-256 over the protocol and the data. The worker count is left out
/// since it cannot change any result.
pub fn config_hash(data: &ExperimentData, protocol: &Protocol) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&Protocol {
        workers: 1,
        ..protocol.clone()
    })?);
    fingerprint(data, &mut h);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

struct Encoded {
    train: Tensor,
    test: Tensor,
    test_labels: Vec<Label>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| format!("{name}: {e}"))
}

fn labels_of<'a>(labels: impl Iterator<Item = Option<Label>> + 'a) -> Result<Vec<Label>> {
    labels
        .map(|l| l.ok_or_else(|| OcanError::InvalidArgument("test record without a label".into())))
        .collect()
}

fn encode(
    data: &ExperimentData,
    protocol: &Protocol,
    seed: u64,
) -> std::result::Result<Encoded, String> {
    let spec = SplitSpec {
        seed,
        ..protocol.split
    };
    match data {
        ExperimentData::Sequences(seqs) => {
            let (train, test) = stage("split", split(seqs, &spec))?;
            let train_seqs: Vec<ActivitySequence> = train.into_iter().map(|s| s.sequence).collect();
            let test_labels = stage("split", labels_of(test.iter().map(|s| s.label)))?;
            let test_seqs: Vec<ActivitySequence> = test.into_iter().map(|s| s.sequence).collect();
            let cfg = AeConfig {
                seed,
                ..protocol.ae
            };
            let ae = stage("train-ae", train_autoencoder(&train_seqs, &cfg))?;
            Ok(Encoded {
                train: stage("encode", encode_corpus(&ae.params, &train_seqs))?,
                test: stage("encode", encode_corpus(&ae.params, &test_seqs))?,
                test_labels,
            })
        }
        ExperimentData::Vectors(items) => {
            let (train, test) = stage("split", split(items, &spec))?;
            let test_labels = stage("split", labels_of(test.iter().map(|v| v.label)))?;
            let rows = |v: &[LabeledVector]| {
                Tensor::from_rows(&v.iter().map(|x| x.values.clone()).collect::<Vec<_>>())
            };
            let train = stage("split", rows(&train))?;
            let test = stage("split", rows(&test))?;
            match protocol.vector_mode {
                VectorMode::Raw => Ok(Encoded {
                    train,
                    test,
                    test_labels,
                }),
                VectorMode::Representation => {
                    let cfg = PlainAeConfig {
                        seed,
                        ..protocol.plain
                    };
                    let ae = stage("train-ae", train_plain_autoencoder(&train, &cfg))?;
                    Ok(Encoded {
                        train: stage("encode", ae.params.encode(&train))?,
                        test: stage("encode", ae.params.encode(&test))?,
                        test_labels,
                    })
                }
            }
        }
    }
}

fn evaluate(
    d: &Discriminator,
    test: &Tensor,
    labels: &[Label],
    threshold: f64,
) -> Result<ModelResult> {
    let p = discriminator_forward(d, test)?.p_benign;
    let predicted: Vec<Label> = p.data().iter().map(|&p| label_for(p, threshold)).collect();
    let metrics = confusion_metrics(&predicted, labels)?;
    let scores: Vec<f64> = p.data().iter().map(|p| -p).collect();
    Ok(ModelResult {
        metrics,
        auc: roc_auc(&scores, labels)?.auc,
    })
}

fn rows_with(t: &Tensor, labels: &[Label], want: Label) -> Result<Tensor> {
    let idx: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == want)
        .map(|(i, _)| i)
        .collect();
    t.gather_rows(&idx)
}

fn run_once(
    data: &ExperimentData,
    protocol: &Protocol,
    seed: u64,
    result: &mut RunResult,
) -> std::result::Result<(), String> {
    let enc = encode(data, protocol, seed)?;
    let benign_probe = stage(
        "probe",
        rows_with(&enc.test, &enc.test_labels, Label::Benign),
    )?;
    let malicious_probe = stage(
        "probe",
        rows_with(&enc.test, &enc.test_labels, Label::Malicious),
    )?;
    let gan_cfg = GanConfig {
        seed,
        ..protocol.gan
    };
    let mut noise_rng = SeededRng::derive(seed, 99);
    let noise = stage(
        "probe",
        sample_noise(
            &mut noise_rng,
            protocol.probe_samples.max(1),
            gan_cfg.noise_dim,
        ),
    )?;

    let mut regular_probes = Vec::new();
    let regular = stage(
        "train-regular-gan",
        train_regular_gan_with(&enc.train, &gan_cfg, &mut |e, g, d| {
            regular_probes.push(probe_epoch(
                e,
                g,
                d,
                &benign_probe,
                &malicious_probe,
                &noise,
            )?);
            Ok(())
        }),
    )?;
    result.regular_probes = regular_probes;
    if protocol.include_regular {
        result.regular = Some(stage(
            "score-regular",
            evaluate(
                &regular.discriminator,
                &enc.test,
                &enc.test_labels,
                protocol.threshold,
            ),
        )?);
    }
    let proxy = stage(
        "fit-epsilon",
        DensityProxy::fit(regular.discriminator, &enc.train, gan_cfg.quantile_k),
    )?;
    result.epsilon = Some(proxy.epsilon);

    let mut probes = Vec::new();
    let ocan = stage(
        "train-complementary-gan",
        train_complementary_gan_with(&enc.train, &proxy, &gan_cfg, &mut |e, g, d| {
            probes.push(probe_epoch(
                e,
                g,
                d,
                &benign_probe,
                &malicious_probe,
                &noise,
            )?);
            Ok(())
        }),
    )?;
    result.probes = probes;
    result.ocan = Some(stage(
        "score",
        evaluate(
            &ocan.discriminator,
            &enc.test,
            &enc.test_labels,
            protocol.threshold,
        ),
    )?);
    Ok(())
}

/// One full pipeline for a single seed. Failures are recorded, not raised.
pub fn run_seed(data: &ExperimentData, protocol: &Protocol, seed: u64) -> RunResult {
    let mut result = RunResult {
        seed,
        ocan: None,
        regular: None,
        epsilon: None,
        probes: Vec::new(),
        regular_probes: Vec::new(),
        error: None,
    };
    if let Err(e) = run_once(data, protocol, seed, &mut result) {
        result.error = Some(e);
    }
    result
}

fn summarize(runs: &[RunResult]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    let models: [(&str, fn(&RunResult) -> Option<&ModelResult>); 2] = [
        ("ocan", |r| r.ocan.as_ref()),
        ("ocan-r", |r| r.regular.as_ref()),
    ];
    for (name, pick) in models {
        let results: Vec<&ModelResult> = runs.iter().filter_map(pick).collect();
        let metrics: [(&str, fn(&ModelResult) -> f64); 5] = [
            ("precision", |m| m.metrics.precision),
            ("recall", |m| m.metrics.recall),
            ("f1", |m| m.metrics.f1),
            ("accuracy", |m| m.metrics.accuracy),
            ("auc", |m| m.auc),
        ];
        for (metric, get) in metrics {
            let values: Vec<f64> = results.iter().map(|m| get(m)).collect();
            if let Some((mean, std)) = mean_std(&values) {
                out.push(SummaryRow {
                    model: name.to_string(),
                    metric: metric.to_string(),
                    mean,
                    std,
                });
            }
        }
    }
    out
}

/// Runs `protocol.runs` seeds starting at `protocol.seed_base`.
pub fn run_experiment(data: &ExperimentData, protocol: &Protocol) -> Result<ExperimentReport> {
    if protocol.runs == 0 {
        return Err(OcanError::InvalidArgument(
            "an experiment needs at least one run".into(),
        ));
    }
    let seeds: Vec<u64> = (0..protocol.runs as u64)
        .map(|r| protocol.seed_base + r)
        .collect();
    run_experiment_seeds(data, protocol, &seeds)
}

/// [`run_experiment`] with an explicit seed list.
pub fn run_experiment_seeds(
    data: &ExperimentData,
    protocol: &Protocol,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    let config_hash = config_hash(data, protocol)?;
    let workers = protocol.workers.clamp(1, seeds.len().max(1));
    let runs: Vec<RunResult> = if workers == 1 {
        seeds.iter().map(|&s| run_seed(data, protocol, s)).collect()
    } else {
        let mut slots: Vec<Option<RunResult>> = vec![None; seeds.len()];
        std::thread::scope(|scope| {
            for (w, chunk) in slots.chunks_mut(seeds.len().div_ceil(workers)).enumerate() {
                let offset = w * seeds.len().div_ceil(workers);
                scope.spawn(move || {
                    for (k, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(run_seed(data, protocol, seeds[offset + k]));
                    }
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("every seed ran"))
            .collect()
    };
    Ok(ExperimentReport {
        config_hash,
        protocol: protocol.clone(),
        summary: summarize(&runs),
        runs,
    })
}

/// Per-run rows: `seed,model,precision,recall,f1,accuracy,auc,tp,fp,tn,fn,error`.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("seed,model,precision,recall,f1,accuracy,auc,tp,fp,tn,fn,error\n");
    for run in &report.runs {
        if let Some(e) = &run.error {
            let _ = writeln!(out, "{},,,,,,,,,,,\"{}\"", run.seed, e.replace('"', "'"));
            continue;
        }
        for (name, m) in [("ocan", &run.ocan), ("ocan-r", &run.regular)] {
            if let Some(m) = m {
                let c = m.metrics.counts;
                let _ = writeln!(
                    out,
                    "{},{name},{},{},{},{},{},{},{},{},{},",
                    run.seed,
                    m.metrics.precision,
                    m.metrics.recall,
                    m.metrics.f1,
                    m.metrics.accuracy,
                    m.auc,
                    c.tp,
                    c.fp,
                    c.tn,
                    c.fn_
                );
            }
        }
    }
    out
}

/// `key=value` lines for scripted checks.
pub fn summary_kv(report: &ExperimentReport) -> String {
    let mut out = format!("config_hash={}\n", report.config_hash);
    let seeds: Vec<String> = report.runs.iter().map(|r| r.seed.to_string()).collect();
    let _ = writeln!(out, "seeds={}", seeds.join(","));
    let failed = report.runs.iter().filter(|r| r.error.is_some()).count();
    let _ = writeln!(out, "failed_runs={failed}");
    for row in &report.summary {
        let _ = writeln!(out, "{}.{}.mean={}", row.model, row.metric, row.mean);
        if let Some(s) = row.std {
            let _ = writeln!(out, "{}.{}.std={s}", row.model, row.metric);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_discriminator_probes_are_half() {
        let mut rng = SeededRng::new(0);
        let mut d = Discriminator::new(4, 6, 3, &mut rng).unwrap();
        d.group.zero_values();
        let g = Generator::new(5, 6, 4, &mut rng).unwrap();
        let x = Tensor::filled(3, 4, 0.2).unwrap();
        let noise = sample_noise(&mut rng, 7, 5).unwrap();
        let rows = training_probes(&[(g.clone(), d.clone()), (g, d)], &x, &x, &noise).unwrap();
        assert_eq!(
            rows[0],
            ProbeRow {
                epoch: 0,
                real_benign: 0.5,
                generated: 0.5,
                malicious: 0.5
            }
        );
        assert_eq!(probes_csv(&rows).lines().count(), 1 + 2 * 3);
    }

    #[test]
    fn hash_depends_on_protocol_and_data() {
        let v = |x: f64| LabeledVector {
            id: "a".into(),
            values: vec![x],
            label: Some(Label::Benign),
        };
        let p = Protocol::default();
        let a = config_hash(&ExperimentData::Vectors(vec![v(1.0)]), &p).unwrap();
        assert_eq!(a.len(), 64);
        assert_ne!(
            a,
            config_hash(&ExperimentData::Vectors(vec![v(2.0)]), &p).unwrap()
        );
        let q = Protocol { runs: 3, ..p };
        assert_ne!(
            a,
            config_hash(&ExperimentData::Vectors(vec![v(1.0)]), &q).unwrap()
        );
    }

    #[test]
    fn failed_stage_is_tagged() {
        let data = ExperimentData::Vectors(vec![LabeledVector {
            id: "a".into(),
            values: vec![0.0],
            label: Some(Label::Benign),
        }]);
        let r = run_seed(&data, &Protocol::default(), 3);
        assert!(
            r.error.as_deref().unwrap().starts_with("split: "),
            "{:?}",
            r.error
        );
        assert!(r.ocan.is_none());
    }

    #[test]
    fn hash_tracks_protocol_but_not_workers() {
        let data = ExperimentData::Vectors(vec![LabeledVector {
            id: "a".into(),
            values: vec![1.0, 2.0],
            label: Some(Label::Benign),
        }]);
        let base = Protocol::default();
        let h = config_hash(&data, &base).unwrap();
        assert_eq!(
            h,
            config_hash(
                &data,
                &Protocol {
                    workers: 4,
                    ..base.clone()
                }
            )
            .unwrap()
        );
        assert_ne!(
            h,
            config_hash(&data, &Protocol { runs: 3, ..base }).unwrap()
        );
    }
}
