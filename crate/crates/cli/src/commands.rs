use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ocan::autoencoder::{train_autoencoder, AeConfig, OutputActivation};
use ocan::checkpoint::{lstm_ae_checkpoint, plain_ae_checkpoint, write_atomic, OcanBundle};
use ocan::data::{
    generate_synthetic, generate_synthetic_vectors, load_events, vectors_to_tensor,
    write_sequences, write_vectors, SplitSpec, SyntheticConfig, SyntheticVectorConfig,
};
use ocan::detector::{detect_user, label_for, Encoder, Prediction, UserStream};
use ocan::eval::{confusion_metrics, dbscan_cluster, default_dbscan_params, roc_auc};
use ocan::experiment::{
    probe_epoch, probes_csv, report_csv, run_experiment, summary_kv, ExperimentData, ProbeRow,
    Protocol, VectorMode,
};
use ocan::gan::{
    train_complementary_gan_with, train_regular_gan_with, DensityProxy, Discriminator, EpochStats,
    GanConfig, Generator, TrainedGan,
};
use ocan::plain_ae::{train_plain_autoencoder, PlainAeConfig};
use ocan::rng::{sample_noise, SeededRng};
use ocan::sequence::Label;
use ocan::tensor::Tensor;
use ocan::{OcanError, Result};
use serde_json::json;

use crate::corpus::{
    check_compatible, encoder_for, join_labels, label_name, load_encoder, load_predictions,
    represent, Corpus,
};
use crate::*;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::TrainAe(a) => train_ae(a),
        Command::TrainGan(a) => train_gan(a),
        Command::Detect(a) => detect(a),
        Command::EarlyDetect(a) => early_detect(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Probe(a) => probe(a),
        Command::Experiment(a) => experiment(a),
        Command::Cluster(a) => cluster(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn check_threshold(name: &str, t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(OcanError::InvalidArgument(format!(
            "{name} {t} outside [0, 1]"
        )));
    }
    Ok(())
}

fn gen_synthetic(a: GenSyntheticArgs) -> Result<()> {
    let tmp_dir = a
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(tmp_dir)?;
    match a.kind {
        DataKind::Sequences => {
            let cfg = SyntheticConfig {
                benign_users: a.benign,
                malicious_users: a.malicious,
                min_len: a.min_len,
                max_len: a.max_len,
                overlap: a.overlap,
                seed: a.seed.seed,
                ..SyntheticConfig::default()
            };
            write_sequences(tmp.path(), &generate_synthetic(&cfg)?)?;
        }
        DataKind::Vectors => {
            let cfg = SyntheticVectorConfig {
                benign: a.benign,
                malicious: a.malicious,
                width: a.width,
                separation: a.separation,
                seed: a.seed.seed,
            };
            write_vectors(tmp.path(), &generate_synthetic_vectors(&cfg)?)?;
        }
    }
    tmp.persist(&a.out).map_err(|e| OcanError::Io(e.error))?;
    println!(
        "wrote {} benign and {} malicious records to {}",
        a.benign,
        a.malicious,
        a.out.display()
    );
    Ok(())
}

fn losses_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{},{l}", e + 1);
    }
    out
}

fn train_ae(a: TrainAeArgs) -> Result<()> {
    let mut corpus = Corpus::load(&a.data, a.length.filter()?)?;
    let skipped = corpus.retain_benign();
    corpus.require_nonempty("training data")?;
    let meta =
        json!({ "seed": a.seed.seed, "train_rows": corpus.len(), "skipped_malicious": skipped });
    let (ckpt, losses) = match (a.encoder, &corpus) {
        (AeKind::Lstm, Corpus::Sequences(_)) => {
            let cfg = AeConfig {
                hidden: a.hidden.unwrap_or(200),
                epochs: a.epochs,
                batch_size: a.batch_size,
                seed: a.seed.seed,
                output: match a.output {
                    Activation::Sigmoid => OutputActivation::Sigmoid,
                    Activation::Identity => OutputActivation::Identity,
                },
                ..AeConfig::default()
            };
            let trained = train_autoencoder(&corpus.sequences(), &cfg)?;
            let mut meta = meta;
            meta["config"] = serde_json::to_value(cfg)?;
            (
                lstm_ae_checkpoint(&trained.params, meta),
                trained.epoch_losses,
            )
        }
        (AeKind::Plain, Corpus::Vectors(v)) => {
            let cfg = PlainAeConfig {
                hidden: a.hidden.unwrap_or(50),
                epochs: a.epochs,
                batch_size: a.batch_size,
                seed: a.seed.seed,
                ..PlainAeConfig::default()
            };
            let trained = train_plain_autoencoder(&vectors_to_tensor(v)?, &cfg)?;
            let mut meta = meta;
            meta["config"] = serde_json::to_value(cfg)?;
            (
                plain_ae_checkpoint(&trained.params, meta),
                trained.epoch_losses,
            )
        }
        (AeKind::Lstm, _) => {
            return Err(OcanError::InvalidArgument(
                "the lstm encoder needs a sequence file".into(),
            ))
        }
        (AeKind::Plain, _) => {
            return Err(OcanError::InvalidArgument(
                "the plain encoder needs a vector file".into(),
            ))
        }
    };
    ckpt.save(&a.out)?;
    if let Some(path) = &a.losses {
        write_text(path, &losses_csv(&losses))?;
    }
    println!(
        "trained on {} records ({skipped} malicious skipped), final loss {}",
        corpus.len(),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

impl GanArgs {
    fn config(&self, seed: u64) -> Result<GanConfig> {
        let cfg = GanConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            noise_dim: self.noise_dim,
            g_hidden: self.g_hidden,
            d_hidden: self.d_hidden,
            d_features: self.d_features,
            quantile_k: self.quantile_k,
            seed,
            ..GanConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from(
        "epoch,d_objective,g_objective,mean_p_real,mean_p_generated,feature_distance\n",
    );
    for s in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.epoch,
            s.d_objective,
            s.g_objective,
            s.mean_p_real,
            s.mean_p_generated,
            s.feature_distance
        );
    }
    out
}

/// Encoded benign training rows and the encoder that produced them.
fn training_rows(
    data: &Path,
    ae: Option<&Path>,
    length: &LengthArgs,
) -> Result<(Encoder, Tensor, usize)> {
    let mut corpus = Corpus::load(data, length.filter()?)?;
    let skipped = corpus.retain_benign();
    corpus.require_nonempty("training data")?;
    let encoder = encoder_for(ae, &corpus)?;
    let rows = represent(&encoder, &corpus)?;
    Ok((encoder, rows, skipped))
}

fn load_proxy(path: &Path, encoder: &Encoder, k: usize, rows: &Tensor) -> Result<DensityProxy> {
    let bundle = OcanBundle::load(path)?;
    if bundle.mode != "regular" {
        return Err(OcanError::Checkpoint(format!(
            "{} is a {} bundle; the proxy must come from a regular GAN",
            path.display(),
            bundle.mode
        )));
    }
    if &bundle.encoder != encoder {
        return Err(OcanError::Checkpoint(format!(
            "{} was trained on a different encoder",
            path.display()
        )));
    }
    DensityProxy::fit(bundle.discriminator, rows, k)
}

type EpochHook<'a> = &'a mut dyn FnMut(usize, &Generator, &Discriminator) -> Result<()>;

/// Trains the requested GAN; complementary mode fits a proxy first.
fn fit_gan(
    mode: GanMode,
    rows: &Tensor,
    encoder: &Encoder,
    proxy_path: Option<&Path>,
    cfg: &GanConfig,
    hook: EpochHook,
) -> Result<(TrainedGan, Option<DensityProxy>, &'static str)> {
    match mode {
        GanMode::Regular => Ok((train_regular_gan_with(rows, cfg, hook)?, None, "none")),
        GanMode::Complementary => {
            let (proxy, source) = match proxy_path {
                Some(p) => (load_proxy(p, encoder, cfg.quantile_k, rows)?, "loaded"),
                None => {
                    let regular = train_regular_gan_with(rows, cfg, &mut |_, _, _| Ok(()))?;
                    (
                        DensityProxy::fit(regular.discriminator, rows, cfg.quantile_k)?,
                        "trained",
                    )
                }
            };
            let trained = train_complementary_gan_with(rows, &proxy, cfg, hook)?;
            Ok((trained, Some(proxy), source))
        }
    }
}

fn mode_name(mode: GanMode) -> &'static str {
    match mode {
        GanMode::Complementary => "complementary",
        GanMode::Regular => "regular",
    }
}

fn train_gan(a: TrainGanArgs) -> Result<()> {
    if a.proxy.is_some() && a.mode == GanMode::Regular {
        return Err(OcanError::InvalidArgument(
            "--proxy only applies to complementary mode".into(),
        ));
    }
    let cfg = a.gan.config(a.seed.seed)?;
    let (encoder, rows, skipped) = training_rows(&a.data, a.ae.as_deref(), &a.length)?;
    let (trained, proxy, source) = fit_gan(
        a.mode,
        &rows,
        &encoder,
        a.proxy.as_deref(),
        &cfg,
        &mut |_, _, _| Ok(()),
    )?;
    let epsilon = proxy.as_ref().map(|p| p.epsilon);
    let bundle = OcanBundle {
        encoder,
        mode: mode_name(a.mode).into(),
        proxy,
        generator: trained.generator,
        discriminator: trained.discriminator,
        manifest: json!({
            "gan": cfg,
            "seed": a.seed.seed,
            "train_rows": rows.rows(),
            "skipped_malicious": skipped,
            "proxy": source,
        }),
    };
    bundle.save(&a.out)?;
    if let Some(path) = &a.history {
        write_text(path, &history_csv(&trained.history))?;
    }
    match epsilon {
        Some(e) => println!(
            "trained {} GAN on {} rows, epsilon {e}",
            mode_name(a.mode),
            rows.rows()
        ),
        None => println!("trained {} GAN on {} rows", mode_name(a.mode), rows.rows()),
    }
    Ok(())
}

fn predictions_csv(preds: &[Prediction]) -> String {
    let mut out = String::from("user_id,p_benign,label\n");
    for p in preds {
        let _ = writeln!(out, "{},{},{}", p.user_id, p.p_benign, label_name(p.label));
    }
    out
}

fn detect(a: DetectArgs) -> Result<()> {
    check_threshold("threshold", a.threshold)?;
    let bundle = OcanBundle::load(&a.model)?;
    let corpus = Corpus::load(&a.data, a.length.filter()?)?;
    check_compatible(&bundle.encoder, &corpus)?;
    let det = bundle.detector(a.threshold)?;
    let preds = match &corpus {
        Corpus::Sequences(s) => s
            .iter()
            .map(|s| detect_user(&det, &s.sequence))
            .collect::<Result<Vec<_>>>()?,
        Corpus::Vectors(v) => v
            .iter()
            .map(|v| det.detect_vector(&v.id, &v.values))
            .collect::<Result<Vec<_>>>()?,
    };
    write_text(&a.out, &predictions_csv(&preds))?;
    let flagged = preds.iter().filter(|p| p.label == Label::Malicious).count();
    println!("scored {} records, {flagged} malicious", preds.len());
    Ok(())
}

fn early_detect(a: EarlyDetectArgs) -> Result<()> {
    check_threshold("threshold", a.threshold)?;
    check_threshold("flag threshold", a.flag_threshold)?;
    let bundle = OcanBundle::load(&a.model)?;
    if !matches!(bundle.encoder, Encoder::Lstm(_)) {
        return Err(OcanError::Checkpoint(
            "early detection needs a sequence encoder".into(),
        ));
    }
    let events = load_events(&a.data)?;
    if let Some(e) = events.first() {
        if e.values.len() != bundle.encoder.input_width() {
            return Err(OcanError::Checkpoint(format!(
                "encoder expects {} features, data has {}",
                bundle.encoder.input_width(),
                e.values.len()
            )));
        }
    }
    let det = bundle.detector(a.threshold)?;
    let mut order: Vec<String> = Vec::new();
    let mut streams: HashMap<String, UserStream> = HashMap::new();
    for ev in &events {
        if !streams.contains_key(&ev.user_id) {
            order.push(ev.user_id.clone());
            streams.insert(ev.user_id.clone(), det.start_stream(&ev.user_id)?);
        }
        let stream = streams.get_mut(&ev.user_id).expect("inserted above");
        stream.push(&det, ev.step, &ev.values, a.flag_threshold)?;
    }
    let mut users = String::from("user_id,p_benign,label,first_flag_step\n");
    let mut steps = String::from("user_id,step,p_benign,label\n");
    let mut flagged = 0;
    for id in &order {
        let (scores, first_flag) = streams.remove(id).expect("one stream per user").finish();
        let last = scores
            .last()
            .expect("a stream exists only after its first event");
        let flag = first_flag.map_or(String::new(), |s| s.to_string());
        flagged += usize::from(first_flag.is_some());
        let _ = writeln!(
            users,
            "{id},{},{},{flag}",
            last.p_benign,
            label_name(label_for(last.p_benign, a.threshold))
        );
        for s in &scores {
            let _ = writeln!(
                steps,
                "{id},{},{},{}",
                s.step,
                s.p_benign,
                label_name(s.label)
            );
        }
    }
    write_text(&a.out, &users)?;
    if let Some(path) = &a.steps {
        write_text(path, &steps)?;
    }
    println!(
        "streamed {} events for {} users, {flagged} flagged",
        events.len(),
        order.len()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let preds = load_predictions(&a.predictions)?;
    if preds.is_empty() {
        return Err(OcanError::Insufficient("no predictions to evaluate".into()));
    }
    let truth = Corpus::load(&a.labels, None)?;
    let actual = join_labels(&preds, &truth)?;
    let predicted: Vec<Label> = preds.iter().map(|p| p.label).collect();
    let m = confusion_metrics(&predicted, &actual)?;
    let c = m.counts;
    let mut out = format!(
        "precision={}\nrecall={}\nf1={}\naccuracy={}\ntp={}\nfp={}\ntn={}\nfn={}\ndegenerate={}\n",
        m.precision, m.recall, m.f1, m.accuracy, c.tp, c.fp, c.tn, c.fn_, m.degenerate
    );
    let both = actual.contains(&Label::Benign) && actual.contains(&Label::Malicious);
    if both {
        let scores: Vec<f64> = preds.iter().map(|p| -p.p_benign).collect();
        let roc = roc_auc(&scores, &actual)?;
        let _ = writeln!(out, "auc={}", roc.auc);
        if let Some(path) = &a.roc {
            let mut text = String::from("fpr,tpr\n");
            for (f, t) in &roc.points {
                let _ = writeln!(text, "{f},{t}");
            }
            write_text(path, &text)?;
        }
    } else {
        out.push_str("auc=undefined\n");
        if a.roc.is_some() {
            return Err(OcanError::Insufficient(
                "ROC needs both classes in the labels".into(),
            ));
        }
    }
    write_text(&a.out, &out)?;
    println!("f1={} over {} records", m.f1, preds.len());
    Ok(())
}

fn probe(a: ProbeArgs) -> Result<()> {
    if a.proxy.is_some() && a.mode == GanMode::Regular {
        return Err(OcanError::InvalidArgument(
            "--proxy only applies to complementary mode".into(),
        ));
    }
    let cfg = a.gan.config(a.seed.seed)?;
    let (encoder, rows, _) = training_rows(&a.data, a.ae.as_deref(), &a.length)?;
    let probe_set = Corpus::load(&a.probe, a.length.filter()?)?;
    if probe_set.labels().iter().any(|(_, l)| l.is_none()) {
        return Err(OcanError::Insufficient("probe set must be labeled".into()));
    }
    let (benign, malicious) = probe_set.split_by_label();
    benign.require_nonempty("benign probe set")?;
    malicious.require_nonempty("malicious probe set")?;
    let benign = represent(&encoder, &benign)?;
    let malicious = represent(&encoder, &malicious)?;
    let mut noise_rng = SeededRng::derive(cfg.seed, 99);
    let noise = sample_noise(&mut noise_rng, a.samples.max(1), cfg.noise_dim)?;
    let mut rows_out: Vec<ProbeRow> = Vec::new();
    fit_gan(
        a.mode,
        &rows,
        &encoder,
        a.proxy.as_deref(),
        &cfg,
        &mut |e, g, d| {
            rows_out.push(probe_epoch(e, g, d, &benign, &malicious, &noise)?);
            Ok(())
        },
    )?;
    write_text(&a.out, &probes_csv(&rows_out))?;
    if let Some(last) = rows_out.last() {
        println!(
            "final epoch: real_benign={} generated={} malicious={}",
            last.real_benign, last.generated, last.malicious
        );
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    check_threshold("threshold", a.threshold)?;
    let corpus = Corpus::load(&a.data, a.length.filter()?)?;
    let gan = a.gan.config(a.seed)?;
    let mut protocol = Protocol {
        split: SplitSpec {
            train_benign: a.train_benign,
            test_benign: a.test_benign,
            test_malicious: a.test_malicious,
            seed: a.seed,
        },
        gan,
        runs: a.runs,
        seed_base: a.seed,
        threshold: a.threshold,
        include_regular: !a.no_regular,
        workers: a.workers.max(1),
        ..Protocol::default()
    };
    protocol.ae.epochs = a.ae_epochs;
    protocol.plain.epochs = a.ae_epochs;
    protocol.ae.output = match a.output {
        Activation::Sigmoid => OutputActivation::Sigmoid,
        Activation::Identity => OutputActivation::Identity,
    };
    let data = match corpus {
        Corpus::Sequences(s) => {
            if matches!(
                a.encoder,
                Some(ExperimentEncoder::Plain | ExperimentEncoder::Raw)
            ) {
                return Err(OcanError::InvalidArgument(
                    "sequence data uses the lstm encoder".into(),
                ));
            }
            protocol.ae.hidden = a.hidden.unwrap_or(200);
            ExperimentData::Sequences(s)
        }
        Corpus::Vectors(v) => {
            protocol.vector_mode = match a.encoder {
                Some(ExperimentEncoder::Lstm) => {
                    return Err(OcanError::InvalidArgument(
                        "vector data uses the plain or raw encoder".into(),
                    ))
                }
                Some(ExperimentEncoder::Raw) => VectorMode::Raw,
                _ => VectorMode::Representation,
            };
            protocol.plain.hidden = a.hidden.unwrap_or(50);
            ExperimentData::Vectors(v)
        }
    };
    let report = run_experiment(&data, &protocol)?;
    write_text(&a.report, &report_csv(&report))?;
    if let Some(path) = &a.summary {
        write_text(path, &summary_kv(&report))?;
    }
    if let Some(path) = &a.probes {
        let mut text = String::from("seed,model,epoch,curve,mean_p_benign\n");
        for run in &report.runs {
            for (model, rows) in [("ocan", &run.probes), ("ocan-r", &run.regular_probes)] {
                for line in probes_csv(rows).lines().skip(1) {
                    let _ = writeln!(text, "{},{model},{line}", run.seed);
                }
            }
        }
        write_text(path, &text)?;
    }
    let failed = report.runs.iter().filter(|r| r.error.is_some()).count();
    for model in ["ocan", "ocan-r"] {
        if let Some(f1) = report.mean(model, "f1") {
            println!("{model}: mean f1 {f1}");
        }
    }
    if failed == report.runs.len() {
        let first = report
            .runs
            .iter()
            .find_map(|r| r.error.clone())
            .unwrap_or_default();
        return Err(OcanError::Insufficient(format!(
            "every run failed; first error: {first}"
        )));
    }
    if failed > 0 {
        eprintln!(
            "ocan: warning: {failed} of {} runs failed, see {}",
            report.runs.len(),
            a.report.display()
        );
    }
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let corpus = Corpus::load(&a.data, a.length.filter()?)?;
    corpus.require_nonempty("data")?;
    let encoder = match &a.model {
        Some(p) => load_encoder(p)?,
        None => encoder_for(None, &corpus)?,
    };
    let x = represent(&encoder, &corpus)?;
    let (default_eps, default_min) = default_dbscan_params(&x)?;
    let labels: Vec<Option<Label>> = corpus.labels().into_iter().map(|(_, l)| l).collect();
    let labels: Option<Vec<Label>> = labels.into_iter().collect();
    let report = dbscan_cluster(
        &x,
        labels.as_deref(),
        a.eps.unwrap_or(default_eps),
        a.min_pts.unwrap_or(default_min),
    )?;
    let mut text = String::from("cluster,size,benign,malicious,unlabeled\n");
    for (i, c) in report.clusters.iter().enumerate() {
        let _ = writeln!(
            text,
            "{i},{},{},{},{}",
            c.size(),
            c.benign,
            c.malicious,
            c.unlabeled
        );
    }
    let n = &report.noise;
    let _ = writeln!(
        text,
        "noise,{},{},{},{}",
        n.size(),
        n.benign,
        n.malicious,
        n.unlabeled
    );
    write_text(&a.out, &text)?;
    println!(
        "eps={} min_pts={}: {} clusters, {} isolated",
        report.eps,
        report.min_pts,
        report.num_clusters(),
        report.isolated()
    );
    Ok(())
}
