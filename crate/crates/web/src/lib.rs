//! Browser demo: a 2-D complementary GAN next to a regular one, and an
//! interactive ROC curve.

use ocan::detector::label_for;
use ocan::eval::{confusion_metrics, roc_auc};
use ocan::gan::{
    discriminator_forward, generator_forward, train_complementary_gan, train_regular_gan,
    DensityProxy, GanConfig, TrainedGan,
};
use ocan::rng::{sample_noise, SeededRng};
use ocan::sequence::Label;
use ocan::tensor::Tensor;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Benign points: two tight blobs inside the generator's `(-1, 1)` range.
const CENTERS: [(f64, f64); 2] = [(-0.4, 0.3), (0.45, -0.35)];
const SPREAD: f64 = 0.12;

#[derive(Debug, Serialize)]
pub struct GanDemo {
    pub mode: String,
    pub epsilon: Option<f64>,
    pub benign: Vec<[f64; 2]>,
    pub generated: Vec<[f64; 2]>,
    /// `resolution x resolution` benign probabilities over `[-1, 1]^2`, row 0 at y = 1.
    pub grid: Vec<f64>,
    pub resolution: usize,
    pub mean_p_real: Vec<f64>,
    pub mean_p_generated: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct RocDemo {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn config(seed: u64, epochs: usize) -> GanConfig {
    GanConfig {
        epochs,
        batch_size: 32,
        noise_dim: 8,
        g_hidden: 32,
        d_hidden: 32,
        d_features: 16,
        quantile_k: 5,
        seed,
        ..GanConfig::default()
    }
}

pub fn benign_points(n: usize, seed: u64) -> ocan::Result<Tensor> {
    let mut rng = SeededRng::derive(seed, 1);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let (cx, cy) = CENTERS[i % CENTERS.len()];
            vec![cx + SPREAD * rng.normal(), cy + SPREAD * rng.normal()]
        })
        .collect();
    Tensor::from_rows(&rows)
}

fn pairs(t: &Tensor) -> Vec<[f64; 2]> {
    (0..t.rows()).map(|r| [t.row(r)[0], t.row(r)[1]]).collect()
}

/// Trains on the blobs and reports samples plus the discriminator surface.
pub fn run_gan_demo(
    complementary: bool,
    seed: u64,
    epochs: usize,
    resolution: usize,
) -> ocan::Result<GanDemo> {
    let real = benign_points(400, seed)?;
    let cfg = config(seed, epochs);
    let regular = train_regular_gan(&real, &cfg)?;
    let (trained, epsilon): (TrainedGan, Option<f64>) = if complementary {
        let proxy = DensityProxy::fit(regular.discriminator, &real, cfg.quantile_k)?;
        (
            train_complementary_gan(&real, &proxy, &cfg)?,
            Some(proxy.epsilon),
        )
    } else {
        (regular, None)
    };
    let mut rng = SeededRng::derive(seed, 2);
    let generated = generator_forward(
        &trained.generator,
        &sample_noise(&mut rng, 300, cfg.noise_dim)?,
    )?;
    let resolution = resolution.max(2);
    let step = 2.0 / (resolution - 1) as f64;
    let cells: Vec<Vec<f64>> = (0..resolution * resolution)
        .map(|i| {
            vec![
                -1.0 + step * (i % resolution) as f64,
                1.0 - step * (i / resolution) as f64,
            ]
        })
        .collect();
    let grid = discriminator_forward(&trained.discriminator, &Tensor::from_rows(&cells)?)?
        .p_benign
        .data()
        .to_vec();
    Ok(GanDemo {
        mode: if complementary {
            "complementary"
        } else {
            "regular"
        }
        .into(),
        epsilon,
        benign: pairs(&real),
        generated: pairs(&generated),
        grid,
        resolution,
        mean_p_real: trained.history.iter().map(|s| s.mean_p_real).collect(),
        mean_p_generated: trained.history.iter().map(|s| s.mean_p_generated).collect(),
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Simulated detector output: benign users score higher by `separation` logits.
pub fn run_roc_demo(separation: f64, n: usize, threshold: f64, seed: u64) -> ocan::Result<RocDemo> {
    let mut rng = SeededRng::derive(seed, 3);
    let mut p = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for label in [Label::Benign, Label::Malicious] {
        let centre = if label == Label::Benign {
            separation / 2.0
        } else {
            -separation / 2.0
        };
        for _ in 0..n {
            p.push(sigmoid(centre + rng.normal()));
            labels.push(label);
        }
    }
    let predicted: Vec<Label> = p.iter().map(|&v| label_for(v, threshold)).collect();
    let m = confusion_metrics(&predicted, &labels)?;
    let scores: Vec<f64> = p.iter().map(|v| -v).collect();
    let roc = roc_auc(&scores, &labels)?;
    Ok(RocDemo {
        points: roc.points,
        auc: roc.auc,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        accuracy: m.accuracy,
    })
}

fn to_js<T: Serialize>(r: ocan::Result<T>) -> Result<String, JsValue> {
    let v = r.map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string()))
}

/// JSON of [`GanDemo`]; `mode` is `complementary` or `regular`.
#[wasm_bindgen(js_name = ganDemo)]
pub fn gan_demo(mode: &str, seed: u32, epochs: u32, resolution: u32) -> Result<String, JsValue> {
    let complementary = match mode {
        "complementary" => true,
        "regular" => false,
        other => return Err(JsValue::from_str(&format!("unknown mode '{other}'"))),
    };
    to_js(run_gan_demo(
        complementary,
        u64::from(seed),
        epochs as usize,
        resolution as usize,
    ))
}

/// JSON of [`RocDemo`].
#[wasm_bindgen(js_name = rocDemo)]
pub fn roc_demo(separation: f64, n: u32, threshold: f64, seed: u32) -> Result<String, JsValue> {
    to_js(run_roc_demo(
        separation,
        n as usize,
        threshold,
        u64::from(seed),
    ))
}
