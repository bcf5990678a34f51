//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `OCANCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, a UTF-8 JSON header, then every
//! tensor's values as little-endian `f64` in header order. The header lists
//! `kind`, free-form `meta`, and each tensor's name and shape. Values are
//! stored as raw bits, so a save/load cycle is bit-exact.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::autoencoder::{AutoencoderParams, OutputActivation};
use crate::detector::{Encoder, FraudDetector};
use crate::error::{OcanError, Result};
use crate::gan::{DensityProxy, Discriminator, Generator};
use crate::lstm::LstmParams;
use crate::params::ParamGroup;
use crate::plain_ae::PlainAutoencoder;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"OCANCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Value,
    tensors: Vec<TensorEntry>,
}

/// Named tensors plus metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, meta: Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            tensors: Vec::new(),
        }
    }

    /// Adds every tensor of `group` under `prefix.`.
    pub fn add_group(&mut self, prefix: &str, group: &ParamGroup) {
        for (name, value) in group.names().iter().zip(group.values()) {
            self.tensors
                .push((format!("{prefix}.{name}"), value.clone()));
        }
    }

    /// Tensors under `prefix.`, in stored order.
    pub fn group(&self, prefix: &str) -> Result<ParamGroup> {
        let lead = format!("{prefix}.");
        let mut group = ParamGroup::new();
        for (name, value) in &self.tensors {
            if let Some(rest) = name.strip_prefix(&lead) {
                group.push(rest, value.clone())?;
            }
        }
        if group.is_empty() {
            return Err(OcanError::Checkpoint(format!(
                "no tensors under '{prefix}' in a {} checkpoint",
                self.kind
            )));
        }
        Ok(group)
    }

    pub fn has_group(&self, prefix: &str) -> bool {
        let lead = format!("{prefix}.");
        self.tensors.iter().any(|(n, _)| n.starts_with(&lead))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(OcanError::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn meta_field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self.meta.get(key).ok_or_else(|| {
            OcanError::Checkpoint(format!("{} checkpoint lacks '{key}'", self.kind))
        })?;
        serde_json::from_value(v.clone())
            .map_err(|e| OcanError::Checkpoint(format!("field '{key}': {e}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let total: usize = self.tensors.iter().map(|(_, t)| t.len()).sum();
        let mut out = Vec::with_capacity(20 + header.len() + 8 * total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| OcanError::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not an OCAN checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(OcanError::Checkpoint(format!(
                "checkpoint format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = 20usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..body])?;
        let mut offset = body;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n = entry
                .rows
                .checked_mul(entry.cols)
                .ok_or_else(|| bad("tensor shape overflows"))?;
            let end = n
                .checked_mul(8)
                .and_then(|b| b.checked_add(offset))
                .filter(|&end| end <= bytes.len())
                .ok_or_else(|| {
                    OcanError::Checkpoint(format!("truncated data for tensor {}", entry.name))
                })?;
            let data = bytes[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            offset = end;
            let t = Tensor::from_vec(entry.rows, entry.cols, data)
                .map_err(|e| OcanError::Checkpoint(format!("tensor {}: {e}", entry.name)))?;
            tensors.push((entry.name, t));
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(OcanError::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| OcanError::Io(e.error))?;
    Ok(())
}

fn lstm_from(ckpt: &Checkpoint, prefix: &str) -> Result<LstmParams> {
    let group = ckpt.group(prefix)?;
    let (input, hidden) = group.get("w_c")?.shape();
    LstmParams::from_group(input, hidden, group)
}

pub fn lstm_ae_checkpoint(params: &AutoencoderParams, meta: Value) -> Checkpoint {
    let mut c = Checkpoint::new(
        "lstm-ae",
        json!({
            "input": params.input_width(),
            "hidden": params.hidden_width(),
            "activation": params.activation,
            "run": meta,
        }),
    );
    c.add_group("encoder", &params.encoder.group);
    c.add_group("decoder", &params.decoder.group);
    c.add_group("output", &params.output);
    c
}

fn lstm_ae_from(ckpt: &Checkpoint, prefix: &str) -> Result<AutoencoderParams> {
    let encoder = lstm_from(ckpt, &format!("{prefix}encoder"))?;
    let decoder = lstm_from(ckpt, &format!("{prefix}decoder"))?;
    let output = ckpt.group(&format!("{prefix}output"))?;
    let activation: OutputActivation = ckpt.meta_field("activation")?;
    let (h, d) = (encoder.hidden_width(), encoder.input_width());
    if decoder.input_width() != h
        || decoder.hidden_width() != h
        || output.names() != ["w_out", "b_out"]
        || output.value_at(0).shape() != (h, d)
        || output.value_at(1).shape() != (1, d)
    {
        return Err(OcanError::Checkpoint(
            "autoencoder components disagree on widths".into(),
        ));
    }
    Ok(AutoencoderParams {
        encoder,
        decoder,
        output,
        activation,
    })
}

pub fn lstm_ae_from_checkpoint(ckpt: &Checkpoint) -> Result<AutoencoderParams> {
    ckpt.expect_kind("lstm-ae")?;
    lstm_ae_from(ckpt, "")
}

pub fn plain_ae_checkpoint(params: &PlainAutoencoder, meta: Value) -> Checkpoint {
    let mut c = Checkpoint::new(
        "plain-ae",
        json!({"input": params.input_width(), "hidden": params.hidden_width(), "run": meta}),
    );
    c.add_group("plain", &params.group);
    c
}

pub fn plain_ae_from_checkpoint(ckpt: &Checkpoint) -> Result<PlainAutoencoder> {
    ckpt.expect_kind("plain-ae")?;
    PlainAutoencoder::from_group(ckpt.group("plain")?)
}

fn generator_from(group: ParamGroup) -> Result<Generator> {
    let names: Vec<&str> = group.names().iter().map(String::as_str).collect();
    let ok = names == ["w1", "b1", "w2", "b2"] && {
        let v = group.values();
        let (_, h) = v[0].shape();
        let (h2, out) = v[2].shape();
        v[1].shape() == (1, h) && h2 == h && v[3].shape() == (1, out)
    };
    if !ok {
        return Err(OcanError::Checkpoint(format!(
            "unexpected generator layout {names:?}"
        )));
    }
    Ok(Generator { group })
}

fn discriminator_from(group: ParamGroup) -> Result<Discriminator> {
    let names: Vec<&str> = group.names().iter().map(String::as_str).collect();
    let ok = names == ["w1", "b1", "w2", "b2", "w3", "b3"] && {
        let v = group.values();
        let (_, h) = v[0].shape();
        let (h2, f) = v[2].shape();
        let (f2, two) = v[4].shape();
        v[1].shape() == (1, h)
            && h2 == h
            && v[3].shape() == (1, f)
            && f2 == f
            && two == 2
            && v[5].shape() == (1, 2)
    };
    if !ok {
        return Err(OcanError::Checkpoint(format!(
            "unexpected discriminator layout {names:?}"
        )));
    }
    Ok(Discriminator { group })
}

/// Everything the detector and later training stages need.
#[derive(Clone, Debug, PartialEq)]
pub struct OcanBundle {
    pub encoder: Encoder,
    /// `complementary` or `regular`.
    pub mode: String,
    /// Absent for a regular-GAN bundle.
    pub proxy: Option<DensityProxy>,
    pub generator: Generator,
    pub discriminator: Discriminator,
    /// Configuration and seed of the producing run.
    pub manifest: Value,
}

impl OcanBundle {
    pub fn detector(&self, threshold: f64) -> Result<FraudDetector> {
        FraudDetector::new(self.encoder.clone(), self.discriminator.clone(), threshold)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let (encoder_kind, raw_width) = match &self.encoder {
            Encoder::Lstm(_) => ("lstm", None),
            Encoder::Plain(_) => ("plain", None),
            Encoder::Raw { width } => ("raw", Some(*width)),
        };
        let activation = match &self.encoder {
            Encoder::Lstm(p) => Some(p.activation),
            _ => None,
        };
        let mut c = Checkpoint::new(
            "ocan-bundle",
            json!({
                "encoder": encoder_kind,
                "raw_width": raw_width,
                "activation": activation,
                "mode": self.mode,
                "epsilon": self.proxy.as_ref().map(|p| p.epsilon),
                "manifest": self.manifest,
            }),
        );
        match &self.encoder {
            Encoder::Lstm(p) => {
                c.add_group("ae.encoder", &p.encoder.group);
                c.add_group("ae.decoder", &p.decoder.group);
                c.add_group("ae.output", &p.output);
            }
            Encoder::Plain(p) => c.add_group("plain", &p.group),
            Encoder::Raw { .. } => {}
        }
        if let Some(p) = &self.proxy {
            c.add_group("proxy", &p.discriminator.group);
        }
        c.add_group("generator", &self.generator.group);
        c.add_group("discriminator", &self.discriminator.group);
        c
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind("ocan-bundle")?;
        let kind: String = ckpt.meta_field("encoder")?;
        let encoder = match kind.as_str() {
            "lstm" => Encoder::Lstm(lstm_ae_from(ckpt, "ae.")?),
            "plain" => Encoder::Plain(PlainAutoencoder::from_group(ckpt.group("plain")?)?),
            "raw" => Encoder::Raw {
                width: ckpt.meta_field("raw_width")?,
            },
            other => {
                return Err(OcanError::Checkpoint(format!(
                    "unknown encoder kind '{other}'"
                )))
            }
        };
        let epsilon: Option<f64> = ckpt.meta_field("epsilon")?;
        let proxy = match (epsilon, ckpt.has_group("proxy")) {
            (Some(epsilon), true) => Some(DensityProxy {
                discriminator: discriminator_from(ckpt.group("proxy")?)?,
                epsilon,
            }),
            (None, false) => None,
            _ => {
                return Err(OcanError::Checkpoint(
                    "proxy tensors and epsilon must appear together".into(),
                ))
            }
        };
        let bundle = Self {
            encoder,
            mode: ckpt.meta_field("mode")?,
            proxy,
            generator: generator_from(ckpt.group("generator")?)?,
            discriminator: discriminator_from(ckpt.group("discriminator")?)?,
            manifest: ckpt.meta_field("manifest")?,
        };
        let width = bundle.encoder.output_width();
        let widths = [
            bundle.discriminator.input_width(),
            bundle.generator.output_width(),
            bundle
                .proxy
                .as_ref()
                .map_or(width, |p| p.discriminator.input_width()),
        ];
        if widths.iter().any(|&w| w != width) {
            return Err(OcanError::Checkpoint(format!(
                "encoder width {width} disagrees with GAN widths {widths:?}"
            )));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn bundle(encoder: Encoder, width: usize) -> OcanBundle {
        let mut rng = SeededRng::new(3);
        let proxy = Discriminator::new(width, 7, 5, &mut rng).unwrap();
        OcanBundle {
            encoder,
            mode: "complementary".into(),
            proxy: Some(DensityProxy {
                discriminator: proxy,
                epsilon: 0.123_456_789_012_345_67,
            }),
            generator: Generator::new(4, 6, width, &mut rng).unwrap(),
            discriminator: Discriminator::new(width, 7, 5, &mut rng).unwrap(),
            manifest: json!({"seed": 3}),
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let mut c = Checkpoint::new("test", json!({"a": 1}));
        let odd = Tensor::from_vec(1, 3, vec![0.1 + 0.2, -0.0, 1e-300]).unwrap();
        c.tensors.push(("x".into(), odd.clone()));
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        let bits: Vec<u64> = back.tensors[0]
            .1
            .data()
            .iter()
            .map(|v| v.to_bits())
            .collect();
        assert_eq!(
            bits,
            odd.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let c = Checkpoint::new("test", json!({}));
        let mut bytes = c.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        let mut c = Checkpoint::new("test", json!({}));
        c.tensors.push(("x".into(), Tensor::zeros(2, 2)));
        let bytes = c.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn lstm_bundle_round_trip() {
        let ae = AutoencoderParams::new(3, 5, OutputActivation::Sigmoid, &mut SeededRng::new(1))
            .unwrap();
        let b = bundle(Encoder::Lstm(ae), 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        b.save(&path).unwrap();
        assert_eq!(OcanBundle::load(&path).unwrap(), b);
    }

    #[test]
    fn raw_and_plain_bundles_round_trip() {
        let raw = bundle(Encoder::Raw { width: 4 }, 4);
        assert_eq!(
            OcanBundle::from_checkpoint(&raw.to_checkpoint()).unwrap(),
            raw
        );
        let plain = PlainAutoencoder::new(9, 4, &mut SeededRng::new(2)).unwrap();
        let b = bundle(Encoder::Plain(plain), 4);
        assert_eq!(OcanBundle::from_checkpoint(&b.to_checkpoint()).unwrap(), b);
    }

    #[test]
    fn width_mismatch_fails_at_load() {
        let ae = AutoencoderParams::new(3, 5, OutputActivation::Sigmoid, &mut SeededRng::new(1))
            .unwrap();
        let mut b = bundle(Encoder::Lstm(ae), 5);
        b.discriminator = Discriminator::new(6, 7, 5, &mut SeededRng::new(0)).unwrap();
        assert!(matches!(
            OcanBundle::from_checkpoint(&b.to_checkpoint()),
            Err(OcanError::Checkpoint(_))
        ));
    }

    #[test]
    fn autoencoder_checkpoint_round_trip() {
        let ae = AutoencoderParams::new(4, 6, OutputActivation::Identity, &mut SeededRng::new(5))
            .unwrap();
        let c = lstm_ae_checkpoint(&ae, json!({"epochs": 1}));
        assert_eq!(lstm_ae_from_checkpoint(&c).unwrap(), ae);
        assert!(plain_ae_from_checkpoint(&c).is_err());
    }

    #[test]
    fn missing_file_is_reported() {
        let err = Checkpoint::load(Path::new("/nonexistent/model.ckpt")).unwrap_err();
        assert!(matches!(err, OcanError::MissingFile(_)));
    }
}
