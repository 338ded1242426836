//! Versioned binary persistence for trained models.
//!
//! A checkpoint stores one model together with the seed and the effective
//! hyperparameters that produced it, and round-trips bitwise: `load(save(m))`
//! reproduces `m` exactly, and saving the loaded copy yields identical bytes.
//!
//! Format, version 1, all multi-byte values little-endian:
//!
//! ```text
//! magic           4 bytes  "RCKP"
//! version         u32      1
//! kind            u8       0 standard codec, 1 refinement codec, 2 angle predictor
//! seed            u64
//! config entries  u32      then per entry: key length u32, key bytes (UTF-8),
//!                          value length u32, value bytes (UTF-8); keys strictly
//!                          ascending so equal configs serialize identically
//! payload                  kind-specific, see below
//! ```
//!
//! A network is stored as a layer count `u32` followed by, per layer: input
//! width `u32`, output width `u32`, activation tag `u8` (0 identity, 1 relu,
//! 2 tanh, 3 sigmoid), `out·in` weight reals (row-major), `out` bias reals.
//! A codebook is a center count `u32`, the temperature real, a learnable
//! flag `u8`, and the centers. All reals are IEEE-754 binary64, little-endian,
//! copied bit for bit.
//!
//! Payloads: kind 0 is encoder network, decoder network, codebook; kind 1 is
//! the stage-1 width `u32`, encoder, both decoders, codebook; kind 2 is the
//! predictor network. Trailing bytes after the payload are a format error.
//! The kind tag describes the model's shape, not how it was trained: a
//! robustly trained codec and a plainly trained one of the same architecture
//! serialize under the same kind.

use std::fs;
use std::path::Path;

use crate::codec::{StandardCompressor, StructuredCompressor};
use crate::error::{Error, Result};
use crate::groupshift::AnglePredictor;
use crate::nn::{Activation, DenseLayer, Network, Tensor};
use crate::quantizer::Codebook;

/// Current (and only) on-disk format version.
pub const FORMAT_VERSION: u32 = 1;

const MAGIC: [u8; 4] = *b"RCKP";

// ---------------------------------------------------------------------------
// Checkpoint type
// ---------------------------------------------------------------------------

/// The model stored in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelPayload {
    Standard(StandardCompressor),
    Refinement(StructuredCompressor),
    AnglePredictor(AnglePredictor),
}

impl ModelPayload {
    fn kind_tag(&self) -> u8 {
        match self {
            ModelPayload::Standard(_) => 0,
            ModelPayload::Refinement(_) => 1,
            ModelPayload::AnglePredictor(_) => 2,
        }
    }

    /// Human-readable kind name used by CLI summaries.
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelPayload::Standard(_) => "standard",
            ModelPayload::Refinement(_) => "refinement",
            ModelPayload::AnglePredictor(_) => "angle-predictor",
        }
    }
}

/// One saved model plus the seed and config echo that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    payload: ModelPayload,
    seed: u64,
    config: Vec<(String, String)>,
}

impl Checkpoint {
    /// Builds a checkpoint; the config echo is sorted by key and must not
    /// contain duplicates, so the serialization is canonical.
    pub fn new(
        payload: ModelPayload,
        seed: u64,
        mut config: Vec<(String, String)>,
    ) -> Result<Self> {
        config.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in config.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::invalid(format!(
                    "duplicate config key {:?} in checkpoint echo",
                    pair[0].0
                )));
            }
        }
        Ok(Checkpoint {
            payload,
            seed,
            config,
        })
    }

    pub fn payload(&self) -> &ModelPayload {
        &self.payload
    }

    pub fn into_payload(self) -> ModelPayload {
        self.payload
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &[(String, String)] {
        &self.config
    }

    /// Serializes to the version-1 byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        write_u32(&mut out, FORMAT_VERSION);
        out.push(self.payload.kind_tag());
        out.extend_from_slice(&self.seed.to_le_bytes());
        write_u32(&mut out, self.config.len() as u32);
        for (k, v) in &self.config {
            write_str(&mut out, k);
            write_str(&mut out, v);
        }
        match &self.payload {
            ModelPayload::Standard(m) => {
                write_network(&mut out, m.encoder());
                write_network(&mut out, m.decoder());
                write_codebook(&mut out, m.codebook());
            }
            ModelPayload::Refinement(m) => {
                write_u32(&mut out, m.m1() as u32);
                write_network(&mut out, m.encoder());
                write_network(&mut out, m.decoder1());
                write_network(&mut out, m.decoder2());
                write_codebook(&mut out, m.codebook());
            }
            ModelPayload::AnglePredictor(p) => {
                write_network(&mut out, p.network());
            }
        }
        out
    }

    /// Parses the byte layout back; the origin string names the source in
    /// error messages.
    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let mut r = Reader::new(bytes, origin);
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(r.format_error(0, format!("bad magic {magic:02x?}, expected \"RCKP\"")));
        }
        let version_at = r.pos;
        let version = r.read_u32()?;
        if version != FORMAT_VERSION {
            return Err(r.format_error(
                version_at,
                format!("unsupported format version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let kind_at = r.pos;
        let kind = r.read_u8()?;
        let seed = r.read_u64()?;
        let entries = r.read_u32()? as usize;
        let mut config = Vec::with_capacity(entries);
        for _ in 0..entries {
            let key = r.read_str()?;
            let value = r.read_str()?;
            config.push((key, value));
        }
        for pair in config.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(r.format_error(
                    kind_at,
                    format!("config keys not strictly ascending at {:?}", pair[1].0),
                ));
            }
        }
        let payload = match kind {
            0 => {
                let encoder = read_network(&mut r)?;
                let decoder = read_network(&mut r)?;
                let codebook = read_codebook(&mut r)?;
                ModelPayload::Standard(StandardCompressor::from_parts(encoder, decoder, codebook)?)
            }
            1 => {
                let m1 = r.read_u32()? as usize;
                let encoder = read_network(&mut r)?;
                let decoder1 = read_network(&mut r)?;
                let decoder2 = read_network(&mut r)?;
                let codebook = read_codebook(&mut r)?;
                ModelPayload::Refinement(StructuredCompressor::from_parts(
                    encoder, decoder1, decoder2, codebook, m1,
                )?)
            }
            2 => ModelPayload::AnglePredictor(AnglePredictor::from_network(read_network(&mut r)?)?),
            other => {
                return Err(r.format_error(kind_at, format!("unknown model kind tag {other}")));
            }
        };
        if r.pos != bytes.len() {
            return Err(r.format_error(
                r.pos,
                format!("{} trailing bytes after the payload", bytes.len() - r.pos),
            ));
        }
        Ok(Checkpoint {
            payload,
            seed,
            config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        Checkpoint::from_bytes(&bytes, &path.display().to_string())
    }
}

// ---------------------------------------------------------------------------
// Field writers
// ---------------------------------------------------------------------------

fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    write_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Identity => 0,
        Activation::Relu => 1,
        Activation::Tanh => 2,
        Activation::Sigmoid => 3,
    }
}

fn write_network(out: &mut Vec<u8>, net: &Network) {
    write_u32(out, net.layers().len() as u32);
    for layer in net.layers() {
        write_u32(out, layer.in_width() as u32);
        write_u32(out, layer.out_width() as u32);
        out.push(activation_tag(layer.activation()));
        for &w in layer.weights().data() {
            write_f64(out, w);
        }
        for &b in layer.bias().data() {
            write_f64(out, b);
        }
    }
}

fn write_codebook(out: &mut Vec<u8>, cb: &Codebook) {
    write_u32(out, cb.len() as u32);
    write_f64(out, cb.temperature());
    out.push(cb.learnable() as u8);
    for &c in cb.centers() {
        write_f64(out, c);
    }
}

// ---------------------------------------------------------------------------
// Field readers
// ---------------------------------------------------------------------------

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], origin: &'a str) -> Self {
        Reader {
            bytes,
            pos: 0,
            origin,
        }
    }

    fn format_error(&self, offset: usize, reason: String) -> Error {
        Error::Format {
            path: self.origin.to_string(),
            reason: format!("{reason} at byte offset {offset}"),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.format_error(
                self.pos,
                format!(
                    "truncated: needed {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn read_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn read_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn read_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn read_str(&mut self) -> Result<String> {
        let len = self.read_u32()? as usize;
        let at = self.pos;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| self.format_error(at, "config string is not UTF-8".to_string()))
    }
}

fn read_activation(r: &mut Reader<'_>) -> Result<Activation> {
    let at = r.pos;
    match r.read_u8()? {
        0 => Ok(Activation::Identity),
        1 => Ok(Activation::Relu),
        2 => Ok(Activation::Tanh),
        3 => Ok(Activation::Sigmoid),
        other => Err(r.format_error(at, format!("unknown activation tag {other}"))),
    }
}

fn read_network(r: &mut Reader<'_>) -> Result<Network> {
    let n_layers = r.read_u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_width = r.read_u32()? as usize;
        let out_width = r.read_u32()? as usize;
        let activation = read_activation(r)?;
        let at = r.pos;
        if in_width == 0 || out_width == 0 {
            return Err(r.format_error(at, format!("bad layer shape {out_width}x{in_width}")));
        }
        let mut weights = Vec::with_capacity(out_width * in_width);
        for _ in 0..out_width * in_width {
            weights.push(r.read_f64()?);
        }
        let mut bias = Vec::with_capacity(out_width);
        for _ in 0..out_width {
            bias.push(r.read_f64()?);
        }
        layers.push(DenseLayer::from_parts(
            Tensor::new(vec![out_width, in_width], weights)?,
            Tensor::new(vec![out_width], bias)?,
            activation,
        )?);
    }
    Network::from_layers(layers)
}

fn read_codebook(r: &mut Reader<'_>) -> Result<Codebook> {
    let len = r.read_u32()? as usize;
    let temperature = r.read_f64()?;
    let at = r.pos;
    let learnable = match r.read_u8()? {
        0 => false,
        1 => true,
        other => return Err(r.format_error(at, format!("bad learnable flag {other}"))),
    };
    let mut centers = Vec::with_capacity(len);
    for _ in 0..len {
        centers.push(r.read_f64()?);
    }
    Codebook::new(centers, temperature, learnable)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_source, SourceKind};
    use crate::dro::{train_standard, TrainConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn sample_standard(seed: u64) -> StandardCompressor {
        StandardCompressor::new(6, &[5], 3, Codebook::default_latent(), &mut rng(seed)).unwrap()
    }

    fn sample_config() -> Vec<(String, String)> {
        vec![
            ("lr".to_string(), "0.05".to_string()),
            ("epochs".to_string(), "40".to_string()),
            ("seed".to_string(), "7".to_string()),
        ]
    }

    #[test]
    fn test_standard_round_trip_is_exact() {
        let ckpt =
            Checkpoint::new(ModelPayload::Standard(sample_standard(1)), 7, sample_config())
                .unwrap();
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, "<test>").unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn test_refinement_and_predictor_round_trip() {
        let refined =
            StructuredCompressor::new(6, &[5], 2, 2, Codebook::default_latent(), &mut rng(2))
                .unwrap();
        let ckpt = Checkpoint::new(ModelPayload::Refinement(refined), 8, vec![]).unwrap();
        let back = Checkpoint::from_bytes(&ckpt.to_bytes(), "<test>").unwrap();
        assert_eq!(back, ckpt);

        let predictor = AnglePredictor::new(16, &[6], &mut rng(3)).unwrap();
        let ckpt = Checkpoint::new(ModelPayload::AnglePredictor(predictor), 9, vec![]).unwrap();
        let back = Checkpoint::from_bytes(&ckpt.to_bytes(), "<test>").unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn test_disk_round_trip_and_reloaded_distortion() {
        // A trained model must evaluate identically after reload.
        let data = synth_source(SourceKind::UniformBox, 6, 24, 11).unwrap();
        let mut model = sample_standard(4);
        train_standard(
            &mut model,
            &data.samples,
            &TrainConfig {
                epochs: 5,
                batch_size: 6,
                lr: 0.05,
                seed: 12,
            },
        )
        .unwrap();
        let before = model.distortion(&data.samples).unwrap();

        let path = std::env::temp_dir().join(format!("rckp-test-{}.bin", std::process::id()));
        let ckpt = Checkpoint::new(ModelPayload::Standard(model), 12, sample_config()).unwrap();
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        std::fs::remove_file(&path).unwrap();
        assert_eq!(loaded, ckpt);
        let ModelPayload::Standard(reloaded) = loaded.into_payload() else {
            panic!("wrong payload kind");
        };
        let after = reloaded.distortion(&data.samples).unwrap();
        assert_eq!(before.to_bits(), after.to_bits());
    }

    #[test]
    fn test_config_echo_is_canonicalized() {
        let a = Checkpoint::new(ModelPayload::Standard(sample_standard(5)), 1, sample_config())
            .unwrap();
        let mut reversed = sample_config();
        reversed.reverse();
        let b =
            Checkpoint::new(ModelPayload::Standard(sample_standard(5)), 1, reversed).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let mut dup = sample_config();
        dup.push(("lr".to_string(), "0.1".to_string()));
        assert!(Checkpoint::new(ModelPayload::Standard(sample_standard(5)), 1, dup).is_err());
    }

    #[test]
    fn test_bad_magic_is_rejected_with_offset() {
        let ckpt = Checkpoint::new(ModelPayload::Standard(sample_standard(6)), 2, vec![]).unwrap();
        let mut bytes = ckpt.to_bytes();
        bytes[0] = b'X';
        let err = Checkpoint::from_bytes(&bytes, "<test>").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad magic"), "{msg}");
        assert!(msg.contains("offset 0"), "{msg}");
    }

    #[test]
    fn test_version_mismatch_is_rejected() {
        let ckpt = Checkpoint::new(ModelPayload::Standard(sample_standard(6)), 2, vec![]).unwrap();
        let mut bytes = ckpt.to_bytes();
        bytes[4] = 99;
        let err = Checkpoint::from_bytes(&bytes, "<test>").unwrap_err();
        assert!(err.to_string().contains("unsupported format version 99"));
    }

    #[test]
    fn test_truncation_and_trailing_bytes_are_rejected() {
        let ckpt = Checkpoint::new(ModelPayload::Standard(sample_standard(6)), 2, vec![]).unwrap();
        let bytes = ckpt.to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3], "<test>").unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let mut extended = bytes.clone();
        extended.extend_from_slice(&[0, 0]);
        let err = Checkpoint::from_bytes(&extended, "<test>").unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn test_unknown_kind_and_activation_are_rejected() {
        let ckpt = Checkpoint::new(ModelPayload::Standard(sample_standard(6)), 2, vec![]).unwrap();
        let mut bytes = ckpt.to_bytes();
        bytes[8] = 7; // kind tag
        let err = Checkpoint::from_bytes(&bytes, "<test>").unwrap_err();
        assert!(err.to_string().contains("unknown model kind tag 7"), "{err}");

        let mut bytes = ckpt.to_bytes();
        // kind u8 + seed u64 + entry count u32 + network layer count u32 +
        // first layer widths 2*u32 put the first activation tag at offset 33.
        bytes[33] = 9;
        let err = Checkpoint::from_bytes(&bytes, "<test>").unwrap_err();
        assert!(err.to_string().contains("unknown activation tag 9"), "{err}");
    }
}
