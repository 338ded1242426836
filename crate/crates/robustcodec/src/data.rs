//! Datasets: IDX ingestion, synthetic sources, and pooling.
//!
//! Models consume flat `f64` samples in `[0, 1]`. Real image data arrives in
//! the IDX container (big-endian magic, dimension sizes, unsigned-byte
//! payload) and is scaled by `1/255`; synthetic sources provide desk-scale
//! stand-ins: iid uniform boxes, a clustered Gaussian mixture, and `bars`,
//! a family of smooth horizontal bars whose known canonical orientation
//! makes it the ground-truth source for rotation experiments.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fs;
use std::path::Path;

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Affine map `value = raw · scale + offset` that was applied to the raw
/// payload when the dataset was built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub offset: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization {
            scale: 1.0,
            offset: 0.0,
        }
    }
}

/// Uniform-width sample collection with optional image geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Tensor>,
    /// `(height, width)` when samples are flattened images.
    pub image_dims: Option<(usize, usize)>,
    pub normalization: Normalization,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        samples: Vec<Tensor>,
        image_dims: Option<(usize, usize)>,
        normalization: Normalization,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("a dataset needs at least one sample"));
        }
        let width = samples[0].len();
        for (i, s) in samples.iter().enumerate() {
            if s.len() != width {
                return Err(Error::ShapeMismatch {
                    context: "Dataset sample width",
                    expected: vec![width],
                    got: vec![i, s.len()],
                });
            }
        }
        if let Some((h, w)) = image_dims {
            if h * w != width {
                return Err(Error::ShapeMismatch {
                    context: "Dataset image dims",
                    expected: vec![width],
                    got: vec![h, w],
                });
            }
        }
        Ok(Dataset {
            name: name.into(),
            samples,
            image_dims,
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Width of every sample.
    pub fn width(&self) -> usize {
        self.samples[0].len()
    }

    /// Splits off the first `n_train` samples; the rest become the held-out
    /// set. Order is preserved, so pair this with a seeded source.
    pub fn split_at(&self, n_train: usize) -> Result<(Dataset, Dataset)> {
        if n_train == 0 || n_train >= self.len() {
            return Err(Error::invalid(format!(
                "split point {n_train} must leave both sides nonempty (have {})",
                self.len()
            )));
        }
        let train = Dataset {
            name: format!("{}/train", self.name),
            samples: self.samples[..n_train].to_vec(),
            image_dims: self.image_dims,
            normalization: self.normalization,
        };
        let test = Dataset {
            name: format!("{}/test", self.name),
            samples: self.samples[n_train..].to_vec(),
            image_dims: self.image_dims,
            normalization: self.normalization,
        };
        Ok((train, test))
    }
}

// ---------------------------------------------------------------------------
// IDX container
// ---------------------------------------------------------------------------

const IDX_MAGIC_IMAGES: u32 = 0x0000_0803;
const IDX_MAGIC_LABELS: u32 = 0x0000_0801;

fn format_err(path: &Path, reason: String) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason,
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(format_err(
            path,
            format!(
                "truncated while reading {what}: need bytes {offset}..{end}, file has {}",
                bytes.len()
            ),
        ));
    }
    let mut buf = [0u8; 4];
    buf.copy_from_slice(&bytes[offset..end]);
    Ok(u32::from_be_bytes(buf))
}

/// Parses an IDX file of images (magic `0x00000803`) or labels
/// (`0x00000801`). Image bytes are scaled to `[0,1]` by `1/255`; label bytes
/// are kept as raw class values in width-1 samples.
pub fn load_idx(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let magic = read_be_u32(&bytes, 0, path, "magic")?;
    match magic {
        IDX_MAGIC_IMAGES => {
            let count = read_be_u32(&bytes, 4, path, "image count")? as usize;
            let h = read_be_u32(&bytes, 8, path, "image height")? as usize;
            let w = read_be_u32(&bytes, 12, path, "image width")? as usize;
            if count == 0 || h == 0 || w == 0 {
                return Err(format_err(
                    path,
                    format!("degenerate image dimensions {count}x{h}x{w} in header"),
                ));
            }
            let header = 16;
            let need = count * h * w;
            let have = bytes.len() - header;
            if have < need {
                return Err(format_err(
                    path,
                    format!(
                        "truncated payload: expected {need} bytes from offset {header}, found {have}"
                    ),
                ));
            }
            let samples = (0..count)
                .map(|i| {
                    let start = header + i * h * w;
                    Tensor::from_vec(
                        bytes[start..start + h * w]
                            .iter()
                            .map(|&b| f64::from(b) / 255.0)
                            .collect(),
                    )
                })
                .collect();
            Dataset::new(
                path.display().to_string(),
                samples,
                Some((h, w)),
                Normalization {
                    scale: 1.0 / 255.0,
                    offset: 0.0,
                },
            )
        }
        IDX_MAGIC_LABELS => {
            let count = read_be_u32(&bytes, 4, path, "label count")? as usize;
            if count == 0 {
                return Err(format_err(path, "zero labels in header".into()));
            }
            let header = 8;
            let have = bytes.len() - header;
            if have < count {
                return Err(format_err(
                    path,
                    format!(
                        "truncated payload: expected {count} bytes from offset {header}, found {have}"
                    ),
                ));
            }
            let samples = bytes[header..header + count]
                .iter()
                .map(|&b| Tensor::from_vec(vec![f64::from(b)]))
                .collect();
            Dataset::new(
                path.display().to_string(),
                samples,
                None,
                Normalization::identity(),
            )
        }
        other => Err(format_err(
            path,
            format!("unrecognized magic 0x{other:08x} at offset 0"),
        )),
    }
}

// ---------------------------------------------------------------------------
// Synthetic sources
// ---------------------------------------------------------------------------

/// Synthetic source family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// iid Uniform[0,1] in every coordinate.
    UniformBox,
    /// Three equally likely per-sample clusters at 0.25 / 0.5 / 0.75 with
    /// sigma 0.1, clamped to [0,1].
    GaussianMixture,
    /// Centered horizontal bars of varying brightness, thickness, and
    /// length; the canonical-orientation source for rotation experiments.
    Bars,
}

impl SourceKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform_box" => Ok(SourceKind::UniformBox),
            "gaussian_mixture" => Ok(SourceKind::GaussianMixture),
            "bars" => Ok(SourceKind::Bars),
            other => Err(Error::Config(format!("unknown synthetic source {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SourceKind::UniformBox => "uniform_box",
            SourceKind::GaussianMixture => "gaussian_mixture",
            SourceKind::Bars => "bars",
        }
    }
}

const MIXTURE_MEANS: [f64; 3] = [0.25, 0.5, 0.75];
const MIXTURE_SIGMA: f64 = 0.1;

fn bar_image(side: usize, rng: &mut ChaCha8Rng) -> Tensor {
    // All geometry stays inside the central disk so rotations never clip.
    let amp = rng.random_range(0.8..1.0);
    let sigma = rng.random_range(1.35..1.6);
    let half_len = rng.random_range(4.0..5.2);
    let c = (side - 1) as f64 / 2.0;
    let mut v = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let dy = i as f64 - c;
            let dx = j as f64 - c;
            let profile = (-dy * dy / (2.0 * sigma * sigma)).exp();
            let taper = (-(dx / half_len).powi(4)).exp();
            v.push(amp * profile * taper);
        }
    }
    Tensor::from_vec(v)
}

/// Deterministic synthetic dataset: `count` samples of width `n` drawn from
/// the chosen family with a seeded generator.
pub fn synth_source(kind: SourceKind, n: usize, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::invalid("synthetic source needs count >= 1"));
    }
    if n == 0 {
        return Err(Error::invalid("synthetic source needs width >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (samples, dims) = match kind {
        SourceKind::UniformBox => {
            let samples = (0..count)
                .map(|_| Tensor::from_vec((0..n).map(|_| rng.random_range(0.0..1.0)).collect()))
                .collect();
            (samples, None)
        }
        SourceKind::GaussianMixture => {
            let normal = Normal::new(0.0, MIXTURE_SIGMA)
                .expect("fixed mixture sigma is a valid standard deviation");
            let samples = (0..count)
                .map(|_| {
                    let mean = MIXTURE_MEANS[rng.random_range(0..MIXTURE_MEANS.len())];
                    Tensor::from_vec(
                        (0..n)
                            .map(|_| (mean + normal.sample(&mut rng)).clamp(0.0, 1.0))
                            .collect(),
                    )
                })
                .collect();
            (samples, None)
        }
        SourceKind::Bars => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n || side < 8 {
                return Err(Error::invalid(format!(
                    "bars needs a square width of at least 8x8, got {n}"
                )));
            }
            let samples = (0..count).map(|_| bar_image(side, &mut rng)).collect();
            (samples, Some((side, side)))
        }
    };
    Dataset::new(kind.name(), samples, dims, Normalization::identity())
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

/// Area-average pooling to a new image geometry. Each output pixel averages
/// the exact fractional input region it covers, so any size ratio works and
/// constant images stay constant.
pub fn pool_to(dataset: &Dataset, out_h: usize, out_w: usize) -> Result<Dataset> {
    let (in_h, in_w) = dataset
        .image_dims
        .ok_or_else(|| Error::invalid("pooling needs image geometry"))?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("pooled dims must be positive"));
    }
    let ry = in_h as f64 / out_h as f64;
    let rx = in_w as f64 / out_w as f64;
    let overlap = |a0: f64, a1: f64, b0: f64, b1: f64| (a1.min(b1) - a0.max(b0)).max(0.0);
    let samples = dataset
        .samples
        .iter()
        .map(|s| {
            let mut out = Vec::with_capacity(out_h * out_w);
            for i in 0..out_h {
                let y0 = i as f64 * ry;
                let y1 = y0 + ry;
                for j in 0..out_w {
                    let x0 = j as f64 * rx;
                    let x1 = x0 + rx;
                    let mut acc = 0.0;
                    for r in y0.floor() as usize..(y1.ceil() as usize).min(in_h) {
                        let wy = overlap(y0, y1, r as f64, (r + 1) as f64);
                        if wy == 0.0 {
                            continue;
                        }
                        for c in x0.floor() as usize..(x1.ceil() as usize).min(in_w) {
                            let wx = overlap(x0, x1, c as f64, (c + 1) as f64);
                            acc += wy * wx * s.data()[r * in_w + c];
                        }
                    }
                    out.push(acc / (ry * rx));
                }
            }
            Tensor::from_vec(out)
        })
        .collect();
    Dataset::new(
        format!("{}/pooled", dataset.name),
        samples,
        Some((out_h, out_w)),
        dataset.normalization,
    )
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
