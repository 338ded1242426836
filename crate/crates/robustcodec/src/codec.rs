//! Compressor models.
//!
//! Two shapes are supported. [`StandardCompressor`] is a plain quantized
//! autoencoder: encode to `m` latents, snap each to the codebook, decode.
//! [`StructuredCompressor`] shares one encoder between two decoders to form a
//! successive-refinement code: decoder 1 sees only the first `m₁` quantized
//! latents, decoder 2 sees all `m₁+m₂`, and the stage-2 index string extends
//! the stage-1 string by construction, so a receiver can stop reading after
//! the prefix and still decode.
//!
//! Both models reduce to the same internal pipeline (encode, quantize a
//! prefix, decode) which also provides the backward pass used by training
//! and by adversarial evaluation: gradients cross the quantizer through the
//! soft-assignment Jacobian while the forward stays hard.

use crate::error::{Error, Result};
use crate::nn::{squared_error, Activation, ForwardTrace, GradientTape, Network, Tensor};
use crate::quantizer::{Codebook, StQuantized};
use rand::Rng;
use rayon::prelude::*;

/// Refinement stage selector for the structured model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::One => "1",
            Stage::Two => "2",
        }
    }
}

// ---------------------------------------------------------------------------
// Standard model
// ---------------------------------------------------------------------------

/// Quantized autoencoder: `x → encoder → quantize → decoder → x̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardCompressor {
    encoder: Network,
    decoder: Network,
    codebook: Codebook,
}

impl StandardCompressor {
    /// Fresh model: encoder `n → hidden… → m` (tanh throughout, so latents
    /// match the codebook span), decoder mirroring it with identity output.
    pub fn new(
        n: usize,
        hidden: &[usize],
        m: usize,
        codebook: Codebook,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut enc_widths = vec![n];
        enc_widths.extend_from_slice(hidden);
        enc_widths.push(m);
        let mut dec_widths = vec![m];
        dec_widths.extend(hidden.iter().rev());
        dec_widths.push(n);
        let encoder = Network::new(&enc_widths, Activation::Tanh, Activation::Tanh, rng)?;
        let decoder = Network::new(&dec_widths, Activation::Tanh, Activation::Identity, rng)?;
        StandardCompressor::from_parts(encoder, decoder, codebook)
    }

    /// Assembles a model from explicit networks, checking width agreement.
    pub fn from_parts(encoder: Network, decoder: Network, codebook: Codebook) -> Result<Self> {
        if encoder.output_width() != decoder.input_width() {
            return Err(Error::ShapeMismatch {
                context: "StandardCompressor latent width",
                expected: vec![encoder.output_width()],
                got: vec![decoder.input_width()],
            });
        }
        if encoder.input_width() != decoder.output_width() {
            return Err(Error::ShapeMismatch {
                context: "StandardCompressor data width",
                expected: vec![encoder.input_width()],
                got: vec![decoder.output_width()],
            });
        }
        Ok(StandardCompressor {
            encoder,
            decoder,
            codebook,
        })
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn input_width(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn latent_width(&self) -> usize {
        self.encoder.output_width()
    }

    /// Fixed rate of the code in bits.
    pub fn rate_bits(&self) -> f64 {
        self.codebook.rate_bits(self.latent_width())
    }

    /// Encodes `x` to codebook indices.
    pub fn compress(&self, x: &Tensor) -> Result<Vec<usize>> {
        let z = self.encoder.forward(x)?;
        Ok(self.codebook.hard_quantize(&z)?.indices)
    }

    /// Decodes an index string back to data space.
    pub fn decompress(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.len() != self.latent_width() {
            return Err(Error::ShapeMismatch {
                context: "StandardCompressor::decompress",
                expected: vec![self.latent_width()],
                got: vec![indices.len()],
            });
        }
        self.decoder.forward(&self.codebook.values_of(indices)?)
    }

    /// Full round trip `decompress(compress(x))`.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        ModelRef::Standard(self).reconstruct(x)
    }

    /// Mean squared-error distortion over a batch.
    pub fn distortion(&self, batch: &[Tensor]) -> Result<f64> {
        ModelRef::Standard(self).distortion(batch)
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Network, &mut Network, &mut Codebook) {
        (&mut self.encoder, &mut self.decoder, &mut self.codebook)
    }
}

// ---------------------------------------------------------------------------
// Structured (successive-refinement) model
// ---------------------------------------------------------------------------

/// Single-encoder two-decoder refinement code. The first `m₁` latents form
/// the stage-1 code; all `m₁+m₂` form the stage-2 code.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredCompressor {
    encoder: Network,
    decoder1: Network,
    decoder2: Network,
    codebook: Codebook,
    m1: usize,
}

impl StructuredCompressor {
    pub fn new(
        n: usize,
        hidden: &[usize],
        m1: usize,
        m2: usize,
        codebook: Codebook,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(Error::invalid("both stage widths must be positive"));
        }
        let m = m1 + m2;
        let mut enc_widths = vec![n];
        enc_widths.extend_from_slice(hidden);
        enc_widths.push(m);
        let encoder = Network::new(&enc_widths, Activation::Tanh, Activation::Tanh, rng)?;
        let dec_widths = |input: usize| {
            let mut w = vec![input];
            w.extend(hidden.iter().rev());
            w.push(n);
            w
        };
        let decoder1 = Network::new(
            &dec_widths(m1),
            Activation::Tanh,
            Activation::Identity,
            rng,
        )?;
        let decoder2 = Network::new(&dec_widths(m), Activation::Tanh, Activation::Identity, rng)?;
        StructuredCompressor::from_parts(encoder, decoder1, decoder2, codebook, m1)
    }

    pub fn from_parts(
        encoder: Network,
        decoder1: Network,
        decoder2: Network,
        codebook: Codebook,
        m1: usize,
    ) -> Result<Self> {
        let m = encoder.output_width();
        if m1 == 0 || m1 >= m {
            return Err(Error::invalid(format!(
                "stage-1 width {m1} must lie strictly inside the latent width {m}"
            )));
        }
        if decoder1.input_width() != m1 {
            return Err(Error::ShapeMismatch {
                context: "StructuredCompressor decoder1 input",
                expected: vec![m1],
                got: vec![decoder1.input_width()],
            });
        }
        if decoder2.input_width() != m {
            return Err(Error::ShapeMismatch {
                context: "StructuredCompressor decoder2 input",
                expected: vec![m],
                got: vec![decoder2.input_width()],
            });
        }
        let n = encoder.input_width();
        if decoder1.output_width() != n || decoder2.output_width() != n {
            return Err(Error::ShapeMismatch {
                context: "StructuredCompressor decoder output",
                expected: vec![n],
                got: vec![decoder1.output_width(), decoder2.output_width()],
            });
        }
        Ok(StructuredCompressor {
            encoder,
            decoder1,
            decoder2,
            codebook,
            m1,
        })
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder1(&self) -> &Network {
        &self.decoder1
    }

    pub fn decoder2(&self) -> &Network {
        &self.decoder2
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn input_width(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.encoder.output_width() - self.m1
    }

    fn stage_width(&self, stage: Stage) -> usize {
        match stage {
            Stage::One => self.m1,
            Stage::Two => self.encoder.output_width(),
        }
    }

    /// Rate of the given stage in bits.
    pub fn rate_bits(&self, stage: Stage) -> f64 {
        self.codebook.rate_bits(self.stage_width(stage))
    }

    /// Encodes `x`; the stage-2 string extends the stage-1 string.
    pub fn compress(&self, x: &Tensor, stage: Stage) -> Result<Vec<usize>> {
        let z = self.encoder.forward(x)?;
        let mut indices = self.codebook.hard_quantize(&z)?.indices;
        indices.truncate(self.stage_width(stage));
        Ok(indices)
    }

    /// Decodes a stage-1 or stage-2 index string.
    pub fn decompress(&self, indices: &[usize], stage: Stage) -> Result<Tensor> {
        let want = self.stage_width(stage);
        if indices.len() != want {
            return Err(Error::ShapeMismatch {
                context: "StructuredCompressor::decompress",
                expected: vec![want],
                got: vec![indices.len()],
            });
        }
        let values = self.codebook.values_of(indices)?;
        match stage {
            Stage::One => self.decoder1.forward(&values),
            Stage::Two => self.decoder2.forward(&values),
        }
    }

    pub fn reconstruct(&self, x: &Tensor, stage: Stage) -> Result<Tensor> {
        ModelRef::Refinement(self, stage).reconstruct(x)
    }

    pub fn distortion(&self, batch: &[Tensor], stage: Stage) -> Result<f64> {
        ModelRef::Refinement(self, stage).distortion(batch)
    }

    pub(crate) fn parts_mut(
        &mut self,
    ) -> (&mut Network, &mut Network, &mut Network, &mut Codebook) {
        (
            &mut self.encoder,
            &mut self.decoder1,
            &mut self.decoder2,
            &mut self.codebook,
        )
    }
}

// ---------------------------------------------------------------------------
// Unified read-only view
// ---------------------------------------------------------------------------

/// Borrowed view of "some reconstruction pipeline": a standard model, or one
/// stage of a structured model. Evaluation and adversarial search are written
/// against this so they work for every model kind.
#[derive(Clone, Copy)]
pub enum ModelRef<'a> {
    Standard(&'a StandardCompressor),
    Refinement(&'a StructuredCompressor, Stage),
}

impl<'a> ModelRef<'a> {
    pub fn input_width(&self) -> usize {
        match self {
            ModelRef::Standard(m) => m.input_width(),
            ModelRef::Refinement(m, _) => m.input_width(),
        }
    }

    pub(crate) fn pipeline(&self) -> Pipeline<'a> {
        match *self {
            ModelRef::Standard(m) => Pipeline {
                enc: &m.encoder,
                dec: &m.decoder,
                cb: &m.codebook,
                keep: m.latent_width(),
            },
            ModelRef::Refinement(m, stage) => Pipeline {
                enc: &m.encoder,
                dec: match stage {
                    Stage::One => &m.decoder1,
                    Stage::Two => &m.decoder2,
                },
                cb: &m.codebook,
                keep: m.stage_width(stage),
            },
        }
    }

    /// Hard-quantized round trip.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.pipeline().forward(x)
    }

    /// Mean of `‖x − x̂‖²` over the batch. Samples are evaluated in
    /// parallel; the reduction is ordered so results do not depend on thread
    /// scheduling.
    pub fn distortion(&self, batch: &[Tensor]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("distortion of an empty batch"));
        }
        let per_sample: Vec<f64> = batch
            .par_iter()
            .map(|x| {
                let x_hat = self.reconstruct(x)?;
                squared_error(x, &x_hat)
            })
            .collect::<Result<_>>()?;
        Ok(per_sample.iter().sum::<f64>() / batch.len() as f64)
    }
}

// ---------------------------------------------------------------------------
// Shared internal pipeline
// ---------------------------------------------------------------------------

/// Borrowed encode-quantize-decode pipeline; `keep` is how many leading
/// latent entries feed the decoder (all of them for standard models).
pub(crate) struct Pipeline<'a> {
    pub enc: &'a Network,
    pub dec: &'a Network,
    pub cb: &'a Codebook,
    pub keep: usize,
}

/// Everything the pipeline backward pass needs from its forward pass.
pub(crate) struct PipelineTrace {
    enc_trace: ForwardTrace,
    stq: StQuantized,
    dec_trace: ForwardTrace,
}

/// Gradients of a scalar loss through the pipeline.
pub(crate) struct PipelineGrads {
    pub enc: GradientTape,
    pub dec: GradientTape,
    /// Loss gradient with respect to the pipeline input.
    pub d_input: Tensor,
    /// Loss gradient with respect to codebook centers (hard-assignment
    /// attribution), used only when the codebook is learnable.
    pub d_centers: Vec<f64>,
}

impl Pipeline<'_> {
    pub fn input_width(&self) -> usize {
        self.enc.input_width()
    }

    /// Hard forward pass without bookkeeping.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let z = self.enc.forward(x)?;
        let kept = Tensor::from_vec(z.data()[..self.keep].to_vec());
        let q = self.cb.hard_quantize(&kept)?;
        self.dec.forward(&q.values)
    }

    /// Forward pass retaining traces for [`Pipeline::backward`].
    pub fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, PipelineTrace)> {
        let (z, enc_trace) = self.enc.forward_traced(x)?;
        let kept = Tensor::from_vec(z.data()[..self.keep].to_vec());
        let stq = self.cb.st_quantize(&kept)?;
        let (x_hat, dec_trace) = self.dec.forward_traced(&stq.values)?;
        Ok((
            x_hat,
            PipelineTrace {
                enc_trace,
                stq,
                dec_trace,
            },
        ))
    }

    /// Reverse pass for `upstream = dL/dx̂`. The quantizer is crossed with
    /// the straight-through rule: decoder input gradients are scaled by the
    /// soft-assignment Jacobian diagonal and fed to the encoder; latent
    /// entries beyond `keep` receive zero gradient.
    pub fn backward(&self, trace: &PipelineTrace, upstream: &Tensor) -> Result<PipelineGrads> {
        let dec_tape = self.dec.backward(&trace.dec_trace, upstream)?;
        let mut d_centers = vec![0.0; self.cb.len()];
        for (i, &idx) in trace.stq.indices.iter().enumerate() {
            d_centers[idx] += dec_tape.d_input.data()[i];
        }
        let mut d_z = vec![0.0; self.enc.output_width()];
        for i in 0..self.keep {
            d_z[i] = dec_tape.d_input.data()[i] * trace.stq.grad_diag.data()[i];
        }
        let enc_tape = self.enc.backward(&trace.enc_trace, &Tensor::from_vec(d_z))?;
        let d_input = enc_tape.d_input.clone();
        Ok(PipelineGrads {
            enc: enc_tape,
            dec: dec_tape,
            d_input,
            d_centers,
        })
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseLayer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_codebook() -> Codebook {
        Codebook::evenly_spaced(12, -1.0, 1.0, 0.5).unwrap()
    }

    fn identity_net(n: usize) -> Network {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        Network::from_layers(vec![DenseLayer::from_parts(
            Tensor::new(vec![n, n], w).unwrap(),
            Tensor::zeros(vec![n]),
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    fn random_standard(seed: u64) -> StandardCompressor {
        let mut r = rng(seed);
        StandardCompressor::new(6, &[10], 4, small_codebook(), &mut r).unwrap()
    }

    fn random_structured(seed: u64) -> StructuredCompressor {
        let mut r = rng(seed);
        StructuredCompressor::new(6, &[10], 3, 2, small_codebook(), &mut r).unwrap()
    }

    #[test]
    fn test_compress_indices_lie_in_codebook_range() {
        let m = random_standard(1);
        let mut r = rng(2);
        for _ in 0..20 {
            let x = Tensor::from_vec((0..6).map(|_| r.random_range(-2.0..2.0)).collect());
            for idx in m.compress(&x).unwrap() {
                assert!(idx < m.codebook().len());
            }
        }
    }

    #[test]
    fn test_identity_micromodel_reproduces_plain_quantization() {
        // Encoder and decoder are identity maps, so the round trip is exactly
        // nearest-center snapping.
        let cb = small_codebook();
        let model =
            StandardCompressor::from_parts(identity_net(3), identity_net(3), cb.clone()).unwrap();
        let x = Tensor::from_vec(vec![-0.93, 0.08, 0.61]);
        let got = model.reconstruct(&x).unwrap();
        let want = cb.hard_quantize(&x).unwrap().values;
        assert_eq!(got, want);
        let via_indices = model.decompress(&model.compress(&x).unwrap()).unwrap();
        assert_eq!(via_indices, want);
    }

    #[test]
    fn test_stage2_code_extends_stage1_code() {
        let m = random_structured(3);
        let mut r = rng(4);
        for _ in 0..50 {
            let x = Tensor::from_vec((0..6).map(|_| r.random_range(-1.5..1.5)).collect());
            let s1 = m.compress(&x, Stage::One).unwrap();
            let s2 = m.compress(&x, Stage::Two).unwrap();
            assert_eq!(s1.len(), 3);
            assert_eq!(s2.len(), 5);
            assert_eq!(&s2[..3], &s1[..], "stage-2 string must extend stage-1");
        }
    }

    #[test]
    fn test_stage_decoders_generally_disagree() {
        let m = random_structured(5);
        let x = Tensor::from_vec(vec![0.2, -0.4, 0.9, 0.0, -1.1, 0.5]);
        let r1 = m.reconstruct(&x, Stage::One).unwrap();
        let r2 = m.reconstruct(&x, Stage::Two).unwrap();
        assert_ne!(r1, r2, "independently initialized decoders should differ");
    }

    #[test]
    fn test_decompress_is_deterministic_and_checks_width() {
        let m = random_structured(6);
        let idx = vec![0usize, 5, 11];
        let a = m.decompress(&idx, Stage::One).unwrap();
        let b = m.decompress(&idx, Stage::One).unwrap();
        assert_eq!(a, b);
        assert!(m.decompress(&idx, Stage::Two).is_err(), "stage-2 needs 5 indices");
        let std_model = random_standard(6);
        assert!(std_model.decompress(&idx).is_err());
    }

    #[test]
    fn test_distortion_matches_independent_loop_and_is_permutation_invariant() {
        let m = random_standard(7);
        let mut r = rng(8);
        let batch: Vec<Tensor> = (0..9)
            .map(|_| Tensor::from_vec((0..6).map(|_| r.random_range(0.0..1.0)).collect()))
            .collect();
        let d = m.distortion(&batch).unwrap();
        // Oracle: explicit loop.
        let mut acc = 0.0;
        for x in &batch {
            let xh = m.reconstruct(x).unwrap();
            acc += x
                .data()
                .iter()
                .zip(xh.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let want = acc / batch.len() as f64;
        assert!((d - want).abs() < 1e-12);
        let mut reversed = batch.clone();
        reversed.reverse();
        let dr = m.distortion(&reversed).unwrap();
        assert!((d - dr).abs() < 1e-12);
    }

    #[test]
    fn test_distortion_rejects_empty_batch() {
        let m = random_standard(9);
        assert!(m.distortion(&[]).is_err());
    }

    #[test]
    fn test_perfect_reconstruction_gives_zero_distortion() {
        let cb = small_codebook();
        let model = StandardCompressor::from_parts(identity_net(2), identity_net(2), cb).unwrap();
        // Inputs already sitting on centers reconstruct exactly.
        let batch = vec![
            Tensor::from_vec(vec![-1.0, 1.0]),
            Tensor::from_vec(vec![1.0, -1.0]),
        ];
        assert_eq!(model.distortion(&batch).unwrap(), 0.0);
    }

    #[test]
    fn test_stage_rates_account_for_every_bit() {
        let m = random_structured(10);
        let l = m.codebook().len() as f64;
        assert_eq!(m.rate_bits(Stage::One), 3.0 * l.log2());
        assert_eq!(m.rate_bits(Stage::Two), 5.0 * l.log2());
    }

    #[test]
    fn test_pipeline_decoder_grads_match_finite_differences() {
        // With the encoder side frozen by hard quantization, the loss is an
        // ordinary smooth function of decoder parameters.
        let mut m = random_standard(11);
        let x = Tensor::from_vec(vec![0.3, -0.2, 0.8, 0.1, -0.6, 0.9]);
        let view = ModelRef::Standard(&m);
        let p = view.pipeline();
        let (x_hat, trace) = p.forward_traced(&x).unwrap();
        let up = crate::nn::squared_error_grad(&x_hat, &x).unwrap();
        let grads = p.backward(&trace, &up).unwrap();
        let dec_grads: Vec<Tensor> = grads
            .dec
            .layers
            .iter()
            .map(|g| g.d_weights.clone())
            .collect();
        let h = 1e-5;
        for li in 0..m.decoder().layers().len() {
            for wi in 0..m.decoder().layers()[li].weights().len() {
                let loss = |model: &StandardCompressor| {
                    let xh = model.reconstruct(&x).unwrap();
                    squared_error(&xh, &x).unwrap()
                };
                let orig = m.decoder().layers()[li].weights().data()[wi];
                {
                    let (_, dec, _) = m.parts_mut();
                    dec.layers_mut()[li].weights_mut()[wi] = orig + h;
                }
                let lp = loss(&m);
                {
                    let (_, dec, _) = m.parts_mut();
                    dec.layers_mut()[li].weights_mut()[wi] = orig - h;
                }
                let lm = loss(&m);
                {
                    let (_, dec, _) = m.parts_mut();
                    dec.layers_mut()[li].weights_mut()[wi] = orig;
                }
                let fd = (lp - lm) / (2.0 * h);
                let an = dec_grads[li].data()[wi];
                let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-6);
                assert!(rel <= 1e-4, "decoder layer {li} w{wi}: fd={fd} analytic={an}");
            }
        }
    }

    #[test]
    fn test_pipeline_encoder_grads_match_manual_straight_through_chain() {
        // Independent reassembly of the straight-through chain rule.
        let m = random_structured(12);
        let x = Tensor::from_vec(vec![0.5, -0.1, 0.2, 0.9, -0.7, 0.0]);
        let view = ModelRef::Refinement(&m, Stage::One);
        let p = view.pipeline();
        let (x_hat, trace) = p.forward_traced(&x).unwrap();
        let up = crate::nn::squared_error_grad(&x_hat, &x).unwrap();
        let grads = p.backward(&trace, &up).unwrap();

        let (z, enc_trace) = m.encoder().forward_traced(&x).unwrap();
        let kept = Tensor::from_vec(z.data()[..3].to_vec());
        let stq = m.codebook().st_quantize(&kept).unwrap();
        let (_, dec_trace) = m.decoder1().forward_traced(&stq.values).unwrap();
        let dec_tape = m.decoder1().backward(&dec_trace, &up).unwrap();
        let mut dz = vec![0.0; 5];
        for i in 0..3 {
            dz[i] = dec_tape.d_input.data()[i] * stq.grad_diag.data()[i];
        }
        let enc_tape = m
            .encoder()
            .backward(&enc_trace, &Tensor::from_vec(dz))
            .unwrap();
        for (a, b) in grads.enc.layers.iter().zip(&enc_tape.layers) {
            assert_eq!(a.d_weights, b.d_weights);
            assert_eq!(a.d_bias, b.d_bias);
        }
        assert_eq!(grads.d_input, enc_tape.d_input);
    }

    #[test]
    fn test_end_to_end_training_gradient_is_finite_and_nonzero() {
        let m = random_standard(13);
        let x = Tensor::from_vec(vec![0.4, 0.1, -0.3, 0.7, 0.2, -0.8]);
        let p = ModelRef::Standard(&m).pipeline();
        let (x_hat, trace) = p.forward_traced(&x).unwrap();
        let up = crate::nn::squared_error_grad(&x_hat, &x).unwrap();
        let grads = p.backward(&trace, &up).unwrap();
        let mut total = 0.0;
        for lg in grads.enc.layers.iter().chain(grads.dec.layers.iter()) {
            lg.d_weights.assert_finite("smoke").unwrap();
            lg.d_bias.assert_finite("smoke").unwrap();
            total += lg.d_weights.data().iter().map(|v| v.abs()).sum::<f64>();
        }
        assert!(total > 0.0, "gradients should not vanish at random init");
    }

    #[test]
    fn test_structured_width_validation() {
        let mut r = rng(14);
        assert!(StructuredCompressor::new(6, &[8], 0, 2, small_codebook(), &mut r).is_err());
        assert!(StructuredCompressor::new(6, &[8], 2, 0, small_codebook(), &mut r).is_err());
        let enc = Network::new(&[6, 5], Activation::Tanh, Activation::Tanh, &mut r).unwrap();
        let d1 = Network::new(&[4, 6], Activation::Tanh, Activation::Identity, &mut r).unwrap();
        let d2 = Network::new(&[5, 6], Activation::Tanh, Activation::Identity, &mut r).unwrap();
        // decoder1 expects width 3 prefix, not 4.
        assert!(StructuredCompressor::from_parts(enc, d1, d2, small_codebook(), 3).is_err());
    }
}
