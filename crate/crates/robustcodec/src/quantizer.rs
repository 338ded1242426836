//! Scalar latent quantization.
//!
//! The forward path snaps each latent entry to its nearest codebook center.
//! That map has zero gradient almost everywhere, so training uses a
//! straight-through scheme: the backward path pretends the forward had been
//! the soft (softmax-weighted) assignment and propagates its Jacobian, which
//! for a scalar-per-entry codebook is diagonal.
//!
//! The fixed-rate cost of transmitting `m` quantized entries is
//! `m · log2(L)` bits for a codebook of `L` centers.

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Ordered scalar quantization alphabet with a soft-assignment temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centers: Vec<f64>,
    temperature: f64,
    learnable: bool,
}

/// Result of quantizing a latent vector in training mode: hard values on the
/// forward path plus the diagonal of the soft-assignment Jacobian for the
/// backward path.
#[derive(Debug, Clone)]
pub struct StQuantized {
    /// Nearest-center value per entry.
    pub values: Tensor,
    /// Index of the chosen center per entry.
    pub indices: Vec<usize>,
    /// `d soft(z_i) / d z_i` per entry.
    pub grad_diag: Tensor,
}

impl Codebook {
    /// Builds a codebook. Centers must be strictly increasing with at least
    /// two entries; the temperature must be positive and finite.
    pub fn new(centers: Vec<f64>, temperature: f64, learnable: bool) -> Result<Self> {
        if centers.len() < 2 {
            return Err(Error::Config(format!(
                "codebook needs at least 2 centers, got {}",
                centers.len()
            )));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("codebook centers must be finite".into()));
        }
        if centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("codebook centers must be strictly increasing".into()));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::Config(format!(
                "codebook temperature must be positive, got {temperature}"
            )));
        }
        Ok(Codebook {
            centers,
            temperature,
            learnable,
        })
    }

    /// `len` centers evenly spaced over `[lo, hi]`.
    pub fn evenly_spaced(len: usize, lo: f64, hi: f64, temperature: f64) -> Result<Self> {
        if len < 2 || !(lo < hi) {
            return Err(Error::Config(format!(
                "evenly spaced codebook needs len ≥ 2 and lo < hi, got len={len} [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (len - 1) as f64;
        let centers = (0..len).map(|i| lo + step * i as f64).collect();
        Codebook::new(centers, temperature, false)
    }

    /// Default latent codebook: 12 centers on `[-1, 1]`, temperature 1,
    /// fixed centers.
    pub fn default_latent() -> Self {
        Codebook::evenly_spaced(12, -1.0, 1.0, 1.0).expect("static arguments are valid")
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires ≥ 2 centers
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn learnable(&self) -> bool {
        self.learnable
    }

    /// Center update used when `learnable` is set; offsets must match the
    /// codebook length.
    pub fn apply_center_update(&mut self, grads: &[f64], lr: f64) -> Result<()> {
        if grads.len() != self.centers.len() {
            return Err(Error::invalid("center gradient length mismatch"));
        }
        for (c, g) in self.centers.iter_mut().zip(grads) {
            *c -= lr * g;
        }
        if self.centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Numerical(
                "center update broke the strictly-increasing order".into(),
            ));
        }
        Ok(())
    }

    /// Index of the nearest center; ties go to the smaller center value.
    pub fn nearest_index(&self, z: f64) -> usize {
        let mut best = 0;
        let mut best_d = (z - self.centers[0]).abs();
        for (i, c) in self.centers.iter().enumerate().skip(1) {
            let d = (z - c).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Hard nearest-neighbor quantization of every entry.
    pub fn hard_quantize(&self, z: &Tensor) -> Result<StHard> {
        z.assert_finite("hard_quantize input")?;
        let indices: Vec<usize> = z.data().iter().map(|&v| self.nearest_index(v)).collect();
        let values = Tensor::new(
            z.shape().to_vec(),
            indices.iter().map(|&i| self.centers[i]).collect(),
        )?;
        Ok(StHard { values, indices })
    }

    /// Soft quantization value per entry: `Σ_j w_j c_j` with
    /// `w = softmax(−(z−c)²/T)`.
    pub fn soft_quantize(&self, z: &Tensor) -> Result<Tensor> {
        z.assert_finite("soft_quantize input")?;
        let data = z.data().iter().map(|&v| self.soft_value_grad(v).0).collect();
        Tensor::new(z.shape().to_vec(), data)
    }

    /// Soft value and its derivative for one scalar.
    fn soft_value_grad(&self, z: f64) -> (f64, f64) {
        let t = self.temperature;
        // Scores s_j = −(z−c_j)²/T, stabilized by subtracting the max before
        // exponentiating so tiny temperatures stay well-defined.
        let mut smax = f64::NEG_INFINITY;
        for c in &self.centers {
            let s = -(z - c) * (z - c) / t;
            if s > smax {
                smax = s;
            }
        }
        let mut wsum = 0.0;
        let mut val = 0.0; // Σ w_j c_j (unnormalized)
        let mut a = 0.0; // Σ w_j c_j s'_j (unnormalized)
        let mut b = 0.0; // Σ w_j s'_j (unnormalized)
        for c in &self.centers {
            let s = -(z - c) * (z - c) / t;
            let w = (s - smax).exp();
            let sp = -2.0 * (z - c) / t;
            wsum += w;
            val += w * c;
            a += w * c * sp;
            b += w * sp;
        }
        let val = val / wsum;
        let a = a / wsum;
        let b = b / wsum;
        // d/dz Σ w_j c_j = Σ c_j w_j (s'_j − Σ_k w_k s'_k)
        (val, a - val * b)
    }

    /// Derivative of the soft quantizer per entry.
    pub fn soft_quantize_grad(&self, z: &Tensor) -> Result<Tensor> {
        z.assert_finite("soft_quantize_grad input")?;
        let data = z.data().iter().map(|&v| self.soft_value_grad(v).1).collect();
        Tensor::new(z.shape().to_vec(), data)
    }

    /// Training-mode quantization: hard forward values plus the soft
    /// Jacobian diagonal for the backward pass.
    pub fn st_quantize(&self, z: &Tensor) -> Result<StQuantized> {
        let hard = self.hard_quantize(z)?;
        let grad_diag = self.soft_quantize_grad(z)?;
        Ok(StQuantized {
            values: hard.values,
            indices: hard.indices,
            grad_diag,
        })
    }

    /// Looks up center values for an index string (the decode direction).
    pub fn values_of(&self, indices: &[usize]) -> Result<Tensor> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            let c = self
                .centers
                .get(i)
                .ok_or_else(|| Error::invalid(format!("codebook index {i} out of range")))?;
            out.push(*c);
        }
        Ok(Tensor::from_vec(out))
    }

    /// Fixed-rate cost in bits of transmitting `m` quantized entries.
    pub fn rate_bits(&self, m: usize) -> f64 {
        m as f64 * (self.centers.len() as f64).log2()
    }
}

/// Hard quantization result: values and center indices.
#[derive(Debug, Clone)]
pub struct StHard {
    pub values: Tensor,
    pub indices: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cb(centers: &[f64], t: f64) -> Codebook {
        Codebook::new(centers.to_vec(), t, false).unwrap()
    }

    #[test]
    fn test_nearest_neighbor_snapping() {
        let c = cb(&[-1.0, 0.0, 1.0], 1.0);
        let h = c.hard_quantize(&Tensor::from_vec(vec![0.4, 0.6])).unwrap();
        assert_eq!(h.values.data(), &[0.0, 1.0]);
        assert_eq!(h.indices, vec![1, 2]);
    }

    #[test]
    fn test_tie_breaks_toward_smaller_center() {
        let c = cb(&[0.0, 1.0], 1.0);
        let h = c.hard_quantize(&Tensor::from_vec(vec![0.5])).unwrap();
        assert_eq!(h.values.data(), &[0.0]);
        assert_eq!(h.indices, vec![0]);
    }

    #[test]
    fn test_hard_quantize_is_idempotent() {
        let c = cb(&[-1.0, -0.2, 0.3, 0.9], 0.5);
        let z = Tensor::from_vec(vec![-2.0, -0.6, 0.11, 0.4, 5.0]);
        let once = c.hard_quantize(&z).unwrap();
        let twice = c.hard_quantize(&once.values).unwrap();
        assert_eq!(once.values, twice.values);
        assert_eq!(once.indices, twice.indices);
    }

    #[test]
    fn test_hard_output_is_always_a_center() {
        let c = cb(&[-1.0, 0.0, 2.5], 1.0);
        let z = Tensor::from_vec(vec![-100.0, 0.49, 1.3, 99.0]);
        let h = c.hard_quantize(&z).unwrap();
        for v in h.values.data() {
            assert!(c.centers().contains(v));
        }
    }

    #[test]
    fn test_soft_midpoint_of_two_centers() {
        let c = cb(&[0.0, 1.0], 0.7);
        let s = c.soft_quantize(&Tensor::from_vec(vec![0.5])).unwrap();
        assert!((s.data()[0] - 0.5).abs() < 1e-12, "weights must be (0.5, 0.5)");
    }

    #[test]
    fn test_soft_stays_inside_center_hull() {
        let c = cb(&[-1.0, -0.3, 0.2, 1.0], 0.3);
        let mut r = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let z = Tensor::from_vec(vec![r.random_range(-3.0..3.0)]);
            let s = c.soft_quantize(&z).unwrap().data()[0];
            assert!((-1.0..=1.0).contains(&s), "soft output {s} left the hull");
        }
    }

    #[test]
    fn test_small_temperature_limit_is_hard_quantize() {
        let c001 = cb(&[-1.0, 0.0, 1.0], 1e-3);
        let chard = cb(&[-1.0, 0.0, 1.0], 1.0);
        let z = Tensor::from_vec(vec![-0.8, -0.1, 0.34, 0.92]);
        let soft = c001.soft_quantize(&z).unwrap();
        let hard = chard.hard_quantize(&z).unwrap();
        for (s, h) in soft.data().iter().zip(hard.values.data()) {
            assert!((s - h).abs() < 1e-9, "T→0 soft {s} vs hard {h}");
        }
    }

    #[test]
    fn test_soft_hard_gap_shrinks_with_temperature() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let z = Tensor::from_vec((0..64).map(|_| r.random_range(-1.0..1.0)).collect());
        let mut prev = f64::INFINITY;
        for t in [1.0, 0.1, 0.01] {
            let c = Codebook::evenly_spaced(12, -1.0, 1.0, t).unwrap();
            let soft = c.soft_quantize(&z).unwrap();
            let hard = c.hard_quantize(&z).unwrap();
            let gap: f64 = soft
                .data()
                .iter()
                .zip(hard.values.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(gap < prev, "gap {gap} did not shrink at T={t} (prev {prev})");
            prev = gap;
        }
    }

    #[test]
    fn test_soft_gradient_matches_central_differences() {
        let c = Codebook::evenly_spaced(12, -1.0, 1.0, 0.4).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for trial in 0..100 {
            let z0: f64 = r.random_range(-1.2..1.2);
            let g = c.soft_quantize_grad(&Tensor::from_vec(vec![z0])).unwrap().data()[0];
            let fp = c.soft_quantize(&Tensor::from_vec(vec![z0 + h])).unwrap().data()[0];
            let fm = c.soft_quantize(&Tensor::from_vec(vec![z0 - h])).unwrap().data()[0];
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - g).abs() / (fd.abs() + g.abs()).max(1e-6);
            assert!(rel <= 1e-4, "trial {trial}: z={z0} fd={fd} analytic={g}");
        }
    }

    #[test]
    fn test_st_quantize_forward_is_hard_backward_is_soft() {
        let c = Codebook::evenly_spaced(12, -1.0, 1.0, 0.4).unwrap();
        let z = Tensor::from_vec(vec![-0.95, -0.2, 0.03, 0.77]);
        let st = c.st_quantize(&z).unwrap();
        let hard = c.hard_quantize(&z).unwrap();
        let soft_g = c.soft_quantize_grad(&z).unwrap();
        assert_eq!(st.values, hard.values);
        assert_eq!(st.indices, hard.indices);
        assert_eq!(st.grad_diag, soft_g);
    }

    #[test]
    fn test_rate_bits() {
        let c12 = Codebook::evenly_spaced(12, -1.0, 1.0, 1.0).unwrap();
        assert!((c12.rate_bits(10) - 35.849625007211563).abs() < 1e-9);
        assert!((c12.rate_bits(8) - 28.67970000576925).abs() < 1e-9);
        let c2 = Codebook::evenly_spaced(2, -1.0, 1.0, 1.0).unwrap();
        assert_eq!(c2.rate_bits(1), 1.0);
    }

    #[test]
    fn test_invalid_codebooks_rejected() {
        assert!(Codebook::new(vec![0.0], 1.0, false).is_err());
        assert!(Codebook::new(vec![0.0, 0.0], 1.0, false).is_err());
        assert!(Codebook::new(vec![1.0, 0.0], 1.0, false).is_err());
        assert!(Codebook::new(vec![0.0, 1.0], 0.0, false).is_err());
        assert!(Codebook::new(vec![0.0, 1.0], -1.0, false).is_err());
    }

    #[test]
    fn test_values_of_checks_range() {
        let c = cb(&[0.0, 1.0], 1.0);
        assert!(c.values_of(&[0, 1, 0]).is_ok());
        assert!(c.values_of(&[2]).is_err());
    }
}
