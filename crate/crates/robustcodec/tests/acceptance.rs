//! End-to-end acceptance gates: exact theory cross-checks, the gradient
//! suite, adversary reductions, robustness orderings at desk scale, the
//! structured code contracts, and CLI reproducibility. Each test prints one
//! `[PASS] ...` line with its measured numbers so a log scan shows the
//! whole gate at a glance.

use std::fs;
use std::process::Command;

use rand::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robustcodec::codec::{ModelRef, StandardCompressor, StructuredCompressor};
use robustcodec::data::load_idx;
use robustcodec::dro::{
    achieved_radius, attack_batch, awgn_augment_train, train_dro, train_standard, Adversary,
    DroConfig, TrainConfig,
};
use robustcodec::eval::{wcd_curve, WcdCurve};
use robustcodec::groupshift::{rotate, rotate_backward};
use robustcodec::nn::{squared_error, squared_error_grad, Activation, DenseLayer, Network, Tensor};
use robustcodec::qtheory::{
    distortion_closed, distortion_numeric, minimax_grid2, minimax_search, optimal_uniform,
    IntervalQuantizer, UniformPair,
};
use robustcodec::quantizer::Codebook;

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

const DIGITS_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/digits-8x8.idx");

fn digits_split(train: usize) -> (Vec<Tensor>, Vec<Tensor>) {
    let all = load_idx(DIGITS_PATH).expect("bundled digits fixture must load");
    let (tr, te) = all.split_at(train).expect("fixture is large enough");
    (tr.samples, te.samples)
}

fn random_lengths(rng: &mut impl Rng, n: usize, total: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|l| l * total / s).collect()
}

// ---------------------------------------------------------------------------
// Exact theory
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_closed_form_distortion_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=16);
        let alpha = rng.random_range(0.05..4.0);
        let total = rng.random_range(0.2..3.0);
        let q = IntervalQuantizer::new(random_lengths(&mut rng, n, total)).unwrap();
        let exact = distortion_closed(alpha, &q).unwrap();
        let quad = distortion_numeric(alpha, &q).unwrap();
        worst = worst.max((exact - quad).abs());
    }
    assert!(
        worst <= 1e-8,
        "closed form drifted from quadrature: worst |diff| = {worst:.3e}"
    );
    println!(
        "[PASS] closed-form distortion vs quadrature: worst |diff| {worst:.3e} <= 1e-8 \
         over 1000 random quantizers"
    );
}

#[test]
fn acceptance_02_uniform_partition_attains_the_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst_gap = 0.0f64;
    for n in 1..=16 {
        let alpha = rng.random_range(0.2..3.0);
        let q = optimal_uniform(alpha, n).unwrap();
        let bound = alpha * alpha / (12.0 * (n * n) as f64);
        let gap = (distortion_closed(alpha, &q).unwrap() - bound).abs();
        worst_gap = worst_gap.max(gap / bound);
    }
    assert!(
        worst_gap <= 1e-12,
        "uniform partition missed its floor by relative {worst_gap:.3e}"
    );
    let mut min_excess = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(2..=16);
        let alpha = rng.random_range(0.2..3.0);
        let bound = alpha * alpha / (12.0 * (n * n) as f64);
        // Jitter every cell, then rescale so the partition still covers
        // exactly (0, alpha); skip draws that collapse back to uniform.
        let base = alpha / n as f64;
        let raw: Vec<f64> = (0..n)
            .map(|_| base * rng.random_range(0.5..1.5))
            .collect();
        let s: f64 = raw.iter().sum();
        let lengths: Vec<f64> = raw.into_iter().map(|l| l * alpha / s).collect();
        let spread: f64 = lengths.iter().map(|l| (l - base) * (l - base)).sum();
        if spread < 1e-12 {
            continue;
        }
        let q = IntervalQuantizer::new(lengths).unwrap();
        let excess = distortion_closed(alpha, &q).unwrap() - bound;
        assert!(
            excess > 0.0,
            "perturbed partition failed to exceed the uniform floor: excess {excess:.3e}"
        );
        min_excess = min_excess.min(excess);
    }
    println!(
        "[PASS] uniform partition attains alpha^2/(12 N^2) to rel {worst_gap:.3e}; \
         1000 perturbed partitions all exceed it (min excess {min_excess:.3e})"
    );
}

#[test]
fn acceptance_03_branch_chain_and_stretched_fit_margin() {
    use robustcodec::qtheory::{f1_f2, worst_case};
    let mut worst_eq = 0.0f64;
    let mut min_margin = f64::INFINITY;
    for n in 2..=16 {
        let hi = 1.0 / n as f64;
        let at0 = f1_f2(n, 0.0).unwrap();
        assert!(
            at0.f1 == at0.f2,
            "branches must coincide at delta = 0 for N = {n}: {} vs {}",
            at0.f1,
            at0.f2
        );
        worst_eq = worst_eq.max((at0.f1 - at0.f2).abs());
        let h = hi * 1e-4;
        for k in 0..100 {
            let delta = hi * (k as f64 + 0.5) / 100.0;
            let e = f1_f2(n, delta).unwrap();
            assert!(
                e.f1 <= e.f2 + 1e-12,
                "f1 exceeded f2 at N = {n}, delta = {delta}: {} vs {}",
                e.f1,
                e.f2
            );
            // Independent central-difference slopes, away from the edges.
            let lo = f1_f2(n, delta - h).unwrap();
            let hi_e = f1_f2(n, delta + h).unwrap();
            let df1 = (hi_e.f1 - lo.f1) / (2.0 * h);
            let df2 = (hi_e.f2 - lo.f2) / (2.0 * h);
            assert!(
                df1 >= -1e-7,
                "f1 must be nondecreasing in delta at N = {n}, delta = {delta}: slope {df1:.3e}"
            );
            assert!(
                df2 >= df1 - 1e-7,
                "f2 must grow at least as fast as f1 at N = {n}, delta = {delta}: \
                 {df2:.3e} vs {df1:.3e}"
            );
            // The stretched-fit uniform design must be strictly safer.
            let pair = UniformPair::new(n, delta).unwrap();
            let v1 = worst_case(&optimal_uniform(1.0, n).unwrap(), &pair).unwrap();
            let v1pd = worst_case(&optimal_uniform(1.0 + delta, n).unwrap(), &pair).unwrap();
            let margin = v1 - v1pd;
            assert!(
                margin > 1e-12,
                "stretched-fit margin collapsed at N = {n}, delta = {delta}: {margin:.3e}"
            );
            min_margin = min_margin.min(margin);
        }
    }
    println!(
        "[PASS] branch chain: f1(N,0) = f2(N,0) exactly, f1 <= f2 with ordered \
         nonnegative slopes, stretched-fit margin > 1e-12 (min {min_margin:.3e}) \
         on 100-point sweeps for N in 2..=16"
    );
}

#[test]
fn acceptance_04_minimax_pays_a_clean_cost_at_two_levels() {
    let pair = UniformPair::new(2, 0.4).unwrap();
    let (grid_q, grid_v) = minimax_grid2(&pair, 1e-4).unwrap();
    let clean_floor = 1.0 / 48.0;
    let clean_of_grid = distortion_closed(1.0, &grid_q).unwrap();
    let margin = clean_of_grid - clean_floor;
    assert!(
        margin > 0.0,
        "grid minimax quantizer failed to pay a clean cost: margin {margin:.3e}"
    );
    let simplex = minimax_search(&pair);
    let v_gap = (simplex.value - grid_v).abs();
    assert!(
        v_gap <= 1e-6,
        "simplex and grid disagree on the minimax value: |{:.8e} - {:.8e}| = {v_gap:.3e}",
        simplex.value,
        grid_v
    );
    println!(
        "[PASS] minimax at N=2, delta=0.4: clean distortion {clean_of_grid:.8e} beats \
         1/48 by {margin:.3e}; simplex matches the 1e-4 grid within {v_gap:.3e} in V"
    );
}

// ---------------------------------------------------------------------------
// Gradient suite
// ---------------------------------------------------------------------------

fn fd_layer_trial(rng: &mut ChaCha8Rng, activation: Activation) -> f64 {
    let din = rng.random_range(2..6);
    let dout = rng.random_range(1..5);
    let layer = DenseLayer::new(din, dout, activation, rng).unwrap();
    let net = Network::from_layers(vec![layer]).unwrap();
    // Resample until preactivations sit away from the ReLU kink, so central
    // differences see a locally smooth function.
    let x = loop {
        let cand = Tensor::from_vec((0..din).map(|_| rng.random_range(-1.0..1.0)).collect());
        let (_, trace) = net.forward_traced(&cand).unwrap();
        if trace.pre(0).iter().all(|v| v.abs() >= 1e-3) {
            break cand;
        }
    };
    let target = Tensor::from_vec((0..dout).map(|_| rng.random_range(-1.0..1.0)).collect());
    let loss = |net: &Network, x: &Tensor| {
        let y = net.forward(x).unwrap();
        squared_error(&y, &target).unwrap()
    };
    let (y, trace) = net.forward_traced(&x).unwrap();
    let upstream = squared_error_grad(&y, &target).unwrap();
    let tape = net.backward(&trace, &upstream).unwrap();
    let h = 1e-5;
    let mut worst_rel = 0.0f64;
    for li in 0..net.layers().len() {
        let wlen = net.layers()[li].weights().len();
        let blen = net.layers()[li].bias().len();
        for p in 0..wlen + blen {
            let mut plus = net.clone();
            let mut minus = net.clone();
            for (copy, sign) in [(&mut plus, h), (&mut minus, -h)] {
                let layer = &mut copy.layers_mut()[li];
                let slot = if p < wlen {
                    &mut layer.weights_mut()[p]
                } else {
                    &mut layer.bias_mut()[p - wlen]
                };
                *slot += sign;
            }
            let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h);
            let analytic = if p < wlen {
                tape.layers[li].d_weights.data()[p]
            } else {
                tape.layers[li].d_bias.data()[p - wlen]
            };
            let rel = (analytic - fd).abs() / fd.abs().max(1e-4);
            worst_rel = worst_rel.max(rel);
        }
    }
    worst_rel
}

#[test]
fn acceptance_05_gradient_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    // Every layer activation, 100 trials each.
    let mut worst_layer = 0.0f64;
    for activation in [
        Activation::Identity,
        Activation::Tanh,
        Activation::Relu,
        Activation::Sigmoid,
    ] {
        for _ in 0..100 {
            worst_layer = worst_layer.max(fd_layer_trial(&mut rng, activation));
        }
    }
    assert!(
        worst_layer <= 1e-4,
        "layer gradients drifted from finite differences: worst rel {worst_layer:.3e}"
    );

    // Soft quantizer, 100 trials.
    let mut worst_soft = 0.0f64;
    for _ in 0..100 {
        let len = rng.random_range(2..12);
        let temp = rng.random_range(0.05..2.0);
        let cb = Codebook::evenly_spaced(len, -1.0, 1.0, temp).unwrap();
        let m = rng.random_range(1..5);
        let z = Tensor::from_vec((0..m).map(|_| rng.random_range(-1.2..1.2)).collect());
        let grad = cb.soft_quantize_grad(&z).unwrap();
        let h = 1e-6;
        for i in 0..m {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp.data_mut()[i] += h;
            zm.data_mut()[i] -= h;
            let fd = (cb.soft_quantize(&zp).unwrap().data()[i]
                - cb.soft_quantize(&zm).unwrap().data()[i])
                / (2.0 * h);
            let rel = (grad.data()[i] - fd).abs() / fd.abs().max(1e-4);
            worst_soft = worst_soft.max(rel);
        }
    }
    assert!(
        worst_soft <= 1e-4,
        "soft quantizer gradient drifted: worst rel {worst_soft:.3e}"
    );

    // Squared error, 100 trials, absolute tolerance.
    let mut worst_mse = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(1..8);
        let a = Tensor::from_vec((0..m).map(|_| rng.random_range(-2.0..2.0)).collect());
        let b = Tensor::from_vec((0..m).map(|_| rng.random_range(-2.0..2.0)).collect());
        let grad = squared_error_grad(&a, &b).unwrap();
        let h = 1e-6;
        for i in 0..m {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap.data_mut()[i] += h;
            am.data_mut()[i] -= h;
            let fd = (squared_error(&ap, &b).unwrap() - squared_error(&am, &b).unwrap())
                / (2.0 * h);
            worst_mse = worst_mse.max((grad.data()[i] - fd).abs());
        }
    }
    assert!(
        worst_mse <= 1e-6,
        "squared error gradient drifted: worst abs {worst_mse:.3e}"
    );

    // Rotation, 100 trials: both the angle and the input gradient.
    let mut worst_phi = 0.0f64;
    let mut worst_input = 0.0f64;
    for _ in 0..100 {
        let side = rng.random_range(5..9);
        let mut x = Tensor::zeros(vec![side, side]);
        for v in x.data_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let phi = rng.random_range(-1.2..1.2);
        let target: Vec<f64> = (0..side * side)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let loss_of = |img: &Tensor, angle: f64| {
            let y = rotate(img, angle).unwrap();
            y.data()
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        let y = rotate(&x, phi).unwrap();
        let upstream = Tensor::new(
            vec![side, side],
            y.data()
                .iter()
                .zip(&target)
                .map(|(a, b)| 2.0 * (a - b))
                .collect(),
        )
        .unwrap();
        let grads = rotate_backward(&x, phi, &upstream).unwrap();
        let h = 1e-5;
        let fd_phi = (loss_of(&x, phi + h) - loss_of(&x, phi - h)) / (2.0 * h);
        worst_phi = worst_phi.max((grads.d_phi - fd_phi).abs() / fd_phi.abs().max(1e-2));
        for i in 0..side * side {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let fd = (loss_of(&xp, phi) - loss_of(&xm, phi)) / (2.0 * h);
            let rel = (grads.d_input.data()[i] - fd).abs() / fd.abs().max(1e-2);
            worst_input = worst_input.max(rel);
        }
    }
    assert!(
        worst_phi <= 1e-3,
        "rotation angle gradient drifted: worst rel {worst_phi:.3e}"
    );
    assert!(
        worst_input <= 1e-3,
        "rotation input gradient drifted: worst rel {worst_input:.3e}"
    );
    println!(
        "[PASS] gradient suite, 100 trials each: layers rel {worst_layer:.3e} <= 1e-4, \
         soft quantizer rel {worst_soft:.3e} <= 1e-4, squared error abs {worst_mse:.3e} \
         <= 1e-6, rotation rel {worst_phi:.3e} / {worst_input:.3e} <= 1e-3"
    );
}

// ---------------------------------------------------------------------------
// Adversary reductions
// ---------------------------------------------------------------------------

#[test]
fn acceptance_06_adversary_reductions() {
    let (train, test) = digits_split(64);
    let train = &train[..48];
    let make = || {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        StandardCompressor::new(64, &[16], 4, Codebook::default_latent(), &mut rng).unwrap()
    };
    let tc = TrainConfig {
        epochs: 3,
        batch_size: 8,
        lr: 0.05,
        seed: 9,
    };
    let mut plain = make();
    let plain_report = train_standard(&mut plain, train, &tc).unwrap();
    let mut degenerate = make();
    let dro_report = train_dro(
        &mut degenerate,
        train,
        &DroConfig {
            base: tc,
            gamma: 1.0,
            inner_steps: 0,
            inner_lr_scale: 1.0,
        },
    )
    .unwrap();
    let bits = |net: &Network| -> Vec<u64> {
        net.layers()
            .iter()
            .flat_map(|l| {
                l.weights()
                    .data()
                    .iter()
                    .chain(l.bias().data())
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    assert_eq!(
        bits(plain.encoder()),
        bits(degenerate.encoder()),
        "zero-step adversary changed the encoder"
    );
    assert_eq!(
        bits(plain.decoder()),
        bits(degenerate.decoder()),
        "zero-step adversary changed the decoder"
    );
    let loss_bits = |r: &robustcodec::dro::TrainReport| -> Vec<u64> {
        r.epoch_mean_loss.iter().map(|v| v.to_bits()).collect()
    };
    assert_eq!(
        loss_bits(&plain_report),
        loss_bits(&dro_report),
        "zero-step adversary changed the loss history"
    );

    let huge_gamma = Adversary {
        gamma: 1e9,
        inner_steps: 10,
        inner_lr_scale: 1.0,
    };
    let batch = &test[..16];
    let attacked = attack_batch(ModelRef::Standard(&plain), batch, &huge_gamma).unwrap();
    let mut worst_move = 0.0f64;
    for (x, xa) in batch.iter().zip(&attacked) {
        for (a, b) in x.data().iter().zip(xa.data()) {
            worst_move = worst_move.max((a - b).abs());
        }
    }
    assert!(
        worst_move <= 1e-6,
        "gamma = 1e9 adversary moved a point by {worst_move:.3e}"
    );
    println!(
        "[PASS] adversary reductions: zero-step training is bitwise standard; \
         gamma 1e9 max displacement {worst_move:.3e} <= 1e-6"
    );
}

// ---------------------------------------------------------------------------
// Desk-scale robustness orderings
// ---------------------------------------------------------------------------

/// Reference training recipe shared by the ordering and refinement gates.
const DESK_TRAIN: usize = 1536;
const DESK_EPOCHS: usize = 150;
const GAMMA_A: f64 = 1.2;
const GAMMA_B: f64 = 1.0;
const EVAL_GRID: [f64; 6] = [1e9, 100.0, 30.0, 10.0, 3.0, 1.0];

fn desk_codebook() -> Codebook {
    Codebook::evenly_spaced(12, -1.0, 1.0, 1.0).unwrap()
}

fn desk_model(seed: u64, m: usize) -> StandardCompressor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    StandardCompressor::new(64, &[48], m, desk_codebook(), &mut rng).unwrap()
}

fn desk_train_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        lr: 0.02,
        seed,
    }
}

fn desk_dro_config(seed: u64, gamma: f64, epochs: usize) -> DroConfig {
    DroConfig {
        base: desk_train_config(seed, epochs),
        gamma,
        inner_steps: 5,
        inner_lr_scale: 1.0,
    }
}

/// The seed-0 robust reference model is needed by two gates; train it once.
fn dro_a_seed0() -> &'static StandardCompressor {
    use std::sync::OnceLock;
    static MODEL: OnceLock<StandardCompressor> = OnceLock::new();
    MODEL.get_or_init(|| {
        let (train, _) = digits_split(DESK_TRAIN);
        let mut model = desk_model(0, 10);
        train_dro(&mut model, &train, &desk_dro_config(0, GAMMA_A, DESK_EPOCHS)).unwrap();
        model
    })
}

#[test]
fn acceptance_07_robustness_orderings_hold_on_three_seeds() {
    let (train, test) = digits_split(DESK_TRAIN);
    let rate = desk_model(0, 10).rate_bits();
    assert!(
        (rate - 35.85).abs() < 0.005,
        "reference rate drifted from 35.85 bits: {rate}"
    );
    // The final low-pressure knot widens every curve's span so that all
    // queried radii land inside it and interpolate rather than extrapolate.
    let grid = [1e9, 100.0, 30.0, 10.0, 3.0, 1.0, 0.3];
    for seed in [0u64, 1, 2] {
        let mut standard = desk_model(seed, 10);
        train_standard(&mut standard, &train, &desk_train_config(seed, DESK_EPOCHS)).unwrap();

        let cfg_a = desk_dro_config(seed, GAMMA_A, DESK_EPOCHS);
        let dro_a_local;
        let dro_a: &StandardCompressor = if seed == 0 {
            dro_a_seed0()
        } else {
            let mut m = desk_model(seed, 10);
            train_dro(&mut m, &train, &cfg_a).unwrap();
            dro_a_local = m;
            &dro_a_local
        };

        let mut dro_b = desk_model(seed, 10);
        train_dro(&mut dro_b, &train, &desk_dro_config(seed, GAMMA_B, DESK_EPOCHS)).unwrap();

        let rho_a =
            achieved_radius(ModelRef::Standard(dro_a), &test, &cfg_a.adversary()).unwrap();

        let mut awgn = desk_model(seed, 10);
        awgn_augment_train(
            &mut awgn,
            &train,
            &desk_train_config(seed, DESK_EPOCHS),
            rho_a,
        )
        .unwrap();

        let curve = |m: &StandardCompressor, id: &str| {
            let recs = wcd_curve(ModelRef::Standard(m), &test, &grid, 10, 1.0, id).unwrap();
            WcdCurve::from_records(&recs).unwrap()
        };
        let (c_std, c_a, c_b, c_awgn) = (
            curve(&standard, "standard"),
            curve(dro_a, "dro-a"),
            curve(&dro_b, "dro-b"),
            curve(&awgn, "awgn"),
        );
        let clean_std = standard.distortion(&test).unwrap();
        let clean_a = dro_a.distortion(&test).unwrap();
        assert!(
            clean_std < clean_a,
            "seed {seed}: robust training cost no clean distortion: \
             standard {clean_std:.6e} vs robust {clean_a:.6e}"
        );
        let at = |c: &WcdCurve, rho: f64| c.query(rho).unwrap();
        assert!(
            at(&c_std, rho_a) > at(&c_a, rho_a),
            "seed {seed}: standard beat the robust model at its trained radius"
        );
        let (s, w, a) = (at(&c_std, rho_a), at(&c_awgn, rho_a), at(&c_a, rho_a));
        assert!(
            s > w && w > a,
            "seed {seed}: noise-augmented model not between at the trained radius: \
             {s:.6e} / {w:.6e} / {a:.6e}"
        );
        let rho_small = 0.1 * rho_a;
        assert!(
            at(&c_b, rho_small) > at(&c_a, rho_small),
            "seed {seed}: larger-radius model was not worse at small displacement"
        );
    }
    println!(
        "[PASS] desk-scale orderings at 35.85 bits: clean, trained-radius, \
         noise-between, and small-radius comparisons all hold on seeds 0, 1, 2"
    );
}

// ---------------------------------------------------------------------------
// Two-stage refinement contracts
// ---------------------------------------------------------------------------

#[test]
fn acceptance_08_refinement_prefix_rates_and_curve() {
    use robustcodec::codec::Stage;
    use robustcodec::dro::train_structured;
    let (train, test) = digits_split(DESK_TRAIN);
    let mut structured = {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        StructuredCompressor::new(64, &[48], 7, 3, desk_codebook(), &mut rng).unwrap()
    };
    // The stage trainer splits its updates between the two decoders, so it
    // gets a doubled epoch budget for update parity with the reference model.
    train_structured(
        &mut structured,
        &train,
        &desk_dro_config(0, GAMMA_A, 2 * DESK_EPOCHS),
    )
    .unwrap();

    for (i, x) in test.iter().enumerate() {
        let coarse = structured.compress(x, Stage::One).unwrap();
        let full = structured.compress(x, Stage::Two).unwrap();
        assert_eq!(
            coarse,
            full[..coarse.len()],
            "sample {i}: stage-1 indices are not a prefix of stage-2"
        );
    }

    let bits_per = (12f64).log2();
    assert_eq!(
        structured.rate_bits(Stage::One),
        7.0 * bits_per,
        "stage-1 rate must be exactly 7 symbols"
    );
    assert_eq!(
        structured.rate_bits(Stage::Two),
        10.0 * bits_per,
        "stage-2 rate must be exactly 10 symbols"
    );
    let reference = dro_a_seed0();
    assert_eq!(
        structured.rate_bits(Stage::Two),
        reference.rate_bits(),
        "stage-2 rate must match the end-to-end reference"
    );

    let dro_recs = wcd_curve(
        ModelRef::Standard(reference),
        &test,
        &EVAL_GRID,
        10,
        1.0,
        "dro",
    )
    .unwrap();
    let s2_recs = wcd_curve(
        ModelRef::Refinement(&structured, Stage::Two),
        &test,
        &EVAL_GRID,
        10,
        1.0,
        "s2",
    )
    .unwrap();
    let s2_curve = WcdCurve::from_records(&s2_recs).unwrap();
    let (lo, hi) = s2_curve.span();
    let mut compared = 0;
    let mut worst_ratio = 0.0f64;
    for r in &dro_recs {
        if r.rho_hat < lo || r.rho_hat > hi {
            continue;
        }
        let ratio = s2_curve.query(r.rho_hat).unwrap() / r.mean_distortion;
        worst_ratio = worst_ratio.max(ratio);
        compared += 1;
        assert!(
            ratio <= 1.05,
            "refined curve fell more than 5% behind the end-to-end one at \
             rho {:.4e}: ratio {ratio:.4}",
            r.rho_hat
        );
    }
    assert!(compared >= 3, "too few overlapping radii to compare curves");
    println!(
        "[PASS] refinement: prefix property on all {} samples, stage rates exactly \
         25.09/35.85 bits, worst curve ratio {worst_ratio:.4} <= 1.05 over {compared} radii",
        test.len()
    );
}

// ---------------------------------------------------------------------------
// Rotation group shifts
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_angle_pipeline_beats_end_to_end_groupshift() {
    use robustcodec::data::{synth_source, SourceKind};
    use robustcodec::groupshift::{
        distortion_vs_angle, structured_distortion_vs_angle, train_angle_predictor,
        train_groupshift_dro, AngleCodec, AnglePredictor, RotationGrid,
    };
    let (h, w) = (16usize, 16usize);
    let dims = (h, w);
    let all = synth_source(SourceKind::Bars, h * w, 176, 4242).unwrap();
    let (train, test) = all.split_at(160).unwrap();
    let (train, test) = (train.samples, test.samples);

    // Rotate then derotate must stay faithful where no content leaves the
    // frame: mean squared error over the central disk.
    let radius = (h.min(w) as f64) / 2.0 - 2.0;
    let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
    let mut worst_rt = 0.0f64;
    for &phi in &[0.4, -1.2, 2.0] {
        for s in test.iter().take(8) {
            let x = s.reshaped(vec![h, w]).unwrap();
            let back = rotate(&rotate(&x, phi).unwrap(), -phi).unwrap();
            let mut se = 0.0;
            let mut count = 0usize;
            for i in 0..h {
                for j in 0..w {
                    let r2 = (i as f64 - cy).powi(2) + (j as f64 - cx).powi(2);
                    if r2 <= radius * radius {
                        se += (x.data()[i * w + j] - back.data()[i * w + j]).powi(2);
                        count += 1;
                    }
                }
            }
            worst_rt = worst_rt.max(se / count as f64);
        }
    }
    assert!(
        worst_rt <= 1e-3,
        "rotate/derotate round trip drifted: disk mse {worst_rt:.3e}"
    );

    // The shift codec spends exactly the advertised side-information rate,
    // and the two-part rate (8 latent symbols + the angle) equals the
    // end-to-end model's 10-symbol rate.
    let codec = AngleCodec::default_shift();
    assert_eq!(codec.points(), 144, "2.5 degree steps over the circle");
    assert!(
        (codec.bits() - 7.17).abs() < 0.005,
        "angle rate {:.4} bits should be 7.17",
        codec.bits()
    );
    let two_part_rate = 8.0 * (12f64).log2() + codec.bits();
    let end_to_end_rate = 10.0 * (12f64).log2();
    assert!(
        (two_part_rate - end_to_end_rate).abs() < 1e-9,
        "rates out of parity: {two_part_rate:.6} vs {end_to_end_rate:.6}"
    );

    // Predict-then-derotate against one codec trained over all rotations,
    // at matched total rate. The predictor restarts a few times; selection
    // keeps the restart with the best pipeline distortion on a held-out
    // slice of the training bars, so the test split stays untouched.
    // Everything is seeded, so the whole comparison is deterministic.
    let eval_grid = RotationGrid::from_degrees(5.0).unwrap();
    let search_grid = RotationGrid::default_search();
    let e2e_grid = RotationGrid::from_degrees(15.0).unwrap();
    let stages: [(usize, f64); 3] = [(800, 5e-3), (150, 1.5e-3), (150, 5e-4)];
    let mean = |v: &[(f64, f64)]| v.iter().map(|&(_, d)| d).sum::<f64>() / v.len() as f64;
    let fit = &train[..140];
    let held = &train[140..];
    let mut lines = Vec::new();
    for seed in [0u64, 1, 2] {
        let mut base = {
            let mut rng = ChaCha8Rng::seed_from_u64(7 + seed);
            StandardCompressor::new(h * w, &[48], 8, Codebook::default_latent(), &mut rng)
                .unwrap()
        };
        train_standard(
            &mut base,
            &train,
            &TrainConfig {
                epochs: 60,
                batch_size: 8,
                lr: 0.05,
                seed: 13 + seed,
            },
        )
        .unwrap();
        let mut best: Option<(f64, AnglePredictor)> = None;
        for restart in 0u64..3 {
            let mut predictor = {
                let mut rng = ChaCha8Rng::seed_from_u64(99 + seed + 1000 * restart);
                AnglePredictor::new(h * w, &[96, 48], &mut rng).unwrap()
            };
            for (k, &(epochs, lr)) in stages.iter().enumerate() {
                train_angle_predictor(
                    &mut predictor,
                    &base,
                    fit,
                    dims,
                    &search_grid,
                    &codec,
                    &TrainConfig {
                        epochs,
                        batch_size: 2,
                        lr,
                        seed: 31 + k as u64 + 100 * seed + 10_000 * restart,
                    },
                )
                .unwrap();
            }
            let held_mean = mean(
                &structured_distortion_vs_angle(
                    &predictor, &codec, &base, held, dims, &eval_grid,
                )
                .unwrap(),
            );
            if best.as_ref().map_or(true, |&(b, _)| held_mean < b) {
                best = Some((held_mean, predictor));
            }
        }
        let (_, predictor) = best.unwrap();

        let mut e2e = {
            let mut rng = ChaCha8Rng::seed_from_u64(7 + seed);
            StandardCompressor::new(h * w, &[48], 10, Codebook::default_latent(), &mut rng)
                .unwrap()
        };
        train_groupshift_dro(
            &mut e2e,
            &train,
            dims,
            &e2e_grid,
            &TrainConfig {
                epochs: 60,
                batch_size: 8,
                lr: 0.05,
                seed: 13 + seed,
            },
        )
        .unwrap();

        let pipe =
            structured_distortion_vs_angle(&predictor, &codec, &base, &test, dims, &eval_grid)
                .unwrap();
        let end = distortion_vs_angle(ModelRef::Standard(&e2e), &test, dims, &eval_grid).unwrap();
        let (mp, me) = (mean(&pipe), mean(&end));
        assert!(
            mp < me,
            "seed {seed}: predict-then-derotate lost to the end-to-end model: \
             {mp:.4e} vs {me:.4e}"
        );
        lines.push(format!("seed {seed} {mp:.4e} < {me:.4e}"));
    }
    println!(
        "[PASS] group shift: disk round-trip mse {worst_rt:.3e} <= 1e-3, angle rate \
         {:.4} bits at 2.5 degrees, pipeline under end-to-end on 3/3 seeds ({})",
        codec.bits(),
        lines.join(", ")
    );
}

// ---------------------------------------------------------------------------
// CLI reproducibility
// ---------------------------------------------------------------------------

#[test]
fn acceptance_10_cli_runs_are_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("train.cfg");
    let model_a = dir.path().join("a.rck");
    let model_b = dir.path().join("b.rck");
    let make_cfg = |model: &std::path::Path| {
        format!(
            "source=uniform_box:6:24:7\nepochs=3\nbatch_size=4\nlr=0.05\nseed=5\n\
             latent_m=3\nhidden=10\ngamma=2.0\ninner_steps=3\noutput={}\n",
            model.display()
        )
    };
    let bin = env!("CARGO_BIN_EXE_robustcodec");
    for (model, text) in [(&model_a, make_cfg(&model_a)), (&model_b, make_cfg(&model_b))] {
        fs::write(&cfg_path, text).unwrap();
        let out = Command::new(bin)
            .args(["train-dro", cfg_path.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "train-dro failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(model.exists());
    }
    let bytes_a = fs::read(&model_a).unwrap();
    let bytes_b = fs::read(&model_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "repeated train-dro runs diverged");

    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    for csv in [&csv_a, &csv_b] {
        let eval_cfg = dir.path().join("eval.cfg");
        fs::write(
            &eval_cfg,
            format!(
                "model={}\nsource=uniform_box:6:16:9\ngamma_grid=1e9,10,1\ninner_steps=4\ncsv={}\n",
                model_a.display(),
                csv.display()
            ),
        )
        .unwrap();
        let out = Command::new(bin)
            .args(["eval-wcd", eval_cfg.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "eval-wcd failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let curve_a = fs::read(&csv_a).unwrap();
    let curve_b = fs::read(&csv_b).unwrap();
    assert_eq!(curve_a, curve_b, "repeated eval-wcd runs diverged");
    println!(
        "[PASS] CLI reproducibility: repeated train-dro checkpoints ({} bytes) and \
         eval-wcd curves ({} bytes) are bitwise identical",
        bytes_a.len(),
        curve_a.len()
    );
}
