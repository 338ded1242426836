//! Exact distortion analysis of midpoint interval quantizers on uniform
//! sources, and the minimax quantizer over a two-source ambiguity set.
//!
//! A quantizer here is an adjacent partition of `(0, Σp_i)` into `N` cells of
//! lengths `p_1..p_N`, with each cell reproduced by its midpoint. For a
//! uniform source on `(0, α)` the expected squared error `D(α, Q)` has a
//! two-case closed form (source shorter than the partition, or source
//! spilling past it); [`distortion_closed`] implements it and
//! [`distortion_numeric`] cross-checks it by adaptive quadrature.
//!
//! The worst-case functional `V(Q) = max(D(1, Q), D(1+δ, Q))` over the pair
//! `{Unif(0,1), Unif(0,1+δ)}` is minimized by [`minimax_search`]. The point
//! of the exercise: the minimizer is strictly worse on the clean source than
//! the clean-optimal uniform quantizer, i.e. robustness provably costs
//! in-distribution fidelity even in this tiny setting. [`verify_tradeoff`]
//! machine-checks that statement and the inequality chain behind it.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Midpoint interval quantizer given by positive cell lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalQuantizer {
    lengths: Vec<f64>,
}

impl IntervalQuantizer {
    pub fn new(lengths: Vec<f64>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::invalid("a quantizer needs at least one cell"));
        }
        if lengths.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::invalid("cell lengths must be positive and finite"));
        }
        Ok(IntervalQuantizer { lengths })
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn levels(&self) -> usize {
        self.lengths.len()
    }

    /// Right end of the partition, `Σ p_i`.
    pub fn total(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Midpoint codeword of cell `i`.
    pub fn codeword(&self, i: usize) -> f64 {
        let before: f64 = self.lengths[..i].iter().sum();
        before + self.lengths[i] / 2.0
    }

    /// Maps `x` to its cell's midpoint. Points at or past the partition end
    /// go to the last codeword; nonpositive points go to the first.
    pub fn quantize(&self, x: f64) -> f64 {
        let mut b = 0.0;
        for p in &self.lengths {
            b += p;
            if x < b {
                return b - p / 2.0;
            }
        }
        self.codeword(self.levels() - 1)
    }
}

/// The two-source ambiguity set `{Unif(0,1), Unif(0,1+δ)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPair {
    n: usize,
    delta: f64,
}

impl UniformPair {
    /// Requires `N ≥ 1` and `0 < δ < 1/N` (the regime where the tradeoff
    /// statement applies).
    pub fn new(n: usize, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("level count must be positive"));
        }
        if !(delta.is_finite() && delta > 0.0 && delta < 1.0 / n as f64) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1/{n}), got {delta}"
            )));
        }
        Ok(UniformPair { n, delta })
    }

    pub fn levels(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

// ---------------------------------------------------------------------------
// Distortion
// ---------------------------------------------------------------------------

/// Closed form for `D(α, Q)`, assuming `α ≥ p_1` and positive lengths.
///
/// Splits on whether the source spills past the partition: fully covered
/// cells contribute `p³/12`, the cell containing `α` contributes its
/// truncated second moment, and mass past the end maps to the last codeword.
fn closed_from_lengths(alpha: f64, lengths: &[f64]) -> f64 {
    let total: f64 = lengths.iter().sum();
    if alpha >= total {
        let cells: f64 = lengths.iter().map(|p| p * p * p / 12.0).sum();
        let half = lengths[lengths.len() - 1] / 2.0;
        let a = alpha - total + half;
        let tail = (a * a * a - half * half * half) / 3.0;
        (cells + tail) / alpha
    } else {
        let mut b = 0.0;
        let mut covered = 0.0;
        for p in lengths {
            if alpha >= b + p {
                covered += p * p * p / 12.0;
                b += p;
            } else {
                // α lands inside this cell: integrate (x − midpoint)² from
                // the cell start to α.
                let half = p / 2.0;
                let a = alpha - b - half;
                let partial = (a * a * a + half * half * half) / 3.0;
                return (covered + partial) / alpha;
            }
        }
        unreachable!("alpha < total guarantees a containing cell");
    }
}

/// Distortion `E[(X − Q(X))²]`, `X ~ Unif(0, α)`, by the closed form.
///
/// `α` below the first cell length is outside the form's case analysis and
/// falls back to the quadrature oracle with a logged warning.
pub fn distortion_closed(alpha: f64, q: &IntervalQuantizer) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if alpha < q.lengths[0] {
        log::warn!(
            "distortion_closed: alpha={alpha} below first cell length {}; using quadrature",
            q.lengths[0]
        );
        return distortion_numeric(alpha, q);
    }
    Ok(closed_from_lengths(alpha, &q.lengths))
}

/// Simpson's rule on `[a, b]` given endpoint and midpoint values.
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let est = left + right;
    if depth == 0 || (est - whole).abs() <= 15.0 * tol {
        est + (est - whole) / 15.0
    } else {
        adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Quadrature oracle for the distortion: integrates `(x − Q(x))²` over
/// `[0, α]`, splitting exactly at cell boundaries so every piece is smooth.
/// Absolute error ≤ 1e−10.
pub fn distortion_numeric(alpha: f64, q: &IntervalQuantizer) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let mut cuts = vec![0.0];
    let mut b = 0.0;
    for p in &q.lengths {
        b += p;
        if b < alpha {
            cuts.push(b);
        } else {
            break;
        }
    }
    cuts.push(alpha);
    let f = |x: f64| {
        let e = x - q.quantize(x);
        e * e
    };
    let mut acc = 0.0;
    for seg in cuts.windows(2) {
        let (a, c) = (seg[0], seg[1]);
        if c <= a {
            continue;
        }
        let m = 0.5 * (a + c);
        let (fa, fm, fc) = (f(a), f(m), f(c));
        let whole = simpson(a, c, fa, fm, fc);
        acc += adaptive_simpson(&f, a, c, fa, fm, fc, whole, 1e-12, 48);
    }
    Ok(acc / alpha)
}

/// The uniform partition of `(0, α)` into `N` equal cells; optimal for
/// `Unif(0, α)` among interval quantizers.
pub fn optimal_uniform(alpha: f64, n: usize) -> Result<IntervalQuantizer> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if n == 0 {
        return Err(Error::invalid("level count must be positive"));
    }
    IntervalQuantizer::new(vec![alpha / n as f64; n])
}

/// Worst-case distortion over the pair: `max(D(1, Q), D(1+δ, Q))`.
pub fn worst_case(q: &IntervalQuantizer, pair: &UniformPair) -> Result<f64> {
    let d1 = distortion_closed(1.0, q)?;
    let d2 = distortion_closed(1.0 + pair.delta, q)?;
    Ok(d1.max(d2))
}

// ---------------------------------------------------------------------------
// The f₁/f₂ pair
// ---------------------------------------------------------------------------

/// Values and central-difference derivative estimates of the two distortion
/// branches entering the tradeoff proof, as functions of δ:
/// `f1/(24N³) = D(1, uniform(1+δ))` and `f2/(24N³) = D(1+δ, uniform(1))`.
#[derive(Debug, Clone, Copy)]
pub struct F1F2Eval {
    pub f1: f64,
    pub f2: f64,
    /// d f1 / d δ estimate.
    pub df1: f64,
    /// d f2 / d δ estimate.
    pub df2: f64,
}

fn f1_value(n: usize, delta: f64) -> f64 {
    let nn = n as f64;
    let a = 2.0 * nn - (1.0 + delta) * (2.0 * nn - 1.0);
    a * a * a + (2.0 * nn - 1.0) * (1.0 + delta) * (1.0 + delta) * (1.0 + delta)
}

fn f2_value(n: usize, delta: f64) -> f64 {
    let nn = n as f64;
    // (1+δ)^{2/3}·2N − (1+δ)^{−1/3}·(2N−1), then cubed, plus (2N−1)/(1+δ).
    let t = (1.0 + delta).cbrt();
    let u = t * t * 2.0 * nn - (2.0 * nn - 1.0) / t;
    u * u * u + (2.0 * nn - 1.0) / (1.0 + delta)
}

/// Evaluates `f1`, `f2` and their δ-derivatives (central differences,
/// `h = 1e−6`, one-sided at the domain edges). Domain: `0 ≤ δ ≤ 1/N`.
pub fn f1_f2(n: usize, delta: f64) -> Result<F1F2Eval> {
    if n == 0 {
        return Err(Error::invalid("level count must be positive"));
    }
    let hi = 1.0 / n as f64;
    if !(delta.is_finite() && (0.0..=hi).contains(&delta)) {
        return Err(Error::invalid(format!(
            "delta must lie in [0, {hi}], got {delta}"
        )));
    }
    let h = 1e-6;
    let lo_pt = (delta - h).max(0.0);
    let hi_pt = (delta + h).min(hi);
    let span = hi_pt - lo_pt;
    Ok(F1F2Eval {
        f1: f1_value(n, delta),
        f2: f2_value(n, delta),
        df1: (f1_value(n, hi_pt) - f1_value(n, lo_pt)) / span,
        df2: (f2_value(n, hi_pt) - f2_value(n, lo_pt)) / span,
    })
}

// ---------------------------------------------------------------------------
// Minimax search
// ---------------------------------------------------------------------------

/// One optimizer start: where it began and the value it reached.
#[derive(Debug, Clone)]
pub struct SearchStart {
    pub initial_lengths: Vec<f64>,
    pub value: f64,
}

/// Best quantizer found by [`minimax_search`] plus per-start diagnostics.
#[derive(Debug, Clone)]
pub struct MinimaxOutcome {
    pub quantizer: IntervalQuantizer,
    pub value: f64,
    pub starts: Vec<SearchStart>,
}

/// `V` as a function of log-lengths; the exponential keeps lengths positive
/// for the unconstrained simplex moves.
fn v_of_log(u: &[f64], pair: &UniformPair) -> f64 {
    let lengths: Vec<f64> = u.iter().map(|x| x.exp()).collect();
    if lengths.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return f64::INFINITY;
    }
    if 1.0 < lengths[0] {
        // Outside the closed form's case analysis; such points are never
        // competitive (a first cell longer than the short source is wasteful)
        // so steer the search away instead of paying for quadrature.
        return f64::INFINITY;
    }
    let d1 = closed_from_lengths(1.0, &lengths);
    let d2 = closed_from_lengths(1.0 + pair.delta, &lengths);
    d1.max(d2)
}

/// Nelder–Mead in log-length space. Deterministic given the start simplex.
fn nelder_mead(start: &[f64], pair: &UniformPair, iters: usize) -> (Vec<f64>, f64) {
    let n = start.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), v_of_log(start, pair)));
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += 0.05;
        let v = v_of_log(&p, pair);
        simplex.push((p, v));
    }
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("V values are ordered"));
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() < 1e-14 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst.0)
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let vr = v_of_log(&reflect, pair);
        if vr < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + gamma * (c - w))
                .collect();
            let ve = v_of_log(&expand, pair);
            simplex[n] = if ve < vr { (expand, ve) } else { (reflect, vr) };
        } else if vr < simplex[n - 1].1 {
            simplex[n] = (reflect, vr);
        } else {
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + rho * (w - c))
                .collect();
            let vc = v_of_log(&contract, pair);
            if vc < worst.1 {
                simplex[n] = (contract, vc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = best
                        .iter()
                        .zip(&entry.0)
                        .map(|(b, x)| b + sigma * (x - b))
                        .collect();
                    entry.1 = v_of_log(&shrunk, pair);
                    entry.0 = shrunk;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("V values are ordered"));
    simplex[0].clone().into()
}

/// Coordinate pattern descent on log-lengths with shrinking steps; polishes
/// the simplex result to grid-level resolution.
fn pattern_refine(u0: &[f64], pair: &UniformPair) -> (Vec<f64>, f64) {
    let mut u = u0.to_vec();
    let mut v = v_of_log(&u, pair);
    let mut step = 1e-2;
    while step >= 1e-9 {
        let mut improved = true;
        while improved {
            improved = false;
            for i in 0..u.len() {
                for dir in [step, -step] {
                    let old = u[i];
                    u[i] = old + dir;
                    let cand = v_of_log(&u, pair);
                    if cand < v {
                        v = cand;
                        improved = true;
                    } else {
                        u[i] = old;
                    }
                }
            }
        }
        step *= 0.25;
    }
    (u, v)
}

/// Minimizes `V` over cell-length vectors by multi-start Nelder–Mead in
/// log-length space, each start polished by pattern descent. Best-effort:
/// returns the best point found and records every start's outcome.
pub fn minimax_search(pair: &UniformPair) -> MinimaxOutcome {
    let n = pair.n;
    let mut starts: Vec<Vec<f64>> = vec![
        vec![1.0 / n as f64; n],
        vec![(1.0 + pair.delta) / n as f64; n],
        vec![(1.0 + pair.delta / 2.0) / n as f64; n],
    ];
    // Two deterministic jittered starts widen the basin coverage.
    let mut rng = ChaCha8Rng::seed_from_u64(0x51AC);
    for _ in 0..2 {
        let base = (1.0 + pair.delta / 2.0) / n as f64;
        starts.push(
            (0..n)
                .map(|_| base * rng.random_range(0.6..1.4))
                .collect(),
        );
    }

    let mut outcomes = Vec::with_capacity(starts.len());
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        let u0: Vec<f64> = s.iter().map(|p| p.ln()).collect();
        let (u1, _) = nelder_mead(&u0, pair, 400 * n.max(2));
        let (u2, v2) = pattern_refine(&u1, pair);
        outcomes.push(SearchStart {
            initial_lengths: s.clone(),
            value: v2,
        });
        let better = match &best {
            None => true,
            Some((_, vb)) => v2 < *vb,
        };
        if better {
            best = Some((u2, v2));
        }
    }
    let (u, value) = best.expect("at least one start");
    let lengths: Vec<f64> = u.iter().map(|x| x.exp()).collect();
    MinimaxOutcome {
        quantizer: IntervalQuantizer::new(lengths).expect("exp of finite logs"),
        value,
        starts: outcomes,
    }
}

/// Exhaustive certificate for `N = 2`: scans every `(p₁, p₂)` on a grid of
/// the given resolution over `(0, 1+δ]²` and returns the grid minimizer of
/// `V`. Intended as an independent check on [`minimax_search`].
pub fn minimax_grid2(pair: &UniformPair, resolution: f64) -> Result<(IntervalQuantizer, f64)> {
    if pair.n != 2 {
        return Err(Error::invalid("grid certificate is implemented for N = 2"));
    }
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::invalid("resolution must be positive"));
    }
    let hi = 1.0 + pair.delta;
    let steps = (hi / resolution).round() as usize;
    let delta = pair.delta;
    // Rows are scanned in parallel; the final argmin reduction is ordered by
    // row index so the result is independent of thread count.
    let per_row: Vec<(f64, usize)> = (1..=steps)
        .into_par_iter()
        .map(|i| {
            let p1 = i as f64 * resolution;
            if p1 > 1.0 {
                // First cell longer than the short source never helps; the
                // closed form also requires α ≥ p₁.
                return (f64::INFINITY, 0);
            }
            let mut best = f64::INFINITY;
            let mut best_j = 0;
            let mut lengths = [p1, 0.0];
            for j in 1..=steps {
                lengths[1] = j as f64 * resolution;
                let v = closed_from_lengths(1.0, &lengths)
                    .max(closed_from_lengths(1.0 + delta, &lengths));
                if v < best {
                    best = v;
                    best_j = j;
                }
            }
            (best, best_j)
        })
        .collect();
    let (mut best_v, mut best_ij) = (f64::INFINITY, (0usize, 0usize));
    for (i, (v, j)) in per_row.iter().enumerate() {
        if *v < best_v {
            best_v = *v;
            best_ij = (i + 1, *j);
        }
    }
    let q = IntervalQuantizer::new(vec![
        best_ij.0 as f64 * resolution,
        best_ij.1 as f64 * resolution,
    ])?;
    Ok((q, best_v))
}

// ---------------------------------------------------------------------------
// Tradeoff verification
// ---------------------------------------------------------------------------

/// Numeric record of the clean-vs-robust tradeoff at one `(N, δ)`.
#[derive(Debug, Clone)]
pub struct TradeoffReport {
    pub n: usize,
    pub delta: f64,
    /// Clean distortion of the clean-optimal uniform quantizer, `1/(12N²)`.
    pub d1_opt: f64,
    /// Clean distortion of the minimax quantizer.
    pub d1_minimax: f64,
    /// Worst-case of the uniform quantizer fit to the short source.
    pub v_opt1: f64,
    /// Worst-case of the uniform quantizer fit to the stretched source.
    pub v_opt1pd: f64,
    /// Worst-case of the minimax quantizer.
    pub v_minimax: f64,
    /// `d1_minimax − d1_opt`; positive means robustness cost money on the
    /// clean source.
    pub margin: f64,
    /// `v_opt1 − v_opt1pd`; positive confirms that fitting the stretched
    /// source is the safer of the two uniform designs.
    pub stretched_fit_margin: f64,
}

/// Runs [`minimax_search`] and checks the tradeoff numerically: the minimax
/// quantizer must be strictly worse on the clean source than the
/// clean-optimal uniform one, and the stretched-fit uniform quantizer must
/// have strictly smaller worst case than the clean-fit one. A failed check
/// means an implementation bug, reported as a theory violation.
pub fn verify_tradeoff(pair: &UniformPair) -> Result<TradeoffReport> {
    let n = pair.n;
    let q_opt1 = optimal_uniform(1.0, n)?;
    let q_opt1pd = optimal_uniform(1.0 + pair.delta, n)?;
    let found = minimax_search(pair);
    let d1_opt = distortion_closed(1.0, &q_opt1)?;
    let d1_minimax = distortion_closed(1.0, &found.quantizer)?;
    let v_opt1 = worst_case(&q_opt1, pair)?;
    let v_opt1pd = worst_case(&q_opt1pd, pair)?;
    let report = TradeoffReport {
        n,
        delta: pair.delta,
        d1_opt,
        d1_minimax,
        v_opt1,
        v_opt1pd,
        v_minimax: found.value,
        margin: d1_minimax - d1_opt,
        stretched_fit_margin: v_opt1 - v_opt1pd,
    };
    if report.margin <= 0.0 {
        return Err(Error::TheoryViolation(format!(
            "minimax quantizer did not pay a clean-source cost at N={n}, delta={}: \
             D(1,Q*)={d1_minimax} vs D(1,uniform)={d1_opt}",
            pair.delta
        )));
    }
    if report.stretched_fit_margin <= 0.0 {
        return Err(Error::TheoryViolation(format!(
            "stretched-fit uniform quantizer is not strictly safer at N={n}, delta={}: \
             V(opt1pd)={v_opt1pd} vs V(opt1)={v_opt1}",
            pair.delta
        )));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
