//! Worst-case distortion curves and CSV result plumbing.
//!
//! The robustness of a frozen model is summarized by a curve mapping a
//! perturbation budget to the distortion an adversary with that budget
//! achieves. The curve is traced by sweeping the transport penalty γ from
//! large to small: each γ yields one `(ρ̂, distortion)` point where ρ̂ is the
//! mean squared displacement the inner maximizer actually used. Queries at
//! arbitrary radii inside the spanned range are answered by linear
//! interpolation.
//!
//! All result files are CSV with a header row and reals printed with 17
//! significant digits, enough to reparse the exact bit pattern.

use rayon::prelude::*;
use std::fs;
use std::path::Path;

use crate::codec::{ModelRef, Stage};
use crate::dro::{attack_batch, Adversary};
use crate::error::{Error, Result};
use crate::nn::{squared_error, Tensor};
use crate::qtheory::TradeoffReport;

// ---------------------------------------------------------------------------
// Run records
// ---------------------------------------------------------------------------

/// One evaluated point of a worst-case distortion sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub gamma: f64,
    pub rho_hat: f64,
    pub mean_distortion: f64,
    pub model_id: String,
    /// Refinement stage the model was evaluated at; `None` for standard
    /// models.
    pub stage: Option<Stage>,
}

impl RunRecord {
    pub fn new(
        gamma: f64,
        rho_hat: f64,
        mean_distortion: f64,
        model_id: impl Into<String>,
        stage: Option<Stage>,
    ) -> Result<Self> {
        if !(rho_hat.is_finite() && rho_hat >= 0.0) {
            return Err(Error::invalid(format!(
                "achieved radius must be finite and non-negative, got {rho_hat}"
            )));
        }
        if !(mean_distortion.is_finite() && mean_distortion >= 0.0) {
            return Err(Error::invalid(format!(
                "mean distortion must be finite and non-negative, got {mean_distortion}"
            )));
        }
        let model_id = model_id.into();
        if model_id.is_empty() || model_id.contains(',') || model_id.contains('\n') {
            return Err(Error::invalid(format!(
                "model id {model_id:?} must be nonempty and free of commas and newlines"
            )));
        }
        Ok(RunRecord {
            gamma,
            rho_hat,
            mean_distortion,
            model_id,
            stage,
        })
    }

    fn stage_label(&self) -> &'static str {
        match self.stage {
            None => "full",
            Some(s) => s.name(),
        }
    }
}

// ---------------------------------------------------------------------------
// Worst-case distortion sweep
// ---------------------------------------------------------------------------

/// Traces the worst-case distortion curve of a frozen model by sweeping the
/// adversary's penalty over `gamma_grid` (strictly decreasing, so the curve
/// runs from tiny radii outward). Each grid point attacks every sample and
/// records the achieved radius and the mean distortion at the attacked
/// points.
pub fn wcd_curve(
    view: ModelRef<'_>,
    samples: &[Tensor],
    gamma_grid: &[f64],
    inner_steps: usize,
    inner_lr_scale: f64,
    model_id: &str,
) -> Result<Vec<RunRecord>> {
    if gamma_grid.is_empty() {
        return Err(Error::invalid("gamma grid is empty"));
    }
    for pair in gamma_grid.windows(2) {
        if !(pair[1] < pair[0]) {
            return Err(Error::invalid(format!(
                "gamma grid must be strictly decreasing, got {} before {}",
                pair[0], pair[1]
            )));
        }
    }
    if samples.is_empty() {
        return Err(Error::invalid("worst-case sweep over an empty batch"));
    }
    let stage = match view {
        ModelRef::Standard(_) => None,
        ModelRef::Refinement(_, s) => Some(s),
    };
    let mut records = Vec::with_capacity(gamma_grid.len());
    for &gamma in gamma_grid {
        let adv = Adversary {
            gamma,
            inner_steps,
            inner_lr_scale,
        };
        adv.validate()?;
        let attacked = attack_batch(view, samples, &adv)?;
        let per_sample: Vec<(f64, f64)> = samples
            .par_iter()
            .zip(&attacked)
            .map(|(x, xa)| {
                let displacement = squared_error(x, xa)?;
                let x_hat = view.reconstruct(xa)?;
                Ok((displacement, squared_error(xa, &x_hat)?))
            })
            .collect::<Result<_>>()?;
        let n = samples.len() as f64;
        let rho_hat = per_sample.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_distortion = per_sample.iter().map(|p| p.1).sum::<f64>() / n;
        records.push(RunRecord::new(
            gamma,
            rho_hat,
            mean_distortion,
            model_id,
            stage,
        )?);
    }
    Ok(records)
}

/// Piecewise-linear view of a swept curve, queryable at arbitrary radii
/// within the spanned range.
#[derive(Debug, Clone)]
pub struct WcdCurve {
    /// `(ρ̂, distortion)` knots sorted by ρ̂.
    points: Vec<(f64, f64)>,
}

impl WcdCurve {
    pub fn from_records(records: &[RunRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("cannot interpolate an empty curve"));
        }
        let mut points: Vec<(f64, f64)> = records
            .iter()
            .map(|r| (r.rho_hat, r.mean_distortion))
            .collect();
        points.sort_by(|a, b| a.partial_cmp(b).expect("finite by construction"));
        // Coinciding radii collapse to the worse distortion; the curve is a
        // worst-case estimate.
        let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for (r, d) in points {
            match dedup.last_mut() {
                Some(last) if last.0 == r => last.1 = last.1.max(d),
                _ => dedup.push((r, d)),
            }
        }
        Ok(WcdCurve { points: dedup })
    }

    /// Smallest and largest achieved radius.
    pub fn span(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Linearly interpolated distortion at radius `rho`.
    pub fn query(&self, rho: f64) -> Result<f64> {
        let (lo, hi) = self.span();
        if !rho.is_finite() || rho < lo || rho > hi {
            return Err(Error::OutOfRange(format!(
                "radius {rho} outside the spanned range [{lo}, {hi}]"
            )));
        }
        let idx = self.points.partition_point(|p| p.0 <= rho);
        if idx == 0 {
            return Ok(self.points[0].1);
        }
        let (r0, d0) = self.points[idx - 1];
        if idx == self.points.len() || r0 == rho {
            return Ok(d0);
        }
        let (r1, d1) = self.points[idx];
        let t = (rho - r0) / (r1 - r0);
        Ok(d0 + t * (d1 - d0))
    }

    /// Whether distortion never decreases along the curve, up to `tol` of
    /// backward slack (evaluation noise on near-coincident radii).
    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.points
            .windows(2)
            .all(|p| p[1].1 >= p[0].1 - tol)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

// ---------------------------------------------------------------------------
// CSV formatting
// ---------------------------------------------------------------------------

/// 17 significant digits: scientific notation with 16 fractional digits,
/// enough to recover the exact binary64 value on reparse.
fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Worst-case sweep records as CSV text.
pub fn wcd_csv_string(records: &[RunRecord]) -> String {
    let mut out = String::from("gamma,rho_hat,mean_distortion,model_id,stage\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_real(r.gamma),
            fmt_real(r.rho_hat),
            fmt_real(r.mean_distortion),
            r.model_id,
            r.stage_label()
        ));
    }
    out
}

/// Reparses [`wcd_csv_string`] output; `origin` names the source in errors.
pub fn parse_wcd_csv(text: &str, origin: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "gamma,rho_hat,mean_distortion,model_id,stage" {
        return Err(Error::Format {
            path: origin.to_string(),
            reason: format!("unexpected header {header:?}"),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let err = |reason: String| Error::Format {
            path: origin.to_string(),
            reason: format!("line {}: {reason}", i + 2),
        };
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", fields.len())));
        }
        let real = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| err(format!("bad real {s:?}")))
        };
        let stage = match fields[4] {
            "full" => None,
            "1" => Some(Stage::One),
            "2" => Some(Stage::Two),
            other => return Err(err(format!("bad stage {other:?}"))),
        };
        records.push(RunRecord::new(
            real(fields[0])?,
            real(fields[1])?,
            real(fields[2])?,
            fields[3],
            stage,
        )?);
    }
    Ok(records)
}

/// Distortion-versus-angle points as CSV text.
pub fn rotation_csv_string(points: &[(f64, f64)]) -> String {
    let mut out = String::from("angle_degrees,mean_distortion\n");
    for &(deg, d) in points {
        out.push_str(&format!("{},{}\n", fmt_real(deg), fmt_real(d)));
    }
    out
}

/// Reparses [`rotation_csv_string`] output.
pub fn parse_rotation_csv(text: &str, origin: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "angle_degrees,mean_distortion" {
        return Err(Error::Format {
            path: origin.to_string(),
            reason: format!("unexpected header {header:?}"),
        });
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let err = |reason: String| Error::Format {
            path: origin.to_string(),
            reason: format!("line {}: {reason}", i + 2),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(err(format!("expected 2 fields, got {}", fields.len())));
        }
        let deg: f64 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad real {:?}", fields[0])))?;
        let d: f64 = fields[1]
            .parse()
            .map_err(|_| err(format!("bad real {:?}", fields[1])))?;
        points.push((deg, d));
    }
    Ok(points)
}

/// Quantizer-theory sweep rows as CSV text.
pub fn theory_csv_string(reports: &[TradeoffReport]) -> String {
    let mut out =
        String::from("N,delta,D_1_opt,D_1_minimax,V_opt1,V_opt1pd,V_minimax,margin\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n,
            fmt_real(r.delta),
            fmt_real(r.d1_opt),
            fmt_real(r.d1_minimax),
            fmt_real(r.v_opt1),
            fmt_real(r.v_opt1pd),
            fmt_real(r.v_minimax),
            fmt_real(r.margin),
        ));
    }
    out
}

/// Writes CSV (or any text) to disk.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
