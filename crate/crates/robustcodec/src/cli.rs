//! Command-line workbench over the library.
//!
//! Every subcommand takes one optional positional argument: the path to a
//! line-based `key=value` config file (blank lines and `#` comments are
//! skipped). Keys are validated against a global whitelist, and each
//! subcommand rejects keys it does not consume, so a typo fails loudly
//! instead of silently training with a default.
//!
//! Training subcommands write a versioned binary checkpoint when `output=`
//! is set; evaluation subcommands write CSV when `csv=` is set. Every run
//! prints a one-line summary to stdout. Runs are deterministic: the same
//! config file yields bitwise-identical checkpoints and CSV.
//!
//! Exit codes: 0 success, 2 usage or config errors, 3 numerical failures,
//! 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, ModelPayload};
use crate::codec::{ModelRef, Stage, StandardCompressor, StructuredCompressor};
use crate::config::ConfigMap;
use crate::data::{load_idx, pool_to, synth_source, Dataset, SourceKind};
use crate::dro::{
    achieved_radius, awgn_augment_train, train_dro, train_standard, train_structured, DroConfig,
    TrainConfig, TrainReport,
};
use crate::error::{Error, Result};
use crate::eval::{rotation_csv_string, theory_csv_string, wcd_csv_string, wcd_curve, write_text};
use crate::groupshift::{
    distortion_vs_angle, structured_distortion_vs_angle, train_angle_predictor,
    train_groupshift_dro, AngleCodec, AnglePredictor, RotationGrid,
};
use crate::qtheory::{verify_tradeoff, TradeoffReport, UniformPair};
use crate::quantizer::Codebook;

// ---------------------------------------------------------------------------
// Argument grammar
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "robustcodec",
    version,
    about = "Workbench for robust learned compression: training, worst-case evaluation, and scalar-quantizer theory checks",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Path to a key=value config file; omit to run with defaults.
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a plain quantized autoencoder.
    TrainStandard(ConfigArg),
    /// Train against the transport-penalized worst-case adversary.
    TrainDro(ConfigArg),
    /// Train a two-stage successive-refinement code.
    TrainStructured(ConfigArg),
    /// Train against the worst rotation on an angle grid.
    TrainGroupshift(ConfigArg),
    /// Train an angle predictor over a frozen base compressor.
    TrainAnglepred(ConfigArg),
    /// Sweep gamma and emit a worst-case distortion curve.
    EvalWcd(ConfigArg),
    /// Emit mean distortion versus rotation angle.
    EvalRotation(ConfigArg),
    /// Check the minimax-quantizer theory over a (levels, delta) sweep.
    TheoryVerify(ConfigArg),
    /// Search the minimax quantizer for one (levels, delta) pair.
    TheoryMinimax(ConfigArg),
    /// Train the noise-augmentation baseline.
    AugmentAwgn(ConfigArg),
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Runs the CLI on an argv-style vector (the binary name first) and returns
/// the process exit code.
pub fn main_entry(args: Vec<String>) -> ExitCode {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors; real usage errors
            // land on stderr with the usage exit code.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Config(_) => 2,
        Error::Numerical(_) => 3,
        _ => 1,
    }
}

fn run(cmd: Command) -> Result<String> {
    match cmd {
        Command::TrainStandard(a) => cmd_train_standard(load_config(&a)?),
        Command::TrainDro(a) => cmd_train_dro(load_config(&a)?),
        Command::TrainStructured(a) => cmd_train_structured(load_config(&a)?),
        Command::TrainGroupshift(a) => cmd_train_groupshift(load_config(&a)?),
        Command::TrainAnglepred(a) => cmd_train_anglepred(load_config(&a)?),
        Command::EvalWcd(a) => cmd_eval_wcd(load_config(&a)?),
        Command::EvalRotation(a) => cmd_eval_rotation(load_config(&a)?),
        Command::TheoryVerify(a) => cmd_theory_verify(load_config(&a)?),
        Command::TheoryMinimax(a) => cmd_theory_minimax(load_config(&a)?),
        Command::AugmentAwgn(a) => cmd_augment_awgn(load_config(&a)?),
    }
}

fn load_config(arg: &ConfigArg) -> Result<ConfigMap> {
    match &arg.config {
        Some(path) => ConfigMap::parse_file(path),
        None => Ok(ConfigMap::empty()),
    }
}

// ---------------------------------------------------------------------------
// Shared config pieces
// ---------------------------------------------------------------------------

const DEFAULT_GAMMA_GRID: &[f64] = &[1e9, 1e3, 1e2, 30.0, 10.0, 3.0, 1.0, 0.3];

fn train_keys(cfg: &mut ConfigMap) -> Result<TrainConfig> {
    Ok(TrainConfig {
        epochs: cfg.get_usize("epochs", 30)?,
        batch_size: cfg.get_usize("batch_size", 8)?,
        lr: cfg.get_f64("lr", 0.05)?,
        seed: cfg.get_u64("seed", 0)?,
    })
}

/// Effective training keys, echoed into the checkpoint. The seed is stored
/// as a dedicated checkpoint field and is not repeated here.
fn train_echo(tc: &TrainConfig) -> Vec<(String, String)> {
    vec![
        ("epochs".to_string(), tc.epochs.to_string()),
        ("batch_size".to_string(), tc.batch_size.to_string()),
        ("lr".to_string(), format!("{}", tc.lr)),
    ]
}

fn adversary_keys(cfg: &mut ConfigMap, default_steps: usize) -> Result<(f64, usize, f64)> {
    Ok((
        cfg.get_f64("gamma", 1.0)?,
        cfg.get_usize("inner_steps", default_steps)?,
        cfg.get_f64("inner_lr_scale", 1.0)?,
    ))
}

/// Adversary keys are echoed only when ascent steps are actually taken, so
/// a robust run with `inner_steps=0` produces a checkpoint byte-identical
/// to plain training under the same seed.
fn adversary_echo(gamma: f64, inner_steps: usize, inner_lr_scale: f64) -> Vec<(String, String)> {
    if inner_steps == 0 {
        return Vec::new();
    }
    vec![
        ("gamma".to_string(), format!("{gamma}")),
        ("inner_steps".to_string(), inner_steps.to_string()),
        ("inner_lr_scale".to_string(), format!("{inner_lr_scale}")),
    ]
}

struct StandardArch {
    latent_m: usize,
    codebook_size: usize,
    temperature: f64,
    hidden: Vec<usize>,
}

fn standard_arch(cfg: &mut ConfigMap) -> Result<StandardArch> {
    Ok(StandardArch {
        latent_m: cfg.get_usize("latent_m", 10)?,
        codebook_size: cfg.get_usize("codebook_size", 12)?,
        temperature: cfg.get_f64("temperature", 1.0)?,
        hidden: cfg.get_usize_list("hidden", &[48])?,
    })
}

impl StandardArch {
    fn build(&self, n: usize, seed: u64) -> Result<StandardCompressor> {
        let codebook = Codebook::evenly_spaced(self.codebook_size, -1.0, 1.0, self.temperature)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StandardCompressor::new(n, &self.hidden, self.latent_m, codebook, &mut rng)
    }

    fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("latent_m".to_string(), self.latent_m.to_string()),
            ("codebook_size".to_string(), self.codebook_size.to_string()),
            ("temperature".to_string(), format!("{}", self.temperature)),
            ("hidden".to_string(), join_usize(&self.hidden)),
        ]
    }
}

fn join_usize(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

// ---------------------------------------------------------------------------
// Dataset selection
// ---------------------------------------------------------------------------

enum DataKind {
    Idx(String),
    Synth {
        kind: SourceKind,
        n: usize,
        count: usize,
        seed: u64,
    },
}

/// Parsed dataset keys: `data=` (IDX file) or `source=kind:width:count[:seed]`
/// (synthetic), plus optional square average pooling via `pool=side`.
struct DataSpec {
    kind: DataKind,
    pool: Option<usize>,
    echo: Vec<(String, String)>,
}

fn data_keys(cfg: &mut ConfigMap) -> Result<DataSpec> {
    let data = cfg.take("data");
    let source = cfg.take("source");
    let pool = match cfg.take("pool") {
        Some(v) => Some(parse_num::<usize>("pool", &v)?),
        None => None,
    };
    let (kind, mut echo) = match (data, source) {
        (Some(path), None) => {
            let echo = vec![("data".to_string(), path.clone())];
            (DataKind::Idx(path), echo)
        }
        (None, Some(spec)) => {
            let kind = parse_source_spec(&spec)?;
            (kind, vec![("source".to_string(), spec)])
        }
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "set either data= or source=, not both".to_string(),
            ));
        }
        (None, None) => {
            return Err(Error::Config(
                "a dataset is required: set data=<idx file> or source=<kind:width:count[:seed]>"
                    .to_string(),
            ));
        }
    };
    if let Some(side) = pool {
        echo.push(("pool".to_string(), side.to_string()));
    }
    Ok(DataSpec { kind, pool, echo })
}

impl DataSpec {
    fn load(&self) -> Result<Dataset> {
        let dataset = match &self.kind {
            DataKind::Idx(path) => load_idx(path)?,
            DataKind::Synth {
                kind,
                n,
                count,
                seed,
            } => synth_source(*kind, *n, *count, *seed)?,
        };
        match self.pool {
            Some(side) => pool_to(&dataset, side, side),
            None => Ok(dataset),
        }
    }
}

fn parse_source_spec(spec: &str) -> Result<DataKind> {
    let parts: Vec<&str> = spec.split(':').collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(Error::Config(format!(
            "source spec must be kind:width:count[:seed], got {spec:?}"
        )));
    }
    let kind = SourceKind::parse(parts[0])?;
    let n = parse_num::<usize>("source width", parts[1])?;
    let count = parse_num::<usize>("source count", parts[2])?;
    let seed = if parts.len() == 4 {
        parse_num::<u64>("source seed", parts[3])?
    } else {
        0
    };
    Ok(DataKind::Synth {
        kind,
        n,
        count,
        seed,
    })
}

fn parse_num<T: std::str::FromStr>(what: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {what} value {v:?}")))
}

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

fn final_loss(report: &TrainReport) -> f64 {
    report.final_loss().unwrap_or(f64::NAN)
}

fn need_dims(dataset: &Dataset) -> Result<(usize, usize)> {
    dataset.image_dims.ok_or_else(|| {
        Error::Config(
            "this subcommand needs image-shaped data (a bars source or IDX images)".to_string(),
        )
    })
}

fn stem_of(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string())
}

fn save_model(
    payload: ModelPayload,
    seed: u64,
    echo: Vec<(String, String)>,
    output: Option<&str>,
) -> Result<String> {
    let ck = Checkpoint::new(payload, seed, echo)?;
    match output {
        Some(path) => {
            ck.save(path)?;
            Ok(format!(", wrote {path}"))
        }
        None => Ok(String::new()),
    }
}

fn write_csv(csv: Option<&str>, text: &str) -> Result<String> {
    match csv {
        Some(path) => {
            write_text(path, text)?;
            Ok(format!(", wrote {path}"))
        }
        None => Ok(String::new()),
    }
}

/// Resolves a loaded compressor checkpoint plus an optional `stage=` key to
/// an evaluation view. Refinement checkpoints default to the full-rate
/// second stage.
fn view_of<'a>(payload: &'a ModelPayload, stage: Option<Stage>) -> Result<ModelRef<'a>> {
    match (payload, stage) {
        (ModelPayload::Standard(m), None) => Ok(ModelRef::Standard(m)),
        (ModelPayload::Standard(_), Some(_)) => Err(Error::Config(
            "stage selection only applies to refinement checkpoints".to_string(),
        )),
        (ModelPayload::Refinement(m), s) => Ok(ModelRef::Refinement(m, s.unwrap_or(Stage::Two))),
        (ModelPayload::AnglePredictor(_), _) => Err(Error::Config(
            "an angle predictor has no distortion curve; point model= at a compressor".to_string(),
        )),
    }
}

fn parse_stage(v: &str) -> Result<Stage> {
    match v.trim() {
        "1" => Ok(Stage::One),
        "2" => Ok(Stage::Two),
        other => Err(Error::Config(format!(
            "stage must be 1 or 2, got {other:?}"
        ))),
    }
}

fn worst_point(points: &[(f64, f64)]) -> (f64, f64) {
    points
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, p| {
            if p.1 > acc.1 {
                p
            } else {
                acc
            }
        })
}

// ---------------------------------------------------------------------------
// Training subcommands
// ---------------------------------------------------------------------------

fn cmd_train_standard(mut cfg: ConfigMap) -> Result<String> {
    let data = data_keys(&mut cfg)?;
    let tc = train_keys(&mut cfg)?;
    let arch = standard_arch(&mut cfg)?;
    let output = cfg.take("output");
    cfg.finish()?;

    let dataset = data.load()?;
    let mut model = arch.build(dataset.width(), tc.seed)?;
    let report = train_standard(&mut model, &dataset.samples, &tc)?;
    let clean = model.distortion(&dataset.samples)?;
    let rate = model.rate_bits();

    let mut echo = data.echo;
    echo.extend(train_echo(&tc));
    echo.extend(arch.echo());
    let saved = save_model(ModelPayload::Standard(model), tc.seed, echo, output.as_deref())?;
    Ok(format!(
        "train-standard: {} samples of width {}, rate {:.2} bits, final loss {:.6e}, clean distortion {:.6e}{}",
        dataset.len(),
        dataset.width(),
        rate,
        final_loss(&report),
        clean,
        saved
    ))
}

fn cmd_train_dro(mut cfg: ConfigMap) -> Result<String> {
    let data = data_keys(&mut cfg)?;
    let tc = train_keys(&mut cfg)?;
    let arch = standard_arch(&mut cfg)?;
    let (gamma, inner_steps, inner_lr_scale) = adversary_keys(&mut cfg, 5)?;
    let output = cfg.take("output");
    cfg.finish()?;

    let dataset = data.load()?;
    let mut model = arch.build(dataset.width(), tc.seed)?;
    let dro = DroConfig {
        base: tc,
        gamma,
        inner_steps,
        inner_lr_scale,
    };
    let report = train_dro(&mut model, &dataset.samples, &dro)?;
    let clean = model.distortion(&dataset.samples)?;
    // Effective robustness radius of the finished model, probed on a fixed
    // prefix of the training set to keep the summary cheap.
    let probe = &dataset.samples[..dataset.len().min(128)];
    let rho_hat = achieved_radius(ModelRef::Standard(&model), probe, &dro.adversary())?;

    let mut echo = data.echo;
    echo.extend(train_echo(&dro.base));
    echo.extend(arch.echo());
    echo.extend(adversary_echo(gamma, inner_steps, inner_lr_scale));
    let saved = save_model(
        ModelPayload::Standard(model),
        dro.base.seed,
        echo,
        output.as_deref(),
    )?;
    Ok(format!(
        "train-dro: gamma {gamma}, {inner_steps} ascent steps, achieved radius {rho_hat:.6e}, final loss {:.6e}, clean distortion {clean:.6e}{saved}",
        final_loss(&report)
    ))
}

fn cmd_train_structured(mut cfg: ConfigMap) -> Result<String> {
    let data = data_keys(&mut cfg)?;
    let tc = train_keys(&mut cfg)?;
    let m1 = cfg.get_usize("m1", 7)?;
    let m2 = cfg.get_usize("m2", 3)?;
    let codebook_size = cfg.get_usize("codebook_size", 12)?;
    let temperature = cfg.get_f64("temperature", 1.0)?;
    let hidden = cfg.get_usize_list("hidden", &[48])?;
    let (gamma, inner_steps, inner_lr_scale) = adversary_keys(&mut cfg, 0)?;
    let output = cfg.take("output");
    cfg.finish()?;

    let dataset = data.load()?;
    let codebook = Codebook::evenly_spaced(codebook_size, -1.0, 1.0, temperature)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut model =
        StructuredCompressor::new(dataset.width(), &hidden, m1, m2, codebook, &mut rng)?;
    let dro = DroConfig {
        base: tc,
        gamma,
        inner_steps,
        inner_lr_scale,
    };
    let report = train_structured(&mut model, &dataset.samples, &dro)?;
    let d1 = model.distortion(&dataset.samples, Stage::One)?;
    let d2 = model.distortion(&dataset.samples, Stage::Two)?;
    let r1 = model.rate_bits(Stage::One);
    let r2 = model.rate_bits(Stage::Two);

    let mut echo = data.echo;
    echo.extend(train_echo(&dro.base));
    echo.extend([
        ("m1".to_string(), m1.to_string()),
        ("m2".to_string(), m2.to_string()),
        ("codebook_size".to_string(), codebook_size.to_string()),
        ("temperature".to_string(), format!("{temperature}")),
        ("hidden".to_string(), join_usize(&hidden)),
    ]);
    echo.extend(adversary_echo(gamma, inner_steps, inner_lr_scale));
    let saved = save_model(
        ModelPayload::Refinement(model),
        dro.base.seed,
        echo,
        output.as_deref(),
    )?;
    Ok(format!(
        "train-structured: split {m1}+{m2} ({r1:.2}/{r2:.2} bits), final loss {:.6e}, stage-1 distortion {d1:.6e}, stage-2 distortion {d2:.6e}{saved}",
        final_loss(&report)
    ))
}

fn cmd_train_groupshift(mut cfg: ConfigMap) -> Result<String> {
    let data = data_keys(&mut cfg)?;
    let tc = train_keys(&mut cfg)?;
    let arch = standard_arch(&mut cfg)?;
    let grid_step = cfg.get_f64("grid_step", 1.0)?;
    let output = cfg.take("output");
    cfg.finish()?;

    let dataset = data.load()?;
    let dims = need_dims(&dataset)?;
    let grid = RotationGrid::from_degrees(grid_step)?;
    let mut model = arch.build(dataset.width(), tc.seed)?;
    let report = train_groupshift_dro(&mut model, &dataset.samples, dims, &grid, &tc)?;
    let curve = distortion_vs_angle(ModelRef::Standard(&model), &dataset.samples, dims, &grid)?;
    let (worst_phi, worst_d) = worst_point(&curve);

    let mut echo = data.echo;
    echo.extend(train_echo(&tc));
    echo.extend(arch.echo());
    echo.push(("grid_step".to_string(), format!("{grid_step}")));
    let saved = save_model(ModelPayload::Standard(model), tc.seed, echo, output.as_deref())?;
    Ok(format!(
        "train-groupshift: {}-angle grid, final loss {:.6e}, worst rotated distortion {worst_d:.6e} at {:+.1} degrees{saved}",
        grid.len(),
        final_loss(&report),
        worst_phi.to_degrees()
    ))
}

fn cmd_train_anglepred(mut cfg: ConfigMap) -> Result<String> {
    let base_path = cfg.require("base")?;
    let data = data_keys(&mut cfg)?;
    let tc = train_keys(&mut cfg)?;
    let hidden = cfg.get_usize_list("hidden", &[64, 32])?;
    let angle_step = cfg.get_f64("angle_step", 2.5)?;
    let grid_step = cfg.get_f64("grid_step", 1.0)?;
    let output = cfg.take("output");
    cfg.finish()?;

    let dataset = data.load()?;
    let dims = need_dims(&dataset)?;
    let base = match Checkpoint::load(&base_path)?.into_payload() {
        ModelPayload::Standard(m) => m,
        other => {
            return Err(Error::Config(format!(
                "base checkpoint must hold a standard compressor, found {}",
                other.kind_name()
            )));
        }
    };
    let codec = AngleCodec::new(angle_step)?;
    let grid = RotationGrid::from_degrees(grid_step)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut predictor = AnglePredictor::new(dataset.width(), &hidden, &mut rng)?;
    let report =
        train_angle_predictor(&mut predictor, &base, &dataset.samples, dims, &grid, &codec, &tc)?;

    let mut echo = data.echo;
    echo.extend(train_echo(&tc));
    echo.extend([
        ("base".to_string(), base_path),
        ("hidden".to_string(), join_usize(&hidden)),
        ("angle_step".to_string(), format!("{angle_step}")),
        ("grid_step".to_string(), format!("{grid_step}")),
    ]);
    let saved = save_model(
        ModelPayload::AnglePredictor(predictor),
        tc.seed,
        echo,
        output.as_deref(),
    )?;
    Ok(format!(
        "train-anglepred: {}-point angle codec ({:.2} bits), final loss {:.6e}{saved}",
        codec.points(),
        codec.bits(),
        final_loss(&report)
    ))
}

fn cmd_augment_awgn(mut cfg: ConfigMap) -> Result<String> {
    let data = data_keys(&mut cfg)?;
    let tc = train_keys(&mut cfg)?;
    let arch = standard_arch(&mut cfg)?;
    let rho = cfg.require_f64("rho")?;
    let output = cfg.take("output");
    cfg.finish()?;

    let dataset = data.load()?;
    let mut model = arch.build(dataset.width(), tc.seed)?;
    let report = awgn_augment_train(&mut model, &dataset.samples, &tc, rho)?;
    let clean = model.distortion(&dataset.samples)?;

    let mut echo = data.echo;
    echo.extend(train_echo(&tc));
    echo.extend(arch.echo());
    echo.push(("rho".to_string(), format!("{rho}")));
    let saved = save_model(ModelPayload::Standard(model), tc.seed, echo, output.as_deref())?;
    Ok(format!(
        "augment-awgn: noise power {rho}, final loss {:.6e}, clean distortion {clean:.6e}{saved}",
        final_loss(&report)
    ))
}

// ---------------------------------------------------------------------------
// Evaluation subcommands
// ---------------------------------------------------------------------------

fn cmd_eval_wcd(mut cfg: ConfigMap) -> Result<String> {
    let model_path = cfg.require("model")?;
    let data = data_keys(&mut cfg)?;
    let gamma_grid = cfg.get_f64_list("gamma_grid", DEFAULT_GAMMA_GRID)?;
    let inner_steps = cfg.get_usize("inner_steps", 10)?;
    let inner_lr_scale = cfg.get_f64("inner_lr_scale", 1.0)?;
    let stage = cfg.take("stage").map(|s| parse_stage(&s)).transpose()?;
    let csv = cfg.take("csv");
    cfg.finish()?;

    let dataset = data.load()?;
    let payload = Checkpoint::load(&model_path)?.into_payload();
    let view = view_of(&payload, stage)?;
    let model_id = stem_of(&model_path);
    let records = wcd_curve(
        view,
        &dataset.samples,
        &gamma_grid,
        inner_steps,
        inner_lr_scale,
        &model_id,
    )?;
    let text = wcd_csv_string(&records);
    let wrote = write_csv(csv.as_deref(), &text)?;
    let first = records.first().expect("grid is nonempty");
    let last = records.last().expect("grid is nonempty");
    Ok(format!(
        "eval-wcd: {} gamma points on {} samples, radius span [{:.3e}, {:.3e}], distortion span [{:.6e}, {:.6e}]{wrote}",
        records.len(),
        dataset.len(),
        first.rho_hat,
        last.rho_hat,
        first.mean_distortion,
        last.mean_distortion
    ))
}

fn cmd_eval_rotation(mut cfg: ConfigMap) -> Result<String> {
    let model_path = cfg.require("model")?;
    let predictor_path = cfg.take("predictor");
    // The angle codec only exists in the predict-then-derotate pipeline, so
    // angle_step is left unread (and therefore rejected) without predictor=.
    let angle_step = if predictor_path.is_some() {
        cfg.get_f64("angle_step", 2.5)?
    } else {
        2.5
    };
    let grid_step = cfg.get_f64("grid_step", 1.0)?;
    let data = data_keys(&mut cfg)?;
    let csv = cfg.take("csv");
    cfg.finish()?;

    let dataset = data.load()?;
    let dims = need_dims(&dataset)?;
    let base = match Checkpoint::load(&model_path)?.into_payload() {
        ModelPayload::Standard(m) => m,
        other => {
            return Err(Error::Config(format!(
                "model checkpoint must hold a standard compressor, found {}",
                other.kind_name()
            )));
        }
    };
    let grid = RotationGrid::from_degrees(grid_step)?;
    let points_rad = match predictor_path {
        Some(ppath) => {
            let predictor = match Checkpoint::load(&ppath)?.into_payload() {
                ModelPayload::AnglePredictor(p) => p,
                other => {
                    return Err(Error::Config(format!(
                        "predictor checkpoint must hold an angle predictor, found {}",
                        other.kind_name()
                    )));
                }
            };
            let codec = AngleCodec::new(angle_step)?;
            structured_distortion_vs_angle(
                &predictor,
                &codec,
                &base,
                &dataset.samples,
                dims,
                &grid,
            )?
        }
        None => distortion_vs_angle(ModelRef::Standard(&base), &dataset.samples, dims, &grid)?,
    };
    let points: Vec<(f64, f64)> = points_rad
        .iter()
        .map(|&(phi, d)| (phi.to_degrees(), d))
        .collect();
    let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let (worst_deg, worst_d) = worst_point(&points);
    let text = rotation_csv_string(&points);
    let wrote = write_csv(csv.as_deref(), &text)?;
    Ok(format!(
        "eval-rotation: {} angles, mean distortion {mean:.6e}, worst {worst_d:.6e} at {worst_deg:+.1} degrees{wrote}",
        points.len()
    ))
}

// ---------------------------------------------------------------------------
// Theory subcommands
// ---------------------------------------------------------------------------

fn cmd_theory_verify(mut cfg: ConfigMap) -> Result<String> {
    let n_list = cfg.get_usize_list("n_list", &[2, 4, 8])?;
    let delta_fracs = cfg.get_f64_list("delta_fracs", &[0.25, 0.5, 0.9])?;
    let csv = cfg.take("csv");
    cfg.finish()?;

    let mut pairs = Vec::new();
    for &n in &n_list {
        for &frac in &delta_fracs {
            pairs.push((n, frac));
        }
    }
    let reports: Vec<TradeoffReport> = pairs
        .par_iter()
        .map(|&(n, frac)| {
            let pair = UniformPair::new(n, frac / n as f64)?;
            verify_tradeoff(&pair)
        })
        .collect::<Result<_>>()?;
    let min_margin = reports
        .iter()
        .map(|r| r.margin)
        .fold(f64::INFINITY, f64::min);
    let text = theory_csv_string(&reports);
    let wrote = write_csv(csv.as_deref(), &text)?;
    Ok(format!(
        "theory-verify: {} (levels, delta) pairs hold, min distortion margin {min_margin:.3e}{wrote}",
        reports.len()
    ))
}

fn cmd_theory_minimax(mut cfg: ConfigMap) -> Result<String> {
    let levels = cfg.require_usize("levels")?;
    let delta = cfg.require_f64("delta")?;
    let csv = cfg.take("csv");
    cfg.finish()?;

    let pair = UniformPair::new(levels, delta)?;
    let report = verify_tradeoff(&pair)?;
    let text = theory_csv_string(std::slice::from_ref(&report));
    let wrote = write_csv(csv.as_deref(), &text)?;
    Ok(format!(
        "theory-minimax: N={levels} delta={delta}, minimax worst-case {:.8e} vs uniform designs {:.8e}/{:.8e}, distortion margin {:.3e}{wrote}",
        report.v_minimax, report.v_opt1, report.v_opt1pd, report.margin
    ))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
