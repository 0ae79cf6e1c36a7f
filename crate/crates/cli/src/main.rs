//! Command-line front end: training runs, evaluation protocols, theory
//! reports and synthetic data generation. Every subcommand writes into
//! its own output directory and echoes the resolved configuration to
//! config.json before any compute.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use localmax_core::data::{
    load_csv, sample_gmm, sample_uniform_background, save_csv, GmmConfig, Standardization,
};
use localmax_core::eval::{
    grid_field_export, local_correlation, noise_rows_csv, noise_sweep, one_class_eval,
    Bounds2D, CorrelationMode, CorrelationScore, Score,
};
use localmax_core::theory::{
    bound_penalty_proxy, construct_max_net, count_pieces_lower_bound_check, extract_pieces,
    spectral_complexity,
};
use localmax_core::{
    load_checkpoint, save_checkpoint, Checkpoint, Error, Matrix, Network, TrainConfig,
    Trainer, Variant,
};

#[derive(Parser)]
#[command(name = "localmax", version, about = "Learn the set of local maxima from positive samples")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the four networks on a dataset (or a synthesized GMM).
    Train(TrainArgs),
    /// One-class AUC of a trained score on held-out positives vs negatives.
    EvalOneclass(EvalOneclassArgs),
    /// AUC against increasingly noisy copies of the test points.
    EvalNoise(EvalNoiseArgs),
    /// Local / standard correlation of scores with target values.
    EvalCorrelation(EvalCorrelationArgs),
    /// Heatmap of c and comparator quiver field over a 2-D grid.
    ExportField(ExportFieldArgs),
    /// Constructive tent-network checks and complexity measures.
    Theory(TheoryArgs),
    /// Synthetic dataset generation.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON file holding a TrainConfig; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training CSV (features only); a 4096-sample GMM is synthesized when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Root seed; overrides the config file value.
    #[arg(long)]
    seed: Option<u64>,
    /// Variant override: full, c_only, h_only, shared_gc, shared_gh.
    #[arg(long)]
    variant: Option<String>,
    /// Checkpoint every k outer iterations (0 saves only the final model).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
}

#[derive(Args)]
struct EvalOneclassArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Positive test points CSV.
    #[arg(long)]
    pos: PathBuf,
    /// Negative test points CSV.
    #[arg(long)]
    neg: PathBuf,
    /// Score: c or h.
    #[arg(long, default_value = "c")]
    score: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalNoiseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Test points CSV.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated noise levels, sorted ascending.
    #[arg(long, default_value = "0,0.05,0.1,0.2,0.4")]
    sigmas: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalCorrelationArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// CSV with features plus a target column.
    #[arg(long)]
    data: PathBuf,
    /// Name of the target column inside the CSV.
    #[arg(long, default_value = "target")]
    target_column: String,
    /// local or standard.
    #[arg(long, default_value = "local")]
    mode: String,
    /// Score: c (classifier differences) or h (comparator on pairs).
    #[arg(long, default_value = "h")]
    score: String,
    #[arg(long, default_value_t = 10000)]
    permutations: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportFieldArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Bounds as x1_min,x1_max,x2_min,x2_max.
    #[arg(long, default_value = "-2,2,-2,2")]
    bounds: String,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TheoryArgs {
    #[command(subcommand)]
    op: TheoryOp,
}

#[derive(Subcommand)]
enum TheoryOp {
    /// Build the 2m-neuron tent network for a point set and verify it.
    Construct {
        /// Comma-separated strictly increasing points.
        #[arg(long)]
        points: String,
        /// Also run the piece-count lower-bound checks.
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectral complexity of each network in a checkpoint.
    Complexity {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generalization-penalty proxy for the value/classifier pair (h, c).
    Bound {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        b_domain: f64,
        #[arg(long, default_value_t = 0.1)]
        gamma1: f64,
        #[arg(long, default_value_t = 0.1)]
        gamma2: f64,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[command(subcommand)]
    op: SynthOp,
}

#[derive(Subcommand)]
enum SynthOp {
    /// 16-mode Gaussian grid samples.
    Gmm {
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform background points kept away from the GMM centers.
    Background {
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        min_dist: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Named substream of the root seed, so each protocol draws from an
/// independent reproducible stream.
fn substream(root: u64, name: &str) -> u64 {
    let mut h = DefaultHasher::new();
    root.hash(&mut h);
    name.hash(&mut h);
    h.finish()
}

fn ensure_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("not a number: {p:?}")))
        })
        .collect()
}

fn parse_variant(s: &str) -> Result<Variant, Error> {
    match s {
        "full" => Ok(Variant::Full),
        "c_only" => Ok(Variant::COnly),
        "h_only" => Ok(Variant::HOnly),
        "shared_gc" => Ok(Variant::SharedGc),
        "shared_gh" => Ok(Variant::SharedGh),
        other => Err(Error::Config(format!("unknown variant {other:?}"))),
    }
}

fn parse_score(s: &str) -> Result<Score, Error> {
    match s {
        "c" => Ok(Score::C),
        "h" => Ok(Score::HUnary),
        other => Err(Error::Config(format!("unknown score {other:?}, expected c or h"))),
    }
}

fn load_ckpt(path: &Path) -> Result<Checkpoint, Error> {
    load_checkpoint(path)
}

fn standardized(ckpt: &Checkpoint, x: &Matrix) -> Matrix {
    match &ckpt.standardization {
        Some(s) => s.apply(x),
        None => x.clone(),
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let mut cfg: TrainConfig = match &args.config {
        Some(path) => serde_json::from_slice(&std::fs::read(path)?)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(v) = &args.variant {
        cfg.variant = parse_variant(v)?;
    }
    cfg.validate()?;

    ensure_dir(&args.out)?;
    ensure_dir(&args.out.join("checkpoints"))?;

    let (x_raw, source) = match &args.data {
        Some(path) => (load_csv(path, None)?.x, path.display().to_string()),
        None => {
            let gmm = GmmConfig::default();
            let ds = sample_gmm(&gmm, 4096, substream(cfg.seed, "synth"))?;
            (ds.x, "synthesized gmm (4096 samples)".to_string())
        }
    };
    let stats = Standardization::fit(&x_raw);
    let x = stats.apply(&x_raw);

    write_json(
        &args.out.join("config.json"),
        &serde_json::json!({ "train": cfg, "data": source }),
    )?;

    let mut trainer = Trainer::new(x.cols(), cfg.clone())?;
    let mut log_lines = String::new();
    let span = if args.checkpoint_every > 0 { args.checkpoint_every } else { cfg.epochs };
    while trainer.epoch < cfg.epochs {
        trainer.config.epochs = (trainer.epoch + span).min(cfg.epochs);
        let entries = trainer.run(&x)?;
        for e in &entries {
            log_lines.push_str(&serde_json::to_string(e)?);
            log_lines.push('\n');
        }
        let mut ckpt = trainer.checkpoint();
        ckpt.config.epochs = cfg.epochs;
        ckpt.standardization = Some(stats.clone());
        let name = if trainer.epoch == cfg.epochs {
            "final.ckpt".to_string()
        } else {
            format!("epoch_{}.ckpt", trainer.epoch)
        };
        save_checkpoint(&args.out.join("checkpoints").join(name), &ckpt)?;
    }
    std::fs::write(args.out.join("log.jsonl"), log_lines)?;

    write_json(
        &args.out.join("metrics.json"),
        &serde_json::json!({
            "epochs": trainer.epoch,
            "steps": trainer.steps,
            "c_hash": trainer.model.c.state_hash(),
            "h_hash": trainer.model.h.state_hash(),
        }),
    )?;
    Ok(())
}

fn cmd_eval_oneclass(args: EvalOneclassArgs) -> Result<(), Error> {
    ensure_dir(&args.out)?;
    let ckpt = load_ckpt(&args.checkpoint)?;
    let score = parse_score(&args.score)?;
    write_json(
        &args.out.join("config.json"),
        &serde_json::json!({
            "protocol": "one_class",
            "checkpoint": args.checkpoint.display().to_string(),
            "score": args.score,
        }),
    )?;
    let mut pos = load_csv(&args.pos, None)?;
    let mut neg = load_csv(&args.neg, None)?;
    pos.x = standardized(&ckpt, &pos.x);
    neg.x = standardized(&ckpt, &neg.x);
    pos.standardization = ckpt.standardization.clone();
    neg.standardization = ckpt.standardization.clone();
    let report = one_class_eval(&ckpt.model, score, &pos, &neg)?;
    write_json(&args.out.join("metrics.json"), &report)?;
    Ok(())
}

fn cmd_eval_noise(args: EvalNoiseArgs) -> Result<(), Error> {
    ensure_dir(&args.out)?;
    let ckpt = load_ckpt(&args.checkpoint)?;
    let sigmas = parse_f64_list(&args.sigmas)?;
    let seed = substream(args.seed.unwrap_or(ckpt.config.seed), "eval");
    write_json(
        &args.out.join("config.json"),
        &serde_json::json!({
            "protocol": "noise_sweep",
            "checkpoint": args.checkpoint.display().to_string(),
            "sigmas": sigmas,
            "seed": seed,
        }),
    )?;
    let data = load_csv(&args.data, None)?;
    let x = standardized(&ckpt, &data.x);
    let (report, rows) = noise_sweep(&ckpt.model, &x, &sigmas, seed)?;
    std::fs::write(args.out.join("noise.csv"), noise_rows_csv(&rows))?;
    write_json(&args.out.join("metrics.json"), &report)?;
    Ok(())
}

fn cmd_eval_correlation(args: EvalCorrelationArgs) -> Result<(), Error> {
    ensure_dir(&args.out)?;
    let ckpt = load_ckpt(&args.checkpoint)?;
    let mode = match args.mode.as_str() {
        "local" => CorrelationMode::Local,
        "standard" => CorrelationMode::Standard,
        other => return Err(Error::Config(format!("unknown mode {other:?}"))),
    };
    let seed = substream(args.seed.unwrap_or(ckpt.config.seed), "eval");
    write_json(
        &args.out.join("config.json"),
        &serde_json::json!({
            "protocol": "correlation",
            "checkpoint": args.checkpoint.display().to_string(),
            "mode": args.mode,
            "score": args.score,
            "permutations": args.permutations,
            "seed": seed,
            "pair_orientation": "(point, neighbor)",
        }),
    )?;
    let data = load_csv(&args.data, Some(&args.target_column))?;
    let targets = data
        .targets
        .clone()
        .ok_or_else(|| Error::Data(format!("no column {:?} in data", args.target_column)))?;
    let x = standardized(&ckpt, &data.x);
    let report = match args.score.as_str() {
        "c" => {
            let scores = ckpt.model.c.apply(&x)?.data().to_vec();
            local_correlation(
                CorrelationScore::Unary(&scores),
                &x,
                &targets,
                mode,
                args.permutations,
                seed,
            )?
        }
        "h" => local_correlation(
            CorrelationScore::Comparator(&ckpt.model.h),
            &x,
            &targets,
            mode,
            args.permutations,
            seed,
        )?,
        other => return Err(Error::Config(format!("unknown score {other:?}"))),
    };
    write_json(&args.out.join("metrics.json"), &report)?;
    Ok(())
}

fn cmd_export_field(args: ExportFieldArgs) -> Result<(), Error> {
    ensure_dir(&args.out)?;
    let ckpt = load_ckpt(&args.checkpoint)?;
    let b = parse_f64_list(&args.bounds)?;
    if b.len() != 4 {
        return Err(Error::Config("bounds must be x1_min,x1_max,x2_min,x2_max".into()));
    }
    let bounds = Bounds2D { x1_min: b[0], x1_max: b[1], x2_min: b[2], x2_max: b[3] };
    write_json(
        &args.out.join("config.json"),
        &serde_json::json!({
            "protocol": "field_export",
            "checkpoint": args.checkpoint.display().to_string(),
            "bounds": b,
            "resolution": args.resolution,
        }),
    )?;
    let (heatmap, quiver) = grid_field_export(&ckpt.model, bounds, args.resolution)?;
    std::fs::write(args.out.join("heatmap.csv"), heatmap)?;
    std::fs::write(args.out.join("quiver.csv"), quiver)?;
    Ok(())
}

fn network_complexity(label: &str, net: &Network) -> serde_json::Value {
    match spectral_complexity(net) {
        Ok(c) => serde_json::json!({ "network": label, "spectral_complexity": c }),
        Err(e) => serde_json::json!({ "network": label, "error": e.to_string() }),
    }
}

fn cmd_theory(args: TheoryArgs) -> Result<(), Error> {
    match args.op {
        TheoryOp::Construct { points, verify, out } => {
            ensure_dir(&out)?;
            let s = parse_f64_list(&points)?;
            write_json(
                &out.join("config.json"),
                &serde_json::json!({ "op": "construct", "points": s, "verify": verify }),
            )?;
            let (net, _) = construct_max_net(&s)?;
            let extracted = extract_pieces(&net)?;
            let claims = if verify {
                Some(count_pieces_lower_bound_check(&s, &net)?)
            } else {
                None
            };
            let passed = extracted.piece_count() == 2 * s.len()
                && claims
                    .as_ref()
                    .map(|c| c[0].passed == Some(true))
                    .unwrap_or(true);
            write_json(
                &out.join("metrics.json"),
                &serde_json::json!({
                    "pieces": extracted.piece_count(),
                    "maxima": s,
                    "claims": claims,
                    "passed": passed,
                }),
            )?;
        }
        TheoryOp::Complexity { checkpoint, out } => {
            ensure_dir(&out)?;
            let ckpt = load_ckpt(&checkpoint)?;
            write_json(
                &out.join("config.json"),
                &serde_json::json!({ "op": "complexity", "checkpoint": checkpoint.display().to_string() }),
            )?;
            let report = serde_json::json!([
                network_complexity("c", &ckpt.model.c),
                network_complexity("h", &ckpt.model.h),
                network_complexity("g_c", &ckpt.model.g_c),
                network_complexity("g_h", &ckpt.model.g_h),
            ]);
            write_json(&out.join("metrics.json"), &report)?;
        }
        TheoryOp::Bound { checkpoint, b_domain, gamma1, gamma2, m, delta, out } => {
            ensure_dir(&out)?;
            let ckpt = load_ckpt(&checkpoint)?;
            write_json(
                &out.join("config.json"),
                &serde_json::json!({
                    "op": "bound",
                    "checkpoint": checkpoint.display().to_string(),
                    "b_domain": b_domain, "gamma1": gamma1, "gamma2": gamma2,
                    "m": m, "delta": delta,
                }),
            )?;
            // h plays the value role, c the classifier role.
            let proxy =
                bound_penalty_proxy(&ckpt.model.h, &ckpt.model.c, b_domain, gamma1, gamma2, m, delta)?;
            write_json(
                &out.join("metrics.json"),
                &serde_json::json!({ "penalty_proxy": proxy }),
            )?;
        }
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    match args.op {
        SynthOp::Gmm { n, seed, sigma, out } => {
            ensure_dir(&out)?;
            let cfg = GmmConfig { sigma, ..Default::default() };
            write_json(
                &out.join("manifest.json"),
                &serde_json::json!({
                    "kind": "gmm", "n": n, "seed": seed,
                    "sigma": sigma, "centers": cfg.centers(),
                }),
            )?;
            let ds = sample_gmm(&cfg, n, substream(seed, "synth"))?;
            save_csv(&out.join("data.csv"), &ds.x, None)?;
        }
        SynthOp::Background { n, seed, min_dist, out } => {
            ensure_dir(&out)?;
            let cfg = GmmConfig::default();
            write_json(
                &out.join("manifest.json"),
                &serde_json::json!({
                    "kind": "background", "n": n, "seed": seed, "min_dist": min_dist,
                }),
            )?;
            let x = sample_uniform_background(
                (-2.0, 2.0),
                2,
                n,
                &cfg.centers(),
                min_dist,
                substream(seed, "synth"),
            )?;
            save_csv(&out.join("data.csv"), &x, None)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Command::Train(a) => cmd_train(a),
        Command::EvalOneclass(a) => cmd_eval_oneclass(a),
        Command::EvalNoise(a) => cmd_eval_noise(a),
        Command::EvalCorrelation(a) => cmd_eval_correlation(a),
        Command::ExportField(a) => cmd_export_field(a),
        Command::Theory(a) => cmd_theory(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Numeric(_) | Error::Internal(_) => 2,
                _ => 1,
            };
            std::process::exit(code);
        }
    }
}
