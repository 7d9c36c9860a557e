//! `skinfit` command-line tool.

mod files;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use skinfit::anim::{lbs_sequence, SyntheticRig, RigParams};
use skinfit::codec::{self, HEADER_BYTES, MAGIC};
use skinfit::fitting::{FitTrace, SolverConfig};
use skinfit::metrics::{self, evaluate, per_vertex_error, ErrorReport};
use skinfit::pipeline::{decompose, Initializer, InitializerSpec, PipelineConfig};
use skinfit::predictor::{train, training_samples, CnnModel, LabelSet, TrainConfig, DEFAULT_B_MAX, DEFAULT_EPSILON};
use skinfit::AnimSequence;

use files::{dataset_files, is_compressed, load_anim, load_model, read_labels, save_anim, write_atomic};

#[derive(Parser)]
#[command(name = "skinfit", version, about = "Compress mesh animations into linear-blend-skinning models")]
struct Cli {
    /// Only errors on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Treat solver warnings as errors.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic rigged animations with ground-truth weights and labels.
    Synth(SynthArgs),
    /// Train the trajectory classifier on a directory of animations and labels.
    Train(TrainArgs),
    /// Decompose an animation into a compressed skinning model.
    Decompose(DecomposeArgs),
    /// Play back a compressed model as an animation file.
    Reconstruct(ReconstructArgs),
    /// Compare an approximation against the original animation.
    Evaluate(EvaluateArgs),
    /// Print header fields of an animation or compressed file.
    Info(InfoArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    bones: usize,
    #[arg(long, default_value_t = 40)]
    vertices_per_segment: usize,
    #[arg(long, default_value_t = 30)]
    frames: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    blend_width: f64,
    /// Width of the label rows.
    #[arg(long, default_value_t = DEFAULT_B_MAX)]
    b_max: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of `.anim` files, each with a sibling `.labels` file.
    #[arg(long)]
    data_dir: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch CSV log; defaults to the checkpoint path with `.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_B_MAX)]
    b_max: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 4096)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Which pose the bone transforms act on.
#[derive(Clone, Copy, Debug, PartialEq)]
enum RestChoice {
    Frame(usize),
    Stored,
}

impl FromStr for RestChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "stored" {
            return Ok(Self::Stored);
        }
        s.strip_prefix("frame:")
            .and_then(|p| p.parse().ok())
            .map(Self::Frame)
            .ok_or_else(|| format!("`{s}`: expected frame:<index> or stored"))
    }
}

#[derive(Args)]
struct DecomposeArgs {
    input: PathBuf,
    /// Compressed output; defaults to the input path with `.sknd`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Objective trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// `cluster:<k>` or `cnn:<checkpoint>`.
    #[arg(long, default_value = "cluster:6")]
    init: String,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `frame:<index>` or `stored` (the pose in the file's `v` lines).
    #[arg(long, default_value = "frame:0")]
    rest: RestChoice,
    #[arg(long, default_value_t = 1e-10)]
    cg_tolerance: f64,
}

#[derive(Args)]
struct ReconstructArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    original: PathBuf,
    /// An `.anim` file or a compressed model.
    approximation: PathBuf,
    /// Bone count for the compression rate when the approximation is an
    /// animation file.
    #[arg(long)]
    bones: Option<usize>,
    /// Dump per-vertex errors for this frame.
    #[arg(long, requires = "per_vertex")]
    frame: Option<usize>,
    /// Destination of the per-vertex dump.
    #[arg(long, requires = "frame")]
    per_vertex: Option<PathBuf>,
}

#[derive(Args)]
struct InfoArgs {
    input: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a, cli.quiet),
        Command::Decompose(a) => decompose_cmd(a, cli.strict),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Info(a) => info(a),
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for i in 0..a.count {
        let params = RigParams::new(a.bones, a.vertices_per_segment, a.frames, a.seed.wrapping_add(i as u64))
            .blend_width(a.blend_width);
        let rig = SyntheticRig::generate(params)?;
        let labels = LabelSet::from_weights(&rig.weights, a.b_max)?;
        let stem = a.out_dir.join(format!("rig_{i:03}"));
        save_anim(&stem.with_extension("anim"), &rig.sequence)?;
        write_atomic(&stem.with_extension("labels"), |out| files::write_labels(out, &labels))?;
        write_atomic(&stem.with_extension("weights"), |out| files::write_weights(out, &rig.weights))?;
        log::info!("wrote {}", stem.display());
    }
    Ok(())
}

fn train_cmd(a: &TrainArgs, quiet: bool) -> Result<()> {
    let pairs = dataset_files(&a.data_dir)?;
    let mut by_frames: BTreeMap<usize, Vec<PathBuf>> = BTreeMap::new();
    let mut samples = Vec::new();
    for (anim, labels) in &pairs {
        let seq = load_anim(anim)?;
        let labels = read_labels(labels)?;
        if labels.width() > a.b_max {
            bail!("{}: label width {} exceeds --b-max {}", anim.display(), labels.width(), a.b_max);
        }
        by_frames.entry(seq.frame_count()).or_default().push(anim.clone());
        samples.extend(training_samples(&seq, &labels.padded(a.b_max)?).with_context(|| anim.display().to_string())?);
    }
    if by_frames.len() > 1 {
        let listing: Vec<String> = by_frames
            .iter()
            .map(|(f, paths)| {
                let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
                format!("{f} frames: {}", names.join(", "))
            })
            .collect();
        bail!("animations must share a frame count to train one model; found {}", listing.join("; "));
    }

    let config = TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let outcome = train(&samples, &config)?;
    write_atomic(&a.out, |out| Ok(outcome.model.save(out)?))?;
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    write_atomic(&log_path, |out| {
        writeln!(out, "epoch,loss,binary_accuracy")?;
        for s in &outcome.history {
            writeln!(out, "{},{:.10e},{:.10e}", s.epoch, s.loss, s.binary_accuracy)?;
        }
        Ok(())
    })?;
    if !quiet {
        if let Some(last) = outcome.history.last() {
            eprintln!(
                "trained on {} trajectories: loss {:.6}, binary accuracy {:.4}",
                samples.len(),
                last.loss,
                last.binary_accuracy
            );
        }
    }
    Ok(())
}

fn load_initializer(spec: &InitializerSpec) -> Result<Initializer> {
    Ok(match spec {
        InitializerSpec::Cluster(k) => Initializer::Cluster(*k),
        InitializerSpec::Cnn(path) => {
            let file = File::open(path).with_context(|| format!("opening checkpoint {path}"))?;
            Initializer::Cnn(CnnModel::load(BufReader::new(file)).with_context(|| format!("loading checkpoint {path}"))?)
        }
    })
}

fn with_rest(seq: AnimSequence, rest: RestChoice) -> Result<AnimSequence> {
    match rest {
        RestChoice::Stored => Ok(seq),
        RestChoice::Frame(p) => Ok(seq.rest_from_frame(p)?),
    }
}

const SUMMARY_HEADER: &str = "vertices,frames,bones";

fn decompose_cmd(a: &DecomposeArgs, strict: bool) -> Result<()> {
    let spec: InitializerSpec = a.init.parse()?;
    let seq = with_rest(load_anim(&a.input)?, a.rest)?;
    let mut config = PipelineConfig::new(load_initializer(&spec)?);
    config.solver = SolverConfig { alternation_iterations: a.iterations, cg_tolerance: a.cg_tolerance, ..SolverConfig::default() };
    config.epsilon = a.epsilon;
    config.seed = a.seed;

    let out = decompose(&seq, &config).with_context(|| format!("decomposing {} with {spec}", a.input.display()))?;
    if strict && !out.trace.warnings.is_empty() {
        let list: Vec<String> = out.trace.warnings.iter().map(ToString::to_string).collect();
        bail!("solver warnings with --strict: {}", list.join("; "));
    }
    let target = a.out.clone().unwrap_or_else(|| a.input.with_extension("sknd"));
    write_atomic(&target, |w| Ok(w.write_all(&out.encoded)?))?;
    if let Some(trace) = &a.trace {
        write_trace(trace, &out.trace)?;
    }
    println!("{SUMMARY_HEADER},{}", ErrorReport::CSV_HEADER);
    println!("{},{},{},{}", seq.vertex_count(), seq.frame_count(), out.model.bone_count(), out.report.csv_row());
    Ok(())
}

fn write_trace(path: &Path, trace: &FitTrace) -> Result<()> {
    write_atomic(path, |out| Ok(trace.write_csv(out)?))
}

fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let model = load_model(&a.input)?;
    let seq = lbs_sequence(&model)?;
    save_anim(&a.out, &seq)
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let orig = load_anim(&a.original)?;
    let (approx, bones) = if is_compressed(&a.approximation)? {
        let model = load_model(&a.approximation)?;
        let b = model.bone_count();
        (lbs_sequence(&model)?, Some(b))
    } else {
        (load_anim(&a.approximation)?, a.bones)
    };
    if orig.vertex_count() != approx.vertex_count() || orig.frame_count() != approx.frame_count() {
        bail!(
            "shape mismatch: {} is {} vertices x {} frames, {} is {} vertices x {} frames",
            a.original.display(),
            orig.vertex_count(),
            orig.frame_count(),
            a.approximation.display(),
            approx.vertex_count(),
            approx.frame_count()
        );
    }
    let report = match bones {
        Some(b) => evaluate(&orig, &approx, b)?,
        None => ErrorReport {
            disper: metrics::dis_per(&orig, &approx)?,
            erms: metrics::erms(&orig, &approx)?,
            max_avg_dist: metrics::max_avg_dist(&orig, &approx)?,
            norm_distort: metrics::norm_distort(&orig, &approx)?,
            crp: f64::NAN,
        },
    };
    if let (Some(frame), Some(path)) = (a.frame, &a.per_vertex) {
        let errors = per_vertex_error(&orig, &approx, frame)?;
        write_atomic(path, |out| {
            writeln!(out, "vertex,error")?;
            for (i, e) in errors.iter().enumerate() {
                writeln!(out, "{i},{e:.10e}")?;
            }
            Ok(())
        })?;
    }
    println!("{}", ErrorReport::CSV_HEADER);
    println!("{}", report.csv_row());
    Ok(())
}

fn info(a: &InfoArgs) -> Result<()> {
    println!("field,value");
    if is_compressed(&a.input)? {
        let bytes = std::fs::read(&a.input)?;
        if bytes.len() < HEADER_BYTES {
            bail!("{}: truncated header", a.input.display());
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let (b, n, p) = (u16_at(6) as usize, u32_at(8) as usize, u32_at(12) as usize);
        let fixed = codec::encoded_len(n, p, b, 0);
        let faces = bytes.len().checked_sub(fixed).map(|t| t / 12).ok_or_else(|| anyhow!("{}: truncated", a.input.display()))?;
        println!("format,{}", String::from_utf8_lossy(&MAGIC));
        println!("version,{}", u16_at(4));
        println!("bones,{b}");
        println!("vertices,{n}");
        println!("frames,{p}");
        println!("faces,{faces}");
        println!("bytes,{}", bytes.len());
        println!("crp,{:.4}", metrics::compression_rate(n, p, b)?);
    } else {
        let seq = load_anim(&a.input)?;
        println!("format,ANIM");
        println!("vertices,{}", seq.vertex_count());
        println!("frames,{}", seq.frame_count());
        println!("faces,{}", seq.faces().len());
    }
    Ok(())
}
