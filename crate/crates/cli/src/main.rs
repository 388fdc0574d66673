use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use stylemorph::asdm::{build_alpha_schedule, find_alpha_mid, AlphaSchedule, DEFAULT_LAMBDA};
use stylemorph::io::config::{read_config, write_config};
use stylemorph::io::write_atomic;
use stylemorph::io::image::{read_frames, read_png, write_frames};
use stylemorph::io::manifest::{read_manifest_config, read_manifest_schedule, write_manifest};
use stylemorph::io::table::{curves_csv, metrics_csv, read_curves, schedule_csv};
use stylemorph::io::tensor_file::{write_tensor, DType};
use stylemorph::{Error, MorphConfig, Pipeline, Tensor};

#[derive(Parser)]
#[command(name = "stylemorph", version, about = "Style morphing for short videos on a toy diffusion backend")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Invert a frame directory and spill the terminal latents and attention cache.
    Invert {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Morph a video from one style image to another.
    Morph {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        style0: PathBuf,
        #[arg(long)]
        style1: PathBuf,
        /// INI run config, or a manifest from an earlier run.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the warped α schedule as CSV.
    AlphaCurve(AlphaCurveArgs),
    /// Score generated frames against their source and styles.
    Eval {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        style0: PathBuf,
        #[arg(long)]
        style1: PathBuf,
        /// Take the α schedule from this run manifest instead of a linear one.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        perceptual_seed: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct CurveSource {
    /// CSV with d0 and d1 columns.
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long)]
    alpha_mid: Option<f64>,
}

#[derive(Args)]
struct AlphaCurveArgs {
    #[command(flatten)]
    source: CurveSource,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// Frame count; required with --alpha-mid.
    #[arg(long)]
    frames: Option<usize>,
}

fn load_config(path: Option<&Path>) -> Result<MorphConfig> {
    let Some(path) = path else {
        return Ok(MorphConfig::default());
    };
    let config = if path.extension().is_some_and(|e| e == "jsonl") {
        read_manifest_config(path)?
    } else {
        read_config(path)?
    };
    Ok(config)
}

fn read_video(dir: &Path, config: &MorphConfig) -> Result<Vec<Tensor>> {
    let mut frames = read_frames(dir)?;
    if let Some(n) = config.frames {
        frames.truncate(n);
    }
    Ok(frames)
}

fn invert(video: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let config = load_config(config)?;
    let pipeline = Pipeline::new(config.clone())?;
    let frames = read_video(video, &config)?;
    let content = pipeline.invert_video(&frames)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let shape: Vec<usize> = std::iter::once(content.latents.len()).chain(content.latents[0].shape().iter().copied()).collect();
    let data = content.latents.iter().flat_map(|z| z.data().iter().copied()).collect();
    write_tensor(&out.join("latents.stns"), &Tensor::new(shape, data)?, DType::F32)?;
    content.cache.spill(&out.join("cache"))?;
    write_config(&out.join("run.conf"), &config)?;
    Ok(())
}

fn morph(video: &Path, style0: &Path, style1: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let config = load_config(config)?;
    let pipeline = Pipeline::new(config.clone())?;
    let frames = read_video(video, &config)?;
    let (s0, s1) = (read_png(style0)?, read_png(style1)?);
    let run = pipeline.morph(&frames, &s0, &s1)?;
    write_frames(out, &run.output.frames)?;
    write_manifest(&out.join("manifest.jsonl"), &config, &run.output)?;
    let table = match &run.output.curves {
        Some(curves) => curves_csv(&run.output.alpha, curves)?,
        None => schedule_csv(&run.output.alpha)?,
    };
    write_atomic(&out.join("alpha.csv"), table.as_bytes())?;
    Ok(())
}

fn alpha_curve(args: &AlphaCurveArgs) -> Result<String> {
    let schedule = match (&args.source.curves, args.source.alpha_mid) {
        (Some(path), _) => {
            let curves = read_curves(path)?;
            if args.frames.is_some_and(|n| n != curves.len()) {
                bail!(Error::InvalidArgument(format!("--frames disagrees with the {} curve rows", curves.len())));
            }
            build_alpha_schedule(curves.len(), find_alpha_mid(&curves), args.lambda)?
        }
        (None, Some(mid)) => {
            let Some(n) = args.frames else {
                bail!(Error::InvalidArgument("--alpha-mid needs --frames".into()));
            };
            build_alpha_schedule(n, mid, args.lambda)?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    Ok(schedule_csv(&schedule)?)
}

fn eval(
    frames: &Path,
    src: &Path,
    style0: &Path,
    style1: &Path,
    manifest: Option<&Path>,
    seed: u64,
    json: bool,
) -> Result<String> {
    let generated = read_frames(frames)?;
    let source = read_frames(src)?;
    let schedule = match manifest {
        Some(path) => read_manifest_schedule(path)?,
        None => AlphaSchedule::linear(generated.len()),
    };
    let net = stylemorph::perceptual::PerceptualNet::new(seed);
    let m = net.evaluate(&generated, &source, &read_png(style0)?, &read_png(style1)?, &schedule)?;
    if json {
        let line = serde_json::json!({
            "ppl": m.ppl,
            "pdv": m.pdv,
            "style_loss": m.style_loss,
            "structure_distance": m.structure_distance,
            "frame_similarity": m.frame_similarity,
        });
        Ok(format!("{line}\n"))
    } else {
        Ok(metrics_csv(&m)?)
    }
}

fn run(cli: Cli) -> Result<()> {
    let text = match cli.command {
        Command::Invert { video, out, config } => {
            invert(&video, &out, config.as_deref())?;
            return Ok(());
        }
        Command::Morph { video, style0, style1, config, out } => {
            morph(&video, &style0, &style1, config.as_deref(), &out)?;
            return Ok(());
        }
        Command::AlphaCurve(args) => alpha_curve(&args)?,
        Command::Eval { frames, src, style0, style1, manifest, perceptual_seed, json } => {
            eval(&frames, &src, &style0, &style1, manifest.as_deref(), perceptual_seed, json)?
        }
    };
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

/// Exit code and short kind tag for an error chain.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::root) {
        Some(Error::NotFound(_)) => (3, "missing_file"),
        Some(Error::Malformed { .. }) => (4, "malformed"),
        Some(Error::Config(_)) => (5, "config"),
        Some(Error::InvalidArgument(_)) => (6, "invalid_argument"),
        _ => (1, "runtime"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("bad usage").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = classify(&err);
            let msg = format!("{err:#}").replace('\n', " ");
            eprintln!("error[{kind}]: {msg}");
            ExitCode::from(code)
        }
    }
}
