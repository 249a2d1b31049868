//! The `dintool` command line: dataset synthesis, deinterlacing, training,
//! evaluation and benchmarking.
//!
//! `--config FILE` reads `key=value` lines that mirror the long flags
//! (`epochs=5`, `patch_size=32`, `compression=blockdct`). They are applied
//! before the command-line flags, so anything given explicitly wins. Keys
//! that the chosen subcommand does not take are ignored; keys no subcommand
//! takes are an error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use log::info;

use crate::classic::{Method, DEFAULT_MOTION_THRESHOLD};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::interlace::{read_manifest, synth_dataset, write_toy_set, Compression, DegradationConfig, ToySetConfig};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{load_checkpoint, save_checkpoint, DinConfig, DinParams};
use crate::train::{Augment, TrainConfig, Trainer, TrainingSet, LATEST_STATE};

/// Parameter count the network is documented with.
pub const REFERENCE_PARAM_COUNT: usize = 1_816_000;

#[derive(Debug, Parser)]
#[command(name = "dintool", version, about = "Deinterlacing toolkit", args_override_self = true)]
pub struct Cli {
    /// Seed for every random choice of the subcommand.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Flat `key=value` file of default flag values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build interlaced input/target pairs from an ordered frame directory.
    #[command(args_override_self = true)]
    Synth {
        frames_dir: PathBuf,
        out_dir: PathBuf,
        /// Distance between the first frames of consecutive pairs.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[command(flatten)]
        degradation: DegradationArgs,
    },
    /// Write a procedurally generated moving-texture set.
    #[command(args_override_self = true)]
    Toy {
        out_dir: PathBuf,
        /// Generate the held-out split instead of the training split.
        #[arg(long)]
        held_out: bool,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Deinterlace one frame.
    #[command(args_override_self = true)]
    Deint {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Trained weights; required by `--method din`.
        #[arg(long, required_if_eq("method", "din"))]
        checkpoint: Option<PathBuf>,
        /// Motion-adaptive switching threshold in [0, 1] units.
        #[arg(long)]
        threshold: Option<f32>,
    },
    /// Train the network on a manifest; checkpoints go to OUT_DIR.
    #[command(args_override_self = true)]
    Train {
        manifest: PathBuf,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 32)]
        patch_size: usize,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 20)]
        lr_decay_every: usize,
        #[arg(long, default_value_t = 10.0)]
        lr_decay_factor: f64,
        /// Feature maps of the network (64 in the reference configuration).
        #[arg(long, default_value_t = 64)]
        channels: usize,
        #[arg(long)]
        max_steps_per_epoch: Option<usize>,
        /// Random flips: none, hflip or both.
        #[arg(long, default_value = "both")]
        augment: String,
        /// Continue from OUT_DIR/latest.din and latest.state when present.
        #[arg(long)]
        resume: bool,
    },
    /// Score a directory of outputs against same-named targets.
    #[command(args_override_self = true)]
    Eval {
        outputs_dir: PathBuf,
        targets_dir: PathBuf,
        /// Label for the method column.
        #[arg(long, default_value = "method")]
        method: String,
        /// CSV destination; printed to stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run every method over a manifest; writes bench.csv and crops/.
    #[command(args_override_self = true)]
    Bench {
        manifest: PathBuf,
        out_dir: PathBuf,
        /// Include the network with these weights.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Side of the centre crops in the side-by-side images.
        #[arg(long, default_value_t = 48)]
        crop: usize,
        #[arg(long)]
        threshold: Option<f32>,
    },
    /// Print the network's parameter count.
    #[command(name = "din-info", alias = "info", args_override_self = true)]
    DinInfo {
        #[arg(long, conflicts_with = "checkpoint")]
        channels: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// List every layer.
        #[arg(long)]
        layers: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Weave,
    Bob,
    Ela,
    Temporal,
    Motion,
    Din,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompressionArg {
    None,
    Blockdct,
    External,
}

#[derive(Debug, Clone, clap::Args)]
pub struct DegradationArgs {
    #[arg(long, value_enum, default_value = "none")]
    pub compression: CompressionArg,
    /// Block-DCT quality 1..=100 (default 75).
    #[arg(long)]
    pub quality: Option<u8>,
    /// Standard deviation of the additive Gaussian noise, [0, 1] units.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Shell command with `{in}` and `{out}` placeholders.
    #[arg(long)]
    pub external_cmd: Option<String>,
}

impl DegradationArgs {
    pub fn to_config(&self, seed: u64) -> Result<DegradationConfig> {
        let conflict = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        let compression = match self.compression {
            CompressionArg::None => {
                if self.quality.is_some() || self.external_cmd.is_some() {
                    return conflict("--quality and --external-cmd need a --compression that uses them");
                }
                Compression::None
            }
            CompressionArg::Blockdct => {
                if self.external_cmd.is_some() {
                    return conflict("--external-cmd conflicts with --compression blockdct");
                }
                Compression::BlockDct { quality: self.quality.unwrap_or(75) }
            }
            CompressionArg::External => {
                if self.quality.is_some() {
                    return conflict("--quality conflicts with --compression external");
                }
                let Some(command) = self.external_cmd.clone() else {
                    return conflict("--compression external requires --external-cmd");
                };
                Compression::External { command }
            }
        };
        let cfg = DegradationConfig { compression, noise_sigma: self.sigma, seed };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A classical method or a trained network behind one interface.
pub enum Deinterlacer {
    Classic(Method),
    Din(Box<DinParams<f32>>),
}

impl Deinterlacer {
    pub fn name(&self) -> &'static str {
        match self {
            Deinterlacer::Classic(m) => m.name(),
            Deinterlacer::Din(_) => "din",
        }
    }

    pub fn apply(&self, interlaced: &Frame) -> Result<Frame> {
        match self {
            Deinterlacer::Classic(m) => m.apply(interlaced),
            Deinterlacer::Din(p) => p.deinterlace(interlaced),
        }
    }
}

fn classic(method: MethodArg, threshold: Option<f32>) -> Result<Method> {
    let m = match method {
        MethodArg::Weave => Method::Weave,
        MethodArg::Bob => Method::Bob,
        MethodArg::Ela => Method::Ela,
        MethodArg::Temporal => Method::TemporalInsert,
        MethodArg::Motion => Method::MotionAdaptive { threshold: threshold.unwrap_or(DEFAULT_MOTION_THRESHOLD) },
        MethodArg::Din => unreachable!("handled by the caller"),
    };
    if threshold.is_some() && !matches!(m, Method::MotionAdaptive { .. }) {
        return Err(Error::InvalidArgument("--threshold only applies to --method motion".into()));
    }
    Ok(m)
}

/// Insert the values of `--config FILE` ahead of the explicit flags.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strings: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut config_path = None;
    for (i, a) in strings.iter().enumerate() {
        if a == "--config" {
            config_path = strings.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        }
    }
    let Some(config_path) = config_path else { return Ok(args) };
    let text = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;

    let cmd = Cli::command();
    let sub_index = strings
        .iter()
        .enumerate()
        .skip(1)
        .find(|(i, a)| {
            let after_value_flag = matches!(strings[i - 1].as_str(), "--seed" | "--config");
            !after_value_flag && cmd.find_subcommand(a.as_str()).is_some()
        })
        .map(|(i, _)| i);
    let sub = sub_index.and_then(|i| cmd.find_subcommand(&strings[i]));
    let takes_value = |c: &clap::Command, long: &str| -> Option<bool> {
        c.get_arguments().find(|a| a.get_long() == Some(long)).map(|a| a.get_action().takes_values())
    };

    let mut global = Vec::new();
    let mut local = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("{config_path}:{}: expected key=value", lineno + 1))
        })?;
        let long = key.trim().replace('_', "-");
        let value = value.trim().to_string();
        if long == "config" {
            return Err(Error::InvalidArgument(format!("{config_path}: config files cannot nest")));
        }
        let (target, flag_takes_value) = if let Some(v) = takes_value(&cmd, &long) {
            (&mut global, v)
        } else if let Some(v) = sub.and_then(|s| takes_value(s, &long)) {
            (&mut local, v)
        } else if cmd.get_subcommands().any(|s| takes_value(s, &long).is_some()) {
            continue;
        } else {
            return Err(Error::InvalidArgument(format!("{config_path}: unknown option `{key}`")));
        };
        if flag_takes_value {
            target.push(format!("--{long}"));
            target.push(value);
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => target.push(format!("--{long}")),
                "false" | "0" | "no" => {}
                other => {
                    return Err(Error::InvalidArgument(format!("{config_path}: `{key}` expects true/false, got `{other}`")))
                }
            }
        }
    }

    let mut out: Vec<OsString> = Vec::with_capacity(args.len() + global.len() + local.len());
    out.push(args[0].clone());
    out.extend(global.into_iter().map(OsString::from));
    match sub_index {
        Some(i) => {
            out.extend(args[1..=i].iter().cloned());
            out.extend(local.into_iter().map(OsString::from));
            out.extend(args[i + 1..].iter().cloned());
        }
        None => out.extend(args[1..].iter().cloned()),
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Lay frames out left to right with a two-pixel white gap.
pub fn side_by_side(frames: &[Frame]) -> Result<Frame> {
    const GAP: usize = 2;
    let first = frames.first().ok_or_else(|| Error::InvalidArgument("nothing to tile".into()))?;
    let (w, h, c) = (first.width(), first.height(), first.channels());
    if frames.iter().any(|f| (f.width(), f.height(), f.channels()) != (w, h, c)) {
        return Err(Error::shape("side_by_side", "tiles differ in size"));
    }
    let total = frames.len() * w + (frames.len() - 1) * GAP;
    Frame::from_fn(total, h, c, |ch, y, x| {
        let (tile, offset) = (x / (w + GAP), x % (w + GAP));
        if offset < w {
            frames[tile].get(ch, y, offset)
        } else {
            1.0
        }
    })
}

/// Centred crop of at most `size`×`size` with an even height.
pub fn centre_crop(frame: &Frame, size: usize) -> Result<Frame> {
    let h = size.min(frame.height()) & !1;
    let w = size.min(frame.width());
    let y = ((frame.height() - h) / 2) & !1;
    let x = (frame.width() - w) / 2;
    frame.crop(y, x, h.max(1), w)
}

/// Per image id, `[input, outputs..., target]`.
pub type Panels = Vec<(String, Vec<Frame>)>;

/// Run every deinterlacer over the manifest pairs. Returns the report and
/// the frames for visual comparison.
pub fn bench(manifest: &Path, methods: &[Deinterlacer]) -> Result<(MetricsReport, Panels)> {
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::InvalidArgument(format!("{} lists no pairs", manifest.display())));
    }
    let mut report = MetricsReport::default();
    let mut panels = Vec::with_capacity(entries.len());
    for e in &entries {
        let input = Frame::load(&e.input)?;
        let target = Frame::load(&e.target)?;
        let stem = e.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let id = stem.strip_prefix("input_").unwrap_or(&stem).to_string();
        let mut tiles = vec![input.clone()];
        for m in methods {
            let out = m.apply(&input)?;
            report.push(id.clone(), m.name(), &out, &target)?;
            tiles.push(out);
        }
        tiles.push(target);
        panels.push((id, tiles));
    }
    Ok((report, panels))
}

fn print_summaries(report: &MetricsReport) {
    for s in report.summaries() {
        println!("{:<8} psnr {:>8.3} dB  ssim {:.4}  ({} images)", s.method, s.mean_psnr_db, s.mean_ssim, s.images);
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth { frames_dir, out_dir, stride, degradation } => {
            let cfg = degradation.to_config(seed.unwrap_or(0))?;
            let entries = synth_dataset(&frames_dir, &out_dir, &cfg, stride)?;
            println!("wrote {} pairs to {}", entries.len(), out_dir.display());
        }
        Command::Toy { out_dir, held_out, pairs, size } => {
            let mut cfg = if held_out { ToySetConfig::test() } else { ToySetConfig::train() };
            if let Some(seed) = seed {
                cfg.seed = seed;
                cfg.degradation.seed = seed.wrapping_add(10);
            }
            cfg.pairs = pairs.unwrap_or(cfg.pairs);
            cfg.size = size.unwrap_or(cfg.size);
            let entries = write_toy_set(&out_dir, &cfg)?;
            println!("wrote {} pairs to {}", entries.len(), out_dir.display());
        }
        Command::Deint { input, output, method, checkpoint, threshold } => {
            let d = match method {
                MethodArg::Din => {
                    if threshold.is_some() {
                        return Err(Error::InvalidArgument("--threshold only applies to --method motion".into()));
                    }
                    let path = checkpoint.ok_or_else(|| {
                        Error::InvalidArgument("--method din requires --checkpoint".into())
                    })?;
                    Deinterlacer::Din(Box::new(load_checkpoint(&path)?))
                }
                m => {
                    if checkpoint.is_some() {
                        return Err(Error::InvalidArgument("--checkpoint only applies to --method din".into()));
                    }
                    Deinterlacer::Classic(classic(m, threshold)?)
                }
            };
            let frame = Frame::load(&input)?;
            d.apply(&frame)?.save(&output)?;
        }
        Command::Train {
            manifest,
            out_dir,
            patch_size,
            epochs,
            batch_size,
            lr,
            lr_decay_every,
            lr_decay_factor,
            channels,
            max_steps_per_epoch,
            augment,
            resume,
        } => {
            let cfg = TrainConfig {
                patch_size,
                batch_size,
                epochs,
                lr0: lr,
                lr_decay_every,
                lr_decay_factor,
                seed: seed.unwrap_or(0),
                max_steps_per_epoch,
                augment: augment.parse::<Augment>()?,
                ..TrainConfig::default()
            };
            cfg.validate()?;
            let din = DinConfig::with_channels(channels);
            din.validate()?;
            let set = TrainingSet::load(&read_manifest(&manifest)?, patch_size)?;
            let mut trainer = if resume && out_dir.join(LATEST_STATE).exists() {
                let t = Trainer::resume_from_dir(set, cfg, &out_dir)?;
                if t.params().config() != &din {
                    return Err(Error::InvalidArgument(format!(
                        "checkpoint in {} has {} channels, --channels is {channels}",
                        out_dir.display(),
                        t.params().config().base_channels
                    )));
                }
                info!("resuming at epoch {}", t.next_epoch());
                t
            } else {
                Trainer::new(set, din, cfg)?
            };
            create_dir(&out_dir)?;
            trainer.run(Some(&out_dir))?;
            save_checkpoint(trainer.params(), out_dir.join("final.din"))?;
            if let Some(last) = trainer.log().epochs.last() {
                println!(
                    "trained {} epochs ({} steps); last epoch loss {:.5}; weights in {}",
                    trainer.log().epochs.len(),
                    trainer.log().steps.len(),
                    last.loss_total,
                    out_dir.join("final.din").display()
                );
            }
        }
        Command::Eval { outputs_dir, targets_dir, method, output } => {
            let report = evaluate(&outputs_dir, &targets_dir, &method)?;
            match output {
                Some(path) => {
                    report.write_csv(&path)?;
                    print_summaries(&report);
                }
                None => print!("{}", report.to_csv()),
            }
        }
        Command::Bench { manifest, out_dir, checkpoint, crop, threshold } => {
            let mut methods: Vec<Deinterlacer> = [MethodArg::Weave, MethodArg::Bob, MethodArg::Ela]
                .into_iter()
                .map(|m| classic(m, None).map(Deinterlacer::Classic))
                .collect::<Result<_>>()?;
            methods.push(Deinterlacer::Classic(classic(MethodArg::Motion, threshold)?));
            if let Some(path) = checkpoint {
                methods.push(Deinterlacer::Din(Box::new(load_checkpoint(&path)?)));
            }
            let (report, panels) = bench(&manifest, &methods)?;
            let crops = out_dir.join("crops");
            create_dir(&crops)?;
            for (id, tiles) in &panels {
                let tiles: Vec<Frame> = tiles.iter().map(|t| centre_crop(t, crop)).collect::<Result<_>>()?;
                side_by_side(&tiles)?.save(crops.join(format!("{id}.png")))?;
            }
            report.write_csv(out_dir.join("bench.csv"))?;
            print_summaries(&report);
        }
        Command::DinInfo { channels, checkpoint, layers } => {
            let params = match checkpoint {
                Some(path) => load_checkpoint(&path)?,
                None => DinParams::build(DinConfig::with_channels(channels.unwrap_or(64)), seed.unwrap_or(0))?,
            };
            let cfg = params.config();
            println!(
                "channels {}, CIS blocks {}, FMS blocks {}+{} (base) and {} (down)",
                cfg.base_channels, cfg.cis_blocks, cfg.fms_base_blocks_pre, cfg.fms_base_blocks_post, cfg.fms_down_blocks
            );
            if layers {
                for l in params.layers() {
                    println!("  {:<18} {}  +bias {}", l.name, l.weight.shape(), l.bias.len());
                }
            }
            let count = params.param_count();
            let ratio = count as f64 / REFERENCE_PARAM_COUNT as f64;
            println!("parameters: {count} ({:+.1}% vs the reference 1.816M)", (ratio - 1.0) * 100.0);
        }
    }
    Ok(())
}

/// Parse `args` (including the program name) and run.
pub fn main_with_args(args: Vec<OsString>) -> ExitCode {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn main() -> ExitCode {
    main_with_args(std::env::args_os().collect())
}
