use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fabulight::clip::{load_dataset, LoadConfig};
use fabulight::manifest::load_manifest;
use fabulight::pipeline::score_clips;
use fabulight::scores::{read_scores, write_scores};
use fabulight::synth::{generate_synthetic, SynthConfig, MANIFEST};
use fabulight::weights::{load_weights, save_weights};
use fabulight_core::efficiency::{comparison_line, profile, render_report, EfficiencyReport, ProfileConfig};
use fabulight_core::loss::Mode;
use fabulight_core::metrics::evaluate;
use fabulight_core::model::{Architecture, Model, DEFAULT_FACE_SIZE};
use fabulight_core::skeleton::{render_graph_report, BodyVariant, PartitionedAdjacency, SkeletonTopology};
use fabulight_core::train::{train, TrainConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fabulight", version, about = "Active speaker detection from face, audio and body pose")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fabulight,
    Lightasd,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fabulight => Mode::FabuLight,
            ModeArg::Lightasd => Mode::LightAsd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BodyArg {
    Whole,
    Upper,
}

impl From<BodyArg> for BodyVariant {
    fn from(b: BodyArg) -> Self {
        match b {
            BodyArg::Whole => BodyVariant::Whole,
            BodyArg::Upper => BodyVariant::Upper,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write per-epoch checkpoints and a metrics log.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        media_root: PathBuf,
        #[arg(long, value_enum, default_value = "fabulight")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "whole")]
        body: BodyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = DEFAULT_FACE_SIZE)]
        face_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 2000)]
        frame_cap: usize,
        /// Also keep the checkpoint with the best mAP on this manifest.
        #[arg(long)]
        val_manifest: Option<PathBuf>,
        /// Media root of the validation manifest (defaults to --media-root).
        #[arg(long)]
        val_media_root: Option<PathBuf>,
    },
    /// Score every frame of a manifest with a trained model.
    Infer {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        media_root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        frame_cap: usize,
    },
    /// Print parameter and MAC counts of an architecture.
    Analyze {
        #[arg(long, value_enum, default_value = "fabulight")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "whole")]
        body: BodyArg,
        /// Reference clip length for the MAC count.
        #[arg(long, default_value_t = 100)]
        frames: usize,
        /// Emit the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Mean average precision of a score file.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        by_category: bool,
    },
    /// Generate a seeded synthetic dataset.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 60)]
        entities: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        min_frames: usize,
        #[arg(long, default_value_t = 60)]
        max_frames: usize,
        #[arg(long, default_value_t = 48)]
        crop_size: usize,
        #[arg(long, default_value_t = 0.1)]
        offscreen_rate: f64,
        /// Replace every face crop with noise.
        #[arg(long)]
        corrupt_faces: bool,
    },
    /// Print the skeleton topology and its partition matrices.
    InspectGraph {
        #[arg(long, value_enum, default_value = "whole")]
        body: BodyArg,
        #[arg(long, default_value_t = 1)]
        radius: usize,
    },
}

fn report_json(r: &EfficiencyReport) -> serde_json::Value {
    let rows = |rows: &[fabulight_core::efficiency::LayerRow]| {
        rows.iter()
            .map(|l| json!({"name": l.name, "params": l.params, "macs": l.macs}))
            .collect::<Vec<_>>()
    };
    json!({
        "config": r.config,
        "frames": r.frames,
        "total_params": r.total_params,
        "total_macs": r.total_macs,
        "macs_per_frame": r.macs_per_frame(),
        "rows": rows(&r.rows),
        "auxiliary": rows(&r.auxiliary),
    })
}

fn load_clips(manifest: &Path, root: &Path, arch: &Architecture) -> Result<Vec<fabulight_core::train::SampleClip<f32>>> {
    let m = load_manifest(manifest)?;
    let cfg = LoadConfig {
        face_size: arch.face_size,
        body: arch.body,
    };
    load_dataset(&m, root, &cfg).with_context(|| format!("loading clips of {}", manifest.display()))
}

#[allow(clippy::too_many_arguments)]
fn run_train(
    manifest: &Path,
    media_root: &Path,
    mode: Mode,
    body: BodyVariant,
    seed: u64,
    out_dir: &Path,
    epochs: usize,
    face_size: usize,
    lr: f64,
    frame_cap: usize,
    val: Option<(PathBuf, PathBuf)>,
) -> Result<()> {
    let arch = Architecture::for_mode(mode, body).with_face_size(face_size);
    let clips = load_clips(manifest, media_root, &arch)?;
    let val_clips = match &val {
        Some((m, root)) => Some(load_clips(m, root, &arch)?),
        None => None,
    };
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let log_path = out_dir.join("metrics.jsonl");
    let mut log = File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let config = TrainConfig {
        max_epochs: epochs,
        lr0: lr,
        frame_cap,
        seed,
        mode,
        ..TrainConfig::default()
    };
    let mut model = Model::<f32>::new(arch, seed)?;
    let mut best = f64::NEG_INFINITY;
    train(&mut model, &clips, &config, |m, model| {
        let ckpt = out_dir.join(format!("epoch_{:02}.fblw", m.epoch));
        save_weights(&ckpt, model).map_err(|e| fabulight_core::Error::Data(e.to_string()))?;
        let mut record = json!({
            "epoch": m.epoch,
            "lr": m.lr,
            "tau": m.tau,
            "loss": m.total,
            "heads": m.heads.iter().map(|(k, l)| (k.name().to_string(), json!(l))).collect::<serde_json::Map<_, _>>(),
            "batches": m.batches,
            "clips": m.clips,
        });
        let mut line = format!(
            "epoch {:>2}  lr {:.3e}  tau {:.2}  loss {:.5}",
            m.epoch, m.lr, m.tau, m.total
        );
        if let Some(vc) = &val_clips {
            let rows = score_clips(model, vc, mode, frame_cap).map_err(|e| fabulight_core::Error::Data(e.to_string()))?;
            let map = evaluate(&rows)?.overall;
            record["val_map"] = json!(map);
            line.push_str(&format!("  val mAP {map:.4}"));
            if map > best {
                best = map;
                save_weights(&out_dir.join("best.fblw"), model).map_err(|e| fabulight_core::Error::Data(e.to_string()))?;
            }
        }
        println!("{line}");
        writeln!(log, "{record}").map_err(|e| fabulight_core::Error::Data(format!("{}: {e}", log_path.display())))?;
        Ok(())
    })?;
    let final_path = out_dir.join("final.fblw");
    save_weights(&final_path, &model)?;
    println!("wrote {}", final_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            manifest,
            media_root,
            mode,
            body,
            seed,
            out_dir,
            epochs,
            face_size,
            lr,
            frame_cap,
            val_manifest,
            val_media_root,
        } => {
            let val = val_manifest.map(|m| (m, val_media_root.unwrap_or_else(|| media_root.clone())));
            run_train(
                &manifest,
                &media_root,
                mode.into(),
                body.into(),
                seed,
                &out_dir,
                epochs,
                face_size,
                lr,
                frame_cap,
                val,
            )
        }
        Command::Infer {
            weights,
            manifest,
            media_root,
            out,
            frame_cap,
        } => {
            let model = load_weights(&weights, None)?;
            let clips = load_clips(&manifest, &media_root, &model.arch)?;
            let rows = score_clips(&model, &clips, model.arch.mode(), frame_cap)?;
            write_scores(&out, &rows)?;
            println!("scored {} frames of {} clips into {}", rows.len(), clips.len(), out.display());
            Ok(())
        }
        Command::Analyze {
            mode,
            body,
            frames,
            json,
        } => {
            if frames == 0 {
                bail!("--frames must be at least 1");
            }
            let arch = Architecture::for_mode(mode.into(), body.into());
            let report = profile(&arch, frames);
            if json {
                println!("{:#}", report_json(&report));
            } else {
                print!("{}", render_report(&report));
                let base = profile(&ProfileConfig::LightAsd.architecture(), frames);
                if report.config != base.config {
                    println!("{}", comparison_line(&base, &report));
                }
            }
            Ok(())
        }
        Command::Eval { scores, by_category } => {
            let rows = read_scores(&scores)?;
            let report = evaluate(&rows).with_context(|| format!("evaluating {}", scores.display()))?;
            println!("mAP {:.4}  ({} frames)", report.overall, report.rows);
            if by_category {
                for (cat, ap) in &report.by_category {
                    println!("{cat:<10} mAP {ap:.4}");
                }
            }
            Ok(())
        }
        Command::Synth {
            out_dir,
            entities,
            seed,
            min_frames,
            max_frames,
            crop_size,
            offscreen_rate,
            corrupt_faces,
        } => {
            if !(0.0..=1.0).contains(&offscreen_rate) {
                bail!("--offscreen-rate must lie in [0, 1]");
            }
            if crop_size == 0 {
                bail!("--crop-size must be positive");
            }
            let cfg = SynthConfig {
                entities,
                min_frames,
                max_frames,
                seed,
                crop_size,
                offscreen_rate,
                corrupt_faces,
            };
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let rows = generate_synthetic(&out_dir, &cfg)?;
            let speaking = rows.iter().filter(|r| r.label == 1).count();
            println!(
                "wrote {} entities, {} frames ({:.1}% speaking) to {}",
                entities,
                rows.len(),
                100.0 * speaking as f64 / rows.len().max(1) as f64,
                out_dir.join(MANIFEST).display()
            );
            Ok(())
        }
        Command::InspectGraph { body, radius } => {
            let topo = SkeletonTopology::build(body.into());
            let part = PartitionedAdjacency::build(&topo, radius)?;
            print!("{}", render_graph_report(&topo, &part));
            Ok(())
        }
    }
}

/// Joins the cause chain, skipping causes already quoted by their parent.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_chain(&e));
            ExitCode::from(1)
        }
    }
}
