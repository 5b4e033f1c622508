use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use vsynth::codec::{CodecModel, LatentCodec};
use vsynth::face::io::write_obj;
use vsynth::face::PoseShapeParams;
use vsynth::formats::write_json;
use vsynth::image::Raster;
use vsynth::pipeline::{
    atlas_path, load_annotations, mouth_frames, run_build_db, run_encode, run_fit_codec, run_stitch, run_synth,
    run_track, write_synthetic, Capture, PipelineConfig, Query, Tracking,
};
use vsynth::synth::{composite_frame, LatentSequence};
use vsynth::synthetic::{generate, Preset};
use vsynth::viseme::{SampleDb, TransitionTable};
use vsynth::{Error, Result};

#[derive(Parser)]
#[command(name = "vsynth", version, about = "Example-based visual speech synthesis pipeline")]
struct Cli {
    /// JSON file overriding the default configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic capture with ground truth and annotation.
    GenSynthetic {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "tiny")]
        preset: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register the neutral frame and track every frame.
    Track {
        #[arg(long)]
        capture: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose source cameras and write one texture atlas per frame.
    Stitch {
        #[arg(long)]
        capture: PathBuf,
        #[arg(long)]
        tracking: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the mouth codec on the atlases and tracked shape weights.
    FitCodec {
        #[arg(long)]
        capture: PathBuf,
        #[arg(long)]
        tracking: PathBuf,
        #[arg(long)]
        atlases: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode every captured frame to a latent sequence.
    Encode {
        #[arg(long)]
        capture: PathBuf,
        #[arg(long)]
        tracking: PathBuf,
        #[arg(long)]
        atlases: PathBuf,
        #[arg(long)]
        codec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut annotated segments of a latent take into a sample database.
    BuildDb {
        #[arg(long)]
        latents: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precompute transitions between every ordered pair of samples.
    Transitions {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize a latent sequence for a query.
    Synth {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        table: PathBuf,
        /// CELEX phonemes separated by spaces; `|` separates words.
        #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
        query: Option<String>,
        /// Extended labels such as `#-A,-AL,ALT,LT#`.
        #[arg(long)]
        labels: Option<String>,
        /// Decode frames with this codec and write them as PPM.
        #[arg(long)]
        codec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paste decoded frames into a base atlas and mesh.
    Composite {
        #[arg(long)]
        capture: PathBuf,
        #[arg(long)]
        tracking: PathBuf,
        #[arg(long)]
        atlases: PathBuf,
        #[arg(long)]
        codec: PathBuf,
        #[arg(long)]
        latents: PathBuf,
        /// Captured frame providing the base atlas, mesh and pose.
        #[arg(long, default_value_t = 0)]
        base_frame: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_atlases(dir: &Path, frames: usize) -> Result<Vec<Raster>> {
    (0..frames).map(|f| Raster::load(&atlas_path(dir, f))).collect()
}

fn print(value: serde_json::Value) {
    println!("{value}");
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::GenSynthetic { seed, preset, out } => {
            let scene = generate(preset.parse::<Preset>()?, seed)?;
            write_synthetic(&scene, &out)?;
            print(json!({"frames": scene.num_frames(), "triangles": scene.model.triangles().len()}));
        }
        Command::Track { capture, out } => {
            let capture = Capture::load(&capture)?;
            let tracking = run_track(&capture, &config.tracker)?;
            tracking.save(&out)?;
            print(json!({"frames": tracking.params.len()}));
        }
        Command::Stitch { capture, tracking, out } => {
            let capture = Capture::load(&capture)?;
            let tracking = Tracking::load(&tracking)?;
            let (atlases, summary) = run_stitch(&capture, &tracking, &config.stitch)?;
            create_dir(&out)?;
            for (f, atlas) in atlases.iter().enumerate() {
                atlas.save(&atlas_path(&out, f))?;
            }
            write_json(&out.join("stitch.json"), &summary)?;
            print(json!({"frames": atlases.len(), "energy": summary.energy, "fallbacks": summary.warnings.len()}));
        }
        Command::FitCodec {
            capture,
            tracking,
            atlases,
            out,
        } => {
            let capture = Capture::load(&capture)?;
            let tracking = Tracking::load(&tracking)?;
            let atlases = load_atlases(&atlases, tracking.params.len())?;
            let frames = mouth_frames(&capture, &tracking, &atlases)?;
            let codec = run_fit_codec(&frames, capture.manifest.roi, &config.codec)?;
            codec.save(&out)?;
            let report = codec.storage_report(frames.len() as u64);
            print(json!({
                "latent_dim": codec.latent_dim(),
                "training_rmse": codec.reconstruction_rmse(&frames)?,
                "storage": report,
            }));
        }
        Command::Encode {
            capture,
            tracking,
            atlases,
            codec,
            out,
        } => {
            let capture = Capture::load(&capture)?;
            let tracking = Tracking::load(&tracking)?;
            let atlases = load_atlases(&atlases, tracking.params.len())?;
            let frames = mouth_frames(&capture, &tracking, &atlases)?;
            let codec = CodecModel::load(&codec)?;
            let latents = run_encode(&codec, &frames)?;
            latents.save(&out)?;
            print(json!({"frames": latents.frames(), "d": latents.d}));
        }
        Command::BuildDb {
            latents,
            annotations,
            out,
        } => {
            let latents = LatentSequence::load(&latents)?;
            let annotations = load_annotations(&annotations)?;
            let db = run_build_db(&latents, &annotations, &config.viseme)?;
            db.save(&out)?;
            print(json!({"samples": db.len(), "d": db.dim()}));
        }
        Command::Transitions { db, out } => {
            let db = SampleDb::load(&db)?;
            let table = TransitionTable::build(&db, config.viseme.window, config.viseme.search)?;
            table.save(&out)?;
            print(json!({"pairs": table.len()}));
        }
        Command::Synth {
            db,
            table,
            query,
            labels,
            codec,
            out,
        } => {
            let query = match (query, labels) {
                (Some(q), _) => Query::Phonemes(q),
                (None, Some(l)) => Query::parse_labels(&l)?,
                (None, None) => return Err(Error::Invalid("either --query or --labels is required".into())),
            };
            let labels = query.resolve(&config.dictionary()?)?;
            let db = SampleDb::load(&db)?;
            let table = TransitionTable::load(&table)?;
            let codec = codec.map(|p| CodecModel::load(&p)).transpose()?;
            let (result, frames) = run_synth(&labels, &db, &table, codec.as_ref(), &config.synthesis)?;
            create_dir(&out)?;
            write_json(&out.join("manifest.json"), &result.manifest())?;
            LatentSequence::new(result.d, result.latents.clone())?.save(&out.join("latents.vsls"))?;
            if !frames.is_empty() {
                let dir = out.join("frames");
                create_dir(&dir)?;
                for (i, frame) in frames.iter().enumerate() {
                    frame.texture.save(&dir.join(format!("f{i:04}.ppm")))?;
                }
                let weights: Vec<&Vec<f64>> = frames.iter().map(|f| &f.b).collect();
                write_json(&dir.join("shape_weights.json"), &weights)?;
            }
            print(json!({"frames": result.frames(), "ids": result.ids, "energy": result.energy}));
        }
        Command::Composite {
            capture,
            tracking,
            atlases,
            codec,
            latents,
            base_frame,
            out,
        } => {
            let capture = Capture::load(&capture)?;
            let tracking = Tracking::load(&tracking)?;
            let base: &PoseShapeParams = tracking
                .params
                .get(base_frame)
                .ok_or_else(|| Error::Invalid(format!("base frame {base_frame} is not tracked")))?;
            let base_atlas = Raster::load(&atlas_path(&atlases, base_frame))?;
            let base_vertices = capture.model.deform(base)?;
            let codec = CodecModel::load(&codec)?;
            if codec.roi() != capture.manifest.roi {
                return Err(Error::RoiOutOfBounds(format!(
                    "codec ROI {:?} differs from capture ROI {:?}",
                    codec.roi(),
                    capture.manifest.roi
                )));
            }
            let latents = LatentSequence::load(&latents)?;
            create_dir(&out)?;
            for i in 0..latents.frames() {
                let frame = codec.decode(latents.frame(i))?;
                let c = composite_frame(
                    &frame,
                    &base_atlas,
                    &base_vertices,
                    &capture.model,
                    base.t,
                    &codec.roi(),
                    &config.synthesis,
                )?;
                c.atlas.save(&out.join(format!("f{i:04}.ppm")))?;
                let obj = write_obj(&c.vertices, capture.model.uv(), capture.model.triangles());
                let path = out.join(format!("f{i:04}.obj"));
                fs::write(&path, obj).map_err(|e| Error::Io { path, source: e })?;
            }
            print(json!({"frames": latents.frames()}));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprintln!("{}", json!({"kind": "usage", "message": e.to_string().trim_end()}));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"kind": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}
