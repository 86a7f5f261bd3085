use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use smot::bundle::ModelBundle;
use smot::config::RunConfig;
use smot::dataset::{load_dataset, read_file, video_dirs, DETECTIONS_FILE, FEATURES_FILE, GT_FILE};
use smot::error::Error;
use smot::ingest::{
    parse_detections, parse_features, parse_gt_tracks, write_semantics, write_tracks,
};
use smot::metrics::{render_report, ReportFormat};
use smot::pipeline::{
    evaluate_outputs, output_dir, run_ablation, run_pipeline, track_features, write_ablation,
    write_pipeline_outputs, Describer, FusionToggles, PipelineOptions, PRED_SEMANTICS_FILE,
    REPORT_METHOD, TRACKS_FILE,
};
use smot::synth::{gen_synthetic, write_synthetic, SyntheticSpec};
use smot::tracker::{track_sequence, TrackerParams};
use smot::train::{curve_csv, run_stage, stage_data, Schedule, StagePlan, TrainingVideo};
use smot::types::{FeatureSequence, Track};

#[derive(Debug, Parser)]
#[command(
    name = "smot",
    version,
    about = "Semantic multi-object tracking toolkit"
)]
struct Cli {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    GenSynthetic {
        #[arg(long, default_value_t = 1)]
        videos: usize,
        #[arg(long, default_value_t = 60)]
        frames: u32,
        #[arg(long, default_value_t = 2)]
        min_tracks: usize,
        #[arg(long, default_value_t = 5)]
        max_tracks: usize,
        /// Detection jitter in pixels.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Per-detection drop probability.
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
    },
    /// Run the tracker on each video's detections.
    Track {
        #[arg(long)]
        data: PathBuf,
    },
    /// Dump pooled features, relation queries and video context.
    Fuse {
        #[arg(long)]
        data: PathBuf,
        /// Predicted tracks (output of `track`); ground truth when absent.
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Produce semantic records.
    Describe {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train one stage (1, 2 or 3) or all of them.
    Train {
        #[arg(long)]
        stage: String,
        #[arg(long)]
        data: PathBuf,
        /// Starting checkpoint; fresh parameters from the seed when absent.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Score written outputs against a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Track, fuse, describe and evaluate.
    Pipeline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        use_gt_tracks: bool,
    },
    /// Fusion ablation grid.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        use_gt_tracks: bool,
    },
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_model(
    path: Option<&Path>,
    cfg: &RunConfig,
) -> std::result::Result<Option<ModelBundle>, Failure> {
    Ok(match path {
        Some(p) => Some(ModelBundle::load(p, cfg)?),
        None => None,
    })
}

fn dir_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".into())
}

/// Video id, tracks and features.
type TrackedVideo = (String, Vec<Track>, Vec<FeatureSequence>);

/// Tracks and features of every video under `data`. With `tracks` the
/// predicted tracks are read from there and features are recomputed.
fn tracked_inputs(
    data: &Path,
    tracks: Option<&Path>,
    cfg: &RunConfig,
) -> std::result::Result<Vec<TrackedVideo>, Failure> {
    let dirs = video_dirs(data)?;
    let mut out = Vec::with_capacity(dirs.len());
    for (i, dir) in dirs.iter().enumerate() {
        let name = dir_name(dir);
        let item = match tracks {
            Some(root) => {
                let t = parse_gt_tracks(&read_file(
                    &output_dir(root, &name, dirs.len()).join(TRACKS_FILE),
                )?)?;
                let f = track_features(&t, i, cfg);
                (name, t, f)
            }
            None => {
                let t = parse_gt_tracks(&read_file(&dir.join(GT_FILE))?)?;
                let f = parse_features(&read_file(&dir.join(FEATURES_FILE))?, Some(cfg.feat_dim))?;
                (name, t, f)
            }
        };
        out.push(item);
    }
    Ok(out)
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::GenSynthetic {
            videos,
            frames,
            min_tracks,
            max_tracks,
            sigma,
            dropout,
        } => {
            if *videos == 0 || *frames == 0 {
                return Err(Failure::Usage(
                    "need at least one video and one frame".into(),
                ));
            }
            if *min_tracks == 0 || min_tracks > max_tracks {
                return Err(Failure::Usage("need 1 <= min-tracks <= max-tracks".into()));
            }
            if !(0.0..1.0).contains(dropout) || sigma.is_nan() || *sigma < 0.0 {
                return Err(Failure::Usage(
                    "dropout must be in [0, 1) and sigma >= 0".into(),
                ));
            }
            let spec = SyntheticSpec {
                videos: *videos,
                frames: *frames,
                min_tracks: *min_tracks,
                max_tracks: *max_tracks,
                sigma_pos: *sigma,
                dropout: *dropout,
                feat_dim: cfg.feat_dim,
                ..SyntheticSpec::default()
            };
            write_synthetic(out, &gen_synthetic(cfg.seed, &spec))?;
        }
        Command::Track { data } => {
            let dirs = video_dirs(data)?;
            for dir in &dirs {
                let dets = parse_detections(&read_file(&dir.join(DETECTIONS_FILE))?)?;
                let tracks = track_sequence(&dets, TrackerParams::from(&cfg));
                let target = output_dir(out, &dir_name(dir), dirs.len());
                fs::create_dir_all(&target)?;
                fs::write(target.join(TRACKS_FILE), write_tracks(&tracks))?;
            }
        }
        Command::Fuse {
            data,
            tracks,
            model,
        } => {
            let model = load_model(model.as_deref(), &cfg)?;
            let describer = Describer::new(model.as_ref(), FusionToggles::BOTH, &cfg)?;
            let inputs = tracked_inputs(data, tracks.as_deref(), &cfg)?;
            for (name, _, features) in &inputs {
                let fused = describer.fuse(features)?;
                let doc = json!({
                    "video": name,
                    "pooled": fused.pooled.iter().map(|(id, f)| json!({"track_id": id, "feature": f})).collect::<Vec<_>>(),
                    "relations": fused.queries.iter().map(|q| json!({"subject": q.subject_id, "object": q.object_id, "h": q.h})).collect::<Vec<_>>(),
                    "context": fused.context,
                });
                let target = output_dir(out, name, inputs.len());
                fs::create_dir_all(&target)?;
                let mut text = serde_json::to_string_pretty(&doc).map_err(Error::from)?;
                text.push('\n');
                fs::write(target.join("fusion.json"), text)?;
            }
        }
        Command::Describe {
            data,
            tracks,
            model,
        } => {
            let model = load_model(model.as_deref(), &cfg)?;
            let describer = Describer::new(model.as_ref(), FusionToggles::BOTH, &cfg)?;
            let inputs = tracked_inputs(data, tracks.as_deref(), &cfg)?;
            for (name, t, features) in &inputs {
                let record = describer.describe(name, t, features, &cfg)?;
                let target = output_dir(out, name, inputs.len());
                fs::create_dir_all(&target)?;
                fs::write(target.join(PRED_SEMANTICS_FILE), write_semantics(&record))?;
            }
        }
        Command::Train {
            stage,
            data,
            input,
            steps,
            lr,
        } => {
            let stages: Vec<u8> = match stage.as_str() {
                "all" => vec![1, 2, 3],
                s => match s.parse::<u8>() {
                    Ok(k @ 1..=3) => vec![k],
                    _ => return Err(Failure::Usage(format!("unknown stage {s}"))),
                },
            };
            let videos = load_dataset(data, &cfg)?;
            let views: Vec<TrainingVideo<'_>> = videos
                .iter()
                .map(|v| TrainingVideo {
                    features: &v.features,
                    semantics: &v.semantics,
                })
                .collect();
            let mut bundle = match input {
                Some(p) => ModelBundle::load(p, &cfg)?,
                None => ModelBundle::init(&cfg, cfg.seed),
            };
            let schedule = Schedule::from_config(&cfg);
            fs::create_dir_all(out)?;
            for k in stages {
                let i = (k - 1) as usize;
                let plan = StagePlan::new(
                    k,
                    steps.unwrap_or(schedule.steps[i]),
                    lr.unwrap_or(schedule.lr[i]),
                    cfg.seed ^ k as u64,
                )?;
                let stage_input = stage_data(k, &views, &bundle, &cfg)?;
                let (next, curve) = run_stage(&plan, &bundle, &stage_input, &cfg)?;
                fs::write(out.join(format!("curve_stage{k}.csv")), curve_csv(&curve))?;
                if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
                    println!("stage {k}: loss {first:.4} -> {last:.4}");
                }
                bundle = next;
            }
            bundle.save(&out.join("model.ckpt"))?;
        }
        Command::Eval { data, pred } => {
            let videos = load_dataset(data, &cfg)?;
            let e = evaluate_outputs(&videos, pred, &cfg)?;
            fs::create_dir_all(out)?;
            let md = render_report(
                REPORT_METHOD,
                &e.tracking,
                &e.semantic,
                ReportFormat::Markdown,
            );
            fs::write(out.join("report.md"), &md)?;
            fs::write(
                out.join("report.csv"),
                render_report(REPORT_METHOD, &e.tracking, &e.semantic, ReportFormat::Csv),
            )?;
            std::io::stdout().write_all(&md)?;
        }
        Command::Pipeline {
            data,
            model,
            use_gt_tracks,
        } => {
            let model = load_model(model.as_deref(), &cfg)?;
            let opts = PipelineOptions {
                use_gt_tracks: *use_gt_tracks,
                toggles: FusionToggles::BOTH,
            };
            let result = run_pipeline(data, model.as_ref(), opts, &cfg)?;
            write_pipeline_outputs(out, &result)?;
            let e = &result.evaluation;
            std::io::stdout().write_all(&render_report(
                REPORT_METHOD,
                &e.tracking,
                &e.semantic,
                ReportFormat::Markdown,
            ))?;
        }
        Command::Ablate {
            data,
            model,
            use_gt_tracks,
        } => {
            let model = load_model(model.as_deref(), &cfg)?;
            let rows = run_ablation(data, model.as_ref(), *use_gt_tracks, &cfg)?;
            write_ablation(out, &rows)?;
            std::io::stdout().write_all(&smot::metrics::render_ablation(
                &rows,
                ReportFormat::Markdown,
            ))?;
        }
    }
    Ok(())
}
