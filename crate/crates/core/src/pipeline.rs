//! End-to-end runs: track, fuse, describe, evaluate; and the fusion
//! ablation grid.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::bundle::ModelBundle;
use crate::config::{RunConfig, END_TOKEN, INSTANCE_TOKEN, NO_INTERACTION, SUMMARY_TOKEN};
use crate::dataset::{load_dataset, read_file, VideoData};
use crate::error::{Error, Result};
use crate::fusion::{
    frame_tokens, relation_queries, temporal_attention, video_context_run, InstanceFusionParams,
    RelationQuery, VideoFusionParams,
};
use crate::ingest::{parse_gt_tracks, parse_semantics, write_semantics, write_tracks};
use crate::metrics::{
    evaluate, render_ablation, render_report, AblationRow, Evaluation, ReportFormat, VideoEval,
};
use crate::reasoner::{
    canned_caption, canonical, detokenize, generate, summary_text, template_decode, PrefixSources,
};
use crate::rng::SeededRng;
use crate::synth::{extract_features, gen_synthetic, SyntheticSpec};
use crate::tracker::{track_sequence, TrackerParams};
use crate::types::{FeatureSequence, Interaction, SemanticRecord, Track};

/// Feature noise used when features are computed from predicted tracks.
pub const FEATURE_NOISE: f64 = 0.02;
/// Calibration scenes used to place interaction prototypes.
pub const CALIBRATION_VIDEOS: usize = 16;
const CALIBRATION_SALT: u64 = 0x5eed_ca1b;

/// Which fusion stages are active. Disabled instance fusion mean-pools
/// features; disabled video fusion leaves a zero context vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionToggles {
    pub instance: bool,
    pub video: bool,
}

impl FusionToggles {
    pub const BOTH: FusionToggles = FusionToggles {
        instance: true,
        video: true,
    };
}

impl Default for FusionToggles {
    fn default() -> Self {
        Self::BOTH
    }
}

/// Fused view of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVideo {
    /// Pooled feature per track, ids ascending.
    pub pooled: Vec<(u32, Vec<f64>)>,
    /// All ordered pairs, sorted by `(subject, object)`.
    pub queries: Vec<RelationQuery>,
    pub context: Vec<f64>,
}

impl FusedVideo {
    pub fn sources(&self) -> PrefixSources {
        PrefixSources {
            context: self.context.clone(),
            instances: self.pooled.iter().map(|(_, f)| f.clone()).collect(),
            relations: self.queries.iter().map(|q| q.h.clone()).collect(),
        }
    }
}

fn mean_pool(seq: &FeatureSequence) -> Vec<f64> {
    let n = seq.len() as f64;
    (0..seq.dim())
        .map(|c| (0..seq.len()).map(|r| seq.feats[(r, c)]).sum::<f64>() / n)
        .collect()
}

pub fn fuse_video(
    features: &[FeatureSequence],
    inst: &InstanceFusionParams,
    video: &VideoFusionParams,
    toggles: FusionToggles,
) -> Result<FusedVideo> {
    let mut seqs: Vec<&FeatureSequence> = features.iter().filter(|s| !s.is_empty()).collect();
    seqs.sort_by_key(|s| s.track_id);
    for s in &seqs {
        if s.dim() != inst.feat_dim() {
            return Err(Error::DimensionMismatch {
                what: format!("features of track {}", s.track_id),
                expected: inst.feat_dim(),
                found: s.dim(),
            });
        }
    }
    let pooled: Vec<(u32, Vec<f64>)> = seqs
        .iter()
        .map(|s| {
            let f = if toggles.instance {
                temporal_attention(s, inst).aggregate
            } else {
                mean_pool(s)
            };
            (s.track_id, f)
        })
        .collect();
    let queries = relation_queries(&pooled, inst);
    let context = if toggles.video && !seqs.is_empty() {
        let owned: Vec<FeatureSequence> = seqs.iter().map(|s| (*s).clone()).collect();
        let frames: Vec<_> = frame_tokens(&owned, video)
            .into_iter()
            .map(|(_, m)| m)
            .collect();
        video_context_run(&frames, video)?.f
    } else if toggles.video {
        video.initial_state().f
    } else {
        vec![0.0; video.context_dim()]
    };
    Ok(FusedVideo {
        pooled,
        queries,
        context,
    })
}

/// Class centroids of relation queries over generated calibration scenes
/// (ground-truth tracks), one per label including `none`.
pub fn calibrate_prototypes(
    inst: &InstanceFusionParams,
    video: &VideoFusionParams,
    toggles: FusionToggles,
    cfg: &RunConfig,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let spec = SyntheticSpec {
        videos: CALIBRATION_VIDEOS,
        feat_dim: cfg.feat_dim,
        ..SyntheticSpec::default()
    };
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for v in gen_synthetic(cfg.seed ^ CALIBRATION_SALT, &spec) {
        let fused = fuse_video(&v.features, inst, video, toggles)?;
        for q in fused.queries {
            let probe = |label: &String| {
                v.semantics
                    .interactions
                    .contains(&canonical(Interaction::new(
                        q.subject_id,
                        q.object_id,
                        label.clone(),
                    )))
            };
            let label = cfg
                .labels
                .iter()
                .find(|l| l.as_str() != NO_INTERACTION && probe(l))
                .cloned()
                .unwrap_or_else(|| NO_INTERACTION.to_string());
            let e = sums
                .entry(label)
                .or_insert_with(|| (vec![0.0; q.h.len()], 0));
            for (a, b) in e.0.iter_mut().zip(&q.h) {
                *a += b;
            }
            e.1 += 1;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(l, (s, n))| (l, s.into_iter().map(|x| x / n as f64).collect()))
        .collect())
}

/// Fusion parameters, calibrated prototypes and the optional trained model.
#[derive(Debug, Clone)]
pub struct Describer {
    pub bundle: ModelBundle,
    pub trained: bool,
    pub prototypes: BTreeMap<String, Vec<f64>>,
    pub toggles: FusionToggles,
}

impl Describer {
    /// Without a trained bundle the fusion modules are seeded from the
    /// config seed and captions come from templates.
    pub fn new(
        model: Option<&ModelBundle>,
        toggles: FusionToggles,
        cfg: &RunConfig,
    ) -> Result<Self> {
        let bundle = model
            .cloned()
            .unwrap_or_else(|| ModelBundle::init(cfg, cfg.seed));
        let prototypes =
            calibrate_prototypes(&bundle.fusion_instance, &bundle.fusion_video, toggles, cfg)?;
        Ok(Self {
            bundle,
            trained: model.is_some(),
            prototypes,
            toggles,
        })
    }

    pub fn fuse(&self, features: &[FeatureSequence]) -> Result<FusedVideo> {
        fuse_video(
            features,
            &self.bundle.fusion_instance,
            &self.bundle.fusion_video,
            self.toggles,
        )
    }

    fn lm_text(&self, sources: &PrefixSources, start: &str, cfg: &RunConfig) -> Result<String> {
        let start = cfg
            .token_id(start)
            .ok_or_else(|| Error::Config(format!("vocab lacks {start}")))?;
        let end = cfg
            .token_id(END_TOKEN)
            .ok_or_else(|| Error::Config("vocab lacks end token".into()))?;
        let prefix = sources.project(&self.bundle.projector)?;
        let ids = generate(
            &self.bundle.toylm,
            Some(&self.bundle.lora),
            &prefix,
            start,
            end,
            cfg.lm_max_tokens - 1,
        )?;
        Ok(detokenize(&ids, cfg))
    }

    /// Semantic record for one video's tracks and their features.
    pub fn describe(
        &self,
        video_id: &str,
        tracks: &[Track],
        features: &[FeatureSequence],
        cfg: &RunConfig,
    ) -> Result<SemanticRecord> {
        let fused = self.fuse(features)?;
        let interactions = template_decode(&fused.queries, &self.prototypes)?;
        let by_id: BTreeMap<u32, &Track> = tracks.iter().map(|t| (t.track_id, t)).collect();
        let mut captions = BTreeMap::new();
        let summary;
        if self.trained {
            let sources = fused.sources();
            summary = self.lm_text(&sources, SUMMARY_TOKEN, cfg)?;
            for (k, (id, _)) in fused.pooled.iter().enumerate() {
                let one = PrefixSources {
                    context: sources.context.clone(),
                    instances: vec![sources.instances[k].clone()],
                    relations: Vec::new(),
                };
                captions.insert(*id, self.lm_text(&one, INSTANCE_TOKEN, cfg)?);
            }
        } else {
            summary = summary_text(fused.pooled.len(), &interactions);
            for (id, _) in &fused.pooled {
                if let Some(t) = by_id.get(id) {
                    captions.insert(*id, canned_caption(t));
                }
            }
        }
        Ok(SemanticRecord {
            video_id: video_id.to_string(),
            summary,
            instance_captions: captions,
            interactions,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PipelineOptions {
    /// Replace tracker output by the ground-truth tracks and their stored
    /// features.
    pub use_gt_tracks: bool,
    pub toggles: FusionToggles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoOutput {
    pub video_id: String,
    pub tracks: Vec<Track>,
    pub features: Vec<FeatureSequence>,
    pub semantics: SemanticRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub videos: Vec<VideoOutput>,
    pub evaluation: Evaluation,
}

/// Tracks and features for one video: tracker output with recomputed
/// features (noise seeded by `(cfg.seed, video index)`), or the ground truth.
pub fn track_video(
    v: &VideoData,
    index: usize,
    use_gt: bool,
    cfg: &RunConfig,
) -> (Vec<Track>, Vec<FeatureSequence>) {
    if use_gt {
        return (v.gt.clone(), v.features.clone());
    }
    let tracks = track_sequence(&v.detections, TrackerParams::from(cfg));
    let features = track_features(&tracks, index, cfg);
    (tracks, features)
}

/// Features of predicted tracks for video `index`, noise drawn from
/// `SeededRng::split(cfg.seed, index)`.
pub fn track_features(tracks: &[Track], index: usize, cfg: &RunConfig) -> Vec<FeatureSequence> {
    let mut rng = SeededRng::split(cfg.seed, index as u64);
    extract_features(tracks, cfg.feat_dim, FEATURE_NOISE, &mut rng)
}

fn score(data: &[VideoData], outputs: &[VideoOutput], cfg: &RunConfig) -> Result<Evaluation> {
    let evals: Vec<VideoEval<'_>> = data
        .iter()
        .zip(outputs)
        .map(|(d, o)| VideoEval {
            gt_tracks: &d.gt,
            gt_semantics: &d.semantics,
            pred_tracks: &o.tracks,
            pred_semantics: &o.semantics,
        })
        .collect();
    evaluate(&evals, cfg)
}

pub fn run_pipeline_on(
    data: &[VideoData],
    model: Option<&ModelBundle>,
    opts: PipelineOptions,
    cfg: &RunConfig,
) -> Result<PipelineResult> {
    let describer = Describer::new(model, opts.toggles, cfg)?;
    let mut videos = Vec::with_capacity(data.len());
    for (i, v) in data.iter().enumerate() {
        let (tracks, features) = track_video(v, i, opts.use_gt_tracks, cfg);
        let semantics = describer.describe(&v.video_id, &tracks, &features, cfg)?;
        videos.push(VideoOutput {
            video_id: v.video_id.clone(),
            tracks,
            features,
            semantics,
        });
    }
    let evaluation = score(data, &videos, cfg)?;
    Ok(PipelineResult { videos, evaluation })
}

pub fn run_pipeline(
    dataset: &Path,
    model: Option<&ModelBundle>,
    opts: PipelineOptions,
    cfg: &RunConfig,
) -> Result<PipelineResult> {
    let data = load_dataset(dataset, cfg)?;
    run_pipeline_on(&data, model, opts, cfg)
}

/// Output directory of video `video_id` among `count` videos written under
/// `root`.
pub fn output_dir(root: &Path, video_id: &str, count: usize) -> PathBuf {
    if count == 1 {
        root.to_path_buf()
    } else {
        root.join(video_id)
    }
}

/// Scores previously written pipeline outputs under `pred` against the
/// dataset `data`.
pub fn evaluate_outputs(data: &[VideoData], pred: &Path, cfg: &RunConfig) -> Result<Evaluation> {
    let mut outputs = Vec::with_capacity(data.len());
    for v in data {
        let dir = output_dir(pred, &v.video_id, data.len());
        let tracks = parse_gt_tracks(&read_file(&dir.join(TRACKS_FILE))?)?;
        let semantics = parse_semantics(&read_file(&dir.join(PRED_SEMANTICS_FILE))?, &cfg.labels)?;
        outputs.push(VideoOutput {
            video_id: v.video_id.clone(),
            tracks,
            features: Vec::new(),
            semantics,
        });
    }
    score(data, &outputs, cfg)
}

pub const TRACKS_FILE: &str = "tracks.csv";
pub const PRED_SEMANTICS_FILE: &str = "semantics_pred.json";

pub const REPORT_METHOD: &str = "smot";

/// `tracks.csv` and `semantics_pred.json` per video (directly in `out` for
/// a single video, else in `out/<video_id>/`), plus `report.md` and
/// `report.csv` in `out`.
pub fn write_pipeline_outputs(out: &Path, result: &PipelineResult) -> Result<()> {
    fs::create_dir_all(out)?;
    for v in &result.videos {
        let dir = output_dir(out, &v.video_id, result.videos.len());
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(TRACKS_FILE), write_tracks(&v.tracks))?;
        fs::write(dir.join(PRED_SEMANTICS_FILE), write_semantics(&v.semantics))?;
    }
    let e = &result.evaluation;
    fs::write(
        out.join("report.md"),
        render_report(
            REPORT_METHOD,
            &e.tracking,
            &e.semantic,
            ReportFormat::Markdown,
        ),
    )?;
    fs::write(
        out.join("report.csv"),
        render_report(REPORT_METHOD, &e.tracking, &e.semantic, ReportFormat::Csv),
    )?;
    Ok(())
}

/// The four fusion variants in table order: none, video only, instance
/// only, both.
pub const ABLATION_VARIANTS: [FusionToggles; 4] = [
    FusionToggles {
        instance: false,
        video: false,
    },
    FusionToggles {
        instance: false,
        video: true,
    },
    FusionToggles {
        instance: true,
        video: false,
    },
    FusionToggles::BOTH,
];

/// Tracks once, then describes and scores every variant. Tracking columns
/// are therefore shared by all rows.
pub fn run_ablation_on(
    data: &[VideoData],
    model: Option<&ModelBundle>,
    use_gt_tracks: bool,
    cfg: &RunConfig,
) -> Result<Vec<AblationRow>> {
    let tracked: Vec<(Vec<Track>, Vec<FeatureSequence>)> = data
        .iter()
        .enumerate()
        .map(|(i, v)| track_video(v, i, use_gt_tracks, cfg))
        .collect();
    let mut rows = Vec::new();
    for (k, toggles) in ABLATION_VARIANTS.into_iter().enumerate() {
        let describer = Describer::new(model, toggles, cfg)?;
        let mut outputs = Vec::new();
        for (v, (tracks, features)) in data.iter().zip(&tracked) {
            outputs.push(VideoOutput {
                video_id: v.video_id.clone(),
                tracks: tracks.clone(),
                features: features.clone(),
                semantics: describer.describe(&v.video_id, tracks, features, cfg)?,
            });
        }
        let e = score(data, &outputs, cfg)?;
        rows.push(AblationRow {
            exp: k + 1,
            vid_fus: toggles.video,
            ins_fus: toggles.instance,
            hota: e.tracking.hota,
            idf1: e.tracking.idf1,
            meteor: e.semantic.summary.meteor,
            cider: e.semantic.summary.cider,
            f1: e.semantic.interaction.f1,
            recall: e.semantic.interaction.recall,
            macro_f1: e.semantic.macro_f1,
        });
    }
    Ok(rows)
}

pub fn run_ablation(
    dataset: &Path,
    model: Option<&ModelBundle>,
    use_gt_tracks: bool,
    cfg: &RunConfig,
) -> Result<Vec<AblationRow>> {
    let data = load_dataset(dataset, cfg)?;
    run_ablation_on(&data, model, use_gt_tracks, cfg)
}

pub fn write_ablation(out: &Path, rows: &[AblationRow]) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(
        out.join("ablation.md"),
        render_ablation(rows, ReportFormat::Markdown),
    )?;
    fs::write(
        out.join("ablation.csv"),
        render_ablation(rows, ReportFormat::Csv),
    )?;
    Ok(())
}

/// Labels present in a prototype table other than `none`.
pub fn decodable_labels(prototypes: &BTreeMap<String, Vec<f64>>) -> BTreeSet<&str> {
    prototypes
        .keys()
        .map(String::as_str)
        .filter(|l| *l != NO_INTERACTION)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::write_synthetic;

    fn dataset(videos: usize, seed: u64, cfg: &RunConfig) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            videos,
            feat_dim: cfg.feat_dim,
            ..SyntheticSpec::default()
        };
        write_synthetic(dir.path(), &gen_synthetic(seed, &spec)).unwrap();
        dir
    }

    #[test]
    fn noise_free_tracking_is_perfect() {
        let cfg = RunConfig::small();
        let dir = dataset(3, 42, &cfg);
        let r = run_pipeline(dir.path(), None, PipelineOptions::default(), &cfg).unwrap();
        assert_eq!(r.evaluation.tracking.mota, Some(100.0));
        assert_eq!(r.evaluation.tracking.idf1, 100.0);
    }

    #[test]
    fn gt_bypass_is_perfect() {
        let cfg = RunConfig::small();
        let dir = dataset(2, 8, &cfg);
        let opts = PipelineOptions {
            use_gt_tracks: true,
            ..PipelineOptions::default()
        };
        let t = run_pipeline(dir.path(), None, opts, &cfg)
            .unwrap()
            .evaluation
            .tracking;
        assert_eq!((t.mota, t.idf1, t.hota), (Some(100.0), 100.0, 100.0));
    }

    #[test]
    fn prototypes_cover_labels() {
        let cfg = RunConfig::small();
        let b = ModelBundle::init(&cfg, 0);
        let p = calibrate_prototypes(
            &b.fusion_instance,
            &b.fusion_video,
            FusionToggles::BOTH,
            &cfg,
        )
        .unwrap();
        assert!(p.contains_key(NO_INTERACTION));
        assert!(decodable_labels(&p).len() >= 3, "{:?}", p.keys());
    }

    #[test]
    fn single_track_video() {
        let cfg = RunConfig::small();
        let spec = SyntheticSpec {
            min_tracks: 1,
            max_tracks: 1,
            feat_dim: cfg.feat_dim,
            ..SyntheticSpec::default()
        };
        let dir = tempfile::tempdir().unwrap();
        write_synthetic(dir.path(), &gen_synthetic(1, &spec)).unwrap();
        let r = run_pipeline(dir.path(), None, PipelineOptions::default(), &cfg).unwrap();
        assert!(r.videos[0].semantics.interactions.is_empty());
        assert_eq!(r.videos[0].tracks.len(), 1);
    }

    #[test]
    fn ablation_shape() {
        let cfg = RunConfig::small();
        let dir = dataset(2, 4, &cfg);
        let rows = run_ablation(dir.path(), None, false, &cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows
            .iter()
            .all(|r| r.hota == rows[0].hota && r.idf1 == rows[0].idf1));
    }
}
