//! Scripted synthetic scenes: pedestrians walking in horizontal lanes, some
//! of them paired into labeled interactions, rendered to the on-disk
//! dataset formats.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::ingest::{write_detections, write_features, write_semantics, DetectionFrame};
use crate::linalg::Matrix;
use crate::reasoner::{canned_caption, canonical, summary_text};
use crate::rng::SeededRng;
use crate::types::{BoundedBox, FeatureSequence, Interaction, SemanticRecord, Track};

pub const SCENE_WIDTH: f64 = 1920.0;
pub const SCENE_HEIGHT: f64 = 1080.0;
pub const BOX_W: f64 = 40.0;
pub const BOX_H: f64 = 80.0;
/// Speed (px/frame) that maps to a velocity channel of 1.
pub const VELOCITY_SCALE: f64 = 8.0;
/// Distance (px) that maps to a nearest-neighbour channel of 0; twice this
/// or more maps to 1.
pub const DISTANCE_SCALE: f64 = 300.0;
/// Number of raw feature channels before zero padding.
pub const FEATURE_CHANNELS: usize = 6;

const LANES: usize = 5;
const LANE_TOP: f64 = 60.0;
const LANE_PITCH: f64 = 200.0;
const ROW_OFFSET: f64 = 100.0;
const LABELS: [&str; 4] = ["approach", "follow", "pass_by", "talk_to"];

/// Top-left box corner as a function of frame: linear interpolation along
/// `waypoints` at `speed` px/frame, holding the last waypoint afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionScript {
    pub track_id: u32,
    pub waypoints: Vec<(f64, f64)>,
    pub speed: f64,
}

impl MotionScript {
    fn standing(track_id: u32, at: (f64, f64)) -> Self {
        Self {
            track_id,
            waypoints: vec![at],
            speed: 0.0,
        }
    }

    fn walking(track_id: u32, from: (f64, f64), to: (f64, f64), speed: f64) -> Self {
        Self {
            track_id,
            waypoints: vec![from, to],
            speed,
        }
    }

    /// Position after `t` frames of motion.
    pub fn position(&self, t: f64) -> (f64, f64) {
        let mut left = self.speed * t;
        for w in self.waypoints.windows(2) {
            let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            let len = dx.hypot(dy);
            if left <= len && len > 0.0 {
                let k = left / len;
                return (w[0].0 + k * dx, w[0].1 + k * dy);
            }
            left -= len;
        }
        *self.waypoints.last().expect("script has a waypoint")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedInteraction {
    pub subject: u32,
    pub object: u32,
    pub label: String,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub video_id: String,
    pub frames: u32,
    pub scripts: Vec<MotionScript>,
    pub interactions: Vec<ScriptedInteraction>,
    pub sigma_pos: f64,
    /// `(track_id, frame)` detections removed from the detector output.
    pub dropouts: BTreeSet<(u32, u32)>,
}

/// Knobs for a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub videos: usize,
    pub frames: u32,
    pub min_tracks: usize,
    pub max_tracks: usize,
    pub sigma_pos: f64,
    /// Probability that any single detection is dropped.
    pub dropout: f64,
    pub feat_dim: usize,
    pub feat_noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            videos: 1,
            frames: 60,
            min_tracks: 2,
            max_tracks: 5,
            sigma_pos: 0.0,
            dropout: 0.0,
            feat_dim: 32,
            feat_noise: 0.02,
        }
    }
}

/// Everything generated for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub scene: SyntheticScene,
    pub gt: Vec<Track>,
    pub detections: Vec<DetectionFrame>,
    pub features: Vec<FeatureSequence>,
    pub semantics: SemanticRecord,
}

fn pick<'a>(rng: &mut SeededRng, items: &[&'a str]) -> &'a str {
    items[rng.below(items.len() as u64) as usize]
}

fn sign(rng: &mut SeededRng) -> f64 {
    if rng.bernoulli(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Lays out a random scene. Every track lives in its own lane band except
/// interaction pairs, which share one; pass-by pairs use the band's two rows.
pub fn random_scene(rng: &mut SeededRng, spec: &SyntheticSpec, video_id: &str) -> SyntheticScene {
    let span = spec.max_tracks.max(spec.min_tracks) - spec.min_tracks;
    let n = spec.min_tracks + rng.below(span as u64 + 1) as usize;
    let mut lanes: Vec<usize> = (0..LANES).collect();
    for i in (1..lanes.len()).rev() {
        lanes.swap(i, rng.below(i as u64 + 1) as usize);
    }
    let duration = spec.frames.saturating_sub(1) as f64;
    let mut scripts = Vec::new();
    let mut interactions = Vec::new();
    let mut next_id = 1u32;
    let mut remaining = n;
    for &lane in &lanes {
        if remaining == 0 {
            break;
        }
        let y = LANE_TOP + LANE_PITCH * lane as f64;
        let x0 = rng.uniform(500.0, 1300.0);
        if remaining >= 2 && rng.bernoulli(0.6) {
            let (a, b) = (next_id, next_id + 1);
            next_id += 2;
            remaining -= 2;
            let label = pick(rng, &LABELS);
            let dir = sign(rng);
            let (subject, object) = match label {
                "follow" => {
                    let speed = rng.uniform(1.5, 3.0);
                    let far = (x0 + dir * speed * duration, y);
                    // b leads, a trails 70 px behind on the same line.
                    scripts.push(MotionScript::walking(
                        a,
                        (x0 - dir * 70.0, y),
                        (far.0 - dir * 70.0, y),
                        speed,
                    ));
                    scripts.push(MotionScript::walking(b, (x0, y), far, speed));
                    (a, b)
                }
                "approach" => {
                    let target = x0 + dir * rng.uniform(180.0, 260.0);
                    scripts.push(MotionScript::walking(
                        a,
                        (x0, y),
                        (target - dir * 60.0, y),
                        3.0,
                    ));
                    scripts.push(MotionScript::standing(b, (target, y)));
                    (a, b)
                }
                "pass_by" => {
                    let speed = rng.uniform(2.5, 4.0);
                    let half = speed * duration / 2.0;
                    scripts.push(MotionScript::walking(
                        a,
                        (x0 - dir * half, y),
                        (x0 + dir * half, y),
                        speed,
                    ));
                    let y2 = y + ROW_OFFSET;
                    scripts.push(MotionScript::walking(
                        b,
                        (x0 + dir * half, y2),
                        (x0 - dir * half, y2),
                        speed,
                    ));
                    (a, b)
                }
                _ => {
                    scripts.push(MotionScript::standing(a, (x0, y)));
                    scripts.push(MotionScript::standing(b, (x0 + 60.0, y)));
                    (a, b)
                }
            };
            interactions.push(ScriptedInteraction {
                subject,
                object,
                label: label.to_string(),
                start: 1,
                end: spec.frames,
            });
        } else {
            let id = next_id;
            next_id += 1;
            remaining -= 1;
            let speed = [0.0, 2.0, 5.0][rng.below(3) as usize];
            let dir = sign(rng);
            scripts.push(if speed == 0.0 {
                MotionScript::standing(id, (x0, y))
            } else {
                MotionScript::walking(id, (x0, y), (x0 + dir * speed * duration, y), speed)
            });
        }
    }
    let mut dropouts = BTreeSet::new();
    if spec.dropout > 0.0 {
        for s in &scripts {
            for f in 1..=spec.frames {
                if rng.bernoulli(spec.dropout) {
                    dropouts.insert((s.track_id, f));
                }
            }
        }
    }
    SyntheticScene {
        video_id: video_id.to_string(),
        frames: spec.frames,
        scripts,
        interactions,
        sigma_pos: spec.sigma_pos,
        dropouts,
    }
}

/// Ground-truth tracks, present in every frame.
pub fn render_gt(scene: &SyntheticScene) -> Vec<Track> {
    scene
        .scripts
        .iter()
        .map(|s| {
            let boxes = (1..=scene.frames)
                .map(|f| {
                    let (x, y) = s.position((f - 1) as f64);
                    BoundedBox::new(f, milli(x), milli(y), BOX_W, BOX_H, 1.0)
                })
                .collect();
            Track::new(s.track_id, boxes)
        })
        .collect()
}

/// Ground-truth boxes with Gaussian position jitter and scripted drop-outs.
pub fn render_detections(
    scene: &SyntheticScene,
    gt: &[Track],
    rng: &mut SeededRng,
) -> Vec<DetectionFrame> {
    let mut frames: BTreeMap<u32, Vec<(BoundedBox, i64)>> = BTreeMap::new();
    for t in gt {
        for b in &t.boxes {
            let (dx, dy) = if scene.sigma_pos > 0.0 {
                (
                    rng.normal(0.0, scene.sigma_pos),
                    rng.normal(0.0, scene.sigma_pos),
                )
            } else {
                (0.0, 0.0)
            };
            if scene.dropouts.contains(&(t.track_id, b.frame)) {
                continue;
            }
            let jittered =
                BoundedBox::new(b.frame, milli(b.x + dx), milli(b.y + dy), b.w, b.h, 1.0);
            frames.entry(b.frame).or_default().push((jittered, -1));
        }
    }
    frames
        .into_iter()
        .map(|(frame, detections)| DetectionFrame { frame, detections })
        .collect()
}

pub fn scene_semantics(scene: &SyntheticScene, gt: &[Track]) -> SemanticRecord {
    let interactions: BTreeSet<Interaction> = scene
        .interactions
        .iter()
        .map(|i| canonical(Interaction::new(i.subject, i.object, i.label.clone())))
        .collect();
    SemanticRecord {
        video_id: scene.video_id.clone(),
        summary: summary_text(gt.len(), &interactions),
        instance_captions: gt.iter().map(|t| (t.track_id, canned_caption(t))).collect(),
        interactions,
    }
}

/// Millipixel rounding, so boxes survive the fixed-precision CSV writers.
fn milli(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn clamp1(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// Per-frame features `[cx, cy, vx, vy, nearest distance, bearing to
/// nearest]`, each scaled into `[-1, 1]`, zero-padded (or cut) to `dim`,
/// plus `N(0, noise)` on every entry. Tracks are visited in id order so the
/// noise stream is independent of input order.
pub fn extract_features(
    tracks: &[Track],
    dim: usize,
    noise: f64,
    rng: &mut SeededRng,
) -> Vec<FeatureSequence> {
    let mut sorted: Vec<&Track> = tracks.iter().filter(|t| !t.is_empty()).collect();
    sorted.sort_by_key(|t| t.track_id);
    sorted
        .iter()
        .map(|t| {
            let mut data = Vec::with_capacity(t.len() * dim);
            for (k, b) in t.boxes.iter().enumerate() {
                let (cx, cy) = b.center();
                let (vx, vy) = if t.len() < 2 {
                    (0.0, 0.0)
                } else {
                    let (p, q) = if k == 0 {
                        (&t.boxes[0], &t.boxes[1])
                    } else {
                        (&t.boxes[k - 1], b)
                    };
                    let dt = q.frame.saturating_sub(p.frame).max(1) as f64;
                    (
                        (q.center().0 - p.center().0) / dt,
                        (q.center().1 - p.center().1) / dt,
                    )
                };
                let mut nearest: Option<(f64, f64, f64)> = None;
                for other in &sorted {
                    if other.track_id == t.track_id {
                        continue;
                    }
                    if let Some(ob) = other.at_frame(b.frame) {
                        let (ox, oy) = ob.center();
                        let d = (ox - cx).hypot(oy - cy);
                        if nearest.is_none_or(|(nd, _, _)| d < nd) {
                            nearest = Some((d, ox - cx, oy - cy));
                        }
                    }
                }
                let (dist, bearing) = match nearest {
                    Some((d, dx, dy)) => (clamp1(d / DISTANCE_SCALE - 1.0), dy.atan2(dx) / PI),
                    None => (1.0, 0.0),
                };
                let raw = [
                    clamp1(2.0 * cx / SCENE_WIDTH - 1.0),
                    clamp1(2.0 * cy / SCENE_HEIGHT - 1.0),
                    clamp1(vx / VELOCITY_SCALE),
                    clamp1(vy / VELOCITY_SCALE),
                    dist,
                    bearing,
                ];
                for c in 0..dim {
                    let base = raw.get(c).copied().unwrap_or(0.0);
                    let jitter = if noise > 0.0 {
                        rng.normal(0.0, noise)
                    } else {
                        0.0
                    };
                    data.push(base + jitter);
                }
            }
            FeatureSequence::new(
                t.track_id,
                t.frames().collect(),
                Matrix::from_vec(t.len(), dim, data),
            )
        })
        .collect()
}

pub fn video_id(seed: u64, index: usize) -> String {
    format!("synth_{seed}_{index:03}")
}

/// One video per index; video `k` draws from `SeededRng::split(seed, k)`.
pub fn gen_synthetic(seed: u64, spec: &SyntheticSpec) -> Vec<SyntheticVideo> {
    (0..spec.videos)
        .map(|k| {
            let mut rng = SeededRng::split(seed, k as u64);
            let scene = random_scene(&mut rng, spec, &video_id(seed, k));
            let gt = render_gt(&scene);
            let detections = render_detections(&scene, &gt, &mut rng);
            let features = extract_features(&gt, spec.feat_dim, spec.feat_noise, &mut rng);
            let semantics = scene_semantics(&scene, &gt);
            SyntheticVideo {
                scene,
                gt,
                detections,
                features,
                semantics,
            }
        })
        .collect()
}

pub fn write_video(dir: &Path, video: &SyntheticVideo) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("detections.csv"),
        write_detections(&video.detections),
    )?;
    fs::write(dir.join("gt.csv"), crate::ingest::write_tracks(&video.gt))?;
    fs::write(dir.join("features.csv"), write_features(&video.features))?;
    fs::write(
        dir.join("semantics.json"),
        write_semantics(&video.semantics),
    )?;
    Ok(())
}

/// Writes a single video straight into `out`, or several into
/// `out/<video_id>/`.
pub fn write_synthetic(out: &Path, videos: &[SyntheticVideo]) -> Result<()> {
    match videos {
        [one] => write_video(out, one),
        many => {
            for v in many {
                write_video(&out.join(&v.scene.video_id), v)?;
            }
            Ok(())
        }
    }
}
