//! Detection-to-trajectory association: constant-velocity Kalman prediction,
//! `1 - IoU` costs and Hungarian matching.

mod assignment;
mod kalman;

pub use assignment::{hungarian, Assignment, PAD_COST};
pub use kalman::{KalmanModel, KalmanState, STATE_DIM};

use std::collections::BTreeMap;

use crate::config::RunConfig;
use crate::ingest::DetectionFrame;
use crate::types::{BoundedBox, Track};

/// Intersection over union; 0 for disjoint or degenerate boxes.
pub fn iou(a: &BoundedBox, b: &BoundedBox) -> f64 {
    let (ax2, ay2) = (a.x + a.w, a.y + a.h);
    let (bx2, by2) = (b.x + b.w, b.y + b.h);
    // Areas from the same corner arithmetic as the overlap, so iou(a, a) == 1.
    let area_a = (ax2 - a.x) * (ay2 - a.y);
    let area_b = (bx2 - b.x) * (by2 - b.y);
    if !(area_a > 0.0 && area_b > 0.0) {
        return 0.0;
    }
    let iw = ax2.min(bx2) - a.x.max(b.x);
    let ih = ay2.min(by2) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    (inter / (area_a + area_b - inter)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerParams {
    pub iou_threshold: f64,
    pub max_age: u32,
    pub min_hits: u32,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.3,
            max_age: 30,
            min_hits: 3,
        }
    }
}

impl From<&RunConfig> for TrackerParams {
    fn from(c: &RunConfig) -> Self {
        Self {
            iou_threshold: c.iou_threshold,
            max_age: c.max_age,
            min_hits: c.min_hits,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tracklet {
    /// Public id, assigned once the tracklet is confirmed.
    pub track_id: Option<u32>,
    pub filter: KalmanState,
    pub age: u32,
    pub hits: u32,
    pub time_since_update: u32,
    /// Matched detections in frame order.
    pub history: Vec<BoundedBox>,
}

impl Tracklet {
    fn predicted_box(&self, frame: u32) -> BoundedBox {
        let m = &self.filter.mean;
        let (w, h) = (m[2].max(1e-6), m[3].max(1e-6));
        BoundedBox::new(frame, m[0] - w / 2.0, m[1] - h / 2.0, w, h, 1.0)
    }
}

fn measurement(b: &BoundedBox) -> [f64; 4] {
    let (cx, cy) = b.center();
    [cx, cy, b.w, b.h]
}

/// Outcome of one [`TrackerState::step`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    /// Confirmed tracklets updated this frame.
    pub boxes: Vec<(u32, BoundedBox)>,
    /// Earlier matched boxes of tracklets confirmed this frame.
    pub backfill: Vec<(u32, BoundedBox)>,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    pub params: TrackerParams,
    pub model: KalmanModel,
    pub tracklets: Vec<Tracklet>,
    pub next_id: u32,
}

impl TrackerState {
    pub fn new(params: TrackerParams) -> Self {
        Self {
            params,
            model: KalmanModel::default(),
            tracklets: Vec::new(),
            next_id: 1,
        }
    }

    /// Advance one frame: predict, associate, update, spawn, retire.
    pub fn step(&mut self, frame: u32, detections: &[BoundedBox]) -> StepOutput {
        for t in &mut self.tracklets {
            t.filter = self.model.predict(&t.filter);
            t.age += 1;
            t.time_since_update += 1;
        }
        let (n, m) = (self.tracklets.len(), detections.len());
        let mut cost = Vec::with_capacity(n * m);
        let mut overlaps = Vec::with_capacity(n * m);
        for t in &self.tracklets {
            let pb = t.predicted_box(frame);
            for d in detections {
                let o = iou(&pb, d);
                overlaps.push(o);
                cost.push(1.0 - o);
            }
        }
        let assignment = hungarian(&cost, n, m).expect("finite IoU costs");
        let mut det_used = vec![false; m];
        for &(ti, di) in &assignment.pairs {
            if overlaps[ti * m + di] < self.params.iou_threshold {
                continue;
            }
            det_used[di] = true;
            let t = &mut self.tracklets[ti];
            t.filter = self.model.update(&t.filter, measurement(&detections[di]));
            t.hits += 1;
            t.time_since_update = 0;
            t.history.push(detections[di]);
        }
        for (di, d) in detections.iter().enumerate() {
            if !det_used[di] {
                self.tracklets.push(Tracklet {
                    track_id: None,
                    filter: self.model.initiate(measurement(d)),
                    age: 0,
                    hits: 1,
                    time_since_update: 0,
                    history: vec![*d],
                });
            }
        }
        let max_age = self.params.max_age;
        self.tracklets.retain(|t| t.time_since_update <= max_age);

        let mut out = StepOutput::default();
        for t in &mut self.tracklets {
            if t.time_since_update != 0 || t.hits < self.params.min_hits {
                continue;
            }
            let id = match t.track_id {
                Some(id) => id,
                None => {
                    let id = self.next_id;
                    self.next_id += 1;
                    t.track_id = Some(id);
                    let earlier = &t.history[..t.history.len() - 1];
                    out.backfill.extend(earlier.iter().map(|b| (id, *b)));
                    id
                }
            };
            out.boxes
                .push((id, *t.history.last().expect("updated this frame")));
        }
        out.boxes.sort_by_key(|(id, _)| *id);
        out
    }
}

/// Run the tracker over a whole sequence. Frames between the first and last
/// detection frame are stepped even when empty. A tracklet's tentative boxes
/// are included once it is confirmed, so output tracks start at their first
/// detection.
pub fn track_sequence(frames: &[DetectionFrame], params: TrackerParams) -> Vec<Track> {
    let mut state = TrackerState::new(params);
    let mut by_id: BTreeMap<u32, Vec<BoundedBox>> = BTreeMap::new();
    let (Some(first), Some(last)) = (frames.first(), frames.last()) else {
        return Vec::new();
    };
    let lookup: BTreeMap<u32, &DetectionFrame> = frames.iter().map(|f| (f.frame, f)).collect();
    for frame in first.frame..=last.frame {
        let dets: Vec<BoundedBox> = lookup
            .get(&frame)
            .map(|f| f.detections.iter().map(|(b, _)| *b).collect())
            .unwrap_or_default();
        let out = state.step(frame, &dets);
        for (id, b) in out.backfill.into_iter().chain(out.boxes) {
            by_id.entry(id).or_default().push(b);
        }
    }
    by_id
        .into_iter()
        .map(|(id, mut boxes)| {
            boxes.sort_by_key(|b| b.frame);
            Track::new(id, boxes)
        })
        .collect()
}
