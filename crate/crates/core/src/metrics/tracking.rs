//! CLEAR-MOT, identity (IDF1 family) and HOTA scores.
//!
//! Per-frame matchings all use the same construction: rows are ground-truth
//! boxes ordered by id, columns predicted boxes ordered by id, cost `1 - IoU`
//! for admissible pairs and a forbidding cost larger than any achievable
//! admissible total otherwise. Minimizing that first maximizes the number of
//! admissible matches, then their summed IoU.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Result;
use crate::tracker::{hungarian, iou};
use crate::types::{BoundedBox, Track};

/// Frame-indexed view of a track list: `frame -> [(id, box)]`, ids ascending.
pub(crate) fn by_frame(tracks: &[Track]) -> BTreeMap<u32, Vec<(u32, BoundedBox)>> {
    let mut out: BTreeMap<u32, Vec<(u32, BoundedBox)>> = BTreeMap::new();
    for t in tracks {
        for b in &t.boxes {
            out.entry(b.frame).or_default().push((t.track_id, *b));
        }
    }
    for v in out.values_mut() {
        v.sort_by_key(|(id, _)| *id);
    }
    out
}

/// Gated min-cost matching on an IoU matrix; returns `(row, col)` pairs with
/// `iou >= threshold`.
pub(crate) fn match_gated(
    ious: &[f64],
    rows: usize,
    cols: usize,
    threshold: f64,
) -> Result<Vec<(usize, usize)>> {
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    let forbid = rows.min(cols) as f64 + 1.0;
    let cost: Vec<f64> = ious
        .iter()
        .map(|&v| if v >= threshold { 1.0 - v } else { forbid })
        .collect();
    let a = hungarian(&cost, rows, cols)?;
    Ok(a.pairs
        .into_iter()
        .filter(|&(r, c)| ious[r * cols + c] >= threshold)
        .collect())
}

fn iou_matrix(g: &[(u32, BoundedBox)], p: &[(u32, BoundedBox)]) -> Vec<f64> {
    let mut m = Vec::with_capacity(g.len() * p.len());
    for (_, gb) in g {
        for (_, pb) in p {
            m.push(iou(gb, pb));
        }
    }
    m
}

fn frames_of(
    gt: &BTreeMap<u32, Vec<(u32, BoundedBox)>>,
    pred: &BTreeMap<u32, Vec<(u32, BoundedBox)>>,
) -> BTreeSet<u32> {
    gt.keys().chain(pred.keys()).copied().collect()
}

/// Raw CLEAR counts; add across videos before deriving MOTA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClearCounts {
    pub gt_boxes: usize,
    pub matches: usize,
    pub fn_: usize,
    pub fp: usize,
    pub id_switches: usize,
}

impl ClearCounts {
    pub fn merge(&mut self, o: &ClearCounts) {
        self.gt_boxes += o.gt_boxes;
        self.matches += o.matches;
        self.fn_ += o.fn_;
        self.fp += o.fp;
        self.id_switches += o.id_switches;
    }

    /// `100 (1 - (FN + FP + IDs) / GT)`; `None` without ground truth. Can
    /// be negative.
    pub fn mota(&self) -> Option<f64> {
        if self.gt_boxes == 0 {
            return None;
        }
        Some(100.0 * (1.0 - (self.fn_ + self.fp + self.id_switches) as f64 / self.gt_boxes as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearScores {
    pub fn_: usize,
    pub fp: usize,
    pub id_switches: usize,
    pub mota: Option<f64>,
}

/// CLEAR-MOT counting. Pairs matched in the previous frame are kept while
/// their IoU stays at or above `iou_thr`; the rest are matched by gated
/// Hungarian. An identity switch is counted when a ground-truth track is
/// matched to a different prediction id than at its last match.
pub fn clear_counts(gt: &[Track], pred: &[Track], iou_thr: f64) -> Result<ClearCounts> {
    let g = by_frame(gt);
    let p = by_frame(pred);
    let empty = Vec::new();
    let mut prev: BTreeMap<u32, u32> = BTreeMap::new();
    let mut last: BTreeMap<u32, u32> = BTreeMap::new();
    let mut c = ClearCounts::default();
    for f in frames_of(&g, &p) {
        let gs = g.get(&f).unwrap_or(&empty);
        let ps = p.get(&f).unwrap_or(&empty);
        c.gt_boxes += gs.len();
        let mut matched: BTreeMap<u32, u32> = BTreeMap::new();
        let mut used_pred: BTreeSet<u32> = BTreeSet::new();
        for (gid, gb) in gs {
            if let Some(pid) = prev.get(gid) {
                if let Some((_, pb)) = ps.iter().find(|(id, _)| id == pid) {
                    if iou(gb, pb) >= iou_thr {
                        matched.insert(*gid, *pid);
                        used_pred.insert(*pid);
                    }
                }
            }
        }
        let rg: Vec<(u32, BoundedBox)> = gs
            .iter()
            .filter(|(id, _)| !matched.contains_key(id))
            .copied()
            .collect();
        let rp: Vec<(u32, BoundedBox)> = ps
            .iter()
            .filter(|(id, _)| !used_pred.contains(id))
            .copied()
            .collect();
        for (r, col) in match_gated(&iou_matrix(&rg, &rp), rg.len(), rp.len(), iou_thr)? {
            matched.insert(rg[r].0, rp[col].0);
        }
        for (gid, pid) in &matched {
            if last.get(gid).is_some_and(|l| l != pid) {
                c.id_switches += 1;
            }
            last.insert(*gid, *pid);
        }
        c.matches += matched.len();
        c.fn_ += gs.len() - matched.len();
        c.fp += ps.len() - matched.len();
        prev = matched;
    }
    Ok(c)
}

pub fn clear_metrics(gt: &[Track], pred: &[Track], iou_thr: f64) -> Result<ClearScores> {
    let c = clear_counts(gt, pred, iou_thr)?;
    Ok(ClearScores {
        fn_: c.fn_,
        fp: c.fp,
        id_switches: c.id_switches,
        mota: c.mota(),
    })
}

/// Trajectory-level identity counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IdCounts {
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

impl IdCounts {
    pub fn merge(&mut self, o: &IdCounts) {
        self.idtp += o.idtp;
        self.idfp += o.idfp;
        self.idfn += o.idfn;
    }

    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    }

    pub fn scores(&self) -> IdScores {
        IdScores {
            idp: Self::ratio(self.idtp, self.idtp + self.idfp),
            idr: Self::ratio(self.idtp, self.idtp + self.idfn),
            idf1: Self::ratio(2 * self.idtp, 2 * self.idtp + self.idfp + self.idfn),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdScores {
    pub idp: f64,
    pub idr: f64,
    pub idf1: f64,
}

/// Global one-to-one matching of ground-truth to predicted trajectories
/// maximizing the number of co-located frames (`IoU >= iou_thr`). Returns
/// the counts and the matched `(gt_id, pred_id)` pairs.
pub fn id_matching(
    gt: &[Track],
    pred: &[Track],
    iou_thr: f64,
) -> Result<(IdCounts, Vec<(u32, u32)>)> {
    let gt_total: usize = gt.iter().map(Track::len).sum();
    let pred_total: usize = pred.iter().map(Track::len).sum();
    let (n, m) = (gt.len(), pred.len());
    let mut tp = vec![0usize; n * m];
    for (i, g) in gt.iter().enumerate() {
        for (j, p) in pred.iter().enumerate() {
            tp[i * m + j] = g
                .boxes
                .iter()
                .filter(|gb| {
                    p.at_frame(gb.frame)
                        .is_some_and(|pb| iou(gb, pb) >= iou_thr)
                })
                .count();
        }
    }
    let mut idtp = 0;
    let mut pairs = Vec::new();
    if n > 0 && m > 0 {
        let cost: Vec<f64> = tp.iter().map(|&v| -(v as f64)).collect();
        for (i, j) in hungarian(&cost, n, m)?.pairs {
            if tp[i * m + j] > 0 {
                idtp += tp[i * m + j];
                pairs.push((gt[i].track_id, pred[j].track_id));
            }
        }
    }
    pairs.sort();
    Ok((
        IdCounts {
            idtp,
            idfp: pred_total - idtp,
            idfn: gt_total - idtp,
        },
        pairs,
    ))
}

pub fn id_metrics(gt: &[Track], pred: &[Track], iou_thr: f64) -> Result<IdScores> {
    Ok(id_matching(gt, pred, iou_thr)?.0.scores())
}

/// HOTA sums for one threshold, additive across videos.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HotaAlphaCounts {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    /// Sum over true positives of their pair's association score.
    pub ass_sum: f64,
    pub iou_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HotaCounts {
    pub alphas: Vec<f64>,
    pub per_alpha: Vec<HotaAlphaCounts>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotaScores {
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub loc_a: f64,
}

impl HotaCounts {
    pub fn empty(alphas: &[f64]) -> Self {
        Self {
            alphas: alphas.to_vec(),
            per_alpha: vec![HotaAlphaCounts::default(); alphas.len()],
        }
    }

    pub fn merge(&mut self, o: &HotaCounts) {
        for (a, b) in self.per_alpha.iter_mut().zip(&o.per_alpha) {
            a.tp += b.tp;
            a.fn_ += b.fn_;
            a.fp += b.fp;
            a.ass_sum += b.ass_sum;
            a.iou_sum += b.iou_sum;
        }
    }

    /// Per-threshold `DetA = TP / (TP + FN + FP)`, `AssA = mean A(c)` over
    /// true positives and `HOTA = sqrt(DetA AssA)`, each averaged over
    /// thresholds. LocA is the mean IoU over all true positives of all
    /// thresholds. Everything in percent.
    pub fn scores(&self) -> HotaScores {
        let k = self.per_alpha.len().max(1) as f64;
        let (mut h, mut d, mut a) = (0.0, 0.0, 0.0);
        let (mut iou_sum, mut tps) = (0.0, 0usize);
        for c in &self.per_alpha {
            let den = c.tp + c.fn_ + c.fp;
            let det = if den == 0 {
                0.0
            } else {
                c.tp as f64 / den as f64
            };
            let ass = if c.tp == 0 {
                0.0
            } else {
                c.ass_sum / c.tp as f64
            };
            h += (det * ass).sqrt();
            d += det;
            a += ass;
            iou_sum += c.iou_sum;
            tps += c.tp;
        }
        HotaScores {
            hota: 100.0 * h / k,
            det_a: 100.0 * d / k,
            ass_a: 100.0 * a / k,
            loc_a: if tps == 0 {
                0.0
            } else {
                100.0 * iou_sum / tps as f64
            },
        }
    }
}

pub fn hota_counts(gt: &[Track], pred: &[Track], alphas: &[f64]) -> Result<HotaCounts> {
    let g = by_frame(gt);
    let p = by_frame(pred);
    let gt_len: BTreeMap<u32, usize> = gt.iter().map(|t| (t.track_id, t.len())).collect();
    let pred_len: BTreeMap<u32, usize> = pred.iter().map(|t| (t.track_id, t.len())).collect();
    let frames = frames_of(&g, &p);
    let empty = Vec::new();
    let mut out = HotaCounts::empty(alphas);
    for (ai, &alpha) in alphas.iter().enumerate() {
        let mut pair_tp: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        let mut counts = HotaAlphaCounts::default();
        for f in &frames {
            let gs = g.get(f).unwrap_or(&empty);
            let ps = p.get(f).unwrap_or(&empty);
            let ious = iou_matrix(gs, ps);
            let matched = match_gated(&ious, gs.len(), ps.len(), alpha)?;
            for &(r, c) in &matched {
                *pair_tp.entry((gs[r].0, ps[c].0)).or_default() += 1;
                counts.iou_sum += ious[r * ps.len() + c];
            }
            counts.tp += matched.len();
            counts.fn_ += gs.len() - matched.len();
            counts.fp += ps.len() - matched.len();
        }
        for ((gid, pid), tpa) in &pair_tp {
            let fna = gt_len[gid] - tpa;
            let fpa = pred_len[pid] - tpa;
            let score = *tpa as f64 / (tpa + fna + fpa) as f64;
            counts.ass_sum += score * *tpa as f64;
        }
        out.per_alpha[ai] = counts;
    }
    Ok(out)
}

pub fn hota(gt: &[Track], pred: &[Track], alphas: &[f64]) -> Result<HotaScores> {
    Ok(hota_counts(gt, pred, alphas)?.scores())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_hota_alphas;

    fn track(id: u32, frames: std::ops::RangeInclusive<u32>, x: f64) -> Track {
        Track::new(
            id,
            frames
                .map(|f| BoundedBox::new(f, x + f as f64, 10.0, 20.0, 40.0, 1.0))
                .collect(),
        )
    }

    #[test]
    fn perfect_prediction() {
        let gt = vec![track(1, 1..=10, 0.0), track(2, 3..=8, 200.0)];
        let c = clear_metrics(&gt, &gt, 0.5).unwrap();
        assert_eq!((c.fn_, c.fp, c.id_switches, c.mota), (0, 0, 0, Some(100.0)));
        assert_eq!(id_metrics(&gt, &gt, 0.5).unwrap().idf1, 100.0);
        let h = hota(&gt, &gt, &default_hota_alphas()).unwrap();
        assert_eq!(
            (h.hota, h.det_a, h.ass_a, h.loc_a),
            (100.0, 100.0, 100.0, 100.0)
        );
    }

    #[test]
    fn empty_prediction() {
        let gt = vec![track(1, 1..=10, 0.0)];
        let c = clear_metrics(&gt, &[], 0.5).unwrap();
        assert_eq!((c.fn_, c.mota), (10, Some(0.0)));
        let id = id_metrics(&gt, &[], 0.5).unwrap();
        assert_eq!((id.idf1, id.idr), (0.0, 0.0));
        assert_eq!(hota(&gt, &[], &default_hota_alphas()).unwrap().hota, 0.0);
    }

    #[test]
    fn split_identity_counts_one_switch() {
        let gt = vec![track(1, 1..=10, 0.0)];
        let pred = vec![track(5, 1..=5, 0.0), track(6, 6..=10, 0.0)];
        let c = clear_metrics(&gt, &pred, 0.5).unwrap();
        assert_eq!((c.fn_, c.fp, c.id_switches), (0, 0, 1));
        assert_eq!(c.mota, Some(90.0));
    }

    #[test]
    fn partial_coverage_idf1() {
        let gt = vec![track(1, 1..=10, 0.0)];
        let pred = vec![track(3, 1..=5, 0.0)];
        let (counts, pairs) = id_matching(&gt, &pred, 0.5).unwrap();
        assert_eq!(
            counts,
            IdCounts {
                idtp: 5,
                idfp: 0,
                idfn: 5
            }
        );
        assert_eq!(pairs, vec![(1, 3)]);
        assert!((counts.scores().idf1 - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn predictions_without_gt() {
        let c = clear_metrics(&[], &[track(1, 1..=3, 0.0)], 0.5).unwrap();
        assert_eq!((c.fp, c.mota), (3, None));
    }

    #[test]
    fn hota_split_track_by_hand() {
        // One GT track over 4 frames, predicted as two halves. Every alpha
        // matches all frames: DetA = 1, each pair has A = 2 / 4.
        let gt = vec![track(1, 1..=4, 0.0)];
        let pred = vec![track(7, 1..=2, 0.0), track(8, 3..=4, 0.0)];
        let h = hota(&gt, &pred, &[0.5]).unwrap();
        assert!((h.det_a - 100.0).abs() < 1e-12);
        assert!((h.ass_a - 50.0).abs() < 1e-12);
        assert!((h.hota - 50f64.sqrt() * 10.0).abs() < 1e-9);
    }
}
