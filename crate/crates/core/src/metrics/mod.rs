//! Tracking, caption and interaction scores, and their aggregation over a
//! set of videos.

mod interaction;
mod report;
mod text;
mod tracking;

use std::collections::{BTreeMap, BTreeSet};

pub use interaction::{interaction_prf, InteractionCounts, Prf, PrfCounts};
pub use report::{
    render_ablation, render_report, semantic_cells, tracking_cells, AblationRow, ReportFormat,
    SemanticScores, TextScores, TrackingScores, ABLATION_COLUMNS, SEMANTIC_COLUMNS,
    TRACKING_COLUMNS,
};
pub use text::{
    bleu4, cider, meteor_alignment, meteor_lite, rouge_l, stem, tokenize_text, BLEU_EPS,
    METEOR_MAX_REF, ROUGE_BETA,
};
pub use tracking::{
    clear_counts, clear_metrics, hota, hota_counts, id_matching, id_metrics, ClearCounts,
    ClearScores, HotaAlphaCounts, HotaCounts, HotaScores, IdCounts, IdScores,
};

use crate::config::RunConfig;
use crate::error::Result;
use crate::reasoner::canonical;
use crate::types::{Interaction, SemanticRecord, Track};

/// Ground truth and prediction for one video.
#[derive(Debug, Clone, Copy)]
pub struct VideoEval<'a> {
    pub gt_tracks: &'a [Track],
    pub gt_semantics: &'a SemanticRecord,
    pub pred_tracks: &'a [Track],
    pub pred_semantics: &'a SemanticRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub tracking: TrackingScores,
    pub semantic: SemanticScores,
}

/// Rewrites predicted interactions into ground-truth ids using the
/// trajectory matching; tuples touching unmatched tracks get id 0, which no
/// ground-truth track carries.
pub fn map_interactions(
    pred: &BTreeSet<Interaction>,
    pred_to_gt: &BTreeMap<u32, u32>,
) -> BTreeSet<Interaction> {
    let map = |id: u32| pred_to_gt.get(&id).copied().unwrap_or(0);
    pred.iter()
        .map(|it| {
            canonical(Interaction::new(
                map(it.subject),
                map(it.object),
                it.label.clone(),
            ))
        })
        .collect()
}

#[derive(Default)]
struct TextAcc {
    bleu: f64,
    rouge: f64,
    meteor: f64,
    n: usize,
    cands: BTreeMap<(usize, u32), Vec<String>>,
    refs: BTreeMap<(usize, u32), Vec<Vec<String>>>,
}

impl TextAcc {
    fn add(&mut self, key: (usize, u32), candidate: &str, reference: &str) {
        let c = tokenize_text(candidate);
        let r = tokenize_text(reference);
        self.bleu += bleu4(&c, std::slice::from_ref(&r));
        self.rouge += rouge_l(&c, &r);
        self.meteor += meteor_lite(&c, &r);
        self.n += 1;
        self.cands.insert(key, c);
        self.refs.insert(key, vec![r]);
    }

    fn scores(&self) -> TextScores {
        if self.n == 0 {
            return TextScores::default();
        }
        let n = self.n as f64;
        TextScores {
            bleu4: self.bleu / n,
            rouge_l: self.rouge / n,
            meteor: self.meteor / n,
            cider: cider(&self.cands, &self.refs),
        }
    }
}

/// Scores a set of videos. Tracking counts are pooled before the ratios are
/// taken; sentence metrics are averaged over sentences; CIDEr uses the
/// whole reference set of its task as the document collection. Predicted
/// instance captions and interactions are compared after mapping predicted
/// track ids to ground-truth ids through the identity matching; a
/// ground-truth track without a matched prediction scores an empty caption.
pub fn evaluate(videos: &[VideoEval<'_>], cfg: &RunConfig) -> Result<Evaluation> {
    let mut clear = ClearCounts::default();
    let mut ids = IdCounts::default();
    let mut hc = HotaCounts::empty(&cfg.hota_alphas);
    let mut inter = InteractionCounts::default();
    let mut summary = TextAcc::default();
    let mut instance = TextAcc::default();
    for (vi, v) in videos.iter().enumerate() {
        clear.merge(&clear_counts(v.gt_tracks, v.pred_tracks, cfg.match_iou)?);
        let (idc, pairs) = id_matching(v.gt_tracks, v.pred_tracks, cfg.match_iou)?;
        ids.merge(&idc);
        hc.merge(&hota_counts(v.gt_tracks, v.pred_tracks, &cfg.hota_alphas)?);
        let pred_to_gt: BTreeMap<u32, u32> = pairs.iter().map(|&(g, p)| (p, g)).collect();
        let gt_to_pred: BTreeMap<u32, u32> = pairs.iter().copied().collect();
        inter.add(
            &v.gt_semantics.interactions,
            &map_interactions(&v.pred_semantics.interactions, &pred_to_gt),
        );
        summary.add((vi, 0), &v.pred_semantics.summary, &v.gt_semantics.summary);
        for (gid, caption) in &v.gt_semantics.instance_captions {
            let cand = gt_to_pred
                .get(gid)
                .and_then(|p| v.pred_semantics.instance_captions.get(p))
                .map_or("", String::as_str);
            instance.add((vi, *gid), cand, caption);
        }
    }
    let h = hc.scores();
    let id = ids.scores();
    Ok(Evaluation {
        tracking: TrackingScores {
            hota: h.hota,
            det_a: h.det_a,
            ass_a: h.ass_a,
            loc_a: h.loc_a,
            fn_: clear.fn_,
            fp: clear.fp,
            id_switches: clear.id_switches,
            idr: id.idr,
            idp: id.idp,
            idf1: id.idf1,
            mota: clear.mota(),
        },
        semantic: SemanticScores {
            summary: summary.scores(),
            instance: instance.scores(),
            interaction: inter.micro(),
            macro_f1: inter.macro_f1(),
        },
    })
}
