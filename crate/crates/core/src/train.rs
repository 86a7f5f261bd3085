//! Three-stage training with per-stage parameter freezing and full-batch
//! gradient descent.
//!
//! 1. Alignment: projected pooled track features regress onto the frozen
//!    token embedding of the track's motion word.
//! 2. Association: a throwaway logistic head on `[h_rel; F_n]` separates
//!    interacting from independent ordered pairs, training the fusion
//!    module end to end.
//! 3. Captioning: next-token loss of summaries and instance captions given
//!    projected prefixes; only adapters and projections move.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::autodiff::{Gradients, Graph, Var};
use crate::bundle::{GroupId, ModelBundle};
use crate::checkpoint::ParamGroup;
use crate::config::{RunConfig, END_TOKEN, INSTANCE_TOKEN, SUMMARY_TOKEN, UNK_TOKEN};
use crate::error::{Error, Result};
use crate::fusion::{frame_feature_rows, group_grads};
use crate::linalg::Matrix;
use crate::pipeline::{fuse_video, FusionToggles};
use crate::reasoner::{tokenize, PrefixSources};
use crate::rng::SeededRng;
use crate::types::{FeatureSequence, SemanticRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Alignment,
    Association,
    Captioning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub stage: u8,
    pub frozen: BTreeSet<GroupId>,
    pub objective: Objective,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl StagePlan {
    pub fn new(stage: u8, steps: usize, lr: f64, seed: u64) -> Result<Self> {
        use GroupId::*;
        let (frozen, objective): (&[GroupId], Objective) = match stage {
            1 => (&[ToylmBase, Lora], Objective::Alignment),
            2 => (&[Projector, ToylmBase, Lora], Objective::Association),
            3 => (
                &[FusionInstance, FusionVideo, ToylmBase],
                Objective::Captioning,
            ),
            other => return Err(Error::Stage(format!("no stage {other}"))),
        };
        Ok(Self {
            stage,
            frozen: frozen.iter().copied().collect(),
            objective,
            steps,
            lr,
            seed,
        })
    }

    pub fn trains(&self, g: GroupId) -> bool {
        !self.frozen.contains(&g)
    }
}

/// A track's feature sequence and the token its pooled feature should map to.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentExample {
    pub seq: FeatureSequence,
    pub concept: usize,
}

/// All tracks of one video plus labeled ordered pairs (indices into `seqs`).
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationExample {
    pub seqs: Vec<FeatureSequence>,
    pub pairs: Vec<(usize, usize, bool)>,
}

/// A prefix and the sentence that should follow `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionExample {
    pub sources: PrefixSources,
    pub start: usize,
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageData {
    Alignment(Vec<AlignmentExample>),
    Association(Vec<AssociationExample>),
    Captioning(Vec<CaptionExample>),
}

impl StageData {
    fn objective(&self) -> Objective {
        match self {
            StageData::Alignment(_) => Objective::Alignment,
            StageData::Association(_) => Objective::Association,
            StageData::Captioning(_) => Objective::Captioning,
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            StageData::Alignment(v) => v.is_empty(),
            StageData::Association(v) => v.is_empty(),
            StageData::Captioning(v) => v.is_empty(),
        }
    }
}

/// `p - lr * g`.
pub fn sgd_step(params: &Matrix, grads: &Matrix, lr: f64) -> Result<Matrix> {
    if params.shape() != grads.shape() {
        return Err(Error::Shape(format!(
            "parameter {:?} vs gradient {:?}",
            params.shape(),
            grads.shape()
        )));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok(params.zip_map(grads, |p, g| p - lr * g))
}

fn apply<P: ParamGroup + Clone>(
    group: &mut P,
    vars: &[Var],
    grads: &Gradients,
    lr: f64,
) -> Result<()> {
    let g = group_grads(group, vars, grads);
    for ((_, p), (_, d)) in group.tensors_mut().into_iter().zip(g.tensors()) {
        *p = sgd_step(p, d, lr)?;
    }
    Ok(())
}

struct Bound {
    projector: crate::reasoner::ProjectorVars,
    inst: crate::fusion::InstanceVars,
    video: crate::fusion::VideoVars,
    lm: crate::reasoner::LmVars,
}

impl Bound {
    fn new(g: &mut Graph, b: &ModelBundle) -> Self {
        Self {
            projector: b.projector.bind(g),
            inst: b.fusion_instance.bind(g),
            video: b.fusion_video.bind(g),
            lm: b.toylm.bind(g, Some(&b.lora)),
        }
    }
}

fn mean(g: &mut Graph, terms: Vec<Var>) -> Var {
    let n = terms.len() as f64;
    let total = terms
        .into_iter()
        .reduce(|a, b| g.add(a, b))
        .expect("at least one loss term");
    g.scale(total, 1.0 / n)
}

fn alignment_loss(g: &mut Graph, v: &Bound, data: &[AlignmentExample]) -> Var {
    let embed = v.lm.base[0];
    let terms = data
        .iter()
        .map(|ex| {
            let feats = g.leaf(ex.seq.feats.clone());
            let (_, pooled) = v.inst.attend(g, feats);
            let projected = v
                .projector
                .project(g, crate::reasoner::PrefixKind::Instance, pooled);
            let target = g.gather(embed, &[ex.concept]);
            let diff = g.sub(projected, target);
            let sq = g.mul(diff, diff);
            let s = g.sum(sq);
            let e = g.value(diff).cols() as f64;
            g.scale(s, 1.0 / e)
        })
        .collect();
    mean(g, terms)
}

fn association_loss(
    g: &mut Graph,
    v: &Bound,
    head: (Var, Var),
    data: &[AssociationExample],
) -> Var {
    let mut logits = Vec::new();
    let mut targets = Vec::new();
    for ex in data {
        let frames: Vec<Var> = frame_feature_rows(&ex.seqs)
            .into_iter()
            .map(|(_, rows)| {
                let r = g.leaf(rows);
                v.video.tokens(g, r)
            })
            .collect();
        let context = v.video.run(g, &frames);
        let pooled: Vec<Var> = ex
            .seqs
            .iter()
            .map(|s| {
                let f = g.leaf(s.feats.clone());
                v.inst.attend(g, f).1
            })
            .collect();
        for &(i, j, label) in &ex.pairs {
            let h = v.inst.relate(g, pooled[i], pooled[j]);
            let x = g.concat_cols(&[h, context]);
            logits.push(g.linear(x, head.0, head.1));
            targets.push(if label { 1.0 } else { 0.0 });
        }
    }
    let z = g.concat_rows(&logits);
    g.bce_with_logits(z, &targets)
}

fn caption_loss(g: &mut Graph, v: &Bound, data: &[CaptionExample], end: usize) -> Var {
    let terms = data
        .iter()
        .map(|ex| {
            let prefix = ex.sources.bind(g, &v.projector);
            let mut input = vec![ex.start];
            input.extend(&ex.target);
            let mut targets = ex.target.clone();
            targets.push(end);
            let logits = v.lm.forward(g, Some(prefix), &input);
            g.cross_entropy(logits, &targets)
        })
        .collect();
    mean(g, terms)
}

/// Runs one stage. Returns the updated bundle and the loss before each
/// update. Frozen groups are never written; `steps == 0` returns the input
/// unchanged.
pub fn run_stage(
    plan: &StagePlan,
    bundle: &ModelBundle,
    data: &StageData,
    cfg: &RunConfig,
) -> Result<(ModelBundle, Vec<f64>)> {
    if data.objective() != plan.objective {
        return Err(Error::Stage(format!(
            "stage {} expects {:?} data, got {:?}",
            plan.stage,
            plan.objective,
            data.objective()
        )));
    }
    if data.is_empty() {
        return Err(Error::Stage(format!(
            "stage {} has no training examples",
            plan.stage
        )));
    }
    let end = cfg
        .token_id(END_TOKEN)
        .ok_or_else(|| Error::Config("vocab lacks end token".into()))?;
    let mut model = bundle.clone();
    let mut rng = SeededRng::new(plan.seed);
    let head_in = model.fusion_instance.relation_dim() + model.fusion_video.context_dim();
    let bound = 1.0 / (head_in as f64).sqrt();
    let mut head_w = Matrix::uniform(1, head_in, bound, &mut rng);
    let mut head_b = Matrix::zeros(1, 1);
    let mut curve = Vec::with_capacity(plan.steps);
    for _ in 0..plan.steps {
        let mut g = Graph::new();
        let v = Bound::new(&mut g, &model);
        let hw = g.leaf(head_w.clone());
        let hb = g.leaf(head_b.clone());
        let loss = match data {
            StageData::Alignment(d) => alignment_loss(&mut g, &v, d),
            StageData::Association(d) => association_loss(&mut g, &v, (hw, hb), d),
            StageData::Captioning(d) => caption_loss(&mut g, &v, d, end),
        };
        let value = g.value(loss)[(0, 0)];
        if !value.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        curve.push(value);
        let grads = g.backward(loss);
        if plan.trains(GroupId::Projector) {
            apply(&mut model.projector, &v.projector.vars, &grads, plan.lr)?;
        }
        if plan.trains(GroupId::FusionInstance) {
            apply(&mut model.fusion_instance, &v.inst.all(), &grads, plan.lr)?;
        }
        if plan.trains(GroupId::FusionVideo) {
            apply(&mut model.fusion_video, &v.video.all(), &grads, plan.lr)?;
        }
        if plan.trains(GroupId::ToylmBase) {
            apply(&mut model.toylm, &v.lm.base, &grads, plan.lr)?;
        }
        if plan.trains(GroupId::Lora) {
            apply(&mut model.lora, &v.lm.lora_vars(), &grads, plan.lr)?;
        }
        if plan.objective == Objective::Association {
            head_w = sgd_step(&head_w, &grads.get_or_zeros(hw, &head_w), plan.lr)?;
            head_b = sgd_step(&head_b, &grads.get_or_zeros(hb, &head_b), plan.lr)?;
        }
    }
    Ok((model, curve))
}

pub fn curve_csv(curve: &[f64]) -> Vec<u8> {
    let mut out = String::from("step,loss\n");
    for (i, l) in curve.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    out.into_bytes()
}

/// One video's training material: feature sequences of its tracks and its
/// semantic record.
#[derive(Debug, Clone, Copy)]
pub struct TrainingVideo<'a> {
    pub features: &'a [FeatureSequence],
    pub semantics: &'a SemanticRecord,
}

/// The caption word right after "person" (the motion verb for generated
/// captions), else the last word.
fn concept_token(caption: &str, cfg: &RunConfig) -> usize {
    let ids = tokenize(caption, cfg);
    let person = cfg.token_id("person");
    let pos = ids.iter().position(|&t| Some(t) == person);
    match pos {
        Some(p) if p + 1 < ids.len() => ids[p + 1],
        _ => ids
            .last()
            .copied()
            .unwrap_or_else(|| cfg.token_id(UNK_TOKEN).unwrap_or(0)),
    }
}

pub fn alignment_data(videos: &[TrainingVideo<'_>], cfg: &RunConfig) -> StageData {
    let mut out = Vec::new();
    for v in videos {
        for s in v.features {
            if let Some(c) = v.semantics.instance_captions.get(&s.track_id) {
                out.push(AlignmentExample {
                    seq: s.clone(),
                    concept: concept_token(c, cfg),
                });
            }
        }
    }
    StageData::Alignment(out)
}

/// Every ordered pair of tracks, positive when the ground truth links the
/// two tracks by any interaction in either direction.
pub fn association_data(videos: &[TrainingVideo<'_>]) -> StageData {
    let mut out = Vec::new();
    for v in videos {
        let mut seqs = v.features.to_vec();
        seqs.sort_by_key(|s| s.track_id);
        let linked: BTreeSet<(u32, u32)> = v
            .semantics
            .interactions
            .iter()
            .flat_map(|i| [(i.subject, i.object), (i.object, i.subject)])
            .collect();
        let mut pairs = Vec::new();
        for i in 0..seqs.len() {
            for j in 0..seqs.len() {
                if i != j {
                    pairs.push((i, j, linked.contains(&(seqs[i].track_id, seqs[j].track_id))));
                }
            }
        }
        if !pairs.is_empty() {
            out.push(AssociationExample { seqs, pairs });
        }
    }
    StageData::Association(out)
}

/// Fused prefix sources of one video under `bundle` and the track ids of
/// its instance rows.
pub fn video_sources(
    features: &[FeatureSequence],
    bundle: &ModelBundle,
) -> Result<(PrefixSources, Vec<u32>)> {
    let fused = fuse_video(
        features,
        &bundle.fusion_instance,
        &bundle.fusion_video,
        FusionToggles::BOTH,
    )?;
    Ok((
        fused.sources(),
        fused.pooled.iter().map(|(id, _)| *id).collect(),
    ))
}

/// Per video: the summary given the full prefix, then each track's caption
/// given the context and that track's pooled feature.
pub fn caption_data(
    videos: &[TrainingVideo<'_>],
    bundle: &ModelBundle,
    cfg: &RunConfig,
) -> Result<StageData> {
    let sum = cfg
        .token_id(SUMMARY_TOKEN)
        .ok_or_else(|| Error::Config("vocab lacks summary token".into()))?;
    let inst = cfg
        .token_id(INSTANCE_TOKEN)
        .ok_or_else(|| Error::Config("vocab lacks instance token".into()))?;
    let limit = cfg.lm_max_tokens - 1;
    let mut out = Vec::new();
    for v in videos {
        if v.features.is_empty() {
            continue;
        }
        let (sources, ids) = video_sources(v.features, bundle)?;
        let mut summary = tokenize(&v.semantics.summary, cfg);
        summary.truncate(limit);
        out.push(CaptionExample {
            sources: sources.clone(),
            start: sum,
            target: summary,
        });
        for (k, id) in ids.iter().enumerate() {
            if let Some(c) = v.semantics.instance_captions.get(id) {
                let mut target = tokenize(c, cfg);
                target.truncate(limit);
                out.push(CaptionExample {
                    sources: PrefixSources {
                        context: sources.context.clone(),
                        instances: vec![sources.instances[k].clone()],
                        relations: Vec::new(),
                    },
                    start: inst,
                    target,
                });
            }
        }
    }
    Ok(StageData::Captioning(out))
}

/// Step counts and learning rates of the default schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub steps: [usize; 3],
    pub lr: [f64; 3],
}

impl Schedule {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            steps: [60, 60, 300],
            lr: [cfg.learning_rate, cfg.learning_rate, CAPTION_LR],
        }
    }
}

/// Default step size of the captioning stage.
pub const CAPTION_LR: f64 = 0.2;

/// Builds the data for `stage` from `videos` under the current bundle.
pub fn stage_data(
    stage: u8,
    videos: &[TrainingVideo<'_>],
    bundle: &ModelBundle,
    cfg: &RunConfig,
) -> Result<StageData> {
    match stage {
        1 => Ok(alignment_data(videos, cfg)),
        2 => Ok(association_data(videos)),
        3 => caption_data(videos, bundle, cfg),
        other => Err(Error::Stage(format!("no stage {other}"))),
    }
}

/// All three stages in order; stage `k` uses seed `seed ^ k`.
pub fn train_all(
    bundle: &ModelBundle,
    videos: &[TrainingVideo<'_>],
    cfg: &RunConfig,
    schedule: &Schedule,
    seed: u64,
) -> Result<(ModelBundle, Vec<Vec<f64>>)> {
    let mut model = bundle.clone();
    let mut curves = Vec::new();
    for stage in 1..=3u8 {
        let k = (stage - 1) as usize;
        let plan = StagePlan::new(
            stage,
            schedule.steps[k],
            schedule.lr[k],
            seed ^ stage as u64,
        )?;
        let data = stage_data(stage, videos, &model, cfg)?;
        let (next, curve) = run_stage(&plan, &model, &data, cfg)?;
        model = next;
        curves.push(curve);
    }
    Ok((model, curves))
}
