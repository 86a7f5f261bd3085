//! Language-side reasoning: prefix projection, the toy causal language
//! model with its adapters, and the template decoders used when no trained
//! model is available.

mod lm;
mod lora;
mod projector;

use std::collections::{BTreeMap, BTreeSet};

pub use lm::{clm_loss, generate, lm_forward, LmVars, LoraSet, ReasonerInput, ToyLm, LORA_TARGETS};
pub use lora::{lora_apply, lora_merge, LoraAdapter};
pub use projector::{project_prefix, PrefixKind, PrefixProjector, ProjectorVars};

use crate::autodiff::{Graph, Var};
use crate::config::{RunConfig, END_TOKEN, NO_INTERACTION, UNK_TOKEN};
use crate::error::{Error, Result};
use crate::fusion::RelationQuery;
use crate::linalg::Matrix;
use crate::types::{Interaction, Track};

/// Labels whose direction carries no meaning; stored with `subject < object`.
pub const SYMMETRIC_LABELS: [&str; 2] = ["pass_by", "talk_to"];

pub fn is_symmetric(label: &str) -> bool {
    SYMMETRIC_LABELS.contains(&label)
}

/// Puts symmetric interactions into `subject < object` form.
pub fn canonical(it: Interaction) -> Interaction {
    if is_symmetric(&it.label) && it.subject > it.object {
        Interaction::new(it.object, it.subject, it.label)
    } else {
        it
    }
}

/// Fused vectors that make up a language-model prefix, before projection:
/// the video context, then per-track pooled features, then relation queries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrefixSources {
    pub context: Vec<f64>,
    pub instances: Vec<Vec<f64>>,
    pub relations: Vec<Vec<f64>>,
}

impl PrefixSources {
    pub fn project(&self, p: &PrefixProjector) -> Result<ReasonerInput> {
        let mut t_emb = Vec::with_capacity(self.instances.len() + self.relations.len());
        for f in &self.instances {
            t_emb.push(p.project(PrefixKind::Instance, f)?);
        }
        for h in &self.relations {
            t_emb.push(p.project(PrefixKind::Relation, h)?);
        }
        Ok(ReasonerInput {
            i_context: p.project(PrefixKind::Video, &self.context)?,
            t_emb,
        })
    }

    /// Projected prefix rows inside a graph.
    pub fn bind(&self, g: &mut Graph, p: &ProjectorVars) -> Var {
        let mut parts = Vec::new();
        let ctx = g.leaf(Matrix::row_vector(&self.context));
        parts.push(p.project(g, PrefixKind::Video, ctx));
        if !self.instances.is_empty() {
            let x = g.leaf(Matrix::from_rows(&self.instances));
            parts.push(p.project(g, PrefixKind::Instance, x));
        }
        if !self.relations.is_empty() {
            let x = g.leaf(Matrix::from_rows(&self.relations));
            parts.push(p.project(g, PrefixKind::Relation, x));
        }
        if parts.len() == 1 {
            parts[0]
        } else {
            g.concat_rows(&parts)
        }
    }
}

/// Lowercase whitespace tokenization; unknown words map to `<unk>`.
pub fn tokenize(text: &str, cfg: &RunConfig) -> Vec<usize> {
    let unk = cfg.token_id(UNK_TOKEN).unwrap_or(0);
    text.split_whitespace()
        .map(|w| cfg.token_id(&w.to_lowercase()).unwrap_or(unk))
        .collect()
}

pub fn detokenize(ids: &[usize], cfg: &RunConfig) -> String {
    ids.iter()
        .filter_map(|&i| cfg.vocab.get(i))
        .filter(|w| w.as_str() != END_TOKEN)
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Nearest-prototype labeling of relation queries. `none` never appears in
/// the output; ties go to the lexicographically smallest label.
pub fn template_decode(
    queries: &[RelationQuery],
    prototypes: &BTreeMap<String, Vec<f64>>,
) -> Result<BTreeSet<Interaction>> {
    if prototypes.is_empty() {
        return Err(Error::Config("no interaction prototypes".into()));
    }
    let mut out = BTreeSet::new();
    for q in queries {
        let mut best: Option<(&str, f64)> = None;
        for (label, proto) in prototypes {
            if proto.len() != q.h.len() {
                return Err(Error::DimensionMismatch {
                    what: format!("prototype {label}"),
                    expected: q.h.len(),
                    found: proto.len(),
                });
            }
            let d: f64 = proto.iter().zip(&q.h).map(|(a, b)| (a - b) * (a - b)).sum();
            // BTreeMap order is lexicographic, so strict < keeps the first tie.
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((label, d));
            }
        }
        let (label, _) = best.expect("prototypes nonempty");
        if label != NO_INTERACTION {
            out.insert(canonical(Interaction::new(
                q.subject_id,
                q.object_id,
                label,
            )));
        }
    }
    Ok(out)
}

fn count_word(n: usize) -> &'static str {
    match n {
        1 => "one",
        2 => "two",
        3 => "three",
        4 => "four",
        5 => "five",
        6 => "six",
        _ => "many",
    }
}

fn verb_phrase(label: &str) -> Option<&'static str> {
    match label {
        "follow" => Some("follows"),
        "approach" => Some("approaches"),
        "pass_by" => Some("passes by"),
        "talk_to" => Some("talks to"),
        _ => None,
    }
}

/// Scene summary built from a head count and the interaction set, e.g.
/// `two people in the scene and one person follows another`.
pub fn summary_text(people: usize, interactions: &BTreeSet<Interaction>) -> String {
    let mut s = match people {
        0 => "the scene".to_string(),
        1 => "one person in the scene".to_string(),
        n => format!("{} people in the scene", count_word(n)),
    };
    for it in interactions {
        if let Some(v) = verb_phrase(&it.label) {
            s.push_str(&format!(" and one person {v} another"));
        }
    }
    s
}

/// Describes a track by its mean velocity: standing, walking or running in
/// the dominant compass direction (image y grows southwards).
pub fn canned_caption(track: &Track) -> String {
    let (Some(first), Some(last)) = (track.boxes.first(), track.boxes.last()) else {
        return "a person stands still".into();
    };
    let span = last.frame.saturating_sub(first.frame).max(1) as f64;
    let (x0, y0) = first.center();
    let (x1, y1) = last.center();
    let (vx, vy) = ((x1 - x0) / span, (y1 - y0) / span);
    let speed = vx.hypot(vy);
    if speed < 0.5 {
        return "a person stands still".into();
    }
    let verb = if speed < 4.0 { "walks" } else { "runs" };
    let dir = if vx.abs() >= vy.abs() {
        if vx >= 0.0 {
            "east"
        } else {
            "west"
        }
    } else if vy >= 0.0 {
        "south"
    } else {
        "north"
    };
    format!("a person {verb} {dir}")
}
