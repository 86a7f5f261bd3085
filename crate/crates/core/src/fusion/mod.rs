//! Spatio-temporal fusion: per-track temporal attention pooling, pairwise
//! relation queries, and a recursive multi-head video context.

mod instance;
mod video;

pub use instance::{
    relation_queries, relation_query, relation_query_backward, temporal_attention,
    temporal_attention_backward, InstanceFusionParams, InstanceVars, RelationBackward,
    RelationQuery, TemporalAttention, TemporalBackward,
};
pub use video::{
    frame_feature_rows, frame_tokens, video_context_backward, video_context_run,
    video_context_step, video_context_step_detailed, VideoBackward, VideoContextState,
    VideoFusionParams, VideoVars, LAYER_NORM_EPS,
};

use crate::autodiff::{Gradients, Graph, Var};
use crate::checkpoint::ParamGroup;
use crate::linalg::Matrix;
use crate::rng::SeededRng;

/// `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub(crate) fn init_weight(rows: usize, fan_in: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::uniform(rows, fan_in, 1.0 / (fan_in as f64).sqrt(), rng)
}

pub(crate) fn init_bias(len: usize, fan_in: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::uniform(1, len, 1.0 / (fan_in as f64).sqrt(), rng)
}

/// Bind every tensor of a group as graph leaves, in `tensors()` order.
pub fn bind_group(g: &mut Graph, group: &impl ParamGroup) -> Vec<Var> {
    group
        .tensors()
        .into_iter()
        .map(|(_, m)| g.leaf(m.clone()))
        .collect()
}

/// Gradients for a group bound with [`bind_group`], as a same-shaped group.
pub fn group_grads<P: ParamGroup + Clone>(group: &P, vars: &[Var], grads: &Gradients) -> P {
    let mut out = group.clone();
    for ((_, m), v) in out.tensors_mut().into_iter().zip(vars) {
        *m = grads.get_or_zeros(*v, m);
    }
    out
}
