use std::collections::BTreeMap;

use crate::autodiff::{Graph, Var};
use crate::checkpoint::ParamGroup;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;
use crate::types::FeatureSequence;

use super::{bind_group, group_grads, init_weight};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Recursive video context:
/// `F_i = LayerNorm(F_{i-1} + MHA(q = F_{i-1} wq^T, k = T wk^T, v = T wv^T))`
/// where `T` holds the frame's tokens and MHA ends with the projection `wo`.
/// Tokens are per-track feature rows mapped through `token_proj`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFusionParams {
    pub token_proj: Matrix,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub gamma: Matrix,
    pub beta: Matrix,
    pub f0: Matrix,
    pub heads: usize,
}

impl ParamGroup for VideoFusionParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("token_proj", &self.token_proj),
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("gamma", &self.gamma),
            ("beta", &self.beta),
            ("f0", &self.f0),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("token_proj", &mut self.token_proj),
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
            ("wo", &mut self.wo),
            ("gamma", &mut self.gamma),
            ("beta", &mut self.beta),
            ("f0", &mut self.f0),
        ]
    }
}

impl VideoFusionParams {
    pub fn init(cfg: &RunConfig, rng: &mut SeededRng) -> Self {
        let (c, d) = (cfg.context_dim, cfg.feat_dim);
        Self {
            token_proj: init_weight(c, d, rng),
            wq: init_weight(c, c, rng),
            wk: init_weight(c, c, rng),
            wv: init_weight(c, c, rng),
            wo: init_weight(c, c, rng),
            gamma: Matrix::filled(1, c, 1.0),
            beta: Matrix::zeros(1, c),
            f0: Matrix::zeros(1, c),
            heads: cfg.mha_heads,
        }
    }

    pub fn context_dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn initial_state(&self) -> VideoContextState {
        VideoContextState {
            f: self.f0.data().to_vec(),
            frames_consumed: 0,
        }
    }

    pub fn bind(&self, g: &mut Graph) -> VideoVars {
        let v = bind_group(g, self);
        VideoVars {
            token_proj: v[0],
            wq: v[1],
            wk: v[2],
            wv: v[3],
            wo: v[4],
            gamma: v[5],
            beta: v[6],
            f0: v[7],
            heads: self.heads,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VideoVars {
    pub token_proj: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub gamma: Var,
    pub beta: Var,
    pub f0: Var,
    pub heads: usize,
}

impl VideoVars {
    pub fn all(&self) -> [Var; 8] {
        [
            self.token_proj,
            self.wq,
            self.wk,
            self.wv,
            self.wo,
            self.gamma,
            self.beta,
            self.f0,
        ]
    }

    /// Map `m x d` feature rows to `m x context_dim` tokens.
    pub fn tokens(&self, g: &mut Graph, rows: Var) -> Var {
        g.matmul_t(rows, self.token_proj)
    }

    /// One recursion step. Returns the new state and each head's `1 x m`
    /// attention row.
    pub fn step(&self, g: &mut Graph, state: Var, tokens: Var) -> (Var, Vec<Var>) {
        let c = g.value(state).cols();
        let dh = c / self.heads;
        let q = g.matmul_t(state, self.wq);
        let k = g.matmul_t(tokens, self.wk);
        let v = g.matmul_t(tokens, self.wv);
        let mut outs = Vec::with_capacity(self.heads);
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let s = g.matmul_t(qh, kh);
            let s = g.scale(s, 1.0 / (dh as f64).sqrt());
            let a = g.softmax(s, false);
            outs.push(g.matmul(a, vh));
            attn.push(a);
        }
        let heads = g.concat_cols(&outs);
        let mixed = g.matmul_t(heads, self.wo);
        let resid = g.add(state, mixed);
        (
            g.layer_norm(resid, self.gamma, self.beta, LAYER_NORM_EPS),
            attn,
        )
    }

    /// Left fold of [`VideoVars::step`] from `f0`.
    pub fn run(&self, g: &mut Graph, frames: &[Var]) -> Var {
        frames
            .iter()
            .fold(self.f0, |state, &tokens| self.step(g, state, tokens).0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoContextState {
    pub f: Vec<f64>,
    pub frames_consumed: usize,
}

/// One step plus the per-head attention weights over the frame's tokens.
pub fn video_context_step_detailed(
    state: &VideoContextState,
    frame_tokens: &Matrix,
    p: &VideoFusionParams,
) -> (VideoContextState, Vec<Vec<f64>>) {
    let mut g = Graph::new();
    let vars = p.bind(&mut g);
    let s = g.leaf(Matrix::row_vector(&state.f));
    let t = g.leaf(frame_tokens.clone());
    let (next, attn) = vars.step(&mut g, s, t);
    (
        VideoContextState {
            f: g.value(next).data().to_vec(),
            frames_consumed: state.frames_consumed + 1,
        },
        attn.iter().map(|a| g.value(*a).data().to_vec()).collect(),
    )
}

pub fn video_context_step(
    state: &VideoContextState,
    frame_tokens: &Matrix,
    p: &VideoFusionParams,
) -> VideoContextState {
    video_context_step_detailed(state, frame_tokens, p).0
}

pub fn video_context_run(frames: &[Matrix], p: &VideoFusionParams) -> Result<VideoContextState> {
    if frames.is_empty() {
        return Err(Error::NoFrames);
    }
    Ok(frames
        .iter()
        .fold(p.initial_state(), |s, t| video_context_step(&s, t, p)))
}

/// Per-frame stacks of raw feature rows, frames ascending, tracks ordered by
/// id within a frame. Frames with no tracks produce nothing.
pub fn frame_feature_rows(seqs: &[FeatureSequence]) -> Vec<(u32, Matrix)> {
    let mut sorted: Vec<&FeatureSequence> = seqs.iter().collect();
    sorted.sort_by_key(|s| s.track_id);
    let d = sorted.first().map_or(0, |s| s.dim());
    let mut rows: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for s in sorted {
        for (k, frame) in s.frames.iter().enumerate() {
            rows.entry(*frame)
                .or_default()
                .extend_from_slice(s.feats.row(k));
        }
    }
    rows.into_iter()
        .map(|(frame, data)| (frame, Matrix::from_vec(data.len() / d, d, data)))
        .collect()
}

/// [`frame_feature_rows`] projected through `token_proj`.
pub fn frame_tokens(seqs: &[FeatureSequence], p: &VideoFusionParams) -> Vec<(u32, Matrix)> {
    let proj_t = p.token_proj.transpose();
    frame_feature_rows(seqs)
        .into_iter()
        .map(|(frame, rows)| (frame, rows.matmul(&proj_t)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoBackward {
    /// Gradients for every recursion tensor; `token_proj` is zero because
    /// tokens are inputs here.
    pub params: VideoFusionParams,
    pub frames: Vec<Matrix>,
}

/// Gradients of `<upstream, F_n>` for the recursion over `frames`.
pub fn video_context_backward(
    frames: &[Matrix],
    p: &VideoFusionParams,
    upstream: &[f64],
) -> Result<VideoBackward> {
    if frames.is_empty() {
        return Err(Error::NoFrames);
    }
    let mut g = Graph::new();
    let vars = p.bind(&mut g);
    let inputs: Vec<Var> = frames.iter().map(|f| g.leaf(f.clone())).collect();
    let out = vars.run(&mut g, &inputs);
    let grads = g.backward_with(out, Matrix::row_vector(upstream));
    Ok(VideoBackward {
        params: group_grads(p, &vars.all(), &grads),
        frames: inputs
            .iter()
            .zip(frames)
            .map(|(v, f)| grads.get_or_zeros(*v, f))
            .collect(),
    })
}
