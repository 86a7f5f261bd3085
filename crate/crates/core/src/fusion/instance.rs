use crate::autodiff::{Graph, Var};
use crate::checkpoint::ParamGroup;
use crate::config::{Activation, RunConfig};
use crate::linalg::Matrix;
use crate::rng::SeededRng;
use crate::types::FeatureSequence;

use super::{bind_group, group_grads, init_bias, init_weight};

/// Weights of the per-track attention scorer and the pairwise relation MLP.
///
/// Scorer: `score_k = w2 . tanh(w1 f_k + b1)`, `alpha = softmax(score)`.
/// Relation: `h = wf2 . act(wf1 [f_i; f_j] + bf1) + bf2`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFusionParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub wf1: Matrix,
    pub bf1: Matrix,
    pub wf2: Matrix,
    pub bf2: Matrix,
    pub activation: Activation,
}

impl ParamGroup for InstanceFusionParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("wf1", &self.wf1),
            ("bf1", &self.bf1),
            ("wf2", &self.wf2),
            ("bf2", &self.bf2),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("wf1", &mut self.wf1),
            ("bf1", &mut self.bf1),
            ("wf2", &mut self.wf2),
            ("bf2", &mut self.bf2),
        ]
    }
}

impl InstanceFusionParams {
    pub fn init(cfg: &RunConfig, rng: &mut SeededRng) -> Self {
        let (d, hid, rh, rd) = (
            cfg.feat_dim,
            cfg.hidden_dim,
            cfg.relation_hidden_dim,
            cfg.relation_dim,
        );
        Self {
            w1: init_weight(hid, d, rng),
            b1: init_bias(hid, d, rng),
            w2: init_weight(1, hid, rng),
            wf1: init_weight(rh, 2 * d, rng),
            bf1: init_bias(rh, 2 * d, rng),
            wf2: init_weight(rd, rh, rng),
            bf2: init_bias(rd, rh, rng),
            activation: cfg.relation_activation,
        }
    }

    pub fn feat_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn relation_dim(&self) -> usize {
        self.wf2.rows()
    }

    pub fn bind(&self, g: &mut Graph) -> InstanceVars {
        let v = bind_group(g, self);
        InstanceVars {
            w1: v[0],
            b1: v[1],
            w2: v[2],
            wf1: v[3],
            bf1: v[4],
            wf2: v[5],
            bf2: v[6],
            activation: self.activation,
        }
    }
}

/// [`InstanceFusionParams`] bound into a [`Graph`].
#[derive(Debug, Clone, Copy)]
pub struct InstanceVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub wf1: Var,
    pub bf1: Var,
    pub wf2: Var,
    pub bf2: Var,
    pub activation: Activation,
}

impl InstanceVars {
    pub fn all(&self) -> [Var; 7] {
        [
            self.w1, self.b1, self.w2, self.wf1, self.bf1, self.wf2, self.bf2,
        ]
    }

    /// Attention weights (`1 x N`) and pooled feature (`1 x d`) for an
    /// `N x d` feature matrix.
    pub fn attend(&self, g: &mut Graph, feats: Var) -> (Var, Var) {
        let pre = g.linear(feats, self.w1, self.b1);
        let hidden = g.tanh(pre);
        let scores = g.matmul_t(hidden, self.w2);
        let scores = g.transpose(scores);
        let alpha = g.softmax(scores, false);
        let pooled = g.matmul(alpha, feats);
        (alpha, pooled)
    }

    /// Relation query for the ordered pair `(subject, object)`.
    pub fn relate(&self, g: &mut Graph, subject: Var, object: Var) -> Var {
        let x = g.concat_cols(&[subject, object]);
        let z = g.linear(x, self.wf1, self.bf1);
        let a = g.activation(z, self.activation);
        g.linear(a, self.wf2, self.bf2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalAttention {
    pub weights: Vec<f64>,
    pub aggregate: Vec<f64>,
}

/// Attention-pooled representation of one track.
pub fn temporal_attention(seq: &FeatureSequence, p: &InstanceFusionParams) -> TemporalAttention {
    let mut g = Graph::new();
    let vars = p.bind(&mut g);
    let feats = g.leaf(seq.feats.clone());
    let (alpha, pooled) = vars.attend(&mut g, feats);
    TemporalAttention {
        weights: g.value(alpha).data().to_vec(),
        aggregate: g.value(pooled).data().to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalBackward {
    /// Gradients for `w1`, `b1`, `w2`; the relation tensors are zero.
    pub params: InstanceFusionParams,
    pub feats: Matrix,
}

/// Gradients of `<upstream, aggregate>` with respect to the scorer weights
/// and the input features.
pub fn temporal_attention_backward(
    seq: &FeatureSequence,
    p: &InstanceFusionParams,
    upstream: &[f64],
) -> TemporalBackward {
    let mut g = Graph::new();
    let vars = p.bind(&mut g);
    let feats = g.leaf(seq.feats.clone());
    let (_, pooled) = vars.attend(&mut g, feats);
    let grads = g.backward_with(pooled, Matrix::row_vector(upstream));
    TemporalBackward {
        params: group_grads(p, &vars.all(), &grads),
        feats: grads.get_or_zeros(feats, &seq.feats),
    }
}

/// Directed relation embedding between two pooled features.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationQuery {
    pub subject_id: u32,
    pub object_id: u32,
    pub h: Vec<f64>,
}

pub fn relation_query(fi: &[f64], fj: &[f64], p: &InstanceFusionParams) -> Vec<f64> {
    let mut g = Graph::new();
    let vars = p.bind(&mut g);
    let a = g.leaf(Matrix::row_vector(fi));
    let b = g.leaf(Matrix::row_vector(fj));
    let h = vars.relate(&mut g, a, b);
    g.value(h).data().to_vec()
}

/// Queries for every ordered pair of distinct tracks, sorted by
/// `(subject, object)`.
pub fn relation_queries(
    pooled: &[(u32, Vec<f64>)],
    p: &InstanceFusionParams,
) -> Vec<RelationQuery> {
    let mut sorted: Vec<&(u32, Vec<f64>)> = pooled.iter().collect();
    sorted.sort_by_key(|(id, _)| *id);
    let mut out = Vec::new();
    for (si, fs) in &sorted {
        for (oi, fo) in &sorted {
            if si != oi {
                out.push(RelationQuery {
                    subject_id: *si,
                    object_id: *oi,
                    h: relation_query(fs, fo, p),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationBackward {
    /// Gradients for `wf1`, `bf1`, `wf2`, `bf2`; the scorer tensors are zero.
    pub params: InstanceFusionParams,
    pub subject: Vec<f64>,
    pub object: Vec<f64>,
}

pub fn relation_query_backward(
    fi: &[f64],
    fj: &[f64],
    p: &InstanceFusionParams,
    upstream: &[f64],
) -> RelationBackward {
    let mut g = Graph::new();
    let vars = p.bind(&mut g);
    let a = g.leaf(Matrix::row_vector(fi));
    let b = g.leaf(Matrix::row_vector(fj));
    let h = vars.relate(&mut g, a, b);
    let grads = g.backward_with(h, Matrix::row_vector(upstream));
    let like = Matrix::row_vector(fi);
    RelationBackward {
        params: group_grads(p, &vars.all(), &grads),
        subject: grads.get_or_zeros(a, &like).into_vec(),
        object: grads.get_or_zeros(b, &like).into_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u64) -> InstanceFusionParams {
        let cfg = RunConfig {
            feat_dim: 2,
            hidden_dim: 3,
            relation_hidden_dim: 4,
            relation_dim: 3,
            ..RunConfig::default()
        };
        InstanceFusionParams::init(&cfg, &mut SeededRng::new(seed))
    }

    fn seq(rows: &[Vec<f64>]) -> FeatureSequence {
        FeatureSequence::new(
            1,
            (1..=rows.len() as u32).collect(),
            Matrix::from_rows(rows),
        )
    }

    #[test]
    fn singleton_sequence() {
        let p = params(1);
        let r = temporal_attention(&seq(&[vec![0.3, -0.7]]), &p);
        assert_eq!(r.weights, vec![1.0]);
        assert_eq!(r.aggregate, vec![0.3, -0.7]);
    }

    #[test]
    fn identical_rows_uniform() {
        let p = params(2);
        let r = temporal_attention(&seq(&vec![vec![0.5, 0.25]; 4]), &p);
        for w in &r.weights {
            assert_eq!(*w, 0.25);
        }
        for (a, b) in r.aggregate.iter().zip([0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_relation_weights() {
        let mut p = params(3);
        p.wf1 = Matrix::zeros(4, 4);
        p.bf1 = Matrix::zeros(1, 4);
        let expect: Vec<f64> = (0..3)
            .map(|r| 0.5 * p.wf2.row(r).iter().sum::<f64>() + p.bf2[(0, r)])
            .collect();
        let h = relation_query(&[1.0, 2.0], &[3.0, 4.0], &p);
        for (a, b) in h.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
        p.wf2 = Matrix::zeros(3, 4);
        assert_eq!(
            relation_query(&[1.0, 2.0], &[3.0, 4.0], &p),
            p.bf2.data().to_vec()
        );
    }

    #[test]
    fn all_ordered_pairs() {
        let p = params(4);
        let q = relation_queries(
            &[
                (5, vec![0.1, 0.2]),
                (2, vec![0.3, 0.4]),
                (9, vec![0.0, 1.0]),
            ],
            &p,
        );
        let ids: Vec<(u32, u32)> = q.iter().map(|r| (r.subject_id, r.object_id)).collect();
        assert_eq!(ids, vec![(2, 5), (2, 9), (5, 2), (5, 9), (9, 2), (9, 5)]);
        assert!(relation_queries(&[(1, vec![0.0, 0.0])], &p).is_empty());
    }
}
