use crate::autodiff::{Graph, Var};
use crate::checkpoint::ParamGroup;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fusion::{init_bias, init_weight};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

/// Which fused quantity a prefix vector comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixKind {
    /// Attention-pooled track feature.
    Instance,
    /// Pairwise relation query.
    Relation,
    /// Video context state.
    Video,
}

/// One linear map into the language model's embedding space per source kind.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixProjector {
    pub inst_w: Matrix,
    pub inst_b: Matrix,
    pub rel_w: Matrix,
    pub rel_b: Matrix,
    pub video_w: Matrix,
    pub video_b: Matrix,
}

impl ParamGroup for PrefixProjector {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("inst_w", &self.inst_w),
            ("inst_b", &self.inst_b),
            ("rel_w", &self.rel_w),
            ("rel_b", &self.rel_b),
            ("video_w", &self.video_w),
            ("video_b", &self.video_b),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("inst_w", &mut self.inst_w),
            ("inst_b", &mut self.inst_b),
            ("rel_w", &mut self.rel_w),
            ("rel_b", &mut self.rel_b),
            ("video_w", &mut self.video_w),
            ("video_b", &mut self.video_b),
        ]
    }
}

impl PrefixProjector {
    pub fn init(cfg: &RunConfig, rng: &mut SeededRng) -> Self {
        let e = cfg.lm_dim;
        Self {
            inst_w: init_weight(e, cfg.feat_dim, rng),
            inst_b: init_bias(e, cfg.feat_dim, rng),
            rel_w: init_weight(e, cfg.relation_dim, rng),
            rel_b: init_bias(e, cfg.relation_dim, rng),
            video_w: init_weight(e, cfg.context_dim, rng),
            video_b: init_bias(e, cfg.context_dim, rng),
        }
    }

    fn pick(&self, kind: PrefixKind) -> (&Matrix, &Matrix) {
        match kind {
            PrefixKind::Instance => (&self.inst_w, &self.inst_b),
            PrefixKind::Relation => (&self.rel_w, &self.rel_b),
            PrefixKind::Video => (&self.video_w, &self.video_b),
        }
    }

    pub fn project(&self, kind: PrefixKind, x: &[f64]) -> Result<Vec<f64>> {
        let (w, b) = self.pick(kind);
        if x.len() != w.cols() {
            return Err(Error::DimensionMismatch {
                what: format!("{kind:?} prefix source"),
                expected: w.cols(),
                found: x.len(),
            });
        }
        Ok(w.matvec(x)
            .into_iter()
            .zip(b.data())
            .map(|(a, b)| a + b)
            .collect())
    }

    pub fn bind(&self, g: &mut Graph) -> ProjectorVars {
        let v = crate::fusion::bind_group(g, self);
        ProjectorVars {
            vars: [v[0], v[1], v[2], v[3], v[4], v[5]],
        }
    }
}

pub fn project_prefix(p: &PrefixProjector, kind: PrefixKind, x: &[f64]) -> Result<Vec<f64>> {
    p.project(kind, x)
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectorVars {
    pub vars: [Var; 6],
}

impl ProjectorVars {
    /// Project `rows x src` inputs to `rows x e`.
    pub fn project(&self, g: &mut Graph, kind: PrefixKind, x: Var) -> Var {
        let (w, b) = match kind {
            PrefixKind::Instance => (self.vars[0], self.vars[1]),
            PrefixKind::Relation => (self.vars[2], self.vars[3]),
            PrefixKind::Video => (self.vars[4], self.vars[5]),
        };
        g.linear(x, w, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_bias() {
        let p = PrefixProjector::init(&RunConfig::small(), &mut SeededRng::new(1));
        let y = project_prefix(&p, PrefixKind::Relation, &[0.0; 8]).unwrap();
        assert_eq!(y, p.rel_b.data().to_vec());
    }

    #[test]
    fn identity_projection() {
        let cfg = RunConfig {
            lm_dim: 8,
            ..RunConfig::small()
        };
        let mut p = PrefixProjector::init(&cfg, &mut SeededRng::new(1));
        p.video_w = Matrix::identity(8);
        p.video_b = Matrix::zeros(1, 8);
        let x: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        assert_eq!(project_prefix(&p, PrefixKind::Video, &x).unwrap(), x);
    }

    #[test]
    fn dim_mismatch() {
        let p = PrefixProjector::init(&RunConfig::small(), &mut SeededRng::new(1));
        assert!(matches!(
            project_prefix(&p, PrefixKind::Instance, &[1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 8,
                found: 2,
                ..
            })
        ));
    }
}
