use crate::autodiff::{Graph, Var};
use crate::checkpoint::ParamGroup;
use crate::config::{Activation, RunConfig};
use crate::error::{Error, Result};
use crate::fusion::{bind_group, init_bias, init_weight};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

use super::lora::{lora_merge, LoraAdapter};

const LN_EPS: f64 = 1e-5;

/// Prefix vectors in language-model embedding space: the video context
/// first, then per-track and per-pair vectors in caller order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReasonerInput {
    pub i_context: Vec<f64>,
    pub t_emb: Vec<Vec<f64>>,
}

impl ReasonerInput {
    pub fn to_matrix(&self) -> Matrix {
        let mut rows = vec![self.i_context.clone()];
        rows.extend(self.t_emb.iter().cloned());
        Matrix::from_rows(&rows)
    }
}

/// Single-block, single-head causal transformer over word tokens, with
/// learned positions for the token part of the sequence. Prefix vectors are
/// prepended as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLm {
    pub embed: Matrix,
    pub pos: Matrix,
    pub ln1_g: Matrix,
    pub ln1_b: Matrix,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln2_g: Matrix,
    pub ln2_b: Matrix,
    pub mlp_w1: Matrix,
    pub mlp_b1: Matrix,
    pub mlp_w2: Matrix,
    pub mlp_b2: Matrix,
    pub lnf_g: Matrix,
    pub lnf_b: Matrix,
    pub head: Matrix,
}

impl ParamGroup for ToyLm {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("embed", &self.embed),
            ("pos", &self.pos),
            ("ln1_g", &self.ln1_g),
            ("ln1_b", &self.ln1_b),
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("ln2_g", &self.ln2_g),
            ("ln2_b", &self.ln2_b),
            ("mlp_w1", &self.mlp_w1),
            ("mlp_b1", &self.mlp_b1),
            ("mlp_w2", &self.mlp_w2),
            ("mlp_b2", &self.mlp_b2),
            ("lnf_g", &self.lnf_g),
            ("lnf_b", &self.lnf_b),
            ("head", &self.head),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("embed", &mut self.embed),
            ("pos", &mut self.pos),
            ("ln1_g", &mut self.ln1_g),
            ("ln1_b", &mut self.ln1_b),
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
            ("wo", &mut self.wo),
            ("ln2_g", &mut self.ln2_g),
            ("ln2_b", &mut self.ln2_b),
            ("mlp_w1", &mut self.mlp_w1),
            ("mlp_b1", &mut self.mlp_b1),
            ("mlp_w2", &mut self.mlp_w2),
            ("mlp_b2", &mut self.mlp_b2),
            ("lnf_g", &mut self.lnf_g),
            ("lnf_b", &mut self.lnf_b),
            ("head", &mut self.head),
        ]
    }
}

/// Linear maps inside [`ToyLm`] that carry adapters, in storage order.
pub const LORA_TARGETS: [&str; 7] = ["wq", "wk", "wv", "wo", "mlp_w1", "mlp_w2", "head"];

const LORA_NAMES: [(&str, &str); 7] = [
    ("wq.a", "wq.b"),
    ("wk.a", "wk.b"),
    ("wv.a", "wv.b"),
    ("wo.a", "wo.b"),
    ("mlp_w1.a", "mlp_w1.b"),
    ("mlp_w2.a", "mlp_w2.b"),
    ("head.a", "head.b"),
];

/// One adapter per entry of [`LORA_TARGETS`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoraSet {
    pub adapters: Vec<LoraAdapter>,
}

impl ParamGroup for LoraSet {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        self.adapters
            .iter()
            .zip(LORA_NAMES)
            .flat_map(|(ad, (na, nb))| [(na, &ad.a), (nb, &ad.b)])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        self.adapters
            .iter_mut()
            .zip(LORA_NAMES)
            .flat_map(|(ad, (na, nb))| [(na, &mut ad.a), (nb, &mut ad.b)])
            .collect()
    }
}

impl LoraSet {
    pub fn init(lm: &ToyLm, rank: usize, alpha: f64, rng: &mut SeededRng) -> Self {
        let adapters = LORA_TARGETS
            .iter()
            .map(|&t| {
                let w = lm.target(t);
                LoraAdapter::new(t, w.rows(), w.cols(), rank, alpha, rng)
            })
            .collect();
        Self { adapters }
    }
}

impl ToyLm {
    pub fn init(cfg: &RunConfig, rng: &mut SeededRng) -> Self {
        let (v, e) = (cfg.vocab.len(), cfg.lm_dim);
        Self {
            embed: Matrix::uniform(v, e, 1.0, rng),
            pos: Matrix::uniform(cfg.lm_max_tokens, e, 0.5, rng),
            ln1_g: Matrix::filled(1, e, 1.0),
            ln1_b: Matrix::zeros(1, e),
            wq: init_weight(e, e, rng),
            wk: init_weight(e, e, rng),
            wv: init_weight(e, e, rng),
            wo: init_weight(e, e, rng),
            ln2_g: Matrix::filled(1, e, 1.0),
            ln2_b: Matrix::zeros(1, e),
            mlp_w1: init_weight(2 * e, e, rng),
            mlp_b1: init_bias(2 * e, e, rng),
            mlp_w2: init_weight(e, 2 * e, rng),
            mlp_b2: init_bias(e, 2 * e, rng),
            lnf_g: Matrix::filled(1, e, 1.0),
            lnf_b: Matrix::zeros(1, e),
            head: init_weight(v, e, rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.rows()
    }

    pub fn dim(&self) -> usize {
        self.embed.cols()
    }

    pub fn max_tokens(&self) -> usize {
        self.pos.rows()
    }

    fn target(&self, name: &str) -> &Matrix {
        match name {
            "wq" => &self.wq,
            "wk" => &self.wk,
            "wv" => &self.wv,
            "wo" => &self.wo,
            "mlp_w1" => &self.mlp_w1,
            "mlp_w2" => &self.mlp_w2,
            "head" => &self.head,
            other => panic!("unknown adapter target {other}"),
        }
    }

    fn target_mut(&mut self, name: &str) -> &mut Matrix {
        match name {
            "wq" => &mut self.wq,
            "wk" => &mut self.wk,
            "wv" => &mut self.wv,
            "wo" => &mut self.wo,
            "mlp_w1" => &mut self.mlp_w1,
            "mlp_w2" => &mut self.mlp_w2,
            "head" => &mut self.head,
            other => panic!("unknown adapter target {other}"),
        }
    }

    /// A copy with every adapter folded into its target weight.
    pub fn merged(&self, lora: &LoraSet) -> Result<ToyLm> {
        let mut out = self.clone();
        for ad in &lora.adapters {
            if !LORA_TARGETS.contains(&ad.target.as_str()) {
                return Err(Error::Shape(format!(
                    "unknown adapter target {}",
                    ad.target
                )));
            }
            let w = out.target_mut(&ad.target);
            *w = lora_merge(ad, w)?;
        }
        Ok(out)
    }

    pub fn bind(&self, g: &mut Graph, lora: Option<&LoraSet>) -> LmVars {
        let base = bind_group(g, self);
        let adapters = lora.map(|set| {
            set.adapters
                .iter()
                .map(|ad| (g.leaf(ad.a.clone()), g.leaf(ad.b.clone()), ad.scale))
                .collect()
        });
        LmVars { base, adapters }
    }
}

/// [`ToyLm`] (and optionally its adapters) bound into a [`Graph`].
#[derive(Debug, Clone)]
pub struct LmVars {
    pub base: Vec<Var>,
    /// `(A, B, scale)` per entry of [`LORA_TARGETS`].
    pub adapters: Option<Vec<(Var, Var, f64)>>,
}

impl LmVars {
    pub fn lora_vars(&self) -> Vec<Var> {
        self.adapters
            .iter()
            .flatten()
            .flat_map(|&(a, b, _)| [a, b])
            .collect()
    }

    fn project(&self, g: &mut Graph, x: Var, base_idx: usize, target: usize) -> Var {
        let y = g.matmul_t(x, self.base[base_idx]);
        match &self.adapters {
            Some(ads) => {
                let (a, b, scale) = ads[target];
                let low = g.matmul_t(x, a);
                let up = g.matmul_t(low, b);
                let up = g.scale(up, scale);
                g.add(y, up)
            }
            None => y,
        }
    }

    /// Logits (`tokens.len() x V`) for the token positions of
    /// `[prefix; tokens]`. `prefix` is `P x e` or absent.
    pub fn forward(&self, g: &mut Graph, prefix: Option<Var>, tokens: &[usize]) -> Var {
        let b = &self.base;
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let emb = g.gather(b[0], tokens);
        let pos = g.gather(b[1], &positions);
        let tok = g.add(emb, pos);
        let (x, p) = match prefix {
            Some(pre) => {
                let p = g.value(pre).rows();
                (g.concat_rows(&[pre, tok]), p)
            }
            None => (tok, 0),
        };
        let e = g.value(x).cols();
        let h = g.layer_norm(x, b[2], b[3], LN_EPS);
        let q = self.project(g, h, 4, 0);
        let k = self.project(g, h, 5, 1);
        let v = self.project(g, h, 6, 2);
        let s = g.matmul_t(q, k);
        let s = g.scale(s, 1.0 / (e as f64).sqrt());
        let a = g.softmax(s, true);
        let att = g.matmul(a, v);
        let o = self.project(g, att, 7, 3);
        let x = g.add(x, o);
        let h = g.layer_norm(x, b[8], b[9], LN_EPS);
        let m = self.project(g, h, 10, 4);
        let m = g.add_row(m, b[11]);
        let m = g.activation(m, Activation::Gelu);
        let m = self.project(g, m, 12, 5);
        let m = g.add_row(m, b[13]);
        let x = g.add(x, m);
        let h = g.layer_norm(x, b[14], b[15], LN_EPS);
        let h = g.slice_rows(h, p, tokens.len());
        self.project(g, h, 16, 6)
    }
}

fn check_tokens(model: &ToyLm, tokens: &[usize]) -> Result<()> {
    if tokens.len() > model.max_tokens() {
        return Err(Error::DimensionMismatch {
            what: "token sequence length".into(),
            expected: model.max_tokens(),
            found: tokens.len(),
        });
    }
    if let Some(&t) = tokens.iter().find(|&&t| t >= model.vocab_size()) {
        return Err(Error::InvalidRecord(format!(
            "token id {t} outside vocabulary"
        )));
    }
    Ok(())
}

/// Next-token logits for every position of `tokens`.
pub fn lm_forward(
    model: &ToyLm,
    lora: Option<&LoraSet>,
    prefix: &ReasonerInput,
    tokens: &[usize],
) -> Result<Matrix> {
    check_tokens(model, tokens)?;
    if tokens.is_empty() {
        return Ok(Matrix::zeros(0, model.vocab_size()));
    }
    let pm = prefix.to_matrix();
    if pm.cols() != model.dim() {
        return Err(Error::DimensionMismatch {
            what: "prefix width".into(),
            expected: model.dim(),
            found: pm.cols(),
        });
    }
    let mut g = Graph::new();
    let vars = model.bind(&mut g, lora);
    let pre = g.leaf(pm);
    let logits = vars.forward(&mut g, Some(pre), tokens);
    Ok(g.value(logits).clone())
}

/// Greedy decoding from `start` (a task marker). Ties go to the lowest
/// token id. Stops after emitting `end` or `max_len` tokens; the returned
/// sequence excludes `start` and `end`.
pub fn generate(
    model: &ToyLm,
    lora: Option<&LoraSet>,
    prefix: &ReasonerInput,
    start: usize,
    end: usize,
    max_len: usize,
) -> Result<Vec<usize>> {
    let mut tokens = vec![start];
    let mut out = Vec::new();
    let limit = max_len.min(model.max_tokens() - 1);
    for _ in 0..limit {
        let logits = lm_forward(model, lora, prefix, &tokens)?;
        let last = logits.row(logits.rows() - 1);
        let mut best = 0;
        for (i, &v) in last.iter().enumerate() {
            if v > last[best] {
                best = i;
            }
        }
        if best == end {
            break;
        }
        out.push(best);
        tokens.push(best);
    }
    Ok(out)
}

/// Mean over positions of `-log softmax(logits_t)[target_t]`.
pub fn clm_loss(logits: &Matrix, targets: &[usize]) -> Result<f64> {
    if targets.is_empty() || logits.rows() != targets.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} targets",
            logits.rows(),
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= logits.cols()) {
        return Err(Error::InvalidRecord(format!(
            "target {t} outside vocabulary"
        )));
    }
    let mut g = Graph::new();
    let z = g.leaf(logits.clone());
    let loss = g.cross_entropy(z, targets);
    Ok(g.value(loss)[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(seed: u64) -> (RunConfig, ToyLm, LoraSet) {
        let cfg = RunConfig::small();
        let mut rng = SeededRng::new(seed);
        let lm = ToyLm::init(&cfg, &mut rng);
        let lora = LoraSet::init(&lm, cfg.lora_rank, cfg.lora_alpha, &mut rng);
        (cfg, lm, lora)
    }

    fn prefix(e: usize, n: usize, seed: u64) -> ReasonerInput {
        let mut rng = SeededRng::new(seed);
        ReasonerInput {
            i_context: (0..e).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            t_emb: (0..n)
                .map(|_| (0..e).map(|_| rng.uniform(-1.0, 1.0)).collect())
                .collect(),
        }
    }

    #[test]
    fn uniform_logits_give_ln_v() {
        let l = clm_loss(&Matrix::zeros(4, 10), &[0, 3, 9, 2]).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_near_zero() {
        let mut z = Matrix::zeros(3, 5);
        for (r, t) in [1, 4, 0].into_iter().enumerate() {
            z[(r, t)] = 1e9;
        }
        assert!(clm_loss(&z, &[1, 4, 0]).unwrap() < 1e-6);
    }

    #[test]
    fn hand_computed_loss() {
        let z = Matrix::from_rows(&[vec![1.0, 2.0, 0.5], vec![0.0, -1.0, 3.0]]);
        let row = |r: &[f64], t: usize| {
            let s: f64 = r.iter().map(|v| v.exp()).sum();
            -(r[t].exp() / s).ln()
        };
        let expect = (row(z.row(0), 1) + row(z.row(1), 0)) / 2.0;
        assert!((clm_loss(&z, &[1, 0]).unwrap() - expect).abs() < 1e-9);
        assert!((clm_loss(&z, &[1, 0]).unwrap() - 1.765_126_343_932_687).abs() < 1e-9);
    }

    #[test]
    fn loss_errors() {
        assert!(clm_loss(&Matrix::zeros(0, 3), &[]).is_err());
        assert!(clm_loss(&Matrix::zeros(1, 3), &[3]).is_err());
    }

    #[test]
    fn fresh_lora_matches_base() {
        let (cfg, lm, lora) = model(1);
        let p = prefix(cfg.lm_dim, 2, 7);
        let a = lm_forward(&lm, None, &p, &[2, 5, 6]).unwrap();
        let b = lm_forward(&lm, Some(&lora), &p, &[2, 5, 6]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn causal_under_perturbation() {
        let (cfg, lm, lora) = model(2);
        let p = prefix(cfg.lm_dim, 3, 8);
        let base = vec![2, 5, 6, 7, 8];
        let a = lm_forward(&lm, Some(&lora), &p, &base).unwrap();
        for t in 0..base.len() - 1 {
            let mut changed = base.clone();
            changed[t + 1] = (changed[t + 1] + 3) % cfg.vocab.len();
            let b = lm_forward(&lm, Some(&lora), &p, &changed).unwrap();
            for r in 0..=t {
                assert_eq!(a.row(r), b.row(r), "position {r} leaked from {}", t + 1);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (cfg, lm, lora) = model(3);
        let p = prefix(cfg.lm_dim, 1, 9);
        let a = generate(&lm, Some(&lora), &p, 2, 0, 10).unwrap();
        let b = generate(&lm, Some(&lora), &p, 2, 0, 10).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 10);
    }

    #[test]
    fn rejects_bad_tokens() {
        let (cfg, lm, _) = model(4);
        let p = prefix(cfg.lm_dim, 0, 1);
        assert!(lm_forward(&lm, None, &p, &[cfg.vocab.len()]).is_err());
        let too_long = vec![0; cfg.lm_max_tokens + 1];
        assert!(lm_forward(&lm, None, &p, &too_long).is_err());
    }
}
