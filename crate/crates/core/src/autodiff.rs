//! A small reverse-mode differentiation tape over [`Matrix`] values.
//!
//! Only the operations needed by the fusion module and the toy language
//! model are provided. Nodes are appended in evaluation order, so a single
//! reverse sweep visits every node after all of its consumers.

use crate::config::Activation;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Adds a `1 x n` row to every row.
    AddRow(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Tanh(Var),
    /// Row-wise softmax; `causal` masks entries with column > row.
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Sum(Var),
    /// Mean over rows of `-log softmax(row)[target]`.
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
    },
    /// Mean of `softplus(z) - y z`.
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` for nodes the output does not reach.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros shaped like `like` when unreached.
    pub fn get_or_zeros(&self, v: Var, like: &Matrix) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn act_forward(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Sigmoid => sigmoid(z),
        Activation::Relu => z.max(0.0),
        Activation::Gelu => 0.5 * z * (1.0 + (GELU_C * (z + 0.044715 * z * z * z)).tanh()),
    }
}

fn act_derivative(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Sigmoid => {
            let s = sigmoid(z);
            s * (1.0 - s)
        }
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Gelu => {
            let u = GELU_C * (z + 0.044715 * z * z * z);
            let t = u.tanh();
            let du = GELU_C * (1.0 + 3.0 * 0.044715 * z * z);
            0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du
        }
    }
}

/// Row-wise softmax with max subtraction. Masked entries are exactly zero.
pub fn softmax_rows(x: &Matrix, causal: bool) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let limit = if causal {
            (r + 1).min(x.cols())
        } else {
            x.cols()
        };
        let row = &x.row(r)[..limit];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (c, e) in exps.into_iter().enumerate() {
            out[(r, c)] = e / total;
        }
    }
    out
}

struct LnCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

fn layer_norm_forward(x: &Matrix, gamma: &Matrix, beta: &Matrix, eps: f64) -> (Matrix, LnCache) {
    let n = x.cols();
    let mut xhat = Matrix::zeros(x.rows(), n);
    let mut inv_std = Vec::with_capacity(x.rows());
    let mut y = Matrix::zeros(x.rows(), n);
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        for c in 0..n {
            let h = (row[c] - mean) * is;
            xhat[(r, c)] = h;
            y[(r, c)] = h * gamma[(0, c)] + beta[(0, c)];
        }
    }
    (y, LnCache { xhat, inv_std })
}

/// `(x - mean) / sqrt(var + eps) * gamma + beta` with population variance.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let (y, _) = layer_norm_forward(
        &Matrix::row_vector(x),
        &Matrix::row_vector(gamma),
        &Matrix::row_vector(beta),
        eps,
    );
    y.into_vec()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a * b^T`; the usual form for `x W^T` with `W` stored `out x in`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(&self.value(b).transpose());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).add(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).sub(self.value(b));
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!(r.rows(), 1, "bias must be a row");
        assert_eq!(r.cols(), x.cols(), "bias width");
        let mut v = x.clone();
        for i in 0..v.rows() {
            for (o, b) in v.row_mut(i).iter_mut().zip(r.row(0)) {
                *o += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    /// `x W^T + b` for `W: out x in`, `b: 1 x out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul_t(x, w);
        self.add_row(y, b)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Var {
        let v = self.value(a).map(|z| act_forward(act, z));
        self.push(v, Op::Act(a, act))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn softmax(&mut self, x: Var, causal: bool) -> Var {
        let v = softmax_rows(self.value(x), causal);
        self.push(v, Op::Softmax(x))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let (y, _) = layer_norm_forward(self.value(x), self.value(gamma), self.value(beta), eps);
        self.push(
            y,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                eps,
            },
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut v = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let m = self.value(p);
                assert_eq!(m.rows(), rows, "concat_cols row count");
                v.row_mut(r)[off..off + m.cols()].copy_from_slice(m.row(r));
                off += m.cols();
            }
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols(), cols, "concat_rows column count");
            data.extend_from_slice(m.data());
            rows += m.rows();
        }
        self.push(
            Matrix::from_vec(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = self.value(x);
        let mut v = Matrix::zeros(m.rows(), len);
        for r in 0..m.rows() {
            v.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(v, Op::SliceCols { x, start })
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = self.value(x);
        let c = m.cols();
        let v = Matrix::from_vec(len, c, m.data()[start * c..(start + len) * c].to_vec());
        self.push(v, Op::SliceRows { x, start })
    }

    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * t.cols());
        for &i in ids {
            data.extend_from_slice(t.row(i));
        }
        let v = Matrix::from_vec(ids.len(), t.cols(), data);
        self.push(
            v,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(x))
    }

    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.rows(), targets.len(), "one target per row");
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = z.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let loss = total / targets.len() as f64;
        self.push(
            Matrix::filled(1, 1, loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
        )
    }

    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.len(), targets.len(), "one target per logit");
        let total: f64 = z
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z)
            .sum();
        let loss = total / targets.len() as f64;
        self.push(
            Matrix::filled(1, 1, loss),
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
        )
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).shape(), (1, 1), "scalar output");
        self.backward_with(output, Matrix::filled(1, 1, 1.0))
    }

    /// Reverse sweep seeded with `upstream = dL/d(output)`.
    pub fn backward_with(&self, output: Var, upstream: Matrix) -> Gradients {
        assert_eq!(
            self.value(output).shape(),
            upstream.shape(),
            "upstream shape"
        );
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(upstream);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut acc = |v: Var, d: Matrix| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&d),
            slot @ None => *slot = Some(d),
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(*a, g.matmul(&val(*b).transpose()));
                acc(*b, val(*a).transpose().matmul(g));
            }
            Op::MatMulT(a, b) => {
                acc(*a, g.matmul(val(*b)));
                acc(*b, g.transpose().matmul(val(*a)));
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |x, y| x * y));
                acc(*b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                let mut s = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, v) in s.row_mut(0).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(*row, s);
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::Act(a, act) => {
                let d = val(*a).map(|z| act_derivative(*act, z));
                acc(*a, g.zip_map(&d, |x, y| x * y));
            }
            Op::Tanh(a) => {
                let y = &self.nodes[idx].value;
                acc(*a, g.zip_map(y, |gv, t| gv * (1.0 - t * t)));
            }
            Op::Softmax(x) => {
                let y = &self.nodes[idx].value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for c in 0..y.cols() {
                        d[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                    }
                }
                acc(*x, d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                eps,
            } => {
                let (_, cache) = layer_norm_forward(val(*x), val(*gamma), val(*beta), *eps);
                let gm = val(*gamma);
                let n = g.cols() as f64;
                let mut dx = Matrix::zeros(g.rows(), g.cols());
                let mut dgamma = Matrix::zeros(1, g.cols());
                let mut dbeta = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    let dxhat: Vec<f64> = (0..g.cols()).map(|c| g[(r, c)] * gm[(0, c)]).collect();
                    let mean_d = dxhat.iter().sum::<f64>() / n;
                    let mean_dx = dxhat
                        .iter()
                        .enumerate()
                        .map(|(c, v)| v * cache.xhat[(r, c)])
                        .sum::<f64>()
                        / n;
                    for c in 0..g.cols() {
                        let h = cache.xhat[(r, c)];
                        dx[(r, c)] = cache.inv_std[r] * (dxhat[c] - mean_d - h * mean_dx);
                        dgamma[(0, c)] += g[(r, c)] * h;
                        dbeta[(0, c)] += g[(r, c)];
                    }
                }
                acc(*x, dx);
                acc(*gamma, dgamma);
                acc(*beta, dbeta);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let c = val(p).cols();
                    let mut d = Matrix::zeros(g.rows(), c);
                    for r in 0..g.rows() {
                        d.row_mut(r).copy_from_slice(&g.row(r)[off..off + c]);
                    }
                    acc(p, d);
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = val(p).shape();
                    acc(
                        p,
                        Matrix::from_vec(r, c, g.data()[off * c..(off + r) * c].to_vec()),
                    );
                    off += r;
                }
            }
            Op::SliceCols { x, start } => {
                let src = val(*x);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*x, d);
            }
            Op::SliceRows { x, start } => {
                let src = val(*x);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    d.row_mut(start + r).copy_from_slice(g.row(r));
                }
                acc(*x, d);
            }
            Op::Gather { table, ids } => {
                let t = val(*table);
                let mut d = Matrix::zeros(t.rows(), t.cols());
                for (r, &i) in ids.iter().enumerate() {
                    for (o, v) in d.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(*table, d);
            }
            Op::Sum(x) => {
                let (r, c) = val(*x).shape();
                acc(*x, Matrix::filled(r, c, g[(0, 0)]));
            }
            Op::CrossEntropy { logits, targets } => {
                let z = val(*logits);
                let mut d = softmax_rows(z, false);
                let scale = g[(0, 0)] / targets.len() as f64;
                for (r, &t) in targets.iter().enumerate() {
                    d[(r, t)] -= 1.0;
                }
                acc(*logits, d.scale(scale));
            }
            Op::BceWithLogits { logits, targets } => {
                let z = val(*logits);
                let scale = g[(0, 0)] / targets.len() as f64;
                let data = z
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&zv, &y)| (sigmoid(zv) - y) * scale)
                    .collect();
                acc(*logits, Matrix::from_vec(z.rows(), z.cols(), data));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    /// Central differences of `f` around every entry of `inputs[which]`.
    fn numeric_grad(inputs: &[Matrix], which: usize, f: &dyn Fn(&[Matrix]) -> f64) -> Matrix {
        let h = 1e-6;
        let mut out = Matrix::zeros(inputs[which].rows(), inputs[which].cols());
        for k in 0..inputs[which].len() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[k] += h;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[k] -= h;
            out.data_mut()[k] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    fn check(inputs: Vec<Matrix>, build: &dyn Fn(&mut Graph, &[Var]) -> Var) {
        let eval = |xs: &[Matrix]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = xs.iter().map(|m| g.leaf(m.clone())).collect();
            let out = build(&mut g, &vars);
            g.value(out)[(0, 0)]
        };
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|m| g.leaf(m.clone())).collect();
        let out = build(&mut g, &vars);
        let grads = g.backward(out);
        for (i, v) in vars.iter().enumerate() {
            let analytic = grads.get_or_zeros(*v, &inputs[i]);
            let numeric = numeric_grad(&inputs, i, &eval);
            let err = analytic.max_abs_diff(&numeric);
            assert!(
                err < 1e-6,
                "input {i}: err {err}\n{analytic:?}\n{numeric:?}"
            );
        }
    }

    fn rand(r: usize, c: usize, rng: &mut SeededRng) -> Matrix {
        Matrix::uniform(r, c, 1.0, rng)
    }

    #[test]
    fn grad_linear_tanh_softmax() {
        let mut rng = SeededRng::new(1);
        check(
            vec![
                rand(3, 4, &mut rng),
                rand(2, 4, &mut rng),
                rand(1, 2, &mut rng),
            ],
            &|g, v| {
                let y = g.linear(v[0], v[1], v[2]);
                let t = g.tanh(y);
                let s = g.softmax(t, false);
                let w = g.mul(s, t);
                g.sum(w)
            },
        );
    }

    #[test]
    fn grad_layer_norm_and_acts() {
        let mut rng = SeededRng::new(2);
        for act in [Activation::Sigmoid, Activation::Gelu] {
            check(
                vec![
                    rand(2, 5, &mut rng),
                    rand(1, 5, &mut rng),
                    rand(1, 5, &mut rng),
                ],
                &|g, v| {
                    let a = g.activation(v[0], act);
                    let n = g.layer_norm(a, v[1], v[2], 1e-5);
                    let sq = g.mul(n, n);
                    g.sum(sq)
                },
            );
        }
    }

    #[test]
    fn grad_structural_ops() {
        let mut rng = SeededRng::new(3);
        check(vec![rand(3, 4, &mut rng), rand(2, 4, &mut rng)], &|g, v| {
            let c = g.concat_rows(&[v[0], v[1]]);
            let s = g.slice_cols(c, 1, 2);
            let r = g.slice_rows(c, 2, 3);
            let cc = g.concat_cols(&[s, s]);
            let t = g.transpose(r);
            let m = g.matmul(cc, t);
            let sm = g.softmax(m, true);
            let e = g.gather(v[0], &[2, 0, 2]);
            let x = g.matmul(sm, e);
            let y = g.scale(x, 0.7);
            let z = g.sub(y, x);
            g.sum(z)
        });
    }

    #[test]
    fn grad_losses() {
        let mut rng = SeededRng::new(4);
        check(vec![rand(3, 5, &mut rng)], &|g, v| {
            g.cross_entropy(v[0], &[1, 4, 0])
        });
        check(vec![rand(4, 1, &mut rng)], &|g, v| {
            g.bce_with_logits(v[0], &[1.0, 0.0, 1.0, 0.0])
        });
    }

    #[test]
    fn causal_softmax_masks() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![1.0, 5.0, 3.0]]);
        let s = softmax_rows(&x, true);
        assert_eq!(s.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(s[(1, 2)], 0.0);
        assert!((s.row(1).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_cases() {
        let y = layer_norm(&[3.0, 3.0, 3.0], &[1.0; 3], &[0.0; 3], 1e-5);
        assert!(y.iter().all(|v| *v == 0.0));
        let y = layer_norm(&[1.0, 3.0], &[1.0; 2], &[0.0; 2], 1e-5);
        assert!((y[0] + 1.0).abs() < 1e-4 && (y[1] - 1.0).abs() < 1e-4);
    }
}
