use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

/// Low-rank update `scale * B * A` of a frozen `m x n` linear map.
/// `B` starts at zero, so a fresh adapter leaves the wrapped map unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub a: Matrix,
    pub b: Matrix,
    pub scale: f64,
    pub target: String,
}

impl LoraAdapter {
    pub fn new(
        target: impl Into<String>,
        out_dim: usize,
        in_dim: usize,
        rank: usize,
        alpha: f64,
        rng: &mut SeededRng,
    ) -> Self {
        Self {
            a: Matrix::uniform(rank, in_dim, 1.0 / (in_dim as f64).sqrt(), rng),
            b: Matrix::zeros(out_dim, rank),
            scale: alpha / rank as f64,
            target: target.into(),
        }
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    fn check(&self, base: &Matrix) -> Result<()> {
        if self.a.rows() != self.b.cols()
            || base.rows() != self.b.rows()
            || base.cols() != self.a.cols()
        {
            return Err(Error::Shape(format!(
                "adapter {} (A {:?}, B {:?}) does not fit base {:?}",
                self.target,
                self.a.shape(),
                self.b.shape(),
                base.shape()
            )));
        }
        Ok(())
    }
}

/// `y = W x + scale * B (A x)`.
pub fn lora_apply(adapter: &LoraAdapter, base: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    adapter.check(base)?;
    if x.len() != base.cols() {
        return Err(Error::DimensionMismatch {
            what: "lora input".into(),
            expected: base.cols(),
            found: x.len(),
        });
    }
    let low = adapter.a.matvec(x);
    let delta = adapter.b.matvec(&low);
    Ok(base
        .matvec(x)
        .into_iter()
        .zip(delta)
        .map(|(w, d)| w + adapter.scale * d)
        .collect())
}

/// `W' = W + scale * B A`.
pub fn lora_merge(adapter: &LoraAdapter, base: &Matrix) -> Result<Matrix> {
    adapter.check(base)?;
    Ok(base.add(&adapter.b.matmul(&adapter.a).scale(adapter.scale)))
}
