//! Low-rank adapters on the toy language model: a fresh adapter changes
//! nothing, a trained one can be folded into the base weights.

use smot::config::RunConfig;
use smot::linalg::Matrix;
use smot::reasoner::{lm_forward, LoraSet, ReasonerInput, ToyLm};
use smot::rng::SeededRng;

fn main() -> smot::error::Result<()> {
    let cfg = RunConfig::small();
    let mut rng = SeededRng::new(3);
    let lm = ToyLm::init(&cfg, &mut rng);
    let mut lora = LoraSet::init(&lm, cfg.lora_rank, cfg.lora_alpha, &mut rng);
    let prefix = ReasonerInput {
        i_context: (0..cfg.lm_dim).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        t_emb: Vec::new(),
    };
    let tokens = [1, 4, 9, 2];

    let base = lm_forward(&lm, None, &prefix, &tokens)?;
    let fresh = lm_forward(&lm, Some(&lora), &prefix, &tokens)?;
    println!(
        "fresh adapters, max logit change {:e}",
        base.max_abs_diff(&fresh)
    );

    // stand-in for training: give every B a nonzero value
    for ad in &mut lora.adapters {
        ad.b = Matrix::uniform(ad.b.rows(), ad.b.cols(), 0.3, &mut rng);
    }
    let adapted = lm_forward(&lm, Some(&lora), &prefix, &tokens)?;
    let merged = lm_forward(&lm.merged(&lora)?, None, &prefix, &tokens)?;
    println!(
        "{} adapters, rank {}: logits moved {:.4}, merged vs adapted {:.1e}",
        lora.adapters.len(),
        cfg.lora_rank,
        base.max_abs_diff(&adapted),
        adapted.max_abs_diff(&merged)
    );
    Ok(())
}
