//! Compares the analytic gradient of temporal attention pooling with central
//! finite differences on one random sequence.

use smot::config::RunConfig;
use smot::fusion::{temporal_attention, temporal_attention_backward, InstanceFusionParams};
use smot::linalg::Matrix;
use smot::rng::SeededRng;
use smot::types::FeatureSequence;

fn main() {
    let cfg = RunConfig::small();
    let mut rng = SeededRng::new(11);
    let params = InstanceFusionParams::init(&cfg, &mut rng);
    let n = 5;
    let feats = Matrix::uniform(n, cfg.feat_dim, 1.0, &mut rng);
    let seq = FeatureSequence::new(1, (1..=n as u32).collect(), feats);
    // scalar objective u . pooled
    let u: Vec<f64> = (0..cfg.feat_dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let objective = |s: &FeatureSequence| -> f64 {
        let pooled = temporal_attention(s, &params).aggregate;
        pooled.iter().zip(&u).map(|(a, b)| a * b).sum()
    };

    let analytic = temporal_attention_backward(&seq, &params, &u).feats;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in 0..cfg.feat_dim {
            let mut up = seq.clone();
            up.feats[(r, c)] += h;
            let mut down = seq.clone();
            down.feats[(r, c)] -= h;
            let numeric = (objective(&up) - objective(&down)) / (2.0 * h);
            let a = analytic[(r, c)];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    println!(
        "{} feature entries, worst relative error {worst:.2e}",
        n * cfg.feat_dim
    );
}
