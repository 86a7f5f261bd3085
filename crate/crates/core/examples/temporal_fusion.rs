//! Instance-level fusion: attention pooling over a track's frames and the
//! relation query of every ordered pair of tracks.

use smot::config::RunConfig;
use smot::fusion::{relation_queries, temporal_attention, InstanceFusionParams};
use smot::rng::SeededRng;
use smot::synth::{gen_synthetic, SyntheticSpec};

fn main() {
    let cfg = RunConfig::small();
    let spec = SyntheticSpec {
        frames: 12,
        feat_dim: cfg.feat_dim,
        ..SyntheticSpec::default()
    };
    let video = &gen_synthetic(3, &spec)[0];
    let params = InstanceFusionParams::init(&cfg, &mut SeededRng::new(1));

    let mut pooled = Vec::new();
    for seq in &video.features {
        let att = temporal_attention(seq, &params);
        let peak = att
            .weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| seq.frames[k])
            .unwrap_or(0);
        println!(
            "track {}: {} frames, heaviest frame {peak}, pooled[0..3] {:.3?}",
            seq.track_id,
            seq.len(),
            &att.aggregate[..3]
        );
        pooled.push((seq.track_id, att.aggregate));
    }
    for q in relation_queries(&pooled, &params) {
        let norm = q.h.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!("h({} -> {}) |h| = {norm:.4}", q.subject_id, q.object_id);
    }
}
