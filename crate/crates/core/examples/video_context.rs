//! Video-level fusion: per-frame tokens from the feature rows of all tracks,
//! folded into one context vector by the recursive attention update.

use smot::config::RunConfig;
use smot::fusion::{frame_tokens, video_context_step_detailed, VideoFusionParams};
use smot::rng::SeededRng;
use smot::synth::{gen_synthetic, SyntheticSpec};

fn main() {
    let cfg = RunConfig::small();
    let spec = SyntheticSpec {
        frames: 10,
        feat_dim: cfg.feat_dim,
        ..SyntheticSpec::default()
    };
    let video = &gen_synthetic(5, &spec)[0];
    let params = VideoFusionParams::init(&cfg, &mut SeededRng::new(2));

    let mut state = params.initial_state();
    for (frame, tokens) in frame_tokens(&video.features, &params) {
        let (next, attn) = video_context_step_detailed(&state, &tokens, &params);
        let moved: f64 = next
            .f
            .iter()
            .zip(&state.f)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        println!(
            "frame {frame:>2}: {} tokens, head-0 attention {:.3?}, state moved {moved:.4}",
            tokens.rows(),
            attn[0]
        );
        state = next;
    }
    println!(
        "context after {} frames: {:.3?}",
        state.frames_consumed, state.f
    );
}
