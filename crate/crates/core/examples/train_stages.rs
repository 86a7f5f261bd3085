//! The three training stages on freshly generated data, with a short
//! schedule. Prints each loss curve's endpoints and which parameter groups
//! every stage updated.

use smot::bundle::ModelBundle;
use smot::config::RunConfig;
use smot::synth::{gen_synthetic, SyntheticSpec};
use smot::train::{run_stage, stage_data, StagePlan, TrainingVideo, CAPTION_LR};

fn main() -> smot::error::Result<()> {
    let cfg = RunConfig::small();
    let spec = SyntheticSpec {
        videos: 6,
        frames: 30,
        feat_dim: cfg.feat_dim,
        ..SyntheticSpec::default()
    };
    let videos = gen_synthetic(21, &spec);
    let views: Vec<TrainingVideo<'_>> = videos
        .iter()
        .map(|v| TrainingVideo {
            features: &v.features,
            semantics: &v.semantics,
        })
        .collect();

    let mut model = ModelBundle::init(&cfg, 21);
    for (stage, steps) in [(1u8, 40), (2, 40), (3, 150)] {
        let lr = if stage == 3 {
            CAPTION_LR
        } else {
            cfg.learning_rate
        };
        let plan = StagePlan::new(stage, steps, lr, 21 ^ stage as u64)?;
        let data = stage_data(stage, &views, &model, &cfg)?;
        let (next, curve) = run_stage(&plan, &model, &data, &cfg)?;
        let changed: Vec<String> = next
            .changed_groups(&model)
            .iter()
            .map(|g| g.to_string())
            .collect();
        println!(
            "stage {stage}: loss {:.4} -> {:.4} over {steps} steps, updated {}",
            curve[0],
            curve[curve.len() - 1],
            changed.join(", ")
        );
        model = next;
    }
    Ok(())
}
