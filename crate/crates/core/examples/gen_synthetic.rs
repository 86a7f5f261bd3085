//! Generates a small synthetic dataset and prints what each video holds.
//! Pass a directory to also write it to disk.

use smot::synth::{gen_synthetic, write_synthetic, SyntheticSpec};

fn main() -> smot::error::Result<()> {
    let spec = SyntheticSpec {
        videos: 3,
        frames: 40,
        sigma_pos: 2.0,
        dropout: 0.05,
        feat_dim: 8,
        ..SyntheticSpec::default()
    };
    let videos = gen_synthetic(42, &spec);
    for v in &videos {
        let boxes: usize = v.gt.iter().map(|t| t.len()).sum();
        let dets: usize = v.detections.iter().map(|f| f.detections.len()).sum();
        println!(
            "{}: {} tracks, {boxes} gt boxes, {dets} detections",
            v.semantics.video_id,
            v.gt.len()
        );
        println!("  summary: {}", v.semantics.summary);
        for (id, c) in &v.semantics.instance_captions {
            println!("  track {id}: {c}");
        }
        for it in &v.semantics.interactions {
            println!("  {} {} {}", it.subject, it.label, it.object);
        }
    }
    if let Some(dir) = std::env::args().nth(1) {
        write_synthetic(dir.as_ref(), &videos)?;
        println!("wrote {dir}");
    }
    Ok(())
}
