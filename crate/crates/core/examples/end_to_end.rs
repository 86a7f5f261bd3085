//! Track, fuse, describe and score the bundled synthetic dataset with the
//! bundled toy model, then print the markdown report.

use std::io::Write;
use std::path::Path;

use smot::bundle::ModelBundle;
use smot::config::RunConfig;
use smot::metrics::{render_report, ReportFormat};
use smot::pipeline::{run_pipeline, PipelineOptions, REPORT_METHOD};

fn main() -> smot::error::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let cfg = RunConfig::load(&data.join("small.json"))?;
    let model = ModelBundle::load(&data.join("toy_model.ckpt"), &cfg)?;
    let result = run_pipeline(
        &data.join("synthetic"),
        Some(&model),
        PipelineOptions::default(),
        &cfg,
    )?;

    let first = &result.videos[0];
    println!("{}: {}", first.video_id, first.semantics.summary);
    for it in &first.semantics.interactions {
        println!("  {} {} {}", it.subject, it.label, it.object);
    }
    let e = &result.evaluation;
    std::io::stdout().write_all(&render_report(
        REPORT_METHOD,
        &e.tracking,
        &e.semantic,
        ReportFormat::Markdown,
    ))?;
    Ok(())
}
