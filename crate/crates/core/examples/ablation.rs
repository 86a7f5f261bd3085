//! Fusion ablation on the bundled data: every combination of instance and
//! video fusion, tracking shared across rows.

use std::io::Write;
use std::path::Path;

use smot::bundle::ModelBundle;
use smot::config::RunConfig;
use smot::metrics::{render_ablation, ReportFormat};
use smot::pipeline::run_ablation;

fn main() -> smot::error::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let cfg = RunConfig::load(&data.join("small.json"))?;
    let model = ModelBundle::load(&data.join("toy_model.ckpt"), &cfg)?;
    let rows = run_ablation(&data.join("synthetic"), Some(&model), false, &cfg)?;
    std::io::stdout().write_all(&render_ablation(&rows, ReportFormat::Markdown))?;
    Ok(())
}
