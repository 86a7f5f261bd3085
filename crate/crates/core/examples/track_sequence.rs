//! Runs the Kalman/Hungarian tracker on noisy synthetic detections and
//! scores it against the ground truth.

use smot::config::default_hota_alphas;
use smot::metrics::{clear_metrics, hota, id_metrics};
use smot::synth::{gen_synthetic, SyntheticSpec};
use smot::tracker::{track_sequence, TrackerParams};

fn main() -> smot::error::Result<()> {
    let spec = SyntheticSpec {
        frames: 80,
        min_tracks: 4,
        max_tracks: 6,
        sigma_pos: 3.0,
        dropout: 0.1,
        ..SyntheticSpec::default()
    };
    let video = &gen_synthetic(7, &spec)[0];
    let pred = track_sequence(&video.detections, TrackerParams::default());
    println!("{} gt tracks, {} predicted", video.gt.len(), pred.len());

    let c = clear_metrics(&video.gt, &pred, 0.5)?;
    let id = id_metrics(&video.gt, &pred, 0.5)?;
    let h = hota(&video.gt, &pred, &default_hota_alphas())?;
    println!(
        "MOTA {:.2}  FN {}  FP {}  IDs {}",
        c.mota.unwrap_or(f64::NAN),
        c.fn_,
        c.fp,
        c.id_switches
    );
    println!("IDF1 {:.2}  IDP {:.2}  IDR {:.2}", id.idf1, id.idp, id.idr);
    println!(
        "HOTA {:.2}  DetA {:.2}  AssA {:.2}  LocA {:.2}",
        h.hota, h.det_a, h.ass_a, h.loc_a
    );
    Ok(())
}
