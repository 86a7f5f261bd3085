//! Tracking scores on a hand-made case: one target whose predicted identity
//! changes halfway, plus a spurious box.

use smot::config::default_hota_alphas;
use smot::metrics::{clear_metrics, hota, id_metrics};
use smot::types::{BoundedBox, Track};

fn main() -> smot::error::Result<()> {
    let boxes: Vec<BoundedBox> = (1..=10)
        .map(|f| BoundedBox::new(f, 12.0 * f as f64, 100.0, 40.0, 80.0, 1.0))
        .collect();
    let gt = vec![Track::new(1, boxes.clone())];
    let pred = vec![
        Track::new(10, boxes[..5].to_vec()),
        Track::new(11, boxes[5..].to_vec()),
        Track::new(12, vec![BoundedBox::new(3, 900.0, 500.0, 40.0, 80.0, 0.4)]),
    ];

    let c = clear_metrics(&gt, &pred, 0.5)?;
    println!(
        "FN {} FP {} IDs {} MOTA {:.2}",
        c.fn_,
        c.fp,
        c.id_switches,
        c.mota.unwrap_or(f64::NAN)
    );
    let id = id_metrics(&gt, &pred, 0.5)?;
    println!("IDP {:.2} IDR {:.2} IDF1 {:.2}", id.idp, id.idr, id.idf1);
    let h = hota(&gt, &pred, &default_hota_alphas())?;
    println!(
        "HOTA {:.2} DetA {:.2} AssA {:.2} LocA {:.2}",
        h.hota, h.det_a, h.ass_a, h.loc_a
    );
    Ok(())
}
