//! Caption metrics on a few sentences.

use std::collections::BTreeMap;

use smot::metrics::{bleu4, cider, meteor_lite, rouge_l, tokenize_text};

fn main() {
    let pairs = [
        ("a person walks north slowly", "a person walks north"),
        ("two people talk near the center", "two people are talking"),
        ("a person runs east", "a person stands still"),
    ];
    let mut cands = BTreeMap::new();
    let mut refs = BTreeMap::new();
    for (k, (c, r)) in pairs.iter().enumerate() {
        let (c, r) = (tokenize_text(c), tokenize_text(r));
        println!(
            "{:<34} B-4 {:.3}  R-L {:.3}  M {:.3}",
            pairs[k].0,
            bleu4(&c, std::slice::from_ref(&r)),
            rouge_l(&c, &r),
            meteor_lite(&c, &r)
        );
        cands.insert(k, c);
        refs.insert(k, vec![r]);
    }
    println!("corpus CIDEr {:.3}", cider(&cands, &refs));
}
