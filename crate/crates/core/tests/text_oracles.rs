//! Caption metrics against hand-computed values and straight-from-the-
//! definition oracles on random short sentences.

use std::collections::{BTreeMap, BTreeSet};

use smot::metrics::{bleu4, cider, meteor_alignment, meteor_lite, rouge_l, stem, tokenize_text};
use smot::rng::SeededRng;

fn t(s: &str) -> Vec<String> {
    tokenize_text(s)
}

const VOCAB: [&str; 10] = [
    "a", "person", "walks", "walk", "north", "the", "scene", "runs", "running", "still",
];

fn sentence(rng: &mut SeededRng, max_len: u64) -> Vec<String> {
    let n = 1 + rng.below(max_len) as usize;
    (0..n)
        .map(|_| VOCAB[rng.below(VOCAB.len() as u64) as usize].to_string())
        .collect()
}

fn grams(s: &[String], n: usize) -> Vec<Vec<String>> {
    if s.len() < n {
        return Vec::new();
    }
    (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
}

fn count(list: &[Vec<String>], g: &[String]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

fn oracle_bleu(c: &[String], refs: &[Vec<String>]) -> f64 {
    let mut logs = 0.0;
    for n in 1..=4 {
        let cg = grams(c, n);
        let mut distinct = cg.clone();
        distinct.sort();
        distinct.dedup();
        let clipped: usize = distinct
            .iter()
            .map(|g| {
                let max_ref = refs.iter().map(|r| count(&grams(r, n), g)).max().unwrap();
                count(&cg, g).min(max_ref)
            })
            .sum();
        let p = if clipped == 0 {
            1e-9 / cg.len().max(1) as f64
        } else {
            clipped as f64 / cg.len() as f64
        };
        logs += p.ln() / 4.0;
    }
    let mut best = refs[0].len();
    for r in refs {
        let (d, bd) = (r.len().abs_diff(c.len()), best.abs_diff(c.len()));
        if d < bd || (d == bd && r.len() < best) {
            best = r.len();
        }
    }
    let bp = (1.0 - best as f64 / c.len() as f64).exp().min(1.0);
    bp * logs.exp()
}

fn is_subsequence(sub: &[&String], of: &[String]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|w| it.any(|x| x == *w))
}

/// LCS by trying every subsequence of the candidate.
fn oracle_rouge(c: &[String], r: &[String]) -> f64 {
    let mut lcs = 0;
    for mask in 0u32..(1 << c.len()) {
        let sub: Vec<&String> = (0..c.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &c[i])
            .collect();
        if sub.len() > lcs && is_subsequence(&sub, r) {
            lcs = sub.len();
        }
    }
    if lcs == 0 {
        return 0.0;
    }
    let (p, rc) = (lcs as f64 / c.len() as f64, lcs as f64 / r.len() as f64);
    let b2 = 1.2f64 * 1.2;
    (1.0 + b2) * p * rc / (rc + b2 * p)
}

/// Every injective alignment of candidate positions to reference positions
/// with equal stems; most matches first, then fewest chunks.
fn oracle_alignment(c: &[String], r: &[String]) -> (usize, usize) {
    fn go(
        i: usize,
        c: &[String],
        r: &[String],
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        best: &mut (usize, usize),
    ) {
        if i == c.len() {
            let m = cur.len();
            let mut chunks = usize::from(m > 0);
            for w in cur.windows(2) {
                if !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1) {
                    chunks += 1;
                }
            }
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        go(i + 1, c, r, used, cur, best);
        for j in 0..r.len() {
            if !used[j] && stem(&c[i]) == stem(&r[j]) {
                used[j] = true;
                cur.push((i, j));
                go(i + 1, c, r, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0);
    go(
        0,
        c,
        r,
        &mut vec![false; r.len()],
        &mut Vec::new(),
        &mut best,
    );
    best
}

fn oracle_meteor(c: &[String], r: &[String]) -> f64 {
    let (m, ch) = oracle_alignment(c, r);
    if m == 0 {
        return 0.0;
    }
    let (p, rc) = (m as f64 / c.len() as f64, m as f64 / r.len() as f64);
    10.0 * p * rc / (rc + 9.0 * p) * (1.0 - 0.5 * (ch as f64 / m as f64).powi(3))
}

fn oracle_cider(cands: &BTreeMap<u32, Vec<String>>, refs: &BTreeMap<u32, Vec<Vec<String>>>) -> f64 {
    let n_docs = refs.len() as f64;
    let mut total = 0.0;
    for (k, rs) in refs {
        let c = cands.get(k).cloned().unwrap_or_default();
        let mut score = 0.0;
        for n in 1..=4 {
            let idf = |g: &Vec<String>| {
                let df = refs
                    .values()
                    .filter(|doc| doc.iter().any(|r| grams(r, n).contains(g)))
                    .count()
                    .max(1);
                n_docs.ln() - (df as f64).ln()
            };
            let vector = |s: &[String]| -> BTreeMap<Vec<String>, f64> {
                let gs = grams(s, n);
                let keys: BTreeSet<Vec<String>> = gs.iter().cloned().collect();
                keys.into_iter()
                    .map(|g| {
                        let v = count(&gs, &g) as f64 * idf(&g);
                        (g, v)
                    })
                    .collect()
            };
            let cv = vector(&c);
            let norm =
                |v: &BTreeMap<Vec<String>, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
            let mut sim = 0.0;
            for r in rs {
                let rv = vector(r);
                let (a, b) = (norm(&cv), norm(&rv));
                if a > 0.0 && b > 0.0 {
                    let d: f64 = cv
                        .iter()
                        .map(|(g, x)| x * rv.get(g).copied().unwrap_or(0.0))
                        .sum();
                    sim += d / (a * b);
                }
            }
            score += sim / rs.len() as f64;
        }
        total += 10.0 * score / 4.0;
    }
    total / n_docs
}

/// Largest deviation from the hand-computed values; alignment mismatches
/// count as infinite.
pub fn hand_value_error() -> f64 {
    let cands = BTreeMap::from([(1, t("a person walks north")), (2, t("two dogs run east"))]);
    let refs = BTreeMap::from([
        (1, vec![t("a person walks north")]),
        (2, vec![t("two dogs run east")]),
    ]);
    let swapped = BTreeMap::from([(1, t("two dogs run east")), (2, t("a person walks north"))]);
    let checks = [
        (
            bleu4(&t("the cat sat on the mat"), &[t("the cat is on the mat")]),
            0.0025406637407730743,
        ),
        (rouge_l(&t("the cat sat"), &t("the cat ran")), 2.0 / 3.0),
        (
            meteor_lite(&t("a person walks"), &t("a person walks")),
            0.9814814814814815,
        ),
        (meteor_lite(&t("cats sit"), &t("cat sits")), 0.9375),
        (meteor_lite(&t("dog"), &t("cat")), 0.0),
        (cider(&cands, &refs), 10.0),
        (cider(&swapped, &refs), 0.0),
    ];
    if meteor_alignment(&t("cats sit"), &t("cat sits")) != (2, 1) {
        return f64::INFINITY;
    }
    checks
        .iter()
        .map(|(got, want)| (got - want).abs())
        .fold(0.0, f64::max)
}

pub const SENTENCE_CASES: usize = 500;
pub const CIDER_CASES: usize = 200;

/// Worst absolute difference of BLEU-4, ROUGE-L and METEOR-lite from their
/// oracles; alignment mismatches count as infinite.
pub fn sentence_worst() -> f64 {
    let mut rng = SeededRng::new(31);
    let mut worst = 0.0f64;
    for _ in 0..SENTENCE_CASES {
        let c = sentence(&mut rng, 6);
        let refs: Vec<Vec<String>> = (0..1 + rng.below(3))
            .map(|_| sentence(&mut rng, 6))
            .collect();
        let r = &refs[0];
        if meteor_alignment(&c, r) != oracle_alignment(&c, r) {
            return f64::INFINITY;
        }
        worst = worst
            .max((bleu4(&c, &refs) - oracle_bleu(&c, &refs)).abs())
            .max((rouge_l(&c, r) - oracle_rouge(&c, r)).abs())
            .max((meteor_lite(&c, r) - oracle_meteor(&c, r)).abs());
    }
    worst
}

pub fn cider_worst() -> f64 {
    let mut rng = SeededRng::new(32);
    let mut worst = 0.0f64;
    for _ in 0..CIDER_CASES {
        let n = 1 + rng.below(3) as u32;
        let mut cands = BTreeMap::new();
        let mut refs = BTreeMap::new();
        for k in 0..n {
            cands.insert(k, sentence(&mut rng, 6));
            refs.insert(
                k,
                (0..1 + rng.below(2))
                    .map(|_| sentence(&mut rng, 6))
                    .collect::<Vec<_>>(),
            );
        }
        worst = worst.max((cider(&cands, &refs) - oracle_cider(&cands, &refs)).abs());
    }
    worst
}

#[test]
fn hand_values() {
    let e = hand_value_error();
    assert!(e < 1e-9, "{e}");
}

#[test]
fn sentence_metrics_match_oracles() {
    let e = sentence_worst();
    assert!(e < 1e-9, "{e}");
}

#[test]
fn cider_matches_oracle() {
    let e = cider_worst();
    assert!(e < 1e-9, "{e}");
}

#[test]
fn duplicated_corpus_keeps_cider() {
    let mut rng = SeededRng::new(33);
    for _ in 0..50 {
        let mut cands = BTreeMap::new();
        let mut refs = BTreeMap::new();
        for k in 0..3u32 {
            refs.insert(k, vec![sentence(&mut rng, 6)]);
        }
        // candidates reuse corpus sentences so every n-gram has df >= 1;
        // unseen n-grams get df clamped to 1 and their idf would move
        for k in 0..3u32 {
            let src = rng.below(3) as u32;
            cands.insert(k, refs[&src][0].clone());
        }
        let base = cider(&cands, &refs);
        let mut c2 = cands.clone();
        let mut r2 = refs.clone();
        for k in 0..3u32 {
            c2.insert(k + 10, cands[&k].clone());
            r2.insert(k + 10, refs[&k].clone());
        }
        // idf = ln(2N) - ln(2 df) is unchanged
        assert!((cider(&c2, &r2) - base).abs() < 1e-9);
    }
}

#[test]
fn extra_document_moves_cider_through_idf() {
    let cands = BTreeMap::from([(1, t("a person walks north")), (2, t("a dog runs"))]);
    let refs = BTreeMap::from([
        (1, vec![t("a person walks south")]),
        (2, vec![t("a dog runs")]),
    ]);
    let before = cider(&cands, &refs);
    let mut more = refs.clone();
    more.insert(3, vec![t("the person sits")]);
    let after = cider(&cands, &more);
    assert!((before - after).abs() > 1e-6);
}

#[test]
fn stemmer_rules() {
    for (w, s) in [
        ("classes", "class"),
        ("flies", "fly"),
        ("walking", "walk"),
        ("sing", "sing"),
        ("jumped", "jump"),
        ("used", "used"),
        ("walks", "walk"),
        ("bus", "bus"),
        ("glass", "glass"),
        ("is", "is"),
    ] {
        assert_eq!(stem(w), s, "{w}");
    }
}
