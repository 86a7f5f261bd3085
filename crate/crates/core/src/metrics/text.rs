//! Caption metrics over word tokens: BLEU-4, ROUGE-L, a METEOR variant with
//! exact and suffix-stripped matching only, and CIDEr.

use std::collections::{BTreeMap, HashMap};

/// Zero n-gram counts are replaced by this before taking logs.
pub const BLEU_EPS: f64 = 1e-9;
pub const ROUGE_BETA: f64 = 1.2;

/// Lowercase, ASCII punctuation to spaces, split on whitespace.
pub fn tokenize_text(s: &str) -> Vec<String> {
    s.chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect())
                .or_insert(0) += 1;
        }
    }
    out
}

/// Sentence BLEU with clipped counts for n = 1..4, uniform weights and the
/// brevity penalty against the closest reference length (shorter wins ties).
pub fn bleu4<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>]) -> f64 {
    if candidate.is_empty() || references.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngrams(candidate, n);
        let total: usize = cand.values().sum();
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for r in references {
            for (g, c) in ngrams(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let clipped: usize = cand
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if clipped == 0 {
            BLEU_EPS / total.max(1) as f64
        } else {
            clipped as f64 / total as f64
        };
        log_sum += 0.25 * p.ln();
    }
    let c = candidate.len();
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("references nonempty");
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * log_sum.exp()
}

fn lcs<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x.as_ref() == y.as_ref() {
                diag + 1
            } else {
                up.max(row[j])
            };
            diag = up;
        }
    }
    row[b.len()]
}

/// LCS F-measure with recall weighted by `beta = 1.2`.
pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    let l = lcs(candidate, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / candidate.len() as f64;
    let r = l as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Suffix stripping: `sses -> ss`, `ies -> y`, `-ing` (words of 6+ letters),
/// `-ed` (5+), then a final `s` on words of 4+ letters not ending in `ss`
/// or `us`.
pub fn stem(word: &str) -> String {
    let w = word.to_lowercase();
    if let Some(s) = w.strip_suffix("sses") {
        return format!("{s}ss");
    }
    if let Some(s) = w.strip_suffix("ies") {
        return format!("{s}y");
    }
    if w.len() >= 6 {
        if let Some(s) = w.strip_suffix("ing") {
            return s.to_string();
        }
    }
    if w.len() >= 5 {
        if let Some(s) = w.strip_suffix("ed") {
            return s.to_string();
        }
    }
    if w.len() >= 4 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") {
        return w[..w.len() - 1].to_string();
    }
    w
}

/// Alignment search state: next candidate position, used reference
/// positions, reference position matched by the previous candidate token.
type AlignKey = (usize, u128, Option<usize>);

struct Aligner<'a> {
    cand: &'a [String],
    refs: &'a [String],
    /// `cand_left[i][c]`: candidate tokens of class `c` at positions `>= i`.
    cand_left: Vec<Vec<usize>>,
    cand_class: Vec<usize>,
    ref_class: Vec<usize>,
    memo: HashMap<AlignKey, Option<usize>>,
}

impl Aligner<'_> {
    fn ref_unused(&self, used: u128, class: usize) -> usize {
        (0..self.refs.len())
            .filter(|&j| self.ref_class[j] == class && used & (1 << j) == 0)
            .count()
    }

    /// Fewest chunks for the suffix given that every still-matchable token
    /// must be matched (so the total match count is the maximum); `None`
    /// when that is impossible from this state.
    fn best(&mut self, i: usize, used: u128, prev: Option<usize>) -> Option<usize> {
        if i == self.cand.len() {
            return Some(0);
        }
        let key = (i, used, prev);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let class = self.cand_class[i];
        let unused = self.ref_unused(used, class);
        let mut best: Option<usize> = None;
        // Skipping is allowed only if later candidates of this class can
        // still use up the remaining references of the class.
        if self.cand_left[i + 1][class] >= unused {
            best = self.best(i + 1, used, None);
        }
        for j in 0..self.refs.len() {
            if used & (1 << j) != 0 || self.cand[i] != self.refs[j] {
                continue;
            }
            if let Some(c) = self.best(i + 1, used | (1 << j), Some(j)) {
                let extends = prev.is_some_and(|p| p + 1 == j);
                let total = c + usize::from(!extends);
                if best.is_none_or(|b| total < b) {
                    best = Some(total);
                }
            }
        }
        self.memo.insert(key, best);
        best
    }
}

/// Longest reference handled by the exact alignment search.
pub const METEOR_MAX_REF: usize = 128;

/// Unigram alignment on stems (exact matches are stem matches), choosing
/// the maximum number of matches and among those the fewest chunks.
/// Returns `(matches, chunks)`.
pub fn meteor_alignment<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> (usize, usize) {
    let cand: Vec<String> = candidate.iter().map(|w| stem(w.as_ref())).collect();
    let refs: Vec<String> = reference
        .iter()
        .take(METEOR_MAX_REF)
        .map(|w| stem(w.as_ref()))
        .collect();
    let mut classes: Vec<&String> = cand.iter().chain(&refs).collect();
    classes.sort();
    classes.dedup();
    let class_of = |w: &String| classes.binary_search(&w).expect("word has a class");
    let cand_class: Vec<usize> = cand.iter().map(class_of).collect();
    let ref_class: Vec<usize> = refs.iter().map(class_of).collect();
    let mut cand_left = vec![vec![0usize; classes.len()]; cand.len() + 1];
    for i in (0..cand.len()).rev() {
        cand_left[i] = cand_left[i + 1].clone();
        cand_left[i][cand_class[i]] += 1;
    }
    let matches: usize = (0..classes.len())
        .map(|c| {
            let in_ref = ref_class.iter().filter(|&&k| k == c).count();
            cand_left[0][c].min(in_ref)
        })
        .sum();
    let mut a = Aligner {
        cand: &cand,
        refs: &refs,
        cand_left,
        cand_class,
        ref_class,
        memo: HashMap::new(),
    };
    let chunks = a.best(0, 0, None).expect("maximum matching exists");
    (matches, chunks)
}

/// `F_mean = 10PR / (R + 9P)` times `1 - 0.5 (chunks / matches)^3`.
pub fn meteor_lite<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    let (m, chunks) = meteor_alignment(candidate, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    fmean * (1.0 - penalty)
}

fn tf_idf<'a>(
    counts: HashMap<Vec<&'a str>, usize>,
    df: &HashMap<Vec<&str>, usize>,
    n_docs: f64,
) -> HashMap<Vec<&'a str>, f64> {
    counts
        .into_iter()
        .map(|(g, c)| {
            let d = df.get(&g).copied().unwrap_or(0).max(1) as f64;
            (g, c as f64 * (n_docs.ln() - d.ln()))
        })
        .collect()
}

/// Corpus CIDEr without length damping. Document frequencies count the
/// videos whose references contain an n-gram;
/// `idf = ln(N) - ln(max(1, df))`. Per video: cosine of raw-count TF-IDF
/// vectors averaged over references, averaged over n = 1..4, times 10.
/// Returns the mean over videos in key order (videos missing a candidate
/// score as empty candidates).
pub fn cider<K: Ord, S: AsRef<str>>(
    candidates: &BTreeMap<K, Vec<S>>,
    references: &BTreeMap<K, Vec<Vec<S>>>,
) -> f64 {
    if references.is_empty() {
        return 0.0;
    }
    let n_docs = references.len() as f64;
    let mut total = 0.0;
    let mut per_n_df: Vec<HashMap<Vec<&str>, usize>> = Vec::new();
    for n in 1..=4 {
        let mut df: HashMap<Vec<&str>, usize> = HashMap::new();
        for refs in references.values() {
            let mut seen: HashMap<Vec<&str>, ()> = HashMap::new();
            for r in refs {
                for g in ngrams(r, n).into_keys() {
                    seen.insert(g, ());
                }
            }
            for g in seen.into_keys() {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        per_n_df.push(df);
    }
    let empty: Vec<S> = Vec::new();
    for (key, refs) in references {
        let cand = candidates.get(key).unwrap_or(&empty);
        let mut score = 0.0;
        for (ni, df) in per_n_df.iter().enumerate() {
            let cv = tf_idf(ngrams(cand, ni + 1), df, n_docs);
            let cn: f64 = cv.values().map(|v| v * v).sum::<f64>().sqrt();
            let mut sim = 0.0;
            for r in refs {
                let rv = tf_idf(ngrams(r, ni + 1), df, n_docs);
                let rn: f64 = rv.values().map(|v| v * v).sum::<f64>().sqrt();
                if cn > 0.0 && rn > 0.0 {
                    let dot: f64 = cv
                        .iter()
                        .map(|(g, v)| v * rv.get(g).copied().unwrap_or(0.0))
                        .sum();
                    sim += dot / (cn * rn);
                }
            }
            if !refs.is_empty() {
                score += sim / refs.len() as f64;
            }
        }
        total += 10.0 * score / 4.0;
    }
    total / n_docs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        tokenize_text(s)
    }

    #[test]
    fn tokenization() {
        assert_eq!(
            t("The cat, sat!  On-it."),
            ["the", "cat", "sat", "on", "it"]
        );
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let c = t("a person walks north in the scene");
        assert!((bleu4(&c, std::slice::from_ref(&c)) - 1.0).abs() < 1e-9);
        assert!(bleu4(&c, &[t("zebra quagga okapi giraffe llama")]) < 1e-6);
        assert_eq!(bleu4::<String>(&[], &[c]), 0.0);
    }

    #[test]
    fn bleu_cat_mat() {
        // p1 = 5/6, p2 = 3/5, p3 = 1/4, p4 = eps/3, equal lengths.
        let v = bleu4(&t("the cat sat on the mat"), &[t("the cat is on the mat")]);
        let expect =
            ((5.0f64 / 6.0).ln() + 0.6f64.ln() + 0.25f64.ln() + (1e-9f64 / 3.0).ln()) / 4.0;
        assert!((v - expect.exp()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l(&t("a b c"), &t("a b c")), 1.0);
        assert_eq!(rouge_l(&t("a b"), &t("c d")), 0.0);
        assert!((rouge_l(&t("the cat sat"), &t("the cat ran")) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn meteor_examples() {
        assert_eq!(meteor_lite(&t("a b"), &t("c d")), 0.0);
        let v = meteor_lite(&t("one two three"), &t("one two three"));
        assert!((v - (1.0 - 0.5 / 27.0)).abs() < 1e-12);
        assert_eq!(meteor_alignment(&t("cats sit"), &t("cat sits")), (2, 1));
    }

    #[test]
    fn meteor_prefers_fewer_chunks() {
        // "the" could align to either occurrence; the contiguous choice
        // gives one chunk.
        assert_eq!(
            meteor_alignment(&t("the cat"), &t("the dog the cat")),
            (2, 1)
        );
    }

    #[test]
    fn stems() {
        for (w, s) in [
            ("classes", "class"),
            ("ponies", "pony"),
            ("walking", "walk"),
            ("thing", "thing"),
            ("walked", "walk"),
            ("used", "used"),
            ("jumped", "jump"),
            ("cats", "cat"),
            ("bus", "bus"),
            ("glass", "glass"),
            ("is", "is"),
        ] {
            assert_eq!(stem(w), s, "{w}");
        }
    }

    #[test]
    fn cider_two_disjoint_videos() {
        let refs: BTreeMap<u32, Vec<Vec<String>>> = [
            (1, vec![t("a person walks north today")]),
            (2, vec![t("two people talk by the door")]),
        ]
        .into();
        let cands: BTreeMap<u32, Vec<String>> =
            refs.iter().map(|(k, v)| (*k, v[0].clone())).collect();
        assert!((cider(&cands, &refs) - 10.0).abs() < 1e-9);
        let off: BTreeMap<u32, Vec<String>> = [(1, t("zebra")), (2, t("okapi"))].into();
        assert_eq!(cider(&off, &refs), 0.0);
    }

    #[test]
    fn cider_single_video_degenerates() {
        let refs: BTreeMap<u32, Vec<Vec<String>>> = [(1, vec![t("a b c d")])].into();
        let cands: BTreeMap<u32, Vec<String>> = [(1, t("a b c d"))].into();
        assert_eq!(cider(&cands, &refs), 0.0);
    }
}
