//! Markdown and CSV rendering of score tables.

use std::fmt::Write;

use super::interaction::Prf;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackingScores {
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub loc_a: f64,
    pub fn_: usize,
    pub fp: usize,
    pub id_switches: usize,
    pub idr: f64,
    pub idp: f64,
    pub idf1: f64,
    /// Undefined without ground-truth boxes.
    pub mota: Option<f64>,
}

/// Caption scores; all in `[0, 1]` except CIDEr in `[0, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TextScores {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SemanticScores {
    pub summary: TextScores,
    pub instance: TextScores,
    pub interaction: Prf,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

pub const TRACKING_COLUMNS: [&str; 10] = [
    "HOTA", "DetA", "AssA", "LocA", "FN", "FP", "IDs", "IDR", "IDP", "IDF1",
];

pub const SEMANTIC_COLUMNS: [&str; 11] = [
    "Summary B-4",
    "Summary R-L",
    "Summary M",
    "Summary C",
    "Instance B-4",
    "Instance R-L",
    "Instance M",
    "Instance C",
    "Interaction Prec",
    "Interaction Rec",
    "Interaction F1",
];

pub const ABLATION_COLUMNS: [&str; 10] = [
    "Exp", "Vid-Fus", "Ins-Fus", "HOTA", "IDF1", "METEOR", "CIDEr", "mF1", "Rec", "macro-F1",
];

pub fn tracking_cells(t: &TrackingScores) -> Vec<String> {
    vec![
        format!("{:.2}", t.hota),
        format!("{:.2}", t.det_a),
        format!("{:.2}", t.ass_a),
        format!("{:.2}", t.loc_a),
        t.fn_.to_string(),
        t.fp.to_string(),
        t.id_switches.to_string(),
        format!("{:.2}", t.idr),
        format!("{:.2}", t.idp),
        format!("{:.2}", t.idf1),
    ]
}

pub fn semantic_cells(s: &SemanticScores) -> Vec<String> {
    let text = |t: &TextScores| [t.bleu4, t.rouge_l, t.meteor, t.cider];
    text(&s.summary)
        .into_iter()
        .chain(text(&s.instance))
        .chain([
            s.interaction.precision,
            s.interaction.recall,
            s.interaction.f1,
        ])
        .map(|v| format!("{v:.3}"))
        .collect()
}

fn md_table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}|", vec!["---"; header.len()].join("|"));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
}

fn csv_table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "{}", header.join(","));
    for r in rows {
        let _ = writeln!(out, "{}", r.join(","));
    }
}

fn mota_text(m: Option<f64>) -> String {
    m.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

/// Tracking table (`HOTA DetA AssA LocA FN FP IDs IDR IDP IDF1`), MOTA,
/// then the semantic table (summary and instance B-4/R-L/M/C, interaction
/// Prec/Rec/F1) and the macro-F1.
pub fn render_report(
    method: &str,
    t: &TrackingScores,
    s: &SemanticScores,
    format: ReportFormat,
) -> Vec<u8> {
    let mut out = String::new();
    let mut trow = vec![method.to_string()];
    trow.extend(tracking_cells(t));
    let mut srow = vec![method.to_string()];
    srow.extend(semantic_cells(s));
    let theader: Vec<&str> = std::iter::once("Method").chain(TRACKING_COLUMNS).collect();
    let sheader: Vec<&str> = std::iter::once("Method").chain(SEMANTIC_COLUMNS).collect();
    match format {
        ReportFormat::Markdown => {
            out.push_str("# Evaluation\n\n## Tracking\n\n");
            md_table(&mut out, &theader, &[trow]);
            let _ = writeln!(out, "\nMOTA: {}\n\n## Semantics\n", mota_text(t.mota));
            md_table(&mut out, &sheader, &[srow]);
            let _ = writeln!(out, "\nInteraction macro-F1: {:.3}", s.macro_f1);
        }
        ReportFormat::Csv => {
            let mut th = theader.clone();
            th.push("MOTA");
            trow.push(mota_text(t.mota));
            csv_table(&mut out, &th, &[trow]);
            out.push('\n');
            let mut sh = sheader.clone();
            sh.push("Interaction macro-F1");
            srow.push(format!("{:.3}", s.macro_f1));
            csv_table(&mut out, &sh, &[srow]);
        }
    }
    out.into_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub exp: usize,
    pub vid_fus: bool,
    pub ins_fus: bool,
    pub hota: f64,
    pub idf1: f64,
    /// Summary METEOR and CIDEr.
    pub meteor: f64,
    pub cider: f64,
    /// Micro-averaged interaction F1 and recall.
    pub f1: f64,
    pub recall: f64,
    pub macro_f1: f64,
}

pub fn render_ablation(rows: &[AblationRow], format: ReportFormat) -> Vec<u8> {
    let mark = |b: bool| if b { "x" } else { "-" }.to_string();
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.exp.to_string(),
                mark(r.vid_fus),
                mark(r.ins_fus),
                format!("{:.2}", r.hota),
                format!("{:.2}", r.idf1),
                format!("{:.3}", r.meteor),
                format!("{:.3}", r.cider),
                format!("{:.3}", r.f1),
                format!("{:.3}", r.recall),
                format!("{:.3}", r.macro_f1),
            ]
        })
        .collect();
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => md_table(&mut out, &ABLATION_COLUMNS, &cells),
        ReportFormat::Csv => csv_table(&mut out, &ABLATION_COLUMNS, &cells),
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_render() {
        let md = String::from_utf8(render_report(
            "x",
            &TrackingScores::default(),
            &SemanticScores::default(),
            ReportFormat::Markdown,
        ))
        .unwrap();
        assert!(md.contains("| x | 0.00 | 0.00 | 0.00 | 0.00 | 0 | 0 | 0 | 0.00 | 0.00 | 0.00 |"));
        assert!(md.contains("| x | 0.000 | 0.000 | 0.000 | 0.000 | 0.000 | 0.000 | 0.000 | 0.000 | 0.000 | 0.000 | 0.000 |"));
        assert!(md.contains("MOTA: n/a"));
    }

    #[test]
    fn csv_header_order() {
        let csv = String::from_utf8(render_report(
            "m",
            &TrackingScores::default(),
            &SemanticScores::default(),
            ReportFormat::Csv,
        ))
        .unwrap();
        let first = csv.lines().next().unwrap();
        assert_eq!(
            first,
            "Method,HOTA,DetA,AssA,LocA,FN,FP,IDs,IDR,IDP,IDF1,MOTA"
        );
    }
}
