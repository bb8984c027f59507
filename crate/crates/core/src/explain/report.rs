//! Plain-language reports built from explanations and KPI verdicts.
//!
//! Templates live in `templates/` as plain text. A slot is written `{name}`
//! and replaced at render time; unknown slots are left as they are.
//! `templates/phrases.txt` holds the sentence fragments, one `key = text`
//! per line.
//!
//! Piece report slots: `{piece_id}`, `{worker_id}`, `{significance}`,
//! `{feature_lines}`, `{confidence_pct}`, `{evidence}`, `{class_phrase}`.
//! Task reports add `{session_id}`, `{intra}`, `{inter}`, `{skills}` and
//! `{summary}`. Feature lines use `{label}` and `{statement}`; the bin
//! statement itself is built from `{bin_low}` and `{bin_high}`.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::catalog::feature_info;
use super::{Explanation, Term};
use crate::kpi::{Kpi, KpiStatus, KpiVerdict};
use crate::model::ExpertiseLabel;

const PIECE_TEMPLATE: &str = include_str!("../../templates/piece_report.txt");
const SESSION_TEMPLATE: &str = include_str!("../../templates/session_report.txt");
const PHRASES: &str = include_str!("../../templates/phrases.txt");

/// Replaces every `{key}` found in `slots`.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let key = &after[..close];
                match slots.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// `key = text` lines; `#` starts a comment. A value wrapped in double
/// quotes keeps its surrounding whitespace.
pub fn parse_phrases(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| {
            let v = v.trim_end();
            let v = v.strip_prefix('"').and_then(|x| x.strip_suffix('"')).unwrap_or(v);
            (k.trim().to_string(), v.to_string())
        })
        .collect()
}

fn phrases() -> &'static HashMap<String, String> {
    static P: OnceLock<HashMap<String, String>> = OnceLock::new();
    P.get_or_init(|| parse_phrases(PHRASES))
}

fn phrase(key: &str) -> &'static str {
    phrases().get(key).map(String::as_str).unwrap_or("")
}

/// Terms whose `|weight|` is at least half the largest one.
pub fn significant_terms(expl: &Explanation) -> Vec<&Term> {
    let max = expl.terms.iter().map(|t| t.signed_weight.abs()).fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    expl.terms.iter().filter(|t| t.signed_weight.abs() >= max / 2.0).collect()
}

/// The term raises the inexpert probability at this instance.
pub fn is_under_performance(t: &Term) -> bool {
    t.signed_weight * t.z_score > 0.0
}

pub fn confidence_pct(confidence: f64) -> u32 {
    (confidence * 100.0).round().clamp(0.0, 100.0) as u32
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn class_phrase(label: ExpertiseLabel) -> &'static str {
    match label {
        ExpertiseLabel::Expert => phrase("class.expert"),
        ExpertiseLabel::Inexpert => phrase("class.inexpert"),
    }
}

fn significance(n: usize) -> &'static str {
    match n {
        0 => phrase("significance.none"),
        1 => phrase("significance.one"),
        _ => phrase("significance.many"),
    }
}

fn term_statement(t: &Term) -> String {
    let info = feature_info(&t.feature);
    let b = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
    let with_unit = |s: String| if info.unit.is_empty() { s } else { format!("{s} {}", info.unit) };
    let (low, high) = (with_unit(b(t.bin.lower)), with_unit(b(t.bin.upper)));
    let subject = &info.name;
    let shape = match (t.bin.lower, t.bin.upper) {
        (Some(_), Some(_)) => "{bin_low} < {subject} ≤ {bin_high}",
        (None, Some(_)) => "{subject} ≤ {bin_high}",
        (Some(_), None) => "{subject} > {bin_low}",
        (None, None) => "{subject}",
    };
    fill(shape, &[("bin_low", &low), ("bin_high", &high), ("subject", subject)])
}

fn feature_lines(terms: &[&Term], label: impl Fn(&Term) -> String) -> String {
    terms
        .iter()
        .map(|t| {
            let line = fill(phrase("feature_line"), &[("label", &label(t)), ("statement", &term_statement(t))]);
            format!("\n{line}")
        })
        .collect()
}

/// Joined evidence phrase and the verb agreeing with it.
fn join_evidence(parts: Vec<String>) -> (String, &'static str) {
    let verb = if parts.len() > 1 { phrase("verb.many") } else { phrase("verb.one") };
    let text = match parts.split_last() {
        None => phrase("evidence.none").to_string(),
        Some((last, [])) => last.clone(),
        Some((last, rest)) => {
            let head = rest.join(phrase("evidence.separator"));
            fill(phrase("evidence.join"), &[("first", &head), ("second", last)])
        }
    };
    (text, verb)
}

/// Two numbered statements: significant features, then the prediction.
pub fn render_piece_report(expl: &Explanation, piece_id: &str, worker_id: &str) -> String {
    let sig = significant_terms(expl);
    let lines = feature_lines(&sig, |t| capitalize(&feature_info(&t.feature).name));
    let (evidence, verb) = join_evidence(sig.iter().map(|t| feature_info(&t.feature).evidence).collect());
    let pct = confidence_pct(expl.confidence).to_string();
    let out = fill(
        PIECE_TEMPLATE,
        &[
            ("piece_id", piece_id),
            ("worker_id", worker_id),
            ("significance", significance(sig.len())),
            ("feature_lines", &lines),
            ("confidence_pct", &pct),
            ("evidence", &evidence),
            ("indicates", verb),
            ("class_phrase", class_phrase(expl.predicted)),
        ],
    );
    out.trim_end().to_string()
}

fn intra_sentence(v: &KpiVerdict) -> String {
    let key = |k: &str, s: KpiStatus| {
        let tier = match s {
            KpiStatus::Over => "over",
            KpiStatus::Under => "under",
            KpiStatus::Neutral => "neutral",
        };
        phrase(&format!("intra.{k}.{tier}")).to_string()
    };
    let (inc, val) = (v.status(Kpi::NInc), v.status(Kpi::NVal));
    let first = key("n_inc", inc);
    let second = key("n_val", val);
    let opposite = matches!((inc, val), (KpiStatus::Over, KpiStatus::Under) | (KpiStatus::Under, KpiStatus::Over));
    let shape = if opposite { phrase("intra.contrast") } else { phrase("intra.join") };
    fill(shape, &[("first", &first), ("second", &second)])
}

fn inter_sentence(v: &KpiVerdict) -> String {
    let higher_if = |s: KpiStatus, over_is_higher: bool| match (s, over_is_higher) {
        (KpiStatus::Neutral, _) => phrase("inter.similar"),
        (KpiStatus::Over, true) | (KpiStatus::Under, false) => phrase("inter.higher"),
        _ => phrase("inter.lower"),
    };
    let tasks = higher_if(v.status(Kpi::NTask), true);
    let time = higher_if(v.status(Kpi::TTotal), false);
    if tasks == time {
        fill(phrase("inter.same"), &[("word", tasks)])
    } else {
        fill(phrase("inter.mixed"), &[("tasks", tasks), ("time", time)])
    }
}

/// Five numbered statements: significant features with their over/under
/// tag, prediction, own-history KPIs, peer KPIs and a summary.
pub fn render_session_report(
    expl: &Explanation,
    verdict_intra: &KpiVerdict,
    verdict_inter: &KpiVerdict,
    session_id: &str,
    worker_id: &str,
) -> String {
    let sig = significant_terms(expl);
    let lines = feature_lines(&sig, |t| {
        if is_under_performance(t) {
            phrase("tag.under").to_string()
        } else {
            phrase("tag.over").to_string()
        }
    });
    let (evidence, verb) = join_evidence(
        sig.iter()
            .map(|t| {
                let level = if t.z_score > 0.0 { phrase("level.high") } else { phrase("level.low") };
                format!("the {level} {}", feature_info(&t.feature).name)
            })
            .collect(),
    );
    let skills = match expl.predicted {
        ExpertiseLabel::Expert => phrase("skills.expert"),
        ExpertiseLabel::Inexpert if verdict_intra.any_over() || verdict_inter.any_over() => phrase("skills.developing"),
        ExpertiseLabel::Inexpert => phrase("skills.inexpert"),
    };
    let summary = match sig.iter().find(|t| is_under_performance(t)) {
        Some(t) => fill(phrase("summary.weak"), &[("weakest", &feature_info(&t.feature).name)]),
        None => phrase("summary.none").to_string(),
    };
    let pct = confidence_pct(expl.confidence).to_string();
    let out = fill(
        SESSION_TEMPLATE,
        &[
            ("session_id", session_id),
            ("worker_id", worker_id),
            ("significance", significance(sig.len())),
            ("feature_lines", &lines),
            ("confidence_pct", &pct),
            ("evidence", &evidence),
            ("indicates", verb),
            ("class_phrase", class_phrase(expl.predicted)),
            ("intra", &intra_sentence(verdict_intra)),
            ("inter", &inter_sentence(verdict_inter)),
            ("skills", skills),
            ("summary", &summary),
        ],
    );
    out.trim_end().to_string()
}

/// Number of top-level numbered statements (`"1. "`, `"2. "`, ...).
pub fn statement_count(report: &str) -> usize {
    report
        .lines()
        .filter(|l| {
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            digits > 0 && l[digits..].starts_with(". ")
        })
        .count()
}
