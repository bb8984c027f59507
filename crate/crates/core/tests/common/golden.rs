// Golden report fixtures shared by the acceptance gate and the report tests.
// Set UPDATE_GOLDEN=1 to rewrite the files from the current renderer.

use std::path::PathBuf;

use worksight::explain::report::{render_piece_report, render_session_report};
use worksight::explain::{Bin, Explanation, Term};
use worksight::kpi::{Kpi, KpiStatus, KpiVerdict};
use worksight::model::ExpertiseLabel;

fn term(feature: &str, value: f64, lower: Option<f64>, upper: Option<f64>, weight: f64, z: f64) -> Term {
    let bin = Bin { lower, upper };
    Term { feature: feature.into(), value, bin, bin_statement: bin.statement(feature, ""), signed_weight: weight, z_score: z }
}

fn verdict(pairs: &[(Kpi, KpiStatus)]) -> KpiVerdict {
    let mut v = KpiVerdict::neutral();
    for &(k, s) in pairs {
        v.statuses.insert(k, s);
    }
    v
}

pub fn cases() -> Vec<(&'static str, String)> {
    let piece = Explanation {
        instance_id: "7".into(),
        predicted: ExpertiseLabel::Inexpert,
        confidence: 0.8123,
        terms: vec![
            term("f03", 41.0, Some(34.0), None, 0.31, 1.4),
            term("f02", 210.0, Some(120.5), Some(260.0), -0.22, 0.3),
            term("f04", 3.0, None, Some(5.0), 0.05, -0.8),
        ],
        surrogate_r2: 0.7,
    };
    let session = Explanation {
        instance_id: "t014".into(),
        predicted: ExpertiseLabel::Expert,
        confidence: 0.905,
        terms: vec![
            term("f09", 7.0, Some(6.0), None, -0.4, 1.2),
            term("f03(avg)", 30.5, Some(26.0), Some(34.0), 0.35, 0.4),
            term("f12(q2)", 1.0, None, Some(2.0), 0.1, -0.9),
        ],
        surrogate_r2: 0.6,
    };
    let flat = Explanation {
        instance_id: "t002".into(),
        predicted: ExpertiseLabel::Inexpert,
        confidence: 0.5,
        terms: vec![term("f09", 2.0, None, Some(4.0), 0.0, -1.0)],
        surrogate_r2: 0.0,
    };
    let intra = verdict(&[(Kpi::NInc, KpiStatus::Over), (Kpi::NVal, KpiStatus::Under)]);
    let inter = verdict(&[(Kpi::NTask, KpiStatus::Over), (Kpi::TTotal, KpiStatus::Under)]);
    let developing = verdict(&[(Kpi::NTask, KpiStatus::Over)]);
    vec![
        ("piece_two_terms", render_piece_report(&piece, "7", "i2")),
        ("session_mixed", render_session_report(&session, &intra, &inter, "t014", "e1")),
        ("session_flat", render_session_report(&flat, &KpiVerdict::neutral(), &developing, "t002", "i1")),
    ]
}

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"))
}

/// Names of fixtures whose rendering differs from the stored file.
pub fn mismatches() -> Vec<&'static str> {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut bad = Vec::new();
    for (name, text) in cases() {
        if update {
            std::fs::write(path(name), format!("{text}\n")).expect("write golden");
        }
        match std::fs::read_to_string(path(name)) {
            Ok(want) if want.trim_end() == text => {}
            _ => bad.push(name),
        }
    }
    bad
}

#[allow(dead_code)]
pub fn all_match() -> bool {
    mismatches().is_empty()
}
