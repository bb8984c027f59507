mod golden {
    include!("common/golden.rs");
}

use worksight::explain::report::{confidence_pct, statement_count};

#[test]
fn golden_reports_match() {
    assert_eq!(golden::mismatches(), Vec::<&str>::new());
}

#[test]
fn fixture_shapes() {
    for (name, text) in golden::cases() {
        let want = if name.starts_with("piece") { 2 } else { 5 };
        assert_eq!(statement_count(&text), want, "{name}:\n{text}");
    }
}

#[test]
fn confidence_rounds_to_integer_percent() {
    assert_eq!(confidence_pct(0.8123), 81);
    assert_eq!(confidence_pct(0.905), 91);
    assert_eq!(confidence_pct(1.2), 100);
}
