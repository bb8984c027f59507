//! Human-readable names for feature columns.

/// Display metadata of one feature column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureInfo {
    pub name: String,
    pub unit: &'static str,
    /// Noun phrase used in prediction sentences.
    pub evidence: String,
}

/// Base names of the numbered features, index = feature number.
const NAMES: [&str; 16] = [
    "",
    "identifier",
    "input instant",
    "output delay",
    "time between pieces",
    "number of invalid pieces",
    "number of valid pieces",
    "number of directly placed pieces",
    "number of pieces collected from the tray",
    "number of pieces taken to the buffer",
    "number of reloads",
    "number of assistant reboots",
    "share of valid pieces",
    "time between pieces",
    "time between valid pieces",
    "manufacturing time",
];

fn number(base: &str) -> Option<usize> {
    base.strip_prefix('f')?.parse().ok().filter(|n| (1..=15).contains(n))
}

fn plural(name: &str) -> String {
    match name {
        "time between pieces" => "times between pieces".into(),
        "time between valid pieces" => "times between valid pieces".into(),
        "share of valid pieces" => "piece types".into(),
        other => format!("{other}s"),
    }
}

/// Metadata for piece columns (`f03`) and task columns (`f03(avg)`, `f09`).
pub fn feature_info(column: &str) -> FeatureInfo {
    let (base, stat) = match column.split_once('(') {
        Some((b, rest)) => (b, rest.strip_suffix(')')),
        None => (column, None),
    };
    let Some(n) = number(base) else {
        return FeatureInfo { name: column.to_string(), unit: "", evidence: column.to_string() };
    };
    let unit = match n {
        2 | 3 | 4 | 13 | 14 | 15 => "s",
        12 => "",
        _ => "units",
    };
    let name = match stat {
        Some("avg") => format!("{} average", plural(NAMES[n])),
        Some("q1") => format!("{} first quartile", plural(NAMES[n])),
        Some("q2") => format!("{} median", plural(NAMES[n])),
        Some("q3") => format!("{} third quartile", plural(NAMES[n])),
        _ => NAMES[n].to_string(),
    };
    let evidence = match n {
        3 if stat.is_none() => "the time reflected in the output delay".to_string(),
        _ => format!("the {name}"),
    };
    FeatureInfo { name, unit, evidence }
}
