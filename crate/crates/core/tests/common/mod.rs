#![allow(dead_code)]

use std::collections::BTreeMap;

use fmrec_core::recommend::{EditLog, InterestProfile, SessionLog, UtilityTable};
use fmrec_core::{parse_model, translate, ConfigurationTask, SURVEY_MODEL};
use ndarray::{array, Array2};

pub const FEATURES: [&str; 9] = [
    "survey",
    "license",
    "advancedlicense",
    "basiclicense",
    "ABtesting",
    "statistics",
    "QA",
    "basicQA",
    "multimediaQA",
];

pub fn survey_task() -> ConfigurationTask {
    translate(&parse_model(SURVEY_MODEL).unwrap()).unwrap()
}

pub fn named(pairs: &[(&str, bool)]) -> BTreeMap<String, bool> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Configuration over all nine features from a 0/1 row in `FEATURES` order.
pub fn row(bits: [u8; 9]) -> BTreeMap<String, bool> {
    FEATURES.iter().zip(bits).map(|(f, b)| (f.to_string(), b == 1)).collect()
}

/// The three configurations listed for `ABtesting = 1`.
pub fn a1() -> BTreeMap<String, bool> {
    row([1, 1, 1, 0, 1, 1, 1, 1, 0])
}
pub fn a2() -> BTreeMap<String, bool> {
    row([1, 1, 1, 0, 1, 1, 1, 0, 1])
}
pub fn a3() -> BTreeMap<String, bool> {
    row([1, 1, 1, 0, 1, 1, 1, 1, 1])
}

pub fn utilities() -> UtilityTable {
    UtilityTable::from_rows([
        ("advancedlicense", "simplicity", 0.1),
        ("advancedlicense", "productivity", 1.0),
        ("basiclicense", "simplicity", 1.0),
        ("basiclicense", "productivity", 0.1),
        ("ABtesting", "simplicity", 0.3),
        ("ABtesting", "productivity", 1.0),
        ("statistics", "simplicity", 0.5),
        ("statistics", "productivity", 1.0),
        ("multimediaQA", "simplicity", 0.3),
        ("multimediaQA", "productivity", 1.0),
        ("basicQA", "simplicity", 1.0),
        ("basicQA", "productivity", 1.0),
    ])
    .unwrap()
}

pub fn profile_ua() -> InterestProfile {
    InterestProfile::new("ua", [("simplicity", 0.8), ("productivity", 0.2)]).unwrap()
}

pub fn profile_ub() -> InterestProfile {
    InterestProfile::new("ub", [("simplicity", 0.2), ("productivity", 0.8)]).unwrap()
}

const SESSION_COLUMNS: [&str; 8] =
    ["license", "advancedlicense", "basiclicense", "ABtesting", "statistics", "QA", "basicQA", "multimediaQA"];

fn session(id: &str, values: [u8; 8], ranks: [u32; 8]) -> SessionLog {
    let mut log = SessionLog::new(id, id);
    log.values = SESSION_COLUMNS.iter().zip(values).map(|(f, v)| (f.to_string(), v == 1)).collect();
    log.ranks = SESSION_COLUMNS.iter().zip(ranks).map(|(f, r)| (f.to_string(), r)).collect();
    log.complete()
}

/// Completed sessions u1..u3 with their values and specification ranks.
pub fn past_sessions() -> Vec<SessionLog> {
    vec![
        session("u1", [1, 0, 1, 0, 1, 1, 1, 0], [1, 3, 2, 4, 5, 6, 8, 7]),
        session("u2", [1, 1, 0, 1, 1, 1, 1, 1], [2, 3, 4, 1, 8, 5, 7, 6]),
        session("u3", [1, 0, 1, 0, 1, 1, 1, 0], [1, 2, 3, 5, 8, 4, 7, 6]),
    ]
}

/// The ongoing session: license=1, advancedlicense=0, basiclicense=1.
pub fn current_session() -> SessionLog {
    let mut log = SessionLog::new("current", "current");
    log.specify("license", true).specify("advancedlicense", false).specify("basiclicense", true);
    log
}

pub fn edit_logs() -> Vec<EditLog> {
    let ids = ["c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9"];
    let make = |id: &str, ranks: [u32; 9]| EditLog::new(id, ids.iter().copied().zip(ranks));
    vec![
        make("1", [1, 3, 2, 4, 5, 6, 8, 7, 9]),
        make("2", [2, 3, 4, 1, 8, 5, 7, 9, 6]),
        make("3", [1, 2, 3, 4, 9, 5, 7, 6, 8]),
    ]
}

pub fn current_edits() -> EditLog {
    EditLog::new("current", [("c1", 1), ("c2", 2), ("c3", 3)])
}

pub const MF_USERS: [&str; 2] = ["ua", "ub"];
pub const MF_FEATURES: [&str; 7] = ["adlic", "baslic", "AB", "stat", "mmQA", "basQA", "share"];

pub fn labels(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Users × (productivity, simplicity).
pub fn user_aspects() -> Array2<f64> {
    array![[0.8, 0.2], [0.2, 0.8]]
}

/// (productivity, simplicity) × features.
pub fn aspect_features() -> Array2<f64> {
    array![[1.0, 0.1, 1.0, 1.0, 1.0, 1.0, 0.7], [0.1, 1.0, 0.3, 0.5, 0.3, 1.0, 1.0]]
}
