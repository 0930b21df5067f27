//! CSV inputs: utility tables, interest profiles, session logs and
//! constraint-edit logs.

use std::collections::{BTreeMap, BTreeSet};

use fmrec_core::recommend::{EditLog, InterestProfile, RecommendError, SessionLog, UtilityTable};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("{0}")]
    Csv(String),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
}

fn rows<T: DeserializeOwned>(text: &str) -> Result<Vec<(u64, T)>, FormatError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| FormatError::Csv(e.to_string()))?.clone();
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec =
            rec.map_err(|e| FormatError::Row { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec.deserialize(Some(&headers)).map_err(|e| FormatError::Row { line, message: e.to_string() })?;
        out.push((line, row));
    }
    Ok(out)
}

/// `0`, `1`, `true` or `false`.
pub fn parse_bit(text: &str) -> Option<bool> {
    match text.trim() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

#[derive(Deserialize)]
struct UtilityRow {
    feature: String,
    dimension: String,
    utility: f64,
}

/// `feature,dimension,utility`.
pub fn read_utilities(text: &str) -> Result<UtilityTable, FormatError> {
    let rows: Vec<(u64, UtilityRow)> = rows(text)?;
    if rows.is_empty() {
        return Err(FormatError::Csv("utility table has no rows".into()));
    }
    let mut table = UtilityTable::new(rows.iter().map(|(_, r)| r.dimension.clone()))?;
    for (line, r) in rows {
        table.set(r.feature, &r.dimension, r.utility).map_err(|e| FormatError::Row { line, message: e.to_string() })?;
    }
    Ok(table)
}

#[derive(Deserialize)]
struct ProfileRow {
    dimension: String,
    weight: f64,
}

/// `dimension,weight`.
pub fn read_profile(user: &str, text: &str) -> Result<InterestProfile, FormatError> {
    let rows: Vec<(u64, ProfileRow)> = rows(text)?;
    let mut seen = BTreeSet::new();
    for (line, r) in &rows {
        if !seen.insert(r.dimension.as_str()) {
            return Err(FormatError::Row { line: *line, message: format!("dimension `{}` listed twice", r.dimension) });
        }
    }
    Ok(InterestProfile::new(user, rows.into_iter().map(|(_, r)| (r.dimension, r.weight)))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedValue {
    pub feature: String,
    pub value: bool,
    pub rank: u32,
}

/// One session read from a session-log file, events in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedSession {
    pub session_id: String,
    pub user_id: String,
    pub events: Vec<LoggedValue>,
    pub completed: bool,
}

impl LoggedSession {
    pub fn to_log(&self) -> SessionLog {
        let mut log = SessionLog::new(self.session_id.clone(), self.user_id.clone());
        for e in &self.events {
            log.values.insert(e.feature.clone(), e.value);
            log.ranks.insert(e.feature.clone(), e.rank);
        }
        log.completed = self.completed;
        log
    }
}

#[derive(Deserialize)]
struct SessionRow {
    session_id: String,
    user_id: String,
    feature: String,
    value: String,
    #[serde(default)]
    rank: Option<u32>,
    #[serde(default)]
    completed: Option<String>,
}

/// `session_id,user_id,feature,value,rank` with an optional trailing
/// `completed` column (default 1). An empty rank continues after the
/// session's highest rank so far.
pub fn read_sessions(text: &str) -> Result<Vec<LoggedSession>, FormatError> {
    let rows: Vec<(u64, SessionRow)> = rows(text)?;
    let mut order: Vec<String> = Vec::new();
    let mut sessions: BTreeMap<String, LoggedSession> = BTreeMap::new();
    for (line, r) in rows {
        let err = |message: String| FormatError::Row { line, message };
        let value = parse_bit(&r.value).ok_or_else(|| err(format!("value `{}` is not 0 or 1", r.value)))?;
        let completed = match r.completed.as_deref() {
            None | Some("") => true,
            Some(c) => parse_bit(c).ok_or_else(|| err(format!("completed flag `{c}` is not 0 or 1")))?,
        };
        let s = sessions.entry(r.session_id.clone()).or_insert_with(|| {
            order.push(r.session_id.clone());
            LoggedSession { session_id: r.session_id.clone(), user_id: r.user_id.clone(), events: vec![], completed }
        });
        if s.user_id != r.user_id {
            return Err(err(format!("session `{}` has more than one user", r.session_id)));
        }
        if s.completed != completed {
            return Err(err(format!("session `{}` has conflicting completed flags", r.session_id)));
        }
        if s.events.iter().any(|e| e.feature == r.feature) {
            return Err(err(format!("feature `{}` listed twice in session `{}`", r.feature, r.session_id)));
        }
        let rank = match r.rank {
            Some(0) => return Err(err("ranks start at 1".into())),
            Some(k) => k,
            None => s.events.iter().map(|e| e.rank).max().unwrap_or(0) + 1,
        };
        if s.events.iter().any(|e| e.rank == rank) {
            return Err(err(format!("rank {rank} used twice in session `{}`", r.session_id)));
        }
        s.events.push(LoggedValue { feature: r.feature, value, rank });
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let mut s = sessions.remove(&id).expect("session recorded in order");
            s.events.sort_by_key(|e| e.rank);
            s
        })
        .collect())
}

#[derive(Deserialize)]
struct EditRow {
    session_id: String,
    constraint: String,
    rank: u32,
}

/// `session_id,constraint,rank`.
pub fn read_edits(text: &str) -> Result<Vec<EditLog>, FormatError> {
    let rows: Vec<(u64, EditRow)> = rows(text)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_session: BTreeMap<String, Vec<(String, u32)>> = BTreeMap::new();
    for (line, r) in rows {
        let entry = by_session.entry(r.session_id.clone()).or_insert_with(|| {
            order.push(r.session_id.clone());
            Vec::new()
        });
        if entry.iter().any(|(c, k)| *c == r.constraint || *k == r.rank) {
            return Err(FormatError::Row {
                line,
                message: format!("duplicate constraint or rank in session `{}`", r.session_id),
            });
        }
        entry.push((r.constraint, r.rank));
    }
    Ok(order.into_iter().map(|id| EditLog::new(id.clone(), by_session.remove(&id).unwrap_or_default())).collect())
}
