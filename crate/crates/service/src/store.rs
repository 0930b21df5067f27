//! Persistent state: models, configuration sessions, utility data and
//! factorization jobs, kept in memory and backed by an append-only JSON-lines
//! journal. Every mutation is written and synced to the journal before it is
//! applied and acknowledged; opening a store replays the journal.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use fmrec_core::factorize::{rmse, train, FactorPair, FactorizeError, InteractionMatrix, TrainConfig};
use fmrec_core::recommend::{InterestProfile, SessionLog, UtilityTable};
use fmrec_core::solver::Propagation;
use fmrec_core::{
    parse_model, translate, Assignment, ConfigurationTask, FeatureModel, ParseError, Requirement, Solver,
};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::formats::LoggedSession;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("unknown factorization job `{0}`")]
    UnknownJob(String),
    #[error("no factorization job has been run")]
    NoJobs,
    #[error("model source: {0}")]
    Parse(#[from] ParseError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("session `{0}` is already completed")]
    SessionCompleted(String),
    #[error("session `{0}` is inconsistent")]
    SessionInconsistent(String),
    #[error("id `{0}` is already in use")]
    DuplicateId(String),
    #[error("rank {rank} does not follow rank {last} in session `{session}`")]
    RankRegression { session: String, rank: u32, last: u32 },
    #[error("{0}")]
    Rejected(String),
    #[error(transparent)]
    Factorize(#[from] FactorizeError),
    #[error("journal line {line}: {message}")]
    Journal { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Open,
    Completed,
    Inconsistent,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Open => "open",
            SessionStatus::Completed => "completed",
            SessionStatus::Inconsistent => "inconsistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    pub source: String,
    pub created: u64,
}

/// A stored model with its parsed form and derived configuration task.
#[derive(Debug, Clone, Serialize)]
pub struct ModelEntry {
    #[serde(flatten)]
    pub record: ModelRecord,
    #[serde(skip)]
    pub model: FeatureModel,
    #[serde(skip)]
    pub task: ConfigurationTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentEvent {
    pub feature: String,
    pub value: bool,
    pub rank: u32,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub model_id: String,
    pub user_id: String,
    pub created: u64,
    pub events: Vec<AssignmentEvent>,
    pub status: SessionStatus,
}

impl SessionRecord {
    /// Current value of every specified feature (the latest assignment wins).
    pub fn values(&self) -> BTreeMap<String, bool> {
        self.events.iter().map(|e| (e.feature.clone(), e.value)).collect()
    }

    /// Values plus first-specification ranks, as used by the recommenders.
    pub fn to_log(&self) -> SessionLog {
        let mut log = SessionLog::new(self.session_id.clone(), self.user_id.clone());
        for e in &self.events {
            log.values.insert(e.feature.clone(), e.value);
            log.ranks.entry(e.feature.clone()).or_insert(e.rank);
        }
        log.completed = self.status == SessionStatus::Completed;
        log
    }

    pub fn partial(&self, task: &ConfigurationTask) -> Assignment {
        self.values().into_iter().filter_map(|(f, v)| task.var(&f).map(|var| (var, v))).collect()
    }

    /// Current values as requirements, ordered by when each feature was
    /// first specified.
    pub fn requirements(&self, task: &ConfigurationTask) -> Vec<Requirement> {
        let values = self.values();
        let mut seen = Vec::new();
        for e in &self.events {
            if !seen.contains(&e.feature) {
                seen.push(e.feature.clone());
            }
        }
        seen.iter()
            .filter_map(|f| {
                task.var(f).map(|var| {
                    let mut r = Requirement::new(var, values[f]);
                    r.provenance = Some(self.session_id.clone());
                    r
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfJob {
    pub job_id: String,
    pub config: TrainConfig,
    pub rmse: f64,
    pub factors: FactorPair,
    pub created: u64,
}

/// One journal line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    ModelStored(ModelRecord),
    SessionCreated { session_id: String, model_id: String, user_id: String, created: u64 },
    Assigned { session_id: String, assignment: AssignmentEvent, status: SessionStatus },
    Completed { session_id: String, timestamp: u64 },
    UtilitiesSet { model_id: String, table: UtilityTable },
    ProfileSet { profile: InterestProfile },
    MfTrained(MfJob),
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct State {
    pub models: BTreeMap<String, ModelEntry>,
    pub sessions: BTreeMap<String, SessionRecord>,
    pub utilities: BTreeMap<String, UtilityTable>,
    pub profiles: BTreeMap<String, InterestProfile>,
    pub jobs: BTreeMap<String, MfJob>,
    pub latest_job: Option<String>,
}

fn load_model(source: &str) -> Result<(FeatureModel, ConfigurationTask), StoreError> {
    let model = parse_model(source)?;
    let task = translate(&model).map_err(|e| StoreError::InvalidModel(e.to_string()))?;
    Ok((model, task))
}

impl State {
    pub fn model(&self, id: &str) -> Result<&ModelEntry, StoreError> {
        self.models.get(id).ok_or_else(|| StoreError::UnknownModel(id.to_string()))
    }

    pub fn session(&self, id: &str) -> Result<&SessionRecord, StoreError> {
        self.sessions.get(id).ok_or_else(|| StoreError::UnknownSession(id.to_string()))
    }

    pub fn profile(&self, id: &str) -> Result<&InterestProfile, StoreError> {
        self.profiles.get(id).ok_or_else(|| StoreError::UnknownProfile(id.to_string()))
    }

    pub fn job(&self, id: Option<&str>) -> Result<&MfJob, StoreError> {
        let id = match id {
            Some(id) => id,
            None => self.latest_job.as_deref().ok_or(StoreError::NoJobs)?,
        };
        self.jobs.get(id).ok_or_else(|| StoreError::UnknownJob(id.to_string()))
    }

    /// Session logs of every session on `model_id`.
    pub fn logs(&self, model_id: &str) -> Vec<SessionLog> {
        self.sessions.values().filter(|s| s.model_id == model_id).map(SessionRecord::to_log).collect()
    }

    fn fresh_id(&self, prefix: &str, taken: impl Fn(&str) -> bool) -> String {
        (1..).map(|n| format!("{prefix}{n}")).find(|id| !taken(id)).expect("unbounded id space")
    }

    fn apply(&mut self, event: &Event) -> Result<(), StoreError> {
        match event {
            Event::ModelStored(record) => {
                let (model, task) = load_model(&record.source)?;
                self.models.insert(record.model_id.clone(), ModelEntry { record: record.clone(), model, task });
            }
            Event::SessionCreated { session_id, model_id, user_id, created } => {
                self.model(model_id)?;
                self.sessions.insert(
                    session_id.clone(),
                    SessionRecord {
                        session_id: session_id.clone(),
                        model_id: model_id.clone(),
                        user_id: user_id.clone(),
                        created: *created,
                        events: Vec::new(),
                        status: SessionStatus::Open,
                    },
                );
            }
            Event::Assigned { session_id, assignment, status } => {
                let s =
                    self.sessions.get_mut(session_id).ok_or_else(|| StoreError::UnknownSession(session_id.clone()))?;
                let last = s.events.last().map_or(0, |e| e.rank);
                if assignment.rank <= last {
                    return Err(StoreError::RankRegression {
                        session: session_id.clone(),
                        rank: assignment.rank,
                        last,
                    });
                }
                s.events.push(assignment.clone());
                s.status = *status;
            }
            Event::Completed { session_id, .. } => {
                let s =
                    self.sessions.get_mut(session_id).ok_or_else(|| StoreError::UnknownSession(session_id.clone()))?;
                s.status = SessionStatus::Completed;
            }
            Event::UtilitiesSet { model_id, table } => {
                self.utilities.insert(model_id.clone(), table.clone());
            }
            Event::ProfileSet { profile } => {
                self.profiles.insert(profile.user.clone(), profile.clone());
            }
            Event::MfTrained(job) => {
                self.jobs.insert(job.job_id.clone(), job.clone());
                self.latest_job = Some(job.job_id.clone());
            }
        }
        Ok(())
    }
}

/// Outcome of recording one assignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignOutcome {
    pub status: SessionStatus,
    /// Values implied by propagation that the user has not set, in variable order.
    pub forced: Vec<(String, bool)>,
}

/// Status of a session after its values become `partial`, plus the values
/// propagation forces beyond it.
fn evaluate(task: &ConfigurationTask, partial: &Assignment) -> (SessionStatus, Vec<(String, bool)>) {
    let solver = Solver::new(task);
    // Partial assignments only ever name task variables, so these cannot fail.
    let propagated = solver.propagate(partial).expect("session values name task variables");
    match propagated {
        Propagation::Conflict => (SessionStatus::Inconsistent, Vec::new()),
        Propagation::Fixpoint(fixed) => {
            if !solver.is_consistent(partial).expect("session values name task variables") {
                return (SessionStatus::Inconsistent, Vec::new());
            }
            let forced = fixed
                .iter()
                .filter(|(v, _)| partial.get(*v).is_none())
                .map(|(v, b)| (task.name(v).to_string(), b))
                .collect();
            (SessionStatus::Open, forced)
        }
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub struct Store {
    state: RwLock<State>,
    /// Held while appending to the journal and applying the result.
    journal: Mutex<Option<File>>,
    path: Option<PathBuf>,
    /// Serializes mutations that allocate ids or touch shared data.
    global: Mutex<()>,
    session_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store {
            state: RwLock::new(State::default()),
            journal: Mutex::new(None),
            path: None,
            global: Mutex::new(()),
            session_locks: Mutex::new(HashMap::new()),
        }
    }

    /// Opens (or creates) a journal and replays it. A final line cut short by
    /// a crash is dropped and truncated away; any other bad line is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut state = State::default();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line_no = 0;
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let complete = buf.ends_with('\n');
            let text = buf.trim();
            if text.is_empty() {
                good_len += n as u64;
                continue;
            }
            match serde_json::from_str::<Event>(text) {
                Ok(event) => {
                    state.apply(&event).map_err(|e| StoreError::Journal { line: line_no, message: e.to_string() })?;
                    good_len += n as u64;
                }
                Err(e) if !complete => {
                    log::warn!("dropping truncated journal line {line_no}: {e}");
                    break;
                }
                Err(e) => return Err(StoreError::Journal { line: line_no, message: e.to_string() }),
            }
        }
        drop(reader);
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(Store {
            state: RwLock::new(state),
            journal: Mutex::new(Some(file)),
            path: Some(path),
            global: Mutex::new(()),
            session_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn read<R>(&self, f: impl FnOnce(&State) -> R) -> R {
        f(&self.state.read())
    }

    /// SHA-256 over the canonical JSON form of the whole state.
    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(&*self.state.read()).expect("state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn commit(&self, events: &[Event]) -> Result<(), StoreError> {
        let mut journal = self.journal.lock();
        if let Some(file) = journal.as_mut() {
            let mut out = Vec::new();
            for e in events {
                serde_json::to_writer(&mut out, e).expect("events serialize");
                out.push(b'\n');
            }
            file.write_all(&out)?;
            file.sync_data()?;
        }
        let mut state = self.state.write();
        for e in events {
            state.apply(e)?;
        }
        Ok(())
    }

    fn session_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.session_locks.lock().entry(id.to_string()).or_default().clone()
    }

    pub fn store_model(&self, source: &str) -> Result<String, StoreError> {
        load_model(source)?;
        let _g = self.global.lock();
        let model_id = self.read(|s| s.fresh_id("m", |id| s.models.contains_key(id)));
        self.commit(&[Event::ModelStored(ModelRecord {
            model_id: model_id.clone(),
            source: source.to_string(),
            created: now(),
        })])?;
        Ok(model_id)
    }

    pub fn create_session(&self, model_id: &str, user_id: &str) -> Result<String, StoreError> {
        let _g = self.global.lock();
        let session_id = self.read(|s| -> Result<String, StoreError> {
            s.model(model_id)?;
            Ok(s.fresh_id("s", |id| s.sessions.contains_key(id)))
        })?;
        self.commit(&[Event::SessionCreated {
            session_id: session_id.clone(),
            model_id: model_id.to_string(),
            user_id: user_id.to_string(),
            created: now(),
        }])?;
        Ok(session_id)
    }

    /// Records `feature = value` with the next rank. The session is flagged
    /// inconsistent when its values admit no configuration.
    pub fn assign(&self, session_id: &str, feature: &str, value: bool) -> Result<AssignOutcome, StoreError> {
        let lock = self.session_lock(session_id);
        let _g = lock.lock();
        let (event, outcome) = self.read(|s| -> Result<_, StoreError> {
            let session = s.session(session_id)?;
            if session.status == SessionStatus::Completed {
                return Err(StoreError::SessionCompleted(session_id.to_string()));
            }
            let task = &s.model(&session.model_id)?.task;
            let var = task.var(feature).ok_or_else(|| StoreError::UnknownFeature(feature.to_string()))?;
            let partial = session.partial(task).with(var, value);
            let (status, forced) = evaluate(task, &partial);
            let rank = session.events.last().map_or(0, |e| e.rank) + 1;
            let event = Event::Assigned {
                session_id: session_id.to_string(),
                assignment: AssignmentEvent { feature: feature.to_string(), value, rank, timestamp: now() },
                status,
            };
            Ok((event, AssignOutcome { status, forced }))
        })?;
        self.commit(&[event])?;
        Ok(outcome)
    }

    pub fn complete(&self, session_id: &str) -> Result<SessionStatus, StoreError> {
        let lock = self.session_lock(session_id);
        let _g = lock.lock();
        self.read(|s| -> Result<(), StoreError> {
            match s.session(session_id)?.status {
                SessionStatus::Inconsistent => Err(StoreError::SessionInconsistent(session_id.to_string())),
                SessionStatus::Completed => Err(StoreError::SessionCompleted(session_id.to_string())),
                SessionStatus::Open => Ok(()),
            }
        })?;
        self.commit(&[Event::Completed { session_id: session_id.to_string(), timestamp: now() }])?;
        Ok(SessionStatus::Completed)
    }

    /// Adds logged sessions to a model, keeping their ids and ranks. Sessions
    /// marked completed must be consistent.
    pub fn import_sessions(&self, model_id: &str, sessions: &[LoggedSession]) -> Result<Vec<String>, StoreError> {
        let _g = self.global.lock();
        let events = self.read(|s| -> Result<Vec<Event>, StoreError> {
            let task = &s.model(model_id)?.task;
            let mut events = Vec::new();
            let mut ids = Vec::new();
            for ls in sessions {
                if s.sessions.contains_key(&ls.session_id) || ids.contains(&ls.session_id) {
                    return Err(StoreError::DuplicateId(ls.session_id.clone()));
                }
                ids.push(ls.session_id.clone());
                let created = now();
                events.push(Event::SessionCreated {
                    session_id: ls.session_id.clone(),
                    model_id: model_id.to_string(),
                    user_id: ls.user_id.clone(),
                    created,
                });
                let mut partial = Assignment::new();
                let mut status = SessionStatus::Open;
                for e in &ls.events {
                    let var = task.var(&e.feature).ok_or_else(|| StoreError::UnknownFeature(e.feature.clone()))?;
                    partial.insert(var, e.value);
                    status = evaluate(task, &partial).0;
                    events.push(Event::Assigned {
                        session_id: ls.session_id.clone(),
                        assignment: AssignmentEvent {
                            feature: e.feature.clone(),
                            value: e.value,
                            rank: e.rank,
                            timestamp: created,
                        },
                        status,
                    });
                }
                if ls.completed {
                    if status == SessionStatus::Inconsistent {
                        return Err(StoreError::Rejected(format!(
                            "session `{}` is inconsistent and cannot be imported as completed",
                            ls.session_id
                        )));
                    }
                    events.push(Event::Completed { session_id: ls.session_id.clone(), timestamp: created });
                }
            }
            Ok(events)
        })?;
        self.commit(&events)?;
        Ok(sessions.iter().map(|s| s.session_id.clone()).collect())
    }

    /// Utility table for a model; every feature it rates must exist in the model.
    pub fn set_utilities(&self, model_id: &str, table: UtilityTable) -> Result<(), StoreError> {
        let _g = self.global.lock();
        self.read(|s| -> Result<(), StoreError> {
            let task = &s.model(model_id)?.task;
            match table.features().find(|f| task.var(f).is_none()) {
                Some(f) => Err(StoreError::UnknownFeature(f.to_string())),
                None => Ok(()),
            }
        })?;
        self.commit(&[Event::UtilitiesSet { model_id: model_id.to_string(), table }])
    }

    pub fn set_profile(&self, profile: InterestProfile) -> Result<(), StoreError> {
        let _g = self.global.lock();
        self.commit(&[Event::ProfileSet { profile }])
    }

    /// Trains factors on `matrix` and stores them as a new job.
    pub fn train(&self, matrix: &InteractionMatrix, config: TrainConfig) -> Result<MfJob, StoreError> {
        let factors = train(matrix, &config)?;
        let fit = rmse(matrix, &factors.predict().values)?;
        let _g = self.global.lock();
        let job_id = self.read(|s| s.fresh_id("j", |id| s.jobs.contains_key(id)));
        let job = MfJob { job_id, config, rmse: fit, factors, created: now() };
        self.commit(&[Event::MfTrained(job.clone())])?;
        Ok(job)
    }
}
