//! The `fmrec` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use fmrec_core::factorize::{binarize, FactorPair, InteractionMatrix, TrainConfig, DEFAULT_THRESHOLD};
use fmrec_core::recommend::{
    consistency_filtered, rank_configurations, recommend_next_constraint, recommend_next_feature, recommend_value,
    EditLog, Filtered, SessionLog,
};
use fmrec_core::{
    diagnose_task, parse_model, rank_repairs, repairs, translate, Assignment, ConfigurationTask, Limit, Requirement,
    Solver,
};
use serde_json::{json, Value};
use thiserror::Error;

use crate::formats::{read_edits, read_profile, read_sessions, read_utilities};
use crate::store::Store;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

fn data(e: impl ToString) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "fmrec", version, about = "Feature-model configuration and recommendation")]
pub struct Cli {
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Feature model in the textual DSL.
    model: PathBuf,
    /// Requirement `feature=0|1`; may be repeated or comma-separated.
    #[arg(long = "require", short = 'r', value_delimiter = ',')]
    require: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the Boolean constraints of a model.
    Translate { model: PathBuf },
    /// Find one configuration.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// List configurations.
    Enumerate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Rank configurations by utility for one profile.
    Rank {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        utilities: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Recommend a value for a feature from past sessions.
    RecommendValue {
        model: PathBuf,
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long)]
        feature: String,
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Values of the current session, in the order they were set.
        #[arg(long = "set", value_delimiter = ',')]
        set: Vec<String>,
    },
    /// Recommend the next feature (from sessions) or constraint (from edits).
    RecommendNext {
        #[arg(long, conflicts_with = "edits", required_unless_present = "edits")]
        sessions: Option<PathBuf>,
        #[arg(long)]
        edits: Option<PathBuf>,
        /// Current session values `feature=0|1`, in order.
        #[arg(long = "set", value_delimiter = ',', conflicts_with = "edits")]
        set: Vec<String>,
        /// Constraints already edited in the current session, in order.
        #[arg(long = "done", value_delimiter = ',', requires = "edits")]
        done: Vec<String>,
    },
    /// Minimal conflicts and diagnoses of the requirements.
    Diagnose {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Repairs of inconsistent requirements, ranked when a profile is given.
    Repairs {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, requires = "profile")]
        utilities: Option<PathBuf>,
        #[arg(long, requires = "utilities")]
        profile: Option<PathBuf>,
    },
    /// Factorize a user-feature matrix.
    MfTrain {
        matrix: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.05)]
        rate: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write user-aspect factors here.
        #[arg(long)]
        out_ua: Option<PathBuf>,
        /// Write aspect-feature factors here.
        #[arg(long)]
        out_af: Option<PathBuf>,
    },
    /// Predict relevance scores from stored factors.
    MfPredict {
        #[arg(long)]
        ua: PathBuf,
        #[arg(long)]
        af: PathBuf,
        #[arg(long)]
        user: Option<String>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "fmrec.journal")]
        journal: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Load session logs into a journal, storing the model first.
    ImportSessions {
        #[arg(long)]
        journal: PathBuf,
        /// Model file; stored as a new model.
        #[arg(long, conflicts_with = "model_id", required_unless_present = "model_id")]
        model: Option<PathBuf>,
        /// Id of a model already in the journal.
        #[arg(long)]
        model_id: Option<String>,
        sessions: PathBuf,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_task(path: &Path) -> Result<(fmrec_core::FeatureModel, ConfigurationTask), CliError> {
    let model = parse_model(&read(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let task = translate(&model).map_err(data)?;
    Ok((model, task))
}

fn requirements(task: &ConfigurationTask, texts: &[String]) -> Result<Vec<Requirement>, CliError> {
    texts.iter().map(|t| task.parse_requirement(t).map_err(|e| CliError::Usage(e.to_string()))).collect()
}

/// Requirements as an assignment, or `None` when two of them disagree.
fn assumptions(reqs: &[Requirement]) -> Option<Assignment> {
    let mut a = Assignment::new();
    for r in reqs {
        if a.insert(r.var, r.value) == Some(!r.value) {
            return None;
        }
    }
    Some(a)
}

fn bits(values: &BTreeMap<String, bool>) -> BTreeMap<&str, u8> {
    values.iter().map(|(f, v)| (f.as_str(), u8::from(*v))).collect()
}

/// One row per configuration, one column per feature in variable order.
fn table(task: &ConfigurationTask, rows: &[(String, &BTreeMap<String, bool>)]) -> String {
    let names = task.names();
    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let mut out = format!("{:label_width$}", "");
    for n in names {
        let _ = write!(out, " {n}");
    }
    out.push('\n');
    for (label, values) in rows {
        let _ = write!(out, "{label:label_width$}");
        for n in names {
            let v = values.get(n).map_or("-", |b| if *b { "1" } else { "0" });
            let _ = write!(out, " {v:>w$}", w = n.len());
        }
        out.push('\n');
    }
    out
}

fn session_from(task: Option<&ConfigurationTask>, set: &[String]) -> Result<SessionLog, CliError> {
    let mut log = SessionLog::new("current", "current");
    for text in set {
        let (name, value) = match task {
            Some(t) => {
                let r = t.parse_requirement(text).map_err(|e| CliError::Usage(e.to_string()))?;
                (t.name(r.var).to_string(), r.value)
            }
            None => {
                let (n, v) = text
                    .split_once('=')
                    .ok_or_else(|| CliError::Usage(format!("expected feature=0|1, got `{text}`")))?;
                let v = crate::formats::parse_bit(v)
                    .ok_or_else(|| CliError::Usage(format!("expected feature=0|1, got `{text}`")))?;
                (n.trim().to_string(), v)
            }
        };
        log.specify(name, value);
    }
    Ok(log)
}

/// Runs one command; output goes to the returned string.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    let json = cli.json;
    let emit = |v: Value, human: String| if json { format!("{v:#}\n") } else { human };
    match cli.command {
        Command::Translate { model } => {
            let (_, task) = load_task(&model)?;
            let constraints: Vec<Value> = task
                .model_constraints()
                .iter()
                .map(|c| json!({ "label": c.label, "formula": c.formula.display(task.names()).to_string() }))
                .collect();
            Ok(emit(json!({ "features": task.names(), "constraints": constraints }), task.to_string()))
        }
        Command::Solve { model } => {
            let (_, task) = load_task(&model.model)?;
            let reqs = requirements(&task, &model.require)?;
            let a =
                assumptions(&reqs).ok_or_else(|| CliError::Infeasible("requirements contradict each other".into()))?;
            let found = Solver::new(&task).solve(&a).map_err(data)?;
            let c = found.ok_or_else(|| CliError::Infeasible("no configuration satisfies the requirements".into()))?;
            let named = c.to_named(&task);
            let human = table(&task, &[("config".into(), &named)]);
            Ok(emit(json!({ "configuration": bits(&named) }), human))
        }
        Command::Enumerate { model, limit } => {
            let (_, task) = load_task(&model.model)?;
            let named = enumerate(&task, &model.require, limit)?;
            let rows: Vec<_> = named.iter().enumerate().map(|(i, c)| (format!("#{}", i + 1), c)).collect();
            let configs: Vec<_> = named.iter().map(bits).collect();
            Ok(emit(json!({ "configurations": configs }), table(&task, &rows)))
        }
        Command::Rank { model, utilities, profile, limit } => {
            let (_, task) = load_task(&model.model)?;
            let named = enumerate(&task, &model.require, None)?;
            let table_ = read_utilities(&read(&utilities)?).map_err(data)?;
            let user = profile.file_stem().map_or("profile".into(), |s| s.to_string_lossy().into_owned());
            let profile = read_profile(&user, &read(&profile)?).map_err(data)?;
            let mut ranked = rank_configurations(&named, &table_, &profile).map_err(data)?;
            if let Some(n) = limit {
                ranked.truncate(n);
            }
            let rows: Vec<_> =
                ranked.iter().map(|r| (format!("#{} {:.4}", r.index + 1, r.score), &named[r.index])).collect();
            let out: Vec<Value> = ranked
                .iter()
                .map(|r| json!({ "index": r.index, "utility": r.score, "configuration": bits(&named[r.index]) }))
                .collect();
            Ok(emit(json!({ "ranking": out }), table(&task, &rows)))
        }
        Command::RecommendValue { model, sessions, feature, k, set } => {
            let (_, task) = load_task(&model)?;
            let logs: Vec<_> = read_sessions(&read(&sessions)?).map_err(data)?.iter().map(|s| s.to_log()).collect();
            let current = session_from(Some(&task), &set)?;
            if task.var(&feature).is_none() {
                return Err(CliError::Usage(format!("unknown feature `{feature}`")));
            }
            let partial: Assignment =
                current.values.iter().map(|(f, v)| (task.var(f).expect("checked above"), *v)).collect();
            let rec = recommend_value(&logs, &current, &feature, k).map_err(data)?;
            let (filter, rec) = match consistency_filtered(&task, &partial, rec).map_err(data)? {
                Filtered::Kept(r) => ("kept", r),
                Filtered::Flipped(r) => ("flipped", r),
                Filtered::Suppressed => {
                    return Err(CliError::Infeasible("the current values admit no configuration".into()))
                }
            };
            let human = format!(
                "{}={} (vote {:.3}, neighbors {}, {filter})\n",
                rec.feature,
                u8::from(rec.value),
                rec.vote_fraction,
                rec.neighbors.join(" ")
            );
            Ok(emit(
                json!({
                    "feature": rec.feature,
                    "value": u8::from(rec.value),
                    "voteFraction": rec.vote_fraction,
                    "neighbors": rec.neighbors,
                    "filter": filter,
                }),
                human,
            ))
        }
        Command::RecommendNext { sessions, edits, set, done } => {
            let next = match (sessions, edits) {
                (Some(path), _) => {
                    let logs: Vec<_> = read_sessions(&read(&path)?).map_err(data)?.iter().map(|s| s.to_log()).collect();
                    recommend_next_feature(&logs, &session_from(None, &set)?).map_err(data)?
                }
                (None, Some(path)) => {
                    let logs = read_edits(&read(&path)?).map_err(data)?;
                    let current = EditLog::new("current", done.iter().cloned().zip(1u32..));
                    recommend_next_constraint(&logs, &current).map_err(data)?
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            let human = format!(
                "{} (from {}, similarity {:.3}, rank {})\n",
                next.item, next.neighbor, next.similarity, next.rank
            );
            Ok(emit(
                json!({ "item": next.item, "neighbor": next.neighbor, "similarity": next.similarity, "rank": next.rank }),
                human,
            ))
        }
        Command::Diagnose { model } => {
            let (_, task) = load_task(&model.model)?;
            let task = task.with_requirements(requirements(&task, &model.require)?).map_err(data)?;
            let report = diagnose_task(&task).map_err(data)?;
            let show = |reqs: &[Requirement]| reqs.iter().map(|r| task.describe(r)).collect::<Vec<_>>();
            let conflicts: Vec<_> = report.conflicts.iter().map(|c| show(&c.requirements)).collect();
            let diagnoses: Vec<_> = report.diagnoses.iter().map(|d| show(&d.requirements)).collect();
            let mut human = String::new();
            if conflicts.is_empty() {
                human.push_str("requirements are consistent\n");
            }
            for c in &conflicts {
                let _ = writeln!(human, "conflict:  {{{}}}", c.join(", "));
            }
            for d in &diagnoses {
                let _ = writeln!(human, "diagnosis: {{{}}}", d.join(", "));
            }
            Ok(emit(json!({ "conflicts": conflicts, "diagnoses": diagnoses }), human))
        }
        Command::Repairs { model, utilities, profile } => {
            let (_, task) = load_task(&model.model)?;
            let task = task.with_requirements(requirements(&task, &model.require)?).map_err(data)?;
            let report = diagnose_task(&task).map_err(data)?;
            let mut found = repairs(&task, &report.diagnoses).map_err(data)?;
            if let (Some(u), Some(p)) = (utilities, profile) {
                let table_ = read_utilities(&read(&u)?).map_err(data)?;
                let user = p.file_stem().map_or("profile".into(), |s| s.to_string_lossy().into_owned());
                let profile = read_profile(&user, &read(&p)?).map_err(data)?;
                found = rank_repairs(found, &table_, &profile).map_err(data)?;
            }
            let mut human = String::new();
            for r in &found {
                let changes: Vec<String> = r.changes.iter().map(|(f, v)| format!("{f}={}", u8::from(*v))).collect();
                match r.utility {
                    Some(u) => {
                        let _ = writeln!(human, "{u:.4}  {}", changes.join(", "));
                    }
                    None => {
                        let _ = writeln!(human, "{}", changes.join(", "));
                    }
                }
            }
            let out: Vec<Value> = found
                .iter()
                .map(
                    |r| json!({ "changes": bits(&r.changes), "assignment": bits(&r.assignment), "utility": r.utility }),
                )
                .collect();
            Ok(emit(json!({ "repairs": out }), human))
        }
        Command::MfTrain { matrix, k, rate, lambda, epochs, seed, out_ua, out_af } => {
            let t = InteractionMatrix::from_csv(&read(&matrix)?).map_err(data)?;
            let config = TrainConfig { k, learning_rate: rate, regularization: lambda, epochs, seed };
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let factors = fmrec_core::train(&t, &config).map_err(data)?;
            let fit = fmrec_core::rmse(&t, &factors.predict().values).map_err(data)?;
            let (ua, af) = factors.to_csv();
            for (path, text) in [(&out_ua, &ua), (&out_af, &af)] {
                if let Some(p) = path {
                    std::fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                }
            }
            let human = if out_ua.is_some() || out_af.is_some() {
                format!("rmse {fit:.6}\n")
            } else {
                format!("rmse {fit:.6}\n\nuser-aspect\n{ua}\naspect-feature\n{af}")
            };
            Ok(emit(json!({ "rmse": fit, "userAspects": ua, "aspectFeatures": af }), human))
        }
        Command::MfPredict { ua, af, user, threshold } => {
            let factors = FactorPair::from_csv(&read(&ua)?, &read(&af)?).map_err(data)?;
            let p = factors.predict();
            let flags = binarize(&p.values, threshold);
            let users: Vec<String> = match user {
                Some(u) => vec![u],
                None => p.users.clone(),
            };
            let mut out = serde_json::Map::new();
            let mut human = String::new();
            for u in &users {
                let row = p.row(u).map_err(data)?;
                let i = p.users.iter().position(|x| x == u).expect("row found the user");
                let _ = writeln!(human, "{u}");
                let mut scores = serde_json::Map::new();
                for (j, (f, v)) in row.iter().enumerate() {
                    let _ = writeln!(human, "  {f:<16} {v:.4} {}", flags[[i, j]]);
                    scores.insert(f.clone(), json!({ "score": v, "relevant": flags[[i, j]] }));
                }
                out.insert(u.clone(), Value::Object(scores));
            }
            Ok(emit(json!({ "threshold": threshold, "scores": out }), human))
        }
        Command::Serve { journal, addr } => {
            let store = Store::open(&journal).map_err(data)?;
            serve(Arc::new(store), addr).map_err(data)?;
            Ok(String::new())
        }
        Command::ImportSessions { journal, model, model_id, sessions } => {
            let store = Store::open(&journal).map_err(data)?;
            let logged = read_sessions(&read(&sessions)?).map_err(data)?;
            let model_id = match (model, model_id) {
                (_, Some(id)) => id,
                (Some(path), None) => store.store_model(&read(&path)?).map_err(data)?,
                (None, None) => unreachable!("clap requires one model source"),
            };
            let ids = store.import_sessions(&model_id, &logged).map_err(data)?;
            let human = format!("model {model_id}: imported {} sessions\n", ids.len());
            Ok(emit(json!({ "modelId": model_id, "sessionIds": ids }), human))
        }
    }
}

fn enumerate(
    task: &ConfigurationTask,
    require: &[String],
    limit: Option<usize>,
) -> Result<Vec<BTreeMap<String, bool>>, CliError> {
    let reqs = requirements(task, require)?;
    let Some(a) = assumptions(&reqs) else { return Ok(Vec::new()) };
    let limit = limit.map_or(Limit::All, Limit::First);
    let found = Solver::new(task).enumerate_with(&a, limit).map_err(data)?;
    Ok(found.iter().map(|c| c.to_named(task)).collect())
}

fn serve(store: Arc<Store>, addr: SocketAddr) -> std::io::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, crate::api::router(store))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}

/// Parses arguments, runs the command and prints its output. Returns the
/// process exit code.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
