use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{Duration, Instant};

use cohort_core::datamodel::PatientRecord;
use cohort_core::extract::{load_dictionary_dir, ConfigHandle, FeedbackLog, PipelineConfig, Tier};
use cohort_core::index::{read_snapshot, NestedIndex, Schema};
use cohort_core::query::{QueryState, Restriction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Snapshot(#[from] cohort_core::index::SnapshotError),
    #[error(transparent)]
    Index(#[from] cohort_core::index::IndexError),
    #[error(transparent)]
    Extract(#[from] cohort_core::extract::ExtractError),
    #[error("result set store {0}: {1}")]
    Store(PathBuf, String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StateError + '_ {
    move |e| StateError::Io(path.to_path_buf(), e)
}

/// An immutable indexed snapshot. Handlers hold an `Arc` for the whole
/// request, so a swap never disturbs queries in flight.
#[derive(Debug)]
pub struct Dataset {
    pub patients: Vec<PatientRecord>,
    pub index: NestedIndex,
    by_id: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(schema: &Schema, patients: Vec<PatientRecord>) -> Result<Self, StateError> {
        let index = NestedIndex::build(&patients, schema)?;
        let by_id = patients
            .iter()
            .enumerate()
            .map(|(i, p)| (p.patient_id.clone(), i))
            .collect();
        Ok(Dataset { patients, index, by_id })
    }

    pub fn load(path: &Path) -> Result<Self, StateError> {
        let (schema, patients) = read_snapshot(path)?;
        Dataset::new(&schema, patients)
    }

    pub fn schema(&self) -> &Schema {
        self.index.schema()
    }

    pub fn patient(&self, id: &str) -> Option<&PatientRecord> {
        self.by_id.get(id).map(|&i| &self.patients[i])
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Holds saved result sets, the feedback log and user dictionaries.
    pub data_dir: PathBuf,
    /// Snapshot re-read by the reload endpoint.
    pub snapshot: Option<PathBuf>,
    pub dict_dir: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub mincount_default: u32,
    pub default_limit: usize,
    pub session_ttl: Duration,
    /// Allowed CORS origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            data_dir: data_dir.into(),
            snapshot: None,
            dict_dir: None,
            rules: None,
            mincount_default: cohort_core::query::DEFAULT_MINCOUNT,
            default_limit: 20,
            session_ttl: Duration::from_secs(4 * 3600),
            cors_origin: None,
        }
    }

    fn user_dict_dir(&self) -> PathBuf {
        self.data_dir.join("user_dict")
    }
}

#[derive(Debug)]
pub struct Session {
    pub query: QueryState,
    pub open_blocks: BTreeSet<String>,
    touched: Instant,
}

impl Session {
    fn new() -> Self {
        Session {
            query: QueryState::new(),
            open_blocks: BTreeSet::new(),
            touched: Instant::now(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedResultSet {
    pub name: String,
    pub patient_ids: Vec<String>,
    pub restrictions: Vec<Restriction>,
    pub created_at: String,
}

/// Named result sets persisted as one JSON file.
#[derive(Debug)]
pub struct ResultSetStore {
    path: PathBuf,
    sets: BTreeMap<String, SavedResultSet>,
}

impl ResultSetStore {
    pub fn open(path: PathBuf) -> Result<Self, StateError> {
        let sets = match fs::read(&path) {
            Ok(bytes) => {
                let list: Vec<SavedResultSet> =
                    serde_json::from_slice(&bytes).map_err(|e| StateError::Store(path.clone(), e.to_string()))?;
                list.into_iter().map(|s| (s.name.clone(), s)).collect()
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(StateError::Io(path, e)),
        };
        Ok(ResultSetStore { path, sets })
    }

    pub fn list(&self) -> Vec<SavedResultSet> {
        self.sets.values().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&SavedResultSet> {
        self.sets.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.sets.contains_key(name)
    }

    /// Inserts and writes the whole store through a temp file.
    pub fn insert(&mut self, set: SavedResultSet) -> Result<(), StateError> {
        let name = set.name.clone();
        self.sets.insert(name.clone(), set);
        if let Err(e) = self.persist() {
            self.sets.remove(&name);
            return Err(e);
        }
        Ok(())
    }

    fn persist(&self) -> Result<(), StateError> {
        let bytes = serde_json::to_vec_pretty(&self.list()).map_err(|e| StateError::Store(self.path.clone(), e.to_string()))?;
        let tmp = self.path.with_extension("json.tmp");
        fs::write(&tmp, bytes).map_err(io(&tmp))?;
        fs::rename(&tmp, &self.path).map_err(io(&self.path))
    }
}

/// Shared service state.
#[derive(Debug)]
pub struct AppState {
    pub config: ServerConfig,
    dataset: RwLock<Arc<Dataset>>,
    sessions: Mutex<HashMap<String, Session>>,
    pub pipeline: ConfigHandle,
    /// Serializes dictionary writers so the config and its files agree.
    dictionary_writer: Mutex<()>,
    pub result_sets: Mutex<ResultSetStore>,
    pub feedback: FeedbackLog,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl AppState {
    /// Creates the data directory if needed and loads persisted state.
    pub fn new(config: ServerConfig, dataset: Dataset) -> Result<Self, StateError> {
        fs::create_dir_all(&config.data_dir).map_err(io(&config.data_dir))?;
        let base = match &config.dict_dir {
            Some(dir) => PipelineConfig::load(dir, config.rules.as_deref())?,
            None => PipelineConfig::builtin(),
        };
        let user_dir = config.user_dict_dir();
        let pipeline = if user_dir.is_dir() {
            let mut dicts = base.dictionaries().to_vec();
            dicts.extend(load_dictionary_dir(&user_dir, Tier::User)?);
            PipelineConfig::new(dicts, base.rules().to_vec(), base.triggers().to_vec(), base.version())?
        } else {
            base
        };
        let result_sets = ResultSetStore::open(config.data_dir.join("resultsets.json"))?;
        let feedback_path = config.data_dir.join("feedback.jsonl");
        let feedback = FeedbackLog::open(&feedback_path).map_err(io(&feedback_path))?;
        Ok(AppState {
            config,
            dataset: RwLock::new(Arc::new(dataset)),
            sessions: Mutex::new(HashMap::new()),
            pipeline: ConfigHandle::new(pipeline),
            dictionary_writer: Mutex::new(()),
            result_sets: Mutex::new(result_sets),
            feedback,
        })
    }

    pub fn dataset(&self) -> Arc<Dataset> {
        self.dataset.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Installs a new snapshot; requests already holding the old one finish on it.
    pub fn swap_dataset(&self, next: Dataset) -> Arc<Dataset> {
        let next = Arc::new(next);
        *self.dataset.write().unwrap_or_else(|e| e.into_inner()) = next.clone();
        next
    }

    /// Runs `f` on the session `id`, creating it when absent and dropping
    /// sessions idle for longer than the TTL.
    pub fn with_session<R>(&self, id: &str, f: impl FnOnce(&mut Session) -> R) -> R {
        let mut sessions = lock(&self.sessions);
        let now = Instant::now();
        let ttl = self.config.session_ttl;
        sessions.retain(|k, s| k == id || now.duration_since(s.touched) <= ttl);
        let s = sessions.entry(id.to_string()).or_insert_with(Session::new);
        s.touched = now;
        f(s)
    }

    pub fn session_count(&self) -> usize {
        lock(&self.sessions).len()
    }

    /// Adds a user dictionary entry and persists that type's user tier.
    pub fn add_dictionary_entry(
        &self,
        annotation_type: cohort_core::extract::AnnotationType,
        term: &str,
        code: Option<&str>,
        definition: Option<&str>,
    ) -> Result<Arc<PipelineConfig>, cohort_core::extract::ExtractError> {
        let _guard = lock(&self.dictionary_writer);
        let previous = self.pipeline.current();
        let next = self.pipeline.add_user_entry(annotation_type, term, code, definition)?;
        let dir = self.config.user_dict_dir();
        let written = next.user_dictionary(annotation_type).map(|d| {
            fs::create_dir_all(&dir)
                .and_then(|_| fs::write(dir.join(format!("{annotation_type}.tsv")), d.to_tsv()))
        });
        if let Some(Err(e)) = written {
            self.pipeline.replace((*previous).clone());
            return Err(cohort_core::extract::ExtractError::Io(dir.display().to_string(), e.to_string()));
        }
        Ok(next)
    }

    pub fn lock_result_sets(&self) -> MutexGuard<'_, ResultSetStore> {
        lock(&self.result_sets)
    }
}
