use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use replybank_core::classifier::{write_model, Checkpoint};
use replybank_core::corpus::{ContextConfig, ResponseRecord};
use replybank_core::responsebank::{DecisionSink, FileDecisionLog, MergeDecision, MergeSession, ResponseBank};
use replybank_core::simcluster::Cluster;
use sha2::{Digest, Sha256};

use crate::error::{ApiError, ApiResult};

/// A checkpoint plus a short content hash reported as `modelVersion`.
#[derive(Debug)]
pub struct LoadedModel {
    pub checkpoint: Checkpoint,
    pub version: String,
}

impl LoadedModel {
    pub fn new(checkpoint: Checkpoint) -> replybank_core::Result<Self> {
        let mut bytes = Vec::new();
        write_model(&mut bytes, &checkpoint.model)?;
        bytes.extend_from_slice(checkpoint.extractor.vocab_hash().as_bytes());
        let version = hex::encode(&Sha256::digest(&bytes)[..6]);
        Ok(Self { checkpoint, version })
    }
}

pub type SinkFactory =
    Arc<dyn Fn(&str) -> replybank_core::Result<Box<dyn DecisionSink>> + Send + Sync>;

pub(crate) struct SessionEntry {
    pub session: MergeSession,
    pub sink: Box<dyn DecisionSink>,
}

#[derive(Default)]
pub(crate) struct Sessions {
    next_id: u64,
    pub map: HashMap<String, SessionEntry>,
}

/// Everything the service reads.
#[derive(Debug, Default, Clone)]
pub struct ServiceData {
    pub bank: ResponseBank,
    pub model: Option<Checkpoint>,
    pub records: Vec<ResponseRecord>,
    pub clusters: Vec<Cluster>,
    /// Doctor turns in the source corpus, the denominator of coverage.
    pub doctor_turns: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    /// Where exemplar edits are persisted; edits stay in memory when unset.
    pub bank_path: Option<PathBuf>,
    /// Directory for per-session decision logs; in memory when unset.
    pub decision_log_dir: Option<PathBuf>,
    pub threshold_override: Option<f64>,
    pub context: ContextConfig,
}

pub(crate) struct Shared {
    bank: RwLock<Arc<ResponseBank>>,
    bank_writer: Mutex<()>,
    model: RwLock<Option<Arc<LoadedModel>>>,
    pub records: Arc<Vec<ResponseRecord>>,
    pub clusters: Arc<Vec<Cluster>>,
    pub doctor_turns: Option<u64>,
    pub options: ServiceOptions,
    pub sessions: Mutex<Sessions>,
    sinks: SinkFactory,
}

/// Cheaply cloneable handle shared by all handlers.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Shared>);

fn default_sinks(dir: Option<PathBuf>) -> SinkFactory {
    Arc::new(move |id: &str| -> replybank_core::Result<Box<dyn DecisionSink>> {
        Ok(match &dir {
            Some(d) => Box::new(FileDecisionLog::new(d.join(format!("session-{id}.jsonl")))),
            None => Box::new(Vec::<MergeDecision>::new()),
        })
    })
}

impl AppState {
    pub fn new(data: ServiceData, options: ServiceOptions) -> replybank_core::Result<Self> {
        data.bank.validate()?;
        let model = data.model.map(LoadedModel::new).transpose()?.map(Arc::new);
        let sinks = default_sinks(options.decision_log_dir.clone());
        Ok(Self(Arc::new(Shared {
            bank: RwLock::new(Arc::new(data.bank)),
            bank_writer: Mutex::new(()),
            model: RwLock::new(model),
            records: Arc::new(data.records),
            clusters: Arc::new(data.clusters),
            doctor_turns: data.doctor_turns,
            options,
            sessions: Mutex::new(Sessions::default()),
            sinks,
        })))
    }

    /// Replace how decision logs are opened (used to inject failures).
    pub fn with_sink_factory(self, sinks: SinkFactory) -> Self {
        let mut shared = Arc::try_unwrap(self.0).unwrap_or_else(|_| panic!("state already shared"));
        shared.sinks = sinks;
        Self(Arc::new(shared))
    }

    /// Current bank snapshot; never observed half-updated.
    pub fn bank(&self) -> Arc<ResponseBank> {
        self.0.bank.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn model(&self) -> Option<Arc<LoadedModel>> {
        self.0.model.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Swap in a new model; in-flight requests keep the old one.
    pub fn replace_model(&self, checkpoint: Checkpoint) -> replybank_core::Result<()> {
        let loaded = Arc::new(LoadedModel::new(checkpoint)?);
        *self.0.model.write().unwrap_or_else(|e| e.into_inner()) = Some(loaded);
        Ok(())
    }

    /// Apply `f` to a copy of the bank, persist it, then publish it. Writers
    /// are serialized; on any error the published bank is unchanged.
    pub(crate) fn update_bank<T>(
        &self,
        f: impl FnOnce(&mut ResponseBank) -> ApiResult<T>,
    ) -> ApiResult<(T, Arc<ResponseBank>)> {
        let _guard = self.0.bank_writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = (*self.bank()).clone();
        let out = f(&mut next)?;
        if let Some(path) = &self.0.options.bank_path {
            next.save(path)
                .map_err(|e| ApiError::internal(format!("could not persist bank: {e}")))?;
        }
        let next = Arc::new(next);
        *self.0.bank.write().unwrap_or_else(|e| e.into_inner()) = next.clone();
        Ok((out, next))
    }

    pub(crate) fn open_session(&self, start: ResponseBank) -> ApiResult<String> {
        let session = MergeSession::start(&self.0.clusters, &self.0.records, start)?;
        let mut sessions = self.0.sessions.lock().unwrap_or_else(|e| e.into_inner());
        sessions.next_id += 1;
        let id = format!("s{}", sessions.next_id);
        if let Some(dir) = &self.0.options.decision_log_dir {
            // the log only replays on top of the bank the session started from
            session
                .bank()
                .save(&dir.join(format!("session-{id}.start.json")))
                .map_err(|e| ApiError::internal(format!("could not save session start: {e}")))?;
        }
        let sink = (self.0.sinks)(&id).map_err(|e| ApiError::internal(format!("could not open decision log: {e}")))?;
        sessions.map.insert(id.clone(), SessionEntry { session, sink });
        Ok(id)
    }
}
