use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassId, ResponseBank};
use crate::corpus::{ResponseId, ResponseRecord};
use crate::error::{Error, Result};
use crate::simcluster::Cluster;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum MergeAction {
    #[serde(rename_all = "camelCase")]
    AssignTo { class_id: ClassId },
    CreateNew { name: String },
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MergeDecision {
    pub cluster_id: u32,
    pub action: MergeAction,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub annotator: String,
}

/// A cluster waiting for a labeler decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QueuedCluster {
    pub cluster_id: u32,
    pub centroid_id: ResponseId,
    pub centroid_text: String,
    /// Members not already labeled in the starting bank.
    pub members: Vec<ResponseId>,
    pub occurrences: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionSummary {
    pub classes: usize,
    pub classes_created: usize,
    pub clusters_reviewed: usize,
    pub queue_length: usize,
    pub labeled_responses: usize,
    pub labeled_occurrences: u64,
    pub total_occurrences: u64,
    pub coverage: f64,
}

/// Manual merge of clusters into response classes, one queued cluster at a
/// time in descending order of occurrences. The bank is always the replay of
/// `decisions` over the starting bank.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeSession {
    queue: Vec<QueuedCluster>,
    cursor: usize,
    decisions: Vec<MergeDecision>,
    bank: ResponseBank,
    initial_classes: usize,
    total_occurrences: u64,
    counts: Vec<u64>,
}

impl MergeSession {
    pub fn start(clusters: &[Cluster], records: &[ResponseRecord], bank: ResponseBank) -> Result<Self> {
        bank.validate()?;
        let labeled: HashSet<ResponseId> = bank.membership().into_keys().collect();
        let count = |id: ResponseId| -> Result<u64> {
            records
                .get(id as usize)
                .map(|r| r.count())
                .ok_or_else(|| Error::validation(format!("unknown response id {id}")))
        };
        let mut queue = Vec::with_capacity(clusters.len());
        for c in clusters {
            let members: Vec<ResponseId> =
                c.members.iter().copied().filter(|m| !labeled.contains(m)).collect();
            if members.is_empty() {
                continue;
            }
            let occurrences = members.iter().map(|&m| count(m)).sum::<Result<u64>>()?;
            let centroid_text = records
                .get(c.centroid_id as usize)
                .ok_or_else(|| Error::validation(format!("unknown centroid {}", c.centroid_id)))?
                .text()
                .to_string();
            queue.push(QueuedCluster {
                cluster_id: c.cluster_id,
                centroid_id: c.centroid_id,
                centroid_text,
                members,
                occurrences,
            });
        }
        queue.sort_by(|a, b| b.occurrences.cmp(&a.occurrences).then(a.cluster_id.cmp(&b.cluster_id)));
        Ok(Self {
            queue,
            cursor: 0,
            decisions: Vec::new(),
            initial_classes: bank.len(),
            bank,
            total_occurrences: records.iter().map(|r| r.count()).sum(),
            counts: records.iter().map(|r| r.count()).collect(),
        })
    }

    /// Rebuild a session by re-applying a decision log.
    pub fn replay(
        clusters: &[Cluster],
        records: &[ResponseRecord],
        bank: ResponseBank,
        decisions: &[MergeDecision],
    ) -> Result<Self> {
        let mut session = Self::start(clusters, records, bank)?;
        for (i, d) in decisions.iter().enumerate() {
            session
                .apply(d.clone())
                .map_err(|e| Error::validation(format!("decision {i}: {e}")))?;
        }
        Ok(session)
    }

    pub fn queue(&self) -> &[QueuedCluster] {
        &self.queue
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn current(&self) -> Option<&QueuedCluster> {
        self.queue.get(self.cursor)
    }

    pub fn is_complete(&self) -> bool {
        self.cursor >= self.queue.len()
    }

    pub fn bank(&self) -> &ResponseBank {
        &self.bank
    }

    pub fn decisions(&self) -> &[MergeDecision] {
        &self.decisions
    }

    /// Check a decision against the current state without applying it.
    pub fn check(&self, decision: &MergeDecision) -> Result<()> {
        let current = self.current().ok_or(Error::StaleCursor {
            expected: None,
            got: decision.cluster_id,
        })?;
        if current.cluster_id != decision.cluster_id {
            return Err(Error::StaleCursor {
                expected: Some(current.cluster_id),
                got: decision.cluster_id,
            });
        }
        if let MergeAction::AssignTo { class_id } = decision.action {
            self.bank.class(class_id)?;
        }
        Ok(())
    }

    /// Apply a decision for the cluster at the cursor. On error the session
    /// is unchanged.
    pub fn apply(&mut self, decision: MergeDecision) -> Result<()> {
        self.check(&decision)?;
        let current = &self.queue[self.cursor];
        match &decision.action {
            MergeAction::AssignTo { class_id } => {
                self.bank
                    .assign(*class_id, current.members.iter().copied(), Some(current.cluster_id))?;
            }
            MergeAction::CreateNew { name } => {
                self.bank.create_class(
                    name,
                    &current.centroid_text,
                    current.members.iter().copied(),
                    Some(current.cluster_id),
                )?;
            }
            MergeAction::Skip => {}
        }
        self.cursor += 1;
        self.decisions.push(decision);
        Ok(())
    }

    pub fn summary(&self) -> SessionSummary {
        let labeled: Vec<ResponseId> = self.bank.membership().into_keys().collect();
        let labeled_occurrences = labeled
            .iter()
            .map(|&m| self.counts.get(m as usize).copied().unwrap_or(0))
            .sum();
        SessionSummary {
            classes: self.bank.len(),
            classes_created: self.bank.len() - self.initial_classes,
            clusters_reviewed: self.cursor,
            queue_length: self.queue.len(),
            labeled_responses: labeled.len(),
            labeled_occurrences,
            total_occurrences: self.total_occurrences,
            coverage: if self.total_occurrences == 0 {
                0.0
            } else {
                labeled_occurrences as f64 / self.total_occurrences as f64
            },
        }
    }
}

/// Destination for accepted decisions, written before the decision takes
/// effect.
pub trait DecisionSink: Send {
    fn append(&mut self, decision: &MergeDecision) -> Result<()>;
}

/// Append-only newline-delimited JSON decision log.
#[derive(Debug, Clone)]
pub struct FileDecisionLog {
    path: PathBuf,
}

impl FileDecisionLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl DecisionSink for FileDecisionLog {
    fn append(&mut self, decision: &MergeDecision) -> Result<()> {
        let mut line = serde_json::to_vec(decision)?;
        line.push(b'\n');
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        f.write_all(&line).map_err(|e| Error::io(&self.path, e))?;
        f.sync_data().map_err(|e| Error::io(&self.path, e))
    }
}

impl DecisionSink for Vec<MergeDecision> {
    fn append(&mut self, decision: &MergeDecision) -> Result<()> {
        self.push(decision.clone());
        Ok(())
    }
}

/// Read a decision log. A final line without a trailing newline is an
/// interrupted append and is dropped.
pub fn read_decision_log<R: BufRead>(mut reader: R, source_name: &str) -> Result<Vec<MergeDecision>> {
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut lineno = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| Error::io(source_name, e))?;
        if n == 0 {
            break;
        }
        lineno += 1;
        if !buf.ends_with('\n') {
            break;
        }
        if buf.trim().is_empty() {
            continue;
        }
        let d: MergeDecision = serde_json::from_str(buf.trim_end())
            .map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        out.push(d);
    }
    Ok(out)
}

pub fn load_decision_log(path: &Path) -> Result<Vec<MergeDecision>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_decision_log(std::io::BufReader::new(f), &path.display().to_string())
}
