use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::Json;
use replybank_core::corpus::{
    assemble_tokens, ContextConfig, Conversation, IdentitySpan, RawConversation, RawMessage, Speaker,
};
use replybank_core::responsebank::{ClassId, MergeAction, MergeDecision, ResponseBank, SessionSummary};
use replybank_core::simcluster::{cluster_stats, ClusterStats};
use replybank_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::state::AppState;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload.map(|Json(v)| v).map_err(ApiError::from)
}

fn default_max_turns() -> usize {
    ContextConfig::default().max_turns
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TurnInput {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pii: Vec<IdentitySpan>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SuggestRequest {
    pub turns: Vec<TurnInput>,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    #[serde(default)]
    pub include_probabilities: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Suggestion {
    pub class_id: ClassId,
    pub exemplar_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SuggestResponse {
    pub suggestion: Option<Suggestion>,
    pub abstained: bool,
    pub max_prob: f64,
    pub bank_version: u64,
    pub model_version: String,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

pub async fn suggest(
    State(state): State<AppState>,
    payload: Result<Json<SuggestRequest>, JsonRejection>,
) -> ApiResult<Json<SuggestResponse>> {
    let started = Instant::now();
    let req = body(payload)?;
    if req.turns.is_empty() {
        return Err(ApiError::unprocessable("at least one turn is required"));
    }
    if req.max_turns == 0 {
        return Err(ApiError::unprocessable("maxTurns must be at least 1"));
    }
    let raw = RawConversation {
        id: "request".into(),
        messages: req
            .turns
            .into_iter()
            .map(|t| RawMessage {
                speaker: t.speaker,
                text: t.text,
                pii: t.pii,
            })
            .collect(),
    };
    let conv = Conversation::from_raw(&raw).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    if conv.turns.last().map(|t| t.speaker) != Some(Speaker::Patient) {
        return Err(ApiError::unprocessable("the last turn must be the patient's"));
    }

    let model = state
        .model()
        .ok_or_else(|| ApiError::unavailable("no model loaded"))?;
    let bank = state.bank();
    let ckpt = &model.checkpoint;
    if !bank.accepts_model_version(ckpt.model.bank_version) || bank.len() != ckpt.model.num_classes {
        return Err(ApiError::conflict(format!(
            "model trained on bank version {} ({} classes) does not match bank version {} ({} classes)",
            ckpt.model.bank_version,
            ckpt.model.num_classes,
            bank.version,
            bank.len()
        )));
    }

    let config = ContextConfig {
        max_turns: req.max_turns,
        max_tokens: state.0.options.context.max_tokens,
    };
    let context = assemble_tokens(&conv.turns, config)?;
    let features = ckpt.extractor.extract(&context);
    let threshold = state.0.options.threshold_override.unwrap_or(ckpt.model.threshold);
    let p = ckpt.model.predict_with_threshold(&features, threshold)?;
    let suggestion = if p.abstained {
        None
    } else {
        Some(Suggestion {
            class_id: p.top_class_id,
            exemplar_text: bank.exemplar(p.top_class_id)?.to_string(),
        })
    };
    Ok(Json(SuggestResponse {
        suggestion,
        abstained: p.abstained,
        max_prob: p.max_prob,
        bank_version: bank.version,
        model_version: model.version.clone(),
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
        probabilities: req.include_probabilities.then_some(p.probabilities),
    }))
}

pub async fn get_bank(State(state): State<AppState>) -> Json<ResponseBank> {
    Json((*state.bank()).clone())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExemplarEdit {
    pub exemplar_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExemplarUpdated {
    pub class_id: ClassId,
    pub exemplar_text: String,
    pub bank_version: u64,
}

pub async fn put_exemplar(
    State(state): State<AppState>,
    Path(class_id): Path<ClassId>,
    payload: Result<Json<ExemplarEdit>, JsonRejection>,
) -> ApiResult<Json<ExemplarUpdated>> {
    let edit = body(payload)?;
    let ((), bank) = state.update_bank(|bank| {
        bank.class(class_id)?;
        bank.edit_exemplar(class_id, &edit.exemplar_text).map_err(|e| match e {
            CoreError::Validation(m) => ApiError::bad_request(m),
            other => other.into(),
        })
    })?;
    Ok(Json(ExemplarUpdated {
        class_id,
        exemplar_text: bank.exemplar(class_id)?.to_string(),
        bank_version: bank.version,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BankStats {
    pub bank_version: u64,
    pub num_classes: usize,
    pub largest_class_size: usize,
    pub labeled_responses: usize,
    /// Corpus occurrences of labeled responses.
    pub labeled_occurrences: u64,
    /// Occurrences of all frequent responses.
    pub frequent_occurrences: u64,
    pub doctor_turns: Option<u64>,
    /// `labeled_occurrences` over doctor turns, when the corpus size is known.
    pub coverage: Option<f64>,
    pub clusters: Option<ClusterStats>,
}

#[derive(Debug, Deserialize)]
pub struct StatsQuery {
    k: Option<usize>,
}

pub fn bank_stats(state: &AppState, k: usize) -> BankStats {
    let bank = state.bank();
    let records = &state.0.records;
    let count = |id: u32| records.get(id as usize).map(|r| r.count()).unwrap_or(0);
    let labeled: Vec<u32> = bank.classes.iter().flat_map(|c| c.members.iter().copied()).collect();
    let labeled_occurrences = labeled.iter().map(|&m| count(m)).sum();
    let frequent_occurrences: u64 = records.iter().map(|r| r.count()).sum();
    let doctor_turns = state.0.doctor_turns;
    let clusters = &state.0.clusters;
    BankStats {
        bank_version: bank.version,
        num_classes: bank.len(),
        largest_class_size: bank.classes.iter().map(|c| c.members.len()).max().unwrap_or(0),
        labeled_responses: labeled.len(),
        labeled_occurrences,
        frequent_occurrences,
        doctor_turns,
        coverage: doctor_turns.filter(|&d| d > 0).map(|d| labeled_occurrences as f64 / d as f64),
        clusters: (!clusters.is_empty())
            .then(|| cluster_stats(clusters, records, doctor_turns.unwrap_or(frequent_occurrences), k)),
    }
}

pub async fn get_stats(State(state): State<AppState>, Query(q): Query<StatsQuery>) -> Json<BankStats> {
    Json(bank_stats(&state, q.k.unwrap_or(10)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StartFrom {
    #[default]
    Empty,
    Current,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NewSession {
    #[serde(default)]
    pub start_from: StartFrom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionCreated {
    pub session_id: String,
    pub queue_length: usize,
    pub bank_version: u64,
}

pub async fn create_session(
    State(state): State<AppState>,
    payload: Option<Json<NewSession>>,
) -> ApiResult<Json<SessionCreated>> {
    let req = payload.map(|Json(v)| v).unwrap_or_default();
    let start = match req.start_from {
        StartFrom::Empty => ResponseBank::new(),
        StartFrom::Current => (*state.bank()).clone(),
    };
    let id = state.open_session(start)?;
    let sessions = state.0.sessions.lock().unwrap_or_else(|e| e.into_inner());
    let s = &sessions.map[&id].session;
    Ok(Json(SessionCreated {
        queue_length: s.queue().len(),
        bank_version: s.bank().version,
        session_id: id,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterCard {
    pub cluster_id: u32,
    pub centroid_id: u32,
    pub centroid_text: String,
    pub occurrence_count: u64,
    pub member_count: usize,
    /// Up to ten member texts, most frequent first.
    pub sample_members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassSummary {
    pub class_id: ClassId,
    pub name: String,
    pub exemplar_text: String,
    pub member_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NextCluster {
    pub session_id: String,
    pub cursor: usize,
    pub queue_length: usize,
    pub complete: bool,
    pub cluster: Option<ClusterCard>,
    pub existing_classes: Vec<ClassSummary>,
    pub bank_version: u64,
}

const SAMPLE_MEMBERS: usize = 10;

fn next_view(state: &AppState, id: &str) -> ApiResult<NextCluster> {
    let sessions = state.0.sessions.lock().unwrap_or_else(|e| e.into_inner());
    let s = &sessions
        .map
        .get(id)
        .ok_or_else(|| ApiError::not_found(format!("no session {id}")))?
        .session;
    let records = &state.0.records;
    let cluster = s.current().map(|q| {
        let mut members: Vec<&replybank_core::corpus::ResponseRecord> =
            q.members.iter().filter_map(|&m| records.get(m as usize)).collect();
        members.sort_by(|a, b| b.count().cmp(&a.count()).then(a.text().cmp(b.text())));
        ClusterCard {
            cluster_id: q.cluster_id,
            centroid_id: q.centroid_id,
            centroid_text: q.centroid_text.clone(),
            occurrence_count: q.occurrences,
            member_count: q.members.len(),
            sample_members: members.iter().take(SAMPLE_MEMBERS).map(|r| r.text().to_string()).collect(),
        }
    });
    Ok(NextCluster {
        session_id: id.to_string(),
        cursor: s.cursor(),
        queue_length: s.queue().len(),
        complete: s.is_complete(),
        cluster,
        existing_classes: s
            .bank()
            .classes
            .iter()
            .map(|c| ClassSummary {
                class_id: c.class_id,
                name: c.name.clone(),
                exemplar_text: c.exemplar_text.clone(),
                member_count: c.members.len(),
            })
            .collect(),
        bank_version: s.bank().version,
    })
}

pub async fn get_next(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<NextCluster>> {
    next_view(&state, &id).map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionRequest {
    /// The cursor the client saw; must equal the session's cursor.
    pub cursor: usize,
    pub cluster_id: u32,
    pub action: MergeAction,
    #[serde(default)]
    pub annotator: String,
    /// Milliseconds since the epoch; the server clock when absent.
    #[serde(default)]
    pub timestamp: Option<u64>,
}

pub async fn post_decision(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<DecisionRequest>, JsonRejection>,
) -> ApiResult<Json<NextCluster>> {
    let req = body(payload)?;
    {
        let mut sessions = state.0.sessions.lock().unwrap_or_else(|e| e.into_inner());
        let entry = sessions
            .map
            .get_mut(&id)
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))?;
        if req.cursor != entry.session.cursor() {
            return Err(ApiError::conflict(format!(
                "stale cursor {}; session is at {}",
                req.cursor,
                entry.session.cursor()
            )));
        }
        let decision = MergeDecision {
            cluster_id: req.cluster_id,
            action: req.action,
            timestamp: req.timestamp.unwrap_or_else(|| {
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_millis() as u64)
                    .unwrap_or(0)
            }),
            annotator: req.annotator,
        };
        entry.session.check(&decision).map_err(|e| match e {
            CoreError::UnknownClass(c) => ApiError::unprocessable(format!("unknown response class {c}")),
            other => other.into(),
        })?;
        // log first: a decision that is not durable never takes effect
        entry
            .sink
            .append(&decision)
            .map_err(|e| ApiError::internal(format!("decision log write failed: {e}")))?;
        entry.session.apply(decision)?;
    }
    next_view(&state, &id).map(Json)
}

pub async fn get_summary(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let sessions = state.0.sessions.lock().unwrap_or_else(|e| e.into_inner());
    let s = sessions
        .map
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("no session {id}")))?;
    Ok(Json(s.session.summary()))
}

pub async fn get_session_bank(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ResponseBank>> {
    let sessions = state.0.sessions.lock().unwrap_or_else(|e| e.into_inner());
    let s = sessions
        .map
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("no session {id}")))?;
    Ok(Json(s.session.bank().clone()))
}

pub async fn get_session_decisions(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<MergeDecision>>> {
    let sessions = state.0.sessions.lock().unwrap_or_else(|e| e.into_inner());
    let s = sessions
        .map
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("no session {id}")))?;
    Ok(Json(s.session.decisions().to_vec()))
}

pub async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    let model = state.model();
    Json(serde_json::json!({
        "status": "ok",
        "bankVersion": state.bank().version,
        "modelVersion": model.map(|m| m.version.clone()),
    }))
}
