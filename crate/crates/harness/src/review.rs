//! Local HTTP+JSON service that feeds cases to a reviewer and records their
//! verdicts.
//!
//! | route | |
//! |---|---|
//! | `GET /cases` | ids with labelled/unlabelled status and progress |
//! | `GET /cases/{id}` | curves, frame URLs and current verdict in one view |
//! | `GET /cases/{id}/curves` | per-structure series |
//! | `GET /cases/{id}/frames/{t}?slice=s` | PNG with the segmentation contour |
//! | `POST /cases/{id}/label` | `{"verdict": "good" \| "erroneous", "reviewer"?, "timestamp"?}` |
//! | `GET /export/qc-dataset` | QC dataset JSON lines of every labelled case |

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use qcseg::curves::{qc_curves, PhysioCurve, Unit};
use qcseg::phantom::io::overlay_png;
use qcseg::phantom::CineCase;
use qcseg::qc::build_qc_dataset;
use qcseg::volume::{LabelMap, Task};
use qcseg::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::store::{now_millis, LabelStore, ReviewLabel, Verdict};

pub struct ReviewCase {
    pub case: CineCase,
    /// The segmentation under review.
    pub labels: LabelMap,
    pub curves: Vec<PhysioCurve>,
}

pub struct ReviewState {
    pub task: Task,
    cases: BTreeMap<String, ReviewCase>,
    store: RwLock<LabelStore>,
}

impl ReviewState {
    /// `segmentations[i]` is shown for `cases[i]`; without it each case's
    /// ground truth is shown.
    pub fn new(cases: Vec<CineCase>, segmentations: Option<Vec<LabelMap>>, store: LabelStore) -> Result<Self> {
        let task = qcseg::qc::common_task(&cases)?;
        if let Some(s) = &segmentations {
            if s.len() != cases.len() {
                return Err(Error::Shape(format!("{} cases but {} segmentations", cases.len(), s.len())));
            }
        }
        let mut segs = segmentations.map(|v| v.into_iter());
        let mut map = BTreeMap::new();
        for case in cases {
            let labels = match segs.as_mut() {
                Some(it) => it.next().expect("length checked"),
                None => case
                    .gt_labels
                    .clone()
                    .ok_or_else(|| Error::NotFound(format!("case {} has no segmentation to review", case.case_id)))?,
            };
            if labels.dims != case.dims() {
                return Err(Error::Shape(format!("segmentation of {} does not match its images", case.case_id)));
            }
            let curves = qc_curves(&labels, &case.geometry)?;
            let id = case.case_id.clone();
            if map.insert(id.clone(), ReviewCase { case, labels, curves }).is_some() {
                return Err(Error::invalid("case_id", format!("duplicate case {id}")));
            }
        }
        Ok(Self { task, cases: map, store: RwLock::new(store) })
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.cases.keys().map(String::as_str)
    }

    fn case(&self, id: &str) -> Result<&ReviewCase> {
        self.cases.get(id).ok_or_else(|| Error::NotFound(format!("case {id}")))
    }

    fn verdict(&self, id: &str) -> Option<Verdict> {
        self.store.read().expect("label store lock").get(id).map(|l| l.verdict)
    }

    pub fn record(&self, label: ReviewLabel) -> Result<()> {
        self.case(&label.case_id)?;
        self.store.write().expect("label store lock").append(label)
    }

    /// QC dataset of the labelled cases, as self-contained JSON lines.
    pub fn export(&self) -> Result<String> {
        let labels = self.store.read().expect("label store lock").human_labels();
        let (cases, segs): (Vec<CineCase>, Vec<LabelMap>) = labels
            .keys()
            .filter_map(|id| self.cases.get(id))
            .map(|c| (c.case.clone(), c.labels.clone()))
            .unzip();
        build_qc_dataset(&cases, &segs, qcseg::qc::LabelSource::Human(&labels))?.to_jsonl()
    }

    fn progress(&self) -> Progress {
        let store = self.store.read().expect("label store lock");
        let labeled = self.cases.keys().filter(|id| store.get(id).is_some()).count();
        Progress { labeled, total: self.cases.len() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub labeled: usize,
    pub total: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Labeled,
    Unlabeled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case_id: String,
    pub frames: usize,
    pub slices: usize,
    pub status: Status,
    pub verdict: Option<Verdict>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseList {
    pub progress: Progress,
    pub cases: Vec<CaseSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub structure: u8,
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseCurves {
    pub case_id: String,
    pub task: Task,
    pub unit: Unit,
    pub curves: Vec<CurveSeries>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseView {
    pub case_id: String,
    pub frames: usize,
    pub slices: usize,
    pub curves: CaseCurves,
    pub frame_urls: Vec<String>,
    pub verdict: Option<Verdict>,
    pub progress: Progress,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    verdict: Verdict,
    #[serde(default)]
    case_id: Option<String>,
    #[serde(default)]
    reviewer: Option<String>,
    #[serde(default)]
    timestamp: Option<u64>,
}

#[derive(Deserialize)]
struct FrameQuery {
    #[serde(default)]
    slice: usize,
}

pub struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            e if e.is_validation() => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type Shared = Arc<ReviewState>;
type ApiResult<T> = std::result::Result<T, ApiError>;

fn curves_of(state: &ReviewState, c: &ReviewCase) -> CaseCurves {
    CaseCurves {
        case_id: c.case.case_id.clone(),
        task: state.task,
        unit: Unit::for_task(state.task),
        curves: c
            .curves
            .iter()
            .map(|k| CurveSeries {
                structure: k.structure,
                name: state.task.class_name(k.structure).to_owned(),
                values: k.values.clone(),
            })
            .collect(),
    }
}

async fn list_cases(State(s): State<Shared>) -> Json<CaseList> {
    let cases = s
        .cases
        .values()
        .map(|c| {
            let verdict = s.verdict(&c.case.case_id);
            let d = c.case.dims();
            CaseSummary {
                case_id: c.case.case_id.clone(),
                frames: d.frames,
                slices: d.slices,
                status: if verdict.is_some() { Status::Labeled } else { Status::Unlabeled },
                verdict,
            }
        })
        .collect();
    Json(CaseList { progress: s.progress(), cases })
}

async fn case_view(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<CaseView>> {
    let c = s.case(&id)?;
    let d = c.case.dims();
    Ok(Json(CaseView {
        case_id: id.clone(),
        frames: d.frames,
        slices: d.slices,
        curves: curves_of(&s, c),
        frame_urls: (0..d.frames).map(|t| format!("/cases/{id}/frames/{t}")).collect(),
        verdict: s.verdict(&id),
        progress: s.progress(),
    }))
}

async fn case_curves(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<CaseCurves>> {
    let c = s.case(&id)?;
    Ok(Json(curves_of(&s, c)))
}

async fn frame(
    State(s): State<Shared>,
    Path((id, t)): Path<(String, usize)>,
    Query(q): Query<FrameQuery>,
) -> ApiResult<Response> {
    let c = s.case(&id)?;
    let png = overlay_png(&c.case.images, Some(&c.labels), t, q.slice)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn label(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<ReviewLabel>> {
    s.case(&id)?;
    let b: LabelBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed label: {e}")))?;
    if let Some(other) = b.case_id.filter(|c| *c != id) {
        return Err(ApiError(StatusCode::BAD_REQUEST, format!("body names case {other}, path names {id}")));
    }
    let l = ReviewLabel {
        case_id: id,
        verdict: b.verdict,
        reviewer: b.reviewer.unwrap_or_default(),
        timestamp: b.timestamp.unwrap_or_else(now_millis),
    };
    s.record(l.clone())?;
    Ok(Json(l))
}

async fn export(State(s): State<Shared>) -> ApiResult<Response> {
    let body = s.export()?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/cases", get(list_cases))
        .route("/cases/{id}", get(case_view))
        .route("/cases/{id}/curves", get(case_curves))
        .route("/cases/{id}/frames/{t}", get(frame))
        .route("/cases/{id}/label", post(label))
        .route("/export/qc-dataset", get(export))
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(state: Shared, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    axum::serve(listener, router(state)).await.map_err(|e| Error::io(addr.to_string(), e))
}
