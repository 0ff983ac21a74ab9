use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use serde::Deserialize;
use wayfind_core::api::{CycleRecord, ErrorBody, RunCreated, RunState, RunStatus, StartRunRequest};
use wayfind_core::pipeline::{open_source, CycleMetrics, Pipeline, RunSummary};
use wayfind_core::scheduler::{Clock, Shutdown, SimulatedClock, WallClock};

use crate::error::ApiError;
use crate::routes::{ApiJson, ApiResult};

struct RunData {
    state: RunState,
    records: Vec<CycleRecord>,
    summary: Option<RunSummary>,
    error: Option<ErrorBody>,
}

struct RunHandle {
    data: Mutex<RunData>,
    shutdown: Shutdown,
}

/// Pipeline runs owned by the service, keyed by run id.
#[derive(Clone, Default)]
pub struct Runs {
    inner: Arc<Mutex<HashMap<String, Arc<RunHandle>>>>,
}

impl Runs {
    fn get(&self, id: &str) -> Result<Arc<RunHandle>, ApiError> {
        self.inner
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no run {id}")))
    }

    /// Stops every active run; used on service shutdown.
    pub fn stop_all(&self) {
        for run in self.inner.lock().unwrap().values() {
            run.shutdown.trigger();
        }
    }
}

pub async fn start(State(runs): State<Runs>, ApiJson(req): ApiJson<StartRunRequest>) -> ApiResult<RunCreated> {
    req.config.validate()?;
    // Initialization may touch the network and the filesystem.
    let (pipeline, source) = tokio::task::spawn_blocking(move || {
        let pipeline = Pipeline::from_config(&req.config)?;
        let source = open_source(&req.source, &req.config.source)?;
        Ok::<_, wayfind_core::pipeline::PipelineError>((pipeline, source))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;

    let run_id = uuid::Uuid::new_v4().to_string();
    let handle = Arc::new(RunHandle {
        data: Mutex::new(RunData {
            state: RunState::Running,
            records: Vec::new(),
            summary: None,
            error: None,
        }),
        shutdown: Shutdown::new(),
    });
    runs.inner.lock().unwrap().insert(run_id.clone(), Arc::clone(&handle));

    let simulated = req.simulated_clock;
    let thread_id = run_id.clone();
    std::thread::Builder::new()
        .name(format!("run-{}", &run_id[..8]))
        .spawn(move || {
            let mut source = source;
            let clock: Box<dyn Clock> = if simulated {
                Box::new(SimulatedClock::new(0))
            } else {
                Box::new(WallClock::with_shutdown(handle.shutdown.clone()))
            };
            let sink = Arc::clone(&handle);
            let mut observer = move |m: &CycleMetrics, utterance: Option<&str>| {
                sink.data.lock().unwrap().records.push(CycleRecord {
                    metrics: m.clone(),
                    utterance: utterance.map(str::to_string),
                });
            };
            let result = pipeline.run(source.as_mut(), clock.as_ref(), &handle.shutdown, &mut observer);
            let mut data = handle.data.lock().unwrap();
            match result {
                Ok(summary) => {
                    tracing::info!(run = %thread_id, cycles = summary.cycles, "run finished");
                    data.state = RunState::Finished;
                    data.summary = Some(summary);
                }
                Err(e) => {
                    tracing::error!(run = %thread_id, error = %e, "run failed");
                    data.state = RunState::Failed;
                    data.error = Some(ApiError::from(e).body);
                }
            }
        })
        .map_err(|e| ApiError::internal(e.to_string()))?;

    Ok(Json(RunCreated { run_id }))
}

#[derive(Debug, Deserialize)]
pub struct StatusQuery {
    #[serde(default)]
    offset: usize,
}

fn snapshot(id: &str, run: &RunHandle, offset: usize) -> RunStatus {
    let data = run.data.lock().unwrap();
    let from = offset.min(data.records.len());
    RunStatus {
        run_id: id.to_string(),
        state: data.state,
        records: data.records[from..].to_vec(),
        next_offset: data.records.len(),
        summary: data.summary.clone(),
        error: data.error.clone(),
    }
}

pub async fn status(
    State(runs): State<Runs>,
    Path(id): Path<String>,
    Query(q): Query<StatusQuery>,
) -> ApiResult<RunStatus> {
    let run = runs.get(&id)?;
    Ok(Json(snapshot(&id, &run, q.offset)))
}

/// Asks the run to stop after its current cycle.
pub async fn stop(State(runs): State<Runs>, Path(id): Path<String>) -> Result<(StatusCode, Json<RunStatus>), ApiError> {
    let run = runs.get(&id)?;
    run.shutdown.trigger();
    Ok((StatusCode::ACCEPTED, Json(snapshot(&id, &run, 0))))
}
