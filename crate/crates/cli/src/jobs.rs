//! Background search jobs on a bounded worker pool.
//!
//! Progress is published in snapshots every [`SNAPSHOT_EVERY`] iterations;
//! pollers read the trajectory from an offset so they never re-fetch old
//! points.

use std::collections::HashMap;
use std::ops::ControlFlow;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use protoforge::pgdsearch::{
    multi_start_search_observed, project, restart_start, search_loss, RawScale, SearchRequest, SearchResult,
    SearchSpec,
};
use protoforge::uq::PredictionInterval;
use protoforge::Error;
use serde::Serialize;
use tokio::sync::Semaphore;

use crate::model::CalibrationEntry;
use crate::registry::ModelEntry;

pub const SNAPSHOT_EVERY: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

/// One trajectory point in raw feature units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobPoint {
    pub restart: usize,
    pub iteration: usize,
    pub x: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug)]
struct JobState {
    status: JobStatus,
    iteration: usize,
    trajectory: Vec<JobPoint>,
    result: Option<SearchResult>,
    point: Option<Vec<f64>>,
    intervals: Vec<PredictionInterval>,
    error: Option<String>,
}

pub struct Job {
    pub id: String,
    pub model_id: String,
    pub calibration_id: Option<String>,
    pub request: SearchRequest,
    total_iterations: usize,
    state: Mutex<JobState>,
    cancel: AtomicBool,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobSnapshot {
    pub job_id: String,
    pub model_id: String,
    pub calibration_id: Option<String>,
    pub status: JobStatus,
    /// Iterations completed across all restarts at the last snapshot.
    pub iteration: usize,
    pub total_iterations: usize,
    /// Offset of the first point in `trajectory`.
    pub since: usize,
    pub trajectory_len: usize,
    pub trajectory: Vec<JobPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SearchResult>,
    /// Deterministic prediction at the final point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub intervals: Vec<PredictionInterval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Job {
    fn state(&self) -> std::sync::MutexGuard<'_, JobState> {
        self.state.lock().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn status(&self) -> JobStatus {
        self.state().status
    }

    pub fn snapshot(&self, since: usize) -> JobSnapshot {
        let s = self.state();
        let since = since.min(s.trajectory.len());
        JobSnapshot {
            job_id: self.id.clone(),
            model_id: self.model_id.clone(),
            calibration_id: self.calibration_id.clone(),
            status: s.status,
            iteration: s.iteration,
            total_iterations: self.total_iterations,
            since,
            trajectory_len: s.trajectory.len(),
            trajectory: s.trajectory[since..].to_vec(),
            result: s.result.clone(),
            point: s.point.clone(),
            intervals: s.intervals.clone(),
            error: s.error.clone(),
        }
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::SeqCst);
    }

    fn fail(&self, reason: String) {
        let mut s = self.state();
        if matches!(s.status, JobStatus::Queued | JobStatus::Running) {
            s.status = JobStatus::Failed;
            s.error = Some(reason);
        }
    }

    fn publish(&self, points: &mut Vec<JobPoint>, iteration: usize) {
        let mut s = self.state();
        s.trajectory.append(points);
        s.iteration = s.iteration.max(iteration);
    }

    fn run(&self, model: &ModelEntry, spec: &SearchSpec, calibration: Option<&CalibrationEntry>) {
        if self.cancel.load(Ordering::SeqCst) {
            self.fail("canceled".into());
            return;
        }
        self.state().status = JobStatus::Running;
        let surrogate = RawScale(&model.bundle.model);
        let mut pending = Vec::new();
        let mut last = 0;
        let outcome = multi_start_search_observed(&surrogate, spec, &mut |p| {
            if p.iteration == 1 {
                let x = project(&restart_start(spec, p.restart), &spec.bounds);
                let loss = search_loss(&x, &surrogate, &spec.targets).unwrap_or(f64::NAN);
                pending.push(JobPoint {
                    restart: p.restart,
                    iteration: 0,
                    x,
                    loss,
                });
            }
            pending.push(JobPoint {
                restart: p.restart,
                iteration: p.iteration,
                x: p.point.x.clone(),
                loss: p.point.loss,
            });
            last = p.total_iterations;
            if last % SNAPSHOT_EVERY == 0 {
                self.publish(&mut pending, last);
            }
            if self.cancel.load(Ordering::SeqCst) {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        self.publish(&mut pending, last);
        let result = match outcome {
            Ok(r) => r,
            Err(Error::Canceled { .. }) => return self.fail("canceled".into()),
            Err(e) => return self.fail(e.to_string()),
        };
        let (point, intervals) = match model.bundle.predict(&result.x_final, calibration) {
            Ok(v) => v,
            Err(e) => return self.fail(e.to_string()),
        };
        let mut s = self.state();
        s.iteration = s.iteration.max(last);
        s.result = Some(result);
        s.point = Some(point);
        s.intervals = intervals;
        s.status = JobStatus::Done;
    }
}

pub struct JobManager {
    jobs: RwLock<HashMap<String, Arc<Job>>>,
    permits: Arc<Semaphore>,
    next: AtomicU64,
}

impl JobManager {
    pub fn new(workers: usize) -> Self {
        Self {
            jobs: RwLock::new(HashMap::new()),
            permits: Arc::new(Semaphore::new(workers.max(1))),
            next: AtomicU64::new(1),
        }
    }

    /// Queues a search; must be called inside a Tokio runtime.
    pub fn submit(
        &self,
        model: Arc<ModelEntry>,
        spec: SearchSpec,
        calibration: Option<Arc<CalibrationEntry>>,
    ) -> Arc<Job> {
        let n = self.next.fetch_add(1, Ordering::SeqCst);
        let job = Arc::new(Job {
            id: format!("job-{n:06}"),
            model_id: model.id().to_string(),
            calibration_id: calibration.as_ref().map(|c| c.id.clone()),
            request: SearchRequest::from(&spec),
            total_iterations: spec.n_iters * spec.n_restarts,
            state: Mutex::new(JobState {
                status: JobStatus::Queued,
                iteration: 0,
                trajectory: Vec::new(),
                result: None,
                point: None,
                intervals: Vec::new(),
                error: None,
            }),
            cancel: AtomicBool::new(false),
        });
        self.jobs
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .insert(job.id.clone(), job.clone());

        let permits = self.permits.clone();
        let worker = job.clone();
        tokio::spawn(async move {
            let permit = permits.acquire_owned().await;
            let runner = worker.clone();
            let joined = tokio::task::spawn_blocking(move || {
                let _permit = permit;
                runner.run(&model, &spec, calibration.as_deref());
            })
            .await;
            if joined.is_err() {
                worker.fail("search worker panicked".into());
            }
        });
        job
    }

    pub fn get(&self, id: &str) -> Option<Arc<Job>> {
        self.jobs
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(id)
            .cloned()
    }
}
