//! Append-only annotation log and the task state it replays into.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use align_evalkit::{BenchModule, Judgment, Verdict};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    #[default]
    Single,
    Dual,
}

impl LabelMode {
    pub fn required(self) -> usize {
        match self {
            LabelMode::Single => 1,
            LabelMode::Dual => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Assigned,
    Labeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Enqueued {
        task_id: String,
        run_id: String,
        item_id: String,
        module: BenchModule,
        question: String,
        response: String,
        mode: LabelMode,
    },
    Assigned {
        task_id: String,
        annotator: String,
    },
    Released {
        task_id: String,
        annotator: String,
    },
    Labeled {
        task_id: String,
        annotator: String,
        label: Verdict,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
}

impl EventKind {
    pub fn task_id(&self) -> &str {
        match self {
            EventKind::Enqueued { task_id, .. }
            | EventKind::Assigned { task_id, .. }
            | EventKind::Released { task_id, .. }
            | EventKind::Labeled { task_id, .. } => task_id,
        }
    }
}

/// One line of the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub annotator: String,
    pub label: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub labeled_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub run_id: String,
    pub item_id: String,
    pub module: BenchModule,
    pub question: String,
    pub response: String,
    pub mode: LabelMode,
    pub status: TaskStatus,
    pub assigned_to: Vec<String>,
    /// First label, which is the one reports use.
    pub label: Option<Verdict>,
    pub note: Option<String>,
    pub labeled_at: Option<String>,
    pub labels: Vec<LabelRecord>,
}

impl AnnotationTask {
    fn refresh(&mut self) {
        self.status = if self.labels.len() >= self.mode.required() {
            TaskStatus::Labeled
        } else if !self.assigned_to.is_empty() {
            TaskStatus::Assigned
        } else {
            TaskStatus::Pending
        };
        let first = self.labels.first();
        self.label = first.map(|l| l.label);
        self.note = first.and_then(|l| l.note.clone());
        self.labeled_at = first.map(|l| l.labeled_at.clone());
    }

    fn has_capacity(&self) -> bool {
        self.assigned_to.len() + self.labels.len() < self.mode.required()
    }

    fn labeled_by(&self, annotator: &str) -> bool {
        self.labels.iter().any(|l| l.annotator == annotator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorRecord {
    pub annotator_id: String,
    pub display_name: String,
    pub labels_submitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStat {
    pub run_id: String,
    pub items: usize,
    pub percent_agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub pending: usize,
    pub assigned: usize,
    pub labeled: usize,
    pub annotators: Vec<AnnotatorRecord>,
}

pub fn task_id(run_id: &str, item_id: &str) -> String {
    format!("{run_id}:{item_id}")
}

/// Task state rebuilt from events. Every event is checked against the state
/// before it is applied, so a replayed log is valid by construction.
#[derive(Debug, Clone, Default)]
pub struct AnnotationState {
    tasks: BTreeMap<String, AnnotationTask>,
    order: Vec<String>,
    run_modes: BTreeMap<String, LabelMode>,
    annotators: BTreeMap<String, usize>,
    next_seq: u64,
}

impl AnnotationState {
    fn get(&self, id: &str) -> Result<&AnnotationTask> {
        self.tasks.get(id).ok_or_else(|| ServiceError::NotFound(format!("task {id}")))
    }

    pub fn check(&self, kind: &EventKind) -> Result<()> {
        match kind {
            EventKind::Enqueued { task_id, run_id, mode, .. } => {
                if self.tasks.contains_key(task_id) {
                    return Err(ServiceError::Conflict(format!("task {task_id} exists")));
                }
                match self.run_modes.get(run_id) {
                    Some(m) if m != mode => {
                        Err(ServiceError::BadRequest(format!("run {run_id} is already queued in {m:?} mode")))
                    }
                    _ => Ok(()),
                }
            }
            EventKind::Assigned { task_id, annotator } => {
                let t = self.get(task_id)?;
                if t.status == TaskStatus::Labeled {
                    return Err(ServiceError::Conflict(format!("task {task_id} already labeled")));
                }
                if t.assigned_to.contains(annotator) || t.labeled_by(annotator) || !t.has_capacity() {
                    return Err(ServiceError::Conflict(format!("task {task_id} not assignable to {annotator}")));
                }
                Ok(())
            }
            EventKind::Released { task_id, annotator } => {
                if !self.get(task_id)?.assigned_to.contains(annotator) {
                    return Err(ServiceError::Conflict(format!("task {task_id} is not assigned to {annotator}")));
                }
                Ok(())
            }
            EventKind::Labeled { task_id, annotator, .. } => {
                let t = self.get(task_id)?;
                if t.status == TaskStatus::Labeled {
                    return Err(ServiceError::Conflict(format!("task {task_id} already labeled")));
                }
                if t.labeled_by(annotator) {
                    return Err(ServiceError::Conflict(format!("{annotator} already labeled task {task_id}")));
                }
                if !t.assigned_to.contains(annotator) && !t.has_capacity() {
                    return Err(ServiceError::Conflict(format!("task {task_id} is assigned to another annotator")));
                }
                Ok(())
            }
        }
    }

    pub fn apply(&mut self, event: &Event) -> Result<()> {
        if event.seq != self.next_seq {
            return Err(ServiceError::Internal(format!("expected seq {}, found {}", self.next_seq, event.seq)));
        }
        self.check(&event.kind)?;
        self.next_seq += 1;
        match &event.kind {
            EventKind::Enqueued { task_id, run_id, item_id, module, question, response, mode } => {
                self.run_modes.insert(run_id.clone(), *mode);
                self.order.push(task_id.clone());
                self.tasks.insert(
                    task_id.clone(),
                    AnnotationTask {
                        task_id: task_id.clone(),
                        run_id: run_id.clone(),
                        item_id: item_id.clone(),
                        module: *module,
                        question: question.clone(),
                        response: response.clone(),
                        mode: *mode,
                        status: TaskStatus::Pending,
                        assigned_to: Vec::new(),
                        label: None,
                        note: None,
                        labeled_at: None,
                        labels: Vec::new(),
                    },
                );
            }
            EventKind::Assigned { task_id, annotator } => {
                let t = self.tasks.get_mut(task_id).expect("checked");
                t.assigned_to.push(annotator.clone());
                t.refresh();
            }
            EventKind::Released { task_id, annotator } => {
                let t = self.tasks.get_mut(task_id).expect("checked");
                t.assigned_to.retain(|a| a != annotator);
                t.refresh();
            }
            EventKind::Labeled { task_id, annotator, label, note } => {
                let t = self.tasks.get_mut(task_id).expect("checked");
                t.assigned_to.retain(|a| a != annotator);
                t.labels.push(LabelRecord {
                    annotator: annotator.clone(),
                    label: *label,
                    note: note.clone(),
                    labeled_at: event.at.clone(),
                });
                t.refresh();
                *self.annotators.entry(annotator.clone()).or_default() += 1;
            }
        }
        Ok(())
    }

    pub fn task(&self, id: &str) -> Option<&AnnotationTask> {
        self.tasks.get(id)
    }

    /// Tasks in enqueue order.
    pub fn tasks(&self) -> impl Iterator<Item = &AnnotationTask> {
        self.order.iter().map(|id| &self.tasks[id])
    }

    pub fn run_mode(&self, run_id: &str) -> Option<LabelMode> {
        self.run_modes.get(run_id).copied()
    }

    /// Earliest human label per item of a run.
    pub fn overrides(&self, run_id: &str) -> BTreeMap<String, Judgment> {
        self.tasks()
            .filter(|t| t.run_id == run_id)
            .filter_map(|t| t.label.map(|l| (t.item_id.clone(), Judgment::Verdict(l))))
            .collect()
    }

    /// Percent of items with two or more labels whose first two labels agree.
    pub fn agreement(&self, run_id: &str) -> Result<AgreementStat> {
        let pairs: Vec<_> =
            self.tasks().filter(|t| t.run_id == run_id && t.labels.len() >= 2).map(|t| (t.labels[0].label, t.labels[1].label)).collect();
        if pairs.is_empty() {
            return Err(ServiceError::BadRequest("insufficient overlap".into()));
        }
        let agree = pairs.iter().filter(|(a, b)| a == b).count();
        Ok(AgreementStat {
            run_id: run_id.to_string(),
            items: pairs.len(),
            percent_agreement: 100.0 * agree as f64 / pairs.len() as f64,
        })
    }

    pub fn stats(&self, run_id: Option<&str>) -> QueueStats {
        let mut s = QueueStats { pending: 0, assigned: 0, labeled: 0, annotators: Vec::new() };
        for t in self.tasks().filter(|t| run_id.is_none_or(|r| t.run_id == r)) {
            match t.status {
                TaskStatus::Pending => s.pending += 1,
                TaskStatus::Assigned => s.assigned += 1,
                TaskStatus::Labeled => s.labeled += 1,
            }
        }
        s.annotators = self
            .annotators
            .iter()
            .map(|(id, n)| AnnotatorRecord { annotator_id: id.clone(), display_name: id.clone(), labels_submitted: *n })
            .collect();
        s
    }
}

pub fn read_log(path: &Path) -> Result<Vec<Event>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ServiceError::Internal(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn replay(events: &[Event]) -> Result<AnnotationState> {
    let mut state = AnnotationState::default();
    for e in events {
        state.apply(e).map_err(|err| ServiceError::Internal(format!("log seq {}: {err}", e.seq)))?;
    }
    Ok(state)
}

/// Replays the log and checks that every status change is one of
/// pending→assigned, assigned→labeled, pending→labeled, assigned→pending on
/// release, or a partial label in dual mode (which leaves the task open).
/// A labeled task never changes again.
pub fn audit(events: &[Event]) -> Result<()> {
    let mut state = AnnotationState::default();
    for e in events {
        let before = state.task(e.kind.task_id()).map(|t| t.status);
        state.apply(e)?;
        let after = state.task(e.kind.task_id()).expect("applied").status;
        use TaskStatus::*;
        let ok = match (&e.kind, before) {
            (EventKind::Enqueued { .. }, None) => after == Pending,
            (_, Some(Labeled)) => false,
            (EventKind::Assigned { .. }, Some(_)) => after == Assigned,
            (EventKind::Released { .. }, Some(Assigned)) => matches!(after, Pending | Assigned),
            (EventKind::Labeled { .. }, Some(_)) => true,
            _ => false,
        };
        if !ok {
            return Err(ServiceError::Internal(format!("seq {}: illegal transition {before:?} -> {after:?}", e.seq)));
        }
    }
    Ok(())
}

/// The log file plus its replayed state. One writer; callers serialize
/// access (the service keeps it behind a mutex).
#[derive(Debug)]
pub struct AnnotationStore {
    path: PathBuf,
    file: File,
    state: AnnotationState,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl AnnotationStore {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let state = replay(&read_log(path)?)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AnnotationStore { path: path.to_path_buf(), file, state })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn state(&self) -> &AnnotationState {
        &self.state
    }

    /// Check, append, then apply. A failed check writes nothing.
    fn commit(&mut self, kind: EventKind) -> Result<&AnnotationTask> {
        self.state.check(&kind)?;
        let event = Event { seq: self.state.next_seq, at: now(), kind };
        let mut line = serde_json::to_string(&event)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.state.apply(&event)?;
        Ok(self.state.task(event.kind.task_id()).expect("applied"))
    }

    /// Queues tasks that do not exist yet and returns how many were created.
    pub fn enqueue(
        &mut self,
        run_id: &str,
        mode: LabelMode,
        items: impl IntoIterator<Item = (String, BenchModule, String, String)>,
    ) -> Result<usize> {
        if let Some(m) = self.state.run_mode(run_id) {
            if m != mode {
                return Err(ServiceError::BadRequest(format!("run {run_id} is already queued in {m:?} mode")));
            }
        }
        let mut created = 0;
        for (item_id, module, question, response) in items {
            let task_id = task_id(run_id, &item_id);
            if self.state.task(&task_id).is_some() {
                continue;
            }
            self.commit(EventKind::Enqueued { task_id, run_id: run_id.to_string(), item_id, module, question, response, mode })?;
            created += 1;
        }
        Ok(created)
    }

    /// The task this annotator already holds, else the first open task they
    /// can take, which is then assigned to them.
    pub fn next(&mut self, annotator: &str, run_id: Option<&str>) -> Result<Option<AnnotationTask>> {
        let in_run = |t: &&AnnotationTask| run_id.is_none_or(|r| t.run_id == r);
        if let Some(held) = self.state.tasks().filter(in_run).find(|t| t.assigned_to.iter().any(|a| a == annotator)) {
            return Ok(Some(held.clone()));
        }
        let candidate = self
            .state
            .tasks()
            .filter(in_run)
            .find(|t| t.status != TaskStatus::Labeled && t.has_capacity() && !t.labeled_by(annotator))
            .map(|t| t.task_id.clone());
        match candidate {
            Some(task_id) => Ok(Some(self.commit(EventKind::Assigned { task_id, annotator: annotator.to_string() })?.clone())),
            None => Ok(None),
        }
    }

    pub fn release(&mut self, task_id: &str, annotator: &str) -> Result<AnnotationTask> {
        Ok(self.commit(EventKind::Released { task_id: task_id.to_string(), annotator: annotator.to_string() })?.clone())
    }

    pub fn label(&mut self, task_id: &str, annotator: &str, label: Verdict, note: Option<String>) -> Result<AnnotationTask> {
        let kind = EventKind::Labeled { task_id: task_id.to_string(), annotator: annotator.to_string(), label, note };
        Ok(self.commit(kind)?.clone())
    }
}
