//! Evaluation runs and their reports on disk:
//! `runs/<id>/{meta.json, items.jsonl, raw.jsonl, templates.json}` and
//! `reports/<id>.json`.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use align_evalkit::{read_items, read_raw, write_raw, EvalItem, RawResult, RunMeta};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub items: Vec<EvalItem>,
    pub raw: Vec<RawResult>,
    /// Refusal templates in force when the run was generated.
    pub templates: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunStore {
    runs: PathBuf,
    reports: PathBuf,
}

pub fn validate_run_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(ServiceError::BadRequest(format!("invalid run id {id:?}")))
    }
}

impl RunStore {
    pub fn open(data_dir: &Path) -> Result<Self> {
        let s = RunStore { runs: data_dir.join("runs"), reports: data_dir.join("reports") };
        fs::create_dir_all(&s.runs)?;
        fs::create_dir_all(&s.reports)?;
        Ok(s)
    }

    /// Creates the run directory; fails with a conflict if it exists.
    pub fn reserve(&self, run_id: &str) -> Result<()> {
        validate_run_id(run_id)?;
        match fs::create_dir(self.runs.join(run_id)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(ServiceError::Conflict(format!("run {run_id} exists"))),
            Err(e) => Err(e.into()),
        }
    }

    /// Reserves the first free `run-NNNN`.
    pub fn reserve_next(&self) -> Result<String> {
        let mut n = self.list()?.len() + 1;
        loop {
            let id = format!("run-{n:04}");
            match self.reserve(&id) {
                Err(ServiceError::Conflict(_)) => n += 1,
                other => return other.map(|()| id),
            }
        }
    }

    pub fn release(&self, run_id: &str) {
        let _ = fs::remove_dir_all(self.runs.join(run_id));
    }

    pub fn save(&self, run: &RunRecord) -> Result<()> {
        let dir = self.runs.join(&run.meta.run_id);
        let mut items = fs::File::create(dir.join("items.jsonl"))?;
        for i in &run.items {
            writeln!(items, "{}", serde_json::to_string(i)?)?;
        }
        write_raw(&dir.join("raw.jsonl"), &run.raw)?;
        fs::write(dir.join("templates.json"), serde_json::to_vec_pretty(&run.templates)?)?;
        // meta.json last: its presence marks the run complete.
        fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&run.meta)?)?;
        Ok(())
    }

    pub fn load(&self, run_id: &str) -> Result<RunRecord> {
        validate_run_id(run_id)?;
        let dir = self.runs.join(run_id);
        let meta_path = dir.join("meta.json");
        if !meta_path.exists() {
            return Err(ServiceError::NotFound(format!("run {run_id}")));
        }
        Ok(RunRecord {
            meta: serde_json::from_slice(&fs::read(meta_path)?)?,
            items: read_items(&dir.join("items.jsonl"))?,
            raw: read_raw(&dir.join("raw.jsonl"))?,
            templates: serde_json::from_slice(&fs::read(dir.join("templates.json"))?)?,
        })
    }

    /// Completed runs, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for e in fs::read_dir(&self.runs)? {
            let e = e?;
            if e.path().join("meta.json").exists() {
                ids.push(e.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn report_path(&self, run_id: &str) -> PathBuf {
        self.reports.join(format!("{run_id}.json"))
    }

    pub fn write_report(&self, run_id: &str, bytes: &[u8]) -> Result<()> {
        let tmp = self.reports.join(format!(".{run_id}.json.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, self.report_path(run_id))?;
        Ok(())
    }

    pub fn read_report(&self, run_id: &str) -> Result<Vec<u8>> {
        validate_run_id(run_id)?;
        fs::read(self.report_path(run_id)).map_err(|e| match e.kind() {
            ErrorKind::NotFound => ServiceError::NotFound(format!("report {run_id}")),
            _ => e.into(),
        })
    }
}
