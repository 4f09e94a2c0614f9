//! The `ttf` subcommands. Each returns a JSON summary for stdout.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use ttf_core::eval::{fit_holdout, mape_p, predict_records, run_ablation, EvalReport};
use ttf_core::ltv::{Day, LtvDataset};
use ttf_core::model::MtFusionNet;
use ttf_core::synth::{default_calendar, describe, generate};
use ttf_core::trapezoid::{build_window, TrapezoidWindow, WindowSpec};

use crate::batch::{self, code_version, PredictionBatch};
use crate::config::PipelineConfig;
use crate::drift::{Decision, DriftCheck, DriftState};
use crate::error::{OpsError, Result};
use crate::events::{EventKind, EventLog};
use crate::hub::{fingerprint, now, read_json, write_atomic, write_json, Hub, ModelHubEntry, ModelStatus, ValidationMetrics};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Generate,
    Train,
    Approve,
    Predict,
    Evaluate,
    Ablate,
    Monitor,
    Rollback,
}

#[derive(Clone, Debug)]
pub struct Options {
    pub config: PipelineConfig,
    /// Hub root directory.
    pub out: PathBuf,
    pub dataset_version: Option<String>,
    pub model_version: Option<String>,
    pub seed: Option<u64>,
    pub batch: Option<String>,
    pub advance_days: usize,
    /// Added to every realized MAPE_p point during `monitor`.
    pub inject_mape_p: f64,
}

impl Options {
    pub fn new(out: impl Into<PathBuf>, config: PipelineConfig) -> Self {
        Options {
            config,
            out: out.into(),
            dataset_version: None,
            model_version: None,
            seed: None,
            batch: None,
            advance_days: 1,
            inject_mape_p: 0.0,
        }
    }
}

/// Simulated monitoring clock and drift window, persisted between runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorState {
    pub model_version: String,
    /// Last simulated day already checked.
    pub clock: Day,
    pub days_since_schedule: usize,
    pub baseline_source: BaselineSource,
    pub drift: DriftState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineSource {
    /// Mean realized MAPE_p over the first window after activation.
    Realized,
    /// Pooled MAPE_p on the held-out cohorts at training time.
    Validation,
}

pub fn run(cmd: Command, opts: &Options) -> Result<Value> {
    let hub = Hub::open(&opts.out)?;
    let _lock = hub.lock()?;
    let ctx = Ctx {
        hub: &hub,
        opts,
        events: EventLog::new(hub.path("events.ndjson")),
    };
    match cmd {
        Command::Generate => ctx.generate(),
        Command::Train => ctx.train(),
        Command::Approve => ctx.approve(),
        Command::Predict => ctx.predict(),
        Command::Evaluate => ctx.evaluate(),
        Command::Ablate => ctx.ablate(),
        Command::Monitor => ctx.monitor(),
        Command::Rollback => ctx.rollback(),
    }
}

struct Ctx<'a> {
    hub: &'a Hub,
    opts: &'a Options,
    events: EventLog,
}

impl Ctx<'_> {
    fn cfg(&self) -> &PipelineConfig {
        &self.opts.config
    }

    fn model_flag(&self) -> Result<&str> {
        self.opts
            .model_version
            .as_deref()
            .ok_or_else(|| OpsError::Usage("--model-version is required".into()))
    }

    /// The flag, else the most recently published dataset.
    fn dataset_version(&self) -> Result<String> {
        if let Some(v) = &self.opts.dataset_version {
            return Ok(v.clone());
        }
        self.events
            .read_all()?
            .into_iter()
            .rev()
            .find_map(|e| match e.kind {
                EventKind::DatasetPublished { version } => Some(version),
                _ => None,
            })
            .ok_or_else(|| OpsError::Usage("no dataset published; run generate or pass --dataset-version".into()))
    }

    fn generate(&self) -> Result<Value> {
        let mut gcfg = self.cfg().generator.clone();
        if let Some(seed) = self.opts.seed {
            gcfg.seed = seed;
        }
        let calendar = default_calendar(gcfg.first_date, gcfg.last_date);
        let data = generate(&gcfg, &calendar)?;
        let provenance = json!({
            "source": "synthetic",
            "generator": gcfg,
            "code_version": code_version(),
        });
        let entry = self.hub.publish_dataset(&data, provenance)?;
        self.events.append(EventKind::DatasetPublished {
            version: entry.version.clone(),
        })?;
        Ok(json!({ "dataset": entry, "summary": describe(&data) }))
    }

    fn train(&self) -> Result<Value> {
        let cfg = self.cfg();
        let dataset_version = self.dataset_version()?;
        let data = self.hub.load_dataset(&dataset_version)?;
        let seed = self.opts.seed.unwrap_or(cfg.train.seed);
        let mcfg = cfg.model.model_config(&data, seed)?;
        let mut tcfg = cfg.train.clone();
        tcfg.seed = seed;
        tcfg.validate()?;
        let run = fit_holdout(&mcfg, &tcfg, &data, cfg.split.test_fraction, cfg.split.train_stride)?;
        let holdout_start = data
            .channels()
            .iter()
            .filter_map(|c| run.split.cutoff(c))
            .min()
            .ok_or_else(|| OpsError::Usage("no held-out period".into()))?;
        let entry = ModelHubEntry {
            version: String::new(),
            artifact: PathBuf::new(),
            model_config_fingerprint: fingerprint(&mcfg),
            train_config_fingerprint: fingerprint(&tcfg),
            dataset_version: dataset_version.clone(),
            validation: ValidationMetrics {
                mape_p: run.report.mape_p,
                mape_a: run.report.mape_a,
                records: run.report.records,
                holdout_start,
            },
            status: ModelStatus::Candidate,
            created_at: now(),
        };
        let entry = self.hub.register_model(&run.model, entry)?;
        let v = &entry.version;
        write_atomic(&self.hub.model_file(v, "train_report.json"), run.training.to_json().as_bytes())?;
        let mut epochs = Vec::new();
        run.training
            .write_epochs_csv(&mut epochs)
            .map_err(|e| OpsError::io("epochs.csv", e))?;
        write_atomic(&self.hub.model_file(v, "epochs.csv"), &epochs)?;
        write_atomic(&self.hub.model_file(v, "validation.json"), run.report.to_json().as_bytes())?;
        self.events.append(EventKind::ModelRegistered {
            version: v.clone(),
            dataset_version,
        })?;
        Ok(json!({ "model": entry, "training": {
            "epochs": run.training.epochs.len(),
            "chosen_epoch": run.training.chosen_epoch,
            "train_windows": run.training.train_windows,
            "val_windows": run.training.val_windows,
        }}))
    }

    fn approve(&self) -> Result<Value> {
        let version = self.model_flag()?;
        let mut entry = self.hub.model_entry(version)?;
        if !entry.validation.passing() {
            return Err(OpsError::Usage(format!("model `{version}` has no passing validation metrics")));
        }
        if entry.status == ModelStatus::Retired {
            return Err(OpsError::Usage(format!("model `{version}` is retired")));
        }
        let previous = self.hub.serving()?.map(|p| p.model_version);
        entry.status = ModelStatus::Approved;
        self.hub.update_model_entry(&entry)?;
        let pointer = self.hub.set_serving(version)?;
        self.events.append(EventKind::Deployed {
            version: version.to_string(),
            previous: previous.clone(),
        })?;
        self.rebase_monitor(&entry)?;
        Ok(json!({ "serving": pointer, "previous": previous, "model": entry }))
    }

    fn rollback(&self) -> Result<Value> {
        let to = self.model_flag()?;
        let entry = self.hub.model_entry(to)?;
        if entry.status != ModelStatus::Approved {
            return Err(OpsError::NotApproved(to.to_string()));
        }
        let current = self.hub.serving()?.map(|p| p.model_version);
        if current.as_deref() == Some(to) {
            self.events.append(EventKind::RollbackNoop {
                version: to.to_string(),
            })?;
            return Ok(json!({ "active": to, "noop": true }));
        }
        self.hub.set_serving(to)?;
        if let Some(from) = &current {
            let mut old = self.hub.model_entry(from)?;
            old.status = ModelStatus::Retired;
            self.hub.update_model_entry(&old)?;
        }
        self.events.append(EventKind::Rollback {
            from: current.clone(),
            to: to.to_string(),
        })?;
        self.rebase_monitor(&entry)?;
        Ok(json!({ "active": to, "from": current, "noop": false }))
    }

    fn serving_model(&self) -> Result<String> {
        if let Some(v) = &self.opts.model_version {
            return Ok(v.clone());
        }
        self.hub
            .serving()?
            .map(|p| p.model_version)
            .ok_or_else(|| OpsError::Usage("no serving model; approve one or pass --model-version".into()))
    }

    fn predict(&self) -> Result<Value> {
        let model_version = self.serving_model()?;
        let entry = self.hub.model_entry(&model_version)?;
        let dataset_version = self
            .opts
            .dataset_version
            .clone()
            .unwrap_or_else(|| entry.dataset_version.clone());
        let data = self.hub.load_dataset(&dataset_version)?;
        let model = self.hub.load_model(&model_version)?;
        let spec = model.config().spec;
        let as_of = match self.cfg().predict.as_of {
            Some(d) => d,
            None => data
                .date_range()
                .map(|r| r.1)
                .ok_or_else(|| OpsError::Usage("dataset is empty".into()))?,
        };
        let windows = newest_windows(&data, spec, as_of, self.cfg().predict.cohorts);
        if windows.is_empty() {
            return Err(OpsError::Usage(format!("no cohorts with {} observed days by {as_of}", spec.m)));
        }
        let records = predict_records(&model, &windows, data.calendar())?;
        let csv = batch::render(&records, spec.m, &model_version, &dataset_version);
        let meta = PredictionBatch {
            batch_id: String::new(),
            model_version: model_version.clone(),
            dataset_version: dataset_version.clone(),
            code_version: code_version(),
            created_at: now(),
            as_of,
            m: spec.m,
            n: spec.n,
            cohorts: records.len(),
            rows: records.len() * spec.n,
            file: PathBuf::new(),
        };
        let meta = batch::store(self.hub, &csv, meta)?;
        self.events.append(EventKind::Prediction {
            batch: meta.batch_id.clone(),
            model_version,
            dataset_version,
        })?;
        Ok(json!({ "batch": meta }))
    }

    fn evaluate(&self) -> Result<Value> {
        let id = self
            .opts
            .batch
            .as_deref()
            .ok_or_else(|| OpsError::Usage("--batch is required".into()))?;
        let (meta, rows) = batch::load(self.hub, id)?;
        let dataset_version = self
            .opts
            .dataset_version
            .clone()
            .unwrap_or_else(|| meta.dataset_version.clone());
        let data = self.hub.load_dataset(&dataset_version)?;
        let (records, unmatured) = batch::join_actuals(&rows, &meta, &data)?;
        if records.is_empty() {
            return Err(OpsError::Usage(format!(
                "none of the {unmatured} cohorts in batch `{id}` has matured in dataset `{dataset_version}`"
            )));
        }
        let report = EvalReport::from_records(&records, meta.m + meta.n, id)?;
        let reports = self.hub.path("reports");
        write_atomic(&reports.join(format!("{id}.json")), report.to_json().as_bytes())?;
        let mut csv = Vec::new();
        report.write_csv(&mut csv).map_err(|e| OpsError::io("report.csv", e))?;
        write_atomic(&reports.join(format!("{id}.csv")), &csv)?;
        self.events.append(EventKind::Evaluation {
            batch: id.to_string(),
            mape_p: report.mape_p,
            mape_a: report.mape_a,
        })?;
        Ok(json!({
            "batch": id,
            "dataset_version": dataset_version,
            "unmatured_cohorts": unmatured,
            "report": report,
        }))
    }

    fn ablate(&self) -> Result<Value> {
        let dataset_version = self.dataset_version()?;
        let data = self.hub.load_dataset(&dataset_version)?;
        let seed = self.opts.seed.unwrap_or(self.cfg().train.seed);
        let grid = self.cfg().ablation_grid(&data, seed)?;
        let table = run_ablation(&grid, &data)?;
        let text = table.render();
        let name = format!("ablation-{}-{}", dataset_version, fingerprint(&(&self.cfg().ablation, seed)));
        let reports = self.hub.path("reports");
        write_atomic(&reports.join(format!("{name}.txt")), text.as_bytes())?;
        let rows: Vec<Value> = table
            .rows
            .iter()
            .map(|r| {
                json!({
                    "cell": r.cell,
                    "mape_p": r.report.mape_p,
                    "mape_a": r.report.mape_a,
                    "records": r.report.records,
                    "fingerprint": r.report.fingerprint,
                })
            })
            .collect();
        write_json(&reports.join(format!("{name}.json")), &rows)?;
        Ok(json!({ "dataset_version": dataset_version, "rows": rows, "table": text }))
    }

    fn monitor_path(&self) -> PathBuf {
        self.hub.path("monitor.json")
    }

    /// Resets the drift window to the newly active model. The clock starts
    /// the day before the first held-out cohort fully matures. The baseline
    /// is the model's mean realized MAPE_p over the next full window of
    /// days, or its pooled validation MAPE_p when the data ends sooner.
    fn rebase_monitor(&self, entry: &ModelHubEntry) -> Result<()> {
        let model = self.hub.load_model(&entry.version)?;
        let data = self.hub.load_dataset(&entry.dataset_version)?;
        let n = model.config().spec.n as i64;
        let path = self.monitor_path();
        let mon = self.cfg().monitor.clone();
        let mut state = if path.exists() {
            read_json::<MonitorState>(&path)?
        } else {
            MonitorState {
                model_version: entry.version.clone(),
                clock: entry.validation.holdout_start.plus(n - 2),
                days_since_schedule: 0,
                baseline_source: BaselineSource::Validation,
                drift: DriftState::new(mon.window_days, mon.threshold),
            }
        };
        let mut points = Vec::new();
        for d in 1..=state.drift.window_days as i64 {
            match realized_mape_p(&model, &data, state.clock.plus(d))? {
                Some(p) => points.push(p),
                None => break,
            }
        }
        let (baseline, source) = if !points.is_empty() && points.len() == state.drift.window_days {
            (points.iter().sum::<f64>() / points.len() as f64, BaselineSource::Realized)
        } else {
            (entry.validation.mape_p, BaselineSource::Validation)
        };
        state.model_version = entry.version.clone();
        state.baseline_source = source;
        state.drift.rebase(baseline);
        write_json(&path, &state)
    }

    fn monitor(&self) -> Result<Value> {
        let path = self.monitor_path();
        if !path.exists() {
            return Err(OpsError::NoBaseline);
        }
        let mut state: MonitorState = read_json(&path)?;
        let entry = self.hub.model_entry(&state.model_version)?;
        let dataset_version = self
            .opts
            .dataset_version
            .clone()
            .unwrap_or_else(|| entry.dataset_version.clone());
        let data = self.hub.load_dataset(&dataset_version)?;
        let model = self.hub.load_model(&state.model_version)?;
        let every = self.cfg().monitor.retrain_every_days;
        let mut checks: Vec<DriftCheck> = Vec::new();
        let mut stopped = None;
        for _ in 0..self.opts.advance_days {
            let day = state.clock.plus(1);
            let Some(realized) = realized_mape_p(&model, &data, day)? else {
                stopped = Some(format!("no cohort matures on {day} in dataset `{dataset_version}`"));
                break;
            };
            let point = realized + self.opts.inject_mape_p;
            let check = state.drift.check(day, point)?;
            state.clock = day;
            self.events.append(EventKind::DriftCheck {
                day,
                mape_p: point,
                window_mean: check.window_mean,
                baseline: check.baseline,
                decision: check.decision,
                note: check.note.clone(),
            })?;
            if check.decision == Decision::RetrainTrigger {
                self.events.append(EventKind::RetrainTriggered {
                    day,
                    model_version: state.model_version.clone(),
                    window_mean: check.window_mean.unwrap_or(point),
                    baseline: check.baseline,
                })?;
            }
            state.days_since_schedule += 1;
            if every > 0 && state.days_since_schedule >= every {
                state.days_since_schedule = 0;
                self.events.append(EventKind::RetrainScheduled {
                    day,
                    model_version: state.model_version.clone(),
                })?;
            }
            checks.push(check);
        }
        write_json(&path, &state)?;
        let triggered = checks.iter().any(|c| c.decision == Decision::RetrainTrigger);
        Ok(json!({
            "model_version": state.model_version,
            "clock": state.clock,
            "checks": checks,
            "retrain_triggered": triggered,
            "stopped": stopped,
        }))
    }
}

/// Per channel, the newest `cohorts` windows whose input ends by `as_of`.
fn newest_windows(data: &LtvDataset, spec: WindowSpec, as_of: Day, cohorts: usize) -> Vec<TrapezoidWindow> {
    let mut out = Vec::new();
    for channel in data.channels() {
        let mut picked: Vec<TrapezoidWindow> = data
            .channel_curves(&channel)
            .rev()
            .filter(|c| c.activation().plus(spec.m as i64 - 1) <= as_of)
            .filter_map(|c| {
                let start = spec.start_for_last_activation(c.activation());
                build_window(data, &channel, start, spec, false).ok()
            })
            .take(cohorts)
            .collect();
        picked.reverse();
        out.extend(picked);
    }
    out
}

/// MAPE_p over the cohorts whose full horizon completes on `day`, one per
/// channel. `None` when no channel has such a cohort.
fn realized_mape_p(model: &MtFusionNet, data: &LtvDataset, day: Day) -> Result<Option<f64>> {
    let spec = model.config().spec;
    let activation = day.plus(1 - (spec.m + spec.n) as i64);
    let windows: Vec<TrapezoidWindow> = data
        .channels()
        .iter()
        .filter_map(|c| build_window(data, c, spec.start_for_last_activation(activation), spec, true).ok())
        .collect();
    if windows.is_empty() {
        return Ok(None);
    }
    let records = predict_records(model, &windows, data.calendar())?;
    Ok(Some(mape_p(&records)?))
}
