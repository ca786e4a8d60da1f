//! Run configuration and end-to-end experiment orchestration.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    apply_scaler, Category, clean, fit_scaler, load_records, stratified_split, ColumnSpec, FlowRecord, LabelCodec, Task,
};
use crate::error::{Error, Result};
use crate::eval::{attack_generalization_matrix, cross_period_eval, EvalGrid, GeneralizationMatrix, TestPeriod};
use crate::fed::{materialize, run_timeline, Checkpoint, FedConfig, RoundLog};
use crate::nn::ModelArch;
use crate::seed::Seed;
use crate::synth::{default_paper_shaped_scenario, generate, ScenarioSpec};
use crate::timeline::{
    build_schedule, cap_classes, composition_report, plan_strategy, Caps, CompositionRow, Period, SegmentedData,
    StrategyConfig,
};

/// Learning rate set by [`RunConfig::apply_desk_preset`].
pub const DESK_LEARNING_RATE: f64 = 0.01;

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Delimited text file. Without `columns`, features are read from
    /// `feature_00 ..` and labels from `label`.
    Csv {
        path: PathBuf,
        #[serde(default)]
        columns: Option<PathBuf>,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
    /// Generated data; the default scenario when `scenario` is absent.
    Synthetic {
        #[serde(default)]
        scenario: Option<ScenarioSpec>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { scenario: None }
    }
}

fn default_tasks() -> Vec<Task> {
    vec![Task::Binary, Task::SixClass]
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("driftfed-out")
}

/// Everything needed to reproduce a run. `fed.seed` is derived from `seed`
/// at run time; `model.output_dim` is set per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    #[serde(default = "StrategyConfig::all_rows")]
    pub strategies: Vec<StrategyConfig>,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub fed: FedConfig,
    #[serde(default)]
    pub model: ModelArch,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: Seed,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tasks: default_tasks(),
            strategies: StrategyConfig::all_rows(),
            data: DataSource::default(),
            fed: FedConfig::default(),
            model: ModelArch::default(),
            caps: Caps::default(),
            train_fraction: default_train_fraction(),
            output_dir: default_output_dir(),
            seed: Seed::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML config, or the `config` entry of a run manifest when the
    /// file ends in `.json`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: Manifest = serde_json::from_str(&text)?;
            return Ok(manifest.config);
        }
        Ok(toml::from_str(&text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Run(format!("cannot render config: {e}")))
    }

    /// Shrinks the model and schedule to laptop size: one LSTM layer of 16
    /// units, 3 rounds, 5 local epochs. The learning rate rises to
    /// [`DESK_LEARNING_RATE`] because the default barely moves the model in
    /// the few optimizer steps this budget allows.
    pub fn apply_desk_preset(&mut self) {
        self.model.hidden_layers = 1;
        self.model.hidden_units = 16;
        self.fed.rounds = 3;
        self.fed.train.local_epochs = 5;
        self.fed.train.learning_rate = DESK_LEARNING_RATE;
    }

    /// Model shape used for `task`.
    pub fn arch_for(&self, task: Task) -> ModelArch {
        ModelArch {
            output_dim: task.num_classes(),
            ..self.model
        }
    }

    fn feature_count(&self) -> Option<usize> {
        match &self.data {
            DataSource::Synthetic { scenario: Some(s) } => Some(s.num_features),
            DataSource::Synthetic { scenario: None } => Some(default_paper_shaped_scenario(self.seed).num_features),
            DataSource::Csv { columns: None, .. } => None,
            DataSource::Csv { columns: Some(p), .. } => ColumnSpec::from_toml_file(p).ok().map(|c| c.features.len()),
        }
    }
}

/// A violated constraint on one configuration field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// All problems that would stop `cfg` from running; empty when it is runnable.
pub fn validate_config(cfg: &RunConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |field: String, message: String| out.push(Diagnostic { field, message });
    if cfg.tasks.is_empty() {
        push("tasks".into(), "at least one task is required".into());
    }
    if cfg.strategies.is_empty() {
        push("strategies".into(), "at least one strategy is required".into());
    }
    let mut ids = std::collections::BTreeSet::new();
    for (i, s) in cfg.strategies.iter().enumerate() {
        for (field, message) in s.diagnostics() {
            push(format!("strategies[{i}].{field}"), message);
        }
        if !ids.insert(s.id()) {
            push(format!("strategies[{i}]"), format!("duplicate strategy {}", s.id()));
        }
    }
    if let Err(e) = cfg.fed.validate() {
        push("fed".into(), e.to_string());
    }
    if let Err(e) = cfg.arch_for(Task::Binary).validate() {
        push("model".into(), e.to_string());
    }
    if let Some(n) = cfg.feature_count() {
        if cfg.model.row_width() != n {
            push(
                "model".into(),
                format!(
                    "input_dim x seq_len = {} but the data has {n} features per row",
                    cfg.model.row_width()
                ),
            );
        }
    }
    if cfg.caps.train == 0 || cfg.caps.test == 0 {
        push("caps".into(), "caps must be positive".into());
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        push("train_fraction".into(), format!("must be in (0, 1), got {}", cfg.train_fraction));
    }
    match &cfg.data {
        DataSource::Csv { path, columns, delimiter } => {
            if !path.is_file() {
                push("data.path".into(), format!("{} is not a readable file", path.display()));
            }
            if let Some(c) = columns {
                if let Err(e) = ColumnSpec::from_toml_file(c) {
                    push("data.columns".into(), e.to_string());
                }
            }
            if !delimiter.is_ascii() {
                push("data.delimiter".into(), "must be a single ASCII character".into());
            }
        }
        DataSource::Synthetic { scenario: Some(s) } => {
            if let Err(e) = s.validate() {
                push("data.scenario".into(), e.to_string());
            }
        }
        DataSource::Synthetic { scenario: None } => {}
    }
    if cfg.output_dir.is_file() {
        push("output_dir".into(), "exists and is not a directory".into());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub loaded: usize,
    pub after_cleaning: usize,
    pub train: usize,
    pub test: usize,
    pub features: usize,
}

/// Cleaned, split and min-max scaled records.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<FlowRecord>,
    pub test: Vec<FlowRecord>,
    pub summary: DataSummary,
}

fn load_source(cfg: &RunConfig) -> Result<Vec<FlowRecord>> {
    match &cfg.data {
        DataSource::Csv { path, columns, delimiter } => {
            let spec = match columns {
                Some(p) => ColumnSpec::from_toml_file(p)?,
                None => ColumnSpec::numbered(cfg.model.row_width()),
            };
            load_records(path, &spec, *delimiter as u8)
        }
        DataSource::Synthetic { scenario } => {
            let spec = scenario
                .clone()
                .unwrap_or_else(|| default_paper_shaped_scenario(cfg.seed.child("synth")));
            generate(&spec)
        }
    }
}

pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let raw = load_source(cfg)?;
    let loaded = raw.len();
    let cleaned = clean(raw);
    let after_cleaning = cleaned.len();
    let (train, test) = stratified_split(&cleaned, cfg.train_fraction, cfg.seed.child("split"))?;
    let stats = fit_scaler(&train)?;
    let train = apply_scaler(&stats, &train);
    let test = apply_scaler(&stats, &test);
    Ok(PreparedData {
        summary: DataSummary {
            loaded,
            after_cleaning,
            train: train.len(),
            test: test.len(),
            features: stats.min.len(),
        },
        train,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub period: Period,
    pub train_sample_count: usize,
    pub train_wall_clock: f64,
    pub file: String,
}

/// Results of one strategy on one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: StrategyConfig,
    pub id: String,
    pub label: String,
    pub checkpoints: Vec<CheckpointSummary>,
    pub grid: EvalGrid,
    /// Protocol accuracy per test period, in `test_periods` order.
    pub accuracy: Vec<f64>,
    pub average_accuracy: f64,
    pub train_seconds: Vec<f64>,
    pub train_seconds_total: f64,
    /// Protocol-cell inference time per test period.
    pub inference_seconds: Vec<f64>,
    pub inference_seconds_total: f64,
    pub rounds: Vec<RoundLog>,
    pub composition: Vec<CompositionRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: Task,
    pub arch: ModelArch,
    pub test_periods: Vec<Period>,
    pub strategies: Vec<StrategyReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
    pub config: RunConfig,
    pub resolved_fed_seed: Seed,
    #[serde(default)]
    pub data: Option<DataSummary>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub tasks: Vec<TaskReport>,
}

struct Artifacts<'a> {
    root: &'a Path,
    written: Vec<String>,
}

impl Artifacts<'_> {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push(rel.to_string());
        Ok(())
    }
}

fn fed_seed(cfg: &RunConfig) -> Seed {
    cfg.seed.child("fed")
}

/// Output of [`run_task`]: the report plus each strategy's checkpoints, in
/// strategy order.
#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub report: TaskReport,
    pub checkpoints: Vec<Vec<Checkpoint>>,
}

fn checkpoint_file(task: Task, strategy: &str, period: Period) -> String {
    format!("{}/{strategy}/checkpoints/{period}.ckpt", task.name())
}

/// Trains and evaluates every configured strategy on one task.
pub fn run_task(cfg: &RunConfig, data: &PreparedData, task: Task) -> Result<TaskOutcome> {
    let codec = LabelCodec::new(task);
    let schedule = build_schedule(task);
    let segmented = cap_classes(
        SegmentedData::build(task, data.train.clone(), data.test.clone()),
        cfg.caps,
        cfg.seed.child(task.name()),
    );
    let tests = schedule
        .iter()
        .map(|s| {
            Ok(TestPeriod {
                period: s.period,
                data: segmented.test_dataset(&codec, s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let arch = cfg.arch_for(task);
    let fed = FedConfig {
        seed: fed_seed(cfg).child(task.name()),
        ..cfg.fed.clone()
    };
    let mut reports = Vec::with_capacity(cfg.strategies.len());
    let mut checkpoints = Vec::with_capacity(cfg.strategies.len());
    for strategy in &cfg.strategies {
        let started = Instant::now();
        let id = strategy.id();
        let plans = plan_strategy(
            strategy,
            &schedule,
            &segmented,
            fed.num_clients,
            cfg.seed.child("compose").child(task.name()),
        )?;
        let periods = materialize(&plans, &segmented, &codec)?;
        let run = run_timeline(strategy, &periods, arch, &fed)?;
        let grid = cross_period_eval(&run.checkpoints, &tests, codec.benign_index())?;
        let protocol = grid.protocol()?;
        let accuracy: Vec<f64> = protocol.iter().map(|r| r.accuracy).collect();
        let inference_seconds: Vec<f64> = protocol.iter().map(|r| r.inference_seconds).collect();
        let train_seconds: Vec<f64> = run.checkpoints.iter().map(|c| c.train_wall_clock).collect();
        let average_accuracy = grid.protocol_average()?;
        log::info!(
            "{task} {id}: average accuracy {average_accuracy:.4} ({:.1}s)",
            started.elapsed().as_secs_f64()
        );
        reports.push(StrategyReport {
            strategy: strategy.clone(),
            label: strategy.label(),
            checkpoints: run
                .checkpoints
                .iter()
                .map(|c| CheckpointSummary {
                    period: c.period,
                    train_sample_count: c.train_sample_count,
                    train_wall_clock: c.train_wall_clock,
                    file: checkpoint_file(task, &id, c.period),
                })
                .collect(),
            average_accuracy,
            inference_seconds_total: grid.protocol_latency()?,
            train_seconds_total: train_seconds.iter().sum(),
            grid,
            accuracy,
            train_seconds,
            inference_seconds,
            rounds: run.rounds,
            composition: composition_report(strategy, &plans),
            id,
        });
        checkpoints.push(run.checkpoints);
    }
    Ok(TaskOutcome {
        report: TaskReport {
            task,
            arch,
            test_periods: tests.iter().map(|t| t.period).collect(),
            strategies: reports,
        },
        checkpoints,
    })
}

fn csv_text<F>(header: &[String], rows: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    rows(&mut w)?;
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Run(format!("cannot flush table: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Run(e.to_string()))
}

fn fmt_acc(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_secs(v: f64) -> String {
    format!("{v:.6}")
}

/// Protocol accuracy per test period plus the average, one row per strategy.
pub fn render_accuracy_table(report: &TaskReport) -> Result<String> {
    let mut header = vec!["strategy".to_string(), "label".to_string()];
    header.extend(report.test_periods.iter().map(Period::to_string));
    header.push("avg".into());
    csv_text(&header, |w| {
        for s in &report.strategies {
            let mut row = vec![s.id.clone(), s.label.clone()];
            row.extend(s.accuracy.iter().map(|&v| fmt_acc(v)));
            row.push(fmt_acc(s.average_accuracy));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

/// Training wall clock per checkpoint period and protocol inference time per
/// test period, with totals. Timings vary between runs.
pub fn render_latency_table(report: &TaskReport) -> Result<String> {
    let train_periods: Vec<Period> = {
        let mut all: Vec<Period> = report
            .strategies
            .iter()
            .flat_map(|s| s.checkpoints.iter().map(|c| c.period))
            .collect();
        all.sort();
        all.dedup();
        all
    };
    let mut header = vec!["strategy".to_string()];
    header.extend(train_periods.iter().map(|p| format!("train_{p}")));
    header.push("train_total".into());
    header.extend(report.test_periods.iter().map(|p| format!("infer_{p}")));
    header.push("infer_total".into());
    csv_text(&header, |w| {
        for s in &report.strategies {
            let mut row = vec![s.id.clone()];
            for p in &train_periods {
                row.push(
                    s.checkpoints
                        .iter()
                        .find(|c| c.period == *p)
                        .map(|c| fmt_secs(c.train_wall_clock))
                        .unwrap_or_default(),
                );
            }
            row.push(fmt_secs(s.train_seconds_total));
            row.extend(s.inference_seconds.iter().map(|&v| fmt_secs(v)));
            row.push(fmt_secs(s.inference_seconds_total));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

/// Every (checkpoint, test period) cell of one strategy, without timings.
pub fn render_metrics_table(s: &StrategyReport) -> Result<String> {
    let header: Vec<String> = [
        "strategy",
        "checkpoint_period",
        "test_period",
        "protocol",
        "samples",
        "accuracy",
        "macro_precision",
        "macro_recall",
        "macro_f1",
        "micro_precision",
        "micro_recall",
        "micro_f1",
        "far",
    ]
    .iter()
    .map(|h| h.to_string())
    .collect();
    let protocol: Vec<(Period, Period)> = s
        .grid
        .protocol()?
        .iter()
        .map(|r| (r.checkpoint_period, r.test_period))
        .collect();
    csv_text(&header, |w| {
        for row in &s.grid.reports {
            for r in row {
                let on_protocol = protocol.contains(&(r.checkpoint_period, r.test_period));
                w.write_record([
                    s.id.clone(),
                    r.checkpoint_period.to_string(),
                    r.test_period.to_string(),
                    on_protocol.to_string(),
                    r.samples.to_string(),
                    fmt_acc(r.accuracy),
                    fmt_acc(r.precision),
                    fmt_acc(r.recall),
                    fmt_acc(r.f1),
                    fmt_acc(r.micro_precision),
                    fmt_acc(r.micro_recall),
                    fmt_acc(r.micro_f1),
                    r.far.map(fmt_acc).unwrap_or_default(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn render_composition_table(rows: &[CompositionRow]) -> Result<String> {
    let header: Vec<String> = ["strategy", "period", "sub_attack", "source", "rows"]
        .iter()
        .map(|h| h.to_string())
        .collect();
    csv_text(&header, |w| {
        for r in rows {
            w.write_record([
                r.strategy.clone(),
                r.period.to_string(),
                r.sub_attack.clone(),
                r.source.name().to_string(),
                r.rows.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn render_rounds_table(rounds: &[RoundLog]) -> Result<String> {
    let header: Vec<String> = ["period", "round", "validation_accuracy"]
        .iter()
        .map(|h| h.to_string())
        .collect();
    csv_text(&header, |w| {
        for r in rounds {
            w.write_record([
                r.period.to_string(),
                r.round.to_string(),
                r.validation_accuracy.map(fmt_acc).unwrap_or_default(),
            ])?;
        }
        Ok(())
    })
}

/// Files derived from a task report, as (path relative to the output
/// directory, contents).
pub fn render_task_files(report: &TaskReport) -> Result<Vec<(String, String)>> {
    let t = report.task.name();
    let mut files = vec![
        (format!("{t}/accuracy.csv"), render_accuracy_table(report)?),
        (format!("{t}/latency.csv"), render_latency_table(report)?),
    ];
    for s in &report.strategies {
        files.push((format!("{t}/{}/metrics.csv", s.id), render_metrics_table(s)?));
        files.push((format!("{t}/{}/composition.csv", s.id), render_composition_table(&s.composition)?));
        files.push((format!("{t}/{}/rounds.csv", s.id), render_rounds_table(&s.rounds)?));
    }
    Ok(files)
}

fn write_task(out: &mut Artifacts<'_>, outcome: &TaskOutcome) -> Result<()> {
    for (s, cks) in outcome.report.strategies.iter().zip(&outcome.checkpoints) {
        for (summary, c) in s.checkpoints.iter().zip(cks) {
            out.write(&summary.file, &c.to_bytes())?;
        }
    }
    for (rel, text) in render_task_files(&outcome.report)? {
        out.write(&rel, text.as_bytes())?;
    }
    let json = serde_json::to_vec_pretty(&outcome.report)?;
    out.write(&format!("{}/metrics.json", outcome.report.task.name()), &json)
}

/// Runs every task in `cfg` and writes all artifacts under
/// `cfg.output_dir`. On failure a manifest marked partial is still written
/// before the error is returned.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunSummary> {
    let diags = validate_config(cfg);
    if !diags.is_empty() {
        let list: Vec<String> = diags.iter().map(ToString::to_string).collect();
        return Err(Error::Run(format!("invalid configuration: {}", list.join("; "))));
    }
    let started = Instant::now();
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut out = Artifacts {
        root: &cfg.output_dir,
        written: Vec::new(),
    };
    let mut data_summary = None;
    let mut tasks = Vec::new();
    let result = (|| -> Result<()> {
        let data = prepare_data(cfg)?;
        log::info!(
            "data: {} rows loaded, {} after cleaning, {} train / {} test",
            data.summary.loaded,
            data.summary.after_cleaning,
            data.summary.train,
            data.summary.test
        );
        data_summary = Some(data.summary.clone());
        for &task in &cfg.tasks {
            let outcome = run_task(cfg, &data, task)?;
            write_task(&mut out, &outcome)?;
            tasks.push(outcome.report);
        }
        Ok(())
    })();
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        status: if result.is_ok() {
            RunStatus::Complete
        } else {
            RunStatus::Partial
        },
        error: result.as_ref().err().map(ToString::to_string),
        config: cfg.clone(),
        resolved_fed_seed: fed_seed(cfg),
        data: data_summary,
        artifacts: out.written.clone(),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    out.write("manifest.json", &json)?;
    result?;
    Ok(RunSummary { manifest, tasks })
}

/// Train-family by test-family accuracy, one row per training family with
/// the row mean last.
pub fn render_generalization_table(m: &GeneralizationMatrix) -> Result<String> {
    let mut header = vec!["train".to_string()];
    header.extend(m.families.iter().map(|f| f.name().to_string()));
    header.push("mean".into());
    csv_text(&header, |w| {
        for (f, row) in m.families.iter().zip(&m.accuracy) {
            let mut rec = vec![f.name().to_string()];
            rec.extend(row.iter().copied().map(fmt_acc));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

/// Builds the attack-to-attack generalization matrix on the configured data
/// and writes `generalization.csv` under `cfg.output_dir`.
pub fn run_generalization(cfg: &RunConfig) -> Result<GeneralizationMatrix> {
    let diags = validate_config(cfg);
    if !diags.is_empty() {
        let list: Vec<String> = diags.iter().map(ToString::to_string).collect();
        return Err(Error::Run(format!("invalid configuration: {}", list.join("; "))));
    }
    let data = prepare_data(cfg)?;
    let fed = FedConfig {
        seed: fed_seed(cfg).child("generalization"),
        ..cfg.fed.clone()
    };
    let m = attack_generalization_matrix(
        &Category::ATTACKS,
        &data.train,
        &data.test,
        cfg.arch_for(Task::Binary),
        &fed,
    )?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let path = cfg.output_dir.join("generalization.csv");
    fs::write(&path, render_generalization_table(&m)?).map_err(|e| Error::io(&path, e))?;
    Ok(m)
}

/// Re-renders the CSV tables of every task report found under `dir`.
pub fn rerender_reports(dir: &Path, dest: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for task in [Task::Binary, Task::SixClass] {
        let path = dir.join(task.name()).join("metrics.json");
        if !path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let report: TaskReport = serde_json::from_str(&text)?;
        for (rel, body) in render_task_files(&report)? {
            let target = dest.join(rel);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(&target, body).map_err(|e| Error::io(&target, e))?;
            written.push(target);
        }
    }
    if written.is_empty() {
        return Err(Error::Run(format!("no task metrics.json found under {}", dir.display())));
    }
    Ok(written)
}
