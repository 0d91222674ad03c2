//! Experiment orchestration: run configuration, the six commands and the
//! artifacts they write.
//!
//! Every command reads one [`RunConfig`]. Relative paths in it resolve
//! against the directory of the configuration file. Outputs land in
//! `out_dir`:
//!
//! | command      | writes                                                        |
//! |--------------|---------------------------------------------------------------|
//! | gen-data     | `<name>.jsonl` per dataset, `datasets.json`                   |
//! | train        | `<kind>.ckpt`, `train_<kind>.json`                            |
//! | fine-tune    | `<label>_ft.ckpt`, `finetune_<label>.json`                    |
//! | eval-pred    | `prediction.json`, `metrics_<dataset>.csv`                    |
//! | eval-control | `control.json`, `control.csv`, `episodes/<model>/episode_*`   |
//! | report       | `report.json` and every CSV and SVG, rebuilt from the above   |

mod eval;
mod metrics;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::par::par_map;
pub use eval::{eval_control, eval_prediction, ControlReport, ControlSuite, EpisodeRecord, EpisodeSetup};
pub use metrics::{compute_metrics, FinalPoses, MetricsReport, ObjectCountMismatch, ObjectMetrics, MIN_DISPLACEMENT};
pub use report::{control_csv, emit_report, episode_file_stem, episode_svg, metrics_csv, Report, METRICS_HEADER};

use crate::models::{
    fine_tune, train, CheckpointMeta, DynamicsModel, ModelError, ModelKind, ModelParams, NominalEngine, TrainError,
    TrainOptions, TrainReport,
};
use crate::neural::{sha256_hex, TrainConfig};
use crate::planner::{PlanError, PlannerConfig};
use crate::scenario::{generate_dataset_threads, load_dataset, save_dataset, trajectory_seed, Dataset, DatasetSpec, ScenarioError};
use crate::sim::SimConfig;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Dataset {
        path: PathBuf,
        #[source]
        source: ScenarioError,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Metrics(#[from] ObjectCountMismatch),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GenData,
    Train,
    FineTune,
    EvalPred,
    EvalControl,
    Report,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Self::GenData,
        Self::Train,
        Self::FineTune,
        Self::EvalPred,
        Self::EvalControl,
        Self::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::GenData => "gen-data",
            Self::Train => "train",
            Self::FineTune => "fine-tune",
            Self::EvalPred => "eval-pred",
            Self::EvalControl => "eval-control",
            Self::Report => "report",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedPath {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateEntry {
    pub name: String,
    pub spec: DatasetSpec,
}

/// One experiment. Units are fixed: m, rad, s, kg.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    /// Added to every dataset, training and control seed.
    pub seed: u64,
    /// Worker threads for generation and evaluation; training is always
    /// single-threaded.
    pub threads: usize,
    pub out_dir: PathBuf,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub finetune: Option<TrainConfig>,
    pub planner: PlannerConfig,
    /// Engine that SAIN consults and that serves as the physics baseline.
    pub nominal: NominalEngine,
    pub generate: Vec<GenerateEntry>,
    pub train_dataset: Option<PathBuf>,
    pub heldout_dataset: Option<PathBuf>,
    pub finetune_dataset: Option<PathBuf>,
    pub test_datasets: Vec<NamedPath>,
    pub train_models: Vec<ModelKind>,
    /// Checkpoints to evaluate or fine-tune.
    pub models: Vec<NamedPath>,
    /// Also evaluate the nominal engine on its own.
    pub physics_baseline: bool,
    pub horizon: usize,
    pub control: ControlSuite,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            threads: 1,
            out_dir: PathBuf::from("out"),
            sim: SimConfig::default(),
            train: TrainConfig::default(),
            finetune: None,
            planner: PlannerConfig::default(),
            nominal: NominalEngine::default(),
            generate: Vec::new(),
            train_dataset: None,
            heldout_dataset: None,
            finetune_dataset: None,
            test_datasets: Vec::new(),
            train_models: vec![ModelKind::In, ModelKind::Sain],
            models: Vec::new(),
            physics_baseline: true,
            horizon: 200,
            control: ControlSuite::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Read {
            path: path.into(),
            source: e,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    /// Input files `command` reads.
    pub fn inputs(&self, command: Command) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = match command {
            Command::GenData | Command::Report => Vec::new(),
            Command::Train => self.train_dataset.iter().chain(&self.heldout_dataset).cloned().collect(),
            Command::FineTune => self
                .finetune_dataset
                .iter()
                .cloned()
                .chain(self.models.iter().map(|m| m.path.clone()))
                .collect(),
            Command::EvalPred => self
                .test_datasets
                .iter()
                .chain(&self.models)
                .map(|m| m.path.clone())
                .collect(),
            Command::EvalControl => self.models.iter().map(|m| m.path.clone()).collect(),
        };
        for p in &mut v {
            *p = self.resolve(p);
        }
        v
    }

    /// Checks everything `command` needs before any work starts.
    pub fn validate(&self, command: Command) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.sim.validate().map_err(HarnessError::Config)?;
        self.nominal.validate().map_err(HarnessError::Config)?;
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.threads > 1 && matches!(command, Command::Train | Command::FineTune) {
            return bad(format!("{} runs single-threaded; threads must be 1", command.name()));
        }
        if let Some(c) = self.command {
            if c != command {
                return bad(format!("config is for `{}`, not `{}`", c.name(), command.name()));
            }
        }
        match command {
            Command::GenData if self.generate.is_empty() => return bad("gen-data needs at least one `generate` entry".into()),
            Command::GenData => {
                for g in &self.generate {
                    g.spec.validate().map_err(|e| HarnessError::Config(format!("{}: {e}", g.name)))?;
                }
            }
            Command::Train if self.train_dataset.is_none() => return bad("train needs `train_dataset`".into()),
            Command::Train if self.train_models.is_empty() => return bad("train needs `train_models`".into()),
            Command::Train => self.train.validate().map_err(HarnessError::Config)?,
            Command::FineTune if self.finetune_dataset.is_none() || self.models.is_empty() => {
                return bad("fine-tune needs `finetune_dataset` and `models`".into())
            }
            Command::EvalPred if self.test_datasets.is_empty() => return bad("eval-pred needs `test_datasets`".into()),
            Command::EvalControl if self.models.is_empty() && !self.physics_baseline => {
                return bad("eval-control needs `models` or `physics_baseline`".into())
            }
            Command::EvalControl => self.planner.validate().map_err(HarnessError::Config)?,
            _ => {}
        }
        for p in self.inputs(command) {
            if !p.exists() {
                return bad(format!("input {} does not exist", p.display()));
            }
        }
        Ok(())
    }

    fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

fn hash_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::Read {
        path: path.into(),
        source: e,
    })?;
    Ok(sha256_hex(&bytes))
}

fn read_dataset(path: &Path) -> Result<Dataset, HarnessError> {
    load_dataset(path).map_err(|e| HarnessError::Dataset {
        path: path.into(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::Write {
            path: parent.into(),
            source: e,
        })?;
    }
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| HarnessError::Write {
        path: path.into(),
        source: e,
    })?;
    Ok(path.to_path_buf())
}

fn key(cfg: &RunConfig, p: &Path) -> String {
    p.strip_prefix(&cfg.base_dir).unwrap_or(p).display().to_string()
}

/// Progress sink for long-running commands.
pub type Log<'a> = &'a mut dyn FnMut(&str);

/// Runs `command` and returns the files it wrote.
pub fn run(command: Command, cfg: &RunConfig, log: Log<'_>) -> Result<Vec<PathBuf>, HarnessError> {
    cfg.validate(command)?;
    match command {
        Command::GenData => gen_data(cfg, log),
        Command::Train => train_models(cfg, log),
        Command::FineTune => fine_tune_models(cfg, log),
        Command::EvalPred => eval_pred(cfg, log),
        Command::EvalControl => eval_ctl(cfg, log),
        Command::Report => build_report(cfg, log),
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetManifestEntry {
    name: String,
    file: String,
    seed: u64,
    count: usize,
    sha256: String,
}

fn gen_data(cfg: &RunConfig, log: Log<'_>) -> Result<Vec<PathBuf>, HarnessError> {
    let out = cfg.out();
    std::fs::create_dir_all(&out).map_err(|e| HarnessError::Write {
        path: out.clone(),
        source: e,
    })?;
    let mut written = Vec::new();
    let mut manifest = Vec::new();
    for g in &cfg.generate {
        let spec = DatasetSpec {
            seed: g.spec.seed.wrapping_add(cfg.seed),
            ..g.spec.clone()
        };
        let dataset = generate_dataset_threads(&spec, cfg.threads)?;
        let path = out.join(format!("{}.jsonl", g.name));
        let sha256 = save_dataset(&dataset, &path).map_err(|e| HarnessError::Dataset {
            path: path.clone(),
            source: e,
        })?;
        log(&format!("{}: {} trajectories -> {}", g.name, dataset.len(), path.display()));
        manifest.push(DatasetManifestEntry {
            name: g.name.clone(),
            file: format!("{}.jsonl", g.name),
            seed: spec.seed,
            count: dataset.len(),
            sha256,
        });
        written.push(path);
    }
    written.push(write_json(&out.join("datasets.json"), &manifest)?);
    Ok(written)
}

#[derive(Serialize, Deserialize)]
struct TrainSummary {
    model: String,
    dataset: String,
    dataset_sha256: String,
    checkpoint_sha256: String,
    report: TrainReport,
}

fn train_models(cfg: &RunConfig, log: Log<'_>) -> Result<Vec<PathBuf>, HarnessError> {
    let train_path = cfg.resolve(cfg.train_dataset.as_ref().expect("validated"));
    let data = read_dataset(&train_path)?;
    let data_hash = hash_file(&train_path)?;
    let heldout = match &cfg.heldout_dataset {
        Some(p) => read_dataset(&cfg.resolve(p))?.records,
        None => Vec::new(),
    };
    let engine = NominalEngine {
        sim: cfg.sim,
        ..cfg.nominal.clone()
    };
    let tc = TrainConfig {
        seed: cfg.train.seed.wrapping_add(cfg.seed),
        ..cfg.train.clone()
    };
    let out = cfg.out();
    let mut written = Vec::new();
    for &kind in &cfg.train_models {
        let name = kind.name();
        let mut progress = |p: &crate::models::LossPoint| {
            let held = p.heldout.map_or(String::new(), |h| format!(" heldout {h:.5}"));
            log(&format!("{name} it {} train {:.5}{held}", p.iteration, p.train));
        };
        let opts = TrainOptions {
            engine: engine.clone(),
            heldout: &heldout,
            progress: Some(&mut progress),
        };
        let trained = train(kind, &data.records, &tc, opts)?;
        let meta = CheckpointMeta {
            seed: tc.seed,
            train_config: Some(tc.clone()),
            report: Some(trained.report.clone()),
            datasets: vec![data_hash.clone()],
        };
        let ckpt = out.join(format!("{name}.ckpt"));
        std::fs::create_dir_all(&out).map_err(|e| HarnessError::Write {
            path: out.clone(),
            source: e,
        })?;
        trained.params.save(&ckpt, &meta)?;
        let summary = TrainSummary {
            model: name.into(),
            dataset: key(cfg, &train_path),
            dataset_sha256: data_hash.clone(),
            checkpoint_sha256: hash_file(&ckpt)?,
            report: trained.report,
        };
        written.push(ckpt);
        written.push(write_json(&out.join(format!("train_{name}.json")), &summary)?);
    }
    Ok(written)
}

fn fine_tune_models(cfg: &RunConfig, log: Log<'_>) -> Result<Vec<PathBuf>, HarnessError> {
    let path = cfg.resolve(cfg.finetune_dataset.as_ref().expect("validated"));
    let data = read_dataset(&path)?;
    let data_hash = hash_file(&path)?;
    let heldout = match &cfg.heldout_dataset {
        Some(p) => read_dataset(&cfg.resolve(p))?.records,
        None => Vec::new(),
    };
    let base = cfg.finetune.clone().unwrap_or_else(|| cfg.train.clone());
    let tc = TrainConfig {
        seed: base.seed.wrapping_add(cfg.seed),
        ..base
    };
    let out = cfg.out();
    let mut written = Vec::new();
    for m in &cfg.models {
        let (params, mut meta) = ModelParams::load(&cfg.resolve(&m.path))?;
        let label = m.name.clone();
        let mut progress = |p: &crate::models::LossPoint| log(&format!("{label} fine-tune it {} train {:.5}", p.iteration, p.train));
        let opts = TrainOptions {
            engine: params.engine.clone(),
            heldout: &heldout,
            progress: Some(&mut progress),
        };
        let tuned = fine_tune(&params, &data.records, &tc, opts)?;
        meta.datasets.push(data_hash.clone());
        meta.report = Some(tuned.report.clone());
        meta.train_config = Some(tc.clone());
        std::fs::create_dir_all(&out).map_err(|e| HarnessError::Write {
            path: out.clone(),
            source: e,
        })?;
        let ckpt = out.join(format!("{}_ft.ckpt", m.name));
        tuned.params.save(&ckpt, &meta)?;
        let summary = TrainSummary {
            model: m.name.clone(),
            dataset: key(cfg, &path),
            dataset_sha256: data_hash.clone(),
            checkpoint_sha256: hash_file(&ckpt)?,
            report: tuned.report,
        };
        written.push(ckpt);
        written.push(write_json(&out.join(format!("finetune_{}.json", m.name)), &summary)?);
    }
    Ok(written)
}

/// Models named in the configuration, physics baseline first.
fn load_models(cfg: &RunConfig, inputs: &mut BTreeMap<String, String>) -> Result<Vec<(String, DynamicsModel)>, HarnessError> {
    let mut models = Vec::new();
    if cfg.physics_baseline {
        let engine = NominalEngine {
            sim: cfg.sim,
            ..cfg.nominal.clone()
        };
        models.push(("physics".to_string(), DynamicsModel::Physics(engine)));
    }
    for m in &cfg.models {
        let path = cfg.resolve(&m.path);
        let (params, _) = ModelParams::load(&path)?;
        inputs.insert(key(cfg, &path), hash_file(&path)?);
        models.push((m.name.clone(), DynamicsModel::Learned(params)));
    }
    Ok(models)
}

fn radii_lookup(cfg: &RunConfig) -> Result<impl Fn(&EpisodeRecord) -> Vec<f64>, HarnessError> {
    let setups = cfg.control.episodes()?;
    let radii: BTreeMap<usize, Vec<f64>> = setups
        .iter()
        .map(|s| (s.index, s.world.disks.iter().map(|d| d.radius).collect()))
        .collect();
    Ok(move |e: &EpisodeRecord| radii.get(&e.index).cloned().unwrap_or_default())
}

fn eval_pred(cfg: &RunConfig, log: Log<'_>) -> Result<Vec<PathBuf>, HarnessError> {
    let mut inputs = BTreeMap::new();
    let models = load_models(cfg, &mut inputs)?;
    let mut prediction = Vec::new();
    for t in &cfg.test_datasets {
        let path = cfg.resolve(&t.path);
        let ds = read_dataset(&path)?;
        inputs.insert(key(cfg, &path), hash_file(&path)?);
        for (label, model) in &models {
            let m = eval_prediction(model, label, &t.name, &ds.records, cfg.horizon, cfg.threads)?;
            log(&format!("{} on {}: mean pos {:.3} mm", label, t.name, m.mean_pos_mm()));
            prediction.push(m);
        }
    }
    let report = Report {
        config: cfg.echo(),
        inputs,
        prediction,
        control: Vec::new(),
    };
    emit_report(&report, "prediction", |_| Vec::new(), &cfg.out())
}

fn eval_ctl(cfg: &RunConfig, log: Log<'_>) -> Result<Vec<PathBuf>, HarnessError> {
    let mut inputs = BTreeMap::new();
    let models = load_models(cfg, &mut inputs)?;
    let suite = ControlSuite {
        seed: cfg.control.seed.wrapping_add(cfg.seed),
        ..cfg.control.clone()
    };
    let mut control = Vec::new();
    for (label, model) in &models {
        let r = eval_control(model, label, &suite, &cfg.planner, cfg.threads)?;
        log(&format!("{label}: easy {:.0}% hard {:.0}%", 100.0 * r.easy_success, 100.0 * r.hard_success));
        control.push(r);
    }
    let report = Report {
        config: cfg.echo(),
        inputs,
        prediction: Vec::new(),
        control,
    };
    let shifted = RunConfig {
        control: suite,
        ..cfg.clone()
    };
    emit_report(&report, "control", radii_lookup(&shifted)?, &cfg.out())
}

fn build_report(cfg: &RunConfig, log: Log<'_>) -> Result<Vec<PathBuf>, HarnessError> {
    let out = cfg.out();
    let mut merged = Report::default();
    for stem in ["prediction", "control"] {
        let path = out.join(format!("{stem}.json"));
        if !path.exists() {
            continue;
        }
        let text = std::fs::read(&path).map_err(|e| HarnessError::Read {
            path: path.clone(),
            source: e,
        })?;
        let part: Report = serde_json::from_slice(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        log(&format!("merged {}", path.display()));
        merged = merged.merge(part);
    }
    if merged.prediction.is_empty() && merged.control.is_empty() {
        return Err(HarnessError::Config(format!(
            "no prediction.json or control.json in {}",
            out.display()
        )));
    }
    let shifted = RunConfig {
        control: ControlSuite {
            seed: cfg.control.seed.wrapping_add(cfg.seed),
            ..cfg.control.clone()
        },
        ..cfg.clone()
    };
    emit_report(&merged, "report", radii_lookup(&shifted)?, &out)
}

/// Seed of the `k`-th derived stream of `seed`.
pub fn derive_seed(seed: u64, k: usize) -> u64 {
    trajectory_seed(seed, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.name()));
        }
    }

    #[test]
    fn missing_inputs_are_reported_up_front() {
        let cfg = RunConfig {
            train_dataset: Some("nope.jsonl".into()),
            ..RunConfig::default()
        };
        let err = cfg.validate(Command::Train).unwrap_err();
        assert!(err.to_string().contains("nope.jsonl"));
        assert!(RunConfig::default().validate(Command::GenData).is_err());
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 3, "sede": 4}"#).unwrap();
        assert!(RunConfig::load(&p).is_err());
        std::fs::write(&p, r#"{"seed": 3, "out_dir": "o"}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.out(), dir.path().join("o"));
        assert_eq!(cfg.horizon, 200);
    }

    #[test]
    fn training_refuses_threads_and_foreign_commands() {
        let cfg = RunConfig {
            threads: 4,
            train_dataset: Some("d.jsonl".into()),
            ..RunConfig::default()
        };
        assert!(cfg.validate(Command::Train).unwrap_err().to_string().contains("single-threaded"));
        let cfg = RunConfig {
            command: Some(Command::Report),
            ..RunConfig::default()
        };
        assert!(cfg.validate(Command::Train).unwrap_err().to_string().contains("`report`"));
        assert!(cfg.validate(Command::Report).is_ok());
    }
}
