use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::curves::{linearized_distance_curve, nonlinear_distance_curve, rotating_frame_curve, NonlinearMethod};
use super::profile::{check_c_grid, default_c_grid, write_curves_csv, ProfileCurve};
use super::schedule::DEFAULT_GAMMA;
use super::truncation::{truncation_comparison, TRUNCATION_HEADER};
use super::verdict::{cutoff_verdict, Thresholds};
use super::{derive_seed, ExperimentError};
use crate::dynamics::{semiflow_at_times, auto_step, ModelSpec};
use crate::sde_sim::{moment_report, simulate_coupled_linearization, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    /// Exact linearized curves with `G`, one block per ε → `profile.csv`.
    Profile,
    /// `nonlinear-<method>.csv`.
    NonlinearCurve { method: NonlinearMethod },
    /// 2D rotating linear system; `x0` must be 2D → `rotating.csv`.
    Rotating { a: f64, b: f64 },
    /// 1D base only → `truncation.csv`.
    Truncation {
        radii: Vec<f64>,
        #[serde(default)]
        b: f64,
        paths: usize,
    },
    /// `moments-<k>.csv` for the k-th ε.
    Moments {
        paths: usize,
        t_end: f64,
        record_dt: f64,
        #[serde(default = "default_orders")]
        orders: Vec<u32>,
    },
    /// `verdict.csv`.
    Verdict,
}

fn default_orders() -> Vec<u32> {
    vec![1, 2]
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Profile => "profile",
            Task::NonlinearCurve { method: NonlinearMethod::FokkerPlanck { .. } } => "nonlinear-fokker-planck",
            Task::NonlinearCurve { method: NonlinearMethod::Kde { .. } } => "nonlinear-kde",
            Task::Rotating { .. } => "rotating",
            Task::Truncation { .. } => "truncation",
            Task::Moments { .. } => "moments",
            Task::Verdict => "verdict",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub x0: Vec<f64>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_c_grid")]
    pub c_grid: Vec<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub tasks: Vec<Task>,
    pub output_dir: PathBuf,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let c: Self = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let model = self.model.build().map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.x0.len() != model.as_drift().dim() {
            return Err(ExperimentError::Config(format!(
                "x0 has {} coordinates, model has dimension {}",
                self.x0.len(),
                model.as_drift().dim()
            )));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(ExperimentError::Config("epsilons must be a non-empty list in (0, 1)".into()));
        }
        check_c_grid(&self.c_grid)?;
        if !(self.gamma > 0.0 && self.gamma <= 0.25) {
            return Err(ExperimentError::Config(format!("gamma must lie in (0, 1/4], got {}", self.gamma)));
        }
        self.thresholds.validate()
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRecord {
    pub task: String,
    pub status: TaskStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub exit_code: i32,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRecord {
    pub task: String,
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub gamma: f64,
    pub thresholds: Thresholds,
    pub seeds: Vec<SeedRecord>,
    pub tasks: Vec<TaskRecord>,
    pub files: Vec<FileRecord>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    /// First nonzero task exit code, or 0.
    pub fn exit_code(&self) -> i32 {
        self.tasks.iter().map(|t| t.exit_code).find(|&c| c != 0).unwrap_or(0)
    }
}

struct TaskOutput {
    files: Vec<String>,
    warnings: Vec<String>,
}

/// Runs every task, writing CSVs and `manifest.json` into the output
/// directory. Task failures are recorded, not propagated; only
/// configuration and I/O problems with the directory itself are errors.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest, ExperimentError> {
    config.validate()?;
    let start = Instant::now();
    let out = &config.output_dir;
    std::fs::create_dir_all(out)?;
    let mut seeds = Vec::new();
    let mut tasks = Vec::new();
    for (i, task) in config.tasks.iter().enumerate() {
        let task_seed = derive_seed(config.seed, i as u64);
        for (k, &epsilon) in config.epsilons.iter().enumerate() {
            seeds.push(SeedRecord { task: task.name().into(), epsilon, seed: derive_seed(task_seed, k as u64) });
        }
        let record = match run_task(config, task, task_seed, out) {
            Ok(o) => TaskRecord {
                task: task.name().into(),
                status: TaskStatus::Ok,
                error: None,
                exit_code: 0,
                outputs: o.files,
                warnings: o.warnings,
            },
            Err(e) => TaskRecord {
                task: task.name().into(),
                status: TaskStatus::Failed,
                error: Some(e.to_string()),
                exit_code: e.exit_code(),
                outputs: Vec::new(),
                warnings: Vec::new(),
            },
        };
        tasks.push(record);
    }
    let mut files = Vec::new();
    for t in &tasks {
        for f in &t.outputs {
            let bytes = std::fs::read(out.join(f))?;
            files.push(FileRecord { path: f.clone(), bytes: bytes.len() as u64, sha256: hex(&Sha256::digest(&bytes)) });
        }
    }
    let manifest = RunManifest {
        config_hash: config.hash(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        gamma: config.gamma,
        thresholds: config.thresholds,
        seeds,
        tasks,
        files,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| ExperimentError::Io(e.to_string()))?;
    std::fs::write(out.join("manifest.json"), json)?;
    Ok(manifest)
}

fn run_task(config: &ExperimentConfig, task: &Task, seed: u64, out: &Path) -> Result<TaskOutput, ExperimentError> {
    let model = config.model.build()?;
    let drift = model.as_drift();
    let eps_seed = |k: usize| derive_seed(seed, k as u64);
    let mut warnings = Vec::new();
    let files = match task {
        Task::Profile => {
            let curves: Vec<ProfileCurve> = config
                .epsilons
                .par_iter()
                .map(|&e| linearized_distance_curve(drift, e, &config.x0, &config.c_grid))
                .collect::<Result<_, _>>()?;
            curves.iter().for_each(|c| warnings.extend(c.warnings.iter().cloned()));
            write_curves_csv(&out.join("profile.csv"), &curves)?;
            vec!["profile.csv".to_string()]
        }
        Task::NonlinearCurve { method } => {
            let potential = model
                .potential()
                .ok_or_else(|| ExperimentError::Config("nonlinear curves need a potential model".into()))?;
            let curves: Vec<ProfileCurve> = config
                .epsilons
                .iter()
                .enumerate()
                .map(|(k, &e)| {
                    nonlinear_distance_curve(potential, e, &config.x0, &config.c_grid, method, config.gamma, eps_seed(k))
                })
                .collect::<Result<_, _>>()?;
            curves.iter().for_each(|c| warnings.extend(c.warnings.iter().cloned()));
            let name = format!("{}.csv", task.name());
            write_curves_csv(&out.join(&name), &curves)?;
            vec![name]
        }
        Task::Rotating { a, b } => {
            let x0: [f64; 2] = config
                .x0
                .as_slice()
                .try_into()
                .map_err(|_| ExperimentError::Config("rotating task needs a 2D x0".into()))?;
            let curves: Vec<ProfileCurve> = config
                .epsilons
                .iter()
                .map(|&e| {
                    let r = rotating_frame_curve(*a, *b, x0, e, &config.c_grid)?;
                    warnings.push(format!(
                        "ε = {e}: frame deviation {:e}, literal-matrix deviation {:e}, covariance limit {:?}",
                        r.frame_deviation, r.literal_frame_deviation, r.covariance_limit
                    ));
                    Ok(r.curve)
                })
                .collect::<Result<_, ExperimentError>>()?;
            write_curves_csv(&out.join("rotating.csv"), &curves)?;
            vec!["rotating.csv".to_string()]
        }
        Task::Truncation { radii, b, paths } => {
            let base = model
                .potential()
                .ok_or_else(|| ExperimentError::Config("truncation needs a potential model".into()))?;
            if config.x0.len() != 1 {
                return Err(ExperimentError::Config("truncation needs a 1D model".into()));
            }
            let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("truncation.csv"))?);
            writeln!(w, "{TRUNCATION_HEADER}")?;
            for (k, &e) in config.epsilons.iter().enumerate() {
                truncation_comparison(base, radii, e, config.x0[0], *b, config.gamma, *paths, eps_seed(k))?
                    .write_rows(&mut w)?;
            }
            w.flush()?;
            vec!["truncation.csv".to_string()]
        }
        Task::Moments { paths, t_end, record_dt, orders } => {
            let mut names = Vec::new();
            for (k, &e) in config.epsilons.iter().enumerate() {
                let grid = TimeGrid::auto(drift, e, &config.x0, *t_end, *record_dt)?;
                let ens = simulate_coupled_linearization(drift, e, &config.x0, &grid, *paths, eps_seed(k))?;
                let flow = semiflow_at_times(drift, &config.x0, &ens.times, auto_step(drift, &config.x0))?;
                let report = moment_report(&ens, &flow, orders)?;
                let name = format!("moments-{k}.csv");
                let mut w = std::io::BufWriter::new(std::fs::File::create(out.join(&name))?);
                writeln!(w, "t,n,estimate,stderr,bound,pass")?;
                for r in &report.rows {
                    writeln!(w, "{},{},{},{},{},{}", r.t, r.n, r.estimate, r.stderr, r.bound, r.pass)?;
                }
                w.flush()?;
                if !report.all_pass() {
                    warnings.push(format!("ε = {e}: some moment verdicts fail"));
                }
                names.push(name);
            }
            names
        }
        Task::Verdict => {
            let rows = config
                .epsilons
                .par_iter()
                .map(|&e| cutoff_verdict(drift, e, &config.x0, &config.thresholds))
                .collect::<Result<Vec<_>, _>>()?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("verdict.csv"))?);
            writeln!(w, "epsilon,t_eps,distance_early,distance_late,pass")?;
            for r in &rows {
                writeln!(w, "{},{},{},{},{}", r.epsilon, r.t_eps, r.early, r.late, r.pass)?;
            }
            w.flush()?;
            let smallest = rows.iter().min_by(|a, b| a.epsilon.total_cmp(&b.epsilon)).expect("non-empty");
            if !smallest.pass {
                return Err(ExperimentError::Invariant(format!(
                    "no cutoff verdict at the smallest ε = {}: {:.4} / {:.4}",
                    smallest.epsilon, smallest.early, smallest.late
                )));
            }
            vec!["verdict.csv".to_string()]
        }
    };
    Ok(TaskOutput { files, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou_config(dir: &Path, tasks: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{"model": {{"kind": "ou-diagonal", "rates": [1.0]}}, "x0": [1.0],
                "epsilons": [1e-3, 1e-5], "seed": 3, "output_dir": {:?}, "tasks": {tasks}}}"#,
            dir.to_str().unwrap()
        ))
        .unwrap()
    }

    #[test]
    fn empty_task_list() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&ou_config(dir.path(), "[]")).unwrap();
        assert!(m.files.is_empty() && m.tasks.is_empty());
        assert_eq!(m.exit_code(), 0);
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn profile_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&ou_config(dir.path(), r#"[{"task": "profile"}]"#)).unwrap();
        assert_eq!(m.exit_code(), 0);
        let text = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("epsilon,c,t,distance,stderr,G"));
        assert_eq!(lines.count(), 26);
        assert_eq!(m.files[0].path, "profile.csv");
        assert_eq!(m.files[0].sha256.len(), 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        let r = ExperimentConfig::from_json(
            r#"{"model": {"kind": "ou-diagonal", "rates": [1.0]}, "x0": [1.0], "epsilons": [0.1],
                "output_dir": "x", "colour": 1}"#,
        );
        assert!(matches!(r, Err(ExperimentError::Config(_))));
        let r = ExperimentConfig::from_json(
            r#"{"model": {"kind": "ou-diagonal", "rates": [1.0]}, "x0": [1.0, 2.0], "epsilons": [0.1],
                "output_dir": "x"}"#,
        );
        assert!(matches!(r, Err(ExperimentError::Config(_))));
    }

    #[test]
    fn failures_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&ou_config(dir.path(), r#"[{"task": "rotating", "a": 1.0, "b": 1.0}, {"task": "profile"}]"#))
            .unwrap();
        assert_eq!(m.tasks[0].status, TaskStatus::Failed);
        assert_eq!(m.tasks[0].exit_code, 2);
        assert_eq!(m.tasks[1].status, TaskStatus::Ok);
        assert_eq!(m.exit_code(), 2);
    }

    #[test]
    fn hash_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        let a = ou_config(dir.path(), "[]");
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
