use std::path::{Path, PathBuf};
use std::sync::Arc;

use pgd_core::model::{LatentModel, ModelRegistry};
use pgd_core::sampler::Init;
use serde::Deserialize;

use crate::LabError;

/// Default replicate count for Monte Carlo commands.
pub const DEFAULT_REPLICATES: usize = 50;

/// A parsed experiment file plus command-line overrides.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Inline model table.
    #[serde(default)]
    pub model: Option<toml::Table>,
    /// Model file, relative to the experiment file.
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub run: Option<RunSection>,
    #[serde(default)]
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub flow: Option<FlowSection>,
    #[serde(default)]
    pub inequalities: Option<InequalitySection>,
    #[serde(default)]
    pub audit: Option<AuditSection>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

fn default_algorithm() -> String {
    "pgd".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub h: f64,
    pub n: usize,
    pub k: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default)]
    pub init: Init,
    #[serde(default)]
    pub record_every: Option<u64>,
    #[serde(default)]
    pub record_particles: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    H,
    N,
    K,
    M,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::H => "h",
            Axis::N => "n",
            Axis::K => "k",
            Axis::M => "m",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub axis: Axis,
    pub grid: Vec<f64>,
    /// Overrides of the pinned step size, particle count and step count.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub k: Option<u64>,
    /// For the `m` axis, `h = c / M`.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default)]
    pub init: Init,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub mean: Option<Vec<f64>>,
    #[serde(default)]
    pub cov: Option<Vec<Vec<f64>>>,
    /// Defaults to `10/λ`.
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_flow_record")]
    pub record_every: usize,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_flow_record() -> usize {
    10
}

impl Default for FlowSection {
    fn default() -> Self {
        Self { theta: None, mean: None, cov: None, t_end: None, dt: default_dt(), record_every: default_flow_record() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitySection {
    #[serde(default = "default_sweep_size")]
    pub sweep_size: u64,
    #[serde(default = "default_sweep_seed")]
    pub sweep_seed: u64,
    /// Sweep `(θ, π_θ)` instead of general Gaussian states.
    #[serde(default)]
    pub slice: bool,
    /// Evaluate on `scale · ℓ`.
    #[serde(default = "one")]
    pub scale: f64,
}

fn default_sweep_size() -> u64 {
    1000
}

fn default_sweep_seed() -> u64 {
    pgd_core::calculus::GaussianSweep::DEFAULT_SEED
}

fn one() -> f64 {
    1.0
}

impl Default for InequalitySection {
    fn default() -> Self {
        Self { sweep_size: default_sweep_size(), sweep_seed: default_sweep_seed(), slice: false, scale: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    /// Step sizes and particle counts; every combination is audited.
    #[serde(default)]
    pub h: Vec<f64>,
    #[serde(default)]
    pub n: Vec<usize>,
    /// `K = ceil(k_factor / (hλ))` for the combinations above.
    #[serde(default = "default_k_factor")]
    pub k_factor: f64,
    /// Extra explicit `[h, n, k]` rows.
    #[serde(default)]
    pub rows: Vec<(f64, usize, u64)>,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
}

fn default_k_factor() -> f64 {
    8.0
}

impl ExperimentSpec {
    pub fn from_toml(src: &str, base_dir: &Path) -> Result<Self, LabError> {
        let mut spec: ExperimentSpec =
            toml::from_str(src).map_err(|e| LabError::Config(format!("invalid experiment file: {e}")))?;
        spec.base_dir = base_dir.to_path_buf();
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&src, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self) -> Result<(), LabError> {
        if self.model.is_some() == self.model_file.is_some() {
            return Err(LabError::Config("give exactly one of `model` or `model_file`".into()));
        }
        if self.replicates == 0 {
            return Err(LabError::Config("replicates must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(LabError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// The model table, reading `model_file` if needed.
    pub fn model_table(&self) -> Result<toml::Table, LabError> {
        match (&self.model, &self.model_file) {
            (Some(t), _) => Ok(t.clone()),
            (None, Some(f)) => {
                let path = self.base_dir.join(f);
                let src = std::fs::read_to_string(&path)
                    .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
                toml::from_str(&src).map_err(|e| LabError::Config(format!("invalid model file {}: {e}", path.display())))
            }
            (None, None) => Err(LabError::Config("no model given".into())),
        }
    }

    pub fn build_model(&self) -> Result<Arc<dyn LatentModel>, LabError> {
        Ok(ModelRegistry::default().build(&self.model_table()?)?)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results"))
    }
}

/// Worker count: `PGD_LAB_WORKERS`, then the flag, then the file, then the
/// available parallelism.
pub fn resolve_workers(env: Option<&str>, flag: Option<usize>, file: Option<usize>) -> Result<usize, LabError> {
    if let Some(v) = env.filter(|s| !s.trim().is_empty()) {
        return match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(LabError::Config(format!("PGD_LAB_WORKERS must be a positive integer, got `{v}`"))),
        };
    }
    match flag.or(file) {
        Some(0) => Err(LabError::Config("worker count must be positive".into())),
        Some(w) => Ok(w),
        None => Ok(std::thread::available_parallelism().map_or(1, usize::from)),
    }
}
