//! Experiment configuration: JSON file + flag overrides -> validated plan.

use serde::Deserialize;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ntk_core::data::Distribution;
use ntk_core::net::{he_variances, lecun_variances};

/// Failure modes with distinct exit codes: configuration problems exit 2,
/// numerical failures surfaced from the core library exit 3.
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Numerical(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(msg) => write!(f, "config error: {msg}"),
            AppError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl From<ntk_core::Error> for AppError {
    fn from(e: ntk_core::Error) -> Self {
        AppError::Numerical(e.to_string())
    }
}

pub type AppResult<T> = Result<T, AppError>;

/// The eight runnable experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Limiting,
    Empirical,
    Bounds,
    Convergence,
    Sweep,
    Hermite,
    Lipschitz,
    Memorize,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Limiting,
        Experiment::Empirical,
        Experiment::Bounds,
        Experiment::Convergence,
        Experiment::Sweep,
        Experiment::Hermite,
        Experiment::Lipschitz,
        Experiment::Memorize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Limiting => "limiting",
            Experiment::Empirical => "empirical",
            Experiment::Bounds => "bounds",
            Experiment::Convergence => "convergence",
            Experiment::Sweep => "sweep",
            Experiment::Hermite => "hermite",
            Experiment::Lipschitz => "lipschitz",
            Experiment::Memorize => "memorize",
        }
    }
}

impl FromStr for Experiment {
    type Err = AppError;

    fn from_str(s: &str) -> AppResult<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                AppError::config(format!(
                    "unknown experiment '{s}' (expected one of limiting|empirical|bounds|convergence|sweep|hermite|lipschitz|memorize)"
                ))
            })
    }
}

/// Weight-variance scheme for an architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum InitScheme {
    He,
    LeCun,
    /// Every layer variance 1 — the convergence experiments' convention,
    /// under which the width-normalised kernel approaches the
    /// infinite-width one.
    Unit,
    Explicit(Vec<f64>),
}

impl InitScheme {
    pub fn label(&self) -> &'static str {
        match self {
            InitScheme::He => "he",
            InitScheme::LeCun => "lecun",
            InitScheme::Unit => "unit",
            InitScheme::Explicit(_) => "custom",
        }
    }

    /// Per-layer variances for the given widths.
    pub fn variances(&self, widths: &[usize]) -> AppResult<Vec<f64>> {
        let depth = widths.len().saturating_sub(1);
        match self {
            InitScheme::He => Ok(he_variances(widths)),
            InitScheme::LeCun => Ok(lecun_variances(widths)),
            InitScheme::Unit => Ok(vec![1.0; depth]),
            InitScheme::Explicit(v) => {
                if v.len() != depth {
                    return Err(AppError::config(format!(
                        "explicit variance list has {} entries, architecture has {depth} layers",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

impl FromStr for InitScheme {
    type Err = AppError;

    fn from_str(s: &str) -> AppResult<Self> {
        match s {
            "he" => Ok(InitScheme::He),
            "lecun" => Ok(InitScheme::LeCun),
            "unit" => Ok(InitScheme::Unit),
            other => Err(AppError::config(format!(
                "unknown init scheme '{other}' (expected he|lecun|unit or an explicit variance list)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawInit {
    Name(String),
    Variances(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawData {
    #[serde(default = "default_distribution")]
    pub distribution: String,
    pub n_samples: usize,
    pub dimension: usize,
    /// Optional fixed sampling seed. When present, every trial reuses the
    /// same data; when absent, data is redrawn per trial from derived
    /// seeds.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_distribution() -> String {
    "gaussian".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArch {
    widths: Vec<usize>,
    #[serde(default)]
    init: Option<RawInit>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    #[serde(default)]
    pub dimension: Option<Vec<usize>>,
    #[serde(default)]
    pub n_samples: Option<Vec<usize>>,
    #[serde(default)]
    pub hidden_width: Option<Vec<usize>>,
    #[serde(default)]
    pub distribution: Option<Vec<String>>,
    #[serde(default)]
    pub init: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    experiment: Option<String>,
    #[serde(default)]
    data: Option<RawData>,
    #[serde(default)]
    arch: Option<RawArch>,
    #[serde(default = "default_r")]
    r: usize,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output_path: Option<String>,
    #[serde(default)]
    depth: Option<usize>,
    #[serde(default)]
    mc_samples: Option<usize>,
    #[serde(default)]
    layer: Option<usize>,
    #[serde(default)]
    probes: Option<usize>,
    #[serde(default)]
    max_order: Option<usize>,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default)]
    grid: Option<RawGrid>,
}

fn default_r() -> usize {
    2
}

fn default_trials() -> usize {
    1
}

/// A parsed architecture request: widths plus the variance scheme.
#[derive(Debug, Clone)]
pub struct ArchSpec {
    pub widths: Vec<usize>,
    pub init: InitScheme,
}

/// Fully validated experiment plan.
#[derive(Debug, Clone)]
pub struct Plan {
    pub experiment: Experiment,
    pub data: Option<RawData>,
    pub arch: Option<ArchSpec>,
    pub r: usize,
    pub trials: usize,
    pub seed: u64,
    pub output_path: PathBuf,
    pub depth: Option<usize>,
    pub mc_samples: Option<usize>,
    pub layer: Option<usize>,
    pub probes: usize,
    pub max_order: usize,
    pub delta: f64,
    pub grid: RawGrid,
    pub plot: bool,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
    pub plot: bool,
}

pub fn parse_distribution(name: &str) -> AppResult<Distribution> {
    name.parse::<Distribution>().map_err(|e| AppError::config(e.to_string()))
}

fn parse_init(raw: Option<RawInit>) -> AppResult<InitScheme> {
    match raw {
        None => Ok(InitScheme::He),
        Some(RawInit::Name(name)) => name.parse(),
        Some(RawInit::Variances(v)) => {
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(AppError::config("explicit variances must be positive and finite"));
            }
            Ok(InitScheme::Explicit(v))
        }
    }
}

/// Parse the JSON config text and apply CLI overrides. `requested` is the
/// experiment named on the command line; a conflicting `experiment` field
/// in the file is a config error.
pub fn build_plan(text: &str, requested: Experiment, overrides: &Overrides) -> AppResult<Plan> {
    let raw: RawConfig = serde_json::from_str(text)
        .map_err(|e| AppError::config(format!("malformed config: {e}")))?;
    if let Some(named) = &raw.experiment {
        let named: Experiment = named.parse()?;
        if named != requested {
            return Err(AppError::config(format!(
                "config names experiment '{}' but '{}' was requested",
                named.name(),
                requested.name()
            )));
        }
    }

    let trials = overrides.trials.unwrap_or(raw.trials);
    if trials == 0 {
        return Err(AppError::config("trials must be at least 1"));
    }
    if raw.r < 2 || raw.r % 2 != 0 {
        return Err(AppError::config(format!(
            "r must be an even integer >= 2, got {}",
            raw.r
        )));
    }

    let arch = match raw.arch {
        None => None,
        Some(a) => {
            if a.widths.len() < 2 {
                return Err(AppError::config(
                    "arch.widths needs at least an input and an output entry",
                ));
            }
            if *a.widths.last().unwrap() != 1 {
                return Err(AppError::config("arch.widths must end with output width 1"));
            }
            if a.widths.iter().any(|&w| w == 0) {
                return Err(AppError::config("arch.widths entries must be at least 1"));
            }
            Some(ArchSpec { widths: a.widths, init: parse_init(a.init)? })
        }
    };

    if let Some(data) = &raw.data {
        if data.n_samples == 0 || data.dimension == 0 {
            return Err(AppError::config("data.n_samples and data.dimension must be at least 1"));
        }
        parse_distribution(&data.distribution)?;
        if let Some(a) = &arch {
            if a.widths[0] != data.dimension {
                return Err(AppError::config(format!(
                    "arch input width {} does not match data dimension {}",
                    a.widths[0], data.dimension
                )));
            }
        }
    }

    if let Some(depth) = raw.depth {
        if depth == 0 {
            return Err(AppError::config("depth must be at least 1"));
        }
    }
    let probes = raw.probes.unwrap_or(256);
    if probes == 0 {
        return Err(AppError::config("probes must be at least 1"));
    }
    let max_order = raw.max_order.unwrap_or(200);
    if max_order > 1000 {
        return Err(AppError::config("max_order capped at 1000"));
    }
    let delta = raw.delta.unwrap_or(0.1);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AppError::config(format!("delta must lie in (0, 1), got {delta}")));
    }
    if let Some(mc) = raw.mc_samples {
        if mc == 0 {
            return Err(AppError::config("mc_samples must be at least 1 when given"));
        }
    }
    if let Some(grid) = &raw.grid {
        for (name, empty) in [
            ("dimension", grid.dimension.as_ref().is_some_and(|v| v.is_empty())),
            ("n_samples", grid.n_samples.as_ref().is_some_and(|v| v.is_empty())),
            ("hidden_width", grid.hidden_width.as_ref().is_some_and(|v| v.is_empty())),
            ("distribution", grid.distribution.as_ref().is_some_and(|v| v.is_empty())),
            ("init", grid.init.as_ref().is_some_and(|v| v.is_empty())),
        ] {
            if empty {
                return Err(AppError::config(format!("grid.{name} must not be empty")));
            }
        }
    }

    let output_path = overrides
        .out
        .clone()
        .or_else(|| raw.output_path.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", requested.name())));

    Ok(Plan {
        experiment: requested,
        data: raw.data,
        arch,
        r: raw.r,
        trials,
        seed: overrides.seed.unwrap_or(raw.seed),
        output_path,
        depth: raw.depth,
        mc_samples: raw.mc_samples,
        layer: raw.layer,
        probes,
        max_order,
        delta,
        grid: raw.grid.unwrap_or_default(),
        plot: overrides.plot,
    })
}

impl Plan {
    /// The data request, or a config error naming the experiment.
    pub fn require_data(&self) -> AppResult<&RawData> {
        self.data.as_ref().ok_or_else(|| {
            AppError::config(format!("experiment '{}' needs a data section", self.experiment.name()))
        })
    }

    /// The architecture request, or a config error naming the experiment.
    pub fn require_arch(&self) -> AppResult<&ArchSpec> {
        self.arch.as_ref().ok_or_else(|| {
            AppError::config(format!("experiment '{}' needs an arch section", self.experiment.name()))
        })
    }
}
