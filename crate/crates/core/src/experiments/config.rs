use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tv::TvMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Denoise,
    Ct,
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "denoise" => Ok(Task::Denoise),
            "ct" => Ok(Task::Ct),
            other => Err(Error::Parse(format!("unknown task {other:?}, expected denoise or ct"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Denoise => "denoise",
            Task::Ct => "ct",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Apgm,
    Admm,
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "apgm" => Ok(SolverKind::Apgm),
            "admm" => Ok(SolverKind::Admm),
            other => Err(Error::Parse(format!("unknown solver {other:?}, expected apgm or admm"))),
        }
    }
}

/// Which TV prox the swept runs use. The baselines always use the exact one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxKind {
    Approx,
    Exact,
}

impl FromStr for ProxKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "approx" => Ok(ProxKind::Approx),
            "exact" => Ok(ProxKind::Exact),
            other => Err(Error::Parse(format!("unknown prox {other:?}, expected approx or exact"))),
        }
    }
}

/// Settings for the exact-prox reference runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// FPG duality-gap tolerance of the tight reference.
    pub fpg_tol: f64,
    pub fpg_max_iter: usize,
    /// Relative-change tolerance of the outer APGM loop (CT only).
    pub stop_tol: f64,
    pub max_iter: usize,
    /// FPG iterations per prox call in the fixed-budget reference, 0 to skip it.
    pub fpg_budget: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            fpg_tol: 1e-9,
            fpg_max_iter: 200_000,
            stop_tol: 1e-8,
            max_iter: 100_000,
            fpg_budget: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub image_size: usize,
    pub n_phantoms: usize,
    pub n_disks: usize,
    pub seed: u64,
    pub modes: Vec<TvMode>,
    pub lambda_grid: Vec<f64>,
    /// Absolute values, except for CT with APGM where they are fractions of `1/L`.
    pub gamma_grid: Vec<f64>,
    pub solver: SolverKind,
    pub prox: ProxKind,
    pub n_angles: usize,
    pub noise_sigma: f64,
    pub stop_tol: f64,
    pub max_iter: usize,
    pub baseline: BaselineConfig,
    pub output_dir: PathBuf,
    /// Record wall-clock seconds in `table.csv`. Off by default so that the
    /// table is reproducible byte for byte.
    pub timing: bool,
    pub write_images: bool,
}

impl ExperimentConfig {
    pub fn new(task: Task) -> Self {
        let (lambda_grid, gamma_grid, solver, noise_sigma) = match task {
            Task::Denoise => (vec![0.5], vec![1e-1, 1e-2, 1e-3], SolverKind::Apgm, 0.1),
            Task::Ct => (vec![5.0], vec![1e-2, 1e-3, 1e-4], SolverKind::Admm, 0.5),
        };
        Self {
            task,
            image_size: 32,
            n_phantoms: 3,
            n_disks: 30,
            seed: 0,
            modes: TvMode::ALL.to_vec(),
            lambda_grid,
            gamma_grid,
            solver,
            prox: ProxKind::Approx,
            n_angles: 15,
            noise_sigma,
            stop_tol: 5e-6,
            max_iter: 20_000,
            baseline: BaselineConfig::default(),
            output_dir: PathBuf::from("out"),
            timing: false,
            write_images: true,
        }
    }

    /// 10 phantoms and 45 views.
    pub fn paper_scale(mut self) -> Self {
        self.n_phantoms = 10;
        self.n_angles = 45;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.image_size < 16 {
            return bad(format!("image size must be at least 16, got {}", self.image_size));
        }
        if self.n_phantoms == 0 {
            return bad("need at least one phantom".into());
        }
        if self.modes.is_empty() {
            return bad("no TV mode selected".into());
        }
        if self.lambda_grid.is_empty() || self.gamma_grid.is_empty() {
            return bad("lambda and gamma grids must be non-empty".into());
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return bad(format!("lambda must be finite and >= 0, got {l}"));
        }
        if let Some(g) = self.gamma_grid.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return bad(format!("gamma must be finite and > 0, got {g}"));
        }
        if self.task == Task::Ct && self.n_angles == 0 {
            return bad("need at least one projection angle".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise level must be >= 0, got {}", self.noise_sigma));
        }
        if self.stop_tol.is_nan() || self.stop_tol <= 0.0 || self.max_iter == 0 {
            return bad("stop tolerance and iteration cap must be positive".into());
        }
        Ok(())
    }
}

/// Optional settings, as read from a config file or from command-line flags.
/// Later sources override earlier ones with [`Overrides::merge`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub task: Option<Task>,
    pub lambda: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub modes: Option<Vec<TvMode>>,
    pub solver: Option<SolverKind>,
    pub prox: Option<ProxKind>,
    pub size: Option<usize>,
    pub seed: Option<u64>,
    pub angles: Option<usize>,
    pub phantoms: Option<usize>,
    pub sigma: Option<f64>,
    pub out: Option<PathBuf>,
    pub paper_scale: Option<bool>,
    pub timing: Option<bool>,
    pub images: Option<bool>,
    pub fpg_budget: Option<usize>,
}

pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| Error::Parse(format!("bad list item {s:?}: {e}"))))
        .collect()
}

/// `aniso`, `iso` or `both`.
pub fn parse_modes(text: &str) -> Result<Vec<TvMode>> {
    match text.trim() {
        "both" => Ok(TvMode::ALL.to_vec()),
        other => Ok(vec![other.parse()?]),
    }
}

fn parse_bool(text: &str) -> Result<bool> {
    match text.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Parse(format!("expected a boolean, got {other:?}"))),
    }
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Parse(format!("bad value {value:?} for {key}: {e}")))
}

impl Overrides {
    /// Flat `key = value` lines; `#` starts a comment. Keys mirror the CLI
    /// flags (`lambda`, `gamma`, `mode`, `solver`, `prox`, `size`, `seed`,
    /// `angles`, `phantoms`, `sigma`, `out`, `paper-scale`, `timing`,
    /// `images`, `fpg-budget`, `task`), with `_` accepted for `-`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut o = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value, got {raw:?}", lineno + 1)))?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            match key.as_str() {
                "task" => o.task = Some(value.parse()?),
                "lambda" => o.lambda = Some(parse_list(value)?),
                "gamma" => o.gamma = Some(parse_list(value)?),
                "mode" => o.modes = Some(parse_modes(value)?),
                "solver" => o.solver = Some(value.parse()?),
                "prox" => o.prox = Some(value.parse()?),
                "size" => o.size = Some(parse_one(&key, value)?),
                "seed" => o.seed = Some(parse_one(&key, value)?),
                "angles" => o.angles = Some(parse_one(&key, value)?),
                "phantoms" => o.phantoms = Some(parse_one(&key, value)?),
                "sigma" => o.sigma = Some(parse_one(&key, value)?),
                "out" => o.out = Some(PathBuf::from(value)),
                "paper-scale" => o.paper_scale = Some(parse_bool(value)?),
                "timing" => o.timing = Some(parse_bool(value)?),
                "images" => o.images = Some(parse_bool(value)?),
                "fpg-budget" => o.fpg_budget = Some(parse_one(&key, value)?),
                other => return Err(Error::Parse(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        Ok(o)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Fields set in `other` win.
    pub fn merge(self, other: Overrides) -> Overrides {
        Overrides {
            task: other.task.or(self.task),
            lambda: other.lambda.or(self.lambda),
            gamma: other.gamma.or(self.gamma),
            modes: other.modes.or(self.modes),
            solver: other.solver.or(self.solver),
            prox: other.prox.or(self.prox),
            size: other.size.or(self.size),
            seed: other.seed.or(self.seed),
            angles: other.angles.or(self.angles),
            phantoms: other.phantoms.or(self.phantoms),
            sigma: other.sigma.or(self.sigma),
            out: other.out.or(self.out),
            paper_scale: other.paper_scale.or(self.paper_scale),
            timing: other.timing.or(self.timing),
            images: other.images.or(self.images),
            fpg_budget: other.fpg_budget.or(self.fpg_budget),
        }
    }

    /// Builds a validated config for `task`. Explicit phantom and angle
    /// counts take precedence over `paper-scale`.
    pub fn into_config(self, task: Task) -> Result<ExperimentConfig> {
        if let Some(t) = self.task {
            if t != task {
                return Err(Error::InvalidParameter(format!("config is for task {t}, but {task} was requested")));
            }
        }
        let mut cfg = ExperimentConfig::new(task);
        if self.paper_scale.unwrap_or(false) {
            cfg = cfg.paper_scale();
        }
        if let Some(v) = self.lambda {
            cfg.lambda_grid = v;
        }
        if let Some(v) = self.solver {
            cfg.solver = v;
            if task == Task::Ct && v == SolverKind::Apgm && self.gamma.is_none() {
                cfg.gamma_grid = vec![1.0, 0.5, 0.25];
            }
        }
        if let Some(v) = self.gamma {
            cfg.gamma_grid = v;
        }
        if let Some(v) = self.modes {
            cfg.modes = v;
        }
        if let Some(v) = self.prox {
            cfg.prox = v;
        }
        if let Some(v) = self.size {
            cfg.image_size = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.angles {
            cfg.n_angles = v;
        }
        if let Some(v) = self.phantoms {
            cfg.n_phantoms = v;
        }
        if let Some(v) = self.sigma {
            cfg.noise_sigma = v;
        }
        if let Some(v) = self.out {
            cfg.output_dir = v;
        }
        if let Some(v) = self.timing {
            cfg.timing = v;
        }
        if let Some(v) = self.images {
            cfg.write_images = v;
        }
        if let Some(v) = self.fpg_budget {
            cfg.baseline.fpg_budget = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
