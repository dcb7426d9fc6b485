//! On-disk run and suite documents.

use std::path::{Path, PathBuf};

use adaptive_lsvi::{
    build_random_spec_with, build_tabular_embedding, Config, RandomSpecConfig, SchedulerConfig, Spec, SpecDocument,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_RUNS: usize = 10_000;

/// Where the environment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum SpecSource {
    Random(RandomSpecConfig),
    /// `transitions[h][s][a][s']`, `rewards[h][s][a]`.
    Tabular {
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        horizon: usize,
    },
    Inline {
        document: SpecDocument<f64>,
    },
    /// A JSON spec document; relative paths resolve against the config file.
    File {
        path: PathBuf,
    },
}

impl SpecSource {
    pub fn build(&self, base_dir: Option<&Path>) -> Result<Spec, CliError> {
        let spec = match self {
            SpecSource::Random(cfg) => build_random_spec_with(cfg)?,
            SpecSource::Tabular {
                transitions,
                rewards,
                horizon,
            } => build_tabular_embedding(transitions, rewards, *horizon)?,
            SpecSource::Inline { document } => Spec::from_document(document.clone())?,
            SpecSource::File { path } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| CliError::Validation(format!("spec.path: cannot read {}: {e}", full.display())))?;
                let doc: SpecDocument<f64> = serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("spec.path: {}: {e}", full.display())))?;
                Spec::from_document(doc)?
            }
        };
        Ok(spec)
    }
}

fn default_lambda() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.01
}
fn default_bonus_scale() -> f64 {
    1.0
}
fn default_refresh_interval() -> usize {
    adaptive_lsvi::gram::DEFAULT_REFRESH_INTERVAL
}
fn default_scheduler() -> SchedulerConfig<f64> {
    SchedulerConfig::Full
}
fn default_max_runs() -> usize {
    DEFAULT_MAX_RUNS
}

/// Mirrors `RunConfig` with the spec given by its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub schema_version: u32,
    pub spec: SpecSource,
    pub episodes: usize,
    #[serde(default = "default_scheduler")]
    pub scheduler: SchedulerConfig<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_bonus_scale")]
    pub bonus_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_refresh_interval")]
    pub refresh_interval: usize,
}

impl RunFile {
    pub fn new(spec: SpecSource, episodes: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            spec,
            episodes,
            scheduler: default_scheduler(),
            lambda: default_lambda(),
            delta: default_delta(),
            bonus_scale: default_bonus_scale(),
            seed: 0,
            refresh_interval: default_refresh_interval(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config: cannot read {}: {e}", path.display())))?;
        let file: Self = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        file.check_schema()?;
        Ok(file)
    }

    fn check_schema(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        Ok(())
    }

    /// Builds and validates the library config.
    pub fn to_run_config(&self, base_dir: Option<&Path>) -> Result<Config, CliError> {
        self.check_schema()?;
        let spec = self.spec.build(base_dir)?;
        let mut cfg = Config::new(spec, self.episodes, self.scheduler.clone())
            .with_seed(self.seed)
            .with_bonus_scale(self.bonus_scale)
            .with_lambda(self.lambda)
            .with_delta(self.delta);
        cfg.refresh_interval = self.refresh_interval;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(k) = o.episodes {
            self.episodes = k;
        }
        if let Some(x) = o.lambda {
            self.lambda = x;
        }
        if let Some(x) = o.delta {
            self.delta = x;
        }
        if let Some(x) = o.bonus_scale {
            self.bonus_scale = x;
        }
        let kind = o.scheduler.unwrap_or_else(|| SchedulerName::of(&self.scheduler));
        self.scheduler = match kind {
            SchedulerName::Full => {
                if o.budget.is_some() || o.eta.is_some() {
                    return Err(CliError::Validation("scheduler: full takes neither --budget nor --eta".into()));
                }
                SchedulerConfig::Full
            }
            SchedulerName::Batch => {
                if o.eta.is_some() {
                    return Err(CliError::Validation("scheduler: --eta applies to det_switch only".into()));
                }
                let budget = match (o.budget, &self.scheduler) {
                    (Some(b), _) => b,
                    (None, SchedulerConfig::Batch { budget }) => *budget,
                    (None, SchedulerConfig::DetSwitch { budget: Some(b), .. }) => *b,
                    _ => return Err(CliError::Validation("scheduler: batch needs --budget".into())),
                };
                SchedulerConfig::Batch { budget }
            }
            SchedulerName::DetSwitch => match (o.budget, o.eta, &self.scheduler) {
                (Some(b), None, _) => SchedulerConfig::DetSwitch {
                    budget: Some(b),
                    eta: None,
                },
                (None, Some(eta), _) => SchedulerConfig::DetSwitch {
                    budget: None,
                    eta: Some(eta),
                },
                (None, None, SchedulerConfig::DetSwitch { budget, eta }) => SchedulerConfig::DetSwitch {
                    budget: *budget,
                    eta: *eta,
                },
                (None, None, SchedulerConfig::Batch { budget }) => SchedulerConfig::DetSwitch {
                    budget: Some(*budget),
                    eta: None,
                },
                (Some(_), Some(_), _) => {
                    return Err(CliError::Validation("scheduler: --budget and --eta are mutually exclusive".into()))
                }
                (None, None, SchedulerConfig::Full) => {
                    return Err(CliError::Validation("scheduler: det_switch needs --budget or --eta".into()))
                }
            },
        };
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SchedulerName {
    Full,
    Batch,
    DetSwitch,
}

impl SchedulerName {
    pub fn of(cfg: &SchedulerConfig<f64>) -> Self {
        match cfg {
            SchedulerConfig::Full => Self::Full,
            SchedulerConfig::Batch { .. } => Self::Batch,
            SchedulerConfig::DetSwitch { .. } => Self::DetSwitch,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Batch => "batch",
            Self::DetSwitch => "det_switch",
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub scheduler: Option<SchedulerName>,
    #[arg(long, conflicts_with = "eta")]
    pub budget: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long = "bonus-scale")]
    pub bonus_scale: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub episodes: Option<usize>,
}

/// A cartesian sweep around a base run. Empty axes fall back to the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    pub schema_version: u32,
    pub base: RunFile,
    #[serde(default)]
    pub schedulers: Vec<SchedulerName>,
    #[serde(default)]
    pub budgets: Vec<usize>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Only meaningful for a random spec source.
    #[serde(default)]
    pub spec_seeds: Vec<u64>,
    #[serde(default = "default_max_runs")]
    pub max_runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub scheduler: SchedulerName,
    pub budget: Option<usize>,
    pub seed: u64,
    pub spec_seed: Option<u64>,
    pub run: RunFile,
}

impl SuiteFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("suite: cannot read {}: {e}", path.display())))?;
        let suite: Self = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("suite: {e}")))?;
        if suite.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                suite.schema_version
            )));
        }
        Ok(suite)
    }

    pub fn expand(&self) -> Result<Vec<SweepPoint>, CliError> {
        let schedulers = if self.schedulers.is_empty() {
            vec![SchedulerName::of(&self.base.scheduler)]
        } else {
            self.schedulers.clone()
        };
        let base_budget = match self.base.scheduler {
            SchedulerConfig::Batch { budget } | SchedulerConfig::DetSwitch { budget: Some(budget), .. } => Some(budget),
            _ => None,
        };
        let budgets: Vec<usize> = if self.budgets.is_empty() {
            base_budget.into_iter().collect()
        } else {
            self.budgets.clone()
        };
        let seeds = if self.seeds.is_empty() { vec![self.base.seed] } else { self.seeds.clone() };
        let spec_seeds: Vec<Option<u64>> = if self.spec_seeds.is_empty() {
            vec![None]
        } else if matches!(self.base.spec, SpecSource::Random(_)) {
            self.spec_seeds.iter().copied().map(Some).collect()
        } else {
            return Err(CliError::Validation("spec_seeds: requires a random spec source".into()));
        };

        let per_scheduler = |s: SchedulerName| -> Result<Vec<Option<usize>>, CliError> {
            match s {
                SchedulerName::Full => Ok(vec![None]),
                SchedulerName::DetSwitch if budgets.is_empty() => match self.base.scheduler {
                    SchedulerConfig::DetSwitch { eta: Some(_), .. } => Ok(vec![None]),
                    _ => Err(CliError::Validation("budgets: det_switch needs a budget or a base eta".into())),
                },
                _ if budgets.is_empty() => Err(CliError::Validation(format!("budgets: {} needs a budget", s.as_str()))),
                _ => Ok(budgets.iter().copied().map(Some).collect()),
            }
        };
        let mut total = 0usize;
        for &s in &schedulers {
            total = total.saturating_add(per_scheduler(s)?.len().saturating_mul(seeds.len() * spec_seeds.len()));
        }
        if total > self.max_runs {
            return Err(CliError::Validation(format!(
                "suite: {total} runs exceed the cap of {}",
                self.max_runs
            )));
        }

        let mut points = Vec::with_capacity(total);
        for &scheduler in &schedulers {
            for budget in per_scheduler(scheduler)? {
                for &spec_seed in &spec_seeds {
                    for &seed in &seeds {
                        let mut run = self.base.clone();
                        run.seed = seed;
                        run.scheduler = match (scheduler, budget) {
                            (SchedulerName::Full, _) => SchedulerConfig::Full,
                            (SchedulerName::Batch, Some(b)) => SchedulerConfig::Batch { budget: b },
                            (SchedulerName::DetSwitch, Some(b)) => SchedulerConfig::DetSwitch {
                                budget: Some(b),
                                eta: None,
                            },
                            (_, None) => self.base.scheduler.clone(),
                        };
                        if let (Some(ss), SpecSource::Random(cfg)) = (spec_seed, &mut run.spec) {
                            cfg.seed = ss;
                        }
                        points.push(SweepPoint {
                            scheduler,
                            budget,
                            seed,
                            spec_seed,
                            run,
                        });
                    }
                }
            }
        }
        Ok(points)
    }
}
