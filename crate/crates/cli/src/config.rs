//! Experiment configuration: flat TOML, command-line overrides, defaults.
//!
//! Precedence, highest first: `--set key=value`, `--seed`/`--out` flags, the
//! `PGPE_OUT_DIR` environment variable (output directory only), the file.

use std::fmt;
use std::path::{Path, PathBuf};

use pgpe::analysis::{AngleExperimentConfig, GradientStudyConfig, RewardRange};
use pgpe::trainer::{InitialPrior, TrainerConfig, DEFAULT_TAU_FLOOR, DEFAULT_TEST_EPISODES};
use pgpe::{Env64, HyperParams64, Method, MountainCar64, ReuseWindow, ToyEnv64};
use serde::{Deserialize, Serialize};

pub const OUT_DIR_ENV: &str = "PGPE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    GradientStudy,
    Train,
    AngleStudy,
    BoundsCheck,
    Eval,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::GradientStudy => "gradient-study",
            CommandKind::Train => "train",
            CommandKind::AngleStudy => "angle-study",
            CommandKind::BoundsCheck => "bounds-check",
            CommandKind::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvironmentKind {
    Toy,
    MountainCar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowSpec {
    Count(usize),
    Keyword(String),
}

/// The file schema. Every key but `command` and `environment` is optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub command: CommandKind,
    pub environment: EnvironmentKind,
    pub methods: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub iterations: Option<usize>,
    pub samples_per_iteration: Option<usize>,
    pub horizon: Option<usize>,
    pub gamma: Option<f64>,
    pub step_size: Option<f64>,
    pub tau_floor: Option<f64>,
    pub test_episodes: Option<usize>,
    /// Number of training seeds; seed `i` is `seed + i`.
    pub seeds: Option<usize>,
    pub trials: Option<usize>,
    pub oracle_samples: Option<usize>,
    pub reuse_window: Option<WindowSpec>,
    pub truncation_cap: Option<f64>,
    pub initial_eta: Option<Vec<f64>>,
    pub initial_tau: Option<f64>,
    pub action_clip: Option<f64>,
    pub reward_alpha: Option<f64>,
    pub reward_beta: Option<f64>,
    pub target_eta: Option<f64>,
    pub target_tau: Option<f64>,
    pub behavior_eta: Option<f64>,
    pub behavior_tau: Option<f64>,
    pub off_policy_samples: Option<usize>,
    pub tau_block: Option<bool>,
}

/// Fully defaulted configuration; echoed as `config.resolved.toml`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub environment: EnvironmentKind,
    pub methods: Vec<String>,
    pub seed: u64,
    pub iterations: usize,
    pub samples_per_iteration: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub step_size: f64,
    pub tau_floor: f64,
    pub test_episodes: usize,
    pub seeds: usize,
    pub trials: usize,
    pub oracle_samples: usize,
    pub reuse_window: WindowSpec,
    pub truncation_cap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_eta: Option<Vec<f64>>,
    pub initial_tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_clip: Option<f64>,
    pub reward_alpha: f64,
    pub reward_beta: f64,
    pub target_eta: f64,
    pub target_tau: f64,
    pub behavior_eta: f64,
    pub behavior_tau: f64,
    pub off_policy_samples: usize,
    pub tau_block: bool,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        Self {
            field: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "field `{field}`: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Command-line values that take part in resolution.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub env_out: Option<PathBuf>,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, overrides)
}

pub fn parse(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut table: toml::Table =
        toml::from_str(text).map_err(|e| ConfigError::general(e.to_string()))?;
    for assignment in &overrides.set {
        let (key, value) = parse_assignment(assignment)?;
        table.insert(key, value);
    }
    let raw: RawConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| {
            // the file alone gives line-annotated diagnostics when it is at fault
            match toml::from_str::<RawConfig>(text) {
                Err(file_err) if overrides.set.is_empty() => diagnose(&file_err),
                _ => diagnose(&e),
            }
        })?;
    resolve(raw, overrides)
}

fn diagnose(e: &toml::de::Error) -> ConfigError {
    let message = e.message().to_string();
    let field = message
        .split('`')
        .nth(1)
        .filter(|_| message.starts_with("missing field") || message.starts_with("unknown field"))
        .map(str::to_string);
    ConfigError {
        field,
        message: e.to_string().trim_end().to_string(),
    }
}

fn parse_assignment(assignment: &str) -> Result<(String, toml::Value), ConfigError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::general(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim().to_string();
    if key.is_empty() {
        return Err(ConfigError::general(format!(
            "override `{assignment}` has an empty key"
        )));
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key, parsed))
}

struct EnvDefaults {
    iterations: usize,
    horizon: usize,
    gamma: f64,
    step_size: f64,
    seeds: usize,
    reward_alpha: f64,
    reward_beta: f64,
}

fn env_defaults(env: EnvironmentKind) -> EnvDefaults {
    match env {
        EnvironmentKind::Toy => EnvDefaults {
            iterations: 20,
            horizon: 10,
            gamma: 0.9,
            step_size: 0.1,
            seeds: 20,
            reward_alpha: 1.0,
            reward_beta: 2.0,
        },
        EnvironmentKind::MountainCar => EnvDefaults {
            iterations: 50,
            horizon: 40,
            gamma: 0.95,
            step_size: 1.0,
            seeds: 10,
            reward_alpha: 0.0,
            reward_beta: 1.0,
        },
    }
}

fn default_methods(command: CommandKind) -> Vec<Method> {
    match command {
        CommandKind::AngleStudy => vec![Method::NiwPgpe, Method::IwPgpe, Method::IwPgpeOb],
        CommandKind::Eval => Vec::new(),
        _ => Method::STUDY.to_vec(),
    }
}

fn resolve(raw: RawConfig, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let d = env_defaults(raw.environment);
    let methods = match &raw.methods {
        Some(keys) => keys
            .iter()
            .map(|k| k.parse::<Method>().map(|m| m.key().to_string()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ConfigError::field("methods", e.to_string()))?,
        None => default_methods(raw.command)
            .iter()
            .map(|m| m.key().to_string())
            .collect(),
    };
    let angle = AngleExperimentConfig::<f64>::toy(0);
    let cfg = ExperimentConfig {
        command: raw.command,
        environment: raw.environment,
        methods,
        seed: overrides.seed.or(raw.seed).unwrap_or(0),
        iterations: raw.iterations.unwrap_or(d.iterations),
        samples_per_iteration: raw.samples_per_iteration.unwrap_or(10),
        horizon: raw.horizon.unwrap_or(d.horizon),
        gamma: raw.gamma.unwrap_or(d.gamma),
        step_size: raw.step_size.unwrap_or(d.step_size),
        tau_floor: raw.tau_floor.unwrap_or(DEFAULT_TAU_FLOOR),
        test_episodes: raw.test_episodes.unwrap_or(DEFAULT_TEST_EPISODES),
        seeds: raw.seeds.unwrap_or(d.seeds),
        trials: raw
            .trials
            .unwrap_or(if raw.command == CommandKind::AngleStudy {
                angle.trials
            } else {
                1000
            }),
        oracle_samples: raw.oracle_samples.unwrap_or(10_000),
        reuse_window: raw
            .reuse_window
            .clone()
            .unwrap_or(WindowSpec::Keyword("all".into())),
        truncation_cap: raw
            .truncation_cap
            .unwrap_or(pgpe::estimators::DEFAULT_TRUNCATION_CAP),
        initial_eta: raw.initial_eta.clone(),
        initial_tau: raw.initial_tau.unwrap_or(1.0),
        action_clip: raw.action_clip,
        reward_alpha: raw.reward_alpha.unwrap_or(d.reward_alpha),
        reward_beta: raw.reward_beta.unwrap_or(d.reward_beta),
        target_eta: raw.target_eta.unwrap_or(angle.target.eta()[0]),
        target_tau: raw.target_tau.unwrap_or(angle.target.tau()[0]),
        behavior_eta: raw.behavior_eta.unwrap_or(angle.behavior.eta()[0]),
        behavior_tau: raw.behavior_tau.unwrap_or(angle.behavior.tau()[0]),
        off_policy_samples: raw.off_policy_samples.unwrap_or(angle.samples),
        tau_block: raw.tau_block.unwrap_or(false),
        output_dir: overrides
            .out
            .clone()
            .or_else(|| overrides.env_out.clone())
            .or(raw.output_dir)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(ConfigError::field(name, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        let positive_real = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::field(
                    name,
                    format!("must be a positive finite number, got {v}"),
                ))
            }
        };
        positive("iterations", self.iterations)?;
        positive("samples_per_iteration", self.samples_per_iteration)?;
        positive("horizon", self.horizon)?;
        positive("test_episodes", self.test_episodes)?;
        positive("seeds", self.seeds)?;
        positive("off_policy_samples", self.off_policy_samples)?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(ConfigError::field(
                "gamma",
                format!("must lie in [0, 1), got {}", self.gamma),
            ));
        }
        positive_real("step_size", self.step_size)?;
        positive_real("tau_floor", self.tau_floor)?;
        positive_real("initial_tau", self.initial_tau)?;
        positive_real("target_tau", self.target_tau)?;
        positive_real("behavior_tau", self.behavior_tau)?;
        positive_real("reward_beta", self.reward_beta)?;
        if !(self.truncation_cap > 0.0) {
            return Err(ConfigError::field("truncation_cap", "must be positive"));
        }
        if !(self.reward_alpha >= 0.0 && self.reward_alpha <= self.reward_beta) {
            return Err(ConfigError::field(
                "reward_alpha",
                "must lie in [0, reward_beta]",
            ));
        }
        if let Some(clip) = self.action_clip {
            positive_real("action_clip", clip)?;
            if self.environment != EnvironmentKind::MountainCar {
                return Err(ConfigError::field(
                    "action_clip",
                    "only applies to mountain-car",
                ));
            }
        }
        self.window()
            .map_err(|m| ConfigError::field("reuse_window", m))?;
        if let Some(eta) = &self.initial_eta {
            if eta.len() != self.dim() {
                return Err(ConfigError::field(
                    "initial_eta",
                    format!(
                        "expected {} values for {}, got {}",
                        self.dim(),
                        self.env_name(),
                        eta.len()
                    ),
                ));
            }
            if eta.iter().any(|v| !v.is_finite()) {
                return Err(ConfigError::field("initial_eta", "values must be finite"));
            }
        }
        match self.command {
            CommandKind::GradientStudy | CommandKind::BoundsCheck => {
                if self.trials < 2 {
                    return Err(ConfigError::field(
                        "trials",
                        "a study needs at least 2 trials",
                    ));
                }
                if self.oracle_samples < pgpe::analysis::MIN_ORACLE_SAMPLES {
                    return Err(ConfigError::field(
                        "oracle_samples",
                        format!("must be at least {}", pgpe::analysis::MIN_ORACLE_SAMPLES),
                    ));
                }
            }
            CommandKind::AngleStudy => {
                positive("trials", self.trials)?;
                if self.environment != EnvironmentKind::Toy {
                    return Err(ConfigError::field(
                        "environment",
                        "angle-study needs the one-dimensional toy task",
                    ));
                }
                if self.oracle_samples < pgpe::analysis::MIN_ORACLE_SAMPLES {
                    return Err(ConfigError::field(
                        "oracle_samples",
                        format!("must be at least {}", pgpe::analysis::MIN_ORACLE_SAMPLES),
                    ));
                }
            }
            CommandKind::Train | CommandKind::Eval => {}
        }
        if self.command != CommandKind::Eval && self.methods.is_empty() {
            return Err(ConfigError::field("methods", "no methods selected"));
        }
        Ok(())
    }

    pub fn env_name(&self) -> &'static str {
        match self.environment {
            EnvironmentKind::Toy => "toy",
            EnvironmentKind::MountainCar => "mountain-car",
        }
    }

    pub fn dim(&self) -> usize {
        match self.environment {
            EnvironmentKind::Toy => 1,
            EnvironmentKind::MountainCar => pgpe::environments::CAR_FEATURE_DIM,
        }
    }

    pub fn env(&self) -> Env64 {
        match self.environment {
            EnvironmentKind::Toy => Env64::Toy(ToyEnv64::new()),
            EnvironmentKind::MountainCar => {
                let car = MountainCar64::new();
                Env64::MountainCar(match self.action_clip {
                    Some(clip) => car.with_action_clip(clip),
                    None => car,
                })
            }
        }
    }

    pub fn methods(&self) -> Vec<Method> {
        self.methods
            .iter()
            .map(|k| k.parse().expect("validated method key"))
            .collect()
    }

    pub fn window(&self) -> Result<ReuseWindow, String> {
        match &self.reuse_window {
            WindowSpec::Count(k) => ReuseWindow::last(*k).map_err(|e| e.to_string()),
            WindowSpec::Keyword(s) if s == "all" => Ok(ReuseWindow::All),
            WindowSpec::Keyword(s) => {
                Err(format!("expected \"all\" or a positive integer, got `{s}`"))
            }
        }
    }

    pub fn initial(&self) -> InitialPrior<f64> {
        match &self.initial_eta {
            Some(eta) => InitialPrior::Fixed(
                HyperParams64::new(eta.clone(), vec![self.initial_tau; eta.len()])
                    .expect("validated prior"),
            ),
            None => InitialPrior::RandomMean {
                tau: self.initial_tau,
            },
        }
    }

    /// Training seeds `seed, seed + 1, …`.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64)
            .map(|i| self.seed.wrapping_add(i))
            .collect()
    }

    pub fn trainer(&self, method: Method) -> TrainerConfig<f64> {
        TrainerConfig {
            samples_per_iteration: self.samples_per_iteration,
            horizon: self.horizon,
            gamma: self.gamma,
            iterations: self.iterations,
            step_size: self.step_size,
            tau_floor: self.tau_floor,
            estimator: method.config(self.truncation_cap),
            reuse_window: self.window().expect("validated window"),
            test_episodes: self.test_episodes,
            seed: self.seed,
            initial: self.initial(),
        }
    }

    pub fn study(&self) -> GradientStudyConfig<f64> {
        GradientStudyConfig {
            methods: self.methods(),
            iterations: self.iterations,
            trials: self.trials,
            samples_per_iteration: self.samples_per_iteration,
            horizon: self.horizon,
            gamma: self.gamma,
            step_size: self.step_size,
            tau_floor: self.tau_floor,
            oracle_samples: self.oracle_samples,
            truncation_cap: self.truncation_cap,
            initial: self.initial(),
            seed: self.seed,
            identical_trials: false,
        }
    }

    pub fn angle(&self) -> AngleExperimentConfig<f64> {
        AngleExperimentConfig {
            target: HyperParams64::new(vec![self.target_eta], vec![self.target_tau])
                .expect("validated prior"),
            behavior: HyperParams64::new(vec![self.behavior_eta], vec![self.behavior_tau])
                .expect("validated prior"),
            samples: self.off_policy_samples,
            trials: self.trials,
            oracle_samples: self.oracle_samples,
            horizon: self.horizon,
            gamma: self.gamma,
            methods: self.methods(),
            truncation_cap: self.truncation_cap,
            seed: self.seed,
        }
    }

    pub fn reward_range(&self) -> RewardRange<f64> {
        RewardRange {
            alpha: self.reward_alpha,
            beta: self.reward_beta,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(text: &str) -> ExperimentConfig {
        parse(text, &Overrides::default()).unwrap()
    }

    fn err(text: &str) -> ConfigError {
        parse(text, &Overrides::default()).unwrap_err()
    }

    #[test]
    fn defaults_follow_the_environment() {
        let toy = ok("command = \"train\"\nenvironment = \"toy\"");
        assert_eq!(
            (
                toy.horizon,
                toy.gamma,
                toy.step_size,
                toy.iterations,
                toy.seeds
            ),
            (10, 0.9, 0.1, 20, 20)
        );
        assert_eq!(toy.methods.len(), 6);
        let car = ok("command = \"train\"\nenvironment = \"mountain-car\"");
        assert_eq!(
            (
                car.horizon,
                car.gamma,
                car.step_size,
                car.iterations,
                car.seeds
            ),
            (40, 0.95, 1.0, 50, 10)
        );
        let angle = ok("command = \"angle-study\"\nenvironment = \"toy\"");
        assert_eq!(angle.trials, 20);
        assert_eq!(angle.methods, ["niw-pgpe", "iw-pgpe", "iw-pgpe-ob"]);
    }

    #[test]
    fn missing_environment_names_the_field() {
        let e = err("command = \"train\"");
        assert_eq!(e.field.as_deref(), Some("environment"));
        assert!(e.to_string().contains("environment"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = err("command = \"train\"\nenvironment = \"toy\"\nhorizn = 3");
        assert_eq!(e.field.as_deref(), Some("horizn"));
    }

    #[test]
    fn type_errors_carry_a_line() {
        let e = err("command = \"train\"\nenvironment = \"toy\"\nhorizon = \"long\"");
        assert!(e.message.contains("line 3"), "{}", e.message);
    }

    #[test]
    fn overrides_win_over_file() {
        let o = Overrides {
            set: vec![
                "horizon=7".into(),
                "methods=[\"iw-pgpe-ob\"]".into(),
                "reuse_window=5".into(),
            ],
            seed: Some(42),
            out: None,
            env_out: Some("elsewhere".into()),
        };
        let c = parse(
            "command = \"train\"\nenvironment = \"toy\"\nhorizon = 3\nseed = 1\noutput_dir = \"x\"",
            &o,
        )
        .unwrap();
        assert_eq!(c.horizon, 7);
        assert_eq!(c.seed, 42);
        assert_eq!(c.methods, ["iw-pgpe-ob"]);
        assert_eq!(c.window().unwrap(), ReuseWindow::last(5).unwrap());
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
        let flagged = Overrides {
            out: Some("flag".into()),
            ..o
        };
        assert_eq!(
            parse("command = \"train\"\nenvironment = \"toy\"", &flagged)
                .unwrap()
                .output_dir,
            PathBuf::from("flag")
        );
    }

    #[test]
    fn override_can_supply_a_missing_field() {
        let o = Overrides {
            set: vec!["environment=mountain-car".into()],
            ..Default::default()
        };
        assert_eq!(
            parse("command = \"eval\"", &o).unwrap().environment,
            EnvironmentKind::MountainCar
        );
    }

    #[test]
    fn invalid_values_name_their_field() {
        let cases = [
            ("gamma = 1.0", "gamma"),
            ("methods = [\"nope\"]", "methods"),
            ("reuse_window = \"some\"", "reuse_window"),
            ("reuse_window = 0", "reuse_window"),
            ("initial_eta = [0.0, 1.0]", "initial_eta"),
            ("iterations = 0", "iterations"),
            ("action_clip = 1.0", "action_clip"),
        ];
        for (line, field) in cases {
            let e = err(&format!(
                "command = \"train\"\nenvironment = \"toy\"\n{line}"
            ));
            assert_eq!(e.field.as_deref(), Some(field), "{line}: {e}");
        }
        let e = err("command = \"angle-study\"\nenvironment = \"mountain-car\"");
        assert_eq!(e.field.as_deref(), Some("environment"));
        let e = err("command = \"gradient-study\"\nenvironment = \"toy\"\noracle_samples = 10");
        assert_eq!(e.field.as_deref(), Some("oracle_samples"));
    }

    #[test]
    fn resolved_echo_round_trips() {
        let c = ok("command = \"bounds-check\"\nenvironment = \"toy\"\ninitial_eta = [0.5]\nreuse_window = 3");
        let echoed = parse(&c.to_toml(), &Overrides::default()).unwrap();
        assert_eq!(echoed, c);
    }
}
