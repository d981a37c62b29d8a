//! One function per experiment command, each producing its result tables.

use std::fmt::Display;

use pgpe::analysis::{
    angle_experiment, bound_check, gradient_study, GradientStudyResult, StudyCell,
};
use pgpe::estimators::Block;
use pgpe::trainer::{evaluate_policy, run_many};
use pgpe::{HyperParams64, Method, TrainingHistory64};

use crate::config::{CommandKind, ExperimentConfig};
use crate::output::Table;

/// Tables produced by a command. `error` is set when the command stopped
/// early; the tables then hold whatever was finished.
pub struct Outcome {
    pub tables: Vec<Table>,
    pub error: Option<String>,
}

impl Outcome {
    fn complete(tables: Vec<Table>) -> Self {
        Self {
            tables,
            error: None,
        }
    }

    fn failed(error: impl Display) -> Self {
        Self {
            tables: Vec::new(),
            error: Some(error.to_string()),
        }
    }
}

pub fn execute(cfg: &ExperimentConfig) -> Outcome {
    match cfg.command {
        CommandKind::Train => train(cfg),
        CommandKind::GradientStudy => match run_study(cfg) {
            Ok(study) => Outcome::complete(study_tables(cfg, &study)),
            Err(e) => Outcome::failed(e),
        },
        CommandKind::BoundsCheck => bounds(cfg),
        CommandKind::AngleStudy => angles(cfg),
        CommandKind::Eval => eval(cfg),
    }
}

fn prior_header(dim: usize) -> Vec<String> {
    let mut header: Vec<String> = vec!["iteration".into(), "method".into(), "seed".into()];
    header.extend((1..=dim).map(|i| format!("eta_{i}")));
    header.extend((1..=dim).map(|i| format!("tau_{i}")));
    header
}

fn prior_row(table: &mut Table, iteration: usize, method: &str, seed: u64, rho: &HyperParams64) {
    let mut fields: Vec<&dyn Display> = vec![&iteration, &method, &seed];
    fields.extend(rho.eta().iter().map(|v| v as &dyn Display));
    fields.extend(rho.tau().iter().map(|v| v as &dyn Display));
    table.row(&fields);
}

fn returns_table() -> Table {
    Table::new(
        "returns.csv",
        &["iteration", "method", "seed", "mean_return", "se"],
    )
}

fn train(cfg: &ExperimentConfig) -> Outcome {
    let env = cfg.env();
    let seeds = cfg.seed_list();
    let mut returns = returns_table();
    let mut path = Table::new("path.csv", &prior_header(cfg.dim()));
    let mut error = None;
    for method in cfg.methods() {
        let histories: Vec<TrainingHistory64> = match run_many(&env, &cfg.trainer(method), &seeds) {
            Ok(h) => h,
            Err(e) => {
                error = Some(format!("{}: {e}", method.name()));
                break;
            }
        };
        for h in &histories {
            let name = method.name();
            returns.row(&[
                &0usize,
                &name,
                &h.seed,
                &h.initial_evaluation.mean,
                &h.initial_evaluation.se,
            ]);
            prior_row(&mut path, 0, name, h.seed, &h.initial);
            for rec in &h.iterations {
                returns.row(&[
                    &rec.iteration,
                    &name,
                    &h.seed,
                    &rec.evaluation.mean,
                    &rec.evaluation.se,
                ]);
                prior_row(&mut path, rec.iteration, name, h.seed, &rec.updated);
            }
            if let (Some(e), None) = (&h.aborted, &error) {
                error = Some(format!("{} seed {}: {e}", method.name(), h.seed));
            }
        }
        if error.is_some() {
            break;
        }
    }
    Outcome {
        tables: vec![returns, path],
        error,
    }
}

fn run_study(cfg: &ExperimentConfig) -> pgpe::Result<GradientStudyResult<f64>> {
    gradient_study(&cfg.env(), &cfg.study())
}

fn var_bias_table(name: &'static str, study: &GradientStudyResult<f64>, block: Block) -> Table {
    let mut t = Table::new(
        name,
        &["iteration", "method", "var", "bias2", "mse", "w_max"],
    );
    for c in &study.cells {
        let StudyCell {
            iteration,
            method,
            w_max,
            ..
        } = c;
        let e = c.block(block);
        t.row(&[iteration, &method.name(), &e.var, &e.bias2, &e.mse, w_max]);
    }
    t
}

fn study_tables(cfg: &ExperimentConfig, study: &GradientStudyResult<f64>) -> Vec<Table> {
    let mut tables = vec![var_bias_table("var_bias.csv", study, Block::Eta)];
    if cfg.tau_block {
        tables.push(var_bias_table("var_bias_tau.csv", study, Block::Tau));
    }
    let mut path = Table::new("path.csv", &prior_header(cfg.dim()));
    for (l, rho) in study.path.iter().enumerate() {
        prior_row(&mut path, l + 1, "ORACLE", cfg.seed, rho);
    }
    tables.push(path);
    tables
}

fn bounds(cfg: &ExperimentConfig) -> Outcome {
    let study = match run_study(cfg) {
        Ok(s) => s,
        Err(e) => return Outcome::failed(e),
    };
    let report = match bound_check(&study, cfg.reward_range()) {
        Ok(r) => r,
        Err(e) => {
            return Outcome {
                tables: study_tables(cfg, &study),
                error: Some(e.to_string()),
            }
        }
    };
    let mut t = Table::new(
        "bounds.csv",
        &[
            "iteration",
            "block",
            "empirical_var",
            "bound",
            "pass",
            "check",
            "method",
        ],
    );
    for r in &report.rows {
        t.row(&[
            &r.iteration,
            &r.block.name(),
            &r.empirical,
            &r.bound,
            &r.pass,
            &r.check.name(),
            &r.method.name(),
        ]);
    }
    let mut tables = study_tables(cfg, &study);
    tables.push(t);
    Outcome::complete(tables)
}

fn angles(cfg: &ExperimentConfig) -> Outcome {
    let result = match angle_experiment(&cfg.env(), &cfg.angle()) {
        Ok(r) => r,
        Err(e) => return Outcome::failed(e),
    };
    let mut angles = Table::new("angles.csv", &["trial", "method", "angle_deg"]);
    let mut hist = Table::new(
        "angle_histogram.csv",
        &["method", "bin_lo", "bin_hi", "count"],
    );
    for (method, study) in &result.per_method {
        for (trial, angle) in study.angles.iter().enumerate() {
            let shown = angle.map_or(String::new(), |a| a.to_string());
            angles.row(&[&(trial + 1), &method.name(), &shown]);
        }
        for bin in &study.histogram {
            hist.row(&[&method.name(), &bin.lo, &bin.hi, &bin.count]);
        }
    }
    let mut truth = Table::new("true_gradient.csv", &["d_eta", "d_tau"]);
    truth.row(&[&result.truth[0], &result.truth[1]]);
    Outcome::complete(vec![angles, hist, truth])
}

fn eval(cfg: &ExperimentConfig) -> Outcome {
    let env = cfg.env();
    let mut returns = returns_table();
    let mut path = Table::new("path.csv", &prior_header(cfg.dim()));
    for seed in cfg.seed_list() {
        let trainer = pgpe::trainer::TrainerConfig {
            seed,
            ..cfg.trainer(Method::Pgpe)
        };
        let evaluated = trainer.initial_prior(cfg.dim()).and_then(|rho| {
            let mut rng = pgpe::rng::stream(seed, &[pgpe::rng::purpose::EVALUATE, 0]);
            evaluate_policy(
                &env,
                &rho,
                cfg.test_episodes,
                cfg.horizon,
                cfg.gamma,
                &mut rng,
            )
            .map(|ev| (rho, ev))
        });
        match evaluated {
            Ok((rho, ev)) => {
                returns.row(&[&0usize, &"none", &seed, &ev.mean, &ev.se]);
                prior_row(&mut path, 0, "none", seed, &rho);
            }
            Err(e) => {
                return Outcome {
                    tables: vec![returns, path],
                    error: Some(e.to_string()),
                }
            }
        }
    }
    Outcome::complete(vec![returns, path])
}

/// Text table for `list-methods`.
pub fn method_table() -> String {
    let mut out = format!(
        "{:<22} {:<22} {:<14} {}\n",
        "key", "name", "weight_mode", "baseline_mode"
    );
    for m in Method::ALL {
        out += &format!(
            "{:<22} {:<22} {:<14} {}\n",
            m.key(),
            m.name(),
            m.weight_mode_name(),
            m.baseline_mode_name()
        );
    }
    out
}
