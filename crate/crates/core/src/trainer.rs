//! The policy-update loop.
//!
//! Each iteration collects `N` fresh episodes under the current prior, picks
//! the admissible records through the reuse window, estimates the gradient,
//! takes a normalized step of fixed length in the stacked `(η, τ)` space,
//! floors the deviations and evaluates the new prior on fresh test episodes.

use rand::Rng;
use rayon::prelude::*;

use crate::environments::Environment;
use crate::error::{Error, Result};
use crate::estimators::{estimate_gradient, EstimatorConfig, GradientEstimate, WeightMode};
use crate::gaussian_prior::{sample_params, HyperParams};
use crate::rng::{purpose, stream};
use crate::rollout::{collect_batch, generate_trajectory, Dataset, ReuseWindow};
use crate::scalar::{mean_and_se, norm_sq, Scalar};

/// How the first prior is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialPrior<F> {
    /// `η_i ~ N(0, 1)` from the run's seed, `τ_i = tau`.
    RandomMean {
        tau: F,
    },
    Fixed(HyperParams<F>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig<F> {
    pub samples_per_iteration: usize,
    pub horizon: usize,
    pub gamma: F,
    pub iterations: usize,
    /// Numerator `c` of the adaptive rate `ε = c / ‖∇Ĵ‖`.
    pub step_size: F,
    pub tau_floor: F,
    pub estimator: EstimatorConfig<F>,
    pub reuse_window: ReuseWindow,
    pub test_episodes: usize,
    pub seed: u64,
    pub initial: InitialPrior<F>,
}

pub const DEFAULT_TAU_FLOOR: f64 = 0.05;
pub const DEFAULT_TEST_EPISODES: usize = 100;

impl<F: Scalar> TrainerConfig<F> {
    /// Toy task defaults: N = 10, T = 10, γ = 0.9, c = 0.1, 20 iterations.
    pub fn toy(estimator: EstimatorConfig<F>, seed: u64) -> Self {
        Self {
            samples_per_iteration: 10,
            horizon: 10,
            gamma: F::of(0.9),
            iterations: 20,
            step_size: F::of(0.1),
            tau_floor: F::of(DEFAULT_TAU_FLOOR),
            estimator,
            reuse_window: ReuseWindow::All,
            test_episodes: DEFAULT_TEST_EPISODES,
            seed,
            initial: InitialPrior::RandomMean { tau: F::one() },
        }
    }

    /// Mountain-car defaults: N = 10, T = 40, γ = 0.95, c = 1, 50 iterations.
    pub fn mountain_car(estimator: EstimatorConfig<F>, seed: u64) -> Self {
        Self {
            horizon: 40,
            gamma: F::of(0.95),
            iterations: 50,
            step_size: F::one(),
            ..Self::toy(estimator, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.samples_per_iteration == 0 {
            return bad("samples_per_iteration must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.gamma >= F::zero() && self.gamma < F::one()) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.step_size > F::zero()) || !self.step_size.is_finite() {
            return bad(format!("step size {} must be positive", self.step_size));
        }
        if !(self.tau_floor > F::zero()) || !self.tau_floor.is_finite() {
            return bad(format!("tau floor {} must be positive", self.tau_floor));
        }
        if self.test_episodes == 0 {
            return bad("test_episodes must be at least 1".into());
        }
        if let InitialPrior::RandomMean { tau } = self.initial {
            if !(tau > F::zero()) {
                return bad(format!("initial tau {tau} must be positive"));
            }
        }
        EstimatorConfig::new(self.estimator.weight_mode, self.estimator.baseline_mode)?;
        Ok(())
    }

    /// On-policy estimators only ever see the current iteration.
    pub fn effective_window(&self) -> ReuseWindow {
        match self.estimator.weight_mode {
            WeightMode::OnPolicy => ReuseWindow::Last(std::num::NonZeroUsize::MIN),
            _ => self.reuse_window,
        }
    }

    /// The first prior, drawn from the run's seed when random.
    pub fn initial_prior(&self, dim: usize) -> Result<HyperParams<F>> {
        match &self.initial {
            InitialPrior::Fixed(rho) => {
                if rho.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: rho.dim(),
                    });
                }
                Ok(rho.clone())
            }
            InitialPrior::RandomMean { tau } => {
                let mut rng = stream(self.seed, &[purpose::INIT]);
                let eta = (0..dim).map(|_| F::standard_normal(&mut rng)).collect();
                HyperParams::new(eta, vec![*tau; dim])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperUpdate<F> {
    pub rho: HyperParams<F>,
    /// The gradient was exactly zero and the prior was left unchanged.
    pub zero_gradient: bool,
}

/// `ρ ← ρ + (c / ‖g‖) g` over the stacked `(η, τ)` vector, then
/// `τ_i ← max(τ_i, floor)`. A zero gradient leaves `ρ` unchanged.
pub fn update_hyperparams<F: Scalar>(
    rho: &HyperParams<F>,
    grad: &GradientEstimate<F>,
    step_size: F,
    tau_floor: F,
) -> Result<HyperUpdate<F>> {
    if grad.d_eta.len() != rho.dim() || grad.d_tau.len() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: grad.d_eta.len(),
        });
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient estimate".into()));
    }
    let norm = (norm_sq(&grad.d_eta) + norm_sq(&grad.d_tau)).sqrt();
    if norm == F::zero() {
        return Ok(HyperUpdate {
            rho: rho.clone(),
            zero_gradient: true,
        });
    }
    let scale = step_size / norm;
    let eta = rho
        .eta()
        .iter()
        .zip(&grad.d_eta)
        .map(|(&e, &g)| e + scale * g)
        .collect();
    let tau = rho
        .tau()
        .iter()
        .zip(&grad.d_tau)
        .map(|(&t, &g)| (t + scale * g).max(tau_floor))
        .collect();
    Ok(HyperUpdate {
        rho: HyperParams::new(eta, tau)?,
        zero_gradient: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation<F> {
    pub mean: F,
    pub se: F,
    /// Only one test episode: `se` is zero by convention.
    pub single_episode: bool,
}

/// Mean and standard error of the return over `n_test` fresh `θ ~ rho` rollouts.
pub fn evaluate_policy<F, E, R>(
    env: &E,
    rho: &HyperParams<F>,
    n_test: usize,
    horizon: usize,
    gamma: F,
    rng: &mut R,
) -> Result<Evaluation<F>>
where
    F: Scalar,
    E: Environment<F> + ?Sized,
    R: Rng + ?Sized,
{
    if n_test == 0 {
        return Err(Error::InvalidArgument("n_test must be at least 1".into()));
    }
    let returns = (0..n_test)
        .map(|_| {
            let theta = sample_params(rho, rng);
            Ok(generate_trajectory(env, &theta, horizon, gamma, rng)?.discounted_return())
        })
        .collect::<Result<Vec<F>>>()?;
    let (mean, se) = mean_and_se(&returns);
    Ok(Evaluation {
        mean,
        se,
        single_episode: n_test == 1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<F> {
    /// 1-based.
    pub iteration: usize,
    /// Prior the iteration's data was collected under.
    pub behavior: HyperParams<F>,
    /// Prior after the update.
    pub updated: HyperParams<F>,
    pub estimate: GradientEstimate<F>,
    pub zero_gradient: bool,
    /// Records the estimate used.
    pub n_records: usize,
    /// Evaluation of `updated`.
    pub evaluation: Evaluation<F>,
}

impl<F: Scalar> IterationRecord<F> {
    pub fn max_weight(&self) -> F {
        self.estimate.weight_stats.max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHistory<F> {
    pub seed: u64,
    pub initial: HyperParams<F>,
    pub initial_evaluation: Evaluation<F>,
    pub iterations: Vec<IterationRecord<F>>,
    /// Set when a runtime error stopped the loop early; `iterations` then
    /// holds the completed prefix.
    pub aborted: Option<Error>,
}

impl<F: Scalar> TrainingHistory<F> {
    pub fn is_complete(&self) -> bool {
        self.aborted.is_none()
    }

    pub fn returns(&self) -> Vec<F> {
        self.iterations.iter().map(|r| r.evaluation.mean).collect()
    }

    pub fn final_prior(&self) -> &HyperParams<F> {
        self.iterations.last().map_or(&self.initial, |r| &r.updated)
    }
}

/// Run the full training loop. Configuration errors are returned as `Err`;
/// failures during the loop are recorded in [`TrainingHistory::aborted`].
pub fn run_training<F, E>(env: &E, config: &TrainerConfig<F>) -> Result<TrainingHistory<F>>
where
    F: Scalar,
    E: Environment<F> + ?Sized,
{
    config.validate()?;
    let dim = env.spec().feature_dim;
    let initial = config.initial_prior(dim)?;
    let initial_evaluation = evaluate_policy(
        env,
        &initial,
        config.test_episodes,
        config.horizon,
        config.gamma,
        &mut stream(config.seed, &[purpose::EVALUATE, 0]),
    )?;
    let mut history = TrainingHistory {
        seed: config.seed,
        initial: initial.clone(),
        initial_evaluation,
        iterations: Vec::with_capacity(config.iterations),
        aborted: None,
    };
    let window = config.effective_window();
    let mut dataset = Dataset::new();
    let mut rho = initial;
    for iteration in 1..=config.iterations {
        match training_step(env, config, &mut dataset, &rho, iteration, window) {
            Ok(record) => {
                rho = record.updated.clone();
                history.iterations.push(record);
            }
            Err(e) => {
                history.aborted = Some(e);
                break;
            }
        }
    }
    Ok(history)
}

fn training_step<F, E>(
    env: &E,
    config: &TrainerConfig<F>,
    dataset: &mut Dataset<F>,
    rho: &HyperParams<F>,
    iteration: usize,
    window: ReuseWindow,
) -> Result<IterationRecord<F>>
where
    F: Scalar,
    E: Environment<F> + ?Sized,
{
    let it = iteration as u64;
    let batch = collect_batch(
        env,
        rho,
        config.samples_per_iteration,
        config.horizon,
        config.gamma,
        iteration,
        &mut stream(config.seed, &[purpose::COLLECT, it]),
    )?;
    dataset.push_batch(batch)?;
    let view = dataset.window(iteration, window);
    let estimate = estimate_gradient(view, rho, &config.estimator)?;
    let update = update_hyperparams(rho, &estimate, config.step_size, config.tau_floor)?;
    let evaluation = evaluate_policy(
        env,
        &update.rho,
        config.test_episodes,
        config.horizon,
        config.gamma,
        &mut stream(config.seed, &[purpose::EVALUATE, it]),
    )?;
    Ok(IterationRecord {
        iteration,
        behavior: rho.clone(),
        updated: update.rho,
        n_records: view.len(),
        estimate,
        zero_gradient: update.zero_gradient,
        evaluation,
    })
}

/// Independent runs for each seed, in parallel; output order follows `seeds`.
pub fn run_many<F, E>(
    env: &E,
    config: &TrainerConfig<F>,
    seeds: &[u64],
) -> Result<Vec<TrainingHistory<F>>>
where
    F: Scalar,
    E: Environment<F> + ?Sized,
{
    seeds
        .par_iter()
        .map(|&seed| {
            run_training(
                env,
                &TrainerConfig {
                    seed,
                    ..config.clone()
                },
            )
        })
        .collect()
}
