//! Measurement machinery for the estimators.
//!
//! * [`oracle_gradient`]: large-sample on-policy estimate standing in for the
//!   true gradient.
//! * [`gradient_study`]: variance, squared bias and MSE of each method over
//!   `M` independent regenerations of the data, measured along one common
//!   path of priors that is advanced by the oracle gradient.
//! * [`angle_study`] / [`angle_experiment`]: signed angles between estimated
//!   and true gradients in the `(η, τ)` plane of the one-dimensional toy task.
//! * [`bound_check`]: compares study variances with the closed-form bounds.

use rand::Rng;
use rayon::prelude::*;

use crate::environments::Environment;
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_from_terms, ob_variance_upper_bound, sample_terms, trace_b, variance_reduction_bounds,
    variance_upper_bound, Block, BoundInputs, GradientEstimate, Method, SampleTerm, WeightMode,
    DEFAULT_TRUNCATION_CAP,
};
use crate::gaussian_prior::{importance_weight, sample_params, score, HyperParams};
use crate::rng::{purpose, stream};
use crate::rollout::{collect_batch, Dataset, ReuseWindow};
use crate::scalar::{compensated_sum, mean_and_se, CompensatedSum, Scalar};
use crate::trainer::{evaluate_policy, update_hyperparams, InitialPrior, DEFAULT_TAU_FLOOR};

// ---------------------------------------------------------------------------
// Oracle gradient

/// Plain on-policy estimate with per-component standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGradient<F> {
    pub estimate: GradientEstimate<F>,
    pub se_eta: Vec<F>,
    pub se_tau: Vec<F>,
}

pub const MIN_ORACLE_SAMPLES: usize = 1000;

/// Plain PGPE (`w ≡ 1`, `b = 0`) over `n_oracle` fresh on-policy samples.
pub fn oracle_gradient<F, E, R>(
    env: &E,
    rho: &HyperParams<F>,
    n_oracle: usize,
    horizon: usize,
    gamma: F,
    rng: &mut R,
) -> Result<OracleGradient<F>>
where
    F: Scalar,
    E: Environment<F> + ?Sized,
    R: Rng + ?Sized,
{
    if n_oracle < MIN_ORACLE_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "oracle needs at least {MIN_ORACLE_SAMPLES} samples, got {n_oracle}"
        )));
    }
    let records = collect_batch(env, rho, n_oracle, horizon, gamma, 1, rng)?;
    let terms = sample_terms(&records, rho, WeightMode::OnPolicy)?;
    Ok(oracle_from_terms(&terms))
}

fn oracle_from_terms<F: Scalar>(terms: &[SampleTerm<F>]) -> OracleGradient<F> {
    let estimate = estimate_from_terms(terms, crate::estimators::BaselineMode::None);
    let dim = estimate.d_eta.len();
    let se = |pick: &dyn Fn(&SampleTerm<F>, usize) -> F| -> Vec<F> {
        (0..dim)
            .map(|i| {
                let xs: Vec<F> = terms.iter().map(|t| t.ret * pick(t, i)).collect();
                mean_and_se(&xs).1
            })
            .collect()
    };
    let se_eta = se(&|t, i| t.score.d_eta[i]);
    let se_tau = se(&|t, i| t.score.d_tau[i]);
    OracleGradient {
        estimate,
        se_eta,
        se_tau,
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo helpers

/// Componentwise mean and standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorMean<F> {
    pub mean: Vec<F>,
    pub se: Vec<F>,
}

impl<F: Scalar> VectorMean<F> {
    fn of(rows: &[Vec<F>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let (mean, se) = (0..dim)
            .map(|i| {
                let col: Vec<F> = rows.iter().map(|r| r[i]).collect();
                mean_and_se(&col)
            })
            .unzip();
        Self { mean, se }
    }

    pub fn norm(&self) -> F {
        crate::scalar::norm_sq(&self.mean).sqrt()
    }

    /// Standard error of the norm under independence of components.
    pub fn norm_se(&self) -> F {
        crate::scalar::norm_sq(&self.se).sqrt()
    }
}

/// Mean of `w(θ) ∇_ρ log p(θ | target)` over `θ ~ behavior`, stacked `(η, τ)`.
/// It is zero in expectation for any pair of priors.
pub fn weighted_score_mean<F: Scalar, R: Rng + ?Sized>(
    target: &HyperParams<F>,
    behavior: &HyperParams<F>,
    n: usize,
    rng: &mut R,
) -> Result<VectorMean<F>> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two draws".into()));
    }
    let rows = (0..n)
        .map(|_| {
            let theta = sample_params(behavior, rng);
            let w = importance_weight(target, behavior, &theta)?;
            let s = score(target, &theta)?;
            Ok(s.d_eta.iter().chain(&s.d_tau).map(|&v| w * v).collect())
        })
        .collect::<Result<Vec<Vec<F>>>>()?;
    Ok(VectorMean::of(&rows))
}

/// Empirical trace variance `(1/N) Σ ‖x_n(b) − x̄(b)‖²` of the per-sample
/// estimator `x_n(b) = (R_n − b) w_n ∇ log p(θ_n)` over the stacked score.
pub fn per_sample_trace_variance<F: Scalar>(terms: &[SampleTerm<F>], b: F) -> F {
    let n = F::of_usize(terms.len().max(1));
    let dim = terms.first().map_or(0, |t| t.score.d_eta.len());
    let row = |t: &SampleTerm<F>, k: usize| {
        let s = if k < dim {
            t.score.d_eta[k]
        } else {
            t.score.d_tau[k - dim]
        };
        (t.ret - b) * t.weight * s
    };
    let mut total = CompensatedSum::new();
    for k in 0..2 * dim {
        let mean = compensated_sum(terms.iter().map(|t| row(t, k))) / n;
        total.add(
            compensated_sum(terms.iter().map(|t| {
                let d = row(t, k) - mean;
                d * d
            })) / n,
        );
    }
    total.value()
}

/// `(1/N) Σ w_n² ‖∇ log p(θ_n)‖²`.
pub fn weighted_score_second_moment<F: Scalar>(terms: &[SampleTerm<F>]) -> F {
    compensated_sum(
        terms
            .iter()
            .map(|t| t.weight * t.weight * t.score.norm_sq()),
    ) / F::of_usize(terms.len().max(1))
}

/// Expected return of a one-dimensional prior on a coarse `(η, τ)` grid.
pub fn expected_return_grid<F, E>(
    env: &E,
    etas: &[F],
    taus: &[F],
    episodes: usize,
    horizon: usize,
    gamma: F,
    seed: u64,
) -> Result<Vec<(F, F, F)>>
where
    F: Scalar,
    E: Environment<F> + ?Sized,
{
    let cells: Vec<(usize, F, F)> = etas
        .iter()
        .flat_map(|&e| taus.iter().map(move |&t| (e, t)))
        .enumerate()
        .map(|(i, (e, t))| (i, e, t))
        .collect();
    cells
        .par_iter()
        .map(|&(i, e, t)| {
            let rho = HyperParams::new(vec![e], vec![t])?;
            let ev = evaluate_policy(
                env,
                &rho,
                episodes,
                horizon,
                gamma,
                &mut stream(seed, &[purpose::EVALUATE, i as u64]),
            )?;
            Ok((e, t, ev.mean))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Gradient study

#[derive(Debug, Clone, PartialEq)]
pub struct GradientStudyConfig<F> {
    pub methods: Vec<Method>,
    pub iterations: usize,
    /// Independent regenerations `M` of the data at each iteration.
    pub trials: usize,
    pub samples_per_iteration: usize,
    pub horizon: usize,
    pub gamma: F,
    pub step_size: F,
    pub tau_floor: F,
    pub oracle_samples: usize,
    pub truncation_cap: F,
    pub initial: InitialPrior<F>,
    pub seed: u64,
    /// Give every trial the same random stream (test hook).
    pub identical_trials: bool,
}

impl<F: Scalar> GradientStudyConfig<F> {
    /// Toy-task protocol at desk scale: M = 1000, N = 10, T = 10, γ = 0.9,
    /// 20 iterations, oracle from 10⁴ samples.
    pub fn toy(seed: u64) -> Self {
        Self {
            methods: Method::STUDY.to_vec(),
            iterations: 20,
            trials: 1000,
            samples_per_iteration: 10,
            horizon: 10,
            gamma: F::of(0.9),
            step_size: F::of(0.1),
            tau_floor: F::of(DEFAULT_TAU_FLOOR),
            oracle_samples: 10_000,
            truncation_cap: F::of(DEFAULT_TRUNCATION_CAP),
            initial: InitialPrior::RandomMean { tau: F::one() },
            seed,
            identical_trials: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.trials < 2 {
            return bad("gradient study needs at least two trials");
        }
        if self.iterations == 0 || self.samples_per_iteration == 0 || self.horizon == 0 {
            return bad("iterations, samples_per_iteration and horizon must be positive");
        }
        if self.methods.is_empty() {
            return bad("no methods selected");
        }
        if !(self.gamma >= F::zero() && self.gamma < F::one()) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.step_size > F::zero()
            && self.tau_floor > F::zero()
            && self.truncation_cap > F::zero())
        {
            return bad("step_size, tau_floor and truncation_cap must be positive");
        }
        Ok(())
    }

    fn trainer_like_initial(&self, dim: usize) -> Result<HyperParams<F>> {
        crate::trainer::TrainerConfig {
            initial: self.initial.clone(),
            seed: self.seed,
            ..crate::trainer::TrainerConfig::toy(
                Method::Pgpe.config(self.truncation_cap),
                self.seed,
            )
        }
        .initial_prior(dim)
    }
}

/// Variance, squared bias and MSE of one block of the gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats<F> {
    pub var: F,
    pub bias2: F,
    pub mse: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyCell<F> {
    pub iteration: usize,
    pub method: Method,
    /// Records behind each trial's estimate.
    pub n_records: usize,
    pub eta: ErrorStats<F>,
    pub tau: ErrorStats<F>,
    /// Largest weight seen in any trial.
    pub w_max: F,
    /// Smallest weight seen in any trial.
    pub w_min: F,
    /// Per-trial maximum weight, averaged over trials.
    pub w_max_mean: F,
}

impl<F: Scalar> StudyCell<F> {
    pub fn block(&self, block: Block) -> &ErrorStats<F> {
        match block {
            Block::Eta => &self.eta,
            Block::Tau => &self.tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientStudyResult<F> {
    pub trials: usize,
    pub gamma: F,
    pub horizon: usize,
    /// Prior at each iteration (index `L − 1`).
    pub path: Vec<HyperParams<F>>,
    pub oracles: Vec<OracleGradient<F>>,
    /// One cell per (iteration, method), iteration-major.
    pub cells: Vec<StudyCell<F>>,
}

impl<F: Scalar> GradientStudyResult<F> {
    pub fn cell(&self, iteration: usize, method: Method) -> Option<&StudyCell<F>> {
        self.cells
            .iter()
            .find(|c| c.iteration == iteration && c.method == method)
    }

    pub fn final_iteration(&self) -> usize {
        self.path.len()
    }
}

struct TrialEstimate<F> {
    d_eta: Vec<F>,
    d_tau: Vec<F>,
    w_max: F,
    w_min: F,
    n_records: usize,
}

/// Measure every method along the oracle-driven path of priors.
pub fn gradient_study<F, E>(
    env: &E,
    config: &GradientStudyConfig<F>,
) -> Result<GradientStudyResult<F>>
where
    F: Scalar,
    E: Environment<F> + ?Sized,
{
    config.validate()?;
    let dim = env.spec().feature_dim;

    // The common path is driven by the oracle only, so it is fixed up front.
    let mut path = Vec::with_capacity(config.iterations);
    let mut oracles = Vec::with_capacity(config.iterations);
    let mut rho = config.trainer_like_initial(dim)?;
    for iteration in 1..=config.iterations {
        let oracle = oracle_gradient(
            env,
            &rho,
            config.oracle_samples,
            config.horizon,
            config.gamma,
            &mut stream(config.seed, &[purpose::ORACLE, iteration as u64]),
        )?;
        let next =
            update_hyperparams(&rho, &oracle.estimate, config.step_size, config.tau_floor)?.rho;
        path.push(rho);
        oracles.push(oracle);
        rho = next;
    }

    let per_trial: Vec<Vec<Vec<TrialEstimate<F>>>> = (0..config.trials)
        .into_par_iter()
        .map(|m| {
            run_trial(
                env,
                config,
                &path,
                if config.identical_trials { 0 } else { m },
            )
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(config.iterations * config.methods.len());
    for (l, oracle) in oracles.iter().enumerate() {
        for (k, &method) in config.methods.iter().enumerate() {
            let trials: Vec<&TrialEstimate<F>> = per_trial.iter().map(|t| &t[l][k]).collect();
            cells.push(StudyCell {
                iteration: l + 1,
                method,
                n_records: trials[0].n_records,
                eta: error_stats(
                    trials.iter().map(|t| t.d_eta.as_slice()),
                    &oracle.estimate.d_eta,
                ),
                tau: error_stats(
                    trials.iter().map(|t| t.d_tau.as_slice()),
                    &oracle.estimate.d_tau,
                ),
                w_max: trials
                    .iter()
                    .map(|t| t.w_max)
                    .fold(F::neg_infinity(), F::max),
                w_min: trials.iter().map(|t| t.w_min).fold(F::infinity(), F::min),
                w_max_mean: compensated_sum(trials.iter().map(|t| t.w_max))
                    / F::of_usize(trials.len()),
            });
        }
    }
    Ok(GradientStudyResult {
        trials: config.trials,
        gamma: config.gamma,
        horizon: config.horizon,
        path,
        oracles,
        cells,
    })
}

fn run_trial<F, E>(
    env: &E,
    config: &GradientStudyConfig<F>,
    path: &[HyperParams<F>],
    trial: usize,
) -> Result<Vec<Vec<TrialEstimate<F>>>>
where
    F: Scalar,
    E: Environment<F> + ?Sized,
{
    let mut dataset = Dataset::new();
    let mut out = Vec::with_capacity(path.len());
    for (l, rho) in path.iter().enumerate() {
        let iteration = l + 1;
        let batch = collect_batch(
            env,
            rho,
            config.samples_per_iteration,
            config.horizon,
            config.gamma,
            iteration,
            &mut stream(
                config.seed,
                &[purpose::TRIAL, trial as u64, iteration as u64],
            ),
        )?;
        dataset.push_batch(batch)?;
        let mut row = Vec::with_capacity(config.methods.len());
        for &method in &config.methods {
            let est_cfg = method.config(config.truncation_cap);
            let window = if est_cfg.reuses_data() {
                ReuseWindow::All
            } else {
                ReuseWindow::Last(std::num::NonZeroUsize::MIN)
            };
            let view = dataset.window(iteration, window);
            let terms = sample_terms(view, rho, est_cfg.weight_mode)?;
            let est = estimate_from_terms(&terms, est_cfg.baseline_mode);
            row.push(TrialEstimate {
                w_max: est.weight_stats.max,
                w_min: est.weight_stats.min,
                n_records: est.n_samples,
                d_eta: est.d_eta,
                d_tau: est.d_tau,
            });
        }
        out.push(row);
    }
    Ok(out)
}

/// `Var = (1/M) Σ ‖g_m − ḡ‖²`, `Bias² = ‖ḡ − g*‖²`, `MSE = (1/M) Σ ‖g_m − g*‖²`.
pub fn error_stats<'a, F: Scalar, I>(estimates: I, truth: &[F]) -> ErrorStats<F>
where
    I: IntoIterator<Item = &'a [F]>,
    I::IntoIter: Clone,
{
    let estimates = estimates.into_iter();
    let m = F::of_usize(estimates.clone().count().max(1));
    let dim = truth.len();
    let mean: Vec<F> = (0..dim)
        .map(|i| compensated_sum(estimates.clone().map(|g| g[i])) / m)
        .collect();
    let sq_dist =
        |a: &[F], b: &[F]| compensated_sum(a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)));
    ErrorStats {
        var: compensated_sum(estimates.clone().map(|g| sq_dist(g, &mean))) / m,
        bias2: sq_dist(&mean, truth),
        mse: compensated_sum(estimates.map(|g| sq_dist(g, truth))) / m,
    }
}

// ---------------------------------------------------------------------------
// Angles

/// Signed angle in degrees from `truth` to `estimate`, counterclockwise
/// positive in the `(η, τ)` plane. `None` when either vector is zero.
pub fn signed_angle_deg<F: Scalar>(truth: [F; 2], estimate: [F; 2]) -> Option<F> {
    let zero = |v: [F; 2]| v[0] == F::zero() && v[1] == F::zero();
    if zero(truth) || zero(estimate) {
        return None;
    }
    let cross = truth[0] * estimate[1] - truth[1] * estimate[0];
    let dot = truth[0] * estimate[0] + truth[1] * estimate[1];
    Some(cross.atan2(dot).to_degrees())
}

pub const ANGLE_BIN_WIDTH: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin<F> {
    pub lo: F,
    pub hi: F,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleStudyResult<F> {
    /// One entry per estimate; `None` for zero-norm estimates.
    pub angles: Vec<Option<F>>,
    pub excluded: usize,
    /// 30° bins over `[−180, 180]`; `180` itself falls in the last bin.
    pub histogram: Vec<HistogramBin<F>>,
}

impl<F: Scalar> AngleStudyResult<F> {
    pub fn valid_angles(&self) -> impl Iterator<Item = F> + '_ {
        self.angles.iter().flatten().copied()
    }

    /// Fraction of defined angles with `|angle| ≤ limit`.
    pub fn fraction_within(&self, limit: F) -> F {
        let total = self.angles.len() - self.excluded;
        if total == 0 {
            return F::zero();
        }
        F::of_usize(self.valid_angles().filter(|a| a.abs() <= limit).count()) / F::of_usize(total)
    }

    /// Bin holding the most angles (first one on ties).
    pub fn mode_bin(&self) -> Option<&HistogramBin<F>> {
        self.histogram.iter().rev().max_by_key(|b| b.count)
    }
}

/// Angles of `estimates` relative to `truth`, plus their histogram.
pub fn angle_study<F: Scalar>(truth: [F; 2], estimates: &[[F; 2]]) -> Result<AngleStudyResult<F>> {
    if truth[0] == F::zero() && truth[1] == F::zero() {
        return Err(Error::InvalidArgument("true gradient has zero norm".into()));
    }
    let angles: Vec<Option<F>> = estimates
        .iter()
        .map(|&e| signed_angle_deg(truth, e))
        .collect();
    let excluded = angles.iter().filter(|a| a.is_none()).count();
    let width = F::of(ANGLE_BIN_WIDTH);
    let n_bins = (360.0 / ANGLE_BIN_WIDTH) as usize;
    let mut histogram: Vec<HistogramBin<F>> = (0..n_bins)
        .map(|k| HistogramBin {
            lo: F::of(-180.0) + width * F::of_usize(k),
            hi: F::of(-180.0) + width * F::of_usize(k + 1),
            count: 0,
        })
        .collect();
    for a in angles.iter().flatten() {
        let k = ((*a + F::of(180.0)) / width)
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(n_bins - 1);
        histogram[k].count += 1;
    }
    Ok(AngleStudyResult {
        angles,
        excluded,
        histogram,
    })
}

/// Setup for the off-policy gradient-direction experiment on the toy task.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleExperimentConfig<F> {
    pub target: HyperParams<F>,
    pub behavior: HyperParams<F>,
    /// Off-policy samples `N'` per trial.
    pub samples: usize,
    pub trials: usize,
    pub oracle_samples: usize,
    pub horizon: usize,
    pub gamma: F,
    pub methods: Vec<Method>,
    pub truncation_cap: F,
    pub seed: u64,
}

impl<F: Scalar> AngleExperimentConfig<F> {
    /// Target `(η, τ) = (−0.8, 0.5)`, behavior `N(−1.6, 1)`, `N' = 10`, 20 trials.
    pub fn toy(seed: u64) -> Self {
        Self {
            target: HyperParams::new(vec![F::of(-0.8)], vec![F::of(0.5)]).expect("valid prior"),
            behavior: HyperParams::new(vec![F::of(-1.6)], vec![F::one()]).expect("valid prior"),
            samples: 10,
            trials: 20,
            oracle_samples: 10_000,
            horizon: 10,
            gamma: F::of(0.9),
            methods: vec![Method::NiwPgpe, Method::IwPgpe, Method::IwPgpeOb],
            truncation_cap: F::of(DEFAULT_TRUNCATION_CAP),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleExperimentResult<F> {
    pub truth: [F; 2],
    pub per_method: Vec<(Method, AngleStudyResult<F>)>,
}

/// Estimate the gradient at `target` from `trials` independent off-policy
/// batches drawn under `behavior` and compare directions with the oracle.
pub fn angle_experiment<F, E>(
    env: &E,
    config: &AngleExperimentConfig<F>,
) -> Result<AngleExperimentResult<F>>
where
    F: Scalar,
    E: Environment<F> + ?Sized,
{
    if config.target.dim() != 1 || config.behavior.dim() != 1 {
        return Err(Error::InvalidArgument(
            "angle experiment needs one-dimensional priors".into(),
        ));
    }
    if config.trials == 0 || config.samples == 0 {
        return Err(Error::InvalidArgument(
            "trials and samples must be positive".into(),
        ));
    }
    let oracle = oracle_gradient(
        env,
        &config.target,
        config.oracle_samples,
        config.horizon,
        config.gamma,
        &mut stream(config.seed, &[purpose::ORACLE]),
    )?;
    let truth = [oracle.estimate.d_eta[0], oracle.estimate.d_tau[0]];
    let per_trial: Vec<Vec<[F; 2]>> = (0..config.trials)
        .into_par_iter()
        .map(|m| {
            let batch = collect_batch(
                env,
                &config.behavior,
                config.samples,
                config.horizon,
                config.gamma,
                1,
                &mut stream(config.seed, &[purpose::BEHAVIOR, m as u64]),
            )?;
            config
                .methods
                .iter()
                .map(|method| {
                    let cfg = method.config(config.truncation_cap);
                    let terms = sample_terms(&batch, &config.target, cfg.weight_mode)?;
                    let est = estimate_from_terms(&terms, cfg.baseline_mode);
                    Ok([est.d_eta[0], est.d_tau[0]])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let per_method = config
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let estimates: Vec<[F; 2]> = per_trial.iter().map(|t| t[k]).collect();
            Ok((method, angle_study(truth, &estimates)?))
        })
        .collect::<Result<_>>()?;
    Ok(AngleExperimentResult { truth, per_method })
}

// ---------------------------------------------------------------------------
// Bound checks

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundCheck {
    /// Variance without baseline at most the upper bound.
    VarianceUpper,
    /// Variance removed by the optimal baseline at least the lower bound.
    ReductionLower,
    /// Variance removed by the optimal baseline at most the upper bound.
    ReductionUpper,
    /// Variance with optimal baseline at most its upper bound.
    BaselinedUpper,
}

impl BoundCheck {
    pub fn name(self) -> &'static str {
        match self {
            BoundCheck::VarianceUpper => "variance_upper",
            BoundCheck::ReductionLower => "reduction_lower",
            BoundCheck::ReductionUpper => "reduction_upper",
            BoundCheck::BaselinedUpper => "baselined_upper",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow<F> {
    pub iteration: usize,
    pub block: Block,
    pub check: BoundCheck,
    pub method: Method,
    /// Measured variance (or variance reduction for the reduction checks).
    pub empirical: F,
    pub bound: F,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<F> {
    pub rows: Vec<BoundRow<F>>,
}

impl<F: Scalar> BoundReport<F> {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BoundRow<F>> {
        self.rows.iter().filter(|r| !r.pass)
    }
}

/// Reward range `[alpha, beta]` assumed by the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardRange<F> {
    pub alpha: F,
    pub beta: F,
}

/// Compare the study's variances against the closed-form bounds, using the
/// largest and smallest weights seen across trials in place of the suprema.
///
/// Checks emitted per iteration and block, when the methods are present:
/// plain PGPE and IW-PGPE against the no-baseline upper bound (with
/// `w_max = 1` for the on-policy method); the IW-PGPE → IW-PGPE_OB variance
/// reduction against its lower and upper bounds; IW-PGPE_OB against the
/// baselined upper bound.
pub fn bound_check<F: Scalar>(
    study: &GradientStudyResult<F>,
    rewards: RewardRange<F>,
) -> Result<BoundReport<F>> {
    let mut rows = Vec::new();
    for (l, rho) in study.path.iter().enumerate() {
        let iteration = l + 1;
        let b = trace_b(rho);
        let inputs_for = |cell: &StudyCell<F>, unit_weights: bool| {
            let (w_max, w_min) = if unit_weights {
                (F::one(), F::one())
            } else {
                (cell.w_max, cell.w_min)
            };
            let inputs = BoundInputs {
                beta: rewards.beta,
                alpha: rewards.alpha,
                gamma: study.gamma,
                horizon: study.horizon,
                n_samples: cell.n_records,
                trace_b: b,
                w_max,
                w_min,
            };
            inputs.validate().map(|_| inputs)
        };
        for block in [Block::Eta, Block::Tau] {
            for method in [Method::Pgpe, Method::IwPgpe] {
                if let Some(cell) = study.cell(iteration, method) {
                    let inputs = inputs_for(cell, method == Method::Pgpe)?;
                    let bound = variance_upper_bound(block, &inputs);
                    let empirical = cell.block(block).var;
                    rows.push(BoundRow {
                        iteration,
                        block,
                        check: BoundCheck::VarianceUpper,
                        method,
                        empirical,
                        bound,
                        pass: empirical <= bound,
                    });
                }
            }
            if let (Some(iw), Some(ob)) = (
                study.cell(iteration, Method::IwPgpe),
                study.cell(iteration, Method::IwPgpeOb),
            ) {
                let inputs = BoundInputs {
                    w_max: iw.w_max.max(ob.w_max),
                    w_min: iw.w_min.min(ob.w_min),
                    ..inputs_for(iw, false)?
                };
                let (lower, upper) = variance_reduction_bounds(block, &inputs);
                let reduction = iw.block(block).var - ob.block(block).var;
                rows.push(BoundRow {
                    iteration,
                    block,
                    check: BoundCheck::ReductionLower,
                    method: Method::IwPgpeOb,
                    empirical: reduction,
                    bound: lower,
                    pass: reduction >= lower,
                });
                rows.push(BoundRow {
                    iteration,
                    block,
                    check: BoundCheck::ReductionUpper,
                    method: Method::IwPgpeOb,
                    empirical: reduction,
                    bound: upper,
                    pass: reduction <= upper,
                });
            }
            if let Some(ob) = study.cell(iteration, Method::IwPgpeOb) {
                let inputs = inputs_for(ob, false)?;
                let bound = ob_variance_upper_bound(block, &inputs)?;
                let empirical = ob.block(block).var;
                rows.push(BoundRow {
                    iteration,
                    block,
                    check: BoundCheck::BaselinedUpper,
                    method: Method::IwPgpeOb,
                    empirical,
                    bound,
                    pass: empirical <= bound,
                });
            }
        }
    }
    Ok(BoundReport { rows })
}
