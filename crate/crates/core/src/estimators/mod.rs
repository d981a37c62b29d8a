//! PGPE gradient estimators.
//!
//! Every estimator in the family has the form
//!
//! ```text
//! ∇_ρ Ĵ = (1/N') Σ_n (R_n − b) · w_n · ∇_ρ log p(θ_n | ρ)
//! ```
//!
//! and differs only in the weight `w_n` (one, the density ratio against the
//! record's own behavior prior, or that ratio truncated at a cap) and in the
//! constant baseline `b` (zero or the variance-minimizing plug-in estimate).

pub mod bounds;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gaussian_prior::{importance_weight, score, HyperParams, ScoreVector};
use crate::rollout::SampleRecord;
use crate::scalar::{norm_sq, CompensatedSum, Scalar};

pub use bounds::{
    excess_variance, ob_variance_upper_bound, trace_b, variance_reduction_bounds,
    variance_upper_bound, Block, BoundInputs,
};

/// Default cap for truncated importance weights.
pub const DEFAULT_TRUNCATION_CAP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMode<F> {
    /// `w ≡ 1`, current-iteration data only.
    OnPolicy,
    /// `w ≡ 1` on reused data (inconsistent; kept as a control).
    Niw,
    /// Density ratio against each record's own behavior prior.
    Iw,
    /// `min{w, cap}`.
    IwTruncated { cap: F },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    None,
    /// One scalar baseline over the stacked `(η, τ)` score.
    Optimal,
    /// Separate optimal baselines for the `η` and `τ` blocks.
    OptimalPerBlock,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig<F> {
    pub weight_mode: WeightMode<F>,
    pub baseline_mode: BaselineMode,
}

impl<F: Scalar> EstimatorConfig<F> {
    pub fn new(weight_mode: WeightMode<F>, baseline_mode: BaselineMode) -> Result<Self> {
        if let WeightMode::IwTruncated { cap } = weight_mode {
            if !(cap > F::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "truncation cap {cap} must be positive"
                )));
            }
        }
        Ok(Self {
            weight_mode,
            baseline_mode,
        })
    }

    /// Whether the estimator looks at data from earlier iterations.
    pub fn reuses_data(&self) -> bool {
        !matches!(self.weight_mode, WeightMode::OnPolicy)
    }
}

/// The named estimator variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pgpe,
    PgpeOb,
    NiwPgpe,
    NiwPgpeOb,
    IwPgpe,
    IwPgpeOb,
    TruncatedIwPgpeOb,
}

impl Method {
    /// Every variant, in display order.
    pub const ALL: [Method; 7] = [
        Method::Pgpe,
        Method::PgpeOb,
        Method::NiwPgpe,
        Method::NiwPgpeOb,
        Method::IwPgpe,
        Method::IwPgpeOb,
        Method::TruncatedIwPgpeOb,
    ];

    /// The six untruncated variants compared in the gradient studies.
    pub const STUDY: [Method; 6] = [
        Method::Pgpe,
        Method::PgpeOb,
        Method::NiwPgpe,
        Method::NiwPgpeOb,
        Method::IwPgpe,
        Method::IwPgpeOb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pgpe => "PGPE",
            Method::PgpeOb => "PGPE_OB",
            Method::NiwPgpe => "NIW-PGPE",
            Method::NiwPgpeOb => "NIW-PGPE_OB",
            Method::IwPgpe => "IW-PGPE",
            Method::IwPgpeOb => "IW-PGPE_OB",
            Method::TruncatedIwPgpeOb => "TRUNCATED-IW-PGPE_OB",
        }
    }

    /// Config key accepted by the CLI.
    pub fn key(self) -> &'static str {
        match self {
            Method::Pgpe => "pgpe",
            Method::PgpeOb => "pgpe-ob",
            Method::NiwPgpe => "niw-pgpe",
            Method::NiwPgpeOb => "niw-pgpe-ob",
            Method::IwPgpe => "iw-pgpe",
            Method::IwPgpeOb => "iw-pgpe-ob",
            Method::TruncatedIwPgpeOb => "truncated-iw-pgpe-ob",
        }
    }

    pub fn weight_mode_name(self) -> &'static str {
        match self {
            Method::Pgpe | Method::PgpeOb => "on_policy",
            Method::NiwPgpe | Method::NiwPgpeOb => "niw",
            Method::IwPgpe | Method::IwPgpeOb => "iw",
            Method::TruncatedIwPgpeOb => "iw_truncated",
        }
    }

    pub fn baseline_mode_name(self) -> &'static str {
        match self {
            Method::Pgpe | Method::NiwPgpe | Method::IwPgpe => "none",
            _ => "optimal",
        }
    }

    /// Estimator configuration; `cap` only matters for the truncated variant.
    pub fn config<F: Scalar>(self, cap: F) -> EstimatorConfig<F> {
        let weight_mode = match self {
            Method::Pgpe | Method::PgpeOb => WeightMode::OnPolicy,
            Method::NiwPgpe | Method::NiwPgpeOb => WeightMode::Niw,
            Method::IwPgpe | Method::IwPgpeOb => WeightMode::Iw,
            Method::TruncatedIwPgpeOb => WeightMode::IwTruncated { cap },
        };
        let baseline_mode = match self {
            Method::Pgpe | Method::NiwPgpe | Method::IwPgpe => BaselineMode::None,
            _ => BaselineMode::Optimal,
        };
        EstimatorConfig {
            weight_mode,
            baseline_mode,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| s.eq_ignore_ascii_case(m.key()) || s.eq_ignore_ascii_case(m.name()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Per-record ingredients of an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTerm<F> {
    pub weight: F,
    pub ret: F,
    pub score: ScoreVector<F>,
}

/// Weight, return and target score of each record.
pub fn sample_terms<F: Scalar>(
    records: &[SampleRecord<F>],
    target: &HyperParams<F>,
    mode: WeightMode<F>,
) -> Result<Vec<SampleTerm<F>>> {
    records
        .iter()
        .enumerate()
        .map(|(n, rec)| {
            let weight = match mode {
                WeightMode::OnPolicy | WeightMode::Niw => F::one(),
                WeightMode::Iw | WeightMode::IwTruncated { .. } => {
                    let w = importance_weight(target, &rec.behavior, &rec.theta).map_err(|e| {
                        Error::NonFiniteRecordWeight {
                            record: n,
                            reason: e.to_string(),
                        }
                    })?;
                    match mode {
                        WeightMode::IwTruncated { cap } => w.min(cap),
                        _ => w,
                    }
                }
            };
            Ok(SampleTerm {
                weight,
                ret: rec.ret,
                score: score(target, &rec.theta)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightStats<F> {
    pub min: F,
    pub max: F,
    pub mean: F,
}

impl<F: Scalar> WeightStats<F> {
    pub fn of(terms: &[SampleTerm<F>]) -> Self {
        let mut min = F::infinity();
        let mut max = F::neg_infinity();
        let mut sum = CompensatedSum::new();
        for t in terms {
            min = min.min(t.weight);
            max = max.max(t.weight);
            sum.add(t.weight);
        }
        Self {
            min,
            max,
            mean: sum.value() / F::of_usize(terms.len().max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineEstimate<F> {
    pub value: F,
    /// The denominator vanished and the baseline fell back to zero.
    pub degenerate: bool,
}

/// `b̂ = Σ R w² g / Σ w² g`, with `g` the squared score norm over `block`
/// (`None` for the stacked `(η, τ)` vector).
pub fn optimal_baseline_from_terms<F: Scalar>(
    terms: &[SampleTerm<F>],
    block: Option<Block>,
) -> BaselineEstimate<F> {
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for t in terms {
        let g = match block {
            None => t.score.norm_sq(),
            Some(Block::Eta) => t.score.eta_norm_sq(),
            Some(Block::Tau) => t.score.tau_norm_sq(),
        };
        let c = t.weight * t.weight * g;
        num.add(t.ret * c);
        den.add(c);
    }
    let den = den.value();
    if !(den > F::min_positive_value()) || !den.is_finite() {
        return BaselineEstimate {
            value: F::zero(),
            degenerate: true,
        };
    }
    BaselineEstimate {
        value: num.value() / den,
        degenerate: false,
    }
}

/// Plug-in optimal constant baseline over the given records.
pub fn optimal_baseline<F: Scalar>(
    records: &[SampleRecord<F>],
    target: &HyperParams<F>,
    config: &EstimatorConfig<F>,
) -> Result<BaselineEstimate<F>> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let terms = sample_terms(records, target, config.weight_mode)?;
    Ok(optimal_baseline_from_terms(&terms, None))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate<F> {
    pub d_eta: Vec<F>,
    pub d_tau: Vec<F>,
    /// Baseline subtracted from the returns (the `η`-block one when per-block).
    pub baseline_used: F,
    /// Baseline used for the `τ` block; equals `baseline_used` unless per-block.
    pub baseline_tau: F,
    pub baseline_degenerate: bool,
    pub n_samples: usize,
    pub weight_stats: WeightStats<F>,
}

impl<F: Scalar> GradientEstimate<F> {
    /// `[d_eta…, d_tau…]`.
    pub fn stacked(&self) -> Vec<F> {
        self.d_eta.iter().chain(&self.d_tau).copied().collect()
    }

    pub fn norm(&self) -> F {
        (norm_sq(&self.d_eta) + norm_sq(&self.d_tau)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.d_eta.iter().chain(&self.d_tau).all(|v| v.is_finite())
    }
}

/// `(1/N) Σ (R − b) w ∇ log p` for given per-block baselines.
pub fn gradient_from_terms<F: Scalar>(
    terms: &[SampleTerm<F>],
    b_eta: F,
    b_tau: F,
) -> (Vec<F>, Vec<F>) {
    let dim = terms.first().map_or(0, |t| t.score.d_eta.len());
    let mut eta = vec![CompensatedSum::new(); dim];
    let mut tau = vec![CompensatedSum::new(); dim];
    for t in terms {
        let ce = (t.ret - b_eta) * t.weight;
        let ct = (t.ret - b_tau) * t.weight;
        for i in 0..dim {
            eta[i].add(ce * t.score.d_eta[i]);
            tau[i].add(ct * t.score.d_tau[i]);
        }
    }
    let n = F::of_usize(terms.len().max(1));
    (
        eta.iter().map(|s| s.value() / n).collect(),
        tau.iter().map(|s| s.value() / n).collect(),
    )
}

/// Estimate `∇_ρ J(ρ)` at `target` from the given records.
pub fn estimate_gradient<F: Scalar>(
    records: &[SampleRecord<F>],
    target: &HyperParams<F>,
    config: &EstimatorConfig<F>,
) -> Result<GradientEstimate<F>> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let terms = sample_terms(records, target, config.weight_mode)?;
    Ok(estimate_from_terms(&terms, config.baseline_mode))
}

pub fn estimate_from_terms<F: Scalar>(
    terms: &[SampleTerm<F>],
    baseline_mode: BaselineMode,
) -> GradientEstimate<F> {
    let (b_eta, b_tau, degenerate) = match baseline_mode {
        BaselineMode::None => (F::zero(), F::zero(), false),
        BaselineMode::Optimal => {
            let b = optimal_baseline_from_terms(terms, None);
            (b.value, b.value, b.degenerate)
        }
        BaselineMode::OptimalPerBlock => {
            let be = optimal_baseline_from_terms(terms, Some(Block::Eta));
            let bt = optimal_baseline_from_terms(terms, Some(Block::Tau));
            (be.value, bt.value, be.degenerate || bt.degenerate)
        }
    };
    let (d_eta, d_tau) = gradient_from_terms(terms, b_eta, b_tau);
    GradientEstimate {
        d_eta,
        d_tau,
        baseline_used: b_eta,
        baseline_tau: b_tau,
        baseline_degenerate: degenerate,
        n_samples: terms.len(),
        weight_stats: WeightStats::of(terms),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::ToyEnv;
    use crate::gaussian_prior::PolicyParams;
    use crate::rng::stream;
    use crate::rollout::collect_batch;
    use std::sync::Arc;

    fn record(theta: f64, ret: f64, behavior: &HyperParams<f64>) -> SampleRecord<f64> {
        SampleRecord::new(
            PolicyParams::new(vec![theta]).unwrap(),
            ret,
            Arc::new(behavior.clone()),
            1,
        )
        .unwrap()
    }

    #[test]
    fn single_record_plug_in() {
        let rho = HyperParams::standard(1).unwrap();
        let est =
            estimate_gradient(&[record(0.5, 2.0, &rho)], &rho, &Method::Pgpe.config(2.0)).unwrap();
        assert_eq!(est.d_eta, vec![1.0]);
        assert_eq!(est.d_tau, vec![-1.5]);
        assert_eq!(est.baseline_used, 0.0);
        assert_eq!(est.n_samples, 1);
        assert_eq!(
            est.weight_stats,
            WeightStats {
                min: 1.0,
                max: 1.0,
                mean: 1.0
            }
        );
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let rho = HyperParams::standard(1).unwrap();
        assert_eq!(
            estimate_gradient(&[], &rho, &Method::IwPgpe.config(2.0)),
            Err(Error::EmptyDataset)
        );
        assert_eq!(
            optimal_baseline(&[], &rho, &Method::IwPgpe.config(2.0)),
            Err(Error::EmptyDataset)
        );
    }

    #[test]
    fn iw_with_matching_behavior_equals_niw() {
        let env = ToyEnv::<f64>::new();
        let rho = HyperParams::new(vec![-0.3], vec![0.8]).unwrap();
        let recs = collect_batch(&env, &rho, 50, 10, 0.9, 1, &mut stream(1, &[])).unwrap();
        for (iw, niw) in [
            (Method::IwPgpe, Method::NiwPgpe),
            (Method::IwPgpeOb, Method::NiwPgpeOb),
        ] {
            let a = estimate_gradient(&recs, &rho, &iw.config(2.0)).unwrap();
            let b = estimate_gradient(&recs, &rho, &niw.config(2.0)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn infinite_cap_truncation_is_bitwise_iw() {
        let env = ToyEnv::<f64>::new();
        let behavior = HyperParams::new(vec![-1.0], vec![1.0]).unwrap();
        let target = HyperParams::new(vec![0.0], vec![0.6]).unwrap();
        let recs = collect_batch(&env, &behavior, 100, 10, 0.9, 1, &mut stream(2, &[])).unwrap();
        let iw = estimate_gradient(&recs, &target, &Method::IwPgpeOb.config(2.0)).unwrap();
        let cfg = EstimatorConfig::new(
            WeightMode::IwTruncated { cap: f64::INFINITY },
            BaselineMode::Optimal,
        )
        .unwrap();
        assert_eq!(estimate_gradient(&recs, &target, &cfg).unwrap(), iw);
        let capped =
            estimate_gradient(&recs, &target, &Method::TruncatedIwPgpeOb.config(2.0)).unwrap();
        assert!(capped.weight_stats.max <= 2.0);
        let raw = sample_terms(&recs, &target, WeightMode::Iw).unwrap();
        let cut = sample_terms(&recs, &target, WeightMode::IwTruncated { cap: 2.0 }).unwrap();
        assert!(raw.iter().zip(&cut).all(|(r, c)| c.weight <= r.weight));
    }

    #[test]
    fn nonpositive_cap_rejected() {
        assert!(
            EstimatorConfig::new(WeightMode::IwTruncated { cap: 0.0 }, BaselineMode::None).is_err()
        );
        assert!(EstimatorConfig::new(
            WeightMode::IwTruncated { cap: f64::NAN },
            BaselineMode::None
        )
        .is_err());
    }

    #[test]
    fn non_finite_weight_names_record() {
        let target = HyperParams::new(vec![0.0], vec![1.0]).unwrap();
        let behavior = HyperParams::new(vec![0.0], vec![1e-4]).unwrap();
        let recs = vec![record(0.0, 1.0, &behavior), record(1.0, 1.0, &behavior)];
        match estimate_gradient(&recs, &target, &Method::IwPgpe.config(2.0)) {
            Err(Error::NonFiniteRecordWeight { record, .. }) => assert_eq!(record, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn baseline_of_constant_returns_is_that_constant() {
        let env = ToyEnv::<f64>::new();
        let behavior = HyperParams::new(vec![0.4], vec![1.0]).unwrap();
        let target = HyperParams::new(vec![0.0], vec![0.9]).unwrap();
        let mut recs = collect_batch(&env, &behavior, 40, 5, 0.9, 1, &mut stream(3, &[])).unwrap();
        for r in &mut recs {
            r.ret = 4.25;
        }
        let b = optimal_baseline(&recs, &target, &Method::IwPgpeOb.config(2.0)).unwrap();
        assert!((b.value - 4.25).abs() < 1e-12);
        assert!(!b.degenerate);
    }

    #[test]
    fn unit_weights_reduce_to_plain_score_weighted_average() {
        let env = ToyEnv::<f64>::new();
        let rho = HyperParams::new(vec![0.1], vec![0.7]).unwrap();
        let recs = collect_batch(&env, &rho, 30, 10, 0.9, 1, &mut stream(4, &[])).unwrap();
        let b = optimal_baseline(&recs, &rho, &Method::PgpeOb.config(2.0)).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for r in &recs {
            let g = score(&rho, &r.theta).unwrap().norm_sq();
            num += r.ret * g;
            den += g;
        }
        assert!((b.value - num / den).abs() < 1e-10);
    }

    #[test]
    fn degenerate_baseline_falls_back_to_zero() {
        // θ = η ± τ in every dimension makes d_tau vanish; θ = η makes d_eta vanish
        // but not d_tau, so use a hand-built term list with zero scores.
        let terms = vec![SampleTerm {
            weight: 1.0,
            ret: 3.0,
            score: ScoreVector {
                d_eta: vec![0.0],
                d_tau: vec![0.0],
            },
        }];
        let b = optimal_baseline_from_terms(&terms, None);
        assert_eq!(
            b,
            BaselineEstimate {
                value: 0.0,
                degenerate: true
            }
        );
        let est = estimate_from_terms(&terms, BaselineMode::Optimal);
        assert!(est.baseline_degenerate);
        assert_eq!(est.baseline_used, 0.0);
    }

    #[test]
    fn per_block_baseline_differs_from_shared() {
        let env = ToyEnv::<f64>::new();
        let rho = HyperParams::new(vec![-0.5], vec![1.0]).unwrap();
        let recs = collect_batch(&env, &rho, 200, 10, 0.9, 1, &mut stream(5, &[])).unwrap();
        let terms = sample_terms(&recs, &rho, WeightMode::OnPolicy).unwrap();
        let shared = estimate_from_terms(&terms, BaselineMode::Optimal);
        let split = estimate_from_terms(&terms, BaselineMode::OptimalPerBlock);
        assert_eq!(shared.baseline_used, shared.baseline_tau);
        assert_ne!(split.baseline_used, split.baseline_tau);
    }

    #[test]
    fn method_roster() {
        assert_eq!(Method::ALL.len(), 7);
        for m in Method::ALL {
            assert_eq!(m.key().parse::<Method>().unwrap(), m);
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("reinforce".parse::<Method>().is_err());
        assert!(!Method::Pgpe.config::<f64>(2.0).reuses_data());
        assert!(Method::NiwPgpe.config::<f64>(2.0).reuses_data());
    }
}
