//! Trajectory generation, discounted returns and the reusable sample store.

use std::io::{BufRead, Write};
use std::num::NonZeroUsize;
use std::sync::Arc;

use rand::Rng;

use crate::environments::{act, EnvState, Environment};
use crate::error::{Error, Result};
use crate::gaussian_prior::{sample_params, HyperParams, PolicyParams};
use crate::scalar::{CompensatedSum, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<F> {
    pub state: EnvState<F>,
    pub action: F,
    pub reward: F,
    pub next_state: EnvState<F>,
}

/// A fixed-length episode together with its discounted return.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<F> {
    steps: Vec<Transition<F>>,
    discounted_return: F,
}

impl<F: Scalar> Trajectory<F> {
    pub fn steps(&self) -> &[Transition<F>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn discounted_return(&self) -> F {
        self.discounted_return
    }

    pub fn rewards(&self) -> impl Iterator<Item = F> + '_ {
        self.steps.iter().map(|t| t.reward)
    }
}

/// `Σ_t γ^(t−1) r_t`.
pub fn discounted_return<F: Scalar>(rewards: &[F], gamma: F) -> Result<F> {
    if rewards.is_empty() {
        return Err(Error::EmptyRewards);
    }
    check_gamma(gamma)?;
    let mut acc = CompensatedSum::new();
    let mut discount = F::one();
    for &r in rewards {
        acc.add(discount * r);
        discount *= gamma;
    }
    Ok(acc.value())
}

fn check_gamma<F: Scalar>(gamma: F) -> Result<()> {
    if !(gamma >= F::zero() && gamma < F::one()) {
        return Err(Error::InvalidArgument(format!(
            "discount {gamma} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Roll out the deterministic controller `θ` for exactly `horizon` steps.
pub fn generate_trajectory<F, E, R>(
    env: &E,
    theta: &PolicyParams<F>,
    horizon: usize,
    gamma: F,
    rng: &mut R,
) -> Result<Trajectory<F>>
where
    F: Scalar,
    E: Environment<F> + ?Sized,
    R: Rng + ?Sized,
{
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let feature_dim = env.spec().feature_dim;
    if theta.dim() != feature_dim {
        return Err(Error::DimensionMismatch {
            expected: feature_dim,
            found: theta.dim(),
        });
    }
    let mut state = env.initial_state(rng);
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let action = act(theta, &env.features(&state))?;
        let (next_state, reward) = env.step(&state, action, rng);
        steps.push(Transition {
            state,
            action,
            reward,
            next_state: next_state.clone(),
        });
        state = next_state;
    }
    let rewards: Vec<F> = steps.iter().map(|t| t.reward).collect();
    let discounted_return = discounted_return(&rewards, gamma)?;
    Ok(Trajectory {
        steps,
        discounted_return,
    })
}

/// One reusable sample: `θ`, its episode, the prior it was drawn from and the
/// iteration (1-based) that collected it.
///
/// Records loaded from the text format carry only the return; `trajectory`
/// is then `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord<F> {
    pub theta: PolicyParams<F>,
    pub ret: F,
    pub trajectory: Option<Trajectory<F>>,
    pub behavior: Arc<HyperParams<F>>,
    pub iteration: usize,
}

impl<F: Scalar> SampleRecord<F> {
    pub fn new(
        theta: PolicyParams<F>,
        ret: F,
        behavior: Arc<HyperParams<F>>,
        iteration: usize,
    ) -> Result<Self> {
        if iteration == 0 {
            return Err(Error::InvalidArgument("iteration index starts at 1".into()));
        }
        if theta.dim() != behavior.dim() {
            return Err(Error::DimensionMismatch {
                expected: behavior.dim(),
                found: theta.dim(),
            });
        }
        if !ret.is_finite() {
            return Err(Error::NonFinite("return".into()));
        }
        Ok(Self {
            theta,
            ret,
            trajectory: None,
            behavior,
            iteration,
        })
    }
}

/// Draw `n` fresh `θ ~ rho` and roll each out once.
pub fn collect_batch<F, E, R>(
    env: &E,
    rho: &HyperParams<F>,
    n: usize,
    horizon: usize,
    gamma: F,
    iteration: usize,
    rng: &mut R,
) -> Result<Vec<SampleRecord<F>>>
where
    F: Scalar,
    E: Environment<F> + ?Sized,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    let behavior = Arc::new(rho.clone());
    (0..n)
        .map(|_| {
            let theta = sample_params(rho, rng);
            let trajectory = generate_trajectory(env, &theta, horizon, gamma, rng)?;
            let mut record = SampleRecord::new(
                theta,
                trajectory.discounted_return(),
                Arc::clone(&behavior),
                iteration,
            )?;
            record.trajectory = Some(trajectory);
            Ok(record)
        })
        .collect()
}

/// How many past iterations of data an estimator may reuse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReuseWindow {
    All,
    /// Only the last `k` iterations, the current one included.
    Last(NonZeroUsize),
}

impl ReuseWindow {
    pub fn last(k: usize) -> Result<Self> {
        NonZeroUsize::new(k)
            .map(ReuseWindow::Last)
            .ok_or_else(|| Error::InvalidArgument("reuse window must be at least 1".into()))
    }
}

/// Records of every iteration so far, ordered by iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset<F> {
    records: Vec<SampleRecord<F>>,
}

impl<F: Scalar> Dataset<F> {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
        }
    }

    /// Append one iteration's batch.
    ///
    /// The batch must be tagged with a single iteration no earlier than the
    /// last stored one, and share one behavior prior.
    pub fn push_batch(&mut self, batch: Vec<SampleRecord<F>>) -> Result<()> {
        let Some(first) = batch.first() else {
            return Ok(());
        };
        let iteration = first.iteration;
        if let Some(last) = self.records.last() {
            if iteration < last.iteration {
                return Err(Error::InvalidArgument(format!(
                    "batch for iteration {iteration} after iteration {}",
                    last.iteration
                )));
            }
            if iteration == last.iteration && *last.behavior != *first.behavior {
                return Err(Error::InvalidArgument(format!(
                    "iteration {iteration} already collected under a different prior"
                )));
            }
        }
        if batch
            .iter()
            .any(|r| r.iteration != iteration || *r.behavior != *first.behavior)
        {
            return Err(Error::InvalidArgument(
                "records in one batch must share iteration and behavior prior".into(),
            ));
        }
        self.records.extend(batch);
        Ok(())
    }

    pub fn records(&self) -> &[SampleRecord<F>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn latest_iteration(&self) -> Option<usize> {
        self.records.last().map(|r| r.iteration)
    }

    /// Records with iteration in `(current − k, current]`, or everything up to
    /// `current` for [`ReuseWindow::All`].
    pub fn window(&self, current_iteration: usize, window: ReuseWindow) -> &[SampleRecord<F>] {
        reuse_window(&self.records, current_iteration, window)
    }
}

/// Contiguous view of the records a reuse window admits.
///
/// `records` must be ordered by iteration, as [`Dataset`] guarantees.
pub fn reuse_window<F>(
    records: &[SampleRecord<F>],
    current_iteration: usize,
    window: ReuseWindow,
) -> &[SampleRecord<F>] {
    let end = records.partition_point(|r| r.iteration <= current_iteration);
    let start = match window {
        ReuseWindow::All => 0,
        ReuseWindow::Last(k) => {
            let oldest = current_iteration.saturating_sub(k.get());
            records[..end].partition_point(|r| r.iteration <= oldest)
        }
    };
    &records[start..end]
}

// ---------------------------------------------------------------------------
// Text serialization
//
// Line-oriented, comma-separated, one record per line:
//
//     iteration,dim,theta_1..theta_dim,eta_1..eta_dim,tau_1..tau_dim,return
//
// Lines starting with '#' are comments; the writer emits a version header.
// Floats use Rust's shortest round-trip formatting.

pub const DATASET_HEADER: &str =
    "# pgpe-dataset v1: iteration,dim,theta[dim],eta[dim],tau[dim],return";

pub fn write_dataset<F: Scalar, W: Write>(records: &[SampleRecord<F>], mut out: W) -> Result<()> {
    writeln!(out, "{DATASET_HEADER}")?;
    for r in records {
        let mut line = format!("{},{}", r.iteration, r.theta.dim());
        for v in r
            .theta
            .theta()
            .iter()
            .chain(r.behavior.eta())
            .chain(r.behavior.tau())
        {
            line.push(',');
            line.push_str(&v.to_string());
        }
        line.push(',');
        line.push_str(&r.ret.to_string());
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset<F: Scalar + std::str::FromStr, R: BufRead>(input: R) -> Result<Dataset<F>> {
    let mut dataset = Dataset::new();
    let mut pending: Vec<SampleRecord<F>> = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| Error::Parse {
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(bad("expected iteration and dimension".into()));
        }
        let iteration: usize = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad iteration `{}`", fields[0])))?;
        let dim: usize = fields[1]
            .parse()
            .map_err(|_| bad(format!("bad dimension `{}`", fields[1])))?;
        if fields.len() != 3 + 3 * dim {
            return Err(bad(format!(
                "expected {} fields, found {}",
                3 + 3 * dim,
                fields.len()
            )));
        }
        let nums: Vec<F> = fields[2..]
            .iter()
            .map(|s| s.parse::<F>().map_err(|_| bad(format!("bad number `{s}`"))))
            .collect::<Result<_>>()?;
        let theta = PolicyParams::new(nums[..dim].to_vec()).map_err(|e| bad(e.to_string()))?;
        let behavior =
            HyperParams::new(nums[dim..2 * dim].to_vec(), nums[2 * dim..3 * dim].to_vec())
                .map_err(|e| bad(e.to_string()))?;
        let record = SampleRecord::new(theta, nums[3 * dim], Arc::new(behavior), iteration)
            .map_err(|e| bad(e.to_string()))?;
        // group consecutive records of one iteration, sharing the prior allocation
        match pending.first() {
            Some(p) if p.iteration == record.iteration && *p.behavior == *record.behavior => {
                let behavior = Arc::clone(&p.behavior);
                pending.push(SampleRecord { behavior, ..record });
            }
            _ => {
                if !pending.is_empty() {
                    dataset
                        .push_batch(std::mem::take(&mut pending))
                        .map_err(|e| bad(e.to_string()))?;
                }
                pending.push(record);
            }
        }
    }
    if !pending.is_empty() {
        dataset.push_batch(pending)?;
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{MountainCar, ToyEnv};
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn geometric(c: f64, gamma: f64, t: i32) -> f64 {
        c * (1.0 - gamma.powi(t)) / (1.0 - gamma)
    }

    #[test]
    fn discounted_return_examples() {
        assert_relative_eq!(
            discounted_return(&[1.5; 10], 0.9).unwrap(),
            geometric(1.5, 0.9, 10),
            epsilon = 1e-12
        );
        assert_eq!(discounted_return(&[3.0, 5.0, 7.0], 0.0).unwrap(), 3.0);
        assert_relative_eq!(
            discounted_return(&[1.0, -1.0, 1.0], 0.9).unwrap(),
            0.91,
            epsilon = 1e-15
        );
        assert_eq!(discounted_return::<f64>(&[], 0.9), Err(Error::EmptyRewards));
        assert!(discounted_return(&[1.0], 1.0).is_err());
    }

    #[test]
    fn deterministic_toy_rollout_has_constant_reward() {
        let env = ToyEnv::<f64>::with_noise(0.0).with_fixed_start(0.0);
        let theta = PolicyParams::new(vec![0.0]).unwrap();
        let traj = generate_trajectory(&env, &theta, 10, 0.9, &mut stream(0, &[])).unwrap();
        assert_eq!(traj.len(), 10);
        assert!(traj.rewards().all(|r| r == 2.0));
        assert_relative_eq!(
            traj.discounted_return(),
            geometric(2.0, 0.9, 10),
            epsilon = 1e-12
        );
    }

    #[test]
    fn single_step_return_is_first_reward() {
        let env = ToyEnv::<f64>::new();
        let theta = PolicyParams::new(vec![-0.4]).unwrap();
        let traj = generate_trajectory(&env, &theta, 1, 0.9, &mut stream(1, &[])).unwrap();
        assert_eq!(traj.discounted_return(), traj.steps()[0].reward);
    }

    #[test]
    fn rollouts_are_reproducible_and_cached_return_matches() {
        let env = MountainCar::<f64>::new();
        let theta = PolicyParams::new((0..12).map(|i| i as f64 * 0.1 - 0.5).collect()).unwrap();
        let a = generate_trajectory(&env, &theta, 40, 0.95, &mut stream(5, &[])).unwrap();
        let b = generate_trajectory(&env, &theta, 40, 0.95, &mut stream(5, &[])).unwrap();
        assert_eq!(a, b);
        let rewards: Vec<f64> = a.rewards().collect();
        assert!((discounted_return(&rewards, 0.95).unwrap() - a.discounted_return()).abs() < 1e-12);
        // actions come from the linear controller on the recorded states
        for t in a.steps() {
            let expected = act(&theta, &env.features(&t.state)).unwrap();
            assert_eq!(t.action, expected);
        }
    }

    #[test]
    fn rollout_rejects_wrong_dimension() {
        let env = MountainCar::<f64>::new();
        let theta = PolicyParams::new(vec![0.0]).unwrap();
        assert!(generate_trajectory(&env, &theta, 40, 0.95, &mut stream(0, &[])).is_err());
    }

    #[test]
    fn collect_batch_tags_records() {
        let env = ToyEnv::<f64>::new();
        let rho = HyperParams::new(vec![0.1], vec![0.7]).unwrap();
        let batch = collect_batch(&env, &rho, 3, 10, 0.9, 4, &mut stream(2, &[])).unwrap();
        assert_eq!(batch.len(), 3);
        assert!(batch.iter().all(|r| *r.behavior == rho && r.iteration == 4));
        assert!(batch
            .iter()
            .all(|r| r.trajectory.as_ref().unwrap().len() == 10));
        assert!(collect_batch(&env, &rho, 0, 10, 0.9, 4, &mut stream(2, &[])).is_err());
    }

    #[test]
    fn disjoint_streams_give_disjoint_draws() {
        let env = ToyEnv::<f64>::new();
        let rho = HyperParams::standard(1).unwrap();
        let a = collect_batch(&env, &rho, 5, 10, 0.9, 1, &mut stream(2, &[1])).unwrap();
        let b = collect_batch(&env, &rho, 5, 10, 0.9, 1, &mut stream(2, &[2])).unwrap();
        for ra in &a {
            assert!(b.iter().all(|rb| rb.theta != ra.theta));
        }
    }

    #[test]
    fn toy_returns_respect_reward_bounds() {
        let env = ToyEnv::<f64>::new();
        let rho = HyperParams::new(vec![-0.5], vec![1.0]).unwrap();
        let batch = collect_batch(&env, &rho, 500, 10, 0.9, 1, &mut stream(3, &[])).unwrap();
        let (lo, hi) = (geometric(1.0, 0.9, 10), geometric(2.0, 0.9, 10));
        assert!(batch.iter().all(|r| r.ret >= lo && r.ret <= hi + 1e-12));
    }

    #[test]
    fn mean_return_is_self_consistent() {
        let env = ToyEnv::<f64>::new();
        let rho = HyperParams::standard(1).unwrap();
        let small: Vec<f64> = collect_batch(&env, &rho, 10_000, 10, 0.9, 1, &mut stream(4, &[1]))
            .unwrap()
            .iter()
            .map(|r| r.ret)
            .collect();
        let big: Vec<f64> = collect_batch(&env, &rho, 100_000, 10, 0.9, 1, &mut stream(4, &[2]))
            .unwrap()
            .iter()
            .map(|r| r.ret)
            .collect();
        let (m1, se1) = crate::scalar::mean_and_se(&small);
        let (m2, se2) = crate::scalar::mean_and_se(&big);
        assert!((m1 - m2).abs() < 3.0 * (se1 * se1 + se2 * se2).sqrt());
    }

    fn dataset_with_iterations(iters: std::ops::RangeInclusive<usize>) -> Dataset<f64> {
        let env = ToyEnv::<f64>::new();
        let mut ds = Dataset::new();
        for it in iters {
            let rho = HyperParams::new(vec![it as f64 * 0.1], vec![1.0]).unwrap();
            ds.push_batch(
                collect_batch(&env, &rho, 2, 3, 0.9, it, &mut stream(it as u64, &[])).unwrap(),
            )
            .unwrap();
        }
        ds
    }

    #[test]
    fn reuse_window_examples() {
        let ds = dataset_with_iterations(1..=10);
        assert_eq!(ds.window(10, ReuseWindow::All), ds.records());
        let last5 = ds.window(10, ReuseWindow::last(5).unwrap());
        assert_eq!(last5.len(), 10);
        assert!(last5.iter().all(|r| (6..=10).contains(&r.iteration)));
        let last1 = ds.window(10, ReuseWindow::last(1).unwrap());
        assert!(last1.iter().all(|r| r.iteration == 10));
        assert_eq!(last1.len(), 2);
        // an earlier "current" iteration excludes later records
        let at4 = ds.window(4, ReuseWindow::last(2).unwrap());
        assert!(at4.iter().map(|r| r.iteration).eq([3, 3, 4, 4]));
        assert!(ReuseWindow::last(0).is_err());
    }

    #[test]
    fn push_batch_enforces_grouping() {
        let mut ds = dataset_with_iterations(3..=4);
        let env = ToyEnv::<f64>::new();
        let rho = HyperParams::standard(1).unwrap();
        let old = collect_batch(&env, &rho, 2, 3, 0.9, 2, &mut stream(0, &[])).unwrap();
        assert!(ds.push_batch(old).is_err());
        let mut mixed = collect_batch(&env, &rho, 1, 3, 0.9, 5, &mut stream(0, &[])).unwrap();
        mixed.extend(collect_batch(&env, &rho, 1, 3, 0.9, 6, &mut stream(0, &[])).unwrap());
        assert!(ds.push_batch(mixed).is_err());
    }

    #[test]
    fn text_format_round_trip() {
        let ds = dataset_with_iterations(1..=3);
        let mut buf = Vec::new();
        write_dataset(ds.records(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(DATASET_HEADER));
        let back: Dataset<f64> = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back.len(), ds.len());
        for (a, b) in back.records().iter().zip(ds.records()) {
            assert_eq!(
                (a.iteration, &a.theta, a.ret, &*a.behavior),
                (b.iteration, &b.theta, b.ret, &*b.behavior)
            );
        }
    }

    #[test]
    fn text_format_reports_bad_line() {
        let text = "# header\n1,1,0.5,0,1,2.0\n2,1,0.5,0,1\n";
        match read_dataset::<f64, _>(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn window_all_preserves_count_and_order(batches in 1usize..8, per in 1usize..4) {
            let env = ToyEnv::<f64>::new();
            let mut ds = Dataset::new();
            let mut thetas = Vec::new();
            for it in 1..=batches {
                let rho = HyperParams::standard(1).unwrap();
                let b = collect_batch(&env, &rho, per, 2, 0.9, it, &mut stream(it as u64, &[7])).unwrap();
                thetas.extend(b.iter().map(|r| r.theta.clone()));
                ds.push_batch(b).unwrap();
            }
            let view = ds.window(batches, ReuseWindow::All);
            prop_assert_eq!(view.len(), batches * per);
            prop_assert!(view.iter().map(|r| &r.theta).eq(thetas.iter()));
        }

        #[test]
        fn return_bounds_hold(rewards in proptest::collection::vec(-2.0..3.0f64, 1..30), gamma in 0.0..0.99f64) {
            let (lo, hi) = (-2.0, 3.0);
            let r = discounted_return(&rewards, gamma).unwrap();
            let t = rewards.len() as i32;
            prop_assert!(r >= geometric(lo, gamma, t) - 1e-9);
            prop_assert!(r <= geometric(hi, gamma, t) + 1e-9);
        }
    }
}
