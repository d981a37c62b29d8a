//! Fixed-horizon environments driven by a deterministic linear controller.
//!
//! Two tasks are provided: a one-dimensional linear-Gaussian toy problem and
//! a continuous mountain car whose policy acts on twelve Gaussian-kernel
//! features of `(x, ẋ)`. Both implement [`Environment`], which is all the
//! rollout code needs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian_prior::PolicyParams;
use crate::scalar::{dot, Scalar};

/// Environment state: the toy state is one scalar, the car state is `(x, ẋ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState<F> {
    pub s: Vec<F>,
}

impl<F: Scalar> EnvState<F> {
    pub fn new(s: Vec<F>) -> Self {
        Self { s }
    }
}

/// Physical constants of a task.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics<F> {
    Toy { noise_std: F },
    MountainCar { mass: F, friction: F, dt: F },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec<F> {
    pub state_dim: usize,
    pub feature_dim: usize,
    /// Default episode length used by the experiments for this task.
    pub horizon: usize,
    /// Default discount factor, in `[0, 1)`.
    pub discount: F,
    pub dynamics: Dynamics<F>,
}

/// An episodic MDP with a fixed feature map.
///
/// Rewards take the general `(s, a, s')` form; the toy task ignores `s'`.
pub trait Environment<F: Scalar>: Send + Sync {
    fn spec(&self) -> &EnvSpec<F>;

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState<F>;

    fn features(&self, state: &EnvState<F>) -> Vec<F>;

    /// Advance one step; returns the next state and `r(s, a, s')`.
    fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState<F>,
        action: F,
        rng: &mut R,
    ) -> (EnvState<F>, F);

    /// Known `[lower, upper]` bounds on the per-step reward.
    fn reward_bounds(&self) -> (F, F);
}

/// Deterministic linear policy: `a = θᵀ φ(s)`.
pub fn act<F: Scalar>(theta: &PolicyParams<F>, features: &[F]) -> Result<F> {
    if theta.dim() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.dim(),
            found: features.len(),
        });
    }
    Ok(dot(theta.theta(), features))
}

// ---------------------------------------------------------------------------
// Toy linear-Gaussian task

/// `s' = s + a + ε`, `ε ~ N(0, σ²)`, reward `exp(−s²/2 − a²/2) + 1`, policy `a = θ s`.
#[derive(Debug, Clone)]
pub struct ToyEnv<F> {
    spec: EnvSpec<F>,
    noise_std: F,
    fixed_start: Option<F>,
}

impl<F: Scalar> Default for ToyEnv<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ToyEnv<F> {
    pub const DEFAULT_NOISE_STD: f64 = 0.5;

    pub fn new() -> Self {
        Self::with_noise(F::of(Self::DEFAULT_NOISE_STD))
    }

    /// Zero `noise_std` makes transitions deterministic (used by tests).
    pub fn with_noise(noise_std: F) -> Self {
        Self {
            spec: EnvSpec {
                state_dim: 1,
                feature_dim: 1,
                horizon: 10,
                discount: F::of(0.9),
                dynamics: Dynamics::Toy { noise_std },
            },
            noise_std,
            fixed_start: None,
        }
    }

    /// Start every episode from `s₁` instead of drawing it from N(0, 1).
    pub fn with_fixed_start(mut self, s1: F) -> Self {
        self.fixed_start = Some(s1);
        self
    }

    pub fn noise_std(&self) -> F {
        self.noise_std
    }
}

/// `s₁ ~ N(0, 1)`.
pub fn toy_initial_state<F: Scalar, R: Rng + ?Sized>(rng: &mut R) -> EnvState<F> {
    EnvState::new(vec![F::standard_normal(rng)])
}

/// Toy reward, bounded in `(1, 2]`.
pub fn toy_reward<F: Scalar>(s: F, a: F) -> F {
    let half = F::of(0.5);
    (-(s * s) * half - a * a * half).exp() + F::one()
}

/// One toy transition with noise deviation `noise_std`.
pub fn toy_step<F: Scalar, R: Rng + ?Sized>(s: F, a: F, noise_std: F, rng: &mut R) -> (F, F) {
    let eps = if noise_std == F::zero() {
        F::zero()
    } else {
        noise_std * F::standard_normal(rng)
    };
    (s + a + eps, toy_reward(s, a))
}

impl<F: Scalar> Environment<F> for ToyEnv<F> {
    fn spec(&self) -> &EnvSpec<F> {
        &self.spec
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState<F> {
        match self.fixed_start {
            Some(s1) => EnvState::new(vec![s1]),
            None => toy_initial_state(rng),
        }
    }

    fn features(&self, state: &EnvState<F>) -> Vec<F> {
        vec![state.s[0]]
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState<F>,
        action: F,
        rng: &mut R,
    ) -> (EnvState<F>, F) {
        let (next, r) = toy_step(state.s[0], action, self.noise_std, rng);
        (EnvState::new(vec![next]), r)
    }

    fn reward_bounds(&self) -> (F, F) {
        (F::one(), F::of(2.0))
    }
}

// ---------------------------------------------------------------------------
// Mountain car

pub const CAR_X_BOUNDS: (f64, f64) = (-1.2, 0.5);
pub const CAR_V_BOUNDS: (f64, f64) = (-1.5, 1.5);
pub const CAR_GOAL_X: f64 = 0.45;

/// Kernel centres, row-major over `{−1.2, −0.35, 0.5} × {−1.5, −0.5, 0.5, 1.5}`:
/// feature `j = 4·i + k` is centred at `(X[i], V[k])`.
pub const CAR_KERNEL_X: [f64; 3] = [-1.2, -0.35, 0.5];
pub const CAR_KERNEL_V: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];
pub const CAR_FEATURE_DIM: usize = 12;

/// Valley floor of the `sin(3x)` landscape, where `cos(3x) = 0`.
pub const CAR_VALLEY_X: f64 = -std::f64::consts::PI / 6.0;

#[derive(Debug, Clone)]
pub struct MountainCar<F> {
    spec: EnvSpec<F>,
    mass: F,
    friction: F,
    dt: F,
    action_clip: Option<F>,
}

impl<F: Scalar> Default for MountainCar<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> MountainCar<F> {
    pub fn new() -> Self {
        Self::with_constants(F::of(0.2), F::of(0.3), F::of(0.1))
    }

    pub fn with_constants(mass: F, friction: F, dt: F) -> Self {
        Self {
            spec: EnvSpec {
                state_dim: 2,
                feature_dim: CAR_FEATURE_DIM,
                horizon: 40,
                discount: F::of(0.95),
                dynamics: Dynamics::MountainCar { mass, friction, dt },
            },
            mass,
            friction,
            dt,
            action_clip: None,
        }
    }

    /// Clip actions to `[−limit, limit]`. Off by default.
    pub fn with_action_clip(mut self, limit: F) -> Self {
        self.action_clip = Some(limit);
        self
    }

    /// Deterministic transition and reward.
    ///
    /// Velocity is updated first and the position uses the new velocity; both
    /// are then clamped to their ranges. Reward is `+1` iff the clamped next
    /// position is at least the goal line, else `−1`.
    pub fn car_step(&self, x: F, v: F, action: F) -> ((F, F), F) {
        let a = match self.action_clip {
            Some(c) => action.max(-c).min(c),
            None => action,
        };
        let gravity = F::of(-9.8) * self.mass * (F::of(3.0) * x).cos();
        let v_next = v + (gravity + a / self.mass - self.friction * v) * self.dt;
        let v_next = clamp(v_next, CAR_V_BOUNDS);
        let x_next = clamp(x + v_next * self.dt, CAR_X_BOUNDS);
        ((x_next, v_next), car_reward(x_next))
    }
}

fn clamp<F: Scalar>(v: F, (lo, hi): (f64, f64)) -> F {
    v.max(F::of(lo)).min(F::of(hi))
}

/// `+1` once the car is at or past the goal line, `−1` otherwise.
pub fn car_reward<F: Scalar>(x_next: F) -> F {
    if x_next >= F::of(CAR_GOAL_X) {
        F::one()
    } else {
        -F::one()
    }
}

/// `φ_j(s) = exp(−‖s − c_j‖² / 2)` for the twelve kernel centres.
pub fn car_features<F: Scalar>(x: F, v: F) -> Vec<F> {
    let half = F::of(0.5);
    let mut out = Vec::with_capacity(CAR_FEATURE_DIM);
    for &cx in &CAR_KERNEL_X {
        for &cv in &CAR_KERNEL_V {
            let dx = x - F::of(cx);
            let dv = v - F::of(cv);
            out.push((-(dx * dx + dv * dv) * half).exp());
        }
    }
    out
}

impl<F: Scalar> Environment<F> for MountainCar<F> {
    fn spec(&self) -> &EnvSpec<F> {
        &self.spec
    }

    fn initial_state<R: Rng + ?Sized>(&self, _rng: &mut R) -> EnvState<F> {
        EnvState::new(vec![F::of(CAR_VALLEY_X), F::zero()])
    }

    fn features(&self, state: &EnvState<F>) -> Vec<F> {
        car_features(state.s[0], state.s[1])
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState<F>,
        action: F,
        _rng: &mut R,
    ) -> (EnvState<F>, F) {
        let ((x, v), r) = self.car_step(state.s[0], state.s[1], action);
        (EnvState::new(vec![x, v]), r)
    }

    fn reward_bounds(&self) -> (F, F) {
        (-F::one(), F::one())
    }
}

// ---------------------------------------------------------------------------

/// Either task, selectable at run time.
#[derive(Debug, Clone)]
pub enum Env<F> {
    Toy(ToyEnv<F>),
    MountainCar(MountainCar<F>),
}

impl<F: Scalar> Environment<F> for Env<F> {
    fn spec(&self) -> &EnvSpec<F> {
        match self {
            Env::Toy(e) => e.spec(),
            Env::MountainCar(e) => e.spec(),
        }
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState<F> {
        match self {
            Env::Toy(e) => e.initial_state(rng),
            Env::MountainCar(e) => e.initial_state(rng),
        }
    }

    fn features(&self, state: &EnvState<F>) -> Vec<F> {
        match self {
            Env::Toy(e) => e.features(state),
            Env::MountainCar(e) => e.features(state),
        }
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState<F>,
        action: F,
        rng: &mut R,
    ) -> (EnvState<F>, F) {
        match self {
            Env::Toy(e) => e.step(state, action, rng),
            Env::MountainCar(e) => e.step(state, action, rng),
        }
    }

    fn reward_bounds(&self) -> (F, F) {
        match self {
            Env::Toy(e) => e.reward_bounds(),
            Env::MountainCar(e) => e.reward_bounds(),
        }
    }
}
