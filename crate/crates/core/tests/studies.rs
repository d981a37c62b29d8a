//! Variance/bias studies, bound checks and gradient angles on the toy task.

use pgpe::analysis::{
    angle_experiment, angle_study, bound_check, gradient_study, AngleExperimentConfig,
    GradientStudyConfig, RewardRange,
};
use pgpe::estimators::Block;
use pgpe::{GradientStudyConfig64, Method, ToyEnv64};

fn study(trials: usize, seed: u64) -> pgpe::GradientStudyResult64 {
    let cfg = GradientStudyConfig64 {
        trials,
        iterations: 8,
        oracle_samples: 5000,
        ..GradientStudyConfig::toy(seed)
    };
    gradient_study(&ToyEnv64::new(), &cfg).unwrap()
}

#[test]
fn decomposition_holds_on_every_cell() {
    let s = study(200, 21);
    for c in &s.cells {
        for block in [Block::Eta, Block::Tau] {
            let e = c.block(block);
            assert!(e.var >= 0.0 && e.bias2 >= 0.0 && e.mse >= 0.0);
            assert!((e.var + e.bias2 - e.mse).abs() <= 1e-8 * e.mse.max(1.0));
        }
    }
}

#[test]
fn bounds_hold_and_understated_reward_range_is_caught() {
    let s = study(300, 22);
    let ok = bound_check(
        &s,
        RewardRange {
            alpha: 1.0,
            beta: 2.0,
        },
    )
    .unwrap();
    assert!(ok.all_pass(), "{:?}", ok.failures().collect::<Vec<_>>());
    let bad = bound_check(
        &s,
        RewardRange {
            alpha: 1.0,
            beta: 1.0,
        },
    )
    .unwrap();
    assert!(!bad.all_pass());
}

#[test]
fn on_policy_check_uses_unit_weights() {
    let s = study(50, 23);
    let r = bound_check(
        &s,
        RewardRange {
            alpha: 1.0,
            beta: 2.0,
        },
    )
    .unwrap();
    let on_policy: Vec<_> = r
        .rows
        .iter()
        .filter(|row| row.method == Method::Pgpe)
        .collect();
    assert_eq!(on_policy.len(), 2 * s.path.len());
    for row in on_policy {
        let expected = pgpe::estimators::variance_upper_bound(
            row.block,
            &pgpe::estimators::BoundInputs {
                beta: 2.0,
                alpha: 1.0,
                gamma: 0.9,
                horizon: 10,
                n_samples: 10,
                trace_b: pgpe::estimators::trace_b(&s.path[row.iteration - 1]),
                w_max: 1.0,
                w_min: 1.0,
            },
        );
        assert!((row.bound - expected).abs() <= 1e-14 * expected, "{row:?}");
    }
}

#[test]
fn single_precision_study_runs() {
    let cfg = GradientStudyConfig::<f32> {
        trials: 20,
        iterations: 3,
        oracle_samples: 2000,
        ..GradientStudyConfig::toy(24)
    };
    let s = gradient_study(&pgpe::ToyEnv::<f32>::new(), &cfg).unwrap();
    assert_eq!(s.cells.len(), 3 * 6);
    assert!(s.cells.iter().all(|c| c.eta.var.is_finite()));
}

#[test]
fn baselined_importance_weighting_points_the_right_way() {
    let r = angle_experiment(&ToyEnv64::new(), &AngleExperimentConfig::toy(0)).unwrap();
    let (_, ob) = r
        .per_method
        .iter()
        .find(|(m, _)| *m == Method::IwPgpeOb)
        .unwrap();
    assert_eq!(ob.angles.len(), 20);
    assert!(ob.fraction_within(60.0) >= 0.7, "{:?}", ob.angles);
    // plain importance weighting is spread out
    let (_, iw) = r
        .per_method
        .iter()
        .find(|(m, _)| *m == Method::IwPgpe)
        .unwrap();
    assert!(iw.fraction_within(60.0) < ob.fraction_within(60.0));
}

#[test]
fn angles_survive_common_rotation() {
    let truth = [0.3f64, -1.2];
    let estimates = [[1.0, 0.2], [-0.4, -0.9], [0.0, 2.0], [-1.0, 0.01]];
    let base = angle_study(truth, &estimates).unwrap();
    for phi in [0.3f64, 1.7, -2.9] {
        let rot = |v: [f64; 2]| {
            [
                v[0] * phi.cos() - v[1] * phi.sin(),
                v[0] * phi.sin() + v[1] * phi.cos(),
            ]
        };
        let rotated: Vec<[f64; 2]> = estimates.iter().map(|&e| rot(e)).collect();
        let r = angle_study(rot(truth), &rotated).unwrap();
        for (a, b) in base.valid_angles().zip(r.valid_angles()) {
            let d = (a - b).abs();
            assert!(d < 1e-9 || (d - 360.0).abs() < 1e-9);
        }
    }
}
