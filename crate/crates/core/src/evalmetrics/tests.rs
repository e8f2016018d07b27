use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::charscene::CharacterSpec;
use crate::learner::{ClipData, EnvConfig, Mlp, Normalizer};
use crate::math::Rot;
use crate::motionlib::{generate_clip, Task};

fn sensor(head: Vec2, angle: f64, hand: Vec2) -> SensorFrame {
    let r = Rot::new(angle);
    SensorFrame {
        head_rot: (r.c, r.s),
        head_position: head,
        hand_position: hand,
    }
}

#[test]
fn identical_trajectories_have_zero_error() {
    let s: Vec<SensorFrame> = (0..5).map(|i| sensor(Vec2::new(i as f64, 1.6), 0.1 * i as f64, Vec2::new(0.3, 1.0))).collect();
    let e = tracking_errors(&s, &s).unwrap();
    assert!(e.head_position.iter().chain(&e.head_angle).chain(&e.hand_position).all(|v| *v == 0.0));
}

#[test]
fn constant_head_offset_averages_to_offset() {
    let a: Vec<SensorFrame> = (0..10).map(|i| sensor(Vec2::new(0.1 * i as f64, 1.6), 0.0, Vec2::new(0.0, 1.0))).collect();
    let b: Vec<SensorFrame> = a.iter().map(|s| sensor(s.head_position + Vec2::new(0.0, 0.05), 0.0, s.hand_position)).collect();
    let e = tracking_errors(&a, &b).unwrap();
    let mean = e.head_position.iter().sum::<f64>() / 10.0 * 100.0;
    assert!((mean - 5.0).abs() < 1e-12);
    assert!(matches!(tracking_errors(&a, &b[..3]), Err(MetricsError::DimensionMismatch { .. })));
}

#[test]
fn head_angle_error_wraps() {
    let a = sensor(Vec2::ZERO, std::f64::consts::PI, Vec2::ZERO);
    let b = sensor(Vec2::ZERO, -std::f64::consts::PI + 1e-12, Vec2::ZERO);
    let e = tracking_errors(&[a], &[b]).unwrap();
    assert!(e.head_angle[0] < 1e-9);
    let c = sensor(Vec2::ZERO, 0.0, Vec2::ZERO);
    let e = tracking_errors(&[a], &[c]).unwrap();
    assert!((e.head_angle[0] - std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn jerk_of_a_cubic_is_six() {
    let dt = 1.0 / 30.0;
    let x: Vec<Vec2> = (0..90).map(|i| Vec2::new((i as f64 * dt).powi(3), 0.0)).collect();
    assert!((jerk(&x, dt).unwrap() - 0.006).abs() < 1e-6);
}

#[test]
fn jerk_of_linear_and_quadratic_motion_vanishes() {
    let dt = 1.0 / 30.0;
    let line: Vec<Vec2> = (0..30).map(|i| Vec2::new(2.0 * i as f64 * dt, 1.0)).collect();
    assert!(jerk(&line, dt).unwrap().abs() < 1e-9);
    let parabola: Vec<Vec2> = (0..30).map(|i| Vec2::new(0.0, -4.9 * (i as f64 * dt).powi(2))).collect();
    assert!(jerk(&parabola, dt).unwrap().abs() < 1e-9);
    assert!(matches!(jerk(&line[..3], dt), Err(MetricsError::TooShort(3))));
}

/// Result with `available` steps of clip left that tracks `tracked` of them.
fn synthetic(available: usize, tracked: usize, error: f64) -> EpisodeResult {
    let dt = 1.0 / 30.0;
    let failed = tracked < available;
    EpisodeResult {
        clip: 0,
        start_frame: 0,
        dt,
        steps_available: available,
        steps_tracked: tracked,
        failed,
        failure_time: failed.then(|| (tracked + 1) as f64 * dt),
        errors: ErrorSeries {
            head_position: vec![error; tracked],
            head_angle: vec![error; tracked],
            hand_position: vec![2.0 * error; tracked],
        },
        head_positions: (0..=tracked).map(|i| Vec2::new(i as f64 * dt, 1.6)).collect(),
        contacts: vec![ContactState::default(); tracked],
        reference_contacts: vec![ContactState::default(); tracked],
    }
}

#[test]
fn full_survival_gives_unit_ratios() {
    let r = aggregate(&[synthetic(1000, 1000, 0.01), synthetic(950, 950, 0.03)]).unwrap();
    assert_eq!((r.success_20s, r.success_30s, r.success_frame), (Some(1.0), Some(1.0), 1.0));
    assert!((r.head_error_cm - 100.0 * (1000.0 * 0.01 + 950.0 * 0.03) / 1950.0).abs() < 1e-12);
    assert!((r.head_error_deg - (1000.0 * 0.01 + 950.0 * 0.03) / 1950.0 * 180.0 / std::f64::consts::PI).abs() < 1e-12);
    assert!(r.jerk_km_s3.abs() < 1e-9);
}

#[test]
fn instant_failures_halve_the_ratios() {
    let r = aggregate(&[synthetic(1000, 0, 0.0), synthetic(1000, 1000, 0.0)]).unwrap();
    assert_eq!((r.success_20s, r.success_30s, r.success_frame), (Some(0.5), Some(0.5), 0.5));
}

#[test]
fn hand_built_failure_times() {
    // Horizons are 600 and 900 steps at 30 Hz.
    let set = [
        synthetic(1200, 1200, 0.0),
        synthetic(1200, 700, 0.0),
        synthetic(1200, 450, 0.0),
        synthetic(700, 650, 0.0),
        synthetic(300, 150, 0.0),
        synthetic(0, 0, 0.0),
    ];
    let r = aggregate(&set).unwrap();
    assert_eq!(r.success_20s, Some(3.0 / 4.0));
    assert_eq!(r.success_30s, Some(1.0 / 3.0));
    let want = (1.0 + 700.0 / 900.0 + 450.0 / 900.0 + 650.0 / 700.0 + 0.5 + 1.0) / 6.0;
    assert!((r.success_frame - want).abs() < 1e-15);
    let short = aggregate(&[synthetic(300, 300, 0.0)]).unwrap();
    assert_eq!((short.success_20s, short.success_30s), (None, None));
    assert!(short.to_csv().ends_with(",-,-,1.000000\n"));
    assert!(matches!(aggregate(&[]), Err(MetricsError::Empty)));
}

#[test]
fn errors_after_failure_are_not_counted() {
    let mut failed = synthetic(1000, 10, 0.02);
    failed.steps_tracked = 10;
    let r = aggregate(&[failed, synthetic(1000, 1000, 0.02)]).unwrap();
    assert!((r.head_error_cm - 2.0).abs() < 1e-12);
    assert!((r.hand_error_cm - 4.0).abs() < 1e-12);
}

#[test]
fn report_csv_has_table_columns() {
    let csv = aggregate(&[synthetic(1000, 1000, 0.01)]).unwrap().to_csv();
    let header = csv.lines().next().unwrap();
    assert_eq!(header.split(',').collect::<Vec<_>>(), METRIC_COLUMNS.to_vec());
    assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 7);
}

#[test]
fn contact_phase_statistics() {
    let mut a = synthetic(100, 4, 0.0);
    a.reference_contacts = vec![ContactState([true, false, false, false, false]); 4];
    a.contacts[2] = ContactState([true, false, false, false, false]);
    let mut b = a.clone();
    b.contacts = vec![ContactState::default(); 4];
    let c = synthetic(100, 4, 0.0);
    assert_eq!(phase_contact_hit_ratio(&[a.clone(), b.clone(), c], 0), Some(0.5));
    assert_eq!(phase_contact_agreement(&[a, b], 0), Some(1.0 / 8.0));
    assert_eq!(phase_contact_hit_ratio(&[synthetic(10, 3, 0.0)], 0), None);
}

fn zero_policy(spec: &CharacterSpec, env: &TrackingEnv) -> Policy {
    let obs = env.observe().unwrap().len();
    Policy {
        actor: Mlp::zeros(&[obs, 4, spec.joints.len()]),
        normalizer: Normalizer::new(obs),
    }
}

fn stand_env(seconds: f64) -> (CharacterSpec, TrackingEnv) {
    let spec = CharacterSpec::standard();
    let clip = generate_clip(Task::StandIdle, seconds, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let data = Arc::new(vec![ClipData::new(clip, &spec).unwrap()]);
    let config = Arc::new(EnvConfig {
        randomization: None,
        ..EnvConfig::default()
    });
    let env = TrackingEnv::new(Arc::new(spec.clone()), data, config).unwrap();
    (spec, env)
}

#[test]
fn zero_torque_policy_collapses_on_stand_clip() {
    let (spec, mut env) = stand_env(25.0);
    let policy = zero_policy(&spec, &env);
    let r = run_episode(&policy, &mut env, 0, 0).unwrap();
    assert!(r.failed);
    assert!(r.failure_time.unwrap() < 20.0);
    assert_eq!(r.errors.head_position.len(), r.steps_tracked);
    assert!(r.errors.head_position.iter().all(|e| *e <= 2.0 * 0.8));
    let last = r.steps_available;
    let end = run_episode(&policy, &mut env, 0, last).unwrap();
    assert_eq!((end.steps_available, end.steps_tracked, end.failed), (0, 0, false));
    assert!(run_episode(&policy, &mut env, 0, last + 1).is_err());
}

#[test]
fn all_frame_evaluation_is_deterministic() {
    let (spec, env) = stand_env(2.0);
    let policy = zero_policy(&spec, &env);
    let a = evaluate_all_frames(&policy, &env).unwrap();
    assert_eq!(a.len(), env.clips[0].frame_count());
    assert_eq!(a.iter().map(|r| r.start_frame).collect::<Vec<_>>(), (0..a.len()).collect::<Vec<_>>());
    let b = evaluate_all_frames(&policy, &env).unwrap();
    assert_eq!(a, b);
    let report = aggregate(&a).unwrap();
    assert_eq!(report.to_csv(), aggregate(&b).unwrap().to_csv());
    assert!(episode_steps_csv(&a).lines().count() > 1);
}

fn long_episode() -> impl Strategy<Value = EpisodeResult> {
    (900usize..2000).prop_flat_map(|available| (Just(available), 0..=available)).prop_map(|(a, t)| synthetic(a, t, 0.01))
}

proptest! {
    #[test]
    fn frame_ratio_dominates_thirty_second_ratio(set in prop::collection::vec(long_episode(), 1..20)) {
        let r = aggregate(&set).unwrap();
        prop_assert!(r.success_frame >= r.success_30s.unwrap());
        prop_assert!((0.0..=1.0).contains(&r.success_frame));
    }

    #[test]
    fn ratios_stay_in_unit_interval(set in prop::collection::vec((0usize..1500).prop_flat_map(|a| (Just(a), 0..=a)).prop_map(|(a, t)| synthetic(a, t, 0.0)), 1..20)) {
        let r = aggregate(&set).unwrap();
        for v in r.values().iter().skip(4).flatten() {
            prop_assert!((0.0..=1.0).contains(v));
        }
    }
}
