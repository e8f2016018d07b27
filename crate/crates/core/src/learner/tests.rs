use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::charscene::{link_states, CharacterSpec};
use crate::math::Vec2;
use crate::motionlib::{generate_clip, ReferenceClip, Task};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Straight-line evaluation of a tanh network, independent of the flat layout helpers.
fn oracle_forward(sizes: &[usize], params: &[f64], input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    let mut at = 0;
    let layers = sizes.len() - 1;
    for l in 0..layers {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let mut y = Vec::new();
        for o in 0..n_out {
            let mut s = params[at + n_in * n_out + o];
            for i in 0..n_in {
                s += params[at + o * n_in + i] * x[i];
            }
            y.push(if l + 1 < layers { s.tanh() } else { s });
        }
        at += n_in * n_out + n_out;
        x = y;
    }
    x
}

#[test]
fn zero_network_outputs_zero() {
    let net = Mlp::zeros(&[3, 5, 2]);
    assert_eq!(net.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn single_unit_layer_is_identity() {
    let mut net = Mlp::zeros(&[1, 1]);
    net.params = vec![1.0, 0.0];
    assert_eq!(net.predict(&[0.7]).unwrap(), vec![0.7]);
}

#[test]
fn forward_matches_matrix_oracle() {
    let net = Mlp::init(&[4, 8, 3], 1.0, &mut rng(1));
    let input = [0.3, -1.2, 0.8, 2.0];
    let got = net.predict(&input).unwrap();
    let want = oracle_forward(&net.sizes, &net.params, &input);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
    }
}

#[test]
fn forward_rejects_wrong_input_length() {
    let net = Mlp::zeros(&[4, 8, 3]);
    assert!(matches!(net.forward(&[1.0]), Err(LearnerError::DimensionMismatch { got: 1, expected: 4, .. })));
}

#[test]
fn backward_matches_finite_differences() {
    let net = Mlp::init(&[4, 6, 5, 3], 1.0, &mut rng(2));
    let input = [0.5, -0.4, 1.1, -0.9];
    let g_out = [0.7, -1.3, 0.4];
    let objective = |p: &[f64]| -> f64 { oracle_forward(&net.sizes, p, &input).iter().zip(&g_out).map(|(y, g)| y * g).sum() };
    let mut grad = vec![0.0; net.params.len()];
    net.backward(&net.forward(&input).unwrap(), &g_out, &mut grad);
    let h = 1e-6;
    for k in 0..net.params.len() {
        let mut p = net.params.clone();
        p[k] += h;
        let up = objective(&p);
        p[k] -= 2.0 * h;
        let down = objective(&p);
        let fd = (up - down) / (2.0 * h);
        assert!(close(grad[k], fd, 1e-6), "param {k}: {} vs {fd}", grad[k]);
    }
}

#[test]
fn backward_is_linear_and_zero_for_zero_gradient() {
    let net = Mlp::init(&[3, 4, 2], 1.0, &mut rng(3));
    let cache = net.forward(&[0.1, 0.2, -0.3]).unwrap();
    let mut zero = vec![0.0; net.params.len()];
    net.backward(&cache, &[0.0, 0.0], &mut zero);
    assert!(zero.iter().all(|g| *g == 0.0));
    let (g1, g2) = ([0.5, -1.0], [2.0, 0.25]);
    let mut a = vec![0.0; net.params.len()];
    let mut b = vec![0.0; net.params.len()];
    let mut sum = vec![0.0; net.params.len()];
    net.backward(&cache, &g1, &mut a);
    net.backward(&cache, &g2, &mut b);
    net.backward(&cache, &[g1[0] + g2[0], g1[1] + g2[1]], &mut sum);
    for k in 0..sum.len() {
        assert!((sum[k] - a[k] - b[k]).abs() <= 1e-12);
    }
}

#[test]
fn gaussian_log_prob_spot_value() {
    let logp = gaussian_log_prob(&[0.1], &[0.0], 0.1);
    assert!((logp - 0.883_646_5).abs() < 1e-7, "{logp}");
}

#[test]
fn sampling_is_deterministic_and_clamped() {
    let net = Mlp::init(&[3, 4, 2], 1.0, &mut rng(4));
    let obs = [0.2, 0.1, -0.5];
    let a = policy_sample(&net, &obs, 0.1, &mut rng(9)).unwrap();
    let b = policy_sample(&net, &obs, 0.1, &mut rng(9)).unwrap();
    assert_eq!(a, b);
    let (raw, clamped, _) = sample_action(&[3.0, -0.2], 1e-12, &mut rng(5));
    assert!((raw[0] - 3.0).abs() < 1e-9);
    assert_eq!(clamped[0], 1.0);
    assert!((clamped[1] + 0.2).abs() < 1e-9);
}

#[test]
fn actions_scale_to_joint_torques() {
    let spec = CharacterSpec::standard();
    let n = spec.joints.len();
    assert!(action_to_torques(&vec![0.0; n], &spec).unwrap().iter().all(|t| *t == 0.0));
    let mut a = vec![0.0; n];
    a[0] = 1.0;
    a[1] = -0.5;
    let t = action_to_torques(&a, &spec).unwrap();
    assert_eq!(t[0], spec.joints[0].max_torque);
    assert_eq!(t[1], -0.5 * spec.joints[1].max_torque);
    assert!(matches!(action_to_torques(&[0.0], &spec), Err(LearnerError::DimensionMismatch { .. })));
}

#[test]
fn normalizer_matches_batch_statistics() {
    let data: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 * 0.5, (i as f64).sin() * 3.0 + 1.0]).collect();
    let mut norm = Normalizer::new(2);
    norm.update(data[..15].iter().map(|v| v.as_slice()));
    norm.update(data[15..].iter().map(|v| v.as_slice()));
    for k in 0..2 {
        let mean = data.iter().map(|v| v[k]).sum::<f64>() / 40.0;
        let var = data.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / 40.0;
        assert!((norm.mean[k] - mean).abs() < 1e-12);
        assert!((norm.m2[k] / norm.count - var).abs() < 1e-10);
    }
    assert_eq!(Normalizer::new(2).normalize(&[3.0, 50.0]), vec![3.0, NORMALIZER_CLIP]);
}

fn transition(reward: f64, value: f64, done: bool, cut: bool, bootstrap: f64) -> Transition {
    Transition {
        observation: vec![],
        action: vec![],
        log_prob: 0.0,
        reward,
        value,
        done,
        cut,
        bootstrap,
    }
}

#[test]
fn gae_single_terminal_step() {
    let (a, r) = compute_gae(&[transition(1.0, 0.0, true, false, 0.0)], 0.97, 0.95);
    assert_eq!((a[0], r[0]), (1.0, 1.0));
}

#[test]
fn gae_with_zero_lambda_is_one_step_error() {
    let steps = vec![
        transition(1.0, 0.5, false, false, 0.0),
        transition(0.5, 0.2, false, false, 0.0),
        transition(0.2, 0.1, false, true, 0.4),
    ];
    let (a, _) = compute_gae(&steps, 0.9, 0.0);
    assert_eq!(a[0], 1.0 + 0.9 * 0.2 - 0.5);
    assert_eq!(a[1], 0.5 + 0.9 * 0.1 - 0.2);
    assert_eq!(a[2], 0.2 + 0.9 * 0.4 - 0.1);
}

#[test]
fn gae_matches_brute_force_sums() {
    use rand::Rng;
    let (gamma, lambda) = (0.97, 0.95);
    for seed in 0..20 {
        let mut r = rng(seed);
        let steps: Vec<Transition> = (0..50)
            .map(|k| {
                let end = k == 49 || r.gen_bool(0.08);
                let done = end && r.gen_bool(0.5);
                transition(r.gen_range(-1.0..1.0), r.gen_range(-2.0..2.0), done, end && !done, r.gen_range(-2.0..2.0))
            })
            .collect();
        let (adv, ret) = compute_gae(&steps, gamma, lambda);
        let delta = |t: usize| {
            let s = &steps[t];
            let next = if s.done {
                0.0
            } else if s.cut {
                s.bootstrap
            } else {
                steps[t + 1].value
            };
            s.reward + gamma * next - s.value
        };
        for t in 0..50 {
            let mut want = 0.0;
            let mut k = t;
            loop {
                want += (gamma * lambda).powi((k - t) as i32) * delta(k);
                if steps[k].done || steps[k].cut {
                    break;
                }
                k += 1;
            }
            assert!((adv[t] - want).abs() < 1e-10, "seed {seed} step {t}");
            assert!((ret[t] - adv[t] - steps[t].value).abs() < 1e-15);
        }
    }
}

fn synthetic_batch(actor: &Mlp, n: usize, sigma: f64, seed: u64) -> RolloutBatch {
    use rand::Rng;
    let mut r = rng(seed);
    let mut batch = RolloutBatch::default();
    for _ in 0..n {
        let obs: Vec<f64> = (0..actor.input_len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mean = actor.predict(&obs).unwrap();
        let (action, _, log_prob) = sample_action(&mean, sigma, &mut r);
        batch.transitions.push(Transition {
            observation: obs,
            action,
            log_prob,
            reward: 0.0,
            value: 0.0,
            done: false,
            cut: false,
            bootstrap: 0.0,
        });
        batch.advantages.push(r.gen_range(-1.0..1.0));
        batch.returns.push(r.gen_range(-1.0..1.0));
    }
    batch.segments = vec![n];
    batch
}

fn small_config() -> PpoConfig {
    PpoConfig {
        transitions: 64,
        minibatch: 16,
        epochs: 1,
        ..PpoConfig::default()
    }
}

#[test]
fn ppo_loss_gradients_match_finite_differences() {
    let actor = Mlp::init(&[3, 5, 2], 1.0, &mut rng(6));
    let critic = Mlp::init(&[3, 4, 1], 1.0, &mut rng(7));
    let config = PpoConfig {
        sigma: 0.3,
        ..small_config()
    };
    let mut batch = synthetic_batch(&actor, 5, 0.3, 8);
    for t in &mut batch.transitions {
        t.log_prob += 0.05;
    }
    let idx: Vec<usize> = (0..5).collect();
    let loss = ppo_loss(&actor, &critic, &batch, &idx, &config).unwrap();
    let h = 1e-6;
    for k in 0..actor.params.len() {
        let (mut up, mut down) = (actor.clone(), actor.clone());
        up.params[k] += h;
        down.params[k] -= h;
        let fd = (ppo_loss(&up, &critic, &batch, &idx, &config).unwrap().policy_loss
            - ppo_loss(&down, &critic, &batch, &idx, &config).unwrap().policy_loss)
            / (2.0 * h);
        assert!(close(loss.grad_actor[k], fd, 1e-6), "actor {k}: {} vs {fd}", loss.grad_actor[k]);
    }
    for k in 0..critic.params.len() {
        let (mut up, mut down) = (critic.clone(), critic.clone());
        up.params[k] += h;
        down.params[k] -= h;
        let fd = (ppo_loss(&actor, &up, &batch, &idx, &config).unwrap().value_loss
            - ppo_loss(&actor, &down, &batch, &idx, &config).unwrap().value_loss)
            / (2.0 * h);
        assert!(close(loss.grad_critic[k], fd, 1e-6), "critic {k}: {} vs {fd}", loss.grad_critic[k]);
    }
}

#[test]
fn one_small_epoch_does_not_decrease_the_surrogate() {
    let mut actor = Mlp::init(&[3, 8, 2], 1.0, &mut rng(10));
    let mut critic = Mlp::init(&[3, 8, 1], 1.0, &mut rng(11));
    let config = PpoConfig {
        learning_rate: 1e-5,
        minibatch: 64,
        ..small_config()
    };
    let batch = synthetic_batch(&actor, 64, 0.1, 12);
    let idx: Vec<usize> = (0..64).collect();
    let before = surrogate_objective(&actor, &batch, &idx, 0.2, 0.1).unwrap();
    let (mut oa, mut oc) = (Adam::new(actor.params.len()), Adam::new(critic.params.len()));
    let stats = ppo_update(&mut actor, &mut critic, &mut oa, &mut oc, &batch, &config, &mut rng(13)).unwrap();
    let after = surrogate_objective(&actor, &batch, &idx, 0.2, 0.1).unwrap();
    assert!(after >= before, "{after} < {before}");
    assert!((0.0..=1.0).contains(&stats.clip_fraction));
}

#[test]
fn zero_advantage_leaves_policy_unchanged() {
    let mut actor = Mlp::init(&[3, 8, 2], 1.0, &mut rng(14));
    let mut critic = Mlp::init(&[3, 8, 1], 1.0, &mut rng(15));
    let mut batch = synthetic_batch(&actor, 64, 0.1, 16);
    batch.advantages.iter_mut().for_each(|a| *a = 0.0);
    let before = actor.clone();
    let critic_before = critic.clone();
    let (mut oa, mut oc) = (Adam::new(actor.params.len()), Adam::new(critic.params.len()));
    ppo_update(&mut actor, &mut critic, &mut oa, &mut oc, &batch, &small_config(), &mut rng(17)).unwrap();
    assert_eq!(actor, before);
    assert_ne!(critic, critic_before);
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let mut actor = Mlp::init(&[3, 8, 2], 1.0, &mut rng(18));
    let mut critic = Mlp::init(&[3, 8, 1], 1.0, &mut rng(19));
    let batch = synthetic_batch(&actor, 64, 0.1, 20);
    let (a0, c0) = (actor.clone(), critic.clone());
    let config = PpoConfig {
        learning_rate: 0.0,
        epochs: 3,
        ..small_config()
    };
    let (mut oa, mut oc) = (Adam::new(actor.params.len()), Adam::new(critic.params.len()));
    ppo_update(&mut actor, &mut critic, &mut oa, &mut oc, &batch, &config, &mut rng(21)).unwrap();
    assert_eq!(actor.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>(), a0.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>());
    assert_eq!(critic.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>(), c0.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>());
}

#[test]
fn non_finite_gradient_restores_previous_parameters() {
    let mut actor = Mlp::init(&[3, 8, 2], 1.0, &mut rng(22));
    let mut critic = Mlp::init(&[3, 8, 1], 1.0, &mut rng(23));
    let mut batch = synthetic_batch(&actor, 64, 0.1, 24);
    batch.returns[40] = f64::NAN;
    let (a0, c0) = (actor.clone(), critic.clone());
    let (mut oa, mut oc) = (Adam::new(actor.params.len()), Adam::new(critic.params.len()));
    let r = ppo_update(&mut actor, &mut critic, &mut oa, &mut oc, &batch, &small_config(), &mut rng(25));
    assert!(matches!(r, Err(LearnerError::NonFiniteGradient)));
    assert_eq!((actor, critic), (a0, c0));
    assert_eq!(oa.t, 0);
}

#[test]
fn ppo_config_validation() {
    assert!(PpoConfig::default().validate().is_ok());
    let d = PpoConfig::default;
    assert!(PpoConfig { gamma: 1.0, ..d() }.validate().is_err());
    assert!(PpoConfig { lambda: 1.5, ..d() }.validate().is_err());
    assert!(PpoConfig { clip: 0.0, ..d() }.validate().is_err());
    assert!(PpoConfig { minibatch: 1000, ..d() }.validate().is_err());
    assert_eq!(d().transitions / d().minibatch, 8);
}

fn clips() -> Vec<ReferenceClip> {
    vec![generate_clip(Task::StandIdle, 2.0, &mut rng(30)).unwrap()]
}

fn pool(n: usize, clips: Vec<ReferenceClip>, config: EnvConfig) -> Vec<TrackingEnv> {
    let spec = Arc::new(CharacterSpec::standard());
    let data = Arc::new(clips.into_iter().map(|c| ClipData::new(c, &spec).unwrap()).collect::<Vec<_>>());
    let config = Arc::new(config);
    (0..n).map(|_| TrackingEnv::new(spec.clone(), data.clone(), config.clone()).unwrap()).collect()
}

fn nets(obs: usize, joints: usize) -> (Mlp, Mlp, Normalizer) {
    (
        Mlp::init(&[obs, 16, joints], 0.01, &mut rng(31)),
        Mlp::init(&[obs, 16, 1], 1.0, &mut rng(32)),
        Normalizer::new(obs),
    )
}

#[test]
fn reset_pose_equals_reference_frame() {
    let mut envs = pool(1, clips(), EnvConfig::default());
    let env = &mut envs[0];
    env.reset_to(0, 17, &mut rng(33)).unwrap();
    let pose = &env.data().clip.frames[17].pose;
    let want = link_states(&env.spec, pose);
    for (b, s) in env.world.bodies.iter().zip(&want) {
        assert_eq!(b.position, s.position);
        assert_eq!(b.angle, s.angle);
        assert_eq!(b.velocity, s.velocity);
    }
    assert!(env.reset_to(0, 59, &mut rng(33)).is_err());
}

#[test]
fn rollouts_split_round_robin_and_are_deterministic() {
    let mut envs = pool(2, clips(), EnvConfig::default());
    let obs = envs[0].observe().unwrap().len();
    let (actor, critic, normalizer) = nets(obs, 10);
    let policy = Behaviour {
        actor: &actor,
        critic: &critic,
        normalizer: &normalizer,
        sigma: 0.1,
    };
    let a = collect_rollouts(&mut envs, policy, 10, 7, 0).unwrap();
    assert_eq!(a.len(), 10);
    assert_eq!(a.segments, vec![5, 5]);
    assert_eq!(a.raw_observations.len(), 10);
    let last = &a.transitions[4];
    assert!(last.done || last.cut);
    let mut fresh = pool(2, clips(), EnvConfig::default());
    let b = collect_rollouts(&mut fresh, policy, 10, 7, 0).unwrap();
    assert_eq!(a, b);
    let c = collect_rollouts(&mut fresh, policy, 10, 7, 1).unwrap();
    assert_ne!(a.transitions, c.transitions);
}

#[test]
fn failing_episode_terminates_and_resets() {
    let mut clip = clips().remove(0);
    for f in &mut clip.frames[3..] {
        f.pose.root_position = f.pose.root_position + Vec2::new(2.0, 0.0);
    }
    let mut envs = pool(1, vec![clip.clone()], EnvConfig {
        randomization: None,
        ..EnvConfig::default()
    });
    let env = &mut envs[0];
    env.reset_to(0, 0, &mut rng(34)).unwrap();
    let zero = vec![0.0; 10];
    assert!(!env.step(&zero).unwrap().done);
    assert!(!env.step(&zero).unwrap().done);
    let third = env.step(&zero).unwrap();
    assert!(third.done && !third.cut);
    assert!((third.reference.head_position - third.sensors.head_position).length() > 1.5);

    let obs = env.observe().unwrap().len();
    let mut jumpy = clips().remove(0);
    for f in jumpy.frames.iter_mut().skip(1).step_by(2) {
        f.pose.root_position = f.pose.root_position + Vec2::new(2.0, 0.0);
    }
    let mut envs = pool(1, vec![jumpy], EnvConfig::default());
    let (actor, critic, normalizer) = nets(obs, 10);
    let policy = Behaviour {
        actor: &actor,
        critic: &critic,
        normalizer: &normalizer,
        sigma: 0.1,
    };
    let batch = collect_rollouts(&mut envs, policy, 40, 3, 0).unwrap();
    assert_eq!(batch.len(), 40);
    assert_eq!(batch.failures, 40);
    assert_eq!(batch.episodes, 40);
    assert!(batch.transitions.iter().all(|t| t.done && !t.cut && t.bootstrap == 0.0));
}

#[test]
fn clip_end_cuts_with_bootstrap() {
    let mut envs = pool(1, clips(), EnvConfig::default());
    let env = &mut envs[0];
    env.reset_to(0, 57, &mut rng(35)).unwrap();
    let zero = vec![0.0; 10];
    assert!(!env.step(&zero).unwrap().cut);
    let end = env.step(&zero).unwrap();
    assert!(end.cut && !end.done);
    assert_eq!(env.frame, 59);
    assert!(env.time() > 1.9);
}

fn trainer(seed: u64) -> Trainer {
    let config = PpoConfig {
        transitions: 32,
        minibatch: 16,
        epochs: 2,
        envs: 2,
        actor_hidden: vec![16],
        critic_hidden: vec![16],
        ..PpoConfig::default()
    };
    Trainer::new(CharacterSpec::standard(), clips(), EnvConfig::default(), config, seed).unwrap()
}

#[test]
fn training_iterations_are_reproducible_and_resume_exactly() {
    let mut a = trainer(5);
    let mut b = trainer(5);
    let sa = a.iterate().unwrap();
    let sb = b.iterate().unwrap();
    assert_eq!(sa, sb);
    assert_eq!(a.actor, b.actor);
    let ckpt = decode_checkpoint(&encode_checkpoint(&a.checkpoint("h"))).unwrap();
    assert_eq!(ckpt, a.checkpoint("h"));
    let mut resumed = trainer(99);
    resumed.restore(ckpt).unwrap();
    let next_a = a.iterate().unwrap();
    let next_r = resumed.iterate().unwrap();
    assert_eq!(next_a, next_r);
    assert_eq!(a.actor, resumed.actor);
    assert_eq!(a.normalizer, resumed.normalizer);
}

#[test]
fn checkpoint_rejects_bad_files_and_hashes() {
    let t = trainer(6);
    let bytes = encode_checkpoint(&t.checkpoint("abc"));
    assert_eq!(&bytes[..6], CHECKPOINT_MAGIC);
    assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 3]), Err(LearnerError::Format(_))));
    let mut wrong = bytes.clone();
    wrong[6] = 9;
    match decode_checkpoint(&wrong) {
        Err(LearnerError::Format(m)) => assert!(m.contains('9')),
        other => panic!("{other:?}"),
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.ckpt");
    save_checkpoint(&t.checkpoint("abc"), &path).unwrap();
    assert!(load_checkpoint(&path, "abc").is_ok());
    match load_checkpoint(&path, "xyz") {
        Err(LearnerError::ConfigMismatch { expected, found }) => assert_eq!((expected.as_str(), found.as_str()), ("xyz", "abc")),
        other => panic!("{other:?}"),
    }
}
