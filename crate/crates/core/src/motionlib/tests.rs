use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::charscene::{joint, link_clearance, CharacterSpec, FLOOR_HALF_EXTENTS, PELVIS};
use crate::math::Rot;

fn all_tasks() -> Vec<Task> {
    vec![
        Task::StandIdle,
        Task::Squat,
        Task::SitOnObject { height: 0.1 },
        Task::SitOnObject { height: 0.45 },
        Task::SitOnObject { height: 0.6 },
        Task::StepOverBox { height: 0.1 },
        Task::StepOverBox { height: 0.2 },
        Task::StepOverBox { height: 0.3 },
        Task::LeanOnTable,
        Task::GetUpFromFloor,
        Task::TiltChair { height: 0.35 },
        Task::TiltChair { height: 0.55 },
    ]
}

fn clip(task: Task, seed: u64) -> ReferenceClip {
    generate_clip(task, 8.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Every kinematic inconsistency of a clip: limit violations, penetrations and labelled
/// links that are not touching anything.
fn audit(clip: &ReferenceClip) -> Vec<String> {
    let spec = CharacterSpec::standard();
    let mut problems = Vec::new();
    for (i, f) in clip.frames.iter().enumerate() {
        for (a, j) in f.pose.joint_angles.iter().zip(&spec.joints) {
            if *a < j.lower || *a > j.upper {
                problems.push(format!("frame {i}: {} = {a} outside limits", j.name));
            }
        }
        let world = match clip.world_at(&spec, f) {
            Ok(w) => w,
            Err(e) => {
                problems.push(format!("frame {i}: {e}"));
                continue;
            }
        };
        for (k, &link) in spec.contact_links.iter().enumerate() {
            if f.contacts.0[k] {
                match link_clearance(&world, &spec, link, 0.05) {
                    Some(gap) if gap <= 0.01 => {}
                    gap => problems.push(format!("frame {i}: labelled {} has clearance {gap:?}", spec.links[link].name)),
                }
            }
        }
    }
    problems
}

#[test]
fn generated_clips_are_kinematically_consistent() {
    let mut failures = Vec::new();
    for task in all_tasks() {
        for seed in 0..2 {
            let problems = audit(&clip(task, seed));
            if !problems.is_empty() {
                failures.push(format!("{task} seed {seed}: {} problems, first {:?}", problems.len(), &problems[..problems.len().min(3)]));
            }
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn frame_count_and_duration_follow_the_sample_rate() {
    let c = clip(Task::StandIdle, 0);
    assert_eq!(c.frames.len(), 240);
    assert!((c.duration() - 239.0 / 30.0).abs() < 1e-12);
    let c = generate_clip(Task::StandIdle, 5.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(c.frames.len(), 150);
}

#[test]
fn velocities_match_finite_differences() {
    let c = clip(Task::Squat, 3);
    let n = c.frames.len();
    for i in 0..n {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        let h = (b - a) as f64 * c.dt;
        let (pa, pb, p) = (&c.frames[a].pose, &c.frames[b].pose, &c.frames[i].pose);
        for k in 0..p.joint_angles.len() {
            let fd = (pb.joint_angles[k] - pa.joint_angles[k]) / h;
            assert!((fd - p.joint_velocities[k]).abs() < 1e-6);
        }
        let fd = (pb.root_position - pa.root_position) / h;
        assert!((fd - p.root_velocity).length() < 1e-6);
        assert!(((pb.root_angle - pa.root_angle) / h - p.root_angular_velocity).abs() < 1e-6);
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    for task in all_tasks() {
        assert_eq!(clip(task, 11), clip(task, 11));
    }
    assert_ne!(clip(Task::StandIdle, 1), clip(Task::StandIdle, 2));
}

#[test]
fn sitting_rests_the_pelvis_on_the_seat() {
    let c = clip(Task::SitOnObject { height: 0.45 }, 0);
    let seated: Vec<&ReferenceFrame> = c.frames.iter().filter(|f| f.contacts.0[0]).collect();
    assert!(seated.len() > 30);
    for f in seated {
        assert!((f.pose.root_position.y - 0.53).abs() < 1e-9);
    }
    let transitions = c.frames.windows(2).filter(|w| w[0].contacts.0[0] != w[1].contacts.0[0]).count();
    assert_eq!(transitions, 2);
}

#[test]
fn stepping_clears_the_box_by_two_centimetres() {
    let spec = CharacterSpec::standard();
    for h in [0.1, 0.2, 0.3] {
        let c = clip(Task::StepOverBox { height: h }, 0);
        let mut min_gap = f64::INFINITY;
        for f in &c.frames {
            let world = c.world_at(&spec, f).unwrap();
            let obstacle = world.bodies.len() - 1;
            for link in 0..spec.links.len() {
                if let Some(g) = crate::rigidbody2d::separation(&world, link, obstacle, 1.0) {
                    min_gap = min_gap.min(g);
                }
            }
        }
        assert!(min_gap >= 0.02, "height {h}: clearance {min_gap}");
        let end = c.frames.last().unwrap().pose.root_position.x;
        assert!(end > 0.45 + 0.08, "character ends at {end}");
    }
}

#[test]
fn task_names_round_trip_and_ranges_are_enforced() {
    for task in all_tasks() {
        assert_eq!(task.to_string().parse::<Task>().unwrap(), task);
    }
    assert_eq!("sit-on-object".parse::<Task>().unwrap(), Task::SitOnObject { height: 0.45 });
    for bad in ["sit-on-object(0.05)", "sit-on-object(0.7)", "step-over-box(0.5)", "dance", "squat(0.3)", "sit-on-object(x"] {
        assert!(bad.parse::<Task>().is_err(), "{bad}");
    }
    assert!(generate_clip(Task::Squat, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

/// Chain composition written out link by link.
fn oracle_chain(spec: &CharacterSpec, root: Vec2, root_angle: f64, q: &[f64]) -> Vec<(Vec2, f64)> {
    let mut out = vec![(Vec2::ZERO, 0.0); spec.links.len()];
    out[PELVIS] = (root, root_angle);
    let mut done = vec![false; spec.links.len()];
    done[PELVIS] = true;
    while done.iter().any(|d| !d) {
        for (k, j) in spec.joints.iter().enumerate() {
            if done[j.parent] && !done[j.child] {
                let (pp, pa) = out[j.parent];
                let ca = pa + q[k];
                let pivot = Vec2::new(
                    pp.x + pa.cos() * j.anchor_parent.x - pa.sin() * j.anchor_parent.y,
                    pp.y + pa.sin() * j.anchor_parent.x + pa.cos() * j.anchor_parent.y,
                );
                let centre = Vec2::new(
                    pivot.x - (ca.cos() * j.anchor_child.x - ca.sin() * j.anchor_child.y),
                    pivot.y - (ca.sin() * j.anchor_child.x + ca.cos() * j.anchor_child.y),
                );
                out[j.child] = (centre, ca);
                done[j.child] = true;
            }
        }
    }
    out
}

#[test]
fn forward_kinematics_matches_chain_oracle() {
    let spec = CharacterSpec::standard();
    let q = [-0.3, 0.2, 1.1, 0.7, 0.4, -0.2, -0.9, -0.1, 0.3, -0.5];
    let root = Vec2::new(0.3, 0.85);
    let links = forward_kinematics(&spec, root, 0.15, &q);
    for (l, (p, a)) in links.iter().zip(oracle_chain(&spec, root, 0.15, &q)) {
        assert!((l.position - p).length() < 1e-12);
        assert!((l.angle - a).abs() < 1e-12);
    }
    let shifted = forward_kinematics(&spec, root + Vec2::new(2.0, -0.5), 0.15, &q);
    for (a, b) in links.iter().zip(&shifted) {
        assert!((b.position - a.position - Vec2::new(2.0, -0.5)).length() < 1e-12);
    }
}

#[test]
fn zero_pose_sensors_sit_above_the_pelvis() {
    let spec = CharacterSpec::standard();
    let s = sensors_from_pose(&spec, &CharacterPose::at_rest(Vec2::new(0.0, 0.93), 0.0, vec![0.0; 10]));
    assert!((s.head_position - Vec2::new(0.0, 1.59)).length() < 1e-12);
    assert_eq!(s.head_rot, (1.0, 0.0));
    // the arm hangs straight down from the shoulder
    assert!((s.hand_position - Vec2::new(0.0, 1.38 - 0.30 - 0.38)).length() < 1e-12);
    let tilted = sensors_from_pose(&spec, &CharacterPose::at_rest(Vec2::new(0.0, 0.93), 0.4, vec![0.0; 10]));
    assert!((tilted.head_angle() - 0.4).abs() < 1e-12);
    let expected = Vec2::new(0.0, 0.93) + Rot::new(0.4).apply(Vec2::new(0.0, 0.66));
    assert!((tilted.head_position - expected).length() < 1e-12);
}

#[test]
fn world_sensors_agree_with_pose_sensors() {
    let spec = CharacterSpec::standard();
    let c = clip(Task::LeanOnTable, 0);
    for f in c.frames.iter().step_by(20) {
        let w = c.world_at(&spec, f).unwrap();
        let a = sensors_from_world(&spec, &w);
        let b = extract_sensors(&spec, f);
        assert!((a.head_position - b.head_position).length() < 1e-9);
        assert!((a.hand_position - b.hand_position).length() < 1e-9);
    }
}

#[test]
fn sampling_hits_frames_exactly_and_interpolates_between() {
    let c = clip(Task::Squat, 0);
    for i in [0, 17, c.frames.len() - 1] {
        assert_eq!(sample_frame(&c, c.frame_time(i)).unwrap(), c.frames[i]);
    }
    let t = 10.25 * c.dt;
    let f = sample_frame(&c, t).unwrap();
    let (a, b) = (&c.frames[10], &c.frames[11]);
    let expect = a.pose.root_position.lerp(b.pose.root_position, 0.25);
    assert!((f.pose.root_position - expect).length() < 1e-12);
    assert_eq!(f.contacts, a.contacts);
    assert_eq!(sample_frame(&c, 10.75 * c.dt).unwrap().contacts, b.contacts);
    assert!(matches!(sample_frame(&c, -0.01), Err(MotionError::OutOfRange { .. })));
    assert!(matches!(sample_frame(&c, c.duration() + 0.1), Err(MotionError::OutOfRange { .. })));
}

#[test]
fn sampling_takes_the_short_way_around() {
    let mut c = clip(Task::StandIdle, 0);
    c.frames[0].pose.root_angle = 3.1;
    c.frames[1].pose.root_angle = -3.1;
    let f = sample_frame(&c, 0.5 * c.dt).unwrap();
    assert!((wrap_angle(f.pose.root_angle) - std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn clip_files_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for task in [Task::TiltChair { height: 0.45 }, Task::GetUpFromFloor, Task::StepOverBox { height: 0.2 }] {
        let c = clip(task, 5);
        let path = dir.path().join("clip.qeclip");
        save_clip(&c, &path).unwrap();
        let back = load_clip(&path).unwrap();
        assert_eq!(back, c);
        for (x, y) in back.frames.iter().zip(&c.frames) {
            for (u, v) in x.pose.joint_angles.iter().zip(&y.pose.joint_angles) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }
}

#[test]
fn clip_files_reject_bad_versions_and_truncation() {
    let text = encode_clip(&clip(Task::Squat, 0)).unwrap();
    let wrong = text.replacen("QECLIP 1", "QECLIP 2", 1);
    match decode_clip(&wrong) {
        Err(MotionError::Format(m)) => assert!(m.contains('2'), "{m}"),
        other => panic!("{other:?}"),
    }
    let cut = &text[..text.len() - 200];
    let cut = &cut[..cut.rfind('\n').unwrap() + 1];
    assert!(matches!(decode_clip(cut), Err(MotionError::Format(_))));
    let header_only = &text[..text.find("---").unwrap()];
    assert!(matches!(decode_clip(header_only), Err(MotionError::Format(_))));
}

#[test]
fn joint_names_follow_the_character() {
    let c = clip(Task::StandIdle, 0);
    let spec = CharacterSpec::standard();
    assert_eq!(c.joint_names.len(), spec.joints.len());
    assert_eq!(c.joint_names[joint::WAIST], spec.joints[joint::WAIST].name);
    assert!(FLOOR_HALF_EXTENTS.x > 10.0);
}
