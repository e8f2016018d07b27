use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::{MotionError, ObjectPose, ReferenceClip, ReferenceFrame};
use crate::charscene::{
    joint, link_states, CharacterPose, CharacterSpec, ContactState, Mobility, ObjectPart, Placement, SceneObjectSpec,
    FOREARM, SPINE, STANCE_ANGLE,
};
use crate::math::{smoothstep, Rot, Vec2};
use crate::rigidbody2d::Shape;

/// Clip sample interval, s.
pub const CLIP_DT: f64 = 1.0 / 30.0;

const SIT_RANGE: (f64, f64) = (0.1, 0.6);
const STEP_RANGE: (f64, f64) = (0.1, 0.3);
const TILT_RANGE: (f64, f64) = (0.35, 0.55);

/// Scripted motion categories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    StandIdle,
    Squat,
    SitOnObject { height: f64 },
    StepOverBox { height: f64 },
    LeanOnTable,
    GetUpFromFloor,
    /// Sit on a hinged chair and rock it backwards.
    TiltChair { height: f64 },
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::StandIdle => write!(f, "stand-idle"),
            Task::Squat => write!(f, "squat"),
            Task::SitOnObject { height } => write!(f, "sit-on-object({height})"),
            Task::StepOverBox { height } => write!(f, "step-over-box({height})"),
            Task::LeanOnTable => write!(f, "lean-on-table"),
            Task::GetUpFromFloor => write!(f, "get-up-from-floor"),
            Task::TiltChair { height } => write!(f, "tilt-chair({height})"),
        }
    }
}

impl FromStr for Task {
    type Err = MotionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, arg) = match s.split_once('(') {
            Some((name, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| MotionError::InvalidTask(format!("unbalanced parenthesis in {s:?}")))?;
                let v: f64 = inner
                    .trim()
                    .parse()
                    .map_err(|_| MotionError::InvalidTask(format!("bad parameter in {s:?}")))?;
                (name.trim(), Some(v))
            }
            None => (s, None),
        };
        let height = |default: f64| arg.unwrap_or(default);
        let task = match (name, arg) {
            ("stand-idle", None) => Task::StandIdle,
            ("squat", None) => Task::Squat,
            ("lean-on-table", None) => Task::LeanOnTable,
            ("get-up-from-floor", None) => Task::GetUpFromFloor,
            ("sit-on-object", _) => Task::SitOnObject { height: height(0.45) },
            ("step-over-box", _) => Task::StepOverBox { height: height(0.2) },
            ("tilt-chair", _) => Task::TiltChair { height: height(0.45) },
            _ => return Err(MotionError::InvalidTask(format!("unknown task {s:?}"))),
        };
        task.validate()?;
        Ok(task)
    }
}

impl Task {
    pub fn validate(&self) -> Result<(), MotionError> {
        let check = |h: f64, (lo, hi): (f64, f64)| {
            if h.is_finite() && h >= lo && h <= hi {
                Ok(())
            } else {
                Err(MotionError::InvalidTask(format!("{self}: height {h} outside [{lo}, {hi}]")))
            }
        };
        match *self {
            Task::SitOnObject { height } => check(height, SIT_RANGE),
            Task::StepOverBox { height } => check(height, STEP_RANGE),
            Task::TiltChair { height } => check(height, TILT_RANGE),
            _ => Ok(()),
        }
    }
}

/// Keyframe-scripted clip for the standard character.
pub fn generate_clip<R: Rng + ?Sized>(task: Task, duration: f64, rng: &mut R) -> Result<ReferenceClip, MotionError> {
    task.validate()?;
    if !(duration >= 2.0 && duration.is_finite()) {
        return Err(MotionError::InvalidTask(format!("duration {duration} s is below 2 s")));
    }
    let spec = CharacterSpec::standard();
    let rig = Rig::new(&spec);
    let frames = (duration / CLIP_DT).round() as usize;
    let d = (frames - 1) as f64 * CLIP_DT;
    let (scene, keys) = match task {
        Task::StandIdle => (Vec::new(), stand_idle(&rig, d, rng)),
        Task::Squat => (Vec::new(), squat(&rig, d, rng)),
        Task::SitOnObject { height } => sit_on_object(&rig, height, d, rng),
        Task::StepOverBox { height } => step_over_box(&rig, height, d),
        Task::LeanOnTable => lean_on_table(&rig, d, rng),
        Task::GetUpFromFloor => (Vec::new(), get_up_from_floor(&rig, d)),
        Task::TiltChair { height } => tilt_chair(&rig, height, d, rng),
    };
    let mut out: Vec<ReferenceFrame> = (0..frames)
        .map(|f| {
            let t = f as f64 * CLIP_DT;
            let (key, labels) = key_at(&rig, &keys, t);
            ReferenceFrame {
                pose: rig.solve(&key),
                contacts: ContactState(labels),
                objects: key.objects.clone(),
            }
        })
        .collect();
    fill_velocities(&mut out, CLIP_DT);
    Ok(ReferenceClip {
        task: task.to_string(),
        dt: CLIP_DT,
        joint_names: spec.joints.iter().map(|j| j.name.clone()).collect(),
        scene,
        frames: out,
    })
}

/// Central differences inside the clip, one-sided at its ends.
fn fill_velocities(frames: &mut [ReferenceFrame], dt: f64) {
    let n = frames.len();
    for f in 0..n {
        let (a, b) = (f.saturating_sub(1), (f + 1).min(n - 1));
        let h = (b - a) as f64 * dt;
        let (pa, pb) = (&frames[a].pose, &frames[b].pose);
        let root_velocity = (pb.root_position - pa.root_position) / h;
        let root_angular_velocity = (pb.root_angle - pa.root_angle) / h;
        let joint_velocities: Vec<f64> = pa.joint_angles.iter().zip(&pb.joint_angles).map(|(x, y)| (y - x) / h).collect();
        let p = &mut frames[f].pose;
        p.root_velocity = root_velocity;
        p.root_angular_velocity = root_angular_velocity;
        p.joint_velocities = joint_velocities;
    }
}

#[derive(Debug, Clone, Copy)]
enum Arm {
    /// Shoulder and elbow angles.
    Angles(f64, f64),
    /// World target of the hand tip.
    Reach(Vec2),
}

/// Task-space keyframe: pelvis pose, trunk angles, arm, and ankle targets with foot angles.
#[derive(Debug, Clone)]
struct Key {
    t: f64,
    pelvis: Vec2,
    pelvis_angle: f64,
    waist: f64,
    neck: f64,
    arm: Arm,
    /// Left then right ankle pivot positions.
    ankles: [Vec2; 2],
    feet: [f64; 2],
    labels: [bool; 5],
    objects: Vec<ObjectPose>,
}

const L_PELVIS: usize = 0;
const L_FOOT_L: usize = 2;
const L_FOOT_R: usize = 3;
const L_HAND: usize = 4;

fn labels(bits: &[usize]) -> [bool; 5] {
    let mut out = [false; 5];
    for &b in bits {
        out[b] = true;
    }
    out
}

impl Key {
    fn at(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    fn with_labels(mut self, bits: &[usize]) -> Self {
        self.labels = labels(bits);
        self
    }
}

/// Segment lengths and fixed offsets of the standard character used by the scripts.
struct Rig {
    spec: CharacterSpec,
    thigh: f64,
    shank: f64,
    upper_arm: f64,
    forearm: f64,
    /// Ankle pivot height above the sole of a flat foot.
    ankle_height: f64,
    stand_height: f64,
    stance: f64,
}

impl Rig {
    fn new(spec: &CharacterSpec) -> Self {
        let j = &spec.joints;
        let thigh = (j[joint::HIP_L].anchor_child - j[joint::KNEE_L].anchor_parent).length();
        let shank = (j[joint::KNEE_L].anchor_child - j[joint::ANKLE_L].anchor_parent).length();
        let upper_arm = (j[joint::SHOULDER].anchor_child - j[joint::ELBOW].anchor_parent).length();
        let forearm = (j[joint::ELBOW].anchor_child - spec.hand_tip).length();
        let foot = &spec.links[crate::charscene::FOOT_L];
        let foot_half = match foot.shape {
            Shape::Box { half_extents } => half_extents.y,
            _ => 0.0,
        };
        let ankle_height = j[joint::ANKLE_L].anchor_child.y + foot_half;
        let leg = thigh + shank;
        Self {
            spec: spec.clone(),
            thigh,
            shank,
            upper_arm,
            forearm,
            ankle_height,
            stand_height: ankle_height + leg * STANCE_ANGLE.cos(),
            stance: leg * STANCE_ANGLE.sin(),
        }
    }

    /// Upright stance centred on `x` with both feet flat and labelled.
    fn standing(&self, x: f64) -> Key {
        Key {
            t: 0.0,
            pelvis: Vec2::new(x, self.stand_height),
            pelvis_angle: 0.0,
            waist: 0.0,
            neck: 0.0,
            arm: Arm::Angles(0.0, 0.15),
            ankles: [
                Vec2::new(x + self.stance, self.ankle_height),
                Vec2::new(x - self.stance, self.ankle_height),
            ],
            feet: [0.0, 0.0],
            labels: labels(&[L_FOOT_L, L_FOOT_R]),
            objects: Vec::new(),
        }
    }

    fn shoulder(&self, key: &Key) -> (Vec2, f64) {
        let mut angles = vec![0.0; self.spec.joints.len()];
        angles[joint::WAIST] = key.waist;
        let states = link_states(&self.spec, &CharacterPose::at_rest(key.pelvis, key.pelvis_angle, angles));
        let spine = states[SPINE];
        let anchor = self.spec.joints[joint::SHOULDER].anchor_parent;
        (spine.position + Rot::new(spine.angle).apply(anchor), spine.angle)
    }

    fn arm_angles(&self, key: &Key) -> (f64, f64) {
        match key.arm {
            Arm::Angles(s, e) => (s, e),
            Arm::Reach(target) => {
                let (shoulder, spine_angle) = self.shoulder(key);
                let (upper, fore) = two_link(shoulder, target, self.upper_arm, self.forearm, -1.0);
                (upper - spine_angle, fore - upper)
            }
        }
    }

    fn hand(&self, key: &Key) -> Vec2 {
        match key.arm {
            Arm::Reach(target) => target,
            Arm::Angles(..) => {
                let pose = self.solve(key);
                let states = link_states(&self.spec, &pose);
                let f = states[FOREARM];
                f.position + Rot::new(f.angle).apply(self.spec.hand_tip)
            }
        }
    }

    fn solve(&self, key: &Key) -> CharacterPose {
        let mut q = vec![0.0; self.spec.joints.len()];
        q[joint::WAIST] = key.waist;
        q[joint::NECK] = key.neck;
        let (s, e) = self.arm_angles(key);
        q[joint::SHOULDER] = s;
        q[joint::ELBOW] = e;
        let legs = [(joint::HIP_L, joint::KNEE_L, joint::ANKLE_L), (joint::HIP_R, joint::KNEE_R, joint::ANKLE_R)];
        for (side, &(hip, knee, ankle)) in legs.iter().enumerate() {
            let (thigh, shank) = two_link(key.pelvis, key.ankles[side], self.thigh, self.shank, 1.0);
            q[hip] = thigh - key.pelvis_angle;
            q[knee] = shank - thigh;
            q[ankle] = key.feet[side] - shank;
        }
        for (a, j) in q.iter_mut().zip(&self.spec.joints) {
            *a = a.clamp(j.lower, j.upper);
        }
        CharacterPose::at_rest(key.pelvis, key.pelvis_angle, q)
    }
}

/// Two-segment inverse kinematics in the plane. Angles are measured from straight down,
/// counter-clockwise; `bend` +1 puts the middle joint ahead of the base-target line.
fn two_link(base: Vec2, target: Vec2, l1: f64, l2: f64, bend: f64) -> (f64, f64) {
    let delta = target - base;
    let d = delta.length().clamp((l1 - l2).abs() + 1e-9, l1 + l2 - 1e-9);
    let cos_b = ((l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d)).clamp(-1.0, 1.0);
    let gamma = delta.x.atan2(-delta.y);
    let first = gamma + bend * cos_b.acos();
    let mid = base + Vec2::new(first.sin(), -first.cos()) * l1;
    let rest = target - mid;
    (first, rest.x.atan2(-rest.y))
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + (b - a) * s
}

/// Blended key at time `t` and the labels that hold there.
fn key_at(rig: &Rig, keys: &[Key], t: f64) -> (Key, [bool; 5]) {
    let last = keys.len() - 1;
    if t <= keys[0].t {
        return (keys[0].clone(), keys[0].labels);
    }
    let k = match keys.iter().position(|k| k.t > t) {
        Some(k) => k - 1,
        None => return (keys[last].clone(), keys[last].labels),
    };
    let (a, b) = (&keys[k], &keys[k + 1]);
    let eps = 1e-9;
    let labels = if (t - a.t).abs() < eps {
        a.labels
    } else if (b.t - t).abs() < eps {
        b.labels
    } else {
        std::array::from_fn(|i| a.labels[i] && b.labels[i])
    };
    let s = smoothstep((t - a.t) / (b.t - a.t));
    let mut key = Key {
        t,
        pelvis: a.pelvis.lerp(b.pelvis, s),
        pelvis_angle: lerp(a.pelvis_angle, b.pelvis_angle, s),
        waist: lerp(a.waist, b.waist, s),
        neck: lerp(a.neck, b.neck, s),
        arm: a.arm,
        ankles: [a.ankles[0].lerp(b.ankles[0], s), a.ankles[1].lerp(b.ankles[1], s)],
        feet: [lerp(a.feet[0], b.feet[0], s), lerp(a.feet[1], b.feet[1], s)],
        labels,
        objects: a
            .objects
            .iter()
            .zip(&b.objects)
            .map(|(p, q)| ObjectPose {
                position: p.position.lerp(q.position, s),
                angle: lerp(p.angle, q.angle, s),
            })
            .collect(),
    };
    key.arm = match (a.arm, b.arm) {
        (Arm::Angles(s0, e0), Arm::Angles(s1, e1)) => Arm::Angles(lerp(s0, s1, s), lerp(e0, e1, s)),
        // a hand that reaches at either end travels in a straight line
        _ => Arm::Reach(rig.hand(a).lerp(rig.hand(b), s)),
    };
    (key, labels)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn stand_idle<R: Rng + ?Sized>(rig: &Rig, d: f64, rng: &mut R) -> Vec<Key> {
    let mut keys = vec![rig.standing(0.0)];
    let mut t = 0.0;
    loop {
        t += uniform(rng, 1.2, 1.8);
        if t > d - 0.6 {
            break;
        }
        let mut k = rig.standing(0.0).at(t);
        k.pelvis += Vec2::new(uniform(rng, -0.02, 0.02), -uniform(rng, 0.0, 0.02));
        k.waist = uniform(rng, -0.08, 0.05);
        k.neck = uniform(rng, -0.15, 0.15);
        k.arm = Arm::Angles(uniform(rng, 0.0, 0.3), uniform(rng, 0.1, 0.6));
        keys.push(k);
    }
    keys.push(rig.standing(0.0).at(d));
    keys
}

fn squat<R: Rng + ?Sized>(rig: &Rig, d: f64, rng: &mut R) -> Vec<Key> {
    let mut keys = vec![rig.standing(0.0)];
    let mut t = 0.4;
    keys.push(rig.standing(0.0).at(t));
    loop {
        let period = uniform(rng, 2.5, 3.5);
        if t + period > d {
            break;
        }
        let mut down = rig.standing(0.0).at(t + 0.45 * period);
        down.pelvis = Vec2::new(-0.06, uniform(rng, 0.58, 0.68));
        down.waist = -0.45;
        down.neck = 0.2;
        down.arm = Arm::Angles(1.3, 0.2);
        keys.push(down.clone());
        keys.push(down.at(t + 0.55 * period));
        t += period;
        keys.push(rig.standing(0.0).at(t));
    }
    if t < d {
        keys.push(rig.standing(0.0).at(d));
    }
    keys
}

fn seat_box(height: f64) -> SceneObjectSpec {
    SceneObjectSpec::fixed_box("seat", Vec2::new(-0.475, 0.5 * height), Vec2::new(0.175, 0.5 * height))
}

/// Pelvis centre height when sitting on a surface at `height`.
fn seated_height(rig: &Rig, height: f64) -> f64 {
    let half = match rig.spec.links[crate::charscene::PELVIS].shape {
        Shape::Box { half_extents } => half_extents.y,
        _ => 0.0,
    };
    height + half
}

fn sit_on_object<R: Rng + ?Sized>(rig: &Rig, height: f64, d: f64, rng: &mut R) -> (Vec<SceneObjectSpec>, Vec<Key>) {
    let seat = seat_box(height);
    let objects = vec![ObjectPose {
        position: seat.placement.position,
        angle: 0.0,
    }];
    let y = seated_height(rig, height);
    let with_objects = |mut k: Key| {
        k.objects = objects.clone();
        k
    };
    let stand = with_objects(rig.standing(0.0));
    let mut lowering = stand.clone();
    lowering.pelvis = Vec2::new(-0.28, y + 0.07);
    lowering.waist = -0.55;
    lowering.neck = 0.25;
    lowering.arm = Arm::Angles(1.0, 0.4);
    let mut seated = stand.clone().with_labels(&[L_PELVIS, L_FOOT_L, L_FOOT_R]);
    seated.pelvis = Vec2::new(-0.31, y);
    seated.waist = -0.1;
    seated.arm = Arm::Angles(0.3, 0.8);
    let mut shifting = seated.clone();
    shifting.waist = uniform(rng, -0.2, 0.05);
    shifting.neck = uniform(rng, -0.2, 0.2);
    shifting.arm = Arm::Angles(uniform(rng, 0.0, 0.6), uniform(rng, 0.3, 1.2));
    let keys = vec![
        stand.clone().at(0.0),
        stand.clone().at(0.12 * d),
        lowering.clone().at(0.30 * d),
        seated.clone().at(0.40 * d),
        shifting.at(0.52 * d),
        seated.at(0.65 * d),
        lowering.at(0.75 * d),
        stand.clone().at(0.87 * d),
        stand.at(d),
    ];
    (vec![seat], keys)
}

fn step_over_box(rig: &Rig, height: f64, d: f64) -> (Vec<SceneObjectSpec>, Vec<Key>) {
    let obstacle = SceneObjectSpec::fixed_box("obstacle", Vec2::new(0.45, 0.5 * height), Vec2::new(0.08, 0.5 * height));
    let objects = vec![ObjectPose {
        position: obstacle.placement.position,
        angle: 0.0,
    }];
    let a = rig.ankle_height;
    let lift = height + a + 0.08;
    let key = |t: f64, pelvis: Vec2, left: Vec2, right: Vec2, bits: &[usize]| {
        let mut k = rig.standing(0.0).at(t).with_labels(bits);
        k.pelvis = pelvis;
        k.ankles = [left, right];
        k.objects = objects.clone();
        k.arm = Arm::Angles(0.2, 0.4);
        k
    };
    let both = [L_FOOT_L, L_FOOT_R];
    let (l0, r0) = (Vec2::new(rig.stance, a), Vec2::new(-rig.stance, a));
    let end = 0.72;
    let (l1, r1) = (Vec2::new(end + rig.stance, a), Vec2::new(end - rig.stance, a));
    let mut first = rig.standing(0.0).with_labels(&both);
    first.objects = objects.clone();
    let mut last = rig.standing(end).at(d).with_labels(&both);
    last.objects = objects.clone();
    let keys = vec![
        first,
        key(0.08 * d, Vec2::new(-0.02, 0.91), l0, r0, &both),
        key(0.18 * d, Vec2::new(0.0, 0.89), Vec2::new(0.05, lift), r0, &[L_FOOT_R]),
        key(0.30 * d, Vec2::new(0.22, 0.84), Vec2::new(0.62, lift), r0, &[L_FOOT_R]),
        key(0.40 * d, Vec2::new(0.34, 0.76), l1, r0, &both),
        key(0.50 * d, Vec2::new(0.38, 0.76), l1, r0, &both),
        key(0.60 * d, Vec2::new(0.60, 0.88), l1, Vec2::new(0.05, lift + 0.13), &[L_FOOT_L]),
        key(0.72 * d, Vec2::new(0.70, 0.86), l1, Vec2::new(0.68, lift), &[L_FOOT_L]),
        key(0.82 * d, Vec2::new(end, 0.90), l1, r1, &both),
        last,
    ];
    (vec![obstacle], keys)
}

fn lean_on_table<R: Rng + ?Sized>(rig: &Rig, d: f64, rng: &mut R) -> (Vec<SceneObjectSpec>, Vec<Key>) {
    let top = 0.75;
    let table = SceneObjectSpec::fixed_box("table", Vec2::new(0.75, 0.5 * top), Vec2::new(0.30, 0.5 * top));
    let objects = vec![ObjectPose {
        position: table.placement.position,
        angle: 0.0,
    }];
    let radius = match rig.spec.links[FOREARM].shape {
        Shape::Capsule { radius, .. } => radius,
        _ => 0.0,
    };
    let palm = Vec2::new(uniform(rng, 0.56, 0.62), top + radius);
    let mut stand = rig.standing(0.0);
    stand.objects = objects.clone();
    let mut above = stand.clone();
    above.waist = -0.3;
    above.arm = Arm::Reach(Vec2::new(palm.x, top + 0.2));
    let mut lean = stand.clone().with_labels(&[L_FOOT_L, L_FOOT_R, L_HAND]);
    lean.pelvis = Vec2::new(-0.03, rig.stand_height - 0.01);
    lean.waist = -0.55;
    lean.neck = 0.3;
    lean.arm = Arm::Reach(palm);
    let mut deeper = lean.clone();
    deeper.waist = uniform(rng, -0.7, -0.45);
    let keys = vec![
        stand.clone().at(0.0),
        stand.clone().at(0.12 * d),
        above.clone().at(0.25 * d),
        lean.clone().at(0.35 * d),
        deeper.at(0.5 * d),
        lean.at(0.62 * d),
        above.at(0.72 * d),
        stand.clone().at(0.85 * d),
        stand.at(d),
    ];
    (vec![table], keys)
}

fn get_up_from_floor(rig: &Rig, d: f64) -> Vec<Key> {
    let y = seated_height(rig, 0.0);
    let leg = rig.thigh + rig.shank;
    let mut extended = rig.standing(0.0).with_labels(&[L_PELVIS]);
    extended.pelvis = Vec2::new(0.0, y);
    extended.ankles = [Vec2::new(leg, y), Vec2::new(leg, y)];
    extended.feet = [std::f64::consts::FRAC_PI_2; 2];
    extended.arm = Arm::Angles(1.3, 0.3);
    let feet_x = 0.55;
    let planted = [Vec2::new(feet_x + 0.02, rig.ankle_height), Vec2::new(feet_x - 0.02, rig.ankle_height)];
    let mut drawing = extended.clone();
    drawing.ankles = [Vec2::new(0.68, 0.16); 2];
    drawing.feet = [0.6, 0.6];
    let mut tucked = extended.clone().with_labels(&[L_PELVIS, L_FOOT_L, L_FOOT_R]);
    tucked.ankles = planted;
    tucked.feet = [0.0, 0.0];
    let mut leaning = tucked.clone();
    leaning.waist = -0.7;
    leaning.neck = 0.3;
    leaning.arm = Arm::Angles(2.0, 0.3);
    let mut crouch = leaning.clone().with_labels(&[L_FOOT_L, L_FOOT_R]);
    crouch.pelvis = Vec2::new(feet_x - 0.12, 0.48);
    crouch.waist = -0.6;
    let mut stand = rig.standing(feet_x);
    stand.ankles = planted;
    vec![
        extended.clone().at(0.0),
        extended.at(0.1 * d),
        drawing.at(0.18 * d),
        tucked.at(0.25 * d),
        leaning.at(0.4 * d),
        crouch.at(0.6 * d),
        stand.clone().at(0.82 * d),
        stand.at(d),
    ]
}

fn tilting_chair(height: f64, seat_x: f64) -> SceneObjectSpec {
    let slab = 0.03;
    let back_x = -0.13;
    let post_half = 0.5 * (height - 2.0 * slab);
    SceneObjectSpec {
        name: "chair".into(),
        parts: vec![
            ObjectPart {
                shape: Shape::cuboid(0.16, slab),
                offset: Vec2::ZERO,
                angle: 0.0,
            },
            ObjectPart {
                shape: Shape::cuboid(slab, 0.3),
                offset: Vec2::new(back_x, slab + 0.3),
                angle: 0.0,
            },
            ObjectPart {
                shape: Shape::cuboid(slab, post_half),
                offset: Vec2::new(back_x, -slab - post_half),
                angle: 0.0,
            },
        ],
        placement: Placement {
            position: Vec2::new(seat_x, height - slab),
            angle: 0.0,
        },
        mobility: Mobility::Hinged {
            anchor: Vec2::new(back_x, slab - height),
            limits: (0.0, 0.35),
            stiffness: 60.0,
        },
        density: 200.0,
    }
}

fn tilt_chair<R: Rng + ?Sized>(rig: &Rig, height: f64, d: f64, rng: &mut R) -> (Vec<SceneObjectSpec>, Vec<Key>) {
    let chair = tilting_chair(height, -0.36);
    let Mobility::Hinged { anchor, .. } = chair.mobility else {
        unreachable!()
    };
    let pivot = chair.placement.position + anchor;
    let tilted = |angle: f64, base: &Key| {
        let r = Rot::new(angle);
        let mut k = base.clone();
        k.pelvis = pivot + r.apply(base.pelvis - pivot);
        k.pelvis_angle = base.pelvis_angle + angle;
        k.objects = vec![ObjectPose {
            position: pivot + r.apply(chair.placement.position - pivot),
            angle,
        }];
        k
    };
    let mut seated = rig.standing(0.0).with_labels(&[L_PELVIS, L_FOOT_L, L_FOOT_R]);
    seated.pelvis = Vec2::new(-0.21, seated_height(rig, height));
    seated.arm = Arm::Angles(0.3, 0.9);
    let rest = tilted(0.0, &seated);
    let back = uniform(rng, 0.18, 0.28);
    let mut leaning = seated.clone();
    leaning.neck = 0.2;
    leaning.arm = Arm::Angles(0.6, 1.0);
    let tilt = tilted(back, &leaning);
    let keys = vec![
        rest.clone().at(0.0),
        rest.clone().at(0.2 * d),
        tilt.clone().at(0.4 * d),
        tilt.at(0.6 * d),
        rest.clone().at(0.8 * d),
        rest.at(d),
    ];
    (vec![chair], keys)
}
