//! Policy input in the avatar-centric facing frame: simulated state, a time window of
//! head and hand sensors, and a height profile of the surrounding scene.
//!
//! Vector length for `L` links, `J` joints, `C` contact links, `K` window samples and
//! `G` height stations is `7L + 2J + 2C + K·S + G`, with `S = 6` (head orientation,
//! head position, hand position) or `S = 4` when only the head is tracked.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::charscene::CharacterSpec;
use crate::math::{wrap_angle, Rot, Vec2};
use crate::motionlib::SensorFrame;
use crate::rigidbody2d::{Shape, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum ObservationError {
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("empty sensor stream")]
    EmptyStream,
}

/// Planar facing frame: the pelvis projected onto the ground plus a heading sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacingFrame {
    pub origin: Vec2,
    pub heading: f64,
}

impl FacingFrame {
    pub fn point(&self, p: Vec2) -> Vec2 {
        Vec2::new(self.heading * (p.x - self.origin.x), p.y - self.origin.y)
    }

    pub fn vector(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.heading * v.x, v.y)
    }

    /// Orientation angles and angular rates change sign under reflection.
    pub fn angle(&self, a: f64) -> f64 {
        self.heading * a
    }

    /// World station of a facing-frame horizontal offset.
    pub fn station(&self, offset: f64) -> f64 {
        self.origin.x + self.heading * offset
    }
}

pub fn compute_facing_frame(world: &WorldState, spec: &CharacterSpec) -> FacingFrame {
    let pelvis = &world.bodies[0];
    let forward = Rot::new(pelvis.angle).apply(Vec2::new(spec.facing, 0.0));
    FacingFrame {
        origin: Vec2::new(pelvis.position.x, 0.0),
        heading: if forward.x < 0.0 { -1.0 } else { 1.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub past: f64,
    pub future: f64,
    pub stride: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            past: 1.0,
            future: 1.0,
            stride: 0.2,
        }
    }
}

impl WindowParams {
    fn steps(extent: f64, stride: f64) -> Option<usize> {
        let n = (extent / stride).round();
        ((extent / stride - n).abs() < 1e-9).then_some(n as usize)
    }

    pub fn validate(&self) -> Result<(), ObservationError> {
        if !(self.stride > 0.0 && self.stride.is_finite()) {
            return Err(ObservationError::InvalidWindow(format!("stride {} must be positive", self.stride)));
        }
        for (name, e) in [("past", self.past), ("future", self.future)] {
            if !(e >= 0.0 && e.is_finite()) || Self::steps(e, self.stride).is_none() {
                return Err(ObservationError::InvalidWindow(format!(
                    "{name} extent {e} is not a non-negative multiple of stride {}",
                    self.stride
                )));
            }
        }
        Ok(())
    }

    pub fn past_steps(&self) -> usize {
        Self::steps(self.past, self.stride).unwrap_or(0)
    }

    pub fn future_steps(&self) -> usize {
        Self::steps(self.future, self.stride).unwrap_or(0)
    }

    /// Number of window samples.
    pub fn samples(&self) -> usize {
        self.past_steps() + self.future_steps() + 1
    }

    /// Sample time offsets, past to future.
    pub fn offsets(&self) -> Vec<f64> {
        let p = self.past_steps() as i64;
        let f = self.future_steps() as i64;
        (-p..=f).map(|k| k as f64 * self.stride).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightGrid {
    /// Horizontal facing-frame offsets, m.
    pub offsets: Vec<f64>,
}

impl Default for HeightGrid {
    fn default() -> Self {
        Self {
            offsets: (-6..=6).map(|k| k as f64 * 0.08).collect(),
        }
    }
}

/// Which inputs the policy sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationConfig {
    pub window: WindowParams,
    pub grid: HeightGrid,
    /// Include the height profile.
    pub scene: bool,
    /// Include the hand sensor.
    pub hand: bool,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            window: WindowParams::default(),
            grid: HeightGrid::default(),
            scene: true,
            hand: true,
        }
    }
}

/// One named block of the observation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationLayout {
    pub fields: Vec<Field>,
    pub sim_len: usize,
    pub user_len: usize,
    pub scene_len: usize,
}

impl ObservationLayout {
    pub fn new(spec: &CharacterSpec, config: &ObservationConfig) -> Self {
        let mut fields: Vec<Field> = Vec::new();
        let end = |fields: &[Field]| fields.last().map_or(0, |f| f.offset + f.len);
        let push = |fields: &mut Vec<Field>, name: String, len: usize| {
            let offset = end(fields);
            fields.push(Field { name, offset, len });
        };
        for l in &spec.links {
            push(&mut fields, format!("sim.link.{}.position", l.name), 2);
            push(&mut fields, format!("sim.link.{}.velocity", l.name), 2);
            push(&mut fields, format!("sim.link.{}.orientation", l.name), 2);
            push(&mut fields, format!("sim.link.{}.angular_velocity", l.name), 1);
        }
        push(&mut fields, "sim.joint_angles".into(), spec.joints.len());
        push(&mut fields, "sim.joint_velocities".into(), spec.joints.len());
        for &c in &spec.contact_links {
            push(&mut fields, format!("sim.contact_force.{}", spec.links[c].name), 2);
        }
        let sim_len = end(&fields);
        for (k, dt) in config.window.offsets().iter().enumerate() {
            push(&mut fields, format!("user.{k}.head_orientation@{dt:+.3}"), 2);
            push(&mut fields, format!("user.{k}.head_position@{dt:+.3}"), 2);
            if config.hand {
                push(&mut fields, format!("user.{k}.hand_position@{dt:+.3}"), 2);
            }
        }
        let user_len = end(&fields) - sim_len;
        if config.scene {
            push(&mut fields, "scene.height_profile".into(), config.grid.offsets.len());
        }
        let scene_len = end(&fields) - sim_len - user_len;
        Self {
            fields,
            sim_len,
            user_len,
            scene_len,
        }
    }

    pub fn len(&self) -> usize {
        self.sim_len + self.user_len + self.scene_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Closed-form length, see the module documentation.
    pub fn formula(spec: &CharacterSpec, config: &ObservationConfig) -> usize {
        let per_sample = if config.hand { 6 } else { 4 };
        let grid = if config.scene { config.grid.offsets.len() } else { 0 };
        7 * spec.links.len() + 2 * spec.joints.len() + 2 * spec.contact_links.len() + config.window.samples() * per_sample + grid
    }

    /// One `name offset length` line per field.
    pub fn describe(&self) -> String {
        let mut out = format!("observation_length {}\n", self.len());
        for f in &self.fields {
            out.push_str(&format!("{} {} {}\n", f.name, f.offset, f.len));
        }
        out
    }

    /// Hex SHA-256 of the layout description, grid stations included.
    pub fn hash(&self, config: &ObservationConfig) -> String {
        let mut h = Sha256::new();
        h.update(self.describe().as_bytes());
        if config.scene {
            for o in &config.grid.offsets {
                h.update(o.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Simulated character state in the facing frame. Contact forces are divided by the
/// character's weight.
pub fn encode_sim_state(world: &WorldState, spec: &CharacterSpec, frame: &FacingFrame, dt: f64) -> Vec<f64> {
    let n = spec.links.len();
    let mut out = Vec::with_capacity(7 * n + 2 * spec.joints.len() + 2 * spec.contact_links.len());
    for b in &world.bodies[..n] {
        let p = frame.point(b.position);
        let v = frame.vector(b.velocity);
        let a = frame.angle(b.angle);
        out.extend([p.x, p.y, v.x, v.y, a.cos(), a.sin(), frame.angle(b.angular_velocity)]);
    }
    let joints = &world.joints[..spec.joints.len()];
    out.extend(joints.iter().map(|j| frame.angle(wrap_angle(j.angle(&world.bodies)))));
    out.extend(joints.iter().map(|j| frame.angle(j.angular_velocity(&world.bodies))));
    let weight = spec.total_mass() * world.gravity.length().max(1e-12);
    for &c in &spec.contact_links {
        let f = frame.vector(world.contact_force_on(c, dt)) / weight;
        out.extend([f.x, f.y]);
    }
    out
}

/// Sensor stream value at time `t`, clamped to the stream ends and linearly interpolated.
pub fn sensor_at(stream: &[SensorFrame], dt: f64, t: f64) -> SensorFrame {
    let last = stream.len() - 1;
    let x = (t / dt).clamp(0.0, last as f64);
    let i = (x.floor() as usize).min(last);
    let s = x - i as f64;
    if i == last || s < 1e-9 {
        return stream[i];
    }
    let (a, b) = (&stream[i], &stream[i + 1]);
    let ang = a.head_angle() + wrap_angle(b.head_angle() - a.head_angle()) * s;
    SensorFrame {
        head_rot: (ang.cos(), ang.sin()),
        head_position: a.head_position.lerp(b.head_position, s),
        hand_position: a.hand_position.lerp(b.hand_position, s),
    }
}

pub fn encode_sensor_window(
    stream: &[SensorFrame],
    dt: f64,
    t: f64,
    config: &ObservationConfig,
    frame: &FacingFrame,
) -> Result<Vec<f64>, ObservationError> {
    config.window.validate()?;
    if stream.is_empty() {
        return Err(ObservationError::EmptyStream);
    }
    let mut out = Vec::new();
    for off in config.window.offsets() {
        let s = sensor_at(stream, dt, t + off);
        let a = frame.angle(s.head_angle());
        let head = frame.point(s.head_position);
        out.extend([a.cos(), a.sin(), head.x, head.y]);
        if config.hand {
            let hand = frame.point(s.hand_position);
            out.extend([hand.x, hand.y]);
        }
    }
    Ok(out)
}

/// Highest point of `shape` on the vertical line at `x`, if the line meets it.
pub fn top_at(shape: &Shape, position: Vec2, angle: f64, x: f64) -> Option<f64> {
    let circle_top = |c: Vec2, r: f64| {
        let dx = x - c.x;
        (dx.abs() <= r).then(|| c.y + (r * r - dx * dx).max(0.0).sqrt())
    };
    let rot = Rot::new(angle);
    match *shape {
        Shape::Circle { radius } => circle_top(position, radius),
        Shape::Capsule { length, radius } => {
            let half = rot.apply(Vec2::new(0.5 * length, 0.0));
            let (p0, p1) = (position - half, position + half);
            let mut best = circle_top(p0, radius).into_iter().chain(circle_top(p1, radius)).reduce(f64::max);
            // flat side of the capsule facing up
            let d = (p1 - p0).normalized();
            let mut n = d.perp();
            if n.y < 0.0 {
                n = -n;
            }
            let (q0, q1) = (p0 + n * radius, p1 + n * radius);
            let (lo, hi) = if q0.x <= q1.x { (q0, q1) } else { (q1, q0) };
            if x >= lo.x && x <= hi.x && hi.x > lo.x {
                let y = lo.y + (hi.y - lo.y) * (x - lo.x) / (hi.x - lo.x);
                best = Some(best.map_or(y, |b: f64| b.max(y)));
            }
            best
        }
        Shape::Box { half_extents: h } => {
            let corners = [
                Vec2::new(-h.x, -h.y),
                Vec2::new(h.x, -h.y),
                Vec2::new(h.x, h.y),
                Vec2::new(-h.x, h.y),
            ]
            .map(|c| position + rot.apply(c));
            let mut best: Option<f64> = None;
            for k in 0..4 {
                let (a, b) = (corners[k], corners[(k + 1) % 4]);
                let (lo, hi) = if a.x <= b.x { (a, b) } else { (b, a) };
                if x < lo.x || x > hi.x {
                    continue;
                }
                let y = if hi.x - lo.x < 1e-15 {
                    lo.y.max(hi.y)
                } else {
                    lo.y + (hi.y - lo.y) * (x - lo.x) / (hi.x - lo.x)
                };
                best = Some(best.map_or(y, |v| v.max(y)));
            }
            best
        }
    }
}

/// Top-surface height of the non-character bodies (floor included) at each grid station.
pub fn sample_height_profile(world: &WorldState, spec: &CharacterSpec, frame: &FacingFrame, grid: &HeightGrid) -> Vec<f64> {
    let scene = &world.bodies[spec.links.len()..];
    grid.offsets
        .iter()
        .map(|&o| {
            let x = frame.station(o);
            let top = scene
                .iter()
                .filter_map(|b| top_at(&b.shape, b.position, b.angle, x))
                .fold(f64::NEG_INFINITY, f64::max);
            if top.is_finite() {
                top - frame.origin.y
            } else {
                0.0
            }
        })
        .collect()
}

/// Full observation at time `t` of the sensor stream.
pub fn build_observation(
    world: &WorldState,
    spec: &CharacterSpec,
    stream: &[SensorFrame],
    stream_dt: f64,
    t: f64,
    config: &ObservationConfig,
    physics_dt: f64,
) -> Result<Vec<f64>, ObservationError> {
    let frame = compute_facing_frame(world, spec);
    let mut out = encode_sim_state(world, spec, &frame, physics_dt);
    out.extend(encode_sensor_window(stream, stream_dt, t, config, &frame)?);
    if config.scene {
        out.extend(sample_height_profile(world, spec, &frame, &config.grid));
    }
    Ok(out)
}
