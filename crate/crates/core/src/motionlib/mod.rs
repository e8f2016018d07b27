//! Procedural reference clips, frame interpolation, forward kinematics and the
//! synthetic head/hand sensor stream.

mod clipfile;
mod generate;

pub use clipfile::{decode_clip, encode_clip, load_clip, save_clip, CLIP_MAGIC, CLIP_VERSION};
pub use generate::{generate_clip, Task, CLIP_DT};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charscene::{build_world, link_states, CharacterPose, CharacterSpec, ContactState, Placement, SceneError, SceneObjectSpec};
use crate::math::{wrap_angle, Vec2};
use crate::rigidbody2d::WorldState;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("time {t} outside clip of duration {duration}")]
    OutOfRange { t: f64, duration: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("clip format error: {0}")]
    Format(String),
}

/// Pose of a scene object's placement at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub position: Vec2,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFrame {
    pub pose: CharacterPose,
    pub contacts: ContactState,
    /// One entry per scene object, in scene order.
    pub objects: Vec<ObjectPose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceClip {
    pub task: String,
    pub dt: f64,
    pub joint_names: Vec<String>,
    pub scene: Vec<SceneObjectSpec>,
    pub frames: Vec<ReferenceFrame>,
}

/// Head orientation and position plus the hand position, world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    /// (cos, sin) of the head angle.
    pub head_rot: (f64, f64),
    pub head_position: Vec2,
    pub hand_position: Vec2,
}

impl SensorFrame {
    pub fn head_angle(&self) -> f64 {
        self.head_rot.1.atan2(self.head_rot.0)
    }
}

/// World pose of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPose {
    pub position: Vec2,
    pub angle: f64,
}

/// Link poses by traversal from the pelvis.
pub fn forward_kinematics(spec: &CharacterSpec, root_position: Vec2, root_angle: f64, joint_angles: &[f64]) -> Vec<LinkPose> {
    let pose = CharacterPose::at_rest(root_position, root_angle, joint_angles.to_vec());
    link_states(spec, &pose)
        .into_iter()
        .map(|s| LinkPose {
            position: s.position,
            angle: s.angle,
        })
        .collect()
}

/// Head and hand sensors of a character pose.
pub fn sensors_from_pose(spec: &CharacterSpec, pose: &CharacterPose) -> SensorFrame {
    let links = forward_kinematics(spec, pose.root_position, pose.root_angle, &pose.joint_angles);
    sensors_from_links(spec, &links)
}

pub fn sensors_from_links(spec: &CharacterSpec, links: &[LinkPose]) -> SensorFrame {
    let head = links[spec.head_link];
    let hand = links[spec.hand_link];
    let (s, c) = head.angle.sin_cos();
    SensorFrame {
        head_rot: (c, s),
        head_position: head.position,
        hand_position: hand.position + crate::math::Rot::new(hand.angle).apply(spec.hand_tip),
    }
}

/// Sensors of a simulated world whose first bodies are the character links.
pub fn sensors_from_world(spec: &CharacterSpec, world: &WorldState) -> SensorFrame {
    let links: Vec<LinkPose> = world.bodies[..spec.links.len()]
        .iter()
        .map(|b| LinkPose {
            position: b.position,
            angle: b.angle,
        })
        .collect();
    sensors_from_links(spec, &links)
}

pub fn extract_sensors(spec: &CharacterSpec, frame: &ReferenceFrame) -> SensorFrame {
    sensors_from_pose(spec, &frame.pose)
}

impl ReferenceClip {
    pub fn duration(&self) -> f64 {
        (self.frames.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn frame_time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }

    /// Scene with every object moved to its pose at `frame`.
    pub fn scene_at(&self, frame: &ReferenceFrame) -> Vec<SceneObjectSpec> {
        self.scene
            .iter()
            .zip(&frame.objects)
            .map(|(obj, p)| {
                let mut o = obj.clone();
                o.placement = Placement {
                    position: p.position,
                    angle: p.angle,
                };
                o
            })
            .collect()
    }

    /// Kinematically posed world for one frame, including its velocities.
    pub fn world_at(&self, spec: &CharacterSpec, frame: &ReferenceFrame) -> Result<WorldState, SceneError> {
        build_world(spec, &self.scene_at(frame), &frame.pose)
    }

    /// Sensor stream, one sample per frame.
    pub fn sensor_stream(&self, spec: &CharacterSpec) -> Vec<SensorFrame> {
        self.frames.iter().map(|f| extract_sensors(spec, f)).collect()
    }
}

/// Interpolated frame at time `t`: linear for positions and velocities, shortest arc for
/// angles, nearest frame for contact labels with ties going to the earlier frame.
pub fn sample_frame(clip: &ReferenceClip, t: f64) -> Result<ReferenceFrame, MotionError> {
    let duration = clip.duration();
    if !(t >= 0.0 && t <= duration + 1e-9) || clip.frames.is_empty() {
        return Err(MotionError::OutOfRange { t, duration });
    }
    let x = t / clip.dt;
    let nearest = x.round();
    if (x - nearest).abs() < 1e-9 {
        let i = (nearest as usize).min(clip.frames.len() - 1);
        return Ok(clip.frames[i].clone());
    }
    let i = (x.floor() as usize).min(clip.frames.len() - 2);
    let s = x - i as f64;
    let (a, b) = (&clip.frames[i], &clip.frames[i + 1]);
    let lerp = |p: f64, q: f64| p + (q - p) * s;
    let arc = |p: f64, q: f64| p + wrap_angle(q - p) * s;
    let lerp_all = |p: &[f64], q: &[f64], f: &dyn Fn(f64, f64) -> f64| p.iter().zip(q).map(|(&u, &v)| f(u, v)).collect::<Vec<_>>();
    let pose = CharacterPose {
        root_position: a.pose.root_position.lerp(b.pose.root_position, s),
        root_angle: arc(a.pose.root_angle, b.pose.root_angle),
        joint_angles: lerp_all(&a.pose.joint_angles, &b.pose.joint_angles, &arc),
        root_velocity: a.pose.root_velocity.lerp(b.pose.root_velocity, s),
        root_angular_velocity: lerp(a.pose.root_angular_velocity, b.pose.root_angular_velocity),
        joint_velocities: lerp_all(&a.pose.joint_velocities, &b.pose.joint_velocities, &lerp),
    };
    let objects = a
        .objects
        .iter()
        .zip(&b.objects)
        .map(|(p, q)| ObjectPose {
            position: p.position.lerp(q.position, s),
            angle: arc(p.angle, q.angle),
        })
        .collect();
    Ok(ReferenceFrame {
        pose,
        contacts: if s <= 0.5 { a.contacts } else { b.contacts },
        objects,
    })
}

#[cfg(test)]
mod tests;
