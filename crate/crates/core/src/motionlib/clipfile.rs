use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MotionError, ObjectPose, ReferenceClip, ReferenceFrame};
use crate::charscene::{CharacterPose, ContactState, SceneObjectSpec, CONTACT_LINKS};
use crate::math::Vec2;

pub const CLIP_MAGIC: &str = "QECLIP";
pub const CLIP_VERSION: u32 = 1;

const SEPARATOR: &str = "---";
const CONTACT_NAMES: [&str; CONTACT_LINKS] = ["pelvis", "spine", "foot_l", "foot_r", "hand"];

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    task: String,
    dt: f64,
    frame_count: usize,
    joint_names: Vec<String>,
    contact_links: Vec<String>,
    object_names: Vec<String>,
    columns: Vec<String>,
    #[serde(default)]
    scene: Vec<SceneObjectSpec>,
}

fn columns(joints: &[String], objects: &[String]) -> Vec<String> {
    let mut c: Vec<String> = ["root_x", "root_y", "root_angle"].iter().map(|s| s.to_string()).collect();
    c.extend(joints.iter().map(|j| format!("q_{j}")));
    c.extend(["root_vx", "root_vy", "root_omega"].iter().map(|s| s.to_string()));
    c.extend(joints.iter().map(|j| format!("qd_{j}")));
    c.extend(CONTACT_NAMES.iter().map(|n| format!("contact_{n}")));
    for o in objects {
        c.extend([format!("{o}_x"), format!("{o}_y"), format!("{o}_angle")]);
    }
    c
}

/// Text encoding: a magic line, a TOML header, a separator line, then one row per frame.
pub fn encode_clip(clip: &ReferenceClip) -> Result<String, MotionError> {
    let object_names: Vec<String> = clip.scene.iter().map(|o| o.name.clone()).collect();
    let header = Header {
        task: clip.task.clone(),
        dt: clip.dt,
        frame_count: clip.frames.len(),
        joint_names: clip.joint_names.clone(),
        contact_links: CONTACT_NAMES.iter().map(|s| s.to_string()).collect(),
        columns: columns(&clip.joint_names, &object_names),
        object_names,
        scene: clip.scene.clone(),
    };
    let toml = toml::to_string(&header).map_err(|e| MotionError::Format(e.to_string()))?;
    let mut out = format!("{CLIP_MAGIC} {CLIP_VERSION}\n{toml}{SEPARATOR}\n");
    for f in &clip.frames {
        let p = &f.pose;
        let mut row: Vec<f64> = vec![p.root_position.x, p.root_position.y, p.root_angle];
        row.extend(&p.joint_angles);
        row.extend([p.root_velocity.x, p.root_velocity.y, p.root_angular_velocity]);
        row.extend(&p.joint_velocities);
        row.extend(f.contacts.as_f64());
        for o in &f.objects {
            row.extend([o.position.x, o.position.y, o.angle]);
        }
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{v}").expect("writing to a string");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn decode_clip(text: &str) -> Result<ReferenceClip, MotionError> {
    let format = |m: String| MotionError::Format(m);
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| format("empty clip file".into()))?;
    let mut parts = first.split_whitespace();
    if parts.next() != Some(CLIP_MAGIC) {
        return Err(format(format!("missing {CLIP_MAGIC} magic line")));
    }
    let version = parts.next().unwrap_or("");
    if version != CLIP_VERSION.to_string() {
        return Err(format(format!("unsupported clip version {version:?}, expected {CLIP_VERSION}")));
    }
    let mut header_text = String::new();
    let mut terminated = false;
    for line in lines.by_ref() {
        if line.trim() == SEPARATOR {
            terminated = true;
            break;
        }
        header_text.push_str(line);
        header_text.push('\n');
    }
    if !terminated {
        return Err(format("truncated clip: header separator missing".into()));
    }
    let header: Header = toml::from_str(&header_text).map_err(|e| format(format!("bad header: {e}")))?;
    if header.object_names.len() != header.scene.len() {
        return Err(format("object_names and scene disagree".into()));
    }
    let expected = columns(&header.joint_names, &header.object_names);
    if header.columns != expected {
        return Err(format("unexpected column layout".into()));
    }
    let nj = header.joint_names.len();
    let mut frames = Vec::with_capacity(header.frame_count);
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| format(format!("row {i}: bad number {v:?}"))))
            .collect::<Result<_, _>>()?;
        if row.len() != expected.len() {
            return Err(format(format!("row {i}: {} values, expected {}", row.len(), expected.len())));
        }
        let mut it = row.into_iter();
        let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<f64>>();
        let root = take(3);
        let joint_angles = take(nj);
        let vel = take(3);
        let joint_velocities = take(nj);
        let c = take(CONTACT_LINKS);
        let objects = (0..header.scene.len())
            .map(|_| {
                let o = take(3);
                ObjectPose {
                    position: Vec2::new(o[0], o[1]),
                    angle: o[2],
                }
            })
            .collect();
        frames.push(ReferenceFrame {
            pose: CharacterPose {
                root_position: Vec2::new(root[0], root[1]),
                root_angle: root[2],
                joint_angles,
                root_velocity: Vec2::new(vel[0], vel[1]),
                root_angular_velocity: vel[2],
                joint_velocities,
            },
            contacts: ContactState(std::array::from_fn(|k| c[k] > 0.5)),
            objects,
        });
    }
    if frames.len() != header.frame_count {
        return Err(format(format!(
            "truncated clip: {} of {} frames present",
            frames.len(),
            header.frame_count
        )));
    }
    Ok(ReferenceClip {
        task: header.task,
        dt: header.dt,
        joint_names: header.joint_names,
        scene: header.scene,
        frames,
    })
}

pub fn save_clip(clip: &ReferenceClip, path: &Path) -> Result<(), MotionError> {
    std::fs::write(path, encode_clip(clip)?)?;
    Ok(())
}

pub fn load_clip(path: &Path) -> Result<ReferenceClip, MotionError> {
    decode_clip(&std::fs::read_to_string(path)?)
}
