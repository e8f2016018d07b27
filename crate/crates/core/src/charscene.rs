//! Planar character and scene construction, placement randomization and contact labels.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Rot, Vec2};
use crate::rigidbody2d::{detect_contacts, separation, BodyId, RevoluteJoint, RigidBody, Shape, WorldState};

/// Upward contact force above which a link counts as supported, N.
pub const CONTACT_THRESHOLD: f64 = 50.0;
/// Number of links in the contact-label subset.
pub const CONTACT_LINKS: usize = 5;
/// Penetration tolerated when placing a character in a scene, m.
pub const PENETRATION_TOLERANCE: f64 = 0.01;
/// Randomized resets fall back to the nominal scene after this many failed draws.
pub const MAX_PLACEMENT_RETRIES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("link {link} starts inside {object} by {depth:.4} m")]
    InitialPenetration { link: String, object: String, depth: f64 },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    pub shape: Shape,
    /// Area density, kg/m².
    pub density: f64,
}

/// Revolute joint between a parent and child link. Anchors are link-local.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub parent: usize,
    pub child: usize,
    pub anchor_parent: Vec2,
    pub anchor_child: Vec2,
    pub lower: f64,
    pub upper: f64,
    pub max_torque: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterSpec {
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
    /// Links whose support state forms the multi-hot contact vector, in order.
    pub contact_links: [usize; CONTACT_LINKS],
    /// Link carrying the head sensor.
    pub head_link: usize,
    /// Link carrying the hand sensor and its local tip offset.
    pub hand_link: usize,
    pub hand_tip: Vec2,
    /// +1 when the character faces +x in its zero pose, −1 when mirrored.
    pub facing: f64,
    /// Passive viscous damping on every joint, N·m·s/rad.
    pub joint_damping: f64,
}

pub const PELVIS: usize = 0;
pub const SPINE: usize = 1;
pub const HEAD: usize = 2;
pub const UPPER_ARM: usize = 3;
pub const FOREARM: usize = 4;
pub const THIGH_L: usize = 5;
pub const THIGH_R: usize = 6;
pub const SHANK_L: usize = 7;
pub const SHANK_R: usize = 8;
pub const FOOT_L: usize = 9;
pub const FOOT_R: usize = 10;

/// Joint indices in the standard character.
pub mod joint {
    pub const WAIST: usize = 0;
    pub const NECK: usize = 1;
    pub const SHOULDER: usize = 2;
    pub const ELBOW: usize = 3;
    pub const HIP_L: usize = 4;
    pub const HIP_R: usize = 5;
    pub const KNEE_L: usize = 6;
    pub const KNEE_R: usize = 7;
    pub const ANKLE_L: usize = 8;
    pub const ANKLE_R: usize = 9;
}

/// Hip splay of the default stand; the ankles counter-rotate to keep the feet flat.
pub const STANCE_ANGLE: f64 = 0.08;

impl CharacterSpec {
    /// 1.7 m, roughly 70 kg planar character facing +x.
    pub fn standard() -> Self {
        // (name, shape, mass, centre in the default stand)
        let links: [(&str, Shape, f64, Vec2); 11] = [
            ("pelvis", Shape::cuboid(0.10, 0.08), 11.0, Vec2::new(0.0, 0.93)),
            ("spine", Shape::cuboid(0.10, 0.21), 22.0, Vec2::new(0.0, 1.22)),
            ("head", Shape::circle(0.11), 5.0, Vec2::new(0.0, 1.59)),
            ("upper-arm", Shape::capsule(0.30, 0.045), 4.0, Vec2::new(0.0, 1.23)),
            ("forearm-hand", Shape::capsule(0.38, 0.04), 3.0, Vec2::new(0.0, 0.89)),
            ("thigh-L", Shape::capsule(0.42, 0.06), 8.0, Vec2::new(0.0, 0.72)),
            ("thigh-R", Shape::capsule(0.42, 0.06), 8.0, Vec2::new(0.0, 0.72)),
            ("shank-L", Shape::capsule(0.42, 0.05), 3.5, Vec2::new(0.0, 0.30)),
            ("shank-R", Shape::capsule(0.42, 0.05), 3.5, Vec2::new(0.0, 0.30)),
            ("foot-L", Shape::cuboid(0.11, 0.035), 1.2, Vec2::new(0.05, 0.035)),
            ("foot-R", Shape::cuboid(0.11, 0.035), 1.2, Vec2::new(0.05, 0.035)),
        ];
        // (name, parent, child, joint position in the default stand, limits, max torque)
        let joints: [(&str, usize, usize, Vec2, (f64, f64), f64); 10] = [
            ("waist", PELVIS, SPINE, Vec2::new(0.0, 1.01), (-1.2, 0.5), 250.0),
            ("neck", SPINE, HEAD, Vec2::new(0.0, 1.45), (-0.8, 0.6), 50.0),
            ("shoulder", SPINE, UPPER_ARM, Vec2::new(0.0, 1.38), (-1.0, 3.0), 100.0),
            ("elbow", UPPER_ARM, FOREARM, Vec2::new(0.0, 1.08), (-0.1, 2.6), 60.0),
            ("hip-L", PELVIS, THIGH_L, Vec2::new(0.0, 0.93), (-0.6, 2.6), 250.0),
            ("hip-R", PELVIS, THIGH_R, Vec2::new(0.0, 0.93), (-0.6, 2.6), 250.0),
            ("knee-L", THIGH_L, SHANK_L, Vec2::new(0.0, 0.51), (-2.6, 0.05), 250.0),
            ("knee-R", THIGH_R, SHANK_R, Vec2::new(0.0, 0.51), (-2.6, 0.05), 250.0),
            ("ankle-L", SHANK_L, FOOT_L, Vec2::new(0.0, 0.09), (-0.8, 0.9), 120.0),
            ("ankle-R", SHANK_R, FOOT_R, Vec2::new(0.0, 0.09), (-0.8, 0.9), 120.0),
        ];
        let centres: Vec<Vec2> = links.iter().map(|l| l.3).collect();
        Self {
            links: links
                .iter()
                .map(|&(name, shape, mass, _)| LinkSpec {
                    name: name.to_string(),
                    shape,
                    density: mass / shape.area(),
                })
                .collect(),
            joints: joints
                .iter()
                .map(|&(name, parent, child, at, (lower, upper), max_torque)| JointSpec {
                    name: name.to_string(),
                    parent,
                    child,
                    anchor_parent: at - centres[parent],
                    anchor_child: at - centres[child],
                    lower,
                    upper,
                    max_torque,
                })
                .collect(),
            contact_links: [PELVIS, SPINE, FOOT_L, FOOT_R, FOREARM],
            head_link: HEAD,
            hand_link: FOREARM,
            hand_tip: Vec2::new(0.0, -0.19),
            facing: 1.0,
            joint_damping: 3.0,
        }
    }

    /// Reflection of the character about the vertical axis: it faces the other way and
    /// every joint angle changes sign.
    pub fn mirrored(&self) -> Self {
        let flip = |v: Vec2| Vec2::new(-v.x, v.y);
        let mut out = self.clone();
        out.facing = -self.facing;
        out.hand_tip = flip(self.hand_tip);
        for j in &mut out.joints {
            j.anchor_parent = flip(j.anchor_parent);
            j.anchor_child = flip(j.anchor_child);
            (j.lower, j.upper) = (-j.upper, -j.lower);
        }
        out
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn max_torques(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.max_torque).collect()
    }

    /// Upright pose with the legs slightly staggered and both feet flat on the floor at y = 0.
    pub fn standing_pose(&self) -> CharacterPose {
        let mut angles = vec![0.0; self.joints.len()];
        angles[joint::HIP_L] = STANCE_ANGLE;
        angles[joint::HIP_R] = -STANCE_ANGLE;
        angles[joint::ANKLE_L] = -STANCE_ANGLE;
        angles[joint::ANKLE_R] = STANCE_ANGLE;
        let mut pose = CharacterPose::at_rest(Vec2::ZERO, 0.0, angles);
        let states = link_states(self, &pose);
        let lowest = states
            .iter()
            .zip(&self.links)
            .map(|(s, l)| l.shape.aabb(s.position, s.angle).0.y)
            .fold(f64::INFINITY, f64::min);
        pose.root_position.y = -lowest;
        pose
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.shape.mass_properties(l.density).0).sum()
    }

    /// Checks the link/joint graph is a tree rooted at link 0 with parents listed first.
    pub fn validate(&self) -> Result<(), SceneError> {
        let n = self.links.len();
        if n == 0 || self.joints.len() + 1 != n {
            return Err(SceneError::InvalidSpec(format!("{n} links need {} joints", n.saturating_sub(1))));
        }
        let mut attached = vec![false; n];
        attached[0] = true;
        for j in &self.joints {
            if j.parent >= n || j.child >= n || !attached[j.parent] || attached[j.child] {
                return Err(SceneError::InvalidSpec(format!("joint {} breaks the link tree", j.name)));
            }
            if !(j.lower <= j.upper) || !(j.max_torque > 0.0) {
                return Err(SceneError::InvalidSpec(format!("joint {} has bad limits or torque", j.name)));
            }
            attached[j.child] = true;
        }
        for l in &self.links {
            if !l.shape.is_valid() || !(l.density > 0.0) {
                return Err(SceneError::InvalidSpec(format!("link {} has bad geometry", l.name)));
            }
        }
        if self.contact_links.iter().chain([&self.head_link, &self.hand_link]).any(|&i| i >= n) {
            return Err(SceneError::InvalidSpec("sensor or contact link out of range".into()));
        }
        Ok(())
    }
}

/// Full kinematic state of the character, rooted at link 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterPose {
    pub root_position: Vec2,
    pub root_angle: f64,
    pub joint_angles: Vec<f64>,
    pub root_velocity: Vec2,
    pub root_angular_velocity: f64,
    pub joint_velocities: Vec<f64>,
}

impl CharacterPose {
    /// Default stand, at rest, for a character with `joints` joints.
    pub fn at_rest(root_position: Vec2, root_angle: f64, joint_angles: Vec<f64>) -> Self {
        let n = joint_angles.len();
        Self {
            root_position,
            root_angle,
            joint_angles,
            root_velocity: Vec2::ZERO,
            root_angular_velocity: 0.0,
            joint_velocities: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinkState {
    pub position: Vec2,
    pub angle: f64,
    pub velocity: Vec2,
    pub angular_velocity: f64,
}

/// World poses and velocities of every link by traversal from the root.
pub fn link_states(spec: &CharacterSpec, pose: &CharacterPose) -> Vec<LinkState> {
    let mut out = vec![LinkState::default(); spec.links.len()];
    out[0] = LinkState {
        position: pose.root_position,
        angle: pose.root_angle,
        velocity: pose.root_velocity,
        angular_velocity: pose.root_angular_velocity,
    };
    for (k, j) in spec.joints.iter().enumerate() {
        let p = out[j.parent];
        let angle = p.angle + pose.joint_angles[k];
        let w = p.angular_velocity + pose.joint_velocities.get(k).copied().unwrap_or(0.0);
        let pivot_arm = Rot::new(p.angle).apply(j.anchor_parent);
        let pivot = p.position + pivot_arm;
        let child_arm = Rot::new(angle).apply(j.anchor_child);
        let pivot_velocity = p.velocity + Vec2::cross_scalar(p.angular_velocity, pivot_arm);
        out[j.child] = LinkState {
            position: pivot - child_arm,
            angle,
            velocity: pivot_velocity - Vec2::cross_scalar(w, child_arm),
            angular_velocity: w,
        };
    }
    out
}

/// Reads the character pose back out of a world built by [`build_world`].
pub fn pose_from_world(spec: &CharacterSpec, world: &WorldState) -> CharacterPose {
    let b = &world.bodies;
    CharacterPose {
        root_position: b[0].position,
        root_angle: b[0].angle,
        joint_angles: spec.joints.iter().map(|j| b[j.child].angle - b[j.parent].angle).collect(),
        root_velocity: b[0].velocity,
        root_angular_velocity: b[0].angular_velocity,
        joint_velocities: spec
            .joints
            .iter()
            .map(|j| b[j.child].angular_velocity - b[j.parent].angular_velocity)
            .collect(),
    }
}

pub fn mass_properties(shape: &Shape, density: f64) -> (f64, f64) {
    shape.mass_properties(density)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPart {
    pub shape: Shape,
    /// Offset of the part centre from the object placement, object-local.
    #[serde(default)]
    pub offset: Vec2,
    #[serde(default)]
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mobility {
    Static,
    Free,
    /// Attached to the floor at an object-local anchor. `limits` bound the object angle and
    /// the spring pulls it back to zero.
    Hinged { anchor: Vec2, limits: (f64, f64), stiffness: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub position: Vec2,
    #[serde(default)]
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObjectSpec {
    pub name: String,
    pub parts: Vec<ObjectPart>,
    pub placement: Placement,
    pub mobility: Mobility,
    /// Area density for movable objects, kg/m².
    #[serde(default = "default_object_density")]
    pub density: f64,
}

fn default_object_density() -> f64 {
    200.0
}

impl SceneObjectSpec {
    pub fn fixed_box(name: &str, centre: Vec2, half_extents: Vec2) -> Self {
        Self {
            name: name.to_string(),
            parts: vec![ObjectPart {
                shape: Shape::cuboid(half_extents.x, half_extents.y),
                offset: Vec2::ZERO,
                angle: 0.0,
            }],
            placement: Placement { position: centre, angle: 0.0 },
            mobility: Mobility::Static,
            density: default_object_density(),
        }
    }

    /// World pose of each part for the current placement.
    pub fn part_poses(&self) -> Vec<(Vec2, f64)> {
        let r = Rot::new(self.placement.angle);
        self.parts
            .iter()
            .map(|p| (self.placement.position + r.apply(p.offset), self.placement.angle + p.angle))
            .collect()
    }
}

/// Planar scene randomization. Offsets are uniform per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationParams {
    pub position_range: f64,
    pub angle_range: f64,
    pub seed: u64,
}

impl Default for RandomizationParams {
    fn default() -> Self {
        Self {
            position_range: 0.08,
            angle_range: 0.0,
            seed: 0,
        }
    }
}

/// Multi-hot support state over the contact-label links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct ContactState(pub [bool; CONTACT_LINKS]);

impl ContactState {
    pub fn as_f64(&self) -> [f64; CONTACT_LINKS] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }

    pub fn mismatches(&self, other: &ContactState) -> usize {
        self.0.iter().zip(other.0.iter()).filter(|(a, b)| a != b).count()
    }
}

pub const FLOOR_HALF_EXTENTS: Vec2 = Vec2::new(50.0, 0.5);

/// Index of the floor body; scene object bodies follow it.
pub fn floor_body(spec: &CharacterSpec) -> BodyId {
    spec.links.len()
}

/// Body indices of every scene object, in scene order.
pub fn object_bodies(spec: &CharacterSpec, scene: &[SceneObjectSpec]) -> Vec<Vec<BodyId>> {
    let mut next = floor_body(spec) + 1;
    scene
        .iter()
        .map(|o| {
            let ids: Vec<BodyId> = (next..next + o.parts.len()).collect();
            next += o.parts.len();
            ids
        })
        .collect()
}

/// Builds the character, the floor and the scene objects, in that body order.
pub fn build_world(spec: &CharacterSpec, scene: &[SceneObjectSpec], pose: &CharacterPose) -> Result<WorldState, SceneError> {
    spec.validate()?;
    if pose.joint_angles.len() != spec.joints.len() {
        return Err(SceneError::InvalidSpec(format!(
            "pose has {} joint angles, character has {} joints",
            pose.joint_angles.len(),
            spec.joints.len()
        )));
    }
    let mut world = WorldState::default();
    let states = link_states(spec, pose);
    for (link, s) in spec.links.iter().zip(&states) {
        let (m, i) = link.shape.mass_properties(link.density);
        let mut body = RigidBody::dynamic(link.shape, m, i, s.position, s.angle);
        body.velocity = s.velocity;
        body.angular_velocity = s.angular_velocity;
        world.add_body(body);
    }
    for j in &spec.joints {
        let mut rj = RevoluteJoint::new(j.parent, j.child, j.anchor_parent, j.anchor_child, (j.lower, j.upper), j.max_torque);
        rj.damping = spec.joint_damping;
        world.add_joint(rj);
    }
    let n = spec.links.len();
    for a in 0..n {
        for b in (a + 1)..n {
            world.filter.exclude(a, b);
        }
    }
    let floor = world.add_body(RigidBody::fixed(
        Shape::cuboid(FLOOR_HALF_EXTENTS.x, FLOOR_HALF_EXTENTS.y),
        Vec2::new(0.0, -FLOOR_HALF_EXTENTS.y),
        0.0,
    ));
    let mut owner = vec![String::from("floor"); world.bodies.len()];
    for obj in scene {
        if obj.parts.is_empty() || obj.parts.iter().any(|p| !p.shape.is_valid()) {
            return Err(SceneError::InvalidSpec(format!("object {} has bad geometry", obj.name)));
        }
        let poses = obj.part_poses();
        let mut ids = Vec::with_capacity(poses.len());
        for (part, &(position, angle)) in obj.parts.iter().zip(&poses) {
            let body = match obj.mobility {
                Mobility::Static => RigidBody::fixed(part.shape, position, angle),
                Mobility::Free | Mobility::Hinged { .. } => {
                    let (m, i) = part.shape.mass_properties(obj.density);
                    RigidBody::dynamic(part.shape, m, i, position, angle)
                }
            };
            ids.push(world.add_body(body));
            owner.push(obj.name.clone());
        }
        // extra parts are welded to the first one
        let main = ids[0];
        for &id in &ids[1..] {
            let pivot = world.bodies[id].position;
            let anchor_main = Rot::new(world.bodies[main].angle).apply_inv(pivot - world.bodies[main].position);
            let rel = world.bodies[id].angle - world.bodies[main].angle;
            if obj.mobility != Mobility::Static {
                world.add_joint(RevoluteJoint::new(main, id, anchor_main, Vec2::ZERO, (rel, rel), f64::MIN_POSITIVE));
            }
            for &other in &ids {
                world.filter.exclude(id, other);
            }
        }
        if let Mobility::Hinged { anchor, limits, stiffness } = obj.mobility {
            if !(limits.0 <= limits.1) || stiffness < 0.0 {
                return Err(SceneError::InvalidSpec(format!("object {} has bad hinge", obj.name)));
            }
            let placement = Rot::new(obj.placement.angle);
            let pivot = obj.placement.position + placement.apply(anchor);
            let main_body = &world.bodies[main];
            let anchor_b = Rot::new(main_body.angle).apply_inv(pivot - main_body.position);
            let mut hinge = RevoluteJoint::new(floor, main, pivot - world.bodies[floor].position, anchor_b, limits, f64::MIN_POSITIVE);
            hinge.stiffness = stiffness;
            world.add_joint(hinge);
        }
    }
    for c in detect_contacts(&world) {
        let (link, other) = if c.body_a < n && c.body_b >= n {
            (c.body_a, c.body_b)
        } else if c.body_b < n && c.body_a >= n {
            (c.body_b, c.body_a)
        } else {
            continue;
        };
        if c.depth > PENETRATION_TOLERANCE {
            return Err(SceneError::InitialPenetration {
                link: spec.links[link].name.clone(),
                object: owner[other].clone(),
                depth: c.depth,
            });
        }
    }
    world.contacts.clear();
    Ok(world)
}

/// Offsets every object by independent uniform samples; the floor never moves.
pub fn randomize_scene<R: Rng + ?Sized>(scene: &[SceneObjectSpec], params: &RandomizationParams, rng: &mut R) -> Vec<SceneObjectSpec> {
    scene
        .iter()
        .map(|obj| {
            let mut out = obj.clone();
            let r = params.position_range;
            if r > 0.0 {
                out.placement.position.x += rng.gen_range(-r..=r);
                out.placement.position.y += rng.gen_range(-r..=r);
            }
            let a = params.angle_range;
            if a > 0.0 {
                out.placement.angle += rng.gen_range(-a..=a);
            }
            out
        })
        .collect()
}

/// Randomizes and builds, redrawing on initial penetration and falling back to the
/// nominal scene after [`MAX_PLACEMENT_RETRIES`] failures.
pub fn build_randomized<R: Rng + ?Sized>(
    spec: &CharacterSpec,
    scene: &[SceneObjectSpec],
    pose: &CharacterPose,
    params: &RandomizationParams,
    rng: &mut R,
) -> Result<(WorldState, Vec<SceneObjectSpec>), SceneError> {
    for _ in 0..MAX_PLACEMENT_RETRIES {
        let candidate = randomize_scene(scene, params, rng);
        match build_world(spec, &candidate, pose) {
            Ok(w) => return Ok((w, candidate)),
            Err(SceneError::InitialPenetration { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok((build_world(spec, scene, pose)?, scene.to_vec()))
}

/// Contact labels from the latest step: a link is supported when the upward
/// component of the contact force on it exceeds [`CONTACT_THRESHOLD`].
pub fn label_contacts(world: &WorldState, spec: &CharacterSpec, dt: f64) -> ContactState {
    let up = -world.gravity.normalized();
    let mut bits = [false; CONTACT_LINKS];
    for (bit, &link) in bits.iter_mut().zip(&spec.contact_links) {
        *bit = world.contact_force_on(link, dt).dot(up) > CONTACT_THRESHOLD;
    }
    ContactState(bits)
}

/// Smallest distance from a character link to the floor or any scene body, if within `max`.
pub fn link_clearance(world: &WorldState, spec: &CharacterSpec, link: usize, max: f64) -> Option<f64> {
    (spec.links.len()..world.bodies.len())
        .filter_map(|b| separation(world, link, b, max))
        .reduce(f64::min)
}

/// Freezes every character joint at its current angle, turning the character into
/// a rigid assembly. Used to label kinematic poses by simulation.
pub fn lock_character_joints(world: &mut WorldState, spec: &CharacterSpec) {
    for k in 0..spec.joints.len() {
        let a = world.joints[k].angle(&world.bodies);
        world.joints[k].lower = a;
        world.joints[k].upper = a;
    }
}

/// Torque vector for every joint in the world: character torques first, scene joints unactuated.
pub fn pad_torques(world: &WorldState, character_torques: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; world.joints.len()];
    out[..character_torques.len()].copy_from_slice(character_torques);
    out
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const DT: f64 = 1.0 / 240.0;

    #[test]
    fn standard_character_is_a_valid_tree() {
        let spec = CharacterSpec::standard();
        spec.validate().unwrap();
        assert_eq!(spec.link_count(), 11);
        assert_eq!(spec.joint_count(), 10);
        assert!((spec.total_mass() - 70.4).abs() < 1e-9);
    }

    #[test]
    fn capsule_mass_matches_area_quadrature() {
        let (length, r, density) = (0.4, 0.05, 10.0);
        let (m, i) = mass_properties(&Shape::capsule(length, r), density);
        // slice the capsule into horizontal strips of width w(y) and integrate with Simpson's rule;
        // the caps use y = c + r sin(phi) so the integrand stays smooth
        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
            let n = 2000;
            let h = (b - a) / n as f64;
            let mut acc = f(a) + f(b);
            for k in 1..n {
                acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        };
        let strip_mass = |w: f64| density * w;
        let strip_inertia = |w: f64, y: f64| density * (w * w * w / 12.0 + w * y * y);
        let c = 0.5 * length;
        let core_m = simpson(&|_y| strip_mass(2.0 * r), -c, c);
        let core_i = simpson(&|y| strip_inertia(2.0 * r, y), -c, c);
        let cap_m = simpson(&|phi: f64| strip_mass(2.0 * r * phi.cos()) * r * phi.cos(), 0.0, std::f64::consts::FRAC_PI_2);
        let cap_i = simpson(
            &|phi: f64| strip_inertia(2.0 * r * phi.cos(), c + r * phi.sin()) * r * phi.cos(),
            0.0,
            std::f64::consts::FRAC_PI_2,
        );
        let (qm, qi) = (core_m + 2.0 * cap_m, core_i + 2.0 * cap_i);
        assert!((m - qm).abs() / m < 1e-6, "{m} vs {qm}");
        assert!((i - qi).abs() / i < 1e-6, "{i} vs {qi}");
    }

    #[test]
    fn default_stand_puts_feet_on_floor() {
        let spec = CharacterSpec::standard();
        let w = build_world(&spec, &[], &spec.standing_pose()).unwrap();
        assert_eq!(w.bodies.len(), 12);
        for foot in [FOOT_L, FOOT_R] {
            let (lo, _) = w.bodies[foot].shape.aabb(w.bodies[foot].position, w.bodies[foot].angle);
            assert!(lo.y.abs() < 1e-3);
        }
        let head = w.bodies[HEAD].position;
        assert!((head.y - w.bodies[PELVIS].position.y - 0.66).abs() < 1e-12);
    }

    #[test]
    fn overlapping_box_is_rejected() {
        let spec = CharacterSpec::standard();
        let scene = [SceneObjectSpec::fixed_box("crate", Vec2::new(0.0, 0.5), Vec2::new(0.25, 0.38))];
        let err = build_world(&spec, &scene, &spec.standing_pose()).unwrap_err();
        assert!(matches!(err, SceneError::InitialPenetration { ref object, .. } if object == "crate"));
    }

    #[test]
    fn hinged_object_gets_its_joint() {
        let spec = CharacterSpec::standard();
        let chair = SceneObjectSpec {
            name: "chair".into(),
            parts: vec![
                ObjectPart { shape: Shape::cuboid(0.2, 0.03), offset: Vec2::ZERO, angle: 0.0 },
                ObjectPart { shape: Shape::cuboid(0.03, 0.3), offset: Vec2::new(-0.2, 0.3), angle: 0.0 },
            ],
            placement: Placement { position: Vec2::new(-1.0, 0.45), angle: 0.0 },
            mobility: Mobility::Hinged { anchor: Vec2::new(-0.2, -0.03), limits: (0.0, 0.3), stiffness: 100.0 },
            density: 100.0,
        };
        let w = build_world(&spec, &[chair], &spec.standing_pose()).unwrap();
        let hinge = w.joints.last().unwrap();
        assert_eq!((hinge.lower, hinge.upper), (0.0, 0.3));
        assert_eq!(hinge.stiffness, 100.0);
        assert_eq!(hinge.body_a, floor_body(&spec));
        assert_eq!(w.joints.len(), 12);
    }

    #[test]
    fn fk_velocities_match_finite_differences() {
        let spec = CharacterSpec::standard();
        let q: Vec<f64> = (0..10).map(|k| 0.1 * k as f64 - 0.3).collect();
        let qd: Vec<f64> = (0..10).map(|k| 0.5 - 0.13 * k as f64).collect();
        let pose = CharacterPose {
            root_position: Vec2::new(0.2, 0.9),
            root_angle: 0.1,
            joint_angles: q.clone(),
            root_velocity: Vec2::new(0.3, -0.2),
            root_angular_velocity: 0.4,
            joint_velocities: qd.clone(),
        };
        let h = 1e-6;
        let advance = |s: f64| {
            let mut p = pose.clone();
            p.root_position += pose.root_velocity * s;
            p.root_angle += pose.root_angular_velocity * s;
            for k in 0..10 {
                p.joint_angles[k] += qd[k] * s;
            }
            link_states(&spec, &p)
        };
        let (plus, minus) = (advance(h), advance(-h));
        for (k, s) in link_states(&spec, &pose).iter().enumerate() {
            let fd = (plus[k].position - minus[k].position) / (2.0 * h);
            assert!((fd - s.velocity).length() < 1e-7, "link {k}");
        }
    }

    #[test]
    fn mirrored_character_reflects_positions() {
        let spec = CharacterSpec::standard();
        let m = spec.mirrored();
        let q: Vec<f64> = (0..10).map(|k| 0.07 * k as f64 - 0.2).collect();
        let pose = CharacterPose::at_rest(Vec2::new(0.0, 0.9), 0.05, q.clone());
        let neg = CharacterPose::at_rest(Vec2::new(0.0, 0.9), -0.05, q.iter().map(|v| -v).collect());
        for (a, b) in link_states(&spec, &pose).iter().zip(link_states(&m, &neg)) {
            assert!((a.position.x + b.position.x).abs() < 1e-12);
            assert!((a.position.y - b.position.y).abs() < 1e-12);
            assert!((a.angle + b.angle).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_range_leaves_scene_unchanged() {
        let scene = vec![SceneObjectSpec::fixed_box("b", Vec2::new(1.0, 0.2), Vec2::new(0.2, 0.2))];
        let params = RandomizationParams { position_range: 0.0, angle_range: 0.0, seed: 3 };
        let out = randomize_scene(&scene, &params, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(out, scene);
    }

    #[test]
    fn randomization_is_bounded_and_centred() {
        let scene = vec![SceneObjectSpec::fixed_box("b", Vec2::new(1.0, 0.2), Vec2::new(0.2, 0.2))];
        let params = RandomizationParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let n = 10_000;
        let mut sum = Vec2::ZERO;
        for _ in 0..n {
            let d = randomize_scene(&scene, &params, &mut rng)[0].placement.position - scene[0].placement.position;
            assert!(d.x.abs() <= 0.08 && d.y.abs() <= 0.08);
            sum += d;
        }
        let sigma = 0.08 / 3f64.sqrt() / (n as f64).sqrt();
        assert!((sum.x / n as f64).abs() < 3.0 * sigma);
        assert!((sum.y / n as f64).abs() < 3.0 * sigma);
    }

    #[test]
    fn airborne_character_has_no_labels() {
        let spec = CharacterSpec::standard();
        let pose = CharacterPose::at_rest(Vec2::new(0.0, 3.0), 0.0, vec![0.0; 10]);
        let mut w = build_world(&spec, &[], &pose).unwrap();
        w.step_in_place(&[], DT).unwrap();
        assert_eq!(label_contacts(&w, &spec, DT), ContactState::default());
    }

    #[test]
    fn standing_character_is_supported_by_both_feet() {
        let spec = CharacterSpec::standard();
        let target = spec.standing_pose();
        let mut w = build_world(&spec, &[], &target).unwrap();
        // stiff passive springs hold the standing pose
        for (k, j) in w.joints.iter_mut().enumerate().take(spec.joint_count()) {
            j.stiffness = 3000.0;
            j.damping = 100.0;
            j.rest_angle = target.joint_angles[k];
        }
        for _ in 0..240 {
            w.step_in_place(&[], DT).unwrap();
        }
        let labels = label_contacts(&w, &spec, DT);
        assert_eq!(labels, ContactState([false, false, true, true, false]));
        let (l, r) = (w.contact_force_on(FOOT_L, DT).y, w.contact_force_on(FOOT_R, DT).y);
        assert!((l + r - 70.4 * 9.81).abs() < 0.05 * 70.4 * 9.81, "{l} + {r}");
    }

    #[test]
    fn build_is_deterministic() {
        let spec = CharacterSpec::standard();
        let scene = vec![SceneObjectSpec::fixed_box("b", Vec2::new(1.0, 0.2), Vec2::new(0.2, 0.2))];
        let params = RandomizationParams::default();
        let pose = spec.standing_pose();
        let a = build_randomized(&spec, &scene, &pose, &params, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = build_randomized(&spec, &scene, &pose, &params, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
