//! Deterministic planar rigid-body simulator.
//!
//! Bodies carry one primitive [`Shape`] each. Revolute joints connect bodies
//! into trees that are integrated in joint coordinates, so joints never drift.
//! Contacts and joint limits are resolved with sequential impulses in those
//! coordinates, with Coulomb friction and Baumgarte position feedback. All state is `f64` and
//! stepping is a pure function of the previous state, so identical inputs give
//! bit-identical outputs.

mod collision;
mod shape;

pub use shape::Shape;

use thiserror::Error;

use crate::math::{Rot, Vec2};
use collision::{collide, ManifoldPoint, Placed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("non-finite state on body {body} after step")]
    NonFiniteState { body: usize },
    #[error("invalid time step {0}")]
    InvalidTimeStep(f64),
    #[error("torque vector has {got} entries, world has {expected} joints")]
    TorqueCount { expected: usize, got: usize },
    #[error("unsupported joint topology: {0}")]
    Topology(String),
    #[error("singular generalized mass matrix")]
    SingularMass,
}

pub type BodyId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    pub mass: f64,
    pub inertia: f64,
    pub position: Vec2,
    pub angle: f64,
    pub velocity: Vec2,
    pub angular_velocity: f64,
    pub shape: Shape,
    pub is_static: bool,
}

impl RigidBody {
    pub fn dynamic(shape: Shape, mass: f64, inertia: f64, position: Vec2, angle: f64) -> Self {
        Self {
            mass,
            inertia,
            position,
            angle,
            velocity: Vec2::ZERO,
            angular_velocity: 0.0,
            shape,
            is_static: false,
        }
    }

    pub fn fixed(shape: Shape, position: Vec2, angle: f64) -> Self {
        Self {
            mass: f64::INFINITY,
            inertia: f64::INFINITY,
            position,
            angle,
            velocity: Vec2::ZERO,
            angular_velocity: 0.0,
            shape,
            is_static: true,
        }
    }

    #[inline]
    pub fn inv_mass(&self) -> f64 {
        if self.is_static {
            0.0
        } else {
            1.0 / self.mass
        }
    }

    #[inline]
    pub fn inv_inertia(&self) -> f64 {
        if self.is_static {
            0.0
        } else {
            1.0 / self.inertia
        }
    }

    /// World position of a body-local point.
    pub fn world_point(&self, local: Vec2) -> Vec2 {
        self.position + Rot::new(self.angle).apply(local)
    }

    /// Velocity of the material point at world position `p`.
    pub fn point_velocity(&self, p: Vec2) -> Vec2 {
        self.velocity + Vec2::cross_scalar(self.angular_velocity, p - self.position)
    }

    fn placed(&self) -> Placed {
        Placed {
            shape: self.shape,
            position: self.position,
            rot: Rot::new(self.angle),
        }
    }
}

/// Pin joint between two bodies; its angle is `angle_b - angle_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct RevoluteJoint {
    pub body_a: BodyId,
    pub body_b: BodyId,
    pub anchor_a: Vec2,
    pub anchor_b: Vec2,
    pub lower: f64,
    pub upper: f64,
    pub max_torque: f64,
    /// Passive spring towards `rest_angle`, N·m/rad.
    pub stiffness: f64,
    pub rest_angle: f64,
    /// Passive viscous damping, N·m·s/rad.
    pub damping: f64,
    pub(crate) lower_impulse: f64,
    pub(crate) upper_impulse: f64,
}

impl RevoluteJoint {
    pub fn new(body_a: BodyId, body_b: BodyId, anchor_a: Vec2, anchor_b: Vec2, limits: (f64, f64), max_torque: f64) -> Self {
        Self {
            body_a,
            body_b,
            anchor_a,
            anchor_b,
            lower: limits.0,
            upper: limits.1,
            max_torque,
            stiffness: 0.0,
            rest_angle: 0.0,
            damping: 0.0,
            lower_impulse: 0.0,
            upper_impulse: 0.0,
        }
    }

    pub fn angle(&self, bodies: &[RigidBody]) -> f64 {
        bodies[self.body_b].angle - bodies[self.body_a].angle
    }

    pub fn angular_velocity(&self, bodies: &[RigidBody]) -> f64 {
        bodies[self.body_b].angular_velocity - bodies[self.body_a].angular_velocity
    }

    /// Distance between the two anchor points in world space.
    pub fn anchor_separation(&self, bodies: &[RigidBody]) -> f64 {
        let pa = bodies[self.body_a].world_point(self.anchor_a);
        let pb = bodies[self.body_b].world_point(self.anchor_b);
        (pb - pa).length()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    pub body_a: BodyId,
    pub body_b: BodyId,
    pub point: Vec2,
    /// Unit normal pointing from `body_a` towards `body_b`.
    pub normal: Vec2,
    pub depth: f64,
    pub normal_impulse: f64,
    pub tangent_impulse: f64,
    pub feature: u32,
    /// Positive distance for speculative points kept just outside contact.
    pub(crate) gap: f64,
}

impl Contact {
    #[inline]
    pub fn tangent(&self) -> Vec2 {
        Vec2::new(self.normal.y, -self.normal.x)
    }

    /// Total impulse applied to `body_b` during the last step.
    pub fn impulse_on_b(&self) -> Vec2 {
        self.normal * self.normal_impulse + self.tangent() * self.tangent_impulse
    }
}

/// Body pairs that never collide, stored sorted as `(min, max)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollisionFilter {
    pairs: Vec<(BodyId, BodyId)>,
}

impl CollisionFilter {
    pub fn exclude(&mut self, a: BodyId, b: BodyId) {
        let key = (a.min(b), a.max(b));
        if let Err(pos) = self.pairs.binary_search(&key) {
            self.pairs.insert(pos, key);
        }
    }

    pub fn is_excluded(&self, a: BodyId, b: BodyId) -> bool {
        self.pairs.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn pairs(&self) -> &[(BodyId, BodyId)] {
        &self.pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub iterations: usize,
    /// Extra passes after position integration that remove the velocity added by
    /// position feedback.
    pub relax_iterations: usize,
    /// Separation within which near-touching points are kept as speculative contacts, m.
    pub speculative_margin: f64,
    pub baumgarte: f64,
    pub slop: f64,
    pub friction: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            iterations: 10,
            relax_iterations: 4,
            speculative_margin: 0.005,
            baumgarte: 0.2,
            slop: 0.001,
            friction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub bodies: Vec<RigidBody>,
    pub joints: Vec<RevoluteJoint>,
    pub gravity: Vec2,
    pub contacts: Vec<Contact>,
    pub filter: CollisionFilter,
    pub params: SolverParams,
}

impl Default for WorldState {
    fn default() -> Self {
        Self::new(Vec2::new(0.0, -9.81))
    }
}

impl WorldState {
    pub fn new(gravity: Vec2) -> Self {
        Self {
            bodies: Vec::new(),
            joints: Vec::new(),
            gravity,
            contacts: Vec::new(),
            filter: CollisionFilter::default(),
            params: SolverParams::default(),
        }
    }

    pub fn add_body(&mut self, body: RigidBody) -> BodyId {
        self.bodies.push(body);
        self.bodies.len() - 1
    }

    /// Adds a joint and excludes the connected pair from collision.
    pub fn add_joint(&mut self, joint: RevoluteJoint) -> usize {
        self.filter.exclude(joint.body_a, joint.body_b);
        self.joints.push(joint);
        self.joints.len() - 1
    }

    /// Total linear momentum of the dynamic bodies.
    pub fn linear_momentum(&self) -> Vec2 {
        self.bodies
            .iter()
            .filter(|b| !b.is_static)
            .fold(Vec2::ZERO, |acc, b| acc + b.velocity * b.mass)
    }

    /// Functional step: returns the advanced world, leaving `self` untouched.
    pub fn step(&self, joint_torques: &[f64], dt: f64) -> Result<WorldState, PhysicsError> {
        let mut next = self.clone();
        next.step_in_place(joint_torques, dt)?;
        Ok(next)
    }

    pub fn step_in_place(&mut self, joint_torques: &[f64], dt: f64) -> Result<(), PhysicsError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PhysicsError::InvalidTimeStep(dt));
        }
        if !joint_torques.is_empty() && joint_torques.len() != self.joints.len() {
            return Err(PhysicsError::TorqueCount {
                expected: self.joints.len(),
                got: joint_torques.len(),
            });
        }
        if self.bodies.iter().all(|b| b.is_static) {
            return Ok(());
        }
        self.check_finite()?;
        let tree = Tree::build(self)?;
        let (mut q, mut qd) = tree.read(self);
        tree.write(self, &q, &qd);
        let frame = tree.frame(self);
        let n = tree.dofs.len();

        // generalized mass, velocity-product and gravity terms
        let mut mass = vec![0.0; n * n];
        let mut bias = vec![0.0; n];
        let mut gravity = vec![0.0; n];
        let mut cols = Vec::new();
        for &i in &tree.order {
            let b = &self.bodies[i];
            let support = &tree.support[i];
            cols.clear();
            cols.extend(support.iter().map(|&k| frame.column(k, b.position)));
            let mut acc = Vec2::ZERO;
            for &k in support {
                if frame.angular[k] {
                    acc += (b.velocity - frame.pivot_velocity[k]).perp() * qd[k];
                }
            }
            for (x, &k) in support.iter().enumerate() {
                bias[k] += b.mass * cols[x].dot(acc);
                gravity[k] += b.mass * cols[x].dot(self.gravity);
                for (y, &l) in support.iter().enumerate() {
                    let ang = if frame.angular[k] && frame.angular[l] { b.inertia } else { 0.0 };
                    mass[k * n + l] += b.mass * cols[x].dot(cols[y]) + ang;
                }
            }
        }
        let mut force = vec![0.0; n];
        for (j, joint) in self.joints.iter().enumerate() {
            let Some(k) = tree.joint_dof[j] else { continue };
            let requested = joint_torques.get(j).copied().unwrap_or(0.0);
            // spring and damping are implicit: their step-end values enter the effective mass
            let spring = -joint.stiffness * (q[k] + dt * qd[k] - joint.rest_angle);
            force[k] += clamp_torque(requested, joint.max_torque) + spring - joint.damping * qd[k];
            mass[k * n + k] += joint.damping * dt + joint.stiffness * dt * dt;
        }
        let chol = Cholesky::new(mass, n).ok_or(PhysicsError::SingularMass)?;

        // gravity is split into two half kicks around the position update, which makes
        // free flight exact; the relax passes then absorb the second kick at contacts
        let mut kick: Vec<f64> = (0..n).map(|k| dt * (force[k] - bias[k] + 0.5 * gravity[k])).collect();
        chol.solve(&mut kick);
        axpy(&mut qd, 1.0, &kick);
        let mut half_gravity: Vec<f64> = gravity.iter().map(|g| 0.5 * dt * g).collect();
        chol.solve(&mut half_gravity);

        let previous = std::mem::take(&mut self.contacts);
        let mut contacts = detect_contacts_with_margin(self, self.params.speculative_margin);
        warm_start_from(&mut contacts, &previous);
        let mut rows = Rows::new(n);
        rows.add_limits(self, &tree, &q, &qd, dt);
        rows.add_contacts(self, &tree, &frame, &contacts, dt);
        rows.finish(&chol);
        rows.warm_start(&mut qd);
        for _ in 0..self.params.iterations {
            rows.sweep(&mut qd, self.params.friction, false);
        }

        axpy(&mut q, dt, &qd);
        axpy(&mut qd, 1.0, &half_gravity);
        for _ in 0..self.params.relax_iterations {
            rows.sweep(&mut qd, self.params.friction, true);
        }
        rows.store(&mut self.joints, &mut contacts);
        tree.write(self, &q, &qd);
        self.check_finite()?;
        self.contacts = contacts;
        Ok(())
    }

    fn check_finite(&self) -> Result<(), PhysicsError> {
        for (id, b) in self.bodies.iter().enumerate() {
            if !(b.position.is_finite() && b.angle.is_finite() && b.velocity.is_finite() && b.angular_velocity.is_finite()) {
                return Err(PhysicsError::NonFiniteState { body: id });
            }
        }
        Ok(())
    }

    /// Net contact force exerted on `body` over the last step.
    pub fn contact_force_on(&self, body: BodyId, dt: f64) -> Vec2 {
        contact_force_on(self, body, dt)
    }
}

/// Clamps a requested joint torque to `[-max, max]`.
#[inline]
pub fn clamp_torque(requested: f64, max: f64) -> f64 {
    if requested.is_nan() {
        0.0
    } else {
        requested.clamp(-max, max)
    }
}

/// All contact points between overlapping, non-excluded body pairs at the current poses.
pub fn detect_contacts(world: &WorldState) -> Vec<Contact> {
    detect_contacts_with_margin(world, 0.0)
}

/// Signed distance between two bodies when it is below `max`; negative when they overlap.
pub fn separation(world: &WorldState, a: BodyId, b: BodyId, max: f64) -> Option<f64> {
    let mut out = Vec::new();
    collide(&world.bodies[a].placed(), &world.bodies[b].placed(), max, &mut out);
    out.iter().map(|m| -m.depth).reduce(f64::min)
}

fn detect_contacts_with_margin(world: &WorldState, margin: f64) -> Vec<Contact> {
    let n = world.bodies.len();
    let aabbs: Vec<(Vec2, Vec2)> = world.bodies.iter().map(|b| b.shape.aabb(b.position, b.angle)).collect();
    let placed: Vec<Placed> = world.bodies.iter().map(RigidBody::placed).collect();
    let mut out = Vec::new();
    let mut scratch: Vec<ManifoldPoint> = Vec::with_capacity(4);
    for i in 0..n {
        for j in (i + 1)..n {
            if world.bodies[i].is_static && world.bodies[j].is_static {
                continue;
            }
            let (lo_a, hi_a) = aabbs[i];
            let (lo_b, hi_b) = aabbs[j];
            if lo_a.x > hi_b.x + margin || lo_b.x > hi_a.x + margin || lo_a.y > hi_b.y + margin || lo_b.y > hi_a.y + margin {
                continue;
            }
            if world.filter.is_excluded(i, j) {
                continue;
            }
            scratch.clear();
            collide(&placed[i], &placed[j], margin, &mut scratch);
            out.extend(scratch.iter().map(|m| Contact {
                body_a: i,
                body_b: j,
                point: m.point,
                normal: m.normal,
                depth: m.depth.max(0.0),
                normal_impulse: 0.0,
                tangent_impulse: 0.0,
                feature: m.feature,
                gap: (-m.depth).max(0.0),
            }));
        }
    }
    out
}

fn warm_start_from(contacts: &mut [Contact], previous: &[Contact]) {
    for c in contacts.iter_mut() {
        if let Some(old) = previous
            .iter()
            .find(|o| o.body_a == c.body_a && o.body_b == c.body_b && o.feature == c.feature)
        {
            c.normal_impulse = old.normal_impulse;
            c.tangent_impulse = old.tangent_impulse;
        }
    }
}

/// Sum of contact impulses on `body` divided by `dt`, as a force on that body.
pub fn contact_force_on(world: &WorldState, body: BodyId, dt: f64) -> Vec2 {
    let mut total = Vec2::ZERO;
    for c in &world.contacts {
        if c.body_b == body {
            total += c.impulse_on_b();
        } else if c.body_a == body {
            total -= c.impulse_on_b();
        }
    }
    total / dt
}

#[derive(Debug, Clone, Copy)]
enum Dof {
    RootX(BodyId),
    RootY(BodyId),
    RootAngle(BodyId),
    Joint(usize),
}

/// Joint-coordinate layout of the world: every dynamic body is either a
/// floating root or hangs from exactly one parent joint.
struct Tree {
    order: Vec<BodyId>,
    parent_joint: Vec<Option<usize>>,
    root_dof: Vec<Option<usize>>,
    joint_dof: Vec<Option<usize>>,
    /// Degrees of freedom that move each body, ancestors first.
    support: Vec<Vec<usize>>,
    dofs: Vec<Dof>,
}

impl Tree {
    fn build(world: &WorldState) -> Result<Self, PhysicsError> {
        let bodies = &world.bodies;
        let nb = bodies.len();
        let mut parent_joint = vec![None; nb];
        for (j, joint) in world.joints.iter().enumerate() {
            let (a, b) = (joint.body_a, joint.body_b);
            if a >= nb || b >= nb || a == b {
                return Err(PhysicsError::Topology(format!("joint {j} references invalid bodies")));
            }
            if bodies[b].is_static {
                if bodies[a].is_static {
                    continue;
                }
                return Err(PhysicsError::Topology(format!("joint {j} has a static child body")));
            }
            if parent_joint[b].is_some() {
                return Err(PhysicsError::Topology(format!("body {b} has more than one parent joint")));
            }
            parent_joint[b] = Some(j);
        }
        let mut children = vec![Vec::new(); nb];
        let mut roots = Vec::new();
        for b in (0..nb).filter(|&b| !bodies[b].is_static) {
            match parent_joint[b] {
                Some(j) if !bodies[world.joints[j].body_a].is_static => children[world.joints[j].body_a].push(b),
                _ => roots.push(b),
            }
        }
        let mut order = Vec::with_capacity(nb);
        for r in roots {
            let mut stack = vec![r];
            while let Some(b) = stack.pop() {
                order.push(b);
                stack.extend(children[b].iter().rev());
            }
        }
        if order.len() != bodies.iter().filter(|b| !b.is_static).count() {
            return Err(PhysicsError::Topology("joints form a loop".into()));
        }

        let mut root_dof = vec![None; nb];
        let mut joint_dof = vec![None; world.joints.len()];
        let mut support: Vec<Vec<usize>> = vec![Vec::new(); nb];
        let mut dofs = Vec::new();
        for &i in &order {
            match parent_joint[i] {
                None => {
                    let k = dofs.len();
                    root_dof[i] = Some(k);
                    dofs.extend([Dof::RootX(i), Dof::RootY(i), Dof::RootAngle(i)]);
                    support[i] = vec![k, k + 1, k + 2];
                }
                Some(j) => {
                    let joint = &world.joints[j];
                    let mut s = support[joint.body_a].clone();
                    // equal limits weld the pair rigidly
                    if joint.lower != joint.upper {
                        joint_dof[j] = Some(dofs.len());
                        s.push(dofs.len());
                        dofs.push(Dof::Joint(j));
                    }
                    support[i] = s;
                }
            }
        }
        Ok(Self {
            order,
            parent_joint,
            root_dof,
            joint_dof,
            support,
            dofs,
        })
    }

    fn read(&self, world: &WorldState) -> (Vec<f64>, Vec<f64>) {
        let b = &world.bodies;
        self.dofs
            .iter()
            .map(|d| match *d {
                Dof::RootX(i) => (b[i].position.x, b[i].velocity.x),
                Dof::RootY(i) => (b[i].position.y, b[i].velocity.y),
                Dof::RootAngle(i) => (b[i].angle, b[i].angular_velocity),
                Dof::Joint(j) => {
                    let joint = &world.joints[j];
                    (joint.angle(b), joint.angular_velocity(b))
                }
            })
            .unzip()
    }

    /// Forward kinematics: body poses and velocities from joint coordinates.
    fn write(&self, world: &mut WorldState, q: &[f64], qd: &[f64]) {
        for &i in &self.order {
            match self.parent_joint[i] {
                None => {
                    let k = self.root_dof[i].expect("floating root");
                    let b = &mut world.bodies[i];
                    b.position = Vec2::new(q[k], q[k + 1]);
                    b.angle = q[k + 2];
                    b.velocity = Vec2::new(qd[k], qd[k + 1]);
                    b.angular_velocity = qd[k + 2];
                }
                Some(j) => {
                    let joint = &world.joints[j];
                    let (offset, rate) = match self.joint_dof[j] {
                        Some(k) => (q[k], qd[k]),
                        None => (joint.lower, 0.0),
                    };
                    let parent = &world.bodies[joint.body_a];
                    let pivot = parent.world_point(joint.anchor_a);
                    let pivot_velocity = parent.point_velocity(pivot);
                    let angle = parent.angle + offset;
                    let omega = parent.angular_velocity + rate;
                    let position = pivot - Rot::new(angle).apply(joint.anchor_b);
                    let b = &mut world.bodies[i];
                    b.angle = angle;
                    b.angular_velocity = omega;
                    b.position = position;
                    b.velocity = pivot_velocity + Vec2::cross_scalar(omega, position - pivot);
                }
            }
        }
    }

    fn frame(&self, world: &WorldState) -> Frame {
        let b = &world.bodies;
        let mut frame = Frame {
            angular: Vec::with_capacity(self.dofs.len()),
            origin: Vec::with_capacity(self.dofs.len()),
            pivot_velocity: Vec::with_capacity(self.dofs.len()),
        };
        for d in &self.dofs {
            let (angular, origin, pv) = match *d {
                Dof::RootX(_) => (false, Vec2::new(1.0, 0.0), Vec2::ZERO),
                Dof::RootY(_) => (false, Vec2::new(0.0, 1.0), Vec2::ZERO),
                Dof::RootAngle(i) => (true, b[i].position, b[i].velocity),
                Dof::Joint(j) => {
                    let joint = &world.joints[j];
                    let parent = &b[joint.body_a];
                    let pivot = parent.world_point(joint.anchor_a);
                    (true, pivot, parent.point_velocity(pivot))
                }
            };
            frame.angular.push(angular);
            frame.origin.push(origin);
            frame.pivot_velocity.push(pv);
        }
        frame
    }
}

/// Per-dof geometry at the start of a step: rotation pivot or translation axis.
struct Frame {
    angular: Vec<bool>,
    origin: Vec<Vec2>,
    pivot_velocity: Vec<Vec2>,
}

impl Frame {
    /// Velocity of the world point `p` per unit rate of dof `k`.
    #[inline]
    fn column(&self, k: usize, p: Vec2) -> Vec2 {
        if self.angular[k] {
            (p - self.origin[k]).perp()
        } else {
            self.origin[k]
        }
    }
}

struct Cholesky {
    l: Vec<f64>,
    n: usize,
}

impl Cholesky {
    fn new(mut a: Vec<f64>, n: usize) -> Option<Self> {
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if !(d > 0.0 && d.is_finite()) {
                return None;
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        Some(Self { l: a, n })
    }

    fn solve(&self, b: &mut [f64]) {
        let (l, n) = (&self.l, self.n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum RowKind {
    Lower(usize),
    Upper(usize),
    Normal(usize),
    Tangent { contact: usize, normal_row: usize },
}

/// Unilateral constraint rows in joint coordinates, solved by projected Gauss-Seidel.
struct Rows {
    n: usize,
    jac: Vec<f64>,
    w: Vec<f64>,
    kind: Vec<RowKind>,
    inv_a: Vec<f64>,
    bias: Vec<f64>,
    relax_bias: Vec<f64>,
    lambda: Vec<f64>,
}

impl Rows {
    fn new(n: usize) -> Self {
        Self {
            n,
            jac: Vec::new(),
            w: Vec::new(),
            kind: Vec::new(),
            inv_a: Vec::new(),
            bias: Vec::new(),
            relax_bias: Vec::new(),
            lambda: Vec::new(),
        }
    }

    fn push(&mut self, kind: RowKind, bias: f64, relax_bias: f64, lambda: f64) -> usize {
        self.jac.extend(std::iter::repeat(0.0).take(self.n));
        self.kind.push(kind);
        self.bias.push(bias);
        self.relax_bias.push(relax_bias);
        self.lambda.push(lambda);
        self.kind.len() - 1
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.jac[r * self.n..(r + 1) * self.n]
    }

    fn add_limits(&mut self, world: &WorldState, tree: &Tree, q: &[f64], qd: &[f64], dt: f64) {
        let beta = world.params.baumgarte;
        let feedback = |c: f64| if c > 0.0 { c / dt } else { beta * c / dt };
        let relaxed = |c: f64| if c > 0.0 { c / dt } else { 0.0 };
        for (j, joint) in world.joints.iter().enumerate() {
            let Some(k) = tree.joint_dof[j] else { continue };
            // limits further away than the joint can travel this step stay out
            let reach = 0.1 + 2.0 * qd[k].abs() * dt;
            let c = q[k] - joint.lower;
            if c < reach {
                let r = self.push(RowKind::Lower(j), feedback(c), relaxed(c), joint.lower_impulse);
                self.row_mut(r)[k] = 1.0;
            }
            let c = joint.upper - q[k];
            if c < reach {
                let r = self.push(RowKind::Upper(j), feedback(c), relaxed(c), joint.upper_impulse);
                self.row_mut(r)[k] = -1.0;
            }
        }
    }

    fn add_contacts(&mut self, world: &WorldState, tree: &Tree, frame: &Frame, contacts: &[Contact], dt: f64) {
        let p = &world.params;
        for (ci, c) in contacts.iter().enumerate() {
            let (bias, relax_bias) = if c.gap > 0.0 {
                (c.gap / dt, c.gap / dt)
            } else {
                (-p.baumgarte / dt * (c.depth - p.slop).max(0.0), 0.0)
            };
            let normal_row = self.push(RowKind::Normal(ci), bias, relax_bias, c.normal_impulse);
            self.fill_point_row(normal_row, tree, frame, c, c.normal);
            let r = self.push(RowKind::Tangent { contact: ci, normal_row }, 0.0, 0.0, c.tangent_impulse);
            self.fill_point_row(r, tree, frame, c, c.tangent());
        }
    }

    fn fill_point_row(&mut self, r: usize, tree: &Tree, frame: &Frame, c: &Contact, dir: Vec2) {
        let row = &mut self.jac[r * self.n..(r + 1) * self.n];
        for &k in &tree.support[c.body_b] {
            row[k] += frame.column(k, c.point).dot(dir);
        }
        for &k in &tree.support[c.body_a] {
            row[k] -= frame.column(k, c.point).dot(dir);
        }
    }

    fn finish(&mut self, chol: &Cholesky) {
        let n = self.n;
        self.w = self.jac.clone();
        self.inv_a = Vec::with_capacity(self.kind.len());
        for r in 0..self.kind.len() {
            let w = &mut self.w[r * n..(r + 1) * n];
            chol.solve(w);
            let a = dot(&self.jac[r * n..(r + 1) * n], w);
            self.inv_a.push(if a > 0.0 { 1.0 / a } else { 0.0 });
        }
    }

    fn warm_start(&self, qd: &mut [f64]) {
        let n = self.n;
        for (r, &l) in self.lambda.iter().enumerate() {
            if l != 0.0 {
                axpy(qd, l, &self.w[r * n..(r + 1) * n]);
            }
        }
    }

    fn sweep(&mut self, qd: &mut [f64], friction: f64, relax: bool) {
        let n = self.n;
        for r in 0..self.kind.len() {
            if self.inv_a[r] == 0.0 {
                continue;
            }
            let v = dot(&self.jac[r * n..(r + 1) * n], qd);
            let b = if relax { self.relax_bias[r] } else { self.bias[r] };
            let (lo, hi) = match self.kind[r] {
                RowKind::Tangent { normal_row, .. } => {
                    let limit = friction * self.lambda[normal_row];
                    (-limit, limit)
                }
                _ => (0.0, f64::INFINITY),
            };
            let old = self.lambda[r];
            let new = (old - (v + b) * self.inv_a[r]).clamp(lo, hi);
            if new != old {
                self.lambda[r] = new;
                axpy(qd, new - old, &self.w[r * n..(r + 1) * n]);
            }
        }
    }

    fn store(&self, joints: &mut [RevoluteJoint], contacts: &mut [Contact]) {
        for j in joints.iter_mut() {
            j.lower_impulse = 0.0;
            j.upper_impulse = 0.0;
        }
        for (kind, &l) in self.kind.iter().zip(&self.lambda) {
            match *kind {
                RowKind::Lower(j) => joints[j].lower_impulse = l,
                RowKind::Upper(j) => joints[j].upper_impulse = l,
                RowKind::Normal(c) => contacts[c].normal_impulse = l,
                RowKind::Tangent { contact, .. } => contacts[contact].tangent_impulse = l,
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
