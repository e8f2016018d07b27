//! Tracking rewards (imitation, contact, regularization) and sensor-drift termination.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charscene::{link_states, CharacterSpec, ContactState};
use crate::math::{wrap_angle, Vec2};
use crate::motionlib::{ReferenceFrame, SensorFrame};
use crate::rigidbody2d::WorldState;

/// Mean head/hand position error above which tracking has failed, m.
pub const FAILURE_DISTANCE: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("dimension mismatch: {what} has {got} entries, expected {expected}")]
    DimensionMismatch { what: &'static str, got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub w_q: f64,
    pub w_qd: f64,
    pub w_p: f64,
    pub w_pd: f64,
    pub w_r: f64,
    pub w_c: f64,
    pub w_a: f64,
    pub w_s: f64,
    pub k_q: f64,
    pub k_qd: f64,
    pub k_p: f64,
    pub k_pd: f64,
    pub k_r: f64,
    pub k_c: f64,
    pub k_a: f64,
    pub k_s: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_q: 0.3,
            w_qd: 0.05,
            w_p: 0.3,
            w_pd: 0.05,
            w_r: 0.1,
            w_c: 0.1,
            w_a: 0.05,
            w_s: 0.05,
            k_q: 2.0,
            k_qd: 0.005,
            k_p: 10.0,
            k_pd: 0.1,
            k_r: 5.0,
            k_c: 1.0,
            k_a: 0.3,
            k_s: 0.5,
        }
    }
}

impl RewardWeights {
    pub fn values(&self) -> [f64; 16] {
        [
            self.w_q, self.w_qd, self.w_p, self.w_pd, self.w_r, self.w_c, self.w_a, self.w_s, self.k_q, self.k_qd,
            self.k_p, self.k_pd, self.k_r, self.k_c, self.k_a, self.k_s,
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.values().iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn total(&self) -> f64 {
        self.w_q + self.w_qd + self.w_p + self.w_pd + self.w_r + self.w_c + self.w_a + self.w_s
    }
}

/// Kinematic quantities compared by the imitation reward.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub p: Vec<Vec2>,
    pub pd: Vec<Vec2>,
    /// Link orientations, rad.
    pub r: Vec<f64>,
}

impl KinematicState {
    pub fn from_world(world: &WorldState, spec: &CharacterSpec) -> Self {
        let links = &world.bodies[..spec.links.len()];
        let joints = &world.joints[..spec.joints.len()];
        Self {
            q: joints.iter().map(|j| j.angle(&world.bodies)).collect(),
            qd: joints.iter().map(|j| j.angular_velocity(&world.bodies)).collect(),
            p: links.iter().map(|b| b.position).collect(),
            pd: links.iter().map(|b| b.velocity).collect(),
            r: links.iter().map(|b| b.angle).collect(),
        }
    }

    pub fn from_reference(frame: &ReferenceFrame, spec: &CharacterSpec) -> Self {
        let states = link_states(spec, &frame.pose);
        Self {
            q: frame.pose.joint_angles.clone(),
            qd: frame.pose.joint_velocities.clone(),
            p: states.iter().map(|s| s.position).collect(),
            pd: states.iter().map(|s| s.velocity).collect(),
            r: states.iter().map(|s| s.angle).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub imitation: f64,
    pub contact: f64,
    pub regularization: f64,
    pub total: f64,
}

fn check(what: &'static str, got: usize, expected: usize) -> Result<(), RewardError> {
    if got == expected {
        Ok(())
    } else {
        Err(RewardError::DimensionMismatch { what, got, expected })
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sq2(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x - *y).length_squared()).sum()
}

pub fn imitation_reward(sim: &KinematicState, reference: &KinematicState, w: &RewardWeights) -> Result<f64, RewardError> {
    check("q", sim.q.len(), reference.q.len())?;
    check("qd", sim.qd.len(), reference.qd.len())?;
    check("p", sim.p.len(), reference.p.len())?;
    check("pd", sim.pd.len(), reference.pd.len())?;
    check("R", sim.r.len(), reference.r.len())?;
    let dr: f64 = sim.r.iter().zip(&reference.r).map(|(a, b)| wrap_angle(a - b).powi(2)).sum();
    Ok(w.w_q * (-w.k_q * sq(&sim.q, &reference.q)).exp()
        + w.w_qd * (-w.k_qd * sq(&sim.qd, &reference.qd)).exp()
        + w.w_p * (-w.k_p * sq2(&sim.p, &reference.p)).exp()
        + w.w_pd * (-w.k_pd * sq2(&sim.pd, &reference.pd)).exp()
        + w.w_r * (-w.k_r * dr).exp())
}

/// Per-mismatch geometric decay of the contact agreement.
pub fn contact_reward(sim: &[bool], reference: &[bool], w: &RewardWeights) -> Result<f64, RewardError> {
    check("contact state", sim.len(), reference.len())?;
    let mismatches = sim.iter().zip(reference).filter(|(a, b)| a != b).count() as f64;
    Ok(w.w_c * (-w.k_c * mismatches).exp())
}

pub fn regularization_reward(action: &[f64], previous: &[f64], w: &RewardWeights) -> Result<f64, RewardError> {
    check("previous action", previous.len(), action.len())?;
    let mag: f64 = action.iter().map(|a| a * a).sum();
    Ok(w.w_a * (-w.k_a * mag).exp() + w.w_s * (-w.k_s * sq(action, previous)).exp())
}

pub fn total_reward(
    sim: &KinematicState,
    reference: &KinematicState,
    c_sim: &ContactState,
    c_ref: &ContactState,
    action: &[f64],
    previous: &[f64],
    w: &RewardWeights,
) -> Result<RewardBreakdown, RewardError> {
    let imitation = imitation_reward(sim, reference, w)?;
    let contact = contact_reward(&c_sim.0, &c_ref.0, w)?;
    let regularization = regularization_reward(action, previous, w)?;
    Ok(RewardBreakdown {
        imitation,
        contact,
        regularization,
        total: imitation + contact + regularization,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Continue,
    Failed,
}

/// Mean of the head and hand position errors.
pub fn sensor_error(sim: &SensorFrame, reference: &SensorFrame) -> f64 {
    0.5 * ((sim.head_position - reference.head_position).length() + (sim.hand_position - reference.hand_position).length())
}

pub fn check_termination(sim: &SensorFrame, reference: &SensorFrame) -> Termination {
    if !(sensor_error(sim, reference) <= FAILURE_DISTANCE) {
        Termination::Failed
    } else {
        Termination::Continue
    }
}
