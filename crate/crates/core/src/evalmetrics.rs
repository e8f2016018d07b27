//! Tracking error, jerk and success-ratio metrics under all-frame initialization.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charscene::ContactState;
use crate::learner::{LearnerError, Policy, TrackingEnv};
use crate::math::{wrap_angle, Vec2};
use crate::motionlib::{sensors_from_world, SensorFrame};

/// Table column headers, in order.
pub const METRIC_COLUMNS: [&str; 7] = [
    "Tracking Error Headset [cm]",
    "Tracking Error Headset [deg]",
    "Tracking Error Controller [cm]",
    "Jerk [km/s^3]",
    "Success ratio [20s]",
    "Success ratio [30s]",
    "Success ratio [frame]",
];

/// Success horizons, s.
pub const HORIZONS: [f64; 2] = [20.0, 30.0];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {what} has {got} entries, expected {expected}")]
    DimensionMismatch { what: &'static str, got: usize, expected: usize },
    #[error("jerk needs at least 4 samples, got {0}")]
    TooShort(usize),
    #[error("no episode results to aggregate")]
    Empty,
    #[error("start frame {start} outside a {frames}-frame clip")]
    StartOutOfRange { start: usize, frames: usize },
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// Per-step errors between two sensor trajectories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorSeries {
    pub head_position: Vec<f64>,
    pub head_angle: Vec<f64>,
    pub hand_position: Vec<f64>,
}

pub fn tracking_errors(sim: &[SensorFrame], reference: &[SensorFrame]) -> Result<ErrorSeries, MetricsError> {
    if sim.len() != reference.len() {
        return Err(MetricsError::DimensionMismatch {
            what: "simulated sensor trajectory",
            got: sim.len(),
            expected: reference.len(),
        });
    }
    let mut out = ErrorSeries::default();
    for (s, r) in sim.iter().zip(reference) {
        out.head_position.push((s.head_position - r.head_position).length());
        out.head_angle.push(wrap_angle(s.head_angle() - r.head_angle()).abs());
        out.hand_position.push((s.hand_position - r.hand_position).length());
    }
    Ok(out)
}

/// Third-difference jerk magnitudes, m/s³, one per window of four consecutive samples.
pub fn jerk_series(positions: &[Vec2], dt: f64) -> Result<Vec<f64>, MetricsError> {
    if positions.len() < 4 {
        return Err(MetricsError::TooShort(positions.len()));
    }
    let d3 = dt * dt * dt;
    Ok(positions
        .windows(4)
        .map(|w| ((w[3] - w[2] * 3.0 + w[1] * 3.0 - w[0]) / d3).length())
        .collect())
}

/// Mean jerk magnitude, km/s³.
pub fn jerk(positions: &[Vec2], dt: f64) -> Result<f64, MetricsError> {
    let j = jerk_series(positions, dt)?;
    Ok(j.iter().sum::<f64>() / j.len() as f64 / 1000.0)
}

/// One closed-loop evaluation episode. Series cover only the steps tracked before failure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeResult {
    pub clip: usize,
    pub start_frame: usize,
    pub dt: f64,
    /// Control steps left in the clip after the start frame.
    pub steps_available: usize,
    /// Control steps completed without failure.
    pub steps_tracked: usize,
    pub failed: bool,
    /// Time after the start at which tracking failed, s.
    pub failure_time: Option<f64>,
    pub errors: ErrorSeries,
    /// Head positions from the start state through the last tracked step.
    pub head_positions: Vec<Vec2>,
    pub contacts: Vec<ContactState>,
    pub reference_contacts: Vec<ContactState>,
}

impl EpisodeResult {
    pub fn tracked_duration(&self) -> f64 {
        self.steps_tracked as f64 * self.dt
    }

    pub fn head_jerk(&self) -> Vec<f64> {
        jerk_series(&self.head_positions, self.dt).unwrap_or_default()
    }
}

/// Runs the deterministic policy from `start` until the clip ends or tracking fails. The
/// environment should have randomization disabled.
pub fn run_episode(policy: &Policy, env: &mut TrackingEnv, clip: usize, start: usize) -> Result<EpisodeResult, MetricsError> {
    let frames = env.clips[clip].frame_count();
    if start >= frames {
        return Err(MetricsError::StartOutOfRange { start, frames });
    }
    let mut result = EpisodeResult {
        clip,
        start_frame: start,
        dt: env.clips[clip].clip.dt,
        steps_available: frames - 1 - start,
        ..Default::default()
    };
    if result.steps_available == 0 {
        return Ok(result);
    }
    env.reset_to(clip, start, &mut ChaCha8Rng::seed_from_u64(0))?;
    result.head_positions.push(sensors_from_world(&env.spec, &env.world).head_position);
    for step in 0..result.steps_available {
        let action = policy.mean_action(&env.observe()?)?;
        let outcome = env.step(&action)?;
        if outcome.done {
            result.failed = true;
            result.failure_time = Some((step + 1) as f64 * result.dt);
            break;
        }
        let e = tracking_errors(&[outcome.sensors], &[outcome.reference])?;
        result.errors.head_position.extend(e.head_position);
        result.errors.head_angle.extend(e.head_angle);
        result.errors.hand_position.extend(e.hand_position);
        result.head_positions.push(outcome.sensors.head_position);
        result.contacts.push(outcome.contacts);
        result.reference_contacts.push(env.data().clip.frames[env.frame].contacts);
        result.steps_tracked += 1;
    }
    Ok(result)
}

/// Episodes from every start frame of every clip of `env`, in clip then start-frame order.
pub fn evaluate_all_frames(policy: &Policy, env: &TrackingEnv) -> Result<Vec<EpisodeResult>, MetricsError> {
    let jobs: Vec<(usize, usize)> = (0..env.clips.len())
        .flat_map(|c| (0..env.clips[c].frame_count()).map(move |s| (c, s)))
        .collect();
    jobs.par_iter()
        .map(|&(c, s)| run_episode(policy, &mut env.clone(), c, s))
        .collect()
}

/// Aggregate metrics. Ratios for a horizon no episode can reach are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub head_error_cm: f64,
    pub head_error_deg: f64,
    pub hand_error_cm: f64,
    pub jerk_km_s3: f64,
    pub success_20s: Option<f64>,
    pub success_30s: Option<f64>,
    pub success_frame: f64,
    pub episodes: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn horizon_steps(h: f64, dt: f64) -> usize {
    (h / dt).round() as usize
}

/// Success ratio for horizon `h`: survivors over episodes with at least `h` of clip left.
pub fn success_ratio(results: &[EpisodeResult], h: f64) -> Option<f64> {
    let eligible: Vec<&EpisodeResult> = results.iter().filter(|r| r.steps_available >= horizon_steps(h, r.dt)).collect();
    if eligible.is_empty() {
        return None;
    }
    let ok = eligible.iter().filter(|r| r.steps_tracked >= horizon_steps(h, r.dt)).count();
    Some(ok as f64 / eligible.len() as f64)
}

/// Mean fraction of the first 30 s (or of the remaining clip, if shorter) tracked.
/// Episodes with nothing left to track count as fully tracked.
pub fn frame_ratio(results: &[EpisodeResult]) -> f64 {
    mean(results.iter().map(|r| {
        let cap = horizon_steps(HORIZONS[1], r.dt).min(r.steps_available);
        if cap == 0 {
            1.0
        } else {
            r.steps_tracked.min(cap) as f64 / cap as f64
        }
    }))
}

pub fn aggregate(results: &[EpisodeResult]) -> Result<MetricsReport, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    let all = |f: fn(&EpisodeResult) -> &Vec<f64>| mean(results.iter().flat_map(|r| f(r).iter().copied()));
    Ok(MetricsReport {
        head_error_cm: all(|r| &r.errors.head_position) * 100.0,
        head_error_deg: all(|r| &r.errors.head_angle) * (180.0 / std::f64::consts::PI),
        hand_error_cm: all(|r| &r.errors.hand_position) * 100.0,
        jerk_km_s3: mean(results.iter().flat_map(|r| r.head_jerk())) / 1000.0,
        success_20s: success_ratio(results, HORIZONS[0]),
        success_30s: success_ratio(results, HORIZONS[1]),
        success_frame: frame_ratio(results),
        episodes: results.len(),
    })
}

/// Among episodes whose tracked reference labels contact slot `slot` at least once, the
/// fraction in which the simulation also labels it at some such step.
pub fn phase_contact_hit_ratio(results: &[EpisodeResult], slot: usize) -> Option<f64> {
    let mut eligible = 0usize;
    let mut hits = 0usize;
    for r in results {
        let phase: Vec<usize> = (0..r.reference_contacts.len()).filter(|&i| r.reference_contacts[i].0[slot]).collect();
        if phase.is_empty() {
            continue;
        }
        eligible += 1;
        if phase.iter().any(|&i| r.contacts[i].0[slot]) {
            hits += 1;
        }
    }
    (eligible > 0).then(|| hits as f64 / eligible as f64)
}

/// Fraction of tracked steps with slot `slot` labelled in the reference where the
/// simulation labels it too.
pub fn phase_contact_agreement(results: &[EpisodeResult], slot: usize) -> Option<f64> {
    let mut phase = 0usize;
    let mut agree = 0usize;
    for r in results {
        for (s, c) in r.contacts.iter().zip(&r.reference_contacts) {
            if c.0[slot] {
                phase += 1;
                agree += usize::from(s.0[slot]);
            }
        }
    }
    (phase > 0).then(|| agree as f64 / phase as f64)
}

impl MetricsReport {
    pub fn values(&self) -> [Option<f64>; 7] {
        [
            Some(self.head_error_cm),
            Some(self.head_error_deg),
            Some(self.hand_error_cm),
            Some(self.jerk_km_s3),
            self.success_20s,
            self.success_30s,
            Some(self.success_frame),
        ]
    }

    /// Header line plus one row; unreachable horizons are written as `-`.
    pub fn to_csv(&self) -> String {
        let mut out = METRIC_COLUMNS.join(",");
        out.push('\n');
        let cells: Vec<String> = self.values().iter().map(|v| v.map_or("-".to_string(), |x| format!("{x:.6}"))).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
        out
    }
}

/// One row per tracked step for plotting.
pub fn episode_steps_csv(results: &[EpisodeResult]) -> String {
    let mut out = String::from("clip,start_frame,step,time,head_error_m,head_angle_error_rad,hand_error_m,head_x,head_y,contacts,reference_contacts\n");
    let bits = |c: &ContactState| c.0.iter().map(|b| if *b { '1' } else { '0' }).collect::<String>();
    for r in results {
        for i in 0..r.steps_tracked {
            let h = r.head_positions[i + 1];
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
                r.clip,
                r.start_frame,
                i + 1,
                (i + 1) as f64 * r.dt,
                r.errors.head_position[i],
                r.errors.head_angle[i],
                r.errors.hand_position[i],
                h.x,
                h.y,
                bits(&r.contacts[i]),
                bits(&r.reference_contacts[i])
            )
            .expect("writing to a string");
        }
    }
    out
}

#[cfg(test)]
mod tests;
