//! Discrete-time world: differential-drive agent, ground-truth stochastic
//! obstacle motion, local sensing, and collision/goal detection.
//!
//! The world advances in fixed steps of `dt`. Obstacle motion is a pure
//! function of the world RNG stream, so trajectories are identical across
//! runs (and across planner architectures) for a fixed seed.

use crate::geometry::{wrap_angle, Vec2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("control out of bounds: v={v} (allowed [0, {v_max}]), omega={omega} (allowed [-{omega_max}, {omega_max}])")]
    ControlOutOfBounds {
        v: f64,
        omega: f64,
        v_max: f64,
        omega_max: f64,
    },
    #[error("obstacle track {id} has an empty position history")]
    EmptyHistory { id: usize },
}

/// Agent pose: planar position plus heading in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl AgentState {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        AgentState {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Differential-drive actuation: forward speed and turn rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub linear_velocity: f64,
    pub angular_velocity: f64,
}

impl ControlInput {
    pub fn new(linear_velocity: f64, angular_velocity: f64) -> Self {
        ControlInput {
            linear_velocity,
            angular_velocity,
        }
    }
}

/// Box bounds on the control input set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLimits {
    pub v_max: f64,
    pub omega_max: f64,
}

impl ControlLimits {
    pub fn contains(&self, u: ControlInput) -> bool {
        u.linear_velocity >= 0.0
            && u.linear_velocity <= self.v_max
            && u.angular_velocity.abs() <= self.omega_max
    }

    /// Componentwise clamp onto the control box.
    pub fn project(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            linear_velocity: u.linear_velocity.clamp(0.0, self.v_max),
            angular_velocity: u.angular_velocity.clamp(-self.omega_max, self.omega_max),
        }
    }
}

/// Axis-aligned workspace rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Bounds { min, max }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Static world parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub bounds: Bounds,
    pub goal: Vec2,
    pub goal_radius: f64,
    pub sensing_radius: f64,
    pub dt: f64,
    pub agent_radius: f64,
    pub limits: ControlLimits,
    pub max_steps: usize,
    pub rng_seed: u64,
}

/// Ground-truth motion pattern of one obstacle. Hidden from the planner:
/// the planner only ever sees position histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MotionPattern {
    /// Fixed velocity plus Gaussian acceleration noise.
    ConstantVelocity { velocity: Vec2, accel_sigma: f64 },
    /// Orbiting base drift plus a sinusoid along a weave axis that stays
    /// perpendicular to the base (phase advances with time). The signed
    /// orbit rate turns the base onto a fixed circle.
    Sinusoid {
        base_velocity: Vec2,
        amplitude: f64,
        period: f64,
        phase: f64,
        elapsed: f64,
        weave_axis: Vec2,
        orbit_rate: f64,
    },
    /// Steer toward a waypoint at fixed speed with a bounded turn rate;
    /// resample the waypoint on arrival.
    Waypoint {
        target: Vec2,
        speed: f64,
        heading: f64,
        turn_rate: f64,
    },
    /// Alternate between moving at a fixed velocity and pausing.
    StopAndGo {
        velocity: Vec2,
        move_duration: f64,
        pause_duration: f64,
        phase_elapsed: f64,
        moving: bool,
    },
}

/// Tag used when sampling patterns and for per-pattern diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternKind {
    ConstantVelocity,
    Sinusoid,
    Waypoint,
    StopAndGo,
}

impl MotionPattern {
    pub fn kind(&self) -> PatternKind {
        match self {
            MotionPattern::ConstantVelocity { .. } => PatternKind::ConstantVelocity,
            MotionPattern::Sinusoid { .. } => PatternKind::Sinusoid,
            MotionPattern::Waypoint { .. } => PatternKind::Waypoint,
            MotionPattern::StopAndGo { .. } => PatternKind::StopAndGo,
        }
    }

    /// Instantaneous velocity for the coming step, advancing internal phase
    /// state. Boundary handling lives at the track level; `weave_scale`
    /// damps the lateral oscillation while wall-latched. RNG draws depend
    /// only on the pattern's own state, never on the agent, so obstacle
    /// trajectories are architecture-independent.
    fn step_velocity(
        &mut self,
        position: Vec2,
        bounds: &Bounds,
        dt: f64,
        weave_scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Vec2 {
        match self {
            MotionPattern::ConstantVelocity {
                velocity,
                accel_sigma,
            } => {
                if *accel_sigma > 0.0 {
                    let ax = gaussian(rng) * *accel_sigma;
                    let ay = gaussian(rng) * *accel_sigma;
                    *velocity += Vec2::new(ax, ay) * dt;
                }
                *velocity
            }
            MotionPattern::Sinusoid {
                base_velocity,
                amplitude,
                period,
                phase,
                elapsed,
                weave_axis,
                orbit_rate,
            } => {
                let omega = 2.0 * std::f64::consts::PI / *period;
                let theta = omega * *elapsed + *phase;
                // Exact derivative of the offset A sin(theta) carried on the
                // rotating weave axis; the axis-rotation term keeps the
                // orbit closed instead of drifting secularly.
                let v_lat = (*weave_axis * (*amplitude * omega * theta.cos())
                    + weave_axis.perp() * (*orbit_rate * *amplitude * theta.sin()))
                    * weave_scale;
                *elapsed += dt;
                let spin = *orbit_rate * dt;
                let (sin_s, cos_s) = spin.sin_cos();
                let rot = |v: &mut Vec2| {
                    *v = Vec2::new(v.x * cos_s - v.y * sin_s, v.x * sin_s + v.y * cos_s);
                };
                let emitted = *base_velocity + v_lat;
                rot(base_velocity);
                rot(weave_axis);
                emitted
            }
            MotionPattern::Waypoint {
                target,
                speed,
                heading,
                turn_rate,
            } => {
                if position.distance(*target) <= *speed * dt * 1.5 {
                    *target = sample_inset_point(bounds, rng);
                }
                let desired = (*target - position).normalized();
                let desired_heading = desired.y.atan2(desired.x);
                let diff = wrap_angle(desired_heading - *heading);
                let max_turn = *turn_rate * dt;
                *heading = wrap_angle(*heading + diff.clamp(-max_turn, max_turn));
                Vec2::new(heading.cos(), heading.sin()) * *speed
            }
            MotionPattern::StopAndGo {
                velocity,
                move_duration,
                pause_duration,
                phase_elapsed,
                moving,
            } => {
                let limit = if *moving { *move_duration } else { *pause_duration };
                if *phase_elapsed >= limit {
                    *moving = !*moving;
                    *phase_elapsed = 0.0;
                }
                *phase_elapsed += dt;
                if *moving {
                    *velocity
                } else {
                    Vec2::ZERO
                }
            }
        }
    }

    /// The direction-carrying internal state, used for wall-mode decisions.
    fn persistent_velocity(&self) -> Vec2 {
        match self {
            MotionPattern::ConstantVelocity { velocity, .. } => *velocity,
            MotionPattern::Sinusoid { base_velocity, .. } => *base_velocity,
            MotionPattern::Waypoint { speed, heading, .. } => {
                Vec2::new(heading.cos(), heading.sin()) * *speed
            }
            MotionPattern::StopAndGo { velocity, .. } => *velocity,
        }
    }

    /// True while the pattern emits zero velocity (a stop-and-go pause);
    /// wall steering waits for motion to resume.
    fn is_stationary(&self) -> bool {
        matches!(self, MotionPattern::StopAndGo { moving: false, .. })
    }

    /// Peak speed the emitted velocity can deviate laterally from the
    /// persistent velocity (the weave envelope; zero for other patterns).
    fn lateral_speed_max(&self) -> f64 {
        match self {
            MotionPattern::Sinusoid {
                amplitude, period, ..
            } => amplitude * 2.0 * std::f64::consts::PI / period,
            _ => 0.0,
        }
    }

    /// Rotate the persistent velocity state (and the weave axis with it).
    fn rotate(&mut self, angle: f64) {
        let rot = |v: &mut Vec2| {
            let (sin_a, cos_a) = angle.sin_cos();
            *v = Vec2::new(v.x * cos_a - v.y * sin_a, v.x * sin_a + v.y * cos_a);
        };
        match self {
            MotionPattern::ConstantVelocity { velocity, .. } => rot(velocity),
            MotionPattern::Sinusoid {
                base_velocity,
                weave_axis,
                ..
            } => {
                rot(base_velocity);
                rot(weave_axis);
            }
            MotionPattern::Waypoint { heading, .. } => {
                *heading = wrap_angle(*heading + angle);
            }
            MotionPattern::StopAndGo { velocity, .. } => rot(velocity),
        }
    }

    /// Negate internal velocity state along one axis after a boundary bounce.
    fn reflect(&mut self, axis_x: bool, bounds: &Bounds) {
        match self {
            MotionPattern::ConstantVelocity { velocity, .. } => reflect_vec(velocity, axis_x),
            MotionPattern::Sinusoid {
                base_velocity,
                weave_axis,
                ..
            } => {
                reflect_vec(base_velocity, axis_x);
                reflect_vec(weave_axis, axis_x);
            }
            MotionPattern::Waypoint { target, heading, .. } => {
                if axis_x {
                    target.x = mirror(target.x, bounds.min.x, bounds.max.x);
                    *heading = wrap_angle(std::f64::consts::PI - *heading);
                } else {
                    target.y = mirror(target.y, bounds.min.y, bounds.max.y);
                    *heading = wrap_angle(-*heading);
                }
            }
            MotionPattern::StopAndGo { velocity, .. } => reflect_vec(velocity, axis_x),
        }
    }
}

fn reflect_vec(v: &mut Vec2, axis_x: bool) {
    if axis_x {
        v.x = -v.x;
    } else {
        v.y = -v.y;
    }
}

fn mirror(v: f64, min: f64, max: f64) -> f64 {
    if v < min {
        2.0 * min - v
    } else if v > max {
        2.0 * max - v
    } else {
        v
    }
}

/// Waypoints stay out of the wall zone so bouncers seldom enter it.
fn sample_inset_point(bounds: &Bounds, rng: &mut ChaCha8Rng) -> Vec2 {
    let inset = WAYPOINT_INSET.min((bounds.max.x - bounds.min.x) / 4.0);
    Vec2::new(
        rng.gen_range(bounds.min.x + inset..bounds.max.x - inset),
        rng.gen_range(bounds.min.y + inset..bounds.max.y - inset),
    )
}

/// Sum of outward wall normals whose latch zones contain the position.
fn outward_normal(p: Vec2, bounds: &Bounds) -> Vec2 {
    let mut outward = Vec2::ZERO;
    if p.x - bounds.min.x < WALL_LATCH_MARGIN {
        outward.x -= 1.0;
    }
    if bounds.max.x - p.x < WALL_LATCH_MARGIN {
        outward.x += 1.0;
    }
    if p.y - bounds.min.y < WALL_LATCH_MARGIN {
        outward.y -= 1.0;
    }
    if bounds.max.y - p.y < WALL_LATCH_MARGIN {
        outward.y += 1.0;
    }
    outward
}

/// Fade the wall-facing velocity component to zero across the emergency
/// band. Applied to the emitted velocity of every pattern; with ramped
/// steering upstream this band is rarely entered.
fn wall_fade(mut v: Vec2, p: Vec2, bounds: &Bounds) -> Vec2 {
    let fade = |d: f64| (d / WALL_EMERGENCY_BAND).clamp(0.0, 1.0);
    if v.x < 0.0 {
        v.x *= fade(p.x - bounds.min.x);
    } else {
        v.x *= fade(bounds.max.x - p.x);
    }
    if v.y < 0.0 {
        v.y *= fade(p.y - bounds.min.y);
    } else {
        v.y *= fade(bounds.max.y - p.y);
    }
    v
}

/// Standard normal via Box-Muller (two uniform draws per sample).
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Samples ground-truth motion patterns for scenario generation and for
/// calibration rollouts, so both draw from the same distribution.
///
/// Parameter ranges are fixed here rather than config-exposed: the predictor
/// accuracy asymmetry is calibrated against this exact distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternSampler {
    /// Relative weights for (constant-velocity, sinusoid, waypoint, stop-and-go).
    pub weights: [f64; 4],
}

impl Default for PatternSampler {
    fn default() -> Self {
        PatternSampler {
            weights: [1.0, 1.0, 1.0, 1.0],
        }
    }
}

const CV_SPEED: (f64, f64) = (0.2, 0.4);
const CV_ACCEL_SIGMA: f64 = 0.05;
const SIN_SPEED: (f64, f64) = (0.46, 0.6);
// Weave geometry is fixed (direction, phase, and speed stay continuous): the
// retrieval predictor can only exploit structure the library covers densely,
// and that coverage is what makes the accuracy asymmetry emerge from
// calibration. The base speed floor keeps paths loop-free. The base follows
// a gentle orbit sized to fit inside the workspace, so weavers never
// interact with the boundary shaping at all.
const SIN_AMPLITUDES: [f64; 1] = [0.28];
const SIN_PERIODS: [f64; 1] = [4.5];
const SIN_ORBIT_RADII: [f64; 1] = [4.0];
const SIN_ORBIT_CLEARANCE: f64 = 2.8;

const WAYPOINT_SPEED: (f64, f64) = (0.15, 0.3);
const WAYPOINT_TURN_RATE: (f64, f64) = (0.25, 0.4);
const STOPGO_SPEED: (f64, f64) = (0.15, 0.28);
const STOPGO_MOVE: (f64, f64) = (1.0, 3.0);
const STOPGO_PAUSE: (f64, f64) = (0.4, 0.8);

/// Boundary shaping: an obstacle whose persistent velocity points at a wall
/// within the latch margin enters "wall mode", turning at a constant rate
/// until it faces inward again; the weave of a sinusoid obstacle calms while
/// latched so wall encounters are plain arcs. A thin emergency band fades
/// the wall-facing velocity component to keep positions in bounds; hard
/// reflection remains as a rare backstop for noise-driven excursions.
const WALL_LATCH_MARGIN: f64 = 2.2;
const WALL_TURN_RATE: f64 = 0.3;
const WALL_CALM_RATE: f64 = 1.25;
const WALL_EMERGENCY_BAND: f64 = 0.5;
const WAYPOINT_INSET: f64 = 2.6;

impl PatternSampler {
    pub fn new(weights: [f64; 4]) -> Self {
        PatternSampler { weights }
    }

    /// Sample a pattern. Orbit-anchored patterns also pin their start
    /// position (the orbit must fit inside the workspace); the caller places
    /// free patterns wherever it wants.
    pub fn sample_placed(
        &self,
        bounds: &Bounds,
        rng: &mut ChaCha8Rng,
    ) -> (MotionPattern, Option<Vec2>) {
        let total: f64 = self.weights.iter().sum();
        let mut pick = rng.gen_range(0.0..total.max(f64::MIN_POSITIVE));
        let mut kind = 3usize;
        for (i, w) in self.weights.iter().enumerate() {
            if pick < *w {
                kind = i;
                break;
            }
            pick -= *w;
        }
        let dir = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let heading_vec = Vec2::new(dir.cos(), dir.sin());
        match kind {
            0 => (
                MotionPattern::ConstantVelocity {
                    velocity: heading_vec * rng.gen_range(CV_SPEED.0..CV_SPEED.1),
                    accel_sigma: CV_ACCEL_SIGMA,
                },
                None,
            ),
            1 => {
                let radius = SIN_ORBIT_RADII[rng.gen_range(0..SIN_ORBIT_RADII.len())];
                let speed = rng.gen_range(SIN_SPEED.0..SIN_SPEED.1);
                // One-handed orbits: the curvature sign would otherwise be
                // hidden under the weave in a short window, and a wrong-sign
                // retrieval is the dominant failure mode.
                let sign = 1.0;
                // Orbit center placed so the full circle (plus weave extent)
                // stays inside the workspace.
                let inset = radius + SIN_ORBIT_CLEARANCE;
                let half_span = ((bounds.max.x - bounds.min.x) / 2.0 - 0.5).max(0.5);
                let inset = inset.min(half_span);
                let center = Vec2::new(
                    rng.gen_range(bounds.min.x + inset..bounds.max.x - inset),
                    rng.gen_range(bounds.min.y + inset..bounds.max.y - inset),
                );
                let angle = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                let radial = Vec2::new(angle.cos(), angle.sin());
                let start = center + radial * radius;
                let tangent = radial.perp() * sign;
                (
                    MotionPattern::Sinusoid {
                        base_velocity: tangent * speed,
                        amplitude: SIN_AMPLITUDES[rng.gen_range(0..SIN_AMPLITUDES.len())],
                        period: SIN_PERIODS[rng.gen_range(0..SIN_PERIODS.len())],
                        phase: rng.gen_range(0.0..2.0 * std::f64::consts::PI),
                        elapsed: 0.0,
                        weave_axis: tangent.perp(),
                        orbit_rate: sign * speed / radius,
                    },
                    Some(start),
                )
            }
            2 => (
                MotionPattern::Waypoint {
                    target: sample_inset_point(bounds, rng),
                    speed: rng.gen_range(WAYPOINT_SPEED.0..WAYPOINT_SPEED.1),
                    heading: dir,
                    turn_rate: rng.gen_range(WAYPOINT_TURN_RATE.0..WAYPOINT_TURN_RATE.1),
                },
                None,
            ),
            _ => {
                let move_duration = rng.gen_range(STOPGO_MOVE.0..STOPGO_MOVE.1);
                (
                    MotionPattern::StopAndGo {
                        velocity: heading_vec * rng.gen_range(STOPGO_SPEED.0..STOPGO_SPEED.1),
                        move_duration,
                        pause_duration: rng.gen_range(STOPGO_PAUSE.0..STOPGO_PAUSE.1),
                        phase_elapsed: rng.gen_range(0.0..move_duration),
                        moving: true,
                    },
                    None,
                )
            }
        }
    }
}

/// Simulate a single obstacle stream for `steps` steps and return its
/// position history (steps + 1 points). Used for calibration rollouts.
pub fn simulate_stream(
    pattern: MotionPattern,
    start: Vec2,
    bounds: &Bounds,
    dt: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec2> {
    let mut tracks = vec![ObstacleTrack::new(1, start, 0.0, pattern)];
    for _ in 0..steps {
        step_obstacles(&mut tracks, bounds, dt, rng).expect("single-track history is non-empty");
    }
    tracks.pop().expect("one track").position_history
}

/// Identity plus observed position history of one obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleTrack {
    pub id: usize,
    pub position_history: Vec<Vec2>,
    pub radius: f64,
    pub pattern: MotionPattern,
    /// Wall-mode latch: set while the obstacle is turning away from a wall.
    pub wall_mode: bool,
    /// Turn direction chosen at latch entry (sign of the tangential motion).
    pub wall_turn_sign: f64,
    /// Weave damping state in [0,1]; sinks while wall-latched.
    pub calm: f64,
}

impl ObstacleTrack {
    pub fn new(id: usize, start: Vec2, radius: f64, pattern: MotionPattern) -> Self {
        ObstacleTrack {
            id,
            position_history: vec![start],
            radius,
            pattern,
            wall_mode: false,
            wall_turn_sign: 1.0,
            calm: 1.0,
        }
    }

    pub fn position(&self) -> Vec2 {
        *self
            .position_history
            .last()
            .expect("obstacle track history is never empty")
    }

    pub fn position_at(&self, step: usize) -> Option<Vec2> {
        self.position_history.get(step).copied()
    }
}

/// One obstacle sensed within range: id plus exactly measured position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensedObstacle {
    pub id: usize,
    pub position: Vec2,
    pub radius: f64,
}

/// Advance the agent one step under the kinematic differential-drive model.
///
/// Rejects controls outside the box bounds; heading stays in (-pi, pi].
pub fn step_agent(
    state: &AgentState,
    u: ControlInput,
    limits: &ControlLimits,
    dt: f64,
) -> Result<AgentState, SimError> {
    if !limits.contains(u) {
        return Err(SimError::ControlOutOfBounds {
            v: u.linear_velocity,
            omega: u.angular_velocity,
            v_max: limits.v_max,
            omega_max: limits.omega_max,
        });
    }
    Ok(step_agent_unchecked(state, u, dt))
}

/// Same integration step without the bound check; used by the solver, whose
/// projection already guarantees in-bounds controls.
pub fn step_agent_unchecked(state: &AgentState, u: ControlInput, dt: f64) -> AgentState {
    AgentState {
        x: state.x + u.linear_velocity * state.heading.cos() * dt,
        y: state.y + u.linear_velocity * state.heading.sin() * dt,
        heading: wrap_angle(state.heading + u.angular_velocity * dt),
    }
}

/// Advance every obstacle one step under its own pattern, reflecting off the
/// workspace boundary, and append the new position to its history.
pub fn step_obstacles(
    tracks: &mut [ObstacleTrack],
    bounds: &Bounds,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(), SimError> {
    for track in tracks.iter_mut() {
        if track.position_history.is_empty() {
            return Err(SimError::EmptyHistory { id: track.id });
        }
        let p = track.position();

        // Wall-mode latch: enter when the persistent velocity points at a
        // nearby wall, turn at a constant rate until it faces inward, then
        // release. The latch holds through the turn so boundary behavior is
        // one clean arc rather than chattering micro-corrections.
        let outward = outward_normal(p, bounds);
        let persistent = track.pattern.persistent_velocity();
        // The weave envelope counts as outward drive: a wall-parallel weaver
        // still gets turned away rather than letting its oscillation carry
        // it into the emergency band.
        let envelope = track.pattern.lateral_speed_max();
        let out_dir = outward.normalized();
        if track.wall_mode {
            if outward == Vec2::ZERO || persistent.dot(out_dir) <= -envelope {
                track.wall_mode = false;
            }
        } else if outward != Vec2::ZERO
            && persistent.dot(out_dir) > -envelope
            && !track.pattern.is_stationary()
        {
            track.wall_mode = true;
            let tangent = out_dir.perp();
            track.wall_turn_sign = if persistent.dot(tangent) >= 0.0 { 1.0 } else { -1.0 };
        }
        if track.wall_mode && !track.pattern.is_stationary() {
            track.pattern.rotate(track.wall_turn_sign * WALL_TURN_RATE * dt);
            track.calm = (track.calm - WALL_CALM_RATE * dt).max(0.0);
        } else {
            track.calm = (track.calm + WALL_CALM_RATE * dt).min(1.0);
        }

        let v = track
            .pattern
            .step_velocity(p, bounds, dt, track.calm, rng);
        let v = wall_fade(v, p, bounds);
        let mut next = p + v * dt;
        // Reflect on each axis independently; one mirror per axis is enough
        // because per-step travel is far smaller than the workspace.
        if next.x < bounds.min.x || next.x > bounds.max.x {
            next.x = mirror(next.x, bounds.min.x, bounds.max.x);
            track.pattern.reflect(true, bounds);
        }
        if next.y < bounds.min.y || next.y > bounds.max.y {
            next.y = mirror(next.y, bounds.min.y, bounds.max.y);
            track.pattern.reflect(false, bounds);
        }
        next.x = next.x.clamp(bounds.min.x, bounds.max.x);
        next.y = next.y.clamp(bounds.min.y, bounds.max.y);
        track.position_history.push(next);
    }
    Ok(())
}

/// The sensed set: every obstacle whose current position lies within
/// `sensing_radius` of the agent, in id order.
pub fn sense(agent: &AgentState, tracks: &[ObstacleTrack], sensing_radius: f64) -> Vec<SensedObstacle> {
    let p = agent.position();
    tracks
        .iter()
        .filter(|t| t.position().distance(p) <= sensing_radius)
        .map(|t| SensedObstacle {
            id: t.id,
            position: t.position(),
            radius: t.radius,
        })
        .collect()
}

/// True iff some obstacle overlaps the agent disc (strict inequality, so
/// exact tangency does not count as a collision).
pub fn check_collision(agent: &AgentState, tracks: &[ObstacleTrack], agent_radius: f64) -> bool {
    let p = agent.position();
    tracks
        .iter()
        .any(|t| t.position().distance(p) < agent_radius + t.radius)
}

/// True iff the agent is within the goal radius (boundary inclusive).
pub fn at_goal(agent: &AgentState, config: &WorldConfig) -> bool {
    agent.position().distance(config.goal) <= config.goal_radius
}
