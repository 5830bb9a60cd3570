//! Planar pivoting simulator: a point finger flips a rectangular item up
//! against a fixture corner.
//!
//! Motion lies in the x–z plane (x horizontal, z up); y is out of plane and
//! never loaded. The item lies flat with its near end against the fixture
//! corner `P` and extends along `u(θ) = (−cos θ, 0, sin θ)`; `τ̂(θ) = (sin θ,
//! 0, cos θ)` points across its thickness. The finger works on the far end
//! face, the segment `P + width·u + l·τ̂` for `l ∈ [0, height]`, whose outward
//! normal is `u`.
//!
//! The item has no inertia. While the finger touches the end face the
//! friction needed for torque balance about `P` is computed; within the
//! friction cone the contact sticks and the item turns with the finger,
//! otherwise the contact slips and the item turns at a rate set by the net
//! torque and a viscous pivot. Without contact gravity lays the item back
//! down. Only the finger has dynamics (the admittance controller).

mod benchmark;
mod policy;

pub use benchmark::{
    run_benchmark, run_trial, trial_seed, BenchmarkReport, CellSummary, TickRecord, TrialOptions, TrialOutcome,
    TrialSummary,
};
pub use policy::{NominalTrajectory, PolicyKind, PolicyOutput, RefStep, ScriptedPolicy};

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::compliance::{admittance_step, AdmittanceParams, AdmittanceState, StiffnessProfile};
use crate::error::{Error, Result};
use crate::se3::Pose;

pub const GRAVITY: f64 = 9.81;
/// Finger–face gap still counted as touching, m.
pub const CONTACT_GAP: f64 = 5e-4;
/// Item angle that counts as a completed flip.
pub const SUCCESS_ANGLE_DEG: f64 = 70.0;
/// Item angle above which losing contact counts towards falling off.
pub const MID_FLIP_ANGLE_DEG: f64 = 5.0;
/// Smallest increase of the peak angle that resets the stall clock, rad.
const PROGRESS_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemSpec {
    /// Length along the pivot-to-end-face direction, m.
    pub width: f64,
    /// Thickness, i.e. the span of the end face, m.
    pub height: f64,
    pub mass: f64,
}

/// Reference motion of the finger, all relative to the nominal geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptSpec {
    /// Start distance of the finger outside the nominal end face, m.
    pub approach_distance: f64,
    pub approach_time: f64,
    pub settle_time: f64,
    pub arc_time: f64,
    pub arc_end_deg: f64,
    /// Time allowed after the arc before the trial is called stuck.
    pub hold_time: f64,
    /// Contact point on the end face, measured from the bottom edge, m.
    pub contact_height: f64,
    /// Magnitude of the force the finger should apply into the face, N.
    pub reference_force: f64,
}

impl Default for ScriptSpec {
    fn default() -> Self {
        Self {
            approach_distance: 0.04,
            approach_time: 1.0,
            settle_time: 0.5,
            arc_time: 4.0,
            arc_end_deg: 95.0,
            hold_time: 3.0,
            contact_height: 0.008,
            reference_force: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerSpec {
    pub mass: f64,
    /// Isotropic damping, N·s/m.
    pub damping: f64,
    pub dt: f64,
    pub force_limit: f64,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        // Critical damping for 2000 N/m at 1 kg.
        Self {
            mass: 1.0,
            damping: 2.0 * 2000f64.sqrt(),
            dt: 0.002,
            force_limit: 40.0,
        }
    }
}

impl ControllerSpec {
    pub fn params(&self) -> Result<AdmittanceParams> {
        AdmittanceParams::new(
            Matrix3::identity() * self.mass,
            Matrix3::identity() * self.damping,
            self.dt,
            self.force_limit,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipScenario {
    pub name: String,
    pub item: ItemSpec,
    /// Nominal fixture corner the item pivots about, m.
    pub fixture_pose: [f64; 3],
    /// Contact force above which the fixture starts to slide, N.
    pub fixture_slide_threshold: f64,
    /// Slide rate is `(|f| − threshold) / fixture_slide_damping`, N·s/m.
    pub fixture_slide_damping: f64,
    /// Total slide after which the item is lost, m.
    pub fixture_slide_limit: f64,
    pub finger_friction: f64,
    /// Standard deviation of the per-trial item offset along x, m.
    pub position_noise_sigma: f64,
    /// Standard deviation of the per-tick target jitter, m.
    #[serde(default = "default_jitter")]
    pub jitter_sigma: f64,
    /// Viscous friction of the pivot, N·m·s/rad.
    pub pivot_damping: f64,
    #[serde(default = "default_stall")]
    pub stall_time: f64,
    #[serde(default = "default_lost")]
    pub lost_contact_time: f64,
    pub seed: u64,
    #[serde(default)]
    pub script: ScriptSpec,
    #[serde(default)]
    pub controller: ControllerSpec,
}

fn default_jitter() -> f64 {
    2e-4
}
fn default_stall() -> f64 {
    3.0
}
fn default_lost() -> f64 {
    0.5
}

impl FlipScenario {
    pub fn nominal() -> Self {
        Self {
            name: "nominal".into(),
            item: ItemSpec {
                width: 0.08,
                height: 0.07,
                mass: 0.3,
            },
            fixture_pose: [0.5, 0.0, 0.0],
            fixture_slide_threshold: 15.0,
            fixture_slide_damping: 200.0,
            fixture_slide_limit: 0.02,
            finger_friction: 0.6,
            position_noise_sigma: 0.01,
            jitter_sigma: default_jitter(),
            pivot_damping: 0.2,
            stall_time: default_stall(),
            lost_contact_time: default_lost(),
            seed: 0,
            script: ScriptSpec::default(),
            controller: ControllerSpec::default(),
        }
    }

    /// Fixture that gives way at a lower force.
    pub fn unstable_fixture() -> Self {
        Self {
            name: "unstable_fixture".into(),
            fixture_slide_threshold: 9.0,
            ..Self::nominal()
        }
    }

    pub fn heavy_item() -> Self {
        let mut s = Self::nominal();
        s.name = "heavy_item".into();
        s.item.mass = 0.5;
        s
    }

    pub fn without_noise(&self) -> Self {
        Self {
            position_noise_sigma: 0.0,
            jitter_sigma: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("scenario `{}`: {what}", self.name)));
        let i = &self.item;
        if !(i.width > 0.0 && i.height > 0.0 && i.mass > 0.0) {
            return bad("item width, height and mass must be positive");
        }
        if !(self.fixture_slide_threshold > 0.0) {
            return bad("fixture_slide_threshold must be positive");
        }
        if !(self.fixture_slide_damping > 0.0 && self.fixture_slide_limit > 0.0) {
            return bad("fixture slide damping and limit must be positive");
        }
        if !(self.finger_friction >= 0.0) {
            return bad("finger_friction must be non-negative");
        }
        if !(self.position_noise_sigma >= 0.0 && self.jitter_sigma >= 0.0) {
            return bad("noise sigmas must be non-negative");
        }
        if !(self.pivot_damping > 0.0 && self.stall_time > 0.0 && self.lost_contact_time > 0.0) {
            return bad("pivot damping and timers must be positive");
        }
        if !self.fixture_pose.iter().all(|v| v.is_finite()) {
            return bad("fixture_pose must be finite");
        }
        let s = &self.script;
        if !(s.approach_time > 0.0 && s.settle_time >= 0.0 && s.arc_time > 0.0 && s.hold_time >= 0.0) {
            return bad("script durations must be positive");
        }
        if !(s.arc_end_deg > 0.0 && s.arc_end_deg <= 120.0) {
            return bad("arc_end_deg must be in (0, 120]");
        }
        if !(s.contact_height >= 0.0 && s.contact_height <= i.height) {
            return bad("contact_height must lie on the end face");
        }
        if !(s.reference_force >= 0.0 && s.approach_distance >= 0.0) {
            return bad("reference_force and approach_distance must be non-negative");
        }
        self.controller.params()?;
        Ok(())
    }

    pub fn fixture_corner(&self) -> Vector3<f64> {
        Vector3::from(self.fixture_pose)
    }

    /// Gravity torque about the pivot that lowers the item, N·m.
    pub fn gravity_torque(&self, theta: f64) -> f64 {
        let ItemSpec { width, height, mass } = self.item;
        mass * GRAVITY * (0.5 * width * theta.cos() - 0.5 * height * theta.sin())
    }
}

/// Item placement: pivot and angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemFrame {
    pub pivot: Vector3<f64>,
    pub theta: f64,
    pub width: f64,
    pub height: f64,
}

impl ItemFrame {
    /// Outward end-face normal, pointing from the pivot along the item.
    pub fn u(&self) -> Vector3<f64> {
        Vector3::new(-self.theta.cos(), 0.0, self.theta.sin())
    }

    pub fn tau(&self) -> Vector3<f64> {
        Vector3::new(self.theta.sin(), 0.0, self.theta.cos())
    }

    /// `(r, l)`: distance along the item and height across it.
    pub fn to_item(&self, x: &Vector3<f64>) -> (f64, f64) {
        let d = x - self.pivot;
        (d.dot(&self.u()), d.dot(&self.tau()))
    }

    pub fn from_item(&self, r: f64, l: f64, y: f64) -> Vector3<f64> {
        let mut p = self.pivot + self.u() * r + self.tau() * l;
        p.y = y;
        p
    }

    pub fn pose(&self) -> Pose {
        let rot = Rotation3::from_axis_angle(&Unit::new_unchecked(Vector3::y()), self.theta);
        Pose::new(self.pivot, *rot.matrix()).unwrap_or_else(|_| Pose::from_translation(self.pivot))
    }
}

/// Angle of `x` about `pivot` measured like `θ`: `atan2(z, −x)`.
fn polar_angle(pivot: &Vector3<f64>, x: &Vector3<f64>) -> f64 {
    let d = x - pivot;
    d.z.atan2(-d.x)
}

/// Quasi-static force the environment applies to the finger when the finger
/// tracking `x_target` with stiffness `k` is stopped by the end-face plane:
/// the minimiser of the spring energy on the permitted half-space.
///
/// For penetration depth `δ` along the inward normal the finger comes to rest
/// at `x_target + μ K⁻¹ u` with `μ = δ / (uᵀ K⁻¹ u)`, and the force is `μ u`.
pub fn contact_force_response(frame: &ItemFrame, x_target: &Vector3<f64>, k: &StiffnessProfile) -> Vector3<f64> {
    let u = frame.u();
    let (r, _) = frame.to_item(x_target);
    let depth = frame.width - r;
    if depth <= 0.0 {
        return Vector3::zeros();
    }
    match k.compliance_times(&u) {
        Ok(c) => u * (depth / u.dot(&c)),
        Err(_) => Vector3::zeros(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimStatus {
    Running,
    Success,
    FellOff,
    Stuck,
    ForceViolation,
}

impl SimStatus {
    pub fn is_terminal(&self) -> bool {
        *self != SimStatus::Running
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SimStatus::Running => "running",
            SimStatus::Success => "success",
            SimStatus::FellOff => "fell_off",
            SimStatus::Stuck => "stuck",
            SimStatus::ForceViolation => "force_violation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    None,
    Stick,
    Slip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub theta: f64,
    pub item_pose: Pose,
    /// Accumulated fixture slide along +x, m.
    pub fixture_offset: f64,
    /// Per-trial item offset along x, m.
    pub pivot_noise: f64,
    pub finger_state: AdmittanceState,
    /// Force the environment applies to the finger, N.
    pub contact_force: Vector3<f64>,
    pub contact_mode: ContactMode,
    pub status: SimStatus,
    pub max_theta: f64,
    pub max_force: f64,
    /// Time the peak angle last grew.
    pub progress_time: f64,
    pub contact_lost_since: Option<f64>,
    pub ever_engaged: bool,
}

impl SimState {
    /// Item at rest on the table, finger at `finger_start`. The stall clock
    /// starts at `stall_clock_start`.
    pub fn initial(
        scenario: &FlipScenario,
        pivot_noise: f64,
        finger_start: Vector3<f64>,
        stall_clock_start: f64,
    ) -> Self {
        let mut s = Self {
            theta: 0.0,
            item_pose: Pose::identity(),
            fixture_offset: 0.0,
            pivot_noise,
            finger_state: AdmittanceState::at_rest(finger_start),
            contact_force: Vector3::zeros(),
            contact_mode: ContactMode::None,
            status: SimStatus::Running,
            max_theta: 0.0,
            max_force: 0.0,
            progress_time: stall_clock_start,
            contact_lost_since: None,
            ever_engaged: false,
        };
        s.item_pose = s.frame(scenario).pose();
        s
    }

    pub fn pivot(&self, scenario: &FlipScenario) -> Vector3<f64> {
        scenario.fixture_corner() + Vector3::x() * (self.pivot_noise + self.fixture_offset)
    }

    pub fn frame(&self, scenario: &FlipScenario) -> ItemFrame {
        ItemFrame {
            pivot: self.pivot(scenario),
            theta: self.theta,
            width: scenario.item.width,
            height: scenario.item.height,
        }
    }

    pub fn t(&self) -> f64 {
        self.finger_state.t
    }

    pub fn is_engaged(&self) -> bool {
        self.contact_mode != ContactMode::None
    }
}

/// Advances the world by one controller tick under `command`.
pub fn step_sim(
    state: &SimState,
    scenario: &FlipScenario,
    params: &AdmittanceParams,
    command: &PolicyOutput,
) -> SimState {
    if state.status.is_terminal() {
        return state.clone();
    }
    let mut s = state.clone();
    let dt = params.dt();
    let frame = state.frame(scenario);
    let (width, height) = (frame.width, frame.height);
    let (u, tau) = (frame.u(), frame.tau());
    let x_target = command.virtual_target.position();
    let k = &command.stiffness;

    let finger = &state.finger_state;
    let (r_f, l_f) = frame.to_item(&finger.x);
    let normal = contact_force_response(&frame, &x_target, k);
    let lambda = normal.dot(&u);
    let on_face = r_f <= width + CONTACT_GAP && (0.0..=height).contains(&l_f);
    let tau_g = scenario.gravity_torque(state.theta);

    let (mode, f_item_tangential) = if lambda > 0.0 && on_face {
        let required = (tau_g - l_f * lambda) / width;
        let cap = scenario.finger_friction * lambda;
        if required.abs() <= cap {
            (ContactMode::Stick, required)
        } else {
            (ContactMode::Slip, required.clamp(-cap, cap))
        }
    } else {
        (ContactMode::None, 0.0)
    };
    let f_ext = if mode == ContactMode::None {
        Vector3::zeros()
    } else {
        u * lambda - tau * f_item_tangential
    };
    s.contact_force = f_ext;
    s.contact_mode = mode;
    let magnitude = f_ext.norm();
    s.max_force = s.max_force.max(magnitude);

    let next = match admittance_step(finger, params, k, &x_target, &f_ext) {
        Ok(n) => n,
        Err(_) => {
            s.status = SimStatus::ForceViolation;
            s.finger_state.t += dt;
            return s;
        }
    };

    let mut theta = match mode {
        ContactMode::Stick => polar_angle(&frame.pivot, &next.x) - l_f.atan2(r_f),
        ContactMode::Slip => {
            state.theta + dt * (l_f * lambda + width * f_item_tangential - tau_g) / scenario.pivot_damping
        }
        ContactMode::None => state.theta - dt * tau_g / scenario.pivot_damping,
    };
    theta = theta.clamp(0.0, FRAC_PI_2);

    if magnitude > scenario.fixture_slide_threshold {
        s.fixture_offset += dt * (magnitude - scenario.fixture_slide_threshold) / scenario.fixture_slide_damping;
    }
    s.theta = theta;
    let new_frame = s.frame(scenario);
    s.item_pose = new_frame.pose();

    // Keep the finger out of the item, and on the face while it pushes.
    let mut finger_next = next;
    let (r, l) = new_frame.to_item(&finger_next.x);
    let pressed = mode != ContactMode::None && r < width + CONTACT_GAP;
    if (pressed || r < width) && r > 0.0 && (0.0..=height).contains(&l) {
        finger_next.x = new_frame.from_item(width, l, finger_next.x.y);
        let nu = new_frame.u();
        let vn = finger_next.v.dot(&nu);
        if vn < 0.0 {
            finger_next.v -= nu * vn;
        }
    }
    s.finger_state = finger_next;

    let t = finger_next.t;
    if mode != ContactMode::None {
        s.ever_engaged = true;
        s.contact_lost_since = None;
    } else if s.contact_lost_since.is_none() {
        s.contact_lost_since = Some(t);
    }
    if theta > s.max_theta + PROGRESS_EPS {
        s.max_theta = theta;
        s.progress_time = t;
    }

    if theta > SUCCESS_ANGLE_DEG.to_radians() {
        s.status = SimStatus::Success;
    } else if s.fixture_offset > scenario.fixture_slide_limit
        || (theta > MID_FLIP_ANGLE_DEG.to_radians()
            && s.contact_lost_since
                .is_some_and(|t0| t - t0 > scenario.lost_contact_time))
    {
        s.status = SimStatus::FellOff;
    } else if t - s.progress_time > scenario.stall_time {
        s.status = SimStatus::Stuck;
    }
    s
}
