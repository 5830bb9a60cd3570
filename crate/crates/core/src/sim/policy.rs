//! Scripted controllers for the pivoting task.
//!
//! All three follow the same nominal reference arc; they differ only in the
//! stiffness they command and in where they put the virtual target.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{FlipScenario, ItemFrame};
use crate::compliance::{stiffness_from_force, StiffnessProfile, StiffnessSchedule, DEFAULT_K_HIGH};
use crate::error::{Error, Result};
use crate::labeling::virtual_target_from_force;
use crate::se3::Pose;

/// One reference sample: finger position and the force the finger should
/// apply to the item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefStep {
    pub t: f64,
    pub position: Vector3<f64>,
    pub force: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalTrajectory {
    pub steps: Vec<RefStep>,
    /// Time the arc begins.
    pub arc_start: f64,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

impl NominalTrajectory {
    /// Approach the end face, build up the reference force, then sweep the
    /// contact point around the nominal corner, then hold.
    pub fn for_scenario(scenario: &FlipScenario) -> Result<Self> {
        scenario.validate()?;
        let s = &scenario.script;
        let dt = scenario.controller.dt;
        let nominal = |psi: f64| ItemFrame {
            pivot: scenario.fixture_corner(),
            theta: psi,
            width: scenario.item.width,
            height: scenario.item.height,
        };
        let arc_start = s.approach_time + s.settle_time;
        let arc_end = arc_start + s.arc_time;
        let total = arc_end + s.hold_time;
        let n = (total / dt).round() as usize;
        let psi_end = s.arc_end_deg.to_radians();
        let steps = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                let (psi, stand_off, scale) = if t < s.approach_time {
                    let a = smoothstep(t / s.approach_time);
                    (0.0, (1.0 - a) * s.approach_distance, a)
                } else if t < arc_start {
                    (0.0, 0.0, 1.0)
                } else {
                    (psi_end * smoothstep((t - arc_start) / s.arc_time), 0.0, 1.0)
                };
                let f = nominal(psi);
                RefStep {
                    t,
                    position: f.from_item(f.width + stand_off, s.contact_height, 0.0),
                    force: -f.u() * (s.reference_force * scale),
                }
            })
            .collect();
        Ok(Self { steps, arc_start })
    }

    pub fn start(&self) -> Vector3<f64> {
        self.steps[0].position
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Position control: `k_high` everywhere, target just past the reference.
    Stiff {
        k_high: f64,
    },
    UniformCompliant {
        k: f64,
    },
    /// Low stiffness along the sensed force, chosen by `schedule`.
    Adaptive {
        schedule: StiffnessSchedule,
        k_high: f64,
    },
}

impl PolicyKind {
    pub fn stiff() -> Self {
        PolicyKind::Stiff { k_high: DEFAULT_K_HIGH }
    }

    pub fn compliant() -> Self {
        PolicyKind::UniformCompliant { k: 500.0 }
    }

    pub fn adaptive() -> Self {
        PolicyKind::Adaptive {
            schedule: StiffnessSchedule {
                k_max: DEFAULT_K_HIGH,
                k_min: 50.0,
                f_max: 5.0,
                f_min: 1.0,
            },
            k_high: DEFAULT_K_HIGH,
        }
    }

    pub fn standard_set() -> Vec<Self> {
        vec![Self::adaptive(), Self::compliant(), Self::stiff()]
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Stiff { .. } => "stiff",
            PolicyKind::UniformCompliant { .. } => "compliant",
            PolicyKind::Adaptive { .. } => "adaptive",
        }
    }

    /// Largest stiffness the policy can command.
    pub fn max_stiffness(&self) -> f64 {
        match self {
            PolicyKind::Stiff { k_high } => *k_high,
            PolicyKind::UniformCompliant { k } => *k,
            PolicyKind::Adaptive { schedule, k_high } => k_high.max(schedule.k_max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PolicyKind::Stiff { k_high } if !(*k_high > 0.0) => Err(Error::InvalidParameter(format!(
                "stiff k_high must be positive, got {k_high}"
            ))),
            PolicyKind::UniformCompliant { k } if !(*k > 0.0) => Err(Error::InvalidParameter(format!(
                "compliant k must be positive, got {k}"
            ))),
            PolicyKind::Adaptive { schedule, k_high } => {
                schedule.validate()?;
                if !(*k_high > 0.0 && schedule.k_min > 0.0) {
                    return Err(Error::InvalidParameter(
                        "adaptive k_high and k_min must be positive".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub reference: Pose,
    pub virtual_target: Pose,
    pub stiffness: StiffnessProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedPolicy {
    pub kind: PolicyKind,
    pub trajectory: NominalTrajectory,
}

impl ScriptedPolicy {
    pub fn new(kind: PolicyKind, trajectory: NominalTrajectory) -> Result<Self> {
        kind.validate()?;
        if trajectory.is_empty() {
            return Err(Error::InvalidParameter("reference trajectory is empty".into()));
        }
        Ok(Self { kind, trajectory })
    }

    /// Command for tick `index` given the force the finger currently applies
    /// to the environment.
    pub fn command(&self, index: usize, applied_force: &Vector3<f64>) -> PolicyOutput {
        let step = &self.trajectory.steps[index.min(self.trajectory.len() - 1)];
        let reference = Pose::from_translation(step.position);
        let shifted = |k: f64| reference.with_position(step.position + step.force / k);
        let (virtual_target, stiffness) = match self.kind {
            PolicyKind::Stiff { k_high } => (shifted(k_high), StiffnessProfile::uniform(k_high)),
            PolicyKind::UniformCompliant { k } => (shifted(k), StiffnessProfile::uniform(k)),
            PolicyKind::Adaptive { schedule, k_high } => {
                let mag = step.force.norm();
                let dir = if applied_force.norm() >= schedule.f_min {
                    applied_force.normalize()
                } else if mag > 0.0 {
                    step.force / mag
                } else {
                    Vector3::zeros()
                };
                let f = dir * mag;
                let k = stiffness_from_force(&f, &schedule, k_high);
                let target = if k.is_uniform() {
                    reference
                } else {
                    virtual_target_from_force(&reference, &f, k.k_low()).unwrap_or(reference)
                };
                (target, k)
            }
        };
        PolicyOutput {
            reference,
            virtual_target,
            stiffness,
        }
    }
}
