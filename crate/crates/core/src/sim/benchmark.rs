//! Seeded trials and the policy-by-scenario success table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{step_sim, FlipScenario, NominalTrajectory, PolicyKind, ScriptedPolicy, SimState, SimStatus};
use crate::episode::{Episode, EpisodeMeta, PoseSample, Wrench};
use crate::error::{Error, Result};
use crate::se3::{encode_pose9, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrialOptions {
    pub record: bool,
    /// Replaces the sampled pivot displacement, m. The noise draw still
    /// happens so the jitter sequence is unchanged.
    pub pivot_noise: Option<f64>,
}

/// State of one tick, taken before the finger moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub reference: Vector3<f64>,
    pub target: Vector3<f64>,
    pub finger: Vector3<f64>,
    /// Force the finger applies to the item, N.
    pub applied_force: Vector3<f64>,
    pub low_dir: Vector3<f64>,
    pub k_low: f64,
    pub theta: f64,
    pub engaged: bool,
    /// Inward end-face normal.
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub scenario: String,
    pub policy: String,
    pub trial: usize,
    pub seed: u64,
    pub status: SimStatus,
    pub pivot_noise: f64,
    pub max_force: f64,
    pub max_theta_deg: f64,
    pub fixture_slide: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub summary: TrialSummary,
    pub final_state: SimState,
    pub records: Vec<TickRecord>,
}

impl TrialOutcome {
    /// Recorded finger motion and applied force as an episode, one pose and
    /// one wrench per tick.
    pub fn to_episode(&self, scenario: &FlipScenario) -> Result<Episode> {
        if self.records.is_empty() {
            return Err(Error::InsufficientData("trial was run without recording".into()));
        }
        let rate = 1.0 / scenario.controller.dt;
        let meta = EpisodeMeta {
            task: format!("flip/{}", scenario.name),
            arm: "finger".into(),
            pose_rate: rate,
            wrench_rate: rate,
        };
        let poses = self
            .records
            .iter()
            .map(|r| PoseSample {
                t: r.t,
                pose: encode_pose9(&Pose::from_translation(r.finger)),
            })
            .collect();
        let wrenches = self
            .records
            .iter()
            .map(|r| Wrench::from_force(r.t, r.applied_force))
            .collect();
        Episode::new(meta, poses, wrenches)
    }
}

/// Per-trial seed; identical across policies so trials are paired.
pub fn trial_seed(scenario_seed: u64, trial: usize) -> u64 {
    // SplitMix64 finaliser over the pair.
    let mut z = scenario_seed ^ (trial as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma is positive and finite"))
}

pub fn run_trial(
    scenario: &FlipScenario,
    kind: &PolicyKind,
    seed: u64,
    trial: usize,
    options: TrialOptions,
) -> Result<TrialOutcome> {
    let trajectory = NominalTrajectory::for_scenario(scenario)?;
    let params = scenario.controller.params()?;
    params.check_stability(kind.max_stiffness())?;
    let policy = ScriptedPolicy::new(*kind, trajectory)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled = normal(scenario.position_noise_sigma).map_or(0.0, |d| d.sample(&mut rng));
    let pivot_noise = options.pivot_noise.unwrap_or(sampled);
    let jitter = normal(scenario.jitter_sigma);

    let mut state = SimState::initial(
        scenario,
        pivot_noise,
        policy.trajectory.start(),
        policy.trajectory.arc_start,
    );
    let mut records = Vec::new();
    for i in 0..policy.trajectory.len() {
        let applied = -state.contact_force;
        let mut cmd = policy.command(i, &applied);
        if let Some(j) = &jitter {
            let d = Vector3::new(j.sample(&mut rng), 0.0, j.sample(&mut rng));
            cmd.virtual_target = cmd.virtual_target.with_position(cmd.virtual_target.position() + d);
        }
        let before = state.finger_state;
        let t = before.t;
        state = step_sim(&state, scenario, &params, &cmd);
        if options.record {
            let frame = state.frame(scenario);
            records.push(TickRecord {
                t,
                reference: cmd.reference.position(),
                target: cmd.virtual_target.position(),
                finger: before.x,
                applied_force: -state.contact_force,
                low_dir: cmd.stiffness.low_dir(),
                k_low: cmd.stiffness.k_low(),
                theta: state.theta,
                engaged: state.is_engaged(),
                normal: -frame.u(),
            });
        }
        if state.status.is_terminal() {
            break;
        }
    }
    if state.status == SimStatus::Running {
        state.status = SimStatus::Stuck;
    }
    let summary = TrialSummary {
        scenario: scenario.name.clone(),
        policy: kind.name().into(),
        trial,
        seed,
        status: state.status,
        pivot_noise,
        max_force: state.max_force,
        max_theta_deg: state.max_theta.to_degrees(),
        fixture_slide: state.fixture_offset,
        duration: state.t(),
    };
    Ok(TrialOutcome {
        summary,
        final_state: state,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub policy: String,
    pub scenario: String,
    pub trials: usize,
    pub successes: usize,
    /// Percent.
    pub success_rate: f64,
    pub status_counts: BTreeMap<String, usize>,
    pub mean_max_force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialSummary>,
}

impl BenchmarkReport {
    pub fn cell(&self, policy: &str, scenario: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.policy == policy && c.scenario == scenario)
    }

    /// Trials of one cell, in trial order.
    pub fn trials_of<'a>(&'a self, policy: &'a str, scenario: &'a str) -> impl Iterator<Item = &'a TrialSummary> + 'a {
        self.trials
            .iter()
            .filter(move |t| t.policy == policy && t.scenario == scenario)
    }

    /// Success rates, one row per policy and one column per scenario.
    pub fn table(&self) -> String {
        let mut scenarios: Vec<&str> = Vec::new();
        let mut policies: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !scenarios.contains(&c.scenario.as_str()) {
                scenarios.push(&c.scenario);
            }
            if !policies.contains(&c.policy.as_str()) {
                policies.push(&c.policy);
            }
        }
        let mut s = String::new();
        let _ = write!(s, "{:<12}", "policy");
        for sc in &scenarios {
            let _ = write!(s, " {sc:>18}");
        }
        s.push('\n');
        for p in &policies {
            let _ = write!(s, "{p:<12}");
            for sc in &scenarios {
                match self.cell(p, sc) {
                    Some(c) => {
                        let _ = write!(s, " {:>17.1}%", c.success_rate);
                    }
                    None => {
                        let _ = write!(s, " {:>18}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Runs `trials` seeded trials for every (policy, scenario) pair. Trial `i`
/// of a scenario sees the same noise under every policy.
pub fn run_benchmark(scenarios: &[FlipScenario], policies: &[PolicyKind], trials: usize) -> Result<BenchmarkReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let mut cells = Vec::new();
    let mut all = Vec::new();
    for policy in policies {
        for scenario in scenarios {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            let mut successes = 0;
            let mut force_sum = 0.0;
            for trial in 0..trials {
                let seed = trial_seed(scenario.seed, trial);
                let out = run_trial(scenario, policy, seed, trial, TrialOptions::default())?;
                let s = out.summary;
                *counts.entry(s.status.as_str().into()).or_default() += 1;
                if s.status == SimStatus::Success {
                    successes += 1;
                }
                force_sum += s.max_force;
                all.push(s);
            }
            cells.push(CellSummary {
                policy: policy.name().into(),
                scenario: scenario.name.clone(),
                trials,
                successes,
                success_rate: 100.0 * successes as f64 / trials as f64,
                status_counts: counts,
                mean_max_force: force_sum / trials as f64,
            });
        }
    }
    Ok(BenchmarkReport { cells, trials: all })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_per_trial_and_scenario() {
        assert_ne!(trial_seed(0, 0), trial_seed(0, 1));
        assert_ne!(trial_seed(0, 0), trial_seed(1, 0));
        assert_eq!(trial_seed(7, 3), trial_seed(7, 3));
    }

    #[test]
    fn adaptive_nominal_noise_free_succeeds() {
        let sc = FlipScenario::nominal().without_noise();
        let out = run_trial(&sc, &PolicyKind::adaptive(), 1, 0, TrialOptions::default()).unwrap();
        assert_eq!(out.summary.status, SimStatus::Success, "{:?}", out.summary);
    }

    #[test]
    fn arc_away_from_item_gets_stuck() {
        let sc = FlipScenario::nominal().without_noise();
        // Item 10 cm further away than the script assumes.
        let options = TrialOptions {
            pivot_noise: Some(0.10),
            ..Default::default()
        };
        for kind in PolicyKind::standard_set() {
            let out = run_trial(&sc, &kind, 3, 0, options).unwrap();
            assert_eq!(out.summary.status, SimStatus::Stuck, "{}", kind.name());
            assert_eq!(out.summary.max_force, 0.0);
        }
    }

    #[test]
    fn stiff_pressed_into_item_overloads() {
        let sc = FlipScenario::nominal().without_noise();
        // Item 1 cm closer than expected.
        let options = TrialOptions {
            pivot_noise: Some(-0.01),
            ..Default::default()
        };
        let out = run_trial(&sc, &PolicyKind::stiff(), 3, 0, options).unwrap();
        let s = out.summary;
        assert!(s.status == SimStatus::ForceViolation || s.fixture_slide > 0.0, "{s:?}");
        assert!(s.max_force > sc.fixture_slide_threshold);
    }

    #[test]
    fn single_trial_rates_are_extreme() {
        let sc = FlipScenario::nominal().without_noise();
        let r = run_benchmark(&[sc], &PolicyKind::standard_set(), 1).unwrap();
        for c in &r.cells {
            assert!(c.success_rate == 0.0 || c.success_rate == 100.0);
        }
        assert_eq!(r.table().lines().count(), 4);
        assert!(run_benchmark(&[], &[], 0).is_err());
    }

    #[test]
    fn recorded_episode_matches_ticks() {
        let sc = FlipScenario::nominal();
        let out = run_trial(
            &sc,
            &PolicyKind::adaptive(),
            11,
            0,
            TrialOptions {
                record: true,
                ..Default::default()
            },
        )
        .unwrap();
        let ep = out.to_episode(&sc).unwrap();
        assert_eq!(ep.poses().len(), out.records.len());
        assert_eq!(ep.wrenches().len(), out.records.len());
    }
}
