use acp_core::compliance::{k_low_of_force, StiffnessProfile, StiffnessSchedule};
use acp_core::episode::{Episode, EpisodeMeta, PoseSample, Wrench};
use acp_core::labeling::{force_from_action, label_episode, stiffness_from_action, LabelConfig};
use acp_core::se3::{encode_pose9, Pose};
use acp_core::sim::{
    contact_force_response, run_trial, step_sim, FlipScenario, ItemFrame, PolicyKind, PolicyOutput, SimState,
    TrialOptions,
};
use nalgebra::{Rotation3, SymmetricEigen, Unit, Vector3};
use proptest::prelude::*;

fn rotation() -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.2, -1.0, 0.4)), 0.9)
}

fn reference_position(t: f64) -> Vector3<f64> {
    Vector3::new(0.4 + 0.02 * t, -0.1, 0.3 - 0.01 * t)
}

/// Poses at 500 Hz along a straight line, wrenches at 7 kHz from `force`.
fn synthetic(seconds: f64, force: impl Fn(f64) -> Vector3<f64>) -> Episode {
    let r = rotation();
    let poses = (0..=(seconds * 500.0).round() as usize)
        .map(|i| {
            let t = i as f64 / 500.0;
            PoseSample {
                t,
                pose: encode_pose9(&Pose::from_rotation(reference_position(t), &r)),
            }
        })
        .collect();
    let wrenches = (0..=(seconds * 7000.0).round() as usize)
        .map(|i| {
            let t = i as f64 / 7000.0;
            Wrench::new(t, force(t), Vector3::new(0.01, 0.0, -0.02))
        })
        .collect();
    Episode::new(EpisodeMeta::default(), poses, wrenches).unwrap()
}

fn expected_target(cfg: &LabelConfig, t: f64, f: Vector3<f64>) -> (Vector3<f64>, f64) {
    if f.norm() < cfg.schedule.f_min {
        return (reference_position(t), cfg.k_high);
    }
    let k = k_low_of_force(&cfg.schedule, f.norm());
    (reference_position(t) + f / k, k)
}

#[test]
fn constant_force_labels_match_hand_computation() {
    let f = Vector3::new(1.0, -2.0, -5.0);
    let cfg = LabelConfig::default();
    let labels = label_episode(&synthetic(3.0, |_| f), &cfg).unwrap();
    assert_eq!(labels.len(), 31);
    let rot = encode_pose9(&Pose::from_rotation(Vector3::zeros(), &rotation()));
    for l in &labels {
        let (target, k) = expected_target(&cfg, l.t, f);
        assert!((l.virtual_target.position() - target).norm() < 1e-9);
        assert!((l.reference.position() - reference_position(l.t)).norm() < 1e-9);
        assert!((l.k_low - k).abs() < 1e-9);
        // Orientation passes through unchanged.
        assert!(l.reference.0[3..]
            .iter()
            .zip(&rot.0[3..])
            .all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(l.reference.0[3..], l.virtual_target.0[3..]);
    }
}

#[test]
fn ramp_force_labels_match_in_interior() {
    // A centered average leaves a linear force unchanged away from the ends.
    let force = |t: f64| Vector3::new(0.5 + 2.0 * t, 0.0, -1.0 - 3.0 * t);
    let cfg = LabelConfig::default();
    let labels = label_episode(&synthetic(4.0, force), &cfg).unwrap();
    let interior: Vec<_> = labels.iter().filter(|l| l.t >= 0.5 && l.t <= 3.5).collect();
    assert_eq!(interior.len(), 31);
    for l in interior {
        let (target, k) = expected_target(&cfg, l.t, force(l.t));
        assert!(
            (l.virtual_target.position() - target).norm() < 1e-9,
            "t={} {:?}",
            l.t,
            l.virtual_target
        );
        assert!((l.k_low - k).abs() < 1e-9);
    }
}

#[test]
fn relabeling_is_bit_identical() {
    let ep = synthetic(2.0, |t| Vector3::new((5.0 * t).sin() * 6.0, 2.0, -4.0 * t));
    let cfg = LabelConfig::default();
    let a = label_episode(&ep, &cfg).unwrap();
    let b = label_episode(&Episode::from_binary(&ep.to_binary()).unwrap(), &cfg).unwrap();
    let bits = |ls: &[acp_core::labeling::ActionLabel]| -> Vec<u64> {
        ls.iter().flat_map(|l| l.to_array().map(f64::to_bits)).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

proptest! {
    #[test]
    fn action_roundtrip_recovers_force(
        fx in -20.0..20.0f64, fy in -20.0..20.0f64, fz in -20.0..20.0f64,
        k_min in 10.0..500.0f64,
    ) {
        let f = Vector3::new(fx, fy, fz);
        let cfg = LabelConfig {
            schedule: StiffnessSchedule::new(2000.0, k_min, 8.0, 1.0).unwrap(),
            ..Default::default()
        };
        let labels = label_episode(&synthetic(1.0, |_| f), &cfg).unwrap();
        for l in &labels {
            let k = stiffness_from_action(l, cfg.k_high);
            let recovered = force_from_action(l);
            if f.norm() < cfg.schedule.f_min {
                prop_assert!(k.is_uniform());
                prop_assert!(recovered.norm() < 1e-9);
            } else {
                prop_assert!((recovered - f).norm() <= 1e-6 * f.norm());
                prop_assert!((k.low_dir() - f.normalize()).norm() < 1e-6);
                prop_assert!((k.matrix() * f - f * l.k_low).norm() <= 1e-6 * f.norm() * cfg.k_high);
            }
        }
    }
}

/// Projected gradient descent on the spring energy over the half-space
/// `(x − P)·u ≥ width`.
fn minimise_on_half_space(frame: &ItemFrame, target: &Vector3<f64>, k: &StiffnessProfile) -> Vector3<f64> {
    let u = frame.u();
    let step = 1.0 / SymmetricEigen::new(*k.matrix()).eigenvalues.max();
    let project = |x: Vector3<f64>| {
        let gap = (x - frame.pivot).dot(&u) - frame.width;
        if gap < 0.0 {
            x - u * gap
        } else {
            x
        }
    };
    let mut x = project(*target);
    for _ in 0..200_000 {
        let next = project(x - k.matrix() * (x - target) * step);
        if (next - x).norm() < 1e-16 {
            break;
        }
        x = next;
    }
    x
}

fn frame(theta: f64) -> ItemFrame {
    ItemFrame {
        pivot: Vector3::new(0.5, 0.0, 0.0),
        theta,
        width: 0.08,
        height: 0.07,
    }
}

proptest! {
    #[test]
    fn contact_force_matches_numerical_minimiser(
        theta in 0.0..1.5f64,
        depth in 0.0..0.03f64,
        lateral in -0.02..0.09f64,
        dx in -1.0..1.0f64, dz in -1.0..1.0f64,
        k_low in 40.0..800.0f64,
    ) {
        let f = frame(theta);
        let k = StiffnessProfile::from_direction(&Vector3::new(dx, 0.3, dz), k_low, 2000.0).unwrap();
        let target = f.from_item(f.width - depth, lateral, 0.0);
        let force = contact_force_response(&f, &target, &k);
        let rest = minimise_on_half_space(&f, &target, &k);
        let oracle = k.matrix() * (rest - target);
        prop_assert!((force - oracle).norm() < 1e-6, "{force:?} vs {oracle:?}");
        // Contacts push: the normal component never pulls.
        prop_assert!(force.dot(&f.u()) >= 0.0);
    }

    #[test]
    fn contact_force_is_unilateral(
        theta in 0.0..1.6f64, r in -0.05..0.2f64, l in -0.05..0.12f64,
        dx in -1.0..1.0f64, dy in -1.0..1.0f64, dz in -1.0..1.0f64,
    ) {
        let f = frame(theta);
        prop_assume!(Vector3::new(dx, dy, dz).norm() > 1e-3);
        let k = StiffnessProfile::from_direction(&Vector3::new(dx, dy, dz), 50.0, 2000.0).unwrap();
        let force = contact_force_response(&f, &f.from_item(r, l, 0.0), &k);
        prop_assert!(force.dot(&f.u()) >= 0.0);
        prop_assert!((force - f.u() * force.dot(&f.u())).norm() < 1e-9);
        if r >= f.width {
            prop_assert_eq!(force, Vector3::zeros());
        }
    }
}

#[test]
fn converged_finger_balances_contact_force() {
    let sc = FlipScenario::nominal().without_noise();
    let params = sc.controller.params().unwrap();
    let start_frame = SimState::initial(&sc, 0.0, Vector3::zeros(), 0.0).frame(&sc);
    let k = StiffnessProfile::uniform(500.0);
    let target = start_frame.from_item(sc.item.width - 0.01, 0.01, 0.0);
    let cmd = PolicyOutput {
        reference: Pose::from_translation(start_frame.from_item(sc.item.width, 0.01, 0.0)),
        virtual_target: Pose::from_translation(target),
        stiffness: k,
    };
    let mut state = SimState::initial(&sc, 0.0, start_frame.from_item(sc.item.width + 0.005, 0.01, 0.0), 0.0);
    // Keep the stall clock from ending the run.
    let mut sc_long = sc.clone();
    sc_long.stall_time = 1e9;
    for _ in 0..20_000 {
        state = step_sim(&state, &sc_long, &params, &cmd);
    }
    assert!(state.is_engaged(), "{state:?}");
    let spring = k.matrix() * (target - state.finger_state.x);
    assert!(
        (spring + state.contact_force).norm() < 1e-6,
        "{spring:?} {:?}",
        state.contact_force
    );
    let normal = contact_force_response(&state.frame(&sc), &target, &k);
    let u = state.frame(&sc).u();
    assert!((spring.dot(&u) + normal.dot(&u)).abs() < 1e-6);
}

#[test]
fn trials_are_bit_identical() {
    let sc = FlipScenario::nominal();
    for kind in PolicyKind::standard_set() {
        let a = run_trial(
            &sc,
            &kind,
            42,
            0,
            TrialOptions {
                record: true,
                ..Default::default()
            },
        )
        .unwrap();
        let b = run_trial(
            &sc,
            &kind,
            42,
            0,
            TrialOptions {
                record: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(
            a.to_episode(&sc).unwrap().to_binary(),
            b.to_episode(&sc).unwrap().to_binary()
        );
        assert_eq!(a.summary.max_force.to_bits(), b.summary.max_force.to_bits());
        assert_eq!(a.summary.status, b.summary.status);
    }
}
