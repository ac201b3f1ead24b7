use bevsel_core::geometry::{OrientedRect, Pose2D};
use bevsel_core::world::{
    driving_volatility, objects_in_fov, volatility_of, Layout, MotionParams, ObjectState, Scenario, Trajectory,
    WorldState,
};
use proptest::prelude::*;

fn obj(id: u32, x: f64, y: f64, v: f64) -> ObjectState {
    ObjectState {
        id,
        pose: Pose2D::new(x, y, 0.0),
        longitudinal_velocity: v,
        length: 4.0,
        width: 2.0,
    }
}

proptest! {
    #[test]
    fn volatility_ignores_common_shift(
        ego in 0.0..30.0f64,
        speeds in prop::collection::vec(0.0..30.0f64, 0..20),
        shift in -20.0..20.0f64,
    ) {
        let base = volatility_of(ego, &speeds);
        let shifted: Vec<f64> = speeds.iter().map(|v| v + shift).collect();
        let moved = volatility_of(ego + shift, &shifted);
        prop_assert!((base - moved).abs() <= 1e-9 * base.max(1.0), "{base} vs {moved}");
    }

    #[test]
    fn volatility_grows_with_any_deviation(
        ego in 0.0..30.0f64,
        speeds in prop::collection::vec(0.0..30.0f64, 1..20),
        pick in any::<prop::sample::Index>(),
        extra in 0.0..10.0f64,
    ) {
        let i = pick.index(speeds.len());
        let mut more = speeds.clone();
        let dev = more[i] - ego;
        more[i] = ego + dev.signum() * (dev.abs() + extra);
        if dev == 0.0 {
            more[i] = ego + extra;
        }
        prop_assert!(volatility_of(ego, &more) >= volatility_of(ego, &speeds));
    }

    #[test]
    fn trajectories_replay(seed in 0..1000u64, layout in prop::sample::select(vec![Layout::Grid, Layout::Ring])) {
        let sc = Scenario { layout, collaborators: 5, objects: 20, ..Default::default() };
        let run = || {
            let (w, m) = sc.instantiate(seed).unwrap();
            let mut tr = Trajectory::new(w, m);
            (0..40).map(|t| tr.at(t).clone()).collect::<Vec<WorldState>>()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn volatility_uses_objects_in_view_only() {
    let state = WorldState {
        slot: 0,
        ego: obj(0, 0.0, 0.0, 10.0),
        collaborators: vec![obj(1, 5.0, 0.0, 13.0)],
        objects: vec![obj(2, -5.0, 5.0, 6.0), obj(3, 200.0, 0.0, 50.0)],
    };
    let fov = OrientedRect::square(state.ego.pose, 60.0).unwrap();
    let ids: Vec<u32> = objects_in_fov(&state, &fov).iter().map(|o| o.id).collect();
    assert_eq!(ids, vec![1, 2]);
    let want = ((9.0 + 16.0) / 2.0f64).sqrt();
    assert!((driving_volatility(&state, &fov) - want).abs() < 1e-12);
    let empty = OrientedRect::square(Pose2D::new(1000.0, 1000.0, 0.0), 10.0).unwrap();
    assert_eq!(driving_volatility(&state, &empty), 0.0);
}

#[test]
fn frozen_world_stays_put() {
    let sc = Scenario {
        motion: MotionParams::frozen(),
        ..Default::default()
    };
    let (w, m) = sc.instantiate(3).unwrap();
    let mut tr = Trajectory::new(w.clone(), m);
    let later = tr.at(25).clone();
    assert_eq!(later.ego.pose, w.ego.pose);
    for (a, b) in later.others().zip(w.others()) {
        assert!((a.pose.x - b.pose.x).abs() < 1e-9 && (a.pose.y - b.pose.y).abs() < 1e-9);
        assert_eq!(a.longitudinal_velocity, 0.0);
    }
}

#[test]
fn different_seeds_differ() {
    let sc = Scenario::default();
    let (a, _) = sc.instantiate(1).unwrap();
    let (b, _) = sc.instantiate(2).unwrap();
    assert_ne!(a, b);
}

#[test]
fn scenario_rejects_bad_input() {
    assert!(Scenario {
        collaborators: 0,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(Scenario {
        layout: Layout::File,
        ..Default::default()
    }
    .validate()
    .is_err());
    let m = MotionParams {
        noise_scale: -1.0,
        ..Default::default()
    };
    assert!(Scenario {
        motion: m,
        ..Default::default()
    }
    .validate()
    .is_err());
}
