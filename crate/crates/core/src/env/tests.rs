use super::*;
use approx::assert_abs_diff_eq;
use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

fn flat_config() -> EpisodeConfig {
    EpisodeConfig::new(
        TerrainSource::Fixed {
            recipe: TerrainRecipe::Flat {
                size: TERRAIN_SIZE,
                resolution: 129,
            },
        },
        PI / 3.0,
        50,
    )
}

fn flat_env() -> Env {
    Env::new(flat_config(), EnvSettings::default(), 7, 0).unwrap()
}

fn flat_spec(spawn: Spawn, target: TargetPose, max_steps: usize) -> EpisodeSpec {
    EpisodeSpec {
        terrain: TerrainDescription {
            base: TerrainRecipe::Flat {
                size: TERRAIN_SIZE,
                resolution: 129,
            },
            obstacles: vec![],
        },
        spawn,
        target,
        max_steps,
    }
}

fn drive(torque: f64) -> Action {
    let mut a = [0.0; 14];
    a[8..].fill(torque);
    Action(a)
}

#[test]
fn flat_spawn_settles_level_with_finite_observation() {
    let mut env = flat_env();
    let obs = env.reset().unwrap();
    assert_eq!(obs.len(), OBS_DIM);
    assert!(obs.iter().all(|v| v.is_finite()));
    let s = env.vehicle_state().unwrap();
    assert!(s.roll.abs() < 1f64.to_radians() && s.pitch.abs() < 1f64.to_radians());
    // Flat ground sits ~0.3 m below the reference point after the drop.
    assert!(obs[..MAP_LEN].iter().all(|&v| (v - obs[0]).abs() < 1e-9));
    let loads: f64 = obs[obs_index::LOADS..].iter().sum();
    assert_abs_diff_eq!(loads, 1.0, epsilon = 0.02);
}

#[test]
fn target_seen_dead_ahead() {
    let mut env = flat_env();
    let spawn = Spawn {
        x: 1.0,
        y: -2.0,
        heading: 0.7,
    };
    let target = TargetPose {
        x: 1.0 + 20.0 * 0.7f64.cos(),
        y: -2.0 + 20.0 * 0.7f64.sin(),
        heading: 0.7,
    };
    let obs = env.reset_to(flat_spec(spawn, target, 10)).unwrap();
    let t = &obs[obs_index::TARGET..obs_index::TARGET + 3];
    assert_abs_diff_eq!(t[0], 20.0, epsilon = 0.05);
    assert_abs_diff_eq!(t[1], 0.0, epsilon = 0.05);
    assert_abs_diff_eq!(t[2], 0.0, epsilon = 0.01);
    let p = env.vehicle_state().unwrap().position;
    assert_abs_diff_eq!(p.x, spawn.x, epsilon = 0.02);
    assert_abs_diff_eq!(p.y, spawn.y, epsilon = 0.02);
}

#[test]
fn episodes_are_reproducible_from_seed() {
    let run = || {
        let mut env = Env::new(lesson_config(2, &[]).unwrap(), EnvSettings::default(), 11, 3).unwrap();
        let mut obs = env.reset().unwrap();
        let mut total = 0.0;
        for i in 0..5 {
            let out = env.step(&drive(0.3 * (i as f64 - 2.0))).unwrap();
            total += out.reward.total;
            obs = out.observation;
            if out.done {
                break;
            }
        }
        (env.spec().unwrap().clone(), obs, total)
    };
    let a = run();
    let b = run();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2.to_bits(), b.2.to_bits());
    assert!(!a.0.terrain.obstacles.is_empty());
}

#[test]
fn independent_streams_differ() {
    let spawn = |stream| {
        let mut env = Env::new(flat_config(), EnvSettings::default(), 5, stream).unwrap();
        env.reset().unwrap();
        env.spec().unwrap().spawn
    };
    assert_ne!(spawn(0), spawn(1));
}

#[test]
fn step_protocol_is_enforced() {
    let mut env = flat_env();
    assert!(matches!(env.step(&Action::zero()), Err(Error::Protocol(_))));
    let spawn = Spawn {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
    };
    let target = TargetPose {
        x: 20.0,
        y: 0.0,
        heading: 0.0,
    };
    env.reset_to(flat_spec(spawn, target, 3)).unwrap();
    let mut last = None;
    for _ in 0..3 {
        last = env.step(&Action::zero()).unwrap().termination;
    }
    assert_eq!(last, Some(Termination::Timeout));
    assert!(matches!(env.step(&Action::zero()), Err(Error::Protocol(_))));
}

#[test]
fn standing_on_target_ends_with_bonus() {
    let mut env = flat_env();
    let spawn = Spawn {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
    };
    let target = TargetPose {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
    };
    env.reset_to(flat_spec(spawn, target, 10)).unwrap();
    let out = env.step(&Action::zero()).unwrap();
    assert_eq!(out.termination, Some(Termination::Target));
    assert_abs_diff_eq!(out.reward.r_tar, env.k_tar(), epsilon = 1e-9);
}

#[test]
fn driving_past_the_target_is_an_overshoot() {
    let mut env = flat_env();
    let spawn = Spawn {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
    };
    // Wrong target heading so it cannot be reached by driving straight.
    let target = TargetPose {
        x: 1.0,
        y: 0.0,
        heading: FRAC_PI_2,
    };
    env.reset_to(flat_spec(spawn, target, 200)).unwrap();
    let mut end = None;
    for _ in 0..200 {
        let out = env.step(&drive(1.0)).unwrap();
        if out.done {
            end = out.termination;
            break;
        }
    }
    assert_eq!(end, Some(Termination::Overshoot));
    assert!(env.vehicle_state().unwrap().position.x > 3.0 - 0.2);
}

#[test]
fn tilting_past_the_roll_limit_is_a_rollover() {
    let mut config = flat_config();
    config.terrain = TerrainSource::Fixed {
        recipe: TerrainRecipe::Slope {
            angle_deg: 18.0,
            size: TERRAIN_SIZE,
            resolution: 129,
        },
    };
    let mut env = Env::new(config, EnvSettings::default(), 1, 0).unwrap();
    // Heading along the contour lines puts the whole slope into roll.
    let spec = EpisodeSpec {
        terrain: TerrainDescription {
            base: TerrainRecipe::Slope {
                angle_deg: 18.0,
                size: TERRAIN_SIZE,
                resolution: 129,
            },
            obstacles: vec![],
        },
        spawn: Spawn {
            x: 0.0,
            y: 0.0,
            heading: FRAC_PI_2,
        },
        target: TargetPose {
            x: 0.0,
            y: 20.0,
            heading: FRAC_PI_2,
        },
        max_steps: 10,
    };
    env.reset_to(spec).unwrap();
    let roll = env.vehicle_state().unwrap().roll.abs();
    assert!(roll > 12f64.to_radians(), "roll {}", roll.to_degrees());
    env.config.roll_limit_deg = 10.0;
    let out = env.step(&Action::zero()).unwrap();
    assert_eq!(out.termination, Some(Termination::Rollover));
}

#[test]
fn spawn_inside_a_boulder_is_rejected() {
    let mut env = flat_env();
    let mut spec = flat_spec(
        Spawn {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        },
        TargetPose {
            x: 20.0,
            y: 0.0,
            heading: 0.0,
        },
        10,
    );
    // A tall ridge under the middle segment hangs the chassis on it.
    spec.terrain.obstacles.push(SemiEllipsoid {
        center: (-1.95, 0.0),
        semi_axes: (0.8, 0.6),
        yaw: 0.0,
        height: 1.6,
        base: 0.0,
    });
    assert!(matches!(env.reset_to(spec), Err(Error::Spawn { attempts: 1 })));
}

#[test]
fn trace_round_trips_and_replays_exactly() {
    let mut env = Env::new(lesson_config(1, &[]).unwrap(), EnvSettings::default(), 2, 0).unwrap();
    env.set_recording(true);
    env.reset().unwrap();
    for i in 0..4 {
        let out = env.step(&drive(0.5 + 0.1 * i as f64)).unwrap();
        env.annotate_value(i as f64);
        if out.done {
            break;
        }
    }
    let trace = env.take_trace().unwrap();
    let text = trace.to_csv_string().unwrap();
    let back = EpisodeTrace::parse(&text, &trace.sidecar_json().unwrap(), Path::new("mem.csv")).unwrap();
    assert_eq!(back, trace);
    let records = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(false).from_reader(text.as_bytes());
    assert_eq!(records.into_records().count(), trace.rows.len() + 1);

    let mut replay = Env::new(lesson_config(1, &[]).unwrap(), EnvSettings::default(), 99, 0).unwrap();
    replay.reset_to(back.spec.clone()).unwrap();
    for (row, action) in back.rows.iter().zip(back.actions()) {
        let out = replay.step(&action).unwrap();
        let p = replay.vehicle_state().unwrap().position;
        assert_eq!([p.x, p.y, p.z], row.position);
        assert_eq!(out.reward.total, row.reward.total);
    }
}

#[test]
fn termination_names_round_trip() {
    for t in Termination::ALL {
        assert_eq!(t.as_str().parse::<Termination>().unwrap(), t);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, format!("\"{}\"", t.as_str()));
    }
    assert!("flipped".parse::<Termination>().is_err());
}

#[test]
fn lesson_configs_follow_the_curriculum() {
    let l1 = lesson_config(1, &[]).unwrap();
    let l2 = lesson_config(2, &[]).unwrap();
    let l3 = lesson_config(3, &[]).unwrap();
    let l4 = lesson_config(4, &[PathBuf::from("a.asc")]).unwrap();
    assert_abs_diff_eq!(l1.phi_max, PI / 3.0);
    assert_abs_diff_eq!(l2.phi_max, PI / 9.0);
    assert!(l1.obstacles.is_empty());
    assert_eq!(l2.obstacles.iter().map(|o| o.count).sum::<usize>(), 8);
    assert_eq!(l3.obstacles.len(), 2);
    assert!(matches!(l4.terrain, TerrainSource::DemPool { .. }));
    assert!(lesson_config(5, &[]).is_err());
    for c in [l1, l2, l3, l4] {
        c.validate().unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<EpisodeConfig>(&text).unwrap(), c);
    }
}

#[test]
fn retarget_starts_a_new_leg_from_the_current_pose() {
    let mut env = flat_env();
    env.reset_to(flat_spec(
        Spawn {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        },
        TargetPose {
            x: 20.0,
            y: 0.0,
            heading: 0.0,
        },
        2,
    ))
    .unwrap();
    env.step(&Action::zero()).unwrap();
    assert!(env.step(&Action::zero()).unwrap().done);
    let obs = env
        .retarget(
            TargetPose {
                x: 0.0,
                y: 10.0,
                heading: FRAC_PI_2,
            },
            5,
        )
        .unwrap();
    assert_abs_diff_eq!(obs[obs_index::TARGET + 1], 10.0, epsilon = 0.1);
    assert_eq!(env.steps().unwrap(), 0);
    assert!(!env.step(&Action::zero()).unwrap().done);
}
