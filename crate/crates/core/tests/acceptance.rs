//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! fails. The training smoke run (criterion 10) takes about 50 minutes on one
//! core and only runs with `--ignored` or `--include-ignored`:
//!
//! ```text
//! cargo test -p forwarder-core --test acceptance -- --ignored
//! ```

use std::f64::consts::{FRAC_PI_6, PI};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use forwarder_core::env::{
    build_observation, lesson_config, obs_index, sample_bearing, Env, EnvSettings, TargetPose, MAP_LEN, OBS_DIM,
};
use forwarder_core::harness::{self, LessonSpec, RunConfig};
use forwarder_core::heightfield::HeightField;
use forwarder_core::nn::layers::{tanh_backward, tanh_inplace};
use forwarder_core::nn::{gaussian, Adam, AdamConfig, ActorCritic, Architecture, Conv2d, Dense};
use forwarder_core::ppo::{self, clipped_objective, compute_gae, ppo_loss, Batch, PpoConfig, RolloutBuffer, Segment};
use forwarder_core::reward::{self, RewardConstants, RewardInputs};
use forwarder_core::sim::{RigidBody, SolverConfig, Sphere, World, TIMESTEP};
use forwarder_core::vehicle::{Action, Placement, VehicleConstants, VehicleModel, VehicleState, ACTION_DIM};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

fn tiny() -> Architecture {
    Architecture {
        conv1_filters: 2,
        conv2_filters: 2,
        encoder_units: 4,
        hidden_units: 8,
    }
}

// 1 ---------------------------------------------------------------------------

fn reward_closed_forms() -> Check {
    let c = RewardConstants::default();
    let e = |x: f64| x.exp();
    let third = 1.0 / 3.0;
    let uneven = [third, third, third, 0.0, 0.0, 0.0];
    let k20 = c.k_tar(20.0);
    let cases: Vec<(&str, f64, f64)> = vec![
        ("progress 10 -> 9.95", reward::progress(&c, 10.0, 9.95), 0.6),
        ("progress standing", reward::progress(&c, 3.0, 3.0), 0.0),
        ("heading psi=0", reward::heading_factor(&c, 0.0, 3.0), 1.0),
        ("heading psi=1 d=5", reward::heading_factor(&c, 1.0, 5.0), e(-0.5)),
        ("roll 0", reward::roll_factor(&c, 0.0), 1.0),
        ("roll 4 deg", reward::roll_factor(&c, 4f64.to_radians()), 1.0),
        (
            "roll 10 deg",
            reward::roll_factor(&c, 10f64.to_radians()),
            e(-0.5 * (10f64.to_radians() / (PI / 16.0)).powi(2)),
        ),
        ("speed 0.5", reward::speed_factor(&c, 0.5), 1.0),
        ("speed 0.8", reward::speed_factor(&c, 0.8), 1.0),
        ("speed 1.3", reward::speed_factor(&c, 1.3), e(-1.0)),
        ("forces even", reward::force_factor(&c, &[1.0 / 6.0; 6]), 1.0),
        ("forces one side", reward::force_factor(&c, &uneven), e(-0.5 * (1.0f64 / 6.0 / 0.1).powi(2))),
        ("slip long 0.3", reward::slip_factors(&c, &[0.3, 0.0, 0.0, 0.0, 0.0, 0.0], &[0.0; 6]).0, e(-0.5)),
        ("slip none", reward::slip_factors(&c, &[0.0; 6], &[0.0; 6]).1, 1.0),
        ("slip angle pi/6", reward::slip_factors(&c, &[0.0; 6], &[FRAC_PI_6, 0.0, 0.0, 0.0, 0.0, 0.0]).1, 0.0),
        ("slip angle past bound", reward::slip_factors(&c, &[0.0; 6], &[0.0, 0.0, 3.0, 0.0, 0.0, 0.0]).1, 0.0),
        ("energy quarter", reward::energy_term(&c, 25.0, 100.0).map_err(|e| e.to_string())?, -0.25),
        ("energy full", reward::energy_term(&c, 100.0, 100.0).map_err(|e| e.to_string())?, -1.0),
        ("sidewall 3", reward::sidewall_term(&c, 3), -0.6),
        ("k_tar d0=20", k20, 0.05 / 0.95 * 240.0),
        ("bonus reached", reward::target_bonus(&c, k20, 0.2, 5f64.to_radians()), k20),
        ("bonus too far", reward::target_bonus(&c, k20, 0.5, 0.0), 0.0),
        ("bonus wrong heading", reward::target_bonus(&c, k20, 0.2, 20f64.to_radians()), 0.0),
        ("max return d0=20", reward::max_return(&c, k20, 20.0), 240.0 + k20),
        ("bonus share", k20 / reward::max_return(&c, k20, 20.0), 0.05),
    ];
    let mut worst: f64 = 0.0;
    for (name, got, want) in &cases {
        let err = (got - want).abs();
        ensure(err <= 1e-12, || format!("{name}: {got} vs {want}"))?;
        worst = worst.max(err);
    }
    Ok(format!("{} values, worst error {worst:.1e}", cases.len()))
}

// 2 ---------------------------------------------------------------------------

fn telescoping_progress() -> Check {
    let c = RewardConstants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d0: f64 = rng.random_range(1.0..30.0);
        let steps = rng.random_range(1..500);
        let mut d = d0;
        let mut sum = 0.0;
        for _ in 0..steps {
            let next = (d + rng.random_range(-0.12..0.08)).max(0.0);
            let x = RewardInputs {
                d_prev: d,
                d_t: next,
                heading_error: rng.random_range(-PI..PI),
                roll: rng.random_range(-0.5..0.5),
                speed: rng.random_range(0.0..1.5),
                loads: [1.0 / 6.0; 6],
                slip_long: [0.0; 6],
                slip_angle: [0.0; 6],
                joint_work: 0.0,
                max_joint_work: 1.0,
                sidewall_contacts: 0,
            };
            sum += reward::compute(&c, c.k_tar(d0), &x).map_err(|e| e.to_string())?.r_prog;
            d = next;
        }
        let err = (sum - (d0 - d) * 12.0).abs();
        ensure(err <= 1e-9, || format!("episode from {d0:.3} m: Σ r_prog off by {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("100 episodes, worst error {worst:.1e}"))
}

// 3 ---------------------------------------------------------------------------

/// Advantage as the explicit sum of discounted TD errors up to the episode end.
fn gae_double_sum(rw: &[f64], v: &[f64], done: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rw.len();
    let next_value = |k: usize| if k + 1 < n { v[k + 1] } else { bootstrap };
    (0..n)
        .map(|t| {
            let mut a = 0.0;
            for k in t..n {
                let live = if done[k] { 0.0 } else { 1.0 };
                let delta = rw[k] + gamma * live * next_value(k) - v[k];
                a += (gamma * lambda).powi((k - t) as i32) * delta;
                if done[k] {
                    break;
                }
            }
            a
        })
        .collect()
}

fn gae_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.random_range(1..=100);
        let rw: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let done: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        let bootstrap = rng.random_range(-2.0..2.0);
        let gamma = rng.random_range(0.0..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let (adv, ret) = compute_gae(&rw, &v, &done, bootstrap, gamma, lambda).map_err(|e| e.to_string())?;
        let oracle = gae_double_sum(&rw, &v, &done, bootstrap, gamma, lambda);
        for t in 0..n {
            let err = (adv[t] - oracle[t]).abs();
            ensure(err <= 1e-10, || format!("case {case}, t = {t}: {} vs {}", adv[t], oracle[t]))?;
            ensure((ret[t] - adv[t] - v[t]).abs() <= 1e-12, || format!("case {case}: return ≠ A + V"))?;
            worst = worst.max(err);
        }
    }
    Ok(format!("1000 sequences, worst error {worst:.1e}"))
}

// 4 ---------------------------------------------------------------------------

fn clipped_objective_table() -> Check {
    let rows = [(1.5, 2.0, 2.4), (0.5, -1.0, -0.8)];
    for (r, a, want) in rows {
        let got = clipped_objective(r, a, 0.2);
        ensure(got == want, || format!("ratio {r}, A = {a}: {got} ≠ {want}"))?;
    }
    for a in [-3.0, -0.1, 0.0, 0.7, 5.0] {
        let got = clipped_objective(1.0, a, 0.2);
        ensure(got == a, || format!("ratio 1, A = {a}: {got}"))?;
    }
    Ok("7 cases exact".into())
}

// 5 ---------------------------------------------------------------------------

/// Finite-difference check of a layer's parameter and input gradients under
/// the loss Σ sin(c·y).
fn check_layer(
    name: &str,
    n_params: usize,
    n_in: usize,
    n_out: usize,
    fwd: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
    bwd: &dyn Fn(&[f64], &mut [f64], &[f64], &[f64]) -> Vec<f64>,
) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(n_params as u64);
    let params: Vec<f64> = (0..n_params).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |p: &[f64], x: &[f64]| fwd(p, x).iter().zip(&c).map(|(y, c)| (y * c).sin()).sum::<f64>();
    let y = fwd(&params, &x);
    let dy: Vec<f64> = y.iter().zip(&c).map(|(y, c)| c * (y * c).cos()).collect();
    let mut grads = vec![0.0; n_params];
    let dx = bwd(&params, &mut grads, &x, &dy);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut compare = |what: &str, i: usize, analytic: f64, fd: f64| {
        if (analytic - fd).abs() > 1e-9 {
            let e = rel_err(analytic, fd);
            worst = worst.max(e);
            ensure(e < 1e-4, || format!("{name} {what} {i}: {analytic} vs {fd}"))?;
        }
        Ok::<_, String>(())
    };
    for i in 0..n_params {
        let (mut up, mut down) = (params.clone(), params.clone());
        up[i] += h;
        down[i] -= h;
        compare("param", i, grads[i], (loss(&up, &x) - loss(&down, &x)) / (2.0 * h))?;
    }
    for i in 0..n_in {
        let (mut up, mut down) = (x.clone(), x.clone());
        up[i] += h;
        down[i] -= h;
        compare("input", i, dx[i], (loss(&params, &up) - loss(&params, &down)) / (2.0 * h))?;
    }
    Ok(worst)
}

fn gradient_checks() -> Check {
    let mut worst: f64 = 0.0;

    let d = Dense::new(5, 3, 2);
    worst = worst.max(check_layer(
        "dense",
        d.end(),
        4 * 5,
        4 * 3,
        &|p, x| d.forward(p, x, 4),
        &|p, g, x, dy| d.backward(p, g, x, dy, 4, true).unwrap(),
    )?);
    let conv = Conv2d::new(2, 3, 6, 5, 1);
    worst = worst.max(check_layer(
        "conv",
        conv.end(),
        3 * conv.input_len(),
        3 * conv.output_len(),
        &|p, x| conv.forward(p, x, 3),
        &|p, g, x, dy| conv.backward(p, g, x, dy, 3, true).unwrap(),
    )?);

    for x in [-1.3f64, -0.2, 0.0, 0.4, 2.2] {
        let mut y = [x];
        tanh_inplace(&mut y);
        let mut dy = [1.0];
        tanh_backward(&y, &mut dy);
        let fd = ((x + 1e-6f64).tanh() - (x - 1e-6f64).tanh()) / 2e-6;
        let e = rel_err(dy[0], fd);
        ensure(e < 1e-4, || format!("tanh at {x}: {} vs {fd}", dy[0]))?;
        worst = worst.max(e);
    }

    // Gaussian head: d log π / d(μ, log σ).
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mu: Vec<f64> = (0..ACTION_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ls: Vec<f64> = (0..ACTION_DIM).map(|_| rng.random_range(-1.0..0.5)).collect();
    let act: Vec<f64> = (0..ACTION_DIM).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut d_mu = vec![0.0; ACTION_DIM];
    let mut d_ls = vec![0.0; ACTION_DIM];
    gaussian::log_prob_grad(&mu, &ls, &act, 1.0, &mut d_mu, &mut d_ls);
    for i in 0..ACTION_DIM {
        for (which, analytic) in [("mu", d_mu[i]), ("log_std", d_ls[i])] {
            let bump = |s: f64| {
                let (mut m, mut l) = (mu.clone(), ls.clone());
                if which == "mu" {
                    m[i] += s;
                } else {
                    l[i] += s;
                }
                gaussian::log_prob(&m, &l, &act)
            };
            let fd = (bump(1e-6) - bump(-1e-6)) / 2e-6;
            let e = rel_err(analytic, fd);
            ensure(e < 1e-4, || format!("gaussian {which} {i}: {analytic} vs {fd}"))?;
            worst = worst.max(e);
        }
    }

    let (loss_worst, checked, total) = actor_critic_loss_check()?;
    worst = worst.max(loss_worst);
    Ok(format!(
        "dense, conv, tanh, gaussian and full loss ({checked}/{total} parameters), worst relative error {worst:.1e}"
    ))
}

/// Every parameter of a small actor-critic against the full PPO loss.
fn actor_critic_loss_check() -> Result<(f64, usize, usize), String> {
    let mut net = ActorCritic::<f64>::new(tiny(), 3).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in net.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    let n = 6;
    let obs: Vec<f64> = (0..n * OBS_DIM).map(|_| rng.random_range(0.0..1.0)).collect();
    let out = net.forward(&obs, n).map_err(|e| e.to_string())?;
    let actions: Vec<f64> = (0..n * ACTION_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    let logp: Vec<f64> = (0..n)
        .map(|i| {
            let r = i * ACTION_DIM..(i + 1) * ACTION_DIM;
            gaussian::log_prob(&out.mu[r.clone()], net.log_std(), &actions[r]) + rng.random_range(-0.4..0.4)
        })
        .collect();
    let values: Vec<f64> = out.value.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
    let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let ret: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let batch = Batch {
        obs: &obs,
        actions: &actions,
        old_log_prob: &logp,
        old_values: &values,
        advantages: &adv,
        returns: &ret,
    };
    let cfg = PpoConfig::default();
    let eval = |net: &ActorCritic<f64>| ppo_loss(&mut net.clone(), &batch, &cfg, false).unwrap();

    net.zero_grads();
    ppo_loss(&mut net, &batch, &cfg, true).map_err(|e| e.to_string())?;
    let analytic = net.grads().to_vec();
    let base = eval(&net);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..net.param_count() {
        let mut p = net.clone();
        p.params_mut()[i] += h;
        let up = eval(&p);
        p.params_mut()[i] -= 2.0 * h;
        let down = eval(&p);
        // The loss has kinks where a ratio or value crosses its clip
        // boundary; a central difference straddling one is meaningless.
        if up.clip_fraction != base.clip_fraction || down.clip_fraction != base.clip_fraction {
            continue;
        }
        let fd = (up.total - down.total) / (2.0 * h);
        if analytic[i].abs() > 1e-8 || fd.abs() > 1e-8 {
            let e = rel_err(analytic[i], fd);
            ensure(e < 1e-4, || format!("actor-critic param {i}: {} vs {fd}", analytic[i]))?;
            worst = worst.max(e);
        }
        checked += 1;
    }
    ensure(checked > net.param_count() / 2, || format!("only {checked} parameters away from a kink"))?;
    Ok((worst, checked, net.param_count()))
}

// 6 ---------------------------------------------------------------------------

fn flat_world(mu: f64) -> World {
    let hf = Arc::new(HeightField::flat(80.0, 161).unwrap());
    World::new(
        hf,
        SolverConfig {
            friction: mu,
            ..SolverConfig::default()
        },
    )
    .unwrap()
}

fn settled_vehicle(mu: f64) -> Result<(World, VehicleModel), String> {
    let mut world = flat_world(mu);
    let mut model = VehicleModel::build(&mut world, &VehicleConstants::default(), Placement { x: -20.0, y: 0.0, yaw: 0.0 })
        .map_err(|e| e.to_string())?;
    model.settle(&mut world, 120).map_err(|e| e.to_string())?;
    Ok((world, model))
}

fn physics_statics() -> Check {
    let (world, model) = settled_vehicle(0.7)?;
    let normal: f64 = world
        .contacts()
        .iter()
        .filter(|c| model.wheel_index(c.body).is_some())
        .map(|c| c.normal_force)
        .sum();
    let weight = 164_808.0;
    let err = (normal - weight).abs() / weight;
    ensure(err < 0.01, || format!("Σ wheel normal forces {normal:.0} N vs {weight} N"))?;
    let loads: f64 = model.wheel_loads().iter().sum();
    ensure((loads - 1.0).abs() < 0.02, || format!("Σ normalized loads {loads}"))?;

    // Three rigidly fixed spheres slide instead of rolling.
    let mu = 0.5;
    let mut w = flat_world(mu);
    let sled = RigidBody::new("sled", 50.0, Vector3::new(10.0, 10.0, 10.0), Vector3::new(0.0, 0.0, 0.3), UnitQuaternion::identity())
        .map_err(|e| e.to_string())?
        .with_collider(Sphere { radius: 0.3, offset: Vector3::new(0.5, 0.0, 0.0) })
        .with_collider(Sphere { radius: 0.3, offset: Vector3::new(-0.5, 0.4, 0.0) })
        .with_collider(Sphere { radius: 0.3, offset: Vector3::new(-0.5, -0.4, 0.0) });
    let id = w.add_body(sled);
    for _ in 0..30 {
        w.step().map_err(|e| e.to_string())?;
    }
    w.body_mut(id).linear_velocity = Vector3::new(6.0, 0.0, 0.0);
    w.step().map_err(|e| e.to_string())?;
    let v0 = w.body(id).linear_velocity.x;
    let n = 30;
    for _ in 0..n {
        w.step().map_err(|e| e.to_string())?;
    }
    let v1 = w.body(id).linear_velocity.x;
    let decel = (v0 - v1) / (n as f64 * TIMESTEP);
    let want = mu * 9.81;
    ensure(v1 > 0.0 && (decel - want).abs() / want < 0.05, || {
        format!("sliding deceleration {decel:.3} m/s² vs μg = {want:.3}")
    })?;
    Ok(format!(
        "Σ N = {:.2} kN ({:+.2}%), Σ loads = {loads:.4}, sliding deceleration {decel:.3} m/s² vs {want:.3}",
        normal / 1000.0,
        100.0 * (normal - weight) / weight
    ))
}

// 7 ---------------------------------------------------------------------------

fn slip_kinematics() -> Check {
    // Rolling: steady drive on flat ground until the speed has settled.
    let (mut world, mut model) = settled_vehicle(0.7)?;
    let mut a = [0.0; ACTION_DIM];
    a[8..].fill(0.3);
    let drive = Action::new(&a).map_err(|e| e.to_string())?;
    for _ in 0..36 {
        model.control_step(&mut world, &drive, 5).map_err(|e| e.to_string())?;
    }
    let s = model.state(&world);
    ensure(s.forward_speed > 0.5, || format!("vehicle only reached {:.3} m/s", s.forward_speed))?;
    let rolling = s.slip_long.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    ensure(rolling < 1e-3, || format!("rolling slip {:?}", s.slip_long))?;

    // Locked: braked wheels dragged along after a shove. Friction is low
    // enough that the brakes never slip.
    let (mut world, mut model) = settled_vehicle(0.4)?;
    let bodies: Vec<_> = model.all_bodies().collect();
    for id in bodies {
        world.body_mut(id).linear_velocity.x += 3.0;
    }
    for _ in 0..10 {
        model.settle(&mut world, 1).map_err(|e| e.to_string())?;
    }
    let s = model.state(&world);
    ensure(s.forward_speed > 0.5, || format!("vehicle stopped at {:.3} m/s", s.forward_speed))?;
    let spin = s.wheel_speeds.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    ensure(spin < 0.01, || format!("braked wheels turning at {:?}", s.wheel_speeds))?;
    let locked = s.slip_long.iter().fold(0.0f64, |m, l| m.max((l - 1.0).abs()));
    ensure(locked <= 0.01, || format!("locked slip {:?}", s.slip_long))?;
    Ok(format!("rolling max |λ| = {rolling:.1e}, locked max |λ − 1| = {locked:.1e}"))
}

// 8 ---------------------------------------------------------------------------

fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn observation_contract() -> Check {
    use obs_index::*;
    let layout = [
        (0, TARGET),
        (TARGET, VELOCITY),
        (VELOCITY, ROLL_PITCH),
        (ROLL_PITCH, ARTICULATION),
        (ARTICULATION, PISTONS),
        (PISTONS, SLIP_LONG),
        (SLIP_LONG, SLIP_ANGLE),
        (SLIP_ANGLE, LOADS),
        (LOADS, OBS_DIM),
    ];
    let widths: Vec<usize> = layout.iter().map(|(a, b)| b - a).collect();
    ensure(widths == [600, 3, 3, 2, 2, 6, 6, 6, 6] && OBS_DIM == 634 && MAP_LEN == 600, || {
        format!("block widths {widths:?}, total {OBS_DIM}")
    })?;

    // Every state field lands in its block.
    let state = VehicleState {
        position: Vector3::new(3.0, 4.0, 1.0),
        yaw: 0.0,
        pitch: 0.02,
        roll: 0.01,
        forward_speed: 0.5,
        lateral_speed: 0.03,
        yaw_rate: 0.04,
        articulation: [0.05, 0.06],
        piston_displacement: [0.0; 6],
        piston_normalized: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        wheel_speeds: [0.0; 6],
        slip_long: [0.11, 0.12, 0.13, 0.14, 0.15, 0.16],
        slip_angle: [0.21, 0.22, 0.23, 0.24, 0.25, 0.26],
        loads: [0.31, 0.32, 0.33, 0.34, 0.35, 0.36],
        sidewall_contacts: 0,
        joint_work: 0.0,
    };
    let hf = HeightField::flat(64.0, 129).map_err(|e| e.to_string())?;
    let target = TargetPose { x: 13.0, y: 6.0, heading: 0.5 };
    let obs = build_observation(&hf, &state, &target);
    let expect: Vec<(usize, Vec<f64>)> = vec![
        (TARGET, vec![10.0, 2.0, 0.5]),
        (VELOCITY, vec![0.5, 0.03, 0.04]),
        (ROLL_PITCH, vec![0.01, 0.02]),
        (ARTICULATION, vec![0.05, 0.06]),
        (PISTONS, state.piston_normalized.to_vec()),
        (SLIP_LONG, state.slip_long.to_vec()),
        (SLIP_ANGLE, state.slip_angle.to_vec()),
        (LOADS, state.loads.to_vec()),
    ];
    ensure(obs.len() == OBS_DIM, || format!("observation length {}", obs.len()))?;
    for (at, want) in &expect {
        let got = &obs[*at..at + want.len()];
        let ok = got.iter().zip(want).all(|(g, w)| (g - w).abs() < 1e-12);
        ensure(ok, || format!("block at {at}: {got:?} vs {want:?}"))?;
    }
    // Ground 1 m below the reference point maps to (−1 + 5) / 10.
    ensure(obs[..MAP_LEN].iter().all(|&v| (v - 0.4).abs() < 1e-12), || "flat height map not 0.4".into())?;

    // Rough terrain with boulders: map cells stay in [0, 1]; same seed, same run.
    let rollout = |seed: u64| -> Result<Vec<Vec<f64>>, String> {
        let cfg = lesson_config(3, &[]).map_err(|e| e.to_string())?;
        let mut env = Env::new(cfg, EnvSettings::default(), seed, 0).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = vec![env.reset().map_err(|e| e.to_string())?];
        for _ in 0..40 {
            let a: Vec<f64> = (0..ACTION_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            let out = env.step(&Action::new(&a).unwrap()).map_err(|e| e.to_string())?;
            seen.push(out.observation);
            if out.done {
                seen.push(env.reset().map_err(|e| e.to_string())?);
            }
        }
        Ok(seen)
    };
    let a = rollout(17)?;
    let b = rollout(17)?;
    let c = rollout(18)?;
    for o in &a {
        ensure(o.len() == OBS_DIM, || format!("observation length {}", o.len()))?;
        ensure(o[..MAP_LEN].iter().all(|v| (0.0..=1.0).contains(v)), || "height cell outside [0, 1]".into())?;
        ensure(o.iter().all(|v| v.is_finite()), || "non-finite observation".into())?;
    }
    let bits = |s: &[Vec<f64>]| s.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(bits(&a) == bits(&b), || "same seed gave different observations".into())?;
    ensure(bits(&a) != bits(&c), || "different seeds gave identical observations".into())?;

    let phi_max = PI / 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws: Vec<f64> = (0..100_000).map(|_| sample_bearing(phi_max, &mut rng)).collect();
    let ks = ks_distance(draws, |p| (p.powi(3) + phi_max.powi(3)) / (2.0 * phi_max.powi(3)));
    ensure(ks < 0.01, || format!("bearing KS distance {ks}"))?;
    Ok(format!("layout and values checked, {} rough-terrain observations, bearing KS = {ks:.4}", a.len()))
}

// 9 ---------------------------------------------------------------------------

fn p_positive(net: &ActorCritic<f64>) -> f64 {
    let mu = net.forward(&vec![0.0; OBS_DIM], 1).unwrap().mu[0];
    let z = mu / net.log_std()[0].exp();
    normal_cdf(z)
}

/// Standard normal CDF, with the error function approximation of
/// Abramowitz and Stegun 7.1.26.
fn normal_cdf(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = ((((1.061_405_429 * t - 1.453_152_027) * t + 1.421_413_741) * t - 0.284_496_736) * t + 0.254_829_592) * t;
    let erf = 1.0 - poly * (-x * x).exp();
    0.5 * (1.0 + z.signum() * erf)
}

fn bandit_convergence() -> Check {
    let mut net = ActorCritic::<f64>::new(tiny(), 1).map_err(|e| e.to_string())?;
    let cfg = PpoConfig {
        minibatch: 32,
        horizon: 64,
        ..PpoConfig::default()
    };
    let mut opt = Adam::new(net.param_count(), 1e-3, AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let obs = vec![0.0; OBS_DIM];
    let start = p_positive(&net);
    for it in 1..=200 {
        let out = net.forward(&obs, 1).map_err(|e| e.to_string())?;
        let mut seg = Segment::default();
        for _ in 0..cfg.horizon {
            let a = gaussian::sample(&out.mu, net.log_std(), &mut rng);
            let r = if a[0] > 0.0 { 1.0 } else { 0.0 };
            seg.obs.extend_from_slice(&obs);
            seg.log_probs.push(gaussian::log_prob(&out.mu, net.log_std(), &a));
            seg.actions.extend(a);
            seg.values.push(out.value[0]);
            seg.rewards.push(r);
            seg.gae_rewards.push(r);
            seg.dones.push(true);
        }
        let buf = RolloutBuffer::from_segments(vec![seg], cfg.gamma, cfg.gae_lambda).map_err(|e| e.to_string())?;
        ppo::update(&mut net, &mut opt, &buf, &cfg, &mut rng).map_err(|e| e.to_string())?;
        let p = p_positive(&net);
        if p > 0.9 {
            return Ok(format!("P(a > 0) went from {start:.3} to {p:.3} in {it} iterations"));
        }
    }
    Err(format!("P(a > 0) = {:.3} after 200 iterations", p_positive(&net)))
}

// 10 --------------------------------------------------------------------------

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn training_smoke() -> Check {
    let run = RunConfig::load(repo_path("configs/smoke.toml")).map_err(|e| e.to_string())?;
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-smoke");
    let _ = fs::remove_dir_all(&out);
    let summary = harness::train(&run, &out).map_err(|e| e.to_string())?;
    let evals = &summary.evals;
    let (_, first) = *evals.first().ok_or("no evaluations")?;
    let (last_step, last) = *evals.last().ok_or("no evaluations")?;
    let best = evals.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    let detail = format!(
        "{} steps, eval at step 0 {first:.3}, final (step {last_step}) {last:.3}, best {best:.3}; log in {}",
        summary.total_steps,
        summary.eval.display()
    );
    if first < 0.1 && last > 0.35 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 11 --------------------------------------------------------------------------

fn determinism() -> Check {
    let mut run = RunConfig {
        seed: 7,
        workers: 2,
        architecture: tiny(),
        ..RunConfig::default()
    };
    run.ppo.horizon = 64;
    run.ppo.minibatch = 40;
    run.ppo.epochs = 2;
    run.eval.interval = 96;
    run.eval.episodes = 2;
    run.lessons = [(1, 3e-4), (2, 1e-4)]
        .into_iter()
        .map(|(n, lr)| {
            let mut l = LessonSpec::standard(n).unwrap();
            l.learning_rate = lr;
            l.step_budget = 128;
            let mut ep = lesson_config(n, &[]).unwrap();
            ep.max_steps = 24;
            l.episode = Some(ep);
            l
        })
        .collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut metrics = Vec::new();
    for name in ["a", "b"] {
        let summary = harness::train(&run, &dir.path().join(name)).map_err(|e| e.to_string())?;
        metrics.push((
            fs::read(&summary.metrics).map_err(|e| e.to_string())?,
            fs::read(&summary.eval).map_err(|e| e.to_string())?,
        ));
    }
    ensure(metrics[0].0 == metrics[1].0, || "metrics CSVs differ".into())?;
    ensure(metrics[0].1 == metrics[1].1, || "evaluation CSVs differ".into())?;
    let rows = metrics[0].0.iter().filter(|&&b| b == b'\n').count() - 1;
    Ok(format!("two runs, {rows} metrics rows, byte-identical metrics and evaluation logs"))
}

// -----------------------------------------------------------------------------

struct Criterion {
    id: u32,
    title: &'static str,
    budget: Option<Duration>,
    long: bool,
    run: fn() -> Check,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, title: "reward closed forms", budget: Some(Duration::from_secs(1)), long: false, run: reward_closed_forms },
    Criterion { id: 2, title: "progress telescopes", budget: Some(Duration::from_secs(1)), long: false, run: telescoping_progress },
    Criterion { id: 3, title: "GAE against double sum", budget: Some(Duration::from_secs(5)), long: false, run: gae_oracle },
    Criterion { id: 4, title: "clipped objective table", budget: Some(Duration::from_secs(1)), long: false, run: clipped_objective_table },
    Criterion { id: 5, title: "gradient checks", budget: Some(Duration::from_secs(60)), long: false, run: gradient_checks },
    Criterion { id: 6, title: "physics statics", budget: Some(Duration::from_secs(30)), long: false, run: physics_statics },
    Criterion { id: 7, title: "slip kinematics", budget: None, long: false, run: slip_kinematics },
    Criterion { id: 8, title: "observation contract", budget: None, long: false, run: observation_contract },
    Criterion { id: 9, title: "bandit convergence", budget: Some(Duration::from_secs(120)), long: false, run: bandit_convergence },
    Criterion { id: 10, title: "training smoke", budget: Some(Duration::from_secs(8 * 3600)), long: true, run: training_smoke },
    Criterion { id: 11, title: "end-to-end determinism", budget: None, long: false, run: determinism },
];

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let long = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let only_long = args.iter().any(|a| a == "--ignored");
    // `cargo test -- --list` and friends expect no work to be done.
    if args.iter().any(|a| a == "--list") {
        for c in CRITERIA {
            println!("criterion_{:02}: test", c.id);
        }
        return ExitCode::SUCCESS;
    }

    let mut failed = 0;
    for c in CRITERIA {
        if (c.long && !long) || (only_long && !c.long) {
            if c.long {
                println!("criterion {:>2} SKIP  {}: long run, pass --ignored to include it", c.id, c.title);
            }
            continue;
        }
        let t0 = Instant::now();
        let mut result = (c.run)();
        let took = t0.elapsed();
        if let (Ok(detail), Some(budget)) = (&result, c.budget) {
            if took > budget {
                result = Err(format!("{detail}; took {took:.1?}, budget {budget:?}"));
            }
        }
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag}  {} ({took:.2?}): {detail}", c.id, c.title);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
