//! Shaped navigation reward.
//!
//! The per-step reward multiplies a progress term by soft penalties on roll,
//! speed, load distribution, heading and slip, and adds a target bonus, an
//! energy cost and a sidewall penalty:
//!
//! ```text
//! total = r_tar + r_prog · r_roll · r_speed · r_forces · (r_head + r_slip_long + r_slip_lat) / 3
//!       + r_energy + r_side
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConstants {
    /// Target bonus. `None` derives it from the nominal start distance.
    pub k_tar: Option<f64>,
    /// Distance scale of the heading term, m.
    pub k_d: f64,
    /// Roll scale, rad.
    pub k_phi: f64,
    /// Roll below which no penalty applies, degrees.
    pub roll_threshold_deg: f64,
    /// Speed above which the speed factor decays, m/s.
    pub v_lim: f64,
    pub k_speed: f64,
    pub k_forces: f64,
    pub k_lambda: f64,
    pub k_alpha: f64,
    pub k_energy: f64,
    pub k_sw: f64,
    /// Control frequency, Hz.
    pub f_control: f64,
    /// Target reached when closer than this, m.
    pub target_distance: f64,
    /// ...and heading error below this, degrees.
    pub target_heading_deg: f64,
    /// Share of the maximum return granted by the target bonus.
    pub target_share: f64,
}

impl Default for RewardConstants {
    fn default() -> Self {
        Self {
            k_tar: None,
            k_d: 5.0,
            k_phi: PI / 16.0,
            roll_threshold_deg: 5.0,
            v_lim: 0.8,
            k_speed: 2.0,
            k_forces: 0.1,
            k_lambda: 0.3,
            k_alpha: 6.0,
            k_energy: -1.0,
            k_sw: -0.2,
            f_control: 12.0,
            target_distance: 0.3,
            target_heading_deg: 9.0,
            target_share: 0.05,
        }
    }
}

impl RewardConstants {
    /// Target bonus for a lesson whose nominal start distance is `d0`: the
    /// bonus makes up `target_share` of the resulting maximum return.
    pub fn k_tar(&self, d0: f64) -> f64 {
        self.k_tar
            .unwrap_or(self.target_share / (1.0 - self.target_share) * d0 * self.f_control)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_d", self.k_d),
            ("k_phi", self.k_phi),
            ("v_lim", self.v_lim),
            ("k_speed", self.k_speed),
            ("k_forces", self.k_forces),
            ("k_lambda", self.k_lambda),
            ("k_alpha", self.k_alpha),
            ("f_control", self.f_control),
            ("target_distance", self.target_distance),
            ("target_heading_deg", self.target_heading_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("reward.{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.target_share) {
            return Err(config_err(format!(
                "reward.target_share must lie in [0, 1), got {}",
                self.target_share
            )));
        }
        if self.k_energy > 0.0 || self.k_sw > 0.0 {
            return Err(config_err("reward.k_energy and reward.k_sw must not be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_tar: f64,
    pub r_prog: f64,
    pub r_head: f64,
    pub r_roll: f64,
    pub r_speed: f64,
    pub r_forces: f64,
    pub r_slip_long: f64,
    pub r_slip_lat: f64,
    pub r_energy: f64,
    pub r_side: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub const FIELDS: [&'static str; 11] = [
        "r_tar", "r_prog", "r_head", "r_roll", "r_speed", "r_forces", "r_slip_long", "r_slip_lat", "r_energy",
        "r_side", "total",
    ];

    /// Fills in `total` from the individual terms.
    pub fn composed(mut self) -> Self {
        self.total = self.r_tar
            + self.r_prog * self.r_roll * self.r_speed * self.r_forces * (self.r_head + self.r_slip_long + self.r_slip_lat)
                / 3.0
            + self.r_energy
            + self.r_side;
        self
    }

    pub fn values(&self) -> [f64; 11] {
        [
            self.r_tar,
            self.r_prog,
            self.r_head,
            self.r_roll,
            self.r_speed,
            self.r_forces,
            self.r_slip_long,
            self.r_slip_lat,
            self.r_energy,
            self.r_side,
            self.total,
        ]
    }
}

/// Everything the reward needs from one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardInputs {
    /// Horizontal distance to the target before and after the step, m.
    pub d_prev: f64,
    pub d_t: f64,
    /// Wrapped heading error to the target heading, rad.
    pub heading_error: f64,
    pub roll: f64,
    /// Planar speed, m/s.
    pub speed: f64,
    pub loads: [f64; 6],
    pub slip_long: [f64; 6],
    pub slip_angle: [f64; 6],
    pub joint_work: f64,
    pub max_joint_work: f64,
    pub sidewall_contacts: usize,
}

pub fn progress(c: &RewardConstants, d_prev: f64, d_t: f64) -> f64 {
    (d_prev - d_t) * c.f_control
}

pub fn heading_factor(c: &RewardConstants, psi: f64, d_t: f64) -> f64 {
    let scale = d_t.max(0.01) / c.k_d;
    (-0.5 * (psi / scale).powi(2)).exp()
}

pub fn roll_factor(c: &RewardConstants, phi: f64) -> f64 {
    if phi.abs() <= c.roll_threshold_deg.to_radians() {
        1.0
    } else {
        (-0.5 * (phi / c.k_phi).powi(2)).exp()
    }
}

pub fn speed_factor(c: &RewardConstants, v: f64) -> f64 {
    (c.k_speed * (c.v_lim - v.abs())).exp().min(1.0)
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn force_factor(c: &RewardConstants, loads: &[f64]) -> f64 {
    let sigma = population_std(loads);
    (-0.5 * (sigma / c.k_forces).powi(2)).exp()
}

/// Longitudinal and lateral slip factors. Slip angles are clipped to
/// `±π/k_α`, where the lateral factor reaches zero.
pub fn slip_factors(c: &RewardConstants, slip_long: &[f64], slip_angle: &[f64]) -> (f64, f64) {
    let long = slip_long
        .iter()
        .map(|l| (-0.5 * (l / c.k_lambda).powi(2)).exp())
        .product();
    let bound = PI / c.k_alpha;
    let lat = slip_angle
        .iter()
        .map(|a| {
            let a = a.clamp(-bound, bound);
            0.5 * (c.k_alpha * a).cos() + 0.5
        })
        .product();
    (long, lat)
}

pub fn energy_term(c: &RewardConstants, work: f64, max_work: f64) -> Result<f64> {
    if !(max_work > 0.0) {
        return Err(config_err(format!("maximum joint work must be positive, got {max_work}")));
    }
    Ok(c.k_energy * work / max_work)
}

pub fn sidewall_term(c: &RewardConstants, contacts: usize) -> f64 {
    c.k_sw * contacts as f64
}

pub fn target_reached(c: &RewardConstants, d_t: f64, psi: f64) -> bool {
    d_t < c.target_distance && psi.abs() < c.target_heading_deg.to_radians()
}

pub fn target_bonus(c: &RewardConstants, k_tar: f64, d_t: f64, psi: f64) -> f64 {
    if target_reached(c, d_t, psi) {
        k_tar
    } else {
        0.0
    }
}

/// Undiscounted return of an ideal episode from distance `d0`.
pub fn max_return(c: &RewardConstants, k_tar: f64, d0: f64) -> f64 {
    d0 * c.f_control + k_tar
}

pub fn compute(c: &RewardConstants, k_tar: f64, x: &RewardInputs) -> Result<RewardBreakdown> {
    let (r_slip_long, r_slip_lat) = slip_factors(c, &x.slip_long, &x.slip_angle);
    Ok(RewardBreakdown {
        r_tar: target_bonus(c, k_tar, x.d_t, x.heading_error),
        r_prog: progress(c, x.d_prev, x.d_t),
        r_head: heading_factor(c, x.heading_error, x.d_t),
        r_roll: roll_factor(c, x.roll),
        r_speed: speed_factor(c, x.speed),
        r_forces: force_factor(c, &x.loads),
        r_slip_long,
        r_slip_lat,
        r_energy: energy_term(c, x.joint_work, x.max_joint_work)?,
        r_side: sidewall_term(c, x.sidewall_contacts),
        total: 0.0,
    }
    .composed())
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c() -> RewardConstants {
        RewardConstants::default()
    }

    #[test]
    fn progress_examples() {
        assert_eq!(progress(&c(), 3.0, 3.0), 0.0);
        assert_abs_diff_eq!(progress(&c(), 10.0, 9.95), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn heading_examples() {
        assert_eq!(heading_factor(&c(), 0.0, 3.0), 1.0);
        assert_abs_diff_eq!(heading_factor(&c(), 1.0, 5.0), (-0.5f64).exp(), epsilon = 1e-12);
        assert!(heading_factor(&c(), 0.1, 0.0).is_finite());
        let mut prev = f64::INFINITY;
        for d in [10.0, 5.0, 2.0, 1.0, 0.5, 0.1] {
            let h = heading_factor(&c(), 0.3, d);
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn roll_examples() {
        assert_eq!(roll_factor(&c(), 0.0), 1.0);
        assert_eq!(roll_factor(&c(), 4f64.to_radians()), 1.0);
        let phi = 10f64.to_radians();
        let expected = (-0.5 * (phi / (PI / 16.0)).powi(2)).exp();
        assert_abs_diff_eq!(roll_factor(&c(), phi), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(roll_factor(&c(), phi), 0.6738, epsilon = 5e-4);
    }

    #[test]
    fn speed_examples() {
        assert_eq!(speed_factor(&c(), 0.5), 1.0);
        assert_eq!(speed_factor(&c(), 0.8), 1.0);
        assert_abs_diff_eq!(speed_factor(&c(), 1.3), (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn force_examples() {
        assert_abs_diff_eq!(force_factor(&c(), &[1.0 / 6.0; 6]), 1.0, epsilon = 1e-12);
        let third = 1.0 / 3.0;
        let loads = [third, third, third, 0.0, 0.0, 0.0];
        assert_abs_diff_eq!(population_std(&loads), 1.0 / 6.0, epsilon = 1e-12);
        let expected = (-0.5 * (1.0f64 / 6.0 / 0.1).powi(2)).exp();
        assert_abs_diff_eq!(force_factor(&c(), &loads), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(force_factor(&c(), &loads), 0.2494, epsilon = 1e-4);
    }

    #[test]
    fn slip_examples() {
        assert_eq!(slip_factors(&c(), &[0.0; 6], &[0.0; 6]), (1.0, 1.0));
        let (l, _) = slip_factors(&c(), &[0.3, 0.0, 0.0, 0.0, 0.0, 0.0], &[0.0; 6]);
        assert_abs_diff_eq!(l, (-0.5f64).exp(), epsilon = 1e-12);
        for a in [PI / 6.0, 0.7, -1.0, 3.0] {
            let (_, lat) = slip_factors(&c(), &[0.0; 6], &[0.0, 0.0, a, 0.0, 0.0, 0.0]);
            assert_abs_diff_eq!(lat, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn energy_and_sidewall_examples() {
        assert_eq!(energy_term(&c(), 0.0, 100.0).unwrap(), 0.0);
        assert_eq!(energy_term(&c(), 100.0, 100.0).unwrap(), -1.0);
        assert_eq!(energy_term(&c(), 25.0, 100.0).unwrap(), -0.25);
        assert!(energy_term(&c(), 0.0, 0.0).is_err());
        assert_eq!(sidewall_term(&c(), 0), 0.0);
        assert_abs_diff_eq!(sidewall_term(&c(), 1), -0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(sidewall_term(&c(), 3), -0.6, epsilon = 1e-12);
    }

    #[test]
    fn target_bonus_examples() {
        let k = c().k_tar(20.0);
        assert_abs_diff_eq!(k, 0.05 / 0.95 * 240.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k, 12.63, epsilon = 1e-2);
        assert_eq!(target_bonus(&c(), k, 0.2, 5f64.to_radians()), k);
        assert_eq!(target_bonus(&c(), k, 0.5, 0.0), 0.0);
        assert_eq!(target_bonus(&c(), k, 0.2, 20f64.to_radians()), 0.0);
    }

    #[test]
    fn max_return_examples() {
        let k = c().k_tar(20.0);
        assert_abs_diff_eq!(max_return(&c(), k, 20.0), 240.0 + k, epsilon = 1e-12);
        assert_abs_diff_eq!(max_return(&c(), k, 0.25), 3.0 + k, epsilon = 1e-12);
        // The bonus is exactly the configured share of the maximum.
        assert_abs_diff_eq!(k / max_return(&c(), k, 20.0), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn perfect_straight_run_telescopes() {
        let cst = c();
        let k = cst.k_tar(20.0);
        let d0 = 20.0;
        let steps = 400;
        let mut total = 0.0;
        let mut prog = 0.0;
        for s in 0..steps {
            let d_prev = d0 * (1.0 - s as f64 / steps as f64);
            let d_t = d0 * (1.0 - (s + 1) as f64 / steps as f64);
            let x = RewardInputs {
                d_prev,
                d_t,
                heading_error: 0.0,
                roll: 0.0,
                speed: 0.6,
                loads: [1.0 / 6.0; 6],
                slip_long: [0.0; 6],
                slip_angle: [0.0; 6],
                joint_work: 0.0,
                max_joint_work: 1.0,
                sidewall_contacts: 0,
            };
            let r = compute(&cst, k, &x).unwrap();
            prog += r.r_prog;
            total += r.total;
            if r.r_tar > 0.0 {
                // Episodes end on reaching the target; finish the approach
                // with progress only.
                prog += progress(&cst, d_t, 0.0);
                total += progress(&cst, d_t, 0.0);
                break;
            }
        }
        assert_abs_diff_eq!(prog, d0 * 12.0, epsilon = 1e-9);
        assert!(total / max_return(&cst, k, d0) <= 1.0 + 1e-12);
        assert_abs_diff_eq!(total / max_return(&cst, k, d0), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(0.5), 0.5, epsilon = 1e-12);
    }

    fn inputs() -> impl Strategy<Value = RewardInputs> {
        (
            0.0f64..30.0,
            0.0f64..30.0,
            -PI..PI,
            -1.5f64..1.5,
            0.0f64..5.0,
            proptest::array::uniform6(0.0f64..1.0),
            proptest::array::uniform6(-10.0f64..10.0),
            proptest::array::uniform6(-PI..PI),
            0.0f64..1.0,
            0usize..6,
        )
            .prop_map(|(d_prev, d_t, h, roll, speed, loads, sl, sa, w, n)| RewardInputs {
                d_prev,
                d_t,
                heading_error: h,
                roll,
                speed,
                loads,
                slip_long: sl,
                slip_angle: sa,
                joint_work: w * 100.0,
                max_joint_work: 100.0,
                sidewall_contacts: n,
            })
    }

    proptest! {
        #[test]
        fn composition_is_exact_and_factors_bounded(x in inputs()) {
            let cst = c();
            let k = cst.k_tar(20.0);
            let r = compute(&cst, k, &x).unwrap();
            let product = r.r_roll * r.r_speed * r.r_forces;
            let expected = r.r_tar + r.r_prog * product * (r.r_head + r.r_slip_long + r.r_slip_lat) / 3.0 + r.r_energy + r.r_side;
            prop_assert!((r.total - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            for f in [r.r_head, r.r_roll, r.r_speed, r.r_forces, r.r_slip_long, r.r_slip_lat] {
                prop_assert!((0.0..=1.0).contains(&f));
            }
            prop_assert!((-1.0..=0.0).contains(&r.r_energy));
            prop_assert!(r.r_side <= 0.0);
            prop_assert!(r.r_tar == 0.0 || r.r_tar == k);
        }

        #[test]
        fn factors_are_monotone(a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let cst = c();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(roll_factor(&cst, hi) <= roll_factor(&cst, lo));
            prop_assert!(roll_factor(&cst, -hi) <= roll_factor(&cst, -lo));
            prop_assert!(speed_factor(&cst, hi) <= speed_factor(&cst, lo));
            prop_assert!(heading_factor(&cst, hi, 2.0) <= heading_factor(&cst, lo, 2.0));
            let (l1, a1) = slip_factors(&cst, &[hi; 6], &[hi / 6.0; 6]);
            let (l0, a0) = slip_factors(&cst, &[lo; 6], &[lo / 6.0; 6]);
            prop_assert!(l1 <= l0 && a1 <= a0);
            let spread = |s: f64| [0.5 + s, 0.5 - s, 0.5, 0.5, 0.5, 0.5];
            prop_assert!(force_factor(&cst, &spread(hi / 10.0)) <= force_factor(&cst, &spread(lo / 10.0)) + 1e-15);
        }

        #[test]
        fn force_factor_is_shift_invariant(loads in proptest::array::uniform6(0.0f64..1.0), shift in 0.0f64..1.0) {
            let cst = c();
            let shifted = loads.map(|l| l + shift);
            prop_assert!((force_factor(&cst, &loads) - force_factor(&cst, &shifted)).abs() < 1e-9);
        }

        #[test]
        fn progress_telescopes(ds in proptest::collection::vec(0.0f64..30.0, 2..50)) {
            let cst = c();
            let sum: f64 = ds.windows(2).map(|w| progress(&cst, w[0], w[1])).sum();
            let expected = (ds[0] - ds[ds.len() - 1]) * 12.0;
            prop_assert!((sum - expected).abs() < 1e-9);
        }
    }
}
