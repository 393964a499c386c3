use crate::error::{Error, Result};

/// Generalised advantage estimates and value targets for one contiguous
/// stream of transitions. `dones[t]` marks the last step of an episode
/// (nothing is bootstrapped past it); `bootstrap` is V(s_T) after the final
/// transition when that transition is not terminal.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Shape(format!(
            "GAE inputs differ in length: rewards {n}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hand_recursion_example() {
        let (a, r) = compute_gae(&[1.0; 3], &[0.0; 3], &[false; 3], 0.0, 0.99, 0.95).unwrap();
        assert_abs_diff_eq!(a[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 1.9405, epsilon = 1e-12);
        assert_abs_diff_eq!(a[0], 1.0 + 0.9405 * 1.9405, epsilon = 1e-12);
        assert_abs_diff_eq!(a[0], 2.8250, epsilon = 1e-4);
        assert_eq!(a, r);
    }

    #[test]
    fn zero_lambda_gives_one_step_errors() {
        let rw = [0.5, -1.0, 2.0, 0.3];
        let v = [0.1, 0.4, -0.2, 0.9];
        let d = [false, true, false, false];
        let (a, _) = compute_gae(&rw, &v, &d, 0.7, 0.9, 0.0).unwrap();
        let next = [0.4, 0.0, 0.9, 0.7];
        for t in 0..4 {
            assert_abs_diff_eq!(a[t], rw[t] + 0.9 * next[t] - v[t], epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_lambda_on_finished_episode_is_discounted_return() {
        let rw = [0.3, -0.1, 0.8, 1.5];
        let v = [0.2, 0.5, -0.3, 0.1];
        let (a, _) = compute_gae(&rw, &v, &[false, false, false, true], 123.0, 0.9, 1.0).unwrap();
        for t in 0..4 {
            let g: f64 = (t..4).map(|k| 0.9f64.powi((k - t) as i32) * rw[k]).sum();
            assert_abs_diff_eq!(a[t], g - v[t], epsilon = 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(compute_gae(&[1.0], &[0.0, 0.0], &[false], 0.0, 0.9, 0.9).is_err());
    }
}
