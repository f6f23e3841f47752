//! Generalized advantage estimation.

/// Backward recursion `A_t = δ_t + γλ A_{t+1}` with
/// `δ_t = r_t + γ V_{t+1} − V_t` and `V_T = terminal_value`.
pub fn compute_gae(rewards: &[f64], values: &[f64], terminal_value: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len(), "rewards and values must align");
    let mut adv = vec![0.0; rewards.len()];
    let mut next_value = terminal_value;
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    adv
}

/// Explicit double sum `Σ_k (γλ)^k δ_{t+k}`, quadratic in T.
pub fn gae_double_sum(rewards: &[f64], values: &[f64], terminal_value: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let v_next = |t: usize| if t + 1 < n { values[t + 1] } else { terminal_value };
    let delta: Vec<f64> = (0..n).map(|t| rewards[t] + gamma * v_next(t) - values[t]).collect();
    (0..n)
        .map(|t| {
            (t..n)
                .map(|k| (gamma * lambda).powi((k - t) as i32) * delta[k])
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_terminal_step() {
        assert_eq!(compute_gae(&[3.0], &[1.25], 0.0, 0.99, 0.95), vec![1.75]);
    }

    #[test]
    fn lambda_zero_gives_td_errors() {
        let r = [1.0, -2.0, 0.5];
        let v = [0.3, 0.1, -0.4];
        let a = compute_gae(&r, &v, 2.0, 0.9, 0.0);
        let expected = [1.0 + 0.9 * 0.1 - 0.3, -2.0 + 0.9 * -0.4 - 0.1, 0.5 + 0.9 * 2.0 + 0.4];
        for (x, y) in a.iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn recursion_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = rng.random_range(1..=10);
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let tv = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-5.0..5.0) };
            let (g, l) = (rng.random_range(0.5..=1.0), rng.random_range(0.0..=1.0));
            let a = compute_gae(&r, &v, tv, g, l);
            let b = gae_double_sum(&r, &v, tv, g, l);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
    }
}
