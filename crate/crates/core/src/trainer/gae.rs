/// Generalized advantage estimation over a `[T][N]` rollout.
///
/// `dones[t][e]` marks that the transition at `t` ended the episode, so no
/// value is bootstrapped across it. `last_values` are `V(s_T)`. Returns
/// `(advantages, returns)` with `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[Vec<f64>],
    values: &[Vec<f64>],
    dones: &[Vec<bool>],
    last_values: &[f64],
    gamma: f64,
    lambda: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let t_len = rewards.len();
    let n = last_values.len();
    let mut adv = vec![vec![0.0; n]; t_len];
    let mut ret = vec![vec![0.0; n]; t_len];
    for e in 0..n {
        let mut running = 0.0;
        for t in (0..t_len).rev() {
            let not_done = if dones[t][e] { 0.0 } else { 1.0 };
            let next_v = if t + 1 < t_len { values[t + 1][e] } else { last_values[e] };
            let delta = rewards[t][e] + gamma * next_v * not_done - values[t][e];
            running = delta + gamma * lambda * not_done * running;
            adv[t][e] = running;
            ret[t][e] = running + values[t][e];
        }
    }
    (adv, ret)
}

/// Shifts and scales to mean 0, std 1 (population std). Constant input maps to zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 1e-12 { (*a - mean) / std } else { 0.0 };
    }
}
