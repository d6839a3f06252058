//! Generalized advantage estimation.

use crate::{Error, Result};

/// Advantages and returns for one trajectory. `values` carries one more
/// entry than `rewards` (the bootstrap value after the last step).
///
/// `δ_t = r_t + γ V_{t+1} − V_t`, `A_t = Σ_k (γλ)^k δ_{t+k}`,
/// `returns_t = A_t + V_t`.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&gamma) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!(
            "need 0 <= gamma < 1 and 0 <= lambda <= 1, got {gamma}, {lambda}"
        )));
    }
    if values.len() != rewards.len() + 1 {
        return Err(Error::ShapeMismatch {
            context: "gae values",
            expected: rewards.len() + 1,
            actual: values.len(),
        });
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
