use super::{LearnerConfig, LearnerState, Params};
use crate::error::{Error, Result};

/// One bias-corrected Adam update over every parameter block.
pub fn adam_step(state: &mut LearnerState, grads: &Params, config: &LearnerConfig) -> Result<()> {
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    state.adam_t += 1;
    let t = state.adam_t as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.adam_epsilon;

    let blocks = state
        .params
        .slices_mut()
        .zip(state.adam_m.slices_mut())
        .zip(state.adam_v.slices_mut())
        .zip(grads.slices());
    for (((theta, m), v), g) in blocks {
        for i in 0..theta.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    state.step += 1;
    if !state.params.all_finite() {
        return Err(Error::Diverged { step: state.step });
    }
    Ok(())
}
