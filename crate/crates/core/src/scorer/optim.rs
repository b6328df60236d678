/// Adaptive-moment constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// One bias-corrected adaptive-moment update. `step` is the 1-based index of this update.
pub fn adam_update(params: &mut [f64], m: &mut [f64], v: &mut [f64], grad: &[f64], step: u64, hp: &AdamParams) {
    debug_assert!(step >= 1);
    debug_assert!(params.len() == grad.len() && m.len() == grad.len() && v.len() == grad.len());
    let t = step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
    }
}
