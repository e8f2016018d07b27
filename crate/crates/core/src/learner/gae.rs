use super::Transition;

/// Advantages and returns of one contiguous per-environment sequence. A transition that
/// ends an episode either terminates (`done`, no future value) or is cut (`cut`, the
/// recorded bootstrap value stands in for the future).
pub fn compute_gae(steps: &[Transition], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = steps.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let s = &steps[t];
        let ends = s.done || s.cut || t + 1 == n;
        let next_value = if s.done {
            0.0
        } else if s.cut || t + 1 == n {
            s.bootstrap
        } else {
            steps[t + 1].value
        };
        let delta = s.reward + gamma * next_value - s.value;
        let carry = if ends { 0.0 } else { next_adv };
        adv[t] = delta + gamma * lambda * carry;
        next_adv = adv[t];
    }
    let ret = adv.iter().zip(steps).map(|(a, s)| a + s.value).collect();
    (adv, ret)
}
