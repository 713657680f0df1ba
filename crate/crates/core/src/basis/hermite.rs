//! Orthonormal Hermite functions via the three-term recurrence.

use std::f64::consts::PI;

/// Fills `out[k]` with the L²(ℝ)-orthonormal Hermite function
/// `h_k(t) = (2^k k! √π)^{-1/2} e^{-t²/2} H_k(t)` for `k = 0..out.len()`.
///
/// The normalized recurrence never forms `H_k` or `2^k k!` explicitly, so it
/// stays finite for large orders.
pub fn hermite_functions(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let h0 = PI.powf(-0.25) * (-0.5 * t * t).exp();
    out[0] = h0;
    if out.len() == 1 {
        return;
    }
    out[1] = std::f64::consts::SQRT_2 * t * h0;
    for k in 1..out.len() - 1 {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * t * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
}

/// Physicists' Hermite polynomial by the unnormalized recurrence. Only
/// suitable for small orders; used for the closed-form normalization check.
pub fn hermite_polynomial(k: usize, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * t);
    if k == 0 {
        return prev;
    }
    for n in 1..k {
        let next = 2.0 * t * cur - 2.0 * n as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}
