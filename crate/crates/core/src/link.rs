//! Logistic helpers and the two ways of turning binary log-odds into a
//! category distribution.

/// Logistic distribution function, evaluated without overflow.
#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Category probabilities from cumulative logits `eta_r = logit P(Y >= r)`,
/// `r = 2..=k`, which must be strictly decreasing.
///
/// Interior cells use `F(a) - F(b) = F(a) F(-b) (1 - e^{b-a})` to avoid
/// cancellation.
pub fn cumulative_logits_to_probs(etas: &[f64]) -> Vec<f64> {
    let k = etas.len() + 1;
    let mut probs = Vec::with_capacity(k);
    probs.push(logistic(-etas[0]));
    for w in etas.windows(2) {
        probs.push(logistic(w[0]) * logistic(-w[1]) * -(w[1] - w[0]).exp_m1());
    }
    probs.push(logistic(etas[k - 2]));
    normalize(&mut probs);
    probs
}

/// Adjacent-categories combination: given conditional log-odds
/// `l_r = log P(Y=r | Y in {r-1,r}) / P(Y=r-1 | Y in {r-1,r})` for
/// `r = 2..=k`, returns `P(Y=r) ∝ exp(l_2 + ... + l_r)` (empty sum for `r=1`).
///
/// Any finite inputs give a valid distribution; the largest exponent is
/// subtracted before exponentiating.
pub fn adjacent_logits_to_probs(logits: &[f64]) -> Vec<f64> {
    let mut scores = Vec::with_capacity(logits.len() + 1);
    scores.push(0.0);
    let mut acc = 0.0;
    for &l in logits {
        acc += l;
        scores.push(acc);
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    normalize(&mut probs);
    probs
}

/// Scales to unit sum in place.
pub fn normalize(probs: &mut [f64]) {
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_is_stable_in_the_tails() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(800.0) == 1.0 && logistic(-800.0) == 0.0);
        assert!((logistic(2.0) + logistic(-2.0) - 1.0).abs() <= f64::EPSILON);
        assert!((logit(logistic(1.3)) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn adjacent_examples() {
        let p = adjacent_logits_to_probs(&[2f64.ln(), 3f64.ln()]);
        for (a, b) in p.iter().zip([1.0 / 9.0, 2.0 / 9.0, 6.0 / 9.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let u = adjacent_logits_to_probs(&[0.0, 0.0]);
        assert!(u.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let extreme = adjacent_logits_to_probs(&[800.0, 900.0, -5000.0]);
        assert!(extreme.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn cumulative_cells_match_differences() {
        let etas = [1.5, 0.2, -0.7];
        let p = cumulative_logits_to_probs(&etas);
        let cum: Vec<f64> = [1.0].into_iter().chain(etas.iter().map(|&e| logistic(e))).chain([0.0]).collect();
        for r in 0..4 {
            assert!((p[r] - (cum[r] - cum[r + 1])).abs() < 1e-14);
        }
    }
}
