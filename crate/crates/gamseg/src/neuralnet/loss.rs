//! Binary cross-entropy on logits with a positive-class weight, computed in
//! the log-sum-exp form so saturated logits stay finite.

use super::tensor::{sigmoid, softplus, Scalar};
use super::{NetError, NetResult};

/// Mean weighted BCE over all frames:
/// `-(w*y*log sigma(x) + (1-y)*log(1 - sigma(x)))`.
pub fn weighted_bce_with_logits<F: Scalar>(
    logits: &[F],
    targets: &[F],
    pos_weight: F,
) -> NetResult<F> {
    if logits.len() != targets.len() {
        return Err(NetError::LengthMismatch { logits: logits.len(), targets: targets.len() });
    }
    let (loss, _count) = masked_sum(logits, targets, None, pos_weight);
    Ok(loss / F::from_f64(logits.len() as f64))
}

/// Loss and dL/dlogits in one pass, averaging over unmasked frames only.
/// `mask[i] == false` frames (padding) contribute nothing.
pub fn weighted_bce_loss_and_grad<F: Scalar>(
    logits: &[F],
    targets: &[F],
    mask: Option<&[bool]>,
    pos_weight: F,
) -> NetResult<(F, Vec<F>)> {
    if logits.len() != targets.len() {
        return Err(NetError::LengthMismatch { logits: logits.len(), targets: targets.len() });
    }
    if let Some(m) = mask {
        assert_eq!(m.len(), logits.len(), "mask length mismatch");
    }
    let (sum, count) = masked_sum(logits, targets, mask, pos_weight);
    if count == 0 {
        return Ok((F::ZERO, vec![F::ZERO; logits.len()]));
    }
    let inv_n = F::ONE / F::from_f64(count as f64);
    let mut grad = vec![F::ZERO; logits.len()];
    for i in 0..logits.len() {
        if mask.map(|m| m[i]).unwrap_or(true) {
            let (x, y) = (logits[i], targets[i]);
            let s = sigmoid(x);
            // d/dx of the per-frame term
            grad[i] = ((F::ONE - y) * s - pos_weight * y * (F::ONE - s)) * inv_n;
        }
    }
    Ok((sum * inv_n, grad))
}

fn masked_sum<F: Scalar>(
    logits: &[F],
    targets: &[F],
    mask: Option<&[bool]>,
    pos_weight: F,
) -> (F, usize) {
    let mut sum = F::ZERO;
    let mut count = 0usize;
    for i in 0..logits.len() {
        if mask.map(|m| m[i]).unwrap_or(true) {
            let (x, y) = (logits[i], targets[i]);
            // -log sigma(x) = softplus(-x); -log(1-sigma(x)) = x + softplus(-x)
            sum += pos_weight * y * softplus(-x) + (F::ONE - y) * (x + softplus(-x));
            count += 1;
        }
    }
    (sum, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn closed_form_values() {
        // x=0, y=1, w=100 -> 100 ln 2
        let loss = weighted_bce_with_logits(&[0.0f64], &[1.0], 100.0).unwrap();
        assert!((loss - 100.0 * std::f64::consts::LN_2).abs() < 1e-9);
        // x=0, y=0 -> ln 2 regardless of w
        let loss = weighted_bce_with_logits(&[0.0f64], &[0.0], 100.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        // saturated correct prediction
        let loss = weighted_bce_with_logits(&[50.0f64], &[1.0], 1.0).unwrap();
        assert!(loss < 1e-8);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(
            weighted_bce_with_logits(&[0.0f32, 1.0], &[1.0], 1.0),
            Err(NetError::LengthMismatch { .. })
        ));
    }

    /// With w=1 the weighted form collapses to plain BCE (naive reference).
    #[test]
    fn pos_weight_one_is_plain_bce() {
        let mut rng = Rng::new(40);
        for _ in 0..100 {
            let n = 1 + rng.below(32);
            let logits: Vec<f64> = (0..n).map(|_| rng.uniform(-10.0, 10.0) as f64).collect();
            let targets: Vec<f64> = (0..n).map(|_| (rng.below(2)) as f64).collect();
            let ours = weighted_bce_with_logits(&logits, &targets, 1.0).unwrap();
            let naive: f64 = logits
                .iter()
                .zip(&targets)
                .map(|(&x, &y)| {
                    let s = 1.0 / (1.0 + (-x).exp());
                    -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
                })
                .sum::<f64>()
                / n as f64;
            assert!((ours - naive).abs() < 1e-12, "ours {ours} vs naive {naive}");
        }
    }

    /// Loss is monotone in the logit: decreasing for y=1, increasing for y=0.
    #[test]
    fn monotone_in_logit() {
        let xs: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.25).collect();
        let mut prev_pos = f64::INFINITY;
        let mut prev_neg = f64::NEG_INFINITY;
        for &x in &xs {
            let lp = weighted_bce_with_logits(&[x], &[1.0], 3.0).unwrap();
            let ln_ = weighted_bce_with_logits(&[x], &[0.0], 3.0).unwrap();
            assert!(lp < prev_pos, "y=1 loss not decreasing at x={x}");
            assert!(ln_ > prev_neg, "y=0 loss not increasing at x={x}");
            prev_pos = lp;
            prev_neg = ln_;
        }
    }

    #[test]
    fn masked_padding_leaves_loss_unchanged() {
        let logits = vec![0.3f32, -1.0, 2.0, 0.0];
        let targets = vec![1.0f32, 0.0, 1.0, 0.0];
        let (base, _) =
            weighted_bce_loss_and_grad(&logits, &targets, None, 100.0).unwrap();
        let mut padded_logits = logits.clone();
        padded_logits.extend([5.0, -7.0, 0.1]);
        let mut padded_targets = targets.clone();
        padded_targets.extend([0.0, 1.0, 0.0]);
        let mask = vec![true, true, true, true, false, false, false];
        let (masked, grad) =
            weighted_bce_loss_and_grad(&padded_logits, &padded_targets, Some(&mask), 100.0)
                .unwrap();
        assert!((base - masked).abs() < 1e-6);
        assert!(grad[4] == 0.0 && grad[5] == 0.0 && grad[6] == 0.0);
    }

    /// Gradient matches central finite differences of the loss.
    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = Rng::new(17);
        let n = 24;
        let logits: Vec<f64> = (0..n).map(|_| rng.uniform(-4.0, 4.0) as f64).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
        let (_, grad) = weighted_bce_loss_and_grad(&logits, &targets, None, 7.5).unwrap();
        let h = 1e-6;
        for i in 0..n {
            let mut plus = logits.clone();
            plus[i] += h;
            let mut minus = logits.clone();
            minus[i] -= h;
            let lp = weighted_bce_with_logits(&plus, &targets, 7.5).unwrap();
            let lm = weighted_bce_with_logits(&minus, &targets, 7.5).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8, "frame {i}: fd {fd} vs analytic {}", grad[i]);
        }
    }
}
