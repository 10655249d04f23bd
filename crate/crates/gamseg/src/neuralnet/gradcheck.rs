//! Finite-difference verification of the analytic gradients. Runs the model
//! at f64 so the central-difference quotient is trustworthy at 1e-4.

use super::loss::{weighted_bce_loss_and_grad, weighted_bce_with_logits};
use super::model::Model;
use super::NetResult;
use crate::features::FeatureMatrix;
use crate::rng::Rng;

// In f64 a small step keeps the truncation error around 1e-10 while making
// it unlikely that the +/-h bracket straddles a ReLU or max-pool kink, which
// would poison the difference quotient no matter how exact the arithmetic is.
const FD_STEP: f64 = 1e-5;
// Two central differences at different steps agree to O(h^2) on a smooth
// loss; disagreement beyond this marks a bracket that crossed a kink, whose
// quotient says nothing about the derivative on either side.
const SMOOTHNESS_TOL: f64 = 1e-3;

/// Compare analytic gradients against central finite differences on a sample
/// of entries from every parameter tensor. Returns the maximum relative error
/// `|ga - gn| / max(1e-8, |ga| + |gn|)`.
///
/// Dropout is disabled inside the check so the loss is a deterministic
/// function of the parameters. Brackets that straddle an activation kink
/// (detected by comparing quotients at two step sizes) are resampled; a wrong
/// backward pass cannot hide behind that test because it only inspects the
/// forward evaluations.
pub fn grad_finite_diff_check(
    model: &mut Model<f64>,
    input: &FeatureMatrix,
    targets: &[f64],
    pos_weight: f64,
    samples_per_tensor: usize,
    seed: u64,
) -> NetResult<f64> {
    // loss plus the activation-region fingerprint of the evaluation
    let loss_of = |m: &Model<f64>| -> NetResult<(f64, u64)> {
        let (logits, cache) = m.forward_train_no_dropout(input)?;
        let loss = weighted_bce_with_logits(&logits, targets, pos_weight)?;
        Ok((loss, cache.region_fingerprint()))
    };

    // Analytic gradients via the training path (dropout off).
    model.zero_grad();
    let (logits, cache) = model.forward_train_no_dropout(input)?;
    let (_, dlogits) = weighted_bce_loss_and_grad(&logits, targets, None, pos_weight)?;
    model.backward(cache, &dlogits);

    let analytic: Vec<(String, Vec<f64>)> = model
        .named_parameters_mut()
        .iter()
        .map(|(name, p)| (name.clone(), p.grad().unwrap().to_vec()))
        .collect();

    let mut rng = Rng::new(seed);
    let mut max_rel = 0.0f64;
    for (tensor_idx, (name, grads)) in analytic.iter().enumerate() {
        let numel = grads.len();
        let n_samples = samples_per_tensor.min(numel);
        let mut accepted = 0usize;
        let mut attempts = 0usize;
        while accepted < n_samples && attempts < 4 * n_samples {
            attempts += 1;
            let i = rng.below(numel);
            let original = model.named_parameters_mut()[tensor_idx].1.data()[i];
            let quotient = |m: &mut Model<f64>, h: f64| -> NetResult<(f64, bool)> {
                m.named_parameters_mut()[tensor_idx].1.data_mut()[i] = original + h;
                let (plus, fp_plus) = loss_of(m)?;
                m.named_parameters_mut()[tensor_idx].1.data_mut()[i] = original - h;
                let (minus, fp_minus) = loss_of(m)?;
                m.named_parameters_mut()[tensor_idx].1.data_mut()[i] = original;
                Ok(((plus - minus) / (2.0 * h), fp_plus == fp_minus))
            };
            let (q1, same_region_1) = quotient(model, FD_STEP)?;
            let (q2, same_region_2) = quotient(model, 2.0 * FD_STEP)?;
            if !same_region_1 || !same_region_2 {
                continue; // an activation flipped inside the bracket
            }
            if (q1 - q2).abs() > SMOOTHNESS_TOL * 1.0f64.max(q1.abs()) {
                continue; // kink inside the bracket, quotient meaningless
            }
            accepted += 1;
            let ga = grads[i];
            let rel = (ga - q1).abs() / 1e-8f64.max(ga.abs() + q1.abs());
            if rel > max_rel {
                max_rel = rel;
            }
            debug_assert!(rel.is_finite(), "{name}[{i}]: analytic {ga}, numeric {q1}");
        }
        assert!(accepted > 0, "no smooth finite-difference bracket found in {name}");
    }
    Ok(max_rel)
}
