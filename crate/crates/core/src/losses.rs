//! Supervision losses over line maps and parameter vectors, the curvature
//! constraint, and the global/local head combination rule. All pure
//! functions, checkable against finite differences.

use crate::calib::DOMAIN_EXIT_PENALTY_PX;
use crate::camera::{FisheyeParams, VirtualPinhole};
use crate::error::{Error, Result};
use crate::raster::LineMap;
use crate::rectify::rectify_point;

/// Per-component rescaling weights and term weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Component weights over `(k1..k5, m_u, m_v, u0, v0)`.
    pub w: [f64; 9],
    pub lambda_g: f64,
    pub lambda_loc: f64,
    pub lambda_c: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w: [0.1, 0.1, 0.5, 1.0, 1.0, 0.1, 0.1, 0.1, 0.1],
            lambda_g: 1.0,
            lambda_loc: 1.0,
            lambda_c: 50.0,
        }
    }
}

/// Predicted parameter heads: one global 9-vector and five local 5-vectors
/// (central region plus four corners), the local heads carrying `k1..k5` only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamHeads {
    pub global: [f64; 9],
    pub local: [[f64; 5]; 5],
}

impl ParamHeads {
    /// All heads agreeing with one parameter vector.
    pub fn consensus(v: &[f64; 9]) -> Self {
        let head5 = [v[0], v[1], v[2], v[3], v[4]];
        Self {
            global: *v,
            local: [head5; 5],
        }
    }
}

/// Class-weighted squared-error loss between two line maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMapLoss {
    pub value: f64,
    /// Pixels of the reference map holding a positive value.
    pub positives: usize,
    pub negatives: usize,
}

impl LineMapLoss {
    /// True when the reference map had no positive pixels, which nullifies
    /// the loss regardless of the prediction.
    pub fn degenerate(&self) -> bool {
        self.positives == 0
    }
}

/// Class-balanced squared error: positive pixels (where the reference map
/// `h_hat` is nonzero) are weighted by the negative-class share and vice
/// versa.
pub fn line_map_loss(h: &LineMap, h_hat: &LineMap) -> Result<LineMapLoss> {
    if (h.width, h.height) != (h_hat.width, h_hat.height) {
        return Err(Error::SizeMismatch {
            expected: format!("{}x{}", h_hat.width, h_hat.height),
            actual: format!("{}x{}", h.width, h.height),
        });
    }
    let total = h.data.len();
    let mut positives = 0usize;
    let mut sum_pos = 0.0f64;
    let mut sum_neg = 0.0f64;
    for i in 0..total {
        let d = h.data[i] as f64 - h_hat.data[i] as f64;
        let d2 = d * d;
        if h_hat.data[i] > 0.0 {
            positives += 1;
            sum_pos += d2;
        } else {
            sum_neg += d2;
        }
    }
    let negatives = total - positives;
    let n = total as f64;
    Ok(LineMapLoss {
        value: (negatives as f64 / n) * sum_pos + (positives as f64 / n) * sum_neg,
        positives,
        negatives,
    })
}

/// Weighted mean squared error over the full nine-component vector.
pub fn global_param_loss(k_g: &[f64; 9], k_gt: &[f64; 9], w: &[f64; 9]) -> f64 {
    let mut sum = 0.0;
    for i in 0..9 {
        let d = k_g[i] - k_gt[i];
        sum += w[i] * d * d;
    }
    sum / 9.0
}

/// Weighted mean squared error over the first five components of one
/// local head.
pub fn local_param_loss(k_loc: &[f64; 5], k_gt: &[f64; 5], w: &[f64; 5]) -> f64 {
    let mut sum = 0.0;
    for i in 0..5 {
        let d = k_loc[i] - k_gt[i];
        sum += w[i] * d * d;
    }
    sum / 5.0
}

/// Mean squared rectified-position deviation over the distorted-line pixel
/// set. Points leaving either valid domain contribute the calibrator's
/// squared exit penalty.
pub fn curvature_loss(
    k_d: &FisheyeParams,
    k_gt: &FisheyeParams,
    omega_plus: &[(f64, f64)],
    pinhole: &VirtualPinhole,
) -> Result<f64> {
    if !k_d.is_monotonic() || !k_gt.is_monotonic() {
        return Err(Error::NonMonotonicProfile);
    }
    if omega_plus.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let mut sum = 0.0;
    for &(u, v) in omega_plus {
        match (
            rectify_point(u, v, k_d, pinhole),
            rectify_point(u, v, k_gt, pinhole),
        ) {
            (Ok(a), Ok(b)) => sum += (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2),
            _ => sum += DOMAIN_EXIT_PENALTY_PX * DOMAIN_EXIT_PENALTY_PX,
        }
    }
    Ok(sum / omega_plus.len() as f64)
}

/// Average the heads into one parameter set: each of `k1..k5` is the mean
/// of the global entry and the five local entries; the global head alone
/// supplies `m_u, m_v, u0, v0`.
pub fn combine_params(heads: &ParamHeads, theta_max: f64) -> FisheyeParams {
    let mut v = heads.global;
    for i in 0..5 {
        let mut sum = heads.global[i];
        for local in &heads.local {
            sum += local[i];
        }
        v[i] = sum / 6.0;
    }
    FisheyeParams::from_vector(&v, theta_max)
}

/// Weighted sum of all terms plus the per-term breakdown. The curvature
/// term is evaluated at the combined head parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub global_term: f64,
    pub local_terms: [f64; 5],
    pub curvature_term: f64,
}

pub fn total_loss(
    heads: &ParamHeads,
    k_gt: &FisheyeParams,
    omega_plus: &[(f64, f64)],
    pinhole: &VirtualPinhole,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let gt = k_gt.as_vector();
    let gt5 = [gt[0], gt[1], gt[2], gt[3], gt[4]];
    let w5 = [
        weights.w[0],
        weights.w[1],
        weights.w[2],
        weights.w[3],
        weights.w[4],
    ];
    let global_term = global_param_loss(&heads.global, &gt, &weights.w);
    let mut local_terms = [0.0; 5];
    for (term, head) in local_terms.iter_mut().zip(&heads.local) {
        *term = local_param_loss(head, &gt5, &w5);
    }
    let combined = combine_params(heads, k_gt.theta_max);
    let curvature_term = curvature_loss(&combined, k_gt, omega_plus, pinhole)?;
    let total = weights.lambda_g * global_term
        + weights.lambda_loc * local_terms.iter().sum::<f64>()
        + weights.lambda_c * curvature_term;
    Ok(LossBreakdown {
        total,
        global_term,
        local_terms,
        curvature_term,
    })
}

/// Central-difference gradient of a scalar function.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = f(&probe);
        probe[i] = x[i] - step;
        let minus = f(&probe);
        probe[i] = x[i];
        grad.push((plus - minus) / (2.0 * step));
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::{evaluate_rpe, valid_pixel_domain};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn map_from(values: &[f32], width: usize) -> LineMap {
        LineMap {
            width,
            height: values.len() / width,
            data: values.to_vec(),
        }
    }

    #[test]
    fn line_map_loss_zero_when_equal_and_degenerate_when_empty() {
        let h = map_from(&[5.0, 0.0, 0.0, 0.0], 4);
        assert_eq!(line_map_loss(&h, &h).unwrap().value, 0.0);

        let empty = map_from(&[0.0; 4], 4);
        let pred = map_from(&[1.0, 2.0, 3.0, 4.0], 4);
        let loss = line_map_loss(&pred, &empty).unwrap();
        assert_eq!(loss.value, 0.0);
        assert!(loss.degenerate());
    }

    #[test]
    fn line_map_loss_hand_example() {
        let h_hat = map_from(&[5.0, 0.0, 0.0, 0.0], 4);
        let h = map_from(&[5.0, 1.0, 0.0, 0.0], 4);
        let loss = line_map_loss(&h, &h_hat).unwrap();
        assert!((loss.value - 0.25).abs() < 1e-12);
        assert_eq!((loss.positives, loss.negatives), (1, 3));
    }

    #[test]
    fn line_map_loss_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let (w, h) = (rng.random_range(2..=16), rng.random_range(2..=16));
            let n = w * h;
            let h_hat = LineMap {
                width: w,
                height: h,
                data: (0..n)
                    .map(|_| if rng.random_bool(0.2) { rng.random_range(1.0..50.0) } else { 0.0 })
                    .collect(),
            };
            let pred = LineMap {
                width: w,
                height: h,
                data: (0..n).map(|_| rng.random_range(0.0..50.0)).collect(),
            };
            let got = line_map_loss(&pred, &h_hat).unwrap().value;

            let mut pos = Vec::new();
            let mut neg = Vec::new();
            for i in 0..n {
                if h_hat.data[i] > 0.0 {
                    pos.push(i);
                } else {
                    neg.push(i);
                }
            }
            let d2 = |i: usize| (pred.data[i] as f64 - h_hat.data[i] as f64).powi(2);
            let want = (neg.len() as f64 / n as f64) * pos.iter().map(|&i| d2(i)).sum::<f64>()
                + (pos.len() as f64 / n as f64) * neg.iter().map(|&i| d2(i)).sum::<f64>();
            assert!((got - want).abs() <= 1e-9 * want.max(1.0));
        }
    }

    #[test]
    fn line_map_loss_rejects_size_mismatch() {
        let a = map_from(&[0.0; 4], 2);
        let b = map_from(&[0.0; 6], 2);
        assert!(matches!(line_map_loss(&a, &b), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn global_loss_cases() {
        let gt = [1.0, 0.1, 0.01, 0.0, 0.0, 110.0, 108.0, 160.0, 161.0];
        assert_eq!(global_param_loss(&gt, &gt, &LossWeights::default().w), 0.0);

        let mut shifted = gt;
        shifted[0] += 1.0;
        let unit_w = [1.0; 9];
        assert!((global_param_loss(&shifted, &gt, &unit_w) - 1.0 / 9.0).abs() < 1e-15);

        let mut all5 = gt;
        for slot in all5.iter_mut().take(5) {
            *slot += 1.0;
        }
        let loss = global_param_loss(&all5, &gt, &LossWeights::default().w);
        assert!((loss - 0.3).abs() < 1e-15, "paper-weight arithmetic: {loss}");
    }

    #[test]
    fn local_loss_cases() {
        let gt = [1.0, 0.1, 0.01, 0.001, 0.0];
        let w5 = [0.1, 0.1, 0.5, 1.0, 1.0];
        assert_eq!(local_param_loss(&gt, &gt, &w5), 0.0);
        let mut e3 = gt;
        e3[2] += 1.0;
        assert!((local_param_loss(&e3, &gt, &w5) - 0.1).abs() < 1e-15);

        // Five regions with identical deltas sum to five times one region.
        let heads = ParamHeads {
            global: [1.0, 0.1, 0.01, 0.001, 0.0, 110.0, 110.0, 160.0, 160.0],
            local: [e3; 5],
        };
        let single = local_param_loss(&e3, &gt, &w5);
        let sum: f64 = heads
            .local
            .iter()
            .map(|head| local_param_loss(head, &gt, &w5))
            .sum();
        assert!((sum - 5.0 * single).abs() < 1e-15);
    }

    fn scene() -> (FisheyeParams, VirtualPinhole, Vec<(f64, f64)>) {
        let config = crate::synth::SamplerConfig::default();
        let truth = crate::synth::sample_params(3, &config).unwrap();
        let pinhole = config.source_pinhole();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let segments = crate::synth::random_segments(&mut rng, 320, 320, 8, 100.0);
        let (polylines, _) =
            crate::synth::distort_segments(&segments, &truth, &pinhole, (320, 320)).unwrap();
        let map = crate::synth::render_polyline_map(&polylines, (320, 320));
        let mut omega = Vec::new();
        for y in 0..320 {
            for x in 0..320 {
                if map.at(x, y) > 0.0 {
                    omega.push((x as f64, y as f64));
                }
            }
        }
        (truth, pinhole, omega)
    }

    #[test]
    fn curvature_loss_zero_at_truth_and_matches_rpe() {
        let (truth, pinhole, omega) = scene();
        assert_eq!(curvature_loss(&truth, &truth, &omega, &pinhole).unwrap(), 0.0);

        let mut nearby = truth;
        nearby.u0 += 0.4;
        nearby.k[1] *= 1.02;
        let loss = curvature_loss(&nearby, &truth, &omega, &pinhole).unwrap();
        let rpe = evaluate_rpe(&nearby, &truth, &omega, &pinhole).unwrap();
        if rpe.skipped == 0 {
            assert!((loss - rpe.mse).abs() < 1e-12);
        }
        assert!(matches!(
            curvature_loss(&truth, &truth, &[], &pinhole),
            Err(Error::EmptyDomain)
        ));
    }

    #[test]
    fn curvature_loss_monotone_in_center_shift() {
        let (truth, pinhole, omega) = scene();
        let mut last = 0.0;
        for delta in [0.5, 1.0, 2.0] {
            let shifted = FisheyeParams {
                u0: truth.u0 + delta,
                ..truth
            };
            let loss = curvature_loss(&shifted, &truth, &omega, &pinhole).unwrap();
            assert!(loss > last, "loss {loss} at delta {delta} not above {last}");
            last = loss;
        }
    }

    #[test]
    fn combine_params_rules() {
        let v = [1.0, 0.2, 0.03, 0.004, 0.0005, 110.0, 108.0, 159.0, 161.0];
        let consensus = ParamHeads::consensus(&v);
        let idempotent = combine_params(&consensus, 1.35).as_vector();
        for (got, want) in idempotent.iter().zip(&v) {
            assert!((got - want).abs() <= 1e-15 * want.abs().max(1.0));
        }

        let mut heads = consensus;
        heads.global[0] = 1.0;
        for local in heads.local.iter_mut() {
            local[0] = 7.0;
        }
        let combined = combine_params(&heads, 1.35);
        assert!((combined.k[0] - 6.0).abs() < 1e-15);
        // Local heads cannot move the global-only components.
        assert_eq!(combined.mu, 110.0);
        assert_eq!(combined.u0, 159.0);
    }

    #[test]
    fn total_loss_breakdown_and_dominance() {
        let (truth, pinhole, omega) = scene();
        let weights = LossWeights::default();
        let consensus = ParamHeads::consensus(&truth.as_vector());
        let at_truth = total_loss(&consensus, &truth, &omega, &pinhole, &weights).unwrap();
        // The consensus mean reconstructs each k only to rounding, so the
        // curvature term is zero only to rounding too.
        assert!(at_truth.total < 1e-15, "at truth: {at_truth:?}");

        // Shift the principal point enough for a >= 0.1 px map-level error.
        let mut heads = consensus;
        heads.global[7] += 0.5;
        let off = total_loss(&heads, &truth, &omega, &pinhole, &weights).unwrap();
        let reconstructed = weights.lambda_g * off.global_term
            + weights.lambda_loc * off.local_terms.iter().sum::<f64>()
            + weights.lambda_c * off.curvature_term;
        assert!((off.total - reconstructed).abs() < 1e-12);
        assert!(
            weights.lambda_c * off.curvature_term > weights.lambda_g * off.global_term,
            "curvature term should dominate: {off:?}"
        );
        assert!(
            weights.lambda_c * off.curvature_term
                > weights.lambda_loc * off.local_terms.iter().sum::<f64>()
        );

        // Affine in each term: doubling one weight adds exactly that term again.
        let mut heavier = weights;
        heavier.lambda_c *= 2.0;
        let doubled = total_loss(&heads, &truth, &omega, &pinhole, &heavier).unwrap();
        assert!((doubled.total - off.total - weights.lambda_c * off.curvature_term).abs() < 1e-9);
    }

    #[test]
    fn finite_diff_grad_on_quadratic() {
        let grad = finite_diff_grad(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-6);
        assert!((grad[0] - 2.0).abs() < 1e-6);
        assert!((grad[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn global_loss_gradient_matches_analytic() {
        let gt = [1.0, 0.1, 0.01, 0.0, 0.0, 110.0, 108.0, 160.0, 161.0];
        let w = LossWeights::default().w;
        let x0: Vec<f64> = gt.iter().map(|v| v + 0.3).collect();
        let grad = finite_diff_grad(
            |x| {
                let mut k = [0.0; 9];
                k.copy_from_slice(x);
                global_param_loss(&k, &gt, &w)
            },
            &x0,
            1e-6,
        );
        for i in 0..9 {
            let analytic = 2.0 * w[i] * (x0[i] - gt[i]) / 9.0;
            assert!(
                ((grad[i] - analytic) / analytic.abs().max(1e-12)).abs() < 1e-6,
                "component {i}: {} vs {analytic}",
                grad[i]
            );
        }
    }

    #[test]
    fn curvature_gradient_continuous_through_truth() {
        let (truth, pinhole, omega) = scene();
        // Thin the domain to keep the finite differencing cheap.
        let omega: Vec<_> = omega.into_iter().step_by(13).collect();
        let loss_at = |du0: f64| {
            let moved = FisheyeParams {
                u0: truth.u0 + du0,
                ..truth
            };
            curvature_loss(&moved, &truth, &omega, &pinhole).unwrap()
        };
        let h = 1e-4;
        let grad_plus = (loss_at(2.0 * h) - loss_at(0.0)) / (2.0 * h);
        let grad_minus = (loss_at(0.0) - loss_at(-2.0 * h)) / (2.0 * h);
        assert!(
            (grad_plus + grad_minus).abs() < 1e-4,
            "one-sided slopes {grad_plus} / {grad_minus} disagree through zero"
        );
    }

    #[test]
    fn losses_nonnegative_and_zero_only_at_truth() {
        let (truth, pinhole, omega) = scene();
        let weights = LossWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..10 {
            let mut heads = ParamHeads::consensus(&truth.as_vector());
            heads.global[rng.random_range(0..9)] += rng.random_range(-0.05..0.05);
            let breakdown = total_loss(&heads, &truth, &omega, &pinhole, &weights).unwrap();
            assert!(breakdown.total >= 0.0);
            assert!(breakdown.global_term >= 0.0);
            assert!(breakdown.curvature_term >= 0.0);
        }
        let domain = valid_pixel_domain(&[&truth], 320, 320);
        assert!(evaluate_rpe(&truth, &truth, &domain, &pinhole).unwrap().mse == 0.0);
    }
}
