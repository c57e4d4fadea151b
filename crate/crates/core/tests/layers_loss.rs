use icosnet::layers::*;
use icosnet::network::*;
use icosnet::rng::{self, RngState};
use ndarray::{Array3, ArrayD, IxDyn};
use proptest::prelude::*;
use rand::RngCore;

fn array(dims: (usize, usize, usize), vals: &[f64]) -> Array3<f64> {
    Array3::from_shape_fn(dims, |(a, b, c)| vals[(a * 131 + b * 17 + c) % vals.len()])
}

/// Log-sum-exp cross-entropy written out directly.
fn ce_oracle(logits: &Array3<f64>, labels: &[usize], w: &[f64]) -> f64 {
    let (b, k, v) = logits.dim();
    let (mut num, mut den) = (0.0, 0.0);
    for bi in 0..b {
        for vi in 0..v {
            let y = labels[bi * v + vi];
            let lse = (0..k).map(|c| logits[[bi, c, vi]].exp()).sum::<f64>().ln();
            num += w[y] * (lse - logits[[bi, y, vi]]);
            den += w[y];
        }
    }
    num / den
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cross_entropy_matches_oracle(vals in proptest::collection::vec(-4.0f64..4.0, 8..40),
                                    labels in proptest::collection::vec(0usize..3, 6),
                                    w in proptest::collection::vec(0.1f64..3.0, 3)) {
        let logits = array((2, 3, 3), &vals);
        let cw = ClassWeights { weights: w.clone(), frequencies: None };
        let (loss, grad) = cross_entropy(logits.view(), &labels, &cw).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!((loss - ce_oracle(&logits, &labels, &w)).abs() < 1e-10);
        // softmax gradients sum to zero over classes at every position
        for b in 0..2 {
            for v in 0..3 {
                prop_assert!((0..3).map(|c| grad[[b, c, v]]).sum::<f64>().abs() < 1e-12);
            }
        }
        let shifted = logits.mapv(|t| t + 7.5);
        let (loss2, _) = cross_entropy(shifted.view(), &labels, &cw).unwrap();
        prop_assert!((loss - loss2).abs() < 1e-10);
    }

    #[test]
    fn class_weights_decrease_with_frequency(f1 in 0.37f64..0.9, df in 0.001f64..0.1) {
        let w = |f: f64| class_weights_from_frequencies(&[f], &[]).unwrap().weights[0];
        prop_assert!(w(f1) > w(f1 + df));
        prop_assert!(w(f1 + df) > 0.0);
    }

    #[test]
    fn batchnorm_training_statistics(vals in proptest::collection::vec(-10.0f64..10.0, 16..64), shift in -50.0f64..50.0) {
        prop_assume!({
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() > 1e-3
        });
        let x = array((3, 2, 7), &vals).mapv(|t| t + shift);
        let mut bn = BatchNorm::new(2);
        let mut r = rng::stream(0, rng::DROPOUT);
        let y = bn.forward(&x, &mut Ctx::train(&mut r)).unwrap();
        let g = array((3, 2, 7), &vals[1..]);
        let dx = bn.backward(&g).unwrap();
        for c in 0..2 {
            let yc = y.index_axis(ndarray::Axis(1), c);
            prop_assert!(yc.mean().unwrap().abs() < 1e-9);
            // the batch mean is removed, so input gradients sum to zero per channel
            prop_assert!(dx.index_axis(ndarray::Axis(1), c).sum().abs() < 1e-8);
        }
        // shifting the input leaves the normalised output unchanged
        let mut bn2 = BatchNorm::new(2);
        let y2 = bn2.forward(&x.mapv(|t| t + 3.0), &mut Ctx::train(&mut r)).unwrap();
        for (a, b) in y.iter().zip(y2.iter()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn spec_text_round_trips(width in 0.1f64..2.0, mask_bits in 1u8..16, seg in any::<bool>(), level in 2u32..6, gain in any::<bool>()) {
        let mask = KernelMask::new(mask_bits & 1 != 0, mask_bits & 2 != 0, mask_bits & 4 != 0, mask_bits & 8 != 0).unwrap();
        let base = if seg { ArchitectureSpec::climate() } else { ArchitectureSpec::mnist() };
        let init = if gain { InitScheme::OperatorGain } else { InitScheme::Uniform };
        let spec = ArchitectureSpec { width, mask, input_level: level, init, ..base };
        let back: ArchitectureSpec = spec.to_string().parse().unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn rng_state_resumes_the_stream(seed in any::<u64>(), skip in 0usize..100) {
        let mut a = rng::stream(seed, rng::SHUFFLE);
        for _ in 0..skip {
            a.next_u32();
        }
        let state = RngState::from_bytes(&RngState::capture(&a).to_bytes()).unwrap();
        let mut b = state.restore();
        for _ in 0..10 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn first_adam_step_moves_by_the_learning_rate(g in proptest::collection::vec(-5.0f64..5.0, 1..20), lr in 1e-4f64..1e-1) {
        // with zero moments, m̂ / √v̂ = sign(g) up to ε
        let mut p = Param::new(ArrayD::zeros(IxDyn(&[g.len()])));
        p.grad = ArrayD::from_shape_vec(IxDyn(&[g.len()]), g.clone()).unwrap();
        let mut adam = Adam::new(ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
        adam.step(&mut [&mut p], lr).unwrap();
        for (x, gi) in p.value.iter().zip(&g) {
            let expect = -lr * gi / (gi.abs() + ADAM_EPS);
            prop_assert!((x - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_is_stepwise(epoch in 0usize..100, period in 1usize..20) {
        let lr = lr_schedule(epoch, 1e-2, 0.5, period);
        prop_assert!((lr - 1e-2 * 0.5f64.powi((epoch / period) as i32)).abs() < 1e-15);
    }
}

#[test]
fn class_weight_examples() {
    let w = class_weights_from_frequencies(&[1.0], &[]).unwrap();
    assert!((w.weights[0] - 1.0 / 1.02).abs() < 1e-12);
    let w = class_weights_from_frequencies(&[(-1.0f64).exp()], &[]).unwrap();
    assert!((w.weights[0] - 50.0).abs() < 1e-9);
    let w = class_weights_from_frequencies(&[0.5, 0.0], &[1]).unwrap();
    assert_eq!(w.weights[1], 0.0);
    assert!(!w.is_active(1));
    assert!(class_weights_from_frequencies(&[0.1], &[]).is_err());
    assert!(class_weights_from_frequencies(&[0.0], &[]).is_err());
    assert!(class_weights_from_frequencies(&[0.9, 0.9], &[]).is_err());
}

#[test]
fn zero_weight_positions_are_ignored() {
    let logits = Array3::from_shape_fn((1, 2, 3), |(_, c, v)| (c * 3 + v) as f64 * 0.3);
    let cw = ClassWeights { weights: vec![1.0, 0.0], frequencies: None };
    let (loss, grad) = cross_entropy(logits.view(), &[0, 1, 0], &cw).unwrap();
    let (sub, _) = cross_entropy(
        logits.select(ndarray::Axis(2), &[0, 2]).view(),
        &[0, 0],
        &ClassWeights::uniform(2),
    )
    .unwrap();
    assert!((loss - sub).abs() < 1e-12);
    assert_eq!(grad[[0, 0, 1]], 0.0);
    assert_eq!(grad[[0, 1, 1]], 0.0);
    assert!(cross_entropy(logits.view(), &[0, 2, 0], &ClassWeights::uniform(2)).is_err());
}

#[test]
fn relu_propagates_nan() {
    let x = Array3::from_shape_vec((1, 1, 3), vec![f64::NAN, -1.0, 2.0]).unwrap();
    let y = Relu::new().forward(&x, &mut Ctx::eval()).unwrap();
    assert!(y[[0, 0, 0]].is_nan());
    assert_eq!((y[[0, 0, 1]], y[[0, 0, 2]]), (0.0, 2.0));
}

#[test]
fn layer_gradients_pass_the_checker() {
    let results = icosnet::gradcheck::run_suite(&icosnet::gradcheck::GradCheckOptions::default()).unwrap();
    assert!(results.len() >= 12);
    for r in &results {
        assert!(r.passed(), "{}", r.line());
    }
}
