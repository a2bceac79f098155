//! Finite-difference checks of the hand-written backward pass.

mod support;

use l2d_core::data_model::SEMANTIC_FEATURES;
use l2d_core::fusion::{BackboneKind, FusionConfig, FusionModel, SkipSource};
use l2d_core::nn::Mode;
use l2d_core::trainer::joint_loss_grad;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::gradcheck::{check, random_batch, tiny};

#[test]
fn desk_model_with_semantic_skip() {
    let kind = BackboneKind::DeskCnn { channels: vec![2, 3] };
    check(tiny(kind, (4, 4), true, SkipSource::SemanticEncoding), usize::MAX);
}

#[test]
fn desk_model_with_backbone_skip() {
    let kind = BackboneKind::DeskCnn { channels: vec![2] };
    check(tiny(kind, (4, 4), true, SkipSource::BackboneFeatures), usize::MAX);
}

#[test]
fn image_only_model() {
    let kind = BackboneKind::DeskCnn { channels: vec![2] };
    check(tiny(kind, (4, 4), false, SkipSource::BackboneFeatures), usize::MAX);
}

#[test]
fn tiny_basic_residual_model() {
    let kind = BackboneKind::Residual {
        blocks: vec![1, 1, 1, 1],
        base_width: 2,
        bottleneck: false,
    };
    check(tiny(kind, (16, 16), true, SkipSource::SemanticEncoding), 6);
}

#[test]
fn tiny_bottleneck_residual_model() {
    let kind = BackboneKind::Residual {
        blocks: vec![1, 2, 1, 1],
        base_width: 2,
        bottleneck: true,
    };
    check(tiny(kind, (16, 16), true, SkipSource::SemanticEncoding), 6);
}

/// Units whose ReLU is closed for every sample pass no gradient, and at
/// default initialization the deep heads see strongly correlated inputs,
/// so the batch has to be large for nearly every unit to open once.
#[test]
fn gradient_reaches_almost_every_parameter() {
    let config = FusionConfig::desk((64, 36), SEMANTIC_FEATURES);
    let model = FusionModel::new(config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let nb = 4096;
    let mut batch = random_batch(&mut rng, nb, 64, 36, SEMANTIC_FEATURES);
    for b in 0..nb {
        for c in 0..3 {
            let off: f64 = rng.random_range(-2.0..2.0);
            let sc: f64 = rng.random_range(0.0..4.0);
            batch.previous.slice_mut(ndarray::s![b, c, .., ..]).mapv_inplace(|v| sc * v + off);
            batch.current.slice_mut(ndarray::s![b, c, .., ..]).mapv_inplace(|v| sc * v + off);
        }
    }
    let target = Array2::from_shape_simple_fn((nb, 2), || rng.random_range(-1.0..1.0));
    let mut drng = ChaCha8Rng::seed_from_u64(10);
    let (pred, cache) = model.forward_batch(&batch, Mode::Train(&mut drng)).unwrap();
    let mut grads = model.params.zeros_like();
    model.backward(&cache, &joint_loss_grad(&pred, &target), &mut grads);
    let total: usize = grads.data.iter().map(Vec::len).sum();
    let nonzero: usize = grads.data.iter().flatten().filter(|g| **g != 0.0).count();
    let frac = nonzero as f64 / total as f64;
    for (p, g) in model.params.iter().zip(&grads.data) {
        assert!(g.iter().all(|v| v.is_finite()), "{} has a non-finite gradient", p.name);
        assert!(g.iter().any(|v| *v != 0.0), "{} received no gradient", p.name);
    }
    assert!(frac >= 0.99, "only {:.4} of parameters received gradient", frac);
}
