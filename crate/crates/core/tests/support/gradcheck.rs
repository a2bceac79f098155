//! Finite-difference gradient checker shared by the test targets.

use l2d_core::fusion::{BackboneKind, FusionBatch, FusionConfig, FusionModel, SkipSource};
use l2d_core::nn::{Mode, ParamStore};
use l2d_core::trainer::{joint_loss, joint_loss_grad};
use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, w: usize, h: usize, dim: usize) -> FusionBatch {
    let mut img = || Array4::from_shape_simple_fn((n, 3, h, w), || rng.random_range(-1.0..1.0));
    let previous = img();
    let current = img();
    let mut sem = || Array2::from_shape_simple_fn((n, dim), || rng.random_range(-1.5..1.5) * 4.0);
    let sem_previous = sem();
    let sem_current = sem();
    let mut miss = Array2::zeros((n, dim));
    if dim > 1 {
        miss[[0, 1]] = 1.0;
    }
    FusionBatch {
        previous,
        current,
        sem_previous,
        sem_current,
        missing_previous: miss.clone(),
        missing_current: miss,
    }
}

pub fn loss_of(model: &FusionModel, batch: &FusionBatch, target: &Array2<f64>) -> f64 {
    let (pred, _) = model.forward_batch(batch, Mode::Eval).unwrap();
    joint_loss(&pred, target).unwrap().total
}

pub struct GradReport {
    pub checked: usize,
    pub kinks: usize,
    pub worst: f64,
    pub worst_at: String,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.kinks * 20 <= self.checked && self.worst < 1e-4
    }
}

/// Compare analytic gradients against central differences on a sample of
/// coordinates of every parameter array.
pub fn check_report(config: FusionConfig, per_param: usize) -> GradReport {
    let (w, h) = config.input_resolution;
    let dim = config.semantic_dim;
    let mut model = FusionModel::new(config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Non-zero biases so no unit sits exactly on a ReLU kink.
    for p in model.params.iter_mut() {
        if p.name.ends_with("bias") {
            p.data.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
        }
    }
    let batch = random_batch(&mut rng, 3, w, h, dim);
    let target = Array2::from_shape_simple_fn((3, 2), || rng.random_range(-1.0..1.0));

    let (pred, cache) = model.forward_batch(&batch, Mode::Eval).unwrap();
    let mut grads = model.params.zeros_like();
    model.backward(&cache, &joint_loss_grad(&pred, &target), &mut grads);

    let base: ParamStore = model.params.clone();
    let base_loss = loss_of(&model, &batch, &target);
    let mut worst = (0.0f64, String::new());
    let (mut checked, mut kinks) = (0usize, 0usize);
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    for (pi, p) in base.iter().enumerate() {
        let n = p.data.len();
        let picks: Vec<usize> = if n <= per_param {
            (0..n).collect()
        } else {
            (0..per_param).map(|_| rng.random_range(0..n)).collect()
        };
        for j in picks {
            let orig = p.data[j];
            let analytic = grads.data[pi][j];
            // Central difference, or None when one-sided slopes disagree:
            // the step crossed a ReLU or max-pool switch.
            let mut probe = |eps: f64| {
                model.params.iter_mut().nth(pi).unwrap().data[j] = orig + eps;
                let up = loss_of(&model, &batch, &target);
                model.params.iter_mut().nth(pi).unwrap().data[j] = orig - eps;
                let down = loss_of(&model, &batch, &target);
                model.params.iter_mut().nth(pi).unwrap().data[j] = orig;
                let (fwd, bwd) = ((up - base_loss) / eps, (base_loss - down) / eps);
                let kink = (fwd - bwd).abs() > 1e-2 * fwd.abs().max(bwd.abs()).max(1e-4);
                (!kink).then_some((up - down) / (2.0 * eps))
            };
            checked += 1;
            // A smaller step rules out switches the first step straddled.
            let numeric = match probe(1e-5) {
                Some(d) if rel(analytic, d) < 1e-4 => Some(d),
                _ => probe(1e-6),
            };
            let Some(numeric) = numeric else {
                kinks += 1;
                continue;
            };
            let r = rel(analytic, numeric);
            if r > worst.0 {
                worst = (r, format!("{}[{j}]: analytic {analytic:e} numeric {numeric:e}", p.name));
            }
        }
    }
    GradReport {
        checked,
        kinks,
        worst: worst.0,
        worst_at: worst.1,
    }
}

pub fn check(config: FusionConfig, per_param: usize) {
    let r = check_report(config, per_param);
    assert!(r.kinks * 20 <= r.checked, "{} of {} coordinates straddle a kink", r.kinks, r.checked);
    assert!(r.worst < 1e-4, "worst relative error {:e} at {}", r.worst, r.worst_at);
}

pub fn tiny(kind: BackboneKind, res: (usize, usize), semantic: bool, skip: SkipSource) -> FusionConfig {
    let mut c = FusionConfig::desk(res, 3);
    if !semantic {
        c = c.image_only();
    }
    c.backbone.kind = kind;
    c.fc_hidden = [5, 4];
    c.lstm_hidden = 3;
    c.head_hidden = [6, 5, 4];
    c.skip = skip;
    c.seed = 17;
    c
}

