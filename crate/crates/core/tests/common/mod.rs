//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use afcoevo::afprims::{Mode, PrimitiveSet};
use afcoevo::cgp::{CgpConfig, Genome};
use afcoevo::nn::{softmax_cross_entropy, AfTriple, Architecture, LayerPlan, Model, NetworkSpec, Role, ScalarActivation, Tensor};
use afcoevo::seed::{rng_from_seed, Rng};
use rand::Rng as _;

/// Pre-activations closer than this to a kink make a finite-difference
/// check ill-posed, so such draws are rejected.
pub const KINK_MARGIN: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-6;

pub fn tiny_fcn() -> Architecture {
    Architecture::Fcn {
        first_width: Some(3),
        hidden_width: 3,
        hidden_layers: 1,
    }
}

pub fn tiny_cnn() -> Architecture {
    Architecture::Cnn {
        channels: [2, 3],
        kernel: 3,
        pool: 2,
        pool_stride: 1,
        dropout: 0.5,
        fc_width: None,
        fc2_width: 4,
    }
}

fn near_kink(af: &ScalarActivation, v: f64) -> bool {
    match af {
        ScalarActivation::Primitive(p) => p.op.near_kink(v, 0.0, KINK_MARGIN),
        ScalarActivation::Program(prog) => {
            let slots = prog.slot_values(v);
            prog.program()
                .iter()
                .any(|ins| ins.primitive.op.near_kink(slots[ins.args[0]], slots[ins.args[1]], KINK_MARGIN))
        }
    }
}

fn pool_tie(x: &[f64], channels: usize, [h, w]: [usize; 2], size: usize, stride: usize, batch: usize) -> bool {
    let (oh, ow) = ((h - size) / stride + 1, (w - size) / stride + 1);
    for s in 0..batch {
        for c in 0..channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut vals: Vec<f64> = (0..size * size)
                        .map(|k| x[s * channels * h * w + (c * h + oy * stride + k / size) * w + ox * stride + k % size])
                        .collect();
                    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    if vals[0] - vals[1] < KINK_MARGIN {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// A random evolved activation that actually depends on its input.
pub fn random_activation(rng: &mut Rng) -> ScalarActivation {
    loop {
        let g = Genome::random(CgpConfig::default(), PrimitiveSet::standard(), rng).unwrap();
        let af = ScalarActivation::program(&g);
        let varies = (-20..=20).any(|i| {
            let (v, d) = af.eval_with_derivative(i as f64 * 0.1 + 0.013);
            v.is_finite() && d.is_finite() && d != 0.0
        });
        if varies {
            return af;
        }
    }
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub parameters: usize,
}

/// Compares backprop with central differences on every parameter of a
/// freshly built f64 model. Returns `None` when the draw is ill-posed
/// (a pre-activation near a kink, a near-tie in a pooling window, or
/// non-finite logits). The model rng is reseeded before every forward pass
/// so train-mode dropout masks and RReLU slopes are identical across passes.
pub fn gradient_check(arch: Architecture, afs: AfTriple, dims: [usize; 3], classes: usize, mode: Mode, seed: u64) -> Option<GradCheck> {
    let mut rng = rng_from_seed(seed);
    let spec = NetworkSpec::new(arch, afs.clone(), dims, classes);
    let mut model = Model::<f64>::new(spec, &mut rng).unwrap();
    model.set_mode(mode);
    let batch = 3;
    let n: usize = dims.iter().product();
    let x = Tensor::new(
        vec![batch, dims[0], dims[1], dims[2]],
        (0..batch * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    const PASS_SEED: u64 = 0xC0FFEE;

    model.reseed(PASS_SEED);
    let trace = model.layer_inputs(&x).unwrap();
    if trace.last().unwrap().iter().any(|v| !v.is_finite()) {
        return None;
    }
    for (layer, input) in model.plan().iter().zip(&trace) {
        match *layer {
            LayerPlan::Activation(role) => {
                let af: &ScalarActivation = afs.get(role);
                if input.iter().any(|&v| near_kink(af, v)) {
                    return None;
                }
            }
            LayerPlan::MaxPool {
                channels,
                in_hw,
                size,
                stride,
            } => {
                if pool_tie(input, channels, in_hw, size, stride, batch) {
                    return None;
                }
            }
            _ => {}
        }
    }

    let loss_at = |model: &mut Model<f64>| {
        model.reseed(PASS_SEED);
        let (logits, _) = model.forward(&x).unwrap();
        softmax_cross_entropy(&logits, &labels).unwrap().0
    };
    model.reseed(PASS_SEED);
    let (logits, cache) = model.forward(&x).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&logits, &labels).unwrap();
    let grads = model.backward(&cache, &dlogits).unwrap();

    let mut max_rel_err: f64 = 0.0;
    let mut parameters = 0;
    for p in 0..grads.len() {
        for i in 0..grads[p].len() {
            let orig = model.params()[p].data()[i];
            model.params_mut()[p].data_mut()[i] = orig + FD_STEP;
            let up = loss_at(&mut model);
            model.params_mut()[p].data_mut()[i] = orig - FD_STEP;
            let down = loss_at(&mut model);
            model.params_mut()[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = grads[p].data()[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            max_rel_err = max_rel_err.max(rel);
            parameters += 1;
        }
    }
    Some(GradCheck { max_rel_err, parameters })
}

/// Runs [`gradient_check`] until `count` well-posed draws with random evolved
/// triples have been checked; returns the worst relative error and the
/// number of evolved activations exercised.
pub fn evolved_gradient_suite(arch: fn() -> Architecture, dims: [usize; 3], classes: usize, count: usize, seed: u64) -> (f64, usize, usize) {
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < count {
        attempts += 1;
        assert!(attempts < 50 * count, "too many ill-posed draws");
        let triple = AfTriple::new(random_activation(&mut rng), random_activation(&mut rng), random_activation(&mut rng));
        if let Some(r) = gradient_check(arch(), triple, dims, classes, Mode::Eval, rng.random()) {
            worst = worst.max(r.max_rel_err);
            done += 1;
        }
    }
    (worst, done * Role::ALL.len(), attempts)
}

/// Root of the dataset directories used by data-dependent tests.
pub fn data_dir() -> std::path::PathBuf {
    std::env::var_os("AFCOEVO_DATA_DIR")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::path::PathBuf::from("/root/data"))
}

/// Published per-digit counts of the official MNIST training and test files.
pub const MNIST_TRAIN_COUNTS: [usize; 10] = [5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949];
pub const MNIST_TEST_COUNTS: [usize; 10] = [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009];
