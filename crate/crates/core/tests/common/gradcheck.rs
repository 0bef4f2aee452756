//! Analytic gradients against central finite differences, over randomized
//! layer and whole-model configurations.

use std::time::Instant;

use floodaid::model::{init_model, FairModel, ModelConfig, Variant};
use floodaid::nn::loss::{cross_entropy_loss, mse_loss};
use floodaid::nn::{
    finite_diff_check, BatchNorm, Dense, Dropout, GradCheckConfig, Matrix, Mode, ParamSpan, Relu, RngStream, Softplus,
};
use floodaid::Result;
use rand::Rng;

pub const TOLERANCE: f64 = 1e-4;

fn cfg(seed: u64) -> GradCheckConfig {
    GradCheckConfig {
        tolerance: TOLERANCE,
        seed,
        ..GradCheckConfig::default()
    }
}

fn uniform(rng: &mut RngStream, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn matrix(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, uniform(rng, rows * cols, -1.5, 1.5)).unwrap()
}

/// `Σ c ⊙ out` and its gradient `c`, a generic scalar head for layer checks.
fn weighted_sum(out: &Matrix, c: &Matrix) -> (f64, Matrix) {
    let l = out.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum();
    (l, c.clone())
}

fn spans(parts: &[(&str, usize)]) -> Vec<ParamSpan> {
    let mut at = 0;
    parts
        .iter()
        .map(|&(name, len)| {
            let s = ParamSpan::new(name, at..at + len);
            at += len;
            s
        })
        .collect()
}

fn assert_passed(what: &str, report: floodaid::nn::GradCheckReport) -> f64 {
    assert!(
        report.passed,
        "{what}: max relative error {:e} over {:?}",
        report.max_rel_error, report.spans
    );
    report.max_rel_error
}

/// Dense layer: weight, bias and input gradients.
fn check_dense(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, "gc-dense");
    let (n, i, o) = (rng.random_range(1..7), rng.random_range(1..7), rng.random_range(1..7));
    let w = matrix(&mut rng, i, o);
    let b = uniform(&mut rng, o, -1.0, 1.0);
    let x = matrix(&mut rng, n, i);
    let c = matrix(&mut rng, n, o);

    let mut d = Dense::new(w.clone(), b.clone()).unwrap();
    let out = d.forward(&x).unwrap();
    let gx = d.backward(&weighted_sum(&out, &c).1).unwrap();
    let analytic: Vec<f64> = [d.weight.grad.clone(), d.bias.grad.clone(), gx.into_vec()].concat();
    let params: Vec<f64> = [w.as_slice(), &b, x.as_slice()].concat();

    let f = |p: &[f64]| -> Result<f64> {
        let w = Matrix::new(i, o, p[..i * o].to_vec())?;
        let x = Matrix::new(n, i, p[i * o + o..].to_vec())?;
        let d = Dense::new(w, p[i * o..i * o + o].to_vec())?;
        Ok(weighted_sum(&d.apply(&x)?, &c).0)
    };
    let sp = spans(&[("weight", i * o), ("bias", o), ("input", n * i)]);
    assert_passed("dense", finite_diff_check(f, &params, &analytic, &sp, &cfg(seed)).unwrap())
}

/// Train-mode batchnorm: gamma, beta and input gradients.
fn check_batchnorm(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, "gc-bn");
    let (n, f_) = (rng.random_range(2..7), rng.random_range(1..6));
    let gamma = uniform(&mut rng, f_, 0.5, 2.0);
    let beta = uniform(&mut rng, f_, -1.0, 1.0);
    let x = matrix(&mut rng, n, f_);
    let c = matrix(&mut rng, n, f_);

    let build = |g: &[f64], b: &[f64]| {
        let mut bn = BatchNorm::new(f_);
        bn.gamma.value = g.to_vec();
        bn.beta.value = b.to_vec();
        bn
    };
    let mut bn = build(&gamma, &beta);
    let out = bn.forward(&x, Mode::Train).unwrap();
    let gx = bn.backward(&weighted_sum(&out, &c).1).unwrap();
    let analytic: Vec<f64> = [bn.gamma.grad.clone(), bn.beta.grad.clone(), gx.into_vec()].concat();
    let params: Vec<f64> = [&gamma[..], &beta, x.as_slice()].concat();

    let f = |p: &[f64]| -> Result<f64> {
        let mut bn = build(&p[..f_], &p[f_..2 * f_]);
        let x = Matrix::new(n, f_, p[2 * f_..].to_vec())?;
        Ok(weighted_sum(&bn.forward(&x, Mode::Train)?, &c).0)
    };
    let sp = spans(&[("gamma", f_), ("beta", f_), ("input", n * f_)]);
    assert_passed("batchnorm", finite_diff_check(f, &params, &analytic, &sp, &cfg(seed)).unwrap())
}

/// Dense → ReLU → frozen dropout.
fn check_dropout_frozen(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, "gc-dropout");
    let (n, i, o) = (rng.random_range(2..7), rng.random_range(1..6), rng.random_range(1..6));
    let p_drop = rng.random_range(0.1..0.6);
    let w = matrix(&mut rng, i, o);
    let b = uniform(&mut rng, o, -1.0, 1.0);
    let x = matrix(&mut rng, n, i);
    let c = matrix(&mut rng, n, o);
    let mut mask_rng = RngStream::new(seed, "gc-dropout-mask");

    let mut drop = Dropout::new(p_drop).unwrap();
    let mut d = Dense::new(w.clone(), b.clone()).unwrap();
    let mut relu = Relu::default();
    let h = relu.forward(&d.forward(&x).unwrap());
    let out = drop.forward(&h, Mode::Train, &mut mask_rng).unwrap();
    drop.set_frozen(true);
    let g = drop.backward(&weighted_sum(&out, &c).1).unwrap();
    d.backward(&relu.backward(&g).unwrap()).unwrap();
    let analytic: Vec<f64> = [d.weight.grad.clone(), d.bias.grad.clone()].concat();
    let params: Vec<f64> = [w.as_slice(), &b].concat();

    let drop = std::cell::RefCell::new(drop);
    let f = |p: &[f64]| -> Result<f64> {
        let d = Dense::new(Matrix::new(i, o, p[..i * o].to_vec())?, p[i * o..].to_vec())?;
        let h = d.apply(&x)?.map(|v| v.max(0.0));
        let mut unused = RngStream::new(0, "unused");
        let out = drop.borrow_mut().forward(&h, Mode::Train, &mut unused)?;
        Ok(weighted_sum(&out, &c).0)
    };
    let sp = spans(&[("weight", i * o), ("bias", o)]);
    assert_passed("dropout", finite_diff_check(f, &params, &analytic, &sp, &cfg(seed)).unwrap())
}

/// Dense → softplus → MSE against random targets.
fn check_softplus_mse(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, "gc-softplus");
    let (n, i) = (rng.random_range(1..8), rng.random_range(1..6));
    let w = matrix(&mut rng, i, 1);
    let b = uniform(&mut rng, 1, -2.0, 2.0);
    let x = matrix(&mut rng, n, i);
    let y = Matrix::column(&uniform(&mut rng, n, 0.0, 5.0));

    let mut d = Dense::new(w.clone(), b.clone()).unwrap();
    let mut sp_ = Softplus::default();
    let pred = sp_.forward(&d.forward(&x).unwrap());
    let (_, g) = mse_loss(&pred, &y).unwrap();
    d.backward(&sp_.backward(&g).unwrap()).unwrap();
    let analytic: Vec<f64> = [d.weight.grad.clone(), d.bias.grad.clone()].concat();
    let params: Vec<f64> = [w.as_slice(), &b].concat();

    let f = |p: &[f64]| -> Result<f64> {
        let d = Dense::new(Matrix::new(i, 1, p[..i].to_vec())?, p[i..].to_vec())?;
        let pred = d.apply(&x)?.map(floodaid::nn::layers::softplus);
        Ok(mse_loss(&pred, &y)?.0)
    };
    let sp = spans(&[("weight", i), ("bias", 1)]);
    assert_passed("softplus+mse", finite_diff_check(f, &params, &analytic, &sp, &cfg(seed)).unwrap())
}

/// Dense logits → softmax cross-entropy.
fn check_cross_entropy(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, "gc-ce");
    let (n, i, k) = (rng.random_range(1..8), rng.random_range(1..6), rng.random_range(2..7));
    let w = matrix(&mut rng, i, k);
    let b = uniform(&mut rng, k, -1.0, 1.0);
    let x = matrix(&mut rng, n, i);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();

    let mut d = Dense::new(w.clone(), b.clone()).unwrap();
    let logits = d.forward(&x).unwrap();
    let (_, g) = cross_entropy_loss(&logits, &labels).unwrap();
    let gx = d.backward(&g).unwrap();
    let analytic: Vec<f64> = [d.weight.grad.clone(), d.bias.grad.clone(), gx.into_vec()].concat();
    let params: Vec<f64> = [w.as_slice(), &b, x.as_slice()].concat();

    let f = |p: &[f64]| -> Result<f64> {
        let d = Dense::new(Matrix::new(i, k, p[..i * k].to_vec())?, p[i * k..i * k + k].to_vec())?;
        let x = Matrix::new(n, i, p[i * k + k..].to_vec())?;
        Ok(cross_entropy_loss(&d.apply(&x)?, &labels)?.0)
    };
    let sp = spans(&[("weight", i * k), ("bias", k), ("input", n * i)]);
    assert_passed("cross-entropy", finite_diff_check(f, &params, &analytic, &sp, &cfg(seed)).unwrap())
}

/// Whole model in train mode with frozen dropout. Encoder and task head are
/// checked against `L_task − λ·L_adv`, the adversary against `L_adv`.
fn check_model(model: &mut FairModel, x: &Matrix, y: &[f64], s: &[usize], max_per_span: Option<usize>, seed: u64) -> f64 {
    // Zero-initialized biases can park a ReLU input exactly on its kink;
    // jitter everything to check at a generic point.
    let mut rng = RngStream::new(seed, "gc-jitter");
    let jittered: Vec<f64> = model
        .flat_params()
        .iter()
        .map(|v| v + rng.random_range(-0.05..0.05))
        .collect();
    model.set_flat_params(&jittered).unwrap();
    // First pass draws the dropout masks; freezing reuses them from then on.
    model.forward(x, Mode::Train).unwrap();
    model.set_dropout_frozen(true);
    model.compute_gradients(x, y, s).unwrap();
    let analytic = model.flat_grads();
    let params = model.flat_params();
    let lambda = model.lambda();
    let (adv_spans, pred_spans): (Vec<ParamSpan>, Vec<ParamSpan>) =
        model.param_spans().into_iter().partition(|s| s.name.starts_with("adversary"));
    // Pre-batchnorm biases have an exactly zero gradient; their central
    // differences are pure rounding noise of order ε·|L|/h, so the relative
    // error denominator is floored relative to the loss size.
    let (task, adv) = model.losses(x, y, s).unwrap();
    let config = GradCheckConfig {
        max_per_span,
        floor: 1e-6 * (task.abs() + adv.unwrap_or(0.0).abs()).max(1.0),
        ..cfg(seed)
    };

    let cell = std::cell::RefCell::new(model);
    let total = |p: &[f64]| -> Result<f64> {
        let mut m = cell.borrow_mut();
        m.set_flat_params(p)?;
        let (task, adv) = m.losses(x, y, s)?;
        Ok(task - lambda * adv.unwrap_or(0.0))
    };
    let mut worst = assert_passed(
        "model predictor",
        finite_diff_check(total, &params, &analytic, &pred_spans, &config).unwrap(),
    );
    if !adv_spans.is_empty() {
        let adv = |p: &[f64]| -> Result<f64> {
            let mut m = cell.borrow_mut();
            m.set_flat_params(p)?;
            Ok(m.losses(x, y, s)?.1.expect("fair model has an adversary"))
        };
        worst = worst.max(assert_passed(
            "model adversary",
            finite_diff_check(adv, &params, &analytic, &adv_spans, &config).unwrap(),
        ));
    }
    cell.borrow_mut().set_flat_params(&params).unwrap();
    worst
}

fn model_batch(rng: &mut RngStream, n: usize, d: usize, k: usize) -> (Matrix, Vec<f64>, Vec<usize>) {
    let x = Matrix::new(n, d, uniform(rng, n * d, -2.0, 2.0)).unwrap();
    let y = uniform(rng, n, 0.0, 20.0);
    let s = (0..n).map(|_| rng.random_range(0..k)).collect();
    (x, y, s)
}

fn check_random_model(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, "gc-model");
    let k = rng.random_range(2..6);
    let variant = if rng.random_bool(0.75) { Variant::Fair } else { Variant::Baseline };
    let mut config = ModelConfig::new(k, variant);
    config.input_dim = rng.random_range(2..7);
    config.encoder_widths = (0..rng.random_range(1..4)).map(|_| rng.random_range(2..7)).collect();
    config.task_widths = vec![rng.random_range(2..6), 1];
    config.adversary_widths = vec![rng.random_range(2..6), k];
    config.dropout = [0.0, 0.3, 0.5][rng.random_range(0..3)];
    config.lambda = [0.0, 0.5, 1.0, 2.0, rng.random_range(0.0..3.0)][rng.random_range(0..5)];
    let mut model = init_model(&config, seed).unwrap();
    let n = rng.random_range(2..9);
    let (x, y, s) = model_batch(&mut rng, n, config.input_dim, k);
    check_model(&mut model, &x, &y, &s, None, seed)
}

pub struct Summary {
    pub configs: usize,
    pub worst: f64,
    pub seconds: f64,
}

/// Runs every randomized configuration; panics on the first failing check.
pub fn run_suite(verbose: bool) -> Summary {
    let start = Instant::now();
    let mut configs = 0;
    let mut worst = 0.0f64;
    type Check = fn(u64) -> f64;
    let suites: [(&str, Check, u64); 6] = [
        ("dense", check_dense, 20),
        ("batchnorm", check_batchnorm, 20),
        ("dropout-frozen", check_dropout_frozen, 20),
        ("softplus+mse", check_softplus_mse, 20),
        ("cross-entropy", check_cross_entropy, 20),
        ("model", check_random_model, 40),
    ];
    for (name, check, count) in suites {
        let mut w = 0.0f64;
        for seed in 0..count {
            w = w.max(check(seed));
        }
        if verbose {
            println!("gradcheck {name:<15} configs {count:>3} max rel error {w:.2e}");
        }
        configs += count as usize;
        worst = worst.max(w);
    }

    // Full-size networks with a sample of coordinates per tensor.
    for (seed, variant) in [(0, Variant::Fair), (1, Variant::Baseline)] {
        let mut model = init_model(&ModelConfig::new(11, variant), seed).unwrap();
        let mut rng = RngStream::new(seed, "gc-default");
        let (x, y, s) = model_batch(&mut rng, 32, 11, 11);
        worst = worst.max(check_model(&mut model, &x, &y, &s, Some(6), seed));
        configs += 1;
    }
    Summary {
        configs,
        worst,
        seconds: start.elapsed().as_secs_f64(),
    }
}
