//! Central-difference verification of every backward pass. The analytic
//! gradients drive all training code, so they are held against a numeric
//! oracle over many random architectures rather than a single example.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotornn::{Activation, Adam, ConvEncoder, Mlp, Parameterized};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn central_diff(mut f: impl FnMut(&[f64]) -> f64, params: &[f64]) -> Vec<f64> {
    let mut grad = Vec::with_capacity(params.len());
    let mut p = params.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + H;
        let fp = f(&p);
        p[i] = orig - H;
        let fm = f(&p);
        p[i] = orig;
        grad.push((fp - fm) / (2.0 * H));
    }
    grad
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs() + 1e-8))
        .fold(0.0, f64::max)
}

#[test]
fn mlp_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..30 {
        let n_layers = rng.gen_range(2..=4);
        let dims: Vec<usize> = (0..=n_layers).map(|_| rng.gen_range(2..=6)).collect();
        let out_act = if case % 2 == 0 {
            Activation::Linear
        } else {
            Activation::Tanh
        };
        let mut net = Mlp::new(&dims, out_act, &mut rng);
        let batch = rng.gen_range(1..=4);
        let x = DMatrix::from_fn(dims[0], batch, |_, _| rng.gen_range(-1.5..1.5));
        let r = DMatrix::from_fn(*dims.last().unwrap(), batch, |_, _| rng.gen_range(-1.0..1.0));

        net.zero_grad();
        let cache = net.forward(&x);
        let dx = net.backward(&cache, &r);
        let mut analytic = Vec::new();
        net.export_grads(&mut analytic);

        let mut flat = Vec::new();
        net.export_params(&mut flat);
        let mut probe = net.clone();
        let numeric = central_diff(
            |p| {
                let mut off = 0;
                probe.import_params(p, &mut off);
                probe.forward(&x).output().dot(&r)
            },
            &flat,
        );
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < TOL, "case {case} ({dims:?}): parameter grad err {err:.2e}");

        // Input gradient against the same oracle.
        let x_flat: Vec<f64> = x.iter().copied().collect();
        let numeric_dx = central_diff(
            |p| {
                let xm = DMatrix::from_column_slice(x.nrows(), x.ncols(), p);
                net.forward(&xm).output().dot(&r)
            },
            &x_flat,
        );
        let dx_flat: Vec<f64> = dx.iter().copied().collect();
        let err = max_rel_err(&dx_flat, &numeric_dx);
        assert!(err < TOL, "case {case} ({dims:?}): input grad err {err:.2e}");
    }
}

#[test]
fn encoder_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..5 {
        let mut enc = ConvEncoder::new(2, 9, 3, &[(3, 3, 2), (3, 2, 1)], 2, &mut rng);
        let history = DMatrix::from_fn(2, 9, |_, _| rng.gen_range(-1.0..1.0));
        let r = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));

        enc.zero_grad();
        let cache = enc.forward(&history);
        let dx = enc.backward(&cache, &r);
        let mut analytic = Vec::new();
        enc.export_grads(&mut analytic);

        let mut flat = Vec::new();
        enc.export_params(&mut flat);
        let mut probe = enc.clone();
        let numeric = central_diff(
            |p| {
                let mut off = 0;
                probe.import_params(p, &mut off);
                probe.forward(&history).output().dot(&r)
            },
            &flat,
        );
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < TOL, "case {case}: encoder parameter grad err {err:.2e}");

        let h_flat: Vec<f64> = history.iter().copied().collect();
        let numeric_dx = central_diff(
            |p| {
                let hm = DMatrix::from_column_slice(2, 9, p);
                enc.forward(&hm).output().dot(&r)
            },
            &h_flat,
        );
        let dx_flat: Vec<f64> = dx.iter().copied().collect();
        let err = max_rel_err(&dx_flat, &numeric_dx);
        assert!(err < TOL, "case {case}: encoder input grad err {err:.2e}");
    }
}

#[test]
fn full_size_policy_network_passes_a_spot_check() {
    // The production-size policy net (16 -> 256 -> 256 -> 4) is too big for
    // an exhaustive numeric sweep; check a random subset of coordinates.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut net = Mlp::new(&[16, 256, 256, 4], Activation::Linear, &mut rng);
    let x = DMatrix::from_fn(16, 3, |_, _| rng.gen_range(-1.0..1.0));
    let r = DMatrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));

    net.zero_grad();
    let cache = net.forward(&x);
    net.backward(&cache, &r);
    let mut analytic = Vec::new();
    net.export_grads(&mut analytic);
    let mut flat = Vec::new();
    net.export_params(&mut flat);

    let mut probe = net.clone();
    let mut loss = |p: &[f64]| {
        let mut off = 0;
        probe.import_params(p, &mut off);
        probe.forward(&x).output().dot(&r)
    };
    for _ in 0..200 {
        let i = rng.gen_range(0..flat.len());
        let orig = flat[i];
        flat[i] = orig + H;
        let fp = loss(&flat);
        flat[i] = orig - H;
        let fm = loss(&flat);
        flat[i] = orig;
        let numeric = (fp - fm) / (2.0 * H);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs() + 1e-8);
        assert!(rel < TOL, "coordinate {i}: rel err {rel:.2e}");
    }
}

#[test]
fn adam_on_verified_gradients_fits_a_small_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut net = Mlp::new(&[1, 16, 1], Activation::Linear, &mut rng);
    let xs: Vec<f64> = (0..64).map(|i| -2.0 + 4.0 * i as f64 / 63.0).collect();
    let x = DMatrix::from_fn(1, 64, |_, c| xs[c]);
    let target = DMatrix::from_fn(1, 64, |_, c| xs[c].sin());

    let mut opt = Adam::new(3e-3, net.param_count());
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..800 {
        net.zero_grad();
        let cache = net.forward(&x);
        let diff = cache.output() - &target;
        last = diff.iter().map(|d| d * d).sum::<f64>() / 64.0;
        first.get_or_insert(last);
        let dy = diff.map(|d| 2.0 * d / 64.0);
        net.backward(&cache, &dy);
        let mut params = Vec::new();
        let mut grads = Vec::new();
        net.export_params(&mut params);
        net.export_grads(&mut grads);
        opt.step(&mut params, &grads);
        let mut off = 0;
        net.import_params(&params, &mut off);
    }
    let first = first.unwrap();
    assert!(
        last < first / 50.0,
        "training stalled: {first:.4} -> {last:.4}"
    );
}
