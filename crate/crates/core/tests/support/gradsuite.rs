#![allow(dead_code)]

//! Finite-difference checks of every layer and of a tiny full network, at
//! 64-bit precision. Each layer is probed through `L = sum(r * f(x))` with a
//! fixed random `r`, so the upstream gradient is `r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tonguenet::net::gradcheck::{check_gradient, GradCheck};
use tonguenet::net::layers::*;
use tonguenet::net::{init_params, NetworkConfig, Tensor};

pub const LAYER_TOL: f64 = 1e-4;
pub const NETWORK_TOL: f64 = 1e-3;

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, v.to_vec()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn conv() -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (xs, oc) = ([2, 3, 6, 5], 4);
    let x = randn(&mut rng, xs.iter().product());
    let w = randn(&mut rng, oc * 3 * 9);
    let b = randn(&mut rng, oc);
    let r = randn(&mut rng, 2 * oc * 6 * 5);
    let dy = t(&[2, oc, 6, 5], &r);
    let g = conv2d_backward(&t(&xs, &x), &w, oc, 3, 1, &dy, true).unwrap();
    let f = |x: &[f64], w: &[f64], b: &[f64]| {
        Some(dot(conv2d_forward(&t(&xs, x), w, b, oc, 3, 1).unwrap().data(), &r))
    };
    check_gradient(&x, g.dx.unwrap().data(), |v| f(v, &w, &b))
        .merge(check_gradient(&w, &g.dweight, |v| f(&x, v, &b)))
        .merge(check_gradient(&b, &g.dbias, |v| f(&x, &w, v)))
}

pub fn batchnorm() -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut out = GradCheck::default();
    for shape in [vec![4, 3, 2, 2], vec![5, 6]] {
        let c = shape[1];
        let x = randn(&mut rng, shape.iter().product());
        let gamma: Vec<f64> = randn(&mut rng, c).iter().map(|v| v + 1.5).collect();
        let beta = randn(&mut rng, c);
        let r = randn(&mut rng, x.len());
        let fwd = |x: &[f64], g: &[f64], b: &[f64]| {
            let p = BnParams { gamma: g, beta: b, eps: 1e-5 };
            let (mut m, mut v) = (vec![0.0; c], vec![1.0; c]);
            batchnorm_forward_train(&t(&shape, x), &p, &mut m, &mut v, 0.1).unwrap()
        };
        let (_, cache) = fwd(&x, &gamma, &beta);
        let (dx, dg, db) = batchnorm_backward(&cache, &gamma, &t(&shape, &r)).unwrap();
        let f = |x: &[f64], g: &[f64], b: &[f64]| Some(dot(fwd(x, g, b).0.data(), &r));
        out = out
            .merge(check_gradient(&x, dx.data(), |v| f(v, &gamma, &beta)))
            .merge(check_gradient(&gamma, &dg, |v| f(&x, v, &beta)))
            .merge(check_gradient(&beta, &db, |v| f(&x, &gamma, v)));
    }
    out
}

pub fn relu() -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = randn(&mut rng, 60);
    let r = randn(&mut rng, 60);
    let y = relu_forward(&t(&[60], &x));
    let dx = relu_backward(&y, &t(&[60], &r)).unwrap();
    let sign = |v: &[f64]| v.iter().map(|&a| a > 0.0).collect::<Vec<_>>();
    let base = sign(&x);
    check_gradient(&x, dx.data(), |v| {
        (sign(v) == base).then(|| dot(relu_forward(&t(&[60], v)).data(), &r))
    })
}

pub fn maxpool() -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = [2, 3, 4, 6];
    let x = randn(&mut rng, shape.iter().product());
    let (y, arg) = maxpool2x2_forward(&t(&shape, &x)).unwrap();
    let r = randn(&mut rng, y.len());
    let dx = maxpool2x2_backward(&shape, &arg, &t(y.shape(), &r)).unwrap();
    check_gradient(&x, dx.data(), |v| {
        let (y, a) = maxpool2x2_forward(&t(&shape, v)).unwrap();
        (a == arg).then(|| dot(y.data(), &r))
    })
}

pub fn dense() -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, din, dout) = (3, 7, 5);
    let x = randn(&mut rng, n * din);
    let w = randn(&mut rng, dout * din);
    let b = randn(&mut rng, dout);
    let r = randn(&mut rng, n * dout);
    let (dx, dw, db) = dense_backward(&t(&[n, din], &x), &w, &t(&[n, dout], &r)).unwrap();
    let f = |x: &[f64], w: &[f64], b: &[f64]| {
        Some(dot(dense_forward(&t(&[n, din], x), w, b).unwrap().data(), &r))
    };
    check_gradient(&x, dx.data(), |v| f(v, &w, &b))
        .merge(check_gradient(&w, &dw, |v| f(&x, v, &b)))
        .merge(check_gradient(&b, &db, |v| f(&x, &w, v)))
}

pub fn dropout() -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = randn(&mut rng, 40);
    let r = randn(&mut rng, 40);
    let mask: Vec<f64> = dropout_mask(40, 0.5, &mut rng).unwrap();
    let dx = apply_mask(&t(&[40], &r), &mask).unwrap();
    check_gradient(&x, dx.data(), |v| Some(dot(apply_mask(&t(&[40], v), &mask).unwrap().data(), &r)))
}

pub fn mse() -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = randn(&mut rng, 12);
    let target = t(&[3, 4], &randn(&mut rng, 12));
    let (_, g) = loss_mse(&t(&[3, 4], &p), &target).unwrap();
    check_gradient(&p, g.data(), |v| Some(loss_mse(&t(&[3, 4], v), &target).unwrap().0))
}

/// Input 16x16, four conv blocks of 2 channels, dense layers [8, 8] with
/// dropout, a 4-output head, batch of 4, MSE loss. The dropout masks are redrawn from the same seed on
/// every evaluation, so they stay fixed.
pub fn network() -> GradCheck {
    let cfg = NetworkConfig {
        input: (1, 16, 16),
        conv_channels: vec![2, 2, 2, 2],
        fc_sizes: vec![8, 8],
        ..NetworkConfig::new(2)
    };
    let model = init_params::<f64>(&cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = t(&[4, 1, 16, 16], &randn(&mut rng, 4 * 256));
    let target = t(&[4, 4], &randn(&mut rng, 16));

    let eval = |theta: &[f64]| {
        let mut m = model.clone();
        let mut off = 0;
        for p in m.params_mut() {
            p.copy_from_slice(&theta[off..off + p.len()]);
            off += p.len();
        }
        let (y, cache) = m.forward_train(&x, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let (l, g) = loss_mse(&y, &target).unwrap();
        (m, cache, l, g)
    };
    let theta: Vec<f64> = model.params().concat();
    let (m, cache, _, g) = eval(&theta);
    let analytic: Vec<f64> = m.backward(&cache, &g).unwrap().0.concat();
    let sig = cache.signature();
    check_gradient(&theta, &analytic, |v| {
        let (_, c, l, _) = eval(v);
        (c.signature() == sig).then_some(l)
    })
}

/// Every check with its tolerance.
pub fn suite() -> Vec<(&'static str, GradCheck, f64)> {
    vec![
        ("conv", conv(), LAYER_TOL),
        ("batchnorm", batchnorm(), LAYER_TOL),
        ("relu", relu(), LAYER_TOL),
        ("maxpool", maxpool(), LAYER_TOL),
        ("dense", dense(), LAYER_TOL),
        ("dropout", dropout(), LAYER_TOL),
        ("mse", mse(), LAYER_TOL),
        ("network", network(), NETWORK_TOL),
    ]
}
