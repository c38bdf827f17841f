mod common;

use common::{rng, uniform};
use xattr::gradcam::{gradcam, neuron_importance, normalize, upsample_bilinear};
use xattr::integrated_gradients::{check_axioms, integrated_gradients};
use xattr::layer::{Conv2D, Dense, Padding};
use xattr::models::image::{decode_pnm, encode_pgm, encode_ppm, overlay};
use xattr::models::zoo;
use xattr::{Activation, Layer, Network, Tensor};

fn dense(w: Vec<f64>, rows: usize, cols: usize, b: Vec<f64>, act: Activation) -> Layer {
    Layer::Dense(Dense {
        weight: Tensor::matrix(rows, cols, w).unwrap(),
        bias: Tensor::vector(b),
        activation: act,
    })
}

/// conv (1 -> `channels`, relu) on a 4x4 image followed by `head`.
fn conv_net(seed: u64, channels: usize, head: Vec<Layer>) -> Network {
    let mut r = rng(seed);
    let conv = Layer::Conv2D(Conv2D {
        filters: uniform(&mut r, &[channels, 1, 3, 3], -1.0, 1.0),
        bias: uniform(&mut r, &[channels], 0.0, 0.5),
        stride: 1,
        padding: Padding::Same,
        activation: Activation::Relu,
    });
    let mut layers = vec![conv];
    layers.extend(head);
    Network::new(vec![1, 4, 4], layers).unwrap().with_last_conv(0).unwrap()
}

fn image(seed: u64) -> Tensor {
    uniform(&mut rng(seed), &[1, 4, 4], 0.0, 1.0)
}

#[test]
fn missing_last_conv_is_a_config_error() {
    let net = zoo::mlp(2, &[], 1, Activation::Identity, Activation::Sigmoid, 0).unwrap();
    let err = gradcam(&net, &Tensor::vector(vec![0.0, 0.0]), 0).unwrap_err();
    assert!(matches!(err, xattr::Error::Config(_)));
}

#[test]
fn mean_pool_head_weights() {
    // y = mean of channel 0, channel 1 disconnected
    let mut w = vec![0.0; 32];
    w[..16].iter_mut().for_each(|v| *v = 1.0 / 16.0);
    let net = conv_net(1, 2, vec![Layer::Flatten, dense(w, 1, 32, vec![0.0], Activation::Identity)]);
    let alpha = neuron_importance(&net, &image(2), 0).unwrap();
    assert!((alpha[0] - 1.0 / 16.0).abs() < 1e-15);
    assert_eq!(alpha[1], 0.0);
}

#[test]
fn alpha_matches_finite_differences() {
    for seed in 0..10 {
        let net = zoo::image_cnn(6, seed).unwrap();
        let x = uniform(&mut rng(seed + 50), &[1, 6, 6], 0.0, 1.0);
        let layer = net.last_conv_index().unwrap();
        let tail = net.tail(layer + 1).unwrap();
        let a = net.forward(&x).unwrap().layer_output(layer).clone();
        let fd = common::fd_gradient(&tail, &a, None, 1, 1e-6);
        let z = a.dims()[1] * a.dims()[2];
        let alpha = neuron_importance(&net, &x, 1).unwrap();
        for (k, al) in alpha.iter().enumerate() {
            let pooled = fd[k * z..(k + 1) * z].iter().sum::<f64>() / z as f64;
            assert!(common::rel_err(*al, pooled, 1e-3) <= 1e-4, "channel {k}: {al} vs {pooled}");
        }
    }
}

#[test]
fn heatmap_shape_and_range() {
    let net = zoo::image_cnn(8, 3).unwrap();
    for seed in 0..5 {
        let h = gradcam(&net, &uniform(&mut rng(seed), &[1, 8, 8], 0.0, 1.0), (seed % 2) as usize).unwrap();
        assert_eq!(h.grid.dims(), &[4, 4]);
        assert!(h.grid.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let up = upsample_bilinear(&h.grid, 8, 8).unwrap();
        assert_eq!(up.dims(), &[8, 8]);
    }
}

#[test]
fn constant_head_gives_zero_map() {
    let net = conv_net(4, 3, vec![Layer::Flatten, dense(vec![0.0; 48], 1, 48, vec![0.7], Activation::Identity)]);
    let h = gradcam(&net, &image(1), 0).unwrap();
    assert!(h.grid.data().iter().all(|&v| v == 0.0));
}

#[test]
fn negative_combination_gives_zero_map() {
    let net = conv_net(5, 2, vec![Layer::Flatten, dense(vec![-1.0; 32], 1, 32, vec![0.0], Activation::Identity)]);
    let h = gradcam(&net, &image(3), 0).unwrap();
    assert!(h.grid.data().iter().all(|&v| v == 0.0));
}

#[test]
fn single_channel_identity_head() {
    let net = conv_net(6, 1, vec![Layer::Flatten, dense(vec![1.0; 16], 1, 16, vec![0.0], Activation::Identity)]);
    let x = image(4);
    let a = net.forward(&x).unwrap().layer_output(0).reshape(&[4, 4]).unwrap();
    let expected = normalize(&a.map(|v| v.max(0.0)));
    let h = gradcam(&net, &x, 0).unwrap();
    for (p, q) in h.grid.data().iter().zip(expected.data()) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn trained_detector_highlights_the_square() {
    let (images, labels) = zoo::synth_images(200, 8, 0).unwrap();
    let mut net = zoo::image_cnn(8, 0).unwrap();
    let cfg = xattr::train::FitConfig {
        epochs: 15,
        lr: 0.01,
        batch_size: 16,
        seed: 0,
    };
    zoo::train_classifier(&mut net, &images, &labels, &cfg).unwrap();
    // the peak of the heatmap falls on the bright patch of a positive image
    let x = &images[1];
    let h = gradcam(&net, x, 1).unwrap();
    let up = upsample_bilinear(&h.grid, 8, 8).unwrap();
    let peak = up.argmax();
    assert!(x.data()[peak] > 0.5, "peak at pixel {peak}");
}

#[test]
fn pnm_output() {
    let grid = Tensor::new(vec![2, 2], vec![0.0, 0.5, 1.0, 0.25]).unwrap();
    let pgm = encode_pgm(&grid).unwrap();
    assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
    assert_eq!(&pgm[pgm.len() - 4..], &[0, 128, 255, 64]);
    let back = decode_pnm(&pgm).unwrap();
    assert_eq!(back.dims(), &[1, 2, 2]);
    let img = Tensor::filled(&[1, 2, 2], 0.0);
    let over = overlay(&img, &grid).unwrap();
    assert!(encode_ppm(&over).unwrap().starts_with(b"P6\n2 2\n255\n"));
    // a half-transparent overlay on a black image never exceeds one half
    assert!(over.data().iter().all(|&v| v <= 0.5 + 1e-12));
}

fn linear(w: &[f64]) -> Network {
    Network::new(vec![w.len()], vec![dense(w.to_vec(), 1, w.len(), vec![0.1], Activation::Identity)]).unwrap()
}

#[test]
fn ig_zero_path_and_linear_closed_form() {
    let net = linear(&[1.5, -2.0, 0.5]);
    let x = Tensor::vector(vec![1.0, 2.0, -3.0]);
    let z = integrated_gradients(&net, &x, &x, 0, 8).unwrap();
    assert!(z.attributions.data().iter().all(|&v| v == 0.0));
    let base = Tensor::vector(vec![0.5, 0.0, 1.0]);
    for m in [1, 3, 17] {
        let r = integrated_gradients(&net, &x, &base, 0, m).unwrap();
        let expected = [1.5 * 0.5, -2.0 * 2.0, 0.5 * -4.0];
        for (a, e) in r.attributions.data().iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

fn mlp3(seed: u64, act: Activation) -> Network {
    zoo::mlp(4, &[6, 5], 1, act, Activation::Sigmoid, seed).unwrap()
}

#[test]
fn ig_completeness() {
    // relu hidden layers, inputs in [-1, 1] against the zero baseline
    let mut within = 0;
    for seed in 0..100 {
        let net = mlp3(seed, Activation::Relu);
        let x = uniform(&mut rng(seed), &[4], -1.0, 1.0);
        let res = integrated_gradients(&net, &x, &Tensor::zeros(&[4]), 0, 512).unwrap();
        let df = (res.output_value - res.baseline_value).abs();
        if res.completeness_gap <= 1e-3 * df {
            within += 1;
        }
        // the right-Riemann error stays first order in 1/m
        assert!(res.completeness_gap <= 5e-3 * df, "seed {seed}");
    }
    assert!(within >= 95, "{within}/100 within 1e-3");
}

#[test]
fn ig_gap_halves_on_smooth_nets() {
    for seed in 0..5 {
        let net = mlp3(seed, Activation::Sigmoid);
        let x = uniform(&mut rng(seed), &[4], -3.0, 3.0);
        let b = Tensor::zeros(&[4]);
        let gaps: Vec<f64> = [64, 128, 256, 512]
            .iter()
            .map(|&m| integrated_gradients(&net, &x, &b, 0, m).unwrap().completeness_gap)
            .collect();
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
            let ratio = w[1] / w[0];
            assert!((0.45..=0.55).contains(&ratio), "seed {seed}: {gaps:?}");
        }
    }
}

#[test]
fn ig_is_linear_in_the_model() {
    // h = f + g as one network: stacked hidden layers, summed read-outs
    let f = zoo::mlp(3, &[4], 1, Activation::Sigmoid, Activation::Identity, 1).unwrap();
    let g = zoo::mlp(3, &[2], 1, Activation::Sigmoid, Activation::Identity, 2).unwrap();
    let parts = |n: &Network| -> (Dense, Dense) {
        match (&n.layers()[0], &n.layers()[1]) {
            (Layer::Dense(a), Layer::Dense(b)) => (a.clone(), b.clone()),
            _ => unreachable!(),
        }
    };
    let (f1, f2) = parts(&f);
    let (g1, g2) = parts(&g);
    let cat = |a: &Tensor, b: &Tensor| [a.data(), b.data()].concat();
    let h = Network::new(
        vec![3],
        vec![
            dense(cat(&f1.weight, &g1.weight), 6, 3, cat(&f1.bias, &g1.bias), Activation::Sigmoid),
            dense(cat(&f2.weight, &g2.weight), 1, 6, vec![f2.bias.data()[0] + g2.bias.data()[0]], Activation::Identity),
        ],
    )
    .unwrap();
    let x = Tensor::vector(vec![0.4, -1.2, 2.0]);
    let b = Tensor::vector(vec![0.1, 0.1, -0.3]);
    let (eh, ef, eg) = (common::eval(&h, &x, None, 0), common::eval(&f, &x, None, 0), common::eval(&g, &x, None, 0));
    assert!((eh - ef - eg).abs() < 1e-12);
    let ih = integrated_gradients(&h, &x, &b, 0, 64).unwrap();
    let i_f = integrated_gradients(&f, &x, &b, 0, 64).unwrap();
    let ig = integrated_gradients(&g, &x, &b, 0, 64).unwrap();
    for i in 0..3 {
        let sum = i_f.attributions.data()[i] + ig.attributions.data()[i];
        assert!((ih.attributions.data()[i] - sum).abs() <= 1e-8);
    }
}

#[test]
fn axioms() {
    // relu(x - 1), x = 2 against baseline 0
    let net = Network::new(vec![1], vec![dense(vec![1.0], 1, 1, vec![-1.0], Activation::Relu)]).unwrap();
    let twin = Network::new(
        vec![1],
        vec![
            dense(vec![1.0], 1, 1, vec![0.0], Activation::Identity),
            dense(vec![1.0], 1, 1, vec![-1.0], Activation::Relu),
        ],
    )
    .unwrap();
    let x = Tensor::vector(vec![2.0]);
    let b = Tensor::vector(vec![0.0]);
    assert_eq!(net.input_gradient(&[0.5], 0).unwrap(), vec![0.0]);
    let rep = check_axioms(&net, &twin, &x, &b, 0, 100).unwrap();
    assert_eq!(rep.sensitivity, Some(true));
    assert!(rep.implementation_invariant);
    let same = check_axioms(&net, &net, &x, &b, 0, 100).unwrap();
    assert_eq!(same.invariance_max_diff, 0.0);

    // Dense(W) against Dense(I) followed by Dense(W)
    let w = mlp3(3, Activation::Tanh);
    let mut layers = vec![dense(
        Tensor::identity(4).into_data(),
        4,
        4,
        vec![0.0; 4],
        Activation::Identity,
    )];
    layers.extend(w.layers().iter().cloned());
    let w2 = Network::new(vec![4], layers).unwrap();
    let x = Tensor::vector(vec![0.3, -0.7, 1.1, 0.0]);
    let rep = check_axioms(&w, &w2, &x, &Tensor::zeros(&[4]), 0, 50).unwrap();
    assert!(rep.invariance_max_diff <= 1e-6);
    assert!(check_axioms(&w, &net, &x, &Tensor::zeros(&[4]), 0, 50).is_err());
}
