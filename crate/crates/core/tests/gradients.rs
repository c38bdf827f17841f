mod common;

use common::{fd_gradient, random_case, rel_err};
use proptest::prelude::*;
use xattr::Tensor;

#[test]
fn input_gradients_match_finite_differences() {
    let mut worst = (0.0, "");
    for seed in 0..1000 {
        let c = random_case(seed);
        let outs = c.net.output_len().unwrap();
        let out = seed as usize % outs;
        let analytic = c.net.gradient_with(&c.x, c.laplacian.as_ref(), out).unwrap().swap_remove(0);
        let numeric = fd_gradient(&c.net, &c.x, c.laplacian.as_ref(), out, 1e-5);
        for (a, n) in analytic.data().iter().zip(&numeric) {
            let e = rel_err(*a, *n, 1e-3);
            if e > worst.0 {
                worst = (e, c.kind);
            }
        }
    }
    assert!(worst.0 <= 1e-4, "max relative error {:e} on a {} net", worst.0, worst.1);
}

#[test]
fn parameter_gradients_match_finite_differences() {
    for seed in 0..50 {
        let c = random_case(seed);
        let trace = match &c.laplacian {
            Some(l) => c.net.forward_graph(&c.x, l).unwrap(),
            None => c.net.forward(&c.x).unwrap(),
        };
        let mut seed_t = Tensor::zeros(trace.output().dims());
        seed_t.data_mut()[0] = 1.0;
        let grads = c.net.backward(&trace, &seed_t, true).unwrap();
        let flat: Vec<f64> = grads.params.iter().flatten().flat_map(|t| t.data().to_vec()).collect();
        let n_params: usize = c.net.params().iter().map(|t| t.len()).sum();
        assert_eq!(flat.len(), n_params);
        let h = 1e-5;
        let mut k = 0;
        for (pi, len) in c.net.params().iter().map(|t| t.len()).enumerate() {
            for j in 0..len {
                let bump = |d: f64| {
                    let mut net = c.net.clone();
                    net.params_mut()[pi].data_mut()[j] += d;
                    common::eval(&net, &c.x, c.laplacian.as_ref(), 0)
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                let e = rel_err(flat[k], numeric, 1e-3);
                assert!(e <= 1e-4, "{} net, param {pi}[{j}]: {} vs {numeric}", c.kind, flat[k]);
                k += 1;
            }
        }
    }
}

#[test]
fn embedding_input_gradient_is_refused() {
    let mut r = common::rng(1);
    let net = xattr::Network::new(vec![0], vec![common::embedding(&mut r, 5, 3), xattr::Layer::SumPool]).unwrap();
    let x = Tensor::vector(vec![0.0, 3.0]);
    assert!(net.forward(&x).is_ok());
    assert!(net.gradient(&x, 0).is_err());
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-10.0..10.0f64, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

proptest! {
    #[test]
    fn transpose_is_an_involution(a in matrix(3, 4)) {
        prop_assert_eq!(a.transpose().unwrap().transpose().unwrap(), a);
    }

    #[test]
    fn matmul_transpose_identity(a in matrix(2, 3), b in matrix(3, 4)) {
        let left = a.matmul(&b).unwrap().transpose().unwrap();
        let right = b.transpose().unwrap().matmul(&a.transpose().unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn identity_is_neutral(a in matrix(3, 3)) {
        prop_assert_eq!(a.matmul(&Tensor::identity(3)).unwrap(), a);
    }

    #[test]
    fn reshape_keeps_data(d in prop::collection::vec(-1.0..1.0f64, 12)) {
        let t = Tensor::new(vec![3, 4], d.clone()).unwrap();
        let r = t.reshape(&[2, 6]).unwrap();
        prop_assert_eq!(r.data(), &d[..]);
        prop_assert!(t.reshape(&[5, 2]).is_err());
    }
}
