//! Plain supervised training: Adam over cross-entropy losses.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layer::Layer;
use crate::network::Network;
use crate::tensor::Tensor;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Gradient *descent* step: `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    /// Single sigmoid output, target in {0, 1}.
    Binary,
    /// Softmax output, target is the class index.
    Categorical,
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.01,
            batch_size: 32,
            seed: 0,
        }
    }
}

pub struct Example<'a> {
    pub input: &'a Tensor,
    pub laplacian: Option<&'a Tensor>,
    pub target: usize,
}

fn loss_seed(loss: Loss, out: &Tensor, target: usize) -> Result<(f64, Tensor)> {
    let mut seed = Tensor::zeros(out.dims());
    let p = out.data();
    let value = match loss {
        Loss::Binary => {
            if p.len() != 1 || target > 1 {
                return Err(Error::invalid("binary loss needs one output and a 0/1 target"));
            }
            let y = target as f64;
            let q = p[0].clamp(1e-12, 1.0 - 1e-12);
            seed.data_mut()[0] = (q - y) / (q * (1.0 - q));
            -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
        }
        Loss::Categorical => {
            if target >= p.len() {
                return Err(Error::invalid(format!("class {target} out of range")));
            }
            let q = p[target].max(1e-12);
            seed.data_mut()[target] = -1.0 / q;
            -q.ln()
        }
    };
    Ok((value, seed))
}

/// Mean loss and mean parameter gradients over a set of examples. The
/// reduction runs in example order so results do not depend on threading.
pub fn loss_and_grads(net: &Network, batch: &[Example<'_>], loss: Loss) -> Result<(f64, Vec<Tensor>)> {
    let per: Vec<(f64, Vec<Tensor>)> = batch
        .par_iter()
        .map(|ex| {
            let trace = match ex.laplacian {
                Some(l) => net.forward_graph(ex.input, l)?,
                None => net.forward(ex.input)?,
            };
            let (value, seed) = loss_seed(loss, trace.output(), ex.target)?;
            let g = net.backward(&trace, &seed, true)?;
            Ok((value, g.params.into_iter().flatten().collect()))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut total = 0.0;
    let mut acc: Vec<Tensor> = net.params().iter().map(|p| Tensor::zeros(p.dims())).collect();
    for (value, grads) in per {
        total += value;
        for (a, g) in acc.iter_mut().zip(grads) {
            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                *x += y;
            }
        }
    }
    for a in &mut acc {
        a.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    Ok((total * scale, acc))
}

/// Trains in place and returns the mean loss of each epoch.
pub fn fit(net: &mut Network, examples: &[Example<'_>], loss: Loss, cfg: &FitConfig) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::invalid("no training examples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let batch = if cfg.batch_size == 0 {
        examples.len()
    } else {
        cfg.batch_size
    };
    let mut adam = Adam::new(cfg.lr);
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let items: Vec<Example<'_>> = chunk
                .iter()
                .map(|&i| Example {
                    input: examples[i].input,
                    laplacian: examples[i].laplacian,
                    target: examples[i].target,
                })
                .collect();
            let (l, grads) = loss_and_grads(net, &items, loss)?;
            epoch_loss += l * chunk.len() as f64;
            adam.step(net.params_mut(), &grads);
        }
        history.push(epoch_loss / examples.len() as f64);
    }
    Ok(history)
}

/// Convenience for tabular binary classifiers on flat rows.
pub fn fit_rows(net: &mut Network, rows: &[Vec<f64>], labels: &[usize], cfg: &FitConfig) -> Result<Vec<f64>> {
    let inputs: Vec<Tensor> = rows
        .iter()
        .map(|r| Tensor::new(net.input_shape().to_vec(), r.clone()))
        .collect::<Result<_>>()?;
    let examples: Vec<Example<'_>> = inputs
        .iter()
        .zip(labels)
        .map(|(x, &t)| Example {
            input: x,
            laplacian: None,
            target: t,
        })
        .collect();
    fit(net, &examples, Loss::Binary, cfg)
}

/// Rewrites the first dense layer so the network accepts raw features while
/// behaving as if they had been standardized with `mean` / `std`.
pub fn fold_standardization(net: &mut Network, mean: &[f64], std: &[f64]) -> Result<()> {
    let layers_ok = matches!(net.layers().first(), Some(Layer::Dense(_)));
    if !layers_ok {
        return Err(Error::invalid("standardization folding needs a leading dense layer"));
    }
    let mut params = net.params_mut();
    let (w, rest) = params.split_first_mut().expect("dense has weight");
    let b = &mut rest[0];
    let (rows, cols) = (w.dims()[0], w.dims()[1]);
    if mean.len() != cols || std.len() != cols || std.iter().any(|&s| s <= 0.0) {
        return Err(Error::invalid("standardization vectors must match input width with std > 0"));
    }
    for r in 0..rows {
        let mut shift = 0.0;
        for c in 0..cols {
            let wv = w.data()[r * cols + c] / std[c];
            w.data_mut()[r * cols + c] = wv;
            shift += wv * mean[c];
        }
        b.data_mut()[r] -= shift;
    }
    Ok(())
}

/// Fraction of rows whose thresholded output (>= 0.5) matches the label.
pub fn accuracy(net: &Network, rows: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let hits = rows
        .par_iter()
        .zip(labels)
        .map(|(r, &y)| Ok(((net.predict(r)?[0] >= 0.5) as usize == y) as usize))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / rows.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::{Activation, Dense};

    #[test]
    fn learns_a_threshold() {
        let mut net = Network::new(
            vec![1],
            vec![Layer::Dense(Dense {
                weight: Tensor::matrix(1, 1, vec![0.1]).unwrap(),
                bias: Tensor::vector(vec![0.0]),
                activation: Activation::Sigmoid,
            })],
        )
        .unwrap();
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 10.0 - 2.0]).collect();
        let labels: Vec<usize> = rows.iter().map(|r| (r[0] > 0.0) as usize).collect();
        let cfg = FitConfig { epochs: 300, lr: 0.1, batch_size: 0, seed: 1 };
        let hist = fit_rows(&mut net, &rows, &labels, &cfg).unwrap();
        assert!(hist.last().unwrap() < &hist[0]);
        assert!(accuracy(&net, &rows, &labels).unwrap() >= 0.95);
    }

    #[test]
    fn folding_preserves_function() {
        let layer = Layer::Dense(Dense {
            weight: Tensor::matrix(1, 2, vec![0.7, -1.2]).unwrap(),
            bias: Tensor::vector(vec![0.3]),
            activation: Activation::Identity,
        });
        let mut net = Network::new(vec![2], vec![layer]).unwrap();
        let (mean, std) = ([10.0, -3.0], [2.0, 0.5]);
        let x = [13.0, -2.0];
        let z: Vec<f64> = (0..2).map(|i| (x[i] - mean[i]) / std[i]).collect();
        let before = net.predict(&z).unwrap()[0];
        fold_standardization(&mut net, &mean, &std).unwrap();
        assert!((net.predict(&x).unwrap()[0] - before).abs() < 1e-12);
    }
}
