//! Layer stacks, recorded forward passes and reverse-mode gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::{Cache, Layer};
use crate::tensor::Tensor;

/// Names attached to a network's inputs and outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

/// An ordered list of layers applied to a fixed-shape input.
///
/// Extents of `0` in `input_shape` mark free axes (sequence length, node
/// count). Construction checks that adjacent layers compose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    last_conv_index: Option<usize>,
    pub meta: Meta,
}

/// Every activation of one forward pass: the input followed by each layer
/// output, so `activations.len() == layers + 1`.
#[derive(Clone, Debug)]
pub struct ActivationTrace {
    pub activations: Vec<Tensor>,
    pub(crate) caches: Vec<Cache>,
    pub(crate) laplacian: Option<Tensor>,
}

impl ActivationTrace {
    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }

    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace holds the input")
    }

    /// Output of layer `i` (0-based).
    pub fn layer_output(&self, i: usize) -> &Tensor {
        &self.activations[i + 1]
    }

    pub fn laplacian(&self) -> Option<&Tensor> {
        self.laplacian.as_ref()
    }
}

/// Result of one reverse sweep.
#[derive(Clone, Debug)]
pub struct Gradients {
    /// `activations[i]` is the gradient w.r.t. trace activation `i`
    /// (index 0 is the network input).
    pub activations: Vec<Tensor>,
    /// Per layer, gradients aligned with [`Layer::params`]. Empty unless
    /// parameter gradients were requested.
    pub params: Vec<Vec<Tensor>>,
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() {
            return Err(Error::invalid("network input shape must have at least one axis"));
        }
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(i, &shape)?;
        }
        Ok(Self {
            layers,
            input_shape,
            output_shape: shape,
            last_conv_index: None,
            meta: Meta::default(),
        })
    }

    /// Marks layer `index` as the convolution Grad-CAM reads from.
    pub fn with_last_conv(mut self, index: usize) -> Result<Self> {
        self.set_last_conv(Some(index))?;
        Ok(self)
    }

    pub fn set_last_conv(&mut self, index: Option<usize>) -> Result<()> {
        if let Some(i) = index {
            match self.layers.get(i) {
                Some(Layer::Conv2D(_)) => {}
                _ => {
                    return Err(Error::Config(format!(
                        "last_conv_index {i} does not reference a conv2d layer"
                    )))
                }
            }
        }
        self.last_conv_index = index;
        Ok(())
    }

    pub fn with_meta(mut self, meta: Meta) -> Self {
        self.meta = meta;
        self
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to parameters only; the layer structure is fixed.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn last_conv_index(&self) -> Option<usize> {
        self.last_conv_index
    }

    /// Number of scalar inputs, or `None` with a free axis.
    pub fn input_len(&self) -> Option<usize> {
        (!self.input_shape.contains(&0)).then(|| self.input_shape.iter().product())
    }

    pub fn output_len(&self) -> Option<usize> {
        (!self.output_shape.contains(&0)).then(|| self.output_shape.iter().product())
    }

    pub fn forward(&self, x: &Tensor) -> Result<ActivationTrace> {
        self.run(x, None)
    }

    /// Forward pass for networks containing graph convolutions.
    pub fn forward_graph(&self, x: &Tensor, laplacian: &Tensor) -> Result<ActivationTrace> {
        self.run(x, Some(laplacian))
    }

    /// Convenience: forward a flat feature row and return the flat output.
    pub fn predict(&self, row: &[f64]) -> Result<Vec<f64>> {
        let x = Tensor::new(self.input_shape.clone(), row.to_vec())?;
        Ok(self.forward(&x)?.output().data().to_vec())
    }

    fn run(&self, x: &Tensor, laplacian: Option<&Tensor>) -> Result<ActivationTrace> {
        let ok = x.rank() == self.input_shape.len()
            && x.dims()
                .iter()
                .zip(&self.input_shape)
                .all(|(&g, &w)| w == 0 || g == w);
        if !ok {
            return Err(Error::shape(
                0,
                format!(
                    "network expects input {:?} (0 = any), got {:?}",
                    self.input_shape,
                    x.dims()
                ),
            ));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(i, &activations[i], laplacian)?;
            if !y.is_finite() {
                return Err(Error::shape(i, "forward produced a non-finite value"));
            }
            activations.push(y);
            caches.push(cache);
        }
        Ok(ActivationTrace {
            activations,
            caches,
            laplacian: laplacian.cloned(),
        })
    }

    /// Reverse sweep seeded with `seed` (same shape as the output).
    pub fn backward(&self, trace: &ActivationTrace, seed: &Tensor, with_params: bool) -> Result<Gradients> {
        if seed.dims() != trace.output().dims() {
            return Err(Error::invalid(format!(
                "backward seed {:?} does not match output {:?}",
                seed.dims(),
                trace.output().dims()
            )));
        }
        let n = self.layers.len();
        let mut grads = vec![Tensor::zeros(&[0]); n + 1];
        let mut params = vec![Vec::new(); n];
        grads[n] = seed.clone();
        for i in (0..n).rev() {
            let (gx, gp) = self.layers[i].backward(
                &trace.activations[i],
                &trace.activations[i + 1],
                &trace.caches[i],
                &grads[i + 1],
                trace.laplacian.as_ref(),
                with_params,
            );
            grads[i] = gx;
            params[i] = gp;
        }
        Ok(Gradients {
            activations: grads,
            params,
        })
    }

    /// Gradients of output component `output_index` w.r.t. every activation
    /// (index 0 is the input).
    pub fn gradient(&self, x: &Tensor, output_index: usize) -> Result<Vec<Tensor>> {
        self.gradient_with(x, None, output_index)
    }

    pub fn gradient_with(
        &self,
        x: &Tensor,
        laplacian: Option<&Tensor>,
        output_index: usize,
    ) -> Result<Vec<Tensor>> {
        if let Some(Layer::Embedding(_)) = self.layers.first() {
            return Err(Error::Unsupported(
                "gradient w.r.t. token ids is undefined; differentiate from the embedding output".into(),
            ));
        }
        let trace = self.run(x, laplacian)?;
        let out = trace.output();
        if output_index >= out.len() {
            return Err(Error::invalid(format!(
                "output index {output_index} out of range for {} outputs",
                out.len()
            )));
        }
        let mut seed = Tensor::zeros(out.dims());
        seed.data_mut()[output_index] = 1.0;
        Ok(self.backward(&trace, &seed, false)?.activations)
    }

    /// `∂ y[output_index] / ∂ x` for a flat feature row.
    pub fn input_gradient(&self, row: &[f64], output_index: usize) -> Result<Vec<f64>> {
        let x = Tensor::new(self.input_shape.clone(), row.to_vec())?;
        Ok(self.gradient(&x, output_index)?.swap_remove(0).into_data())
    }

    /// The network made of layers `from..` taking layer `from - 1`'s output.
    pub fn tail(&self, from: usize) -> Result<Network> {
        if from > self.layers.len() {
            return Err(Error::invalid("tail index past the last layer"));
        }
        let mut shape = self.input_shape.clone();
        for (i, layer) in self.layers[..from].iter().enumerate() {
            shape = layer.output_shape(i, &shape)?;
        }
        Network::new(shape, self.layers[from..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::{Activation, Dense};

    fn dense(w: Vec<f64>, out: usize, inp: usize, b: Vec<f64>, act: Activation) -> Layer {
        Layer::Dense(Dense {
            weight: Tensor::matrix(out, inp, w).unwrap(),
            bias: Tensor::vector(b),
            activation: act,
        })
    }

    #[test]
    fn identity_dense() {
        let net = Network::new(vec![2], vec![dense(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0], Activation::Identity)]).unwrap();
        assert_eq!(net.predict(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn relu_kills_negative_sum() {
        let net = Network::new(vec![2], vec![dense(vec![1.0, 1.0], 1, 2, vec![0.0], Activation::Relu)]).unwrap();
        assert_eq!(net.predict(&[2.0, -5.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn sum_pool_vector() {
        let net = Network::new(vec![3], vec![Layer::SumPool]).unwrap();
        assert_eq!(net.predict(&[1.0, 2.0, 3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn linear_gradient() {
        let net = Network::new(vec![1], vec![dense(vec![3.0], 1, 1, vec![0.0], Activation::Identity)]).unwrap();
        assert_eq!(net.input_gradient(&[5.0], 0).unwrap(), vec![3.0]);
    }

    #[test]
    fn relu_gradient_sides() {
        let net = Network::new(vec![1], vec![dense(vec![1.0], 1, 1, vec![0.0], Activation::Relu)]).unwrap();
        assert_eq!(net.input_gradient(&[-1.0], 0).unwrap(), vec![0.0]);
        assert_eq!(net.input_gradient(&[1.0], 0).unwrap(), vec![1.0]);
        assert_eq!(net.input_gradient(&[0.0], 0).unwrap(), vec![0.0]);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let err = Network::new(
            vec![2],
            vec![
                dense(vec![1.0, 1.0], 1, 2, vec![0.0], Activation::Relu),
                dense(vec![1.0, 1.0], 1, 2, vec![0.0], Activation::Relu),
            ],
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("layer 1:"), "{err}");
        let net = Network::new(vec![2], vec![dense(vec![1.0, 1.0], 1, 2, vec![0.0], Activation::Relu)]).unwrap();
        assert!(net.forward(&Tensor::vector(vec![1.0; 3])).is_err());
    }

    #[test]
    fn last_conv_must_be_conv() {
        let net = Network::new(vec![3], vec![Layer::SumPool]).unwrap();
        assert!(net.with_last_conv(0).is_err());
    }
}
