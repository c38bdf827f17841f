//! Class activation maps from pooled gradients of the last convolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    /// `height x width`, values in [0, 1].
    pub grid: Tensor,
    pub layer: usize,
    pub class: usize,
}

/// Activations `A` (`K x H x W`) of the marked convolution and `dy_c / dA`.
fn conv_activation_and_grad(net: &Network, image: &Tensor, class: usize) -> Result<(usize, Tensor, Tensor)> {
    let layer = net
        .last_conv_index()
        .ok_or_else(|| Error::Config("network has no last_conv_index; mark the last convolution layer".into()))?;
    let trace = net.forward(image)?;
    let out = trace.output();
    if class >= out.len() {
        return Err(Error::invalid(format!("class {class} out of range for {} outputs", out.len())));
    }
    let mut seed = Tensor::zeros(out.dims());
    seed.data_mut()[class] = 1.0;
    let grads = net.backward(&trace, &seed, false)?;
    Ok((
        layer,
        trace.layer_output(layer).clone(),
        grads.activations[layer + 1].clone(),
    ))
}

/// `alpha_k = (1/Z) sum_ij dy_c / dA^k_ij` for every channel `k`.
pub fn neuron_importance(net: &Network, image: &Tensor, class: usize) -> Result<Vec<f64>> {
    let (_, _, grad) = conv_activation_and_grad(net, image, class)?;
    Ok(pool_channels(&grad))
}

fn pool_channels(t: &Tensor) -> Vec<f64> {
    let k = t.dims()[0];
    let z = t.len() / k;
    t.data().chunks(z).map(|c| c.iter().sum::<f64>() / z as f64).collect()
}

/// Min-max normalization; a constant grid maps to zeros.
pub fn normalize(grid: &Tensor) -> Tensor {
    let lo = grid.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Tensor::zeros(grid.dims());
    }
    grid.map(|v| (v - lo) / (hi - lo))
}

pub fn gradcam(net: &Network, image: &Tensor, class: usize) -> Result<Heatmap> {
    let (layer, act, grad) = conv_activation_and_grad(net, image, class)?;
    let alpha = pool_channels(&grad);
    let (h, w) = (act.dims()[1], act.dims()[2]);
    let z = h * w;
    let mut cam = vec![0.0; z];
    for (k, a) in alpha.iter().enumerate() {
        for (c, v) in cam.iter_mut().zip(&act.data()[k * z..(k + 1) * z]) {
            *c += a * v;
        }
    }
    cam.iter_mut().for_each(|v| *v = v.max(0.0));
    let grid = normalize(&Tensor::from_parts(vec![h, w], cam));
    Ok(Heatmap { grid, layer, class })
}

/// Bilinear resize of a `h x w` grid using pixel-center alignment.
pub fn upsample_bilinear(grid: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if grid.rank() != 2 || out_h == 0 || out_w == 0 {
        return Err(Error::invalid("upsampling needs a 2-D grid and positive output size"));
    }
    let (h, w) = (grid.dims()[0], grid.dims()[1]);
    let src = |o: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let pos = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, pos - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = src(y, out_h, h);
        for x in 0..out_w {
            let (x0, x1, fx) = src(x, out_w, w);
            let top = grid.get(&[y0, x0]) * (1.0 - fx) + grid.get(&[y0, x1]) * fx;
            let bottom = grid.get(&[y1, x0]) * (1.0 - fx) + grid.get(&[y1, x1]) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(Tensor::from_parts(vec![out_h, out_w], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_constant_is_zero() {
        let g = Tensor::filled(&[2, 2], 3.0);
        assert!(normalize(&g).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn upsample_identity_size() {
        let g = Tensor::new(vec![2, 2], vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        assert_eq!(upsample_bilinear(&g, 2, 2).unwrap(), g);
    }
}
