//! Feed-forward source acting on Hermitian-basis coefficients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{expand, hermitian_basis, reconstruct_unchecked, ComplexMatrix, HermitianBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn slope_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

/// Affine layer `x ↦ W x + b`, `W` stored row-major (n_out × n_in).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    pub fn param_len(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.n_out {
            let row = &self.weights[r * self.n_in..(r + 1) * self.n_in];
            out.push(self.bias[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

/// `α̂ = N_L ∘ … ∘ N_1 (α)` with the activation on every layer but the last.
#[derive(Clone, Debug)]
pub struct NetworkSource {
    layers: Vec<Layer>,
    activation: Activation,
    basis: HermitianBasis,
}

impl NetworkSource {
    /// All-zero network with the given hidden widths (input and output
    /// width are N²).
    pub fn zeros(dim: usize, activation: Activation, hidden: &[usize]) -> Result<Self> {
        let basis = hermitian_basis(dim)?;
        let n2 = dim * dim;
        if hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "hidden layer widths must be positive".into(),
            ));
        }
        let mut widths = vec![n2];
        widths.extend_from_slice(hidden);
        widths.push(n2);
        let layers = widths
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layers,
            activation,
            basis,
        })
    }

    /// Weights ~ U(-1/√fan_in, 1/√fan_in), zero biases; the output layer
    /// is additionally scaled by `output_scale` so the source starts small.
    pub fn init_random<R: Rng>(
        dim: usize,
        activation: Activation,
        hidden: &[usize],
        output_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(dim, activation, hidden)?;
        let last = net.layers.len() - 1;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let bound = 1.0 / (layer.n_in as f64).sqrt();
            let scale = if l == last { output_scale } else { 1.0 };
            for w in layer.weights.iter_mut() {
                *w = scale * rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_layers(dim: usize, activation: Activation, layers: Vec<Layer>) -> Result<Self> {
        let basis = hermitian_basis(dim)?;
        let n2 = dim * dim;
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "network needs at least one layer".into(),
            ));
        }
        let mut width = n2;
        for layer in &layers {
            if layer.n_in != width
                || layer.weights.len() != layer.n_in * layer.n_out
                || layer.bias.len() != layer.n_out
            {
                return Err(Error::InvalidArgument("inconsistent layer shapes".into()));
            }
            width = layer.n_out;
        }
        if width != n2 {
            return Err(Error::InvalidArgument(format!(
                "network output width {width} differs from N² = {n2}"
            )));
        }
        if layers
            .iter()
            .any(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "network parameters must be finite".into(),
            ));
        }
        Ok(Self {
            layers,
            activation,
            basis,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn basis(&self) -> &HermitianBasis {
        &self.basis
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.n_out)
            .collect()
    }

    pub fn param_len(&self) -> usize {
        self.layers.iter().map(Layer::param_len).sum()
    }

    /// Layer by layer: weights (row-major) then bias.
    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_len() {
            return Err(Error::InvalidArgument(format!(
                "network expects {} parameters, got {}",
                self.param_len(),
                theta.len()
            )));
        }
        let mut off = 0;
        for l in self.layers.iter_mut() {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&theta[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&theta[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Network map on coefficient vectors.
    pub fn forward_coeffs(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if l != last {
                next.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Accumulates `J_xᵀ v` into `x_bar` and the parameter gradient
    /// (packed order) into `theta_bar`.
    pub fn vjp(&self, x: &[f64], v: &[f64], x_bar: &mut [f64], theta_bar: &mut [f64]) {
        let last = self.layers.len() - 1;
        // activations[l] = input of layer l
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            activations.push(cur.clone());
            layer.affine(&cur, &mut next);
            if l != last {
                next.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }

        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_len();
        }

        // delta = dL/d(pre-activation) of the current layer
        let mut delta = v.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &activations[l];
            let o = offsets[l];
            for r in 0..layer.n_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let gw = &mut theta_bar[o + r * layer.n_in..o + (r + 1) * layer.n_in];
                for (g, xi) in gw.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            let ob = o + layer.n_in * layer.n_out;
            for r in 0..layer.n_out {
                theta_bar[ob + r] += delta[r];
            }
            let mut back = vec![0.0; layer.n_in];
            for r in 0..layer.n_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[r * layer.n_in..(r + 1) * layer.n_in];
                for (b, w) in back.iter_mut().zip(row) {
                    *b += w * d;
                }
            }
            if l == 0 {
                for (xb, b) in x_bar.iter_mut().zip(&back) {
                    *xb += b;
                }
            } else {
                // input of layer l is the activated output of layer l-1
                delta = back
                    .iter()
                    .zip(input)
                    .map(|(b, a)| b * self.activation.slope_from_output(*a))
                    .collect();
            }
        }
    }
}

/// `reconstruct(N(expand(ρ)))`, Hermitian by construction.
pub fn net_forward(src: &NetworkSource, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if rho.dim() != src.dim() {
        return Err(Error::InvalidArgument(format!(
            "state dimension {} does not match network dimension {}",
            rho.dim(),
            src.dim()
        )));
    }
    let x = expand(rho, &src.basis)?;
    let y = src.forward_coeffs(&x);
    Ok(reconstruct_unchecked(&y, src.dim()))
}
