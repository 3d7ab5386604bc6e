//! Layered factorizations `(W_1, …, W_N)` and their end-to-end product.

use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::math;
use crate::spectral::{numerical_rank, svd_full, thin_svd};
use crate::{Error, Matrix, Result};

/// A linear network of depth `N`; layer `j` (1-based) has shape `d_j × d_{j−1}`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearNetwork {
    layers: Vec<Matrix>,
}

/// Per-layer gradient (or perturbation) matrices, shaped like the layers.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub per_layer: Vec<Matrix>,
}

impl LayerGradient {
    pub fn norm_sq(&self) -> f64 {
        self.per_layer.iter().map(Matrix::frobenius_norm_sq).sum()
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.norm_sq())
    }

    pub fn inner(&self, other: &LayerGradient) -> f64 {
        self.per_layer
            .iter()
            .zip(&other.per_layer)
            .map(|(a, b)| a.inner(b))
            .sum()
    }

    pub fn scale(&self, alpha: f64) -> LayerGradient {
        LayerGradient {
            per_layer: self.per_layer.iter().map(|g| g.scale(alpha)).collect(),
        }
    }

    /// `self + alpha · other`, layer by layer.
    pub fn add_scaled(&self, alpha: f64, other: &LayerGradient) -> LayerGradient {
        let per_layer = self
            .per_layer
            .iter()
            .zip(&other.per_layer)
            .map(|(a, b)| {
                let mut out = a.clone();
                out.axpy(alpha, b);
                out
            })
            .collect();
        LayerGradient { per_layer }
    }
}

impl LinearNetwork {
    /// Builds a network from its layers, ordered `W_1, …, W_N`.
    pub fn new(layers: Vec<Matrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[1].cols() != pair[0].rows() {
                return Err(Error::ShapeMismatch {
                    context: "network layer chain",
                    expected: (pair[1].rows(), pair[0].rows()),
                    found: pair[1].shape(),
                });
            }
        }
        Ok(LinearNetwork { layers })
    }

    /// All-zero layers for the width chain `(d_0, …, d_N)`.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let layers = dims.windows(2).map(|w| Matrix::zeros(w[1], w[0])).collect();
        Ok(LinearNetwork { layers })
    }

    /// Layers built by `f(j, rows, cols)` for `j = 1..=N`.
    pub fn from_fn(
        dims: &[usize],
        mut f: impl FnMut(usize, usize, usize) -> Matrix,
    ) -> Result<Self> {
        check_dims(dims)?;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(j, w)| f(j + 1, w[1], w[0]))
            .collect();
        LinearNetwork::new(layers)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Matrix> {
        self.layers
    }

    /// Width chain `(d_0, …, d_N)`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        dims.push(self.layers[0].cols());
        dims.extend(self.layers.iter().map(Matrix::rows));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Matrix::is_finite)
    }

    /// Euclidean norm of the stacked layer parameters.
    pub fn parameter_norm(&self) -> f64 {
        math::sqrt(self.layers.iter().map(Matrix::frobenius_norm_sq).sum())
    }

    /// `W_j ← W_j + alpha · Δ_j` for every layer.
    pub fn stepped(&self, alpha: f64, delta: &LayerGradient) -> LinearNetwork {
        let layers = self
            .layers
            .iter()
            .zip(&delta.per_layer)
            .map(|(w, d)| {
                let mut out = w.clone();
                out.axpy(alpha, d);
                out
            })
            .collect();
        LinearNetwork { layers }
    }

    pub fn check_perturbation(&self, delta: &LayerGradient) -> Result<()> {
        if delta.per_layer.len() != self.layers.len() {
            return Err(Error::invalid(
                "perturbation depth differs from network depth",
            ));
        }
        for (w, d) in self.layers.iter().zip(&delta.per_layer) {
            if w.shape() != d.shape() {
                return Err(Error::ShapeMismatch {
                    context: "layer perturbation",
                    expected: w.shape(),
                    found: d.shape(),
                });
            }
        }
        Ok(())
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid("width chain needs at least two entries"));
    }
    Ok(())
}

/// `W_N ⋯ W_1`, multiplied right to left.
pub fn end_to_end(net: &LinearNetwork) -> Matrix {
    let mut iter = net.layers.iter();
    let mut w = iter.next().expect("nonempty").clone();
    for layer in iter {
        w = layer.matmul(&w);
    }
    w
}

/// Product `W_b ⋯ W_a` (1-based, inclusive); identity of size `d_{a−1}` when `b < a`.
pub fn partial_product(net: &LinearNetwork, a: usize, b: usize) -> Matrix {
    if b < a {
        let d = if a <= 1 {
            net.input_dim()
        } else {
            net.layers[a - 2].rows()
        };
        return Matrix::identity(d);
    }
    let mut w = net.layers[a - 1].clone();
    for layer in &net.layers[a..b] {
        w = layer.matmul(&w);
    }
    w
}

/// Smallest entry of the width chain, including input and output widths.
pub fn min_width(net: &LinearNetwork) -> usize {
    net.dims().into_iter().min().expect("nonempty")
}

fn check_data(net: &LinearNetwork, data: &Dataset) -> Result<()> {
    let expected = (net.output_dim(), net.input_dim());
    let found = (data.y().rows(), data.x().rows());
    if expected != found {
        return Err(Error::ShapeMismatch {
            context: "network vs dataset (d_y, d_x)",
            expected,
            found,
        });
    }
    Ok(())
}

/// `½‖Y − W_N⋯W_1 X‖²_F`.
pub fn loss(net: &LinearNetwork, data: &Dataset) -> Result<f64> {
    check_data(net, data)?;
    Ok(data.loss_of_product(&end_to_end(net)))
}

/// Closed-form per-layer gradients
/// `∇_{W_j} = (W_N⋯W_{j+1})ᵀ (W XXᵀ − YXᵀ) (W_{j−1}⋯W_1)ᵀ`.
pub fn gradient(net: &LinearNetwork, data: &Dataset) -> Result<LayerGradient> {
    check_data(net, data)?;
    Ok(gradient_from_moments(net, data.xxt(), data.yxt()))
}

/// Gradient from the sufficient statistics `XXᵀ` and `YXᵀ`.
pub(crate) fn gradient_from_moments(
    net: &LinearNetwork,
    xxt: &Matrix,
    yxt: &Matrix,
) -> LayerGradient {
    let n = net.depth();
    // prefix[j] = W_j ⋯ W_1, prefix[0] = I.
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Matrix::identity(net.input_dim()));
    for j in 0..n {
        let next = net.layers[j].matmul(&prefix[j]);
        prefix.push(next);
    }
    let w = &prefix[n];
    let mut e = w.matmul(xxt);
    e -= yxt;

    // suffix[j] = W_N ⋯ W_{j+1}, suffix[N] = I.
    let mut suffix = alloc::vec![Matrix::zeros(0, 0); n + 1];
    suffix[n] = Matrix::identity(net.output_dim());
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1].matmul(&net.layers[j]);
    }
    let per_layer = (1..=n)
        .map(|j| suffix[j].tr_matmul(&e).matmul_tr(&prefix[j - 1]))
        .collect();
    LayerGradient { per_layer }
}

/// `max_j ‖W_{j+1}ᵀW_{j+1} − W_jW_jᵀ‖_F`; zero for depth one.
pub fn balance_residual(net: &LinearNetwork) -> f64 {
    net.layers
        .windows(2)
        .map(|w| (&w[1].tr_matmul(&w[1]) - &w[0].matmul_tr(&w[0])).frobenius_norm())
        .fold(0.0, f64::max)
}

/// A balanced network with end-to-end product `w0` and widths `dims`.
///
/// With the thin SVD `w0 = U S Vᵀ` of rank `k`, layer `j` is
/// `A_j S^{1/N} A_{j−1}ᵀ` where `A_0 = V`, `A_N = U` and the interior bridges
/// are the first `k` columns of the identity.
pub fn balanced_factorization(w0: &Matrix, dims: &[usize]) -> Result<LinearNetwork> {
    check_dims(dims)?;
    let n = dims.len() - 1;
    if dims[0] != w0.cols() || dims[n] != w0.rows() {
        return Err(Error::ShapeMismatch {
            context: "balanced_factorization end widths (d_N, d_0)",
            expected: (w0.rows(), w0.cols()),
            found: (dims[n], dims[0]),
        });
    }
    let svd = thin_svd(w0)?;
    let k = svd.k();
    let width = dims.iter().copied().min().expect("nonempty");
    if k > width {
        return Err(Error::InfeasibleFactorization {
            rank: k,
            min_width: width,
        });
    }
    let root: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| math::powf(s, 1.0 / n as f64))
        .collect();
    let bridge = |j: usize| -> Matrix {
        if j == 0 {
            svd.right_vectors.clone()
        } else if j == n {
            svd.left_vectors.clone()
        } else {
            Matrix::from_fn(dims[j], k, |i, c| if i == c { 1.0 } else { 0.0 })
        }
    };
    let layers = (1..=n)
        .map(|j| {
            let left = bridge(j);
            let scaled = Matrix::from_fn(left.rows(), k, |i, c| left[(i, c)] * root[c]);
            scaled.matmul_tr(&bridge(j - 1))
        })
        .collect();
    LinearNetwork::new(layers)
}

/// Numerical rank of the end-to-end product.
pub fn rank_of_product(net: &LinearNetwork) -> usize {
    match svd_full(&end_to_end(net)) {
        Ok(svd) => numerical_rank(&svd.s),
        Err(_) => 0,
    }
}
