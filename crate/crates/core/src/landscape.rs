//! Stationarity probes for `L_N`, the maps from networks to the two-factor and
//! PCA problems, and the truncated-SVD global-minimum oracle.

use alloc::vec::Vec;

use crate::dataset::{gaussian_matrix, stream_rng, Dataset};
use crate::math;
use crate::network::{gradient, partial_product, LayerGradient, LinearNetwork};
use crate::spectral::{numerical_rank, row_projectors, svd_full, sym_eigen};
use crate::{Error, Matrix, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Classification {
    NotStationary,
    StrictSaddle,
    /// No negative curvature found among the sampled directions. Sampling
    /// cannot certify second-order stationarity.
    SospCandidate,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StationarityReport {
    pub grad_norm: f64,
    /// Minimum of the second-order form over unit sampled directions.
    pub min_quadratic_form: f64,
    pub classification: Classification,
    pub directions_sampled: usize,
    pub fosp_tol: f64,
    pub sosp_tol: f64,
}

/// `1e-6 · (1 + ‖YXᵀ‖_F)`, used for both first- and second-order thresholds.
pub fn stationarity_tol(data: &Dataset) -> f64 {
    1e-6 * (1.0 + data.yxt().frobenius_norm())
}

/// `d²/dt² L_N(W + tΔ)` at `t = 0`, i.e.
/// `‖P₁X‖² + 2⟨WX − Y, P₂X⟩` with `P₁`, `P₂` the first- and second-order
/// coefficients of `Π_j (W_j + tΔ_j)`.
pub fn second_order_form(
    net: &LinearNetwork,
    data: &Dataset,
    delta: &LayerGradient,
) -> Result<f64> {
    net.check_perturbation(delta)?;
    let expected = (net.output_dim(), net.input_dim());
    if expected != (data.d_y(), data.d_x()) {
        return Err(Error::ShapeMismatch {
            context: "network vs dataset (d_y, d_x)",
            expected: (data.d_y(), data.d_x()),
            found: expected,
        });
    }
    let d0 = net.input_dim();
    let mut a0 = Matrix::identity(d0);
    let mut a1 = Matrix::zeros(d0, d0);
    let mut a2 = Matrix::zeros(d0, d0);
    for (w, d) in net.layers().iter().zip(&delta.per_layer) {
        let n2 = &w.matmul(&a2) + &d.matmul(&a1);
        let n1 = &w.matmul(&a1) + &d.matmul(&a0);
        a0 = w.matmul(&a0);
        a1 = n1;
        a2 = n2;
    }
    let resid = &a0.matmul(data.x()) - data.y();
    let first = a1.matmul(data.x()).frobenius_norm_sq();
    let second = resid.inner(&a2.matmul(data.x()));
    Ok(first + 2.0 * second)
}

fn unit(delta: LayerGradient) -> Option<LayerGradient> {
    let n = delta.norm();
    (n > 0.0).then(|| delta.scale(1.0 / n))
}

fn zeros_like(net: &LinearNetwork) -> LayerGradient {
    LayerGradient {
        per_layer: net
            .layers()
            .iter()
            .map(|l| Matrix::zeros(l.rows(), l.cols()))
            .collect(),
    }
}

fn basis_vector(d: usize, i: usize) -> Vec<f64> {
    let mut e = alloc::vec![0.0; d];
    e[i] = 1.0;
    e
}

/// Structured probe directions: one rank-one direction per layer aligned with
/// the residual correlation, and rank-one pairs `(Δ_i, Δ_j)` whose
/// second-order product `W_N⋯Δ_j⋯Δ_i⋯W_1` aligns with it.
fn structured_directions(net: &LinearNetwork, data: &Dataset) -> Result<Vec<LayerGradient>> {
    let n = net.depth();
    let w = partial_product(net, 1, n);
    // R = YXᵀ − WXXᵀ; its leading pair is the steepest end-to-end descent.
    let mut r = data.yxt().clone();
    r -= &w.matmul(data.xxt());
    let svd = svd_full(&r)?;
    let (u, v) = (svd.u.column(0), svd.v.column(0));
    let dims = net.dims();

    let mut out = Vec::new();
    // Left factor for layer j: (W_N⋯W_{j+1})ᵀ u; right factor: (W_{j−1}⋯W_1) v.
    let left = |j: usize| partial_product(net, j + 1, n).tr_mul_vec(&u);
    let right = |j: usize| partial_product(net, 1, j - 1).mul_vec(&v);
    let or_basis = |x: Vec<f64>, d: usize| {
        if crate::matrix::norm(&x) > 0.0 {
            x
        } else {
            basis_vector(d, 0)
        }
    };
    for j in 1..=n {
        let mut delta = zeros_like(net);
        delta.per_layer[j - 1] = Matrix::outer(
            &or_basis(left(j), dims[j]),
            &or_basis(right(j), dims[j - 1]),
        );
        out.extend(unit(delta));
    }
    for i in 1..=n {
        for j in (i + 1)..=n {
            let q = or_basis(right(i), dims[i - 1]);
            let rr = or_basis(left(j), dims[j]);
            let middle = partial_product(net, i + 1, j - 1);
            for k in 0..dims[i].min(3) {
                let p = basis_vector(dims[i], k);
                let s = or_basis(middle.mul_vec(&p), dims[j - 1]);
                for sign in [1.0, -1.0] {
                    let mut delta = zeros_like(net);
                    delta.per_layer[i - 1] = Matrix::outer(&p, &q);
                    delta.per_layer[j - 1] = Matrix::outer(&rr, &s).scale(sign);
                    out.extend(unit(delta));
                }
            }
        }
    }
    Ok(out)
}

/// Gradient norm plus the minimum second-order form over `num_dirs` seeded
/// Gaussian directions, per-layer Gaussian directions and the structured
/// rank-one directions.
pub fn classify_stationarity(
    net: &LinearNetwork,
    data: &Dataset,
    num_dirs: usize,
    seed: u64,
) -> Result<StationarityReport> {
    if num_dirs == 0 {
        return Err(Error::invalid("num_dirs must be at least 1"));
    }
    let grad_norm = gradient(net, data)?.norm();
    let tol = stationarity_tol(data);

    let mut rng = stream_rng(seed, 0);
    let mut dirs = structured_directions(net, data)?;
    for _ in 0..num_dirs {
        let delta = LayerGradient {
            per_layer: net
                .layers()
                .iter()
                .map(|l| gaussian_matrix(l.rows(), l.cols(), &mut rng))
                .collect(),
        };
        dirs.extend(unit(delta));
    }
    for j in 0..net.depth() {
        let mut delta = zeros_like(net);
        let l = &net.layers()[j];
        delta.per_layer[j] = gaussian_matrix(l.rows(), l.cols(), &mut rng);
        dirs.extend(unit(delta));
    }

    let mut min_q = f64::INFINITY;
    for d in &dirs {
        min_q = min_q.min(second_order_form(net, data, d)?);
    }
    let classification = if grad_norm > tol {
        Classification::NotStationary
    } else if min_q < -tol {
        Classification::StrictSaddle
    } else {
        Classification::SospCandidate
    };
    Ok(StationarityReport {
        grad_norm,
        min_quadratic_form: min_q,
        classification,
        directions_sampled: dirs.len(),
        fosp_tol: tol,
        sosp_tol: tol,
    })
}

/// Two-factor split `W = P Q` of a network at `j₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct PqSplit {
    /// `W_N ⋯ W_{j₀+1}`, `d_y × r`.
    pub p: Matrix,
    /// `W_{j₀} ⋯ W_1`, `r × d_x`.
    pub q: Matrix,
    pub j0: usize,
}

/// Splits at the smallest index `j₀` attaining the minimum width. Depth one
/// returns `(W, I)`.
pub fn collapse_to_pq(net: &LinearNetwork) -> PqSplit {
    let n = net.depth();
    let dims = net.dims();
    let j0 = if n == 1 {
        0
    } else {
        let r = dims.iter().copied().min().expect("nonempty");
        dims.iter()
            .position(|&d| d == r)
            .expect("minimum is attained")
    };
    PqSplit {
        p: partial_product(net, j0 + 1, n),
        q: partial_product(net, 1, j0),
        j0,
    }
}

/// `(P, Q') = (P, Q X)`.
pub fn pq_to_pca(p: &Matrix, q: &Matrix, x: &Matrix) -> Result<(Matrix, Matrix)> {
    if q.cols() != x.rows() || p.cols() != q.rows() {
        return Err(Error::ShapeMismatch {
            context: "pq_to_pca",
            expected: (p.cols(), x.rows()),
            found: q.shape(),
        });
    }
    Ok((p.clone(), q.matmul(x)))
}

/// Norm of the gradient of `½‖YP_X − PQ'‖²_F` in `(P, Q')`.
pub fn pca_gradient_norm(p: &Matrix, qp: &Matrix, ypx: &Matrix) -> Result<f64> {
    if p.rows() != ypx.rows() || qp.cols() != ypx.cols() || p.cols() != qp.rows() {
        return Err(Error::ShapeMismatch {
            context: "pca_gradient_norm",
            expected: ypx.shape(),
            found: (p.rows(), qp.cols()),
        });
    }
    let mut e = p.matmul(qp);
    e -= ypx;
    let gp = e.matmul_tr(qp);
    let gq = p.tr_matmul(&e);
    Ok(math::sqrt(gp.frobenius_norm_sq() + gq.frobenius_norm_sq()))
}

/// Global minimum of `½‖M − PQ'‖²_F` over `P ∈ ℝ^{d×r}`, `Q' ∈ ℝ^{r×m}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaMinimum {
    /// `½ Σ_{i>r} σ_i(M)²`.
    pub value: f64,
    /// `U_r S_r`, zero-padded to `r` columns.
    pub p: Matrix,
    /// `V_rᵀ`, zero-padded to `r` rows.
    pub q: Matrix,
}

pub fn pca_global_min(m: &Matrix, r: usize) -> Result<PcaMinimum> {
    if r == 0 {
        return Err(Error::invalid("rank must be at least 1"));
    }
    let svd = svd_full(m)?;
    let k = r.min(svd.s.len());
    let value = 0.5 * svd.s.iter().skip(k).map(|s| s * s).sum::<f64>();
    let p = Matrix::from_fn(m.rows(), r, |i, j| {
        if j < k {
            svd.u[(i, j)] * svd.s[j]
        } else {
            0.0
        }
    });
    let q = Matrix::from_fn(r, m.cols(), |i, j| if i < k { svd.v[(j, i)] } else { 0.0 });
    Ok(PcaMinimum { value, p, q })
}

/// `½‖YP_{X⊥}‖²_F + min ½‖YP_X − PQ'‖²_F`: the global minimum of `L_N` over
/// networks of minimum width `r`. Requires `XXᵀ` invertible.
pub fn global_min_value(data: &Dataset, r: usize) -> Result<f64> {
    let eig = sym_eigen(data.xxt())?;
    let rank = numerical_rank(&eig.values.iter().map(|l| l.max(0.0)).collect::<Vec<_>>());
    if rank < data.d_x() {
        return Err(Error::SingularDesign {
            rank,
            rows: data.d_x(),
        });
    }
    let (px, perp) = row_projectors(data.x())?;
    let outside = 0.5 * data.y().matmul(&perp).frobenius_norm_sq();
    Ok(outside + pca_global_min(&data.y().matmul(&px), r)?.value)
}

/// `‖Z − W_0‖_F < s_min(Z)`, the condition under which a local
/// perturbation argument around the initialization could apply.
pub fn lazy_feasibility_check(w0: &Matrix, z: &Matrix) -> Result<bool> {
    if w0.shape() != z.shape() {
        return Err(Error::ShapeMismatch {
            context: "lazy_feasibility_check",
            expected: z.shape(),
            found: w0.shape(),
        });
    }
    let s_min = svd_full(z)?.s.last().copied().unwrap_or(0.0);
    Ok((z - w0).frobenius_norm() < s_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_instance, InstanceSpec};
    use crate::network::{end_to_end, loss};
    use crate::spectral::best_rank_r;
    use proptest::prelude::*;

    fn random_net(dims: &[usize], seed: u64) -> LinearNetwork {
        let mut rng = stream_rng(seed, 5);
        LinearNetwork::from_fn(dims, |_, r, c| gaussian_matrix(r, c, &mut rng)).unwrap()
    }

    fn random_data(dx: usize, dy: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = stream_rng(seed, 6);
        Dataset::new(
            gaussian_matrix(dx, m, &mut rng),
            gaussian_matrix(dy, m, &mut rng),
        )
        .unwrap()
    }

    fn random_delta(net: &LinearNetwork, seed: u64) -> LayerGradient {
        let mut rng = stream_rng(seed, 7);
        LayerGradient {
            per_layer: net
                .layers()
                .iter()
                .map(|l| gaussian_matrix(l.rows(), l.cols(), &mut rng))
                .collect(),
        }
    }

    #[test]
    fn depth_one_form_is_convex_quadratic() {
        let data = random_data(3, 2, 6, 1);
        let net = random_net(&[3, 2], 2);
        let d = random_delta(&net, 3);
        let q = second_order_form(&net, &data, &d).unwrap();
        let expected = d.per_layer[0].matmul(data.x()).frobenius_norm_sq();
        assert!((q - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn zero_net_depth_three_is_flat() {
        let data = random_data(3, 2, 6, 1);
        let net = LinearNetwork::zeros(&[3, 2, 2, 2]).unwrap();
        let d = random_delta(&net, 4);
        assert_eq!(second_order_form(&net, &data, &d).unwrap(), 0.0);
    }

    #[test]
    fn zero_net_depth_two_is_strict_saddle() {
        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        let net = LinearNetwork::zeros(&[5, 1, 1]).unwrap();
        let rep = classify_stationarity(&net, &inst.data, 8, 1).unwrap();
        assert_eq!(rep.classification, Classification::StrictSaddle);
        assert_eq!(rep.grad_norm, 0.0);
    }

    #[test]
    fn zero_net_depth_three_is_candidate() {
        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        let net = LinearNetwork::zeros(&[5, 1, 1, 1]).unwrap();
        let rep = classify_stationarity(&net, &inst.data, 8, 1).unwrap();
        assert_eq!(rep.classification, Classification::SospCandidate);
    }

    #[test]
    fn convex_minimum_is_candidate() {
        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        let net = LinearNetwork::new(alloc::vec![inst.target.z.clone()]).unwrap();
        let rep = classify_stationarity(&net, &inst.data, 16, 2).unwrap();
        assert_eq!(rep.classification, Classification::SospCandidate);
        assert!(rep.grad_norm < 1e-10);
        assert!(rep.min_quadratic_form > 0.0);
    }

    #[test]
    fn non_stationary_point() {
        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        let net = LinearNetwork::new(alloc::vec![inst.w0.clone()]).unwrap();
        let rep = classify_stationarity(&net, &inst.data, 1, 0).unwrap();
        assert_eq!(rep.classification, Classification::NotStationary);
        assert!(classify_stationarity(&net, &inst.data, 0, 0).is_err());
    }

    #[test]
    fn collapse_examples() {
        let net = random_net(&[5, 1, 1], 3);
        let split = collapse_to_pq(&net);
        assert_eq!(split.j0, 1);
        assert_eq!(split.p, net.layers()[1]);
        assert_eq!(split.q, net.layers()[0]);

        let net = random_net(&[2, 3], 3);
        let split = collapse_to_pq(&net);
        assert_eq!(split.p, net.layers()[0]);
        assert_eq!(split.q, Matrix::identity(2));

        let net = random_net(&[4, 3, 2, 3], 4);
        let split = collapse_to_pq(&net);
        assert_eq!(split.j0, 2);
        let w = end_to_end(&net);
        assert!((&split.p.matmul(&split.q) - &w).max_abs() <= 1e-12 * (1.0 + w.max_abs()));
    }

    #[test]
    fn pca_examples() {
        let m = Matrix::from_rows(&[[3.0, 0.0], [0.0, 1.0]]);
        let min = pca_global_min(&m, 1).unwrap();
        assert!((min.value - 0.5).abs() < 1e-15);
        assert!(pca_gradient_norm(&min.p, &min.q, &m).unwrap() < 1e-12);
        assert_eq!(pca_global_min(&m, 2).unwrap().value, 0.0);
        assert_eq!(pca_global_min(&m, 5).unwrap().p.shape(), (2, 5));

        let x = Matrix::identity(3).scale(2.0);
        let q = Matrix::from_rows(&[[1.0, 0.0, -1.0]]);
        let (_, qp) = pq_to_pca(&Matrix::from_rows(&[[1.0]]), &q, &x).unwrap();
        assert_eq!(qp, q.scale(2.0));
    }

    #[test]
    fn global_min_examples() {
        // X = √m I, Y rows (3·√m e₁, 1·√m e₂): Z = diag(3, 1), rank-one minimum ½.
        let m = 2.0f64;
        let x = Matrix::identity(2).scale(math::sqrt(m));
        let y = Matrix::from_rows(&[[3.0 * math::sqrt(m), 0.0], [0.0, math::sqrt(m)]]);
        let data = Dataset::new(x, y).unwrap();
        let v = global_min_value(&data, 1).unwrap();
        assert!((v - 0.5 * m).abs() < 1e-12);
        assert!(global_min_value(&data, 2).unwrap() < 1e-24);

        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        let (_, perp) = row_projectors(inst.data.x()).unwrap();
        let outside = 0.5 * inst.data.y().matmul(&perp).frobenius_norm_sq();
        assert!((global_min_value(&inst.data, 1).unwrap() - outside).abs() < 1e-10);

        let singular = Dataset::new(
            Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]),
            Matrix::zeros(1, 2),
        )
        .unwrap();
        assert!(matches!(
            global_min_value(&singular, 1),
            Err(Error::SingularDesign { .. })
        ));
    }

    #[test]
    fn lazy_examples() {
        let z = Matrix::identity(2);
        let w0 = Matrix::outer(&[0.6, 0.8], &[1.0, 0.0]).scale(3.0);
        assert!(!lazy_feasibility_check(&w0, &z).unwrap());
        assert!(lazy_feasibility_check(&z, &z).unwrap());
        let rank1 = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]);
        assert!(!lazy_feasibility_check(&rank1, &rank1).unwrap());
        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        assert!(!lazy_feasibility_check(&inst.w0, &inst.target.z).unwrap());
    }

    proptest! {
        #[test]
        fn form_matches_second_difference(
            dims in proptest::collection::vec(1usize..=4, 2..=5),
            seed in any::<u64>(),
        ) {
            let net = random_net(&dims, seed);
            let data = random_data(dims[0], dims[dims.len() - 1], 7, seed);
            let d = random_delta(&net, seed ^ 1);
            let h = 1e-4;
            let l = |a: f64| loss(&net.stepped(a, &d), &data).unwrap();
            let fd = (l(h) - 2.0 * l(0.0) + l(-h)) / (h * h);
            let q = second_order_form(&net, &data, &d).unwrap();
            let scale = 1.0 + q.abs() + l(0.0) * 1e-4;
            prop_assert!((fd - q).abs() <= 1e-4 * scale, "fd {} q {}", fd, q);
        }

        #[test]
        fn collapse_preserves_loss(
            dims in proptest::collection::vec(1usize..=4, 2..=5),
            seed in any::<u64>(),
        ) {
            let net = random_net(&dims, seed);
            let data = random_data(dims[0], dims[dims.len() - 1], 6, seed);
            let split = collapse_to_pq(&net);
            let l_pq = data.loss_of_product(&split.p.matmul(&split.q));
            let l = loss(&net, &data).unwrap();
            prop_assert!((l - l_pq).abs() <= 1e-12 * (1.0 + l));
        }

        #[test]
        fn pca_value_is_truncation_residual(rows in 1usize..5, cols in 1usize..9, r in 1usize..4, seed in any::<u64>()) {
            let m = gaussian_matrix(rows, cols, &mut stream_rng(seed, 0));
            let v = pca_global_min(&m, r).unwrap().value;
            let resid = 0.5 * (&m - &best_rank_r(&m, r).unwrap()).frobenius_norm_sq();
            prop_assert!((v - resid).abs() <= 1e-12 * (1.0 + v));
        }
    }
}
