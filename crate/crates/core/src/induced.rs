//! The operator `A_W(Δ) = Σ_{j=1}^N (WWᵀ)^{(N−j)/N} Δ (WᵀW)^{(j−1)/N}` and the
//! induced end-to-end flow `Ẇ = −A_W(WXXᵀ − YXᵀ)`.
//!
//! In the full SVD frame `W = Ũ S̃ Ṽᵀ` the operator is diagonal: with
//! `B = ŨᵀΔṼ`, `A_W(Δ) = Ũ (B ∘ Ω) Ṽᵀ` where
//! `Ω_pq = Σ_j λ_p^{(N−j)/N} μ_q^{(j−1)/N}` and `λ`, `μ` are the eigenvalues of
//! `WWᵀ` and `WᵀW` (squared singular values, padded with zeros).

use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::math;
use crate::spectral::{frac_sym_power, numerical_rank, svd_full, FullSvd};
use crate::{Error, Matrix, Result};

/// `W`, the depth `N` and the cached SVD frame of `W`.
#[derive(Clone, Debug)]
pub struct OperatorContext {
    w: Matrix,
    depth: usize,
    svd: FullSvd,
    weights: Matrix,
}

impl OperatorContext {
    pub fn new(w: &Matrix, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::invalid("depth must be at least 1"));
        }
        let svd = svd_full(w)?;
        let (dy, dx) = w.shape();
        let rank = numerical_rank(&svd.s);
        let eig = |i: usize| if i < rank { svd.s[i] * svd.s[i] } else { 0.0 };
        let lambda: Vec<f64> = (0..dy).map(eig).collect();
        let mu: Vec<f64> = (0..dx).map(eig).collect();
        let nf = depth as f64;
        let weights = Matrix::from_fn(dy, dx, |p, q| {
            (1..=depth)
                .map(|j| {
                    math::pow_nonneg(lambda[p], (depth - j) as f64 / nf)
                        * math::pow_nonneg(mu[q], (j - 1) as f64 / nf)
                })
                .sum()
        });
        Ok(OperatorContext {
            w: w.clone(),
            depth,
            svd,
            weights,
        })
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn svd(&self) -> &FullSvd {
        &self.svd
    }

    fn check(&self, delta: &Matrix) -> Result<()> {
        if delta.shape() != self.w.shape() {
            return Err(Error::ShapeMismatch {
                context: "A_W argument",
                expected: self.w.shape(),
                found: delta.shape(),
            });
        }
        Ok(())
    }

    fn frame(&self, delta: &Matrix) -> Matrix {
        self.svd.u.tr_matmul(delta).matmul(&self.svd.v)
    }
}

/// `A_W(Δ)` from the defining sum of fractional matrix powers.
pub fn apply_aw_definition(ctx: &OperatorContext, delta: &Matrix) -> Result<Matrix> {
    ctx.check(delta)?;
    let n = ctx.depth;
    let nf = n as f64;
    let wwt = ctx.w.matmul_tr(&ctx.w);
    let wtw = ctx.w.tr_matmul(&ctx.w);
    let mut out = Matrix::zeros(delta.rows(), delta.cols());
    for j in 1..=n {
        let left = frac_sym_power(&wwt, (n - j) as f64 / nf)?;
        let right = frac_sym_power(&wtw, (j - 1) as f64 / nf)?;
        out += &left.matmul(delta).matmul(&right);
    }
    Ok(out)
}

/// `A_W(Δ)` in the SVD frame with diagonal powers.
pub fn apply_aw_svd(ctx: &OperatorContext, delta: &Matrix) -> Result<Matrix> {
    ctx.check(delta)?;
    let b = ctx.frame(delta);
    let c = Matrix::from_fn(b.rows(), b.cols(), |p, q| b[(p, q)] * ctx.weights[(p, q)]);
    Ok(ctx.svd.u.matmul(&c).matmul_tr(&ctx.svd.v))
}

/// `⟨Δ, A_W(Δ)⟩ = Σ_pq Ω_pq (ŨᵀΔṼ)_pq²`, nonnegative by construction.
pub fn quadratic_form(ctx: &OperatorContext, delta: &Matrix) -> Result<f64> {
    ctx.check(delta)?;
    let b = ctx.frame(delta);
    Ok(b.as_slice()
        .iter()
        .zip(ctx.weights.as_slice())
        .map(|(x, w)| w * x * x)
        .sum())
}

/// `−A_W(W XXᵀ − YXᵀ)`.
pub fn induced_rhs(ctx: &OperatorContext, data: &Dataset) -> Result<Matrix> {
    let expected = (data.d_y(), data.d_x());
    if ctx.w.shape() != expected {
        return Err(Error::ShapeMismatch {
            context: "induced flow state vs dataset",
            expected,
            found: ctx.w.shape(),
        });
    }
    induced_rhs_from_moments(ctx, data.xxt(), data.yxt())
}

pub(crate) fn induced_rhs_from_moments(
    ctx: &OperatorContext,
    xxt: &Matrix,
    yxt: &Matrix,
) -> Result<Matrix> {
    let mut grad = ctx.w.matmul(xxt);
    grad -= yxt;
    Ok(-&apply_aw_svd(ctx, &grad)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gaussian_matrix, generate_instance, stream_rng, InstanceSpec};
    use proptest::prelude::*;

    fn rel(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).frobenius_norm() / (1.0 + b.frobenius_norm())
    }

    #[test]
    fn depth_one_is_identity() {
        let w = Matrix::from_rows(&[[1.0, 2.0, 0.0], [0.0, -1.0, 3.0]]);
        let d = Matrix::from_rows(&[[0.5, 1.0, -2.0], [4.0, 0.0, 1.0]]);
        let ctx = OperatorContext::new(&w, 1).unwrap();
        assert!(rel(&apply_aw_definition(&ctx, &d).unwrap(), &d) < 1e-14);
        assert!(rel(&apply_aw_svd(&ctx, &d).unwrap(), &d) < 1e-14);
        let q = quadratic_form(&ctx, &d).unwrap();
        assert!((q - d.frobenius_norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn zero_w_annihilates_for_depth_two() {
        let ctx = OperatorContext::new(&Matrix::zeros(2, 3), 2).unwrap();
        let d = Matrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64);
        assert_eq!(apply_aw_definition(&ctx, &d).unwrap().max_abs(), 0.0);
        assert_eq!(apply_aw_svd(&ctx, &d).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn hand_example() {
        let w = Matrix::from_rows(&[[2.0, 0.0], [0.0, 0.0]]);
        let ctx = OperatorContext::new(&w, 2).unwrap();
        let expected = Matrix::from_rows(&[[4.0, 0.0], [0.0, 0.0]]);
        let id = Matrix::identity(2);
        assert!(rel(&apply_aw_definition(&ctx, &id).unwrap(), &expected) < 1e-14);
        assert!(rel(&apply_aw_svd(&ctx, &id).unwrap(), &expected) < 1e-14);
    }

    #[test]
    fn quadratic_form_of_zero() {
        let ctx = OperatorContext::new(&Matrix::from_rows(&[[1.0, 2.0]]), 3).unwrap();
        assert_eq!(quadratic_form(&ctx, &Matrix::zeros(1, 2)).unwrap(), 0.0);
    }

    #[test]
    fn rank_one_closed_form() {
        // A_W(Δ) = s^{2−2/N} [P_u Δ + Δ P_v + (N − 2) P_u Δ P_v] for W = s u vᵀ.
        let u = [0.6, 0.8];
        let v = [0.0, 0.6, -0.8];
        let s = 2.5;
        let w = Matrix::outer(&u, &v).scale(s);
        let mut rng = stream_rng(11, 0);
        let d = gaussian_matrix(2, 3, &mut rng);
        for n in 1..=5usize {
            let ctx = OperatorContext::new(&w, n).unwrap();
            let pu = Matrix::outer(&u, &u);
            let pv = Matrix::outer(&v, &v);
            let nf = n as f64;
            let mut expected = &pu.matmul(&d) + &d.matmul(&pv);
            expected.axpy(nf - 2.0, &pu.matmul(&d).matmul(&pv));
            let mut expected = expected.scale(math::powf(s, 2.0 - 2.0 / nf));
            if n == 1 {
                expected = d.clone();
            }
            assert!(
                rel(&apply_aw_svd(&ctx, &d).unwrap(), &expected) < 1e-12,
                "N = {n}"
            );
        }
    }

    #[test]
    fn stationary_at_target() {
        let inst = generate_instance(&InstanceSpec {
            init_angle_deg: 0.0,
            init_scale: 1.0,
            ..Default::default()
        })
        .unwrap();
        let ctx = OperatorContext::new(&inst.w0, 3).unwrap();
        let rhs = induced_rhs(&ctx, &inst.data).unwrap();
        assert!(rhs.max_abs() < 1e-10);
    }

    #[test]
    fn origin_is_fixed() {
        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        let ctx = OperatorContext::new(&Matrix::zeros(1, 5), 2).unwrap();
        assert_eq!(induced_rhs(&ctx, &inst.data).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn whitened_rhs() {
        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        let m = inst.data.m() as f64;
        for n in [2usize, 3, 4] {
            let ctx = OperatorContext::new(&inst.w0, n).unwrap();
            let rhs = induced_rhs(&ctx, &inst.data).unwrap();
            let expected = -&apply_aw_svd(&ctx, &(&inst.w0 - &inst.target.z))
                .unwrap()
                .scale(m);
            assert!(rel(&rhs, &expected) < 1e-10);
        }
    }

    fn arb_triple() -> impl Strategy<Value = (Matrix, Matrix, Matrix, usize)> {
        (1usize..=4, 1usize..=4, 1usize..=5, any::<u64>()).prop_map(|(r, c, n, seed)| {
            let mut rng = stream_rng(seed, 0);
            (
                gaussian_matrix(r, c, &mut rng),
                gaussian_matrix(r, c, &mut rng),
                gaussian_matrix(r, c, &mut rng),
                n,
            )
        })
    }

    proptest! {
        #[test]
        fn svd_and_definition_agree((w, d, _e, n) in arb_triple()) {
            let ctx = OperatorContext::new(&w, n).unwrap();
            let a = apply_aw_definition(&ctx, &d).unwrap();
            let b = apply_aw_svd(&ctx, &d).unwrap();
            prop_assert!((&a - &b).frobenius_norm() <= 1e-9 * (1.0 + a.frobenius_norm()));
            let q = quadratic_form(&ctx, &d).unwrap();
            prop_assert!(q >= -1e-12);
            prop_assert!((q - d.inner(&a)).abs() <= 1e-9 * (1.0 + q.abs()));
        }

        #[test]
        fn linear_and_symmetric((w, d, e, n) in arb_triple(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let ctx = OperatorContext::new(&w, n).unwrap();
            let mut combo = d.scale(a);
            combo.axpy(b, &e);
            let lhs = apply_aw_svd(&ctx, &combo).unwrap();
            let mut rhs = apply_aw_svd(&ctx, &d).unwrap().scale(a);
            rhs.axpy(b, &apply_aw_svd(&ctx, &e).unwrap());
            prop_assert!((&lhs - &rhs).frobenius_norm() <= 1e-9 * (1.0 + rhs.frobenius_norm()));
            let s1 = d.inner(&apply_aw_svd(&ctx, &e).unwrap());
            let s2 = e.inner(&apply_aw_svd(&ctx, &d).unwrap());
            prop_assert!((s1 - s2).abs() <= 1e-9 * (1.0 + s1.abs()));
        }
    }
}
