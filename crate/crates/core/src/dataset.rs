//! Training data, whitening, the regression target `Z = YXᵀ/m` and seeded
//! instance generation.
//!
//! Randomness comes from ChaCha8 keyed by `(seed, stream)`: stream 0 draws
//! `X`, stream 1 draws `Y` and stream 2 draws the rotation plane of the
//! initialization. Each stream is independent, so changing one dimension
//! does not perturb the others.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math;
use crate::matrix::{dot, normalized};
use crate::spectral::{target_spectrum, thin_svd, TargetSpectrum};
use crate::{Error, Matrix, Result};

/// Tolerance on `‖XXᵀ/m − I‖_F` for a design to count as whitened.
pub const WHITENED_TOL: f64 = 1e-8;

pub const STREAM_X: u64 = 0;
pub const STREAM_Y: u64 = 1;
pub const STREAM_ROTATION: u64 = 2;

/// Training set `X ∈ ℝ^{d_x×m}`, `Y ∈ ℝ^{d_y×m}` with cached moments.
#[derive(Clone, Debug)]
pub struct Dataset {
    x: Matrix,
    y: Matrix,
    xxt: Matrix,
    yxt: Matrix,
    whitened: bool,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(Error::ShapeMismatch {
                context: "dataset sample counts",
                expected: (y.rows(), x.cols()),
                found: y.shape(),
            });
        }
        if x.cols() == 0 {
            return Err(Error::invalid("dataset needs at least one sample"));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite);
        }
        let xxt = x.matmul_tr(&x);
        let yxt = y.matmul_tr(&x);
        let m = x.cols() as f64;
        let mut gap = xxt.scale(1.0 / m);
        gap -= &Matrix::identity(x.rows());
        let whitened = gap.frobenius_norm() <= WHITENED_TOL;
        Ok(Dataset {
            x,
            y,
            xxt,
            yxt,
            whitened,
        })
    }

    /// Whitens `x` first, then builds the dataset.
    pub fn whitened(x: &Matrix, y: Matrix) -> Result<Self> {
        Dataset::new(whiten(x)?, y)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn m(&self) -> usize {
        self.x.cols()
    }

    pub fn d_x(&self) -> usize {
        self.x.rows()
    }

    pub fn d_y(&self) -> usize {
        self.y.rows()
    }

    pub fn xxt(&self) -> &Matrix {
        &self.xxt
    }

    pub fn yxt(&self) -> &Matrix {
        &self.yxt
    }

    pub fn is_whitened(&self) -> bool {
        self.whitened
    }

    /// `½‖Y − W X‖²_F` for an end-to-end matrix `W`.
    pub fn loss_of_product(&self, w: &Matrix) -> f64 {
        let resid = &self.y - &w.matmul(&self.x);
        0.5 * resid.frobenius_norm_sq()
    }
}

/// `√m · U Vᵀ` from the thin SVD `X = U S Vᵀ`; requires full row rank.
pub fn whiten(x: &Matrix) -> Result<Matrix> {
    let (d, m) = x.shape();
    let svd = thin_svd(x)?;
    if svd.k() < d {
        return Err(Error::WhiteningInfeasible {
            rank: svd.k(),
            rows: d,
        });
    }
    let uvt = svd.left_vectors.matmul_tr(&svd.right_vectors);
    Ok(uvt.scale(math::sqrt(m as f64)))
}

/// Spectral data of `Z = YXᵀ/m` for whitened data.
pub fn compute_z(data: &Dataset) -> Result<TargetSpectrum> {
    if !data.is_whitened() {
        return Err(Error::NotWhitened);
    }
    target_spectrum(&data.yxt.scale(1.0 / data.m() as f64))
}

/// ChaCha8 generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Matrix with i.i.d. standard normal entries, filled row-major.
pub fn gaussian_matrix<R: RngCore + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn gaussian_vector<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Parameters of a random instance.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstanceSpec {
    pub d_x: usize,
    pub d_y: usize,
    pub m: usize,
    pub seed: u64,
    pub init_angle_deg: f64,
    /// `‖W_0‖₂ / ‖Z‖₂`.
    pub init_scale: f64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec {
            d_x: 5,
            d_y: 1,
            m: 50,
            seed: 0,
            init_angle_deg: 30.0,
            init_scale: 10.0,
        }
    }
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 || self.d_y == 0 || self.m == 0 {
            return Err(Error::invalid("instance dimensions must be positive"));
        }
        if self.m < self.d_x {
            return Err(Error::invalid("whitening needs m >= d_x"));
        }
        if !self.init_angle_deg.is_finite() || !self.init_scale.is_finite() || self.init_scale < 0.0
        {
            return Err(Error::invalid(
                "init angle and scale must be finite, scale >= 0",
            ));
        }
        Ok(())
    }
}

/// A generated problem: whitened data, its target, and a rank-one start.
#[derive(Clone, Debug)]
pub struct Instance {
    pub data: Dataset,
    pub target: TargetSpectrum,
    pub w0: Matrix,
}

/// Rotates the unit vector `v` by `angle` radians inside the plane spanned by
/// `v` and a random direction orthogonal to it.
fn rotate_in_random_plane<R: RngCore>(v: &[f64], angle: f64, rng: &mut R) -> Result<Vec<f64>> {
    // Always draw, so the stream position does not depend on the angle.
    let mut g = gaussian_vector(v.len(), rng);
    if angle == 0.0 {
        return Ok(v.to_vec());
    }
    let c = dot(&g, v);
    for (gi, vi) in g.iter_mut().zip(v) {
        *gi -= c * vi;
    }
    let w = normalized(&g).ok_or_else(|| Error::invalid("rotation needs dimension >= 2"))?;
    let (ca, sa) = (math::cos(angle), math::sin(angle));
    Ok(v.iter().zip(&w).map(|(a, b)| ca * a + sa * b).collect())
}

/// Seeded instance: Gaussian `X` (whitened) and `Y`, and
/// `W_0 = s_0 u_0 v_0ᵀ` where `s_0 = init_scale · s_Z` and `(u_0, v_0)` is
/// `(u_Z, v_Z)` rotated by exactly `init_angle_deg` in random planes. For
/// `d_y = 1` only `v_Z` is rotated.
pub fn generate_instance(spec: &InstanceSpec) -> Result<Instance> {
    spec.validate()?;
    let raw_x = gaussian_matrix(spec.d_x, spec.m, &mut stream_rng(spec.seed, STREAM_X));
    let y = gaussian_matrix(spec.d_y, spec.m, &mut stream_rng(spec.seed, STREAM_Y));
    let data = Dataset::whitened(&raw_x, y)?;
    let target = compute_z(&data)?;

    let angle = spec.init_angle_deg.to_radians();
    let mut rng = stream_rng(spec.seed, STREAM_ROTATION);
    let v0 = rotate_in_random_plane(&target.v_z, angle, &mut rng)?;
    let u0 = if spec.d_y == 1 {
        target.u_z.clone()
    } else {
        rotate_in_random_plane(&target.u_z, angle, &mut rng)?
    };
    let w0 = Matrix::outer(&u0, &v0).scale(spec.init_scale * target.s_z);
    Ok(Instance { data, target, w0 })
}
