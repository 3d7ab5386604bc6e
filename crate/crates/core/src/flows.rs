//! Time integration of the factor gradient flow and the induced end-to-end
//! flow, with per-record metrics and checkers for the singular value and
//! singular vector ODEs of rank-one trajectories.

use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::induced::{induced_rhs_from_moments, OperatorContext};
use crate::math;
use crate::matrix::{dot, norm};
use crate::network::{
    balance_residual, end_to_end, gradient_from_moments, min_width, LayerGradient, LinearNetwork,
};
use crate::spectral::{numerical_rank, svd_full, target_spectrum, TargetSpectrum};
use crate::{Error, Matrix, Result};

/// States whose norm exceeds this abort the integration.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Second singular value above `RANK_ONE_TOL · s_1` means "not rank one".
pub const RANK_ONE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Method {
    ExplicitEuler,
    Rk4,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::ExplicitEuler,
            dt: 1e-6,
            steps: 100_000,
            record_every: 100,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive and finite"));
        }
        if self.steps == 0 || self.record_every == 0 {
            return Err(Error::invalid("steps and record_every must be positive"));
        }
        Ok(())
    }

    /// Simulated horizon `dt · steps`.
    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }
}

/// Which side of the `√6 · s_Z` threshold the leading singular value is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Regime {
    Fast,
    Slow,
}

impl Regime {
    pub fn of(s: f64, s_z: f64) -> Regime {
        if s > math::sqrt(6.0) * s_z {
            Regime::Fast
        } else {
            Regime::Slow
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Fast => "fast",
            Regime::Slow => "slow",
        }
    }
}

/// Metrics recorded alongside each state.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsRow {
    /// `½‖Y − WX‖²_F`.
    pub loss: f64,
    /// `‖Z₁ − W‖²_F`.
    pub dist_sq: f64,
    pub s_t: f64,
    /// `u_tᵀ Z₁ v_t`.
    pub corr: f64,
    /// Factor flow only; `NaN` for the induced flow.
    pub balance_residual: f64,
    /// `σ_r(W)` with `r` the rank the flow is expected to preserve.
    pub min_sv: f64,
    pub regime: Regime,
}

/// Leading singular triple of a recorded state, sign-continuous in time.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralFrame {
    pub u: Vec<f64>,
    pub s: f64,
    pub v: Vec<f64>,
    pub second_sv: f64,
}

impl SpectralFrame {
    pub fn is_rank_one(&self) -> bool {
        self.second_sv <= RANK_ONE_TOL * self.s
    }
}

/// Recorded flow: `times[i]`, `states[i]`, `metrics[i]`, `frames[i]`.
#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub metrics: Vec<MetricsRow>,
    pub frames: Vec<SpectralFrame>,
    pub depth: usize,
    pub config: IntegratorConfig,
    pub target: TargetSpectrum,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn series(&self, f: impl Fn(&MetricsRow) -> f64) -> Vec<f64> {
        self.metrics.iter().map(f).collect()
    }

    pub fn last_metrics(&self) -> &MetricsRow {
        self.metrics
            .last()
            .expect("trajectories hold at least one record")
    }
}

/// End-to-end matrix of a recorded state.
pub trait FlowState {
    fn product(&self) -> Matrix;
}

impl FlowState for Matrix {
    fn product(&self) -> Matrix {
        self.clone()
    }
}

impl FlowState for LinearNetwork {
    fn product(&self) -> Matrix {
        end_to_end(self)
    }
}

/// `Z = YXᵀ/m` as used by the metrics; meaningful for whitened data.
fn nominal_target(data: &Dataset) -> Result<TargetSpectrum> {
    target_spectrum(&data.yxt().scale(1.0 / data.m() as f64))
}

struct Recorder<'a> {
    data: &'a Dataset,
    target: TargetSpectrum,
    rank: usize,
    prev: Option<SpectralFrame>,
}

impl Recorder<'_> {
    fn frame(&mut self, w: &Matrix) -> Result<(SpectralFrame, f64)> {
        let svd = svd_full(w)?;
        let mut u = svd.u.column(0);
        let mut v = svd.v.column(0);
        let s = svd.s.first().copied().unwrap_or(0.0);
        let reference = match &self.prev {
            Some(p) => dot(&p.u, &u) + dot(&p.v, &v),
            None => dot(&self.target.u_z, &u) + dot(&self.target.v_z, &v),
        };
        if reference < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let second_sv = svd.s.get(1).copied().unwrap_or(0.0);
        let min_sv = if self.rank == 0 {
            0.0
        } else {
            svd.s.get(self.rank - 1).copied().unwrap_or(0.0)
        };
        let frame = SpectralFrame { u, s, v, second_sv };
        self.prev = Some(frame.clone());
        Ok((frame, min_sv))
    }

    fn metrics(&mut self, w: &Matrix, balance: f64) -> Result<(MetricsRow, SpectralFrame)> {
        let (frame, min_sv) = self.frame(w)?;
        let corr = dot(&frame.u, &self.target.z1.mul_vec(&frame.v));
        let row = MetricsRow {
            loss: self.data.loss_of_product(w),
            dist_sq: (&self.target.z1 - w).frobenius_norm_sq(),
            s_t: frame.s,
            corr,
            balance_residual: balance,
            min_sv,
            regime: Regime::of(frame.s, self.target.s_z),
        };
        Ok((row, frame))
    }
}

fn diverged(norm: f64, finite: bool) -> bool {
    !finite || !(norm <= DIVERGENCE_NORM)
}

/// Integrates `Ẇ_j = −∇_{W_j} L_N` for all layers simultaneously.
pub fn integrate_factor_flow(
    net0: &LinearNetwork,
    data: &Dataset,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<LinearNetwork>> {
    cfg.validate()?;
    let dims = net0.dims();
    if dims[0] != data.d_x() || dims[dims.len() - 1] != data.d_y() {
        return Err(Error::ShapeMismatch {
            context: "network vs dataset (d_y, d_x)",
            expected: (data.d_y(), data.d_x()),
            found: (dims[dims.len() - 1], dims[0]),
        });
    }
    let target = nominal_target(data)?;
    let mut rec = Recorder {
        data,
        target: target.clone(),
        rank: min_width(net0),
        prev: None,
    };
    let (xxt, yxt) = (data.xxt(), data.yxt());
    let grad = |n: &LinearNetwork| gradient_from_moments(n, xxt, yxt);

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        metrics: Vec::new(),
        frames: Vec::new(),
        depth: net0.depth(),
        config: cfg.clone(),
        target,
    };
    let mut record =
        |traj: &mut Trajectory<LinearNetwork>, step: usize, net: &LinearNetwork| -> Result<()> {
            let (row, frame) = rec.metrics(&end_to_end(net), balance_residual(net))?;
            traj.times.push(step as f64 * cfg.dt);
            traj.states.push(net.clone());
            traj.metrics.push(row);
            traj.frames.push(frame);
            Ok(())
        };

    let mut net = net0.clone();
    record(&mut traj, 0, &net)?;
    let h = cfg.dt;
    for step in 1..=cfg.steps {
        net = match cfg.method {
            Method::ExplicitEuler => net.stepped(-h, &grad(&net)),
            Method::Rk4 => {
                let k1 = grad(&net);
                let k2 = grad(&net.stepped(-0.5 * h, &k1));
                let k3 = grad(&net.stepped(-0.5 * h, &k2));
                let k4 = grad(&net.stepped(-h, &k3));
                let sum: LayerGradient = k1
                    .add_scaled(2.0, &k2)
                    .add_scaled(2.0, &k3)
                    .add_scaled(1.0, &k4);
                net.stepped(-h / 6.0, &sum)
            }
        };
        if diverged(net.parameter_norm(), net.is_finite()) {
            return Err(Error::Divergence { step });
        }
        if step % cfg.record_every == 0 || step == cfg.steps {
            record(&mut traj, step, &net)?;
        }
    }
    Ok(traj)
}

/// Integrates `Ẇ = −A_W(WXXᵀ − YXᵀ)` for depth `depth`.
pub fn integrate_induced_flow(
    w0: &Matrix,
    depth: usize,
    data: &Dataset,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<Matrix>> {
    cfg.validate()?;
    if w0.shape() != (data.d_y(), data.d_x()) {
        return Err(Error::ShapeMismatch {
            context: "induced flow state vs dataset",
            expected: (data.d_y(), data.d_x()),
            found: w0.shape(),
        });
    }
    let target = nominal_target(data)?;
    let rank = numerical_rank(&svd_full(w0)?.s).max(1);
    let mut rec = Recorder {
        data,
        target: target.clone(),
        rank,
        prev: None,
    };
    let (xxt, yxt) = (data.xxt(), data.yxt());
    let rhs = |w: &Matrix| -> Result<Matrix> {
        induced_rhs_from_moments(&OperatorContext::new(w, depth)?, xxt, yxt)
    };

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        metrics: Vec::new(),
        frames: Vec::new(),
        depth,
        config: cfg.clone(),
        target,
    };
    let mut record = |traj: &mut Trajectory<Matrix>, step: usize, w: &Matrix| -> Result<()> {
        let (row, frame) = rec.metrics(w, f64::NAN)?;
        traj.times.push(step as f64 * cfg.dt);
        traj.states.push(w.clone());
        traj.metrics.push(row);
        traj.frames.push(frame);
        Ok(())
    };

    let mut w = w0.clone();
    record(&mut traj, 0, &w)?;
    let h = cfg.dt;
    let shifted = |w: &Matrix, a: f64, k: &Matrix| {
        let mut out = w.clone();
        out.axpy(a, k);
        out
    };
    for step in 1..=cfg.steps {
        let next = match cfg.method {
            Method::ExplicitEuler => rhs(&w).map(|k| shifted(&w, h, &k)),
            Method::Rk4 => (|| {
                let k1 = rhs(&w)?;
                let k2 = rhs(&shifted(&w, 0.5 * h, &k1))?;
                let k3 = rhs(&shifted(&w, 0.5 * h, &k2))?;
                let k4 = rhs(&shifted(&w, h, &k3))?;
                let mut out = shifted(&w, h / 6.0, &k1);
                out.axpy(h / 3.0, &k2);
                out.axpy(h / 3.0, &k3);
                out.axpy(h / 6.0, &k4);
                Ok(out)
            })(),
        };
        // A non-finite intermediate state makes the SVD reject its input.
        w = match next {
            Ok(n) => n,
            Err(Error::NonFinite) => return Err(Error::Divergence { step }),
            Err(e) => return Err(e),
        };
        if diverged(w.frobenius_norm(), w.is_finite()) {
            return Err(Error::Divergence { step });
        }
        if step % cfg.record_every == 0 || step == cfg.steps {
            record(&mut traj, step, &w)?;
        }
    }
    Ok(traj)
}

/// Max over records of `‖W_N⋯W_1 − W‖_F` between a factor and an induced run.
pub fn check_product_consistency(
    factor: &Trajectory<LinearNetwork>,
    induced: &Trajectory<Matrix>,
) -> Result<f64> {
    if factor.len() != induced.len() {
        return Err(Error::MismatchedGrid);
    }
    for (a, b) in factor.times.iter().zip(&induced.times) {
        if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
            return Err(Error::MismatchedGrid);
        }
    }
    Ok(factor
        .states
        .iter()
        .zip(&induced.states)
        .map(|(net, w)| (&end_to_end(net) - w).frobenius_norm())
        .fold(0.0, f64::max))
}

/// Comparison of finite differences against a closed-form derivative.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OdeCheckReport {
    /// `max_i |fd_i − cf_i| / max(|cf_i|, floor)`.
    pub max_rel_error: f64,
    /// Largest `|cf_i|` among the checked records.
    pub max_closed_form: f64,
    /// Denominator floor, `ODE_FLOOR · max_closed_form`.
    pub floor: f64,
    pub records_checked: usize,
    /// Largest angle (radians) between finite-difference and closed-form
    /// vectors; zero for the scalar checker.
    pub max_angle: f64,
}

/// Relative floor on the denominator of [`OdeCheckReport::max_rel_error`],
/// so zero crossings of the derivative do not dominate the report.
pub const ODE_FLOOR: f64 = 1e-3;

fn check_rank_one<S>(traj: &Trajectory<S>) -> Result<()> {
    if traj.frames.iter().any(|f| !f.is_rank_one()) {
        return Err(Error::unsupported(
            "singular ODE checks require a rank-one trajectory",
        ));
    }
    if traj.len() < 3 {
        return Err(Error::invalid(
            "need at least three records for central differences",
        ));
    }
    Ok(())
}

/// Indices of the middle 80% of interior records.
fn middle_records(len: usize) -> core::ops::Range<usize> {
    let cut = len / 10;
    let lo = cut.max(1);
    let hi = (len - cut).min(len - 1);
    lo..hi.max(lo)
}

/// Central differences of `s_t` against `ṡ = −N s^{2−2/N} uᵀ ∇L₁(W) v`,
/// `∇L₁(W) = WXXᵀ − YXᵀ`.
pub fn check_singular_value_ode<S: FlowState>(
    traj: &Trajectory<S>,
    data: &Dataset,
    depth: usize,
) -> Result<OdeCheckReport> {
    check_rank_one(traj)?;
    let nf = depth as f64;
    let range = middle_records(traj.len());
    let mut pairs = Vec::with_capacity(range.len());
    for i in range {
        let f = &traj.frames[i];
        let w = traj.states[i].product();
        let mut grad = w.matmul(data.xxt());
        grad -= data.yxt();
        let cf = -nf * math::powf(f.s, 2.0 - 2.0 / nf) * dot(&f.u, &grad.mul_vec(&f.v));
        let span = traj.times[i + 1] - traj.times[i - 1];
        let fd = (traj.frames[i + 1].s - traj.frames[i - 1].s) / span;
        pairs.push((fd, cf));
    }
    let max_cf = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let floor = ODE_FLOOR * max_cf;
    let max_rel_error = pairs
        .iter()
        .map(|(fd, cf)| {
            let denom = cf.abs().max(floor);
            if denom == 0.0 {
                fd.abs()
            } else {
                (fd - cf).abs() / denom
            }
        })
        .fold(0.0, f64::max);
    Ok(OdeCheckReport {
        max_rel_error,
        max_closed_form: max_cf,
        floor,
        records_checked: pairs.len(),
        max_angle: 0.0,
    })
}

fn project_out(x: &[f64], dir: &[f64]) -> Vec<f64> {
    let c = dot(x, dir);
    x.iter().zip(dir).map(|(a, b)| a - c * b).collect()
}

fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    math::acos((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Central differences of `u_t`, `v_t` against
/// `u̇ = m s^{1−2/N} (I − u uᵀ) Z v` and `v̇ = m s^{1−2/N} (I − v vᵀ) Zᵀ u`
/// (whitened data).
pub fn check_singular_vector_ode<S: FlowState>(
    traj: &Trajectory<S>,
    data: &Dataset,
    depth: usize,
) -> Result<OdeCheckReport> {
    check_rank_one(traj)?;
    if !data.is_whitened() {
        return Err(Error::NotWhitened);
    }
    let z = &traj.target.z;
    let m = data.m() as f64;
    let nf = depth as f64;
    let range = middle_records(traj.len());
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(2 * range.len());
    for i in range {
        let f = &traj.frames[i];
        let c = m * math::powf(f.s, 1.0 - 2.0 / nf);
        let span = traj.times[i + 1] - traj.times[i - 1];
        let (prev, next) = (&traj.frames[i - 1], &traj.frames[i + 1]);
        let du: Vec<f64> = next
            .u
            .iter()
            .zip(&prev.u)
            .map(|(a, b)| (a - b) / span)
            .collect();
        let dv: Vec<f64> = next
            .v
            .iter()
            .zip(&prev.v)
            .map(|(a, b)| (a - b) / span)
            .collect();
        let cu: Vec<f64> = project_out(&z.mul_vec(&f.v), &f.u)
            .iter()
            .map(|x| c * x)
            .collect();
        let cv: Vec<f64> = project_out(&z.tr_mul_vec(&f.u), &f.v)
            .iter()
            .map(|x| c * x)
            .collect();
        pairs.push((du, cu));
        pairs.push((dv, cv));
    }
    let max_cf = pairs.iter().map(|p| norm(&p.1)).fold(0.0, f64::max);
    let floor = ODE_FLOOR * max_cf;
    let mut max_rel_error: f64 = 0.0;
    let mut max_angle: f64 = 0.0;
    for (fd, cf) in &pairs {
        let diff: Vec<f64> = fd.iter().zip(cf).map(|(a, b)| a - b).collect();
        let denom = norm(cf).max(floor);
        let err = if denom == 0.0 {
            norm(&diff)
        } else {
            norm(&diff) / denom
        };
        max_rel_error = max_rel_error.max(err);
        if norm(cf) > floor {
            max_angle = max_angle.max(angle_between(fd, cf));
        }
    }
    Ok(OdeCheckReport {
        max_rel_error,
        max_closed_form: max_cf,
        floor,
        records_checked: pairs.len() / 2,
        max_angle,
    })
}

/// Alignment of a recorded frame with the target's leading triple.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlignmentDiagnostics {
    /// `u_Zᵀ u_t`.
    pub a_t: f64,
    /// `v_Zᵀ v_t`.
    pub b_t: f64,
    /// `½ (s_t − u_tᵀ Z₁ v_t)²`.
    pub t1: f64,
    /// `s_Z − u_tᵀ Z₁ v_t`.
    pub t2: f64,
}

pub fn alignment(frame: &SpectralFrame, ts: &TargetSpectrum) -> AlignmentDiagnostics {
    let corr = dot(&frame.u, &ts.z1.mul_vec(&frame.v));
    let gap = frame.s - corr;
    AlignmentDiagnostics {
        a_t: dot(&ts.u_z, &frame.u),
        b_t: dot(&ts.v_z, &frame.v),
        t1: 0.5 * gap * gap,
        t2: ts.s_z - corr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_instance, InstanceSpec};
    use crate::network::balanced_factorization;

    fn short(method: Method) -> IntegratorConfig {
        IntegratorConfig {
            method,
            dt: 1e-5,
            steps: 200,
            record_every: 10,
        }
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        assert!((IntegratorConfig::default().horizon() - 0.1).abs() < 1e-15);
        let bad = IntegratorConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IntegratorConfig {
            record_every: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn record_grid() {
        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        let cfg = IntegratorConfig {
            dt: 1e-6,
            steps: 25,
            record_every: 10,
            method: Method::ExplicitEuler,
        };
        let traj = integrate_induced_flow(&inst.w0, 2, &inst.data, &cfg).unwrap();
        assert_eq!(traj.len(), 4);
        assert_eq!(traj.times[0], 0.0);
        assert!((traj.times[3] - 25e-6).abs() < 1e-18);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.metrics.len(), traj.states.len());
    }

    #[test]
    fn target_is_fixed_point() {
        let spec = InstanceSpec {
            init_angle_deg: 0.0,
            init_scale: 1.0,
            ..Default::default()
        };
        let inst = generate_instance(&spec).unwrap();
        for method in [Method::ExplicitEuler, Method::Rk4] {
            let traj = integrate_induced_flow(&inst.w0, 3, &inst.data, &short(method)).unwrap();
            let last = traj.states.last().unwrap();
            assert!((last - &inst.w0).max_abs() < 1e-10);

            let net = balanced_factorization(&inst.w0, &[5, 1, 1, 1]).unwrap();
            let traj = integrate_factor_flow(&net, &inst.data, &short(method)).unwrap();
            assert!((&end_to_end(traj.states.last().unwrap()) - &inst.w0).max_abs() < 1e-10);
        }
    }

    #[test]
    fn zero_network_stalls() {
        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        let net = LinearNetwork::zeros(&[5, 1, 1]).unwrap();
        let traj = integrate_factor_flow(&net, &inst.data, &short(Method::ExplicitEuler)).unwrap();
        assert!(traj.states.iter().all(|n| n.parameter_norm() == 0.0));
    }

    #[test]
    fn divergence_is_reported() {
        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        let net = balanced_factorization(&inst.w0, &[5, 1, 1]).unwrap();
        let cfg = IntegratorConfig {
            dt: 1.0,
            steps: 100,
            record_every: 1,
            method: Method::ExplicitEuler,
        };
        assert!(matches!(
            integrate_factor_flow(&net, &inst.data, &cfg),
            Err(Error::Divergence { .. })
        ));
        assert!(matches!(
            integrate_induced_flow(&inst.w0, 2, &inst.data, &cfg),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn consistency_starts_at_zero_and_rejects_grids() {
        let inst = generate_instance(&InstanceSpec::default()).unwrap();
        let net = balanced_factorization(&inst.w0, &[5, 1, 1]).unwrap();
        let cfg = IntegratorConfig {
            dt: 1e-6,
            steps: 1,
            record_every: 1,
            method: Method::ExplicitEuler,
        };
        let f = integrate_factor_flow(&net, &inst.data, &cfg).unwrap();
        let i = integrate_induced_flow(&inst.w0, 2, &inst.data, &cfg).unwrap();
        assert!((&end_to_end(&f.states[0]) - &i.states[0]).frobenius_norm() < 1e-12);
        let other = IntegratorConfig { steps: 2, ..cfg };
        let i2 = integrate_induced_flow(&inst.w0, 2, &inst.data, &other).unwrap();
        assert_eq!(
            check_product_consistency(&f, &i2).unwrap_err(),
            Error::MismatchedGrid
        );
    }

    #[test]
    fn aligned_start_has_static_vectors() {
        let spec = InstanceSpec {
            init_angle_deg: 0.0,
            init_scale: 2.0,
            d_y: 2,
            ..Default::default()
        };
        let mut inst = generate_instance(&spec).unwrap();
        // Make Z rank one so alignment is exactly stationary for the vectors.
        let z1 = inst.target.z1.clone();
        let y = z1.matmul(inst.data.x());
        inst.data = Dataset::new(inst.data.x().clone(), y).unwrap();
        let cfg = IntegratorConfig {
            dt: 1e-5,
            steps: 400,
            record_every: 20,
            method: Method::Rk4,
        };
        let traj = integrate_induced_flow(&inst.w0, 2, &inst.data, &cfg).unwrap();
        let report = check_singular_vector_ode(&traj, &inst.data, 2).unwrap();
        assert!(report.max_closed_form < 1e-10);
        for f in &traj.frames {
            assert!((dot(&f.v, &inst.target.v_z).abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn alignment_at_target() {
        let inst = generate_instance(&InstanceSpec {
            init_angle_deg: 0.0,
            init_scale: 1.0,
            ..Default::default()
        })
        .unwrap();
        let cfg = IntegratorConfig {
            dt: 1e-6,
            steps: 1,
            record_every: 1,
            method: Method::ExplicitEuler,
        };
        let traj = integrate_induced_flow(&inst.w0, 2, &inst.data, &cfg).unwrap();
        let a = alignment(&traj.frames[0], &inst.target);
        assert!((a.a_t - 1.0).abs() < 1e-12 && (a.b_t - 1.0).abs() < 1e-12);
        assert!(a.t1 < 1e-24 && a.t2.abs() < 1e-12);
    }
}
