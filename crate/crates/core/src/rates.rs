//! Convergence-rate envelopes for the rank-one induced flow.
//!
//! While `s_t > √6 s_Z` the distance `‖Z₁ − W_t‖²_F` decays at least at the
//! fast rate `m N s_Z^{2−2/N} ((α−γ_Z)^{2−2/N} − 2γ_Z β^{2−2/N})`; afterwards at
//! least at the slow rate `m s_Z^{2−2/N} (α(α−γ_Z)^{2−2/N} − 2γ_Z N β^{2−2/N})`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::flows::{Regime, Trajectory, RANK_ONE_TOL};
use crate::math;
use crate::matrix::dot;
use crate::spectral::{svd_full, TargetSpectrum};
use crate::stability::{Margins, StableSetParams};
use crate::{Error, Matrix, Result};

/// Default multiplier of the domination slack `κ · dt · (1 + t) · m · s_Z²`.
pub const DOMINATION_KAPPA: f64 = 10.0;

/// Relative tolerance on the envelope in domination checks.
pub const DOMINATION_REL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateParams {
    pub m: f64,
    pub depth: usize,
    pub s_z: f64,
    pub gamma_z: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `‖Z₁ − W₀‖²_F`.
    pub dist0_sq: f64,
}

impl RateParams {
    pub fn new(
        ts: &TargetSpectrum,
        params: &StableSetParams,
        m: usize,
        depth: usize,
        w0: &Matrix,
    ) -> Self {
        RateParams {
            m: m as f64,
            depth,
            s_z: ts.s_z,
            gamma_z: ts.gamma_z,
            alpha: params.alpha,
            beta: params.beta,
            dist0_sq: (&ts.z1 - w0).frobenius_norm_sq(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateExponents {
    pub fast_rate: f64,
    pub slow_rate: f64,
    /// Both rates positive (the envelopes are only claimed then).
    pub applicable: bool,
}

pub fn rate_exponents(p: &RateParams) -> RateExponents {
    let n = p.depth as f64;
    let e = 2.0 - 2.0 / n;
    let sz = math::powf(p.s_z, e);
    let lower = math::pow_nonneg((p.alpha - p.gamma_z).max(0.0), e);
    let upper = math::powf(p.beta, e);
    let fast_rate = p.m * n * sz * (lower - 2.0 * p.gamma_z * upper);
    let slow_rate = p.m * sz * (p.alpha * lower - 2.0 * p.gamma_z * n * upper);
    RateExponents {
        fast_rate,
        slow_rate,
        applicable: fast_rate > 0.0 && slow_rate > 0.0,
    }
}

/// First recorded time with `s_t ≤ √6 s_Z`; `+∞` if never.
pub fn detect_tau<S>(traj: &Trajectory<S>, ts: &TargetSpectrum) -> f64 {
    traj.metrics
        .iter()
        .zip(&traj.times)
        .find(|(r, _)| Regime::of(r.s_t, ts.s_z) == Regime::Slow)
        .map_or(f64::INFINITY, |(_, &t)| t)
}

/// Piecewise exponential envelope anchored at `dist0_sq` and, after `τ`, at
/// `dist_tau_sq`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundCurve {
    pub tau: f64,
    pub fast_rate: f64,
    pub slow_rate: f64,
    pub dist0_sq: f64,
    pub dist_tau_sq: f64,
}

impl BoundCurve {
    /// Envelope whose slow branch starts from the fast branch's value at `τ`,
    /// so the curve is continuous.
    pub fn continuous(p: &RateParams, tau: f64) -> Option<BoundCurve> {
        let r = rate_exponents(p);
        let dist_tau_sq = if tau.is_finite() {
            p.dist0_sq * math::exp(-r.fast_rate * tau)
        } else {
            0.0
        };
        BoundCurve::anchored(p, tau, dist_tau_sq)
    }

    /// Envelope whose slow branch starts from a given (typically measured)
    /// `‖Z₁ − W(τ)‖²_F`.
    pub fn anchored(p: &RateParams, tau: f64, dist_tau_sq: f64) -> Option<BoundCurve> {
        let r = rate_exponents(p);
        r.applicable.then_some(BoundCurve {
            tau,
            fast_rate: r.fast_rate,
            slow_rate: r.slow_rate,
            dist0_sq: p.dist0_sq,
            dist_tau_sq,
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        if t < self.tau {
            self.dist0_sq * math::exp(-self.fast_rate * t)
        } else {
            self.dist_tau_sq * math::exp(-self.slow_rate * (t - self.tau))
        }
    }

    /// Left limit at `τ` (the fast branch evaluated there).
    pub fn value_before_tau(&self) -> f64 {
        self.dist0_sq * math::exp(-self.fast_rate * self.tau)
    }
}

/// Envelope value at `t`, or `None` when the exponents are not both positive.
pub fn bound_curve(p: &RateParams, tau: f64, dist_tau_sq: f64, t: f64) -> Option<f64> {
    BoundCurve::anchored(p, tau, dist_tau_sq).map(|c| c.value(t))
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", content = "detail", rename_all = "kebab-case")
)]
pub enum DominationStatus {
    Checked,
    PreconditionUnmet(String),
    InapplicableExponents,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DominationReport {
    pub status: DominationStatus,
    pub tau: f64,
    pub curve: Option<BoundCurve>,
    pub violations: usize,
    /// Largest `measured − (bound · (1 + rel_tol) + slack)` over records.
    pub max_excess: f64,
    pub kappa: f64,
    /// Per record: envelope value and `bound − measured`.
    pub bound_values: Vec<f64>,
    pub margins: Vec<f64>,
}

impl DominationReport {
    fn skipped(status: DominationStatus) -> Self {
        DominationReport {
            status,
            tau: f64::NAN,
            curve: None,
            violations: 0,
            max_excess: f64::NAN,
            kappa: DOMINATION_KAPPA,
            bound_values: Vec::new(),
            margins: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == DominationStatus::Checked && self.violations == 0
    }
}

/// `κ · dt · (1 + t) · m · s_Z²`.
pub fn domination_slack(kappa: f64, dt: f64, t: f64, m: f64, s_z: f64) -> f64 {
    kappa * dt * (1.0 + t) * m * s_z * s_z
}

/// Compares recorded `‖Z₁ − W_t‖²_F` with the envelope anchored at the
/// measured distance at `τ`. The initialization must be rank one and lie in
/// `N_{α,β}(Z₁)`.
pub fn check_bound_domination<S>(
    traj: &Trajectory<S>,
    p: &RateParams,
    kappa: f64,
) -> DominationReport {
    let ts = &traj.target;
    let first = &traj.metrics[0];
    let frame = &traj.frames[0];
    if !frame.is_rank_one() {
        return DominationReport::skipped(DominationStatus::PreconditionUnmet(
            "rank(W0) != 1".into(),
        ));
    }
    let m0 = Margins::new(first.s_t, first.corr, ts, p.alpha, p.beta);
    if m0.upper <= 0.0 {
        return DominationReport::skipped(DominationStatus::PreconditionUnmet(
            "s0 >= beta * s_Z".into(),
        ));
    }
    if m0.lower <= 0.0 {
        return DominationReport::skipped(DominationStatus::PreconditionUnmet(
            "s0 <= (alpha - gamma_Z) * s_Z".into(),
        ));
    }
    if m0.alignment <= 0.0 {
        return DominationReport::skipped(DominationStatus::PreconditionUnmet(
            "u0' Z1 v0 <= alpha * s_Z".into(),
        ));
    }
    let tau = detect_tau(traj, ts);
    let dist_tau_sq = traj
        .times
        .iter()
        .position(|&t| t == tau)
        .map_or(0.0, |i| traj.metrics[i].dist_sq);
    let Some(curve) = BoundCurve::anchored(p, tau, dist_tau_sq) else {
        return DominationReport::skipped(DominationStatus::InapplicableExponents);
    };
    let dt = traj.config.dt;
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    let mut bound_values = Vec::with_capacity(traj.len());
    let mut margins = Vec::with_capacity(traj.len());
    for (row, &t) in traj.metrics.iter().zip(&traj.times) {
        let bound = curve.value(t);
        let allowed =
            bound * (1.0 + DOMINATION_REL_TOL) + domination_slack(kappa, dt, t, p.m, p.s_z);
        let excess = row.dist_sq - allowed;
        if excess > 0.0 {
            violations += 1;
        }
        max_excess = max_excess.max(excess);
        bound_values.push(bound);
        margins.push(bound - row.dist_sq);
    }
    DominationReport {
        status: DominationStatus::Checked,
        tau,
        curve: Some(curve),
        violations,
        max_excess,
        kappa,
        bound_values,
        margins,
    }
}

/// Time for the envelope to reach `eps`, with `C = dist0_sq`:
/// `ln(C/ε)/fast` if `ε > ε₀ = C e^{−fast τ}`, else
/// `ln(C/ε)/slow − τ (fast/slow − 1)`. Zero when `ε ≥ C`; `None` when the
/// exponents are inapplicable.
pub fn time_to_accuracy(p: &RateParams, tau: f64, eps: f64) -> Result<Option<f64>> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let r = rate_exponents(p);
    if !r.applicable {
        return Ok(None);
    }
    let c = p.dist0_sq;
    if eps >= c {
        return Ok(Some(0.0));
    }
    let log = math::ln(c / eps);
    let eps0 = c * math::exp(-r.fast_rate * tau);
    if eps >= eps0 {
        Ok(Some(log / r.fast_rate))
    } else {
        Ok(Some(
            log / r.slow_rate - tau * (r.fast_rate / r.slow_rate - 1.0),
        ))
    }
}

/// Right-hand side of the bound on `d/dt ½‖Z₁ − W_t‖²_F`:
/// `−2mN s^a T₁ − 2m s^a c T₂ + √2 mN s^a γ_Z √T₁ T₂ + 2m s^a s_{Z,2} T₂`,
/// with `a = 2 − 2/N`, `c = uᵀZ₁v`, `T₁ = ½(s − c)²`, `T₂ = s_Z − c`.
pub fn loss_evolution_rhs(w: &Matrix, ts: &TargetSpectrum, depth: usize, m: usize) -> Result<f64> {
    let svd = svd_full(w)?;
    let s = svd.s.first().copied().unwrap_or(0.0);
    if svd.s.get(1).copied().unwrap_or(0.0) > RANK_ONE_TOL * s {
        return Err(Error::unsupported(
            "loss evolution bound requires rank(W) = 1",
        ));
    }
    let corr = dot(&svd.u.column(0), &ts.z1.mul_vec(&svd.v.column(0)));
    Ok(loss_evolution_rhs_from(s, corr, ts, depth, m as f64))
}

/// [`loss_evolution_rhs`] from a precomputed `(s, uᵀZ₁v)`.
pub fn loss_evolution_rhs_from(
    s: f64,
    corr: f64,
    ts: &TargetSpectrum,
    depth: usize,
    m: f64,
) -> f64 {
    let n = depth as f64;
    let sa = math::pow_nonneg(s, 2.0 - 2.0 / n);
    let gap = s - corr;
    let t1 = 0.5 * gap * gap;
    let t2 = ts.s_z - corr;
    -2.0 * m * n * sa * t1 - 2.0 * m * sa * corr * t2
        + math::sqrt(2.0) * m * n * sa * ts.gamma_z * math::sqrt(t1) * t2
        + 2.0 * m * sa * ts.s_z2 * t2
}

/// Per-run outcome of comparing `dL₁,₁/dt` with [`loss_evolution_rhs`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossEvolutionReport {
    pub interior_records: usize,
    pub violations: usize,
    /// Violations exceeding twice the slack.
    pub gross_violations: usize,
    /// Largest `(lhs − rhs) / slack` over interior records.
    pub max_slack_ratio: f64,
    pub kappa: f64,
}

/// Default multiplier of the loss-evolution slack.
pub const LOSS_EVOLUTION_KAPPA: f64 = 10.0;

/// Central differences of `L₁,₁ = ½ dist_sq` against the bound, with slack
/// `κ (dt ρ² + h² ρ³) L₁,₁` where `ρ = m N s^{2−2/N}` is the local rate scale
/// and `h` the record spacing.
pub fn check_loss_evolution<S>(
    traj: &Trajectory<S>,
    m: usize,
    kappa: f64,
) -> Result<LossEvolutionReport> {
    if traj.len() < 3 {
        return Err(Error::invalid(
            "need at least three records for central differences",
        ));
    }
    if traj.frames.iter().any(|f| !f.is_rank_one()) {
        return Err(Error::unsupported(
            "loss evolution bound requires rank(W) = 1",
        ));
    }
    let ts = &traj.target;
    let mf = m as f64;
    let n = traj.depth as f64;
    let dt = traj.config.dt;
    let mut report = LossEvolutionReport {
        interior_records: 0,
        violations: 0,
        gross_violations: 0,
        max_slack_ratio: f64::NEG_INFINITY,
        kappa,
    };
    for i in 1..traj.len() - 1 {
        let row = &traj.metrics[i];
        let span = traj.times[i + 1] - traj.times[i - 1];
        let h = 0.5 * span;
        let lhs = 0.5 * (traj.metrics[i + 1].dist_sq - traj.metrics[i - 1].dist_sq) / span;
        let rhs = loss_evolution_rhs_from(row.s_t, row.corr, ts, traj.depth, mf);
        let rho = mf * n * math::pow_nonneg(row.s_t, 2.0 - 2.0 / n);
        let l11 = 0.5 * row.dist_sq;
        let slack = kappa * (dt * rho * rho + h * h * rho * rho * rho) * l11;
        let excess = lhs - rhs;
        report.interior_records += 1;
        if excess > slack {
            report.violations += 1;
        }
        if excess > 2.0 * slack {
            report.gross_violations += 1;
        }
        let ratio = if slack > 0.0 {
            excess / slack
        } else if excess > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        report.max_slack_ratio = report.max_slack_ratio.max(ratio);
    }
    Ok(report)
}

/// Counts records with `s_t > √6 s_Z` and those among them violating
/// `½(s − c)² ≥ s_Z (s_Z − c)` beyond `1e-12`.
pub fn fast_regime_sufficiency<S>(traj: &Trajectory<S>) -> (usize, usize) {
    let s_z = traj.target.s_z;
    let mut checked = 0;
    let mut violations = 0;
    for row in &traj.metrics {
        if Regime::of(row.s_t, s_z) == Regime::Fast {
            checked += 1;
            let gap = row.s_t - row.corr;
            if 0.5 * gap * gap < s_z * (s_z - row.corr) - 1e-12 {
                violations += 1;
            }
        }
    }
    (checked, violations)
}
