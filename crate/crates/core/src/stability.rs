//! Membership tests for the rank-one stable sets
//!
//! - `N_{N,α}`: `s_W > (α − γ_Z) s_Z` and `u_Wᵀ Z₁ v_W > α s_Z`,
//! - `N_{α,β}(Z₁)`: additionally `s_W < β s_Z`,
//!
//! and monitors that report the first recorded exit from them.

use alloc::vec::Vec;

use crate::flows::{Trajectory, RANK_ONE_TOL};
use crate::matrix::dot;
use crate::network::{end_to_end, min_width, LinearNetwork};
use crate::spectral::{svd_full, TargetSpectrum};
use crate::{Error, Matrix, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StableSetParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for StableSetParams {
    fn default() -> Self {
        StableSetParams {
            alpha: 0.8,
            beta: 2.0,
        }
    }
}

impl StableSetParams {
    pub fn validate(&self, gamma_z: f64) -> Result<()> {
        if !(gamma_z <= self.alpha && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in [gamma_Z, 1)"));
        }
        if !(self.beta > 1.0) {
            return Err(Error::invalid("beta must exceed 1"));
        }
        Ok(())
    }
}

/// Signed distances to each boundary; all positive means inside.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Margins {
    /// `s_W − (α − γ_Z) s_Z`.
    pub lower: f64,
    /// `β s_Z − s_W`; infinite for `N_{N,α}`.
    pub upper: f64,
    /// `u_Wᵀ Z₁ v_W − α s_Z`.
    pub alignment: f64,
}

impl Margins {
    pub fn new(s: f64, corr: f64, ts: &TargetSpectrum, alpha: f64, beta: f64) -> Margins {
        Margins {
            lower: s - (alpha - ts.gamma_z) * ts.s_z,
            upper: beta * ts.s_z - s,
            alignment: corr - alpha * ts.s_z,
        }
    }

    pub fn inside(&self) -> bool {
        self.lower > 0.0 && self.upper > 0.0 && self.alignment > 0.0
    }

    pub fn min(&self) -> f64 {
        self.lower.min(self.upper).min(self.alignment)
    }
}

fn nondegenerate(ts: &TargetSpectrum) -> Result<()> {
    if ts.degenerate {
        return Err(Error::invalid("stable sets need a nonzero target"));
    }
    Ok(())
}

/// Leading `(s, u_Wᵀ Z₁ v_W)` of a matrix of numerical rank at most one.
fn rank_one_summary(w: &Matrix, ts: &TargetSpectrum) -> Result<(f64, f64)> {
    let svd = svd_full(w)?;
    let s = svd.s.first().copied().unwrap_or(0.0);
    let second = svd.s.get(1).copied().unwrap_or(0.0);
    if second > RANK_ONE_TOL * s {
        return Err(Error::unsupported(
            "stable sets are defined for rank-one matrices",
        ));
    }
    let corr = dot(&svd.u.column(0), &ts.z1.mul_vec(&svd.v.column(0)));
    Ok((s, corr))
}

/// Whether the end-to-end product of a width-one network lies in `N_{N,α}`.
pub fn in_stable_set_factor(net: &LinearNetwork, ts: &TargetSpectrum, alpha: f64) -> Result<bool> {
    if min_width(net) != 1 {
        return Err(Error::unsupported(
            "stable set N_{N,alpha} requires minimum width 1",
        ));
    }
    nondegenerate(ts)?;
    let (s, corr) = rank_one_summary(&end_to_end(net), ts)?;
    Ok(Margins::new(s, corr, ts, alpha, f64::INFINITY).inside())
}

/// Whether a rank-one `W` lies in `N_{α,β}(Z₁)`.
pub fn in_stable_set_ab(w: &Matrix, ts: &TargetSpectrum, params: &StableSetParams) -> Result<bool> {
    nondegenerate(ts)?;
    let (s, corr) = rank_one_summary(w, ts)?;
    Ok(Margins::new(s, corr, ts, params.alpha, params.beta).inside())
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExitReport {
    pub exited: bool,
    pub first_exit_index: Option<usize>,
    pub margins: Vec<Margins>,
}

impl ExitReport {
    /// Smallest margin over all records and boundaries.
    pub fn min_margin(&self) -> f64 {
        self.margins
            .iter()
            .map(Margins::min)
            .fold(f64::INFINITY, f64::min)
    }
}

fn monitor<S>(traj: &Trajectory<S>, ts: &TargetSpectrum, alpha: f64, beta: f64) -> ExitReport {
    let margins: Vec<Margins> = traj
        .metrics
        .iter()
        .map(|r| Margins::new(r.s_t, r.corr, ts, alpha, beta))
        .collect();
    let first_exit_index = margins.iter().position(|m| !m.inside());
    ExitReport {
        exited: first_exit_index.is_some(),
        first_exit_index,
        margins,
    }
}

/// First record outside `N_{α,β}(Z₁)`, with per-record margins.
pub fn monitor_stable_set<S>(
    traj: &Trajectory<S>,
    ts: &TargetSpectrum,
    params: &StableSetParams,
) -> ExitReport {
    monitor(traj, ts, params.alpha, params.beta)
}

/// First record outside `N_{N,α}`, with per-record margins.
pub fn monitor_factor_set<S>(traj: &Trajectory<S>, ts: &TargetSpectrum, alpha: f64) -> ExitReport {
    monitor(traj, ts, alpha, f64::INFINITY)
}
