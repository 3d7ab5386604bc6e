//! Verification suites. Each suite measures quantities against pinned
//! limits and reports a [`SuiteOutcome`]; `verify` and the acceptance tests
//! share them.

use std::fmt;
use std::time::Instant;

use linflow_core::dataset::{
    gaussian_matrix, generate_instance, stream_rng, Dataset, Instance, InstanceSpec,
};
use linflow_core::flows::{
    check_product_consistency, check_singular_value_ode, check_singular_vector_ode,
    integrate_factor_flow, integrate_induced_flow, IntegratorConfig, Method, Trajectory,
};
use linflow_core::induced::{apply_aw_definition, apply_aw_svd, quadratic_form, OperatorContext};
use linflow_core::landscape::{
    classify_stationarity, global_min_value, lazy_feasibility_check, pca_global_min, Classification,
};
use linflow_core::network::{
    balanced_factorization, gradient, loss, min_width, rank_of_product, LinearNetwork,
};
use linflow_core::rates::{
    check_bound_domination, check_loss_evolution, fast_regime_sufficiency, DominationStatus,
    LossEvolutionReport, RateParams, DOMINATION_KAPPA, LOSS_EVOLUTION_KAPPA,
};
use linflow_core::spectral::{best_rank_r, svd_full, sym_eigen};
use linflow_core::stability::{in_stable_set_ab, monitor_stable_set, StableSetParams};
use linflow_core::Matrix;
use rand_chacha::rand_core::RngCore;
use serde::Serialize;

use crate::error::Result;
use crate::sweep;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    AtMost,
    Below,
    AtLeast,
    Above,
}

impl Relation {
    fn holds(self, value: f64, limit: f64) -> bool {
        match self {
            Relation::AtMost => value <= limit,
            Relation::Below => value < limit,
            Relation::AtLeast => value >= limit,
            Relation::Above => value > limit,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::Below => "<",
            Relation::AtLeast => ">=",
            Relation::Above => ">",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    pub passed: bool,
}

impl Measurement {
    pub fn new(name: impl Into<String>, value: f64, relation: Relation, limit: f64) -> Self {
        let passed = relation.holds(value, limit);
        Measurement {
            name: name.into(),
            value,
            relation,
            limit,
            passed,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Measurement::new(name, value, Relation::AtMost, limit)
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Measurement::new(name, value, Relation::AtLeast, limit)
    }

    /// A count that must be zero.
    pub fn none(name: impl Into<String>, count: usize) -> Self {
        Measurement::at_most(name, count as f64, 0.0)
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}={:.4e} ({} {:e})",
            self.name,
            self.value,
            self.relation.symbol(),
            self.limit
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
    pub notes: Vec<String>,
}

impl SuiteOutcome {
    pub fn new(name: impl Into<String>, measurements: Vec<Measurement>) -> Self {
        let passed = !measurements.is_empty() && measurements.iter().all(|m| m.passed);
        SuiteOutcome {
            name: name.into(),
            passed,
            measurements,
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn failures(&self) -> impl Iterator<Item = &Measurement> {
        self.measurements.iter().filter(|m| !m.passed)
    }
}

impl fmt::Display for SuiteOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let parts: Vec<String> = self.measurements.iter().map(ToString::to_string).collect();
        write!(f, "{status} {} {}", self.name, parts.join(" "))?;
        for n in &self.notes {
            write!(f, " [{n}]")?;
        }
        Ok(())
    }
}

fn pick<R: RngCore>(rng: &mut R, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

fn dims_label(dims: &[usize]) -> String {
    dims.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

/// Width-`width` layer dims `(d_x, w, …, w, d_y)`.
pub fn chain_dims(d_x: usize, width: usize, d_y: usize, depth: usize) -> Vec<usize> {
    let mut dims = vec![width; depth + 1];
    dims[0] = d_x;
    dims[depth] = d_y;
    dims
}

/// Same flow, `dt` halved and steps and record spacing doubled, so records
/// fall on identical times.
pub fn halved(cfg: &IntegratorConfig) -> IntegratorConfig {
    IntegratorConfig {
        dt: cfg.dt / 2.0,
        steps: cfg.steps * 2,
        record_every: cfg.record_every * 2,
        ..cfg.clone()
    }
}

/// Closed-form layer gradients against central differences of the loss on
/// random unwhitened instances with depth at most 4 and widths at most 6.
pub fn gradient_oracle(instances: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = stream_rng(seed, 10);
    let mut worst: f64 = 0.0;
    let mut worst_dims = String::new();
    for k in 0..instances {
        let depth = 1 + k % 4;
        let dims: Vec<usize> = (0..=depth).map(|_| pick(&mut rng, 1, 6)).collect();
        let m = pick(&mut rng, 2, 8);
        let x = gaussian_matrix(dims[0], m, &mut rng);
        let y = gaussian_matrix(dims[depth], m, &mut rng);
        let data = Dataset::new(x, y)?;
        let layers: Vec<Matrix> = (0..depth)
            .map(|j| gaussian_matrix(dims[j + 1], dims[j], &mut rng).scale(0.7))
            .collect();
        let net = LinearNetwork::new(layers.clone())?;
        let g = gradient(&net, &data)?;
        let mut err_sq = 0.0;
        for (j, layer) in layers.iter().enumerate() {
            for idx in 0..layer.as_slice().len() {
                let eval = |delta: f64| -> Result<f64> {
                    let mut ls = layers.clone();
                    ls[j].as_mut_slice()[idx] += delta;
                    Ok(loss(&LinearNetwork::new(ls)?, &data)?)
                };
                let h = 1e-5 * (1.0 + layer.as_slice()[idx].abs());
                let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
                let diff = fd - g.per_layer[j].as_slice()[idx];
                err_sq += diff * diff;
            }
        }
        let rel = err_sq.sqrt() / g.norm().max(1e-12);
        if rel > worst {
            worst = rel;
            worst_dims = dims_label(&dims);
        }
    }
    Ok(SuiteOutcome::new(
        "gradient-oracle",
        vec![Measurement::at_most("max_rel_error", worst, 1e-5)],
    )
    .note(format!("{instances} instances, worst dims {worst_dims}")))
}

/// Definitional (fractional powers of `WWᵀ`, `WᵀW`) against SVD-weighted
/// evaluation of `A_W`, with depths cycling through 1..=5 and every third
/// `W` rank deficient.
pub fn aw_crosscheck(pairs: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = stream_rng(seed, 11);
    let mut worst: f64 = 0.0;
    let mut min_q = f64::INFINITY;
    let mut min_def_q = f64::INFINITY;
    for k in 0..pairs {
        let depth = 1 + k % 5;
        let rows = pick(&mut rng, 1, 5);
        let cols = pick(&mut rng, 1, 5);
        let w = if k % 3 == 0 {
            let a = gaussian_matrix(rows, 1, &mut rng);
            let b = gaussian_matrix(1, cols, &mut rng);
            a.matmul(&b)
        } else {
            gaussian_matrix(rows, cols, &mut rng)
        };
        let delta = gaussian_matrix(rows, cols, &mut rng);
        let ctx = OperatorContext::new(&w, depth)?;
        let def = apply_aw_definition(&ctx, &delta)?;
        let svd = apply_aw_svd(&ctx, &delta)?;
        let rel = (&def - &svd).frobenius_norm() / svd.frobenius_norm().max(1e-300);
        worst = worst.max(rel);
        min_q = min_q.min(quadratic_form(&ctx, &delta)?);
        min_def_q = min_def_q.min(delta.inner(&def) / delta.frobenius_norm_sq().max(1e-300));
    }
    Ok(SuiteOutcome::new(
        "aw-crosscheck",
        vec![
            Measurement::at_most("max_rel_error", worst, 1e-9),
            Measurement::at_least("min_quadratic_form", min_q, 0.0),
            Measurement::at_least("min_definitional_form_ratio", min_def_q, -1e-12),
        ],
    )
    .note(format!("{pairs} pairs, N in 1..=5")))
}

/// Maximum balance residual at `cfg.dt` and the terminal residual ratio
/// after halving `dt`, per depth, from a width-one balanced initialization.
pub fn balance(
    spec: &InstanceSpec,
    depths: &[usize],
    cfg: &IntegratorConfig,
) -> Result<SuiteOutcome> {
    let inst = generate_instance(spec)?;
    let fine = halved(cfg);
    let runs = sweep::run(depths, |&n| -> Result<(usize, f64, f64, f64)> {
        let net0 = balanced_factorization(&inst.w0, &chain_dims(spec.d_x, 1, spec.d_y, n))?;
        let coarse = integrate_factor_flow(&net0, &inst.data, cfg)?;
        let halfdt = integrate_factor_flow(&net0, &inst.data, &fine)?;
        let max_res = coarse
            .series(|r| r.balance_residual)
            .into_iter()
            .fold(0.0, f64::max);
        Ok((
            n,
            max_res,
            coarse.last_metrics().balance_residual,
            halfdt.last_metrics().balance_residual,
        ))
    });
    let mut ms = Vec::new();
    for r in runs {
        let (n, max_res, end_coarse, end_fine) = r?;
        ms.push(Measurement::at_most(
            format!("N{n}_max_residual"),
            max_res,
            1e-6,
        ));
        ms.push(Measurement::at_most(
            format!("N{n}_halved_dt_ratio"),
            end_fine / end_coarse,
            0.6,
        ));
    }
    Ok(SuiteOutcome::new("balance", ms))
}

/// Ratio of the max factor-vs-induced product gap at `dt/2` to that at
/// `dt`, one run per seed with depth cycling through `depths`.
pub fn consistency(
    spec: &InstanceSpec,
    seeds: &[u64],
    depths: &[usize],
    cfg: &IntegratorConfig,
) -> Result<SuiteOutcome> {
    let fine = halved(cfg);
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, depths[i % depths.len()]))
        .collect();
    let runs = sweep::run(&jobs, |&(seed, n)| -> Result<(u64, usize, f64)> {
        let inst = generate_instance(&InstanceSpec {
            seed,
            ..spec.clone()
        })?;
        let net0 = balanced_factorization(&inst.w0, &chain_dims(spec.d_x, 1, spec.d_y, n))?;
        let gap = |c: &IntegratorConfig| -> Result<f64> {
            let f = integrate_factor_flow(&net0, &inst.data, c)?;
            let i = integrate_induced_flow(&inst.w0, n, &inst.data, c)?;
            Ok(check_product_consistency(&f, &i)?)
        };
        Ok((seed, n, gap(&fine)? / gap(cfg)?))
    });
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in runs {
        let (_, _, ratio) = r?;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    Ok(SuiteOutcome::new(
        "consistency",
        vec![
            Measurement::at_least("min_gap_ratio", lo, 0.4),
            Measurement::at_most("max_gap_ratio", hi, 0.7),
        ],
    )
    .note(format!("{} seeds", seeds.len())))
}

/// Instance parameters of the `k`-th seeded stable-set run: scales in
/// `[1.2, 1.8]·s_Z`, angles in `[5°, 35°]`.
pub fn ensemble_spec(base: &InstanceSpec, k: usize) -> InstanceSpec {
    InstanceSpec {
        d_y: 1,
        seed: base.seed + k as u64,
        init_scale: 1.2 + 0.15 * ((3 * k) % 5) as f64,
        init_angle_deg: 5.0 + ((7 * k) % 31) as f64,
        ..base.clone()
    }
}

/// Summary of one seeded induced-flow run started inside `N_{α,β}(Z₁)`.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleRun {
    pub seed: u64,
    pub depth: usize,
    pub inside_at_start: bool,
    pub first_exit_index: Option<usize>,
    pub min_margin: f64,
    /// `min_t s_t / ((α − γ_Z) s_Z)`.
    pub min_s_ratio: f64,
    /// `max_t σ₂(W_t) / s_Z`.
    pub max_second_ratio: f64,
    pub loss_evolution: Option<LossEvolutionReport>,
}

pub fn stable_set_ensemble(
    base: &InstanceSpec,
    runs: usize,
    depths: &[usize],
    params: &StableSetParams,
    cfg: &IntegratorConfig,
) -> Result<Vec<EnsembleRun>> {
    let jobs: Vec<usize> = (0..runs).collect();
    sweep::run(&jobs, |&k| -> Result<EnsembleRun> {
        let spec = ensemble_spec(base, k);
        let depth = depths[k % depths.len()];
        let inst = generate_instance(&spec)?;
        let ts = &inst.target;
        let inside_at_start = in_stable_set_ab(&inst.w0, ts, params)?;
        let traj = integrate_induced_flow(&inst.w0, depth, &inst.data, cfg)?;
        let exit = monitor_stable_set(&traj, ts, params);
        let floor = (params.alpha - ts.gamma_z) * ts.s_z;
        let min_s = traj
            .series(|r| r.s_t)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let max_second = traj.frames.iter().map(|f| f.second_sv).fold(0.0, f64::max);
        Ok(EnsembleRun {
            seed: spec.seed,
            depth,
            inside_at_start,
            first_exit_index: exit.first_exit_index,
            min_margin: exit.min_margin(),
            min_s_ratio: min_s / floor,
            max_second_ratio: max_second / ts.s_z,
            loss_evolution: check_loss_evolution(&traj, spec.m, LOSS_EVOLUTION_KAPPA).ok(),
        })
    })
    .into_iter()
    .collect()
}

/// `s_t` above half the lower stable-set boundary and `σ₂ ≤ 1e-8 s_Z`.
pub fn rank_outcome(runs: &[EnsembleRun]) -> SuiteOutcome {
    let min_ratio = runs
        .iter()
        .map(|r| r.min_s_ratio)
        .fold(f64::INFINITY, f64::min);
    let max_second = runs.iter().map(|r| r.max_second_ratio).fold(0.0, f64::max);
    SuiteOutcome::new(
        "rank",
        vec![
            Measurement::new("min_s_over_floor", min_ratio, Relation::Above, 0.5),
            Measurement::at_most("max_second_sv_over_s_z", max_second, 1e-8),
        ],
    )
    .note(format!("{} runs", runs.len()))
}

pub fn stable_set_outcome(runs: &[EnsembleRun]) -> SuiteOutcome {
    let outside = runs.iter().filter(|r| !r.inside_at_start).count();
    let exits = runs.iter().filter(|r| r.first_exit_index.is_some()).count();
    let min_margin = runs
        .iter()
        .map(|r| r.min_margin)
        .fold(f64::INFINITY, f64::min);
    SuiteOutcome::new(
        "stable-set",
        vec![
            Measurement::none("outside_at_start", outside),
            Measurement::none("exits", exits),
            Measurement::new("min_margin", min_margin, Relation::Above, 0.0),
        ],
    )
    .note(format!("{} runs", runs.len()))
}

/// Pooled over runs: fraction of interior records within the declared
/// slack and count of violations beyond twice the slack.
pub fn loss_evolution_outcome(runs: &[EnsembleRun]) -> SuiteOutcome {
    let reports: Vec<&LossEvolutionReport> = runs
        .iter()
        .filter_map(|r| r.loss_evolution.as_ref())
        .collect();
    let skipped = runs.len() - reports.len();
    let interior: usize = reports.iter().map(|r| r.interior_records).sum();
    let violations: usize = reports.iter().map(|r| r.violations).sum();
    let gross: usize = reports.iter().map(|r| r.gross_violations).sum();
    let max_ratio = reports
        .iter()
        .map(|r| r.max_slack_ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let within = if interior == 0 {
        0.0
    } else {
        1.0 - violations as f64 / interior as f64
    };
    SuiteOutcome::new(
        "loss-evolution",
        vec![
            Measurement::none("runs_not_rank_one", skipped),
            Measurement::at_least("fraction_within_slack", within, 0.99),
            Measurement::none("violations_beyond_2x_slack", gross),
        ],
    )
    .note(format!(
        "{} runs, {interior} interior records, max excess/slack {max_ratio:.3}",
        runs.len()
    ))
}

/// Finite-difference `ṡ` against the closed form at each record spacing
/// (in steps), per depth. The error at spacing `1e-4` time units must be
/// at most `1e-2` and errors must shrink as spacing shrinks.
pub fn sv_ode(
    spec: &InstanceSpec,
    depths: &[usize],
    cfg: &IntegratorConfig,
    spacings: &[usize],
) -> Result<SuiteOutcome> {
    let inst = generate_instance(spec)?;
    let jobs: Vec<(usize, usize)> = depths
        .iter()
        .flat_map(|&n| spacings.iter().map(move |&s| (n, s)))
        .collect();
    let errs = sweep::run(&jobs, |&(n, every)| -> Result<f64> {
        let c = IntegratorConfig {
            record_every: every,
            ..cfg.clone()
        };
        let traj = integrate_induced_flow(&inst.w0, n, &inst.data, &c)?;
        Ok(check_singular_value_ode(&traj, &inst.data, n)?.max_rel_error)
    });
    let errs: Vec<f64> = errs.into_iter().collect::<Result<_>>()?;
    let mut ms = Vec::new();
    let reference = (1e-4 / cfg.dt).round() as usize;
    for (d, &n) in depths.iter().enumerate() {
        let row = &errs[d * spacings.len()..(d + 1) * spacings.len()];
        let mut by_spacing: Vec<(usize, f64)> =
            spacings.iter().copied().zip(row.iter().copied()).collect();
        by_spacing.sort_by_key(|&(s, _)| std::cmp::Reverse(s));
        if let Some(&(_, e)) = by_spacing.iter().find(|(s, _)| *s == reference) {
            ms.push(Measurement::at_most(
                format!("N{n}_rel_error_h1e-4"),
                e,
                1e-2,
            ));
        }
        let nonmono = by_spacing.windows(2).filter(|w| !(w[1].1 < w[0].1)).count();
        ms.push(Measurement::none(
            format!("N{n}_non_improving_refinements"),
            nonmono,
        ));
    }
    let finest = spacings.iter().min().copied().unwrap_or(0);
    Ok(SuiteOutcome::new("sv-ode", ms).note(format!(
        "record spacings {spacings:?} steps, finest {finest}"
    )))
}

/// Finite-difference `u̇`, `v̇` against the closed forms, per depth.
pub fn uv_ode(
    spec: &InstanceSpec,
    depths: &[usize],
    cfg: &IntegratorConfig,
) -> Result<SuiteOutcome> {
    let inst = generate_instance(spec)?;
    let reps = sweep::run(depths, |&n| -> Result<(usize, f64)> {
        let traj = integrate_induced_flow(&inst.w0, n, &inst.data, cfg)?;
        Ok((
            n,
            check_singular_vector_ode(&traj, &inst.data, n)?.max_rel_error,
        ))
    });
    let mut ms = Vec::new();
    for r in reps {
        let (n, e) = r?;
        ms.push(Measurement::at_most(format!("N{n}_rel_error"), e, 1e-2));
    }
    Ok(SuiteOutcome::new("uv-ode", ms))
}

/// One compliant configuration for the rate-bound suite.
#[derive(Clone, Debug)]
pub struct RateCase {
    pub init_scale: f64,
    pub init_angle_deg: f64,
    pub params: StableSetParams,
}

/// Starting inside `N_{α,β}(Z₁)` with `γ_Z = 0`: once below and once above
/// the `√6 s_Z` threshold.
pub fn compliant_rate_cases() -> Vec<RateCase> {
    vec![
        RateCase {
            init_scale: 1.5,
            init_angle_deg: 20.0,
            params: StableSetParams {
                alpha: 0.8,
                beta: 2.0,
            },
        },
        RateCase {
            init_scale: 2.8,
            init_angle_deg: 20.0,
            params: StableSetParams {
                alpha: 0.8,
                beta: 3.0,
            },
        },
    ]
}

/// Envelope domination on every record, precondition compliance and finite
/// `τ` whenever `s₀ > √6 s_Z`.
pub fn rate_bounds(
    base: &InstanceSpec,
    cases: &[RateCase],
    seeds: &[u64],
    depths: &[usize],
    cfg: &IntegratorConfig,
) -> Result<SuiteOutcome> {
    let mut jobs = Vec::new();
    for case in cases {
        for &seed in seeds {
            for &n in depths {
                jobs.push((case.clone(), seed, n));
            }
        }
    }
    let reports = sweep::run(
        &jobs,
        |(case, seed, n)| -> Result<(bool, usize, bool, bool)> {
            let spec = InstanceSpec {
                seed: *seed,
                d_y: 1,
                init_scale: case.init_scale,
                init_angle_deg: case.init_angle_deg,
                ..base.clone()
            };
            let inst = generate_instance(&spec)?;
            let traj = integrate_induced_flow(&inst.w0, *n, &inst.data, cfg)?;
            let p = RateParams::new(&inst.target, &case.params, spec.m, *n, &inst.w0);
            let rep = check_bound_domination(&traj, &p, DOMINATION_KAPPA);
            let checked = rep.status == DominationStatus::Checked && inst.target.gamma_z == 0.0;
            let fast_start = traj.metrics[0].s_t > 6f64.sqrt() * inst.target.s_z;
            Ok((checked, rep.violations, fast_start, rep.tau.is_finite()))
        },
    );
    let mut unchecked = 0;
    let mut violations = 0;
    let mut fast = 0;
    let mut missing_tau = 0;
    for r in reports {
        let (checked, v, fast_start, tau_finite) = r?;
        unchecked += usize::from(!checked);
        violations += v;
        if fast_start {
            fast += 1;
            missing_tau += usize::from(!tau_finite);
        }
    }
    Ok(SuiteOutcome::new(
        "rate-bounds",
        vec![
            Measurement::none("noncompliant_runs", unchecked),
            Measurement::none("violations", violations),
            Measurement::none("fast_start_without_tau", missing_tau),
        ],
    )
    .note(format!(
        "{} runs, {fast} starting above sqrt(6) s_Z",
        jobs.len()
    )))
}

/// Endpoint of a factor-flow run from a balanced width-one initialization.
#[derive(Clone, Debug, Serialize)]
pub struct LandscapeRun {
    pub seed: u64,
    pub depth: usize,
    pub loss: f64,
    pub global_min: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub grad_norm: f64,
    pub classification: Classification,
}

/// Landscape settings shared by the CLI and the suites.
#[derive(Clone, Debug)]
pub struct LandscapeSetup {
    pub init_scale: f64,
    pub init_angle_deg: f64,
    pub cfg: IntegratorConfig,
    pub num_dirs: usize,
    pub direction_seed: u64,
}

impl Default for LandscapeSetup {
    fn default() -> Self {
        LandscapeSetup {
            init_scale: 1.5,
            init_angle_deg: 20.0,
            cfg: IntegratorConfig {
                method: Method::ExplicitEuler,
                dt: 1e-3,
                steps: 5000,
                record_every: 5000,
            },
            num_dirs: 64,
            direction_seed: 0,
        }
    }
}

/// `1e-6 (1 + global_min)`.
pub fn loss_gap_tolerance(global_min: f64) -> f64 {
    1e-6 * (1.0 + global_min)
}

pub fn landscape_endpoint(
    net: &LinearNetwork,
    data: &Dataset,
    setup: &LandscapeSetup,
    seed: u64,
) -> Result<LandscapeRun> {
    let l = loss(net, data)?;
    let gmv = global_min_value(data, min_width(net))?;
    let rep = classify_stationarity(net, data, setup.num_dirs, setup.direction_seed)?;
    Ok(LandscapeRun {
        seed,
        depth: net.depth(),
        loss: l,
        global_min: gmv,
        gap: (l - gmv).abs(),
        tolerance: loss_gap_tolerance(gmv),
        grad_norm: rep.grad_norm,
        classification: rep.classification,
    })
}

pub fn converge_from_instance(
    inst: &Instance,
    depth: usize,
    setup: &LandscapeSetup,
) -> Result<LinearNetwork> {
    let dims = chain_dims(inst.data.d_x(), 1, inst.data.d_y(), depth);
    let net0 = balanced_factorization(&inst.w0, &dims)?;
    let traj = integrate_factor_flow(&net0, &inst.data, &setup.cfg)?;
    Ok(traj
        .states
        .last()
        .expect("trajectory records the endpoint")
        .clone())
}

/// Converged stable-set runs against the global minimum, the zero-init
/// stall at depth 3, and the fast-regime sufficiency inequality on
/// `sufficiency` trajectories.
pub fn landscape<S>(
    base: &InstanceSpec,
    seeds: &[u64],
    depths: &[usize],
    setup: &LandscapeSetup,
    sufficiency: &[Trajectory<S>],
) -> Result<SuiteOutcome> {
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| depths.iter().map(move |&n| (s, n)))
        .collect();
    let runs = sweep::run(&jobs, |&(seed, n)| -> Result<LandscapeRun> {
        let spec = InstanceSpec {
            seed,
            init_scale: setup.init_scale,
            init_angle_deg: setup.init_angle_deg,
            ..base.clone()
        };
        let inst = generate_instance(&spec)?;
        landscape_endpoint(
            &converge_from_instance(&inst, n, setup)?,
            &inst.data,
            setup,
            seed,
        )
    });
    let runs: Vec<LandscapeRun> = runs.into_iter().collect::<Result<_>>()?;
    let worst_gap = runs.iter().map(|r| r.gap / r.tolerance).fold(0.0, f64::max);
    let not_sosp = runs
        .iter()
        .filter(|r| r.classification != Classification::SospCandidate)
        .count();

    let seed = seeds.first().copied().unwrap_or(base.seed);
    let inst = generate_instance(&InstanceSpec {
        seed,
        ..base.clone()
    })?;
    let zero = LinearNetwork::zeros(&chain_dims(inst.data.d_x(), 1, inst.data.d_y(), 3))?;
    let stalled = integrate_factor_flow(
        &zero,
        &inst.data,
        &IntegratorConfig {
            steps: 100,
            ..setup.cfg.clone()
        },
    )?;
    let end = landscape_endpoint(
        stalled.states.last().expect("endpoint"),
        &inst.data,
        setup,
        seed,
    )?;
    let half_y = 0.5 * inst.data.y().frobenius_norm_sq();
    let stall_err = (end.loss - half_y).abs() / half_y;

    let mut checked = 0;
    let mut violations = 0;
    for traj in sufficiency {
        let (c, v) = fast_regime_sufficiency(traj);
        checked += c;
        violations += v;
    }
    Ok(SuiteOutcome::new(
        "landscape",
        vec![
            Measurement::at_most("max_gap_over_tolerance", worst_gap, 1.0),
            Measurement::none("endpoints_not_sosp_candidate", not_sosp),
            Measurement::at_most("zero_init_N3_loss_rel_error", stall_err, 1e-12),
            Measurement::new(
                "zero_init_N3_gap_over_tolerance",
                end.gap / end.tolerance,
                Relation::Above,
                1.0,
            ),
            Measurement::at_least("fast_regime_records", checked as f64, 1.0),
            Measurement::none("fast_regime_violations", violations),
        ],
    )
    .note(format!(
        "{} converged runs; zero init stalls at loss {:.6} (spurious)",
        runs.len(),
        end.loss
    )))
}

/// `pca_global_min` against `½Σ_{i>r} λ_i(MMᵀ)` from a symmetric
/// eigensolver and against the best rank-`r` residual.
pub fn eym_oracle(matrices: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = stream_rng(seed, 12);
    let mut worst_eig: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    let mut worst_factor: f64 = 0.0;
    for _ in 0..matrices {
        let rows = pick(&mut rng, 1, 7);
        let cols = pick(&mut rng, 1, 7);
        let r = pick(&mut rng, 1, rows.min(cols));
        let m = gaussian_matrix(rows, cols, &mut rng);
        let min = pca_global_min(&m, r)?;
        let gram = if rows <= cols {
            m.matmul_tr(&m)
        } else {
            m.tr_matmul(&m)
        };
        let eig = sym_eigen(&gram)?;
        let tail = 0.5 * eig.values.iter().skip(r).map(|l| l.max(0.0)).sum::<f64>();
        let residual = 0.5 * (&m - &best_rank_r(&m, r)?).frobenius_norm_sq();
        let factored = 0.5 * (&m - &min.p.matmul(&min.q)).frobenius_norm_sq();
        worst_eig = worst_eig.max((min.value - tail).abs());
        worst_res = worst_res.max((min.value - residual).abs());
        worst_factor = worst_factor.max((min.value - factored).abs());
    }
    Ok(SuiteOutcome::new(
        "eym",
        vec![
            Measurement::at_most("max_gap_vs_eigen_tail", worst_eig, 1e-12),
            Measurement::at_most("max_gap_vs_best_rank_r", worst_res, 1e-12),
            Measurement::at_most("max_gap_vs_factor_residual", worst_factor, 1e-12),
        ],
    )
    .note(format!("{matrices} matrices")))
}

/// Rank of `W_N⋯W_1` for Gaussian networks with the given dims.
pub fn genericity(networks: usize, dims: &[usize], seed: u64) -> Result<SuiteOutcome> {
    let mut rng = stream_rng(seed, 13);
    let expected = dims.iter().copied().min().unwrap_or(0);
    let mut deficient = 0;
    for _ in 0..networks {
        let net =
            LinearNetwork::from_fn(dims, |_, rows, cols| gaussian_matrix(rows, cols, &mut rng))?;
        if rank_of_product(&net) != expected {
            deficient += 1;
        }
    }
    Ok(SuiteOutcome::new(
        "genericity",
        vec![Measurement::none("rank_deficient", deficient)],
    )
    .note(format!("{networks} networks {}", dims_label(dims))))
}

/// `lazy_feasibility_check(W₀, Z)` on the Fig-1 protocol and on `d_y = 2`
/// instances where `rank(Z)` exceeds the width-one embedding.
pub fn lazy(base: &InstanceSpec, seeds: &[u64]) -> Result<SuiteOutcome> {
    let mut fig1_true = 0;
    let mut embedding_true = 0;
    let mut embedding_cases = 0;
    for &seed in seeds {
        let inst = generate_instance(&InstanceSpec {
            seed,
            ..base.clone()
        })?;
        fig1_true += usize::from(lazy_feasibility_check(&inst.w0, &inst.target.z)?);
        // W₀ = Z₁ exactly would tie ‖Z − W₀‖ with s_min(Z); stay off the tie.
        for (scale, angle) in [(0.9, 0.0), (1.0, 10.0), (10.0, 30.0)] {
            let spec = InstanceSpec {
                seed,
                d_y: 2,
                init_scale: scale,
                init_angle_deg: angle,
                ..base.clone()
            };
            let inst = generate_instance(&spec)?;
            if svd_full(&inst.target.z)?.rank() > 1 {
                embedding_cases += 1;
                embedding_true += usize::from(lazy_feasibility_check(&inst.w0, &inst.target.z)?);
            }
        }
    }
    Ok(SuiteOutcome::new(
        "lazy",
        vec![
            Measurement::none("fig1_feasible", fig1_true),
            Measurement::at_least("rank_exceeding_cases", embedding_cases as f64, 1.0),
            Measurement::none("rank_exceeding_feasible", embedding_true),
        ],
    )
    .note(format!("{} Fig-1 instances", seeds.len())))
}

/// Induced-flow runs for each depth on one instance.
pub struct Fig1Runs {
    pub instance: Instance,
    pub trajectories: Vec<Trajectory<Matrix>>,
    pub seconds: f64,
}

pub fn run_fig1(spec: &InstanceSpec, depths: &[usize], cfg: &IntegratorConfig) -> Result<Fig1Runs> {
    let start = Instant::now();
    let instance = generate_instance(spec)?;
    let trajectories = sweep::run(depths, |&n| {
        integrate_induced_flow(&instance.w0, n, &instance.data, cfg)
    })
    .into_iter()
    .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Fig1Runs {
        instance,
        trajectories,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Index of the first record with `dist ≤ 0.5 dist(0)`.
pub fn half_distance_index(traj: &Trajectory<Matrix>) -> Option<usize> {
    let d0 = traj.metrics[0].dist_sq.sqrt();
    traj.metrics
        .iter()
        .position(|r| r.dist_sq.sqrt() <= 0.5 * d0)
}

/// Strictly decreasing distance for every depth and, at the record where
/// the shallowest run first halves its distance, smaller distance for
/// every deeper run.
pub fn fig1_outcome(runs: &Fig1Runs, max_seconds: f64) -> SuiteOutcome {
    let mut ms = Vec::new();
    for traj in &runs.trajectories {
        let d = traj.series(|r| r.dist_sq);
        let bad = d.windows(2).filter(|w| !(w[1] < w[0])).count();
        ms.push(Measurement::none(
            format!("N{}_non_decreasing_steps", traj.depth),
            bad,
        ));
    }
    let mut notes = Vec::new();
    let shallow = runs.trajectories.iter().min_by_key(|t| t.depth);
    match shallow.and_then(|s| half_distance_index(s).map(|i| (s, i))) {
        Some((s, i)) => {
            let ds = s.metrics[i].dist_sq.sqrt();
            let lagging = runs
                .trajectories
                .iter()
                .filter(|t| t.depth > s.depth && !(t.metrics[i].dist_sq.sqrt() < ds))
                .count();
            ms.push(Measurement::none("deeper_runs_not_ahead", lagging));
            notes.push(format!("N={} halves dist at t={:.3e}", s.depth, s.times[i]));
        }
        None => {
            ms.push(Measurement::at_least(
                "shallowest_run_halves_dist",
                0.0,
                1.0,
            ));
        }
    }
    ms.push(Measurement::at_most("seconds", runs.seconds, max_seconds));
    let mut out = SuiteOutcome::new("fig1", ms);
    out.notes = notes;
    out
}
