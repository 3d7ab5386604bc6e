//! The four subcommands. Each writes its artifacts under `output_dir`,
//! prints a summary to `out` and returns an error carrying the exit code.

use std::io::Write;

use linflow_core::dataset::{generate_instance, Instance, InstanceSpec};
use linflow_core::flows::{
    integrate_factor_flow, integrate_induced_flow, IntegratorConfig, Trajectory,
};
use linflow_core::landscape::{
    classify_stationarity, global_min_value, Classification, StationarityReport,
};
use linflow_core::network::{balanced_factorization, loss, min_width, LinearNetwork};
use linflow_core::rates::{
    check_bound_domination, detect_tau, DominationReport, RateParams, DOMINATION_KAPPA,
};
use linflow_core::stability::monitor_stable_set;
use serde::Serialize;

use crate::config::{Check, FlowKind, LandscapeInit, RunConfig};
use crate::error::{AppError, Result};
use crate::io::{self, ArtifactSet, BoundColumns};
use crate::plot::{self, Series};
use crate::suites::{self, EnsembleRun, LandscapeSetup, SuiteOutcome};

fn say(out: &mut dyn Write, line: impl AsRef<str>) {
    // A closed stdout should not turn a finished run into a failure.
    let _ = writeln!(out, "{}", line.as_ref());
}

fn start(cfg: &RunConfig) -> Result<ArtifactSet> {
    let mut art = ArtifactSet::new(&cfg.output_dir)?;
    io::write_json(&art.path("config.json"), cfg)?;
    Ok(art)
}

/// Threshold `√6 s_Z` between the fast and slow regimes.
fn regime_threshold(inst: &Instance) -> f64 {
    6f64.sqrt() * inst.target.s_z
}

pub fn reproduce_fig1(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut art = start(cfg)?;
    let runs = suites::run_fig1(&cfg.instance, &cfg.depth_list, &cfg.integrator)?;
    let threshold = regime_threshold(&runs.instance);
    let mut series = Vec::new();
    say(
        out,
        format!(
            "s_Z = {:.6}, horizon T = {:e}",
            runs.instance.target.s_z,
            cfg.integrator.horizon()
        ),
    );
    for traj in &runs.trajectories {
        let n = traj.depth;
        io::write_trajectory_csv(&art.path(&format!("trajectory_N{n}.csv")), traj, None)?;
        let tau = detect_tau(traj, &runs.instance.target);
        let last = traj.last_metrics();
        say(
            out,
            format!(
                "N={n}: final dist {:.6e}, s_t {:.6}, tau {tau:e}",
                last.dist_sq.sqrt(),
                last.s_t
            ),
        );
        if traj.metrics.iter().all(|r| r.s_t > threshold) {
            eprintln!(
                "warning: horizon {:e} too short for the regime transition at N={n} (s_t stays above sqrt(6) s_Z)",
                cfg.integrator.horizon()
            );
        }
        series.push(Series {
            label: format!("N={n}"),
            points: traj
                .times
                .iter()
                .zip(&traj.metrics)
                .map(|(&t, r)| (t, r.dist_sq.sqrt()))
                .collect(),
        });
    }
    let svg = plot::log_y_svg(
        "Distance to Z1 under the induced flow",
        "t",
        "||Z1 - W_t||_F",
        &series,
    );
    io::write_text(&art.path("fig1.svg"), &svg)?;
    let manifest = art.finish("reproduce-fig1", &cfg.hash())?;
    say(
        out,
        format!(
            "wrote {} files to {}",
            manifest.files.len() + 1,
            cfg.output_dir.display()
        ),
    );
    Ok(())
}

#[derive(Serialize)]
struct ExitReportFile {
    exited: bool,
    first_exit_index: Option<usize>,
    margins_csv_path: String,
}

fn simulate_one(cfg: &RunConfig, inst: &Instance, n: usize) -> Result<Trajectory<()>> {
    Ok(match cfg.simulate.flow {
        FlowKind::Induced => strip(integrate_induced_flow(
            &inst.w0,
            n,
            &inst.data,
            &cfg.integrator,
        )?),
        FlowKind::Factor => {
            let net0 = balanced_factorization(&inst.w0, &cfg.factor_dims(n))?;
            strip(integrate_factor_flow(&net0, &inst.data, &cfg.integrator)?)
        }
    })
}

/// Drops the states; the artifacts only need metrics and frames.
fn strip<S>(t: Trajectory<S>) -> Trajectory<()> {
    Trajectory {
        states: vec![(); t.states.len()],
        times: t.times,
        metrics: t.metrics,
        frames: t.frames,
        depth: t.depth,
        config: t.config,
        target: t.target,
    }
}

pub fn simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut art = start(cfg)?;
    let inst = generate_instance(&cfg.instance)?;
    let [x, y] = io::write_dataset(art.root(), &inst.data)?;
    for p in [x, y] {
        art.path(&p.file_name().expect("file name").to_string_lossy());
    }
    let results = crate::sweep::run(&cfg.depth_list, |&n| simulate_one(cfg, &inst, n));
    for (r, &n) in results.into_iter().zip(&cfg.depth_list) {
        let traj = r?;
        let exit = monitor_stable_set(&traj, &inst.target, &cfg.stable_params);
        let p = RateParams::new(
            &inst.target,
            &cfg.stable_params,
            cfg.instance.m,
            n,
            &inst.w0,
        );
        let dom: DominationReport = check_bound_domination(&traj, &p, DOMINATION_KAPPA);
        let nan = vec![f64::NAN; traj.len()];
        let (bound, margin) = if dom.bound_values.len() == traj.len() {
            (dom.bound_values.as_slice(), dom.margins.as_slice())
        } else {
            (nan.as_slice(), nan.as_slice())
        };
        let extra = BoundColumns {
            bound_value: bound,
            margin,
        };
        io::write_trajectory_csv(
            &art.path(&format!("trajectory_N{n}.csv")),
            &traj,
            Some(&extra),
        )?;
        let margins_name = format!("margins_N{n}.csv");
        io::write_text(
            &art.path(&margins_name),
            &io::margins_csv(&traj.times, &exit.margins),
        )?;
        let report = ExitReportFile {
            exited: exit.exited,
            first_exit_index: exit.first_exit_index,
            margins_csv_path: margins_name,
        };
        io::write_json(&art.path(&format!("exit_report_N{n}.json")), &report)?;
        io::write_json(
            &art.path(&format!("domination_N{n}.json")),
            &DominationSummary::from(&dom),
        )?;
        let last = traj.last_metrics();
        say(
            out,
            format!(
                "N={n}: final dist_sq {:.6e}, exited {}, domination {:?} with {} violations",
                last.dist_sq, exit.exited, dom.status, dom.violations
            ),
        );
    }
    art.finish("simulate", &cfg.hash())?;
    Ok(())
}

#[derive(Serialize)]
struct DominationSummary<'a> {
    status: &'a linflow_core::rates::DominationStatus,
    tau: f64,
    curve: &'a Option<linflow_core::rates::BoundCurve>,
    violations: usize,
    max_excess: f64,
    kappa: f64,
}

impl<'a> From<&'a DominationReport> for DominationSummary<'a> {
    fn from(r: &'a DominationReport) -> Self {
        DominationSummary {
            status: &r.status,
            tau: r.tau,
            curve: &r.curve,
            violations: r.violations,
            max_excess: r.max_excess,
            kappa: r.kappa,
        }
    }
}

#[derive(Serialize)]
struct LandscapeFile {
    depth: usize,
    init: LandscapeInit,
    probe_only: bool,
    report: StationarityReport,
    loss: f64,
    global_min: f64,
    gap: f64,
    gap_tolerance: f64,
    /// Stationary with a loss gap above tolerance.
    spurious: bool,
}

pub fn landscape(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let l = &cfg.landscape;
    let mut art = start(cfg)?;
    let spec = InstanceSpec {
        init_scale: l.init_scale,
        init_angle_deg: l.init_angle_deg,
        ..cfg.instance.clone()
    };
    let inst = generate_instance(&spec)?;
    let dims = cfg.factor_dims(l.depth);
    let net0 = match l.init {
        LandscapeInit::Instance => balanced_factorization(&inst.w0, &dims)?,
        LandscapeInit::Zero => LinearNetwork::zeros(&dims)?,
    };
    let net = if l.probe_only {
        net0
    } else {
        let ic = IntegratorConfig {
            dt: l.dt,
            steps: l.steps,
            record_every: l.steps,
            ..cfg.integrator.clone()
        };
        integrate_factor_flow(&net0, &inst.data, &ic)?
            .states
            .pop()
            .expect("endpoint recorded")
    };
    let report = classify_stationarity(&net, &inst.data, l.num_dirs, l.direction_seed)?;
    let value = loss(&net, &inst.data)?;
    let gmv = global_min_value(&inst.data, min_width(&net))?;
    let gap = (value - gmv).abs();
    let tol = suites::loss_gap_tolerance(gmv);
    let stationary = report.classification != Classification::NotStationary;
    let file = LandscapeFile {
        depth: l.depth,
        init: l.init,
        probe_only: l.probe_only,
        report: report.clone(),
        loss: value,
        global_min: gmv,
        gap,
        gap_tolerance: tol,
        spurious: stationary && gap > tol,
    };
    io::write_json(&art.path("stationarity.json"), &file)?;
    art.finish("landscape", &cfg.hash())?;

    say(
        out,
        format!(
            "N={}: grad_norm {:.3e} (tol {:.3e}), min second-order form {:.3e} over {} directions",
            l.depth,
            report.grad_norm,
            report.fosp_tol,
            report.min_quadratic_form,
            report.directions_sampled
        ),
    );
    say(
        out,
        format!("loss {value:.12e}, global min {gmv:.12e}, gap {gap:.3e} (tol {tol:.3e})"),
    );
    match report.classification {
        Classification::StrictSaddle => say(
            out,
            format!(
                "strict saddle: a descent direction has second-order form {:.6e} < -{:.3e}",
                report.min_quadratic_form, report.sosp_tol
            ),
        ),
        Classification::SospCandidate if file.spurious => say(
            out,
            "sosp-candidate with a positive loss gap: spurious stationary point",
        ),
        Classification::SospCandidate => say(out, "sosp-candidate at the global minimum"),
        Classification::NotStationary => {
            return Err(AppError::NonStationary(format!(
                "grad_norm {:.3e} exceeds {:.3e} after {} steps",
                report.grad_norm,
                report.fosp_tol,
                if l.probe_only { 0 } else { l.steps }
            )))
        }
    }
    Ok(())
}

/// Suite results in the order of `cfg.checks`.
pub fn run_checks(cfg: &RunConfig) -> Result<Vec<(Check, Vec<SuiteOutcome>)>> {
    let v = &cfg.verify;
    let seeds: Vec<u64> = (0..v.seeds as u64).map(|k| cfg.instance.seed + k).collect();
    let depths = &cfg.depth_list;
    let integ = &cfg.integrator;
    let mut ensemble: Option<Vec<EnsembleRun>> = None;
    let mut results = Vec::new();
    for &check in &cfg.checks {
        let mut get_ensemble = || -> Result<Vec<EnsembleRun>> {
            if ensemble.is_none() {
                ensemble = Some(suites::stable_set_ensemble(
                    &cfg.instance,
                    v.runs,
                    depths,
                    &cfg.stable_params,
                    integ,
                )?);
            }
            Ok(ensemble.clone().unwrap_or_default())
        };
        let spacing = ((1e-4 / integ.dt).round() as usize).max(1);
        let attempt: Result<Vec<SuiteOutcome>> = match check {
            Check::GradientOracle => {
                suites::gradient_oracle(v.gradient_instances, cfg.instance.seed).map(|o| vec![o])
            }
            Check::AwCrosscheck => {
                suites::aw_crosscheck(v.aw_pairs, cfg.instance.seed).map(|o| vec![o])
            }
            Check::Balance => suites::balance(&cfg.instance, depths, integ).and_then(|b| {
                Ok(vec![
                    b,
                    suites::consistency(&cfg.instance, &seeds, depths, integ)?,
                ])
            }),
            Check::Rank => get_ensemble().map(|e| vec![suites::rank_outcome(&e)]),
            Check::StableSet => get_ensemble().map(|e| vec![suites::stable_set_outcome(&e)]),
            Check::LossEvolution => {
                get_ensemble().map(|e| vec![suites::loss_evolution_outcome(&e)])
            }
            Check::SvOde => {
                let mut spacings = vec![4 * spacing, 2 * spacing, spacing];
                if spacing >= 2 {
                    spacings.push(spacing / 2);
                }
                suites::sv_ode(&cfg.instance, depths, integ, &spacings).map(|o| vec![o])
            }
            Check::UvOde => {
                let c = IntegratorConfig {
                    record_every: spacing,
                    ..integ.clone()
                };
                suites::uv_ode(&cfg.instance, depths, &c).map(|o| vec![o])
            }
            Check::RateBounds => suites::rate_bounds(
                &cfg.instance,
                &suites::compliant_rate_cases(),
                &seeds,
                depths,
                integ,
            )
            .map(|o| vec![o]),
            Check::Landscape => {
                let l = &cfg.landscape;
                let setup = LandscapeSetup {
                    init_scale: l.init_scale,
                    init_angle_deg: l.init_angle_deg,
                    cfg: IntegratorConfig {
                        dt: l.dt,
                        steps: l.steps,
                        record_every: l.steps,
                        ..integ.clone()
                    },
                    num_dirs: l.num_dirs,
                    direction_seed: l.direction_seed,
                };
                suites::run_fig1(&cfg.instance, depths, integ).and_then(|fig1| {
                    Ok(vec![suites::landscape(
                        &cfg.instance,
                        &seeds,
                        depths,
                        &setup,
                        &fig1.trajectories,
                    )?])
                })
            }
        };
        let outcomes = match attempt {
            Ok(o) => o,
            Err(AppError::Core(e @ linflow_core::Error::Divergence { .. })) => return Err(e.into()),
            Err(AppError::Core(e)) => {
                vec![SuiteOutcome::new(check.name(), vec![]).note(format!("could not run: {e}"))]
            }
            Err(e) => return Err(e),
        };
        results.push((check, outcomes));
    }
    Ok(results)
}

#[derive(Serialize)]
struct VerifyFile<'a> {
    passed: bool,
    checks: Vec<VerifyEntry<'a>>,
}

#[derive(Serialize)]
struct VerifyEntry<'a> {
    check: Check,
    outcomes: &'a [SuiteOutcome],
}

pub fn verify(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut art = start(cfg)?;
    let results = run_checks(cfg)?;
    let mut failed = Vec::new();
    for (check, outcomes) in &results {
        for o in outcomes {
            say(out, o.to_string());
        }
        if outcomes.iter().any(|o| !o.passed) {
            failed.push(check.name().to_string());
        }
    }
    let file = VerifyFile {
        passed: failed.is_empty(),
        checks: results
            .iter()
            .map(|(c, o)| VerifyEntry {
                check: *c,
                outcomes: o,
            })
            .collect(),
    };
    io::write_json(&art.path("verify.json"), &file)?;
    art.finish("verify", &cfg.hash())?;
    say(
        out,
        format!(
            "{} of {} checks passed",
            results.len() - failed.len(),
            results.len()
        ),
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(AppError::ChecksFailed(failed))
    }
}
