//! Acceptance criteria, one line each. Runs as a plain binary so every
//! line shows up in `cargo test` output; exits nonzero if any criterion
//! fails.

use std::process::ExitCode;
use std::time::Instant;

use linflow::suites::{self, SuiteOutcome};
use linflow_core::dataset::InstanceSpec;
use linflow_core::flows::IntegratorConfig;
use linflow_core::stability::StableSetParams;

const DEPTHS: [usize; 4] = [2, 3, 4, 6];

fn fig1_spec() -> InstanceSpec {
    InstanceSpec {
        d_x: 5,
        d_y: 1,
        m: 50,
        seed: 0,
        init_angle_deg: 30.0,
        init_scale: 10.0,
    }
}

fn fig1_integrator() -> IntegratorConfig {
    IntegratorConfig::default()
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> SuiteOutcome + 'a>);

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn main() -> ExitCode {
    let spec = fig1_spec();
    let cfg = fig1_integrator();
    assert_eq!((cfg.dt, cfg.steps), (1e-6, 100_000));
    let params = StableSetParams {
        alpha: 0.8,
        beta: 2.0,
    };
    let started = Instant::now();

    let fig1 = suites::run_fig1(&spec, &DEPTHS, &cfg).expect("Fig-1 runs");
    let ensemble = suites::stable_set_ensemble(&spec, 100, &DEPTHS, &params, &cfg)
        .expect("stable-set ensemble");

    let criteria: Vec<Criterion<'_>> = vec![
        (
            "figure-1 reproduction",
            Box::new(|| suites::fig1_outcome(&fig1, 60.0)),
        ),
        (
            "gradient oracle",
            Box::new(|| suites::gradient_oracle(20, 0).unwrap()),
        ),
        (
            "A_W cross-check",
            Box::new(|| suites::aw_crosscheck(100, 0).unwrap()),
        ),
        (
            "balancedness conservation",
            Box::new(|| suites::balance(&spec, &DEPTHS, &cfg).unwrap()),
        ),
        (
            "factor/induced consistency",
            Box::new(|| suites::consistency(&spec, &seeds(5), &DEPTHS, &cfg).unwrap()),
        ),
        (
            "rank invariance",
            Box::new(|| suites::rank_outcome(&ensemble)),
        ),
        (
            "stable-set invariance",
            Box::new(|| suites::stable_set_outcome(&ensemble)),
        ),
        (
            "singular-value ODE",
            Box::new(|| suites::sv_ode(&spec, &DEPTHS, &cfg, &[400, 200, 100, 50, 25]).unwrap()),
        ),
        (
            "loss-evolution inequality",
            Box::new(|| suites::loss_evolution_outcome(&ensemble[..20])),
        ),
        (
            "rate-bound domination",
            Box::new(|| {
                suites::rate_bounds(
                    &spec,
                    &suites::compliant_rate_cases(),
                    &seeds(10),
                    &DEPTHS,
                    &cfg,
                )
                .unwrap()
            }),
        ),
        (
            "landscape",
            Box::new(|| {
                let setup = suites::LandscapeSetup::default();
                suites::landscape(&spec, &seeds(5), &DEPTHS, &setup, &fig1.trajectories).unwrap()
            }),
        ),
        (
            "EYM oracle",
            Box::new(|| suites::eym_oracle(50, 0).unwrap()),
        ),
        (
            "genericity",
            Box::new(|| suites::genericity(200, &[5, 3, 1], 0).unwrap()),
        ),
        (
            "lazy infeasibility",
            Box::new(|| suites::lazy(&spec, &seeds(10)).unwrap()),
        ),
    ];

    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = run();
        failed += usize::from(!outcome.passed);
        println!(
            "criterion {:2} {name}: {outcome} ({:.1}s)",
            i + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
