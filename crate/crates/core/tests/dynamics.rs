use linflow_core::dataset::{generate_instance, InstanceSpec};
use linflow_core::flows::{
    check_product_consistency, integrate_factor_flow, integrate_induced_flow, IntegratorConfig,
    Method,
};
use linflow_core::network::{balanced_factorization, LinearNetwork};
use linflow_core::rates::{rate_exponents, time_to_accuracy, BoundCurve, RateParams};
use linflow_core::stability::StableSetParams;
use linflow_core::Matrix;

fn fig1() -> linflow_core::dataset::Instance {
    generate_instance(&InstanceSpec::default()).unwrap()
}

fn endpoint_gap(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).frobenius_norm()
}

#[test]
fn euler_first_order_rk4_fourth_order() {
    let inst = fig1();
    let reference = IntegratorConfig {
        method: Method::Rk4,
        dt: 1e-5,
        steps: 2000,
        record_every: 2000,
    };
    let exact = integrate_induced_flow(&inst.w0, 3, &inst.data, &reference)
        .unwrap()
        .states
        .pop()
        .unwrap();
    let run = |method, dt: f64| {
        let steps = (0.02 / dt).round() as usize;
        let cfg = IntegratorConfig {
            method,
            dt,
            steps,
            record_every: steps,
        };
        integrate_induced_flow(&inst.w0, 3, &inst.data, &cfg)
            .unwrap()
            .states
            .pop()
            .unwrap()
    };
    let e1 = endpoint_gap(&run(Method::ExplicitEuler, 1e-4), &exact);
    let e2 = endpoint_gap(&run(Method::ExplicitEuler, 5e-5), &exact);
    assert!((e2 / e1 - 0.5).abs() < 0.05, "euler ratio {}", e2 / e1);
    let r1 = endpoint_gap(&run(Method::Rk4, 2e-4), &exact);
    let r2 = endpoint_gap(&run(Method::Rk4, 1e-4), &exact);
    assert!((r2 / r1 - 1.0 / 16.0).abs() < 0.02, "rk4 ratio {}", r2 / r1);
}

#[test]
fn depth_one_flows_coincide() {
    let inst = fig1();
    let cfg = IntegratorConfig {
        steps: 5000,
        record_every: 500,
        ..Default::default()
    };
    let net = LinearNetwork::new(vec![inst.w0.clone()]).unwrap();
    let f = integrate_factor_flow(&net, &inst.data, &cfg).unwrap();
    let i = integrate_induced_flow(&inst.w0, 1, &inst.data, &cfg).unwrap();
    let gap = check_product_consistency(&f, &i).unwrap();
    assert!(gap <= 1e-12 * (1.0 + inst.w0.frobenius_norm()), "gap {gap}");
}

#[test]
fn depth_one_euler_step_is_gradient_descent() {
    let inst = fig1();
    let dt = 1e-4;
    let cfg = IntegratorConfig {
        dt,
        steps: 1,
        record_every: 1,
        ..Default::default()
    };
    let w1 = integrate_induced_flow(&inst.w0, 1, &inst.data, &cfg)
        .unwrap()
        .states
        .pop()
        .unwrap();
    let mut grad = inst.w0.matmul(inst.data.xxt());
    grad -= inst.data.yxt();
    let mut expected = inst.w0.clone();
    expected.axpy(-dt, &grad);
    assert!(endpoint_gap(&w1, &expected) < 1e-13);
}

#[test]
fn factor_loss_nonincreasing_on_fig1_protocol() {
    let inst = fig1();
    for n in [2, 3] {
        let net = balanced_factorization(
            &inst.w0,
            &[5].into_iter()
                .chain(std::iter::repeat_n(1, n))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let traj = integrate_factor_flow(&net, &inst.data, &IntegratorConfig::default()).unwrap();
        let loss = traj.series(|r| r.loss);
        assert!(loss.windows(2).all(|w| w[1] <= w[0]), "N={n}");
        assert!(traj
            .series(|r| r.balance_residual)
            .iter()
            .all(|&b| b < 2e-6));
    }
}

#[test]
fn induced_flow_tracks_target_distance() {
    let inst = generate_instance(&InstanceSpec {
        init_scale: 1.5,
        init_angle_deg: 20.0,
        ..Default::default()
    })
    .unwrap();
    let cfg = IntegratorConfig {
        steps: 50_000,
        record_every: 1000,
        ..Default::default()
    };
    let traj = integrate_induced_flow(&inst.w0, 2, &inst.data, &cfg).unwrap();
    for (row, w) in traj.metrics.iter().zip(&traj.states) {
        let d = (&inst.target.z1 - w).frobenius_norm_sq();
        assert!((row.dist_sq - d).abs() <= 1e-12 * (1.0 + d));
    }
    let (first, last) = (traj.metrics[0].dist_sq, traj.last_metrics().dist_sq);
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn time_to_accuracy_inverts_envelope() {
    let inst = generate_instance(&InstanceSpec {
        init_scale: 2.8,
        init_angle_deg: 20.0,
        ..Default::default()
    })
    .unwrap();
    let params = StableSetParams {
        alpha: 0.8,
        beta: 3.0,
    };
    for depth in [1, 2, 3, 6] {
        let p = RateParams::new(&inst.target, &params, 50, depth, &inst.w0);
        assert!(rate_exponents(&p).applicable);
        let curve = BoundCurve::continuous(&p, 2e-3).unwrap();
        for k in 1..12 {
            let eps = p.dist0_sq * 10f64.powi(-k);
            let t = time_to_accuracy(&p, 2e-3, eps).unwrap().unwrap();
            let v = curve.value(t);
            assert!(
                (v - eps).abs() <= 1e-9 * eps,
                "N={depth} eps={eps} value={v}"
            );
        }
    }
}
