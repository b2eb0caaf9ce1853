use fedgdp_core::accountant::{
    closed_form_bound, closed_form_limit, h0, interpolation_objective, recover_lambdas, solve_h0,
};
use fedgdp_core::gauss::{phi, phi_inv};
use fedgdp_core::schedules::coefficients;
use fedgdp_core::tradeoff::{compose_gdp, gdp_to_eps_delta, gdp_to_rdp, gdp_tradeoff, eps_delta_to_gdp};
use fedgdp_core::{CoefficientMode, CoefficientSeries, FlConfig, GdpCurve, MethodSpec, Schedule, ScheduleKind};
use proptest::prelude::*;

fn g(mu: f64) -> GdpCurve {
    GdpCurve::new(mu).unwrap()
}

fn series() -> impl Strategy<Value = CoefficientSeries> {
    (1usize..=50).prop_flat_map(|t| {
        (prop::collection::vec(1.0f64..1.5, t), prop::collection::vec(1e-3f64..=1.0, t))
            .prop_map(|(rho, gamma)| CoefficientSeries::from_values(&rho, &gamma).unwrap())
    })
}

fn any_kind() -> impl Strategy<Value = ScheduleKind> {
    prop_oneof![
        Just(ScheduleKind::Constant),
        Just(ScheduleKind::Cyclic),
        Just(ScheduleKind::Stagewise),
        Just(ScheduleKind::Continuous),
    ]
}

fn fedavg(kind: ScheduleKind, mu: f64, l: f64, k: usize, t: usize) -> FlConfig {
    FlConfig {
        clients: 20,
        local_steps: k,
        rounds: t,
        clip_norm: 10.0,
        sigma: 1.0,
        smoothness: l,
        method: MethodSpec::FedAvg,
        schedule: Schedule::new(kind, mu).unwrap(),
        mode: CoefficientMode::TableForm,
    }
}

proptest! {
    #[test]
    fn cdf_symmetry(x in -38.0f64..38.0) {
        prop_assert!((phi(x) + phi(-x) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn quantile_round_trip(p in 1e-300f64..0.5) {
        let x = phi_inv(p);
        prop_assert!(((phi(x) - p) / p).abs() < 1e-12);
    }

    #[test]
    fn cdf_monotone(x in -30.0f64..8.0, dx in 1e-6f64..1.0) {
        prop_assert!(phi(x + dx) > phi(x));
    }

    #[test]
    fn tradeoff_below_diagonal_and_decreasing(mu in 0.0f64..6.0, a in 0.0f64..1.0, da in 0.0f64..0.2) {
        let b = gdp_tradeoff(g(mu), a).unwrap();
        prop_assert!(b <= 1.0 - a + 1e-15);
        let a2 = (a + da).min(1.0);
        prop_assert!(gdp_tradeoff(g(mu), a2).unwrap() <= b);
    }

    #[test]
    fn composition_lowers_curve(m1 in 0.0f64..4.0, m2 in 0.0f64..4.0, a in 0.0f64..=1.0) {
        let both = compose_gdp([g(m1), g(m2)]);
        prop_assert!(gdp_tradeoff(both, a).unwrap() <= gdp_tradeoff(g(m1), a).unwrap() + 1e-15);
    }

    #[test]
    fn rdp_is_linear(mu in 0.0f64..10.0, order in 1.01f64..100.0) {
        let r = gdp_to_rdp(g(mu), order).unwrap();
        prop_assert_eq!(r.order, order);
        prop_assert!((r.epsilon - 0.5 * mu * mu * order).abs() <= 1e-12 * r.epsilon.max(1.0));
    }

    #[test]
    fn eps_delta_round_trip(mu in 0.05f64..5.0, eps in 0.0f64..5.0) {
        let target = gdp_to_eps_delta(g(mu), eps).unwrap();
        prop_assume!(target.delta > 1e-12 && target.delta < 1.0 - 1e-12);
        let back = eps_delta_to_gdp(target).unwrap().mu();
        prop_assert!(((back - mu) / mu).abs() < 1e-8, "mu={} back={}", mu, back);
    }

    #[test]
    fn lambdas_telescope(c in series()) {
        match recover_lambdas(&c) {
            Ok((l, _)) => prop_assert!((l[l.len() - 1] - 1.0).abs() < 1e-9),
            Err(fedgdp_core::Error::DegenerateOptimum { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn cauchy_schwarz_is_minimal(
        (c, lambdas) in (1usize..=6).prop_flat_map(|t| (
            (prop::collection::vec(1.0f64..1.5, t), prop::collection::vec(1e-3f64..=1.0, t))
                .prop_map(|(r, g)| CoefficientSeries::from_values(&r, &g).unwrap()),
            prop::collection::vec(0.0f64..=1.0, t - 1),
        ))
    ) {
        let mut l = lambdas;
        l.push(1.0);
        let h = h0(&c).unwrap();
        prop_assert!(h <= interpolation_objective(&c, &l).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn coefficients_are_valid(kind in any_kind(), mu in 0.001f64..0.5, l in 0.1f64..2.0, k in 1usize..60, t in 1usize..40) {
        for mode in [CoefficientMode::Exact, CoefficientMode::TableForm] {
            let cfg = FlConfig { mode, ..fedavg(kind, mu, l, k, t) };
            let s = coefficients(&cfg).unwrap();
            prop_assert_eq!(s.len(), t);
            prop_assert!(s.rhos().iter().all(|&r| r >= 1.0));
            prop_assert!(s.gamma.iter().all(|&g| g > 0.0));
        }
    }

    #[test]
    fn closed_form_nondecreasing_and_bounded(kind in any_kind(), mu in 0.001f64..0.2, l in 0.2f64..2.0, k in 1usize..30, t in 1usize..2000) {
        let cfg = fedavg(kind, mu, l, k, t);
        let a = closed_form_bound(&cfg).unwrap().mu();
        let b = closed_form_bound(&cfg.with_rounds(t + 1)).unwrap().mu();
        if kind != ScheduleKind::Continuous {
            // the continuous z aggregate may grow with the horizon
            prop_assert!(b >= a * (1.0 - 1e-15));
            prop_assert!(a <= closed_form_limit(&cfg).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn numeric_h0_scales(m in 1usize..200, sigma in 0.1f64..10.0) {
        let c = CoefficientSeries::constant(1.3, 0.5, 20).unwrap();
        let unit = solve_h0(&c, 1, 1.0).unwrap().gdp.mu();
        let got = solve_h0(&c, m, sigma).unwrap().gdp.mu();
        prop_assert!((got - unit * (m as f64).sqrt() / sigma).abs() <= 1e-12 * got);
    }
}

#[test]
fn tradeoff_convex_on_grid() {
    for mu in [0.1, 0.5, 1.0, 2.0, 5.0] {
        let n = 1000;
        let ys: Vec<f64> = (0..=n).map(|i| gdp_tradeoff(g(mu), i as f64 / n as f64).unwrap()).collect();
        for w in ys.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-12, "mu={mu}");
        }
    }
}

#[test]
fn long_horizon_stays_finite() {
    // mu L = 0.1, K = 50: rho^T overflows for T = 10^4
    let mut cfg = fedavg(ScheduleKind::Constant, 0.1, 1.0, 50, 10_000);
    cfg.mode = CoefficientMode::TableForm;
    let coeffs = coefficients(&cfg).unwrap();
    let numeric = solve_h0(&coeffs, cfg.clients, cfg.sigma).unwrap().gdp.mu();
    let closed = closed_form_bound(&cfg).unwrap().mu();
    assert!(numeric.is_finite());
    assert!(((numeric - closed) / closed).abs() < 1e-6);
}

#[test]
fn fedprox_reaches_limit() {
    for ratio in [1.5, 2.0, 4.0] {
        let l = 0.5;
        let cfg = FlConfig {
            smoothness: l,
            method: MethodSpec::FedProx { alpha: ratio * l },
            ..fedavg(ScheduleKind::Constant, 0.1, l, 5, 1_000_000)
        };
        let alpha = ratio * l;
        let limit = 2.0 * 10.0 / (20f64.sqrt() * alpha) * ((2.0 * alpha - l) / l).sqrt();
        let got = closed_form_bound(&cfg).unwrap().mu();
        assert!(((got - limit) / limit).abs() < 1e-6, "ratio={ratio}");
    }
}
