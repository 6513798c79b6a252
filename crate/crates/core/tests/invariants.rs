use molmimo_core::analysis::{decide, gaussian_intersection, GaussApprox};
use molmimo_core::channel_model::{f_model, model_limit, ChannelModel, ModelParams};
use molmimo_core::topology::{LinkId, Topology};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ModelParams> {
    (0.05..1.0f64, 0.1..1.0f64, 0.1..0.9f64).prop_map(|(b1, b2, b3)| ModelParams::new(b1, b2, b3).unwrap())
}

fn model() -> impl Strategy<Value = ChannelModel> {
    (prop::sample::select(vec![2.0, 4.0]), prop::sample::select(vec![1.0, 2.0]), params(), params()).prop_map(
        |(d, h, own, cross)| {
            let cross = ModelParams::new(cross.b1 * 0.2, cross.b2, cross.b3).unwrap();
            ChannelModel::new(Topology::new(d, h, 4.0, 50.0).unwrap(), own, cross)
        },
    )
}

fn log_density(y: f64, mu: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (y - mu).powi(2) / (2.0 * var)
}

proptest! {
    #[test]
    fn model_cdf_rises_toward_its_limit(p in params(), t in 1e-3..5.0f64, dt in 1e-3..5.0f64) {
        let a = f_model(t, &p, 4.0, 2.0, 50.0).unwrap();
        let b = f_model(t + dt, &p, 4.0, 2.0, 50.0).unwrap();
        prop_assert!(0.0 <= a && a <= b + 1e-15);
        prop_assert!(b <= model_limit(&p, 4.0, 2.0) + 1e-15);
    }

    #[test]
    fn taps_are_probabilities(m in model(), t_s in 0.01..0.3f64, memory in 0usize..8) {
        let taps = m.taps(t_s, memory).unwrap();
        prop_assert_eq!(taps.memory(), memory);
        let total: f64 = taps.own.iter().chain(&taps.cross).sum();
        prop_assert!(taps.own.iter().chain(&taps.cross).all(|&p| p >= 0.0));
        prop_assert!(total <= m.limit(LinkId::L11) + m.limit(LinkId::L12) + 1e-12);
    }

    #[test]
    fn sir_grows_with_symbol_duration(m in model(), t_s in 0.01..0.3f64, dt in 0.001..0.1f64) {
        prop_assert!(m.sir(t_s).unwrap() <= m.sir(t_s + dt).unwrap());
    }

    #[test]
    fn thresholds_sit_where_the_densities_cross(
        mu1 in 0.2..2.0f64, var0 in 1e-3..0.2f64, beta in 1.01..40.0f64, y in -3.0..4.0f64,
    ) {
        let g = GaussApprox { mu0: 0.0, var0, mu1, var1: beta * var0 };
        let t = gaussian_intersection(&g).unwrap();
        prop_assert!(t.lower < t.upper);
        for eta in [t.lower, t.upper] {
            let gap = log_density(eta, g.mu0, g.var0) - log_density(eta, g.mu1, g.var1);
            prop_assert!(gap.abs() < 1e-6, "gap {gap} at {eta}");
        }
        // The rule picks the likelier bit away from the crossings.
        let l0 = log_density(y, g.mu0, g.var0);
        let l1 = log_density(y, g.mu1, g.var1);
        prop_assume!((l0 - l1).abs() > 1e-9);
        prop_assert_eq!(decide(y, &t), u8::from(l1 > l0));
    }
}
