use chrono::NaiveDate;
use proptest::prelude::*;

use infodemic_core::ingest::{segment_waves, smooth_ma7, to_daily, SegmentConfig};
use infodemic_core::observables::{
    decompose_equilibrium, is_absorbed, DEFAULT_ABSORPTION_THRESHOLD,
};
use infodemic_core::reproduction::{
    ngm_matrices, r0_eff_closed_form, r0_sum_expression, rt_eff_series, spectral_r0,
};
use infodemic_core::stats::{cross_correlation, pearson};
use infodemic_core::{integrate, CompartmentState, DateSeries, ModelParams, Observables};

fn params() -> impl Strategy<Value = ModelParams> {
    (
        0.0..=0.4f64,
        0.0..=1.0f64,
        1.0..=10.0f64,
        0.0..=0.4f64,
        0.05..=0.4f64,
        0.05..=1.5f64,
    )
        .prop_map(
            |(beta_i, alpha_1, alpha_2, beta_a, gamma_i, gamma_a)| ModelParams {
                beta_i,
                alpha_1,
                alpha_2,
                beta_a,
                gamma_i,
                gamma_a,
            },
        )
}

fn seeds() -> impl Strategy<Value = CompartmentState> {
    (1e-7..1e-3f64, 1e-7..1e-3f64).prop_map(|(a, i)| CompartmentState::seeded(a, i))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trajectories_conserve_and_stay_nonnegative(p in params(), s in seeds()) {
        let traj = integrate(&s, &p, 0.5, 2000).unwrap();
        prop_assert_eq!(traj.len(), 2001);
        for st in traj.states() {
            prop_assert!((st.compartment_sum() - 1.0).abs() < 1e-9);
            prop_assert!(st.compartments().iter().all(|&v| v >= 0.0));
        }
        for w in traj.states().windows(2) {
            prop_assert!(w[1].flux_blue >= w[0].flux_blue);
            prop_assert!(w[1].flux_green >= w[0].flux_green);
            prop_assert!(w[1].flux_red >= w[0].flux_red);
            prop_assert!(w[1].flux_aware >= w[0].flux_aware);
        }
    }

    #[test]
    fn observables_in_range_and_decomposition_closes(p in params(), s in seeds()) {
        let traj = integrate(&s, &p, 0.5, 2000).unwrap();
        let o = Observables::from_trajectory(&traj);
        prop_assert!((0.0..=1.0).contains(&o.r_star));
        prop_assert!((0.0..=1.0).contains(&o.i_m));
        prop_assert!(o.t_m >= 0.0 && o.t_m <= traj.horizon());
        if is_absorbed(&traj, DEFAULT_ABSORPTION_THRESHOLD) {
            let d = decompose_equilibrium(&traj).unwrap();
            prop_assert!((d.total() - o.r_star).abs() < 1e-6);
        }
    }

    #[test]
    fn integration_is_deterministic(p in params(), s in seeds()) {
        let a = integrate(&s, &p, 0.5, 300).unwrap();
        let b = integrate(&s, &p, 0.5, 300).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn rt_eff_never_increases(p in params(), s in seeds()) {
        let traj = integrate(&s, &p, 0.5, 2000).unwrap();
        let rt = rt_eff_series(&traj, &p);
        for w in rt.values().windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn ngm_structure_and_identities(
        p in params(),
        us in 0.0..=1.0f64,
        f1 in 0.0..=1.0f64,
        f2 in 0.0..=1.0f64,
    ) {
        let a1s = (1.0 - us) * f1;
        let a2s = (1.0 - us - a1s) * f2;
        let init = CompartmentState { us, a1s, a2s, ..Default::default() };
        let ngm = ngm_matrices(&p, &init);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!(ngm.f_matrix[i][j] >= 0.0);
                if i != j {
                    prop_assert!(ngm.v_matrix[i][j] <= 0.0);
                }
            }
        }
        let lambda = spectral_r0(&ngm).unwrap();
        prop_assert!((lambda - r0_sum_expression(&p, &init)).abs() <= 1e-10 * lambda.max(1.0));
        let no_inactive = CompartmentState { a2s: 0.0, ..init };
        let lambda0 = spectral_r0(&ngm_matrices(&p, &no_inactive)).unwrap();
        prop_assert!((lambda0 - r0_eff_closed_form(&p, &no_inactive)).abs() <= 1e-10);
    }

    #[test]
    fn pearson_symmetry_bounds_and_affine_invariance(
        (a, b) in (3usize..60).prop_flat_map(|n| (
            prop::collection::vec(-100.0..100.0f64, n),
            prop::collection::vec(-100.0..100.0f64, n),
        )),
        c1 in -50.0..50.0f64,
        c2 in prop_oneof![-20.0..-0.1f64, 0.1..20.0f64],
    ) {
        let Ok(ab) = pearson(&a, &b) else { return Ok(()); };
        let ba = pearson(&b, &a).unwrap();
        prop_assert_eq!(ab.rho, ba.rho);
        prop_assert!((-1.0..=1.0).contains(&ab.rho));
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
        let t: Vec<f64> = a.iter().map(|x| c1 + c2 * x).collect();
        let r = pearson(&t, &b).unwrap().rho;
        prop_assert!((r - c2.signum() * ab.rho).abs() < 1e-12);
        let ccf = cross_correlation(&a, &b, a.len() - 1).unwrap();
        let lag0 = ccf.iter().find(|c| c.lag == 0).unwrap();
        prop_assert!((lag0.rho.unwrap() - ab.rho).abs() < 1e-12);
    }

    #[test]
    fn differencing_inverts_cumulative_sum(daily in prop::collection::vec(0u32..10_000, 1..80)) {
        let mut cum = vec![0.0];
        for d in &daily {
            cum.push(cum.last().unwrap() + *d as f64);
        }
        let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let s = DateSeries::from_start(start, cum).unwrap();
        let back = to_daily(&s).unwrap();
        let expected: Vec<f64> = daily.iter().map(|&d| d as f64).collect();
        prop_assert_eq!(back.values(), expected.as_slice());
    }

    #[test]
    fn smoothing_nearly_preserves_total(daily in prop::collection::vec(0.0..1e4f64, 1..120)) {
        let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let s = DateSeries::from_start(start, daily.clone()).unwrap();
        let m = smooth_ma7(&s);
        prop_assert_eq!(m.len(), s.len());
        let max = daily.iter().cloned().fold(0.0, f64::max);
        prop_assert!((m.sum() - s.sum()).abs() <= 6.0 * max + 1e-9);
    }

    #[test]
    fn waves_are_ordered_and_disjoint(v in prop::collection::vec(0.0..100.0f64, 60..400)) {
        let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let s = smooth_ma7(&DateSeries::from_start(start, v).unwrap());
        if let Ok(waves) = segment_waves(&s, &SegmentConfig::default()) {
            prop_assert!(!waves.is_empty() && waves.len() <= 3);
            for w in &waves {
                prop_assert!(w.start < w.end);
            }
            for pair in waves.windows(2) {
                prop_assert!(pair[0].end < pair[1].start);
            }
        }
    }
}
