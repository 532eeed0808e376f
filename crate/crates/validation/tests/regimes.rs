use infodemic_core::sweep::{evaluate_cell, ObservableSet, RunSettings};
use infodemic_core::ModelParams;

#[test]
fn strong_correlation_regime_links_daily_series() {
    // corners of the correlation map where the daily infected and daily
    // aware series are expected to move together
    let settings = RunSettings::default();
    let sel = ObservableSet::all();
    for (alpha_1, beta_a) in [(0.0, 0.15), (0.02, 0.15), (0.5, 0.15)] {
        let p = ModelParams {
            alpha_1,
            beta_a,
            alpha_2: 1.0,
            ..Default::default()
        };
        let rho = evaluate_cell(&p, &settings, &sel)
            .unwrap()
            .pearson_rho
            .unwrap();
        assert!(
            rho > 0.9,
            "alpha_1 = {alpha_1}, beta_a = {beta_a}: lag-0 rho = {rho}"
        );
    }
}
