use infodemic_core::model::ParamName;
use infodemic_core::stats::spearman;
use infodemic_core::sweep::{
    evaluate_cell, grid_sweep, Axis, Heatmap, ObservableSet, RunSettings, SweepSpec,
};
use infodemic_core::{integrate, ModelParams, Observables};

fn run_with_threads(spec: &SweepSpec, threads: usize) -> Heatmap {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| grid_sweep(spec, &RunSettings::default()).unwrap())
}

#[test]
fn cells_equal_standalone_runs() {
    let spec = SweepSpec::panel("fig2a", 3).unwrap();
    let settings = RunSettings::default();
    let map = grid_sweep(&spec, &settings).unwrap();
    assert_eq!(map.cells.len(), 9);
    for cell in &map.cells {
        let traj = integrate(&settings.initial, &cell.params, 0.5, 2000).unwrap();
        let standalone = Observables::from_trajectory(&traj);
        assert_eq!(cell.outcome.as_ref().unwrap().observables, standalone);
        assert_eq!(cell.params.beta_a, 0.15);
        assert_eq!(cell.params.get(ParamName::Alpha1), cell.x);
        assert_eq!(cell.params.get(ParamName::Alpha2), cell.y);
    }
}

#[test]
fn degenerate_axes_give_identical_cells() {
    let spec = SweepSpec {
        fixed: ModelParams::default(),
        axis_x: Axis::new(ParamName::Alpha1, 0.3, 0.3, 2),
        axis_y: Axis::new(ParamName::BetaA, 0.2, 0.2, 2),
        observables: ObservableSet::all(),
    };
    let map = grid_sweep(&spec, &RunSettings::default()).unwrap();
    assert_eq!(map.cells.len(), 4);
    assert!(map.cells.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn result_does_not_depend_on_schedule() {
    let spec = SweepSpec::panel("fig4b", 6).unwrap();
    let one = run_with_threads(&spec, 1);
    let many = run_with_threads(&spec, 4);
    assert_eq!(one, many);
    // evaluating cells in reverse order reproduces every record
    let settings = RunSettings::default();
    for cell in one.cells.iter().rev() {
        let again = evaluate_cell(&cell.params, &settings, &spec.observables);
        assert_eq!(again, cell.outcome);
    }
}

#[test]
fn heatmap_csv_and_sidecar() {
    let mut spec = SweepSpec::panel("fig5e", 3).unwrap();
    spec.observables = ObservableSet::parse_list("r_star,decomposition").unwrap();
    let map = grid_sweep(&spec, &RunSettings::default()).unwrap();
    let mut buf = Vec::new();
    map.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x,y,r_star,i_m,t_m,r1_red,r2_green,r3_blue,residual_ur,pearson_rho,absorbed"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    for r in &rows {
        assert_eq!(r.len(), 11);
        assert!(!r[2].is_empty() && r[3].is_empty() && r[9].is_empty());
        assert_eq!(r[10], "true");
    }
    let json = serde_json::to_string(&map.spec).unwrap();
    let back: SweepSpec = serde_json::from_str(&json).unwrap();
    assert_eq!(back, spec);
}

#[test]
fn panel_grids_absorb_and_track_peak_with_final_size() {
    for name in ["fig2a", "fig2b", "fig2c"] {
        let map = grid_sweep(
            &SweepSpec::panel(name, 41).unwrap(),
            &RunSettings::default(),
        )
        .unwrap();
        assert!(map.absorbed().iter().flatten().all(|&a| a), "{name}");
        let r: Vec<f64> = map.records().map(|c| c.observables.r_star).collect();
        let i: Vec<f64> = map.records().map(|c| c.observables.i_m).collect();
        let rho = spearman(&r, &i).unwrap().rho;
        assert!(rho > 0.9, "{name}: {rho}");
    }
}

#[test]
fn strong_awareness_with_low_alpha_1_lowers_final_size() {
    let map = grid_sweep(
        &SweepSpec::panel("fig2b", 41).unwrap(),
        &RunSettings::default(),
    )
    .unwrap();
    let mut treated = Vec::new();
    let mut untreated = Vec::new();
    for cell in &map.cells {
        let r = cell.outcome.as_ref().unwrap().observables.r_star;
        let (beta_a, alpha_1) = (cell.x, cell.y);
        if beta_a > 0.15 && alpha_1 < 0.25 {
            treated.push(r);
        } else if beta_a < 0.15 && alpha_1 > 0.75 {
            untreated.push(r);
        }
    }
    let worst_treated = treated.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best_untreated = untreated.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(
        worst_treated < best_untreated,
        "max r* with beta_a > 0.15, alpha_1 < 0.25: {worst_treated}; \
         min r* with beta_a < 0.15, alpha_1 > 0.75: {best_untreated}"
    );
}
