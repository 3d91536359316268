//! Self-convergence of Scenario 1 between the 50x25 and 100x50 grids.

use apc_core::{simulate, RunOutput, ScenarioConfig};

fn scenario1_on(nx: usize, ny: usize) -> RunOutput {
    let mut cfg = ScenarioConfig::scenario1();
    cfg.geometry.nx = nx;
    cfg.geometry.ny = ny;
    cfg.output.heatmaps = false;
    simulate(&cfg).expect("scenario1").1
}

#[test]
fn halving_h_changes_total_mass_by_under_two_percent() {
    let coarse = scenario1_on(50, 25);
    let fine = scenario1_on(100, 50);
    assert_eq!(coarse.series.len(), fine.series.len());

    let mut sup = (0.0f64, 0.0);
    for (a, b) in coarse.series.iter().zip(&fine.series) {
        let (a, b) = (a.diagnostics, b.diagnostics);
        assert_eq!(a.t, b.t);
        let d = (a.total_mass - b.total_mass).abs();
        if d > sup.0 {
            sup = (d, a.t);
        }
    }
    let (uc, uf) = (
        coarse.series.last().unwrap().diagnostics.total_mass,
        fine.series.last().unwrap().diagnostics.total_mass,
    );
    println!("U(250): 50x25 {uc:.3e}, 100x50 {uf:.3e}");
    println!("sup_t |U_50x25 - U_100x50| = {:.4} at t = {}", sup.0, sup.1);

    // Both grids have emptied by t = 250, so the difference is measured
    // against the initial unit population rather than U(250) itself.
    assert!((uc - uf).abs() < 0.02);
    assert!(
        sup.0 < 0.02,
        "largest difference {:.4} at t = {}",
        sup.0,
        sup.1
    );
}
