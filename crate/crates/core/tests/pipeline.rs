//! Solve, analyze and transport on real solutions.

use higgslab_core::bessel::comparison_yk;
use higgslab_core::solver::{auto_cells, solve_dirichlet, BoundaryData, MetricSolution, SolveConfig};
use higgslab_core::spectral::{
    compute_all_wk, exact_rhs, fit_decay, fit_decay_samples, noise_floor, predicted_rate, predicted_vtilde1_rate,
    recursive_rhs, wk_link_check,
};
use higgslab_core::transport::{
    integrate_raw, integrate_transport, max_mu, mu_values, vector_distance, RayPath, SolvedChart, StepRule,
};
use higgslab_core::{RadialGrid, SystemKind};

fn solved(kind: SystemKind, t: f64) -> MetricSolution {
    let grid = RadialGrid::new(1.0, auto_cells(kind, t, 1.0)).unwrap();
    let bc = BoundaryData::staircase(kind, t, 1e-3);
    solve_dirichlet(kind, t, grid, &bc, &SolveConfig::default()).unwrap()
}

fn in_window(sol: &MetricSolution, lo: f64, hi: f64) -> Vec<usize> {
    let g = sol.grid().as_radial().unwrap();
    (0..g.len()).filter(|&i| (lo..=hi).contains(&g.r(i))).collect()
}

#[test]
fn mode_decay_rates_match_predictions() {
    for (kind, t) in [
        (SystemKind::n_cyclic(3).unwrap(), 125.0),
        (SystemKind::n_cyclic(4).unwrap(), 256.0),
        (SystemKind::n_minus_1_cyclic(4).unwrap(), 500.0),
    ] {
        let sol = solved(kind, t);
        assert!(sol.residual < 1e-9, "{kind:?}: residual {}", sol.residual);
        let floor = noise_floor(sol.boundary_amplitude);
        let w = compute_all_wk(&sol.state).unwrap();
        for p in w.iter().skip(1) {
            let fit = fit_decay(p, (0.5, 0.95), floor).unwrap();
            let pred = predicted_rate(kind, t, p.k);
            assert!((fit.rate / pred - 1.0).abs() < 0.15, "{kind:?} k={}: {} vs {pred}", p.k, fit.rate);
        }
        if let Some(v1) = sol.state.vtilde1() {
            let mags: Vec<f64> = v1.values().iter().map(|x| x.abs()).collect();
            let fit = fit_decay_samples(v1.grid(), &mags, (0.5, 0.95), floor).unwrap();
            let pred = predicted_vtilde1_rate(kind, t);
            assert!((fit.rate / pred - 1.0).abs() < 0.15, "vtilde1: {} vs {pred}", fit.rate);
        }
    }
}

#[test]
fn solution_lies_between_comparison_profiles() {
    // e1 is a subsolution of Δu = 3a u, so it stays below its boundary value
    // times the modified-Bessel comparison profile
    let kind = SystemKind::n_cyclic(3).unwrap();
    let t = 125.0;
    let sol = solved(kind, t);
    let g = *sol.grid().as_radial().unwrap();
    let e1 = &sol.state.independent()[0];
    let edge = e1.values()[g.len() - 1];
    let k = 4.0 * kind.rate_scale(t).powi(2) * 3.0;
    for i in in_window(&sol, 0.3, 0.95) {
        let ratio = e1.values()[i] / edge;
        let y = comparison_yk(k, 1.0, g.r(i)).unwrap();
        assert!(ratio > 0.0 && ratio <= 10.0 * y.max(1e-300), "r={} ratio {ratio:e} y {y:e}", g.r(i));
    }
}

#[test]
fn recursive_series_and_exact_form_match_laplacian() {
    for (kind, t) in [(SystemKind::n_cyclic(3).unwrap(), 125.0), (SystemKind::n_minus_1_cyclic(4).unwrap(), 500.0)] {
        let sol = solved(kind, t);
        let w = compute_all_wk(&sol.state).unwrap();
        let idx = in_window(&sol, 0.6, 0.9);
        for k in 1..kind.lattice_len() {
            let lap = w[k].laplacian().unwrap();
            let exact = exact_rhs(&sol.state, k).unwrap();
            let series = recursive_rhs(&sol.state, &w, k, 3, 1).unwrap();
            let (mut d_exact, mut d_series) = (0.0f64, 0.0f64);
            for &i in &idx {
                let scale = lap[i].norm();
                d_exact = d_exact.max((lap[i] - exact[i]).norm() / scale);
                d_series = d_series.max((lap[i] - series[i]).norm() / scale);
            }
            assert!(d_exact < 1e-3, "{kind:?} k={k}: exact defect {d_exact:e}");
            assert!(d_series < 1e-3, "{kind:?} k={k}: series defect {d_series:e}");
        }
    }
}

#[test]
fn error_matrix_entries_follow_mode_profiles() {
    let kind = SystemKind::n_cyclic(3).unwrap();
    let sol = solved(kind, 1000.0);
    for theta in [0.0, 0.4, 2.0] {
        for (k, l) in [(1, 0), (2, 1), (0, 1), (0, 2)] {
            let defect = wk_link_check(&sol, theta, k, l, (0.6, 0.9)).unwrap();
            assert!(defect < 1e-3, "θ={theta} ({k},{l}): {defect:e}");
        }
    }
}

#[test]
fn transport_on_solved_metric() {
    let kind = SystemKind::n_cyclic(3).unwrap();
    let mut offdiag = Vec::new();
    for t in [125.0, 1000.0] {
        let sol = solved(kind, t);
        for theta in [0.0, 0.4] {
            let chart = SolvedChart::new(&sol, theta).unwrap();
            let path = RayPath::new(0.3, theta).unwrap();
            let res = integrate_transport(&chart, &path, &StepRule::default()).unwrap();
            let mu = mu_values(kind, theta);
            for (l, m) in res.diag_logs.iter().zip(&mu) {
                assert!((l - m).abs() < 0.05);
            }
            assert!((res.wkb - max_mu(kind, theta)).abs() < 0.05);
            assert!(res.det_drift < 1e-8);
            let vd = vector_distance(&chart, &res).unwrap();
            let mut expected: Vec<f64> = mu.iter().map(|m| -0.6 * m).collect();
            expected.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in vd.iter().zip(&expected) {
                assert!((a - b).abs() < 0.05 * 0.6, "{vd:?} vs {expected:?}");
            }
            if theta == 0.4 {
                offdiag.push(res.offdiag_norm);
                // unsplit reference integration in the original frame
                let raw = integrate_raw(&chart, 0.3, 4 * res.steps).unwrap();
                let rel = (&raw - res.psi()).norm() / raw.norm();
                assert!(rel < 1e-6, "split vs raw {rel:e}");
            }
        }
    }
    assert!(offdiag[1] <= offdiag[0], "{offdiag:?}");
}
