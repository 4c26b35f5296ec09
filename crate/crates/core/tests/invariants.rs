use higgslab_core::linalg::CMatrix;
use higgslab_core::spectral::{compute_all_wk, differences, zeta};
use higgslab_core::toda::{linearize, residual};
use higgslab_core::transport::{
    frame_basis, integrate_segment, integrate_transport, max_mu, shift_matrix, ExactLeading, RayPath, StepRule,
    SyntheticError,
};
use higgslab_core::{Complex64, Family, RadialGrid, ScalarField, SystemKind, TodaState};
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = SystemKind> {
    (2usize..=7, any::<bool>()).prop_filter_map("family needs n >= 3", |(n, minus)| {
        if minus {
            SystemKind::n_minus_1_cyclic(n).ok()
        } else {
            SystemKind::n_cyclic(n).ok()
        }
    })
}

/// Smooth radial state: field j is `a_j cos(b_j r) + c_j`.
fn state(kind: SystemKind, coefs: &[(f64, f64, f64)]) -> TodaState {
    let grid = RadialGrid::new(1.0, 64).unwrap();
    let fields = (0..kind.independent_count())
        .map(|j| {
            let (a, b, c) = coefs[j % coefs.len()];
            let vals = grid.samples().iter().map(|r| a * (b * r).cos() + c).collect();
            ScalarField::new(grid, vals).unwrap()
        })
        .collect();
    TodaState::from_independent(kind, 50.0, fields).unwrap()
}

fn coef_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-0.5f64..0.5, 0.0f64..4.0, -0.5f64..0.5), 1..4)
}

fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + b.norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenmodes_are_a_unitary_transform_of_differences(kind in kind_strategy(), coefs in coef_strategy()) {
        let st = state(kind, &coefs);
        let w = compute_all_wk(&st).unwrap();
        let m = kind.lattice_len();
        for node in [0usize, 17, 64] {
            let (d, _) = st.lattice_at(node);
            let x = differences(&d);
            let energy: f64 = x.iter().map(|v| v * v).sum();
            let modes: f64 = w.iter().map(|p| p.values[node].norm_sqr()).sum();
            prop_assert!((energy - modes).abs() <= 1e-12 * (1.0 + energy));
            prop_assert!(w[0].values[node].norm() <= 1e-12 * (1.0 + energy.sqrt()));
            // independent DFT of the differences
            for k in 0..m {
                let direct: Complex64 = (0..m).map(|i| zeta(m, (i * k) as i64) * x[i]).sum::<Complex64>()
                    / (m as f64).sqrt();
                prop_assert!(close(w[k].values[node], direct, 1e-12));
                // real differences: w_{m-k} = conj(w_k)
                prop_assert!(close(w[(m - k) % m].values[node], direct.conj(), 1e-12));
            }
        }
    }

    #[test]
    fn n_cyclic_modes_are_real(n in 2usize..=7, coefs in coef_strategy()) {
        let kind = SystemKind::n_cyclic(n).unwrap();
        let w = compute_all_wk(&state(kind, &coefs)).unwrap();
        for p in &w {
            let scale = p.magnitudes().into_iter().fold(1e-300, f64::max);
            prop_assert!(p.imag_defect <= 1e-12 * scale.max(1.0), "k={} defect {}", p.k, p.imag_defect);
        }
    }

    #[test]
    fn jacobian_matches_central_differences(kind in kind_strategy(), coefs in coef_strategy(), dir in coef_strategy()) {
        let st = state(kind, &coefs);
        let delta = state(kind, &dir);
        let lin = linearize(&st).apply(delta.independent()).unwrap();
        let shifted = |h: f64| {
            let fields = st
                .independent()
                .iter()
                .zip(delta.independent())
                .map(|(a, b)| a.lin_comb(1.0, b, h).unwrap())
                .collect();
            residual(&TodaState::from_independent(kind, st.t(), fields).unwrap()).unwrap()
        };
        let h = 1e-5;
        let (plus, minus) = (shifted(h), shifted(-h));
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for ((p, q), l) in plus.iter().zip(&minus).zip(&lin) {
            for i in 0..l.values().len() {
                let fd = (p.values()[i] - q.values()[i]) / (2.0 * h);
                worst = worst.max((fd - l.values()[i]).abs());
                scale = scale.max(l.values()[i].abs());
            }
        }
        prop_assert!(worst <= 1e-6 * (1.0 + scale), "worst {worst:e} scale {scale:e}");
    }

    #[test]
    fn exact_leading_transport_matches_leading_exponents(kind in kind_strategy(), theta in 0.0f64..std::f64::consts::TAU, len in 0.05f64..0.5) {
        let tau = kind.rate_scale(200.0);
        let src = ExactLeading { kind, tau, theta };
        let res = integrate_transport(&src, &RayPath::new(len, theta).unwrap(), &StepRule::default()).unwrap();
        prop_assert!(res.det_drift <= 1e-10);
        prop_assert!((res.wkb - max_mu(kind, theta)).abs() <= 1e-8);
        for (l, m) in res.diag_logs.iter().zip(&res.mu) {
            prop_assert!((l - m).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_error_transport_is_a_semigroup(
        kind in kind_strategy(),
        theta in 0.0f64..std::f64::consts::TAU,
        entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 49),
        split in 0.2f64..0.8,
    ) {
        let n = kind.n();
        let mut r = CMatrix::from_fn(n, n, |i, j| {
            let (a, b) = entries[i * n + j];
            Complex64::new(a, b)
        });
        // traceless so that det Φ stays 1
        let tr = r.trace() / Complex64::new(n as f64, 0.0);
        for i in 0..n {
            r[(i, i)] -= tr;
        }
        let tau = 3.0;
        let src = SyntheticError { kind, tau, theta, r: r.clone() };
        let rule = StepRule { scale: 0.01, min_steps: 400 };
        let total = 0.4;
        let b = split * total;
        let (whole, _) = integrate_segment(&src, 0.0, total, &rule).unwrap();
        let (first, _) = integrate_segment(&src, 0.0, b, &rule).unwrap();
        let (second, _) = integrate_segment(&src, b, total, &rule).unwrap();
        let composed = &second * &first;
        prop_assert!((&whole - &composed).norm() <= 1e-8 * whole.norm());
        prop_assert!((whole.determinant() - Complex64::new(1.0, 0.0)).norm() <= 1e-8);

        // constant connection: Ψ(L) = exp(L A) in the original frame
        let p = shift_matrix(kind);
        let s = frame_basis(kind);
        let a = &p * Complex64::from_polar(tau, theta)
            + p.transpose() * Complex64::from_polar(tau, -theta)
            + &s * &r * s.adjoint();
        let expected = (a * Complex64::new(total, 0.0)).exp();
        let psi = &s * &whole * s.adjoint();
        prop_assert!((&psi - &expected).norm() <= 1e-7 * expected.norm());
    }
}

#[test]
fn full_vector_is_antisymmetric_for_every_family() {
    for n in 3..=7 {
        for kind in [SystemKind::n_cyclic(n).unwrap(), SystemKind::n_minus_1_cyclic(n).unwrap()] {
            let st = state(kind, &[(0.3, 2.0, -0.1), (-0.2, 1.0, 0.25)]);
            for node in [0, 30, 64] {
                let e = st.full_at(node);
                for i in 0..n {
                    assert_eq!(e[i], -e[n - 1 - i], "{kind:?} node {node}");
                }
            }
            assert_eq!(st.q_orthogonality_defect(), 0.0);
            if kind.family() == Family::NMinus1Cyclic {
                assert!(st.vtilde1().is_some());
            }
        }
    }
}
