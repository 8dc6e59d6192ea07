use std::sync::Arc;

use proptest::prelude::*;

use sphere_fv::config::RunConfig;
use sphere_fv::driver::state_csv;
use sphere_fv::{
    build_web_mesh, CellState, CoarseningRule, FiniteVolume, FluxField, NumericalFluxKind, SchemeConfig, Vec3,
};

fn axis() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate axis", |(a, b, c)| a * a + b * b + c * c > 0.05)
        .prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

fn flux(kind: u8, c: Vec3) -> FluxField {
    match kind {
        0 => FluxField::linear(c),
        1 => FluxField::burgers(c),
        _ => FluxField::trig(c),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Every mesh that builds validates; resolutions are rejected only when
    /// the equatorial count cannot be halved as often as the rule requires.
    #[test]
    fn meshes_validate(half_bands in 2usize..12, m in 1usize..7, p in 2u32..6, t in prop_oneof![Just(0.0), 0.2..0.9f64]) {
        let nl = m << p;
        match build_web_mesh(2 * half_bands, nl, CoarseningRule::from_threshold(t).unwrap()) {
            Ok(mesh) => {
                let r = mesh.validate();
                prop_assert!(r.pass, "{}", r.summary());
            }
            Err(e) => prop_assert!(e.to_string().contains("not divisible"), "{e}"),
        }
    }

    /// First order steps preserve the order of states: u <= v implies
    /// H(u) <= H(v), cell by cell.
    #[test]
    fn first_order_step_is_monotone(
        kind in 0u8..3,
        c in axis(),
        lf in any::<bool>(),
        seed in proptest::collection::vec(-1.0..1.0f64, 200),
        bump in proptest::collection::vec(0.0..0.5f64, 200),
    ) {
        let m = Arc::new(build_web_mesh(8, 16, CoarseningRule::default()).unwrap());
        let n = m.n_cells();
        let u: Vec<f64> = (0..n).map(|i| seed[i % seed.len()]).collect();
        let v: Vec<f64> = (0..n).map(|i| u[i] + bump[(7 * i) % bump.len()]).collect();
        let nf = if lf { NumericalFluxKind::LaxFriedrichs } else { NumericalFluxKind::Godunov };
        let fv = FiniteVolume::new(Arc::clone(&m), flux(kind, c), SchemeConfig::first_order(nf, 0.9))
            .unwrap()
            .with_value_range(-1.0, 1.5);
        let a = CellState::new(Arc::clone(&m), u, 0.0).unwrap();
        let b = CellState::new(Arc::clone(&m), v, 0.0).unwrap();
        let dt = fv.cfl_dt(&a).unwrap();
        let (a1, b1) = (fv.step(&a, dt).unwrap(), fv.step(&b, dt).unwrap());
        for (x, y) in a1.u.iter().zip(&b1.u) {
            prop_assert!(x <= &(y + 1e-14));
        }
    }

    #[test]
    fn state_csv_round_trips(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..64)) {
        let m = Arc::new(build_web_mesh(8, 16, CoarseningRule::default()).unwrap());
        let u: Vec<f64> = (0..m.n_cells()).map(|i| values[i % values.len()]).collect();
        let s = CellState::new(Arc::clone(&m), u.clone(), 0.0).unwrap();
        let csv = state_csv(&s);
        let back: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        prop_assert_eq!(back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), u.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn config_echo_is_a_fixed_point(
        half_bands in 2usize..40,
        half_nl in 2usize..100,
        cfl in 0.01..0.5f64,
        t_end in 0.0..10.0f64,
        kappa in 0.01..50.0f64,
        phi in -1.5..1.5f64,
    ) {
        let text = format!(
            "mesh.n_bands = {}\nmesh.n_lon_equator = {}\nscheme.order = 2\nscheme.cfl = {cfl}\ntime.t_end = {t_end}\n\
             init.kind = gaussian_bump\ninit.kappa = {kappa}\ninit.center_phi = {phi}\n",
            2 * half_bands,
            2 * half_nl
        );
        let cfg = RunConfig::parse(&text).unwrap();
        let echo = cfg.to_text();
        let again = RunConfig::parse(&echo).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_text(), echo);
    }
}
