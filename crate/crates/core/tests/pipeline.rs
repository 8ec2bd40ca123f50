//! Floating-point pipeline over random states and trajectories.

use proptest::prelude::*;
use sld_forge::closed_form::squeezed_matrix;
use sld_forge::sld_builder::{block_structure_holds, build_generic};
use sld_forge::{
    integrate, Execution, Layout, ModelParams, MomentState, OperatorBasis, Pipeline, SolverConfig,
    Theta,
};

fn params(omega: f64) -> ModelParams {
    ModelParams::new(1.0, omega, 0.125, 4.0).unwrap()
}

fn state() -> impl Strategy<Value = MomentState> {
    (0.3f64..12.0, 0.3f64..8.0, -4.0f64..4.0)
        .prop_filter_map("uncertainty bound", |(xx, pp, xp)| {
            MomentState::new(xx, pp, xp).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generic_matrix_is_corrected_squeezed_fixture(s in state(), omega in 0.3f64..3.0) {
        let p = params(omega);
        let basis = OperatorBasis::standard();
        let generic = build_generic(&basis, &p, &s, Theta::Gamma).unwrap();
        let mut fixture = squeezed_matrix(&p, &s);
        fixture[(4, 2)] -= 2.0 * p.b() * s.xp * s.xp;
        for (g, f) in generic.matrix.iter().zip(fixture.iter()) {
            prop_assert!((g - f).abs() <= 1e-10 * g.abs().max(f.abs()).max(1.0));
        }
        prop_assert!(block_structure_holds(&generic.matrix, &basis.parity_blocks()));
    }

    #[test]
    fn fisher_information_is_nonnegative(s in state(), layout in prop_oneof![Just(Layout::Printed), Just(Layout::TestRows)]) {
        let pipe = Pipeline::new(&params(4.0 / 3.0), layout, SolverConfig::default()).unwrap();
        let r = pipe.evaluate(0.0, &s).unwrap();
        prop_assert!(r.qfi_temperature >= 0.0 && r.qfi_gamma >= 0.0);
    }
}

#[test]
fn execution_modes_agree_bitwise() {
    let p = params(2.0 / 3.0);
    let series = integrate(&MomentState::new(1.0, 1.0, 1.0).unwrap(), &p, 20.0, 0.005).unwrap();
    let samples = series.thinned(5);
    let pipe = Pipeline::new(&p, Layout::Printed, SolverConfig::default()).unwrap();
    let a = pipe.evaluate_series(&samples, Execution::Parallel).unwrap();
    let b = pipe
        .evaluate_series(&samples, Execution::Sequential)
        .unwrap();
    assert_eq!(a, b);
    let c = pipe
        .evaluate_series_for(&samples, &[Theta::Gamma], Execution::Parallel)
        .unwrap();
    for (full, only) in a.iter().zip(&c) {
        assert_eq!(full.gamma, only[0].coefficients);
        assert_eq!(full.qfi_gamma, only[0].qfi);
    }
}
