use dynbc::experiments::{make_initial, InitSpec};
use dynbc::oracle;
use dynbc::scheme::{self, LinearSolver};
use dynbc::{Coupling, Grid, ModelParams, PotentialSpec};
use proptest::prelude::*;

fn coupling() -> impl Strategy<Value = Coupling> {
    prop_oneof![
        Just(Coupling::Gms),
        Just(Coupling::LiuWu),
        (-3.0f64..3.0).prop_map(|e| Coupling::Finite(10f64.powf(e))),
    ]
}

fn potential() -> impl Strategy<Value = PotentialSpec> {
    prop_oneof![
        Just(PotentialSpec::TruncatedDoubleWell),
        Just(PotentialSpec::RegularizedFloryHuggins { theta: 2.5, zeta: 0.005 }),
        Just(PotentialSpec::Zero),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn production_step_matches_dense_oracle(
        nx in 4usize..=8,
        ny in 4usize..=8,
        lx in 0.5f64..2.0,
        coupling in coupling(),
        potential in potential(),
        tau_exp in -5.0f64..-2.0,
        eps in 0.01f64..0.1,
        seed in 0u64..1000,
    ) {
        let h = lx / (nx - 1) as f64;
        let grid = Grid::new(nx, ny, lx, h * (ny - 1) as f64).unwrap();
        let params = ModelParams {
            epsilon: eps,
            delta: 2.0 * eps,
            kappa: 1.5,
            coupling,
            s1: 30.0,
            s2: 10.0,
            potential,
        };
        let tau = 10f64.powf(tau_exp);
        let state = make_initial(&InitSpec::RandomUniform { lo: 0.2, hi: 0.8 }, &grid, seed).unwrap();
        let sys = scheme::assemble(&grid, &params, tau).unwrap();
        let dense = oracle::dense_assemble(&grid, &params, tau, &state).unwrap();
        let scale = dense.matrix.amax();
        prop_assert!((sys.dense_matrix() - &dense.matrix).amax() <= 1e-14 * scale);
        let rhs = sys.rhs(&state).unwrap();
        let rscale = dense.rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in rhs.iter().zip(&dense.rhs) {
            prop_assert!((a - b).abs() <= 1e-14 * rscale);
        }
        let (lu, _) = scheme::advance(&sys, &state, &LinearSolver::SparseLu).unwrap();
        let (de, _) = scheme::advance(&sys, &state, &LinearSolver::Dense).unwrap();
        for (a, b) in lu.phi.values.iter().zip(&de.phi.values) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn rectangular_grids_walk_like_the_production_chain() {
    for (nx, ny) in [(4, 7), (7, 4), (5, 5), (8, 6)] {
        let grid = Grid::new(nx, ny, 1.0, (ny - 1) as f64 / (nx - 1) as f64).unwrap();
        let walk = oracle::perimeter_walk(&grid);
        let chain: Vec<_> = (0..grid.n_boundary()).map(|k| grid.boundary_node(k)).collect();
        assert_eq!(walk, chain);
    }
}
