mod common;

use border_curve::environments::Environment;
use border_curve::feasibility::{check_feasible, principal_curve, Status, DEFAULT_ETA};
use border_curve::oracle::{border_grid_max, g_of_s};
use border_curve::solver::{mre_residual, solve_path};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn psi_inverts_on_affine_forms(seed in any::<u64>(), pieces in 1usize..8) {
        let x = random_cdf(&mut rng(seed), pieces, 1.0);
        prop_assert!(psi_round_trip(&x) <= 1e-8);
    }

    #[test]
    fn delta_inverts_on_affine_forms(seed in any::<u64>(), pieces in 1usize..8) {
        let x = random_cdf(&mut rng(seed), pieces, 1.0);
        prop_assert!(delta_round_trip(&x) <= 1e-8);
    }

    #[test]
    fn psi_integral_identity(seed in any::<u64>(), pieces in 1usize..8) {
        let x = random_cdf(&mut rng(seed), pieces, 1.0);
        let iotas: Vec<f64> = (0..=50).map(|k| k as f64 / 50.0).collect();
        prop_assert!(psi_integral_gap(&x, &iotas) <= 1e-7);
    }

    #[test]
    fn analytic_marginals_match_differences(x in 0.01f64..1.0, u in 0.01f64..0.99) {
        for (name, b) in bidder_families() {
            let gap = marginal_fd_gap(&b, x, u);
            prop_assert!(gap <= 1e-6, "{name}: gap {gap:e} at x={x}, u={u}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn revenue_identity_per_family(seed in any::<u64>(), pieces in 1usize..6) {
        let x = random_cdf(&mut rng(seed), pieces, 1.0);
        for (name, b) in bidder_families() {
            let env = Environment::new(vec![b]).unwrap();
            let gap = revenue_identity_gap(&env, std::slice::from_ref(&x));
            prop_assert!(gap <= 1e-6, "{name}: gap {gap:e}");
        }
    }

    #[test]
    fn grid_never_beats_the_curve(seed in any::<u64>(), scale in 0.3f64..0.9) {
        let mut r = rng(seed);
        let x = vec![random_cdf(&mut r, 4, scale), random_cdf(&mut r, 4, scale)];
        let verdict = check_feasible(&x, DEFAULT_ETA).unwrap();
        let grid = border_grid_max(&x, 300).unwrap();
        prop_assert!(grid.max_b <= verdict.sup_b + 1e-9, "grid {} curve {}", grid.max_b, verdict.sup_b);
        match verdict.status {
            Status::Infeasible if verdict.sup_b > 1.0 + 1e-3 => prop_assert!(grid.max_b > 1.0),
            Status::Infeasible => {}
            _ => prop_assert!(grid.max_b <= 1.0 + 1e-9),
        }
    }

    #[test]
    fn g_is_attained_on_the_curve(seed in any::<u64>(), s in 0.05f64..0.95) {
        let x = random_feasible(&mut rng(seed), 2, 2);
        let c = principal_curve(&x).unwrap();
        let s = s.max(c.start());
        let g = g_of_s(&x, s, 2000).unwrap();
        let b = c.border_direct(s);
        prop_assert!(g <= b + 1e-9, "grid G {g} above curve {b}");
        prop_assert!(b - g <= 1e-3, "grid G {g} far below curve {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 3, ..ProptestConfig::default() })]

    #[test]
    fn transforms_on_induced_forms(seed in any::<u64>()) {
        let x = random_feasible(&mut rng(seed), 3, 3);
        for f in &x {
            prop_assert!(psi_round_trip(f) <= 1e-8);
            prop_assert!(delta_round_trip(f) <= 1e-8);
        }
        let (_, b) = &bidder_families()[0];
        let env = Environment::new(vec![b.clone(); 3]).unwrap();
        prop_assert!(revenue_identity_gap(&env, &x) <= 1e-6);
        prop_assert_ne!(check_feasible(&x, DEFAULT_ETA).unwrap().status, Status::Infeasible);
    }
}

#[test]
fn solver_fixtures_satisfy_the_first_order_condition() {
    for (name, env) in solver_fixtures() {
        let path = solve_path(&env).unwrap();
        let r = mre_residual(&path);
        assert!(r <= 1e-7, "{name}: residual {r:e}");
    }
}
