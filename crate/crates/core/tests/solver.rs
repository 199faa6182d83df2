use proptest::prelude::*;

use vidnbc::analysis::sample_claimed;
use vidnbc::{
    apply_operator, bielecki_distance, builtin_example, contraction_constant, parse, residuals, solve, BuiltinId,
    Constants, Grid, GridFunction, SolveOptions,
};

fn random_pair(n: usize, horizon: f64) -> impl Strategy<Value = (GridFunction, GridFunction)> {
    let grid = Grid::new(horizon, n).unwrap();
    let one = move || {
        (prop::collection::vec(-2.0f64..2.0, n + 1), prop::collection::vec(-2.0f64..2.0, n + 1))
            .prop_map(move |(w, wp)| GridFunction::new(grid, w, wp).unwrap())
    };
    (one(), one())
}

fn contraction_holds(id: BuiltinId, f: &GridFunction, g: &GridFunction) -> Result<(), TestCaseError> {
    let p = builtin_example(id);
    let gamma = 1.0;
    let q = contraction_constant(&Constants::from_problem(&p), gamma).unwrap().q;
    let before = bielecki_distance(f, g, gamma).unwrap();
    let after = bielecki_distance(&apply_operator(&p, f).unwrap(), &apply_operator(&p, g).unwrap(), gamma).unwrap();
    let slack = 10.0 * f.grid().step();
    prop_assert!(after <= (q + slack) * before, "{} > ({} + {}) * {}", after, q, slack, before);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn contraction_observed_ex1_n100((f, g) in random_pair(100, 1.0)) {
        contraction_holds(BuiltinId::Ex1, &f, &g)?;
    }

    #[test]
    fn contraction_observed_ex1_n200((f, g) in random_pair(200, 1.0)) {
        contraction_holds(BuiltinId::Ex1, &f, &g)?;
    }

    #[test]
    fn contraction_observed_ex1_n400((f, g) in random_pair(400, 1.0)) {
        contraction_holds(BuiltinId::Ex1, &f, &g)?;
    }

    #[test]
    fn contraction_observed_ex2_n100((f, g) in random_pair(100, 2.0)) {
        contraction_holds(BuiltinId::Ex2, &f, &g)?;
    }

    #[test]
    fn contraction_observed_ex2_n200((f, g) in random_pair(200, 2.0)) {
        contraction_holds(BuiltinId::Ex2, &f, &g)?;
    }

    #[test]
    fn contraction_observed_ex2_n400((f, g) in random_pair(400, 2.0)) {
        contraction_holds(BuiltinId::Ex2, &f, &g)?;
    }
}

#[test]
fn printed_first_example_solves_to_something_else() {
    let p = builtin_example(BuiltinId::Ex1);
    let r = solve(&p, &SolveOptions::default()).unwrap();
    assert!(r.converged && r.certified());
    let f = &r.solution;
    let deviation = f.grid().nodes().zip(f.values()).map(|(t, w)| (w - (t / 10.0).exp()).abs()).fold(0.0, f64::max);
    assert!(deviation > 1e-2, "{deviation}");
    // the computed solution satisfies its own equation and conditions
    let own = residuals(&p, f).unwrap();
    assert!(own.within(1e-6, 1e-8), "{own:?}");
    // while exp(t/10) leaves a constant offset
    let claimed =
        sample_claimed(&parse("exp(t/10)", &["t"]).unwrap(), &parse("exp(t/10)/10", &["t"]).unwrap(), *f.grid())
            .unwrap();
    let r = residuals(&p, &claimed).unwrap();
    for v in &r.ode_residual {
        assert!((v + 8.9847e-3).abs() < 1e-6, "{v}");
    }
}

#[test]
fn claimed_solution_residual_is_second_order() {
    let p = builtin_example(BuiltinId::Ex2);
    let w = parse("(t+t^2)/10", &["t"]).unwrap();
    let wp = parse("(1+2*t)/10", &["t"]).unwrap();
    let at = |n| {
        let f = sample_claimed(&w, &wp, Grid::new(p.horizon, n).unwrap()).unwrap();
        residuals(&p, &f).unwrap().ode_residual_max
    };
    let ratio = at(100) / at(200);
    assert!((3.5..=4.5).contains(&ratio), "{ratio}");
}

#[test]
fn certified_runs_bound_their_distance_to_the_fine_solution() {
    let p = builtin_example(BuiltinId::Ex2);
    let coarse = solve(&p, &SolveOptions { tol: 1e-4, ..SolveOptions::default() }).unwrap();
    let fine = solve(&p, &SolveOptions { tol: 1e-14, ..SolveOptions::default() }).unwrap();
    let d = bielecki_distance(&coarse.solution, &fine.solution, 1.0).unwrap();
    assert!(d <= coarse.apost_bound, "{d} > {}", coarse.apost_bound);
}
