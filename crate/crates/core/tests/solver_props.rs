use proptest::prelude::*;
use rulecover::solver::{brute_force_oracle, greedy_cover, lp_lower_bound};
use rulecover::{solve_exact, solve_relaxed, CoveringProgram, SolverConfig};

const TOL: f64 = 1e-7;

fn program() -> impl Strategy<Value = CoveringProgram> {
    (1usize..=16).prop_flat_map(|p| {
        let constraint = prop::sample::select(vec![1usize, 2, 4])
            .prop_flat_map(move |s| prop::sample::subsequence((0..p).collect::<Vec<_>>(), s.min(p)));
        prop::collection::vec(constraint, 0..=30)
            .prop_map(move |cs| CoveringProgram::new(p, cs).unwrap())
    })
}

fn config() -> SolverConfig {
    SolverConfig {
        time_budget: 30.0,
        ..SolverConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn exact_matches_the_oracle(prog in program()) {
        let (want, _) = brute_force_oracle(&prog).unwrap();
        let got = solve_exact(&prog, &config()).unwrap();
        prop_assert!(got.optimal);
        prop_assert_eq!(got.objective, want);
        prop_assert!(prog.is_satisfied_by(&got.labels));
        prop_assert_eq!(got.labels.outlier_count(), got.objective);
    }

    #[test]
    fn bounds_sandwich_the_optimum(prog in program()) {
        let free = vec![None; prog.num_vars()];
        let lp = lp_lower_bound(&prog, &free, TOL).unwrap();
        let exact = solve_exact(&prog, &config()).unwrap();
        let greedy = greedy_cover(&prog, &free).unwrap();
        prop_assert!(prog.is_satisfied_by(&greedy));
        prop_assert!(lp <= exact.objective as f64 + TOL);
        prop_assert!(exact.objective <= greedy.outlier_count());
        let relaxed = solve_relaxed(&prog, &config()).unwrap();
        prop_assert!((relaxed.lower_bound - lp).abs() < 1e-6);
    }

    #[test]
    fn trace_is_monotone(prog in program()) {
        let r = solve_exact(&prog, &config()).unwrap();
        prop_assert!(!r.trace.is_empty());
        for w in r.trace.windows(2) {
            prop_assert!(w[1].upper_bound <= w[0].upper_bound);
            prop_assert!(w[1].lower_bound >= w[0].lower_bound - TOL);
            prop_assert!(w[1].iteration >= w[0].iteration);
        }
        let last = r.trace.last().unwrap();
        prop_assert_eq!(last.upper_bound, r.objective);
        prop_assert_eq!(last.upper_bound, (last.lower_bound - TOL).ceil() as usize);
    }

    #[test]
    fn solver_is_deterministic(prog in program()) {
        let mut a = solve_exact(&prog, &config()).unwrap();
        let mut b = solve_exact(&prog, &config()).unwrap();
        a.wall_time = 0.0;
        b.wall_time = 0.0;
        prop_assert_eq!(a, b);
    }
}

#[test]
fn odd_cycle_has_a_half_integral_relaxation() {
    let prog = CoveringProgram::new(3, vec![vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
    let relaxed = solve_relaxed(&prog, &config()).unwrap();
    assert!((relaxed.lower_bound - 1.5).abs() <= 1e-7);
    assert_eq!(solve_exact(&prog, &config()).unwrap().objective, 2);
}

#[test]
fn node_budget_stops_without_certificate() {
    // 24 disjoint odd cycles: LP 36, optimum 48, a gap branching must close
    let cs = (0..24)
        .flat_map(|k| {
            let b = 3 * k;
            [vec![b, b + 1], vec![b + 1, b + 2], vec![b, b + 2]]
        })
        .collect();
    let prog = CoveringProgram::new(72, cs).unwrap();
    let tight = SolverConfig {
        node_budget: 1,
        ..config()
    };
    let r = solve_exact(&prog, &tight).unwrap();
    assert!(prog.is_satisfied_by(&r.labels));
    if !r.optimal {
        assert!((r.objective as f64) >= r.lower_bound - TOL);
    }
}
