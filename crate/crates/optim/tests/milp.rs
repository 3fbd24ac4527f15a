use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rec_optim::{solve_lp, solve_milp, LinearProgram, Options, Relation, Status, Var};

fn opts() -> Options {
    Options::default()
}

#[test]
fn integral_relaxation_equals_lp() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", 0.0, 4.0);
    let y = lp.add_var("y", 0.0, 4.0);
    lp.set_cost(x, -1.0);
    lp.set_cost(y, 1.0);
    lp.add_constraint("r", vec![(x, 1.0), (y, 1.0)], Relation::Le, 3.0);
    let relaxed = solve_lp(&lp, &opts()).unwrap();
    lp.add_sos1(x, y);
    let mixed = solve_milp(&lp, &opts()).unwrap();
    assert_eq!(mixed.status, Status::Optimal);
    assert_eq!(mixed.nodes, 1);
    assert!((mixed.objective_value - relaxed.objective_value).abs() < 1e-9);
}

/// Solves every fixing of the SOS pairs as an LP and keeps the best.
fn enumerate_sos(lp: &LinearProgram) -> Option<f64> {
    let k = lp.sos1.len();
    let mut best: Option<f64> = None;
    for mask in 0..(1u32 << k) {
        let mut sub = lp.clone();
        sub.sos1.clear();
        for (i, &(a, b)) in lp.sos1.iter().enumerate() {
            let v: Var = if mask & (1 << i) != 0 { a } else { b };
            sub.variables[v.0].upper = 0.0;
            sub.variables[v.0].lower = 0.0;
        }
        let s = solve_lp(&sub, &opts()).unwrap();
        if s.status == Status::Optimal && best.map_or(true, |b| s.objective_value < b) {
            best = Some(s.objective_value);
        }
    }
    best
}

#[test]
fn single_sos_pair_matches_branch_enumeration() {
    // Both variables want to be positive; the pair forces a choice.
    let mut lp = LinearProgram::new();
    let a = lp.add_var("a", 0.0, 3.0);
    let b = lp.add_var("b", 0.0, 3.0);
    let c = lp.add_var("c", 0.0, 10.0);
    lp.set_cost(a, -2.0);
    lp.set_cost(b, -3.0);
    lp.set_cost(c, 1.0);
    lp.add_constraint("link", vec![(a, 1.0), (b, 1.0), (c, -1.0)], Relation::Le, 2.0);
    lp.add_sos1(a, b);
    let s = solve_milp(&lp, &opts()).unwrap();
    let oracle = enumerate_sos(&lp).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert!((s.objective_value - oracle).abs() < 1e-6);
    assert!(s.value(a).min(s.value(b)) <= 1e-9);
}

#[test]
fn random_sos_programs_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..60 {
        let pairs = rng.gen_range(1..=4);
        let mut lp = LinearProgram::new();
        let mut vars = Vec::new();
        for p in 0..pairs {
            let a = lp.add_var(format!("a{p}"), 0.0, rng.gen_range(1.0..5.0));
            let b = lp.add_var(format!("b{p}"), 0.0, rng.gen_range(1.0..5.0));
            lp.set_cost(a, rng.gen_range(-3.0..1.0));
            lp.set_cost(b, rng.gen_range(-3.0..1.0));
            lp.add_sos1(a, b);
            vars.push(a);
            vars.push(b);
        }
        let z = lp.add_var("z", 0.0, f64::INFINITY);
        lp.set_cost(z, rng.gen_range(0.5..2.0));
        for r in 0..rng.gen_range(1..4) {
            let mut row: Vec<_> = vars.iter().map(|&v| (v, rng.gen_range(-1.0..2.0))).collect();
            row.push((z, -1.0));
            lp.add_constraint(format!("r{r}"), row, Relation::Le, rng.gen_range(0.0..4.0));
        }
        let s = solve_milp(&lp, &opts()).unwrap();
        let oracle = enumerate_sos(&lp).unwrap();
        assert_eq!(s.status, Status::Optimal, "case {case}");
        assert!((s.objective_value - oracle).abs() < 1e-6, "case {case}: {} vs {}", s.objective_value, oracle);
        for &(a, b) in &lp.sos1 {
            assert!(s.value(a).min(s.value(b)) <= 1e-8);
        }
    }
}

#[test]
fn knapsack_with_binaries_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let n = 8;
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10.0)).collect();
        let cap = w.iter().sum::<f64>() * 0.4;
        let mut lp = LinearProgram::new();
        let x: Vec<_> = (0..n).map(|i| lp.add_binary(format!("x{i}"))).collect();
        for i in 0..n {
            lp.set_cost(x[i], -v[i]);
        }
        lp.add_constraint("cap", x.iter().zip(&w).map(|(&x, &w)| (x, w)).collect(), Relation::Le, cap);
        let s = solve_milp(&lp, &opts()).unwrap();
        let mut best = 0.0f64;
        for mask in 0..(1u32 << n) {
            let (mut tw, mut tv) = (0.0, 0.0);
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    tw += w[i];
                    tv += v[i];
                }
            }
            if tw <= cap {
                best = best.max(tv);
            }
        }
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective_value + best).abs() < 1e-6);
    }
}

#[test]
fn node_limit_returns_incumbent_with_iteration_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 14;
    let mut lp = LinearProgram::new();
    let x: Vec<_> = (0..n).map(|i| lp.add_binary(format!("x{i}"))).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(10.0..11.0)).collect();
    for i in 0..n {
        lp.set_cost(x[i], -rng.gen_range(10.0..11.0));
    }
    lp.add_constraint("cap", x.iter().zip(&w).map(|(&x, &w)| (x, w)).collect(), Relation::Le, 70.5);
    let o = Options { node_limit: 3, ..Options::default() };
    let s = solve_milp(&lp, &o).unwrap();
    assert_eq!(s.status, Status::IterationLimit);
    if !s.values.is_empty() {
        assert!(lp.max_violation(&s.values) <= 1e-7);
        assert!(s.bound <= s.objective_value + 1e-9);
    }
}

#[test]
fn infeasible_sos_program() {
    let mut lp = LinearProgram::new();
    let a = lp.add_var("a", 0.0, 1.0);
    let b = lp.add_var("b", 0.0, 1.0);
    lp.add_constraint("both", vec![(a, 1.0)], Relation::Ge, 0.5);
    lp.add_constraint("both2", vec![(b, 1.0)], Relation::Ge, 0.5);
    lp.add_sos1(a, b);
    assert_eq!(solve_milp(&lp, &opts()).unwrap().status, Status::Infeasible);
}
