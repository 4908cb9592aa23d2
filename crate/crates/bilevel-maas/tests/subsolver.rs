use bilevel_maas::subsolver::{
    lp_kkt_residual, solve, solve_lp, solve_lp_cfg, solve_milp, solve_milp_cfg, solve_miconvex,
    solve_miconvex_cfg, LinCon, MixedProgram, QuadCon, Relation, SolveStatus, SolverConfig,
    Variable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// max x + y  s.t.  x + 2y <= 4,  3x + y <= 6,  x, y in [0, 10].
fn two_constraint_lp() -> MixedProgram {
    let mut p = MixedProgram::new("lp2");
    let x = p.add_var(Variable::cont("x", 0.0, 10.0));
    let y = p.add_var(Variable::cont("y", 0.0, 10.0));
    p.objective[x] = 1.0;
    p.objective[y] = 1.0;
    p.lin.push(LinCon::new("c1", vec![(x, 1.0), (y, 2.0)], Relation::Le, 4.0));
    p.lin.push(LinCon::new("c2", vec![(x, 3.0), (y, 1.0)], Relation::Le, 6.0));
    p
}

#[test]
fn lp_two_constraints_frozen() {
    let p = two_constraint_lp();
    let out = solve_lp(&p);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - 2.8).abs() < 1e-9, "objective {}", out.objective);
    assert!((out.point[0] - 1.6).abs() < 1e-9);
    assert!((out.point[1] - 1.2).abs() < 1e-9);
    assert!((out.duals[0] - 0.4).abs() < 1e-9, "dual c1 {}", out.duals[0]);
    assert!((out.duals[1] - 0.2).abs() < 1e-9, "dual c2 {}", out.duals[1]);
    assert!(lp_kkt_residual(&p, &out) <= 1e-8);
}

#[test]
fn lp_single_constraint() {
    let mut p = MixedProgram::new("lp1");
    let x = p.add_var(Variable::cont("x", 0.0, 100.0));
    p.objective[x] = 1.0;
    p.lin.push(LinCon::new("cap", vec![(x, 1.0)], Relation::Le, 5.0));
    let out = solve_lp(&p);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - 5.0).abs() < 1e-9);
    assert!(lp_kkt_residual(&p, &out) <= 1e-8);
}

#[test]
fn lp_infeasible_pair() {
    let mut p = MixedProgram::new("inf");
    let x = p.add_var(Variable::cont("x", 0.0, 10.0));
    p.objective[x] = 1.0;
    p.lin.push(LinCon::new("lo", vec![(x, 1.0)], Relation::Le, 1.0));
    p.lin.push(LinCon::new("hi", vec![(x, 1.0)], Relation::Ge, 2.0));
    assert_eq!(solve_lp(&p).status, SolveStatus::Infeasible);
}

#[test]
fn lp_infeasible_against_bounds() {
    let mut p = MixedProgram::new("infb");
    let x = p.add_var(Variable::cont("x", 0.0, 1.0));
    p.objective[x] = 1.0;
    p.lin.push(LinCon::new("hi", vec![(x, 1.0)], Relation::Ge, 2.0));
    assert_eq!(solve_lp(&p).status, SolveStatus::Infeasible);
}

#[test]
fn lp_bound_only_optimum() {
    let mut p = MixedProgram::new("bounds");
    let x = p.add_var(Variable::cont("x", 0.0, 1.0));
    let y = p.add_var(Variable::cont("y", 0.0, 2.0));
    p.objective[x] = 1.0;
    p.objective[y] = 1.0;
    let out = solve_lp(&p);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - 3.0).abs() < 1e-12);
}

#[test]
fn lp_negative_bounds_and_fixed_vars() {
    let mut p = MixedProgram::new("neg");
    let x = p.add_var(Variable::cont("x", -3.0, 4.0));
    let f = p.add_var(Variable::cont("f", 2.5, 2.5));
    p.objective[x] = -1.0;
    p.objective[f] = 1.0;
    p.lin.push(LinCon::new("link", vec![(x, 1.0), (f, 1.0)], Relation::Le, 10.0));
    let out = solve_lp(&p);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.point[0] + 3.0).abs() < 1e-12);
    assert!((out.point[1] - 2.5).abs() < 1e-12);
    assert!((out.objective - 5.5).abs() < 1e-12);
}

#[test]
fn lp_equality_row() {
    let mut p = MixedProgram::new("eq");
    let x = p.add_var(Variable::cont("x", 0.0, 5.0));
    let y = p.add_var(Variable::cont("y", 0.0, 1.0));
    p.objective[x] = 1.0;
    p.objective[y] = 1.0;
    p.lin.push(LinCon::new("sum", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 2.0));
    let out = solve_lp(&p);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - 2.0).abs() < 1e-9);
    assert!(lp_kkt_residual(&p, &out) <= 1e-8);
}

#[test]
fn lp_ge_row_dual_sign() {
    let mut p = MixedProgram::new("ge");
    let x = p.add_var(Variable::cont("x", 0.0, 3.0));
    p.objective[x] = -1.0;
    p.lin.push(LinCon::new("floor", vec![(x, 1.0)], Relation::Ge, 1.0));
    let out = solve_lp(&p);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.point[0] - 1.0).abs() < 1e-9);
    assert!(out.duals[0] <= 1e-9, "ge dual must be <= 0, got {}", out.duals[0]);
    assert!((out.duals[0] + 1.0).abs() < 1e-9);
}

#[test]
fn kkt_residual_flags_perturbed_points() {
    let p = two_constraint_lp();
    let mut out = solve_lp(&p);
    out.point[0] += 0.05;
    assert!(lp_kkt_residual(&p, &out) > 1e-6);
}

#[test]
fn milp_knapsack_frozen() {
    let mut p = MixedProgram::new("knap");
    let a = p.add_var(Variable::binary("a"));
    let b = p.add_var(Variable::binary("b"));
    p.objective[a] = 3.0;
    p.objective[b] = 2.0;
    p.lin.push(LinCon::new("pick", vec![(a, 1.0), (b, 1.0)], Relation::Le, 1.0));
    let out = solve_milp(&p);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - 3.0).abs() < 1e-9);
    assert!((out.point[a] - 1.0).abs() < 1e-12);
    assert!(out.point[b].abs() < 1e-12);
}

#[test]
fn milp_respects_equality_parity() {
    // max z1 + z2 + z3  s.t.  z1 + z2 + z3 = 2.
    let mut p = MixedProgram::new("parity");
    for k in 0..3 {
        let j = p.add_var(Variable::binary(format!("z{k}")));
        p.objective[j] = 1.0;
    }
    p.lin.push(LinCon::new(
        "two",
        vec![(0, 1.0), (1, 1.0), (2, 1.0)],
        Relation::Eq,
        2.0,
    ));
    let out = solve_milp(&p);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - 2.0).abs() < 1e-9);
}

fn random_milp(seed: u64, max_bins: usize) -> MixedProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.gen_range(1..=max_bins);
    let nc = rng.gen_range(0..=3usize);
    let mut p = MixedProgram::new(format!("rand{seed}"));
    for k in 0..nb {
        p.add_var(Variable::binary(format!("z{k}")));
    }
    for k in 0..nc {
        p.add_var(Variable::cont(format!("x{k}"), -2.0, 3.0));
    }
    for j in 0..p.num_vars() {
        p.objective[j] = rng.gen_range(-5.0..5.0);
    }
    let rows = rng.gen_range(1..=4usize);
    for r in 0..rows {
        let mut coeffs = Vec::new();
        for j in 0..p.num_vars() {
            if rng.gen_bool(0.6) {
                coeffs.push((j, rng.gen_range(-4.0..4.0)));
            }
        }
        if coeffs.is_empty() {
            coeffs.push((0, 1.0));
        }
        let relation = match rng.gen_range(0..6) {
            0 => Relation::Ge,
            1 => Relation::Eq,
            _ => Relation::Le,
        };
        p.lin.push(LinCon::new(
            format!("c{r}"),
            coeffs,
            relation,
            rng.gen_range(-3.0..6.0),
        ));
    }
    p
}

/// Exhaustive oracle: try every binary assignment, solve the continuous
/// remainder, keep the best optimal value.
fn enumerate_best(p: &MixedProgram) -> Option<f64> {
    let bins: Vec<usize> = (0..p.num_vars())
        .filter(|&j| p.variables[j].kind == bilevel_maas::subsolver::VarKind::Binary)
        .collect();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1u32 << bins.len()) {
        let mut q = p.clone();
        for (t, &j) in bins.iter().enumerate() {
            let v = ((mask >> t) & 1) as f64;
            q.variables[j].kind = bilevel_maas::subsolver::VarKind::Continuous;
            q.variables[j].lower = v;
            q.variables[j].upper = v;
        }
        let out = solve_lp(&q);
        if out.status == SolveStatus::Optimal {
            best = Some(best.map_or(out.objective, |b: f64| b.max(out.objective)));
        }
    }
    best
}

#[test]
fn milp_matches_enumeration_on_200_random_programs() {
    for seed in 0..200u64 {
        let p = random_milp(seed, 10);
        let out = solve_milp(&p);
        let oracle = enumerate_best(&p);
        match (out.status, oracle) {
            (SolveStatus::Optimal, Some(best)) => {
                assert!(
                    close_rel(out.objective, best, 1e-7),
                    "seed {seed}: milp {} vs enumeration {best}",
                    out.objective
                );
                assert!(p.max_violation(&out.point) <= 1e-6, "seed {seed}");
            }
            (SolveStatus::Infeasible, None) => {}
            (s, o) => panic!("seed {seed}: status {s:?} vs oracle {o:?}"),
        }
    }
}

#[test]
fn milp_matches_enumeration_at_twelve_binaries() {
    for seed in 1000..1010u64 {
        let p = random_milp(seed, 12);
        let out = solve_milp(&p);
        let oracle = enumerate_best(&p);
        match (out.status, oracle) {
            (SolveStatus::Optimal, Some(best)) => {
                assert!(close_rel(out.objective, best, 1e-7), "seed {seed}");
            }
            (SolveStatus::Infeasible, None) => {}
            (s, o) => panic!("seed {seed}: status {s:?} vs oracle {o:?}"),
        }
    }
}

#[test]
fn milp_never_beats_lp_relaxation() {
    for seed in 300..360u64 {
        let p = random_milp(seed, 8);
        let out = solve_milp(&p);
        if out.status != SolveStatus::Optimal {
            continue;
        }
        let mut relax = p.clone();
        for v in &mut relax.variables {
            if v.kind == bilevel_maas::subsolver::VarKind::Binary {
                v.kind = bilevel_maas::subsolver::VarKind::Continuous;
                v.lower = 0.0;
                v.upper = 1.0;
            }
        }
        let lp = solve_lp(&relax);
        assert_eq!(lp.status, SolveStatus::Optimal, "seed {seed}");
        assert!(
            out.objective <= lp.objective + 1e-7,
            "seed {seed}: milp {} above relaxation {}",
            out.objective,
            lp.objective
        );
    }
}

#[test]
fn oa_univariate_frozen() {
    let mut p = MixedProgram::new("oa1");
    let x = p.add_var(Variable::cont("x", -10.0, 10.0));
    p.objective[x] = 1.0;
    p.quad.push(QuadCon {
        name: "sq".into(),
        q: vec![(x, x, 1.0)],
        coeffs: vec![],
        rhs: 4.0,
    });
    let out = solve_miconvex(&p);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - 2.0).abs() <= 1e-6, "objective {}", out.objective);
}

#[test]
fn oa_circle_frozen() {
    let mut p = MixedProgram::new("oa2");
    let x = p.add_var(Variable::cont("x", -2.0, 2.0));
    let y = p.add_var(Variable::cont("y", -2.0, 2.0));
    p.objective[x] = 1.0;
    p.objective[y] = 1.0;
    p.quad.push(QuadCon {
        name: "ball".into(),
        q: vec![(x, x, 1.0), (y, y, 1.0)],
        coeffs: vec![],
        rhs: 1.0,
    });
    let out = solve_miconvex(&p);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - 2f64.sqrt()).abs() <= 1e-6, "objective {}", out.objective);

    p.objective[x] = 2.0;
    let out = solve_miconvex(&p);
    assert!((out.objective - 5f64.sqrt()).abs() <= 1e-6, "objective {}", out.objective);
}

#[test]
fn oa_with_binary_coupling() {
    // max 3a + x  s.t.  x^2 <= a  with a binary: optimum 4 at a = 1, x = 1.
    let mut p = MixedProgram::new("oab");
    let a = p.add_var(Variable::binary("a"));
    let x = p.add_var(Variable::cont("x", 0.0, 2.0));
    p.objective[a] = 3.0;
    p.objective[x] = 1.0;
    p.quad.push(QuadCon {
        name: "sq".into(),
        q: vec![(x, x, 1.0)],
        coeffs: vec![(a, -1.0)],
        rhs: 0.0,
    });
    let out = solve(&p);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - 4.0).abs() <= 1e-5, "objective {}", out.objective);
    assert!((out.point[a] - 1.0).abs() <= 1e-9);
}

#[test]
fn stall_rescue_agrees_with_plain_solves() {
    // A rescue cap of one routes every solve straight through the cold
    // restart and into the artificial two-phase method.
    let cfg = SolverConfig {
        rescue_cap: 1,
        ..Default::default()
    };

    let p = two_constraint_lp();
    let (out, _) = solve_lp_cfg(&p, &cfg, None);
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - 2.8).abs() < 1e-9, "objective {}", out.objective);
    assert!(lp_kkt_residual(&p, &out) <= 1e-8);

    let mut inf = MixedProgram::new("inf");
    let x = inf.add_var(Variable::cont("x", 0.0, 10.0));
    inf.objective[x] = 1.0;
    inf.lin.push(LinCon::new("lo", vec![(x, 1.0)], Relation::Le, 1.0));
    inf.lin.push(LinCon::new("hi", vec![(x, 1.0)], Relation::Ge, 2.0));
    assert_eq!(solve_lp_cfg(&inf, &cfg, None).0.status, SolveStatus::Infeasible);

    for seed in 0..100u64 {
        let p = random_milp(seed, 8);
        let out = solve_milp_cfg(&p, &cfg);
        let oracle = enumerate_best(&p);
        match (out.status, oracle) {
            (SolveStatus::Optimal, Some(best)) => {
                assert!(
                    close_rel(out.objective, best, 1e-7),
                    "seed {seed}: rescued {} vs enumeration {best}",
                    out.objective
                );
                assert!(p.max_violation(&out.point) <= 1e-6, "seed {seed}");
            }
            (SolveStatus::Infeasible, None) => {}
            (s, o) => panic!("seed {seed}: status {s:?} vs oracle {o:?}"),
        }
    }
}

#[test]
fn oa_zero_cut_budget_reports_iter_limit() {
    // Same program as the binary-coupling case: its relaxation optimum
    // violates the quadratic, and with no cut budget the solve must give
    // up rather than accept the violating point.
    let mut p = MixedProgram::new("oab0");
    let a = p.add_var(Variable::binary("a"));
    let x = p.add_var(Variable::cont("x", 0.0, 2.0));
    p.objective[a] = 3.0;
    p.objective[x] = 1.0;
    p.quad.push(QuadCon {
        name: "sq".into(),
        q: vec![(x, x, 1.0)],
        coeffs: vec![(a, -1.0)],
        rhs: 0.0,
    });
    let cfg = SolverConfig {
        cut_cap: 0,
        ..Default::default()
    };
    assert_eq!(solve_miconvex_cfg(&p, &cfg).status, SolveStatus::IterLimit);
}

#[test]
#[allow(clippy::needless_range_loop)]
fn oa_solutions_satisfy_quadratics() {
    for seed in 500..540u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=3usize);
        let mut p = MixedProgram::new(format!("qp{seed}"));
        for k in 0..n {
            if rng.gen_bool(0.3) {
                p.add_var(Variable::binary(format!("z{k}")));
            } else {
                p.add_var(Variable::cont(format!("x{k}"), -2.0, 2.0));
            }
        }
        for j in 0..n {
            p.objective[j] = rng.gen_range(-3.0..3.0);
        }
        // Q = L L' is PSD by construction.
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                l[i][j] = rng.gen_range(-1.0..1.0);
            }
        }
        let mut q = Vec::new();
        for i in 0..n {
            for j in i..n {
                let qij: f64 = (0..n).map(|k| l[i][k] * l[j][k]).sum();
                if qij.abs() > 1e-12 {
                    q.push((i, j, if i == j { qij } else { 2.0 * qij }));
                }
            }
        }
        let lin: Vec<(usize, f64)> =
            (0..n).map(|j| (j, rng.gen_range(-1.0..1.0))).collect();
        // The origin stays feasible, so the program is never empty.
        p.quad.push(QuadCon {
            name: "conv".into(),
            q,
            coeffs: lin,
            rhs: rng.gen_range(0.5..4.0),
        });
        let out = solve(&p);
        assert_eq!(out.status, SolveStatus::Optimal, "seed {seed}");
        assert!(
            p.max_violation(&out.point) <= 1e-6,
            "seed {seed}: violation {}",
            p.max_violation(&out.point)
        );
    }
}

#[test]
fn gradient_cuts_never_cut_feasible_points() {
    let qc = QuadCon {
        name: "conv".into(),
        q: vec![(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)],
        coeffs: vec![(0, 0.5), (1, -0.25)],
        rhs: 3.0,
    };
    assert!(qc.is_psd(1e-9));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut feasible = Vec::new();
    while feasible.len() < 10_000 {
        let pt = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        if qc.violation(&pt) <= 0.0 {
            feasible.push(pt);
        }
    }
    for _ in 0..50 {
        let xb = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let cut = qc.gradient_cut(&xb);
        for pt in &feasible {
            assert!(
                cut.violation(pt) <= 1e-9,
                "cut at {xb:?} removed feasible {pt:?}"
            );
        }
    }
}

#[test]
fn oa_relaxation_objective_is_monotone() {
    // Replay the outer loop by hand and watch the relaxation bound fall.
    let mut relax = MixedProgram::new("mono");
    let x = relax.add_var(Variable::cont("x", -2.0, 2.0));
    let y = relax.add_var(Variable::cont("y", -2.0, 2.0));
    relax.objective[x] = 1.0;
    relax.objective[y] = 1.0;
    let qc = QuadCon {
        name: "ball".into(),
        q: vec![(x, x, 1.0), (y, y, 1.0)],
        coeffs: vec![],
        rhs: 1.0,
    };
    let mut prev = f64::INFINITY;
    for _ in 0..30 {
        let out = solve_lp(&relax);
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!(out.objective <= prev + 1e-9, "bound rose: {} > {prev}", out.objective);
        prev = out.objective;
        if qc.violation(&out.point) <= 1e-9 {
            break;
        }
        relax.lin.push(qc.gradient_cut(&out.point));
    }
    assert!((prev - 2f64.sqrt()).abs() <= 1e-6);
}

#[test]
fn psd_check_rejects_indefinite_form() {
    let qc = QuadCon {
        name: "saddle".into(),
        q: vec![(0, 0, 1.0), (0, 1, -3.0), (1, 1, 1.0)],
        coeffs: vec![],
        rhs: 1.0,
    };
    assert!(!qc.is_psd(1e-9));
}

#[test]
#[should_panic(expected = "finite ordered bounds")]
fn ill_formed_bounds_panic() {
    let mut p = MixedProgram::new("bad");
    p.add_var(Variable::cont("x", 1.0, 0.0));
    solve_lp(&p);
}

#[test]
fn dump_is_stable() {
    let mut p = MixedProgram::new("demo");
    let x = p.add_var(Variable::cont("x", 0.0, 4.0));
    let y = p.add_var(Variable::binary("y"));
    p.objective[x] = 1.0;
    p.objective[y] = 2.0;
    p.lin.push(LinCon::new("cap", vec![(x, 1.0), (y, 3.0)], Relation::Le, 6.0));
    p.quad.push(QuadCon {
        name: "ball".into(),
        q: vec![(x, x, 1.0), (x, y, 1.0)],
        coeffs: vec![(y, -0.5)],
        rhs: 2.0,
    });
    let expected = "\
program demo
maximize: +1 x +2 y
var x cont [0, 4]
var y bin [0, 1]
st cap: +1 x +3 y <= 6
qc ball: +1 x^2 +1 x*y -0.5 y <= 2
";
    assert_eq!(p.dump(), expected);
}
