//! Outer approximation for mixed-integer convex programs.
//!
//! Convex quadratic constraints are replaced by an increasing family of
//! gradient cuts. Continuous pre-rounds build cuts on the binary-relaxed
//! LP; after that a single branch-and-bound tree runs with the quadratic
//! check applied lazily to integral candidates, cutting off violators and
//! re-solving their node instead of restarting the tree. Because every
//! constraint is convex, cuts never exclude a feasible point, so bounds
//! computed before a cut arrived stay valid.

use super::milp::{solve_milp_lazy, CandidateCheck};
use super::simplex::solve_lp_bounded;
use super::{MixedProgram, SolveOutcome, SolveStatus, SolverConfig};

/// Solves `prog` by outer approximation.
///
/// Contract
/// - pre: `prog` is well formed and every quadratic constraint is convex.
/// - post: on `Optimal`, every quadratic constraint holds within
///   `cfg.quad_tol` and every linear constraint within `cfg.feas_tol`.
/// - post: returns `IterLimit` when `cfg.cut_cap` cut rounds or the node
///   budget run out; the best incumbent found is reported when one exists.
/// - post: `Infeasible` from the linear relaxation is final, because the
///   relaxation only ever shrinks toward the true feasible set.
pub fn solve_outer(prog: &MixedProgram, cfg: &SolverConfig) -> SolveOutcome {
    let mut relax = prog.clone();
    let quads = std::mem::take(&mut relax.quad);
    if relax.has_binaries() {
        // Continuous pre-rounds: gradient cuts are valid at any point, so
        // the bulk of the cut family can be built on the cheap binary-
        // relaxed LP before any integer work. An infeasible relaxation
        // settles the integer program too.
        for _round in 0..cfg.cut_cap {
            let out = solve_lp_bounded(&relax, cfg, None, None).0;
            match out.status {
                SolveStatus::Infeasible => return out,
                SolveStatus::Optimal => {}
                _ => break,
            }
            let mut any = false;
            for qc in &quads {
                if qc.violation(&out.point) > cfg.quad_tol {
                    relax.lin.push(qc.gradient_cut(&out.point));
                    any = true;
                }
            }
            if !any {
                break;
            }
        }
        let mut rounds = 0usize;
        return solve_milp_lazy(&relax, cfg, |cand| {
            let cuts: Vec<_> = quads
                .iter()
                .filter(|qc| qc.violation(&cand.point) > cfg.quad_tol)
                .map(|qc| qc.gradient_cut(&cand.point))
                .collect();
            if cuts.is_empty() {
                CandidateCheck::Accept
            } else if rounds >= cfg.cut_cap {
                CandidateCheck::Abort
            } else {
                rounds += 1;
                CandidateCheck::Cut(cuts)
            }
        });
    }
    let mut last = None;
    for _round in 0..cfg.cut_cap {
        let out = solve_lp_bounded(&relax, cfg, None, None).0;
        match out.status {
            SolveStatus::Infeasible | SolveStatus::Unbounded => return out,
            SolveStatus::IterLimit => {
                return SolveOutcome {
                    status: SolveStatus::IterLimit,
                    ..out
                }
            }
            SolveStatus::Optimal => {}
        }
        let worst = quads
            .iter()
            .map(|qc| qc.violation(&out.point))
            .fold(0.0_f64, f64::max);
        if worst <= cfg.quad_tol {
            return out;
        }
        for qc in &quads {
            if qc.violation(&out.point) > cfg.quad_tol {
                relax.lin.push(qc.gradient_cut(&out.point));
            }
        }
        last = Some(out);
    }
    let mut out = last.unwrap_or_else(SolveOutcome::infeasible);
    out.status = SolveStatus::IterLimit;
    out
}
