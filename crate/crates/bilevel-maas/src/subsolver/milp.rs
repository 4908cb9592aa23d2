//! Branch and bound over binary variables on top of the simplex core.
//!
//! Node order is best bound first with ties broken by lowest node id;
//! branching picks the most fractional binary with ties broken by lowest
//! variable index. Nodes warm-start from the parent's optimal basis, and a
//! few passes of activity-based bound tightening run at every node (binaries
//! are clamped to {0,1} whenever an implied bound crosses integrality).
//!
//! Integral candidates can be screened by a caller-supplied check before
//! they become incumbents. A rejected candidate contributes lazy cuts to a
//! working copy of the program and sends its node back onto the heap, so a
//! single tree serves outer approximation without restarts. Lazy cuts must
//! never exclude a feasible point; stale node bounds then stay valid upper
//! bounds and fathoming remains safe.

use super::simplex::{solve_lp_bounded, Basis};
use super::{LinCon, MixedProgram, Relation, SolveOutcome, SolveStatus, SolverConfig, VarKind};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

/// Verdict on an integral candidate that would improve the incumbent.
pub(super) enum CandidateCheck {
    /// Candidate is acceptable and becomes the incumbent.
    Accept,
    /// Candidate is cut off; the cuts join the program and its node re-solves.
    Cut(Vec<LinCon>),
    /// Give up on the whole solve; the best incumbent is reported as a limit.
    Abort,
}

struct HeapEntry {
    bound: f64,
    id: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap: larger bound first, then smaller id.
        self.bound
            .partial_cmp(&other.bound)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct NodeData {
    parent: Option<usize>,
    /// Branching fix applied on top of the parent: variable and value.
    fix: Option<(usize, f64)>,
    basis: Option<Rc<Basis>>,
}

/// Resolve a node's variable bounds by walking its ancestry.
fn node_bounds(prog: &MixedProgram, arena: &[NodeData], mut id: usize) -> (Vec<f64>, Vec<f64>) {
    let mut fixes = Vec::new();
    loop {
        if let Some(f) = arena[id].fix {
            fixes.push(f);
        }
        match arena[id].parent {
            Some(p) => id = p,
            None => break,
        }
    }
    let mut lo: Vec<f64> = prog.variables.iter().map(|v| v.lower).collect();
    let mut up: Vec<f64> = prog.variables.iter().map(|v| v.upper).collect();
    for &(j, v) in fixes.iter().rev() {
        lo[j] = v;
        up[j] = v;
    }
    (lo, up)
}

/// Tightening outcome of one bound update.
enum Prop {
    Unchanged,
    Changed,
    Infeasible,
}

fn apply_upper(j: usize, val: f64, lo: &mut [f64], up: &mut [f64], feas_tol: f64) -> Prop {
    if val < lo[j] - feas_tol {
        return Prop::Infeasible;
    }
    if val < up[j] - 1e-9 {
        up[j] = val.max(lo[j]);
        Prop::Changed
    } else {
        Prop::Unchanged
    }
}

fn apply_lower(j: usize, val: f64, lo: &mut [f64], up: &mut [f64], feas_tol: f64) -> Prop {
    if val > up[j] + feas_tol {
        return Prop::Infeasible;
    }
    if val > lo[j] + 1e-9 {
        lo[j] = val.min(up[j]);
        Prop::Changed
    } else {
        Prop::Unchanged
    }
}

/// Activity-based bound tightening. Returns false when the node is
/// infeasible by propagation alone.
fn tighten(prog: &MixedProgram, lo: &mut [f64], up: &mut [f64], feas_tol: f64) -> bool {
    const MARGIN: f64 = 1e-9;
    for _pass in 0..3 {
        let mut changed = false;
        for con in &prog.lin {
            let mut min_act = 0.0;
            let mut max_act = 0.0;
            for &(j, a) in &con.coeffs {
                if a > 0.0 {
                    min_act += a * lo[j];
                    max_act += a * up[j];
                } else {
                    min_act += a * up[j];
                    max_act += a * lo[j];
                }
            }
            let upper_side = con.relation != Relation::Ge; // lhs <= rhs applies
            let lower_side = con.relation != Relation::Le; // lhs >= rhs applies
            if upper_side && min_act > con.rhs + feas_tol {
                return false;
            }
            if lower_side && max_act < con.rhs - feas_tol {
                return false;
            }
            for &(j, a) in &con.coeffs {
                if a.abs() <= 1e-12 {
                    continue;
                }
                if upper_side {
                    // a_j x_j <= rhs - (minimum activity of the rest)
                    let rest = min_act - if a > 0.0 { a * lo[j] } else { a * up[j] };
                    let budget = con.rhs - rest;
                    let prop = if a > 0.0 {
                        apply_upper(j, budget / a + MARGIN, lo, up, feas_tol)
                    } else {
                        apply_lower(j, budget / a - MARGIN, lo, up, feas_tol)
                    };
                    match prop {
                        Prop::Infeasible => return false,
                        Prop::Changed => changed = true,
                        Prop::Unchanged => {}
                    }
                }
                if lower_side {
                    // a_j x_j >= rhs - (maximum activity of the rest)
                    let rest = max_act - if a > 0.0 { a * up[j] } else { a * lo[j] };
                    let budget = con.rhs - rest;
                    let prop = if a > 0.0 {
                        apply_lower(j, budget / a - MARGIN, lo, up, feas_tol)
                    } else {
                        apply_upper(j, budget / a + MARGIN, lo, up, feas_tol)
                    };
                    match prop {
                        Prop::Infeasible => return false,
                        Prop::Changed => changed = true,
                        Prop::Unchanged => {}
                    }
                }
            }
        }
        // Clamp binaries whose implied bounds crossed integrality.
        for (j, v) in prog.variables.iter().enumerate() {
            if v.kind != VarKind::Binary {
                continue;
            }
            if up[j] < 1.0 - 1e-6 && up[j] != 0.0 {
                if up[j] < -1e-6 {
                    return false;
                }
                up[j] = 0.0;
                changed = true;
            }
            if lo[j] > 1e-6 && lo[j] != 1.0 {
                if lo[j] > 1.0 + 1e-6 {
                    return false;
                }
                lo[j] = 1.0;
                changed = true;
            }
            if lo[j] > up[j] + 1e-9 {
                return false;
            }
        }
        if !changed {
            break;
        }
    }
    true
}

/// Solve a mixed-binary linear program by best-bound branch and bound.
pub fn solve_milp_cfg(prog: &MixedProgram, cfg: &SolverConfig) -> SolveOutcome {
    solve_milp_lazy(prog, cfg, |_| CandidateCheck::Accept)
}

/// [`solve_milp_cfg`] with a screen on improving integral candidates.
///
/// Contract
/// - pre: cuts returned by `check` hold at every feasible point of the
///   caller's true program.
/// - post: on `Optimal`, the incumbent passed `check` and every linear
///   constraint, including accumulated cuts, holds within `cfg.feas_tol`.
/// - post: `Abort` surfaces as `IterLimit`, keeping the best incumbent.
pub(super) fn solve_milp_lazy(
    prog: &MixedProgram,
    cfg: &SolverConfig,
    mut check: impl FnMut(&SolveOutcome) -> CandidateCheck,
) -> SolveOutcome {
    prog.assert_well_formed();
    assert!(prog.quad.is_empty(), "{}: solve_milp requires no quadratics", prog.name);
    let binaries: Vec<usize> = prog
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| j)
        .collect();
    // Lazily cloned the first time a cut arrives; plain solves never copy.
    let mut work: Option<MixedProgram> = None;

    let mut arena = vec![NodeData {
        parent: None,
        fix: None,
        basis: None,
    }];
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        bound: f64::INFINITY,
        id: 0,
    });

    let mut incumbent: Option<SolveOutcome> = None;
    let mut hit_limit = false;
    let mut processed = 0usize;

    while let Some(entry) = heap.pop() {
        if let Some(inc) = &incumbent {
            if entry.bound <= inc.objective + 1e-9 {
                continue;
            }
        }
        processed += 1;
        if processed > cfg.node_cap {
            hit_limit = true;
            break;
        }

        let cur = work.as_ref().unwrap_or(prog);
        let (mut lo, mut up) = node_bounds(cur, &arena, entry.id);
        if !tighten(cur, &mut lo, &mut up, cfg.feas_tol) {
            continue;
        }
        let hint = arena[entry.id].basis.clone();
        let (out, basis) = solve_lp_bounded(cur, cfg, Some((&lo, &up)), hint.as_deref());
        match out.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::IterLimit | SolveStatus::Unbounded => {
                hit_limit = true;
                break;
            }
            SolveStatus::Optimal => {}
        }
        if let Some(inc) = &incumbent {
            if out.objective <= inc.objective + 1e-9 {
                continue;
            }
        }

        // Most fractional binary, ties to the lowest variable index.
        let mut branch: Option<(usize, f64)> = None;
        for &j in &binaries {
            let frac = (out.point[j] - out.point[j].round()).abs();
            if frac > 1e-7 && branch.is_none_or(|(_, f)| frac > f + 1e-15) {
                branch = Some((j, frac));
            }
        }

        match branch {
            None => {
                // Integral within tolerance: re-solve with binaries pinned to
                // their rounded values for an exactly integral vertex.
                let mut flo = lo.clone();
                let mut fup = up.clone();
                for &j in &binaries {
                    let v = out.point[j].round();
                    flo[j] = v;
                    fup[j] = v;
                }
                let (fixed, _) = solve_lp_bounded(cur, cfg, Some((&flo, &fup)), Some(&basis));
                let candidate = if fixed.status == SolveStatus::Optimal
                    && cur.max_violation(&fixed.point) <= cfg.feas_tol
                {
                    Some(fixed)
                } else {
                    None
                };
                if let Some(mut cand) = candidate {
                    for &j in &binaries {
                        cand.point[j] = cand.point[j].round();
                    }
                    cand.duals = Vec::new();
                    if incumbent
                        .as_ref()
                        .is_none_or(|inc| cand.objective > inc.objective + 1e-9)
                    {
                        match check(&cand) {
                            CandidateCheck::Accept => incumbent = Some(cand),
                            CandidateCheck::Cut(cuts) => {
                                work.get_or_insert_with(|| prog.clone()).lin.extend(cuts);
                                heap.push(HeapEntry {
                                    bound: out.objective,
                                    id: entry.id,
                                });
                            }
                            CandidateCheck::Abort => {
                                hit_limit = true;
                                break;
                            }
                        }
                    }
                }
            }
            Some((j, _)) => {
                let shared = Rc::new(basis);
                for fix in [0.0, 1.0] {
                    arena.push(NodeData {
                        parent: Some(entry.id),
                        fix: Some((j, fix)),
                        basis: Some(shared.clone()),
                    });
                    heap.push(HeapEntry {
                        bound: out.objective,
                        id: arena.len() - 1,
                    });
                }
            }
        }
    }

    match incumbent {
        Some(mut inc) => {
            inc.status = if hit_limit {
                SolveStatus::IterLimit
            } else {
                SolveStatus::Optimal
            };
            inc
        }
        None => {
            if hit_limit {
                SolveOutcome {
                    status: SolveStatus::IterLimit,
                    objective: f64::NAN,
                    point: Vec::new(),
                    duals: Vec::new(),
                }
            } else {
                SolveOutcome::infeasible()
            }
        }
    }
}
