//! Tree searches for the bilevel market problem.
//!
//! Three solvers share one report shape: a strong-duality search branching
//! on audited follower acceptances ([`solve_sdbb`]), a complementarity
//! benchmark branching on KKT products ([`solve_bardmoore`]), and an
//! exhaustive oracle for small markets ([`brute_force_oracle`]) that
//! certifies both.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::follower::{
    audit_followers, best_response_provider, best_response_traveler, provider_upper_bound,
    traveler_upper_bound, FollowerAudit,
};
use crate::model::{EffectKind, LeaderDecision, MarketInstance, Multipliers};
use crate::reform::{
    augment_sd, build_hpr, build_mpec, default_lambda_max, FixedSets, ReformError, Side, VarMap,
};
use crate::subsolver::{solve, MixedProgram, SolveStatus};

/// Failures surfaced by the tree searches and the oracle.
#[derive(Debug, Error)]
pub enum BnbError {
    #[error(transparent)]
    Reform(#[from] ReformError),
    #[error("oracle supports at most {max} followers, instance has {got}")]
    TooLarge { max: usize, got: usize },
    #[error("node {0} relaxation is unbounded")]
    Unbounded(usize),
}

/// Rule choosing the follower to branch on at an audited node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchRule {
    /// Cheapest suboptimal provider by sell price, then priciest traveler.
    Bp,
    /// Largest follower objective gap reported by the audit.
    Diffob,
    /// Convex mix of normalized objective gap and price attractiveness.
    Wi,
}

impl fmt::Display for BranchRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BranchRule::Bp => "bp",
            BranchRule::Diffob => "diffob",
            BranchRule::Wi => "wi",
        };
        f.write_str(s)
    }
}

impl FromStr for BranchRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bp" => Ok(BranchRule::Bp),
            "diffob" => Ok(BranchRule::Diffob),
            "wi" => Ok(BranchRule::Wi),
            other => Err(format!("unknown branch rule `{other}`")),
        }
    }
}

/// Tuning knobs shared by the tree searches.
#[derive(Debug, Clone)]
pub struct BnbConfig {
    pub rule: BranchRule,
    /// Weight on the objective-gap term of the `Wi` rule.
    pub theta: f64,
    /// Follower objective-gap tolerance for the incumbent audit.
    pub eps_follower: f64,
    /// Relative optimality gap at which the search stops.
    pub gap_tol: f64,
    pub time_limit_s: f64,
    pub model: EffectKind,
    /// Cap on strong-duality multipliers; `None` picks a safe default.
    pub lambda_max: Option<f64>,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            rule: BranchRule::Bp,
            theta: 0.5,
            eps_follower: 1e-4,
            gap_tol: 1e-6,
            time_limit_s: 10_800.0,
            model: EffectKind::Linear,
            lambda_max: None,
        }
    }
}

/// How a search run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Optimal,
    TimeLimit,
    Infeasible,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Termination::Optimal => "optimal",
            Termination::TimeLimit => "time_limit",
            Termination::Infeasible => "infeasible",
        };
        f.write_str(s)
    }
}

/// One processed node, in processing order.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub id: usize,
    pub parent: Option<usize>,
    /// Edge label that created the node, `root` for the first one.
    pub branch: String,
    /// Relaxation bound (the carried parent bound when the node never
    /// solved to optimality).
    pub bound: f64,
    /// `branched`, `incumbent`, `pruned`, `completed`, `infeasible`
    /// or `stalled`.
    pub status: String,
}

/// Outcome of a solver run.
///
/// `lb` is the profit of the best audited (bilevel-feasible) point and
/// `ub` the best remaining relaxation bound, so `lb <= ub` and equality
/// certifies optimality. `k` counts processed nodes, which is also the
/// number of subsolver node solves; exact pattern completions are not
/// nodes. The oracle reports `k` as the number of evaluated patterns and
/// leaves the trace empty.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: Termination,
    pub lb: f64,
    pub ub: f64,
    /// Relative optimality gap, saturating at 1 when `lb <= 0`.
    pub gap: f64,
    pub k: usize,
    pub wall_time_s: f64,
    pub incumbent: Option<LeaderDecision>,
    pub trace: Vec<TraceEntry>,
}

/// Relative optimality gap `(ub - lb)/lb` with reporting conventions:
/// a closed gap is 0 and a nonpositive `lb` cannot serve as a scale, so
/// the gap saturates at 1 there.
pub fn relative_gap(lb: f64, ub: f64) -> f64 {
    if ub - lb <= 1e-12 * lb.abs().max(1.0) {
        return 0.0;
    }
    if lb > 0.0 {
        (ub - lb) / lb
    } else {
        1.0
    }
}

fn cannot_improve(bound: f64, lb: f64, tol: f64) -> bool {
    bound <= lb + tol * lb.abs().max(1.0)
}

/// Follower selected for branching, as an index into the instance arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchTarget {
    Traveler(usize),
    Provider(usize),
}

fn argmax_by<F: Fn(usize) -> f64>(cands: &[usize], f: F) -> usize {
    let mut best = cands[0];
    let mut best_v = f(cands[0]);
    for &c in &cands[1..] {
        let v = f(c);
        if v > best_v {
            best = c;
            best_v = v;
        }
    }
    best
}

fn argmin_by<F: Fn(usize) -> f64>(cands: &[usize], f: F) -> usize {
    argmax_by(cands, |c| -f(c))
}

/// Min-max normalization onto [0, 1]; a flat range maps to all zeros.
fn normalized<F: Fn(usize) -> f64>(cands: &[usize], f: F) -> Vec<f64> {
    let vals: Vec<f64> = cands.iter().map(|&c| f(c)).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![0.0; vals.len()];
    }
    vals.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

fn is_provider_undecided(inst: &MarketInstance, fixed: &FixedSets, j: usize) -> bool {
    let key = (inst.providers[j].mode_id, inst.providers[j].provider_id);
    !fixed.prov_fixed0.contains(&key) && !fixed.prov_fixed1.contains(&key)
}

fn is_traveler_undecided(inst: &MarketInstance, fixed: &FixedSets, i: usize) -> bool {
    let id = inst.travelers[i].traveler_id;
    !fixed.trav_fixed0.contains(&id) && !fixed.trav_fixed1.contains(&id)
}

/// Applies a branching rule to the suboptimal, still-undecided followers.
///
/// Providers take precedence over travelers under every rule; ties
/// resolve to the lowest index.
///
/// Contract
/// - pre: `audit` was computed on this instance and `theta in [0, 1]`.
/// - post: the returned follower is undecided in `fixed` and listed as
///   suboptimal in `audit`; `None` means every suboptimal follower is
///   already decided.
pub fn select_branch(
    inst: &MarketInstance,
    fixed: &FixedSets,
    audit: &FollowerAudit,
    rule: BranchRule,
    theta: f64,
) -> Option<BranchTarget> {
    let provs: Vec<usize> = audit
        .v_tsp
        .iter()
        .copied()
        .filter(|&j| is_provider_undecided(inst, fixed, j))
        .collect();
    if !provs.is_empty() {
        let pick = match rule {
            BranchRule::Bp => argmin_by(&provs, |j| inst.providers[j].sell_price),
            BranchRule::Diffob => argmax_by(&provs, |j| audit.provider_gaps[j]),
            BranchRule::Wi => {
                let gain = normalized(&provs, |j| audit.provider_gaps[j]);
                let price = normalized(&provs, |j| inst.providers[j].sell_price);
                let mut best = 0;
                for pos in 1..provs.len() {
                    let s = theta * gain[pos] + (1.0 - theta) * (1.0 - price[pos]);
                    let b = theta * gain[best] + (1.0 - theta) * (1.0 - price[best]);
                    if s > b {
                        best = pos;
                    }
                }
                provs[best]
            }
        };
        return Some(BranchTarget::Provider(pick));
    }
    let travs: Vec<usize> = audit
        .v_travel
        .iter()
        .copied()
        .filter(|&i| is_traveler_undecided(inst, fixed, i))
        .collect();
    if !travs.is_empty() {
        let pick = match rule {
            BranchRule::Bp => argmax_by(&travs, |i| inst.travelers[i].bid_price),
            BranchRule::Diffob => argmax_by(&travs, |i| audit.traveler_gaps[i]),
            BranchRule::Wi => {
                let gain = normalized(&travs, |i| audit.traveler_gaps[i]);
                let price = normalized(&travs, |i| inst.travelers[i].bid_price);
                let mut best = 0;
                for pos in 1..travs.len() {
                    let s = theta * gain[pos] + (1.0 - theta) * price[pos];
                    let b = theta * gain[best] + (1.0 - theta) * price[best];
                    if s > b {
                        best = pos;
                    }
                }
                travs[best]
            }
        };
        return Some(BranchTarget::Traveler(pick));
    }
    None
}

fn first_undecided(inst: &MarketInstance, fixed: &FixedSets) -> Option<BranchTarget> {
    for j in 0..inst.providers.len() {
        if is_provider_undecided(inst, fixed, j) {
            return Some(BranchTarget::Provider(j));
        }
    }
    for i in 0..inst.travelers.len() {
        if is_traveler_undecided(inst, fixed, i) {
            return Some(BranchTarget::Traveler(i));
        }
    }
    None
}

fn decision_from_point(
    inst: &MarketInstance,
    vm: &VarMap,
    point: &[f64],
    with_multipliers: bool,
) -> LeaderDecision {
    let nt = inst.travelers.len();
    let np = inst.providers.len();
    let nm = inst.modes.len();
    LeaderDecision {
        p: point[vm.p()],
        q: point[vm.q()],
        u: (0..nt).map(|i| point[vm.u(i)] > 0.5).collect(),
        w: (0..np).map(|k| point[vm.w(k)] > 0.5).collect(),
        l: (0..nt)
            .map(|i| (0..nm).map(|m| point[vm.l(i, m)]).collect())
            .collect(),
        delta: point[vm.delta()],
        x: (0..nt).map(|i| point[vm.x(i)]).collect(),
        y: (0..np).map(|k| point[vm.y(k)]).collect(),
        multipliers: with_multipliers.then(|| Multipliers {
            lambda: (0..nt)
                .map(|i| {
                    [
                        point[vm.lambda(i, 0)],
                        point[vm.lambda(i, 1)],
                        point[vm.lambda(i, 2)],
                    ]
                })
                .collect(),
            mu: (0..np)
                .map(|j| [point[vm.mu(j, 0)], point[vm.mu(j, 1)], point[vm.mu(j, 2)]])
                .collect(),
        }),
    }
}

/// The node sub-problem: the high-point relaxation with strong-duality
/// rows attached to every accepted-and-fixed follower.
fn node_program(
    inst: &MarketInstance,
    fixed: &FixedSets,
    model: EffectKind,
    lambda_max: f64,
) -> Result<(MixedProgram, VarMap), ReformError> {
    let (mut prog, vm) = build_hpr(inst, fixed, model)?;
    for (i, t) in inst.travelers.iter().enumerate() {
        if fixed.trav_fixed1.contains(&t.traveler_id) {
            augment_sd(
                &mut prog,
                &vm,
                inst,
                fixed,
                Side::Traveler,
                i,
                model,
                lambda_max,
            )?;
        }
    }
    for (j, pr) in inst.providers.iter().enumerate() {
        if fixed.prov_fixed1.contains(&(pr.mode_id, pr.provider_id)) {
            augment_sd(
                &mut prog,
                &vm,
                inst,
                fixed,
                Side::Provider,
                j,
                model,
                lambda_max,
            )?;
        }
    }
    Ok((prog, vm))
}

/// Every follower rejected.
pub fn all_reject(inst: &MarketInstance) -> FixedSets {
    let mut f = FixedSets::empty();
    for t in &inst.travelers {
        f.trav_fixed0.insert(t.traveler_id);
    }
    for p in &inst.providers {
        f.prov_fixed0.insert((p.mode_id, p.provider_id));
    }
    f
}

/// Exact leader value of a fully decided acceptance pattern.
///
/// Linear effects: strong-duality rows force every accepted follower onto
/// its best response, so one subsolver call is exact. Quadratic effects:
/// the supply-demand gap must be a fixed point of the best-response map;
/// the piecewise-linear fixed-point equation is solved segment by segment
/// and each root is checked for leader feasibility.
///
/// Contract
/// - pre: `fixed.is_complete(inst)` (panics otherwise).
/// - post: `Some(dec)` is bilevel feasible; `None` means no leader-feasible
///   point exists for this pattern. Ties between fixed-point roots resolve
///   to the smallest gap.
pub fn evaluate_completion(
    inst: &MarketInstance,
    fixed: &FixedSets,
    model: EffectKind,
) -> Result<Option<LeaderDecision>, ReformError> {
    assert!(
        fixed.is_complete(inst),
        "completion needs every follower decided"
    );
    match model {
        EffectKind::Linear => {
            let lam = default_lambda_max(inst, model);
            let (prog, vm) = node_program(inst, fixed, model, lam)?;
            let out = solve(&prog);
            if out.status != SolveStatus::Optimal {
                return Ok(None);
            }
            Ok(Some(decision_from_point(inst, &vm, &out.point, false)))
        }
        EffectKind::Quadratic => {
            let accept_t: Vec<bool> = inst
                .travelers
                .iter()
                .map(|t| fixed.trav_fixed1.contains(&t.traveler_id))
                .collect();
            let accept_p: Vec<bool> = inst
                .providers
                .iter()
                .map(|p| fixed.prov_fixed1.contains(&(p.mode_id, p.provider_id)))
                .collect();
            let (lo, hi) = (inst.bounds.gap_lower, inst.bounds.gap_upper);

            // Kinks of the best-response levels as functions of the gap.
            let mut kinks = vec![lo, hi];
            for (i, t) in inst.travelers.iter().enumerate() {
                if accept_t[i] {
                    let ub = traveler_upper_bound(t, true);
                    let s = ((t.reserve_price - t.bid_price) / t.waiting_cost_rate
                        - inst.effect.a1_t)
                        / (2.0 * inst.effect.a2_t);
                    kinks.push(s - ub * t.quantity());
                    kinks.push(s);
                }
            }
            for (j, pr) in inst.providers.iter().enumerate() {
                if accept_p[j] {
                    let ub = provider_upper_bound(pr, true);
                    let s = -((pr.sell_price - pr.reserve_price) / pr.idle_cost_rate
                        + inst.effect.a1_p)
                        / (2.0 * inst.effect.a2_p);
                    kinks.push(s);
                    kinks.push(s + ub * pr.capacity);
                }
            }
            kinks.retain(|d| *d >= lo && *d <= hi);
            kinks.sort_by(f64::total_cmp);
            kinks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);

            // Residual of the gap identity at best responses.
            let h = |d: f64| -> f64 {
                let mut v = d;
                for (i, t) in inst.travelers.iter().enumerate() {
                    if accept_t[i] {
                        v += t.quantity()
                            * best_response_traveler(t, true, d, &inst.effect).level_star;
                    }
                }
                for (j, pr) in inst.providers.iter().enumerate() {
                    if accept_p[j] {
                        v -= pr.capacity
                            * best_response_provider(pr, true, d, &inst.effect).level_star;
                    }
                }
                v
            };
            let mut roots: Vec<f64> = Vec::new();
            for seg in kinks.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                let (ha, hb) = (h(a), h(b));
                if ha.abs() <= 1e-9 {
                    roots.push(a);
                }
                if hb.abs() <= 1e-9 {
                    roots.push(b);
                }
                if ha * hb < 0.0 {
                    roots.push(a - ha * (b - a) / (hb - ha));
                }
            }
            if kinks.len() == 1 && h(kinks[0]).abs() <= 1e-9 {
                roots.push(kinks[0]);
            }
            roots.sort_by(f64::total_cmp);
            roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);

            let mut best: Option<LeaderDecision> = None;
            let mut best_profit = f64::NEG_INFINITY;
            for d in roots {
                let xs: Vec<f64> = inst
                    .travelers
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        if accept_t[i] {
                            best_response_traveler(t, true, d, &inst.effect).level_star
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let ys: Vec<f64> = inst
                    .providers
                    .iter()
                    .enumerate()
                    .map(|(j, pr)| {
                        if accept_p[j] {
                            best_response_provider(pr, true, d, &inst.effect).level_star
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let (mut prog, vm) = build_hpr(inst, fixed, model)?;
                for (i, &xv) in xs.iter().enumerate() {
                    prog.variables[vm.x(i)].lower = xv;
                    prog.variables[vm.x(i)].upper = xv;
                }
                for (j, &yv) in ys.iter().enumerate() {
                    prog.variables[vm.y(j)].lower = yv;
                    prog.variables[vm.y(j)].upper = yv;
                }
                prog.variables[vm.delta()].lower = d;
                prog.variables[vm.delta()].upper = d;
                let out = solve(&prog);
                if out.status != SolveStatus::Optimal {
                    continue;
                }
                let dec = decision_from_point(inst, &vm, &out.point, false);
                let profit = dec.leader_profit(inst);
                if profit > best_profit {
                    best_profit = profit;
                    best = Some(dec);
                }
            }
            Ok(best)
        }
    }
}

/// Max-heap key: best bound first, then oldest node.
struct Ranked<T> {
    carried: f64,
    id: usize,
    payload: T,
}

impl<T> PartialEq for Ranked<T> {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl<T> Eq for Ranked<T> {}

impl<T> Ord for Ranked<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.carried
            .total_cmp(&other.carried)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl<T> PartialOrd for Ranked<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct SdNode {
    parent: Option<usize>,
    branch: String,
    fixed: FixedSets,
}

/// Strong-duality branch and bound over follower acceptances.
///
/// Undecided acceptances stay binary inside each node sub-problem, so a
/// node bounds every completion of its fixing. Incumbents must pass the
/// exact follower audit, which keeps the reported `lb` bilevel feasible
/// even though quadratic node relaxations carry McCormick slack. Fully
/// decided patterns whose relaxed point fails the audit are evaluated
/// exactly and fathomed.
///
/// Contract
/// - post: `lb <= ub`; `k == trace.len()`; trace entries appear in
///   processing order with `parent < id`.
pub fn solve_sdbb(inst: &MarketInstance, cfg: &BnbConfig) -> Result<SolveReport, BnbError> {
    let start = Instant::now();
    let lam = cfg
        .lambda_max
        .unwrap_or_else(|| default_lambda_max(inst, cfg.model));

    let mut lb = f64::NEG_INFINITY;
    let mut incumbent: Option<LeaderDecision> = None;
    if let Some(dec) = evaluate_completion(inst, &all_reject(inst), cfg.model)? {
        lb = dec.leader_profit(inst);
        incumbent = Some(dec);
    }

    let mut open: BinaryHeap<Ranked<SdNode>> = BinaryHeap::new();
    open.push(Ranked {
        carried: f64::INFINITY,
        id: 0,
        payload: SdNode {
            parent: None,
            branch: "root".into(),
            fixed: FixedSets::empty(),
        },
    });
    let mut next_id = 1usize;
    let mut k = 0usize;
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut status = Termination::Optimal;

    while let Some(node) = open.pop() {
        if start.elapsed().as_secs_f64() >= cfg.time_limit_s {
            status = Termination::TimeLimit;
            open.push(node);
            break;
        }
        if incumbent.is_some() && relative_gap(lb, node.carried.max(lb)) <= cfg.gap_tol {
            open.push(node);
            break;
        }

        let (prog, vm) = node_program(inst, &node.payload.fixed, cfg.model, lam)?;
        let out = solve(&prog);
        k += 1;
        let mut entry = TraceEntry {
            id: node.id,
            parent: node.payload.parent,
            branch: node.payload.branch.clone(),
            bound: node.carried,
            status: String::new(),
        };
        match out.status {
            SolveStatus::Unbounded => return Err(BnbError::Unbounded(node.id)),
            SolveStatus::IterLimit => {
                log::warn!("node {} hit the subsolver iteration cap", node.id);
                entry.status = "stalled".into();
                trace.push(entry);
                continue;
            }
            SolveStatus::Infeasible => {
                if node.payload.fixed.is_complete(inst) {
                    if let Some(dec) = evaluate_completion(inst, &node.payload.fixed, cfg.model)? {
                        log::warn!(
                            "node {}: relaxation infeasible but the exact pattern is not; \
                             raise lambda_max",
                            node.id
                        );
                        let value = dec.leader_profit(inst);
                        if value > lb {
                            lb = value;
                            incumbent = Some(dec);
                        }
                        entry.status = "completed".into();
                    } else {
                        entry.status = "infeasible".into();
                    }
                } else {
                    entry.status = "infeasible".into();
                }
                trace.push(entry);
                continue;
            }
            SolveStatus::Optimal => {}
        }
        let bound = out.objective;
        entry.bound = bound;
        if incumbent.is_some() && cannot_improve(bound, lb, cfg.gap_tol) {
            entry.status = "pruned".into();
            trace.push(entry);
            continue;
        }

        let dec = decision_from_point(inst, &vm, &out.point, false);
        let audit = audit_followers(inst, &dec, cfg.eps_follower);
        if audit.all_optimal() {
            let value = dec.leader_profit(inst);
            if value > lb {
                lb = value;
                incumbent = Some(dec);
            }
            if cannot_improve(bound, value, cfg.gap_tol) {
                entry.status = "incumbent".into();
                trace.push(entry);
                continue;
            }
        }
        if node.payload.fixed.is_complete(inst) {
            if let Some(cdec) = evaluate_completion(inst, &node.payload.fixed, cfg.model)? {
                let value = cdec.leader_profit(inst);
                if value > lb {
                    lb = value;
                    incumbent = Some(cdec);
                }
            }
            entry.status = "completed".into();
            trace.push(entry);
            continue;
        }

        let target = select_branch(inst, &node.payload.fixed, &audit, cfg.rule, cfg.theta)
            .or_else(|| first_undecided(inst, &node.payload.fixed))
            .expect("an incomplete node always has an undecided follower");
        for accept in [true, false] {
            let mut child = node.payload.fixed.clone();
            let label = match target {
                BranchTarget::Traveler(i) => {
                    let id = inst.travelers[i].traveler_id;
                    if accept {
                        child.trav_fixed1.insert(id);
                    } else {
                        child.trav_fixed0.insert(id);
                    }
                    format!("u_{}={}", id, u8::from(accept))
                }
                BranchTarget::Provider(j) => {
                    let key = (inst.providers[j].mode_id, inst.providers[j].provider_id);
                    if accept {
                        child.prov_fixed1.insert(key);
                    } else {
                        child.prov_fixed0.insert(key);
                    }
                    format!("w_{}_{}={}", key.0, key.1, u8::from(accept))
                }
            };
            open.push(Ranked {
                carried: bound,
                id: next_id,
                payload: SdNode {
                    parent: Some(node.id),
                    branch: label,
                    fixed: child,
                },
            });
            next_id += 1;
        }
        entry.status = "branched".into();
        trace.push(entry);
    }

    finish_report(start, status, lb, incumbent, k, trace, &open)
}

struct BmNode {
    parent: Option<usize>,
    branch: String,
    rows: Vec<crate::subsolver::LinCon>,
}

/// Complementarity branch and bound on the KKT reformulation.
///
/// The root relaxes every complementarity pair; each branching step
/// enforces one side of the most violated pair as an equality row.
/// Incumbents must satisfy every pair within 1e-6 and pass the exact
/// follower audit; they carry the multiplier values found at the node.
///
/// Contract
/// - post: same report invariants as [`solve_sdbb`].
pub fn solve_bardmoore(inst: &MarketInstance, cfg: &BnbConfig) -> Result<SolveReport, BnbError> {
    let start = Instant::now();
    let lam = cfg
        .lambda_max
        .unwrap_or_else(|| default_lambda_max(inst, cfg.model));
    let (base, vm, pairs) = build_mpec(inst, cfg.model, lam)?;

    let mut lb = f64::NEG_INFINITY;
    let mut incumbent: Option<LeaderDecision> = None;
    if let Some(dec) = evaluate_completion(inst, &all_reject(inst), cfg.model)? {
        lb = dec.leader_profit(inst);
        incumbent = Some(dec);
    }

    let mut open: BinaryHeap<Ranked<BmNode>> = BinaryHeap::new();
    open.push(Ranked {
        carried: f64::INFINITY,
        id: 0,
        payload: BmNode {
            parent: None,
            branch: "root".into(),
            rows: Vec::new(),
        },
    });
    let mut next_id = 1usize;
    let mut k = 0usize;
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut status = Termination::Optimal;

    while let Some(node) = open.pop() {
        if start.elapsed().as_secs_f64() >= cfg.time_limit_s {
            status = Termination::TimeLimit;
            open.push(node);
            break;
        }
        if incumbent.is_some() && relative_gap(lb, node.carried.max(lb)) <= cfg.gap_tol {
            open.push(node);
            break;
        }

        let mut prog = base.clone();
        prog.lin.extend(node.payload.rows.iter().cloned());
        let out = solve(&prog);
        k += 1;
        let mut entry = TraceEntry {
            id: node.id,
            parent: node.payload.parent,
            branch: node.payload.branch.clone(),
            bound: node.carried,
            status: String::new(),
        };
        match out.status {
            SolveStatus::Unbounded => return Err(BnbError::Unbounded(node.id)),
            SolveStatus::IterLimit => {
                log::warn!("node {} hit the subsolver iteration cap", node.id);
                entry.status = "stalled".into();
                trace.push(entry);
                continue;
            }
            SolveStatus::Infeasible => {
                entry.status = "infeasible".into();
                trace.push(entry);
                continue;
            }
            SolveStatus::Optimal => {}
        }
        let bound = out.objective;
        entry.bound = bound;
        if incumbent.is_some() && cannot_improve(bound, lb, cfg.gap_tol) {
            entry.status = "pruned".into();
            trace.push(entry);
            continue;
        }

        let mut worst = 0usize;
        let mut worst_v = f64::NEG_INFINITY;
        for (idx, pair) in pairs.iter().enumerate() {
            let v = pair.product(&out.point).abs();
            if v > worst_v {
                worst = idx;
                worst_v = v;
            }
        }
        if worst_v <= 1e-6 {
            let dec = decision_from_point(inst, &vm, &out.point, true);
            let audit = audit_followers(inst, &dec, cfg.eps_follower);
            if audit.all_optimal() {
                let value = dec.leader_profit(inst);
                if value > lb {
                    lb = value;
                    incumbent = Some(dec);
                }
                entry.status = "incumbent".into();
            } else {
                log::warn!(
                    "node {}: complementary point failed the exact audit (gap {:.3e})",
                    node.id,
                    audit.worst_gap()
                );
                entry.status = "completed".into();
            }
            trace.push(entry);
            continue;
        }

        let pair = &pairs[worst];
        for (expr, tag) in [(&pair.expr_a, "a"), (&pair.expr_b, "b")] {
            let mut rows = node.payload.rows.clone();
            rows.push(expr.to_zero_row(format!("{}_{}0", pair.label, tag)));
            open.push(Ranked {
                carried: bound,
                id: next_id,
                payload: BmNode {
                    parent: Some(node.id),
                    branch: format!("{}:{}=0", pair.label, tag),
                    rows,
                },
            });
            next_id += 1;
        }
        entry.status = "branched".into();
        trace.push(entry);
    }

    finish_report(start, status, lb, incumbent, k, trace, &open)
}

fn finish_report<T>(
    start: Instant,
    mut status: Termination,
    lb: f64,
    incumbent: Option<LeaderDecision>,
    k: usize,
    trace: Vec<TraceEntry>,
    open: &BinaryHeap<Ranked<T>>,
) -> Result<SolveReport, BnbError> {
    let open_best = open
        .iter()
        .map(|n| n.carried)
        .fold(f64::NEG_INFINITY, f64::max);
    let ub = if incumbent.is_some() {
        lb.max(open_best)
    } else {
        open_best
    };
    if incumbent.is_none() && open.is_empty() {
        status = Termination::Infeasible;
    }
    let gap = if status == Termination::Infeasible {
        0.0
    } else {
        relative_gap(lb, ub)
    };
    if lb <= 0.0 && gap >= 1.0 {
        log::info!("relative gap undefined at lb {lb}; absolute slack {}", ub - lb);
    }
    Ok(SolveReport {
        status,
        lb,
        ub,
        gap,
        k,
        wall_time_s: start.elapsed().as_secs_f64(),
        incumbent,
        trace,
    })
}

/// Exhaustive certified optimum over every accept/reject pattern.
///
/// Contract
/// - pre: at most 16 followers (error otherwise).
/// - post: `lb == ub` equal the optimistic bilevel optimum, `k` counts the
///   evaluated patterns and the trace is empty; ties between patterns keep
///   the earliest one in mask order (travelers in the low bits).
pub fn brute_force_oracle(
    inst: &MarketInstance,
    model: EffectKind,
) -> Result<SolveReport, BnbError> {
    let start = Instant::now();
    let nt = inst.travelers.len();
    let n = nt + inst.providers.len();
    if n > 16 {
        return Err(BnbError::TooLarge { max: 16, got: n });
    }
    let mut lb = f64::NEG_INFINITY;
    let mut best: Option<LeaderDecision> = None;
    let mut k = 0usize;
    for mask in 0u32..(1u32 << n) {
        let mut fixed = FixedSets::empty();
        for (i, t) in inst.travelers.iter().enumerate() {
            if mask & (1 << i) != 0 {
                fixed.trav_fixed1.insert(t.traveler_id);
            } else {
                fixed.trav_fixed0.insert(t.traveler_id);
            }
        }
        for (j, pr) in inst.providers.iter().enumerate() {
            let key = (pr.mode_id, pr.provider_id);
            if mask & (1 << (nt + j)) != 0 {
                fixed.prov_fixed1.insert(key);
            } else {
                fixed.prov_fixed0.insert(key);
            }
        }
        k += 1;
        if let Some(dec) = evaluate_completion(inst, &fixed, model)? {
            let v = dec.leader_profit(inst);
            if v > lb {
                lb = v;
                best = Some(dec);
            }
        }
    }
    let status = if best.is_some() {
        Termination::Optimal
    } else {
        Termination::Infeasible
    };
    Ok(SolveReport {
        status,
        lb,
        ub: lb,
        gap: 0.0,
        k,
        wall_time_s: start.elapsed().as_secs_f64(),
        incumbent: best,
        trace: Vec::new(),
    })
}
