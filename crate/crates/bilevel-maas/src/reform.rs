//! Single-level reformulation builders.
//!
//! The bilevel market problem is solved through single-level surrogates
//! built here from a [`MarketInstance`]:
//!
//! - [`build_hpr`]: the high-point relaxation, containing every leader
//!   constraint and follower primal feasibility but no optimality content.
//! - [`augment_sd`]: strong-duality rows forcing an accepted follower onto
//!   its best response. Linear effects need two rows; quadratic effects
//!   need one convex quadratic row plus McCormick envelopes for the
//!   gap-times-level and gap-times-dual products.
//! - [`build_mpec`]: the KKT system with complementarity returned as
//!   relaxed pairs, the substrate for complementarity branching.
//!
//! All builders are pure and deterministic: variables and constraints are
//! emitted in a fixed documented order so solver traces are reproducible.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{
    validate_instance, EffectKind, LeaderDecision, MarketInstance, NetworkEffect, ProviderBid,
    TravelerBid,
};
use crate::subsolver::{LinCon, MixedProgram, QuadCon, Relation, Variable};

/// Errors from reformulation builders.
#[derive(Debug, Error)]
pub enum ReformError {
    #[error("instance invalid: {0}")]
    InvalidInstance(String),
    #[error("{0} is not fixed to 1; strong-duality rows attach only to accepted followers")]
    NotFixedOne(String),
    #[error("{0}")]
    Domain(String),
}

/// Follower side selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Traveler,
    Provider,
}

/// Accept/reject decisions accumulated along a search path.
///
/// Travelers are keyed by id, providers by `(mode_id, provider_id)`.
/// The fixed-0 and fixed-1 sets must stay disjoint per side.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixedSets {
    pub trav_fixed0: BTreeSet<usize>,
    pub trav_fixed1: BTreeSet<usize>,
    pub prov_fixed0: BTreeSet<(usize, usize)>,
    pub prov_fixed1: BTreeSet<(usize, usize)>,
}

impl FixedSets {
    pub fn empty() -> Self {
        FixedSets::default()
    }

    /// True when no id is fixed both ways.
    pub fn is_consistent(&self) -> bool {
        self.trav_fixed0.is_disjoint(&self.trav_fixed1)
            && self.prov_fixed0.is_disjoint(&self.prov_fixed1)
    }

    /// Number of decided followers.
    pub fn decided(&self) -> usize {
        self.trav_fixed0.len()
            + self.trav_fixed1.len()
            + self.prov_fixed0.len()
            + self.prov_fixed1.len()
    }

    /// True when every follower of the instance is decided.
    pub fn is_complete(&self, inst: &MarketInstance) -> bool {
        self.decided() == inst.travelers.len() + inst.providers.len()
    }
}

/// Column layout of programs built from a [`MarketInstance`].
///
/// Base order: `p`, `q`, service times `l[i][m]`, acceptances `u[i]`,
/// levels `x[i]`, acceptances `w[k]`, levels `y[k]`, then `delta`.
/// Builders that add variables (duals, multipliers, products) append them
/// after `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarMap {
    pub n_travelers: usize,
    pub n_modes: usize,
    pub n_providers: usize,
}

impl VarMap {
    pub fn for_instance(inst: &MarketInstance) -> Self {
        VarMap {
            n_travelers: inst.travelers.len(),
            n_modes: inst.modes.len(),
            n_providers: inst.providers.len(),
        }
    }

    pub fn p(&self) -> usize {
        0
    }

    pub fn q(&self) -> usize {
        1
    }

    /// Service time of traveler `i` on mode `m` (0-based positions).
    pub fn l(&self, i: usize, m: usize) -> usize {
        2 + i * self.n_modes + m
    }

    pub fn u(&self, i: usize) -> usize {
        2 + self.n_travelers * self.n_modes + i
    }

    pub fn x(&self, i: usize) -> usize {
        2 + self.n_travelers * self.n_modes + self.n_travelers + i
    }

    pub fn w(&self, k: usize) -> usize {
        2 + self.n_travelers * self.n_modes + 2 * self.n_travelers + k
    }

    pub fn y(&self, k: usize) -> usize {
        2 + self.n_travelers * self.n_modes + 2 * self.n_travelers + self.n_providers + k
    }

    pub fn delta(&self) -> usize {
        2 + self.n_travelers * self.n_modes + 2 * self.n_travelers + 2 * self.n_providers
    }

    /// Number of base columns (`delta` is last).
    pub fn base_len(&self) -> usize {
        self.delta() + 1
    }

    /// Multiplier column `k in 0..3` of traveler `i` in an MPEC program.
    pub fn lambda(&self, i: usize, k: usize) -> usize {
        self.base_len() + 3 * i + k
    }

    /// Multiplier column `k in 0..3` of provider `j` in an MPEC program.
    pub fn mu(&self, j: usize, k: usize) -> usize {
        self.base_len() + 3 * self.n_travelers + 3 * j + k
    }
}

fn checked_instance(inst: &MarketInstance) -> Result<(), ReformError> {
    let report = validate_instance(inst);
    if report.is_ok() {
        Ok(())
    } else {
        Err(ReformError::InvalidInstance(report.to_string()))
    }
}

/// Builds the high-point relaxation.
///
/// Contract
/// - pre: `fixed` is consistent.
/// - post: contains the leader objective, pricing/acceptance coupling,
///   routing, delay, inconvenience and capacity constraints, the gap
///   identity, follower primal feasibility, and bound boxes; binaries in
///   `fixed` get pinned bounds. No optimality content is added.
/// - post: variables follow the [`VarMap`] layout exactly.
pub fn build_hpr(
    inst: &MarketInstance,
    fixed: &FixedSets,
    model: EffectKind,
) -> Result<(MixedProgram, VarMap), ReformError> {
    checked_instance(inst)?;
    if !fixed.is_consistent() {
        return Err(ReformError::Domain(
            "fixed sets overlap: some follower is pinned both ways".into(),
        ));
    }
    let vm = VarMap::for_instance(inst);
    let b = &inst.bounds;
    let mut prog = MixedProgram::new(format!("hpr_{model}"));

    prog.add_var(Variable::cont("p", b.p_min, b.p_max));
    prog.add_var(Variable::cont("q", b.q_min, b.q_max));
    for t in &inst.travelers {
        for m in &inst.modes {
            prog.add_var(Variable::cont(
                format!("l_{}_{}", t.traveler_id, m.mode_id),
                0.0,
                t.service_time + t.delay_budget,
            ));
        }
    }
    for t in &inst.travelers {
        let mut v = Variable::binary(format!("u_{}", t.traveler_id));
        if fixed.trav_fixed1.contains(&t.traveler_id) {
            v.lower = 1.0;
        } else if fixed.trav_fixed0.contains(&t.traveler_id) {
            v.upper = 0.0;
        }
        prog.add_var(v);
    }
    for t in &inst.travelers {
        prog.add_var(Variable::cont(format!("x_{}", t.traveler_id), 0.0, 1.0));
    }
    for pr in &inst.providers {
        let mut v = Variable::binary(format!("w_{}_{}", pr.mode_id, pr.provider_id));
        let key = (pr.mode_id, pr.provider_id);
        if fixed.prov_fixed1.contains(&key) {
            v.lower = 1.0;
        } else if fixed.prov_fixed0.contains(&key) {
            v.upper = 0.0;
        }
        prog.add_var(v);
    }
    for pr in &inst.providers {
        prog.add_var(Variable::cont(
            format!("y_{}_{}", pr.mode_id, pr.provider_id),
            0.0,
            1.0,
        ));
    }
    prog.add_var(Variable::cont("delta", b.gap_lower, b.gap_upper));

    for (i, t) in inst.travelers.iter().enumerate() {
        prog.objective[vm.x(i)] = t.bid_price * t.quantity();
    }
    for (k, pr) in inst.providers.iter().enumerate() {
        prog.objective[vm.y(k)] = -pr.sell_price * pr.capacity;
    }

    // Routing: distances delivered per mode must add up to the accepted share.
    for (i, t) in inst.travelers.iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = inst
            .modes
            .iter()
            .enumerate()
            .map(|(m, md)| (vm.l(i, m), md.commercial_speed))
            .collect();
        coeffs.push((vm.x(i), -t.distance));
        prog.lin.push(LinCon::new(
            format!("route_{}", t.traveler_id),
            coeffs,
            Relation::Eq,
            0.0,
        ));
    }
    // Delay window: total service time within [T x, T x + R].
    for (i, t) in inst.travelers.iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> =
            (0..inst.modes.len()).map(|m| (vm.l(i, m), 1.0)).collect();
        coeffs.push((vm.x(i), -t.service_time));
        prog.lin.push(LinCon::new(
            format!("delay_lo_{}", t.traveler_id),
            coeffs.clone(),
            Relation::Ge,
            0.0,
        ));
        prog.lin.push(LinCon::new(
            format!("delay_hi_{}", t.traveler_id),
            coeffs,
            Relation::Le,
            t.delay_budget,
        ));
    }
    // Inconvenience tolerance.
    for (i, t) in inst.travelers.iter().enumerate() {
        let coeffs: Vec<(usize, f64)> = inst
            .modes
            .iter()
            .enumerate()
            .map(|(m, md)| (vm.l(i, m), md.inconvenience_rate))
            .collect();
        prog.lin.push(LinCon::new(
            format!("inconv_{}", t.traveler_id),
            coeffs,
            Relation::Le,
            t.inconvenience_tolerance,
        ));
    }
    // Per-mode capacity: consumed resources within committed supply.
    for (m, md) in inst.modes.iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = (0..inst.travelers.len())
            .map(|i| (vm.l(i, m), md.commercial_speed * md.commercial_speed))
            .collect();
        for (k, pr) in inst.providers.iter().enumerate() {
            if pr.mode_id == md.mode_id {
                coeffs.push((vm.y(k), -pr.capacity));
            }
        }
        prog.lin.push(LinCon::new(
            format!("cap_{}", md.mode_id),
            coeffs,
            Relation::Le,
            0.0,
        ));
    }
    // Price coupling: acceptance pins p below the bid, rejection above.
    for (i, t) in inst.travelers.iter().enumerate() {
        prog.lin.push(LinCon::new(
            format!("price_acc_{}", t.traveler_id),
            vec![(vm.p(), 1.0), (vm.u(i), b.p_max - t.bid_price)],
            Relation::Le,
            b.p_max,
        ));
        prog.lin.push(LinCon::new(
            format!("price_rej_{}", t.traveler_id),
            vec![(vm.p(), 1.0), (vm.u(i), t.bid_price - b.p_min)],
            Relation::Ge,
            t.bid_price,
        ));
    }
    // Fee coupling: acceptance pins q above the ask, rejection below.
    for (k, pr) in inst.providers.iter().enumerate() {
        prog.lin.push(LinCon::new(
            format!("fee_acc_{}_{}", pr.mode_id, pr.provider_id),
            vec![(vm.q(), 1.0), (vm.w(k), b.q_min - pr.sell_price)],
            Relation::Ge,
            b.q_min,
        ));
        prog.lin.push(LinCon::new(
            format!("fee_rej_{}_{}", pr.mode_id, pr.provider_id),
            vec![(vm.q(), 1.0), (vm.w(k), -(b.q_max - pr.sell_price))],
            Relation::Le,
            pr.sell_price,
        ));
    }
    // Gap identity: delta = supply - demand.
    {
        let mut coeffs = vec![(vm.delta(), 1.0)];
        for (i, t) in inst.travelers.iter().enumerate() {
            coeffs.push((vm.x(i), t.quantity()));
        }
        for (k, pr) in inst.providers.iter().enumerate() {
            coeffs.push((vm.y(k), -pr.capacity));
        }
        prog.lin.push(LinCon::new("gap", coeffs, Relation::Eq, 0.0));
    }
    // Follower primal feasibility.
    for (i, t) in inst.travelers.iter().enumerate() {
        prog.lin.push(LinCon::new(
            format!("budget_{}", t.traveler_id),
            vec![(vm.x(i), t.bid_price * t.quantity())],
            Relation::Le,
            t.expenditure_budget,
        ));
        prog.lin.push(LinCon::new(
            format!("accept_{}", t.traveler_id),
            vec![(vm.x(i), 1.0), (vm.u(i), -1.0)],
            Relation::Le,
            0.0,
        ));
    }
    for (k, pr) in inst.providers.iter().enumerate() {
        if pr.operating_cost > 0.0 {
            prog.lin.push(LinCon::new(
                format!("op_budget_{}_{}", pr.mode_id, pr.provider_id),
                vec![(vm.y(k), pr.operating_cost * pr.capacity)],
                Relation::Le,
                pr.operating_budget,
            ));
        }
        prog.lin.push(LinCon::new(
            format!("commit_{}_{}", pr.mode_id, pr.provider_id),
            vec![(vm.y(k), 1.0), (vm.w(k), -1.0)],
            Relation::Le,
            0.0,
        ));
    }

    Ok((prog, vm))
}

/// Coefficients of a follower objective in canonical minimization form
/// `(P/2) z^2 + U(delta) z + const`, with `U(delta) = U_const + U_delta delta`,
/// plus the budget-row coefficient `A` (so the budget reads `A z <= cap`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualCoefficients {
    pub a: f64,
    pub u_const: f64,
    pub u_delta: f64,
    pub p: f64,
}

/// Canonical coefficients of a traveler objective under a quadratic effect.
///
/// Contract
/// - post: `traveler_cost(bid, x, d) - traveler_cost(bid, 0, d)` equals
///   `(P/2} x^2 + U(d) x` for all `(x, d)`.
/// - errors: non-positive curvature (linear effect) is a domain error.
pub fn traveler_dual_coefficients(
    bid: &TravelerBid,
    effect: &NetworkEffect,
) -> Result<DualCoefficients, ReformError> {
    let q = bid.quantity();
    let p = 2.0 * bid.waiting_cost_rate * effect.a2_t * q * q;
    if p <= 0.0 {
        return Err(ReformError::Domain(format!(
            "traveler {}: curvature P = {p} is not positive; dual coefficients need a strictly convex objective",
            bid.traveler_id
        )));
    }
    Ok(DualCoefficients {
        a: bid.bid_price * q,
        u_const: (bid.bid_price - bid.reserve_price) * q + bid.waiting_cost_rate * effect.a1_t * q,
        u_delta: 2.0 * bid.waiting_cost_rate * effect.a2_t * q,
        p,
    })
}

/// Canonical coefficients of a provider objective (negated profit) under a
/// quadratic effect. Mirrors [`traveler_dual_coefficients`].
pub fn provider_dual_coefficients(
    bid: &ProviderBid,
    effect: &NetworkEffect,
) -> Result<DualCoefficients, ReformError> {
    let c = bid.capacity;
    let p = 2.0 * bid.idle_cost_rate * effect.a2_p * c * c;
    if p <= 0.0 {
        return Err(ReformError::Domain(format!(
            "provider ({},{}): curvature P = {p} is not positive; dual coefficients need a strictly convex objective",
            bid.mode_id, bid.provider_id
        )));
    }
    Ok(DualCoefficients {
        a: c * bid.operating_cost,
        u_const: (bid.reserve_price - bid.sell_price) * c - bid.idle_cost_rate * effect.a1_p * c,
        u_delta: -2.0 * bid.idle_cost_rate * effect.a2_p * c,
        p,
    })
}

/// Linear-model minimization slope of a follower objective (the `U_const`
/// of the linear case, where `P = U_delta = 0`).
fn linear_min_slope(inst: &MarketInstance, side: Side, idx: usize) -> f64 {
    match side {
        Side::Traveler => {
            let t = &inst.travelers[idx];
            let q = t.quantity();
            (t.bid_price - t.reserve_price) * q + t.waiting_cost_rate * inst.effect.a1_t * q
        }
        Side::Provider => {
            let pr = &inst.providers[idx];
            (pr.reserve_price - pr.sell_price) * pr.capacity
                - pr.idle_cost_rate * inst.effect.a1_p * pr.capacity
        }
    }
}

/// Default cap for dual and multiplier variables: ten times the largest
/// magnitude any optimal multiplier can take across followers, which for
/// these one-dimensional subproblems is bounded by the objective slope
/// scale and, when the budget row binds, the slope divided by its
/// coefficient.
pub fn default_lambda_max(inst: &MarketInstance, model: EffectKind) -> f64 {
    let delta_mag = inst.bounds.gap_lower.abs().max(inst.bounds.gap_upper.abs());
    let mut scale = 1.0f64;
    let mut consider = |a: f64, u_const: f64, u_delta: f64, p: f64| {
        let u_mag = u_const.abs() + u_delta.abs() * delta_mag + p;
        scale = scale.max(u_mag);
        if a > 1e-9 {
            scale = scale.max(u_mag / a);
        }
    };
    for (i, t) in inst.travelers.iter().enumerate() {
        match model {
            EffectKind::Linear => consider(
                t.bid_price * t.quantity(),
                linear_min_slope(inst, Side::Traveler, i),
                0.0,
                0.0,
            ),
            EffectKind::Quadratic => {
                if let Ok(dc) = traveler_dual_coefficients(t, &inst.effect) {
                    consider(dc.a, dc.u_const, dc.u_delta, dc.p);
                }
            }
        }
    }
    for (k, pr) in inst.providers.iter().enumerate() {
        match model {
            EffectKind::Linear => consider(
                pr.capacity * pr.operating_cost,
                linear_min_slope(inst, Side::Provider, k),
                0.0,
                0.0,
            ),
            EffectKind::Quadratic => {
                if let Ok(dc) = provider_dual_coefficients(pr, &inst.effect) {
                    consider(dc.a, dc.u_const, dc.u_delta, dc.p);
                }
            }
        }
    }
    10.0 * scale
}

/// Columns created by one [`augment_sd`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SdHandles {
    pub lam1: usize,
    pub lam2: usize,
    /// `delta * level` product (quadratic model only).
    pub w_prod: Option<usize>,
    /// `delta * lam1` and `delta * lam2` products (quadratic model only).
    pub v1: Option<usize>,
    pub v2: Option<usize>,
}

fn product_bounds(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let c = [a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1];
    (
        c.iter().cloned().fold(f64::INFINITY, f64::min),
        c.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    )
}

/// Emits the four McCormick envelope rows for `v = a * b` over a box.
fn push_mccormick(
    prog: &mut MixedProgram,
    tag: &str,
    v: usize,
    a: usize,
    b: usize,
    (al, au): (f64, f64),
    (bl, bu): (f64, f64),
) {
    prog.lin.push(LinCon::new(
        format!("{tag}_1"),
        vec![(a, bl), (b, al), (v, -1.0)],
        Relation::Le,
        al * bl,
    ));
    prog.lin.push(LinCon::new(
        format!("{tag}_2"),
        vec![(a, bu), (b, au), (v, -1.0)],
        Relation::Le,
        au * bu,
    ));
    prog.lin.push(LinCon::new(
        format!("{tag}_3"),
        vec![(v, 1.0), (a, -bl), (b, -au)],
        Relation::Le,
        -au * bl,
    ));
    prog.lin.push(LinCon::new(
        format!("{tag}_4"),
        vec![(v, 1.0), (a, -bu), (b, -al)],
        Relation::Le,
        -al * bu,
    ));
}

/// Attaches strong-duality rows forcing follower `(side, idx)` onto its
/// best response.
///
/// Contract
/// - pre: the follower is in the fixed-1 set (precondition error otherwise)
///   and `prog` was built by [`build_hpr`] with layout `vm`.
/// - post (linear): adds two capped duals and two rows, the value row
///   `U z + cap lam1 + lam2 <= 0` and dual feasibility
///   `A lam1 + lam2 >= -U`; together with primal feasibility these pin the
///   follower objective to its optimum.
/// - post (quadratic): adds two capped duals, three product columns, four
///   McCormick envelope rows per product, and one convex quadratic value
///   row; the exact best response with its optimal duals stays feasible.
#[allow(clippy::too_many_arguments)]
pub fn augment_sd(
    prog: &mut MixedProgram,
    vm: &VarMap,
    inst: &MarketInstance,
    fixed: &FixedSets,
    side: Side,
    idx: usize,
    model: EffectKind,
    lambda_max: f64,
) -> Result<SdHandles, ReformError> {
    let (label, z_col, cap, fixed_ok) = match side {
        Side::Traveler => {
            let t = &inst.travelers[idx];
            (
                format!("x_{}", t.traveler_id),
                vm.x(idx),
                t.expenditure_budget,
                fixed.trav_fixed1.contains(&t.traveler_id),
            )
        }
        Side::Provider => {
            let pr = &inst.providers[idx];
            (
                format!("y_{}_{}", pr.mode_id, pr.provider_id),
                vm.y(idx),
                pr.operating_budget,
                fixed.prov_fixed1.contains(&(pr.mode_id, pr.provider_id)),
            )
        }
    };
    if !fixed_ok {
        return Err(ReformError::NotFixedOne(label));
    }

    let lam1 = prog.add_var(Variable::cont(format!("sdl1_{label}"), 0.0, lambda_max));
    let lam2 = prog.add_var(Variable::cont(format!("sdl2_{label}"), 0.0, lambda_max));

    match model {
        EffectKind::Linear => {
            let u_c = linear_min_slope(inst, side, idx);
            let a = match side {
                Side::Traveler => {
                    let t = &inst.travelers[idx];
                    t.bid_price * t.quantity()
                }
                Side::Provider => {
                    let pr = &inst.providers[idx];
                    pr.capacity * pr.operating_cost
                }
            };
            prog.lin.push(LinCon::new(
                format!("sd_obj_{label}"),
                vec![(z_col, u_c), (lam1, cap), (lam2, 1.0)],
                Relation::Le,
                0.0,
            ));
            prog.lin.push(LinCon::new(
                format!("sd_dual_{label}"),
                vec![(lam1, a), (lam2, 1.0)],
                Relation::Ge,
                -u_c,
            ));
            Ok(SdHandles { lam1, lam2, w_prod: None, v1: None, v2: None })
        }
        EffectKind::Quadratic => {
            let dc = match side {
                Side::Traveler => traveler_dual_coefficients(&inst.travelers[idx], &inst.effect)?,
                Side::Provider => provider_dual_coefficients(&inst.providers[idx], &inst.effect)?,
            };
            let d_box = (inst.bounds.gap_lower, inst.bounds.gap_upper);
            let u_at = |d: f64| dc.u_const + dc.u_delta * d;
            if u_at(d_box.0).max(u_at(d_box.1)) > 0.0 {
                log::warn!(
                    "strong duality for {label} may be incomplete: U(delta) turns positive on \
                     [{}, {}], so zero-level responses are certified only through exact \
                     completion",
                    d_box.0,
                    d_box.1
                );
            }
            let z_box = (0.0, 1.0);
            let lam_box = (0.0, lambda_max);
            let w_prod = prog.add_var({
                let (lo, hi) = product_bounds(d_box, z_box);
                Variable::cont(format!("sdw_{label}"), lo, hi)
            });
            let v1 = prog.add_var({
                let (lo, hi) = product_bounds(d_box, lam_box);
                Variable::cont(format!("sdv1_{label}"), lo, hi)
            });
            let v2 = prog.add_var({
                let (lo, hi) = product_bounds(d_box, lam_box);
                Variable::cont(format!("sdv2_{label}"), lo, hi)
            });
            push_mccormick(prog, &format!("mc_w_{label}"), w_prod, vm.delta(), z_col, d_box, z_box);
            push_mccormick(prog, &format!("mc_v1_{label}"), v1, vm.delta(), lam1, d_box, lam_box);
            push_mccormick(prog, &format!("mc_v2_{label}"), v2, vm.delta(), lam2, d_box, lam_box);

            // Value row: (P/2) z^2 + U(d) z <= -(U(d) + A lam1 + lam2)^2/(2P)
            //            - cap lam1 - lam2,
            // expanded with d z, d lam1, d lam2 replaced by their envelopes.
            let (a, u_c, u_d, p) = (dc.a, dc.u_const, dc.u_delta, dc.p);
            let mut q_entries = vec![
                (z_col, z_col, p / 2.0),
                (lam1, lam1, a * a / (2.0 * p)),
                (lam1, lam2, a / p),
                (lam2, lam2, 1.0 / (2.0 * p)),
                (vm.delta(), vm.delta(), u_d * u_d / (2.0 * p)),
            ];
            q_entries.retain(|&(_, _, v)| v != 0.0);
            let mut coeffs = vec![
                (z_col, u_c),
                (w_prod, u_d),
                (lam1, u_c * a / p + cap),
                (lam2, u_c / p + 1.0),
                (v1, u_d * a / p),
                (v2, u_d / p),
                (vm.delta(), u_c * u_d / p),
            ];
            coeffs.retain(|&(_, v)| v != 0.0);
            prog.quad.push(QuadCon {
                name: format!("sd_obj_{label}"),
                q: q_entries,
                coeffs,
                rhs: -u_c * u_c / (2.0 * p),
            });
            Ok(SdHandles { lam1, lam2, w_prod: Some(w_prod), v1: Some(v1), v2: Some(v2) })
        }
    }
}

/// A relaxed complementarity condition `a(x) * b(x) = 0` between two
/// expressions that the host program already constrains nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct LinExpr {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }

    /// Equality row `expr = 0` for enforcing one side of a pair.
    pub fn to_zero_row(&self, name: impl Into<String>) -> LinCon {
        LinCon::new(name, self.coeffs.clone(), Relation::Eq, -self.constant)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplementarityPair {
    pub label: String,
    pub expr_a: LinExpr,
    pub expr_b: LinExpr,
}

impl ComplementarityPair {
    /// Product `a(x) * b(x)` at a point.
    pub fn product(&self, x: &[f64]) -> f64 {
        self.expr_a.value(x) * self.expr_b.value(x)
    }
}

/// Builds the KKT single-level system with complementarity relaxed.
///
/// Contract
/// - post: the program holds every high-point constraint plus capped
///   multipliers and one stationarity equality per follower; the returned
///   pairs are the four complementarity families per follower, all
///   relaxed (not enforced by any row).
/// - post: pair count is `4 |I| + 4 |MN|`.
pub fn build_mpec(
    inst: &MarketInstance,
    model: EffectKind,
    lambda_max: f64,
) -> Result<(MixedProgram, VarMap, Vec<ComplementarityPair>), ReformError> {
    let (mut prog, vm) = build_hpr(inst, &FixedSets::empty(), model)?;
    prog.name = format!("mpec_{model}");
    for t in &inst.travelers {
        for k in 1..=3 {
            prog.add_var(Variable::cont(
                format!("lam{k}_{}", t.traveler_id),
                0.0,
                lambda_max,
            ));
        }
    }
    for pr in &inst.providers {
        for k in 1..=3 {
            prog.add_var(Variable::cont(
                format!("mu{k}_{}_{}", pr.mode_id, pr.provider_id),
                0.0,
                lambda_max,
            ));
        }
    }

    let mut pairs = Vec::with_capacity(4 * (inst.travelers.len() + inst.providers.len()));
    for (i, t) in inst.travelers.iter().enumerate() {
        let (a, cap) = (t.bid_price * t.quantity(), t.expenditure_budget);
        let (u_c, u_d, p) = match model {
            EffectKind::Linear => (linear_min_slope(inst, Side::Traveler, i), 0.0, 0.0),
            EffectKind::Quadratic => {
                let dc = traveler_dual_coefficients(t, &inst.effect)?;
                (dc.u_const, dc.u_delta, dc.p)
            }
        };
        // Stationarity: P x + U(d) + A lam1 + lam2 - lam3 = 0.
        let mut coeffs = vec![
            (vm.x(i), p),
            (vm.delta(), u_d),
            (vm.lambda(i, 0), a),
            (vm.lambda(i, 1), 1.0),
            (vm.lambda(i, 2), -1.0),
        ];
        coeffs.retain(|&(_, c)| c != 0.0);
        prog.lin.push(LinCon::new(
            format!("stat_x_{}", t.traveler_id),
            coeffs,
            Relation::Eq,
            -u_c,
        ));
        let id = t.traveler_id;
        let stat_expr = {
            let mut c = vec![
                (vm.x(i), p),
                (vm.delta(), u_d),
                (vm.lambda(i, 0), a),
                (vm.lambda(i, 1), 1.0),
            ];
            c.retain(|&(_, v)| v != 0.0);
            LinExpr { coeffs: c, constant: u_c }
        };
        pairs.push(ComplementarityPair {
            label: format!("budget_x_{id}"),
            expr_a: LinExpr { coeffs: vec![(vm.x(i), -a)], constant: cap },
            expr_b: LinExpr { coeffs: vec![(vm.lambda(i, 0), 1.0)], constant: 0.0 },
        });
        pairs.push(ComplementarityPair {
            label: format!("accept_x_{id}"),
            expr_a: LinExpr {
                coeffs: vec![(vm.u(i), 1.0), (vm.x(i), -1.0)],
                constant: 0.0,
            },
            expr_b: LinExpr { coeffs: vec![(vm.lambda(i, 1), 1.0)], constant: 0.0 },
        });
        pairs.push(ComplementarityPair {
            label: format!("level_x_{id}"),
            expr_a: LinExpr { coeffs: vec![(vm.x(i), 1.0)], constant: 0.0 },
            expr_b: LinExpr { coeffs: vec![(vm.lambda(i, 2), 1.0)], constant: 0.0 },
        });
        pairs.push(ComplementarityPair {
            label: format!("grad_x_{id}"),
            expr_a: LinExpr { coeffs: vec![(vm.x(i), 1.0)], constant: 0.0 },
            expr_b: stat_expr,
        });
    }
    for (j, pr) in inst.providers.iter().enumerate() {
        let (a, cap) = (pr.capacity * pr.operating_cost, pr.operating_budget);
        let (u_c, u_d, p) = match model {
            EffectKind::Linear => (linear_min_slope(inst, Side::Provider, j), 0.0, 0.0),
            EffectKind::Quadratic => {
                let dc = provider_dual_coefficients(pr, &inst.effect)?;
                (dc.u_const, dc.u_delta, dc.p)
            }
        };
        let mut coeffs = vec![
            (vm.y(j), p),
            (vm.delta(), u_d),
            (vm.mu(j, 0), a),
            (vm.mu(j, 1), 1.0),
            (vm.mu(j, 2), -1.0),
        ];
        coeffs.retain(|&(_, c)| c != 0.0);
        prog.lin.push(LinCon::new(
            format!("stat_y_{}_{}", pr.mode_id, pr.provider_id),
            coeffs,
            Relation::Eq,
            -u_c,
        ));
        let id = format!("{}_{}", pr.mode_id, pr.provider_id);
        let stat_expr = {
            let mut c = vec![
                (vm.y(j), p),
                (vm.delta(), u_d),
                (vm.mu(j, 0), a),
                (vm.mu(j, 1), 1.0),
            ];
            c.retain(|&(_, v)| v != 0.0);
            LinExpr { coeffs: c, constant: u_c }
        };
        pairs.push(ComplementarityPair {
            label: format!("budget_y_{id}"),
            expr_a: LinExpr { coeffs: vec![(vm.y(j), -a)], constant: cap },
            expr_b: LinExpr { coeffs: vec![(vm.mu(j, 0), 1.0)], constant: 0.0 },
        });
        pairs.push(ComplementarityPair {
            label: format!("accept_y_{id}"),
            expr_a: LinExpr {
                coeffs: vec![(vm.w(j), 1.0), (vm.y(j), -1.0)],
                constant: 0.0,
            },
            expr_b: LinExpr { coeffs: vec![(vm.mu(j, 1), 1.0)], constant: 0.0 },
        });
        pairs.push(ComplementarityPair {
            label: format!("level_y_{id}"),
            expr_a: LinExpr { coeffs: vec![(vm.y(j), 1.0)], constant: 0.0 },
            expr_b: LinExpr { coeffs: vec![(vm.mu(j, 2), 1.0)], constant: 0.0 },
        });
        pairs.push(ComplementarityPair {
            label: format!("grad_y_{id}"),
            expr_a: LinExpr { coeffs: vec![(vm.y(j), 1.0)], constant: 0.0 },
            expr_b: stat_expr,
        });
    }
    Ok((prog, vm, pairs))
}

/// Worst follower KKT residual of a decision with multipliers: per
/// follower, `|stationarity| + sum of |complementarity products|`.
///
/// Contract
/// - pre: `sol.multipliers` is present (panics otherwise).
/// - post: exactly 0 at an exact KKT point; positive once any multiplier
///   or level is perturbed off it.
pub fn kkt_stationarity_residual(
    inst: &MarketInstance,
    sol: &LeaderDecision,
    model: EffectKind,
) -> f64 {
    let mults = sol
        .multipliers
        .as_ref()
        .expect("kkt residual needs multiplier values");
    let mut worst = 0.0f64;
    for (i, t) in inst.travelers.iter().enumerate() {
        let (a, cap) = (t.bid_price * t.quantity(), t.expenditure_budget);
        let (u_c, u_d, p) = match model {
            EffectKind::Linear => (linear_min_slope(inst, Side::Traveler, i), 0.0, 0.0),
            EffectKind::Quadratic => {
                let dc = traveler_dual_coefficients(t, &inst.effect)
                    .expect("quadratic residual needs a quadratic effect");
                (dc.u_const, dc.u_delta, dc.p)
            }
        };
        let [l1, l2, l3] = mults.lambda[i];
        let x = sol.x[i];
        let u = if sol.u[i] { 1.0 } else { 0.0 };
        let stat = p * x + u_c + u_d * sol.delta + l1 * a + l2 - l3;
        let res = stat.abs()
            + (l1 * (cap - a * x)).abs()
            + (l2 * (u - x)).abs()
            + (l3 * x).abs();
        worst = worst.max(res);
    }
    for (j, pr) in inst.providers.iter().enumerate() {
        let (a, cap) = (pr.capacity * pr.operating_cost, pr.operating_budget);
        let (u_c, u_d, p) = match model {
            EffectKind::Linear => (linear_min_slope(inst, Side::Provider, j), 0.0, 0.0),
            EffectKind::Quadratic => {
                let dc = provider_dual_coefficients(pr, &inst.effect)
                    .expect("quadratic residual needs a quadratic effect");
                (dc.u_const, dc.u_delta, dc.p)
            }
        };
        let [m1, m2, m3] = mults.mu[j];
        let y = sol.y[j];
        let w = if sol.w[j] { 1.0 } else { 0.0 };
        let stat = p * y + u_c + u_d * sol.delta + m1 * a + m2 - m3;
        let res = stat.abs()
            + (m1 * (cap - a * y)).abs()
            + (m2 * (w - y)).abs()
            + (m3 * y).abs();
        worst = worst.max(res);
    }
    worst
}
