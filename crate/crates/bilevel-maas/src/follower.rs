//! Closed-form follower best responses and solution audits.
//!
//! Given the leader's acceptance decision and the capacity gap `delta`,
//! every follower problem is one-dimensional: travelers minimize cost over
//! a participation level `x`, providers maximize profit over a commitment
//! level `y`. Linear network effects give a constant objective slope and a
//! bang-bang response; quadratic effects give a strictly convex (concave)
//! objective with a unique stationary point. Both cases are solved exactly
//! here, so audits compare relaxed solutions against true optima rather
//! than numerical approximations.

use crate::model::{
    EffectKind, LeaderDecision, MarketInstance, NetworkEffect, ProviderBid, TravelerBid,
};

/// A follower's exact best response.
///
/// `optimal_set` is the closed interval of optimal levels; it degenerates
/// to a point except for linear followers with zero objective slope.
/// `level_star` always lies in `optimal_set` and is chosen optimistically
/// (the endpoint most favorable to the leader).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerResponse {
    pub level_star: f64,
    pub objective_star: f64,
    pub optimal_set: [f64; 2],
}

impl FollowerResponse {
    fn point(level: f64, objective: f64) -> Self {
        FollowerResponse {
            level_star: level,
            objective_star: objective,
            optimal_set: [level, level],
        }
    }

    /// Width of the optimal set (0 except in the degenerate linear case).
    pub fn set_width(&self) -> f64 {
        self.optimal_set[1] - self.optimal_set[0]
    }
}

/// Traveler cost `b Q x + r Q (1 - x) + alpha psi(delta + Q x)`.
pub fn traveler_cost(bid: &TravelerBid, x: f64, delta: f64, effect: &NetworkEffect) -> f64 {
    let q = bid.quantity();
    bid.bid_price * q * x
        + bid.reserve_price * q * (1.0 - x)
        + bid.waiting_cost_rate * effect.psi(delta + q * x)
}

/// Provider profit `(beta - gamma) C y + (rho - gamma) C (1 - y) - eta phi(delta - C y)`.
pub fn provider_profit(bid: &ProviderBid, y: f64, delta: f64, effect: &NetworkEffect) -> f64 {
    let c = bid.capacity;
    (bid.sell_price - bid.operating_cost) * c * y
        + (bid.reserve_price - bid.operating_cost) * c * (1.0 - y)
        - bid.idle_cost_rate * effect.phi(delta - c * y)
}

/// Largest participation level a traveler can afford: `min(u, B/(b Q), 1)`.
pub fn traveler_upper_bound(bid: &TravelerBid, u: bool) -> f64 {
    if !u {
        return 0.0;
    }
    (bid.expenditure_budget / (bid.bid_price * bid.quantity())).min(1.0)
}

/// Largest commitment level a provider can afford:
/// `min(w, Bbar/(C gamma), 1)` with the budget cap vacuous when `gamma = 0`.
pub fn provider_upper_bound(bid: &ProviderBid, w: bool) -> f64 {
    if !w {
        return 0.0;
    }
    if bid.operating_cost > 0.0 {
        (bid.operating_budget / (bid.capacity * bid.operating_cost)).min(1.0)
    } else {
        1.0
    }
}

/// Exact minimizer of the traveler cost over `x in [0, ub]`.
///
/// Contract
/// - post: `objective_star = traveler_cost(bid, level_star, delta, effect)`
///   and no feasible level does better.
/// - post: linear effects ignore `delta`; a zero slope yields
///   `optimal_set = [0, ub]` with the optimistic pick `level_star = ub`.
/// - post: quadratic effects yield a unique minimizer (set width 0).
pub fn best_response_traveler(
    bid: &TravelerBid,
    u: bool,
    delta: f64,
    effect: &NetworkEffect,
) -> FollowerResponse {
    let ub = traveler_upper_bound(bid, u);
    let q = bid.quantity();
    match effect.kind {
        EffectKind::Linear => {
            let slope = (bid.bid_price - bid.reserve_price) * q
                + bid.waiting_cost_rate * effect.a1_t * q;
            if slope < 0.0 {
                FollowerResponse::point(ub, traveler_cost(bid, ub, delta, effect))
            } else if slope > 0.0 {
                FollowerResponse::point(0.0, traveler_cost(bid, 0.0, delta, effect))
            } else {
                FollowerResponse {
                    level_star: ub,
                    objective_star: traveler_cost(bid, ub, delta, effect),
                    optimal_set: [0.0, ub],
                }
            }
        }
        EffectKind::Quadratic => {
            // Stationary congestion load: (b - r) + alpha (2 a2T s + a1T) = 0.
            let s_star = ((bid.reserve_price - bid.bid_price) / bid.waiting_cost_rate
                - effect.a1_t)
                / (2.0 * effect.a2_t);
            let x_star = ((s_star - delta) / q).clamp(0.0, ub);
            FollowerResponse::point(x_star, traveler_cost(bid, x_star, delta, effect))
        }
    }
}

/// Exact maximizer of the provider profit over `y in [0, ub]`.
///
/// Contract
/// - post: `objective_star = provider_profit(bid, level_star, delta, effect)`
///   and no feasible level does better.
/// - post: linear effects ignore `delta`; a zero slope yields
///   `optimal_set = [0, ub]` with the optimistic pick `level_star = 0`.
/// - post: quadratic effects yield a unique maximizer (set width 0).
pub fn best_response_provider(
    bid: &ProviderBid,
    w: bool,
    delta: f64,
    effect: &NetworkEffect,
) -> FollowerResponse {
    let ub = provider_upper_bound(bid, w);
    let c = bid.capacity;
    match effect.kind {
        EffectKind::Linear => {
            let slope = (bid.sell_price - bid.reserve_price) * c
                + bid.idle_cost_rate * effect.a1_p * c;
            if slope > 0.0 {
                FollowerResponse::point(ub, provider_profit(bid, ub, delta, effect))
            } else if slope < 0.0 {
                FollowerResponse::point(0.0, provider_profit(bid, 0.0, delta, effect))
            } else {
                FollowerResponse {
                    level_star: 0.0,
                    objective_star: provider_profit(bid, 0.0, delta, effect),
                    optimal_set: [0.0, ub],
                }
            }
        }
        EffectKind::Quadratic => {
            // Stationary idle load: (beta - rho) + eta (2 a2P s + a1P) = 0.
            let s_star = -((bid.sell_price - bid.reserve_price) / bid.idle_cost_rate
                + effect.a1_p)
                / (2.0 * effect.a2_p);
            let y_star = ((delta - s_star) / c).clamp(0.0, ub);
            FollowerResponse::point(y_star, provider_profit(bid, y_star, delta, effect))
        }
    }
}

/// Audit outcome: which followers are away from their best response, and
/// by how much in objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerAudit {
    /// Indices (into `inst.travelers`) of suboptimal travelers.
    pub v_travel: Vec<usize>,
    /// Indices (into `inst.providers`) of suboptimal providers.
    pub v_tsp: Vec<usize>,
    /// Per-traveler objective gap `|G_i* - G_i(x_i)|`.
    pub traveler_gaps: Vec<f64>,
    /// Per-provider objective gap `|H_mn* - H_mn(y_mn)|`.
    pub provider_gaps: Vec<f64>,
}

impl FollowerAudit {
    /// True when both suboptimal sets are empty.
    pub fn all_optimal(&self) -> bool {
        self.v_travel.is_empty() && self.v_tsp.is_empty()
    }

    /// Largest objective gap across all followers.
    pub fn worst_gap(&self) -> f64 {
        self.traveler_gaps
            .iter()
            .chain(self.provider_gaps.iter())
            .fold(0.0_f64, |acc, &g| acc.max(g))
    }
}

/// Compares the relaxed levels in `sol` to exact best responses at the
/// same `(u, w, delta)` and collects followers whose objective gap
/// exceeds `eps`.
///
/// Contract
/// - pre: `sol` is feasible for the leader constraints (not re-checked).
/// - post: `v_travel = { i : traveler_gaps[i] > eps }`, and analogously
///   for `v_tsp`; a solution assembled from exact best responses yields
///   empty sets and zero gaps.
pub fn audit_followers(inst: &MarketInstance, sol: &LeaderDecision, eps: f64) -> FollowerAudit {
    let mut audit = FollowerAudit {
        v_travel: Vec::new(),
        v_tsp: Vec::new(),
        traveler_gaps: Vec::with_capacity(inst.travelers.len()),
        provider_gaps: Vec::with_capacity(inst.providers.len()),
    };
    for (i, bid) in inst.travelers.iter().enumerate() {
        let best = best_response_traveler(bid, sol.u[i], sol.delta, &inst.effect);
        let actual = traveler_cost(bid, sol.x[i], sol.delta, &inst.effect);
        let gap = (best.objective_star - actual).abs();
        audit.traveler_gaps.push(gap);
        if gap > eps {
            audit.v_travel.push(i);
        }
    }
    for (k, bid) in inst.providers.iter().enumerate() {
        let best = best_response_provider(bid, sol.w[k], sol.delta, &inst.effect);
        let actual = provider_profit(bid, sol.y[k], sol.delta, &inst.effect);
        let gap = (best.objective_star - actual).abs();
        audit.provider_gaps.push(gap);
        if gap > eps {
            audit.v_tsp.push(k);
        }
    }
    audit
}
