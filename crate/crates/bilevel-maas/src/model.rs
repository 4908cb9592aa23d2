//! Domain model for the two-sided mobility market: bids, modes, network
//! effects, leader bounds, and leader decisions, with validation and a stable
//! JSON schema.
//!
//! The market's scalar commodity is the mobility resource `Q = D^2 / T`
//! (speed-weighted travel distance). Travelers demand `Q_i x_i`, providers
//! supply `C_mn y_mn`, and the supply-demand gap
//! `delta = sum C_mn y_mn - sum Q_i x_i` couples every follower's payoff
//! through the network-effect polynomials.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Errors raised by model construction, validation preconditions, and io.
#[derive(Debug, Error)]
pub enum ModelError {
    /// A quantity that must be strictly positive (or finite) was not.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Mobility quantity `Q = D^2 / T` in km^2/min.
///
/// Both arguments must be strictly positive and finite.
pub fn mobility_quantity(distance: f64, service_time: f64) -> Result<f64, ModelError> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(ModelError::Domain(format!(
            "mobility quantity needs distance > 0, got {distance}"
        )));
    }
    if !(service_time > 0.0) || !service_time.is_finite() {
        return Err(ModelError::Domain(format!(
            "mobility quantity needs service time > 0, got {service_time}"
        )));
    }
    Ok(distance * distance / service_time)
}

/// One travel mode offered on the platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    /// Mode identifier; ids are unique and contiguous from 1.
    #[serde(rename = "id")]
    pub mode_id: usize,
    /// Commercial speed v_m in km/min.
    #[serde(rename = "speed")]
    pub commercial_speed: f64,
    /// Inconvenience rate sigma_m per minute spent in the mode.
    #[serde(rename = "sigma")]
    pub inconvenience_rate: f64,
}

/// A traveler's purchase bid (demand side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelerBid {
    /// Traveler identifier, unique and contiguous from 1.
    #[serde(rename = "id")]
    pub traveler_id: usize,
    /// Trip distance D_i in km.
    #[serde(rename = "D")]
    pub distance: f64,
    /// Requested service time T_i in minutes.
    #[serde(rename = "T")]
    pub service_time: f64,
    /// Purchase bid price b_i per unit of mobility resource.
    #[serde(rename = "b")]
    pub bid_price: f64,
    /// Expenditure budget B_i capping b_i Q_i x_i.
    #[serde(rename = "B")]
    pub expenditure_budget: f64,
    /// Travel delay budget R_i in minutes (>= 0).
    #[serde(rename = "R")]
    pub delay_budget: f64,
    /// Total inconvenience tolerance Gamma_i (>= 0).
    #[serde(rename = "Gamma")]
    pub inconvenience_tolerance: f64,
    /// Reserve price r_i paid per unit when traveling outside the platform.
    #[serde(rename = "r")]
    pub reserve_price: f64,
    /// Waiting cost rate alpha_i scaling the demand-side network effect.
    #[serde(rename = "alpha")]
    pub waiting_cost_rate: f64,
}

impl TravelerBid {
    /// Mobility quantity Q_i = D_i^2 / T_i demanded at x_i = 1.
    pub fn quantity(&self) -> f64 {
        self.distance * self.distance / self.service_time
    }
}

/// A provider's sell bid (supply side). Provider `n` operates in mode `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderBid {
    /// Mode the provider operates in.
    #[serde(rename = "m")]
    pub mode_id: usize,
    /// Provider index within the mode, contiguous from 1.
    #[serde(rename = "n")]
    pub provider_id: usize,
    /// Capacity C_mn in mobility-resource units.
    #[serde(rename = "C")]
    pub capacity: f64,
    /// Sell bid price beta_mn per unit.
    #[serde(rename = "beta")]
    pub sell_price: f64,
    /// Operating budget Bbar_mn capping gamma_mn C_mn y_mn.
    #[serde(rename = "Bbar")]
    pub operating_budget: f64,
    /// Operating cost gamma_mn per unit actually sold (>= 0).
    #[serde(rename = "gamma")]
    pub operating_cost: f64,
    /// Reserve price rho_mn earned per unit sold outside the platform (>= 0).
    #[serde(rename = "rho")]
    pub reserve_price: f64,
    /// Idle cost rate eta_mn scaling the supply-side network effect.
    #[serde(rename = "eta")]
    pub idle_cost_rate: f64,
}

/// Shape of the network-effect polynomials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectKind {
    Linear,
    Quadratic,
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectKind::Linear => write!(f, "linear"),
            EffectKind::Quadratic => write!(f, "quadratic"),
        }
    }
}

/// Cross-network effect polynomials.
///
/// Travelers pay `alpha_i * psi(delta + Q_i x_i)` with
/// `psi(s) = a2T s^2 + a1T s + a0T`; providers pay
/// `eta_mn * phi(delta - C_mn y_mn)` with `phi(s) = a2P s^2 + a1P s + a0P`.
/// Linear effects require `a2 = 0`, `a1T <= 0`, `a1P >= 0`; quadratic effects
/// require `a2T > 0` and `a2P > 0`. Both polynomials must be nonnegative over
/// the admissible argument range `[0, C_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEffect {
    pub kind: EffectKind,
    #[serde(rename = "a2T")]
    pub a2_t: f64,
    #[serde(rename = "a1T")]
    pub a1_t: f64,
    #[serde(rename = "a0T")]
    pub a0_t: f64,
    #[serde(rename = "a2P")]
    pub a2_p: f64,
    #[serde(rename = "a1P")]
    pub a1_p: f64,
    #[serde(rename = "a0P")]
    pub a0_p: f64,
}

impl NetworkEffect {
    /// Demand-side polynomial psi(s).
    pub fn psi(&self, s: f64) -> f64 {
        (self.a2_t * s + self.a1_t) * s + self.a0_t
    }

    /// Supply-side polynomial phi(s).
    pub fn phi(&self, s: f64) -> f64 {
        (self.a2_p * s + self.a1_p) * s + self.a0_p
    }
}

/// Leader-side bounds: admissible threshold prices and gap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderBounds {
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Lower bound on the supply-demand gap (C underline).
    #[serde(rename = "C_lo")]
    pub gap_lower: f64,
    /// Upper bound on the supply-demand gap (C bar).
    #[serde(rename = "C_hi")]
    pub gap_upper: f64,
}

impl LeaderBounds {
    /// Canonical construction: gap upper bound equals total capacity.
    pub fn with_total_capacity(
        p_min: f64,
        p_max: f64,
        q_min: f64,
        q_max: f64,
        gap_lower: f64,
        providers: &[ProviderBid],
    ) -> Self {
        let total: f64 = providers.iter().map(|p| p.capacity).sum();
        LeaderBounds {
            p_min,
            p_max,
            q_min,
            q_max,
            gap_lower,
            gap_upper: total,
        }
    }
}

/// A complete market instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    pub modes: Vec<ModeSpec>,
    pub travelers: Vec<TravelerBid>,
    pub providers: Vec<ProviderBid>,
    pub bounds: LeaderBounds,
    pub effect: NetworkEffect,
}

impl MarketInstance {
    /// Total provider capacity, the canonical gap upper bound.
    pub fn total_capacity(&self) -> f64 {
        self.providers.iter().map(|p| p.capacity).sum()
    }

    /// Index of the mode with the given id, if present.
    pub fn mode_index(&self, mode_id: usize) -> Option<usize> {
        self.modes.iter().position(|m| m.mode_id == mode_id)
    }

    /// Serialize to pretty JSON (round-trips exactly; serde_json emits the
    /// shortest representation that reparses to the same f64).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }

    /// Parse an instance from JSON.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Load an instance from a JSON file.
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Write the instance to a JSON file.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        Ok(std::fs::write(path, self.to_json())?)
    }
}

/// Per-follower multipliers for the KKT system (budget, cap, nonnegativity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// One triple (lambda1, lambda2, lambda3) per traveler.
    pub lambda: Vec<[f64; 3]>,
    /// One triple (mu1, mu2, mu3) per provider.
    pub mu: Vec<[f64; 3]>,
}

/// A full leader decision together with the induced follower levels.
///
/// `u`/`x` are indexed like `travelers`, `w`/`y`/`l` like `providers`/modes.
/// The gap identity `delta = sum C y - sum Q x` must hold within 1e-6;
/// [`LeaderDecision::gap_residual`] measures it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderDecision {
    /// Buy-side threshold price.
    pub p: f64,
    /// Sell-side threshold price.
    pub q: f64,
    /// Accept/reject per traveler.
    pub u: Vec<bool>,
    /// Accept/reject per provider.
    pub w: Vec<bool>,
    /// Bundle times: l[i][m] = minutes traveler i rides mode m.
    pub l: Vec<Vec<f64>>,
    /// Supply-demand gap.
    pub delta: f64,
    /// Traveler purchase levels in [0, 1].
    pub x: Vec<f64>,
    /// Provider sale levels in [0, 1].
    pub y: Vec<f64>,
    /// KKT multipliers when produced by the complementarity benchmark.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub multipliers: Option<Multipliers>,
}

impl LeaderDecision {
    /// Absolute violation of the gap identity delta = sum C y - sum Q x.
    pub fn gap_residual(&self, inst: &MarketInstance) -> f64 {
        let supply: f64 = inst
            .providers
            .iter()
            .zip(&self.y)
            .map(|(p, y)| p.capacity * y)
            .sum();
        let demand: f64 = inst
            .travelers
            .iter()
            .zip(&self.x)
            .map(|(t, x)| t.quantity() * x)
            .sum();
        (self.delta - (supply - demand)).abs()
    }

    /// Leader profit sum b_i Q_i x_i - sum beta_mn C_mn y_mn.
    pub fn leader_profit(&self, inst: &MarketInstance) -> f64 {
        let revenue: f64 = inst
            .travelers
            .iter()
            .zip(&self.x)
            .map(|(t, x)| t.bid_price * t.quantity() * x)
            .sum();
        let cost: f64 = inst
            .providers
            .iter()
            .zip(&self.y)
            .map(|(p, y)| p.sell_price * p.capacity * y)
            .sum();
        revenue - cost
    }
}

/// Outcome of [`validate_instance`]: a list of human-readable violations.
///
/// An empty list means the instance satisfies every structural requirement
/// and both equivalence hypotheses (`b_i >= p_min`, `beta_mn <= q_max`) under
/// which accept/reject reformulations are exact.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, msg: String) {
        self.violations.push(msg);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "instance valid");
        }
        writeln!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

fn check_positive(report: &mut ValidationReport, ctx: &str, name: &str, v: f64) {
    if !(v > 0.0) || !v.is_finite() {
        report.push(format!("{ctx}: {name} > 0 required, got {v}"));
    }
}

fn check_nonnegative(report: &mut ValidationReport, ctx: &str, name: &str, v: f64) {
    if !(v >= 0.0) || !v.is_finite() {
        report.push(format!("{ctx}: {name} >= 0 required, got {v}"));
    }
}

/// Validate structure, positivity, effect shape, and equivalence hypotheses.
pub fn validate_instance(inst: &MarketInstance) -> ValidationReport {
    let mut report = ValidationReport::default();

    if inst.modes.is_empty() {
        report.push("at least one mode required".to_string());
    }
    for (k, m) in inst.modes.iter().enumerate() {
        let ctx = format!("mode {}", m.mode_id);
        if m.mode_id != k + 1 {
            report.push(format!(
                "{ctx}: mode ids must be contiguous from 1, position {} has id {}",
                k + 1,
                m.mode_id
            ));
        }
        check_positive(&mut report, &ctx, "speed", m.commercial_speed);
        check_nonnegative(&mut report, &ctx, "sigma", m.inconvenience_rate);
    }

    for (k, t) in inst.travelers.iter().enumerate() {
        let ctx = format!("traveler {}", t.traveler_id);
        if t.traveler_id != k + 1 {
            report.push(format!(
                "{ctx}: traveler ids must be contiguous from 1, position {} has id {}",
                k + 1,
                t.traveler_id
            ));
        }
        check_positive(&mut report, &ctx, "distance", t.distance);
        check_positive(&mut report, &ctx, "service time", t.service_time);
        check_positive(&mut report, &ctx, "bid price", t.bid_price);
        check_positive(&mut report, &ctx, "expenditure budget", t.expenditure_budget);
        check_nonnegative(&mut report, &ctx, "delay budget", t.delay_budget);
        check_nonnegative(
            &mut report,
            &ctx,
            "inconvenience tolerance",
            t.inconvenience_tolerance,
        );
        check_positive(&mut report, &ctx, "reserve price", t.reserve_price);
        check_positive(&mut report, &ctx, "waiting cost rate", t.waiting_cost_rate);
        if t.bid_price < inst.bounds.p_min {
            report.push(format!(
                "{ctx}: bid price {} below p_min {} violates the equivalence hypothesis b_i >= p_min",
                t.bid_price, inst.bounds.p_min
            ));
        }
    }

    let mut seen = std::collections::HashSet::new();
    for pr in &inst.providers {
        let ctx = format!("provider ({},{})", pr.mode_id, pr.provider_id);
        if inst.mode_index(pr.mode_id).is_none() {
            report.push(format!("{ctx}: unknown mode id {}", pr.mode_id));
        }
        if !seen.insert((pr.mode_id, pr.provider_id)) {
            report.push(format!("{ctx}: duplicate provider id"));
        }
        check_positive(&mut report, &ctx, "capacity", pr.capacity);
        check_positive(&mut report, &ctx, "sell price", pr.sell_price);
        check_positive(&mut report, &ctx, "operating budget", pr.operating_budget);
        check_nonnegative(&mut report, &ctx, "operating cost", pr.operating_cost);
        check_nonnegative(&mut report, &ctx, "reserve price", pr.reserve_price);
        check_positive(&mut report, &ctx, "idle cost rate", pr.idle_cost_rate);
        if pr.sell_price > inst.bounds.q_max {
            report.push(format!(
                "{ctx}: sell price {} above q_max {} violates the equivalence hypothesis beta_mn <= q_max",
                pr.sell_price, inst.bounds.q_max
            ));
        }
    }

    let b = &inst.bounds;
    if !(b.p_min <= b.p_max) {
        report.push(format!("bounds: p_min {} > p_max {}", b.p_min, b.p_max));
    }
    if !(b.q_min <= b.q_max) {
        report.push(format!("bounds: q_min {} > q_max {}", b.q_min, b.q_max));
    }
    if !(b.gap_lower <= b.gap_upper) {
        report.push(format!(
            "bounds: C_lo {} > C_hi {}",
            b.gap_lower, b.gap_upper
        ));
    }

    let e = &inst.effect;
    match e.kind {
        EffectKind::Linear => {
            if e.a2_t != 0.0 || e.a2_p != 0.0 {
                report.push(format!(
                    "effect: linear kind requires a2T = a2P = 0, got a2T={} a2P={}",
                    e.a2_t, e.a2_p
                ));
            }
            if e.a1_t > 0.0 {
                report.push(format!("effect: linear a1T <= 0 required, got {}", e.a1_t));
            }
            if e.a1_p < 0.0 {
                report.push(format!("effect: linear a1P >= 0 required, got {}", e.a1_p));
            }
        }
        EffectKind::Quadratic => {
            if !(e.a2_t > 0.0) {
                report.push(format!("effect: quadratic a2T > 0 required, got {}", e.a2_t));
            }
            if !(e.a2_p > 0.0) {
                report.push(format!("effect: quadratic a2P > 0 required, got {}", e.a2_p));
            }
        }
    }
    let c_hi = b.gap_upper.max(0.0);
    for (name, a2, a1, a0) in [
        ("psi", e.a2_t, e.a1_t, e.a0_t),
        ("phi", e.a2_p, e.a1_p, e.a0_p),
    ] {
        let eval = |s: f64| (a2 * s + a1) * s + a0;
        let mut worst = eval(0.0).min(eval(c_hi));
        if a2 > 0.0 {
            let vertex = -a1 / (2.0 * a2);
            if vertex > 0.0 && vertex < c_hi {
                worst = worst.min(eval(vertex));
            }
        }
        if worst < 0.0 {
            report.push(format!(
                "effect: {name} must be nonnegative on [0, {c_hi}], attains {worst}"
            ));
        }
    }

    report
}
