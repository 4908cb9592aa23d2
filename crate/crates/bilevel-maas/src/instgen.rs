//! Seeded random market generator plus the embedded worked example.
//!
//! A [`GroupSpec`] names a family of markets in the `MaaS-<travelers>-<providers>`
//! convention: `n_travelers` travelers and a per-mode provider count over the
//! five canonical modes. Every entity draws its parameters from its own
//! ChaCha stream, so adding travelers never perturbs provider draws and
//! instances are reproducible from `(spec, seed)` alone. Draws that violate
//! the model hypotheses (positive budgets, reserve above bid, operating cost
//! below reserve) are redrawn whole.

use crate::model::{
    validate_instance, EffectKind, LeaderBounds, MarketInstance, ModeSpec, NetworkEffect,
    ProviderBid, TravelerBid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Commercial speed (km/min) and inconvenience rate of the five canonical modes.
pub const MODE_CATALOG: [(f64, f64); 5] = [
    (0.5, 0.0),
    (0.27, 0.1),
    (0.24, 0.2),
    (0.21, 0.5),
    (0.18, 1.5),
];

/// Sell-bid range and capacity range for providers of each canonical mode.
pub const PROVIDER_CATALOG: [([f64; 2], [f64; 2]); 5] = [
    ([8.0, 12.0], [50.0, 100.0]),
    ([7.0, 8.0], [50.0, 100.0]),
    ([5.0, 7.0], [30.0, 100.0]),
    ([3.0, 5.0], [30.0, 100.0]),
    ([1.0, 2.0], [10.0, 50.0]),
];

// Absorption magnitudes shared by every generated market: psi and phi keep the
// worked example's slopes and intercepts.
const A1_T: f64 = -0.025;
const A0_T: f64 = 10.0;
const A1_P: f64 = 0.2;
const A0_P: f64 = 1.0;

const MAX_REDRAWS: usize = 10_000;

// Per-entity stream tags; providers also encode their mode so a mode's draws
// are identical no matter how many providers the other modes carry.
const TRAVELER_CLASS: u64 = 1 << 32;
const PROVIDER_CLASS: u64 = 2 << 32;

#[derive(Debug, Error)]
pub enum InstgenError {
    /// The group name does not follow the `MaaS-<travelers>-<providers>` convention.
    #[error("group name `{0}` must look like MaaS-<travelers>-<providers>")]
    BadName(String),
}

/// Shape, congestion model, and randomness of one generated market.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    /// Number of travelers.
    pub n_travelers: usize,
    /// Providers contracted per canonical mode.
    pub providers_per_mode: Vec<usize>,
    /// Congestion model embedded in the instance.
    pub model: EffectKind,
    /// Seed of the per-entity random streams.
    pub seed: u64,
    /// Replacement draw ranges; `None` fields keep the catalog defaults.
    pub overrides: Overrides,
}

impl GroupSpec {
    /// Spreads `n_providers` round-robin over the canonical modes, filling
    /// from the cheapest mode upward so small groups still carry supply the
    /// demand side can afford.
    pub fn new(n_travelers: usize, n_providers: usize, model: EffectKind, seed: u64) -> Self {
        let modes = MODE_CATALOG.len();
        let providers_per_mode = (0..modes)
            .map(|m| n_providers / modes + usize::from(modes - 1 - m < n_providers % modes))
            .collect();
        GroupSpec {
            n_travelers,
            providers_per_mode,
            model,
            seed,
            overrides: Overrides::default(),
        }
    }

    /// Parses a `MaaS-<travelers>-<providers>` group name.
    pub fn from_name(name: &str, model: EffectKind, seed: u64) -> Result<Self, InstgenError> {
        let bad = || InstgenError::BadName(name.to_string());
        let rest = name.strip_prefix("MaaS-").ok_or_else(bad)?;
        let (travelers, providers) = rest.split_once('-').ok_or_else(bad)?;
        let travelers: usize = travelers.parse().map_err(|_| bad())?;
        let providers: usize = providers.parse().map_err(|_| bad())?;
        if travelers == 0 || providers == 0 {
            return Err(bad());
        }
        Ok(GroupSpec::new(travelers, providers, model, seed))
    }

    /// Conventional group name `MaaS-<travelers>-<providers>`.
    pub fn name(&self) -> String {
        let providers: usize = self.providers_per_mode.iter().sum();
        format!("MaaS-{}-{}", self.n_travelers, providers)
    }
}

/// Replacement draw ranges; every `None` keeps the documented default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// Trip distance D, default [1, 18] km.
    pub distance: Option<[f64; 2]>,
    /// Purchase bid b, default [1, 4].
    pub bid_price: Option<[f64; 2]>,
    /// Reserve premium r - b, default [1.5, 4].
    pub reserve_premium: Option<[f64; 2]>,
    /// Expenditure budget offset B - bQ, default [-0.5, 1.5].
    pub budget_offset: Option<[f64; 2]>,
    /// Waiting cost rate alpha, default [0.02, 0.05].
    pub waiting_cost: Option<[f64; 2]>,
    /// Delay budget cap: R ~ U[0, cap / b], default cap 100.
    pub delay_cap: Option<f64>,
    /// Inconvenience tolerance cap: Gamma ~ U[0, cap * D / b], default cap 100.
    pub inconvenience_cap: Option<f64>,
    /// Per-mode sell-bid ranges, default [`PROVIDER_CATALOG`].
    pub sell_price: Option<Vec<[f64; 2]>>,
    /// Per-mode capacity ranges, default [`PROVIDER_CATALOG`].
    pub capacity: Option<Vec<[f64; 2]>>,
    /// Operating budget offset Bbar - beta C, default [-0.75, 2.75].
    pub operating_budget_offset: Option<[f64; 2]>,
    /// Idle cost rate eta, default [1, 2].
    pub idle_cost: Option<[f64; 2]>,
    /// Reserve discount beta - rho, default [0.5, 1].
    pub reserve_discount: Option<[f64; 2]>,
    /// Operating cost gamma, default [0, max(0.1, rho - 0.1)] redrawn below rho.
    pub operating_cost: Option<[f64; 2]>,
    /// Gap interval lower end, default 0.
    pub gap_lower: Option<f64>,
    /// Gap interval upper end, default min(total capacity, 400) so the demand
    /// absorption psi stays nonnegative on the box.
    pub gap_upper: Option<f64>,
}

/// The five canonical modes with contiguous ids.
pub fn canonical_modes() -> Vec<ModeSpec> {
    MODE_CATALOG
        .iter()
        .enumerate()
        .map(|(k, &(speed, sigma))| ModeSpec {
            mode_id: k + 1,
            commercial_speed: speed,
            inconvenience_rate: sigma,
        })
        .collect()
}

/// Generates one market deterministically from the spec.
///
/// # Panics
///
/// Panics when the spec has no traveler or no provider, names more modes than
/// the catalog, or carries overrides under which no draw can satisfy the model
/// hypotheses or the assembled instance fails validation.
pub fn generate(spec: &GroupSpec) -> MarketInstance {
    let total_providers: usize = spec.providers_per_mode.iter().sum();
    assert!(spec.n_travelers >= 1, "a group needs at least one traveler");
    assert!(total_providers >= 1, "a group needs at least one provider");
    assert!(
        spec.providers_per_mode.len() <= MODE_CATALOG.len(),
        "at most {} provider modes are available",
        MODE_CATALOG.len()
    );

    let travelers: Vec<TravelerBid> = (0..spec.n_travelers)
        .map(|i| draw_traveler(spec, i))
        .collect();
    let mut providers = Vec::with_capacity(total_providers);
    for (mode_idx, &count) in spec.providers_per_mode.iter().enumerate() {
        for slot in 0..count {
            providers.push(draw_provider(spec, mode_idx, slot));
        }
    }

    let ov = &spec.overrides;
    let b_max = travelers
        .iter()
        .map(|t| t.bid_price)
        .fold(f64::NEG_INFINITY, f64::max);
    let beta_max = providers
        .iter()
        .map(|p| p.sell_price)
        .fold(f64::NEG_INFINITY, f64::max);
    let capacity_total: f64 = providers.iter().map(|p| p.capacity).sum();
    // psi(s) = a1T s + a0T reaches zero at a0T/|a1T|; capping the gap box there
    // keeps the absorption polynomial nonnegative for any fleet size.
    let saturation = A0_T / A1_T.abs();
    let gap_upper = ov
        .gap_upper
        .unwrap_or_else(|| capacity_total.min(saturation));
    let bounds = LeaderBounds {
        p_min: 1.0,
        p_max: b_max + 0.5,
        q_min: 1.0,
        q_max: beta_max + 0.2,
        gap_lower: ov.gap_lower.unwrap_or(0.0),
        gap_upper,
    };
    let effect = effect_for(spec.model, gap_upper);
    let inst = MarketInstance {
        modes: canonical_modes(),
        travelers,
        providers,
        bounds,
        effect,
    };
    let report = validate_instance(&inst);
    assert!(
        report.is_ok(),
        "generated instance violates the model contract:\n{}",
        report.violations.join("\n")
    );
    inst
}

/// The embedded worked example: two travelers, two providers on two modes,
/// with the canonical bounds p in [1, 4.5], q in [1, 2.2], gap in [0, 55].
pub fn example1(kind: EffectKind) -> MarketInstance {
    let effect = match kind {
        EffectKind::Linear => NetworkEffect {
            kind,
            a2_t: 0.0,
            a1_t: -0.025,
            a0_t: 10.0,
            a2_p: 0.0,
            a1_p: 0.2,
            a0_p: 1.0,
        },
        EffectKind::Quadratic => NetworkEffect {
            kind,
            a2_t: 0.025,
            a1_t: -0.2,
            a0_t: 10.0,
            a2_p: 0.2,
            a1_p: 0.0,
            a0_p: 1.0,
        },
    };
    MarketInstance {
        modes: vec![
            ModeSpec {
                mode_id: 1,
                commercial_speed: 0.2,
                inconvenience_rate: 0.1,
            },
            ModeSpec {
                mode_id: 2,
                commercial_speed: 0.25,
                inconvenience_rate: 0.0,
            },
        ],
        travelers: vec![
            TravelerBid {
                traveler_id: 1,
                distance: 40.0,
                service_time: 160.0,
                bid_price: 2.0,
                expenditure_budget: 20.0,
                delay_budget: 50.0,
                inconvenience_tolerance: 200.0,
                reserve_price: 2.5,
                waiting_cost_rate: 2.0,
            },
            TravelerBid {
                traveler_id: 2,
                distance: 60.0,
                service_time: 300.0,
                bid_price: 4.0,
                expenditure_budget: 40.0,
                delay_budget: 30.0,
                inconvenience_tolerance: 300.0,
                reserve_price: 4.5,
                waiting_cost_rate: 2.2,
            },
        ],
        providers: vec![
            ProviderBid {
                mode_id: 1,
                provider_id: 1,
                capacity: 25.0,
                sell_price: 1.5,
                operating_budget: 3.0,
                operating_cost: 0.1,
                reserve_price: 0.5,
                idle_cost_rate: 0.15,
            },
            ProviderBid {
                mode_id: 2,
                provider_id: 1,
                capacity: 30.0,
                sell_price: 2.0,
                operating_budget: 5.5,
                operating_cost: 0.0,
                reserve_price: 1.0,
                idle_cost_rate: 0.1,
            },
        ],
        bounds: LeaderBounds {
            p_min: 1.0,
            p_max: 4.5,
            q_min: 1.0,
            q_max: 2.2,
            gap_lower: 0.0,
            gap_upper: 55.0,
        },
        effect,
    }
}

fn effect_for(kind: EffectKind, gap_upper: f64) -> NetworkEffect {
    match kind {
        EffectKind::Linear => NetworkEffect {
            kind,
            a2_t: 0.0,
            a1_t: A1_T,
            a0_t: A0_T,
            a2_p: 0.0,
            a1_p: A1_P,
            a0_p: A0_P,
        },
        EffectKind::Quadratic => {
            assert!(
                gap_upper > 0.0,
                "quadratic effects need a positive gap upper bound"
            );
            // Vertex of psi at the top of the gap box: the marginal absorption
            // keeps one sign over [0, C_hi], so every follower's reduced cost
            // stays negative exactly as in the linear model.
            NetworkEffect {
                kind,
                a2_t: A1_T.abs() / (2.0 * gap_upper),
                a1_t: A1_T,
                a0_t: A0_T,
                a2_p: A1_P / (2.0 * gap_upper),
                a1_p: 0.0,
                a0_p: A0_P,
            }
        }
    }
}

fn entity_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on the closed span of `range`, whichever order its endpoints
/// come in.
fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    let lo = range[0].min(range[1]);
    let hi = range[0].max(range[1]);
    if hi - lo < 1e-12 {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn draw_traveler(spec: &GroupSpec, idx: usize) -> TravelerBid {
    let ov = &spec.overrides;
    let mut rng = entity_rng(spec.seed, TRAVELER_CLASS | idx as u64);
    let v_fast = MODE_CATALOG
        .iter()
        .map(|m| m.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let v_slow = MODE_CATALOG.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
    for _ in 0..MAX_REDRAWS {
        let distance = uniform(&mut rng, ov.distance.unwrap_or([1.0, 18.0]));
        // Service time spans the slowest through fastest direct trip, so every
        // traveler is routable on the catalog modes.
        let service_time = uniform(&mut rng, [distance / v_slow, distance / v_fast]);
        let bid_price = uniform(&mut rng, ov.bid_price.unwrap_or([1.0, 4.0]));
        let q = distance * distance / service_time;
        let reserve_price =
            bid_price + uniform(&mut rng, ov.reserve_premium.unwrap_or([1.5, 4.0]));
        let expenditure_budget =
            bid_price * q + uniform(&mut rng, ov.budget_offset.unwrap_or([-0.5, 1.5]));
        let waiting_cost_rate = uniform(&mut rng, ov.waiting_cost.unwrap_or([0.02, 0.05]));
        let delay_budget = uniform(&mut rng, [0.0, ov.delay_cap.unwrap_or(100.0) / bid_price]);
        let inconvenience_tolerance = uniform(
            &mut rng,
            [0.0, ov.inconvenience_cap.unwrap_or(100.0) * distance / bid_price],
        );
        if expenditure_budget > 0.0 && bid_price > 0.0 && reserve_price > bid_price {
            return TravelerBid {
                traveler_id: idx + 1,
                distance,
                service_time,
                bid_price,
                expenditure_budget,
                delay_budget,
                inconvenience_tolerance,
                reserve_price,
                waiting_cost_rate,
            };
        }
    }
    panic!(
        "traveler {}: override ranges admit no draw with a positive budget and reserve above bid",
        idx + 1
    );
}

fn draw_provider(spec: &GroupSpec, mode_idx: usize, slot: usize) -> ProviderBid {
    let ov = &spec.overrides;
    let stream = PROVIDER_CLASS | ((mode_idx as u64) << 16) | slot as u64;
    let mut rng = entity_rng(spec.seed, stream);
    let (catalog_sell, catalog_capacity) = PROVIDER_CATALOG[mode_idx];
    let sell_range = per_mode(ov.sell_price.as_ref(), mode_idx, catalog_sell);
    let capacity_range = per_mode(ov.capacity.as_ref(), mode_idx, catalog_capacity);
    for _ in 0..MAX_REDRAWS {
        let sell_price = uniform(&mut rng, sell_range);
        let capacity = uniform(&mut rng, capacity_range);
        let operating_budget = sell_price * capacity
            + uniform(
                &mut rng,
                ov.operating_budget_offset.unwrap_or([-0.75, 2.75]),
            );
        let idle_cost_rate = uniform(&mut rng, ov.idle_cost.unwrap_or([1.0, 2.0]));
        let reserve_price =
            sell_price - uniform(&mut rng, ov.reserve_discount.unwrap_or([0.5, 1.0]));
        let operating_cost = uniform(
            &mut rng,
            ov.operating_cost
                .unwrap_or([0.0, (reserve_price - 0.1).max(0.1)]),
        );
        if operating_budget > 0.0
            && reserve_price >= 0.0
            && operating_cost < reserve_price
            && reserve_price < sell_price
        {
            return ProviderBid {
                mode_id: mode_idx + 1,
                provider_id: slot + 1,
                capacity,
                sell_price,
                operating_budget,
                operating_cost,
                reserve_price,
                idle_cost_rate,
            };
        }
    }
    panic!(
        "provider ({},{}): override ranges admit no draw with cost below reserve below sell bid",
        mode_idx + 1,
        slot + 1
    );
}

fn per_mode(ranges: Option<&Vec<[f64; 2]>>, mode_idx: usize, fallback: [f64; 2]) -> [f64; 2] {
    ranges
        .and_then(|r| r.get(mode_idx))
        .copied()
        .unwrap_or(fallback)
}
