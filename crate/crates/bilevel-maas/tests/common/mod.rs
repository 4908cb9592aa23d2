#![allow(dead_code)]

use bilevel_maas::model::{
    EffectKind, LeaderBounds, MarketInstance, ModeSpec, NetworkEffect, ProviderBid, TravelerBid,
};

/// Two travelers, two providers on two modes, the worked market from the
/// follower tests. Linear or quadratic congestion effects on demand.
pub fn example_instance(kind: EffectKind) -> MarketInstance {
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
            ModeSpec { mode_id: 1, commercial_speed: 0.2, inconvenience_rate: 0.1 },
            ModeSpec { mode_id: 2, commercial_speed: 0.25, inconvenience_rate: 0.0 },
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

/// An empty market: one mode, no followers, gap pinned to zero.
pub fn empty_instance() -> MarketInstance {
    MarketInstance {
        modes: vec![ModeSpec { mode_id: 1, commercial_speed: 1.0, inconvenience_rate: 0.0 }],
        travelers: vec![],
        providers: vec![],
        bounds: LeaderBounds {
            p_min: 1.0,
            p_max: 2.0,
            q_min: 1.0,
            q_max: 2.0,
            gap_lower: 0.0,
            gap_upper: 0.0,
        },
        effect: NetworkEffect {
            kind: EffectKind::Linear,
            a2_t: 0.0,
            a1_t: 0.0,
            a0_t: 0.0,
            a2_p: 0.0,
            a1_p: 0.0,
            a0_p: 0.0,
        },
    }
}
