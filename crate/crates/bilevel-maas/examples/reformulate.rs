//! Build the worked two-by-two market, inspect its high-point relaxation,
//! then tighten one provider with strong-duality rows and compare bounds.
//!
//! Run with: cargo run --example reformulate

use bilevel_maas::model::{
    EffectKind, LeaderBounds, MarketInstance, ModeSpec, NetworkEffect, ProviderBid, TravelerBid,
};
use bilevel_maas::reform::{augment_sd, build_hpr, default_lambda_max, FixedSets, Side};
use bilevel_maas::subsolver::{solve, SolveStatus};

fn market() -> MarketInstance {
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
        effect: NetworkEffect {
            kind: EffectKind::Linear,
            a2_t: 0.0,
            a1_t: -0.025,
            a0_t: 10.0,
            a2_p: 0.0,
            a1_p: 0.2,
            a0_p: 1.0,
        },
    }
}

fn main() {
    let inst = market();

    let (root, vm) = build_hpr(&inst, &FixedSets::empty(), EffectKind::Linear).unwrap();
    println!(
        "high-point relaxation: {} variables, {} rows",
        root.num_vars(),
        root.lin.len()
    );
    let out = solve(&root);
    assert_eq!(out.status, SolveStatus::Optimal);
    println!(
        "root bound {:.4}  x = ({:.4}, {:.4})  y = ({:.4}, {:.4})",
        out.objective,
        out.point[vm.x(0)],
        out.point[vm.x(1)],
        out.point[vm.y(0)],
        out.point[vm.y(1)]
    );

    // Accept provider (1,1) and force it onto its best response.
    let mut fixed = FixedSets::empty();
    fixed.prov_fixed1.insert((1, 1));
    let (mut node, vm) = build_hpr(&inst, &fixed, EffectKind::Linear).unwrap();
    let lam = default_lambda_max(&inst, EffectKind::Linear);
    augment_sd(&mut node, &vm, &inst, &fixed, Side::Provider, 0, EffectKind::Linear, lam).unwrap();
    let out = solve(&node);
    assert_eq!(out.status, SolveStatus::Optimal);
    println!(
        "strong-duality node bound {:.4}  y_1_1 = {:.4} (best response 1.0)",
        out.objective,
        out.point[vm.y(0)]
    );
}
