//! Synthetic instance generation.
//!
//! Block orders follow the published recipe: hourly quantities uniform on
//! [1, 75] MWh rounded to the quantity grid, prices normal with mean 50 and
//! standard deviation 10 truncated to [0, price_cap], minimum acceptance
//! ratio 10%, orders split evenly between one UPP zone and one non-UPP zone
//! over the requested hour span.
//!
//! The base order book (zones, links, hourly stepwise orders) is drawn from a
//! separate random stream, so changing the number of blocks leaves the rest
//! of the instance untouched.

use super::{
    BlockOrder, DemandOrder, MarketConfig, MarketInstance, SupplyOrder, TransmissionLink, Zone,
};
use crate::quantity::round_to_grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;
use std::ops::RangeInclusive;

/// Names the UPP zone and the non-UPP zone that receive the block orders.
#[derive(Debug, Clone)]
pub struct ZoneSplit {
    pub upp_zone: String,
    pub other_zone: String,
}

impl Default for ZoneSplit {
    fn default() -> Self {
        ZoneSplit {
            upp_zone: "upp".into(),
            other_zone: "ext".into(),
        }
    }
}

/// Shape of the generated order book. Defaults produce a small two-zone book;
/// the block parameters mirror the published recipe.
#[derive(Debug, Clone)]
pub struct GenParams {
    pub upp_demands_per_hour: u32,
    pub zonal_demands_per_hour: u32,
    pub supplies_per_zone_hour: u32,
    pub demand_qty_mwh: (f64, f64),
    pub supply_qty_mwh: (f64, f64),
    pub demand_price: (f64, f64),
    pub supply_price: (f64, f64),
    /// Link capacity is uniform on [0, max]; a quarter of draws are forced to
    /// zero so that isolated-zone cases appear.
    pub link_capacity_max_mwh: f64,
    pub block_qty_mwh: (f64, f64),
    pub block_price_mean: f64,
    pub block_price_sd: f64,
    pub min_acceptance_ratio: f64,
    /// Adds a second UPP zone (with its own orders) to exercise the
    /// multi-zone uniform-price coupling.
    pub second_upp_zone: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            upp_demands_per_hour: 4,
            zonal_demands_per_hour: 2,
            supplies_per_zone_hour: 3,
            demand_qty_mwh: (2.0, 20.0),
            supply_qty_mwh: (5.0, 30.0),
            demand_price: (20.0, 80.0),
            supply_price: (5.0, 70.0),
            link_capacity_max_mwh: 40.0,
            block_qty_mwh: (1.0, 75.0),
            block_price_mean: 50.0,
            block_price_sd: 10.0,
            min_acceptance_ratio: 0.10,
            second_upp_zone: false,
        }
    }
}

/// Deterministic synthetic instance for a seed: same seed, byte-identical
/// serialization.
pub fn generate_synthetic(
    seed: u64,
    n_blocks: u32,
    split: &ZoneSplit,
    hours: RangeInclusive<u32>,
) -> MarketInstance {
    generate_with(seed, n_blocks, split, hours, &GenParams::default())
}

pub fn generate_with(
    seed: u64,
    n_blocks: u32,
    split: &ZoneSplit,
    hours: RangeInclusive<u32>,
    params: &GenParams,
) -> MarketInstance {
    assert!(hours.start() <= hours.end(), "invalid hour span");
    let hours: Vec<u32> = hours.clone().collect();
    let config = MarketConfig::default();
    let c = config.decimal_digits;

    let mut base_rng = ChaCha8Rng::seed_from_u64(seed);
    base_rng.set_stream(0);
    let mut block_rng = ChaCha8Rng::seed_from_u64(seed);
    block_rng.set_stream(1);

    let mut zones = vec![
        Zone {
            id: split.upp_zone.clone(),
            upp_member: true,
        },
        Zone {
            id: split.other_zone.clone(),
            upp_member: false,
        },
    ];
    if params.second_upp_zone {
        zones.push(Zone {
            id: format!("{}2", split.upp_zone),
            upp_member: true,
        });
    }

    let mut links = Vec::new();
    for a in 0..zones.len() {
        for b in 0..zones.len() {
            if a == b {
                continue;
            }
            let mut capacity_per_hour = BTreeMap::new();
            for &h in &hours {
                let cap = if base_rng.gen_range(0..4u32) == 0 {
                    0.0
                } else {
                    base_rng.gen_range(0.0..=params.link_capacity_max_mwh)
                };
                capacity_per_hour.insert(h, round_to_grid(cap, c));
            }
            links.push(TransmissionLink {
                from: zones[a].id.clone(),
                to: zones[b].id.clone(),
                capacity_per_hour,
            });
        }
    }

    let mut demand_orders = Vec::new();
    let mut supply_orders = Vec::new();
    for &h in &hours {
        for zone in &zones {
            let n_dem = if zone.upp_member {
                params.upp_demands_per_hour
            } else {
                params.zonal_demands_per_hour
            };
            // Distinct prices per hour keep the at-the-money order unique.
            let mut used_prices: Vec<f64> = Vec::new();
            for i in 0..n_dem {
                let price = loop {
                    let p = round_price(base_rng.gen_range(params.demand_price.0..=params.demand_price.1), 2);
                    if !used_prices.contains(&p) {
                        used_prices.push(p);
                        break p;
                    }
                };
                let qty = base_rng.gen_range(params.demand_qty_mwh.0..=params.demand_qty_mwh.1);
                demand_orders.push(DemandOrder {
                    id: format!("d-{}-h{}-{}", zone.id, h, i),
                    zone: zone.id.clone(),
                    hour: h,
                    price,
                    quantity: round_to_grid(qty, c),
                    pays_upp: zone.upp_member,
                    merit: None,
                });
            }
            for i in 0..params.supplies_per_zone_hour {
                let price = round_price(
                    base_rng.gen_range(params.supply_price.0..=params.supply_price.1),
                    2,
                );
                let qty = base_rng.gen_range(params.supply_qty_mwh.0..=params.supply_qty_mwh.1);
                supply_orders.push(SupplyOrder {
                    id: format!("s-{}-h{}-{}", zone.id, h, i),
                    zone: zone.id.clone(),
                    hour: h,
                    price,
                    quantity: round_to_grid(qty, c),
                });
            }
        }
    }

    let price_dist = Normal::new(params.block_price_mean, params.block_price_sd)
        .expect("valid block price distribution");
    let mut block_orders = Vec::new();
    for i in 0..n_blocks {
        let zone = if i % 2 == 0 {
            split.upp_zone.clone()
        } else {
            split.other_zone.clone()
        };
        let price = round_price(
            price_dist
                .sample(&mut block_rng)
                .clamp(0.0, config.price_cap),
            6,
        );
        let mut profile = BTreeMap::new();
        for &h in &hours {
            let q = block_rng.gen_range(params.block_qty_mwh.0..=params.block_qty_mwh.1);
            profile.insert(h, round_to_grid(q, c));
        }
        block_orders.push(BlockOrder {
            id: format!("blk-{i}"),
            zone,
            price,
            min_acceptance_ratio: params.min_acceptance_ratio,
            profile,
        });
    }

    let instance = MarketInstance {
        hours,
        zones,
        links,
        demand_orders,
        supply_orders,
        block_orders,
        config,
    }
    .assign_merit();
    instance.validate().expect("generated instance is valid");
    instance
}

fn round_price(p: f64, digits: u32) -> f64 {
    let scale = 10f64.powi(digits as i32);
    (p * scale).round() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orderbook::serialize_instance;

    #[test]
    fn paper_shape_fifty_blocks_over_twelve_hours() {
        let inst = generate_synthetic(7, 50, &ZoneSplit::default(), 9..=20);
        assert_eq!(inst.block_orders.len(), 50);
        let upp = inst.blocks_in_zone("upp").count();
        let ext = inst.blocks_in_zone("ext").count();
        assert_eq!((upp, ext), (25, 25));
        for b in &inst.block_orders {
            assert_eq!(b.profile.len(), 12);
            assert_eq!(b.min_acceptance_ratio, 0.10);
            for (&h, &q) in &b.profile {
                assert!((9..=20).contains(&h));
                assert!(q.0 >= 1_000 && q.0 <= 75_000, "qty {q} out of [1,75] MWh");
            }
        }
    }

    #[test]
    fn zero_blocks_only_drops_block_section() {
        let with = generate_synthetic(7, 2, &ZoneSplit::default(), 1..=2);
        let without = generate_synthetic(7, 0, &ZoneSplit::default(), 1..=2);
        assert!(without.block_orders.is_empty());
        assert_eq!(with.demand_orders, without.demand_orders);
        assert_eq!(with.supply_orders, without.supply_orders);
        assert_eq!(with.links, without.links);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let a = generate_synthetic(42, 5, &ZoneSplit::default(), 9..=11);
        let b = generate_synthetic(42, 5, &ZoneSplit::default(), 9..=11);
        assert_eq!(serialize_instance(&a), serialize_instance(&b));
        let c = generate_synthetic(43, 5, &ZoneSplit::default(), 9..=11);
        assert_ne!(serialize_instance(&a), serialize_instance(&c));
    }
}
