//! Market data model: zones, transmission links, hourly demand/supply orders,
//! curtailable profile block orders, and the market configuration.
//!
//! Instances are immutable after construction and safe to share read-only
//! across concurrent solves. All quantities are stored as scaled integers so
//! that the quantization invariant (`q * 10^c` integral) holds exactly.

mod schema;
mod synth;

pub use schema::{load_instance, load_instance_str, save_instance, serialize_instance, FORMAT_ID};
pub use synth::{generate_synthetic, GenParams, ZoneSplit};

use crate::quantity::{pow10, ScaledQty};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

/// Market-wide configuration constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    /// Number of decimal digits of the quantity grid (`c`).
    pub decimal_digits: u8,
    /// Lower bound of the uniform-purchase-price tolerance band.
    pub kappa_lo: f64,
    /// Upper bound of the uniform-purchase-price tolerance band.
    pub kappa_hi: f64,
    /// Price cap; orders bid at the cap are treated as must-run.
    pub price_cap: f64,
    /// Strictness margin separating in-the-money from at-the-money prices.
    pub epsilon: f64,
    /// Flow saturation margin used by the market-split constraints.
    pub epsilon_flow: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            decimal_digits: 3,
            kappa_lo: -1.0,
            kappa_hi: 5.0,
            price_cap: 3000.0,
            epsilon: 1e-8,
            epsilon_flow: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    /// Whether consumers in this zone are settled at the uniform purchase price.
    pub upp_member: bool,
}

/// Directed transmission link; the reverse direction is a separate link and
/// an absent link means zero capacity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionLink {
    pub from: String,
    pub to: String,
    /// Capacity per hour, MW.
    pub capacity_per_hour: BTreeMap<u32, ScaledQty>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandOrder {
    pub id: String,
    pub zone: String,
    pub hour: u32,
    /// Bid price, currency/MWh.
    pub price: f64,
    pub quantity: ScaledQty,
    /// True when the consumer pays the uniform purchase price.
    pub pays_upp: bool,
    /// Merit-order rank; lower executes first. Only meaningful when `pays_upp`.
    pub merit: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyOrder {
    pub id: String,
    pub zone: String,
    pub hour: u32,
    pub price: f64,
    pub quantity: ScaledQty,
}

/// Multi-hour supply order with a single price, an hourly quantity profile and
/// a minimum acceptance ratio. Executed uniformly over its whole timespan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOrder {
    pub id: String,
    pub zone: String,
    pub price: f64,
    /// Minimum acceptance ratio in `[0, 1]`.
    pub min_acceptance_ratio: f64,
    /// Hourly maximum quantities over the timespan (hours need not be contiguous).
    pub profile: BTreeMap<u32, ScaledQty>,
}

impl BlockOrder {
    /// Hours of the block timespan, ascending.
    pub fn span(&self) -> impl Iterator<Item = u32> + '_ {
        self.profile.keys().copied()
    }

    /// Total profile quantity over the timespan.
    pub fn total_quantity(&self) -> ScaledQty {
        ScaledQty(self.profile.values().map(|q| q.0).sum())
    }
}

/// A complete order book for one trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    pub hours: Vec<u32>,
    pub zones: Vec<Zone>,
    pub links: Vec<TransmissionLink>,
    pub demand_orders: Vec<DemandOrder>,
    pub supply_orders: Vec<SupplyOrder>,
    pub block_orders: Vec<BlockOrder>,
    pub config: MarketConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum OrderbookError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation error [{rule}] on {entity:?}: {message}")]
    Validation {
        entity: String,
        rule: &'static str,
        message: String,
    },
    #[error("reference error on {entity:?}: unknown {kind} {target:?}")]
    Reference {
        entity: String,
        kind: &'static str,
        target: String,
    },
}

fn validation(entity: &str, rule: &'static str, message: String) -> OrderbookError {
    OrderbookError::Validation {
        entity: entity.to_string(),
        rule,
        message,
    }
}

/// Identifiers end up as tokens in model files, so keep them to a safe charset.
fn check_id(entity: &str, id: &str) -> Result<(), OrderbookError> {
    if id.is_empty()
        || !id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
    {
        return Err(validation(
            entity,
            "id-charset",
            format!("{id:?} must be non-empty and use only [A-Za-z0-9_.-]"),
        ));
    }
    Ok(())
}

impl MarketInstance {
    /// Checks every type invariant; returns the first violation found.
    pub fn validate(&self) -> Result<(), OrderbookError> {
        let cfg = &self.config;
        if cfg.kappa_lo > cfg.kappa_hi {
            return Err(validation(
                "config",
                "kappa-bounds",
                format!("kappa_lo {} > kappa_hi {}", cfg.kappa_lo, cfg.kappa_hi),
            ));
        }
        if !(cfg.price_cap > 0.0) {
            return Err(validation(
                "config",
                "price-cap",
                format!("price cap {} must be positive", cfg.price_cap),
            ));
        }
        if self.zones.is_empty() {
            return Err(validation("zones", "non-empty", "no zones".into()));
        }
        if self.hours.is_empty() {
            return Err(validation("hours", "non-empty", "no hours".into()));
        }
        let mut hours_seen = BTreeSet::new();
        for &h in &self.hours {
            if !hours_seen.insert(h) {
                return Err(validation("hours", "unique", format!("hour {h} repeated")));
            }
        }
        if self.hours.windows(2).any(|w| w[0] >= w[1]) {
            return Err(validation("hours", "ordered", "hours must be ascending".into()));
        }

        let mut zone_ids = HashSet::new();
        let mut upp_zones = HashSet::new();
        for z in &self.zones {
            check_id("zone", &z.id)?;
            if !zone_ids.insert(z.id.as_str()) {
                return Err(validation(&z.id, "zone-unique", "duplicate zone id".into()));
            }
            if z.upp_member {
                upp_zones.insert(z.id.as_str());
            }
        }

        let hour_set: HashSet<u32> = self.hours.iter().copied().collect();
        let check_zone = |entity: &str, zone: &str| -> Result<(), OrderbookError> {
            if zone_ids.contains(zone) {
                Ok(())
            } else {
                Err(OrderbookError::Reference {
                    entity: entity.to_string(),
                    kind: "zone",
                    target: zone.to_string(),
                })
            }
        };
        let check_hour = |entity: &str, hour: u32| -> Result<(), OrderbookError> {
            if hour_set.contains(&hour) {
                Ok(())
            } else {
                Err(OrderbookError::Reference {
                    entity: entity.to_string(),
                    kind: "hour",
                    target: hour.to_string(),
                })
            }
        };

        let mut link_dirs = HashSet::new();
        for l in &self.links {
            let entity = format!("link {}->{}", l.from, l.to);
            check_zone(&entity, &l.from)?;
            check_zone(&entity, &l.to)?;
            if l.from == l.to {
                return Err(validation(&entity, "link-distinct", "from == to".into()));
            }
            if !link_dirs.insert((l.from.as_str(), l.to.as_str())) {
                return Err(validation(&entity, "link-unique", "duplicate direction".into()));
            }
            for (&h, &cap) in &l.capacity_per_hour {
                check_hour(&entity, h)?;
                if cap.0 < 0 {
                    return Err(validation(
                        &entity,
                        "capacity-nonnegative",
                        format!("capacity {} at hour {h}", cap.0),
                    ));
                }
            }
        }

        let check_price = |entity: &str, price: f64| -> Result<(), OrderbookError> {
            if !price.is_finite() || price < 0.0 || price > cfg.price_cap {
                return Err(validation(
                    entity,
                    "price-range",
                    format!("price {price} outside [0, {}]", cfg.price_cap),
                ));
            }
            Ok(())
        };

        let mut demand_ids = HashSet::new();
        for d in &self.demand_orders {
            check_id("demand", &d.id)?;
            if !demand_ids.insert((d.hour, d.id.as_str())) {
                return Err(validation(&d.id, "order-unique", "duplicate (hour, id)".into()));
            }
            check_zone(&d.id, &d.zone)?;
            check_hour(&d.id, d.hour)?;
            check_price(&d.id, d.price)?;
            if d.quantity.0 < 0 {
                return Err(validation(&d.id, "quantity-nonnegative", format!("{}", d.quantity)));
            }
            if d.pays_upp && !upp_zones.contains(d.zone.as_str()) {
                return Err(validation(
                    &d.id,
                    "upp-zone",
                    format!("pays_upp order in non-UPP zone {:?}", d.zone),
                ));
            }
            if !d.pays_upp && d.merit.is_some() {
                return Err(validation(&d.id, "merit-upp-only", "merit set on zonal order".into()));
            }
        }

        let mut supply_ids = HashSet::new();
        for s in &self.supply_orders {
            check_id("supply", &s.id)?;
            if !supply_ids.insert((s.hour, s.id.as_str())) {
                return Err(validation(&s.id, "order-unique", "duplicate (hour, id)".into()));
            }
            check_zone(&s.id, &s.zone)?;
            check_hour(&s.id, s.hour)?;
            check_price(&s.id, s.price)?;
            if s.quantity.0 < 0 {
                return Err(validation(&s.id, "quantity-nonnegative", format!("{}", s.quantity)));
            }
        }

        let mut block_ids = HashSet::new();
        for b in &self.block_orders {
            check_id("block", &b.id)?;
            if !block_ids.insert(b.id.as_str()) {
                return Err(validation(&b.id, "block-unique", "duplicate block id".into()));
            }
            check_zone(&b.id, &b.zone)?;
            check_price(&b.id, b.price)?;
            if !(0.0..=1.0).contains(&b.min_acceptance_ratio) {
                return Err(validation(
                    &b.id,
                    "mar-range",
                    format!("minimum acceptance ratio {}", b.min_acceptance_ratio),
                ));
            }
            if b.profile.is_empty() || b.profile.values().all(|q| q.is_zero()) {
                return Err(validation(&b.id, "profile-positive", "no positive profile hour".into()));
            }
            for (&h, &q) in &b.profile {
                check_hour(&b.id, h)?;
                if q.0 < 0 {
                    return Err(validation(&b.id, "quantity-nonnegative", format!("hour {h}: {q}")));
                }
            }
        }

        self.validate_merits()?;
        Ok(())
    }

    /// Checks that merits form a strict total order per hour and are
    /// consistent with the price ranking: a strictly higher price must come
    /// with a strictly smaller merit value.
    fn validate_merits(&self) -> Result<(), OrderbookError> {
        for &hour in &self.hours {
            let mut by_merit: Vec<&DemandOrder> = Vec::new();
            for d in self.upp_orders_at(hour) {
                match d.merit {
                    Some(m) if m >= 1 => by_merit.push(d),
                    Some(_) => {
                        return Err(validation(&d.id, "merit-positive", "merit must be >= 1".into()))
                    }
                    None => {
                        return Err(validation(
                            &d.id,
                            "merit-missing",
                            format!("UPP order without merit at hour {hour} (run assign_merit)"),
                        ))
                    }
                }
            }
            by_merit.sort_by_key(|d| d.merit.unwrap());
            for pair in by_merit.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if a.merit == b.merit {
                    return Err(validation(
                        &b.id,
                        "merit-strict-total-order",
                        format!("merit {} shared with {:?} at hour {hour}", b.merit.unwrap(), a.id),
                    ));
                }
                if b.price > a.price {
                    return Err(validation(
                        &b.id,
                        "merit-price-consistency",
                        format!(
                            "price {} outranks {:?} ({}) but has larger merit at hour {hour}",
                            b.price, a.id, a.price
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Assigns merit values to all UPP demand orders: descending price, ties
    /// broken by ascending order id as a deterministic stand-in for the
    /// submission time stamp. Existing merits are recomputed.
    pub fn assign_merit(mut self) -> MarketInstance {
        for &hour in &self.hours.clone() {
            let mut idx: Vec<usize> = self
                .demand_orders
                .iter()
                .enumerate()
                .filter(|(_, d)| d.hour == hour && d.pays_upp)
                .map(|(i, _)| i)
                .collect();
            idx.sort_by(|&a, &b| {
                let (da, db) = (&self.demand_orders[a], &self.demand_orders[b]);
                db.price
                    .partial_cmp(&da.price)
                    .unwrap()
                    .then_with(|| da.id.cmp(&db.id))
            });
            for (rank, &i) in idx.iter().enumerate() {
                self.demand_orders[i].merit = Some(rank as u32 + 1);
            }
        }
        self
    }

    pub fn upp_zone_ids(&self) -> Vec<&str> {
        self.zones
            .iter()
            .filter(|z| z.upp_member)
            .map(|z| z.id.as_str())
            .collect()
    }

    pub fn zone(&self, id: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.id == id)
    }

    /// UPP demand orders of one hour, in input order.
    pub fn upp_orders_at(&self, hour: u32) -> impl Iterator<Item = &DemandOrder> {
        self.demand_orders
            .iter()
            .filter(move |d| d.hour == hour && d.pays_upp)
    }

    /// UPP demand orders of one hour sorted by ascending merit.
    pub fn upp_orders_by_merit(&self, hour: u32) -> Vec<&DemandOrder> {
        let mut v: Vec<&DemandOrder> = self.upp_orders_at(hour).collect();
        v.sort_by_key(|d| d.merit.expect("merits assigned"));
        v
    }

    pub fn zonal_orders_at(&self, hour: u32) -> impl Iterator<Item = &DemandOrder> {
        self.demand_orders
            .iter()
            .filter(move |d| d.hour == hour && !d.pays_upp)
    }

    pub fn supplies_at(&self, hour: u32) -> impl Iterator<Item = &SupplyOrder> {
        self.supply_orders.iter().filter(move |s| s.hour == hour)
    }

    pub fn blocks_in_zone<'a>(&'a self, zone: &'a str) -> impl Iterator<Item = &'a BlockOrder> + 'a {
        self.block_orders.iter().filter(move |b| b.zone == zone)
    }

    /// Directed capacity from `from` to `to` at `hour`; absent links mean 0.
    pub fn capacity(&self, hour: u32, from: &str, to: &str) -> ScaledQty {
        self.links
            .iter()
            .find(|l| l.from == from && l.to == to)
            .and_then(|l| l.capacity_per_hour.get(&hour).copied())
            .unwrap_or(ScaledQty::ZERO)
    }

    /// Unordered zone pairs that have a link in at least one direction at the
    /// given hour, as (lo, hi) sorted by zone id.
    pub fn connected_pairs(&self, hour: u32) -> Vec<(String, String)> {
        let mut pairs = BTreeSet::new();
        for l in &self.links {
            if l.capacity_per_hour.contains_key(&hour) {
                let (a, b) = if l.from < l.to {
                    (l.from.clone(), l.to.clone())
                } else {
                    (l.to.clone(), l.from.clone())
                };
                pairs.insert((a, b));
            }
        }
        pairs.into_iter().collect()
    }

    /// True when the order must be fully executed because it bids at the cap.
    pub fn is_must_run(&self, order: &DemandOrder) -> bool {
        order.pays_upp && order.price >= self.config.price_cap
    }

    /// A copy of the instance restricted to a single hour. Block orders are
    /// dropped: decomposition only applies to blockless instances.
    pub fn restrict_to_hour(&self, hour: u32) -> MarketInstance {
        MarketInstance {
            hours: vec![hour],
            zones: self.zones.clone(),
            links: self
                .links
                .iter()
                .filter(|l| l.capacity_per_hour.contains_key(&hour))
                .map(|l| TransmissionLink {
                    from: l.from.clone(),
                    to: l.to.clone(),
                    capacity_per_hour: l
                        .capacity_per_hour
                        .iter()
                        .filter(|(&h, _)| h == hour)
                        .map(|(&h, &c)| (h, c))
                        .collect(),
                })
                .collect(),
            demand_orders: self
                .demand_orders
                .iter()
                .filter(|d| d.hour == hour)
                .cloned()
                .collect(),
            supply_orders: self
                .supply_orders
                .iter()
                .filter(|s| s.hour == hour)
                .cloned()
                .collect(),
            block_orders: Vec::new(),
            config: self.config.clone(),
        }
    }

    /// Scaled total UPP demand per (hour, zone); drives the binary-expansion width.
    pub fn upp_demand_totals(&self) -> HashMap<(u32, String), ScaledQty> {
        let mut totals: HashMap<(u32, String), ScaledQty> = HashMap::new();
        for d in self.demand_orders.iter().filter(|d| d.pays_upp) {
            let e = totals
                .entry((d.hour, d.zone.clone()))
                .or_insert(ScaledQty::ZERO);
            *e = e.checked_add(d.quantity).expect("demand total overflow");
        }
        totals
    }

    /// Grid step in MWh (`10^-c`).
    pub fn grid_step(&self) -> f64 {
        1.0 / pow10(self.config.decimal_digits) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zone(id: &str, upp: bool) -> Zone {
        Zone {
            id: id.into(),
            upp_member: upp,
        }
    }

    fn base_instance() -> MarketInstance {
        MarketInstance {
            hours: vec![1],
            zones: vec![zone("n", true), zone("s", false)],
            links: vec![],
            demand_orders: vec![],
            supply_orders: vec![],
            block_orders: vec![],
            config: MarketConfig::default(),
        }
    }

    fn upp_order(id: &str, price: f64, merit: Option<u32>) -> DemandOrder {
        DemandOrder {
            id: id.into(),
            zone: "n".into(),
            hour: 1,
            price,
            quantity: ScaledQty(10_000),
            pays_upp: true,
            merit,
        }
    }

    #[test]
    fn assign_merit_sorts_by_price_then_id() {
        let mut inst = base_instance();
        inst.demand_orders = vec![
            upp_order("a", 60.0, None),
            upp_order("b", 50.0, None),
            upp_order("c", 60.0, None),
        ];
        let inst = inst.assign_merit();
        let merits: Vec<(String, u32)> = inst
            .demand_orders
            .iter()
            .map(|d| (d.id.clone(), d.merit.unwrap()))
            .collect();
        assert_eq!(
            merits,
            vec![("a".into(), 1), ("b".into(), 3), ("c".into(), 2)]
        );
        inst.validate().unwrap();
    }

    #[test]
    fn assign_merit_single_order() {
        let mut inst = base_instance();
        inst.demand_orders = vec![upp_order("only", 45.0, None)];
        let inst = inst.assign_merit();
        assert_eq!(inst.demand_orders[0].merit, Some(1));
    }

    #[test]
    fn assign_merit_ties_break_by_id() {
        let mut inst = base_instance();
        inst.demand_orders = vec![upp_order("z", 50.0, None), upp_order("a", 50.0, None)];
        let inst = inst.assign_merit();
        let get = |id: &str| {
            inst.demand_orders
                .iter()
                .find(|d| d.id == id)
                .unwrap()
                .merit
                .unwrap()
        };
        assert_eq!(get("a"), 1);
        assert_eq!(get("z"), 2);
    }

    #[test]
    fn duplicate_merit_rejected() {
        let mut inst = base_instance();
        inst.demand_orders = vec![upp_order("a", 60.0, Some(3)), upp_order("b", 50.0, Some(3))];
        let err = inst.validate().unwrap_err();
        assert!(
            matches!(err, OrderbookError::Validation { rule, .. } if rule == "merit-strict-total-order"),
            "{err}"
        );
    }

    #[test]
    fn price_merit_inconsistency_rejected() {
        let mut inst = base_instance();
        inst.demand_orders = vec![upp_order("a", 50.0, Some(1)), upp_order("b", 60.0, Some(2))];
        let err = inst.validate().unwrap_err();
        assert!(
            matches!(err, OrderbookError::Validation { rule, .. } if rule == "merit-price-consistency"),
            "{err}"
        );
    }

    #[test]
    fn upp_order_in_zonal_zone_rejected() {
        let mut inst = base_instance();
        inst.demand_orders = vec![DemandOrder {
            zone: "s".into(),
            ..upp_order("a", 50.0, Some(1))
        }];
        let err = inst.validate().unwrap_err();
        assert!(matches!(err, OrderbookError::Validation { rule, .. } if rule == "upp-zone"));
    }

    #[test]
    fn unknown_zone_is_reference_error() {
        let mut inst = base_instance();
        inst.supply_orders = vec![SupplyOrder {
            id: "s1".into(),
            zone: "nowhere".into(),
            hour: 1,
            price: 10.0,
            quantity: ScaledQty(1000),
        }];
        assert!(matches!(
            inst.validate().unwrap_err(),
            OrderbookError::Reference { kind: "zone", .. }
        ));
    }
}
