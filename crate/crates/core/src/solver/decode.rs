//! Decoding of raw solver output into market terms.

use super::{RawSolution, SolveStatus};
use crate::model::VariableCatalog;
use crate::orderbook::MarketInstance;
use crate::quantity::pow10;
use serde::{Deserialize, Serialize};

/// Tolerance inside which a relaxed binary is accepted and rounded.
const INTEGRALITY_TOL: f64 = 1e-6;
/// Executed-demand threshold below which the uniform price is undetermined.
const ACTIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZonalPrice {
    pub zone: String,
    pub price: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HourClearing {
    pub hour: u32,
    /// Uniform purchase price; `None` when no UPP demand cleared, in which
    /// case the price is undetermined rather than guessed.
    pub uniform_price: Option<f64>,
    pub kappa: Option<f64>,
    pub zonal_prices: Vec<ZonalPrice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UppOrderClearing {
    pub hour: u32,
    pub id: String,
    pub zone: String,
    /// Fully executed as strictly in the money.
    pub executed: bool,
    pub at_money: bool,
    /// Partial execution through the welfare channel.
    pub partial_welfare: bool,
    /// Partial execution through the dispatch channel.
    pub partial_dispatch: bool,
    pub welfare_qty: f64,
    pub dispatch_qty: f64,
    /// Total cleared quantity (flag times maximum plus both channels).
    pub cleared_qty: f64,
    /// Dual of the welfare-channel upper bound.
    pub cap_dual: f64,
    /// Dual of the welfare-channel lower bound.
    pub floor_dual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZonalOrderClearing {
    pub hour: u32,
    pub id: String,
    pub zone: String,
    pub cleared_qty: f64,
    pub cap_dual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupplyClearing {
    pub hour: u32,
    pub id: String,
    pub zone: String,
    pub dispatched_qty: f64,
    pub cap_dual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockClearing {
    pub id: String,
    pub zone: String,
    pub accepted: bool,
    pub ratio: f64,
    /// Total profile surplus at the decoded zonal prices.
    pub surplus: f64,
    pub cap_dual: f64,
    pub floor_dual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowClearing {
    pub hour: u32,
    pub from: String,
    pub to: String,
    pub flow: f64,
    pub cap_dual: f64,
    pub pairing_dual: f64,
}

/// Binary-expansion bookkeeping for one (hour, zone): the decoded bits and
/// the dispatched total, both in scaled integer units so exactness can be
/// checked without floating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionClearing {
    pub hour: u32,
    pub zone: String,
    pub bits: Vec<u8>,
    pub bits_value_scaled: i64,
    pub dispatch_total_scaled: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClearingResult {
    pub welfare: f64,
    pub hours: Vec<HourClearing>,
    pub upp_orders: Vec<UppOrderClearing>,
    pub zonal_orders: Vec<ZonalOrderClearing>,
    pub supplies: Vec<SupplyClearing>,
    pub blocks: Vec<BlockClearing>,
    pub flows: Vec<FlowClearing>,
    pub expansions: Vec<ExpansionClearing>,
}

impl ClearingResult {
    pub fn hour(&self, hour: u32) -> Option<&HourClearing> {
        self.hours.iter().find(|h| h.hour == hour)
    }

    pub fn zonal_price(&self, hour: u32, zone: &str) -> Option<f64> {
        self.hour(hour)?
            .zonal_prices
            .iter()
            .find(|z| z.zone == zone)
            .map(|z| z.price)
    }

    pub fn upp_order(&self, hour: u32, id: &str) -> Option<&UppOrderClearing> {
        self.upp_orders
            .iter()
            .find(|o| o.hour == hour && o.id == id)
    }

    pub fn block(&self, id: &str) -> Option<&BlockClearing> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn flow(&self, hour: u32, from: &str, to: &str) -> Option<&FlowClearing> {
        self.flows
            .iter()
            .find(|f| f.hour == hour && f.from == from && f.to == to)
    }

    /// Welfare contribution of a single hour (blocks excluded: they belong to
    /// the whole horizon).
    pub fn hourly_welfare(&self, instance: &MarketInstance, hour: u32) -> f64 {
        let mut w = 0.0;
        for o in self.zonal_orders.iter().filter(|o| o.hour == hour) {
            let price = instance
                .zonal_orders_at(hour)
                .find(|d| d.id == o.id)
                .map(|d| d.price)
                .unwrap_or(0.0);
            w += price * o.cleared_qty;
        }
        for o in self.upp_orders.iter().filter(|o| o.hour == hour) {
            let price = instance
                .upp_orders_at(hour)
                .find(|d| d.id == o.id)
                .map(|d| d.price)
                .unwrap_or(0.0);
            w += price * o.cleared_qty;
        }
        for s in self.supplies.iter().filter(|s| s.hour == hour) {
            let price = instance
                .supplies_at(hour)
                .find(|d| d.id == s.id)
                .map(|d| d.price)
                .unwrap_or(0.0);
            w -= price * s.dispatched_qty;
        }
        w
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("solution status {0:?} carries no decodable values")]
    NoSolution(SolveStatus),
    #[error("missing value for variable {0}")]
    Missing(String),
    #[error("integrality violation: {name} = {value} (tolerance {INTEGRALITY_TOL:.0e})")]
    Integrality { name: String, value: f64 },
}

struct Reader<'a> {
    raw: &'a RawSolution,
}

impl Reader<'_> {
    fn value(&self, cat_name: &str) -> Result<f64, DecodeError> {
        self.raw
            .values
            .get(cat_name)
            .copied()
            .ok_or_else(|| DecodeError::Missing(cat_name.to_string()))
    }

    fn binary(&self, name: &str) -> Result<bool, DecodeError> {
        let v = self.value(name)?;
        if (v - v.round()).abs() > INTEGRALITY_TOL {
            return Err(DecodeError::Integrality {
                name: name.to_string(),
                value: v,
            });
        }
        Ok(v.round() as i64 == 1)
    }
}

/// Decodes a raw solution into cleared quantities, prices and duals,
/// verifying binary values are integral within `1e-6` before rounding.
pub fn decode(
    instance: &MarketInstance,
    catalog: &VariableCatalog,
    raw: &RawSolution,
) -> Result<ClearingResult, DecodeError> {
    if !raw.has_values() {
        return Err(DecodeError::NoSolution(raw.status));
    }
    let r = Reader { raw };
    let digits = instance.config.decimal_digits;
    let scale = pow10(digits) as f64;

    // names are reconstructed the same way the builder renders them
    let nm2 = |fam: &str, t: u32, id: &str| format!("{fam}[{t},{id}]");
    let nm3 = |fam: &str, t: u32, a: &str, b: &str| format!("{fam}[{t},{a},{b}]");

    let mut upp_orders = Vec::new();
    for d in instance.demand_orders.iter().filter(|d| d.pays_upp) {
        let (t, id) = (d.hour, d.id.as_str());
        let executed = r.binary(&nm2("ug", t, id))?;
        let welfare_qty = r.value(&nm2("dw", t, id))?;
        let dispatch_qty = r.value(&nm2("dd", t, id))?;
        upp_orders.push(UppOrderClearing {
            hour: t,
            id: id.to_string(),
            zone: d.zone.clone(),
            executed,
            at_money: r.binary(&nm2("ue", t, id))?,
            partial_welfare: r.binary(&nm2("uw", t, id))?,
            partial_dispatch: r.binary(&nm2("ud", t, id))?,
            welfare_qty,
            dispatch_qty,
            cleared_qty: r.value(&nm2("dpi", t, id))?,
            cap_dual: r.value(&nm2("phiw", t, id))?,
            floor_dual: r.value(&nm2("phiwlo", t, id))?,
        });
    }

    let mut zonal_orders = Vec::new();
    for d in instance.demand_orders.iter().filter(|d| !d.pays_upp) {
        zonal_orders.push(ZonalOrderClearing {
            hour: d.hour,
            id: d.id.clone(),
            zone: d.zone.clone(),
            cleared_qty: r.value(&nm2("dzeta", d.hour, &d.id))?,
            cap_dual: r.value(&nm2("phizeta", d.hour, &d.id))?,
        });
    }

    let mut supplies = Vec::new();
    for s in &instance.supply_orders {
        supplies.push(SupplyClearing {
            hour: s.hour,
            id: s.id.clone(),
            zone: s.zone.clone(),
            dispatched_qty: r.value(&nm2("s", s.hour, &s.id))?,
            cap_dual: r.value(&nm2("phis", s.hour, &s.id))?,
        });
    }

    let mut hours = Vec::new();
    for &t in &instance.hours {
        let mut zonal_prices = Vec::new();
        for z in &instance.zones {
            zonal_prices.push(ZonalPrice {
                zone: z.id.clone(),
                price: r.value(&nm2("zeta", t, &z.id))?,
            });
        }
        let has_upp = catalog.pi.contains_key(&t);
        let cleared: f64 = upp_orders
            .iter()
            .filter(|o| o.hour == t)
            .map(|o| o.cleared_qty)
            .sum();
        let uniform_price = if has_upp && cleared > ACTIVITY_TOL {
            Some(r.value(&format!("pi[{t}]"))?)
        } else {
            None
        };
        let kappa = if has_upp {
            Some(r.value(&format!("kappa[{t}]"))?)
        } else {
            None
        };
        hours.push(HourClearing {
            hour: t,
            uniform_price,
            kappa,
            zonal_prices,
        });
    }

    let mut blocks = Vec::new();
    for b in &instance.block_orders {
        let accepted = r.binary(&format!("uB[{}]", b.id))?;
        let ratio = r.value(&format!("r[{}]", b.id))?;
        let mut surplus = 0.0;
        for (&t, &q) in &b.profile {
            let zeta = r.value(&nm2("zeta", t, &b.zone))?;
            surplus += q.mwh(digits) * (zeta - b.price);
        }
        blocks.push(BlockClearing {
            id: b.id.clone(),
            zone: b.zone.clone(),
            accepted,
            ratio,
            surplus,
            cap_dual: r.value(&format!("phiBmax[{}]", b.id))?,
            floor_dual: r.value(&format!("phiBmin[{}]", b.id))?,
        });
    }

    let mut flows = Vec::new();
    for ((t, i, j), _) in &catalog.flow {
        flows.push(FlowClearing {
            hour: *t,
            from: i.clone(),
            to: j.clone(),
            flow: r.value(&nm3("f", *t, i, j))?,
            cap_dual: r.value(&nm3("delta", *t, i, j))?,
            pairing_dual: r.value(&nm3("eta", *t, i, j))?,
        });
    }

    let mut expansions = Vec::new();
    for ((t, zone), bit_vars) in &catalog.bits {
        let mut bits = Vec::new();
        let mut bits_value: i64 = 0;
        for (j, _) in bit_vars.iter().enumerate() {
            let name = format!("b[{t},{zone},{j}]");
            let set = r.binary(&name)?;
            bits.push(u8::from(set));
            if set {
                bits_value += 1i64 << j;
            }
        }
        let dd_total_mwh: f64 = upp_orders
            .iter()
            .filter(|o| o.hour == *t && o.zone == *zone)
            .map(|o| o.dispatch_qty)
            .sum();
        expansions.push(ExpansionClearing {
            hour: *t,
            zone: zone.clone(),
            bits,
            bits_value_scaled: bits_value,
            dispatch_total_scaled: (dd_total_mwh * scale).round() as i64,
        });
    }

    let mut result = ClearingResult {
        welfare: 0.0,
        hours,
        upp_orders,
        zonal_orders,
        supplies,
        blocks,
        flows,
        expansions,
    };
    result.welfare = welfare(instance, &result);
    Ok(result)
}

/// Social welfare of a clearing: order values minus dispatch costs, block
/// orders counted over their whole profile.
pub fn welfare(instance: &MarketInstance, result: &ClearingResult) -> f64 {
    let digits = instance.config.decimal_digits;
    let mut w: f64 = instance
        .hours
        .iter()
        .map(|&t| result.hourly_welfare(instance, t))
        .sum();
    for b in &instance.block_orders {
        if let Some(cleared) = result.block(&b.id) {
            w -= b.price * cleared.ratio * b.total_quantity().mwh(digits);
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn binary_rounding_accepts_near_integral() {
        let raw = RawSolution {
            status: SolveStatus::Optimal,
            objective: 0.0,
            best_bound: None,
            values: BTreeMap::from([
                ("a".to_string(), 0.9999999),
                ("b".to_string(), 0.4),
            ]),
            row_duals: BTreeMap::new(),
            solve_seconds: 0.0,
            max_violation: 0.0,
            worst_name: "-".into(),
        };
        let r = Reader { raw: &raw };
        assert!(r.binary("a").unwrap());
        assert!(matches!(
            r.binary("b"),
            Err(DecodeError::Integrality { .. })
        ));
    }
}
