//! Instance file schema `dam-v1`.
//!
//! UTF-8 text, one record type per section, comma-separated fields, `.` as
//! the decimal separator. Quantities carry exactly `c` decimal digits, prices
//! six. Sections appear in a fixed order, each introduced by a `#NAME` marker
//! followed by a header row:
//!
//! ```text
//! #FORMAT dam-v1
//! #CONFIG
//! c,kappa_lo,kappa_hi,price_cap,epsilon,epsilon_f
//! 3,-1,5,3000,0.00000001,0.000001
//! #HOURS
//! hour
//! 1
//! #ZONES
//! id,upp_member
//! north,1
//! #LINKS
//! from,to,hour,capacity
//! #DEMAND
//! id,zone,hour,price,quantity,pays_upp,merit
//! d1,north,1,60.000000,10.000,1,1
//! #SUPPLY
//! id,zone,hour,price,quantity
//! s1,north,1,40.000000,15.000
//! #BLOCKS
//! id,zone,price,mar,hour,quantity
//! ```
//!
//! A block order occupies one row per profile hour; rows of one block must
//! agree on zone, price and minimum acceptance ratio. The `merit` field is
//! empty for orders that are ranked later by `assign_merit`.

use super::{
    BlockOrder, DemandOrder, MarketConfig, MarketInstance, OrderbookError, SupplyOrder,
    TransmissionLink, Zone,
};
use crate::quantity::{format_scaled, parse_scaled, ScaledQty};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Identifier of the one supported schema; converters for other market data
/// formats can be added behind new ids.
pub const FORMAT_ID: &str = "dam-v1";

pub fn load_instance(path: &Path, format: &str) -> Result<MarketInstance, OrderbookError> {
    let text = std::fs::read_to_string(path)?;
    load_instance_str(&text, format)
}

pub fn load_instance_str(text: &str, format: &str) -> Result<MarketInstance, OrderbookError> {
    if format != FORMAT_ID {
        return Err(OrderbookError::Parse {
            line: 0,
            message: format!("unsupported instance format {format:?}"),
        });
    }
    let instance = Parser::new(text).parse()?;
    instance.validate()?;
    Ok(instance)
}

pub fn save_instance(instance: &MarketInstance, path: &Path) -> Result<(), OrderbookError> {
    std::fs::write(path, serialize_instance(instance))?;
    Ok(())
}

/// Canonical text form; parsing it back yields an equal instance.
pub fn serialize_instance(inst: &MarketInstance) -> String {
    let c = inst.config.decimal_digits;
    let mut out = String::new();
    let _ = writeln!(out, "#FORMAT {FORMAT_ID}");
    let _ = writeln!(out, "#CONFIG");
    let _ = writeln!(out, "c,kappa_lo,kappa_hi,price_cap,epsilon,epsilon_f");
    let _ = writeln!(
        out,
        "{},{},{},{},{},{}",
        c, inst.config.kappa_lo, inst.config.kappa_hi, inst.config.price_cap, inst.config.epsilon,
        inst.config.epsilon_flow
    );
    let _ = writeln!(out, "#HOURS");
    let _ = writeln!(out, "hour");
    for h in &inst.hours {
        let _ = writeln!(out, "{h}");
    }
    let _ = writeln!(out, "#ZONES");
    let _ = writeln!(out, "id,upp_member");
    for z in &inst.zones {
        let _ = writeln!(out, "{},{}", z.id, u8::from(z.upp_member));
    }
    let _ = writeln!(out, "#LINKS");
    let _ = writeln!(out, "from,to,hour,capacity");
    for l in &inst.links {
        for (&h, &cap) in &l.capacity_per_hour {
            let _ = writeln!(out, "{},{},{},{}", l.from, l.to, h, format_scaled(cap, c));
        }
    }
    let _ = writeln!(out, "#DEMAND");
    let _ = writeln!(out, "id,zone,hour,price,quantity,pays_upp,merit");
    for d in &inst.demand_orders {
        let merit = d.merit.map(|m| m.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{},{},{}",
            d.id,
            d.zone,
            d.hour,
            d.price,
            format_scaled(d.quantity, c),
            u8::from(d.pays_upp),
            merit
        );
    }
    let _ = writeln!(out, "#SUPPLY");
    let _ = writeln!(out, "id,zone,hour,price,quantity");
    for s in &inst.supply_orders {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{}",
            s.id,
            s.zone,
            s.hour,
            s.price,
            format_scaled(s.quantity, c)
        );
    }
    let _ = writeln!(out, "#BLOCKS");
    let _ = writeln!(out, "id,zone,price,mar,hour,quantity");
    for b in &inst.block_orders {
        for (&h, &q) in &b.profile {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{},{}",
                b.id,
                b.zone,
                b.price,
                b.min_acceptance_ratio,
                h,
                format_scaled(q, c)
            );
        }
    }
    out
}

struct Parser<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Parser { lines, pos: 0 }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> OrderbookError {
        OrderbookError::Parse {
            line,
            message: message.into(),
        }
    }

    fn expect_marker(&mut self, marker: &str) -> Result<usize, OrderbookError> {
        match self.lines.get(self.pos) {
            Some(&(n, l)) if l == marker || l.starts_with(&format!("{marker} ")) => {
                self.pos += 1;
                Ok(n)
            }
            Some(&(n, l)) => Err(self.err(n, format!("expected {marker:?}, found {l:?}"))),
            None => Err(self.err(self.lines.last().map_or(0, |&(n, _)| n), format!("missing section {marker:?}"))),
        }
    }

    fn expect_header(&mut self, header: &str) -> Result<(), OrderbookError> {
        match self.lines.get(self.pos) {
            Some(&(_, l)) if l == header => {
                self.pos += 1;
                Ok(())
            }
            Some(&(n, l)) => Err(self.err(n, format!("expected header {header:?}, found {l:?}"))),
            None => Err(self.err(0, format!("missing header {header:?}"))),
        }
    }

    /// Record rows of the current section: everything up to the next marker.
    fn records(&mut self) -> Vec<(usize, &'a str)> {
        let start = self.pos;
        while self.pos < self.lines.len() && !self.lines[self.pos].1.starts_with('#') {
            self.pos += 1;
        }
        self.lines[start..self.pos].to_vec()
    }

    fn parse(mut self) -> Result<MarketInstance, OrderbookError> {
        let n = self.expect_marker("#FORMAT")?;
        let fmt_line = self.lines[self.pos - 1].1;
        let declared = fmt_line.trim_start_matches("#FORMAT").trim();
        if declared != FORMAT_ID {
            return Err(self.err(n, format!("file declares format {declared:?}, expected {FORMAT_ID:?}")));
        }

        self.expect_marker("#CONFIG")?;
        self.expect_header("c,kappa_lo,kappa_hi,price_cap,epsilon,epsilon_f")?;
        let rows = self.records();
        if rows.len() != 1 {
            return Err(self.err(rows.first().map_or(0, |r| r.0), "config section needs exactly one row"));
        }
        let (cn, row) = rows[0];
        let f = split_fields(row, 6).map_err(|m| self.err(cn, m))?;
        let config = MarketConfig {
            decimal_digits: parse_num(f[0], cn, "c")?,
            kappa_lo: parse_num(f[1], cn, "kappa_lo")?,
            kappa_hi: parse_num(f[2], cn, "kappa_hi")?,
            price_cap: parse_num(f[3], cn, "price_cap")?,
            epsilon: parse_num(f[4], cn, "epsilon")?,
            epsilon_flow: parse_num(f[5], cn, "epsilon_f")?,
        };
        let c = config.decimal_digits;

        self.expect_marker("#HOURS")?;
        self.expect_header("hour")?;
        let hours = self
            .records()
            .into_iter()
            .map(|(n, l)| parse_num::<u32>(l, n, "hour"))
            .collect::<Result<Vec<_>, _>>()?;

        self.expect_marker("#ZONES")?;
        self.expect_header("id,upp_member")?;
        let zones = self
            .records()
            .into_iter()
            .map(|(n, l)| {
                let f = split_fields(l, 2).map_err(|m| self.err(n, m))?;
                Ok(Zone {
                    id: f[0].to_string(),
                    upp_member: parse_flag(f[1], n)?,
                })
            })
            .collect::<Result<Vec<_>, OrderbookError>>()?;

        self.expect_marker("#LINKS")?;
        self.expect_header("from,to,hour,capacity")?;
        let mut links: Vec<TransmissionLink> = Vec::new();
        for (n, l) in self.records() {
            let f = split_fields(l, 4).map_err(|m| self.err(n, m))?;
            let hour: u32 = parse_num(f[2], n, "hour")?;
            let cap = parse_qty(f[3], c, n)?;
            match links.iter_mut().find(|x| x.from == f[0] && x.to == f[1]) {
                Some(link) => {
                    if link.capacity_per_hour.insert(hour, cap).is_some() {
                        return Err(self.err(n, format!("duplicate capacity for {},{} hour {hour}", f[0], f[1])));
                    }
                }
                None => links.push(TransmissionLink {
                    from: f[0].to_string(),
                    to: f[1].to_string(),
                    capacity_per_hour: BTreeMap::from([(hour, cap)]),
                }),
            }
        }

        self.expect_marker("#DEMAND")?;
        self.expect_header("id,zone,hour,price,quantity,pays_upp,merit")?;
        let demand_orders = self
            .records()
            .into_iter()
            .map(|(n, l)| {
                let f = split_fields(l, 7).map_err(|m| self.err(n, m))?;
                Ok(DemandOrder {
                    id: f[0].to_string(),
                    zone: f[1].to_string(),
                    hour: parse_num(f[2], n, "hour")?,
                    price: parse_num(f[3], n, "price")?,
                    quantity: parse_qty(f[4], c, n)?,
                    pays_upp: parse_flag(f[5], n)?,
                    merit: if f[6].is_empty() {
                        None
                    } else {
                        Some(parse_num(f[6], n, "merit")?)
                    },
                })
            })
            .collect::<Result<Vec<_>, OrderbookError>>()?;

        self.expect_marker("#SUPPLY")?;
        self.expect_header("id,zone,hour,price,quantity")?;
        let supply_orders = self
            .records()
            .into_iter()
            .map(|(n, l)| {
                let f = split_fields(l, 5).map_err(|m| self.err(n, m))?;
                Ok(SupplyOrder {
                    id: f[0].to_string(),
                    zone: f[1].to_string(),
                    hour: parse_num(f[2], n, "hour")?,
                    price: parse_num(f[3], n, "price")?,
                    quantity: parse_qty(f[4], c, n)?,
                })
            })
            .collect::<Result<Vec<_>, OrderbookError>>()?;

        self.expect_marker("#BLOCKS")?;
        self.expect_header("id,zone,price,mar,hour,quantity")?;
        let mut block_orders: Vec<BlockOrder> = Vec::new();
        for (n, l) in self.records() {
            let f = split_fields(l, 6).map_err(|m| self.err(n, m))?;
            let price: f64 = parse_num(f[2], n, "price")?;
            let mar: f64 = parse_num(f[3], n, "mar")?;
            let hour: u32 = parse_num(f[4], n, "hour")?;
            let qty = parse_qty(f[5], c, n)?;
            match block_orders.iter_mut().find(|b| b.id == f[0]) {
                Some(b) => {
                    if b.zone != f[1] || b.price != price || b.min_acceptance_ratio != mar {
                        return Err(self.err(n, format!("block {:?} rows disagree on zone/price/mar", f[0])));
                    }
                    if b.profile.insert(hour, qty).is_some() {
                        return Err(self.err(n, format!("block {:?} repeats hour {hour}", f[0])));
                    }
                }
                None => block_orders.push(BlockOrder {
                    id: f[0].to_string(),
                    zone: f[1].to_string(),
                    price,
                    min_acceptance_ratio: mar,
                    profile: BTreeMap::from([(hour, qty)]),
                }),
            }
        }

        if self.pos != self.lines.len() {
            let (n, l) = self.lines[self.pos];
            return Err(self.err(n, format!("unexpected trailing content {l:?}")));
        }

        Ok(MarketInstance {
            hours,
            zones,
            links,
            demand_orders,
            supply_orders,
            block_orders,
            config,
        })
    }
}

fn split_fields(line: &str, expected: usize) -> Result<Vec<&str>, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(format!("expected {expected} fields, found {}", fields.len()));
    }
    Ok(fields)
}

fn parse_num<T: std::str::FromStr>(text: &str, line: usize, what: &str) -> Result<T, OrderbookError> {
    text.parse().map_err(|_| OrderbookError::Parse {
        line,
        message: format!("malformed {what}: {text:?}"),
    })
}

fn parse_flag(text: &str, line: usize) -> Result<bool, OrderbookError> {
    match text {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(OrderbookError::Parse {
            line,
            message: format!("flag must be 0 or 1, found {other:?}"),
        }),
    }
}

fn parse_qty(text: &str, digits: u8, line: usize) -> Result<ScaledQty, OrderbookError> {
    parse_scaled(text, digits).map_err(|e| OrderbookError::Parse {
        line,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = "\
#FORMAT dam-v1
#CONFIG
c,kappa_lo,kappa_hi,price_cap,epsilon,epsilon_f
3,-1,5,3000,0.00000001,0.000001
#HOURS
hour
1
#ZONES
id,upp_member
north,1
#LINKS
from,to,hour,capacity
#DEMAND
id,zone,hour,price,quantity,pays_upp,merit
d1,north,1,60.000000,10.000,0,
#SUPPLY
id,zone,hour,price,quantity
s1,north,1,40.000000,20.000
#BLOCKS
id,zone,price,mar,hour,quantity
";

    #[test]
    fn loads_minimal_fixture() {
        let inst = load_instance_str(MINI, FORMAT_ID).unwrap();
        assert_eq!(inst.demand_orders.len(), 1);
        assert_eq!(inst.supply_orders.len(), 1);
        assert!(inst.block_orders.is_empty());
        assert_eq!(inst.demand_orders[0].quantity, ScaledQty(10_000));
    }

    #[test]
    fn round_trips_to_equal_instance() {
        let inst = load_instance_str(MINI, FORMAT_ID).unwrap();
        let text = serialize_instance(&inst);
        let again = load_instance_str(&text, FORMAT_ID).unwrap();
        assert_eq!(inst, again);
    }

    #[test]
    fn fine_grid_accepted_at_matching_scale() {
        // 1.0005 MWh needs c=4; with c=3 the loader must reject it.
        let with_c4 = MINI
            .replace("3,-1,5", "4,-1,5")
            .replace("10.000,0,", "1.0005,0,")
            .replace("20.000", "20.0000");
        let inst = load_instance_str(&with_c4, FORMAT_ID).unwrap();
        assert_eq!(inst.demand_orders[0].quantity, ScaledQty(10_005));

        let with_c3 = MINI.replace("10.000,0,", "1.0005,0,");
        let err = load_instance_str(&with_c3, FORMAT_ID).unwrap_err();
        assert!(err.to_string().contains("not a multiple"), "{err}");
    }

    #[test]
    fn shared_merit_rejected_at_load() {
        let text = MINI.replace(
            "d1,north,1,60.000000,10.000,0,",
            "d1,north,1,60.000000,10.000,1,3\nd2,north,1,50.000000,10.000,1,3",
        );
        let err = load_instance_str(&text, FORMAT_ID).unwrap_err();
        assert!(err.to_string().contains("merit-strict-total-order"), "{err}");
    }

    #[test]
    fn unknown_hour_reference_rejected() {
        let text = MINI.replace("s1,north,1,", "s1,north,7,");
        let err = load_instance_str(&text, FORMAT_ID).unwrap_err();
        assert!(matches!(err, OrderbookError::Reference { kind: "hour", .. }), "{err}");
    }
}
