//! Assembly of the single-level clearing MILP from a market instance.

use super::{
    BigMParams, BuildOptions, BuiltModel, ConstraintSense, ExpansionSpec, IndexAtom,
    MarketSplitMode, MilpModel, ModelError, ProductAudit, VarId, VarKind, VariableCatalog,
};
use crate::orderbook::{DemandOrder, MarketInstance};
use crate::quantity::pow10;
use std::collections::BTreeMap;

const INF: f64 = f64::INFINITY;

/// Row/column family tags of one product linearization.
pub struct LinFam {
    y: &'static str,
    ub: &'static str,
    lb: &'static str,
    du: &'static str,
    dl: &'static str,
}

const YGPI: LinFam = LinFam { y: "ygpi", ub: "ygpi_ub", lb: "ygpi_lb", du: "ygpi_du", dl: "ygpi_dl" };
const YEPI: LinFam = LinFam { y: "yepi", ub: "yepi_ub", lb: "yepi_lb", du: "yepi_du", dl: "yepi_dl" };
const YGZETA: LinFam = LinFam { y: "ygzeta", ub: "ygzeta_ub", lb: "ygzeta_lb", du: "ygzeta_du", dl: "ygzeta_dl" };
const YWPHI: LinFam = LinFam { y: "ywphi", ub: "ywphi_ub", lb: "", du: "ywphi_du", dl: "ywphi_dl" };
const YBZETA: LinFam = LinFam { y: "ybzeta", ub: "ybzeta_ub", lb: "ybzeta_lb", du: "ybzeta_du", dl: "ybzeta_dl" };
const YBPHIMAX: LinFam = LinFam { y: "yBphimax", ub: "yBphimax_ub", lb: "", du: "yBphimax_du", dl: "yBphimax_dl" };
const YBPHIMIN: LinFam = LinFam { y: "yBphimin", ub: "yBphimin_ub", lb: "", du: "yBphimin_du", dl: "yBphimin_dl" };

/// Replaces the product `u * x` of a binary and a bounded continuous variable
/// by a fresh auxiliary `y` plus its defining constraints.
///
/// The symmetric form assumes `|x| <= m` and emits
/// `-m*u <= y <= m*u` and `-m*(1-u) <= x - y <= m*(1-u)`.
/// With `nonneg` set it assumes `0 <= x <= m` and emits the one-sided
/// variants `0 <= y <= m*u` and `0 <= x - y <= m*(1-u)`.
pub fn linearize_product(
    model: &mut MilpModel,
    fam: &LinFam,
    atoms: Vec<IndexAtom>,
    u: VarId,
    x: VarId,
    m: f64,
    nonneg: bool,
    audit: &mut Vec<ProductAudit>,
) -> Result<VarId, ModelError> {
    if !(m > 0.0) {
        return Err(ModelError::InvalidBigM {
            context: format!("{}{:?}", fam.y, atoms),
            value: m,
        });
    }
    let (lo, hi) = if nonneg { (0.0, m) } else { (-m, m) };
    let y = model.add_variable(fam.y, atoms.clone(), lo, hi, VarKind::Continuous, 0.0);
    // y <= m*u
    model.add_constraint(fam.ub, atoms.clone(), vec![(y, 1.0), (u, -m)], ConstraintSense::Le, 0.0);
    if !nonneg {
        // y >= -m*u
        model.add_constraint(fam.lb, atoms.clone(), vec![(y, 1.0), (u, m)], ConstraintSense::Ge, 0.0);
    }
    // x - y <= m*(1-u)
    model.add_constraint(
        fam.du,
        atoms.clone(),
        vec![(x, 1.0), (y, -1.0), (u, m)],
        ConstraintSense::Le,
        m,
    );
    // x - y >= -m*(1-u), or x - y >= 0 in the one-sided form
    if nonneg {
        model.add_constraint(fam.dl, atoms.clone(), vec![(x, 1.0), (y, -1.0)], ConstraintSense::Ge, 0.0);
    } else {
        model.add_constraint(
            fam.dl,
            atoms.clone(),
            vec![(x, 1.0), (y, -1.0), (u, -m)],
            ConstraintSense::Ge,
            -m,
        );
    }
    audit.push(ProductAudit {
        binary: u,
        factor: x,
        product: y,
        big_m: m,
        nonneg,
    });
    Ok(y)
}

/// Largest expansion width the exact integer arithmetic supports.
const MAX_EXPANSION_WIDTH: u32 = 45;

pub fn build_model(inst: &MarketInstance, opts: &BuildOptions) -> Result<BuiltModel, ModelError> {
    inst.validate()?;
    if inst.demand_orders.is_empty() && inst.supply_orders.is_empty() && inst.block_orders.is_empty()
    {
        return Err(ModelError::EmptyInstance);
    }
    Builder::new(inst, *opts).run()
}

struct Builder<'a> {
    inst: &'a MarketInstance,
    opts: BuildOptions,
    m: MilpModel,
    cat: VariableCatalog,
    m_pi: f64,
    scale: f64,
}

impl<'a> Builder<'a> {
    fn new(inst: &'a MarketInstance, opts: BuildOptions) -> Self {
        Builder {
            inst,
            opts,
            m: MilpModel::new(true),
            cat: VariableCatalog::default(),
            m_pi: inst.config.price_cap,
            scale: pow10(inst.config.decimal_digits) as f64,
        }
    }

    fn hour_atom(t: u32) -> IndexAtom {
        IndexAtom::Num(t)
    }

    fn tk(t: u32, id: &str) -> Vec<IndexAtom> {
        vec![IndexAtom::Num(t), IndexAtom::Name(id.to_string())]
    }

    fn tij(t: u32, i: &str, j: &str) -> Vec<IndexAtom> {
        vec![
            IndexAtom::Num(t),
            IndexAtom::Name(i.to_string()),
            IndexAtom::Name(j.to_string()),
        ]
    }

    fn mwh(&self, q: crate::quantity::ScaledQty) -> f64 {
        q.mwh(self.inst.config.decimal_digits)
    }

    fn run(mut self) -> Result<BuiltModel, ModelError> {
        self.register_demand_side();
        self.register_supply_side();
        self.register_blocks();
        self.register_network();
        self.register_expansion()?;
        self.big_m_params();

        self.upper_level()?;
        self.lower_level_primal();
        self.dual_feasibility();
        self.upp_definition()?;
        self.strong_duality();
        if self.opts.search_reduction {
            self.search_reduction();
        }
        match self.opts.market_split {
            MarketSplitMode::Off => {}
            mode => self.market_split(mode),
        }

        Ok(BuiltModel {
            model: self.m,
            catalog: self.cat,
        })
    }

    fn upp_orders(&self, t: u32) -> Vec<&'a DemandOrder> {
        self.inst.upp_orders_by_merit(t)
    }

    fn register_demand_side(&mut self) {
        let m_pi = self.m_pi;
        for &t in &self.inst.hours {
            let upp = self.upp_orders(t);
            if !upp.is_empty() {
                let pi = self.m.add_variable(
                    "pi",
                    vec![Self::hour_atom(t)],
                    -m_pi,
                    m_pi,
                    VarKind::Continuous,
                    0.0,
                );
                self.cat.pi.insert(t, pi);
                let kappa = self.m.add_variable(
                    "kappa",
                    vec![Self::hour_atom(t)],
                    self.inst.config.kappa_lo,
                    self.inst.config.kappa_hi,
                    VarKind::Continuous,
                    0.0,
                );
                self.cat.kappa.insert(t, kappa);
            }
            for d in &upp {
                let key = (t, d.id.clone());
                let atoms = Self::tk(t, &d.id);
                let must_run = self.inst.is_must_run(d);
                let g_lo = if must_run { 1.0 } else { 0.0 };
                let u_g = self.m.add_variable("ug", atoms.clone(), g_lo, 1.0, VarKind::Binary, 0.0);
                let u_e = self.m.add_variable("ue", atoms.clone(), 0.0, 1.0, VarKind::Binary, 0.0);
                let u_w = self.m.add_variable("uw", atoms.clone(), 0.0, 1.0, VarKind::Binary, 0.0);
                let u_d = self.m.add_variable("ud", atoms.clone(), 0.0, 1.0, VarKind::Binary, 0.0);
                let d_w = self.m.add_variable("dw", atoms.clone(), -INF, INF, VarKind::Continuous, 0.0);
                let d_d = self.m.add_variable("dd", atoms.clone(), 0.0, INF, VarKind::Continuous, 0.0);
                let d_pi =
                    self.m
                        .add_variable("dpi", atoms.clone(), 0.0, INF, VarKind::Continuous, d.price);
                let phi_w =
                    self.m
                        .add_variable("phiw", atoms.clone(), 0.0, m_pi, VarKind::Continuous, 0.0);
                let phi_w_lo =
                    self.m
                        .add_variable("phiwlo", atoms.clone(), 0.0, INF, VarKind::Continuous, 0.0);
                self.cat.u_g.insert(key.clone(), u_g);
                self.cat.u_e.insert(key.clone(), u_e);
                self.cat.u_w.insert(key.clone(), u_w);
                self.cat.u_d.insert(key.clone(), u_d);
                self.cat.d_w.insert(key.clone(), d_w);
                self.cat.d_d.insert(key.clone(), d_d);
                self.cat.d_pi.insert(key.clone(), d_pi);
                self.cat.phi_w.insert(key.clone(), phi_w);
                self.cat.phi_w_lo.insert(key, phi_w_lo);
            }
            for d in self.inst.zonal_orders_at(t) {
                let key = (t, d.id.clone());
                let atoms = Self::tk(t, &d.id);
                let d_zeta =
                    self.m
                        .add_variable("dzeta", atoms.clone(), 0.0, INF, VarKind::Continuous, d.price);
                let phi_zeta =
                    self.m
                        .add_variable("phizeta", atoms.clone(), 0.0, INF, VarKind::Continuous, 0.0);
                self.cat.d_zeta.insert(key.clone(), d_zeta);
                self.cat.phi_zeta.insert(key, phi_zeta);
            }
        }
    }

    fn register_supply_side(&mut self) {
        for &t in &self.inst.hours {
            for s in self.inst.supplies_at(t) {
                let key = (t, s.id.clone());
                let atoms = Self::tk(t, &s.id);
                let sv = self
                    .m
                    .add_variable("s", atoms.clone(), 0.0, INF, VarKind::Continuous, -s.price);
                let phi_s = self
                    .m
                    .add_variable("phis", atoms.clone(), 0.0, INF, VarKind::Continuous, 0.0);
                self.cat.supply.insert(key.clone(), sv);
                self.cat.phi_s.insert(key, phi_s);
            }
        }
    }

    fn register_blocks(&mut self) {
        for b in &self.inst.block_orders {
            let atoms = vec![IndexAtom::Name(b.id.clone())];
            let total_mwh = self.mwh(b.total_quantity());
            let u_b = self.m.add_variable("uB", atoms.clone(), 0.0, 1.0, VarKind::Binary, 0.0);
            let r = self.m.add_variable(
                "r",
                atoms.clone(),
                -INF,
                INF,
                VarKind::Continuous,
                -b.price * total_mwh,
            );
            let m_b = self.m_pi * total_mwh;
            let phi_max =
                self.m
                    .add_variable("phiBmax", atoms.clone(), 0.0, m_b, VarKind::Continuous, 0.0);
            let phi_min =
                self.m
                    .add_variable("phiBmin", atoms.clone(), 0.0, m_b, VarKind::Continuous, 0.0);
            self.cat.u_b.insert(b.id.clone(), u_b);
            self.cat.ratio.insert(b.id.clone(), r);
            self.cat.phi_b_max.insert(b.id.clone(), phi_max);
            self.cat.phi_b_min.insert(b.id.clone(), phi_min);
        }
    }

    fn register_network(&mut self) {
        for &t in &self.inst.hours {
            for z in &self.inst.zones {
                let bounds = if z.upp_member {
                    (-self.m_pi, self.m_pi)
                } else {
                    (-INF, INF)
                };
                let zeta = self.m.add_variable(
                    "zeta",
                    Self::tk(t, &z.id),
                    bounds.0,
                    bounds.1,
                    VarKind::Continuous,
                    0.0,
                );
                self.cat.zeta.insert((t, z.id.clone()), zeta);
            }
            for (a, b) in self.inst.connected_pairs(t) {
                for (i, j) in [(&a, &b), (&b, &a)] {
                    let atoms = Self::tij(t, i, j);
                    let f = self
                        .m
                        .add_variable("f", atoms.clone(), -INF, INF, VarKind::Continuous, 0.0);
                    let delta =
                        self.m
                            .add_variable("delta", atoms.clone(), 0.0, INF, VarKind::Continuous, 0.0);
                    let eta = self
                        .m
                        .add_variable("eta", atoms.clone(), -INF, INF, VarKind::Continuous, 0.0);
                    self.cat.flow.insert((t, i.clone(), j.clone()), f);
                    self.cat.delta_max.insert((t, i.clone(), j.clone()), delta);
                    self.cat.eta.insert((t, i.clone(), j.clone()), eta);
                }
            }
        }
    }

    fn register_expansion(&mut self) -> Result<(), ModelError> {
        let mut widths = BTreeMap::new();
        let totals = self.inst.upp_demand_totals();
        let mut keys: Vec<_> = totals.keys().cloned().collect();
        keys.sort();
        for (t, zone) in keys {
            let total = totals[&(t, zone.clone())];
            let Some(width) = ExpansionSpec::width_for(total.0) else {
                continue;
            };
            if width > MAX_EXPANSION_WIDTH {
                return Err(ModelError::ExpansionOverflow {
                    hour: t,
                    zone,
                    scaled_total: total.0,
                });
            }
            let mut bits = Vec::new();
            for j in 0..=width {
                let atoms = vec![
                    IndexAtom::Num(t),
                    IndexAtom::Name(zone.clone()),
                    IndexAtom::Num(j),
                ];
                bits.push(self.m.add_variable("b", atoms, 0.0, 1.0, VarKind::Binary, 0.0));
            }
            widths.insert((t, zone.clone()), width);
            self.cat.bits.insert((t, zone), bits);
        }
        self.cat.expansion = Some(ExpansionSpec {
            digits: self.inst.config.decimal_digits,
            widths,
        });
        Ok(())
    }

    fn big_m_params(&mut self) {
        let mut m_block = BTreeMap::new();
        for b in &self.inst.block_orders {
            m_block.insert(b.id.clone(), self.m_pi * self.mwh(b.total_quantity()));
        }
        let mut m_flow = BTreeMap::new();
        for &t in &self.inst.hours {
            for (a, b) in self.inst.connected_pairs(t) {
                let fwd = self.mwh(self.inst.capacity(t, &a, &b));
                let rev = self.mwh(self.inst.capacity(t, &b, &a));
                m_flow.insert((t, a.clone(), b.clone()), fwd + rev);
                m_flow.insert((t, b, a), fwd + rev);
            }
        }
        let mut m_demand = BTreeMap::new();
        for d in self.inst.demand_orders.iter().filter(|d| d.pays_upp) {
            m_demand.insert((d.hour, d.id.clone()), self.mwh(d.quantity));
        }
        self.cat.big_m = Some(BigMParams {
            m_pi: self.m_pi,
            m_block,
            m_flow,
            m_demand,
        });
    }

    /// Moneyness definition of the execution flags, the at-the-money flag
    /// anchoring, the merit chain, the executed-quantity recap, block
    /// moneyness, and the at-the-money channel exclusivity.
    fn upper_level(&mut self) -> Result<(), ModelError> {
        let m_pi = self.m_pi;
        let eps = self.inst.config.epsilon;
        for &t in &self.inst.hours {
            let upp = self.upp_orders(t);
            if upp.is_empty() {
                continue;
            }
            let pi = self.cat.pi[&t];
            for d in &upp {
                let key = (t, d.id.clone());
                let atoms = Self::tk(t, &d.id);
                let u_g = self.cat.u_g[&key];
                let u_e = self.cat.u_e[&key];
                let u_w = self.cat.u_w[&key];
                let u_d = self.cat.u_d[&key];
                let d_w = self.cat.d_w[&key];
                let d_d = self.cat.d_d[&key];
                let d_pi = self.cat.d_pi[&key];
                let dmax = self.mwh(d.quantity);

                // price above the uniform price forces execution: m*ug + pi >= P
                self.m.add_constraint(
                    "ugup",
                    atoms.clone(),
                    vec![(u_g, m_pi), (pi, 1.0)],
                    ConstraintSense::Ge,
                    d.price,
                );
                // execution flag only when strictly above: pi + m*ug <= P - eps + m
                self.m.add_constraint(
                    "uglo",
                    atoms.clone(),
                    vec![(pi, 1.0), (u_g, m_pi)],
                    ConstraintSense::Le,
                    d.price - eps + m_pi,
                );

                let y_g_pi = linearize_product(
                    &mut self.m,
                    &YGPI,
                    atoms.clone(),
                    u_g,
                    pi,
                    m_pi,
                    false,
                    &mut self.cat.products,
                )?;
                self.cat.y_g_pi.insert(key.clone(), y_g_pi);
                let y_e_pi = linearize_product(
                    &mut self.m,
                    &YEPI,
                    atoms.clone(),
                    u_e,
                    pi,
                    m_pi,
                    false,
                    &mut self.cat.products,
                )?;
                self.cat.y_e_pi.insert(key.clone(), y_e_pi);
                let zeta = self.cat.zeta[&(t, d.zone.clone())];
                let y_g_zeta = linearize_product(
                    &mut self.m,
                    &YGZETA,
                    atoms.clone(),
                    u_g,
                    zeta,
                    m_pi,
                    false,
                    &mut self.cat.products,
                )?;
                self.cat.y_g_zeta.insert(key.clone(), y_g_zeta);
                let phi_w = self.cat.phi_w[&key];
                let y_w_phi = linearize_product(
                    &mut self.m,
                    &YWPHI,
                    atoms.clone(),
                    u_w,
                    phi_w,
                    m_pi,
                    true,
                    &mut self.cat.products,
                )?;
                self.cat.y_w_phi.insert(key.clone(), y_w_phi);

                // the at-the-money flag pins the price: P*ue = ue*pi
                self.m.add_constraint(
                    "uean",
                    atoms.clone(),
                    vec![(u_e, d.price), (y_e_pi, -1.0)],
                    ConstraintSense::Eq,
                    0.0,
                );
                // executed quantity recap
                self.m.add_constraint(
                    "dpidef",
                    atoms.clone(),
                    vec![(d_pi, 1.0), (u_g, -dmax), (d_w, -1.0), (d_d, -1.0)],
                    ConstraintSense::Eq,
                    0.0,
                );
                // one partial-execution channel, and only when at the money
                self.m.add_constraint(
                    "atmone",
                    atoms.clone(),
                    vec![(u_w, 1.0), (u_d, 1.0), (u_e, -1.0)],
                    ConstraintSense::Le,
                    0.0,
                );
                // dispatched quantity cap
                self.m.add_constraint(
                    "ddub",
                    atoms.clone(),
                    vec![(d_d, 1.0), (u_d, -dmax)],
                    ConstraintSense::Le,
                    0.0,
                );
            }
            // merit chain over consecutive orders
            for pair in upp.windows(2) {
                let hi = self.cat.u_g[&(t, pair[0].id.clone())];
                let lo = self.cat.u_g[&(t, pair[1].id.clone())];
                self.m.add_constraint(
                    "chain",
                    Self::tk(t, &pair[1].id),
                    vec![(hi, 1.0), (lo, -1.0)],
                    ConstraintSense::Ge,
                    0.0,
                );
            }
        }
        // block moneyness: accepting requires a nonnegative surplus
        for b in &self.inst.block_orders {
            let m_b = self.cat.big_m.as_ref().unwrap().m_block[&b.id];
            let u_b = self.cat.u_b[&b.id];
            let mut terms = vec![(u_b, -m_b)];
            let mut rhs = -m_b;
            for (&t, &q) in &b.profile {
                let zeta = self.cat.zeta[&(t, b.zone.clone())];
                let q_mwh = self.mwh(q);
                terms.push((zeta, q_mwh));
                rhs += b.price * q_mwh;
            }
            self.m.add_constraint(
                "bmoney",
                vec![IndexAtom::Name(b.id.clone())],
                terms,
                ConstraintSense::Ge,
                rhs,
            );
            let atoms = vec![IndexAtom::Name(b.id.clone())];
            let y_max = linearize_product(
                &mut self.m,
                &YBPHIMAX,
                atoms.clone(),
                u_b,
                self.cat.phi_b_max[&b.id],
                m_b,
                true,
                &mut self.cat.products,
            )?;
            self.cat.y_b_phi_max.insert(b.id.clone(), y_max);
            let y_min = linearize_product(
                &mut self.m,
                &YBPHIMIN,
                atoms,
                u_b,
                self.cat.phi_b_min[&b.id],
                m_b,
                true,
                &mut self.cat.products,
            )?;
            self.cat.y_b_phi_min.insert(b.id.clone(), y_min);
        }
        Ok(())
    }

    /// Quantity bounds, flow bounds and pairing, acceptance-ratio bounds, and
    /// the zonal power balances of the welfare-maximization dispatch.
    fn lower_level_primal(&mut self) {
        for &t in &self.inst.hours {
            for d in self.upp_orders(t) {
                let key = (t, d.id.clone());
                let atoms = Self::tk(t, &d.id);
                let dmax = self.mwh(d.quantity);
                let d_w = self.cat.d_w[&key];
                let u_w = self.cat.u_w[&key];
                self.m.add_constraint(
                    "dwub",
                    atoms.clone(),
                    vec![(d_w, 1.0), (u_w, -dmax)],
                    ConstraintSense::Le,
                    0.0,
                );
                self.m
                    .add_constraint("dwlo", atoms, vec![(d_w, -1.0)], ConstraintSense::Le, 0.0);
            }
            for d in self.inst.zonal_orders_at(t) {
                let d_zeta = self.cat.d_zeta[&(t, d.id.clone())];
                self.m.add_constraint(
                    "dzub",
                    Self::tk(t, &d.id),
                    vec![(d_zeta, 1.0)],
                    ConstraintSense::Le,
                    self.mwh(d.quantity),
                );
            }
            for s in self.inst.supplies_at(t) {
                let sv = self.cat.supply[&(t, s.id.clone())];
                self.m.add_constraint(
                    "sub",
                    Self::tk(t, &s.id),
                    vec![(sv, 1.0)],
                    ConstraintSense::Le,
                    self.mwh(s.quantity),
                );
            }
            for (a, b) in self.inst.connected_pairs(t) {
                for (i, j) in [(&a, &b), (&b, &a)] {
                    let f = self.cat.flow[&(t, i.clone(), j.clone())];
                    self.m.add_constraint(
                        "fcap",
                        Self::tij(t, i, j),
                        vec![(f, 1.0)],
                        ConstraintSense::Le,
                        self.mwh(self.inst.capacity(t, i, j)),
                    );
                }
                let f_ab = self.cat.flow[&(t, a.clone(), b.clone())];
                let f_ba = self.cat.flow[&(t, b.clone(), a.clone())];
                self.m.add_constraint(
                    "fpair",
                    Self::tij(t, &a, &b),
                    vec![(f_ab, 1.0), (f_ba, 1.0)],
                    ConstraintSense::Eq,
                    0.0,
                );
            }
        }
        for b in &self.inst.block_orders {
            let atoms = vec![IndexAtom::Name(b.id.clone())];
            let r = self.cat.ratio[&b.id];
            let u_b = self.cat.u_b[&b.id];
            self.m.add_constraint(
                "rub",
                atoms.clone(),
                vec![(r, 1.0), (u_b, -1.0)],
                ConstraintSense::Le,
                0.0,
            );
            self.m.add_constraint(
                "rlb",
                atoms,
                vec![(r, -1.0), (u_b, b.min_acceptance_ratio)],
                ConstraintSense::Le,
                0.0,
            );
        }
        // zonal power balance
        for &t in &self.inst.hours {
            let mut zones: Vec<&str> = self.inst.zones.iter().map(|z| z.id.as_str()).collect();
            zones.sort_unstable();
            for zone in zones {
                let mut terms: Vec<(VarId, f64)> = Vec::new();
                for d in self.inst.zonal_orders_at(t).filter(|d| d.zone == zone) {
                    terms.push((self.cat.d_zeta[&(t, d.id.clone())], 1.0));
                }
                for d in self.upp_orders(t).iter().filter(|d| d.zone == zone) {
                    let key = (t, d.id.clone());
                    terms.push((self.cat.d_w[&key], 1.0));
                    terms.push((self.cat.u_g[&key], self.mwh(d.quantity)));
                    terms.push((self.cat.d_d[&key], 1.0));
                }
                for s in self.inst.supplies_at(t).filter(|s| s.zone == zone) {
                    terms.push((self.cat.supply[&(t, s.id.clone())], -1.0));
                }
                for ((ft, fi, _), &f) in self.cat.flow.iter() {
                    if *ft == t && fi == zone {
                        terms.push((f, 1.0));
                    }
                }
                for b in self.inst.blocks_in_zone(zone) {
                    if let Some(&q) = b.profile.get(&t) {
                        terms.push((self.cat.ratio[&b.id], -self.mwh(q)));
                    }
                }
                if terms.is_empty() {
                    continue;
                }
                self.m.add_constraint(
                    "bal",
                    Self::tk(t, zone),
                    terms,
                    ConstraintSense::Eq,
                    0.0,
                );
            }
        }
    }

    /// Constraints of the dual of the dispatch program.
    fn dual_feasibility(&mut self) {
        for &t in &self.inst.hours {
            for d in self.upp_orders(t) {
                let key = (t, d.id.clone());
                let zeta = self.cat.zeta[&(t, d.zone.clone())];
                self.m.add_constraint(
                    "dfdw",
                    Self::tk(t, &d.id),
                    vec![
                        (self.cat.phi_w[&key], 1.0),
                        (self.cat.phi_w_lo[&key], -1.0),
                        (zeta, 1.0),
                    ],
                    ConstraintSense::Eq,
                    d.price,
                );
            }
            for d in self.inst.zonal_orders_at(t) {
                let key = (t, d.id.clone());
                let zeta = self.cat.zeta[&(t, d.zone.clone())];
                self.m.add_constraint(
                    "dfdz",
                    Self::tk(t, &d.id),
                    vec![(self.cat.phi_zeta[&key], 1.0), (zeta, 1.0)],
                    ConstraintSense::Ge,
                    d.price,
                );
            }
            for s in self.inst.supplies_at(t) {
                let key = (t, s.id.clone());
                let zeta = self.cat.zeta[&(t, s.zone.clone())];
                self.m.add_constraint(
                    "dfs",
                    Self::tk(t, &s.id),
                    vec![(self.cat.phi_s[&key], 1.0), (zeta, -1.0)],
                    ConstraintSense::Ge,
                    -s.price,
                );
            }
            for (a, b) in self.inst.connected_pairs(t) {
                for (i, j) in [(&a, &b), (&b, &a)] {
                    let delta = self.cat.delta_max[&(t, i.clone(), j.clone())];
                    let eta_ij = self.cat.eta[&(t, i.clone(), j.clone())];
                    let eta_ji = self.cat.eta[&(t, j.clone(), i.clone())];
                    let zeta = self.cat.zeta[&(t, i.clone())];
                    self.m.add_constraint(
                        "dff",
                        Self::tij(t, i, j),
                        vec![(delta, 1.0), (eta_ij, 1.0), (eta_ji, 1.0), (zeta, 1.0)],
                        ConstraintSense::Eq,
                        0.0,
                    );
                }
            }
        }
        for b in &self.inst.block_orders {
            let mut terms = vec![
                (self.cat.phi_b_max[&b.id], 1.0),
                (self.cat.phi_b_min[&b.id], -1.0),
            ];
            let mut rhs = 0.0;
            for (&t, &q) in &b.profile {
                let q_mwh = self.mwh(q);
                terms.push((self.cat.zeta[&(t, b.zone.clone())], -q_mwh));
                rhs -= b.price * q_mwh;
            }
            self.m.add_constraint(
                "dfr",
                vec![IndexAtom::Name(b.id.clone())],
                terms,
                ConstraintSense::Eq,
                rhs,
            );
        }
    }

    /// Equality of the dispatch objective and its dual objective, with the
    /// price-times-quantity products replaced by their auxiliaries.
    fn strong_duality(&mut self) {
        let mut terms: Vec<(VarId, f64)> = Vec::new();
        // primal objective
        for &t in &self.inst.hours {
            for d in self.inst.zonal_orders_at(t) {
                terms.push((self.cat.d_zeta[&(t, d.id.clone())], d.price));
            }
            for d in self.upp_orders(t) {
                terms.push((self.cat.d_w[&(t, d.id.clone())], d.price));
            }
            for s in self.inst.supplies_at(t) {
                terms.push((self.cat.supply[&(t, s.id.clone())], -s.price));
            }
        }
        for b in &self.inst.block_orders {
            let total = self.mwh(b.total_quantity());
            terms.push((self.cat.ratio[&b.id], -b.price * total));
        }
        // minus dual objective
        for &t in &self.inst.hours {
            for d in self.upp_orders(t) {
                let key = (t, d.id.clone());
                let dmax = self.mwh(d.quantity);
                terms.push((self.cat.y_w_phi[&key], -dmax));
                terms.push((self.cat.y_g_zeta[&key], dmax));
            }
            for d in self.inst.zonal_orders_at(t) {
                terms.push((self.cat.phi_zeta[&(t, d.id.clone())], -self.mwh(d.quantity)));
            }
            for s in self.inst.supplies_at(t) {
                terms.push((self.cat.phi_s[&(t, s.id.clone())], -self.mwh(s.quantity)));
            }
            for (a, b) in self.inst.connected_pairs(t) {
                for (i, j) in [(&a, &b), (&b, &a)] {
                    let cap = self.mwh(self.inst.capacity(t, i, j));
                    if cap != 0.0 {
                        terms.push((self.cat.delta_max[&(t, i.clone(), j.clone())], -cap));
                    }
                }
            }
        }
        let scale_inv = 1.0 / self.scale;
        for ys in self.cat.y_b_zeta.values() {
            for (j, &y) in ys.iter().enumerate() {
                terms.push((y, scale_inv * (1u64 << j) as f64));
            }
        }
        for b in &self.inst.block_orders {
            terms.push((self.cat.y_b_phi_max[&b.id], -1.0));
            terms.push((self.cat.y_b_phi_min[&b.id], b.min_acceptance_ratio));
        }
        self.m
            .add_constraint("sdual", vec![], terms, ConstraintSense::Eq, 0.0);
    }

    /// The exact uniform-purchase-price definition per hour, plus the binary
    /// expansion tying the bit variables to the dispatched totals.
    fn upp_definition(&mut self) -> Result<(), ModelError> {
        let m_pi = self.m_pi;
        // bit auxiliaries first: y = b * zeta
        let keys: Vec<(u32, String)> = self.cat.bits.keys().cloned().collect();
        for (t, zone) in keys {
            let bits = self.cat.bits[&(t, zone.clone())].clone();
            let zeta = self.cat.zeta[&(t, zone.clone())];
            let mut ys = Vec::new();
            for (j, &bit) in bits.iter().enumerate() {
                let atoms = vec![
                    IndexAtom::Num(t),
                    IndexAtom::Name(zone.clone()),
                    IndexAtom::Num(j as u32),
                ];
                let y = linearize_product(
                    &mut self.m,
                    &YBZETA,
                    atoms,
                    bit,
                    zeta,
                    m_pi,
                    false,
                    &mut self.cat.products,
                )?;
                ys.push(y);
            }
            self.cat.y_b_zeta.insert((t, zone), ys);
        }

        for &t in &self.inst.hours {
            let upp = self.upp_orders(t);
            if upp.is_empty() {
                continue;
            }
            // expansion rows per UPP zone with demand
            let mut zones: Vec<String> = self
                .cat
                .bits
                .keys()
                .filter(|(bt, _)| *bt == t)
                .map(|(_, z)| z.clone())
                .collect();
            zones.sort();
            for zone in zones {
                let bits = self.cat.bits[&(t, zone.clone())].clone();
                let mut terms: Vec<(VarId, f64)> = bits
                    .iter()
                    .enumerate()
                    .map(|(j, &b)| (b, (1u64 << j) as f64))
                    .collect();
                for d in upp.iter().filter(|d| d.zone == zone) {
                    terms.push((self.cat.d_d[&(t, d.id.clone())], -self.scale));
                }
                self.m.add_constraint(
                    "bexp",
                    Self::tk(t, &zone),
                    terms,
                    ConstraintSense::Eq,
                    0.0,
                );
            }

            // the price definition row
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            for d in &upp {
                let key = (t, d.id.clone());
                let dmax = self.mwh(d.quantity);
                terms.push((self.cat.y_g_pi[&key], dmax));
                terms.push((self.cat.d_d[&key], d.price));
                terms.push((self.cat.y_g_zeta[&key], -dmax));
                terms.push((self.cat.y_w_phi[&key], dmax));
            }
            let scale_inv = 1.0 / self.scale;
            let zone_bits: Vec<(u32, String)> = self
                .cat
                .y_b_zeta
                .keys()
                .filter(|(bt, _)| *bt == t)
                .cloned()
                .collect();
            for key in zone_bits {
                for (j, &y) in self.cat.y_b_zeta[&key].iter().enumerate() {
                    terms.push((y, -scale_inv * (1u64 << j) as f64));
                }
            }
            terms.push((self.cat.kappa[&t], -1.0));
            self.m
                .add_constraint("upp", vec![Self::hour_atom(t)], terms, ConstraintSense::Eq, 0.0);
        }
        Ok(())
    }

    /// Redundant cut: an at-the-money flag requires the nearest
    /// strictly-higher-priced order executed and this order not executed.
    fn search_reduction(&mut self) {
        for &t in &self.inst.hours {
            let upp = self.upp_orders(t);
            let mut higher: Option<usize> = None;
            for pos in 0..upp.len() {
                if pos > 0 && upp[pos - 1].price > upp[pos].price {
                    higher = Some(pos - 1);
                }
                let Some(h) = higher else { continue };
                let k = upp[pos];
                let u_e = self.cat.u_e[&(t, k.id.clone())];
                let u_g_k = self.cat.u_g[&(t, k.id.clone())];
                let u_g_h = self.cat.u_g[&(t, upp[h].id.clone())];
                self.m.add_constraint(
                    "red",
                    Self::tk(t, &k.id),
                    vec![(u_e, 1.0), (u_g_k, 1.0), (u_g_h, -1.0)],
                    ConstraintSense::Le,
                    0.0,
                );
            }
        }
    }

    fn u_f(&mut self, mode: MarketSplitMode, t: u32, i: &str, j: &str) -> VarId {
        if let Some(&v) = self.cat.u_f.get(&(t, i.to_string(), j.to_string())) {
            return v;
        }
        let atoms = Self::tij(t, i, j);
        let v = self
            .m
            .add_variable("uf", atoms.clone(), 0.0, 1.0, VarKind::Binary, 0.0);
        // congestion detection is a secondary concern: branch on it last
        self.m.var_mut(v).branch_priority = Some(-1);
        let f = self.cat.flow[&(t, i.to_string(), j.to_string())];
        let cap = self.mwh(self.inst.capacity(t, i, j));
        let m_f = self.cat.big_m.as_ref().unwrap().m_flow[&(t, i.to_string(), j.to_string())];
        match mode {
            MarketSplitMode::Strict => {
                self.m.add_constraint(
                    "ufhi",
                    atoms.clone(),
                    vec![(f, 1.0), (v, -1.0)],
                    ConstraintSense::Le,
                    cap - self.inst.config.epsilon_flow,
                );
                self.m.add_constraint(
                    "uflo",
                    atoms,
                    vec![(f, 1.0), (v, -m_f)],
                    ConstraintSense::Ge,
                    cap - m_f,
                );
            }
            MarketSplitMode::Loose => {
                let rev = self.mwh(self.inst.capacity(t, j, i));
                self.m.add_constraint(
                    "ufloose",
                    atoms,
                    vec![(v, m_f), (f, -1.0)],
                    ConstraintSense::Le,
                    rev,
                );
            }
            MarketSplitMode::Off => unreachable!(),
        }
        self.cat.u_f.insert((t, i.to_string(), j.to_string()), v);
        v
    }

    /// Merit enforcement for equal-priced at-the-money orders, deactivated
    /// under market split (saturated direct link).
    fn market_split(&mut self, mode: MarketSplitMode) {
        for &t in &self.inst.hours {
            let upp = self.upp_orders(t);
            for hi_pos in 0..upp.len() {
                for ki_pos in hi_pos + 1..upp.len() {
                    let h = upp[hi_pos];
                    let k = upp[ki_pos];
                    if h.price != k.price {
                        continue;
                    }
                    let u_e_k = self.cat.u_e[&(t, k.id.clone())];
                    let d_w_h = self.cat.d_w[&(t, h.id.clone())];
                    let d_d_h = self.cat.d_d[&(t, h.id.clone())];
                    let dmax_h = self.mwh(h.quantity);
                    if h.zone == k.zone {
                        self.m.add_constraint(
                            "msintra",
                            vec![
                                IndexAtom::Num(t),
                                IndexAtom::Name(h.id.clone()),
                                IndexAtom::Name(k.id.clone()),
                            ],
                            vec![(d_w_h, 1.0), (d_d_h, 1.0), (u_e_k, -dmax_h)],
                            ConstraintSense::Ge,
                            0.0,
                        );
                    } else {
                        let (i, j) = (h.zone.clone(), k.zone.clone());
                        if self.inst.capacity(t, &i, &j).0 <= 0 {
                            continue;
                        }
                        let uf_ij = self.u_f(mode, t, &i, &j);
                        let uf_ji = self.u_f(mode, t, &j, &i);
                        self.m.add_constraint(
                            "msinter",
                            vec![
                                IndexAtom::Num(t),
                                IndexAtom::Name(h.id.clone()),
                                IndexAtom::Name(k.id.clone()),
                            ],
                            vec![
                                (d_w_h, 1.0),
                                (d_d_h, 1.0),
                                (u_e_k, -dmax_h),
                                (uf_ij, dmax_h),
                                (uf_ji, dmax_h),
                            ],
                            ConstraintSense::Ge,
                            0.0,
                        );
                    }
                }
            }
        }
    }
}
