//! Solver-neutral MILP model and its construction from a market instance.
//!
//! The built model is the complete single-level reformulation of the clearing
//! problem: primal feasibility of the welfare-maximization dispatch, dual
//! feasibility, the strong-duality coupling row, the uniform-purchase-price
//! definition with its binary expansion, every product linearization, and the
//! optional market-split machinery.

mod build;

pub use build::build_model;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;

/// Index of a variable inside one [`MilpModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// One atom of a structured index, e.g. the hour or an order id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum IndexAtom {
    Num(u32),
    Name(String),
}

impl fmt::Display for IndexAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexAtom::Num(n) => write!(f, "{n}"),
            IndexAtom::Name(s) => write!(f, "{s}"),
        }
    }
}

/// Canonical sort key: family tag first, then the structured index. The
/// emitted file orders rows and columns by this key, which makes the
/// serialization deterministic and greppable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SortKey {
    pub family: &'static str,
    pub atoms: Vec<IndexAtom>,
}

impl SortKey {
    fn render(&self) -> String {
        if self.atoms.is_empty() {
            self.family.to_string()
        } else {
            let atoms: Vec<String> = self.atoms.iter().map(|a| a.to_string()).collect();
            format!("{}[{}]", self.family, atoms.join(","))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub key: SortKey,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
    pub objective: f64,
    /// Branching hint; larger means branch earlier. `None` leaves the
    /// backend default. Backends without priority support drop it.
    pub branch_priority: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub key: SortKey,
    pub terms: Vec<(VarId, f64)>,
    pub sense: ConstraintSense,
    pub rhs: f64,
}

/// A linear mixed-integer model: variables with bounds and integrality,
/// linear constraints, and a linear objective.
#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    pub maximize: bool,
    vars: Vec<Variable>,
    cons: Vec<Constraint>,
}

impl MilpModel {
    pub fn new(maximize: bool) -> Self {
        MilpModel {
            maximize,
            ..Default::default()
        }
    }

    pub fn add_variable(
        &mut self,
        family: &'static str,
        atoms: Vec<IndexAtom>,
        lower: f64,
        upper: f64,
        kind: VarKind,
        objective: f64,
    ) -> VarId {
        let key = SortKey { family, atoms };
        let id = VarId(self.vars.len());
        self.vars.push(Variable {
            name: key.render(),
            key,
            lower,
            upper,
            kind,
            objective,
            branch_priority: None,
        });
        id
    }

    pub fn add_constraint(
        &mut self,
        family: &'static str,
        atoms: Vec<IndexAtom>,
        terms: Vec<(VarId, f64)>,
        sense: ConstraintSense,
        rhs: f64,
    ) {
        let key = SortKey { family, atoms };
        debug_assert!(
            terms.iter().all(|(v, _)| v.0 < self.vars.len()),
            "constraint references unregistered variable"
        );
        self.cons.push(Constraint {
            name: key.render(),
            key,
            terms,
            sense,
            rhs,
        });
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.cons
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn var_mut(&mut self, id: VarId) -> &mut Variable {
        &mut self.vars[id.0]
    }

    /// Variable indices in canonical (family, index) order.
    pub fn canonical_var_order(&self) -> Vec<VarId> {
        let mut order: Vec<VarId> = (0..self.vars.len()).map(VarId).collect();
        order.sort_by(|a, b| self.vars[a.0].key.cmp(&self.vars[b.0].key));
        order
    }

    /// Constraint indices in canonical (family, index) order.
    pub fn canonical_con_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.cons.len()).collect();
        order.sort_by(|&a, &b| self.cons[a].key.cmp(&self.cons[b].key));
        order
    }

    /// Count of variables per family tag.
    pub fn var_census(&self) -> BTreeMap<&'static str, usize> {
        let mut census = BTreeMap::new();
        for v in &self.vars {
            *census.entry(v.key.family).or_insert(0) += 1;
        }
        census
    }

    pub fn con_census(&self) -> BTreeMap<&'static str, usize> {
        let mut census = BTreeMap::new();
        for con in &self.cons {
            *census.entry(con.key.family).or_insert(0) += 1;
        }
        census
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        let raw: f64 = self
            .vars
            .iter()
            .zip(values)
            .map(|(v, x)| v.objective * x)
            .sum();
        raw
    }

    /// Largest absolute violation over all rows, bounds and integrality
    /// requirements, with the offending name. Used to re-verify backend
    /// solutions instead of trusting their reported feasibility.
    pub fn max_violation(&self, values: &[f64]) -> (f64, String) {
        assert_eq!(values.len(), self.vars.len(), "value vector length mismatch");
        let mut worst = (0.0f64, String::from("-"));
        let mut bump = |viol: f64, name: &str| {
            if viol > worst.0 {
                worst = (viol, name.to_string());
            }
        };
        for (v, &x) in self.vars.iter().zip(values) {
            bump(v.lower - x, &v.name);
            bump(x - v.upper, &v.name);
            if v.kind == VarKind::Binary {
                bump((x - x.round()).abs(), &v.name);
            }
        }
        for con in &self.cons {
            let lhs: f64 = con.terms.iter().map(|&(v, c)| c * values[v.0]).sum();
            let viol = match con.sense {
                ConstraintSense::Le => lhs - con.rhs,
                ConstraintSense::Ge => con.rhs - lhs,
                ConstraintSense::Eq => (lhs - con.rhs).abs(),
            };
            bump(viol, &con.name);
        }
        worst
    }

    /// Map from variable name to index, for decoding keyed solutions.
    pub fn name_index(&self) -> HashMap<&str, VarId> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), VarId(i)))
            .collect()
    }
}

/// Options controlling which optional constraint groups are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MarketSplitMode {
    #[default]
    Off,
    Strict,
    Loose,
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub market_split: MarketSplitMode,
    /// Adds the redundant cut tying each at-the-money flag to the adjacent
    /// higher-priced order's execution flag, shrinking the binary search
    /// space.
    pub search_reduction: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            market_split: MarketSplitMode::Off,
            search_reduction: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("instance has no orders")]
    EmptyInstance,
    #[error("binary expansion overflow at hour {hour} zone {zone:?}: scaled total {scaled_total}")]
    ExpansionOverflow {
        hour: u32,
        zone: String,
        scaled_total: i64,
    },
    #[error("nonpositive big-M {value} for {context}")]
    InvalidBigM { context: String, value: f64 },
    #[error(transparent)]
    Instance(#[from] crate::orderbook::OrderbookError),
}

/// Big-M parameters of the linearizations, all derived from the order book.
#[derive(Debug, Clone)]
pub struct BigMParams {
    /// Price-scale constant: the market price cap.
    pub m_pi: f64,
    /// Per block: `m_pi` times the total profile quantity.
    pub m_block: BTreeMap<String, f64>,
    /// Per (hour, from, to): forward plus reverse capacity.
    pub m_flow: BTreeMap<(u32, String, String), f64>,
    /// Per (hour, order): the order's maximum quantity.
    pub m_demand: BTreeMap<(u32, String), f64>,
}

/// Width of the binary expansion per (hour, UPP zone): bits `0..=width` can
/// represent the largest possible scaled dispatched total.
#[derive(Debug, Clone)]
pub struct ExpansionSpec {
    pub digits: u8,
    pub widths: BTreeMap<(u32, String), u32>,
}

impl ExpansionSpec {
    /// Smallest J with `2^(J+1) - 1 >= scaled_total`; `None` when no bits are
    /// needed because the total is zero.
    pub fn width_for(scaled_total: i64) -> Option<u32> {
        if scaled_total <= 0 {
            return None;
        }
        Some(64 - (scaled_total as u64).leading_zeros() - 1)
    }
}

/// Audit record of one product linearization, kept for bound certification.
#[derive(Debug, Clone)]
pub struct ProductAudit {
    pub binary: VarId,
    pub factor: VarId,
    pub product: VarId,
    pub big_m: f64,
    /// One-sided form for nonnegative factors.
    pub nonneg: bool,
}

/// Registries of every model variable, keyed the way the market data is.
#[derive(Debug, Clone, Default)]
pub struct VariableCatalog {
    // continuous primal
    pub d_zeta: BTreeMap<(u32, String), VarId>,
    pub d_w: BTreeMap<(u32, String), VarId>,
    pub d_d: BTreeMap<(u32, String), VarId>,
    pub d_pi: BTreeMap<(u32, String), VarId>,
    pub supply: BTreeMap<(u32, String), VarId>,
    pub ratio: BTreeMap<String, VarId>,
    pub flow: BTreeMap<(u32, String, String), VarId>,
    pub pi: BTreeMap<u32, VarId>,
    pub kappa: BTreeMap<u32, VarId>,
    // binaries
    pub u_g: BTreeMap<(u32, String), VarId>,
    pub u_e: BTreeMap<(u32, String), VarId>,
    pub u_w: BTreeMap<(u32, String), VarId>,
    pub u_d: BTreeMap<(u32, String), VarId>,
    pub u_b: BTreeMap<String, VarId>,
    pub bits: BTreeMap<(u32, String), Vec<VarId>>,
    pub u_f: BTreeMap<(u32, String, String), VarId>,
    // duals as variables
    pub phi_w: BTreeMap<(u32, String), VarId>,
    pub phi_w_lo: BTreeMap<(u32, String), VarId>,
    pub phi_zeta: BTreeMap<(u32, String), VarId>,
    pub phi_s: BTreeMap<(u32, String), VarId>,
    pub delta_max: BTreeMap<(u32, String, String), VarId>,
    pub eta: BTreeMap<(u32, String, String), VarId>,
    pub phi_b_max: BTreeMap<String, VarId>,
    pub phi_b_min: BTreeMap<String, VarId>,
    pub zeta: BTreeMap<(u32, String), VarId>,
    // auxiliaries
    pub y_g_pi: BTreeMap<(u32, String), VarId>,
    pub y_g_zeta: BTreeMap<(u32, String), VarId>,
    pub y_e_pi: BTreeMap<(u32, String), VarId>,
    pub y_w_phi: BTreeMap<(u32, String), VarId>,
    pub y_b_phi_max: BTreeMap<String, VarId>,
    pub y_b_phi_min: BTreeMap<String, VarId>,
    pub y_b_zeta: BTreeMap<(u32, String), Vec<VarId>>,
    // audit trail
    pub products: Vec<ProductAudit>,
    pub big_m: Option<BigMParams>,
    pub expansion: Option<ExpansionSpec>,
}

/// A built model together with its catalog.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: MilpModel,
    pub catalog: VariableCatalog,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_width_matches_definition() {
        // 5 MWh at c = 3 scales to 5000; 2^13 - 1 = 8191 >= 5000 > 2^12 - 1.
        assert_eq!(ExpansionSpec::width_for(5000), Some(12));
        assert_eq!(ExpansionSpec::width_for(1), Some(0));
        assert_eq!(ExpansionSpec::width_for(2), Some(1));
        assert_eq!(ExpansionSpec::width_for(3), Some(1));
        assert_eq!(ExpansionSpec::width_for(4), Some(2));
        assert_eq!(ExpansionSpec::width_for(0), None);
        for n in 1..2000i64 {
            let j = ExpansionSpec::width_for(n).unwrap();
            assert!((1i64 << (j + 1)) - 1 >= n);
            if j > 0 {
                assert!((1i64 << j) - 1 < n);
            }
        }
    }

    #[test]
    fn canonical_order_sorts_by_family_then_index() {
        let mut m = MilpModel::new(true);
        let b = m.add_variable(
            "zeta",
            vec![IndexAtom::Num(1), IndexAtom::Name("a".into())],
            0.0,
            1.0,
            VarKind::Continuous,
            0.0,
        );
        let a = m.add_variable("pi", vec![IndexAtom::Num(2)], 0.0, 1.0, VarKind::Continuous, 0.0);
        let c = m.add_variable("pi", vec![IndexAtom::Num(1)], 0.0, 1.0, VarKind::Continuous, 0.0);
        assert_eq!(m.canonical_var_order(), vec![c, a, b]);
        assert_eq!(m.var(b).name, "zeta[1,a]");
    }
}
