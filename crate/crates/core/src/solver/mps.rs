//! MPS writer.
//!
//! Rows and columns appear in the model's canonical order (family tag, then
//! structured index), numbers carry at most 15 significant digits, and the
//! output is a pure function of the model, so emitting twice gives identical
//! bytes.
//!
//! The free variant keeps the model's own names (`ug[9,k1]`, `zeta[9,north]`,
//! ...), so constraints stay greppable in the emitted file. The fixed variant
//! renames columns to `x<n>` and rows to `c<n>` to honor the 8-character
//! field limit of the fixed layout; the returned name tables map positions
//! back to model names.

use crate::model::{ConstraintSense, MilpModel, VarId, VarKind};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MpsVariant {
    #[default]
    Free,
    Fixed,
}

/// An emitted model plus the name tables needed to translate a solution file
/// back to model names.
#[derive(Debug, Clone)]
pub struct EmittedModel {
    pub text: String,
    /// Model variable names, in emitted column order.
    pub model_col_names: Vec<String>,
    /// Column names as they appear in the file, same order.
    pub file_col_names: Vec<String>,
    pub model_row_names: Vec<String>,
    pub file_row_names: Vec<String>,
    pub var_order: Vec<VarId>,
}

impl EmittedModel {
    /// File column name -> model column name.
    pub fn col_to_model(&self, file_name: &str) -> Option<&str> {
        self.file_col_names
            .iter()
            .position(|n| n == file_name)
            .map(|i| self.model_col_names[i].as_str())
    }
}

/// At most 15 significant digits, integers written plainly.
fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.fract() == 0.0 && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    format!("{:.14e}", v)
}

pub fn emit_model(model: &MilpModel, variant: MpsVariant) -> EmittedModel {
    let var_order = model.canonical_var_order();
    let con_order = model.canonical_con_order();
    let cons = model.constraints();

    let model_col_names: Vec<String> = var_order
        .iter()
        .map(|&v| model.var(v).name.clone())
        .collect();
    let model_row_names: Vec<String> = con_order.iter().map(|&c| cons[c].name.clone()).collect();
    let (file_col_names, file_row_names) = match variant {
        MpsVariant::Free => (model_col_names.clone(), model_row_names.clone()),
        MpsVariant::Fixed => (
            (0..var_order.len()).map(|i| format!("x{i:06}")).collect(),
            (0..con_order.len()).map(|i| format!("c{i:06}")).collect(),
        ),
    };

    // position of each variable in the emitted order
    let mut pos_of = vec![usize::MAX; model.variables().len()];
    for (pos, &v) in var_order.iter().enumerate() {
        pos_of[v.0] = pos;
    }
    // per-column entries (row position, coefficient), rows in canonical order
    let mut col_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); var_order.len()];
    for (row_pos, &ci) in con_order.iter().enumerate() {
        for &(v, coef) in &cons[ci].terms {
            if coef != 0.0 {
                col_entries[pos_of[v.0]].push((row_pos, coef));
            }
        }
    }

    let field = |s: &str| -> String {
        match variant {
            MpsVariant::Free => s.to_string(),
            MpsVariant::Fixed => format!("{s:<10}"),
        }
    };
    let mut out = String::new();
    out.push_str("NAME dam\n");
    out.push_str("OBJSENSE\n");
    out.push_str(if model.maximize { "    MAX\n" } else { "    MIN\n" });
    out.push_str("ROWS\n");
    out.push_str(" N  obj\n");
    for (row_pos, &ci) in con_order.iter().enumerate() {
        let tag = match cons[ci].sense {
            ConstraintSense::Le => 'L',
            ConstraintSense::Ge => 'G',
            ConstraintSense::Eq => 'E',
        };
        out.push_str(&format!(" {}  {}\n", tag, file_row_names[row_pos]));
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0usize;
    for (pos, &vid) in var_order.iter().enumerate() {
        let var = model.var(vid);
        let is_int = var.kind == VarKind::Binary;
        if is_int != in_int {
            let kind = if is_int { "'INTORG'" } else { "'INTEND'" };
            out.push_str(&format!("    MRK{marker:04}  'MARKER'  {kind}\n"));
            marker += 1;
            in_int = is_int;
        }
        let name = &file_col_names[pos];
        if var.objective != 0.0 || col_entries[pos].is_empty() {
            out.push_str(&format!(
                "    {}  {}  {}\n",
                field(name),
                field("obj"),
                fmt_num(var.objective)
            ));
        }
        for &(row_pos, coef) in &col_entries[pos] {
            out.push_str(&format!(
                "    {}  {}  {}\n",
                field(name),
                field(&file_row_names[row_pos]),
                fmt_num(coef)
            ));
        }
    }
    if in_int {
        out.push_str(&format!("    MRK{marker:04}  'MARKER'  'INTEND'\n"));
    }

    out.push_str("RHS\n");
    for (row_pos, &ci) in con_order.iter().enumerate() {
        if cons[ci].rhs != 0.0 {
            out.push_str(&format!(
                "    RHS  {}  {}\n",
                field(&file_row_names[row_pos]),
                fmt_num(cons[ci].rhs)
            ));
        }
    }

    out.push_str("BOUNDS\n");
    for (pos, &vid) in var_order.iter().enumerate() {
        let var = model.var(vid);
        let name = &file_col_names[pos];
        match var.kind {
            VarKind::Binary => {
                if var.lower == var.upper {
                    out.push_str(&format!(" FX BND  {}  {}\n", field(name), fmt_num(var.lower)));
                } else {
                    out.push_str(&format!(" BV BND  {}\n", field(name)));
                }
            }
            VarKind::Continuous => {
                if var.lower == f64::NEG_INFINITY && var.upper == f64::INFINITY {
                    out.push_str(&format!(" FR BND  {}\n", field(name)));
                } else {
                    if var.lower == f64::NEG_INFINITY {
                        out.push_str(&format!(" MI BND  {}\n", field(name)));
                    } else {
                        out.push_str(&format!(" LO BND  {}  {}\n", field(name), fmt_num(var.lower)));
                    }
                    if var.upper != f64::INFINITY {
                        out.push_str(&format!(" UP BND  {}  {}\n", field(name), fmt_num(var.upper)));
                    }
                }
            }
        }
    }
    out.push_str("ENDATA\n");

    EmittedModel {
        text: out,
        model_col_names,
        file_col_names,
        model_row_names,
        file_row_names,
        var_order,
    }
}

pub fn write_model(
    model: &MilpModel,
    variant: MpsVariant,
    path: &Path,
) -> std::io::Result<EmittedModel> {
    let emitted = emit_model(model, variant);
    std::fs::write(path, &emitted.text)?;
    Ok(emitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IndexAtom;

    fn toy() -> MilpModel {
        let mut m = MilpModel::new(true);
        let x = m.add_variable("x", vec![], 0.0, 5.0, VarKind::Continuous, 1.0);
        let u = m.add_variable("u", vec![IndexAtom::Num(1)], 0.0, 1.0, VarKind::Binary, 0.0);
        m.add_constraint(
            "cap",
            vec![],
            vec![(x, 1.0), (u, 2.0)],
            ConstraintSense::Le,
            5.0,
        );
        m
    }

    #[test]
    fn empty_model_has_sections() {
        let emitted = emit_model(&MilpModel::new(true), MpsVariant::Free);
        for section in ["NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"] {
            assert!(emitted.text.contains(section), "missing {section}");
        }
    }

    #[test]
    fn binary_column_is_marked_and_bounded() {
        let emitted = emit_model(&toy(), MpsVariant::Free);
        assert!(emitted.text.contains("'INTORG'"));
        assert!(emitted.text.contains("'INTEND'"));
        assert!(emitted.text.contains(" BV BND  u[1]"));
    }

    #[test]
    fn emission_is_deterministic() {
        let a = emit_model(&toy(), MpsVariant::Free);
        let b = emit_model(&toy(), MpsVariant::Free);
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn fixed_variant_renames_and_maps_back() {
        let emitted = emit_model(&toy(), MpsVariant::Fixed);
        assert!(emitted.text.contains("x000000"));
        assert_eq!(emitted.col_to_model("x000001"), Some("x"));
        assert_eq!(emitted.col_to_model("x000000"), Some("u[1]"));
    }

    #[test]
    fn fifteen_significant_digits() {
        assert_eq!(fmt_num(3000.0), "3000");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1e-8), "1.00000000000000e-8");
        assert_eq!(fmt_num(45.822320), "4.58223200000000e1");
    }
}
