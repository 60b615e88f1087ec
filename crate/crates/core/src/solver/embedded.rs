//! In-process HiGHS backend.

use super::{RawSolution, SolveError, SolveOptions, SolveStatus};
use crate::model::{ConstraintSense, MilpModel, VarKind};
use highs::{HighsModelStatus, RowProblem, Sense};
use std::collections::BTreeMap;
use std::time::Instant;

pub fn solve_embedded(model: &MilpModel, opts: &SolveOptions) -> Result<RawSolution, SolveError> {
    let started = Instant::now();
    let var_order = model.canonical_var_order();
    let con_order = model.canonical_con_order();
    let has_integers = model
        .variables()
        .iter()
        .any(|v| v.kind == VarKind::Binary);

    let mut pb = RowProblem::new();
    let mut col_of = vec![None; model.variables().len()];
    for &vid in &var_order {
        let v = model.var(vid);
        let col =
            pb.add_column_with_integrality(v.objective, v.lower..=v.upper, v.kind == VarKind::Binary);
        col_of[vid.0] = Some(col);
    }
    for &ci in &con_order {
        let con = &model.constraints()[ci];
        let terms: Vec<(highs::Col, f64)> = con
            .terms
            .iter()
            .map(|&(v, c)| (col_of[v.0].expect("registered"), c))
            .collect();
        match con.sense {
            ConstraintSense::Le => pb.add_row(..=con.rhs, &terms),
            ConstraintSense::Ge => pb.add_row(con.rhs.., &terms),
            ConstraintSense::Eq => pb.add_row(con.rhs..=con.rhs, &terms),
        }
    }

    let sense = if model.maximize {
        Sense::Maximise
    } else {
        Sense::Minimise
    };
    let mut m = pb
        .try_optimise(sense)
        .map_err(|s| SolveError::BackendCrash {
            status: format!("{s:?}"),
            stderr: "model rejected by HiGHS".into(),
        })?;
    m.set_option("threads", opts.threads as i32);
    if opts.threads <= 1 {
        m.set_option("parallel", "off");
    }
    m.set_option("random_seed", 0);
    m.set_option("mip_rel_gap", opts.rel_gap);
    m.set_option("mip_abs_gap", opts.abs_gap);
    m.set_option("primal_feasibility_tolerance", 1e-9);
    m.set_option("dual_feasibility_tolerance", 1e-9);
    m.set_option("mip_feasibility_tolerance", 1e-9);
    if let Some(limit) = opts.time_limit {
        m.set_option("time_limit", limit);
    }
    // Branching priorities are not exposed by this backend; hints are dropped.

    let solved = m.solve();
    let status = match solved.status() {
        HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
        HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
            SolveStatus::Infeasible
        }
        HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
            SolveStatus::Timeout
        }
        other => {
            return Err(SolveError::BackendCrash {
                status: format!("{other:?}"),
                stderr: String::new(),
            })
        }
    };
    let objective = solved.objective_value();
    let solution = solved.get_solution();

    let mut values = BTreeMap::new();
    let mut row_duals = BTreeMap::new();
    if matches!(status, SolveStatus::Optimal | SolveStatus::Timeout)
        && solution.columns().len() == var_order.len()
    {
        for (pos, &vid) in var_order.iter().enumerate() {
            values.insert(model.var(vid).name.clone(), solution.columns()[pos]);
        }
        if !has_integers && solution.dual_rows().len() == con_order.len() {
            for (pos, &ci) in con_order.iter().enumerate() {
                row_duals.insert(
                    model.constraints()[ci].name.clone(),
                    solution.dual_rows()[pos],
                );
            }
        }
    }
    // a time-limited run without an incumbent carries no values
    let status = match status {
        SolveStatus::Timeout if values.is_empty() => SolveStatus::Timeout,
        s => s,
    };

    Ok(RawSolution {
        status,
        objective,
        best_bound: (status == SolveStatus::Optimal).then_some(objective),
        values,
        row_duals,
        solve_seconds: started.elapsed().as_secs_f64(),
        max_violation: 0.0,
        worst_name: String::from("-"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IndexAtom, MilpModel};

    #[test]
    fn maximizes_simple_lp_with_duals() {
        // max x subject to x <= 5
        let mut m = MilpModel::new(true);
        let x = m.add_variable("x", vec![], 0.0, f64::INFINITY, VarKind::Continuous, 1.0);
        m.add_constraint("cap", vec![], vec![(x, 1.0)], ConstraintSense::Le, 5.0);
        let raw = solve_embedded(&m, &SolveOptions::default()).unwrap();
        assert_eq!(raw.status, SolveStatus::Optimal);
        assert!((raw.objective - 5.0).abs() < 1e-9);
        assert!((raw.values["x"] - 5.0).abs() < 1e-9);
        assert!((raw.row_duals["cap"] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reports_infeasible() {
        // x >= 1 and x <= 0
        let mut m = MilpModel::new(true);
        let x = m.add_variable("x", vec![], 1.0, f64::INFINITY, VarKind::Continuous, 1.0);
        m.add_constraint("cap", vec![], vec![(x, 1.0)], ConstraintSense::Le, 0.0);
        let raw = solve_embedded(&m, &SolveOptions::default()).unwrap();
        assert_eq!(raw.status, SolveStatus::Infeasible);
    }

    #[test]
    fn respects_integrality() {
        // max x + 2y with x + y <= 3, both integer in {0,1} x {0..2}
        let mut m = MilpModel::new(true);
        let x = m.add_variable("x", vec![], 0.0, 1.0, VarKind::Binary, 1.0);
        let y = m.add_variable("y", vec![IndexAtom::Num(0)], 0.0, 1.0, VarKind::Binary, 2.0);
        m.add_constraint("cap", vec![], vec![(x, 1.0), (y, 1.0)], ConstraintSense::Le, 1.0);
        let raw = solve_embedded(&m, &SolveOptions::default()).unwrap();
        assert_eq!(raw.status, SolveStatus::Optimal);
        assert!((raw.objective - 2.0).abs() < 1e-9);
        assert_eq!(raw.values["y[0]"].round() as i64, 1);
        assert!(raw.row_duals.is_empty());
    }
}
