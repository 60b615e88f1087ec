#!/usr/bin/env python3
"""Reference MILP/LP backend for the `dam` engine.

Reads a free-format MPS file, solves it with scipy's HiGHS interface, and
writes a `json-v1` solution file:

    {"status": "optimal", "objective": ..., "bound": ...,
     "seconds": ..., "columns": {...}, "row_duals": {...}}

Row duals are reported for pure linear programs only, as the sensitivity of
the objective to each row's right-hand side in the model's own orientation.

Usage:
    pymilp.py MODEL.mps SOLUTION.json [--rel-gap G] [--abs-gap G]
              [--time-limit S] [--threads N]
"""

import argparse
import json
import sys
import time

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

INF = float("inf")


class Mps:
    def __init__(self):
        self.maximize = False
        self.obj_row = None
        self.rows = []  # (name, sense) with sense in {L, G, E}
        self.row_index = {}
        self.cols = []  # names in file order
        self.col_index = {}
        self.integrality = []
        self.obj = []
        self.entries = []  # (row_i, col_i, coef)
        self.rhs = {}
        self.lower = []
        self.upper = []

    def add_col(self, name, integer):
        idx = self.col_index.get(name)
        if idx is None:
            idx = len(self.cols)
            self.cols.append(name)
            self.col_index[name] = idx
            self.obj.append(0.0)
            self.integrality.append(1 if integer else 0)
            self.lower.append(0.0)
            self.upper.append(INF)
        return idx


def parse_mps(path):
    mps = Mps()
    section = None
    pending_objsense = False
    integer_mode = False
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("*"):
                continue
            if not line[0].isspace():
                fields = line.split()
                section = fields[0].upper()
                pending_objsense = section == "OBJSENSE" and len(fields) == 1
                if section == "OBJSENSE" and len(fields) > 1:
                    mps.maximize = fields[1].upper() in ("MAX", "MAXIMIZE")
                if section == "RANGES":
                    raise SystemExit("RANGES sections are not supported")
                continue
            fields = line.split()
            if pending_objsense:
                mps.maximize = fields[0].upper() in ("MAX", "MAXIMIZE")
                pending_objsense = False
                continue
            if section == "ROWS":
                sense, name = fields[0].upper(), fields[1]
                if sense == "N":
                    mps.obj_row = name
                else:
                    mps.row_index[name] = len(mps.rows)
                    mps.rows.append((name, sense))
            elif section == "COLUMNS":
                if len(fields) >= 3 and fields[1] == "'MARKER'":
                    integer_mode = fields[2] == "'INTORG'"
                    continue
                col = mps.add_col(fields[0], integer_mode)
                for i in range(1, len(fields) - 1, 2):
                    row, coef = fields[i], float(fields[i + 1])
                    if row == mps.obj_row:
                        mps.obj[col] += coef
                    else:
                        mps.entries.append((mps.row_index[row], col, coef))
            elif section == "RHS":
                for i in range(1, len(fields) - 1, 2):
                    row, value = fields[i], float(fields[i + 1])
                    if row != mps.obj_row:
                        mps.rhs[mps.row_index[row]] = value
            elif section == "BOUNDS":
                btype = fields[0].upper()
                col = mps.col_index[fields[2]]
                value = float(fields[3]) if len(fields) > 3 else None
                if btype == "LO":
                    mps.lower[col] = value
                elif btype == "UP":
                    mps.upper[col] = value
                elif btype == "FX":
                    mps.lower[col] = mps.upper[col] = value
                elif btype == "MI":
                    mps.lower[col] = -INF
                elif btype == "PL":
                    mps.upper[col] = INF
                elif btype == "FR":
                    mps.lower[col], mps.upper[col] = -INF, INF
                elif btype == "BV":
                    mps.lower[col], mps.upper[col] = 0.0, 1.0
                    mps.integrality[col] = 1
                else:
                    raise SystemExit(f"unsupported bound type {btype}")
            elif section == "ENDATA":
                break
    return mps


STATUS = {0: "optimal", 1: "timeout", 2: "infeasible", 3: "error", 4: "error"}


def solve(mps, rel_gap, abs_gap, time_limit):
    n = len(mps.cols)
    if n == 0:
        return {"status": "optimal", "objective": 0.0, "bound": 0.0,
                "columns": {}, "row_duals": {}}
    c = np.array(mps.obj)
    sign = -1.0 if mps.maximize else 1.0
    is_mip = any(mps.integrality)
    m = len(mps.rows)
    if m:
        data, ri, ci = [], [], []
        for row, col, coef in mps.entries:
            ri.append(row)
            ci.append(col)
            data.append(coef)
        a = sparse.csr_matrix((data, (ri, ci)), shape=(m, n))
    else:
        a = sparse.csr_matrix((0, n))
    rhs = np.array([mps.rhs.get(i, 0.0) for i in range(m)])
    senses = [s for (_, s) in mps.rows]
    lb = np.array([{"L": -INF}.get(s, rhs[i]) for i, s in enumerate(senses)])
    ub = np.array([{"G": INF}.get(s, rhs[i]) for i, s in enumerate(senses)])

    if is_mip:
        res = milp(
            sign * c,
            constraints=LinearConstraint(a, lb, ub) if m else (),
            integrality=np.array(mps.integrality),
            bounds=Bounds(np.array(mps.lower), np.array(mps.upper)),
            options={"mip_rel_gap": rel_gap, "time_limit": time_limit,
                     "presolve": True},
        )
        status = STATUS.get(res.status, "error")
        if res.x is None and status == "optimal":
            status = "error"
        out = {"status": status, "objective": 0.0, "bound": None,
               "columns": {}, "row_duals": {}}
        if res.x is not None:
            out["objective"] = float(sign * (res.fun if res.fun is not None else 0.0))
            if res.mip_dual_bound is not None:
                out["bound"] = float(sign * res.mip_dual_bound)
            out["columns"] = {name: float(v) for name, v in zip(mps.cols, res.x)}
            if status == "timeout":
                out["status"] = "feasible" if res.fun is not None else "timeout"
        return out

    # pure LP: split rows for linprog and recover duals
    le_rows = [i for i, s in enumerate(senses) if s == "L"]
    ge_rows = [i for i, s in enumerate(senses) if s == "G"]
    eq_rows = [i for i, s in enumerate(senses) if s == "E"]
    a_ub = sparse.vstack([a[le_rows], -a[ge_rows]]) if le_rows or ge_rows else None
    b_ub = np.concatenate([rhs[le_rows], -rhs[ge_rows]]) if le_rows or ge_rows else None
    a_eq = a[eq_rows] if eq_rows else None
    b_eq = rhs[eq_rows] if eq_rows else None
    res = linprog(
        sign * c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=list(zip(mps.lower, mps.upper)),
        method="highs",
        options={"time_limit": time_limit},
    )
    status = STATUS.get(res.status, "error")
    out = {"status": status, "objective": 0.0, "bound": None,
           "columns": {}, "row_duals": {}}
    if res.x is not None:
        objective = float(sign * res.fun)
        out["objective"] = objective
        out["bound"] = objective if status == "optimal" else None
        out["columns"] = {name: float(v) for name, v in zip(mps.cols, res.x)}
        duals = {}
        if a_ub is not None:
            marg = res.ineqlin.marginals
            for k, i in enumerate(le_rows):
                duals[mps.rows[i][0]] = float(sign * marg[k])
            for k, i in enumerate(ge_rows):
                duals[mps.rows[i][0]] = float(-sign * marg[len(le_rows) + k])
        if a_eq is not None:
            for k, i in enumerate(eq_rows):
                duals[mps.rows[i][0]] = float(sign * res.eqlin.marginals[k])
        out["row_duals"] = duals
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("model")
    ap.add_argument("solution")
    ap.add_argument("--rel-gap", type=float, default=1e-9)
    ap.add_argument("--abs-gap", type=float, default=1e-9)
    ap.add_argument("--time-limit", type=float, default=1e20)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    start = time.time()
    mps = parse_mps(args.model)
    out = solve(mps, args.rel_gap, args.abs_gap, min(args.time_limit, 1e8))
    out["seconds"] = time.time() - start
    with open(args.solution, "w", encoding="utf-8") as fh:
        json.dump(out, fh, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
