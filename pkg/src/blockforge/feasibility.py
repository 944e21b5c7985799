"""Brute-force feasibility oracle for small bounded-integer instances.

Depth-first enumeration with constraint-interval pruning: a partial
assignment is abandoned as soon as some constraint cannot be satisfied for
any completion within the remaining variables' bounds. Node counts double
as a deterministic hardness proxy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import MilpInstance, INTEGER_KINDS

_TOL = 1e-9
DEFAULT_BUDGET = 200_000


class OracleScopeError(ValueError):
    """Instance outside the oracle's scope (unbounded or free continuous)."""


@dataclass(frozen=True)
class FeasVerdict:
    status: str                  # "feasible" | "infeasible" | "unknown"
    witness: tuple | None
    nodes: int


def check_witness(inst: MilpInstance, x, tol: float = 1e-6) -> bool:
    """Re-validate an assignment against bounds, integrality, constraints."""
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.num_cols,):
        return False
    if np.any(x < inst.lower_bounds - tol) or np.any(x > inst.upper_bounds + tol):
        return False
    for j, kind in enumerate(inst.var_kinds):
        if kind in INTEGER_KINDS and abs(x[j] - round(x[j])) > tol:
            return False
    activity = np.zeros(inst.num_rows)
    for r, c, v in zip(inst.ccm_rows, inst.ccm_cols, inst.ccm_vals):
        activity[int(r)] += float(v) * x[int(c)]
    for i, sense in enumerate(inst.senses):
        b = float(inst.rhs[i])
        if sense == "<=" and activity[i] > b + tol:
            return False
        if sense == ">=" and activity[i] < b - tol:
            return False
        if sense == "=" and abs(activity[i] - b) > tol:
            return False
    return True


def _value_order(lo: int, hi: int) -> list:
    """0 first when available, then ascending magnitude, negatives first."""
    vals = list(range(lo, hi + 1))
    vals.sort(key=lambda v: (v != 0, abs(v), v))
    return vals


def feasibility_bruteforce(inst: MilpInstance, budget: int = DEFAULT_BUDGET) -> FeasVerdict:
    m, n = inst.num_rows, inst.num_cols
    fixed = {}
    domains = {}
    for j, kind in enumerate(inst.var_kinds):
        lo, hi = float(inst.lower_bounds[j]), float(inst.upper_bounds[j])
        if kind in INTEGER_KINDS:
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise OracleScopeError(
                    f"integer variable {inst.col_names[j]} is unbounded")
            ilo, ihi = math.ceil(lo - _TOL), math.floor(hi + _TOL)
            if ilo > ihi:
                return FeasVerdict(status="infeasible", witness=None, nodes=0)
            domains[j] = (ilo, ihi)
        else:
            if lo == hi and math.isfinite(lo):
                fixed[j] = lo
            else:
                raise OracleScopeError(
                    f"continuous variable {inst.col_names[j]} is not fixed")

    col_entries: dict[int, list] = {j: [] for j in range(n)}
    for r, c, v in zip(inst.ccm_rows, inst.ccm_cols, inst.ccm_vals):
        if float(v) != 0.0:
            col_entries[int(c)].append((int(r), float(v)))

    # interval activities with every unassigned variable at its bound ends
    min_act = np.zeros(m)
    max_act = np.zeros(m)
    for j, (ilo, ihi) in domains.items():
        for r, a in col_entries[j]:
            min_act[r] += min(a * ilo, a * ihi)
            max_act[r] += max(a * ilo, a * ihi)
    for j, val in fixed.items():
        for r, a in col_entries[j]:
            min_act[r] += a * val
            max_act[r] += a * val

    rhs = np.asarray(inst.rhs, dtype=float)
    senses = inst.senses

    def rows_ok() -> bool:
        for i in range(m):
            if senses[i] == "<=":
                if min_act[i] > rhs[i] + _TOL:
                    return False
            elif senses[i] == ">=":
                if max_act[i] < rhs[i] - _TOL:
                    return False
            else:
                if min_act[i] > rhs[i] + _TOL or max_act[i] < rhs[i] - _TOL:
                    return False
        return True

    order = sorted(domains, key=lambda j: (domains[j][1] - domains[j][0], j))
    assignment = dict(fixed)
    nodes = 0

    def dfs(pos: int):
        nonlocal nodes
        if not rows_ok():
            return None
        if pos == len(order):
            return [assignment[j] if j in assignment else 0.0 for j in range(n)]
        j = order[pos]
        ilo, ihi = domains[j]
        for v in _value_order(ilo, ihi):
            if nodes >= budget:
                return "budget"
            nodes += 1
            deltas = []
            for r, a in col_entries[j]:
                dmin = a * v - min(a * ilo, a * ihi)
                dmax = a * v - max(a * ilo, a * ihi)
                min_act[r] += dmin
                max_act[r] += dmax
                deltas.append((r, dmin, dmax))
            assignment[j] = float(v)
            result = dfs(pos + 1)
            del assignment[j]
            for r, dmin, dmax in deltas:
                min_act[r] -= dmin
                max_act[r] -= dmax
            if result is not None:
                return result
        return None

    result = dfs(0)
    if result == "budget":
        return FeasVerdict(status="unknown", witness=None, nodes=nodes)
    if result is None:
        return FeasVerdict(status="infeasible", witness=None, nodes=nodes)
    witness = tuple(float(x) for x in result)
    return FeasVerdict(status="feasible", witness=witness, nodes=nodes)
