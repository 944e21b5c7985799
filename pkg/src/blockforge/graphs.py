"""Bipartite constraint-variable graph view of an instance.

Constraint nodes carry a bias (rhs normalized by the row coefficient L2
norm), variable nodes carry the objective coefficient, a kind one-hot and
bound flags. Edges exist exactly for nonzero coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import VAR_KINDS, MilpInstance


@dataclass(frozen=True)
class ConstraintFeature:
    bias: float


@dataclass(frozen=True)
class VariableFeature:
    objective: float
    kind_onehot: tuple[int, int, int, int]  # binary, integer, implicit-integer, continuous
    has_lower: int
    has_upper: int
    at_lower: int
    at_upper: int


@dataclass(frozen=True)
class BipartiteGraph:
    cons_nodes: tuple[ConstraintFeature, ...]
    var_nodes: tuple[VariableFeature, ...]
    edges: tuple[tuple[int, int, float], ...]
    # original indices of each node, for subgraphs of subgraphs
    cons_orig: tuple[int, ...]
    var_orig: tuple[int, ...]

    @property
    def num_cons(self) -> int:
        return len(self.cons_nodes)

    @property
    def num_vars(self) -> int:
        return len(self.var_nodes)


def to_bipartite(inst: MilpInstance) -> BipartiteGraph:
    m, n = inst.num_rows, inst.num_cols

    sq_norm = np.zeros(m)
    for r, v in zip(inst.ccm_rows, inst.ccm_vals):
        sq_norm[int(r)] += float(v) * float(v)
    cons_nodes = []
    for i in range(m):
        norm = math.sqrt(sq_norm[i])
        bias = float(inst.rhs[i]) / norm if norm > 0 else 0.0
        cons_nodes.append(ConstraintFeature(bias=bias))

    var_nodes = []
    for j in range(n):
        lo = float(inst.lower_bounds[j])
        hi = float(inst.upper_bounds[j])
        onehot = tuple(int(inst.var_kinds[j] == k) for k in VAR_KINDS)
        fixed = int(math.isfinite(lo) and math.isfinite(hi) and lo == hi)
        var_nodes.append(VariableFeature(
            objective=float(inst.objective[j]),
            kind_onehot=onehot,
            has_lower=int(math.isfinite(lo)),
            has_upper=int(math.isfinite(hi)),
            at_lower=fixed,
            at_upper=fixed,
        ))

    edges = []
    for r, c, v in zip(inst.ccm_rows, inst.ccm_cols, inst.ccm_vals):
        if float(v) != 0.0:  # zero stored entries hold no edge
            edges.append((int(r), int(c), float(v)))

    return BipartiteGraph(
        cons_nodes=tuple(cons_nodes),
        var_nodes=tuple(var_nodes),
        edges=tuple(edges),
        cons_orig=tuple(range(m)),
        var_orig=tuple(range(n)),
    )


def extract_subgraph(g: BipartiteGraph, cons_set, var_set) -> BipartiteGraph:
    """Induced subgraph on the given index sets, re-indexed densely.

    Node order is ascending by current index; the *_orig maps are composed
    through g's own maps so they always point at the root graph's indices.
    """
    cons_ids = sorted(set(cons_set))
    var_ids = sorted(set(var_set))
    for i in cons_ids:
        if not (0 <= i < g.num_cons):
            raise IndexError(f"constraint index {i} out of range")
    for j in var_ids:
        if not (0 <= j < g.num_vars):
            raise IndexError(f"variable index {j} out of range")

    cmap = {old: new for new, old in enumerate(cons_ids)}
    vmap = {old: new for new, old in enumerate(var_ids)}
    edges = tuple(
        (cmap[i], vmap[j], v)
        for i, j, v in g.edges
        if i in cmap and j in vmap
    )
    return BipartiteGraph(
        cons_nodes=tuple(g.cons_nodes[i] for i in cons_ids),
        var_nodes=tuple(g.var_nodes[j] for j in var_ids),
        edges=edges,
        cons_orig=tuple(g.cons_orig[i] for i in cons_ids),
        var_orig=tuple(g.var_orig[j] for j in var_ids),
    )
