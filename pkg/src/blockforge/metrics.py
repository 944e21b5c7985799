"""Instance statistics and corpus similarity scoring.

Eleven per-instance statistics are compared corpus-to-corpus through
histogram Jensen-Shannon divergence; each divergence is standardized to
[0, 1] via (ln2 - D)/ln2 and the similarity score is their mean.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import networkx as nx

from .model import MilpInstance

STAT_NAMES = (
    "coef_dens",
    "cons_degree_mean",
    "cons_degree_std",
    "var_degree_mean",
    "var_degree_std",
    "lhs_mean",
    "lhs_std",
    "rhs_mean",
    "rhs_std",
    "clustering_coef",
    "modularity",
)

LN2 = math.log(2.0)
DEFAULT_BINS = 100


@dataclass(frozen=True)
class GraphStats:
    coef_dens: float
    cons_degree_mean: float
    cons_degree_std: float
    var_degree_mean: float
    var_degree_std: float
    lhs_mean: float
    lhs_std: float
    rhs_mean: float
    rhs_std: float
    clustering_coef: float
    modularity: float

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in STAT_NAMES}

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in STAT_NAMES])


def _refine(neigh, colors):
    """Neighborhood color refinement to a stable partition; the returned
    labels are ranks of sorted signatures, so they do not depend on the
    caller's node numbering."""
    ncls = len(set(colors))
    while True:
        sigs = [
            (colors[v], tuple(sorted(colors[u] for u in neigh[v])))
            for v in range(len(neigh))
        ]
        ranks = {sig: k for k, sig in enumerate(sorted(set(sigs)))}
        colors = [ranks[sig] for sig in sigs]
        newcls = len(set(colors))
        if newcls == ncls:
            return colors
        ncls = newcls


def _signature(neigh, colors):
    return tuple(sorted(
        (colors[v], tuple(sorted(colors[u] for u in neigh[v])))
        for v in range(len(neigh))
    ))


def _canonical_colors(neigh, init):
    """Individualization-refinement: refine, then repeatedly split the
    lowest still-shared color class by trying each member and keeping the
    coloring with the smallest graph signature. Interchangeable members
    give equal signatures, so the outcome is independent of node order."""
    colors = _refine(neigh, init)
    total = len(neigh)
    while True:
        counts: dict[int, int] = {}
        for c in colors:
            counts[c] = counts.get(c, 0) + 1
        multi = sorted(c for c, cnt in counts.items() if cnt > 1)
        if not multi:
            return colors
        fresh = max(colors) + 1
        best = None
        for v in range(total):
            if colors[v] != multi[0]:
                continue
            trial = list(colors)
            trial[v] = fresh
            trial = _refine(neigh, trial)
            sig = _signature(neigh, trial)
            if best is None or sig < best[0]:
                best = (sig, trial)
        colors = best[1]


def _canonical_graph(m: int, n: int, rows: np.ndarray, cols: np.ndarray) -> nx.Graph:
    """Bipartite graph relabeled canonically, so that isomorphic inputs
    (e.g. row/column shuffles of one instance) produce the identical
    labeled graph and the greedy community search returns the same value."""
    total = m + n
    neigh: list[list[int]] = [[] for _ in range(total)]
    for r, c in zip(rows, cols):
        neigh[int(r)].append(m + int(c))
        neigh[m + int(c)].append(int(r))
    colors = _canonical_colors(neigh, [0] * m + [1] * n)
    relabel = {v: colors[v] for v in range(total)}
    g = nx.Graph()
    g.add_nodes_from(range(total))
    g.add_edges_from(
        (relabel[v], relabel[u]) for v in range(total) for u in neigh[v] if v < u)
    return g


def compute_stats(inst: MilpInstance) -> GraphStats:
    m, n = inst.num_rows, inst.num_cols
    if m == 0 or n == 0:
        raise ValueError("statistics need at least one row and one column")
    mask = np.asarray(inst.ccm_vals) != 0.0
    rows = np.asarray(inst.ccm_rows)[mask]
    cols = np.asarray(inst.ccm_cols)[mask]
    vals = np.asarray(inst.ccm_vals)[mask]
    nnz = len(vals)

    cons_deg = np.bincount(rows, minlength=m).astype(float)
    var_deg = np.bincount(cols, minlength=n).astype(float)
    rhs = np.asarray(inst.rhs, dtype=float)

    if nnz:
        lhs_mean, lhs_std = float(np.mean(vals)), float(np.std(vals))
        g = _canonical_graph(m, n, rows, cols)
        clustering = float(np.mean(list(nx.square_clustering(g).values())))
        communities = nx.community.greedy_modularity_communities(g)
        modularity = float(nx.community.modularity(g, communities))
    else:
        lhs_mean = lhs_std = clustering = modularity = 0.0

    return GraphStats(
        coef_dens=nnz / (m * n),
        cons_degree_mean=float(np.mean(cons_deg)),
        cons_degree_std=float(np.std(cons_deg)),
        var_degree_mean=float(np.mean(var_deg)),
        var_degree_std=float(np.std(var_deg)),
        lhs_mean=lhs_mean,
        lhs_std=lhs_std,
        rhs_mean=float(np.mean(rhs)),
        rhs_std=float(np.std(rhs)),
        clustering_coef=clustering,
        modularity=modularity,
    )


def jsd(sample_p, sample_q, bins: int = DEFAULT_BINS) -> float:
    """Histogram Jensen-Shannon divergence, natural log, shared equal-width
    bins over the pooled range. Degenerate pooled range (all values equal)
    gives 0."""
    p = np.asarray(sample_p, dtype=float)
    q = np.asarray(sample_q, dtype=float)
    if p.size == 0 or q.size == 0:
        raise ValueError("jsd needs non-empty samples")
    lo = min(p.min(), q.min())
    hi = max(p.max(), q.max())
    if hi == lo:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    hp = np.histogram(p, edges)[0] / p.size
    hq = np.histogram(q, edges)[0] / q.size
    mix = 0.5 * (hp + hq)

    def kl(a, b):
        live = a > 0
        return float(np.sum(a[live] * np.log(a[live] / b[live])))

    return max(0.0, 0.5 * kl(hp, mix) + 0.5 * kl(hq, mix))


@dataclass(frozen=True)
class SimilarityReport:
    raw_jsd: tuple            # per statistic, order of STAT_NAMES
    standardized: tuple
    score: float
    bins: int

    def to_json(self) -> str:
        doc = {
            "bins": self.bins,
            "score": self.score,
            "per_stat": {
                name: {"jsd": self.raw_jsd[k], "standardized": self.standardized[k]}
                for k, name in enumerate(STAT_NAMES)
            },
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def format_text(self) -> str:
        width = max(len(s) for s in STAT_NAMES)
        lines = [f"{'statistic':<{width}}  {'jsd':>10}  {'standardized':>12}"]
        for k, name in enumerate(STAT_NAMES):
            lines.append(
                f"{name:<{width}}  {self.raw_jsd[k]:>10.6f}  {self.standardized[k]:>12.6f}")
        lines.append(f"{'score':<{width}}  {'':>10}  {self.score:>12.6f}")
        return "\n".join(lines)


def _as_stats(corpus) -> list:
    out = []
    for item in corpus:
        out.append(item if isinstance(item, GraphStats) else compute_stats(item))
    return out


def similarity_score(corpus_a, corpus_b, bins: int = DEFAULT_BINS) -> SimilarityReport:
    """Corpora are lists of instances (or precomputed GraphStats)."""
    stats_a = _as_stats(corpus_a)
    stats_b = _as_stats(corpus_b)
    if not stats_a or not stats_b:
        raise ValueError("similarity needs non-empty corpora")
    raw = []
    std = []
    for name in STAT_NAMES:
        d = jsd([getattr(s, name) for s in stats_a],
                [getattr(s, name) for s in stats_b], bins=bins)
        raw.append(d)
        std.append((LN2 - d) / LN2)
    return SimilarityReport(
        raw_jsd=tuple(raw),
        standardized=tuple(std),
        score=float(np.mean(std)),
        bins=bins,
    )
