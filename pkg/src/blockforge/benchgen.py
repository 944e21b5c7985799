"""Synthetic corpora with planted, provably recoverable block structure.

Unit interiors are chains of width-5 windows (each row covers five
consecutive local columns, stepping by four), so unit widths live on the
lattice 5, 9, 13, ... and every unit is one connected component of the
block region. Classification margins are arranged through quantities that
survive arbitrary row/column shuffles:

* densities are nonzero counts, so they never move under a shuffle;
* a master row touching (almost) every column attains the maximum possible
  index range, and its index std is at least sqrt((n+1)/(3(n-1))) > 0.577
  of the largest any row can reach (Popoviciu's inequality), clearing the
  0.5 threshold for every permutation;
* one singleton row per unit pins the row-feature minima at zero, one
  barely-covered anchor column pins the column-feature minima.

Families: bd-knapsack (blocks only, every row has exactly five nonzeros so
all normalized densities collapse to zero), bbd-auction (adds all-ones
master rows), dbbd-assignment (adds border columns dense over all window
rows). All constraints are <= with nonnegative rhs, so the zero vector is
a feasible witness for every family.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .model import MilpInstance, validate
from .detect import (
    DEFAULT_PHI,
    BlockPartition,
    PartitionUnit,
    check_partition,
    classify,
    partition_to_json,
    partition_from_json,
)

FAMILIES = ("bd-knapsack", "bbd-auction", "dbbd-assignment")
WINDOW = 5
STEP = 4

# margins kept clear of the default thresholds (0.75, 0.75, 0.5, 0.2, 0.5)
_DENS_CAP = 0.19
_STD_FLOOR = 0.51
_RANGE_FLOOR = 0.76
_COL_DENS_CAP = 0.74


class InconsistentSpec(ValueError):
    pass


@dataclass(frozen=True)
class PlantedSpec:
    family: str
    k: int
    width: object = None          # None = auto, int, or (lo, hi) range
    master_rows: int = 0
    border_cols: int = 0
    coeff_law: tuple = (1, 10)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InconsistentSpec(f"unknown family {self.family!r}")
        if self.k < 1:
            raise InconsistentSpec("unit count must be >= 1")
        if self.family == "bd-knapsack":
            if self.master_rows or self.border_cols:
                raise InconsistentSpec("bd-knapsack takes no masters/borders")
        elif self.family == "bbd-auction":
            if self.master_rows < 1 or self.border_cols:
                raise InconsistentSpec("bbd-auction needs masters, no borders")
        else:
            if self.master_rows < 1 or self.border_cols < 1:
                raise InconsistentSpec("dbbd-assignment needs masters and borders")
        lo, hi = self.coeff_law
        if not (1 <= lo <= hi):
            raise InconsistentSpec("coefficient law must satisfy 1 <= lo <= hi")


@dataclass(frozen=True)
class PlantedTruth:
    partition: BlockPartition
    witness: tuple | None
    row_shuffle: tuple            # emitted row i came from built row row_shuffle[i]
    col_shuffle: tuple
    family: str


def _on_lattice(w: int) -> bool:
    return w >= WINDOW and (w - WINDOW) % STEP == 0


def _master_std_floor(n: int, removed: int) -> float:
    """Worst-shuffle ratio of a master row's index std to the Popoviciu
    maximum, when the master misses `removed` of the n columns."""
    span = n - removed
    if span < 2:
        return 0.0
    return math.sqrt((span * span - 1) / 12.0) / ((n - 1) / 2.0)


def _check_margins(family: str, widths, n_m: int, n_bd: int):
    problems = []
    for w in widths:
        if not _on_lattice(w):
            problems.append(f"width {w} not on the 5 + 4t lattice")
    if problems:
        return problems
    n_block = sum(widths)
    m_w = sum((w - 1) // STEP for w in widths)
    k = len(widths)
    if family == "bd-knapsack":
        return problems
    n = n_block + n_bd
    if family == "bbd-auction":
        if 4.0 / (n - 1) > _DENS_CAP:
            problems.append(
                f"window density 4/(n-1) = {4.0 / (n - 1):.3f} exceeds "
                f"{_DENS_CAP} (need more/wider units)")
        return problems
    # dbbd-assignment
    m = m_w + k + n_m
    if n_block - 1 <= WINDOW + n_bd:
        problems.append("master rows would not dominate row density")
    if _master_std_floor(n, n_bd + 1) < _STD_FLOOR:
        problems.append("master index-std floor below threshold margin")
    if (m_w - 1) / (m - 1) < _RANGE_FLOOR:
        problems.append(
            f"border column range floor {(m_w - 1) / (m - 1):.3f} below "
            f"{_RANGE_FLOOR} (need more window rows per unit)")
    if m_w > 1 and (1 + n_m) / (m_w - 1) > _COL_DENS_CAP:
        problems.append("block column density too close to border density")
    return problems


def _auto_width(spec: PlantedSpec) -> int:
    if spec.family == "bd-knapsack":
        return WINDOW
    w = WINDOW
    while _check_margins(spec.family, [w] * spec.k, spec.master_rows,
                         spec.border_cols):
        w += STEP
        if w > 4 * 200 + 1:
            raise InconsistentSpec("no workable width below the size cap")
    return w


def _pick_widths(spec: PlantedSpec, rng) -> list:
    if spec.width is None:
        return [_auto_width(spec)] * spec.k
    if isinstance(spec.width, int):
        widths = [spec.width] * spec.k
    else:
        lo, hi = spec.width
        options = [w for w in range(lo, hi + 1) if _on_lattice(w)]
        if not options:
            raise InconsistentSpec(f"no lattice widths inside [{lo}, {hi}]")
        widths = [options[int(rng.integers(len(options)))] for _ in range(spec.k)]
    problems = _check_margins(spec.family, widths, spec.master_rows,
                              spec.border_cols)
    if problems:
        raise InconsistentSpec("; ".join(problems))
    return widths


def gen_planted(spec: PlantedSpec, rng, name: str | None = None):
    """Returns (instance, truth); the emitted instance is row/col shuffled
    and the truth partition speaks in the shuffled coordinates."""
    widths = _pick_widths(spec, rng)
    k = spec.k
    n_m, n_bd = spec.master_rows, spec.border_cols
    family = spec.family
    with_extras = family != "bd-knapsack"
    c_lo, c_hi = spec.coeff_law

    col_offset = []
    total = 0
    for w in widths:
        col_offset.append(total)
        total += w
    n_block = total
    n = n_block + n_bd
    unit_rows: list[list[int]] = []
    row_count = 0
    rows_sense: list[str] = []
    rows_rhs: list[float] = []
    row_names: list[str] = []
    entries: dict = {}
    db_rows: list[list[int]] = []

    border_cols = list(range(n_block, n_block + n_bd))
    for u, w in enumerate(widths):
        mine: list[int] = []
        my_db: list[int] = []
        q = (w - 1) // STEP
        for t in range(q):
            r = row_count
            row_count += 1
            mine.append(r)
            base = col_offset[u] + STEP * t
            if family == "bd-knapsack":
                coeffs = rng.integers(c_lo, c_hi + 1, size=WINDOW)
                rhs = float(rng.integers(5, 26))
            else:
                coeffs = np.ones(WINDOW, dtype=int)
                rhs = 1.0
            for d in range(WINDOW):
                entries[(r, base + d)] = float(coeffs[d])
            if family == "dbbd-assignment":
                for c in border_cols:
                    entries[(r, c)] = 1.0
                my_db.append(r)
            rows_sense.append("<=")
            rows_rhs.append(rhs)
            row_names.append(f"w{u}_{t}")
        if with_extras:
            r = row_count
            row_count += 1
            mine.append(r)
            entries[(r, col_offset[u] + 2)] = 1.0
            rows_sense.append("<=")
            rows_rhs.append(1.0)
            row_names.append(f"s{u}")
        unit_rows.append(mine)
        db_rows.append(my_db)

    master_rows = []
    anchor = col_offset[0] + 1
    for j in range(n_m):
        r = row_count
        row_count += 1
        master_rows.append(r)
        for c in range(n_block):
            if family == "dbbd-assignment" and c == anchor:
                continue
            entries[(r, c)] = 1.0
        rows_sense.append("<=")
        rows_rhs.append(float(rng.integers(k, 2 * k + 1)))
        row_names.append(f"m{j}")
    m = row_count

    objective = -rng.integers(1, 11, size=n).astype(float)
    col_names = [f"x{u}_{i}" for u, w in enumerate(widths) for i in range(w)]
    col_names += [f"y{j}" for j in range(n_bd)]

    rp = rng.permutation(m)
    cp = rng.permutation(n)
    inv_r = np.argsort(rp)
    inv_c = np.argsort(cp)

    keys = sorted(entries)
    new_entries = sorted(
        (int(inv_r[r]), int(inv_c[c]), entries[(r, c)]) for r, c in keys)
    inst = MilpInstance(
        name=name or f"{family}-k{k}",
        objective=objective[cp],
        ccm_rows=np.array([e[0] for e in new_entries], dtype=np.int64),
        ccm_cols=np.array([e[1] for e in new_entries], dtype=np.int64),
        ccm_vals=np.array([e[2] for e in new_entries]),
        senses=tuple(rows_sense[rp[i]] for i in range(m)),
        rhs=np.array([rows_rhs[rp[i]] for i in range(m)]),
        lower_bounds=np.zeros(n),
        upper_bounds=np.ones(n),
        var_kinds=("binary",) * n,
        row_names=tuple(row_names[rp[i]] for i in range(m)),
        col_names=tuple(col_names[cp[i]] for i in range(n)),
    )

    units = tuple(
        PartitionUnit(
            rows=tuple(sorted(int(inv_r[r]) for r in unit_rows[u])),
            cols=tuple(sorted(int(inv_c[c]) for c in range(
                col_offset[u], col_offset[u] + widths[u]))),
            db_rows=tuple(sorted(int(inv_r[r]) for r in db_rows[u])),
        )
        for u in range(k)
    )
    truth = PlantedTruth(
        partition=BlockPartition(
            units=units,
            master_rows=tuple(sorted(int(inv_r[r]) for r in master_rows)),
            border_cols=tuple(sorted(int(inv_c[c]) for c in border_cols)),
            params={"family": family,
                    "detect_db": family == "dbbd-assignment"},
        ),
        witness=(0.0,) * n,
        row_shuffle=tuple(int(x) for x in rp),
        col_shuffle=tuple(int(x) for x in cp),
        family=family,
    )

    report = validate(inst)
    if not report.ok:
        raise InconsistentSpec(f"emitted instance invalid: {report.summary()}")
    check_partition(inst, truth.partition)
    _assert_classification(inst, truth)
    return inst, truth


def _assert_classification(inst: MilpInstance, truth: PlantedTruth) -> None:
    """The emitted instance must classify exactly as planted, for this
    concrete shuffle; the margins make this certain, this is the backstop."""
    part = truth.partition
    cls = classify(inst, DEFAULT_PHI,
                   detect_db=part.params.get("detect_db", False))
    want_m = set(part.master_rows)
    want_bd = set(part.border_cols)
    want_db = {r for u in part.units for r in u.db_rows}
    if set(cls.m_cons) != want_m or set(cls.bd_vars) != want_bd \
            or set(cls.db_cons) != want_db:
        raise InconsistentSpec(
            "classification margins violated on emitted instance "
            f"(masters {sorted(cls.m_cons)} vs {sorted(want_m)}, "
            f"borders {sorted(cls.bd_vars)} vs {sorted(want_bd)})")


def gen_corpus(spec: PlantedSpec, count: int, seed: int | None = None) -> list:
    """Deterministic corpus: instance i uses default_rng([seed, i])."""
    if count < 1:
        raise ValueError("count must be >= 1")
    base = spec.seed if seed is None else seed
    out = []
    for i in range(count):
        rng = np.random.default_rng([base, i])
        out.append(gen_planted(spec, rng, name=f"{spec.family}-{base}-{i}"))
    return out


def truth_to_json(truth: PlantedTruth) -> str:
    doc = {
        "family": truth.family,
        "partition": json.loads(partition_to_json(truth.partition)),
        "witness": list(truth.witness) if truth.witness is not None else None,
        "row_shuffle": list(truth.row_shuffle),
        "col_shuffle": list(truth.col_shuffle),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def truth_from_json(text: str) -> PlantedTruth:
    doc = json.loads(text)
    return PlantedTruth(
        partition=partition_from_json(json.dumps(doc["partition"])),
        witness=tuple(doc["witness"]) if doc["witness"] is not None else None,
        row_shuffle=tuple(doc["row_shuffle"]),
        col_shuffle=tuple(doc["col_shuffle"]),
        family=doc["family"],
    )
