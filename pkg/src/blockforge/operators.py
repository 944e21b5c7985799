"""Generation operators: reduction, mix-up, expansion.

All three work through an InstanceBuilder that keeps rows and columns under
stable ids, so removing one unit never renumbers another. The modification
ratio eta is accounted against the original instance's block-variable
count: reduction counts removed widths, expansion inserted widths, mix-up
the larger of the two per swap.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .model import MilpInstance
from .detect import BlockPartition, check_partition
from .library import BlockUnit, StructureLibrary, extract_block_units, sample_unit

OPERATOR_NAMES = ("reduce", "mixup", "expand", "balanced-thirds")
_ETA_SLACK = 1e-9  # guards eta * width targets against float round-up


@dataclass(frozen=True)
class GenConfig:
    eta: float
    operator: str = "mixup"
    refine: bool = False
    seed: int = 0
    allow_same_source: bool = True
    scale_master_rhs: bool = False
    border_mode: str = "strict"    # "drop" discards unmappable border entries

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.operator not in OPERATOR_NAMES:
            raise ValueError(f"unknown operator {self.operator!r}")
        if self.border_mode not in ("strict", "drop"):
            raise ValueError(f"unknown border mode {self.border_mode!r}")


@dataclass(frozen=True)
class RefineStats:
    """Per non-trivial-constraint ordinal: pooled mean and population std."""
    mu: tuple = ()
    sigma: tuple = ()

    def __len__(self) -> int:
        return len(self.mu)

    def __bool__(self) -> bool:
        return len(self.mu) > 0


@dataclass(frozen=True)
class GenRecord:
    source: str
    operator: str
    eta: float
    seed: int
    units_removed: tuple = ()
    units_substituted: tuple = ()   # (victim label, replacement label) pairs
    units_appended: tuple = ()
    achieved_fraction: float = 0.0
    refined: bool = False

    def to_json(self) -> str:
        doc = {
            "source": self.source,
            "operator": self.operator,
            "eta": self.eta,
            "seed": self.seed,
            "units_removed": list(self.units_removed),
            "units_substituted": [list(p) for p in self.units_substituted],
            "units_appended": list(self.units_appended),
            "achieved_fraction": self.achieved_fraction,
            "refined": self.refined,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "GenRecord":
        doc = json.loads(text)
        return GenRecord(
            source=doc["source"],
            operator=doc["operator"],
            eta=doc["eta"],
            seed=doc["seed"],
            units_removed=tuple(doc["units_removed"]),
            units_substituted=tuple(tuple(p) for p in doc["units_substituted"]),
            units_appended=tuple(doc["units_appended"]),
            achieved_fraction=doc["achieved_fraction"],
            refined=doc.get("refined", False),
        )


@dataclass
class UnitHandle:
    label: str
    row_ids: tuple
    col_ids: tuple
    origin: str          # "original" or "inserted"

    @property
    def width(self) -> int:
        return len(self.col_ids)


def _uniq_name(base: str, used: set) -> str:
    if base not in used:
        return base
    k = 1
    while f"{base}~g{k}" in used:
        k += 1
    return f"{base}~g{k}"


class InstanceBuilder:
    """Mutable splice surface over a partitioned instance."""

    def __init__(self, inst: MilpInstance, partition: BlockPartition):
        check_partition(inst, partition)
        self._rows = {}      # id -> [sense, rhs, name]
        self._cols = {}      # id -> [obj, kind, lo, hi, name]
        self._entries = {}   # (row id, col id) -> value
        for i in range(inst.num_rows):
            self._rows[i] = [inst.senses[i], float(inst.rhs[i]), inst.row_names[i]]
        for j in range(inst.num_cols):
            self._cols[j] = [
                float(inst.objective[j]), inst.var_kinds[j],
                float(inst.lower_bounds[j]), float(inst.upper_bounds[j]),
                inst.col_names[j],
            ]
        for r, c, v in zip(inst.ccm_rows, inst.ccm_cols, inst.ccm_vals):
            if float(v) != 0.0:
                self._entries[(int(r), int(c))] = float(v)
        self._next_row = inst.num_rows
        self._next_col = inst.num_cols
        self.master_ids = list(sorted(partition.master_rows))
        self.border_ids = list(sorted(partition.border_cols))
        self.units = [
            UnitHandle(
                label=f"u{k}",
                row_ids=tuple(sorted(u.rows)),
                col_ids=tuple(sorted(u.cols)),
                origin="original",
            )
            for k, u in enumerate(partition.units)
        ]
        self._row_names = {r[2] for r in self._rows.values()}
        self._col_names = {c[4] for c in self._cols.values()}
        self._insert_count = 0

    def remove_unit(self, index: int) -> UnitHandle:
        handle = self.units.pop(index)
        dead_rows = set(handle.row_ids)
        dead_cols = set(handle.col_ids)
        for rid in handle.row_ids:
            self._row_names.discard(self._rows.pop(rid)[2])
        for cid in handle.col_ids:
            self._col_names.discard(self._cols.pop(cid)[4])
        self._entries = {
            (r, c): v for (r, c), v in self._entries.items()
            if r not in dead_rows and c not in dead_cols
        }
        return handle

    def scale_master_rhs(self, factor: float) -> None:
        """Scale master rhs; integer rhs rounds toward the loose side."""
        for rid in self.master_ids:
            sense, rhs, name = self._rows[rid]
            scaled = rhs * factor
            if float(rhs).is_integer():
                if sense == "<=":
                    scaled = float(math.ceil(scaled - 1e-9))
                elif sense == ">=":
                    scaled = float(math.floor(scaled + 1e-9))
                else:
                    scaled = float(round(scaled))
            self._rows[rid] = [sense, scaled, name]

    def to_instance(self, name: str) -> MilpInstance:
        row_ids = sorted(self._rows)
        col_ids = sorted(self._cols)
        rpos = {rid: k for k, rid in enumerate(row_ids)}
        cpos = {cid: k for k, cid in enumerate(col_ids)}
        keys = sorted(self._entries, key=lambda rc: (rpos[rc[0]], cpos[rc[1]]))
        return MilpInstance(
            name=name,
            objective=np.array([self._cols[c][0] for c in col_ids]),
            ccm_rows=np.array([rpos[r] for r, _ in keys], dtype=np.int64),
            ccm_cols=np.array([cpos[c] for _, c in keys], dtype=np.int64),
            ccm_vals=np.array([self._entries[k] for k in keys]),
            senses=tuple(self._rows[r][0] for r in row_ids),
            rhs=np.array([self._rows[r][1] for r in row_ids]),
            lower_bounds=np.array([self._cols[c][2] for c in col_ids]),
            upper_bounds=np.array([self._cols[c][3] for c in col_ids]),
            var_kinds=tuple(self._cols[c][1] for c in col_ids),
            row_names=tuple(self._rows[r][2] for r in row_ids),
            col_names=tuple(self._cols[c][4] for c in col_ids),
        )


@dataclass(frozen=True)
class MatchPlan:
    """Identity map on ordinals below m2; unit ordinals >= m2 are dropped."""
    m1: int
    m2: int
    kept: tuple
    dropped: tuple


def match_mcons(m1: int, m2: int) -> MatchPlan:
    if m1 < 0 or m2 < 0:
        raise ValueError("coupling counts must be nonnegative")
    return MatchPlan(
        m1=m1, m2=m2,
        kept=tuple(range(min(m1, m2))),
        dropped=tuple(range(m2, m1)),
    )


def insert_unit(
    builder: InstanceBuilder,
    unit: BlockUnit,
    plan: MatchPlan,
    border_mode: str = "strict",
) -> InstanceBuilder:
    """Append a unit's columns and block rows; write B_i couplings into the
    host's master rows per plan and F_i entries into host border columns by
    ordinal. Colliding names get a ~g<k> suffix."""
    col_ids = []
    for k in range(unit.width):
        cid = builder._next_col
        builder._next_col += 1
        cname = _uniq_name(unit.col_names[k], builder._col_names)
        builder._col_names.add(cname)
        builder._cols[cid] = [
            unit.objective[k], unit.kinds[k], unit.lower[k], unit.upper[k], cname,
        ]
        col_ids.append(cid)
    row_ids = []
    for k in range(unit.height):
        rid = builder._next_row
        builder._next_row += 1
        rname = _uniq_name(unit.row_names[k], builder._row_names)
        builder._row_names.add(rname)
        builder._rows[rid] = [unit.senses[k], unit.rhs[k], rname]
        row_ids.append(rid)

    for lr, lc, v in unit.entries:
        if v != 0.0:
            builder._entries[(row_ids[lr], col_ids[lc])] = v
    kept = set(plan.kept)
    for mo, lc, v in unit.mcons_strip:
        if mo in kept and v != 0.0:
            builder._entries[(builder.master_ids[mo], col_ids[lc])] = v
    for lr, bo, v in unit.border_strip:
        if bo >= len(builder.border_ids):
            if border_mode == "strict":
                raise ValueError(
                    f"border ordinal {bo} out of range for host with "
                    f"{len(builder.border_ids)} border columns")
            continue
        if v != 0.0:
            builder._entries[(row_ids[lr], builder.border_ids[bo])] = v

    builder._insert_count += 1
    label = f"lib:{unit.source[0]}:{unit.source[1]}#{builder._insert_count}"
    builder.units.append(
        UnitHandle(label=label, row_ids=tuple(row_ids), col_ids=tuple(col_ids),
                   origin="inserted"))
    return builder


def compute_refine_stats(inst: MilpInstance, partition: BlockPartition) -> RefineStats:
    """Pool each non-trivial constraint ordinal's nonzero coefficients
    across all units; returns per-ordinal mean and population std."""
    units = extract_block_units(inst, partition)
    if not units:
        return RefineStats()
    per_unit = [u.nontrivial_rows() for u in units]
    counts = {len(nt) for nt in per_unit}
    common = min(counts)
    if len(counts) > 1:
        warnings.warn(
            "units disagree on non-trivial constraint count; "
            f"refinement stats restricted to the common prefix ({common})",
            RuntimeWarning, stacklevel=2)
    mu, sigma = [], []
    for k in range(common):
        pool = []
        for u, nt in zip(units, per_unit):
            lr = nt[k]
            pool.extend(v for r, _, v in u.entries if r == lr and v != 0.0)
            pool.extend(v for r, _, v in u.border_strip if r == lr and v != 0.0)
        mu.append(float(np.mean(pool)))
        sigma.append(float(np.std(pool)))
    return RefineStats(mu=tuple(mu), sigma=tuple(sigma))


def refine_unit(unit: BlockUnit, stats: RefineStats, rng) -> BlockUnit:
    """Redraw each nonzero of the unit's non-trivial rows from the
    per-ordinal Gaussian; sparsity, rhs, senses and bounds untouched."""
    if not stats:
        return unit
    nt = unit.nontrivial_rows()
    law = {nt[k]: k for k in range(min(len(nt), len(stats)))}

    def redraw(r: int, v: float) -> float:
        if r in law:
            k = law[r]
            return float(rng.normal(stats.mu[k], stats.sigma[k]))
        return v

    entries = tuple((r, c, redraw(r, v)) for r, c, v in unit.entries)
    border = tuple((r, o, redraw(r, v)) for r, o, v in unit.border_strip)
    return replace(unit, entries=entries, border_strip=border)


def _target(eta: float, n_block: int) -> float:
    return eta * n_block - _ETA_SLACK


def reduce(inst, partition, cfg: GenConfig, rng):
    """Remove uniformly sampled units until the removed block-variable
    fraction reaches eta, always keeping at least one unit."""
    if len(partition.units) < 2:
        raise ValueError("reduction needs at least two units")
    n_block = partition.block_var_count()
    builder = InstanceBuilder(inst, partition)
    k0 = len(builder.units)
    removed = []
    removed_width = 0
    while removed_width < _target(cfg.eta, n_block) and len(builder.units) > 1:
        handle = builder.remove_unit(int(rng.integers(len(builder.units))))
        removed.append(handle.label)
        removed_width += handle.width
    if cfg.scale_master_rhs and k0:
        builder.scale_master_rhs(len(builder.units) / k0)
    out = builder.to_instance(f"{inst.name}.reduce")
    record = GenRecord(
        source=inst.name, operator="reduce", eta=cfg.eta, seed=cfg.seed,
        units_removed=tuple(removed),
        achieved_fraction=removed_width / n_block,
    )
    return out, record


def _lib_filter(cfg: GenConfig, host_name: str):
    if cfg.allow_same_source:
        return None
    return lambda u: u.source[0] != host_name


def mixup(inst, partition, lib: StructureLibrary, cfg: GenConfig, rng):
    """Swap units for library units until the touched block-variable
    fraction reaches eta; untouched original units are preferred victims."""
    if not partition.units:
        raise ValueError("mix-up needs at least one unit")
    n_block = partition.block_var_count()
    builder = InstanceBuilder(inst, partition)
    unit_filter = _lib_filter(cfg, inst.name)
    stats = compute_refine_stats(inst, partition) if cfg.refine else RefineStats()
    touched = 0
    substituted = []
    while touched < _target(cfg.eta, n_block):
        fresh = [k for k, u in enumerate(builder.units) if u.origin == "original"]
        pool = fresh if fresh else list(range(len(builder.units)))
        victim = builder.remove_unit(pool[int(rng.integers(len(pool)))])
        repl = sample_unit(lib, rng, unit_filter)
        if cfg.refine:
            repl = refine_unit(repl, stats, rng)
        plan = match_mcons(repl.m1, len(builder.master_ids))
        insert_unit(builder, repl, plan, border_mode=cfg.border_mode)
        substituted.append((victim.label, builder.units[-1].label))
        touched += max(victim.width, repl.width)
    out = builder.to_instance(f"{inst.name}.mixup")
    record = GenRecord(
        source=inst.name, operator="mixup", eta=cfg.eta, seed=cfg.seed,
        units_substituted=tuple(substituted),
        achieved_fraction=touched / n_block,
        refined=cfg.refine,
    )
    return out, record


def expand(inst, partition, lib: StructureLibrary, cfg: GenConfig, rng):
    """Append library units until the inserted block-variable fraction
    reaches eta."""
    n_block = partition.block_var_count()
    if n_block == 0:
        raise ValueError("expansion needs a host with block variables")
    builder = InstanceBuilder(inst, partition)
    k0 = len(builder.units)
    unit_filter = _lib_filter(cfg, inst.name)
    stats = compute_refine_stats(inst, partition) if cfg.refine else RefineStats()
    inserted = 0
    appended = []
    while inserted < _target(cfg.eta, n_block):
        repl = sample_unit(lib, rng, unit_filter)
        if cfg.refine:
            repl = refine_unit(repl, stats, rng)
        plan = match_mcons(repl.m1, len(builder.master_ids))
        insert_unit(builder, repl, plan, border_mode=cfg.border_mode)
        appended.append(builder.units[-1].label)
        inserted += repl.width
    if cfg.scale_master_rhs and k0:
        builder.scale_master_rhs(len(builder.units) / k0)
    out = builder.to_instance(f"{inst.name}.expand")
    record = GenRecord(
        source=inst.name, operator="expand", eta=cfg.eta, seed=cfg.seed,
        units_appended=tuple(appended),
        achieved_fraction=inserted / n_block,
        refined=cfg.refine,
    )
    return out, record


def apply_operator(inst, partition, lib, cfg: GenConfig, rng):
    """Dispatch one concrete operator; balanced-thirds is a batch policy,
    resolve it with ops_for_count first."""
    if cfg.operator == "reduce":
        return reduce(inst, partition, cfg, rng)
    if cfg.operator == "mixup":
        return mixup(inst, partition, lib, cfg, rng)
    if cfg.operator == "expand":
        return expand(inst, partition, lib, cfg, rng)
    raise ValueError(f"operator {cfg.operator!r} is not directly applicable")


def ops_for_count(count: int) -> list:
    """Balanced-thirds schedule: rotate the three operators, remainder
    outputs go to mixup."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    whole = count - count % 3
    ops = ["reduce", "mixup", "expand"] * (whole // 3)
    ops.extend(["mixup"] * (count % 3))
    return ops
