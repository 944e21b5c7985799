"""Constraint/variable classification, reordering and block decomposition.

The pipeline is: feature-based classification of rows into master (M-Cons),
block (B-Cons) and doubly-block (DB-Cons) constraints and of columns into
block (Bl-Vars) and bordered (Bd-Vars) variables; grouping of the block
region into connected components to expose the diagonal; a column-scan that
cuts merged blocks apart by detecting line endpoints in the bitmap; and the
final assembly into a partition with a repair step for rows that refuse to
fit a single block.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import MilpInstance

DEFAULT_PHI = (0.75, 0.75, 0.5, 0.2, 0.5)
DEFAULT_ZETA = 3


class DecompositionFailed(RuntimeError):
    """No usable block structure: most rows ended up master constraints."""


class PartitionError(ValueError):
    """A partition violates its structural invariants."""


def _to_pattern(a) -> sp.csr_matrix:
    """Boolean nonzero pattern as CSR, explicit zeros dropped."""
    if isinstance(a, MilpInstance):
        mat = a.to_coo().tocsr()
    elif sp.issparse(a):
        mat = a.tocsr().copy()
    else:
        mat = sp.csr_matrix(np.asarray(a))
    mat.eliminate_zeros()
    pattern = mat.astype(bool)
    pattern.eliminate_zeros()
    return pattern


def _minmax_normalize(raw: np.ndarray) -> np.ndarray:
    """Per-column min-max scaling; a column with no spread maps to all zeros."""
    out = np.zeros_like(raw)
    for k in range(raw.shape[1]):
        col = raw[:, k]
        lo, hi = col.min(), col.max()
        if hi > lo:
            out[:, k] = (col - lo) / (hi - lo)
    return out


@dataclass(frozen=True)
class RowFeatures:
    """Per row: [std of nonzero col indices, density, index range].

    ``raw`` holds the unscaled values (std is the population std, range and
    density are divided by n); ``normalized`` is raw min-max scaled per
    feature across all rows and is what classification consumes.
    """
    raw: np.ndarray
    normalized: np.ndarray


@dataclass(frozen=True)
class ColFeatures:
    """Per column: [index range, density], raw and min-max normalized."""
    raw: np.ndarray
    normalized: np.ndarray


def compute_row_features(a) -> RowFeatures:
    pattern = _to_pattern(a)
    m, n = pattern.shape
    if m == 0 or n == 0:
        raise ValueError("cannot compute features of an empty matrix")
    raw = np.zeros((m, 3))
    indptr, indices = pattern.indptr, pattern.indices
    for i in range(m):
        xs = indices[indptr[i]:indptr[i + 1]]
        if len(xs) == 0:
            continue
        raw[i, 0] = np.std(xs) if len(xs) > 1 else 0.0
        raw[i, 1] = len(xs) / n
        raw[i, 2] = (xs.max() - xs.min()) / n
    return RowFeatures(raw=raw, normalized=_minmax_normalize(raw))


def compute_col_features(a) -> ColFeatures:
    pattern = _to_pattern(a).tocsc()
    m, n = pattern.shape
    if m == 0 or n == 0:
        raise ValueError("cannot compute features of an empty matrix")
    raw = np.zeros((n, 2))
    indptr, indices = pattern.indptr, pattern.indices
    for j in range(n):
        ys = indices[indptr[j]:indptr[j + 1]]
        if len(ys) == 0:
            continue
        raw[j, 0] = (ys.max() - ys.min()) / m
        raw[j, 1] = len(ys) / m
    return ColFeatures(raw=raw, normalized=_minmax_normalize(raw))


@dataclass(frozen=True)
class Classification:
    m_cons: tuple[int, ...]
    b_cons: tuple[int, ...]
    db_cons: tuple[int, ...]
    bl_vars: tuple[int, ...]
    bd_vars: tuple[int, ...]


def classify(a, phi=DEFAULT_PHI, detect_db: bool = False) -> Classification:
    """Threshold classification of rows and columns.

    With detect_db, a column is a Bd-Var when its normalized range exceeds
    phi[0] and its normalized density exceeds phi[1]; rows containing a
    Bd-Var become DB-Cons. Every other row is an M-Con when all three of
    its normalized features exceed (phi[2], phi[3], phi[4]), else a B-Con.
    """
    phi = tuple(float(p) for p in phi)
    if len(phi) != 5 or any(not (0.0 <= p <= 1.0) for p in phi):
        raise ValueError(f"thresholds must be five values in [0, 1], got {phi}")
    pattern = _to_pattern(a)
    m, n = pattern.shape
    row_feat = compute_row_features(pattern).normalized
    col_feat = compute_col_features(pattern).normalized

    bd_vars: list[int] = []
    if detect_db:
        for j in range(n):
            if col_feat[j, 0] > phi[0] and col_feat[j, 1] > phi[1]:
                bd_vars.append(j)
    bd_set = set(bd_vars)
    bl_vars = [j for j in range(n) if j not in bd_set]

    db_rows: set[int] = set()
    if bd_vars:
        csc = pattern.tocsc()
        for j in bd_vars:
            db_rows.update(int(i) for i in csc.indices[csc.indptr[j]:csc.indptr[j + 1]])

    m_cons: list[int] = []
    b_cons: list[int] = []
    for i in range(m):
        if i in db_rows:
            continue
        if row_feat[i, 0] > phi[2] and row_feat[i, 1] > phi[3] and row_feat[i, 2] > phi[4]:
            m_cons.append(i)
        else:
            b_cons.append(i)

    return Classification(
        m_cons=tuple(m_cons),
        b_cons=tuple(b_cons),
        db_cons=tuple(sorted(db_rows)),
        bl_vars=tuple(bl_vars),
        bd_vars=tuple(bd_vars),
    )


@dataclass(frozen=True)
class Reordering:
    row_perm: tuple[int, ...]  # position -> original row
    col_perm: tuple[int, ...]
    method: str = "component-grouping"


def _block_components(pattern: sp.csr_matrix, block_rows, block_cols):
    """Connected components of the row-column incidence restricted to the
    block region. Returns a list of (rows, cols) with rows/cols ascending,
    ordered by smallest member column; row-only components come last,
    ordered by smallest member row."""
    block_rows = list(block_rows)
    block_cols = list(block_cols)
    rpos = {r: k for k, r in enumerate(block_rows)}
    cpos = {c: k for k, c in enumerate(block_cols)}
    nr, nc = len(block_rows), len(block_cols)
    if nr + nc == 0:
        return []

    coo = pattern.tocoo()
    rows_sel = []
    cols_sel = []
    for r, c in zip(coo.row, coo.col):
        if int(r) in rpos and int(c) in cpos:
            rows_sel.append(rpos[int(r)])
            cols_sel.append(cpos[int(c)] + nr)
    adj = sp.coo_matrix(
        (np.ones(len(rows_sel)), (rows_sel, cols_sel)), shape=(nr + nc, nr + nc)
    )
    ncomp, labels = sp.csgraph.connected_components(adj, directed=False)

    comp_rows: dict[int, list[int]] = {}
    comp_cols: dict[int, list[int]] = {}
    for k, r in enumerate(block_rows):
        comp_rows.setdefault(labels[k], []).append(r)
    for k, c in enumerate(block_cols):
        comp_cols.setdefault(labels[nr + k], []).append(c)

    comps = []
    for label in range(ncomp):
        rows = sorted(comp_rows.get(label, []))
        cols = sorted(comp_cols.get(label, []))
        comps.append((rows, cols))
    with_cols = sorted((c for c in comps if c[1]), key=lambda c: c[1][0])
    row_only = sorted((c for c in comps if not c[1] and c[0]), key=lambda c: c[0][0])
    return with_cols + row_only


def reorder(inst, classification: Classification) -> Reordering:
    """Group block rows/cols so each incidence component is contiguous;
    master rows and bordered columns go last."""
    pattern = _to_pattern(inst)
    block_rows = sorted(set(classification.b_cons) | set(classification.db_cons))
    comps = _block_components(pattern, block_rows, classification.bl_vars)

    row_perm: list[int] = []
    col_perm: list[int] = []
    for rows, cols in comps:
        row_perm.extend(rows)
        col_perm.extend(cols)
    # columns in no component (no nonzero in the block region) keep order
    placed_cols = set(col_perm)
    col_perm.extend(c for c in classification.bl_vars if c not in placed_cols)
    placed_rows = set(row_perm)
    row_perm.extend(r for r in block_rows if r not in placed_rows)
    row_perm.extend(sorted(classification.m_cons))
    col_perm.extend(sorted(classification.bd_vars))
    return Reordering(row_perm=tuple(row_perm), col_perm=tuple(col_perm))


def partition_columns(img, zeta: int = DEFAULT_ZETA) -> list[tuple[int, int]]:
    """Column cut scan over a bitmap of the reordered block region.

    Scanning columns left to right (rows top to bottom inside a column), a
    cut is placed after column j when some white pixel (i, j) ends a line:

      Criterion 1 (diagonal run):  (i-1,j-1) ... (i-zeta,j-zeta) all white
                                   and (i+1,j+1) black
      Criterion 2 (vertical run):  (i-1,j) ... (i-zeta,j) all white
                                   and (i+1,j) black

    Every pixel a criterion references must lie inside the image; a run or
    follow pixel falling outside the frame never fires (a lone solid block
    therefore yields a single range). Returns half-open [start, end) column
    ranges covering the full width.
    """
    if zeta < 1:
        raise ValueError(f"zeta must be >= 1, got {zeta}")
    white = np.asarray(img.pixels if hasattr(img, "pixels") else img) == 255
    h, w = white.shape
    if w == 0:
        return []
    if h == 0:
        return [(0, w)]

    # run lengths of consecutive white pixels above / up-left of each cell
    up = np.zeros((h, w), dtype=np.int32)
    diag = np.zeros((h, w), dtype=np.int32)
    for i in range(1, h):
        up[i, :] = (up[i - 1, :] + 1) * white[i - 1, :]
        diag[i, 1:] = (diag[i - 1, :-1] + 1) * white[i - 1, :-1]

    fire = np.zeros((h, w), dtype=bool)
    # criterion 2: vertical run, follow pixel (i+1, j) must exist and be black
    fire[: h - 1, :] |= white[: h - 1, :] & (up[: h - 1, :] >= zeta) & ~white[1:, :]
    # criterion 1: diagonal run, follow pixel (i+1, j+1) must exist and be black
    fire[: h - 1, : w - 1] |= (
        white[: h - 1, : w - 1]
        & (diag[: h - 1, : w - 1] >= zeta)
        & ~white[1:, 1:]
    )

    ranges: list[tuple[int, int]] = []
    p = 0
    for j in np.flatnonzero(fire.any(axis=0)):
        ranges.append((p, int(j) + 1))
        p = int(j) + 1
    if p < w:
        ranges.append((p, w))
    return ranges


@dataclass(frozen=True)
class PartitionUnit:
    rows: tuple[int, ...]      # block rows (B-Cons and DB-Cons) of this unit
    cols: tuple[int, ...]      # block columns of this unit
    db_rows: tuple[int, ...] = ()  # subset of rows carrying border entries

    @property
    def width(self) -> int:
        return len(self.cols)


@dataclass(frozen=True)
class BlockPartition:
    units: tuple[PartitionUnit, ...]
    master_rows: tuple[int, ...]
    border_cols: tuple[int, ...]
    params: dict = field(default_factory=dict)

    @property
    def num_units(self) -> int:
        return len(self.units)

    def block_var_count(self) -> int:
        return sum(u.width for u in self.units)


def check_partition(inst, partition: BlockPartition) -> None:
    """Raise PartitionError unless all structural invariants hold."""
    pattern = _to_pattern(inst)
    m, n = pattern.shape

    col_owner: dict[int, int] = {}
    for k, unit in enumerate(partition.units):
        for c in unit.cols:
            if c in col_owner:
                raise PartitionError(f"column {c} in two units")
            col_owner[c] = k
    border = set(partition.border_cols)
    if border & set(col_owner):
        raise PartitionError("border column also owned by a unit")
    if set(range(n)) != border | set(col_owner):
        raise PartitionError("columns not covered by units + border")

    row_owner: dict[int, int] = {}
    for k, unit in enumerate(partition.units):
        for r in unit.rows:
            if r in row_owner:
                raise PartitionError(f"row {r} in two units")
            row_owner[r] = k
        if not set(unit.db_rows) <= set(unit.rows):
            raise PartitionError("db_rows not a subset of unit rows")
    masters = set(partition.master_rows)
    if masters & set(row_owner):
        raise PartitionError("master row also owned by a unit")
    if set(range(m)) != masters | set(row_owner):
        raise PartitionError("rows not covered by units + masters")

    coo = pattern.tocoo()
    for r, c in zip(coo.row, coo.col):
        r, c = int(r), int(c)
        if r in masters:
            continue  # master rows may touch any column (B_i strips and C)
        if c in border:
            continue  # F_i strip of the row's own unit
        if col_owner[c] != row_owner[r]:
            raise PartitionError(
                f"nonzero ({r}, {c}) crosses units {row_owner[r]} and {col_owner[c]}")


def decompose(
    inst,
    phi=DEFAULT_PHI,
    zeta: int = DEFAULT_ZETA,
    detect_db: bool = False,
    prune_straddling_cuts: bool = True,
    master_fraction_limit: float = 0.5,
) -> BlockPartition:
    """Classify, reorder and cut an instance into a block partition.

    Column cuts are the union of component boundaries and the column-scan
    cuts; with prune_straddling_cuts (default) a scan cut that would split
    some block row's nonzero span is discarded, which keeps solid blocks in
    one piece. Rows whose nonzeros end up spanning several units, and rows
    with no block-column nonzeros at all, are promoted to master rows.
    Raises DecompositionFailed when more than master_fraction_limit of all
    rows are master rows after repair.
    """
    pattern = _to_pattern(inst)
    m, n = pattern.shape
    cls = classify(pattern, phi=phi, detect_db=detect_db)

    block_rows = sorted(set(cls.b_cons) | set(cls.db_cons))
    comps = _block_components(pattern, block_rows, cls.bl_vars)

    # reordered block columns: component columns in component order
    col_order: list[int] = []
    comp_ends: list[int] = []
    for rows, cols in comps:
        col_order.extend(cols)
        if cols:
            comp_ends.append(len(col_order))
    placed = set(col_order)
    col_order.extend(c for c in cls.bl_vars if c not in placed)
    n_block = len(col_order)
    if n_block and comp_ends and comp_ends[-1] != n_block:
        comp_ends.append(n_block)
    if n_block and not comp_ends:
        comp_ends.append(n_block)

    # reordered block rows: component rows first, stragglers after
    row_order: list[int] = []
    for rows, _ in comps:
        row_order.extend(rows)
    placed_r = set(row_order)
    row_order.extend(r for r in block_rows if r not in placed_r)

    # bitmap of the block region only
    cpos = {c: k for k, c in enumerate(col_order)}
    sub = np.zeros((len(row_order), n_block), dtype=bool)
    csr = pattern
    for ii, r in enumerate(row_order):
        for c in csr.indices[csr.indptr[r]:csr.indptr[r + 1]]:
            k = cpos.get(int(c))
            if k is not None:
                sub[ii, k] = True
    scan_ends = [e for _, e in partition_columns(_Bitmap(sub), zeta=zeta)]

    # block rows' spans in reordered coordinates, for the straddle filter
    spans = []
    for ii in range(sub.shape[0]):
        js = np.flatnonzero(sub[ii])
        if len(js):
            spans.append((int(js[0]), int(js[-1])))

    def straddles(t: int) -> bool:
        return any(lo < t <= hi for lo, hi in spans)

    ends = set(comp_ends)
    for t in scan_ends:
        if t == n_block or not prune_straddling_cuts or not straddles(t):
            ends.add(t)
    cut_ends = sorted(e for e in ends if 0 < e <= n_block)

    units_cols: list[list[int]] = []
    start = 0
    unit_of_col: dict[int, int] = {}
    for e in cut_ends:
        cols = [col_order[k] for k in range(start, e)]
        for c in cols:
            unit_of_col[c] = len(units_cols)
        units_cols.append(cols)
        start = e

    db_set = set(cls.db_cons)
    units_rows: list[list[int]] = [[] for _ in units_cols]
    extra_masters: list[int] = []
    for r in block_rows:
        owners = {
            unit_of_col[int(c)]
            for c in csr.indices[csr.indptr[r]:csr.indptr[r + 1]]
            if int(c) in unit_of_col
        }
        if len(owners) == 1:
            units_rows[owners.pop()].append(r)
        else:
            extra_masters.append(r)  # spans several units, or no block cols

    units = tuple(
        PartitionUnit(
            rows=tuple(rows),
            cols=tuple(cols),
            db_rows=tuple(r for r in rows if r in db_set),
        )
        for rows, cols in zip(units_rows, units_cols)
    )
    master_rows = tuple(sorted(set(cls.m_cons) | set(extra_masters)))

    if m and len(master_rows) > master_fraction_limit * m:
        raise DecompositionFailed(
            f"{len(master_rows)}/{m} rows classified master, structure absent")

    partition = BlockPartition(
        units=units,
        master_rows=master_rows,
        border_cols=tuple(sorted(cls.bd_vars)),
        params={
            "phi": list(phi),
            "zeta": zeta,
            "detect_db": detect_db,
            "prune_straddling_cuts": prune_straddling_cuts,
        },
    )
    check_partition(pattern, partition)
    return partition


class _Bitmap:
    """Minimal pixels holder for partition_columns."""

    def __init__(self, white: np.ndarray):
        self.pixels = np.where(white, 255, 0).astype(np.uint8)


def trivial_partition(inst) -> BlockPartition:
    """Single-unit fallback: everything in one block, no masters/borders."""
    pattern = _to_pattern(inst)
    m, n = pattern.shape
    return BlockPartition(
        units=(PartitionUnit(rows=tuple(range(m)), cols=tuple(range(n))),),
        master_rows=(),
        border_cols=(),
        params={"trivial": True},
    )


def partitions_match(a: BlockPartition, b: BlockPartition) -> bool:
    """Equality up to unit reordering (index-set identity)."""
    ua = {(frozenset(u.rows), frozenset(u.cols)) for u in a.units}
    ub = {(frozenset(u.rows), frozenset(u.cols)) for u in b.units}
    return (
        ua == ub
        and set(a.master_rows) == set(b.master_rows)
        and set(a.border_cols) == set(b.border_cols)
    )


def unit_membership_scores(detected: BlockPartition, truth: BlockPartition):
    """(precision, recall) of exact unit recovery: a detected unit counts as
    correct when its row and column sets match a planted unit exactly."""
    det = {(frozenset(u.rows), frozenset(u.cols)) for u in detected.units}
    tru = {(frozenset(u.rows), frozenset(u.cols)) for u in truth.units}
    if not det or not tru:
        return 0.0, 0.0
    hit = len(det & tru)
    return hit / len(det), hit / len(tru)


def partition_to_json(partition: BlockPartition) -> str:
    doc = {
        "units": [
            {"rows": list(u.rows), "cols": list(u.cols), "db_rows": list(u.db_rows)}
            for u in partition.units
        ],
        "master_rows": list(partition.master_rows),
        "border_cols": list(partition.border_cols),
        "params": partition.params,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def partition_from_json(text: str) -> BlockPartition:
    doc = json.loads(text)
    return BlockPartition(
        units=tuple(
            PartitionUnit(
                rows=tuple(u["rows"]),
                cols=tuple(u["cols"]),
                db_rows=tuple(u.get("db_rows", ())),
            )
            for u in doc["units"]
        ),
        master_rows=tuple(doc["master_rows"]),
        border_cols=tuple(doc["border_cols"]),
        params=doc.get("params", {}),
    )
