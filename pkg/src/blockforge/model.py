"""Canonical MILP data model and validation.

An instance holds min c'x subject to row-wise relations A x {<=,>=,=} b,
bounds l <= x <= u and per-variable kinds. The coefficient matrix A is kept
in coordinate form; rows and columns carry names so instances survive file
round trips unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

SENSES = ("<=", ">=", "=")
VAR_KINDS = ("binary", "integer", "implicit-integer", "continuous")
INTEGER_KINDS = ("binary", "integer", "implicit-integer")


@dataclass(frozen=True, eq=False)
class MilpInstance:
    """Immutable MILP problem data.

    ``ccm_rows/ccm_cols/ccm_vals`` are parallel coordinate arrays of the
    constraint coefficient matrix. Entries with value 0 may be stored (they
    survive serialization) but are ignored by graph and image views.
    """

    name: str
    objective: np.ndarray
    ccm_rows: np.ndarray
    ccm_cols: np.ndarray
    ccm_vals: np.ndarray
    senses: tuple[str, ...]
    rhs: np.ndarray
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    var_kinds: tuple[str, ...]
    row_names: tuple[str, ...]
    col_names: tuple[str, ...]

    def __post_init__(self):
        # Freeze array fields so shared instances really are immutable.
        for attr in ("objective", "ccm_rows", "ccm_cols", "ccm_vals",
                     "rhs", "lower_bounds", "upper_bounds"):
            arr = np.asarray(getattr(self, attr))
            if attr in ("ccm_rows", "ccm_cols"):
                arr = arr.astype(np.int64, copy=True)
            else:
                arr = arr.astype(np.float64, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "senses", tuple(self.senses))
        object.__setattr__(self, "var_kinds", tuple(self.var_kinds))
        object.__setattr__(self, "row_names", tuple(self.row_names))
        object.__setattr__(self, "col_names", tuple(self.col_names))

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    @property
    def num_cols(self) -> int:
        return len(self.objective)

    @property
    def nnz(self) -> int:
        """Count of stored entries with nonzero value."""
        return int(np.count_nonzero(self.ccm_vals))

    def to_coo(self) -> sp.coo_matrix:
        return sp.coo_matrix(
            (self.ccm_vals, (self.ccm_rows, self.ccm_cols)),
            shape=(self.num_rows, self.num_cols),
        )

    def to_csr(self) -> sp.csr_matrix:
        return self.to_coo().tocsr()

    def entries_sorted(self) -> list[tuple[int, int, float]]:
        """Stored entries in canonical (row, col) order."""
        order = np.lexsort((self.ccm_cols, self.ccm_rows))
        return [
            (int(self.ccm_rows[i]), int(self.ccm_cols[i]), float(self.ccm_vals[i]))
            for i in order
        ]

    def structurally_equal(self, other: "MilpInstance") -> bool:
        """Exact equality: names, senses, kinds, bit-equal numeric data,
        stored entries compared in canonical order."""
        if not isinstance(other, MilpInstance):
            return NotImplemented
        if (self.name != other.name
                or self.senses != other.senses
                or self.var_kinds != other.var_kinds
                or self.row_names != other.row_names
                or self.col_names != other.col_names):
            return False
        for a, b in ((self.objective, other.objective),
                     (self.rhs, other.rhs),
                     (self.lower_bounds, other.lower_bounds),
                     (self.upper_bounds, other.upper_bounds)):
            if a.shape != b.shape or not np.array_equal(a, b):
                return False
        return self.entries_sorted() == other.entries_sorted()


@dataclass
class ValidationReport:
    errors: list[tuple[str, str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def add_error(self, code: str, message: str, location: str) -> None:
        self.errors.append((code, message, location))

    def add_warning(self, code: str, message: str, location: str) -> None:
        self.warnings.append((code, message, location))

    def summary(self) -> str:
        lines = [f"{len(self.errors)} error(s), {len(self.warnings)} warning(s)"]
        for code, msg, loc in self.errors:
            lines.append(f"  ERROR {code} at {loc}: {msg}")
        for code, msg, loc in self.warnings:
            lines.append(f"  WARN  {code} at {loc}: {msg}")
        return "\n".join(lines)


class InvalidInstanceError(ValueError):
    """Raised when an operation refuses an instance that fails validate()."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("instance failed validation:\n" + report.summary())


def validate(inst: MilpInstance) -> ValidationReport:
    """Check every MilpInstance invariant; report is empty iff all hold."""
    rep = ValidationReport()
    m = inst.num_rows
    n = inst.num_cols

    if len(inst.senses) != m:
        rep.add_error("LEN_MISMATCH", f"senses length {len(inst.senses)} != m={m}", "senses")
    if len(inst.row_names) != m:
        rep.add_error("LEN_MISMATCH", f"row_names length {len(inst.row_names)} != m={m}", "row_names")
    for attr, want, what in (("lower_bounds", n, "n"), ("upper_bounds", n, "n")):
        if len(getattr(inst, attr)) != want:
            rep.add_error("LEN_MISMATCH", f"{attr} length != {what}={want}", attr)
    if len(inst.var_kinds) != n:
        rep.add_error("LEN_MISMATCH", f"var_kinds length {len(inst.var_kinds)} != n={n}", "var_kinds")
    if len(inst.col_names) != n:
        rep.add_error("LEN_MISMATCH", f"col_names length {len(inst.col_names)} != n={n}", "col_names")
    if not (len(inst.ccm_rows) == len(inst.ccm_cols) == len(inst.ccm_vals)):
        rep.add_error("LEN_MISMATCH", "coordinate arrays have differing lengths", "ccm")
        return rep  # entry-wise checks below would be meaningless

    for i, s in enumerate(inst.senses):
        if s not in SENSES:
            rep.add_error("BAD_SENSE", f"sense {s!r} not in {SENSES}", f"row {i}")
    for j, k in enumerate(inst.var_kinds):
        if k not in VAR_KINDS:
            rep.add_error("BAD_KIND", f"kind {k!r} not in {VAR_KINDS}", f"col {j}")

    bad_rows = (inst.ccm_rows < 0) | (inst.ccm_rows >= m)
    bad_cols = (inst.ccm_cols < 0) | (inst.ccm_cols >= n)
    for idx in np.flatnonzero(bad_rows | bad_cols):
        rep.add_error(
            "INDEX_RANGE",
            f"entry ({inst.ccm_rows[idx]}, {inst.ccm_cols[idx]}) outside {m}x{n}",
            f"ccm[{idx}]",
        )
    if not bad_rows.any() and not bad_cols.any() and len(inst.ccm_rows):
        keys = inst.ccm_rows * max(n, 1) + inst.ccm_cols
        uniq, counts = np.unique(keys, return_counts=True)
        for key in uniq[counts > 1]:
            r, c = divmod(int(key), max(n, 1))
            rep.add_error("DUP_ENTRY", f"duplicate entry at ({r}, {c})", f"ccm ({r},{c})")

    for idx in np.flatnonzero(~np.isfinite(inst.ccm_vals)):
        rep.add_error("NONFINITE", "coefficient not finite", f"ccm[{idx}]")
    for idx in np.flatnonzero(~np.isfinite(inst.objective)):
        rep.add_error("NONFINITE", "objective coefficient not finite", f"col {idx}")
    for idx in np.flatnonzero(~np.isfinite(inst.rhs)):
        rep.add_error("NONFINITE", "rhs not finite", f"row {idx}")

    nb = min(len(inst.lower_bounds), len(inst.upper_bounds), n, len(inst.var_kinds))
    for j in range(nb):
        lo, hi = inst.lower_bounds[j], inst.upper_bounds[j]
        if math.isnan(lo) or math.isnan(hi):
            rep.add_error("NONFINITE", "bound is NaN", f"col {j}")
            continue
        if inst.var_kinds[j] == "binary" and not (lo >= 0 and hi <= 1):
            rep.add_error("BINARY_BOUNDS", f"binary bounds [{lo}, {hi}] outside [0, 1]", f"col {j}")
        if lo > hi:
            rep.add_warning("BOUND_ORDER", f"lower {lo} > upper {hi}", f"col {j}")
    return rep


def basic_stats(inst: MilpInstance) -> tuple[int, int, int, int]:
    """(m, n, nnz, integer_count) where integer_count spans all integer kinds."""
    integer_count = sum(1 for k in inst.var_kinds if k in INTEGER_KINDS)
    return inst.num_rows, inst.num_cols, inst.nnz, integer_count


def make_instance(
    name: str,
    objective: Sequence[float],
    entries: Iterable[tuple[int, int, float]],
    senses: Sequence[str],
    rhs: Sequence[float],
    lower_bounds: Sequence[float] | None = None,
    upper_bounds: Sequence[float] | None = None,
    var_kinds: Sequence[str] | None = None,
    row_names: Sequence[str] | None = None,
    col_names: Sequence[str] | None = None,
) -> MilpInstance:
    """Convenience constructor with sensible defaults (binary vars, [0,1])."""
    n = len(objective)
    m = len(rhs)
    entries = list(entries)
    kinds = tuple(var_kinds) if var_kinds is not None else ("binary",) * n
    if lower_bounds is None:
        lower_bounds = [0.0] * n
    if upper_bounds is None:
        upper_bounds = [1.0 if k == "binary" else math.inf for k in kinds]
    return MilpInstance(
        name=name,
        objective=np.asarray(objective, dtype=np.float64),
        ccm_rows=np.asarray([e[0] for e in entries], dtype=np.int64),
        ccm_cols=np.asarray([e[1] for e in entries], dtype=np.int64),
        ccm_vals=np.asarray([e[2] for e in entries], dtype=np.float64),
        senses=tuple(senses),
        rhs=np.asarray(rhs, dtype=np.float64),
        lower_bounds=np.asarray(lower_bounds, dtype=np.float64),
        upper_bounds=np.asarray(upper_bounds, dtype=np.float64),
        var_kinds=kinds,
        row_names=tuple(row_names) if row_names is not None else tuple(f"r{i}" for i in range(m)),
        col_names=tuple(col_names) if col_names is not None else tuple(f"x{j}" for j in range(n)),
    )
