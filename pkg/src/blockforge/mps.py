"""MPS reader and writer.

parse_mps accepts free-form MPS (whitespace-tokenized); write_mps emits a
fixed-layout file with deterministic ordering and shortest round-trip float
formatting, so identical instances produce byte-identical output.

Conventions honored on parse:
  - variables inside INTORG/INTEND markers default to bounds [0, 1] and kind
    "integer"; BV makes a variable "binary"; everything else is continuous
    with default bounds [0, +inf)
  - the first N row is the objective; additional N rows are accepted and
    their entries dropped
  - RANGES rows are expanded into two single-sense rows (companion row named
    with suffix __rlo or __rhi), keeping one row per constraint
  - an RHS entry on the objective row (objective constant) is ignored
  - UP with a negative value does not flip the lower bound to -inf; the
    value is taken literally

The "implicit-integer" kind has no MPS encoding and is written as a plain
integer variable.
"""
from __future__ import annotations

import math

import numpy as np

from .model import (
    INTEGER_KINDS,
    InvalidInstanceError,
    MilpInstance,
    validate,
)

_SENSE_FROM_TYPE = {"L": "<=", "G": ">=", "E": "="}
_TYPE_FROM_SENSE = {v: k for k, v in _SENSE_FROM_TYPE.items()}

_SECTIONS = {"NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA"}


class MpsParseError(ValueError):
    def __init__(self, message: str, line_no: int):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


def _fmt(value: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(value))


def parse_mps(data: bytes | str) -> MilpInstance:
    if isinstance(data, bytes):
        text = data.decode("utf-8", errors="replace")
    else:
        text = data

    name = ""
    obj_row: str | None = None
    free_rows: set[str] = set()
    row_index: dict[str, int] = {}
    row_senses: list[str] = []
    row_order: list[str] = []

    col_index: dict[str, int] = {}
    col_order: list[str] = []
    objective: dict[int, float] = {}
    entries: dict[tuple[int, int], float] = {}
    entry_order: list[tuple[int, int]] = []

    rhs: dict[int, float] = {}
    ranges: dict[int, float] = {}

    integer_cols: set[int] = set()
    binary_cols: set[int] = set()
    lower: dict[int, float] = {}
    upper: dict[int, float] = {}

    in_marker = False
    section = None

    def col_id(tok: str, line_no: int, create: bool) -> int:
        if tok in col_index:
            return col_index[tok]
        if not create:
            raise MpsParseError(f"unknown column {tok!r}", line_no)
        j = len(col_order)
        col_index[tok] = j
        col_order.append(tok)
        if in_marker:
            integer_cols.add(j)
        return j

    def row_id(tok: str, line_no: int) -> int:
        if tok not in row_index:
            raise MpsParseError(f"unknown row {tok!r}", line_no)
        return row_index[tok]

    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        is_header = not raw[0].isspace()
        tokens = raw.split()

        if is_header:
            head = tokens[0].upper()
            if head not in _SECTIONS:
                raise MpsParseError(f"unknown section {tokens[0]!r}", line_no)
            if head == "ENDATA":
                section = "ENDATA"
                break
            section = head
            if head == "NAME" and len(tokens) > 1:
                name = tokens[1]
            continue

        if section == "NAME":
            continue
        if section == "OBJSENSE":
            if tokens[0].upper() in ("MAX", "MAXIMIZE"):
                raise MpsParseError("OBJSENSE MAXIMIZE is not supported", line_no)
            continue
        if section == "ROWS":
            if len(tokens) < 2:
                raise MpsParseError("malformed ROWS line", line_no)
            rtype, rname = tokens[0].upper(), tokens[1]
            if rname in row_index or rname == obj_row or rname in free_rows:
                raise MpsParseError(f"duplicate row name {rname!r}", line_no)
            if rtype == "N":
                if obj_row is None:
                    obj_row = rname
                else:
                    free_rows.add(rname)
            elif rtype in _SENSE_FROM_TYPE:
                row_index[rname] = len(row_order)
                row_order.append(rname)
                row_senses.append(_SENSE_FROM_TYPE[rtype])
            else:
                raise MpsParseError(f"unknown row type {rtype!r}", line_no)
            continue
        if section == "COLUMNS":
            if "'MARKER'" in tokens:
                if "'INTORG'" in tokens:
                    in_marker = True
                elif "'INTEND'" in tokens:
                    in_marker = False
                else:
                    raise MpsParseError("marker line without INTORG/INTEND", line_no)
                continue
            if len(tokens) < 3 or len(tokens) % 2 == 0:
                raise MpsParseError("malformed COLUMNS line", line_no)
            j = col_id(tokens[0], line_no, create=True)
            for rname, vtok in zip(tokens[1::2], tokens[2::2]):
                try:
                    value = float(vtok)
                except ValueError:
                    raise MpsParseError(f"bad numeric literal {vtok!r}", line_no) from None
                if rname == obj_row:
                    if j in objective:
                        raise MpsParseError(f"duplicate objective entry for {tokens[0]!r}", line_no)
                    objective[j] = value
                elif rname in free_rows:
                    continue
                else:
                    i = row_id(rname, line_no)
                    if (i, j) in entries:
                        raise MpsParseError(
                            f"duplicate entry for ({rname!r}, {tokens[0]!r})", line_no)
                    entries[(i, j)] = value
                    entry_order.append((i, j))
            continue
        if section in ("RHS", "RANGES"):
            target = rhs if section == "RHS" else ranges
            if len(tokens) < 3 or len(tokens) % 2 == 0:
                raise MpsParseError(f"malformed {section} line", line_no)
            for rname, vtok in zip(tokens[1::2], tokens[2::2]):
                try:
                    value = float(vtok)
                except ValueError:
                    raise MpsParseError(f"bad numeric literal {vtok!r}", line_no) from None
                if rname == obj_row or rname in free_rows:
                    continue  # objective constant, dropped
                i = row_id(rname, line_no)
                if i in target:
                    raise MpsParseError(f"duplicate {section} entry for {rname!r}", line_no)
                target[i] = value
            continue
        if section == "BOUNDS":
            if len(tokens) < 3:
                raise MpsParseError("malformed BOUNDS line", line_no)
            btype = tokens[0].upper()
            j = col_id(tokens[2], line_no, create=False)
            needs_value = btype in ("UP", "LO", "FX", "LI", "UI")
            if needs_value:
                if len(tokens) < 4:
                    raise MpsParseError(f"{btype} bound needs a value", line_no)
                try:
                    value = float(tokens[3])
                except ValueError:
                    raise MpsParseError(f"bad numeric literal {tokens[3]!r}", line_no) from None
            if btype == "UP":
                upper[j] = value
            elif btype == "LO":
                lower[j] = value
            elif btype == "FX":
                lower[j] = upper[j] = value
            elif btype == "FR":
                lower[j] = -math.inf
                upper[j] = math.inf
            elif btype == "MI":
                lower[j] = -math.inf
            elif btype == "PL":
                upper[j] = math.inf
            elif btype == "BV":
                binary_cols.add(j)
                integer_cols.add(j)
                lower.setdefault(j, 0.0)
                upper.setdefault(j, 1.0)
            elif btype in ("LI", "UI"):
                integer_cols.add(j)
                if btype == "LI":
                    lower[j] = value
                else:
                    upper[j] = value
            else:
                raise MpsParseError(f"unknown bound type {btype!r}", line_no)
            continue
        raise MpsParseError(f"data line outside any section: {raw.strip()!r}", line_no)

    n = len(col_order)
    m = len(row_order)

    kinds = []
    lo = np.zeros(n)
    hi = np.zeros(n)
    for j in range(n):
        if j in binary_cols:
            kinds.append("binary")
        elif j in integer_cols:
            kinds.append("integer")
        else:
            kinds.append("continuous")
        default_hi = 1.0 if j in integer_cols else math.inf
        lo[j] = lower.get(j, 0.0)
        hi[j] = upper.get(j, default_hi)

    obj = np.zeros(n)
    for j, v in objective.items():
        obj[j] = v

    rhs_arr = np.zeros(m)
    for i, v in rhs.items():
        rhs_arr[i] = v

    # RANGES expansion: every ranged row becomes a <=/>= pair. The companion
    # row keeps all coefficients and sits directly after the original.
    new_index_of: list[int] = []
    out_names: list[str] = []
    out_senses: list[str] = []
    out_rhs: list[float] = []
    companions: list[tuple[int, int]] = []  # (original row, companion row)
    for i in range(m):
        new_index_of.append(len(out_names))
        if i not in ranges:
            out_names.append(row_order[i])
            out_senses.append(row_senses[i])
            out_rhs.append(rhs_arr[i])
            continue
        r = ranges[i]
        b = rhs_arr[i]
        sense = row_senses[i]
        if sense == "<=":
            lo_rhs, hi_rhs = b - abs(r), b
        elif sense == ">=":
            lo_rhs, hi_rhs = b, b + abs(r)
        else:  # "="
            lo_rhs, hi_rhs = (b, b + r) if r >= 0 else (b + r, b)
        out_names.append(row_order[i])
        if sense == ">=":
            out_senses.append(">=")
            out_rhs.append(lo_rhs)
            companion = (row_order[i] + "__rhi", "<=", hi_rhs)
        else:
            out_senses.append("<=")
            out_rhs.append(hi_rhs)
            companion = (row_order[i] + "__rlo", ">=", lo_rhs)
        companions.append((i, len(out_names)))
        out_names.append(companion[0])
        out_senses.append(companion[1])
        out_rhs.append(companion[2])

    rows_arr: list[int] = []
    cols_arr: list[int] = []
    vals_arr: list[float] = []
    companion_of = dict(companions)
    for (i, j) in entry_order:
        rows_arr.append(new_index_of[i])
        cols_arr.append(j)
        vals_arr.append(entries[(i, j)])
        if i in companion_of:
            rows_arr.append(companion_of[i])
            cols_arr.append(j)
            vals_arr.append(entries[(i, j)])

    return MilpInstance(
        name=name,
        objective=obj,
        ccm_rows=np.asarray(rows_arr, dtype=np.int64),
        ccm_cols=np.asarray(cols_arr, dtype=np.int64),
        ccm_vals=np.asarray(vals_arr, dtype=np.float64),
        senses=tuple(out_senses),
        rhs=np.asarray(out_rhs, dtype=np.float64),
        lower_bounds=lo,
        upper_bounds=hi,
        var_kinds=tuple(kinds),
        row_names=tuple(out_names),
        col_names=tuple(col_order),
    )


def write_mps(inst: MilpInstance) -> bytes:
    report = validate(inst)
    if not report.ok:
        raise InvalidInstanceError(report)
    for nm in (*inst.row_names, *inst.col_names, inst.name):
        if any(ch.isspace() for ch in nm):
            raise ValueError(f"name {nm!r} contains whitespace, not representable in MPS")

    obj_name = "OBJ"
    taken = set(inst.row_names)
    k = 0
    while obj_name in taken:
        obj_name = f"OBJ{k}"
        k += 1

    lines: list[str] = []
    lines.append(f"NAME          {inst.name}".rstrip())
    lines.append("ROWS")
    lines.append(f" N  {obj_name}")
    for i, sense in enumerate(inst.senses):
        lines.append(f" {_TYPE_FROM_SENSE[sense]}  {inst.row_names[i]}")

    by_col: dict[int, list[tuple[int, float]]] = {}
    for r, c, v in zip(inst.ccm_rows, inst.ccm_cols, inst.ccm_vals):
        by_col.setdefault(int(c), []).append((int(r), float(v)))

    lines.append("COLUMNS")
    in_marker = False
    marker_count = 0

    def entry(a: str, b: str, v: float) -> str:
        return f"    {a:<8} {b:<8} {_fmt(v)}"

    for j in range(inst.num_cols):
        is_int = inst.var_kinds[j] in INTEGER_KINDS
        if is_int and not in_marker:
            lines.append(f"    M{marker_count:04d}    'MARKER' 'INTORG'")
            marker_count += 1
            in_marker = True
        elif not is_int and in_marker:
            lines.append(f"    M{marker_count:04d}    'MARKER' 'INTEND'")
            marker_count += 1
            in_marker = False
        col = inst.col_names[j]
        col_entries = sorted(by_col.get(j, []))
        obj_v = float(inst.objective[j])
        # A column must appear in COLUMNS to exist; emit an explicit zero
        # objective entry when it has no other coefficients.
        if obj_v != 0.0 or not col_entries:
            lines.append(entry(col, obj_name, obj_v))
        for r, v in col_entries:
            lines.append(entry(col, inst.row_names[r], v))
    if in_marker:
        lines.append(f"    M{marker_count:04d}    'MARKER' 'INTEND'")

    lines.append("RHS")
    for i in range(inst.num_rows):
        if float(inst.rhs[i]) != 0.0:
            lines.append(entry("RHS", inst.row_names[i], float(inst.rhs[i])))

    lines.append("BOUNDS")
    for j in range(inst.num_cols):
        col = inst.col_names[j]
        lo = float(inst.lower_bounds[j])
        hi = float(inst.upper_bounds[j])
        kind = inst.var_kinds[j]
        if kind == "binary":
            lines.append(f" BV BND      {col}")
            if lo != 0.0:
                lines.append(f" LO BND      {col:<8} {_fmt(lo)}")
            if hi != 1.0:
                lines.append(f" UP BND      {col:<8} {_fmt(hi)}")
        elif kind in INTEGER_KINDS:
            # always explicit so the in-marker [0,1] default never applies
            if lo == hi:
                lines.append(f" FX BND      {col:<8} {_fmt(lo)}")
            else:
                if math.isinf(lo):
                    lines.append(f" MI BND      {col}")
                else:
                    lines.append(f" LO BND      {col:<8} {_fmt(lo)}")
                if math.isinf(hi):
                    lines.append(f" PL BND      {col}")
                else:
                    lines.append(f" UP BND      {col:<8} {_fmt(hi)}")
        else:
            if lo == hi:
                lines.append(f" FX BND      {col:<8} {_fmt(lo)}")
            elif math.isinf(lo) and math.isinf(hi):
                lines.append(f" FR BND      {col}")
            else:
                if math.isinf(lo):
                    lines.append(f" MI BND      {col}")
                elif lo != 0.0:
                    lines.append(f" LO BND      {col:<8} {_fmt(lo)}")
                if not math.isinf(hi):
                    lines.append(f" UP BND      {col:<8} {_fmt(hi)}")

    lines.append("ENDATA")
    return ("\n".join(lines) + "\n").encode("ascii")


def read_mps_file(path) -> MilpInstance:
    with open(path, "rb") as f:
        return parse_mps(f.read())


def write_mps_file(inst: MilpInstance, path) -> None:
    with open(path, "wb") as f:
        f.write(write_mps(inst))
