"""Block-unit extraction, lossless reassembly, and the structure library.

A block unit is stored position-free in local coordinates: the diagonal
strip D as (local row, local col, value) entries, coupling strips keyed by
master-row ordinal (B_i) and border-column ordinal (F_i), plus the rhs,
sense, objective, kind and bound slices it owns. The host frame keeps
everything else (master rows, border columns, the master-by-border C block,
and the original index layout) so that frame + units reproduce the source
instance exactly.
"""
from __future__ import annotations

import gzip
import hashlib
import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .model import MilpInstance
from .detect import BlockPartition, check_partition

LIBRARY_FORMAT = "blockforge-library"
LIBRARY_VERSION = 1


class LibraryFormatError(ValueError):
    """Unreadable or wrong-version library payload."""


@dataclass(frozen=True)
class BlockUnit:
    width: int
    entries: tuple                 # D strip: (local row, local col, value)
    senses: tuple
    rhs: tuple
    objective: tuple               # per local column
    kinds: tuple
    lower: tuple
    upper: tuple
    row_names: tuple
    col_names: tuple
    mcons_strip: tuple = ()        # B_i: (master ordinal, local col, value)
    border_strip: tuple = ()       # F_i: (local row, border ordinal, value)
    db_rows: tuple = ()            # local rows that carry border entries
    source: tuple = ("", 0)        # (instance id, unit ordinal)

    def __post_init__(self):
        h = self.height
        if not (len(self.rhs) == len(self.row_names) == h):
            raise ValueError("row slice lengths disagree")
        w = self.width
        for name in ("objective", "kinds", "lower", "upper", "col_names"):
            if len(getattr(self, name)) != w:
                raise ValueError(f"{name} length != width")
        for r, c, _ in self.entries:
            if not (0 <= r < h and 0 <= c < w):
                raise ValueError(f"local entry ({r}, {c}) out of range")
        for _, c, _ in self.mcons_strip:
            if not 0 <= c < w:
                raise ValueError("mcons_strip column out of range")
        for r, _, _ in self.border_strip:
            if not 0 <= r < h:
                raise ValueError("border_strip row out of range")
        if not set(self.db_rows) <= set(range(h)):
            raise ValueError("db_rows out of range")

    @property
    def height(self) -> int:
        return len(self.senses)

    @property
    def m1(self) -> int:
        """Distinct master-row ordinals this unit couples into."""
        return len({mo for mo, _, _ in self.mcons_strip})

    @property
    def nnz(self) -> int:
        return len(self.entries) + len(self.mcons_strip) + len(self.border_strip)

    def nontrivial_rows(self) -> tuple:
        """Local rows whose coefficients include values outside {0, -1, 1},
        scanning both the D strip and the border strip."""
        flagged = set()
        for r, _, v in self.entries:
            if v not in (0.0, 1.0, -1.0):
                flagged.add(r)
        for r, _, v in self.border_strip:
            if v not in (0.0, 1.0, -1.0):
                flagged.add(r)
        return tuple(sorted(flagged))


@dataclass(frozen=True)
class HostFrame:
    """Everything of an instance that is not inside a block unit."""
    name: str
    num_rows: int
    num_cols: int
    master_rows: tuple             # original indices, ascending
    border_cols: tuple
    master_senses: tuple
    master_rhs: tuple
    master_names: tuple
    border_objective: tuple
    border_kinds: tuple
    border_lower: tuple
    border_upper: tuple
    border_names: tuple
    c_entries: tuple               # (master ordinal, border ordinal, value)
    unit_rows: tuple               # original row indices per unit, ascending
    unit_cols: tuple


def extract_block_units(inst: MilpInstance, partition: BlockPartition) -> list:
    check_partition(inst, partition)
    border_ord = {c: k for k, c in enumerate(partition.border_cols)}
    master_ord = {r: k for k, r in enumerate(partition.master_rows)}

    units = []
    for ordinal, pu in enumerate(partition.units):
        rows = sorted(pu.rows)
        cols = sorted(pu.cols)
        rloc = {r: k for k, r in enumerate(rows)}
        cloc = {c: k for k, c in enumerate(cols)}
        d_entries = []
        mcons = []
        border = []
        for r, c, v in zip(inst.ccm_rows, inst.ccm_cols, inst.ccm_vals):
            r, c, v = int(r), int(c), float(v)
            if v == 0.0:
                continue
            if r in rloc:
                if c in cloc:
                    d_entries.append((rloc[r], cloc[c], v))
                elif c in border_ord:
                    border.append((rloc[r], border_ord[c], v))
            elif r in master_ord and c in cloc:
                mcons.append((master_ord[r], cloc[c], v))
        units.append(BlockUnit(
            width=len(cols),
            entries=tuple(sorted(d_entries)),
            senses=tuple(inst.senses[r] for r in rows),
            rhs=tuple(float(inst.rhs[r]) for r in rows),
            objective=tuple(float(inst.objective[c]) for c in cols),
            kinds=tuple(inst.var_kinds[c] for c in cols),
            lower=tuple(float(inst.lower_bounds[c]) for c in cols),
            upper=tuple(float(inst.upper_bounds[c]) for c in cols),
            row_names=tuple(inst.row_names[r] for r in rows),
            col_names=tuple(inst.col_names[c] for c in cols),
            mcons_strip=tuple(sorted(mcons)),
            border_strip=tuple(sorted(border)),
            db_rows=tuple(sorted(rloc[r] for r in pu.db_rows)),
            source=(inst.name, ordinal),
        ))
    return units


def extract_host_frame(inst: MilpInstance, partition: BlockPartition) -> HostFrame:
    check_partition(inst, partition)
    masters = tuple(sorted(partition.master_rows))
    borders = tuple(sorted(partition.border_cols))
    master_ord = {r: k for k, r in enumerate(masters)}
    border_ord = {c: k for k, c in enumerate(borders)}
    c_entries = []
    for r, c, v in zip(inst.ccm_rows, inst.ccm_cols, inst.ccm_vals):
        r, c, v = int(r), int(c), float(v)
        if v != 0.0 and r in master_ord and c in border_ord:
            c_entries.append((master_ord[r], border_ord[c], v))
    return HostFrame(
        name=inst.name,
        num_rows=inst.num_rows,
        num_cols=inst.num_cols,
        master_rows=masters,
        border_cols=borders,
        master_senses=tuple(inst.senses[r] for r in masters),
        master_rhs=tuple(float(inst.rhs[r]) for r in masters),
        master_names=tuple(inst.row_names[r] for r in masters),
        border_objective=tuple(float(inst.objective[c]) for c in borders),
        border_kinds=tuple(inst.var_kinds[c] for c in borders),
        border_lower=tuple(float(inst.lower_bounds[c]) for c in borders),
        border_upper=tuple(float(inst.upper_bounds[c]) for c in borders),
        border_names=tuple(inst.col_names[c] for c in borders),
        c_entries=tuple(sorted(c_entries)),
        unit_rows=tuple(tuple(sorted(u.rows)) for u in partition.units),
        unit_cols=tuple(tuple(sorted(u.cols)) for u in partition.units),
    )


def reassemble(frame: HostFrame, units) -> MilpInstance:
    """Place every unit back at its original position inside the frame."""
    units = list(units)
    if len(units) != len(frame.unit_rows):
        raise ValueError(
            f"frame expects {len(frame.unit_rows)} units, got {len(units)}")
    m, n = frame.num_rows, frame.num_cols
    objective = np.zeros(n)
    rhs = np.zeros(m)
    lower = np.zeros(n)
    upper = np.zeros(n)
    senses = [""] * m
    kinds = [""] * n
    row_names = [""] * m
    col_names = [""] * n
    entries = {}

    for k, r in enumerate(frame.master_rows):
        senses[r] = frame.master_senses[k]
        rhs[r] = frame.master_rhs[k]
        row_names[r] = frame.master_names[k]
    for k, c in enumerate(frame.border_cols):
        objective[c] = frame.border_objective[k]
        kinds[c] = frame.border_kinds[k]
        lower[c] = frame.border_lower[k]
        upper[c] = frame.border_upper[k]
        col_names[c] = frame.border_names[k]
    for mo, bo, v in frame.c_entries:
        entries[(frame.master_rows[mo], frame.border_cols[bo])] = v

    for u, unit in enumerate(units):
        rows = frame.unit_rows[u]
        cols = frame.unit_cols[u]
        if unit.height != len(rows) or unit.width != len(cols):
            raise ValueError(f"unit {u} shape does not match frame layout")
        for k, r in enumerate(rows):
            senses[r] = unit.senses[k]
            rhs[r] = unit.rhs[k]
            row_names[r] = unit.row_names[k]
        for k, c in enumerate(cols):
            objective[c] = unit.objective[k]
            kinds[c] = unit.kinds[k]
            lower[c] = unit.lower[k]
            upper[c] = unit.upper[k]
            col_names[c] = unit.col_names[k]
        for lr, lc, v in unit.entries:
            entries[(rows[lr], cols[lc])] = v
        for mo, lc, v in unit.mcons_strip:
            entries[(frame.master_rows[mo], cols[lc])] = v
        for lr, bo, v in unit.border_strip:
            entries[(rows[lr], frame.border_cols[bo])] = v

    keys = sorted(entries)
    return MilpInstance(
        name=frame.name,
        objective=objective,
        ccm_rows=np.array([r for r, _ in keys], dtype=np.int64),
        ccm_cols=np.array([c for _, c in keys], dtype=np.int64),
        ccm_vals=np.array([entries[k] for k in keys]),
        senses=tuple(senses),
        rhs=rhs,
        lower_bounds=lower,
        upper_bounds=upper,
        var_kinds=tuple(kinds),
        row_names=tuple(row_names),
        col_names=tuple(col_names),
    )


@dataclass(frozen=True)
class StructureLibrary:
    units: tuple
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.units)

    def by_source(self) -> dict:
        """Map source instance id -> tuple of unit indices."""
        out: dict[str, list[int]] = {}
        for k, u in enumerate(self.units):
            out.setdefault(u.source[0], []).append(k)
        return {k: tuple(v) for k, v in sorted(out.items())}


def build_library(corpus, detector_params=None) -> StructureLibrary:
    """corpus: iterable of (instance, partition) pairs."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("cannot build a library from an empty corpus")
    units = []
    digest = hashlib.sha256()
    for inst, partition in corpus:
        extracted = extract_block_units(inst, partition)
        units.extend(extracted)
        digest.update(f"{inst.name}:{len(extracted)};".encode())
    meta = {
        "detector_params": dict(detector_params or {}),
        "corpus_hash": digest.hexdigest(),
        "num_instances": len(corpus),
    }
    return StructureLibrary(units=tuple(units), meta=meta)


def sample_unit(lib: StructureLibrary, rng, unit_filter=None) -> BlockUnit:
    """Uniform draw over units passing the filter."""
    if unit_filter is None:
        eligible = list(range(len(lib.units)))
    else:
        eligible = [k for k, u in enumerate(lib.units) if unit_filter(u)]
    if not eligible:
        raise ValueError("no library units eligible after filter")
    return lib.units[eligible[int(rng.integers(len(eligible)))]]


def _enc_float(x: float):
    if np.isposinf(x):
        return "inf"
    if np.isneginf(x):
        return "-inf"
    return float(x)


def _dec_float(x) -> float:
    if isinstance(x, str):
        return float(x)
    return float(x)


def _unit_to_doc(u: BlockUnit) -> dict:
    return {
        "width": u.width,
        "entries": [[r, c, v] for r, c, v in u.entries],
        "senses": list(u.senses),
        "rhs": list(u.rhs),
        "objective": list(u.objective),
        "kinds": list(u.kinds),
        "lower": [_enc_float(x) for x in u.lower],
        "upper": [_enc_float(x) for x in u.upper],
        "row_names": list(u.row_names),
        "col_names": list(u.col_names),
        "mcons_strip": [[o, c, v] for o, c, v in u.mcons_strip],
        "border_strip": [[r, o, v] for r, o, v in u.border_strip],
        "db_rows": list(u.db_rows),
        "source": [u.source[0], u.source[1]],
    }


def _unit_from_doc(doc: dict) -> BlockUnit:
    return BlockUnit(
        width=int(doc["width"]),
        entries=tuple((int(r), int(c), float(v)) for r, c, v in doc["entries"]),
        senses=tuple(doc["senses"]),
        rhs=tuple(float(x) for x in doc["rhs"]),
        objective=tuple(float(x) for x in doc["objective"]),
        kinds=tuple(doc["kinds"]),
        lower=tuple(_dec_float(x) for x in doc["lower"]),
        upper=tuple(_dec_float(x) for x in doc["upper"]),
        row_names=tuple(doc["row_names"]),
        col_names=tuple(doc["col_names"]),
        mcons_strip=tuple((int(o), int(c), float(v)) for o, c, v in doc["mcons_strip"]),
        border_strip=tuple((int(r), int(o), float(v)) for r, o, v in doc["border_strip"]),
        db_rows=tuple(int(r) for r in doc["db_rows"]),
        source=(doc["source"][0], int(doc["source"][1])),
    )


def dumps_library(lib: StructureLibrary) -> bytes:
    doc = {
        "format": LIBRARY_FORMAT,
        "version": LIBRARY_VERSION,
        "meta": lib.meta,
        "units": [_unit_to_doc(u) for u in lib.units],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def loads_library(data: bytes) -> StructureLibrary:
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError, zlib.error) as exc:
            raise LibraryFormatError(f"corrupt gzip payload: {exc}") from exc
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise LibraryFormatError(f"corrupt library payload: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != LIBRARY_FORMAT:
        raise LibraryFormatError("not a structure library file")
    if doc.get("version") != LIBRARY_VERSION:
        raise LibraryFormatError(
            f"unsupported library version {doc.get('version')!r}")
    try:
        units = tuple(_unit_from_doc(u) for u in doc["units"])
        meta = dict(doc.get("meta", {}))
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise LibraryFormatError(f"malformed library payload: {exc}") from exc
    return StructureLibrary(units=units, meta=meta)


def save_library(lib: StructureLibrary, sink) -> None:
    """sink: path-like (``.gz`` suffix selects gzip) or binary file object."""
    data = dumps_library(lib)
    if hasattr(sink, "write"):
        sink.write(data)
        return
    path = str(sink)
    if path.endswith(".gz"):
        data = gzip.compress(data, 9, mtime=0)
    with open(path, "wb") as fh:
        fh.write(data)


def load_library(source) -> StructureLibrary:
    if hasattr(source, "read"):
        return loads_library(source.read())
    if isinstance(source, (bytes, bytearray)):
        return loads_library(bytes(source))
    with open(str(source), "rb") as fh:
        return loads_library(fh.read())
