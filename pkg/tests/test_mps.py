"""MPS reader/writer: fixture parse, error reporting, and round trips."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockforge.model import InvalidInstanceError, MilpInstance, make_instance
from blockforge.mps import (
    MpsParseError,
    parse_mps,
    read_mps_file,
    write_mps,
    write_mps_file,
)

FIXTURE = """\
* comment line, ignored
NAME          demo

OBJSENSE
    MIN
ROWS
 N  COST
 L  c1
 G  c2
 E  c3
 G  c4
 E  c5
 N  FREE1
COLUMNS
    x1  COST  1.0  c1  2.0
    x1  c2  1.0  c5  1.0
    MARKER0  'MARKER'  'INTORG'
    y1  c1  1.0  c3  1.5
    y1  FREE1  9.0
    MARKER1  'MARKER'  'INTEND'
    z1  COST  -1.0  c2  3.0
    z1  c4  1.0
RHS
    RHS  c1  10.0  c2  2.0
    RHS  COST  5.0
    RHS  c3  4.0  c4  1.0
    RHS  c5  7.0
RANGES
    RNG  c1  6.0
    RNG  c3  -2.0
    RNG  c4  5.0
    RNG  c5  3.0
BOUNDS
 UP BND  x1  4.0
 MI BND  x1
 BV BND  z1
ENDATA
"""


def test_parse_fixture_rows_and_ranges():
    inst = parse_mps(FIXTURE)
    assert inst.name == "demo"
    # every ranged row gains a companion directly after it
    assert list(inst.row_names) == [
        "c1", "c1__rlo", "c2", "c3", "c3__rlo",
        "c4", "c4__rhi", "c5", "c5__rlo"]
    assert list(inst.senses) == [
        "<=", ">=", ">=", "<=", ">=", ">=", "<=", "<=", ">="]
    assert inst.rhs.tolist() == [10.0, 4.0, 2.0, 4.0, 2.0, 1.0, 6.0, 10.0, 7.0]


def test_parse_fixture_columns_and_bounds():
    inst = parse_mps(FIXTURE)
    assert list(inst.col_names) == ["x1", "y1", "z1"]
    assert inst.objective.tolist() == [1.0, 0.0, -1.0]
    dense = inst.to_coo().toarray()
    expect = np.zeros((9, 3))
    expect[0, 0] = expect[1, 0] = 2.0       # c1 and its companion
    expect[2, 0] = 1.0                      # c2
    expect[7, 0] = expect[8, 0] = 1.0       # c5 pair
    expect[0, 1] = expect[1, 1] = 1.0
    expect[3, 1] = expect[4, 1] = 1.5       # c3 pair
    expect[2, 2] = 3.0
    expect[5, 2] = expect[6, 2] = 1.0       # c4 pair
    assert np.array_equal(dense, expect)
    # x1: continuous, UP then MI; y1: marker default [0,1]; z1: BV
    assert list(inst.var_kinds) == ["continuous", "integer", "binary"]
    assert inst.lower_bounds.tolist() == [-math.inf, 0.0, 0.0]
    assert inst.upper_bounds.tolist() == [4.0, 1.0, 1.0]


def test_parse_objective_constant_and_free_rows_dropped():
    inst = parse_mps(FIXTURE)
    # FREE1's coefficient and COST's RHS entry leave no trace
    assert all(not name.startswith("FREE") for name in inst.row_names)
    assert inst.num_rows == 9


def err(text):
    with pytest.raises(MpsParseError) as info:
        parse_mps(text)
    return info.value


def test_parse_errors():
    e = err("ROWS\n N  obj\n L  c1\n L  c1\n")
    assert "duplicate row" in str(e) and e.line_no == 4
    assert "unknown row" in str(err(
        "ROWS\n N  obj\nCOLUMNS\n    x  nosuch  1.0\n"))
    assert "unknown section" in str(err("JUNKSECTION\n"))
    assert "outside any section" in str(err("    x  r  1.0\n"))
    assert "MAXIMIZE" in str(err("OBJSENSE\n    MAX\n"))
    assert "INTORG" in str(err(
        "ROWS\n N  obj\nCOLUMNS\n    M1  'MARKER'  'BOGUS'\n"))
    assert "malformed COLUMNS" in str(err(
        "ROWS\n N  obj\nCOLUMNS\n    x  r1\n"))
    assert "bad numeric" in str(err(
        "ROWS\n N  obj\n L  c1\nCOLUMNS\n    x  c1  abc\n"))
    assert "duplicate entry" in str(err(
        "ROWS\n N  obj\n L  c1\nCOLUMNS\n    x  c1  1.0  c1  2.0\n"))
    assert "duplicate RHS" in str(err(
        "ROWS\n N  obj\n L  c1\nCOLUMNS\n    x  c1  1.0\n"
        "RHS\n    R  c1  1.0\n    R  c1  2.0\n"))
    assert "unknown row type" in str(err("ROWS\n Q  c1\n"))
    bounds_pre = ("ROWS\n N  obj\n L  c1\nCOLUMNS\n    x  c1  1.0\nBOUNDS\n")
    assert "needs a value" in str(err(bounds_pre + " UP BND  x\n"))
    assert "unknown bound type" in str(err(bounds_pre + " XX BND  x\n"))
    assert "unknown column" in str(err(bounds_pre + " FR BND  nosuch\n"))


def test_parse_stops_at_endata():
    inst = parse_mps(
        "ROWS\n N  obj\n L  c1\nCOLUMNS\n    x  c1  1.0\n"
        "ENDATA\ngarbage that would otherwise fail\n")
    assert inst.num_rows == 1


def test_write_rejects_invalid_and_whitespace_names():
    bad = make_instance("b", [0.0], [(0, 5, 1.0)], ["<="], [1.0])
    with pytest.raises(InvalidInstanceError):
        write_mps(bad)
    spaced = make_instance("b", [0.0], [(0, 0, 1.0)], ["<="], [1.0],
                           row_names=["has space"])
    with pytest.raises(ValueError, match="whitespace"):
        write_mps(spaced)


def test_write_objective_row_avoids_collision():
    inst = make_instance("t", [1.0], [(0, 0, 1.0)], ["<="], [2.0],
                         row_names=["OBJ"])
    text = write_mps(inst).decode()
    assert " N  OBJ0" in text
    back = parse_mps(text)
    assert list(back.row_names) == ["OBJ"]
    assert back.objective.tolist() == [1.0]
    assert back.rhs.tolist() == [2.0]


def test_write_empty_column_gets_zero_objective_entry():
    inst = make_instance("t", [0.0, 0.0], [(0, 0, 1.0)], ["<="], [1.0])
    text = write_mps(inst).decode()
    assert "x1       OBJ      0.0" in text
    back = parse_mps(text)
    assert back.num_cols == 2
    assert list(back.col_names) == ["x0", "x1"]


def test_write_deterministic_bytes():
    inst = make_instance("t", [1.5], [(0, 0, 2.5)], [">="], [0.5])
    assert write_mps(inst) == write_mps(inst)


def test_file_round_trip(tmp_path):
    inst = make_instance("t", [1.0, 2.0],
                         [(0, 0, 1.0), (1, 1, -3.5)],
                         ["<=", "="], [4.0, 0.0])
    path = tmp_path / "t.mps"
    write_mps_file(inst, path)
    back = read_mps_file(path)
    assert back.structurally_equal(inst)


def test_round_trip_mixed_kinds_and_bounds():
    inst = MilpInstance(
        name="mix",
        objective=[0.25, -1.0, 0.0, 3.0],
        ccm_rows=[0, 0, 1, 2],
        ccm_cols=[0, 1, 2, 3],
        ccm_vals=[1.0, 2.0, 0.0, -7.25],
        senses=("<=", ">=", "="),
        rhs=[5.0, -1.0, 0.0],
        lower_bounds=[-math.inf, 0.0, -2.0, 1.0],
        upper_bounds=[4.0, 1.0, math.inf, 1.0],
        var_kinds=("continuous", "binary", "integer", "integer"),
        row_names=("r0", "r1", "r2"),
        col_names=("a", "b", "c", "d"),
    )
    back = parse_mps(write_mps(inst))
    assert back.structurally_equal(inst)
    # the stored zero entry survives as a stored entry
    assert len(back.ccm_vals) == 4


_names = st.integers(0, 4)


@st.composite
def instances(draw):
    m = draw(st.integers(1, 4))
    n = draw(st.integers(1, 4))
    finite = st.floats(allow_nan=False, allow_infinity=False,
                       min_value=-1e6, max_value=1e6)
    kinds, lows, highs = [], [], []
    for _ in range(n):
        kind = draw(st.sampled_from(["binary", "integer", "continuous"]))
        if kind == "binary":
            lo, hi = 0.0, 1.0
        elif kind == "integer":
            lo = draw(st.sampled_from([-math.inf, -2.0, 0.0, 3.0]))
            hi = draw(st.sampled_from([math.inf, 3.0, 5.0]))
            if lo == 3.0 and hi == 3.0:
                pass  # FX case
            elif not lo <= hi:
                lo, hi = hi, lo
        else:
            lo = draw(st.sampled_from([-math.inf, -2.5, 0.0, 1.25]))
            hi = draw(st.sampled_from([math.inf, 1.25, 7.5]))
            if not lo <= hi:
                lo, hi = hi, lo
        kinds.append(kind)
        lows.append(lo)
        highs.append(hi)
    cells = draw(st.sets(
        st.tuples(st.integers(0, m - 1), st.integers(0, n - 1)),
        min_size=1, max_size=m * n))
    entries = [(i, j, draw(finite)) for i, j in sorted(cells)]
    return make_instance(
        "h",
        objective=[draw(finite) for _ in range(n)],
        entries=entries,
        senses=[draw(st.sampled_from(["<=", ">=", "="])) for _ in range(m)],
        rhs=[draw(finite) for _ in range(m)],
        lower_bounds=lows,
        upper_bounds=highs,
        var_kinds=kinds,
    )


@settings(max_examples=120, deadline=None)
@given(instances())
def test_round_trip_property(inst):
    back = parse_mps(write_mps(inst))
    assert back.structurally_equal(inst)
