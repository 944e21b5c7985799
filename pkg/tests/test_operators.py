"""Builder splicing, refinement statistics, and the three operators."""
import math

import numpy as np
import pytest

from blockforge.benchgen import PlantedSpec, gen_planted
from blockforge.detect import BlockPartition, PartitionUnit
from blockforge.library import build_library, extract_block_units
from blockforge.model import make_instance
from blockforge.operators import (
    GenConfig,
    GenRecord,
    InstanceBuilder,
    RefineStats,
    apply_operator,
    compute_refine_stats,
    expand,
    insert_unit,
    match_mcons,
    mixup,
    ops_for_count,
    reduce,
    refine_unit,
)


def two_unit_fixture(u1_row3=(6.0, 8.0)):
    """Two 2x2 units; each unit's second row carries non-trivial values."""
    entries = [
        (0, 0, 1.0), (0, 1, 1.0),
        (1, 0, 2.0), (1, 1, 4.0),
        (2, 2, 1.0), (2, 3, 1.0),
        (3, 2, u1_row3[0]), (3, 3, u1_row3[1]),
    ]
    inst = make_instance(
        "two", [0.0] * 4, entries, ["<="] * 4, [9.0, 9.0, 9.0, 9.0])
    part = BlockPartition(
        units=(PartitionUnit(rows=(0, 1), cols=(0, 1)),
               PartitionUnit(rows=(2, 3), cols=(2, 3))),
        master_rows=(), border_cols=())
    return inst, part


def test_builder_identity():
    inst, part = two_unit_fixture()
    assert InstanceBuilder(inst, part).to_instance("two").structurally_equal(inst)


def test_remove_unit_drops_rows_cols_entries():
    inst, part = two_unit_fixture()
    b = InstanceBuilder(inst, part)
    handle = b.remove_unit(0)
    assert handle.label == "u0"
    assert handle.width == 2
    out = b.to_instance("rest")
    assert out.num_rows == 2 and out.num_cols == 2
    assert list(out.row_names) == ["r2", "r3"]
    assert list(out.col_names) == ["x2", "x3"]
    assert out.to_coo().toarray().tolist() == [[1.0, 1.0], [6.0, 8.0]]


def test_insert_unit_renames_collisions_and_labels():
    inst, part = two_unit_fixture()
    unit = extract_block_units(inst, part)[0]
    b = InstanceBuilder(inst, part)
    insert_unit(b, unit, match_mcons(unit.m1, 0))
    insert_unit(b, unit, match_mcons(unit.m1, 0))
    out = b.to_instance("grown")
    assert out.num_cols == 8
    # colliding names got fresh suffixes, first insert takes ~g1
    assert list(out.col_names) == [
        "x0", "x1", "x2", "x3", "x0~g1", "x1~g1", "x0~g2", "x1~g2"]
    assert b.units[-2].label == "lib:two:0#1"
    assert b.units[-1].label == "lib:two:0#2"
    assert b.units[-1].origin == "inserted"


def test_insert_unit_border_modes():
    inst, part = two_unit_fixture()
    unit = extract_block_units(inst, part)[0]
    from dataclasses import replace
    bordered = replace(unit, border_strip=((0, 0, 2.5),), db_rows=(0,))
    b = InstanceBuilder(inst, part)  # host has no border columns
    with pytest.raises(ValueError, match="border ordinal"):
        insert_unit(b, bordered, match_mcons(0, 0), border_mode="strict")
    b2 = InstanceBuilder(inst, part)
    insert_unit(b2, bordered, match_mcons(0, 0), border_mode="drop")
    out = b2.to_instance("dropped")
    assert out.num_cols == 6  # inserted, minus the unmappable border entry
    assert out.nnz == 8 + 4


def test_match_mcons_plan():
    plan = match_mcons(5, 3)
    assert plan.kept == (0, 1, 2)
    assert plan.dropped == (3, 4)
    assert match_mcons(2, 4).kept == (0, 1)
    assert match_mcons(2, 4).dropped == ()
    with pytest.raises(ValueError):
        match_mcons(-1, 0)


def test_insert_unit_respects_match_plan():
    """A unit coupling into 2 master ordinals, inserted into a 1-master host,
    writes only the kept ordinal."""
    entries = [(0, 0, 1.0), (1, 1, 1.0), (2, 0, 1.0), (2, 1, 1.0)]
    inst = make_instance("h", [0.0, 0.0], entries, ["<="] * 3, [1.0] * 3)
    part = BlockPartition(
        units=(PartitionUnit(rows=(0,), cols=(0,)),
               PartitionUnit(rows=(1,), cols=(1,))),
        master_rows=(2,), border_cols=())
    unit = extract_block_units(inst, part)[0]
    from dataclasses import replace
    two_couplings = replace(
        unit, mcons_strip=((0, 0, 3.0), (1, 0, 4.0)))
    b = InstanceBuilder(inst, part)
    plan = match_mcons(2, len(b.master_ids))
    assert plan.kept == (0,)
    insert_unit(b, two_couplings, plan)
    out = b.to_instance("o")
    # master row is index 2; the inserted column is last
    assert out.to_coo().toarray()[2].tolist() == [1.0, 1.0, 3.0]


def test_scale_master_rhs_rounds_toward_loose_side():
    inst = make_instance(
        "s", [0.0],
        [(0, 0, 1.0), (1, 0, 1.0), (2, 0, 1.0), (3, 0, 1.0)],
        ["<=", ">=", "=", "<="], [5.0, 5.0, 5.0, 2.5])
    part = BlockPartition(
        units=(PartitionUnit(rows=(3,), cols=(0,)),),
        master_rows=(0, 1, 2), border_cols=())
    b = InstanceBuilder(inst, part)
    b.scale_master_rhs(0.5)
    out = b.to_instance("s")
    # integer rhs: <= ceils, >= floors, = rounds; non-integer rhs is a
    # block row here and untouched anyway
    assert out.rhs.tolist() == [3.0, 2.0, 2.0, 2.5]


def test_refine_stats_pooled_mean_and_std():
    inst, part = two_unit_fixture()
    stats = compute_refine_stats(inst, part)
    assert len(stats) == 1
    assert stats.mu[0] == pytest.approx(5.0)       # mean of {2, 4, 6, 8}
    assert stats.sigma[0] == pytest.approx(math.sqrt(5.0))
    assert bool(stats)


def test_refine_stats_disagreement_warns():
    # second unit has no non-trivial rows at all
    inst, part = two_unit_fixture(u1_row3=(1.0, 1.0))
    with pytest.warns(RuntimeWarning, match="common prefix"):
        stats = compute_refine_stats(inst, part)
    assert len(stats) == 0
    assert not stats


def test_refine_unit_sigma_zero_is_exact():
    inst, part = two_unit_fixture()
    unit = extract_block_units(inst, part)[0]
    stats = RefineStats(mu=(7.0,), sigma=(0.0,))
    refined = refine_unit(unit, stats, np.random.default_rng(0))
    got = {(r, c): v for r, c, v in refined.entries}
    assert got[(1, 0)] == 7.0 and got[(1, 1)] == 7.0
    assert got[(0, 0)] == 1.0 and got[(0, 1)] == 1.0  # trivial row untouched
    assert refined.rhs == unit.rhs
    assert refined.senses == unit.senses
    assert len(refined.entries) == len(unit.entries)


def test_refine_unit_empty_stats_is_identity():
    inst, part = two_unit_fixture()
    unit = extract_block_units(inst, part)[0]
    assert refine_unit(unit, RefineStats(), np.random.default_rng(0)) is unit


def test_refine_stats_mean_of_draws():
    inst, part = two_unit_fixture()
    unit = extract_block_units(inst, part)[0]
    stats = compute_refine_stats(inst, part)
    rng = np.random.default_rng(123)
    draws = []
    for _ in range(2000):
        refined = refine_unit(unit, stats, rng)
        draws.extend(v for r, _, v in refined.entries if r == 1)
    mean = float(np.mean(draws))
    # 4000 draws of N(5, sqrt(5)): a 4-sigma band around the mean
    assert abs(mean - 5.0) < 4 * math.sqrt(5.0) / math.sqrt(len(draws))


def planted(width=5, k=4, seed=2):
    spec = PlantedSpec(family="bd-knapsack", k=k, width=width, seed=seed)
    return gen_planted(spec, np.random.default_rng([seed, 0]))


def planted_lib(width=5, k=5, seed=8):
    inst, truth = planted(width=width, k=k, seed=seed)
    return build_library([(inst, truth.partition)])


def test_reduce_exact_eta():
    inst, truth = planted()
    cfg = GenConfig(eta=0.25, operator="reduce")
    out, rec = reduce(inst, truth.partition, cfg, np.random.default_rng(1))
    # 4 units of width 5: one removal is exactly a quarter of 20 block vars
    assert len(rec.units_removed) == 1
    assert rec.achieved_fraction == pytest.approx(0.25)
    assert rec.operator == "reduce"
    assert out.name == inst.name + ".reduce"
    assert out.num_cols == inst.num_cols - 5


def test_reduce_keeps_one_unit():
    inst, truth = planted(k=2)
    cfg = GenConfig(eta=1.0, operator="reduce")
    out, rec = reduce(inst, truth.partition, cfg, np.random.default_rng(0))
    assert len(rec.units_removed) == 1  # the floor of one unit holds
    with pytest.raises(ValueError, match="at least two"):
        reduce(inst, BlockPartition(
            units=(PartitionUnit(rows=tuple(range(inst.num_rows)),
                                 cols=tuple(range(inst.num_cols))),),
            master_rows=(), border_cols=()), cfg, np.random.default_rng(0))


def test_mixup_swaps_and_labels():
    inst, truth = planted()
    lib = planted_lib()
    cfg = GenConfig(eta=0.25, operator="mixup")
    out, rec = mixup(inst, truth.partition, lib, cfg, np.random.default_rng(3))
    assert len(rec.units_substituted) == 1
    victim, repl = rec.units_substituted[0]
    assert victim.startswith("u")
    assert repl.startswith("lib:") and "#1" in repl
    assert rec.achieved_fraction == pytest.approx(0.25)
    assert out.num_cols == inst.num_cols  # equal widths swap evenly
    assert out.name == inst.name + ".mixup"


def test_mixup_prefers_untouched_originals():
    inst, truth = planted()
    lib = planted_lib()
    cfg = GenConfig(eta=0.5, operator="mixup")
    out, rec = mixup(inst, truth.partition, lib, cfg, np.random.default_rng(5))
    victims = [v for v, _ in rec.units_substituted]
    assert len(victims) == 2
    assert len(set(victims)) == 2  # two different original units


def test_expand_appends():
    inst, truth = planted()
    lib = planted_lib()
    cfg = GenConfig(eta=0.25, operator="expand")
    out, rec = expand(inst, truth.partition, lib, cfg, np.random.default_rng(4))
    assert len(rec.units_appended) == 1
    assert rec.achieved_fraction == pytest.approx(0.25)
    assert out.num_cols == inst.num_cols + 5
    assert out.num_rows == inst.num_rows + lib.units[0].height


def test_expand_needs_block_vars():
    inst = make_instance("e", [], [], ["<="], [1.0])
    part = BlockPartition(units=(PartitionUnit(rows=(0,), cols=()),),
                          master_rows=(), border_cols=())
    with pytest.raises(ValueError, match="block variables"):
        expand(inst, part, planted_lib(), GenConfig(eta=0.5),
               np.random.default_rng(0))


def test_eta_bounds_all_operators():
    inst, truth = planted(width=(3, 9), k=6, seed=13)
    lib = planted_lib(width=(3, 9), k=6, seed=14)
    n_block = truth.partition.block_var_count()
    maxw = max(max(u.width for u in truth.partition.units),
               max(u.width for u in lib.units))
    for op in ("reduce", "mixup", "expand"):
        for eta in (0.02, 0.07, 0.15):
            cfg = GenConfig(eta=eta, operator=op)
            _, rec = apply_operator(
                inst, truth.partition, lib, cfg, np.random.default_rng([1, 7]))
            assert rec.achieved_fraction + 1e-12 >= eta, (op, eta)
            assert rec.achieved_fraction <= eta + maxw / n_block + 1e-12, (op, eta)


def test_apply_operator_rejects_batch_policy():
    inst, truth = planted()
    with pytest.raises(ValueError, match="not directly applicable"):
        apply_operator(inst, truth.partition, planted_lib(),
                       GenConfig(eta=0.1, operator="balanced-thirds"),
                       np.random.default_rng(0))


def test_ops_for_count():
    assert ops_for_count(0) == []
    assert ops_for_count(7) == [
        "reduce", "mixup", "expand", "reduce", "mixup", "expand", "mixup"]
    assert ops_for_count(2) == ["mixup", "mixup"]
    with pytest.raises(ValueError):
        ops_for_count(-1)


def test_gen_config_validation():
    with pytest.raises(ValueError, match="eta"):
        GenConfig(eta=0.0)
    with pytest.raises(ValueError, match="eta"):
        GenConfig(eta=1.5)
    with pytest.raises(ValueError, match="operator"):
        GenConfig(eta=0.1, operator="shuffle")
    with pytest.raises(ValueError, match="border mode"):
        GenConfig(eta=0.1, border_mode="loose")
    GenConfig(eta=1.0)  # upper edge is allowed


def test_gen_record_json_round_trip():
    rec = GenRecord(
        source="src", operator="mixup", eta=0.05, seed=3,
        units_substituted=(("u0", "lib:a:0#1"), ("u2", "lib:b:1#2")),
        achieved_fraction=0.0625, refined=True)
    back = GenRecord.from_json(rec.to_json())
    assert back == rec
