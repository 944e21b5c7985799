"""Planted-structure generators: determinism, validity, spec rejection."""
import numpy as np
import pytest

from blockforge.benchgen import (
    FAMILIES,
    InconsistentSpec,
    PlantedSpec,
    gen_corpus,
    gen_planted,
    truth_from_json,
    truth_to_json,
)
from blockforge.detect import check_partition, decompose, partitions_match
from blockforge.feasibility import check_witness
from blockforge.model import validate


def spec_for(family, **kw):
    base = dict(
        family=family, k=3,
        master_rows=0 if family == "bd-knapsack" else 2,
        border_cols=1 if family == "dbbd-assignment" else 0,
    )
    base.update(kw)
    return PlantedSpec(**base)


@pytest.mark.parametrize("family", FAMILIES)
def test_emitted_instances_are_valid_with_feasible_witness(family):
    inst, truth = gen_planted(spec_for(family), np.random.default_rng(0))
    assert validate(inst).ok
    check_partition(inst, truth.partition)
    assert check_witness(inst, truth.witness)
    assert truth.family == family
    assert truth.partition.params["detect_db"] == (family == "dbbd-assignment")


@pytest.mark.parametrize("family", FAMILIES)
def test_generation_is_deterministic(family):
    spec = spec_for(family)
    a, _ = gen_planted(spec, np.random.default_rng(77))
    b, _ = gen_planted(spec, np.random.default_rng(77))
    assert a.structurally_equal(b)


def test_family_role_validation():
    with pytest.raises(InconsistentSpec, match="unknown family"):
        PlantedSpec(family="mystery", k=3)
    with pytest.raises(InconsistentSpec, match="unit count"):
        PlantedSpec(family="bd-knapsack", k=0)
    with pytest.raises(InconsistentSpec, match="no masters"):
        PlantedSpec(family="bd-knapsack", k=3, master_rows=1)
    with pytest.raises(InconsistentSpec, match="needs masters"):
        PlantedSpec(family="bbd-auction", k=3)
    with pytest.raises(InconsistentSpec, match="masters and borders"):
        PlantedSpec(family="dbbd-assignment", k=3, master_rows=2)
    with pytest.raises(InconsistentSpec, match="coefficient law"):
        PlantedSpec(family="bd-knapsack", k=3, coeff_law=(0, 5))


def test_width_lattice_enforced():
    with pytest.raises(InconsistentSpec, match="lattice"):
        gen_planted(spec_for("bd-knapsack", width=6), np.random.default_rng(0))
    with pytest.raises(InconsistentSpec, match="no lattice widths"):
        gen_planted(spec_for("bd-knapsack", width=(6, 8)),
                    np.random.default_rng(0))
    inst, truth = gen_planted(spec_for("bd-knapsack", width=(5, 13), k=6),
                              np.random.default_rng(3))
    assert {u.width for u in truth.partition.units} <= {5, 9, 13}


def test_margin_rejection_small_dbbd():
    # one narrow unit cannot keep the planted margins
    with pytest.raises(InconsistentSpec):
        gen_planted(PlantedSpec(family="dbbd-assignment", k=1, width=5,
                                master_rows=1, border_cols=1),
                    np.random.default_rng(0))


def test_auto_width_meets_margins():
    spec = spec_for("dbbd-assignment", k=4)
    inst, truth = gen_planted(spec, np.random.default_rng(5))
    # auto width found a workable lattice point and detection agrees
    part = decompose(inst, detect_db=True)
    assert partitions_match(part, truth.partition)


def test_bd_rows_have_window_nonzeros_and_loose_rhs():
    inst, truth = gen_planted(spec_for("bd-knapsack", k=4),
                              np.random.default_rng(9))
    dense = inst.to_coo().tocsr()
    for i in range(inst.num_rows):
        row = dense.getrow(i)
        assert row.nnz == 5
        assert all(1.0 <= v <= 10.0 for v in row.data)
        assert 5.0 <= float(inst.rhs[i]) <= 25.0
        assert inst.senses[i] == "<="
    assert inst.num_cols == truth.partition.block_var_count()


def test_coeff_law_respected():
    inst, _ = gen_planted(spec_for("bd-knapsack", coeff_law=(3, 4)),
                          np.random.default_rng(2))
    vals = set(float(v) for v in inst.ccm_vals)
    assert vals <= {3.0, 4.0}


def test_shuffle_really_applied():
    inst, truth = gen_planted(spec_for("bbd-auction", k=3),
                              np.random.default_rng(12))
    assert truth.row_shuffle != tuple(range(inst.num_rows)) or \
        truth.col_shuffle != tuple(range(inst.num_cols))
    # master rows sit at shuffled positions but stay all-ones over block cols
    for r in truth.partition.master_rows:
        assert inst.row_names[r].startswith("m")


def test_corpus_deterministic_and_named():
    spec = spec_for("bd-knapsack", seed=31)
    corpus = gen_corpus(spec, 3)
    names = [inst.name for inst, _ in corpus]
    assert names == ["bd-knapsack-31-0", "bd-knapsack-31-1", "bd-knapsack-31-2"]
    again = gen_corpus(spec, 3)
    for (a, _), (b, _) in zip(corpus, again):
        assert a.structurally_equal(b)
    override = gen_corpus(spec, 1, seed=99)
    assert override[0][0].name == "bd-knapsack-99-0"
    assert not override[0][0].structurally_equal(corpus[0][0])
    with pytest.raises(ValueError):
        gen_corpus(spec, 0)


def test_truth_json_round_trip():
    inst, truth = gen_planted(spec_for("dbbd-assignment"),
                              np.random.default_rng(8))
    back = truth_from_json(truth_to_json(truth))
    assert back.family == truth.family
    assert back.witness == truth.witness
    assert back.row_shuffle == truth.row_shuffle
    assert back.col_shuffle == truth.col_shuffle
    assert partitions_match(back.partition, truth.partition)
    assert back.partition.params == truth.partition.params
    assert [u.db_rows for u in back.partition.units] == \
        [u.db_rows for u in truth.partition.units]
