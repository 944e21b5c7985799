"""Toolkit for block-structured MILP instances: detect block decompositions
in constraint matrices, harvest block units into a library, and generate new
instances by removing, swapping, or appending units under a modification
ratio, with similarity metrics and a feasibility oracle for evaluation."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    InvalidInstanceError,
    MilpInstance,
    ValidationReport,
    basic_stats,
    make_instance,
    validate,
)
from .mps import MpsParseError, parse_mps, read_mps_file, write_mps, write_mps_file  # noqa: F401
from .detect import (  # noqa: F401
    BlockPartition,
    Classification,
    DecompositionFailed,
    PartitionUnit,
    classify,
    decompose,
    partition_columns,
    reorder,
)
from .library import (  # noqa: F401
    BlockUnit,
    StructureLibrary,
    build_library,
    extract_block_units,
    extract_host_frame,
    load_library,
    reassemble,
    sample_unit,
    save_library,
)
from .operators import GenConfig, GenRecord, expand, mixup  # noqa: F401
from .operators import reduce as reduce_instance  # noqa: F401
from .metrics import GraphStats, compute_stats, jsd, similarity_score  # noqa: F401
from .feasibility import FeasVerdict, check_witness, feasibility_bruteforce  # noqa: F401
from .solver import SolveResult, SolverNotFound, solve_external  # noqa: F401
from .benchgen import PlantedSpec, PlantedTruth, gen_corpus, gen_planted  # noqa: F401
