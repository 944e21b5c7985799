"""Batch orchestration: configuration, command bodies, hard-instance loop.

Every command writes its artifacts plus a run manifest (command, params,
inputs, outputs; no timestamps) under the configured output directory, so
identical configuration and seed reproduce identical trees byte for byte.
"""
from __future__ import annotations

import dataclasses
import json
import os
import sys
import warnings

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .model import MilpInstance
from .mps import read_mps_file, write_mps
from .images import to_ccm_image, write_pgm, write_ppm_tinted
from .detect import (
    DEFAULT_PHI, DEFAULT_ZETA, BlockPartition, DecompositionFailed,
    classify, decompose, partition_to_json, reorder, trivial_partition,
)
from .library import build_library, load_library, save_library
from .operators import GenConfig, apply_operator, ops_for_count
from .metrics import DEFAULT_BINS, similarity_score
from .feasibility import DEFAULT_BUDGET, feasibility_bruteforce
from .solver import solve_external
from .benchgen import PlantedSpec, gen_corpus, truth_to_json

ENV_PREFIX = "BLOCKFORGE_"


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    seed: int = 0
    eta: float = 0.05
    operator: str = "balanced-thirds"
    refine: bool = False
    jobs: int = 1
    out: str = "out"
    zeta: int = DEFAULT_ZETA
    phi1: float = DEFAULT_PHI[0]
    phi2: float = DEFAULT_PHI[1]
    phi3: float = DEFAULT_PHI[2]
    phi4: float = DEFAULT_PHI[3]
    phi5: float = DEFAULT_PHI[4]
    detect_db: bool = False
    bins: int = DEFAULT_BINS
    oracle_budget: int = DEFAULT_BUDGET
    solver_cmd: str = ""
    solver_profile: str = "generic"
    time_limit: float = 60.0

    @property
    def phi(self) -> tuple:
        return (self.phi1, self.phi2, self.phi3, self.phi4, self.phi5)

    def detector_kwargs(self) -> dict:
        return {"phi": self.phi, "zeta": self.zeta, "detect_db": self.detect_db}

    def gen_config(self, operator: str | None = None) -> GenConfig:
        return GenConfig(
            eta=self.eta,
            operator=operator or self.operator,
            refine=self.refine,
            seed=self.seed,
        )

    def validate(self) -> None:
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError("eta must be in (0, 1]")
        if self.zeta < 1:
            raise ConfigError("zeta must be >= 1")
        for k, p in enumerate(self.phi, start=1):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"phi{k} must be in [0, 1]")
        if self.bins < 1:
            raise ConfigError("bins must be >= 1")
        if self.oracle_budget < 1:
            raise ConfigError("oracle budget must be >= 1")
        if self.time_limit <= 0:
            raise ConfigError("time limit must be positive")


_BOOL_FIELDS = {"refine", "detect_db"}
_SECTIONS = {
    "detector": ("zeta", "phi1", "phi2", "phi3", "phi4", "phi5", "detect_db"),
    "generate": ("eta", "operator", "refine"),
    "metrics": ("bins", "oracle_budget"),
    "solver": ("solver_cmd", "solver_profile", "time_limit"),
}


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def _coerce(name: str, value, target_type):
    if target_type is bool:
        return value if isinstance(value, bool) else _parse_bool(str(value))
    try:
        return target_type(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def load_config(
    path=None,
    env: dict | None = None,
    overrides: dict | None = None,
) -> PipelineConfig:
    """Precedence: defaults < TOML file < environment < explicit overrides."""
    cfg = PipelineConfig()
    types = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    type_map = {"int": int, "float": float, "str": str, "bool": bool}

    def assign(name: str, value):
        if name not in types:
            raise ConfigError(f"unknown configuration key {name!r}")
        target = type_map[str(types[name])]
        setattr(cfg, name, _coerce(name, value, target))

    if path is not None:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        for key, value in doc.items():
            if key in _SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be a table")
                allowed = _SECTIONS[key]
                for sub, sval in value.items():
                    full = sub if sub in allowed else None
                    if full is None and key == "solver":
                        full = f"solver_{sub}" if f"solver_{sub}" in allowed else None
                    if full is None:
                        raise ConfigError(f"unknown key {key}.{sub}")
                    assign(full, sval)
            else:
                assign(key, value)

    env = os.environ if env is None else env
    for name in types:
        var = ENV_PREFIX + name.upper()
        if var in env:
            assign(name, env[var])

    for name, value in (overrides or {}).items():
        if value is not None:
            assign(name, value)
    cfg.validate()
    return cfg


def _pmap(jobs: int, fn, items):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def write_manifest(out_dir: Path, command: str, cfg: PipelineConfig,
                   inputs, outputs, extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "config": dataclasses.asdict(cfg),
        "inputs": sorted(str(p) for p in inputs),
        "outputs": sorted(str(p) for p in outputs),
    }
    if extra:
        doc["params"] = extra
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    (out_dir / "manifest.json").write_text(text, encoding="utf-8")


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_inputs(paths) -> list:
    return [read_mps_file(p) for p in paths]


def cmd_genbench(cfg: PipelineConfig, family: str, k: int, count: int,
                 width=None, masters: int | None = None,
                 borders: int | None = None) -> int:
    if masters is None:
        masters = 0 if family == "bd-knapsack" else 2
    if borders is None:
        borders = 1 if family == "dbbd-assignment" else 0
    spec = PlantedSpec(family=family, k=k, width=width, master_rows=masters,
                       border_cols=borders, seed=cfg.seed)
    corpus = gen_corpus(spec, count, seed=cfg.seed)
    out = _out_dir(cfg)
    written = []
    for inst, truth in corpus:
        mps_path = out / f"{inst.name}.mps"
        mps_path.write_bytes(write_mps(inst))
        truth_path = out / f"{inst.name}.truth.json"
        truth_path.write_text(truth_to_json(truth) + "\n", encoding="utf-8")
        written.extend([mps_path, truth_path])
    write_manifest(out, "genbench", cfg, [], written,
                   extra={"family": family, "k": k, "count": count})
    return 0


def cmd_decompose(cfg: PipelineConfig, inputs) -> int:
    out = _out_dir(cfg)
    written = []
    for path in inputs:
        inst = read_mps_file(path)
        partition = decompose(inst, **cfg.detector_kwargs())
        target = out / f"{Path(path).stem}.partition.json"
        target.write_text(partition_to_json(partition) + "\n", encoding="utf-8")
        written.append(target)
    write_manifest(out, "decompose", cfg, inputs, written)
    return 0


def cmd_buildlib(cfg: PipelineConfig, inputs, lib_name: str = "library.json.gz") -> int:
    out = _out_dir(cfg)
    corpus = []
    for path in inputs:
        inst = read_mps_file(path)
        corpus.append((inst, decompose(inst, **cfg.detector_kwargs())))
    lib = build_library(corpus, detector_params=cfg.detector_kwargs())
    target = out / lib_name
    save_library(lib, target)
    write_manifest(out, "buildlib", cfg, inputs, [target],
                   extra={"units": len(lib)})
    return 0


def cmd_generate(cfg: PipelineConfig, inputs, lib_path, count: int) -> int:
    out = _out_dir(cfg)
    lib = load_library(lib_path)
    sources = _load_inputs(inputs)
    partitions = [decompose(s, **cfg.detector_kwargs()) for s in sources]
    if cfg.operator == "balanced-thirds":
        ops = ops_for_count(count)
    else:
        ops = [cfg.operator] * count

    def one(i: int):
        rng = np.random.default_rng([cfg.seed, i])
        src = i % len(sources)
        gen_cfg = cfg.gen_config(ops[i])
        child, record = apply_operator(
            sources[src], partitions[src], lib, gen_cfg, rng)
        child = replace(child, name=f"gen-{cfg.seed}-{i}")
        mps_path = out / f"{child.name}.mps"
        mps_path.write_bytes(write_mps(child))
        rec_path = out / f"{child.name}.genrecord.json"
        rec_path.write_text(record.to_json() + "\n", encoding="utf-8")
        return [mps_path, rec_path]

    written = [p for chunk in _pmap(cfg.jobs, one, range(count)) for p in chunk]
    write_manifest(out, "generate", cfg, inputs, written,
                   extra={"count": count, "library": str(lib_path)})
    return 0


def cmd_stats(cfg: PipelineConfig, corpus_a, corpus_b) -> int:
    out = _out_dir(cfg)
    insts_a = _load_inputs(corpus_a)
    insts_b = _load_inputs(corpus_b)
    report = similarity_score(insts_a, insts_b, bins=cfg.bins)
    target = out / "similarity.json"
    target.write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.format_text())
    write_manifest(out, "stats", cfg, list(corpus_a) + list(corpus_b), [target])
    return 0


def cmd_visualize(cfg: PipelineConfig, inputs) -> int:
    out = _out_dir(cfg)
    written = []
    for path in inputs:
        inst = read_mps_file(path)
        stem = Path(path).stem
        raw = out / f"{stem}.pgm"
        raw.write_bytes(write_pgm(to_ccm_image(inst)))
        written.append(raw)
        try:
            partition = decompose(inst, **cfg.detector_kwargs())
        except DecompositionFailed:
            continue
        cls = classify(inst, phi=cfg.phi, detect_db=cfg.detect_db)
        ro = reorder(inst, cls)
        img = to_ccm_image(inst, row_perm=ro.row_perm, col_perm=ro.col_perm)
        ordered = out / f"{stem}.reordered.pgm"
        ordered.write_bytes(write_pgm(img))
        n_master = len(partition.master_rows)
        n_border = len(partition.border_cols)
        tinted = out / f"{stem}.tinted.ppm"
        tinted.write_bytes(write_ppm_tinted(
            img,
            border_rows=range(inst.num_rows - n_master, inst.num_rows),
            border_cols=range(inst.num_cols - n_border, inst.num_cols),
        ))
        written.extend([ordered, tinted])
    write_manifest(out, "visualize", cfg, inputs, written)
    return 0


def cmd_feascheck(cfg: PipelineConfig, inputs) -> int:
    out = _out_dir(cfg)
    insts = _load_inputs(inputs)
    verdicts = _pmap(
        cfg.jobs,
        lambda inst: feasibility_bruteforce(inst, budget=cfg.oracle_budget),
        insts)
    rows = []
    for inst, verdict in zip(insts, verdicts):
        print(f"{inst.name}  {verdict.status}  nodes={verdict.nodes}")
        rows.append({
            "instance": inst.name,
            "status": verdict.status,
            "nodes": verdict.nodes,
            "witness": list(verdict.witness) if verdict.witness else None,
        })
    feasible = sum(1 for r in rows if r["status"] == "feasible")
    doc = {
        "results": rows,
        "feasible_ratio": feasible / len(rows) if rows else 0.0,
    }
    target = out / "feasibility.json"
    target.write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    write_manifest(out, "feascheck", cfg, inputs, [target])
    return 0


@dataclass
class HardSlot:
    inst: MilpInstance
    partition: BlockPartition
    hardness: float


@dataclass
class HardPool:
    slots: list
    iterations: int = 0
    trajectory: list = field(default_factory=list)

    @property
    def capacity(self) -> int:
        return len(self.slots)

    def mean_hardness(self) -> float:
        return float(np.mean([s.hardness for s in self.slots]))


def oracle_hardness(budget: int = DEFAULT_BUDGET):
    def evaluate(inst: MilpInstance) -> float:
        return float(feasibility_bruteforce(inst, budget=budget).nodes)
    return evaluate


def solver_hardness(cfg: PipelineConfig):
    def evaluate(inst: MilpInstance) -> float:
        return solve_external(
            inst, cfg.time_limit, cfg.solver_cmd,
            profile=cfg.solver_profile).wall_time
    return evaluate


def make_pool(instances, evaluator, detector_kwargs: dict | None = None) -> HardPool:
    kwargs = detector_kwargs or {}
    slots = []
    for inst in instances:
        try:
            partition = decompose(inst, **kwargs)
        except DecompositionFailed:
            partition = trivial_partition(inst)
        slots.append(HardSlot(inst=inst, partition=partition,
                              hardness=float(evaluator(inst))))
    pool = HardPool(slots=slots)
    pool.trajectory.append(pool.mean_hardness())
    return pool


def harden(pool: HardPool, lib, evaluator, iterations: int, rng,
           gen_cfg: GenConfig, detector_kwargs: dict | None = None) -> HardPool:
    """Per slot and iteration: one mix-up child, one expansion child, keep
    the hardest of the three (ties keep the incumbent)."""
    kwargs = detector_kwargs or {}
    for _ in range(iterations):
        for slot in pool.slots:
            best = (slot.hardness, None)
            for op in ("mixup", "expand"):
                cfg_op = replace(gen_cfg, operator=op)
                try:
                    child, _ = apply_operator(
                        slot.inst, slot.partition, lib, cfg_op, rng)
                    hardness = float(evaluator(child))
                except Exception as exc:  # scored zero, kept out of the pool
                    warnings.warn(
                        f"candidate generation/evaluation failed: {exc}",
                        RuntimeWarning, stacklevel=2)
                    continue
                if hardness > best[0]:
                    best = (hardness, child)
            if best[1] is not None:
                child = best[1]
                try:
                    partition = decompose(child, **kwargs)
                except DecompositionFailed:
                    partition = trivial_partition(child)
                slot.inst = child
                slot.partition = partition
                slot.hardness = best[0]
        pool.iterations += 1
        pool.trajectory.append(pool.mean_hardness())
    return pool


def cmd_harden(cfg: PipelineConfig, inputs, lib_path, iterations: int) -> int:
    out = _out_dir(cfg)
    lib = load_library(lib_path)
    instances = _load_inputs(inputs)
    evaluator = (solver_hardness(cfg) if cfg.solver_cmd
                 else oracle_hardness(cfg.oracle_budget))
    pool = make_pool(instances, evaluator, cfg.detector_kwargs())
    rng = np.random.default_rng([cfg.seed])
    gen_cfg = cfg.gen_config("mixup")
    harden(pool, lib, evaluator, iterations, rng, gen_cfg,
           cfg.detector_kwargs())
    written = []
    for i, slot in enumerate(pool.slots):
        inst = replace(slot.inst, name=f"hard-{cfg.seed}-{i}")
        target = out / f"{inst.name}.mps"
        target.write_bytes(write_mps(inst))
        written.append(target)
    traj = out / "trajectory.json"
    traj.write_text(
        json.dumps({"iterations": pool.iterations,
                    "mean_hardness": pool.trajectory}, sort_keys=True) + "\n",
        encoding="utf-8")
    written.append(traj)
    write_manifest(out, "harden", cfg, inputs, written,
                   extra={"iterations": iterations, "library": str(lib_path)})
    return 0
