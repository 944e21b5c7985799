"""External MILP solver adapter.

The solver is described by a shell command template with {input} and
{timelimit} placeholders plus a log-parsing profile (regex lists shipped as
package data). Wall time is measured here; the process is killed at
time_limit + grace.
"""
from __future__ import annotations

import json
import re
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .model import MilpInstance
from .mps import write_mps


class SolverNotFound(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveResult:
    status: str          # optimal | infeasible | unbounded | timeout | unknown
    objective: float | None
    wall_time: float
    solver_id: str
    log: str = ""


def load_profiles() -> dict:
    data = resources.files("blockforge").joinpath("data/solver_profiles.json")
    return json.loads(data.read_text(encoding="utf-8"))


def _parse_log(text: str, profile: dict):
    status = None
    for pattern, name in profile.get("status", []):
        if re.search(pattern, text):
            status = name
            break
    objective = None
    for pattern in profile.get("objective", []):
        hit = re.search(pattern, text)
        if hit:
            try:
                objective = float(hit.group(1))
            except ValueError:
                continue
            break
    return status, objective


def solve_external(
    inst: MilpInstance,
    time_limit: float,
    solver_cmd_template: str,
    profile: str = "generic",
    grace: float = 5.0,
    profiles: dict | None = None,
) -> SolveResult:
    if "{input}" not in solver_cmd_template:
        raise ValueError("solver command template must contain {input}")
    table = profiles if profiles is not None else load_profiles()
    if profile not in table:
        raise ValueError(f"unknown solver profile {profile!r}")
    spec = table[profile]

    with tempfile.TemporaryDirectory(prefix="blockforge-solve-") as tmp:
        path = Path(tmp) / f"{inst.name or 'instance'}.mps"
        path.write_bytes(write_mps(inst))
        cmd = solver_cmd_template.format(input=str(path), timelimit=time_limit)
        argv = shlex.split(cmd)
        start = time.perf_counter()
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=time_limit + grace)
        except FileNotFoundError as exc:
            raise SolverNotFound(f"solver executable not found: {argv[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            wall = time.perf_counter() - start
            log = (exc.stdout or b"")
            if isinstance(log, bytes):
                log = log.decode("utf-8", "replace")
            return SolveResult(
                status="timeout", objective=None, wall_time=wall,
                solver_id=argv[0], log=log)
        wall = time.perf_counter() - start

    log = (proc.stdout or "") + (proc.stderr or "")
    status, objective = _parse_log(log, spec)
    if status is None:
        return SolveResult(
            status="unknown", objective=objective, wall_time=wall,
            solver_id=argv[0], log=log)
    return SolveResult(
        status=status, objective=objective, wall_time=wall, solver_id=argv[0])
