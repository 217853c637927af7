"""
Monte Carlo coverage experiments.

A study is a grid of (model, estimator, n) points. For every point and every
replication a fresh series is simulated, all requested bounds are computed at
every level, and coverage is scored as the frequency of ``theta <= bound``.

Every replication draws from its own random streams, derived from
``(master_seed, grid point, replication, phase)`` through
`numpy.random.SeedSequence` spawn keys and fed to a Philox counter-based
generator. Results therefore do not depend on the number of workers or on
scheduling order.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from typing import Any, Callable

import numpy as np

from dblboot import __version__
from dblboot.bounds import METHODS, compute_bounds, default_lengths
from dblboot.dgp import ModelKind, ModelSpec, simulate, true_value
from dblboot.exceptions import ConfigError, DegenerateSampleError
from dblboot.smooth import EstimatorKind

__all__ = [
    "StudyConfig",
    "GridPoint",
    "CoverageCell",
    "CoverageTable",
    "replication_rng",
    "run_replication",
    "run_study",
    "emit",
    "CSV_COLUMNS",
]

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "model", "estimator", "method", "n", "alpha", "ell", "k",
    "coverage", "mc_se", "r_eff", "failures",
)
METHOD_LABELS = {
    "basic": "I",
    "calibrated": "I_C",
    "studentized": "I_S",
    "dh": "I_DH",
    "gk": "I_GK",
}

# phases of a replication, each with its own stream
SERIES, OUTER, INNER = 0, 1, 2
_MODEL_CODES = {ModelKind.ARCH1: 1, ModelKind.MA1: 2, ModelKind.AR1: 3}
_EST_CODES = {EstimatorKind.MEAN: 1, EstimatorKind.VARIANCE: 2, EstimatorKind.LAG1: 3}


def _model_from_json(obj: Any) -> ModelSpec:
    if isinstance(obj, str):
        return ModelSpec(ModelKind(obj))
    if not isinstance(obj, dict):
        raise ConfigError(f"model entry must be a name or an object, got {obj!r}")
    allowed = {"kind", "coefficient", "burn_in"}
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ConfigError(f"unknown model keys: {', '.join(extra)}")
    return ModelSpec(**obj)


@dataclass
class StudyConfig:
    """Experiment grid and Monte Carlo budgets.

    ``block_rule`` is "auto" (``default_lengths``) or an explicit ``(ell, k)``.
    """

    models: list[ModelSpec] = field(
        default_factory=lambda: [ModelSpec(k) for k in (ModelKind.ARCH1, ModelKind.MA1, ModelKind.AR1)]
    )
    estimators: list[EstimatorKind] = field(default_factory=lambda: list(EstimatorKind))
    alphas: list[float] = field(default_factory=lambda: [0.05, 0.10, 0.90, 0.95])
    ns: list[int] = field(default_factory=lambda: [500])
    replications: int = 1000
    b1: int = 500
    b2: int = 250
    block_rule: str | tuple[int, int] = "auto"
    master_seed: int = 20240501
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    gk_c: float = 0.5
    symmetrize_dh: bool = False

    def __post_init__(self) -> None:
        try:
            self.models = [m if isinstance(m, ModelSpec) else _model_from_json(m) for m in self.models]
            self.estimators = [EstimatorKind(e) for e in self.estimators]
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from err
        self.alphas = [float(a) for a in self.alphas]
        self.ns = [int(n) for n in self.ns]
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.b1 < 2 or self.b2 < 2:
            raise ConfigError("b1 and b2 must be at least 2")
        if not all(0.0 < a < 1.0 for a in self.alphas):
            raise ConfigError("alphas must lie in (0, 1)")
        if any(n < 8 for n in self.ns):
            raise ConfigError("series lengths must be at least 8")
        bad = sorted(set(self.methods) - set(METHODS))
        if bad:
            raise ConfigError(f"unknown methods: {', '.join(bad)}")
        self.methods = [m for m in METHODS if m in self.methods]
        if self.block_rule != "auto":
            try:
                ell, k = (int(v) for v in self.block_rule)
            except (TypeError, ValueError) as err:
                raise ConfigError(f"block_rule must be 'auto' or [ell, k], got {self.block_rule!r}") from err
            if not 1 <= k <= ell:
                raise ConfigError(f"block_rule needs 1 <= k <= ell, got {self.block_rule!r}")
            self.block_rule = (ell, k)
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        self.master_seed = int(self.master_seed)

    @classmethod
    def from_dict(cls, obj: dict) -> "StudyConfig":
        if not isinstance(obj, dict):
            raise ConfigError("study config must be a JSON object")
        names = {f.name for f in fields(cls)}
        extra = sorted(set(obj) - names)
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(extra)}")
        try:
            return cls(**obj)
        except ConfigError:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from err

    @classmethod
    def from_json(cls, text: str) -> "StudyConfig":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"malformed JSON: {err}") from err
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["models"] = [
            {"kind": m.kind.value, "coefficient": m.coefficient, "burn_in": m.burn_in}
            for m in self.models
        ]
        d["estimators"] = [e.value for e in self.estimators]
        d["block_rule"] = self.block_rule if self.block_rule == "auto" else list(self.block_rule)
        return d

    def lengths(self, n: int, est: EstimatorKind) -> tuple[int, int]:
        if self.block_rule != "auto":
            return self.block_rule
        m = n - 1 if est is EstimatorKind.LAG1 else n
        return default_lengths(m)

    def grid(self) -> list["GridPoint"]:
        return [
            GridPoint(model, est, n, *self.lengths(n, est))
            for model, est, n in product(self.models, self.estimators, self.ns)
        ]


@dataclass(frozen=True)
class GridPoint:
    model: ModelSpec
    estimator: EstimatorKind
    n: int
    ell: int
    k: int

    def key(self) -> tuple[int, ...]:
        (coef_bits,) = struct.unpack("<Q", struct.pack("<d", self.model.coefficient))
        return (
            _MODEL_CODES[self.model.kind],
            coef_bits,
            self.model.burn_in,
            self.n,
            _EST_CODES[self.estimator],
            self.ell,
            self.k,
        )


def replication_rng(master_seed: int, point: GridPoint, rep: int, phase: int) -> np.random.Generator:
    """
    Dedicated Philox stream for one phase of one replication.

    The series phase ignores the estimator and block lengths, so every
    estimator at the same (model, n, rep) sees the same simulated series.
    """
    key = point.key()
    if phase == SERIES:
        key = key[:4] + (0, 0, 0)
    ss = np.random.SeedSequence(master_seed, spawn_key=(phase, rep) + key)
    return np.random.Generator(np.random.Philox(ss))


def run_replication(config: StudyConfig, point: GridPoint, rep: int) -> dict[tuple[str, float], bool | None]:
    """
    Cover flags ``theta_true <= bound`` for every (method, alpha).

    A flag is None when that method failed on this replication.
    """
    x = simulate(point.model, point.n, replication_rng(config.master_seed, point, rep, SERIES))
    theta = true_value(point.model, point.estimator)
    flags: dict[tuple[str, float], bool | None] = {}
    try:
        sets = compute_bounds(
            x,
            point.estimator,
            config.alphas,
            ell=point.ell,
            k=point.k,
            B1=config.b1,
            B2=config.b2,
            rng=replication_rng(config.master_seed, point, rep, OUTER),
            inner_rng=replication_rng(config.master_seed, point, rep, INNER),
            methods=config.methods,
            gk_c=config.gk_c,
            symmetrize_dh=config.symmetrize_dh,
        )
    except DegenerateSampleError as err:
        logger.warning("replication %d of %s failed: %s", rep, point, err)
        return {(m, a): None for m in config.methods for a in config.alphas}
    for s in sets:
        for m in config.methods:
            b = s.bound(m)
            flags[(m, s.alpha)] = None if b is None else bool(theta <= b)
    return flags


def _run_chunk(config: StudyConfig, point_index: int, lo: int, hi: int):
    point = config.grid()[point_index]
    return point_index, lo, [run_replication(config, point, r) for r in range(lo, hi)]


@dataclass(frozen=True)
class CoverageCell:
    model: str
    estimator: str
    method: str
    n: int
    alpha: float
    ell: int
    k: int
    coverage: float
    mc_se: float
    r_eff: int
    failures: int

    @classmethod
    def from_flags(cls, point: GridPoint, method: str, alpha: float, flags) -> "CoverageCell":
        done = [f for f in flags if f is not None]
        r_eff = len(done)
        hits = sum(done)
        p = hits / r_eff if r_eff else math.nan
        se = math.sqrt(p * (1.0 - p) / r_eff) if r_eff else math.nan
        return cls(
            point.model.label, point.estimator.value, method, point.n, alpha,
            point.ell, point.k, p, se, r_eff, len(flags) - r_eff,
        )


@dataclass
class CoverageTable:
    cells: list[CoverageCell]
    config: dict = field(default_factory=dict)
    version: str = __version__
    wall_time: float = 0.0

    @property
    def failures(self) -> int:
        return sum(c.failures for c in self.cells)

    def cell(self, model: str, estimator: str, method: str, n: int, alpha: float) -> CoverageCell:
        for c in self.cells:
            if (c.model, c.estimator, c.method, c.n) == (model, estimator, method, n) and math.isclose(c.alpha, alpha):
                return c
        raise KeyError((model, estimator, method, n, alpha))


def run_study(
    config: StudyConfig,
    workers: int = 1,
    chunk_size: int = 25,
    progress: Callable[[int, int], None] | None = None,
) -> CoverageTable:
    """
    Run every replication of every grid point and aggregate coverage.

    Parameters
    ----------
    workers : int
        Number of worker processes; 1 runs everything in this process.
    chunk_size : int
        Replications per task.
    progress : callable, optional
        Called as ``progress(done, total)`` after each finished task.
    """
    t0 = time.perf_counter()
    grid = config.grid()
    R = config.replications
    tasks = [(i, lo, min(lo + chunk_size, R)) for i in range(len(grid)) for lo in range(0, R, chunk_size)]
    results: dict[tuple[int, int], list] = {}

    if workers <= 1:
        for j, (i, lo, hi) in enumerate(tasks):
            _, _, flags = _run_chunk(config, i, lo, hi)
            results[(i, lo)] = flags
            if progress:
                progress(j + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, config, i, lo, hi) for i, lo, hi in tasks]
            for j, fut in enumerate(futures):
                i, lo, flags = fut.result()
                results[(i, lo)] = flags
                if progress:
                    progress(j + 1, len(tasks))

    cells = []
    for i, point in enumerate(grid):
        reps = [f for lo in range(0, R, chunk_size) for f in results[(i, lo)]]
        for method in config.methods:
            for alpha in config.alphas:
                cells.append(CoverageCell.from_flags(point, method, alpha, [f[(method, alpha)] for f in reps]))
    return CoverageTable(cells, config.to_dict(), __version__, time.perf_counter() - t0)


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def to_csv(table: CoverageTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in table.cells:
        w.writerow([
            c.model, c.estimator, c.method, c.n, _fmt(c.alpha), c.ell, c.k,
            _fmt(c.coverage), _fmt(c.mc_se), c.r_eff, c.failures,
        ])
    return buf.getvalue()


def to_json(table: CoverageTable) -> str:
    return json.dumps(
        {
            "version": table.version,
            "wall_time": table.wall_time,
            "config": table.config,
            "cells": [asdict(c) for c in table.cells],
        },
        indent=2,
    )


def to_pretty(table: CoverageTable) -> str:
    """Methods as rows and levels as columns, one block per (model, estimator)."""
    lines = []
    groups: dict[tuple[str, str], list[CoverageCell]] = {}
    for c in table.cells:
        groups.setdefault((c.estimator, c.model), []).append(c)
    for (est, model), cells in groups.items():
        ns = sorted({c.n for c in cells})
        alphas = sorted({c.alpha for c in cells})
        lines.append(f"{model} series, {est}")
        head = f"{'':8s}" + " | ".join(
            " ".join(f"{a:>6.2f}" for a in alphas) for _ in ns
        )
        lines.append(f"{'':8s}" + " | ".join(f"n={n}".center(7 * len(alphas) - 1) for n in ns))
        lines.append(head)
        methods = [m for m in METHODS if any(c.method == m for c in cells)]
        for m in methods:
            row = []
            for n in ns:
                vals = {c.alpha: c.coverage for c in cells if c.method == m and c.n == n}
                row.append(" ".join(f"{vals.get(a, math.nan):>6.3f}" for a in alphas))
            lines.append(f"{METHOD_LABELS[m]:8s}" + " | ".join(row))
        lines.append("")
    return "\n".join(lines)


def emit(table: CoverageTable, fmt: str, dest=None) -> str:
    """Render `table` as "csv", "json" or "pretty"; write to `dest` if given."""
    render = {"csv": to_csv, "json": to_json, "pretty": to_pretty}
    if fmt not in render:
        raise ValueError(f"unknown format {fmt!r}")
    text = render[fmt](table)
    if dest is not None:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    return text
