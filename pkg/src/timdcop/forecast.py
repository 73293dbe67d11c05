"""Incident probability forecast over grid cells and planning stages.

A primary probability field gives, per (cell, stage), the chance a fresh
incident is reported there. A dependency kernel adds secondary pressure: an
incident at cell j raises the probability at coupled cells k one and two
stages later. The expected probability at (k, u) is

    E[tau(k, u)] = min(1, pr_p[k, u]
                        + sum_j delta[(j, 1, k)] * pr_p[j, u-1]
                        + sum_j delta[(j, 2, k)] * pr_p[j, u-2])

Stages outside the field horizon contribute zero (no history before stage 0,
nothing anticipated past the horizon).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .network import CellId, GridNetwork

DEFAULT_PROB_RANGE = (0.0, 0.15)
DEFAULT_LAG1 = 0.3
DEFAULT_LAG2 = 0.1


@dataclass
class PrimaryProbField:
    """Per-stage, per-cell primary incident probabilities."""

    values: np.ndarray  # shape (stages, cells), entries in [0, 1]

    @property
    def stages(self) -> int:
        return self.values.shape[0]

    @property
    def cells(self) -> int:
        return self.values.shape[1]

    def prob(self, cell: CellId, stage: int) -> float:
        if stage < 0 or stage >= self.stages:
            return 0.0
        return float(self.values[stage, cell])


@dataclass
class DependencyKernel:
    """Sparse secondary-incident couplings.

    delta maps (source cell j, lag in {1, 2}, target cell k) to a
    non-negative ratio.
    """

    delta: dict[tuple[CellId, int, CellId], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for (j, lag, k), v in self.delta.items():
            if lag not in (1, 2):
                raise InputError(f"kernel lag must be 1 or 2, got {lag}")
            if v < 0:
                raise InputError(f"negative kernel ratio at ({j},{lag},{k})")
        # target -> [(source, lag, ratio)] for fast lookup
        self._by_target: dict[CellId, list[tuple[CellId, int, float]]] = {}
        for (j, lag, k), v in self.delta.items():
            self._by_target.setdefault(k, []).append((j, lag, v))

    def incoming(self, k: CellId) -> list[tuple[CellId, int, float]]:
        return self._by_target.get(k, [])


@dataclass(frozen=True)
class FieldConfig:
    prob_range: tuple[float, float] = DEFAULT_PROB_RANGE
    normalize: bool = False
    budget: float = 1.0  # per-stage probability mass when normalizing


def default_kernel(
    net: GridNetwork, lag1: float = DEFAULT_LAG1, lag2: float = DEFAULT_LAG2
) -> DependencyKernel:
    """Couple every cell to its grid neighbours at lags 1 and 2."""
    delta: dict[tuple[CellId, int, CellId], float] = {}
    for k in net.cells():
        for j in net.neighbors(k):
            if lag1 > 0:
                delta[(j, 1, k)] = lag1
            if lag2 > 0:
                delta[(j, 2, k)] = lag2
    return DependencyKernel(delta=delta)


def generate_field(
    n_cells: int,
    stages: int,
    seed: int = 0,
    config: FieldConfig = FieldConfig(),
) -> PrimaryProbField:
    """Draw a uniform random primary field, optionally stage-normalized."""
    lo, hi = config.prob_range
    if not (0.0 <= lo <= hi <= 1.0):
        raise InputError(f"probability range must sit inside [0,1]: ({lo},{hi})")
    if stages < 1 or n_cells < 1:
        raise InputError("field needs at least one stage and one cell")
    rng = np.random.default_rng(seed)
    vals = rng.uniform(lo, hi, size=(stages, n_cells))
    if config.normalize:
        sums = vals.sum(axis=1, keepdims=True)
        nonzero = sums[:, 0] > 0
        vals[nonzero] = vals[nonzero] / sums[nonzero] * config.budget
    return PrimaryProbField(values=vals)


def expected_probability(
    fld: PrimaryProbField,
    kernel: DependencyKernel,
    cell: CellId,
    stage: int,
) -> float:
    """Primary plus lagged secondary probability at (cell, stage), capped at 1."""
    if stage < 0:
        raise InputError(f"stage must be >= 0, got {stage}")
    total = fld.prob(cell, stage)
    for j, lag, ratio in kernel.incoming(cell):
        total += ratio * fld.prob(j, stage - lag)
    return min(1.0, total)


def to_json(fld: PrimaryProbField, kernel: DependencyKernel) -> str:
    payload = {
        "stages": fld.stages,
        "cells": fld.cells,
        "pr_p": [[float(v) for v in row] for row in fld.values],
        "delta": [
            {"j": j, "lag": lag, "k": k, "value": v}
            for (j, lag, k), v in sorted(kernel.delta.items())
        ],
    }
    return json.dumps(payload, sort_keys=True)


def from_json(text: str) -> tuple[PrimaryProbField, DependencyKernel]:
    try:
        payload = json.loads(text)
        vals = np.asarray(payload["pr_p"], dtype=float)
        entries = payload["delta"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad forecast JSON: {exc}") from exc
    if vals.ndim != 2:
        raise InputError("pr_p must be a stages x cells matrix")
    if np.any(vals < 0) or np.any(vals > 1):
        raise InputError("pr_p entries must lie in [0, 1]")
    delta = {}
    for e in entries:
        try:
            delta[(int(e["j"]), int(e["lag"]), int(e["k"]))] = float(e["value"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad kernel entry {e!r}: {exc}") from exc
    return PrimaryProbField(values=vals), DependencyKernel(delta=delta)
