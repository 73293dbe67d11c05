"""Synchronous local search over a DcopProblem: MGM and DSA-B.

Both run the same barrier-round loop:

  1. seeded random initial assignment (conflict-avoiding when possible)
  2. agents exchange current values with neighbours
  3. each agent computes its local cost under the snapshot
  4. each agent scans its full domain for the best unilateral change
  5. move rule -- MGM: move iff own gain > 0 and strictly largest among
     neighbours (ties to the lowest agent id); DSA-B: move iff gain > 0 and
     an independent uniform draw falls below the activation threshold
  6. repeat for a fixed iteration count

Moves within a round are computed against the same snapshot and applied
together. The trace records the best-known objective after every round, so
the result is an anytime one: MGM's sequence never worsens, DSA's current
assignment may oscillate but the reported best cannot.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .dcop import AgentId, Assignment, DcopProblem, Value, total_cost
from .errors import InputError


@dataclass(frozen=True)
class SolverConfig:
    algorithm: str = "dsa"      # "mgm" or "dsa"
    iterations: int = 45
    dsa_threshold: float = 0.9  # activation probability, DSA only
    seed: int | None = None     # mandatory for DSA (stochastic move rule)

    def __post_init__(self) -> None:
        if self.algorithm not in ("mgm", "dsa"):
            raise InputError(f"unknown algorithm {self.algorithm!r}")
        if self.iterations < 1:
            raise InputError("iterations must be >= 1")
        if not (0.0 <= self.dsa_threshold <= 1.0):
            raise InputError("dsa_threshold must lie in [0, 1]")

    @property
    def label(self) -> str:
        if self.algorithm == "dsa":
            return f"dsa-{self.dsa_threshold:g}"
        return "mgm"


@dataclass
class SolveTrace:
    algorithm: str
    variant: str                 # "mgm" | "dsa-b"
    sense: str
    best_costs: list[float]      # best-known objective after each round
    final_assignment: Assignment  # best assignment seen (the answer)
    last_assignment: Assignment   # raw assignment when the loop stopped
    moves: list[int]             # moves applied per round
    round_messages: list[int]    # messages exchanged per round
    messages: int                # total

    @property
    def final_cost(self) -> float:
        return self.best_costs[-1]


def _local_tables(p: DcopProblem):
    """Per-agent unary list and (constraint, other-agent, flipped) list."""
    unary: dict[AgentId, list] = {a: [] for a in p.agents}
    binary: dict[AgentId, list] = {a: [] for a in p.agents}
    for c in p.unary:
        unary[c.agent].append(c.cost)
    for c in p.binary:
        binary[c.a].append((c.cost, c.b, False))
        binary[c.b].append((c.cost, c.a, True))
    return unary, binary


def _initial_assignment(
    p: DcopProblem, rng: np.random.Generator
) -> Assignment:
    # uniform per agent, avoiding already-taken cells when any remain
    out: Assignment = {}
    taken: set = set()
    for a in p.agents:
        dom = p.domains[a]
        free = [v for v in dom if v is None or v not in taken]
        pool = free if free else dom
        v = pool[int(rng.integers(len(pool)))]
        out[a] = v
        if v is not None:
            taken.add(v)
    return out


def _gain(cur: float, best: float) -> float:
    if cur == best:
        return 0.0
    if math.isinf(cur) and not math.isinf(best):
        return math.inf
    return cur - best


def solve(p: DcopProblem, cfg: SolverConfig) -> SolveTrace:
    """Run the configured local search for cfg.iterations barrier rounds."""
    if cfg.algorithm == "dsa" and cfg.seed is None:
        raise InputError("DSA needs an explicit seed")
    rng = np.random.default_rng(cfg.seed if cfg.seed is not None else 0)
    flip = 1.0 if p.sense == "min" else -1.0

    unary_of, binary_of = _local_tables(p)
    order = list(p.agents)
    # tie-break rank: position in the declared agent order (builders declare
    # agents sorted by id, so this is "lowest agent id")
    rank = {a: i for i, a in enumerate(order)}
    neighbors = {a: p.neighbors(a) for a in order}

    def local(agent: AgentId, value: Value, snapshot: Assignment) -> float:
        c = 0.0
        for fn in unary_of[agent]:
            c += fn(value)
        for fn, other, flipped in binary_of[agent]:
            c += fn(snapshot[other], value) if flipped else fn(value, snapshot[other])
        return flip * c

    current = _initial_assignment(p, rng)
    best_assignment = dict(current)
    best = flip * total_cost(p, current)

    best_costs: list[float] = []
    moves_per_round: list[int] = []
    round_messages: list[int] = []
    neighbor_count = sum(len(neighbors[a]) for a in order)

    for _ in range(cfg.iterations):
        snapshot = dict(current)
        msgs = neighbor_count  # everyone broadcasts its value

        proposals: dict[AgentId, Value] = {}
        gains: dict[AgentId, float] = {}
        for a in order:
            cur_cost = local(a, snapshot[a], snapshot)
            best_val, best_cost = snapshot[a], cur_cost
            for v in p.domains[a]:
                c = local(a, v, snapshot)
                if c < best_cost:
                    best_val, best_cost = v, c
            gains[a] = _gain(cur_cost, best_cost)
            proposals[a] = best_val

        if cfg.algorithm == "mgm":
            msgs += neighbor_count  # gain broadcast round
            movers = []
            for a in order:
                g = gains[a]
                if g <= 0.0:
                    continue
                wins = all(
                    g > gains[b] or (g == gains[b] and rank[a] < rank[b])
                    for b in neighbors[a]
                )
                if wins:
                    movers.append(a)
        else:
            draws = {a: rng.random() for a in order}
            movers = [
                a for a in order
                if gains[a] > 0.0 and draws[a] < cfg.dsa_threshold
            ]

        for a in movers:
            current[a] = proposals[a]

        cost = flip * total_cost(p, current)
        if cost < best:
            best = cost
            best_assignment = dict(current)
        best_costs.append(flip * best)
        moves_per_round.append(len(movers))
        round_messages.append(msgs)

    return SolveTrace(
        algorithm=cfg.algorithm,
        variant="dsa-b" if cfg.algorithm == "dsa" else "mgm",
        sense=p.sense,
        best_costs=best_costs,
        final_assignment=best_assignment,
        last_assignment=current,
        moves=moves_per_round,
        round_messages=round_messages,
        messages=sum(round_messages),
    )


def write_trace_csv(trace: SolveTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "best_cost", "moves", "messages"])
        for i, (c, m, s) in enumerate(
            zip(trace.best_costs, trace.moves, trace.round_messages), start=1
        ):
            w.writerow([i, repr(c), m, s])


@dataclass
class SolverStats:
    label: str
    final_costs: list[float]
    mean: float
    se: float


def monte_carlo_compare(
    problem_gen: Callable[[int], DcopProblem],
    configs: list[SolverConfig],
    trials: int,
    seed: int = 0,
) -> list[SolverStats]:
    """Paired trials: every config solves the same generated instances.

    Trial t uses problem_gen(seed + t) and one shared solver seed, so config
    comparisons are paired sample by sample. Stats come back in config order
    (labels may repeat; two identical configs yield identical statistics).
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    costs: list[list[float]] = [[] for _ in configs]
    for t in range(trials):
        prob = problem_gen(seed + t)
        solver_seed = seed * 1_000_003 + t
        for i, cfg in enumerate(configs):
            tr = solve(prob, replace(cfg, seed=solver_seed))
            costs[i].append(tr.final_cost)
    out: list[SolverStats] = []
    for cfg, vals in zip(configs, costs):
        arr = np.asarray(vals)
        se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        out.append(SolverStats(
            label=cfg.label,
            final_costs=[float(x) for x in arr],
            mean=float(arr.mean()),
            se=se,
        ))
    return out
