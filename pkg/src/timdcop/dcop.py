"""Constraint-optimization problem container and exact baseline.

A problem holds one variable per agent, each with a finite cell domain, plus
unary and binary cost functions. math.inf (or -inf under maximize) is the
hard-conflict sentinel; float arithmetic makes it absorbing for free. Unary
constraints exist because single-agent sub-teams still need priced choices.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable

from .errors import CapExceededError, InputError

AgentId = Hashable
Value = Hashable  # cell id, or None for an idle slot
Assignment = dict  # AgentId -> Value

BRUTE_FORCE_CAP = 10**6


@dataclass
class UnaryConstraint:
    agent: AgentId
    cost: Callable[[Value], float]


@dataclass
class BinaryConstraint:
    a: AgentId
    b: AgentId
    cost: Callable[[Value, Value], float]


@dataclass
class DcopProblem:
    agents: list
    domains: dict            # AgentId -> list[Value]
    unary: list[UnaryConstraint] = field(default_factory=list)
    binary: list[BinaryConstraint] = field(default_factory=list)
    sense: str = "min"       # "min" or "max"

    def __post_init__(self) -> None:
        if self.sense not in ("min", "max"):
            raise InputError(f"sense must be min or max, got {self.sense!r}")
        if len(set(self.agents)) != len(self.agents):
            raise InputError("duplicate agent ids")
        for a in self.agents:
            dom = self.domains.get(a)
            if not dom:
                raise InputError(f"agent {a!r} has an empty domain")
        declared = set(self.agents)
        for c in self.unary:
            if c.agent not in declared:
                raise InputError(f"unary constraint on undeclared agent {c.agent!r}")
        for c in self.binary:
            if c.a not in declared or c.b not in declared:
                raise InputError("binary constraint on undeclared agent")
            if c.a == c.b:
                raise InputError("binary constraint must join two distinct agents")

    def neighbors(self, agent: AgentId) -> list:
        seen = []
        for c in self.binary:
            other = c.b if c.a == agent else c.a if c.b == agent else None
            if other is not None and other not in seen:
                seen.append(other)
        return seen


def total_cost(p: DcopProblem, assignment: Assignment) -> float:
    """Objective value of a complete assignment."""
    for a in p.agents:
        if a not in assignment:
            raise InputError(f"assignment missing agent {a!r}")
    total = 0.0
    for c in p.unary:
        total += c.cost(assignment[c.agent])
    for c in p.binary:
        total += c.cost(assignment[c.a], assignment[c.b])
    return total


def search_space(p: DcopProblem) -> int:
    return math.prod(len(p.domains[a]) for a in p.agents)


def brute_force_optimum(
    p: DcopProblem, cap: int = BRUTE_FORCE_CAP
) -> tuple[Assignment, float]:
    """Exhaustive optimum; first assignment in lexicographic order wins ties.

    Lexicographic means agents in declaration order, values in domain order.
    Refuses problems whose assignment space exceeds the cap.
    """
    space = search_space(p)
    if space > cap:
        raise CapExceededError(
            f"assignment space {space} exceeds cap {cap}"
        )
    better = (lambda x, y: x < y) if p.sense == "min" else (lambda x, y: x > y)
    best: Assignment | None = None
    best_cost = math.inf if p.sense == "min" else -math.inf
    doms = [p.domains[a] for a in p.agents]
    for combo in itertools.product(*doms):
        asg = dict(zip(p.agents, combo))
        cost = total_cost(p, asg)
        if best is None or better(cost, best_cost):
            best, best_cost = asg, cost
    assert best is not None
    return best, best_cost
