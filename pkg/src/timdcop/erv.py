"""Emergency response vehicle sub-team: stage problem builder and bookkeeping.

Each planning stage, free ERVs become DCOP agents. A candidate cell is either
an open-incident cell (dispatch, weight w_d on the expected incident delay)
or a forecast-ranked relocation cell (weight w_r on one minus the expected
incident probability next stage). The pairwise constraint forbids two ERVs on
one cell and otherwise adds the endpoints' weighted costs; with a complete
constraint graph each unary term is counted n-1 times, which rescales the
objective without moving the argmin.

w_r defaults to 100x the largest current-stage dispatch cost so every open
incident is served before any vehicle relocates.

A two-stage look-ahead augments every candidate cell with the expected cost
of responding, from that cell, to forecast incidents one and two stages out:
sum over the top-K forecast cells c of E[tau(c, u+t)] * delay_ref(travel from
the candidate to c). Future incidents have no sampled parameters yet, so the
delay uses the severity-averaged reference parameter set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .dcop import BinaryConstraint, DcopProblem, UnaryConstraint
from .errors import InputError, ModelDomainError
from .forecast import DependencyKernel, PrimaryProbField, expected_probability
from .incidents import Incident, TrafficParams, expected_delay, reference_params
from .network import CellId, GridNetwork, travel_time

DEFAULT_DISPATCH_WEIGHT = 1.0
RELOCATION_WEIGHT_FACTOR = 100.0
DEFAULT_RELOCATION_K = 10
AVAIL_EPS = 1e-9


@dataclass
class ErvState:
    id: str
    cell: CellId
    available_at: float = 0.0           # free for tasking at/after this time
    initial_cell: CellId | None = None  # depot for the conventional policy
    log: list = field(default_factory=list)  # (stage_time, cell, kind)

    def __post_init__(self) -> None:
        if self.initial_cell is None:
            self.initial_cell = self.cell

    def is_free(self, now: float) -> bool:
        return self.available_at <= now + AVAIL_EPS


@dataclass
class StageContext:
    """Everything a stage solve needs to price candidate cells."""

    net: GridNetwork
    field_: PrimaryProbField
    kernel: DependencyKernel
    stage_time: float            # hours
    stage_index: int             # forecast stage u
    open_incidents: list[Incident]
    w_d: float = DEFAULT_DISPATCH_WEIGHT
    w_r: float | None = None     # None -> auto (100 x max dispatch cost)
    lookahead: int = 2
    relocation_k: int = DEFAULT_RELOCATION_K
    stage_gap: float = 0.5       # hours between request stages
    future_params: TrafficParams | None = None  # None -> reference set

    def __post_init__(self) -> None:
        if self.w_d <= 0:
            raise InputError("dispatch weight must be positive")
        if self.w_r is not None and self.w_r <= self.w_d:
            raise InputError("relocation weight must exceed dispatch weight")
        if self.lookahead < 0 or self.lookahead > 2:
            raise InputError("lookahead must be 0, 1 or 2")
        if self.future_params is None:
            self.future_params = reference_params()


def incident_at(ctx: StageContext, cell: CellId) -> Incident | None:
    """Oldest open incident on a cell, if any (that one gets served first)."""
    hits = [i for i in ctx.open_incidents if i.location == cell and not i.cleared]
    if not hits:
        return None
    return min(hits, key=lambda i: (i.report_time, i.id))


def unary_cost(ctx: StageContext, erv: ErvState, cell: CellId) -> float:
    """Myopic weighted cost of sending one ERV to one cell this stage."""
    if ctx.w_r is None:
        raise InputError("unary_cost needs a resolved relocation weight")
    inc = incident_at(ctx, cell)
    if inc is not None:
        response = travel_time(ctx.net, erv.cell, cell)
        return ctx.w_d * expected_delay(inc.params, response)
    p = expected_probability(ctx.field_, ctx.kernel, cell, ctx.stage_index + 1)
    return ctx.w_r * (1.0 - p)


def relocation_candidates(ctx: StageContext, k: int) -> list[CellId]:
    """Top-k non-incident cells by next-stage expected probability.

    Ties break toward the lower cell index so candidate sets are stable.
    """
    occupied = {i.location for i in ctx.open_incidents if not i.cleared}
    scored = [
        (-expected_probability(ctx.field_, ctx.kernel, c, ctx.stage_index + 1), c)
        for c in ctx.net.cells()
        if c not in occupied
    ]
    scored.sort()
    return [c for _, c in scored[:k]]


def forecast_hotspots(ctx: StageContext, stage: int, k: int) -> list[tuple[CellId, float]]:
    """Top-k (cell, probability) pairs for a future stage."""
    scored = [
        (-expected_probability(ctx.field_, ctx.kernel, c, stage), c)
        for c in ctx.net.cells()
    ]
    scored.sort()
    return [(c, -negp) for negp, c in scored[:k] if -negp > 0.0]


def _coverage_term(ctx: StageContext, cell: CellId,
                   hotspots: list[list[tuple[CellId, float]]]) -> float:
    """Expected response cost from `cell` to anticipated future incidents."""
    total = 0.0
    for stage_hits in hotspots:
        for c, p in stage_hits:
            response = travel_time(ctx.net, cell, c)
            total += p * expected_delay(ctx.future_params, response)
    return total


def lookahead_cost(ctx: StageContext, erv: ErvState,
                   plan: tuple[CellId, ...]) -> float:
    """Cost of an explicit position plan (d0, d1, ..., dh).

    First element is priced like the stage-0 decision; each later element
    adds probability-weighted expected delay for responding there from the
    previous position. A leg that cannot be driven within one stage window is
    infeasible. Stages where the vehicle is still busy contribute nothing and
    pin the position in place.
    """
    if len(plan) != ctx.lookahead + 1:
        raise InputError(
            f"plan must have {ctx.lookahead + 1} positions, got {len(plan)}"
        )
    total = unary_cost(ctx, erv, plan[0])
    pos = plan[0]
    for t, cell in enumerate(plan[1:], start=1):
        stage_time = ctx.stage_time + t * ctx.stage_gap
        if not erv.is_free(stage_time):
            if cell != pos:
                raise ModelDomainError(
                    f"{erv.id} is busy at stage +{t} and cannot move"
                )
            continue
        hop = travel_time(ctx.net, pos, cell)
        if hop > ctx.stage_gap + AVAIL_EPS:
            raise ModelDomainError(
                f"leg {pos}->{cell} needs {hop:.3f} h, above the "
                f"{ctx.stage_gap:.3f} h stage window"
            )
        p = expected_probability(
            ctx.field_, ctx.kernel, cell, ctx.stage_index + t
        )
        total += p * expected_delay(ctx.future_params, hop)
        pos = cell
    return total


def build_erv_problem(ctx: StageContext, fleet: list[ErvState]) -> tuple[DcopProblem, StageContext]:
    """Stage DCOP for the free part of the fleet.

    Returns the problem plus a context copy whose w_r is resolved, so cost
    audits use exactly the weights the constraints saw.
    """
    free = sorted(
        (e for e in fleet if e.is_free(ctx.stage_time)), key=lambda e: e.id
    )
    if not free:
        raise InputError("no free ERVs at this stage")

    open_cells = sorted({
        i.location for i in ctx.open_incidents if not i.cleared
    })
    k = max(ctx.relocation_k, len(free))  # keep the conflict graph satisfiable
    domain = open_cells + relocation_candidates(ctx, k)

    hotspots = []
    if ctx.lookahead >= 1:
        per_stage_k = max(ctx.relocation_k, 1)
        hotspots = [
            forecast_hotspots(ctx, ctx.stage_index + t, per_stage_k)
            for t in range(1, ctx.lookahead + 1)
        ]

    # price every (vehicle, cell) pair once; constraints then just look up
    coverage = {cell: _coverage_term(ctx, cell, hotspots) for cell in domain} \
        if hotspots else {cell: 0.0 for cell in domain}

    resolved = ctx
    if ctx.w_r is None:
        # dispatch must dominate relocation: scale off the costliest dispatch
        worst = 0.0
        for e in free:
            for cell in open_cells:
                inc = incident_at(ctx, cell)
                assert inc is not None
                c = ctx.w_d * expected_delay(
                    inc.params, travel_time(ctx.net, e.cell, cell)
                ) + coverage[cell]
                worst = max(worst, c)
        w_r = RELOCATION_WEIGHT_FACTOR * (worst if worst > 0 else ctx.w_d)
        resolved = replace(ctx, w_r=w_r)

    cost_table: dict[tuple[str, CellId], float] = {}
    for e in free:
        for cell in domain:
            cost_table[(e.id, cell)] = (
                unary_cost(resolved, e, cell) + coverage[cell]
            )

    agents = [e.id for e in free]
    domains = {e.id: list(domain) for e in free}

    problem = DcopProblem(agents=agents, domains=domains, sense="min")
    if len(free) == 1:
        eid = free[0].id
        problem.unary.append(UnaryConstraint(
            agent=eid, cost=lambda v, eid=eid: cost_table[(eid, v)]
        ))
    else:
        for i, ea in enumerate(agents):
            for eb in agents[i + 1:]:
                def pair_cost(va, vb, ea=ea, eb=eb):
                    if va == vb:
                        return math.inf
                    return cost_table[(ea, va)] + cost_table[(eb, vb)]
                problem.binary.append(BinaryConstraint(a=ea, b=eb, cost=pair_cost))
    return problem, resolved


@dataclass
class DispatchRecord:
    incident_id: str
    erv_id: str
    travel_h: float
    response_h: float  # waiting since report + travel


def apply_assignment(
    ctx: StageContext,
    fleet: list[ErvState],
    assignment: dict[str, CellId],
) -> list[DispatchRecord]:
    """Commit a solved stage assignment to the fleet.

    Dispatched vehicles hold until response + clearance has elapsed and their
    incident is marked cleared; relocating vehicles hold for the travel time.
    Returns one record per served incident.
    """
    by_id = {e.id: e for e in fleet}
    records: list[DispatchRecord] = []
    for erv_id, cell in assignment.items():
        erv = by_id.get(erv_id)
        if erv is None:
            raise InputError(f"assignment names unknown ERV {erv_id!r}")
        if not erv.is_free(ctx.stage_time):
            raise InputError(f"ERV {erv_id} is not free at t={ctx.stage_time}")
        inc = incident_at(ctx, cell)
        travel = travel_time(ctx.net, erv.cell, cell)
        if inc is not None:
            waited = ctx.stage_time - inc.report_time
            response = waited + travel
            inc.cleared = True
            erv.available_at = ctx.stage_time + travel + inc.params.clearance
            erv.cell = cell
            erv.log.append((ctx.stage_time, cell, "dispatch"))
            records.append(DispatchRecord(
                incident_id=inc.id, erv_id=erv_id,
                travel_h=travel, response_h=response,
            ))
        else:
            erv.available_at = ctx.stage_time + travel
            erv.cell = cell
            erv.log.append((ctx.stage_time, cell, "relocate"))
    return records
