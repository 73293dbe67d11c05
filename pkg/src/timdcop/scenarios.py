"""Scenario assembly, the per-stage planning loop, and the three policies.

A scenario seeds everything: grid, incident bodies, forecast field, initial
positions, per-stage solver streams and observation noise all derive from one
master seed, so a run is a pure function of its Scenario and re-runs are
byte-identical.

Policies:

* ``conventional`` -- closest available vehicle per incident, oldest incident
  first; vehicles return to their depot (initial cell) after service and the
  return leg occupies the availability clock; no relocation, no look-ahead,
  no UAVs.
* ``pdronetim`` -- the proactive stage loop: ingest requests, solve the ERV
  sub-team DCOP (dispatch + forecast-driven relocation + look-ahead), commit,
  solve the UAV sub-team for observation tasking, apply cooperation and data
  assimilation, advance the clock.
* ``opt`` -- clairvoyant baseline that knows the whole request sequence and
  searches service schedules exactly (branch and bound under an evaluation
  cap); it moves vehicles directly between commitments and ignores UAVs.

Total delay is the sum over incidents of the expected delay at the realized
response time (waiting since report + travel, after any cooperation
reduction). The loop keeps running past the last scheduled request until
every incident is served, so totals always cover the full request set.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import CapExceededError, InputError
from .erv import (
    DispatchRecord,
    ErvState,
    StageContext,
    apply_assignment,
    build_erv_problem,
)
from .forecast import (
    DependencyKernel,
    FieldConfig,
    PrimaryProbField,
    default_kernel,
    generate_field,
)
from .incidents import (
    Incident,
    delay_variance,
    expected_delay,
    sample_incident,
)
from .network import GridNetwork, build_grid, travel_time
from .solvers import SolverConfig, solve
from .uav import (
    AssimilationRecord,
    DelayBelief,
    UavState,
    apply_uav_assignment,
    assimilate,
    build_uav_problem,
    cooperation_effect,
    priority_benefit,
    simulate_observation,
)

POLICIES = ("conventional", "pdronetim", "opt")

OPT_EVAL_CAP = 10**6

# sub-seed purpose codes (SeedSequence([master, code, ...]))
_NET, _INC, _FIELD, _ATTRS, _POS, _SOLVER, _UAVSOLVER, _OBS = range(8)


def _rng(master: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, *key]))


def _int_seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence([master, *key]).generate_state(1)[0])


@dataclass(frozen=True)
class Scenario:
    seed: int
    schedule: tuple[int, ...] = (1,)   # new requests per stage
    rows: int = 10
    cols: int = 10
    edge_time_range: tuple[float, float] = (0.1, 1.5)
    n_ervs: int = 3
    n_uavs: int = 0
    stage_gap: float = 0.5             # hours between request stages
    solver: SolverConfig = SolverConfig()
    prob_range: tuple[float, float] = (0.0, 0.15)
    normalize_field: bool = False
    field_budget: float = 1.0
    lookahead: int = 2
    relocation_k: int = 10
    cooperation: bool = True
    kappa: float = 0.5                 # observation variance ratio
    forecast_signal: float = 0.35      # probability lift at true incident cells
    name: str = ""

    def __post_init__(self) -> None:
        if self.n_ervs < 1:
            raise InputError("need at least one ERV")
        if self.n_uavs < 0:
            raise InputError("negative UAV count")
        if self.stage_gap <= 0:
            raise InputError("stage gap must be positive")
        if not self.schedule or any(k < 0 for k in self.schedule):
            raise InputError("schedule must be a non-empty tuple of counts >= 0")
        if not (0.0 <= self.forecast_signal <= 1.0):
            raise InputError("forecast_signal must lie in [0, 1]")


@dataclass
class World:
    """Materialized scenario state shared by every policy run."""

    net: GridNetwork
    field_: PrimaryProbField
    kernel: DependencyKernel
    incidents: list[Incident]          # full request sequence, report order
    hazard: dict[str, int]             # incident id -> hazard level 1..5
    sparsity: dict[str, int]           # incident id -> sensor sparsity 1..5
    erv_cells: list[int]
    uav_cells: list[int]


def materialize(sc: Scenario) -> World:
    """Build the world the scenario describes. Pure function of the seed."""
    net = build_grid(sc.rows, sc.cols, sc.edge_time_range,
                     seed=_int_seed(sc.seed, _NET))
    # field horizon covers the schedule plus the look-ahead window
    stages = len(sc.schedule) + sc.lookahead + 1
    field_ = generate_field(
        net.n_cells, stages, seed=_int_seed(sc.seed, _FIELD),
        config=FieldConfig(
            prob_range=sc.prob_range,
            normalize=sc.normalize_field,
            budget=sc.field_budget,
        ),
    )
    kernel = default_kernel(net)

    inc_rng = _rng(sc.seed, _INC)
    attrs_rng = _rng(sc.seed, _ATTRS)
    incidents: list[Incident] = []
    hazard: dict[str, int] = {}
    sparsity: dict[str, int] = {}
    n = 0
    for stage, count in enumerate(sc.schedule):
        if count > net.n_cells:
            raise InputError(
                f"stage {stage} requests {count} incidents on "
                f"{net.n_cells} cells"
            )
        cells = inc_rng.choice(net.n_cells, size=count, replace=False)
        for cell in cells:
            inc_id = f"i{n:03d}"
            severity = int(inc_rng.integers(1, 5))
            incidents.append(sample_incident(
                inc_id, severity, int(cell), stage * sc.stage_gap, inc_rng,
            ))
            hazard[inc_id] = int(attrs_rng.integers(1, 6))
            sparsity[inc_id] = int(attrs_rng.integers(1, 6))
            n += 1

    # the forecast has skill: lift the primary probability where and when
    # incidents will actually land (strength is a scenario knob; 0 = noise)
    if sc.forecast_signal > 0:
        for inc in incidents:
            stage = int(round(inc.report_time / sc.stage_gap))
            cell = inc.location
            field_.values[stage, cell] = min(
                1.0, field_.values[stage, cell] + sc.forecast_signal
            )

    pos_rng = _rng(sc.seed, _POS)
    erv_cells = [int(c) for c in pos_rng.integers(0, net.n_cells, sc.n_ervs)]
    uav_cells = [int(c) for c in pos_rng.integers(0, net.n_cells, sc.n_uavs)]
    return World(
        net=net, field_=field_, kernel=kernel, incidents=incidents,
        hazard=hazard, sparsity=sparsity,
        erv_cells=erv_cells, uav_cells=uav_cells,
    )


@dataclass
class IncidentOutcome:
    incident_id: str
    cell: int
    severity: int
    report_h: float
    erv_id: str
    response_h: float
    delay_veh_h: float
    delay_var: float
    cooperating: bool


@dataclass
class StageOutcome:
    stage: int
    time_h: float
    n_open: int
    n_free_ervs: int
    erv_assignments: list       # (erv_id, cell, kind)
    erv_cost: float | None      # objective of the committed assignment
    erv_messages: int
    erv_moves: int
    uav_assignments: list       # (uav_id, cell)
    uav_utility: float | None


@dataclass
class RunResult:
    policy: str
    seed: int
    stages: list[StageOutcome]
    incidents: list[IncidentOutcome]
    assimilation: list[AssimilationRecord]
    total_delay_veh_h: float
    total_response_min: float
    total_uav_utility: float
    opt_nodes: int = 0


def _finish(policy: str, sc: Scenario, stages, outcomes, records,
            uav_total: float, opt_nodes: int = 0) -> RunResult:
    outcomes = sorted(outcomes, key=lambda o: o.incident_id)
    return RunResult(
        policy=policy,
        seed=sc.seed,
        stages=stages,
        incidents=outcomes,
        assimilation=records,
        total_delay_veh_h=sum(o.delay_veh_h for o in outcomes),
        total_response_min=sum(o.response_h for o in outcomes) * 60.0,
        total_uav_utility=uav_total,
        opt_nodes=opt_nodes,
    )


def _stage_guard(sc: Scenario, world: World) -> int:
    # generous livelock bound: every incident must be served long before this
    return len(sc.schedule) + 200 + 80 * len(world.incidents)


def _fresh_incidents(w: World) -> list[Incident]:
    # runs mutate the cleared flag; never touch the shared world's objects
    return [replace(i, cleared=False) for i in w.incidents]


# ---------------------------------------------------------------- proactive


def run_proactive(sc: Scenario, world: World | None = None) -> RunResult:
    w = world if world is not None else materialize(sc)
    fleet = [
        ErvState(id=f"erv{i}", cell=c) for i, c in enumerate(w.erv_cells)
    ]
    uavs = [
        UavState(id=f"uav{i}", cell=c) for i, c in enumerate(w.uav_cells)
    ]
    obs_rng = _rng(sc.seed, _OBS)

    all_incidents = _fresh_incidents(w)
    by_id = {i.id: i for i in all_incidents}
    pending = list(all_incidents)      # not yet reported
    open_inc: list[Incident] = []
    beliefs: dict[str, DelayBelief] = {}
    stages: list[StageOutcome] = []
    outcomes: list[IncidentOutcome] = []
    assim: list[AssimilationRecord] = []
    uav_total = 0.0

    stage = 0
    guard = _stage_guard(sc, w)
    # cover every scheduled stage (relocation duty even with no requests),
    # then keep draining until every incident is served
    while pending or open_inc or stage < len(sc.schedule):
        if stage > guard:
            raise RuntimeError(
                f"stage loop failed to drain after {guard} stages"
            )
        t = stage * sc.stage_gap
        while pending and pending[0].report_time <= t + 1e-9:
            open_inc.append(pending.pop(0))

        free = [e for e in fleet if e.is_free(t)]
        records: list[DispatchRecord] = []
        erv_assignments: list = []
        erv_cost = None
        erv_messages = 0
        erv_moves = 0
        # skip the solve when there is nothing to do: no open incidents and
        # nothing left to anticipate (past the forecast horizon)
        worth_solving = bool(open_inc) or stage + 1 < w.field_.stages
        if free and worth_solving:
            ctx = StageContext(
                net=w.net, field_=w.field_, kernel=w.kernel,
                stage_time=t, stage_index=stage,
                open_incidents=list(open_inc),
                lookahead=sc.lookahead, relocation_k=sc.relocation_k,
                stage_gap=sc.stage_gap,
            )
            problem, rctx = build_erv_problem(ctx, fleet)
            cfg = replace(sc.solver, seed=_int_seed(sc.seed, _SOLVER, stage))
            trace = solve(problem, cfg)
            records = apply_assignment(rctx, fleet, trace.final_assignment)
            erv_cost = trace.final_cost
            erv_messages = trace.messages
            erv_moves = sum(trace.moves)
            for erv_id, cell in sorted(trace.final_assignment.items()):
                kind = "dispatch" if any(
                    r.erv_id == erv_id for r in records
                ) else "relocate"
                erv_assignments.append((erv_id, int(cell), kind))

        # UAV observation tasking for the incidents served this stage
        uav_assignments: list = []
        uav_utility = None
        observed: dict[str, int] = {}
        if records and uavs:
            free_uavs = [u for u in uavs if u.is_free(t)]
            if free_uavs:
                benefits = {}
                for r in records:
                    inc = by_id[r.incident_id]
                    benefits[inc.location] = priority_benefit(
                        inc.severity, w.sparsity[inc.id], w.hazard[inc.id],
                    )
                u_problem = build_uav_problem(w.net, free_uavs, benefits)
                u_cfg = replace(
                    sc.solver, seed=_int_seed(sc.seed, _UAVSOLVER, stage)
                )
                u_trace = solve(u_problem, u_cfg)
                observed = apply_uav_assignment(
                    w.net, free_uavs, u_trace.final_assignment, t
                )
                uav_utility = u_trace.final_cost
                if math.isfinite(uav_utility):
                    uav_total += uav_utility
                uav_assignments = sorted(
                    (uid, int(c)) for uid, c in observed.items()
                )

        observed_cells = set(observed.values())
        for r in records:
            inc = by_id[r.incident_id]
            coop = sc.cooperation and inc.location in observed_cells
            response = cooperation_effect(
                r.response_h, w.hazard[inc.id], coop
            )
            d = expected_delay(inc.params, response)
            v = delay_variance(inc.params, response)
            beliefs[inc.id] = DelayBelief(mean=d, variance=v)
            outcomes.append(IncidentOutcome(
                incident_id=inc.id, cell=inc.location, severity=inc.severity,
                report_h=inc.report_time, erv_id=r.erv_id,
                response_h=response, delay_veh_h=d, delay_var=v,
                cooperating=coop,
            ))

        # data assimilation for every overflight of a fresh dispatch
        cell_to_record = {by_id[r.incident_id].location: r for r in records}
        for uid in sorted(observed):
            cell = observed[uid]
            r = cell_to_record.get(cell)
            if r is None:
                continue
            prior = beliefs[r.incident_id]
            if prior.variance <= 0:
                continue
            obs_mean, obs_var = simulate_observation(
                prior, prior.mean, obs_rng, kappa=sc.kappa
            )
            post, beta = assimilate(prior, obs_mean, obs_var)
            beliefs[r.incident_id] = post
            assim.append(AssimilationRecord(
                incident_id=r.incident_id, uav_id=uid,
                prior_mean=prior.mean, prior_var=prior.variance,
                obs_mean=obs_mean, obs_var=obs_var, beta=beta,
                post_mean=post.mean, post_var=post.variance,
            ))

        open_inc = [i for i in open_inc if not i.cleared]
        stages.append(StageOutcome(
            stage=stage, time_h=t,
            n_open=len(open_inc), n_free_ervs=len(free),
            erv_assignments=erv_assignments, erv_cost=erv_cost,
            erv_messages=erv_messages, erv_moves=erv_moves,
            uav_assignments=uav_assignments, uav_utility=uav_utility,
        ))
        stage += 1

    return _finish("pdronetim", sc, stages, outcomes, assim, uav_total)


# ------------------------------------------------------------- conventional


def run_conventional(sc: Scenario, world: World | None = None) -> RunResult:
    """Reactive baseline: closest available vehicle, then back to the depot."""
    w = world if world is not None else materialize(sc)
    fleet = [
        ErvState(id=f"erv{i}", cell=c) for i, c in enumerate(w.erv_cells)
    ]
    pending = _fresh_incidents(w)
    open_inc: list[Incident] = []
    stages: list[StageOutcome] = []
    outcomes: list[IncidentOutcome] = []

    stage = 0
    guard = _stage_guard(sc, w)
    while pending or open_inc or stage < len(sc.schedule):
        if stage > guard:
            raise RuntimeError(
                f"stage loop failed to drain after {guard} stages"
            )
        t = stage * sc.stage_gap
        while pending and pending[0].report_time <= t + 1e-9:
            open_inc.append(pending.pop(0))

        free = [e for e in fleet if e.is_free(t)]
        assignments: list = []
        for inc in sorted(open_inc, key=lambda i: (i.report_time, i.id)):
            avail = [e for e in fleet if e.is_free(t)]
            if not avail:
                break
            erv = min(
                avail,
                key=lambda e: (travel_time(w.net, e.cell, inc.location), e.id),
            )
            travel = travel_time(w.net, erv.cell, inc.location)
            response = (t - inc.report_time) + travel
            d = expected_delay(inc.params, response)
            v = delay_variance(inc.params, response)
            inc.cleared = True
            # serve, then drive home; busy for the whole tour
            back = travel_time(w.net, inc.location, erv.initial_cell)
            erv.available_at = t + travel + inc.params.clearance + back
            erv.cell = erv.initial_cell
            erv.log.append((t, inc.location, "dispatch"))
            assignments.append((erv.id, inc.location, "dispatch"))
            outcomes.append(IncidentOutcome(
                incident_id=inc.id, cell=inc.location, severity=inc.severity,
                report_h=inc.report_time, erv_id=erv.id,
                response_h=response, delay_veh_h=d, delay_var=v,
                cooperating=False,
            ))

        open_inc = [i for i in open_inc if not i.cleared]
        stages.append(StageOutcome(
            stage=stage, time_h=t,
            n_open=len(open_inc), n_free_ervs=len(free),
            erv_assignments=assignments, erv_cost=None,
            erv_messages=0, erv_moves=0,
            uav_assignments=[], uav_utility=None,
        ))
        stage += 1

    return _finish("conventional", sc, stages, outcomes, [], 0.0)


# ---------------------------------------------------------------------- opt


def run_opt(sc: Scenario, world: World | None = None,
            cap: int = OPT_EVAL_CAP) -> RunResult:
    """Clairvoyant exact baseline.

    Searches every assignment of incidents to vehicles with free per-vehicle
    service order; vehicles drive straight to their next commitment as soon
    as they are free (service cannot start before the report). Services are
    enumerated as a single event sequence in nondecreasing
    (start, vehicle, incident) order, which names each schedule exactly once.

    Branch and bound. A state's floor combines two admissible parts (see
    remaining_floor): the best-direct-arrival delay per unserved incident,
    and a one-to-one matching of incidents to (vehicle, rank) slots that
    charges each rank the cheapest clearances and inbound legs it must
    absorb. The search starts from the best of three polished incumbents —
    a greedy schedule and both realized policies replayed with direct
    motion — so it returns at or below either policy's cost by
    construction. States surviving their own floor count as evaluations;
    exceeding `cap` raises CapExceededError.
    """
    w = world if world is not None else materialize(sc)
    incidents = sorted(_fresh_incidents(w), key=lambda i: (i.report_time, i.id))
    n = len(incidents)
    n_erv = len(w.erv_cells)

    # travel rows for every position the search can reach
    sources = set(w.erv_cells) | {i.location for i in incidents}
    tt = {
        src: [travel_time(w.net, src, dst) for dst in range(w.net.n_cells)]
        for src in sources
    }
    tt_np = {src: np.asarray(row) for src, row in tt.items()}

    # delay_i(response) = max(0, coef_i * ((response + clr_i)^2 + var_i))
    rep = np.array([i.report_time for i in incidents])
    loc = np.array([i.location for i in incidents])
    clr = np.array([i.params.clearance for i in incidents])
    var = np.array([i.params.r_var for i in incidents])
    coef = np.array([
        (i.params.s1_mean**2 + i.params.s1_sd**2
         - (i.params.s + i.params.q) * i.params.s1_mean
         + i.params.s * i.params.q) / (2.0 * (i.params.s - i.params.q))
        for i in incidents
    ])
    erv_range = np.arange(1, n_erv + 1)

    # minimum inbound travel per incident: every service occupies its
    # vehicle for at least this plus the clearance (zero when a vehicle
    # could already stand on the cell)
    multi = {c for c in loc.tolist() if list(loc).count(c) > 1}
    tin = np.array([
        0.0 if (c in w.erv_cells or c in multi)
        else min(tt[s][c] for s in sources if s != c)
        for c in loc.tolist()
    ])
    occupy = clr + tin

    def remaining_floor(remaining: frozenset, pos: tuple, free_at: tuple,
                        last_start: float, need: float) -> float:
        """Admissible bound on the cost of the unserved incidents.

        Direct part: each incident costs at least the delay of the best
        direct arrival from some vehicle's current state (detours and later
        departures only lengthen the response), and no remaining service may
        start before the last scheduled one in the canonical order. If that
        already reaches `need`, stop there. Otherwise refine: an incident
        served r-th by vehicle e cannot start before the vehicle has
        absorbed r - 1 clearances (cheapest possible) and the connecting
        travel, which is at least the direct leg and at least the r cheapest
        inbound legs chained together; the cheapest one-to-one matching of
        incidents to (vehicle, rank) slots is then still a lower bound.
        """
        idx = np.fromiter(remaining, dtype=int, count=len(remaining))
        locs = loc[idx]
        base = last_start if last_start > 0.0 else 0.0
        arrive = np.minimum.reduce(
            [free_at[e] + tt_np[pos[e]][locs] for e in range(n_erv)]
        )
        g = np.maximum(np.maximum(arrive, rep[idx]), base)
        resp = g - rep[idx]
        cf, cl, vr = coef[idx], clr[idx], var[idx]
        direct = float(
            np.maximum(cf * ((resp + cl) ** 2 + vr), 0.0).sum()
        )
        k = idx.size
        if k <= n_erv or direct >= need:
            return direct

        # prefix sums of the cheapest r - 1 clearances / inbound legs
        ccum = np.concatenate(([0.0], np.cumsum(np.sort(cl))))[:k]
        tcum = np.concatenate(([0.0], np.cumsum(np.sort(tin[idx]))))[:k]
        blocks = []
        for e in range(n_erv):
            tt_e = tt_np[pos[e]][locs]  # (k,)
            travel = np.maximum(tt_e[None, :], tcum[:, None] + tin[idx][None, :])
            start = free_at[e] + ccum[:, None] + travel
            start = np.maximum(np.maximum(start, rep[idx][None, :]), base)
            cost = cf[None, :] * ((start - rep[idx][None, :] + cl[None, :]) ** 2
                                  + vr[None, :])
            blocks.append(np.maximum(cost, 0.0))
        costm = np.concatenate(blocks, axis=0)  # (n_erv * k ranks, k)
        rows, cols = linear_sum_assignment(costm.T)
        return max(direct, float(costm.T[rows, cols].sum()))

    # greedy warm start (report order, earliest-start vehicle) seeds the bound
    def greedy() -> tuple[float, list[tuple[int, int, float]]]:
        pos = list(w.erv_cells)
        free_at = [0.0] * n_erv
        total = 0.0
        plan = []
        for idx, inc in enumerate(incidents):
            cands = []
            for e in range(n_erv):
                arrive = free_at[e] + tt[pos[e]][inc.location]
                cands.append((max(arrive, inc.report_time), e))
            start, e = min(cands)
            total += expected_delay(inc.params, start - inc.report_time)
            free_at[e] = start + inc.params.clearance
            pos[e] = inc.location
            plan.append((idx, e, start))
        return total, plan

    id_to_idx = {inc.id: i for i, inc in enumerate(incidents)}

    def replay(result: RunResult) -> tuple[float, list[tuple[int, int, float]]]:
        """Re-run a realized policy's per-vehicle service orders with direct
        motion. Skipping depot returns and relocation detours can only move
        each service start earlier (triangle inequality), so the replayed
        schedule is a point of this search space costing no more than the
        policy's realized total."""
        by_erv: list[list[IncidentOutcome]] = [[] for _ in range(n_erv)]
        for o in result.incidents:
            by_erv[int(o.erv_id.removeprefix("erv"))].append(o)
        pos = list(w.erv_cells)
        free_at = [0.0] * n_erv
        total = 0.0
        plan = []
        for e, served in enumerate(by_erv):
            served.sort(key=lambda o: (o.report_h + o.response_h, o.incident_id))
            for o in served:
                i = id_to_idx[o.incident_id]
                inc = incidents[i]
                start = max(
                    inc.report_time, free_at[e] + tt[pos[e]][inc.location]
                )
                total += expected_delay(inc.params, start - inc.report_time)
                free_at[e] = start + inc.params.clearance
                pos[e] = inc.location
                plan.append((i, e, start))
        return total, plan

    # incumbents: greedy plus both realized policies replayed into this
    # space, so the exact search starts at or below either policy's cost
    incumbents = [greedy(), replay(run_conventional(sc, w)),
                  replay(run_proactive(sc, w))]

    def seq_cost(seqs) -> tuple[float, list[tuple[int, int, float]]]:
        total = 0.0
        plan = []
        for e, seq in enumerate(seqs):
            at, free = w.erv_cells[e], 0.0
            for i in seq:
                inc = incidents[i]
                start = max(inc.report_time, free + tt[at][inc.location])
                total += expected_delay(inc.params, start - inc.report_time)
                plan.append((i, e, start))
                free = start + inc.params.clearance
                at = inc.location
        return total, plan

    def polish(cost: float, plan: list[tuple[int, int, float]]):
        """Steepest descent over single-incident relocations (any vehicle,
        any position) and pairwise exchanges until no move improves. The
        result stays a valid schedule, so the exact search below only
        confirms or beats it."""
        seqs: list[list[int]] = [[] for _ in range(n_erv)]
        for i, e, start in sorted(plan, key=lambda t: t[2]):
            seqs[e].append(i)
        while True:
            step_cost, step = cost, None
            for a in range(n_erv):
                for p in range(len(seqs[a])):
                    rest = [list(s) for s in seqs]
                    moved = rest[a].pop(p)
                    for b in range(n_erv):
                        for q in range(len(rest[b]) + 1):
                            if b == a and q == p:
                                continue
                            trial = [list(s) for s in rest]
                            trial[b].insert(q, moved)
                            c, pl = seq_cost(trial)
                            if c < step_cost - 1e-9:
                                step_cost, step = c, (trial, pl)
            slots = [(e, p) for e in range(n_erv)
                     for p in range(len(seqs[e]))]
            for x in range(len(slots)):
                for y in range(x + 1, len(slots)):
                    (a, p), (b, q) = slots[x], slots[y]
                    trial = [list(s) for s in seqs]
                    trial[a][p], trial[b][q] = trial[b][q], trial[a][p]
                    c, pl = seq_cost(trial)
                    if c < step_cost - 1e-9:
                        step_cost, step = c, (trial, pl)
            if step is None:
                return cost, plan
            cost, (seqs, plan) = step_cost, step

    best_cost, best_plan = min(
        (polish(c, pl) for c, pl in incumbents), key=lambda t: t[0]
    )

    nodes = 0
    pos0 = list(w.erv_cells)

    def dfs(remaining: frozenset, pos: tuple, free_at: tuple,
            partial: float, last_event: tuple[float, int, int],
            plan: list[tuple[int, int, float]]) -> None:
        """Expand one bound-surviving state: schedule every remaining
        incident as the next event in canonical (start, vehicle, incident)
        order, pruning each child by its own admissible floor before it
        counts as an evaluation."""
        nonlocal nodes, best_cost, best_plan
        cands = []
        seen_states = set()
        for e in range(n_erv):
            state = (pos[e], free_at[e])
            if state in seen_states:  # interchangeable vehicles
                continue
            seen_states.add(state)
            row = tt[pos[e]]
            for i in remaining:
                inc = incidents[i]
                start = max(free_at[e] + row[inc.location], inc.report_time)
                if (start, e, i) <= last_event:  # canonical event order
                    continue
                cands.append((start, e, i))
        cands.sort()  # early starts first: good incumbents appear quickly
        for start, e, i in cands:
            inc = incidents[i]
            cost_i = expected_delay(inc.params, start - inc.report_time)
            new_partial = partial + cost_i
            if new_partial >= best_cost:
                continue
            child_remaining = remaining - {i}
            plan.append((i, e, start))
            if not child_remaining:
                best_cost = new_partial
                best_plan = list(plan)
                plan.pop()
                continue
            child_pos = pos[:e] + (inc.location,) + pos[e + 1:]
            child_free = (free_at[:e] + (start + inc.params.clearance,)
                          + free_at[e + 1:])
            if new_partial + remaining_floor(
                    child_remaining, child_pos, child_free, start,
                    best_cost - new_partial) < best_cost:
                nodes += 1
                if nodes > cap:
                    raise CapExceededError(
                        f"opt search exceeded {cap} evaluations"
                    )
                dfs(child_remaining, child_pos, child_free,
                    new_partial, (start, e, i), plan)
            plan.pop()

    root = frozenset(range(n))
    if n and 0.0 + remaining_floor(
            root, tuple(pos0), (0.0,) * n_erv, 0.0, best_cost) < best_cost:
        dfs(root, tuple(pos0), (0.0,) * n_erv, 0.0, (-math.inf, -1, -1), [])

    outcomes = []
    for i, e, start in best_plan:
        inc = incidents[i]
        response = start - inc.report_time
        outcomes.append(IncidentOutcome(
            incident_id=inc.id, cell=inc.location, severity=inc.severity,
            report_h=inc.report_time, erv_id=f"erv{e}",
            response_h=response,
            delay_veh_h=expected_delay(inc.params, response),
            delay_var=delay_variance(inc.params, response),
            cooperating=False,
        ))
    return _finish("opt", sc, [], outcomes, [], 0.0, opt_nodes=nodes)


def run_policy(sc: Scenario, policy: str, world: World | None = None) -> RunResult:
    if policy not in POLICIES:
        raise InputError(
            f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}"
        )
    if policy == "conventional":
        return run_conventional(sc, world)
    if policy == "pdronetim":
        return run_proactive(sc, world)
    return run_opt(sc, world)


# ------------------------------------------------------------ serialization


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "name": sc.name,
        "seed": sc.seed,
        "schedule": list(sc.schedule),
        "grid": {
            "rows": sc.rows,
            "cols": sc.cols,
            "edge_time_range": list(sc.edge_time_range),
        },
        "fleet": {"ervs": sc.n_ervs, "uavs": sc.n_uavs},
        "stage_gap_h": sc.stage_gap,
        "solver": {
            "algorithm": sc.solver.algorithm,
            "iterations": sc.solver.iterations,
            "dsa_threshold": sc.solver.dsa_threshold,
        },
        "forecast": {
            "prob_range": list(sc.prob_range),
            "normalize": sc.normalize_field,
            "budget": sc.field_budget,
            "signal": sc.forecast_signal,
        },
        "lookahead": sc.lookahead,
        "relocation_k": sc.relocation_k,
        "cooperation": sc.cooperation,
        "kappa": sc.kappa,
    }


def scenario_from_dict(d: dict) -> Scenario:
    try:
        grid = d.get("grid", {})
        fleet = d.get("fleet", {})
        solver_d = d.get("solver", {})
        fc = d.get("forecast", {})
        solver = SolverConfig(
            algorithm=str(solver_d.get("algorithm", "dsa")),
            iterations=int(solver_d.get("iterations", 45)),
            dsa_threshold=float(solver_d.get("dsa_threshold", 0.9)),
        )
        return Scenario(
            seed=int(d["seed"]),
            schedule=tuple(int(k) for k in d["schedule"]),
            rows=int(grid.get("rows", 10)),
            cols=int(grid.get("cols", 10)),
            edge_time_range=tuple(
                float(x) for x in grid.get("edge_time_range", (0.1, 1.5))
            ),
            n_ervs=int(fleet.get("ervs", 3)),
            n_uavs=int(fleet.get("uavs", 0)),
            stage_gap=float(d.get("stage_gap_h", 0.5)),
            solver=solver,
            prob_range=tuple(float(x) for x in fc.get("prob_range", (0.0, 0.15))),
            normalize_field=bool(fc.get("normalize", False)),
            field_budget=float(fc.get("budget", 1.0)),
            forecast_signal=float(fc.get("signal", 0.35)),
            lookahead=int(d.get("lookahead", 2)),
            relocation_k=int(d.get("relocation_k", 10)),
            cooperation=bool(d.get("cooperation", True)),
            kappa=float(d.get("kappa", 0.5)),
            name=str(d.get("name", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad scenario: {exc}") from exc


def result_to_dict(res: RunResult) -> dict:
    return {
        "policy": res.policy,
        "seed": res.seed,
        "totals": {
            "delay_veh_h": res.total_delay_veh_h,
            "response_min": res.total_response_min,
            "uav_utility": res.total_uav_utility,
        },
        "opt_nodes": res.opt_nodes,
        "incidents": [
            {
                "id": o.incident_id,
                "cell": o.cell,
                "severity": o.severity,
                "report_h": o.report_h,
                "erv": o.erv_id,
                "response_h": o.response_h,
                "delay_veh_h": o.delay_veh_h,
                "delay_var": o.delay_var,
                "cooperating": o.cooperating,
            }
            for o in res.incidents
        ],
        "stages": [
            {
                "stage": s.stage,
                "time_h": s.time_h,
                "open": s.n_open,
                "free_ervs": s.n_free_ervs,
                "erv_assignments": [list(a) for a in s.erv_assignments],
                "erv_cost": s.erv_cost,
                "erv_messages": s.erv_messages,
                "erv_moves": s.erv_moves,
                "uav_assignments": [list(a) for a in s.uav_assignments],
                "uav_utility": s.uav_utility,
            }
            for s in res.stages
        ],
        "assimilation": [
            {
                "incident_id": r.incident_id,
                "uav_id": r.uav_id,
                "prior_mean": r.prior_mean,
                "prior_var": r.prior_var,
                "obs_mean": r.obs_mean,
                "obs_var": r.obs_var,
                "beta": r.beta,
                "post_mean": r.post_mean,
                "post_var": r.post_var,
            }
            for r in res.assimilation
        ],
    }


def result_to_json(res: RunResult) -> str:
    return json.dumps(result_to_dict(res), sort_keys=True, indent=2) + "\n"


def write_stage_csv(res: RunResult, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([
            "stage", "time_h", "open", "free_ervs", "dispatches",
            "relocations", "erv_cost", "erv_messages", "erv_moves",
            "uav_tasked", "uav_utility",
        ])
        for s in res.stages:
            kinds = [a[2] for a in s.erv_assignments]
            w.writerow([
                s.stage, repr(s.time_h), s.n_open, s.n_free_ervs,
                kinds.count("dispatch"), kinds.count("relocate"),
                "" if s.erv_cost is None else repr(s.erv_cost),
                s.erv_messages, s.erv_moves,
                len(s.uav_assignments),
                "" if s.uav_utility is None else repr(s.uav_utility),
            ])


def write_incident_csv(res: RunResult, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([
            "incident_id", "cell", "severity", "report_h", "erv",
            "response_h", "delay_veh_h", "delay_var", "cooperating",
        ])
        for o in res.incidents:
            w.writerow([
                o.incident_id, o.cell, o.severity, repr(o.report_h),
                o.erv_id, repr(o.response_h), repr(o.delay_veh_h),
                repr(o.delay_var), int(o.cooperating),
            ])
