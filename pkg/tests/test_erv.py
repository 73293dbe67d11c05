"""ERV stage problems: candidate pricing, look-ahead plans, fleet bookkeeping."""
import math
from dataclasses import replace

import numpy as np
import pytest

from timdcop.dcop import brute_force_optimum
from timdcop.erv import (
    ErvState,
    StageContext,
    apply_assignment,
    build_erv_problem,
    forecast_hotspots,
    incident_at,
    lookahead_cost,
    relocation_candidates,
    unary_cost,
)
from timdcop.errors import InputError, ModelDomainError
from timdcop.forecast import DependencyKernel, PrimaryProbField, generate_field
from timdcop.incidents import (
    Incident,
    TrafficParams,
    expected_delay,
    reference_params,
    sample_incident,
)
from timdcop.network import build_grid, travel_time

PARAMS = TrafficParams(
    s=1800.0, s1_mean=1100.0, s1_sd=200.0, q=1500.0, r_var=0.04, clearance=0.3
)


def zero_field(n_cells: int, n_stages: int = 6) -> PrimaryProbField:
    return PrimaryProbField(values=np.zeros((n_stages, n_cells)))


def make_ctx(net, field_=None, incidents=(), **kw) -> StageContext:
    defaults = dict(
        net=net,
        field_=field_ if field_ is not None else zero_field(net.n_cells),
        kernel=DependencyKernel(),
        stage_time=0.0,
        stage_index=0,
        open_incidents=list(incidents),
        lookahead=0,
        relocation_k=3,
        stage_gap=0.5,
    )
    defaults.update(kw)
    return StageContext(**defaults)


def incident(id_, cell, report_time=0.0, params=PARAMS) -> Incident:
    return Incident(
        id=id_, location=cell, severity=2, report_time=report_time, params=params
    )


# ---------------------------------------------------------- cell pricing


def test_dispatch_cost_is_weighted_expected_delay():
    net = build_grid(3, 3, (0.4, 1.2), seed=5)
    inc = incident("i0", 4)
    ctx = make_ctx(net, incidents=[inc], w_d=1.0, w_r=1000.0)
    erv = ErvState(id="e0", cell=0)
    want = expected_delay(inc.params, travel_time(net, 0, 4))
    assert unary_cost(ctx, erv, 4) == pytest.approx(want, rel=1e-12)
    # dispatch weight multiplies straight through
    ctx3 = make_ctx(net, incidents=[inc], w_d=3.0, w_r=1000.0)
    assert unary_cost(ctx3, erv, 4) == pytest.approx(3 * want, rel=1e-12)


def test_relocation_cost_of_hopeless_cell_is_full_weight():
    net = build_grid(2, 2, (0.5, 0.5), seed=0)
    ctx = make_ctx(net, w_r=42.0)  # zero field: next-stage probability 0
    assert unary_cost(ctx, ErvState(id="e", cell=0), 3) == pytest.approx(42.0)


def test_likelier_cells_are_cheaper_to_cover():
    net = build_grid(2, 3, (0.5, 0.5), seed=0)
    values = np.zeros((4, 6))
    values[1, 2] = 0.7   # stage u+1 drives this stage's relocation price
    values[1, 5] = 0.2
    ctx = make_ctx(net, field_=PrimaryProbField(values=values), w_r=10.0)
    erv = ErvState(id="e", cell=0)
    assert unary_cost(ctx, erv, 2) == pytest.approx(3.0)
    assert unary_cost(ctx, erv, 5) == pytest.approx(8.0)
    assert unary_cost(ctx, erv, 2) < unary_cost(ctx, erv, 5)


def test_unary_cost_requires_resolved_relocation_weight():
    net = build_grid(2, 2, (0.5, 0.5), seed=0)
    ctx = make_ctx(net)  # w_r left as None
    with pytest.raises(InputError):
        unary_cost(ctx, ErvState(id="e", cell=0), 1)


def test_relocation_candidates_rank_ties_and_exclusions():
    net = build_grid(3, 3, (0.5, 0.5), seed=0)
    values = np.zeros((3, 9))
    values[1, 2] = 0.4
    values[1, 5] = 0.4
    values[1, 7] = 0.6
    values[1, 8] = 0.9  # occupied by an incident: must be excluded
    ctx = make_ctx(
        net,
        field_=PrimaryProbField(values=values),
        incidents=[incident("i0", 8)],
        w_r=10.0,
    )
    assert relocation_candidates(ctx, 3) == [7, 2, 5]  # tie 2/5 -> lower index
    assert relocation_candidates(ctx, 2) == [7, 2]
    # zero-probability tail falls back to index order
    assert relocation_candidates(ctx, 5) == [7, 2, 5, 0, 1]


def test_forecast_hotspots_drop_zero_probability_cells():
    net = build_grid(2, 2, (0.5, 0.5), seed=0)
    values = np.zeros((4, 4))
    values[2, 1] = 0.3
    ctx = make_ctx(net, field_=PrimaryProbField(values=values), w_r=10.0)
    assert forecast_hotspots(ctx, 2, 4) == [(1, 0.3)]
    assert forecast_hotspots(ctx, 1, 4) == []


def test_incident_at_returns_oldest_then_lowest_id():
    net = build_grid(2, 2, (0.5, 0.5), seed=0)
    a = incident("i-late", 1, report_time=0.5)
    b = incident("i-b", 1, report_time=0.0)
    c = incident("i-a", 1, report_time=0.0)
    ctx = make_ctx(net, incidents=[a, b, c], w_r=10.0)
    assert incident_at(ctx, 1) is c  # earliest report, then lexicographic id
    assert incident_at(ctx, 2) is None
    c.cleared = True
    assert incident_at(ctx, 1) is b


# ------------------------------------------------------------- look-ahead


def test_lookahead_zero_plan_equals_myopic_cost():
    net = build_grid(3, 3, (0.4, 1.0), seed=2)
    inc = incident("i0", 4)
    ctx = make_ctx(net, incidents=[inc], w_r=500.0, lookahead=0)
    erv = ErvState(id="e", cell=2)
    for cell in (4, 0, 8):
        assert lookahead_cost(ctx, erv, (cell,)) == pytest.approx(
            unary_cost(ctx, erv, cell), rel=1e-12
        )


def test_lookahead_with_empty_future_reduces_to_myopic_cost():
    net = build_grid(3, 3, (0.2, 0.4), seed=1)
    ctx = make_ctx(net, w_r=500.0, lookahead=2, stage_gap=1.0)
    erv = ErvState(id="e", cell=0)
    assert lookahead_cost(ctx, erv, (1, 1, 1)) == pytest.approx(
        unary_cost(ctx, erv, 1), rel=1e-12
    )


def test_lookahead_plan_length_must_match_horizon():
    net = build_grid(2, 2, (0.5, 0.5), seed=0)
    ctx = make_ctx(net, w_r=10.0, lookahead=2)
    with pytest.raises(InputError):
        lookahead_cost(ctx, ErvState(id="e", cell=0), (0, 1))


def test_lookahead_rejects_moves_while_busy():
    net = build_grid(2, 2, (0.5, 0.5), seed=0)
    ctx = make_ctx(net, w_r=10.0, lookahead=2, stage_gap=0.5)
    busy = ErvState(id="e", cell=0, available_at=10.0)
    with pytest.raises(ModelDomainError):
        lookahead_cost(ctx, busy, (0, 1, 1))


def test_lookahead_rejects_legs_longer_than_one_stage():
    net = build_grid(2, 2, (1.0, 1.0), seed=0)
    ctx = make_ctx(net, w_r=10.0, lookahead=2, stage_gap=0.5)
    with pytest.raises(ModelDomainError):
        # corner to corner needs 2.0 h against a 0.5 h window
        lookahead_cost(ctx, ErvState(id="e", cell=0), (0, 3, 3))


def test_lookahead_busy_stage_pins_position_without_cost():
    net = build_grid(3, 3, (0.5, 0.5), seed=0)
    values = np.zeros((4, 9))
    values[1, :] = 0.5  # would be priced if the vehicle were free at +1
    values[2, 1] = 0.8
    ctx = make_ctx(
        net, field_=PrimaryProbField(values=values),
        w_r=10.0, lookahead=2, stage_gap=1.0,
    )
    # free again only at +2: stage +1 must pin, stage +2 prices the hop
    erv = ErvState(id="e", cell=0, available_at=1.5)
    got = lookahead_cost(ctx, erv, (0, 0, 1))
    want = unary_cost(ctx, erv, 0) + 0.8 * expected_delay(
        reference_params(), travel_time(net, 0, 1)
    )
    assert got == pytest.approx(want, rel=1e-12)


def test_lookahead_prices_plans_toward_an_anticipated_hotspot():
    net = build_grid(3, 3, (0.5, 0.5), seed=0)
    values = np.zeros((3, 9))
    values[2, 4] = 0.9  # centre cell, two stages out
    ctx = make_ctx(
        net, field_=PrimaryProbField(values=values),
        w_r=50.0, lookahead=2, stage_gap=1.0,
    )
    erv = ErvState(id="e", cell=0)
    ref = reference_params()

    def oracle(plan):
        total = 50.0  # zero next-stage probability everywhere
        pos = plan[0]
        for t, cell in enumerate(plan[1:], start=1):
            hop = travel_time(net, pos, cell)
            assert hop <= 1.0 + 1e-9
            p = 0.9 if (t == 2 and cell == 4) else 0.0
            total += p * expected_delay(ref, hop)
            pos = cell
        return total

    feasible = [
        (0, d1, d2)
        for d1 in net.cells() if travel_time(net, 0, d1) <= 1.0 + 1e-9
        for d2 in net.cells() if travel_time(net, d1, d2) <= 1.0 + 1e-9
    ]
    for plan in feasible:
        assert lookahead_cost(ctx, erv, plan) == pytest.approx(
            oracle(plan), rel=1e-12
        )
    # ending anywhere else never prices the hotspot
    for plan in feasible:
        if plan[2] != 4:
            assert lookahead_cost(ctx, erv, plan) == pytest.approx(50.0)
    # among hotspot-ending plans, a closer approach is strictly cheaper
    arriving = sorted(
        (lookahead_cost(ctx, erv, p), travel_time(net, p[1], 4), p)
        for p in feasible if p[2] == 4
    )
    assert arriving[0][2] == (0, 4, 4)   # already there: zero-hop response
    by_leg = {leg for _, leg, _ in arriving}
    assert by_leg == {0.0, 0.5, 1.0}
    costs = {leg: cost for cost, leg, _ in arriving}
    assert costs[0.0] < costs[0.5] < costs[1.0]


# ------------------------------------------------------------ stage DCOPs


def test_two_ervs_one_incident_sends_exactly_one():
    net = build_grid(3, 3, (0.4, 1.0), seed=3)
    inc = incident("i0", 4)
    ctx = make_ctx(net, incidents=[inc])
    fleet = [ErvState(id="e0", cell=0), ErvState(id="e1", cell=8)]
    problem, resolved = build_erv_problem(ctx, fleet)
    assert problem.agents == ["e0", "e1"]
    assert resolved.w_r is not None
    best, _ = brute_force_optimum(problem)
    assert sum(1 for cell in best.values() if cell == 4) == 1
    assert len(set(best.values())) == 2


def test_one_erv_two_incidents_takes_the_cheaper_delay():
    net = build_grid(3, 3, (0.4, 1.0), seed=4)
    rng = np.random.default_rng(11)
    a = sample_incident("a", 3, 2, 0.0, rng)
    b = sample_incident("b", 3, 7, 0.0, rng)
    ctx = make_ctx(net, incidents=[a, b])
    erv = ErvState(id="e0", cell=1)
    problem, resolved = build_erv_problem(ctx, [erv])
    assert problem.binary == [] and len(problem.unary) == 1
    best, _ = brute_force_optimum(problem)
    want = min(
        (expected_delay(i.params, travel_time(net, 1, i.location)), i.location)
        for i in (a, b)
    )[1]
    assert best == {"e0": want}


def test_idle_fleet_spreads_over_top_probability_cells():
    net = build_grid(3, 3, (0.5, 0.5), seed=0)
    values = np.zeros((3, 9))
    values[1] = [0.05, 0.3, 0.0, 0.6, 0.1, 0.0, 0.45, 0.0, 0.2]
    ctx = make_ctx(net, field_=PrimaryProbField(values=values), relocation_k=3)
    fleet = [ErvState(id=f"e{i}", cell=i) for i in range(3)]
    problem, resolved = build_erv_problem(ctx, fleet)
    best, _ = brute_force_optimum(problem)
    assert set(best.values()) == {3, 6, 1}  # the three likeliest cells
    assert resolved.w_r == pytest.approx(100.0)  # no dispatches to scale from


def test_busy_vehicles_are_left_out_of_the_stage_problem():
    net = build_grid(2, 2, (0.5, 0.5), seed=0)
    ctx = make_ctx(net, stage_time=1.0)
    fleet = [
        ErvState(id="e0", cell=0, available_at=5.0),
        ErvState(id="e1", cell=3, available_at=0.9),
    ]
    problem, _ = build_erv_problem(ctx, fleet)
    assert problem.agents == ["e1"]
    with pytest.raises(InputError):
        build_erv_problem(
            replace(ctx, stage_time=0.0),
            [ErvState(id="e0", cell=0, available_at=5.0)],
        )


def test_auto_weight_is_hundredfold_worst_dispatch():
    net = build_grid(3, 3, (0.4, 1.2), seed=9)
    a, b = incident("a", 2), incident("b", 6)
    ctx = make_ctx(net, incidents=[a, b])
    fleet = [ErvState(id="e0", cell=0), ErvState(id="e1", cell=4)]
    _, resolved = build_erv_problem(ctx, fleet)
    worst = max(
        expected_delay(i.params, travel_time(net, e.cell, i.location))
        for e in fleet for i in (a, b)
    )
    assert resolved.w_r == pytest.approx(100.0 * worst, rel=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_open_incidents_outrank_relocation_under_auto_weight(seed):
    rng = np.random.default_rng(seed)
    net = build_grid(3, 3, (0.3, 1.0), seed=seed)
    field_ = generate_field(9, 6, seed=seed + 400)
    n_open = int(rng.integers(1, 3))
    n_free = int(rng.integers(n_open, 4))
    cells = rng.choice(9, size=n_open + n_free, replace=False)
    incidents = [
        sample_incident(f"i{j}", int(rng.integers(1, 5)), int(cells[j]), 0.0, rng)
        for j in range(n_open)
    ]
    fleet = [
        ErvState(id=f"e{j}", cell=int(cells[n_open + j])) for j in range(n_free)
    ]
    ctx = make_ctx(net, field_=field_, incidents=incidents, relocation_k=2)
    problem, _ = build_erv_problem(ctx, fleet)
    best, cost = brute_force_optimum(problem)
    assert math.isfinite(cost)
    chosen = set(best.values())
    assert len(chosen) == n_free  # the conflict constraint held
    for inc in incidents:
        assert inc.location in chosen  # every open incident gets a vehicle


def test_dispatch_weight_rescales_without_moving_the_argmin():
    net = build_grid(3, 3, (0.3, 1.0), seed=6)
    field_ = generate_field(9, 6, seed=21)
    incidents = [incident("i0", 4)]
    fleet = [ErvState(id="e0", cell=0), ErvState(id="e1", cell=8)]
    base, _ = build_erv_problem(
        make_ctx(net, field_=field_, incidents=incidents, w_d=1.0), fleet
    )
    scaled, _ = build_erv_problem(
        make_ctx(net, field_=field_, incidents=incidents, w_d=7.0), fleet
    )
    best_base, cost_base = brute_force_optimum(base)
    best_scaled, cost_scaled = brute_force_optimum(scaled)
    assert best_base == best_scaled
    assert cost_scaled == pytest.approx(7.0 * cost_base, rel=1e-9)


def test_context_validation():
    net = build_grid(2, 2, (0.5, 0.5), seed=0)
    with pytest.raises(InputError):
        make_ctx(net, w_d=0.0)
    with pytest.raises(InputError):
        make_ctx(net, w_d=2.0, w_r=2.0)
    with pytest.raises(InputError):
        make_ctx(net, lookahead=3)
    with pytest.raises(InputError):
        make_ctx(net, lookahead=-1)
    assert make_ctx(net).future_params == reference_params()


# ---------------------------------------------------------- bookkeeping


def test_dispatch_bookkeeping_and_record():
    net = build_grid(3, 3, (0.5, 0.5), seed=0)
    inc = incident("i0", 1, report_time=0.0)
    ctx = make_ctx(net, incidents=[inc], stage_time=1.0, w_r=10.0)
    erv = ErvState(id="e0", cell=0)
    records = apply_assignment(ctx, [erv], {"e0": 1})
    assert len(records) == 1
    rec = records[0]
    assert rec.incident_id == "i0" and rec.erv_id == "e0"
    assert rec.travel_h == pytest.approx(0.5)
    assert rec.response_h == pytest.approx(1.5)  # waited 1.0 + travel 0.5
    assert inc.cleared is True
    assert erv.cell == 1
    assert erv.available_at == pytest.approx(1.8)  # 1.0 + 0.5 + 0.3 clearance
    assert erv.log == [(1.0, 1, "dispatch")]
    assert not erv.is_free(1.7)
    assert erv.is_free(1.8)


def test_relocation_bookkeeping_clears_nothing():
    net = build_grid(3, 3, (0.5, 0.5), seed=0)
    inc = incident("i0", 8)
    ctx = make_ctx(net, incidents=[inc], stage_time=2.0, w_r=10.0)
    erv = ErvState(id="e0", cell=0)
    records = apply_assignment(ctx, [erv], {"e0": 4})
    assert records == []
    assert inc.cleared is False
    assert erv.cell == 4
    assert erv.available_at == pytest.approx(3.0)  # 2.0 + two 0.5 edges
    assert erv.log == [(2.0, 4, "relocate")]
    assert erv.initial_cell == 0  # depot memory survives moves


def test_apply_assignment_rejects_unknown_or_busy_vehicles():
    net = build_grid(2, 2, (0.5, 0.5), seed=0)
    ctx = make_ctx(net, w_r=10.0)
    with pytest.raises(InputError):
        apply_assignment(ctx, [ErvState(id="e0", cell=0)], {"ghost": 1})
    with pytest.raises(InputError):
        apply_assignment(
            ctx, [ErvState(id="e0", cell=0, available_at=9.0)], {"e0": 1}
        )


def test_two_stage_cycle_frees_the_vehicle_again():
    net = build_grid(2, 2, (0.5, 0.5), seed=0)
    inc0 = incident("i0", 1, report_time=0.0)
    inc1 = incident("i1", 2, report_time=0.5)
    erv = ErvState(id="e0", cell=0)
    ctx0 = make_ctx(net, incidents=[inc0], stage_time=0.0, w_r=10.0)
    apply_assignment(ctx0, [erv], {"e0": 1})
    assert erv.available_at == pytest.approx(0.8)
    # busy at the next stage boundary, so it cannot be tasked there
    ctx1 = make_ctx(net, incidents=[inc1], stage_time=0.5, w_r=10.0)
    assert not erv.is_free(0.5)
    with pytest.raises(InputError):
        build_erv_problem(ctx1, [erv])
    # one stage later it is free and can clear the backlog (auto weight
    # keeps the dispatch ahead of any relocation cell)
    ctx2 = make_ctx(net, incidents=[inc1], stage_time=1.0)
    problem, _ = build_erv_problem(ctx2, [erv])
    best, _ = brute_force_optimum(problem)
    assert best == {"e0": 2}
    records = apply_assignment(ctx2, [erv], best)
    assert records[0].response_h == pytest.approx(
        (1.0 - 0.5) + travel_time(net, 1, 2)
    )
