"""Stochastic incident delay model and severity-indexed parameter sampling.

Expected extra delay caused by an incident on a link with capacity s (vph),
reduced capacity mean s1_mean / sd s1_sd (vph), demand q (vph) and incident
duration r (hours, mean response+clearance, variance r_var):

    E[TD] = [(s1_mean^2 + s1_sd^2) - (s+q)*s1_mean + s*q] * (r_mean^2 + r_var)
            / (2*(s - q))

    Var[TD] = ((q - s1_mean)^2 + s1_sd^2) * (r_var + r_mean^2) / (3*q^2)
              - (q - s1_mean)^2 * r_mean^2 / (4*q^2)

Both are clamped at zero (parameter draws can push the leading bracket
negative); clamp events are counted on a module-level tally so harnesses can
report how often the model saturated. Requires s > q: at or below saturation
the queue never clears and the model has no finite answer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ModelDomainError
from .network import CellId

# Severity -> uniform sampling ranges: capacity s (vph), reduced-capacity mean
# and sd (vph), demand q (vph), duration variance (h^2), clearance time (h).
# Every severity keeps min(s) > max(q) so sampled incidents are always
# well-posed for the delay model.
SEVERITY_RANGES: dict[int, dict[str, tuple[float, float]]] = {
    1: {
        "s": (750.0, 800.0),
        "s1_mean": (600.0, 800.0),
        "s1_sd": (100.0, 200.0),
        "q": (600.0, 720.0),
        "r_var": (0.1, 0.2),
        "clearance": (0.2, 0.3),
    },
    2: {
        "s": (1130.0, 1500.0),
        "s1_mean": (900.0, 1900.0),
        "s1_sd": (100.0, 300.0),
        "q": (960.0, 1120.0),
        "r_var": (0.2, 0.3),
        "clearance": (0.3, 0.4),
    },
    3: {
        "s": (1700.0, 1900.0),
        "s1_mean": (1000.0, 1200.0),
        "s1_sd": (100.0, 300.0),
        "q": (1440.0, 1644.0),
        "r_var": (0.2, 0.4),
        "clearance": (0.5, 0.7),
    },
    4: {
        "s": (2200.0, 2800.0),
        "s1_mean": (1000.0, 1500.0),
        "s1_sd": (100.0, 300.0),
        "q": (1824.0, 2015.0),
        "r_var": (0.2, 0.3),
        "clearance": (0.5, 1.0),
    },
}

_PARAM_ORDER = ("s", "s1_mean", "s1_sd", "q", "r_var", "clearance")


@dataclass(frozen=True)
class TrafficParams:
    """Link/incident parameters feeding the delay model.

    Mean incident duration is not stored: it is response_time + clearance,
    and the response time is only known per assignment.
    """

    s: float        # freeway capacity (vph)
    s1_mean: float  # mean reduced capacity under the incident (vph)
    s1_sd: float    # sd of reduced capacity (vph)
    q: float        # traffic demand (vph)
    r_var: float    # variance of incident duration (h^2)
    clearance: float  # clearance time (h)

    def __post_init__(self) -> None:
        if self.q <= 0:
            raise ModelDomainError(f"demand must be positive, got {self.q}")
        if self.s1_sd < 0 or self.r_var < 0 or self.clearance < 0:
            raise ModelDomainError("negative spread/clearance parameter")


@dataclass
class Incident:
    id: str
    location: CellId
    severity: int
    report_time: float  # hours
    params: TrafficParams
    cleared: bool = False


class ClampTally:
    """Counts delay/variance evaluations that saturated at zero."""

    def __init__(self) -> None:
        self.count = 0

    def bump(self) -> None:
        self.count += 1

    def reset(self) -> None:
        self.count = 0


clamped = ClampTally()


def sample_params(severity: int, rng: np.random.Generator) -> TrafficParams:
    """Draw one parameter set for a severity class (uniform per field)."""
    try:
        ranges = SEVERITY_RANGES[severity]
    except KeyError:
        raise InputError(f"severity must be 1..4, got {severity}") from None
    draws = {name: float(rng.uniform(*ranges[name])) for name in _PARAM_ORDER}
    return TrafficParams(**draws)


def sample_incident(
    incident_id: str,
    severity: int,
    location: CellId,
    report_time: float,
    rng: np.random.Generator,
) -> Incident:
    params = sample_params(severity, rng)
    return Incident(
        id=incident_id,
        location=location,
        severity=severity,
        report_time=report_time,
        params=params,
    )


def reference_params() -> TrafficParams:
    """Field-midpoint parameters averaged over the four severity classes.

    Used to price hypothetical future incidents (forecast look-ahead) where
    no sampled parameters exist yet.
    """
    mids = {}
    for name in _PARAM_ORDER:
        per_sev = [sum(SEVERITY_RANGES[sev][name]) / 2.0
                   for sev in sorted(SEVERITY_RANGES)]
        mids[name] = sum(per_sev) / len(per_sev)
    return TrafficParams(**mids)


def expected_delay(p: TrafficParams, response_time: float) -> float:
    """Expected total incident delay in vehicle-hours.

    Mean duration is response_time + clearance. Negative raw values (possible
    when the reduced-capacity draw exceeds capacity/demand) clamp to zero.
    """
    if p.s <= p.q:
        raise ModelDomainError(
            f"capacity must exceed demand (s={p.s}, q={p.q})"
        )
    if response_time < 0:
        raise ModelDomainError(f"negative response time {response_time}")
    r_mean = response_time + p.clearance
    bracket = p.s1_mean**2 + p.s1_sd**2 - (p.s + p.q) * p.s1_mean + p.s * p.q
    raw = bracket * (r_mean**2 + p.r_var) / (2.0 * (p.s - p.q))
    if raw < 0.0:
        clamped.bump()
        return 0.0
    return raw


def delay_variance(p: TrafficParams, response_time: float) -> float:
    """Variance of the total incident delay (vehicle-hours squared)."""
    if response_time < 0:
        raise ModelDomainError(f"negative response time {response_time}")
    r_mean = response_time + p.clearance
    gap_sq = (p.q - p.s1_mean) ** 2
    raw = (gap_sq + p.s1_sd**2) * (p.r_var + r_mean**2) / (3.0 * p.q**2) \
        - gap_sq * r_mean**2 / (4.0 * p.q**2)
    if raw < 0.0:
        clamped.bump()
        return 0.0
    return raw


def read_incident_stream(lines, rng: np.random.Generator) -> list[Incident]:
    """Parse a JSON-lines incident stream.

    Each record: {"id", "severity", "cell", "report_time_h"} with an optional
    "params" object overriding severity sampling. Sampling order follows file
    order, so a seed plus a file pins the whole stream.
    """
    import json

    out: list[Incident] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            inc_id = str(rec["id"])
            severity = int(rec["severity"])
            cell = int(rec["cell"])
            report = float(rec["report_time_h"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"incident stream line {lineno}: {exc}") from exc
        if severity not in SEVERITY_RANGES:
            raise InputError(
                f"incident stream line {lineno}: severity must be 1..4"
            )
        if "params" in rec:
            try:
                params = TrafficParams(**{
                    k: float(rec["params"][k]) for k in _PARAM_ORDER
                })
            except KeyError as exc:
                raise InputError(
                    f"incident stream line {lineno}: params missing {exc}"
                ) from exc
        else:
            params = sample_params(severity, rng)
        out.append(Incident(
            id=inc_id, location=cell, severity=severity,
            report_time=report, params=params,
        ))
    return out
