"""Command-line front end: single runs and parameter sweeps.

Every invocation writes a manifest next to its outputs with the fully
resolved scenario and settings (no paths, no timestamps), so re-running from
the manifest reproduces every output file byte for byte.

Exit codes: 0 success, 1 model-domain error, 2 bad input, 3 search cap
exceeded.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .errors import CapExceededError, InputError, ModelDomainError
from .scenarios import (
    POLICIES,
    Scenario,
    materialize,
    result_to_json,
    run_policy,
    scenario_from_dict,
    scenario_to_dict,
    write_incident_csv,
    write_stage_csv,
)
from .uav import write_assimilation_csv

WORKERS_ENV = "TIMDCOP_WORKERS"

# sweep axes: name -> (target, attribute, parser)
_AXES = {
    "dsa_threshold": ("solver", "dsa_threshold", float),
    "iterations": ("solver", "iterations", int),
    "algorithm": ("solver", "algorithm", str),
    "ervs": ("scenario", "n_ervs", int),
    "uavs": ("scenario", "n_uavs", int),
    "lookahead": ("scenario", "lookahead", int),
    "relocation_k": ("scenario", "relocation_k", int),
    "kappa": ("scenario", "kappa", float),
    "cooperation": ("scenario", "cooperation", lambda s: s.lower() in ("1", "true", "on")),
}


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _apply_axis(sc: Scenario, axis: str, value) -> Scenario:
    target, attr, _ = _AXES[axis]
    if target == "solver":
        return replace(sc, solver=replace(sc.solver, **{attr: value}))
    return replace(sc, **{attr: value})


def _parse_policies(raw: list[str]) -> list[str]:
    out: list[str] = []
    for chunk in raw:
        for p in chunk.split(","):
            p = p.strip().lower()
            if not p:
                continue
            if p not in POLICIES:
                raise InputError(
                    f"unknown policy {p!r}; choose from {', '.join(POLICIES)}"
                )
            if p not in out:
                out.append(p)
    return out or ["pdronetim"]


def _resolve_scenario(args) -> tuple[Scenario, dict | None]:
    """Scenario from --manifest or --scenario (+ --seed override)."""
    manifest = None
    if args.manifest:
        manifest = _load_json(args.manifest)
        if "scenario" not in manifest:
            raise InputError(f"{args.manifest} has no scenario block")
        sc = scenario_from_dict(manifest["scenario"])
    elif args.scenario:
        sc = scenario_from_dict(_load_json(args.scenario))
    else:
        raise InputError("need --scenario or --manifest")
    if getattr(args, "seed", None) is not None:
        sc = replace(sc, seed=args.seed)
    return sc, manifest


def cmd_run(args) -> int:
    sc, manifest = _resolve_scenario(args)
    if manifest is not None and not args.policy:
        policies = list(manifest.get("policies", ["pdronetim"]))
    else:
        policies = _parse_policies(args.policy)

    out = Path(args.out)
    world = materialize(sc)
    results = []
    for policy in policies:
        res = run_policy(sc, policy, world)
        results.append(res)
        _write(out / f"{policy}_result.json", result_to_json(res))
        write_stage_csv(res, out / f"{policy}_stages.csv")
        write_incident_csv(res, out / f"{policy}_incidents.csv")
        if res.assimilation:
            write_assimilation_csv(res.assimilation, out / f"{policy}_assimilation.csv")
        print(
            f"{policy}: delay {res.total_delay_veh_h:.1f} veh-h, "
            f"response {res.total_response_min:.1f} min, "
            f"{len(res.incidents)} incidents"
        )

    if len(results) > 1:
        with open(out / "comparison.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "total_delay_veh_h", "total_response_min"])
            for res in results:
                w.writerow([
                    res.policy,
                    repr(res.total_delay_veh_h),
                    repr(res.total_response_min),
                ])

    _write(out / "manifest.json", json.dumps({
        "kind": "run",
        "scenario": scenario_to_dict(sc),
        "policies": policies,
    }, sort_keys=True, indent=2) + "\n")
    return 0


def _sweep_point(payload: tuple) -> tuple:
    """One (axis value, trial) sweep cell; top-level so pools can pickle it."""
    sc_dict, policy, axis, raw_value, trial = payload
    _, _, parse = _AXES[axis]
    value = parse(raw_value) if isinstance(raw_value, str) else raw_value
    sc = scenario_from_dict(sc_dict)
    sc = replace(sc, seed=sc.seed + trial)
    sc = _apply_axis(sc, axis, value)
    res = run_policy(sc, policy)
    return (axis, raw_value, trial, sc.seed,
            res.total_delay_veh_h, res.total_response_min)


def cmd_sweep(args) -> int:
    sc, manifest = _resolve_scenario(args)
    if manifest is not None and manifest.get("kind") == "sweep":
        axis = manifest["axis"]["name"]
        values = manifest["axis"]["values"]
        trials = int(manifest["trials"])
        policy = manifest.get("policy", "pdronetim")
    else:
        if not args.axis or "=" not in args.axis:
            raise InputError("--axis must look like name=v1,v2,...")
        axis, _, rest = args.axis.partition("=")
        axis = axis.strip()
        if axis not in _AXES:
            raise InputError(
                f"unknown sweep axis {axis!r}; choose from {', '.join(sorted(_AXES))}"
            )
        parse = _AXES[axis][2]
        try:
            values = [parse(v.strip()) for v in rest.split(",") if v.strip()]
        except ValueError as exc:
            raise InputError(f"bad axis value: {exc}") from exc
        if not values:
            raise InputError("axis needs at least one value")
        trials = args.trials
        policy = _parse_policies(args.policy)[0]
    if trials < 1:
        raise InputError("--trials must be >= 1")

    grid = [
        (scenario_to_dict(sc), policy, axis, v, t)
        for v in values
        for t in range(trials)
    ]
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, grid))
    else:
        rows = [_sweep_point(p) for p in grid]
    rows.sort(key=lambda r: (str(r[1]), r[2]))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([
            "axis", "value", "trial", "seed",
            "total_delay_veh_h", "total_response_min",
        ])
        for r in rows:
            w.writerow([r[0], r[1], r[2], r[3], repr(r[4]), repr(r[5])])

    # per-value mean and standard error
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "value", "trials", "mean_delay_veh_h", "se_delay_veh_h"])
        for v in values:
            sel = [r[4] for r in rows if r[1] == v]
            mean = sum(sel) / len(sel)
            if len(sel) > 1:
                var = sum((x - mean) ** 2 for x in sel) / (len(sel) - 1)
                se = (var / len(sel)) ** 0.5
            else:
                se = 0.0
            w.writerow([axis, v, len(sel), repr(mean), repr(se)])

    _write(out / "manifest.json", json.dumps({
        "kind": "sweep",
        "scenario": scenario_to_dict(sc),
        "axis": {"name": axis, "values": values},
        "trials": trials,
        "policy": policy,
    }, sort_keys=True, indent=2) + "\n")
    print(f"sweep over {axis}: {len(values)} values x {trials} trials")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="timdcop",
        description="Proactive traffic-incident dispatch simulator",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario under one or more policies")
    run.add_argument("--scenario", help="scenario JSON file")
    run.add_argument("--manifest", help="manifest JSON from a previous run")
    run.add_argument("--policy", action="append", default=[],
                     help="conventional | pdronetim | opt (repeatable or comma list)")
    run.add_argument("--seed", type=int, default=None, help="override scenario seed")
    run.add_argument("--out", required=True, help="output directory")
    run.set_defaults(fn=cmd_run)

    sweep = sub.add_parser("sweep", help="sweep one parameter axis")
    sweep.add_argument("--scenario", help="base scenario JSON file")
    sweep.add_argument("--manifest", help="manifest JSON from a previous sweep")
    sweep.add_argument("--axis", help="axis to vary, e.g. dsa_threshold=0.9,0.5,0.1")
    sweep.add_argument("--trials", type=int, default=10,
                       help="seeds per axis value (default 10)")
    sweep.add_argument("--policy", action="append", default=[],
                       help="policy to sweep (default pdronetim)")
    sweep.add_argument("--seed", type=int, default=None, help="override scenario seed")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.set_defaults(fn=cmd_sweep)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ModelDomainError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 1
    except CapExceededError as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
