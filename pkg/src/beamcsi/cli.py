"""Configuration-driven entry point: scenarios in, CSV out.

One JSON document describes a run; command-line flags override file values.
Outputs are byte-deterministic for a fixed (config, seed) pair regardless of
the thread count, and every output directory receives an effective-config
snapshot sufficient to reproduce the run.

Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .array_channel import AngularSector, ArrayGeometry, GroupSpec, MpcSpec
from .beamspace import BeamKind, ConditioningError, beam_pattern, build_f
from .estimators import EstimatorKind
from .evaluation import (
    PilotConfig,
    Scenario,
    SweepAxis,
    SweepResult,
    build_beam,
    build_estimator,
    compile_scenario,
    default_scenario,
    error_cov_linear,
    identity_checks,
    monte_carlo_mse,
    mse_per_user,
    run_sweep,
    to_db,
)

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "axis_name",
    "axis_value",
    "estimator",
    "beam",
    "d_total",
    "mse_analytic",
    "mse_analytic_db",
    "mse_mc",
    "mc_std",
    "mi_nats",
    "nmse_trace",
]


class ConfigError(ValueError):
    """The run configuration is malformed."""


class NumericalError(RuntimeError):
    """A numerical result is unusable (non-finite or singular)."""


_DEFAULT_SWEEP = {
    "axis": "dimension",
    "grid": list(range(4, 21)),
    "estimators": ["rrmmse_joint", "rrmmse_angle", "full_wiener"],
    "beams": ["geb", "dft"],
    "dims": [8],
    "target": "full",
    "inr_db": 30.0,
}

_DEFAULT_DESIGN = {
    "beam": "geb",
    "dim": 6,
    "export_pattern": False,
    "pattern_step_deg": 0.1,
}

_DEFAULT_ESTIMATE = {
    "beam": "geb",
    "dim": 8,
    "estimator": "rrmmse_joint",
    "trials": 1000,
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    scenario: Scenario
    out: str
    seed: int
    threads: int
    mc_trials: int
    sweep: dict
    design: dict
    estimate: dict


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in {where}")


def scenario_to_dict(scenario: Scenario) -> dict:
    gamma = scenario.gamma
    if isinstance(gamma, tuple):
        gamma = {str(gid): g for gid, g in gamma}
    return {
        "num_elements": scenario.geom.num_elements,
        "element_spacing": scenario.geom.element_spacing,
        "intended_group": scenario.intended_group,
        "groups": [
            {
                "id": g.id,
                "num_users": g.num_users,
                "memory": g.memory,
                "mpcs": [
                    {
                        "delay": m.delay,
                        "power": m.power,
                        "sector": [m.sector.lo_deg, m.sector.hi_deg],
                        "rank_override": m.rank_override,
                    }
                    for m in g.mpcs
                ],
            }
            for g in scenario.groups
        ],
        "pilot": {
            "length": scenario.pilot.length,
            "source": scenario.pilot.source,
            "degree": scenario.pilot.degree,
        },
        "E_s": scenario.E_s,
        "N_0": scenario.N_0,
        "gamma": gamma,
        "seed": scenario.seed,
        "energy_fraction": scenario.energy_fraction,
        "quad_points": scenario.quad_points,
    }


def scenario_from_dict(doc: dict) -> Scenario:
    _check_keys(
        doc,
        {
            "num_elements",
            "element_spacing",
            "intended_group",
            "groups",
            "pilot",
            "E_s",
            "N_0",
            "gamma",
            "seed",
            "energy_fraction",
            "quad_points",
        },
        "scenario",
    )
    try:
        geom = ArrayGeometry(
            num_elements=int(doc["num_elements"]),
            element_spacing=float(doc.get("element_spacing", 0.5)),
        )
        groups = []
        for gdoc in doc["groups"]:
            _check_keys(gdoc, {"id", "num_users", "memory", "mpcs"}, "scenario.groups[]")
            mpcs = []
            for mdoc in gdoc["mpcs"]:
                _check_keys(
                    mdoc, {"delay", "power", "sector", "rank_override"}, "scenario.groups[].mpcs[]"
                )
                lo, hi = mdoc["sector"]
                override = mdoc.get("rank_override")
                mpcs.append(
                    MpcSpec(
                        delay=int(mdoc["delay"]),
                        power=float(mdoc["power"]),
                        sector=AngularSector(float(lo), float(hi)),
                        rank_override=None if override is None else int(override),
                    )
                )
            groups.append(
                GroupSpec(
                    id=int(gdoc["id"]),
                    num_users=int(gdoc["num_users"]),
                    memory=int(gdoc["memory"]),
                    mpcs=tuple(mpcs),
                )
            )
        pdoc = doc.get("pilot", {"length": 6})
        _check_keys(pdoc, {"length", "source", "degree"}, "scenario.pilot")
        pilot = PilotConfig(
            length=int(pdoc["length"]),
            source=str(pdoc.get("source", "kasami_truncated")),
            degree=int(pdoc.get("degree", 6)),
        )
        gamma = doc.get("gamma", 1.0)
        if isinstance(gamma, dict):
            gamma = tuple(sorted((int(k), float(v)) for k, v in gamma.items()))
        else:
            gamma = float(gamma)
        quad = doc.get("quad_points")
        return Scenario(
            geom=geom,
            groups=tuple(groups),
            intended_group=int(doc["intended_group"]),
            pilot=pilot,
            E_s=float(doc["E_s"]),
            N_0=float(doc.get("N_0", 1.0)),
            gamma=gamma,
            seed=int(doc.get("seed", 0)),
            energy_fraction=float(doc.get("energy_fraction", 0.999)),
            quad_points=None if quad is None else int(quad),
        )
    except KeyError as exc:
        raise ConfigError(f"scenario is missing required key {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid scenario value: {exc}") from exc


def config_to_dict(config: RunConfig) -> dict:
    return {
        "version": 1,
        "command": config.command,
        "scenario": scenario_to_dict(config.scenario),
        "out": config.out,
        "seed": config.seed,
        "threads": config.threads,
        "mc_trials": config.mc_trials,
        "sweep": config.sweep,
        "design": config.design,
        "estimate": config.estimate,
    }


def config_from_dict(doc: dict) -> RunConfig:
    _check_keys(
        doc,
        {
            "version",
            "command",
            "scenario",
            "out",
            "seed",
            "threads",
            "mc_trials",
            "sweep",
            "design",
            "estimate",
        },
        "config",
    )
    version = doc.get("version", 1)
    _require(version == 1, f"unsupported config version {version!r} (expected 1)")
    command = doc.get("command", "sweep")
    _require(
        command in {"design", "estimate", "sweep", "identities"},
        f"command must be one of design|estimate|sweep|identities, got {command!r}",
    )
    scen_doc = doc.get("scenario", "default")
    scenario = default_scenario() if scen_doc == "default" else scenario_from_dict(scen_doc)

    sweep = dict(_DEFAULT_SWEEP)
    sweep.update(doc.get("sweep", {}))
    _check_keys(sweep, set(_DEFAULT_SWEEP), "sweep")
    _require(
        sweep["axis"] in {a.value for a in SweepAxis},
        f"sweep.axis must be one of {sorted(a.value for a in SweepAxis)}, got {sweep['axis']!r}",
    )
    _require(isinstance(sweep["grid"], list) and sweep["grid"], "sweep.grid must be a non-empty list")
    _require(sweep["target"] in {"full", "effective"}, "sweep.target must be full|effective")
    for name in sweep["estimators"]:
        _require(
            name in {e.value for e in EstimatorKind},
            f"unknown estimator {name!r} in sweep.estimators",
        )
    for name in sweep["beams"]:
        _require(name in {"geb", "dft"}, f"unknown beam {name!r} in sweep.beams")

    design = dict(_DEFAULT_DESIGN)
    design.update(doc.get("design", {}))
    _check_keys(design, set(_DEFAULT_DESIGN), "design")
    _require(design["beam"] in {"geb", "dft"}, "design.beam must be geb|dft")

    estimate = dict(_DEFAULT_ESTIMATE)
    estimate.update(doc.get("estimate", {}))
    _check_keys(estimate, set(_DEFAULT_ESTIMATE), "estimate")

    threads = doc.get("threads")
    if threads is None:
        threads = os.cpu_count() or 1
    return RunConfig(
        command=command,
        scenario=scenario,
        out=str(doc.get("out", "out")),
        seed=int(doc.get("seed", 0)),
        threads=int(threads),
        mc_trials=int(doc.get("mc_trials", 0)),
        sweep=sweep,
        design=design,
        estimate=estimate,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamcsi",
        description="Reduced-rank channel estimation experiments for massive MIMO",
    )
    parser.add_argument("command", choices=["design", "estimate", "sweep", "identities"])
    parser.add_argument("--config", help="path to a JSON run configuration")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="base RNG seed")
    parser.add_argument("--threads", type=int, help="worker threads (results are identical)")
    parser.add_argument("--mc-trials", type=int, dest="mc_trials", help="Monte Carlo trials per point")
    parser.add_argument("--axis", help="sweep axis: dimension|snr_db|inr_db|separation_deg")
    parser.add_argument("--grid", help="comma-separated sweep grid values")
    parser.add_argument("--beam", help="comma-separated beam kinds (geb,dft)")
    parser.add_argument("--estimator", help="comma-separated estimator kinds")
    parser.add_argument("--target", choices=["full", "effective"], help="error target for sweeps")
    parser.add_argument("--dim", type=int, help="beamspace dimension for design/estimate")
    parser.add_argument("--export-pattern", action="store_true", dest="export_pattern",
                        help="write the beam-pattern CSV (design command)")
    return parser


def parse_config(argv: list[str] | None = None) -> RunConfig:
    """Assemble the run configuration from an optional file plus CLI overrides."""
    args = _build_parser().parse_args(argv)
    doc: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config!r} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
    doc = dict(doc)
    doc["command"] = args.command
    for key in ("out", "seed", "threads", "mc_trials"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    sweep = dict(doc.get("sweep", {}))
    if args.axis is not None:
        sweep["axis"] = args.axis
    if args.grid is not None:
        try:
            sweep["grid"] = [float(v) for v in args.grid.split(",") if v != ""]
        except ValueError as exc:
            raise ConfigError(f"--grid values must be numeric: {exc}") from exc
    if args.beam is not None:
        sweep["beams"] = args.beam.split(",")
    if args.estimator is not None:
        sweep["estimators"] = args.estimator.split(",")
    if args.target is not None:
        sweep["target"] = args.target
    if sweep:
        doc["sweep"] = sweep
    design = dict(doc.get("design", {}))
    estimate = dict(doc.get("estimate", {}))
    if args.beam is not None:
        design["beam"] = args.beam.split(",")[0]
        estimate["beam"] = args.beam.split(",")[0]
    if args.dim is not None:
        design["dim"] = args.dim
        estimate["dim"] = args.dim
    if args.estimator is not None:
        estimate["estimator"] = args.estimator.split(",")[0]
    if args.export_pattern:
        design["export_pattern"] = True
    if design:
        doc["design"] = design
    if estimate:
        doc["estimate"] = estimate
    return config_from_dict(doc)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if not math.isfinite(value):
            raise NumericalError(f"non-finite value {value!r} in CSV output")
        return repr(value)
    return str(value)


def write_csv(result: SweepResult, path: str) -> None:
    """Sweep rows in canonical order: axis value, then estimator, then beam."""
    est_order = {kind: i for i, kind in enumerate(EstimatorKind)}
    beam_order = {None: 0, BeamKind.GEB: 1, BeamKind.DFT: 2, BeamKind.CUSTOM: 3}
    rows = sorted(
        result.points,
        key=lambda p: (float(p.axis_value), est_order[p.estimator], beam_order[p.beam]),
    )
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for p in rows:
                writer.writerow(
                    [
                        result.axis.value,
                        _fmt(float(p.axis_value)),
                        p.estimator.value,
                        p.beam.value if p.beam is not None else "none",
                        p.d_total,
                        _fmt(p.mse_analytic),
                        _fmt(p.mse_analytic_db),
                        _fmt(p.mse_mc),
                        _fmt(p.mc_std),
                        _fmt(p.mi_nats),
                        _fmt(p.nmse_trace),
                    ]
                )
    except OSError as exc:
        raise OSError(f"cannot write CSV {path!r}: {exc}") from exc


def write_pattern_csv(beam, geom, path: str, step_deg: float = 0.1) -> None:
    """Beam pattern over azimuth: per-column and aggregate power gains in dB."""
    thetas = np.arange(-90.0 + step_deg, 90.0, step_deg)
    gains = beam_pattern(beam, geom, thetas)
    gains_db = 10.0 * np.log10(np.maximum(gains, 1e-300))
    if not np.all(np.isfinite(gains_db)):
        raise NumericalError("non-finite beam-pattern gain")
    header = ["theta_deg"] + [f"col{i:02d}_db" for i in range(beam.dim)] + ["aggregate_db"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for theta, row in zip(thetas, gains_db):
            writer.writerow([_fmt(float(theta))] + [_fmt(float(v)) for v in row])


def _write_snapshot(config: RunConfig) -> None:
    path = os.path.join(config.out, "config.json")
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(config: RunConfig) -> int:
    """Execute one configured command; returns the process exit status."""
    os.makedirs(config.out, exist_ok=True)
    _write_snapshot(config)

    if config.command == "sweep":
        sweep = config.sweep
        result = run_sweep(
            config.scenario,
            SweepAxis(sweep["axis"]),
            sweep["grid"],
            sweep["estimators"],
            sweep["beams"],
            dims=sweep["dims"],
            target=sweep["target"],
            mc_trials=config.mc_trials,
            seed=config.seed,
            threads=config.threads,
            inr_db=sweep["inr_db"],
        )
        for failure in result.failures:
            log.warning("sweep point failed: %s", failure)
        write_csv(result, os.path.join(config.out, f"sweep_{sweep['axis']}.csv"))
        return 0

    if config.command == "design":
        stats = compile_scenario(config.scenario)
        kind = BeamKind(config.design["beam"])
        beam = build_beam(kind, stats, int(config.design["dim"]))
        _, report = build_f(beam, stats.group, stats.covs, stats.r_eta, stats.train)
        with open(os.path.join(config.out, "design_summary.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["beam", "d_total", "mi_nats", "nmse_trace", "log_error_volume_reduction"])
            writer.writerow(
                [
                    kind.value,
                    beam.dim,
                    _fmt(report.mutual_info),
                    _fmt(report.nmse_trace),
                    _fmt(report.log_error_volume_reduction),
                ]
            )
        if config.design["export_pattern"]:
            write_pattern_csv(
                beam,
                stats.geom,
                os.path.join(config.out, f"pattern_{kind.value}_d{beam.dim}.csv"),
                float(config.design["pattern_step_deg"]),
            )
        return 0

    if config.command == "estimate":
        stats = compile_scenario(config.scenario)
        kind = EstimatorKind(config.estimate["estimator"])
        beam = None
        if kind is not EstimatorKind.FULL_WIENER:
            beam = build_beam(BeamKind(config.estimate["beam"]), stats, int(config.estimate["dim"]))
        est = build_estimator(kind, beam, stats)
        target = "full" if est.w_full is not None else "effective"
        r_e = error_cov_linear(est, stats, target=target)
        mse = mse_per_user(r_e, stats.group.num_users)
        trials = max(int(config.estimate["trials"]), 100)
        mc_mean, mc_std = monte_carlo_mse(est, stats, trials, config.seed, target=target)
        with open(os.path.join(config.out, "estimate_summary.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["estimator", "beam", "d_total", "target", "mse_analytic", "mse_analytic_db", "mse_mc", "mc_std"]
            )
            writer.writerow(
                [
                    kind.value,
                    beam.kind.value if beam is not None else "none",
                    beam.dim if beam is not None else stats.geom.num_elements,
                    target,
                    _fmt(mse),
                    _fmt(to_db(mse)),
                    _fmt(mc_mean),
                    _fmt(mc_std),
                ]
            )
        return 0

    if config.command == "identities":
        report = _identities_report(config)
        lines = [
            f"error_volume_identity: residual {report.error_volume_residual:.3e}",
            f"nmse_trace_identity: residual {report.nmse_trace_residual:.3e}",
            f"mutual_info_identity: residual {report.mutual_info_residual:.3e}",
        ]
        status = "PASS" if report.all_pass else "FAIL"
        for line in lines:
            print(line)
        print(f"identities: {status} (tolerance {report.tolerance:.1e})")
        with open(os.path.join(config.out, "identities.txt"), "w") as fh:
            fh.write("\n".join(lines + [f"identities: {status}"]) + "\n")
        return 0 if report.all_pass else 3

    raise ConfigError(f"unknown command {config.command!r}")


def _identities_report(config: RunConfig):
    # Full-rank miniature: wide sectors keep every eigenvalue positive.
    from .evaluation import _uniform_group  # local import to keep the CLI surface small

    scenario = Scenario(
        geom=ArrayGeometry(num_elements=4),
        groups=(
            _uniform_group(0, 1, 2, [(-40.0, 30.0), (-10.0, 55.0)]),
            _uniform_group(1, 1, 1, [(-70.0, -45.0)]),
        ),
        intended_group=0,
        pilot=PilotConfig(length=3, degree=4),
        E_s=10.0 ** (config.scenario.snr_db / 10.0),
        N_0=1.0,
        gamma=1.0,
        seed=config.seed,
        energy_fraction=1.0,
    )
    stats = compile_scenario(scenario)
    beam = build_beam(BeamKind.GEB, stats, 4)
    return identity_checks(beam, stats.group, stats.covs, stats.r_eta, stats.train)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # invalid object combinations requested through the config surface
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        # covers conditioning errors, the NaN guard, and all-points-failed sweeps
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
