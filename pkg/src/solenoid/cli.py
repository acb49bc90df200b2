"""Command-line audits: `solenoid run <config>`.

Configs are flat ``key = value`` files (``#`` comments, dotted keys for
namespacing).  Every run writes one CSV (numbers as %.16e so reruns are
byte-identical) plus a JSON sidecar carrying the fully resolved
configuration, the seed, the backend that actually ran, and the summary
statistics.  Exit codes: 0 all checks passed, 1 a tolerance was exceeded,
2 bad configuration, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .backend import active_backend
from .fields import catalog, catalog_names
from .flow import FlowError, IntegratorConfig, NoCrossing, TangentialCrossing
from .level_measure import liouville_check
from .poincare import (
    NewtonDiverged,
    SingularJacobian,
    coordinate_plane_section,
    return_map,
)
from .suspension import build, identity_map, standard_map
from .torus import rotation_quadrature

__all__ = ["ConfigError", "main", "parse_config", "run_scenario"]


class ConfigError(Exception):
    pass


class AuditFailure(Exception):
    """A scenario ran to completion but a check missed its tolerance."""


# ----------------------------------------------------------------------------
# config file handling


def parse_config(path) -> dict:
    """Flat key = value parser; returns {key: (value, line_number)}."""
    out = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(
                f"{path}:{lineno}: duplicate key {key!r} (first set on line {out[key][1]})"
            )
        out[key] = (value, lineno)
    return out


def _as_int(s):
    return int(s)


def _as_float(s):
    return float(s)


def _as_str(s):
    return s


def _as_pairs(s):
    """Parse '(a,b);(c,d)' into a list of float pairs."""
    pairs = []
    for chunk in s.split(";"):
        chunk = chunk.strip().strip("()")
        if not chunk:
            continue
        parts = chunk.split(",")
        if len(parts) != 2:
            raise ValueError(f"expected pairs '(a,b);(c,d)', got {s!r}")
        pairs.append((float(parts[0]), float(parts[1])))
    if not pairs:
        raise ValueError("no pairs given")
    return pairs


_COMMON_KEYS = {
    "scenario": (_as_str, True, None),
    "seed": (_as_int, False, 0),
    "output": (_as_str, False, None),
    "backend": (_as_str, False, None),
    "tolerance": (_as_float, False, None),
    "integrator.abs_tol": (_as_float, False, 1e-12),
    "integrator.rel_tol": (_as_float, False, 1e-12),
    "integrator.max_step": (_as_float, False, math.inf),
}

_SCENARIO_KEYS = {
    "poincare_audit": {
        "field.name": (_as_str, True, None),
        "section.axis": (_as_int, False, 2),
        "section.value": (_as_float, False, 0.0),
        "points": (_as_int, False, 200),
        "pool_factor": (_as_int, False, 3),
        "t_max": (_as_float, False, 1e3),
    },
    "level_measure_audit": {
        "field.name": (_as_str, True, None),
        "level": (_as_float, True, None),
        "points": (_as_int, False, 100),
        "advect_time": (_as_float, False, 1.0),
    },
    "rotation_profile": {
        "field.name": (_as_str, True, None),
        "level.min": (_as_float, False, -0.5),
        "level.max": (_as_float, False, 0.5),
        "level.count": (_as_int, False, 11),
        "grid": (_as_int, False, 64),
    },
    "suspension_certify": {
        "map": (_as_str, False, "standard"),
        "K": (_as_float, False, 0.5),
        "epsilon": (_as_float, False, 1.0),
        "roof": (_as_float, False, 1.0),
        "points": (_as_int, False, 40),
        "return_points": (_as_int, False, 100),
    },
    "orbit_classify": {
        "map": (_as_str, False, "standard"),
        "K": (_as_float, False, 0.5),
        "epsilon": (_as_float, False, 1.0),
        "roof": (_as_float, False, 1.0),
        "starts": (_as_pairs, False, [(0.2, -0.1), (math.pi + 0.2, 0.15)]),
    },
}


def resolve_config(raw: dict, path="<config>") -> dict:
    """Validate keys against the scenario schema and apply defaults."""
    if "scenario" not in raw:
        raise ConfigError(f"{path}: missing required key 'scenario'")
    scenario = raw["scenario"][0]
    if scenario not in _SCENARIO_KEYS:
        raise ConfigError(
            f"{path}:{raw['scenario'][1]}: unknown scenario {scenario!r}; "
            f"expected one of {sorted(_SCENARIO_KEYS)}"
        )
    schema = dict(_COMMON_KEYS)
    schema.update(_SCENARIO_KEYS[scenario])

    needs_field = "field.name" in schema
    resolved = {}
    for key, (value, lineno) in raw.items():
        if key in schema:
            conv = schema[key][0]
            try:
                resolved[key] = conv(value)
            except ValueError as err:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {err}") from None
        elif needs_field and key.startswith("field.") and key != "field.name":
            try:
                resolved[key] = float(value)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: field parameter {key!r} must be numeric"
                ) from None
        else:
            raise ConfigError(
                f"{path}:{lineno}: unknown key {key!r} for scenario {scenario!r}"
            )
    for key, (_, required, default) in schema.items():
        if key in resolved:
            continue
        if required:
            raise ConfigError(f"{path}: missing required key {key!r}")
        resolved[key] = default
    if resolved.get("backend") not in (None, "auto", "python", "compiled"):
        raise ConfigError(f"{path}: backend must be auto, python or compiled")
    return resolved


def _field_params(cfg):
    return {
        key.split(".", 1)[1]: val
        for key, val in cfg.items()
        if key.startswith("field.") and key != "field.name"
    }


def _integrator(cfg) -> IntegratorConfig:
    return IntegratorConfig(
        abs_tol=cfg["integrator.abs_tol"],
        rel_tol=cfg["integrator.rel_tol"],
        max_step=cfg["integrator.max_step"],
    )


def _entry(cfg):
    name = cfg["field.name"]
    if name not in catalog_names():
        raise ConfigError(
            f"unknown field {name!r}; expected one of {catalog_names()}"
        )
    return catalog(name, **_field_params(cfg))


def _fmt(x) -> str:
    return "%.16e" % float(x)


def _parallel_map(fn, items, jobs):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ----------------------------------------------------------------------------
# scenarios: each returns (header, rows, summary_dict); raises AuditFailure
# after writing nothing -- the caller owns all file output.


def _run_poincare_audit(cfg, jobs, tol):
    entry = _entry(cfg)
    axis, value = cfg["section.axis"], cfg["section.value"]
    section = coordinate_plane_section(axis, value, entry.field.domain)
    icfg = _integrator(cfg)
    rng = np.random.default_rng(cfg["seed"])
    n_target = cfg["points"]
    pool_size = n_target * cfg["pool_factor"]
    i, j = [k for k in range(3) if k != axis]
    if entry.field.domain.kind == "torus":
        per = entry.field.domain.periods
        lo = (0.0, 0.0)
        hi = (per[i], per[j])
    else:
        lo = (-2.0, -2.0)
        hi = (2.0, 2.0)
    pool = []
    for _ in range(pool_size):
        q = rng.uniform(lo, hi)
        x = np.empty(3)
        x[axis] = value
        x[i], x[j] = q
        pool.append(x)

    def work(x):
        try:
            rm = return_map(entry.field, entry.volume, section, x, cfg=icfg,
                            t_max=cfg["t_max"], prefer=cfg["backend"])
        except (NoCrossing, TangentialCrossing) as err:
            return ("skip", type(err).__name__)
        return ("ok", rm)

    outcomes = _parallel_map(work, pool, jobs)
    rows = []
    skipped = {}
    for x, (status, payload) in zip(pool, outcomes):
        if len(rows) >= n_target:
            break
        if status == "skip":
            skipped[payload] = skipped.get(payload, 0) + 1
            continue
        rm = payload
        rows.append([
            len(rows), x[0], x[1], x[2], rm.t, float(np.linalg.det(rm.dp)),
            rm.w_start, rm.w_return, rm.symplectic_residual, rm.transversality,
        ])
    if len(rows) < n_target:
        raise FlowError(
            f"only {len(rows)} of {n_target} section returns found "
            f"(pool of {pool_size}, skipped {sum(skipped.values())})"
        )
    worst = max(r[8] for r in rows)
    summary = {
        "points": len(rows),
        "skipped": skipped,
        "max_symplectic_residual": worst,
        "tolerance": tol,
    }
    header = ["index", "x0", "x1", "x2", "return_time", "det_dp",
              "w_start", "w_return", "symplectic_residual", "transversality"]
    if tol is not None and worst > tol:
        raise AuditFailure(
            f"max symplectic residual {worst:.3e} exceeds tolerance {tol:.3e}",
            (header, rows, summary),
        )
    return header, rows, summary


def _run_level_measure_audit(cfg, jobs, tol):
    entry = _entry(cfg)
    if entry.integral is None or entry.level_sampler is None:
        raise ConfigError(
            f"field {entry.name!r} has no conserved level structure to audit"
        )
    icfg = _integrator(cfg)
    pts = entry.level_sampler(cfg["level"], cfg["points"], seed=cfg["seed"])
    report = liouville_check(entry.field, entry.integral, entry.volume, pts,
                             t=cfg["advect_time"], level=cfg["level"], cfg=icfg,
                             prefer=cfg["backend"])
    rows = [
        [r["index"], *r["point"], r["normalization_defect"],
         r["invariance_residual"], r["bracket_defect"]]
        for r in report["points"]
    ]
    header = ["index", "x0", "x1", "x2", "normalization_defect",
              "invariance_residual", "bracket_defect"]
    summary = {
        "checked": report["checked"],
        "excluded": report["excluded"],
        "excluded_points": report["excluded_points"],
        "max_normalization_defect": report.get("max_normalization_defect"),
        "max_invariance_residual": report.get("max_invariance_residual"),
        "max_bracket_defect": report.get("max_bracket_defect"),
        "tolerance": tol,
    }
    if tol is not None and report["checked"]:
        if report["max_invariance_residual"] > tol:
            raise AuditFailure(
                f"max invariance residual {report['max_invariance_residual']:.3e} "
                f"exceeds tolerance {tol:.3e}",
                (header, rows, summary),
            )
    return header, rows, summary


def _run_rotation_profile(cfg, jobs, tol):
    entry = _entry(cfg)
    if entry.torus_chart is None:
        raise ConfigError(f"field {entry.name!r} exposes no torus charts")
    levels = np.linspace(cfg["level.min"], cfg["level.max"], cfg["level.count"])

    def work(c):
        est = rotation_quadrature(entry.torus_chart(float(c)), n=cfg["grid"])
        return [float(c), est.lambda1, est.lambda2, est.ratio, est.pde_residual]

    rows_raw = _parallel_map(work, levels, jobs)
    rows = [[i, *r] for i, r in enumerate(rows_raw)]
    header = ["index", "level", "lambda1", "lambda2", "ratio", "pde_residual"]
    worst_pde = max(r[5] for r in rows)
    summary = {"levels": len(rows), "max_pde_residual": worst_pde, "tolerance": tol}
    if tol is not None and worst_pde > tol:
        raise AuditFailure(
            f"max PDE residual {worst_pde:.3e} exceeds tolerance {tol:.3e}",
            (header, rows, summary),
        )
    return header, rows, summary


def _surface_map(cfg):
    kind = cfg["map"]
    if kind == "standard":
        return standard_map(cfg["K"])
    if kind == "identity":
        return identity_map()
    raise ConfigError(f"unknown map {kind!r}; expected standard or identity")


def _run_suspension_certify(cfg, jobs, tol):
    model = build(_surface_map(cfg), epsilon=cfg["epsilon"], roof=cfg["roof"],
                  seed=cfg["seed"])
    tol_scale = 1.0 if tol is None else tol
    cert = model.certify(n_points=cfg["points"], seed=cfg["seed"],
                         return_points=cfg["return_points"],
                         tol_scale=tol_scale, prefer=cfg["backend"])
    d = cert.to_dict()
    rows = []
    idx = 0
    for item, value in d["items"].items():
        if isinstance(value, dict):
            for sub, v in value.items():
                thr = d["thresholds"]["loop_periods"]
                rows.append([idx, f"{item}.{sub}", v, thr,
                             int(v <= thr)])
                idx += 1
            continue
        thr_key = "det_positivity" if item == "det_min" else item
        thr = d["thresholds"][thr_key]
        ok = value >= thr if item == "det_min" else value <= thr
        rows.append([idx, item, value, thr, int(ok)])
        idx += 1
    header = ["index", "item", "value", "threshold", "passed"]
    summary = {"certificate": d}
    if not cert.passed:
        raise AuditFailure(
            f"certificate failed items: {', '.join(cert.failures)}",
            (header, rows, summary),
        )
    return header, rows, summary


def _run_orbit_classify(cfg, jobs, tol):
    model = build(_surface_map(cfg), epsilon=cfg["epsilon"], roof=cfg["roof"],
                  seed=cfg["seed"])
    level = model.restrict_to_level(0.0)
    class_codes = {"elliptic": 0, "parabolic": 1, "saddle_orientable": 2,
                   "saddle_nonorientable": 3}

    def work(start):
        return level.periodic_orbit(np.asarray(start, dtype=float),
                                    prefer=cfg["backend"])

    rows = []
    failures = []
    classifications = []
    for k, start in enumerate(cfg["starts"]):
        try:
            orb = work(start)
        except (SingularJacobian, NewtonDiverged) as err:
            failures.append({"start": list(start), "error": str(err)})
            continue
        mu = np.sort_complex(orb.multipliers)
        classifications.append(orb.classification)
        rows.append([
            k, start[0], start[1], orb.q[0], orb.q[1], orb.period,
            mu[0].real, mu[0].imag, mu[1].real, mu[1].imag,
            class_codes[orb.classification], orb.residual, orb.iterations,
        ])
    header = ["index", "start0", "start1", "q0", "q1", "period",
              "mult1_re", "mult1_im", "mult2_re", "mult2_im",
              "class_code", "residual", "iterations"]
    summary = {
        "classifications": classifications,
        "class_codes": class_codes,
        "failures": failures,
    }
    if failures:
        raise AuditFailure(
            f"{len(failures)} orbit(s) did not converge", (header, rows, summary)
        )
    return header, rows, summary


_RUNNERS = {
    "poincare_audit": _run_poincare_audit,
    "level_measure_audit": _run_level_measure_audit,
    "rotation_profile": _run_rotation_profile,
    "suspension_certify": _run_suspension_certify,
    "orbit_classify": _run_orbit_classify,
}


# ----------------------------------------------------------------------------
# output + driver


def _write_outputs(out_dir, name, header, rows, summary, cfg, stamp, status):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / name
    lines = []
    if stamp:
        lines.append(f"# generated {stamp}")
    lines.append(",".join(header))
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, str):
                cells.append(cell)
            elif isinstance(cell, (int, np.integer)):
                cells.append(str(int(cell)))
            else:
                cells.append(_fmt(cell))
        lines.append(",".join(cells))
    csv_path.write_text("\n".join(lines) + "\n")

    def _cfg_value(v):
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)  # "inf" -- strict JSON has no Infinity literal
        if isinstance(v, tuple):
            return list(v)
        return v

    sidecar = {
        "version": __version__,
        "scenario": cfg["scenario"],
        "config": {k: _cfg_value(v) for k, v in sorted(cfg.items())},
        "seed": cfg["seed"],
        "backend": active_backend(cfg["backend"]),
        "csv": name,
        "rows": len(rows),
        "status": status,
        "stamp": stamp,
        "summary": summary,
    }
    (csv_path.with_suffix(csv_path.suffix + ".json")).write_text(
        json.dumps(sidecar, indent=2, sort_keys=True, default=_json_default) + "\n"
    )
    return csv_path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def run_scenario(cfg: dict, out_dir=".", jobs: int = 1, stamp: bool = False,
                 tol_override=None):
    """Execute a resolved config; returns (exit_code, csv_path)."""
    scenario = cfg["scenario"]
    tol = tol_override if tol_override is not None else cfg.get("tolerance")
    name = cfg.get("output") or f"{scenario}.csv"
    stamp_str = (
        datetime.now(timezone.utc).isoformat(timespec="seconds") if stamp else None
    )
    try:
        header, rows, summary = _RUNNERS[scenario](cfg, jobs, tol)
    except AuditFailure as fail:
        header, rows, summary = fail.args[1]
        summary["failure"] = fail.args[0]
        path = _write_outputs(out_dir, name, header, rows, summary, cfg,
                              stamp_str, "fail")
        print(f"FAIL {scenario}: {fail.args[0]}", file=sys.stderr)
        print(f"wrote {path}")
        return 1, path
    path = _write_outputs(out_dir, name, header, rows, summary, cfg,
                          stamp_str, "pass")
    print(f"ok {scenario}: {len(rows)} rows -> {path}")
    return 0, path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="solenoid",
        description="Audits for divergence-free fields and their return maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run a scenario config")
    runp.add_argument("config", help="path to a key=value config file")
    runp.add_argument("--out", default=".", help="output directory (default: .)")
    runp.add_argument("--jobs", type=int, default=1, help="worker threads")
    runp.add_argument("--stamp", action="store_true",
                      help="prepend a UTC timestamp comment to the CSV")
    runp.add_argument("--tol-override", type=float, default=None,
                      help="override the config tolerance (certify: scale factor)")
    args = parser.parse_args(argv)

    try:
        cfg = resolve_config(parse_config(args.config), args.config)
    except OSError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        code, _ = run_scenario(cfg, out_dir=args.out, jobs=args.jobs,
                               stamp=args.stamp, tol_override=args.tol_override)
        return code
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
