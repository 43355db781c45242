"""Config-driven experiment runner.

Every subcommand reads one JSON config, validates it against a schema, and
writes a summary.json (all inputs echoed, toolkit version and config hash
embedded) plus named CSV data files. Identical config and seed reproduce the
summaries byte for byte; CSV floats carry 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv as _csv
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, errors
from .density import from_trig
from .lyverify import compute_bv_constants, compute_w11_constants, verify_ly
from .maps import PerturbationFamily, PiecewiseExpandingMap, SmoothCircleMap, \
    SolenoidMap, AffineFiber, map_from_config
from .response import DEFAULT_DELTAS, default_keller_path, keller_experiment, \
    linear_response, stability_curve
from .solenoid import solenoid_equilibrium, uniform_atoms
from .stats import clt_check, correlation_integrals, equilibrium_decay, \
    ks_critical_value
from .transfer import TransferContext
from .trig import TrigPoly, default_direction
from .ulam import build_ulam, invariant_vector, refinement_gaps

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

MAP_SCHEMA = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["circle", "keller", "piecewise_linear"]},
        "degree": {"type": "integer", "minimum": 2},
        "perturbation": {"type": "object"},
        "a": {"type": "number"}, "b": {"type": "number"}, "r": {"type": "number"},
        "breakpoints": {"type": "array"}, "branch_values": {"type": "array"},
    },
}

TRIG_SCHEMA = {"type": "object", "properties": {
    "const": {"type": "number"}, "sin": {"type": "array"}, "cos": {"type": "array"}}}

SCHEMAS = {
    "invariant": {
        "type": "object", "required": ["map", "k"],
        "properties": {"map": MAP_SCHEMA, "k": {"type": "integer", "minimum": 2},
                       "seed": {"type": "integer"}},
    },
    "ulam-study": {
        "type": "object", "required": ["map", "k_ladder"],
        "properties": {"map": MAP_SCHEMA,
                       "k_ladder": {"type": "array", "items": {"type": "integer"}},
                       "seed": {"type": "integer"}},
    },
    "decay": {
        "type": "object", "required": ["map", "grid", "steps"],
        "properties": {"map": MAP_SCHEMA, "grid": {"type": "integer"},
                       "steps": {"type": "integer"}, "probe": TRIG_SCHEMA,
                       "observable": TRIG_SCHEMA, "norm": {"enum": ["l1", "w11"]},
                       "correlations": {"type": "boolean"}, "seed": {"type": "integer"}},
    },
    "ly": {
        "type": "object", "required": ["map"],
        "properties": {"map": MAP_SCHEMA, "norm_pair": {"enum": ["w11", "bv"]},
                       "trials": {"type": "integer"}, "n_max": {"type": "integer"},
                       "grid": {"type": "integer"}, "seed": {"type": "integer"}},
    },
    "stability": {
        "type": "object", "required": ["map", "k"],
        "properties": {"map": MAP_SCHEMA, "direction": TRIG_SCHEMA,
                       "k": {"type": "integer"}, "deltas": {"type": "array"},
                       "seed": {"type": "integer"}},
    },
    "response": {
        "type": "object", "required": ["map", "grid"],
        "properties": {"map": MAP_SCHEMA, "direction": TRIG_SCHEMA,
                       "grid": {"type": "integer"}, "tol": {"type": "number"},
                       "deltas": {"type": "array"}, "seed": {"type": "integer"}},
    },
    "keller": {
        "type": "object", "required": ["k"],
        "properties": {"k": {"type": "integer"}, "rungs": {"type": "array"},
                       "path": {"type": "array"}, "seed": {"type": "integer"}},
    },
    "clt": {
        "type": "object", "required": ["map", "samples", "horizon"],
        "properties": {"map": MAP_SCHEMA, "observable": TRIG_SCHEMA,
                       "samples": {"type": "integer"}, "horizon": {"type": "integer"},
                       "dump_samples": {"type": "boolean"}, "seed": {"type": "integer"}},
    },
    "solenoid": {
        "type": "object", "required": ["map", "fiber", "k", "steps"],
        "properties": {"map": MAP_SCHEMA,
                       "fiber": {"type": "object", "required": ["contraction"]},
                       "k": {"type": "integer"}, "steps": {"type": "integer"},
                       "seed": {"type": "integer"}},
    },
}


def _canonical(obj):
    """JSON-safe deep copy with numpy scalars/arrays converted."""
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _config_hash(cfg):
    text = json.dumps(_canonical(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _write_summary(out_dir, command, cfg, seed, results, artifacts):
    summary = {
        "command": command,
        "version": __version__,
        "config": _canonical(cfg),
        "config_hash": _config_hash({"cfg": cfg, "seed": seed}),
        "seed": seed,
        "results": _canonical(results),
        "artifacts": artifacts,
    }
    path = Path(out_dir) / "summary.json"
    path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return path


def _write_csv(out_dir, name, header, columns):
    path = Path(out_dir) / name
    rows = zip(*columns)
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v
                        for v in row])
    return name


def _trig_from(cfg, default=None):
    if cfg is None:
        return default
    return TrigPoly.from_config(cfg)


def _parallel(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# subcommand bodies (each returns (results dict, artifacts dict))


def _run_invariant(cfg, out, seed, threads):
    mp = map_from_config(cfg["map"])
    op = build_ulam(mp, int(cfg["k"]))
    vec = invariant_vector(op)
    arts = {
        "invariant": _write_csv(out, "invariant.csv", ["cell", "mass", "level"],
                                [list(range(vec.k)), vec.masses, vec.levels]),
        "matrix": "ulam_matrix.csv",
    }
    op.to_csv(Path(out) / "ulam_matrix.csv")
    dens = vec.to_density(op.topology)
    return {
        "k": vec.k, "iterations": vec.iterations, "residual": vec.residual,
        "rate_estimate": vec.rate_estimate, "used_cesaro": vec.used_cesaro,
        "norms": {"l1": dens.l1_norm(), "sup": dens.sup_norm(),
                  "variation": dens.variation()},
    }, arts


def _run_ulam_study(cfg, out, seed, threads):
    mp = map_from_config(cfg["map"])
    ks = [int(k) for k in cfg["k_ladder"]]
    gaps, hs = refinement_gaps(mp, ks)
    arts = {"gaps": _write_csv(out, "refinement_gaps.csv", ["k", "gap_to_next"],
                               [ks[:-1], gaps])}
    return {"k_ladder": ks, "gaps": gaps,
            "iterations": {str(k): hs[k].iterations for k in ks}}, arts


def _run_decay(cfg, out, seed, threads):
    mp = map_from_config(cfg["map"])
    n = int(cfg["grid"])
    ctx = TransferContext(mp, n)
    probe = _trig_from(cfg.get("probe"), default_direction())
    g = from_trig(probe, n, ctx.topology)
    series = equilibrium_decay(ctx, g, int(cfg["steps"]),
                               norm=cfg.get("norm", "l1"), project=True)
    arts = {"decay": _write_csv(out, "decay.csv", ["n", "value"],
                                [list(range(series.values.size)), series.values])}
    results = {
        "fitted_rate": series.fitted_rate, "prefactor": series.fitted_prefactor,
        "r_squared": series.r_squared, "degenerate": series.degenerate,
        "fit_window": list(series.fit_window) if series.fit_window else None,
    }
    if cfg.get("correlations", False):
        psi = from_trig(_trig_from(cfg.get("observable"), default_direction()),
                        n, ctx.topology)
        h = invariant_vector(build_ulam(mp, min(n, 4096))).to_density(ctx.topology)
        corr = correlation_integrals(ctx, psi, g.zero_average(), int(cfg["steps"]),
                                     mode="lebesgue", h=h)
        arts["correlations"] = _write_csv(out, "correlations.csv", ["n", "value"],
                                          [list(range(corr.size)), corr])
    return results, arts


def _run_ly(cfg, out, seed, threads):
    mp = map_from_config(cfg["map"])
    pair = cfg.get("norm_pair", "w11" if isinstance(mp, SmoothCircleMap) else "bv")
    if pair == "w11":
        constants = compute_w11_constants(mp)
    else:
        if isinstance(mp, SmoothCircleMap):
            mp = mp.as_piecewise()
        constants = compute_bv_constants(mp)
    report = verify_ly(mp, constants, trials=int(cfg.get("trials", 50)),
                       n_max=int(cfg.get("n_max", 20)),
                       n_grid=int(cfg.get("grid", 4096)), seed=seed)
    (Path(out) / "ly_report.json").write_text(report.to_json() + "\n")
    return {
        "alpha": constants.alpha, "big_b": constants.big_b,
        "n_step": constants.n_step, "norm_pair": list(constants.norm_pair),
        "min_slack": report.min_slack, "passed": report.passed,
    }, {"report": "ly_report.json"}


def _run_stability(cfg, out, seed, threads):
    mp = map_from_config(cfg["map"])
    family = PerturbationFamily(mp, _trig_from(cfg.get("direction"), default_direction()))
    deltas = cfg.get("deltas")
    curve = stability_curve(family,
                            deltas=None if deltas is None else [float(d) for d in deltas],
                            k=int(cfg["k"]), seed=seed)
    arts = {"curve": _write_csv(out, "stability.csv", ["delta", "gap"],
                                [curve.deltas, curve.gaps])}
    return {
        "coef_dlogd": curve.coef_dlogd, "coef_linear": curve.coef_linear,
        "fit_residual": curve.fit_residual, "max_gap": curve.max_gap,
        "uf2_spread": curve.uf2_spread,
    }, arts


def _run_response(cfg, out, seed, threads):
    mp = map_from_config(cfg["map"])
    family = PerturbationFamily(mp, _trig_from(cfg.get("direction"), default_direction()))
    deltas = cfg.get("deltas")
    result = linear_response(
        family, n=int(cfg["grid"]), tol=float(cfg.get("tol", 1e-8)),
        deltas=DEFAULT_DELTAS if deltas is None else [float(d) for d in deltas])
    arts = {
        "response": _write_csv(out, "response_density.csv", ["x", "value"],
                               [result.response_density.x,
                                result.response_density.values]),
        "fd": _write_csv(out, "fd_errors.csv", ["delta", "error"],
                         [result.deltas, result.fd_errors]),
    }
    return {
        "neumann_terms": result.neumann_terms,
        "truncation_residual": result.truncation_residual,
        "zero_mean_defect": result.zero_mean_defect,
        "floor_limited": result.floor_limited,
        "fd_errors": list(result.fd_errors),
    }, arts


def _run_keller(cfg, out, seed, threads):
    if "path" in cfg:
        path = [tuple(float(v) for v in row) for row in cfg["path"]]
    else:
        path = default_keller_path([int(r) for r in cfg.get("rungs", range(3, 9))])
    records = keller_experiment(path, k=int(cfg["k"]))
    arts = {"records": _write_csv(
        out, "keller.csv",
        ["a", "b", "r", "window_mass", "dist_three_half", "dist_two"],
        [[rec.a for rec in records], [rec.b for rec in records],
         [rec.r for rec in records], [rec.window_mass for rec in records],
         [rec.dist_step_three_half for rec in records],
         [rec.dist_step_two for rec in records]])}
    return {"n_params": len(records),
            "final_window_mass": records[-1].window_mass,
            "min_dist_three_half": min(r.dist_step_three_half for r in records),
            "min_dist_two": min(r.dist_step_two for r in records)}, arts


def _run_clt(cfg, out, seed, threads):
    mp = map_from_config(cfg["map"])
    obs = _trig_from(cfg.get("observable"), default_direction())
    result = clt_check(mp, obs, int(cfg["samples"]), int(cfg["horizon"]), seed=seed)
    arts = {}
    if cfg.get("dump_samples", False):
        arts["samples"] = _write_csv(out, "clt_samples.csv", ["sum"], [result.sums])
    return {
        "sigma_hat": result.sigma_hat, "gk_sigma": result.gk_sigma,
        "ks_statistic": result.ks_statistic,
        "ks_critical_1pct": ks_critical_value(result.sample_count, 0.01),
        "degenerate": result.degenerate,
    }, arts


def _run_solenoid(cfg, out, seed, threads):
    base = map_from_config(cfg["map"])
    f = cfg["fiber"]
    fiber = AffineFiber(float(f["contraction"]), float(f.get("x_coeff", 0.0)),
                        float(f.get("offset", 0.0)))
    F = SolenoidMap(base, fiber)
    k = int(cfg["k"])
    mu0 = uniform_atoms(k, float(cfg.get("y_start", 0.0)))
    nu0 = uniform_atoms(k, float(cfg.get("y_other", 1.0)))
    decay = solenoid_equilibrium(F, mu0, nu0, int(cfg["steps"]))
    arts = {"decay": _write_csv(out, "solenoid_decay.csv", ["n", "value"],
                                [list(range(decay.values.size)), decay.values])}
    return {
        "fitted_rate": decay.fitted_rate, "r_squared": decay.r_squared,
        "degenerate": decay.degenerate,
        "min_step_margin": float(np.min(decay.step_margins)),
        "alpha": F.alpha,
    }, arts


RUNNERS = {
    "invariant": _run_invariant,
    "ulam-study": _run_ulam_study,
    "decay": _run_decay,
    "ly": _run_ly,
    "stability": _run_stability,
    "response": _run_response,
    "keller": _run_keller,
    "clt": _run_clt,
    "solenoid": _run_solenoid,
}


def _validate(command, cfg):
    schema = SCHEMAS[command]
    if jsonschema is None:
        return
    validator = jsonschema.Draft7Validator(schema)
    errs = sorted(validator.iter_errors(cfg), key=lambda e: list(e.path))
    if errs:
        e = errs[0]
        path = ".".join(str(p) for p in e.path) or "<root>"
        raise errors.DomainError(f"config field {path}: {e.message}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="ergokit", description="transfer-operator experiment runner")
    parser.add_argument("command", choices=sorted(RUNNERS))
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--threads", type=int, default=1, help="worker cap")
    args = parser.parse_args(argv)

    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        _validate(args.command, cfg)
    except errors.DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out if args.out is not None else cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))

    try:
        results, artifacts = RUNNERS[args.command](cfg, out, seed, max(1, args.threads))
    except (errors.DomainError, errors.ConvergenceError, errors.RootFindingError,
            errors.NoUniformLyError, errors.GridMismatchError) as exc:
        diag = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("residual", "iterations", "branch"):
            if getattr(exc, attr, None) is not None:
                diag[attr] = getattr(exc, attr)
        print(json.dumps(diag, sort_keys=True), file=sys.stderr)
        return 3

    _write_summary(out, args.command, cfg, seed, results, artifacts)
    print(f"wrote {out / 'summary.json'}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
