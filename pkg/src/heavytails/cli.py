"""Command line front end.

Commands build models from YAML or JSON configs (or small inline tokens),
run the matching library operation, and write CSV or structured records.
Every run echoes its resolved config into the output header so the exact
run can be reproduced later, and exit codes are scriptable: 0 for
consistent or complete, 2 when any verdict came back inconsistent, 64 for
usage and schema problems, 1 for unexpected failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np
import yaml

from . import convolution as conv
from . import diagnostics as diag
from . import experiments as ex
from . import montecarlo as mc
from . import risk as risk_mod
from .copulas import Comonotone, DependentModel, FGM, Independence
from .counting import Deterministic, Geometric1, Poisson, Zeta
from .distributions import (DiscreteAtoms, Exponential, GeometricAtomMixture,
                            IntegratedTail, Lognormal, Pareto, ShiftedBy,
                            Weibull)
from .errors import ConfigError, HeavyTailsError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONSISTENT = 2
EXIT_USAGE = 64

CSV_COLUMNS = ("experiment_id", "x", "numerator", "stderr", "denominator",
               "ratio", "ci_low", "ci_high", "running_min")


# ----------------------------------------------------------------- config --

def _expect_mapping(cfg, context: str) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError(f"{context}: expected a mapping, got "
                          f"{type(cfg).__name__}")
    return dict(cfg)


def _take(cfg, context: str, required=(), optional=None) -> dict:
    """Pop declared fields; anything left over is a schema error."""
    cfg = _expect_mapping(cfg, context)
    out = {}
    for key in required:
        if key not in cfg:
            raise ConfigError(f"{context}: missing field {key!r}")
        out[key] = cfg.pop(key)
    for key, default in (optional or {}).items():
        out[key] = cfg.pop(key, default)
    if cfg:
        raise ConfigError(f"{context}: unknown fields {sorted(cfg)}")
    return out


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path!r}: {err}")
    try:
        data = json.loads(text)
    except ValueError:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as err:
            raise ConfigError(f"config {path!r} is neither JSON nor YAML: "
                              f"{err}")
    return _expect_mapping(data, f"config {path!r}")


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"),
                      default=_json_fallback)


def _json_fallback(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


# ----------------------------------------------------------------- builders --

def build_marginal(cfg, context="marginal"):
    cfg = _expect_mapping(cfg, context)
    family = cfg.get("family")
    if not isinstance(family, str):
        raise ConfigError(f"{context}: needs a string 'family' field")
    try:
        if family == "pareto":
            f = _take(cfg, context, ("family", "alpha"), {"scale": 1.0})
            return Pareto(float(f["alpha"]), float(f["scale"]))
        if family == "weibull":
            f = _take(cfg, context, ("family", "shape"), {"scale": 1.0})
            return Weibull(float(f["shape"]), float(f["scale"]))
        if family == "lognormal":
            f = _take(cfg, context, ("family",), {"mu": 0.0, "sigma": 1.0})
            return Lognormal(float(f["mu"]), float(f["sigma"]))
        if family == "exponential":
            f = _take(cfg, context, ("family",), {"rate": 1.0})
            return Exponential(float(f["rate"]))
        if family == "example11":
            f = _take(cfg, context, ("family",), {"q": 0.5})
            return GeometricAtomMixture(q=float(f["q"]))
        if family == "atoms":
            f = _take(cfg, context, ("family", "atoms"))
            atoms = tuple((float(l), float(m)) for l, m in f["atoms"])
            return DiscreteAtoms(atoms)
        if family == "shifted":
            f = _take(cfg, context, ("family", "base", "offset"))
            return ShiftedBy(build_marginal(f["base"], context + ".base"),
                             float(f["offset"]))
        if family == "integrated_tail":
            f = _take(cfg, context, ("family", "base"))
            return IntegratedTail(build_marginal(f["base"],
                                                 context + ".base"))
    except ConfigError:
        raise
    except (HeavyTailsError, TypeError, ValueError) as err:
        raise ConfigError(f"{context}: {err}")
    raise ConfigError(f"{context}: unknown family {family!r}")


def build_copula(cfg, context="copula"):
    cfg = _expect_mapping(cfg, context)
    family = cfg.get("family")
    try:
        if family == "fgm":
            f = _take(cfg, context, ("family", "coeffs"), {"dim": 2})
            coeffs = f["coeffs"]
            if isinstance(coeffs, (int, float)):
                coeffs = [coeffs]
            return FGM(int(f["dim"]), tuple(float(a) for a in coeffs))
        if family == "independence":
            f = _take(cfg, context, ("family",), {"dim": 2})
            return Independence(int(f["dim"]))
        if family == "comonotone":
            f = _take(cfg, context, ("family",), {"dim": 2})
            return Comonotone(int(f["dim"]))
    except ConfigError:
        raise
    except (HeavyTailsError, TypeError, ValueError) as err:
        raise ConfigError(f"{context}: {err}")
    raise ConfigError(f"{context}: unknown family {family!r}")


def build_counting(cfg, context="tau"):
    cfg = _expect_mapping(cfg, context)
    family = cfg.get("family")
    try:
        if family == "poisson":
            f = _take(cfg, context, ("family", "mean"))
            return Poisson(float(f["mean"]))
        if family == "geometric1":
            f = _take(cfg, context, ("family", "p"))
            return Geometric1(float(f["p"]))
        if family == "zeta":
            f = _take(cfg, context, ("family", "s"))
            return Zeta(float(f["s"]))
        if family == "deterministic":
            f = _take(cfg, context, ("family", "n"))
            return Deterministic(int(f["n"]))
    except ConfigError:
        raise
    except (HeavyTailsError, TypeError, ValueError) as err:
        raise ConfigError(f"{context}: {err}")
    raise ConfigError(f"{context}: unknown family {family!r}")


def build_model(cfg, context="model"):
    f = _take(cfg, context, ("copula", "marginals"), {"tau": None})
    copula = build_copula(f["copula"], context + ".copula")
    if not isinstance(f["marginals"], (list, tuple)) or not f["marginals"]:
        raise ConfigError(f"{context}.marginals: expected a nonempty list")
    marginals = tuple(build_marginal(m, f"{context}.marginals[{i}]")
                      for i, m in enumerate(f["marginals"]))
    tau = None if f["tau"] is None else build_counting(f["tau"],
                                                       context + ".tau")
    try:
        return DependentModel(copula, marginals, tau=tau)
    except (HeavyTailsError, TypeError, ValueError) as err:
        raise ConfigError(f"{context}: {err}")


def build_denominator(cfg, context="denominator"):
    f = _take(cfg, context, ("kind",), {"n": None, "rate": None})
    kwargs = {}
    if f["n"] is not None:
        kwargs["n"] = int(f["n"])
    if f["rate"] is not None:
        kwargs["rate"] = float(f["rate"])
    try:
        return ex.Denominator(str(f["kind"]), **kwargs)
    except (HeavyTailsError, TypeError, ValueError) as err:
        raise ConfigError(f"{context}: {err}")


def build_grid(cfg, context="grid"):
    """None passes through (caller default); mapping or list build arrays."""
    if cfg is None:
        return None
    if isinstance(cfg, dict):
        f = _take(cfg, context, ("lo", "hi"), {"points": 24})
        lo, hi, n = float(f["lo"]), float(f["hi"]), int(f["points"])
        if not (0 < lo < hi) or n < 1:
            raise ConfigError(f"{context}: need 0 < lo < hi and points >= 1")
        return np.geomspace(lo, hi, n)
    if isinstance(cfg, (list, tuple)):
        xs = np.asarray([float(v) for v in cfg])
        if len(xs) == 0 or np.any(np.diff(xs) <= 0):
            raise ConfigError(f"{context}: explicit grid must be strictly "
                              f"increasing and nonempty")
        return xs
    raise ConfigError(f"{context}: expected a mapping with lo/hi or a list")


_DIST_TOKENS = {
    "pareto": (("alpha",), {"scale": 1.0}),
    "weibull": (("shape",), {"scale": 1.0}),
    "exponential": ((), {"rate": 1.0}),
    "lognormal": ((), {"mu": 0.0, "sigma": 1.0}),
    "example11": ((), {}),
}


def parse_dist_token(token: str) -> dict:
    """Turn 'pareto(1.5,1)' or 'example11' into a marginal config mapping."""
    token = token.strip()
    if "(" in token:
        family, rest = token.split("(", 1)
        if not rest.endswith(")"):
            raise ConfigError(f"distribution token {token!r}: missing ')'")
        args = [float(v) for v in rest[:-1].split(",") if v.strip()]
    else:
        family, args = token, []
    family = family.strip().lower()
    if family not in _DIST_TOKENS:
        raise ConfigError(f"unknown distribution token {family!r}; have "
                          f"{sorted(_DIST_TOKENS)}")
    required, defaults = _DIST_TOKENS[family]
    names = list(required) + list(defaults)
    if len(args) < len(required) or len(args) > len(names):
        raise ConfigError(f"{family} takes {len(required)}..{len(names)} "
                          f"arguments, got {len(args)}")
    cfg = {"family": family}
    cfg.update(defaults)
    for name, value in zip(names, args):
        cfg[name] = value
    return cfg


_MODEL_TOKENS = {
    "comonotone-pareto": {
        "copula": {"family": "comonotone", "dim": 2},
        "marginals": [{"family": "pareto", "alpha": 1.0, "scale": 1.0}] * 2},
    "independence-pareto": {
        "copula": {"family": "independence", "dim": 2},
        "marginals": [{"family": "pareto", "alpha": 1.0, "scale": 1.0}] * 2},
    "fgm-pareto": {
        "copula": {"family": "fgm", "dim": 2, "coeffs": [1.0]},
        "marginals": [{"family": "pareto", "alpha": 1.0, "scale": 1.0}] * 2},
}


# ----------------------------------------------------------------- output --

def _fmt(value) -> str:
    return repr(float(value))


def _curves_csv(curves, config_line: str) -> str:
    lines = [f"# config={config_line}", ",".join(CSV_COLUMNS)]
    for curve in curves:
        for p in curve.points:
            lines.append(",".join((
                curve.experiment_id, _fmt(p.x), _fmt(p.numerator),
                _fmt(p.stderr), _fmt(p.denominator), _fmt(p.ratio),
                _fmt(p.ci_low), _fmt(p.ci_high), _fmt(p.running_min))))
    return "\n".join(lines) + "\n"


def _finite_or_str(value: float):
    return float(value) if math.isfinite(value) else str(value)


def _curve_record(curve) -> dict:
    return {
        "experiment_id": curve.experiment_id,
        "quantity": curve.quantity,
        "denominator": curve.denominator,
        "semantics": curve.semantics,
        "predicted_limit": _finite_or_str(curve.predicted_limit),
        "tolerance": curve.tolerance,
        "verdict": curve.verdict,
        "running_min": curve.running_min,
        "samples": curve.samples,
        "seed": curve.seed,
        "notes": list(curve.notes),
        "points": [{
            "x": p.x, "numerator": p.numerator, "stderr": p.stderr,
            "denominator": p.denominator, "ratio": p.ratio,
            "ci_low": p.ci_low, "ci_high": p.ci_high,
            "running_min": p.running_min} for p in curve.points],
    }


def _curves_records(curves, config: dict) -> str:
    payload = {"config": config,
               "results": [_curve_record(c) for c in curves]}
    return json.dumps(payload, indent=2, sort_keys=True,
                      default=_json_fallback) + "\n"


def _emit(text: str, out: str):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_curves(curves, config: dict, args) -> int:
    config_line = canonical_json(config)
    if args.format == "records":
        text = _curves_records(curves, config)
    else:
        text = _curves_csv(curves, config_line)
    _emit(text, args.out)
    if args.out:
        for c in curves:
            print(f"{c.experiment_id}: {c.verdict} "
                  f"(running min {c.running_min:.6g})")
    if any(c.verdict == "inconsistent" for c in curves):
        return EXIT_INCONSISTENT
    return EXIT_OK


def _report_rows(reports) -> list:
    rows = []
    for name, rep in reports:
        if isinstance(rep, str):    # check could not run; rep is the reason
            rows.append({"check": name, "verdict": "unavailable",
                         "end_statistic": math.nan, "target": None,
                         "tolerance": math.nan, "running_min": None,
                         "notes": [rep]})
            continue
        end = float(rep.statistics[-1]) if len(rep.statistics) else math.nan
        target = rep.target_value
        rows.append({
            "check": name,
            "verdict": rep.verdict,
            "end_statistic": end,
            "target": None if target is None else float(target),
            "tolerance": rep.tolerance,
            "running_min": rep.running_min,
            "notes": list(rep.notes),
        })
    return rows


def _write_reports(reports, config: dict, args) -> int:
    rows = _report_rows(reports)
    if args.format == "records":
        text = json.dumps({"config": config, "results": rows}, indent=2,
                          sort_keys=True, default=_json_fallback) + "\n"
    else:
        lines = [f"# config={canonical_json(config)}",
                 "check,verdict,end_statistic,target,tolerance"]
        for row in rows:
            target = "" if row["target"] is None else _fmt(row["target"])
            lines.append(",".join((
                row["check"], row["verdict"], _fmt(row["end_statistic"]),
                target, _fmt(row["tolerance"]))))
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    if args.out:
        for row in rows:
            print(f"{row['check']}: {row['verdict']}")
    if any(row["verdict"] == "inconsistent" for row in rows):
        return EXIT_INCONSISTENT
    return EXIT_OK


# ----------------------------------------------------------------- commands --

def _resolve(args, config: dict, key: str, default):
    """Flag beats config beats default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if config.get(key) is not None:
        return config[key]
    return default


def cmd_ratio_curve(args) -> int:
    if not args.config:
        raise ConfigError("ratio-curve needs --config")
    raw = load_config(args.config)
    f = _take(raw, "ratio-curve config",
              ("model", "quantity", "denominator"),
              {"grid": None, "samples": None, "seed": None,
               "predicted": 1.0, "semantics": "lim", "tolerance": 0.05,
               "experiment_id": "custom", "numerator": "auto",
               "divergence_bound": 10.0, "weights": None})
    model = build_model(f["model"])
    denominator = build_denominator(f["denominator"])
    grid = build_grid(f["grid"])
    samples = int(_resolve(args, f, "samples", 1_000_000))
    seed = int(_resolve(args, f, "seed", 0))
    weights = None if f["weights"] is None else [float(w)
                                                 for w in f["weights"]]
    try:
        curve = ex.run_experiment(
            model, str(f["quantity"]), denominator, x_grid=grid,
            samples=samples, seed=seed, workers=args.workers,
            predicted=float(f["predicted"]), semantics=str(f["semantics"]),
            tolerance=float(f["tolerance"]),
            experiment_id=str(f["experiment_id"]),
            numerator=str(f["numerator"]),
            divergence_bound=float(f["divergence_bound"]),
            weights=weights)
    except HeavyTailsError as err:
        raise ConfigError(f"ratio-curve: {err}")
    echo = {"model": f["model"], "quantity": f["quantity"],
            "denominator": f["denominator"], "grid": f["grid"],
            "samples": samples, "seed": seed, "predicted": f["predicted"],
            "semantics": f["semantics"], "tolerance": f["tolerance"],
            "experiment_id": f["experiment_id"],
            "numerator": f["numerator"],
            "divergence_bound": f["divergence_bound"],
            "weights": f["weights"]}
    return _write_curves([curve], echo, args)


def _all_preset_ids() -> list:
    return list(ex.PRESETS) + list(risk_mod.RISK_PRESETS)


def cmd_theorem(args) -> int:
    config = load_config(args.config) if args.config else {}
    f = _take(config, "theorem config", (),
              {"theorem_id": None, "model": None, "samples": None,
               "seed": None, "grid": None})
    tid = args.id or f["theorem_id"]
    if not tid:
        raise ConfigError("theorem needs --id or a theorem_id config field")
    if args.preset not in (None, "default"):
        raise ConfigError(f"unknown preset variant {args.preset!r}; "
                          f"only 'default' exists")
    seed = int(_resolve(args, f, "seed", 0))
    samples = _resolve(args, f, "samples", None)
    samples = None if samples is None else int(samples)
    grid = build_grid(f["grid"])
    if tid in ex.PRESETS:
        model = build_model(f["model"]) if f["model"] is not None else None
        curves = ex.theorem_suite(tid, model=model, samples=samples,
                                  seed=seed, workers=args.workers,
                                  x_grid=grid)
        resolved_samples = (samples if samples is not None
                            else ex.PRESETS[tid].samples)
    elif tid in risk_mod.RISK_PRESETS:
        if f["model"] is not None:
            raise ConfigError(f"preset {tid} does not take a custom model; "
                              f"use the ruin command with a config")
        curve = risk_mod.RISK_PRESETS[tid].run(samples=samples, seed=seed,
                                               workers=args.workers,
                                               x_grid=grid)
        curves = [curve]
        resolved_samples = curve.samples
    else:
        raise ConfigError(f"unknown theorem id {tid!r}; have "
                          f"{_all_preset_ids()}")
    echo = {"theorem_id": tid, "model": f["model"],
            "samples": resolved_samples, "seed": seed, "grid": f["grid"]}
    return _write_curves(curves, echo, args)


_MIXTURE_ATOM_GRID = tuple(float(2 ** (n + 1)) - 1.5 for n in range(1, 11))


def _class_default_grid(dist, check: str):
    if isinstance(dist, (GeometricAtomMixture, DiscreteAtoms)):
        if check in ("L", "D"):
            return np.asarray(_MIXTURE_ATOM_GRID)
        return np.geomspace(1.0, 2047.0, 24)
    return None


_CLASS_CHECKS = ("L", "D", "S", "Sstar", "SstarStrong")


def _run_class_check(dist, check: str, grid):
    if check == "L":
        return diag.long_tail(dist, grid=grid)
    if check == "D":
        return diag.dominated(dist, grid=grid)
    if check == "S":
        return diag.subexponential(dist, grid=grid)
    if check == "Sstar":
        return diag.sstar(dist, grid=grid)
    return diag.strong_subexponential(dist, grid=grid)


def cmd_diagnose_class(args) -> int:
    if args.config:
        raw = load_config(args.config)
        f = _take(raw, "diagnose-class config", ("dist",),
                  {"checks": None, "grid": None})
        dist_cfg = (parse_dist_token(f["dist"])
                    if isinstance(f["dist"], str) else f["dist"])
        checks = f["checks"]
        grid_cfg = f["grid"]
    elif args.dist:
        dist_cfg = parse_dist_token(args.dist)
        checks = None
        grid_cfg = None
    else:
        raise ConfigError("diagnose-class needs --dist or --config")
    if args.check:
        checks = args.check
    checks = list(_CLASS_CHECKS) if checks in (None, "all") else (
        checks.split(",") if isinstance(checks, str) else list(checks))
    for c in checks:
        if c not in _CLASS_CHECKS:
            raise ConfigError(f"unknown class check {c!r}; have "
                              f"{_CLASS_CHECKS} or 'all'")
    if args.grid:
        grid_cfg = _parse_grid_flag(args.grid)
    dist = build_marginal(dist_cfg, "dist")
    grid = build_grid(grid_cfg)
    reports = []
    for check in checks:
        use = grid if grid is not None else _class_default_grid(dist, check)
        try:
            reports.append((check, _run_class_check(dist, check, use)))
        except HeavyTailsError as err:
            reports.append((check, str(err)))
    echo = {"dist": dist_cfg, "checks": checks, "grid": grid_cfg}
    return _write_reports(reports, echo, args)


def _parse_grid_flag(text: str):
    text = text.strip()
    if text == "auto":
        return None
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("--grid takes lo:hi:n or x1,x2,...")
        return {"lo": float(parts[0]), "hi": float(parts[1]),
                "points": int(parts[2])}
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_diagnose_dependence(args) -> int:
    if args.config:
        raw = load_config(args.config)
        f = _take(raw, "diagnose-dependence config", ("model",),
                  {"checks": None, "pair": (0, 1)})
        model_cfg = (dict(_MODEL_TOKENS[f["model"]])
                     if isinstance(f["model"], str)
                     and f["model"] in _MODEL_TOKENS else f["model"])
        checks = f["checks"]
        pair = tuple(int(i) for i in f["pair"])
    elif args.model:
        if args.model not in _MODEL_TOKENS:
            raise ConfigError(f"unknown model token {args.model!r}; have "
                              f"{sorted(_MODEL_TOKENS)}")
        model_cfg = dict(_MODEL_TOKENS[args.model])
        checks = None
        pair = (0, 1)
    else:
        raise ConfigError("diagnose-dependence needs --model or --config")
    if args.check:
        checks = args.check
    checks = ["H1", "H2"] if checks in (None, "both") else (
        checks.split(",") if isinstance(checks, str) else list(checks))
    for c in checks:
        if c not in ("H1", "H2"):
            raise ConfigError(f"unknown dependence check {c!r}; "
                              f"have H1, H2, or both")
    model = build_model(model_cfg)
    reports = []
    for check in checks:
        fn = diag.h1_report if check == "H1" else diag.h2_report
        reports.append((check, fn(model, pair=pair)))
    echo = {"model": model_cfg, "checks": checks, "pair": list(pair)}
    return _write_reports(reports, echo, args)


def _convolve_auto_points(dist, nfold: int):
    rep = dist.truncated_atoms(float("inf"))
    hi = float(dist.quantile(1.0 - 1e-3))
    if rep is not None:
        locs = np.asarray(rep[0], dtype=float)
        pos = locs[locs > 0]
        lo = float(2 * pos[0]) if len(pos) else 1.0
        return {"lo": min(lo, hi / 4), "hi": max(hi, 4 * lo)}
    lo = float(dist.quantile(0.9))
    return {"lo": max(lo, 1e-9), "hi": max(hi, lo * 4), "points": 16}


def cmd_convolve(args) -> int:
    if args.config:
        raw = load_config(args.config)
        f = _take(raw, "convolve config", ("dist",),
                  {"nfold": 2, "points": "auto"})
        dist_cfg = (parse_dist_token(f["dist"])
                    if isinstance(f["dist"], str) else f["dist"])
        nfold = int(f["nfold"])
        points = f["points"]
    elif args.dist:
        dist_cfg = parse_dist_token(args.dist)
        nfold = args.nfold
        points = args.points
    else:
        raise ConfigError("convolve needs --dist or --config")
    if nfold < 2:
        raise ConfigError("nfold must be at least 2")
    dist = build_marginal(dist_cfg, "dist")
    if isinstance(points, str) and points != "auto":
        points = _parse_grid_flag(points)
    echo = {"dist": dist_cfg, "nfold": nfold, "points": points}

    atomic = (hasattr(dist, "truncated_atoms")
              and dist.truncated_atoms(float("inf")) is not None)
    try:
        if atomic and nfold == 2:
            if points == "auto":
                rng = _convolve_auto_points(dist, nfold)
                curve = conv.exact_twofold_ratio_curve(dist, lo=rng["lo"],
                                                       hi=rng["hi"])
            elif isinstance(points, dict):
                curve = conv.exact_twofold_ratio_curve(
                    dist, lo=float(points["lo"]), hi=float(points["hi"]))
            else:
                curve = conv.exact_twofold_ratio_curve(
                    dist, x_points=np.asarray(points, dtype=float))
            rows = [(x, n, n, d, r, r, m) for x, n, d, r, m
                    in zip(curve.xs, curve.numerators, curve.denominators,
                           curve.ratios, curve.running_min)]
        else:
            grid = build_grid(points if points != "auto"
                              else _convolve_auto_points(dist, nfold))
            brackets = conv.nfold_tail_bracket(dist, nfold, grid)
            tails = np.array([float(dist.tail(x)) for x in grid])
            if np.any(tails <= 0):
                raise ConfigError("single tail vanishes on the grid; "
                                  "shorten it")
            lo_r = np.array([b.lower for b in brackets]) / tails
            hi_r = np.array([b.upper for b in brackets]) / tails
            mid = np.array([b.midpoint for b in brackets]) / tails
            run = np.minimum.accumulate(mid)
            rows = [(x, b.lower, b.upper, t, lr, hr, m)
                    for x, b, t, lr, hr, m
                    in zip(grid, brackets, tails, lo_r, hi_r, run)]
    except HeavyTailsError as err:
        raise ConfigError(f"convolve: {err}")

    if args.format == "records":
        payload = {"config": echo, "results": [
            {"x": float(x), "lower": float(lo), "upper": float(hi),
             "single_tail": float(t), "ratio_low": float(lr),
             "ratio_high": float(hr), "running_min": float(m)}
            for x, lo, hi, t, lr, hr, m in rows]}
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        lines = [f"# config={canonical_json(echo)}",
                 "x,lower,upper,single_tail,ratio_low,ratio_high,"
                 "running_min"]
        for x, lo, hi, t, lr, hr, m in rows:
            lines.append(",".join(map(_fmt, (x, lo, hi, t, lr, hr, m))))
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    if args.out:
        print(f"convolve: {len(rows)} points, "
              f"running min {float(rows[-1][-1]):.6g}")
    return EXIT_OK


def _build_risk(config: dict, context="ruin config"):
    kind = config.get("risk")
    if kind == "discrete":
        f = _take(config, context, ("risk", "claims"),
                  {"rate": 0.0, "grid": None, "samples": None, "seed": None,
                   "tolerance": 0.15})
        claims = build_model(f["claims"], context + ".claims")
        try:
            model = risk_mod.DiscreteRiskModel(claims, rate=float(f["rate"]))
        except (HeavyTailsError, TypeError, ValueError) as err:
            raise ConfigError(f"{context}: {err}")
        return model, f
    if kind == "arrival":
        f = _take(config, context,
                  ("risk", "claim_size", "loading", "intensity", "horizon"),
                  {"grid": None, "samples": None, "seed": None,
                   "tolerance": 0.15})
        claim = build_marginal(f["claim_size"], context + ".claim_size")
        try:
            model = risk_mod.ArrivalRiskModel(
                claim, loading=float(f["loading"]),
                intensity=float(f["intensity"]),
                horizon=float(f["horizon"]))
        except (HeavyTailsError, TypeError, ValueError) as err:
            raise ConfigError(f"{context}: {err}")
        return model, f
    raise ConfigError(f"{context}: 'risk' must be 'discrete' or 'arrival'")


def cmd_ruin(args) -> int:
    if args.preset:
        if args.preset not in risk_mod.RISK_PRESETS:
            raise ConfigError(f"unknown ruin preset {args.preset!r}; have "
                              f"{sorted(risk_mod.RISK_PRESETS)}")
        preset = risk_mod.RISK_PRESETS[args.preset]
        seed = int(args.seed if args.seed is not None else 0)
        curve = preset.run(samples=args.samples, seed=seed,
                           workers=args.workers)
        echo = {"preset": args.preset, "samples": curve.samples,
                "seed": seed}
        return _write_curves([curve], echo, args)
    if not args.config:
        raise ConfigError("ruin needs --preset or --config")
    raw = load_config(args.config)
    if "preset" in raw:
        f = _take(raw, "ruin config", ("preset",),
                  {"samples": None, "seed": None})
        if f["preset"] not in risk_mod.RISK_PRESETS:
            raise ConfigError(f"unknown ruin preset {f['preset']!r}")
        preset = risk_mod.RISK_PRESETS[f["preset"]]
        seed = int(_resolve(args, f, "seed", 0))
        samples = _resolve(args, f, "samples", None)
        curve = preset.run(samples=None if samples is None else int(samples),
                           seed=seed, workers=args.workers)
        echo = {"preset": f["preset"], "samples": curve.samples,
                "seed": seed}
        return _write_curves([curve], echo, args)
    model, f = _build_risk(raw)
    seed = int(_resolve(args, f, "seed", 0))
    samples = int(_resolve(args, f, "samples", 1_000_000))
    grid = build_grid(f["grid"])
    try:
        curve = model.ruin_curve(x_grid=grid, samples=samples, seed=seed,
                                 workers=args.workers,
                                 tolerance=float(f["tolerance"]))
    except HeavyTailsError as err:
        raise ConfigError(f"ruin: {err}")
    echo = {k: v for k, v in f.items() if k not in ("samples", "seed")}
    echo.update({"samples": samples, "seed": seed})
    return _write_curves([curve], echo, args)


def cmd_surplus_path(args) -> int:
    if not args.config:
        raise ConfigError("surplus-path needs --config")
    raw = load_config(args.config)
    model, f = _build_risk(raw, context="surplus-path config")
    if not isinstance(model, risk_mod.DiscreteRiskModel):
        raise ConfigError("surplus-path only applies to the discrete model")
    if args.surplus is None:
        raise ConfigError("surplus-path needs --surplus")
    seed = int(_resolve(args, f, "seed", 0))
    try:
        path = model.surplus_path(args.surplus, seed=seed,
                                  replicate=args.replicate)
    except HeavyTailsError as err:
        raise ConfigError(f"surplus-path: {err}")
    echo = {k: v for k, v in f.items()
            if k not in ("samples", "seed", "grid", "tolerance")}
    echo.update({"seed": seed, "surplus": float(args.surplus),
                 "replicate": args.replicate})
    if args.format == "records":
        text = json.dumps({"config": echo,
                           "results": [{"period": k, "surplus": u}
                                       for k, u in path]},
                          indent=2, sort_keys=True) + "\n"
    else:
        lines = [f"# config={canonical_json(echo)}", "period,surplus"]
        lines += [f"{k},{_fmt(u)}" for k, u in path]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    ruined = min(u for _, u in path) < 0
    if args.out:
        print(f"surplus-path: {'ruined' if ruined else 'survived'}")
    return EXIT_OK


def cmd_list_presets(args) -> int:
    rows = [(tid, p.description) for tid, p in ex.PRESETS.items()]
    rows += [(pid, p.description) for pid, p in risk_mod.RISK_PRESETS.items()]
    if args.format == "records":
        text = json.dumps({"presets": [{"id": i, "description": d}
                                       for i, d in rows]},
                          indent=2, sort_keys=True) + "\n"
    else:
        lines = ["preset_id,description"]
        lines += [f"{i},\"{d}\"" for i, d in rows]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def _validate_warnings(raw: dict) -> list:
    """Hypothesis-level advisories for a config that already parsed."""
    warnings = []
    if "theorem_id" in raw:
        f = _take(dict(raw), "theorem config", (),
                  {"theorem_id": None, "model": None, "samples": None,
                   "seed": None, "grid": None})
        tid = f["theorem_id"]
        if tid not in ex.PRESETS and tid not in risk_mod.RISK_PRESETS:
            raise ConfigError(f"unknown theorem id {tid!r}")
        if f["model"] is not None and tid in ex.PRESETS:
            model = build_model(f["model"])
            for issue in ex.PRESETS[tid].hypothesis_issues(model):
                warnings.append(f"{tid} hypotheses unverified: {issue}")
        build_grid(f["grid"])
        return warnings
    if "risk" in raw or "preset" in raw:
        if "preset" in raw:
            f = _take(dict(raw), "ruin config", ("preset",),
                      {"samples": None, "seed": None})
            if f["preset"] not in risk_mod.RISK_PRESETS:
                raise ConfigError(f"unknown ruin preset {f['preset']!r}")
        else:
            _build_risk(dict(raw))
        return warnings
    if "model" in raw and "quantity" in raw:
        f = _take(dict(raw), "ratio-curve config",
                  ("model", "quantity", "denominator"),
                  {"grid": None, "samples": None, "seed": None,
                   "predicted": 1.0, "semantics": "lim", "tolerance": 0.05,
                   "experiment_id": "custom", "numerator": "auto",
                   "divergence_bound": 10.0, "weights": None})
        model = build_model(f["model"])
        mc.parse_quantity(str(f["quantity"]))
        build_denominator(f["denominator"])
        build_grid(f["grid"])
        if (model.tau is not None and not math.isfinite(model.tau.mean())
                and f["semantics"] != "divergence"):
            warnings.append(
                "the counting law has infinite mean but the experiment "
                "uses '%s' semantics; ratios against any finite "
                "denominator diverge, switch to divergence semantics"
                % f["semantics"])
        return warnings
    if "dist" in raw:
        f = _take(dict(raw), "diagnose-class config", ("dist",),
                  {"checks": None, "grid": None})
        cfg = (parse_dist_token(f["dist"]) if isinstance(f["dist"], str)
               else f["dist"])
        build_marginal(cfg, "dist")
        build_grid(f["grid"])
        return warnings
    raise ConfigError("cannot tell what this config drives: expected "
                      "theorem_id, risk/preset, model+quantity, or dist")


def cmd_validate(args) -> int:
    if not args.config:
        raise ConfigError("validate needs --config")
    raw = load_config(args.config)
    warnings = _validate_warnings(raw)
    for w in warnings:
        print(f"warning: {w}")
    print(f"{args.config}: ok" + (f" ({len(warnings)} warning"
                                  f"{'s' if len(warnings) != 1 else ''})"
                                  if warnings else ""))
    return EXIT_OK


# ----------------------------------------------------------------- parser --

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(sub, seed=True, samples=True, workers=True):
    sub.add_argument("--out", help="write the table here instead of stdout")
    sub.add_argument("--format", choices=("csv", "records"), default="csv")
    if seed:
        sub.add_argument("--seed", type=int, default=None,
                         help="overrides the config seed (default 0)")
    if samples:
        sub.add_argument("--samples", type=int, default=None)
    if workers:
        sub.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="heavytails",
        description="Tail ratio experiments for dependent heavy-tailed "
                    "sums, maxima, and ruin probabilities.",
        epilog="exit status: 0 unless a verdict is inconsistent (2); "
               "64 on usage or config errors, 1 on unexpected failure. "
               "Inconclusive verdicts exit 0; read them from the output.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("ratio-curve",
                        help="run one configured ratio experiment")
    p.add_argument("--config", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_ratio_curve)

    p = subs.add_parser("theorem", help="run a named preset experiment")
    p.add_argument("--id", help="preset id, e.g. T4.1 or C5.2")
    p.add_argument("--preset", help="preset variant (only 'default')")
    p.add_argument("--config",
                   help="optional config with theorem_id/model overrides")
    _add_common(p)
    p.set_defaults(fn=cmd_theorem)

    p = subs.add_parser("diagnose-class",
                        help="closed-form heavy-tail class checks")
    p.add_argument("--dist", help="e.g. pareto(1.5,1) or example11")
    p.add_argument("--config")
    p.add_argument("--check",
                   help="comma list from L,D,S,Sstar,SstarStrong or 'all'")
    p.add_argument("--grid", help="lo:hi:n, x1,x2,..., or auto")
    _add_common(p, seed=False, samples=False, workers=False)
    p.set_defaults(fn=cmd_diagnose_class)

    p = subs.add_parser("diagnose-dependence",
                        help="tail-dependence hypothesis checks")
    p.add_argument("--model",
                   help="token: " + ", ".join(sorted(_MODEL_TOKENS)))
    p.add_argument("--config")
    p.add_argument("--check", help="H1, H2, or both")
    _add_common(p, seed=False, samples=False, workers=False)
    p.set_defaults(fn=cmd_diagnose_dependence)

    p = subs.add_parser("convolve",
                        help="n-fold tail against the single tail")
    p.add_argument("--dist", help="e.g. example11 or pareto(1,1)")
    p.add_argument("--config")
    p.add_argument("--nfold", type=int, default=2)
    p.add_argument("--points", default="auto",
                   help="auto, lo:hi:n, or x1,x2,...")
    _add_common(p, seed=False, samples=False, workers=False)
    p.set_defaults(fn=cmd_convolve)

    p = subs.add_parser("ruin", help="finite-horizon ruin ratio curve")
    p.add_argument("--preset", help="C5.1 or C5.2")
    p.add_argument("--config")
    _add_common(p)
    p.set_defaults(fn=cmd_ruin)

    p = subs.add_parser("surplus-path",
                        help="one simulated surplus trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--surplus", type=float)
    p.add_argument("--replicate", type=int, default=0)
    _add_common(p, samples=False, workers=False)
    p.set_defaults(fn=cmd_surplus_path)

    p = subs.add_parser("list-presets", help="catalog of named presets")
    _add_common(p, seed=False, samples=False, workers=False)
    p.set_defaults(fn=cmd_list_presets)

    p = subs.add_parser("validate",
                        help="schema and hypothesis checks for a config")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:       # --help
        return 0 if err.code in (0, None) else EXIT_USAGE
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except HeavyTailsError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:        # noqa: BLE001 - last-resort boundary
        print(f"internal error: {type(err).__name__}: {err}",
              file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
