"""Command line front end: classify, construct, extend, verify and demo runs.

Exit status is 0 on success, 2 when the decay hypothesis fails (an expected
negative result, not a software error) and 1 on any error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema

from . import __version__
from .classify import ClassificationError, classify
from .construct import (ConstructionError, HypothesisViolation, assemble_inner,
                        solve_correction)
from .model import build_model
from .nonlinearity import SCHEMA as NONLINEARITY_SCHEMA
from .nonlinearity import NonlinearityError, TransformF, make
from .shoot import ShootingError, extend
from .verify import (BUMPS, CSV_COLUMNS, VerificationError, _jsonable, ode_residual,
                     profile_csv, verify_profile)

log = logging.getLogger("singulib")

EXIT_OK, EXIT_ERROR, EXIT_HYPOTHESIS = 0, 1, 2
STAGES = ("classify", "construct", "extend", "verify")

DEFAULT_RUN = {
    "rho0": 50.0,
    "rho_max": 2000.0,
    "n_gauss": 8,
    "tol": 1e-8,
    "max_iter": 30,
    "r0": 0.05,
    "shoot_tol": 1e-13,
    "n_out": 1600,
    "B": None,
    "sigma_list": [0.1, 0.2],
    "eps_list": None,
    "bumps": list(BUMPS),
    "bump_fraction": 0.5,
    "expansion_window": [50.0, 2000.0],
}

_pos = {"type": "number", "exclusiveMinimum": 0}
RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "rho0": {"type": "number", "exclusiveMinimum": 1},
        "rho_max": {"type": "number", "exclusiveMinimum": 1},
        "n_gauss": {"type": "integer", "minimum": 2, "maximum": 32},
        "tol": _pos,
        "max_iter": {"type": "integer", "minimum": 1},
        "r0": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "shoot_tol": _pos,
        "n_out": {"type": "integer", "minimum": 16},
        "B": {"type": ["number", "null"], "minimum": 1},
        "sigma_list": {"type": "array", "items": _pos, "minItems": 1},
        "eps_list": {"type": ["array", "null"], "minItems": 3,
                     "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        "bumps": {"type": "array", "items": {"enum": list(BUMPS)}},
        "bump_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "expansion_window": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
    },
}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["nonlinearity"],
    "properties": {"nonlinearity": NONLINEARITY_SCHEMA, "run": RUN_SCHEMA},
}

DEMOS = {
    "example3.1": ("power_exp", {"q": 2.0, "r": 1.0}),
    "example3.2": ("sum_exp", {"q": 2.0, "r": 0.5}),
    "example3.3": ("log_exp", {"q": 2.0, "r": 1.0}),
    "example3.4": ("iter_exp", {"q": 1.0}),
}


class ConfigError(ValueError):
    pass


def _path(err) -> str:
    parts = ["config"] + [str(p) if not isinstance(p, int) else f"[{p}]"
                          for p in err.absolute_path]
    return ".".join(parts).replace(".[", "[")


def validate_config(cfg) -> None:
    """Raise ConfigError listing every violation with its path."""
    v = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errs = sorted(v.iter_errors(cfg), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errs:
        raise ConfigError("invalid config:\n" + "\n".join(f"  {_path(e)}: {e.message}"
                                                           for e in errs))


def resolve_config(raw: dict, overrides: dict | None = None) -> dict:
    """Accept a bare nonlinearity spec or {nonlinearity, run}; fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("invalid config:\n  config: must be a JSON object")
    cfg = copy.deepcopy(raw)
    if "family" in cfg:
        cfg = {"nonlinearity": cfg}
    validate_config(cfg)
    run = dict(DEFAULT_RUN)
    run.update(cfg.get("run", {}))
    for k, v in (overrides or {}).items():
        if v is not None:
            run[k] = v
    out = {"nonlinearity": cfg["nonlinearity"], "run": run}
    validate_config(out)
    if run["rho_max"] <= run["rho0"]:
        raise ConfigError("invalid config:\n  config.run.rho_max: must exceed rho0")
    return out


def load_config(path: str) -> dict:
    text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None


def dumps(doc) -> str:
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


def _profile_artifact(p, residual, fmt: str, name: str) -> tuple[str, str]:
    if fmt == "csv":
        return f"{name}.csv", profile_csv(p, residual)
    cols = {"r": p.r, "rho": p.rho, "u": p.u, "u_prime": p.u_prime, "phi": p.phi,
            "eta": p.eta, "residual": residual, "segment": list(p.segment)}
    return f"{name}.json", dumps({c: cols[c] for c in CSV_COLUMNS})


def run(stage: str, cfg: dict, fmt: str = "csv") -> tuple[int, dict, dict]:
    """Run the pipeline up to ``stage``; returns (exit status, report, artifacts).

    Artifacts map file names to text.  The report always embeds the resolved
    config and the package version.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    rc = cfg["run"]
    doc = {"version": __version__, "command": stage, "config": cfg}
    nl = make(cfg["nonlinearity"])
    t = TransformF(nl)
    rep = classify(nl, t, B=rc["B"])
    doc["classification"] = rep.to_dict()
    verdict = rep.hypothesis_verdict
    log.info("classification: B=%s (%s), verdict %s", rep.B_model, rep.B_source, verdict)
    if verdict == "fail":
        doc["status"] = "hypothesis_fail"
        return EXIT_HYPOTHESIS, doc, {}
    if stage == "classify":
        doc["status"] = "ok"
        return EXIT_OK, doc, {}

    m = build_model(rep.B_model)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        c = solve_correction(t, m, rho0=rc["rho0"], rho_max=rc["rho_max"], tol=rc["tol"],
                             max_iter=rc["max_iter"], n_gauss=rc["n_gauss"],
                             hypothesis=verdict)
    doc["correction"] = c.to_dict()
    doc["warnings"] = sorted({str(w.message) for w in caught})
    inner = assemble_inner(t, m, c)
    log.info("correction: %d iterations, norm %.3g", c.iterations, c.weighted_norm)
    arts = {}
    if stage == "construct":
        res = ode_residual(inner, nl)
        arts.update([_profile_artifact(inner, res.rel, fmt, "inner_profile")])
        doc["status"] = "ok"
        return EXIT_OK, doc, arts

    p = extend(nl, inner, r0=rc["r0"], tol=rc["shoot_tol"], n_out=rc["n_out"])
    doc["extension"] = {"R": p.R, "r0": p.r0, "n_nodes": len(p), **p.meta}
    log.info("shot: R = %.12g", p.R)
    res = ode_residual(p, nl)
    arts.update([_profile_artifact(p, res.rel, fmt, "profile")])
    if stage == "verify":
        mle = None
        if rc["eps_list"] is not None:
            mle = sorted(-math.log(e) for e in rc["eps_list"])
        vr = verify_profile(p, nl, t, m, rc["sigma_list"], mle, rc["bumps"],
                            rc["bump_fraction"], tuple(rc["expansion_window"]))
        doc["verification"] = vr.to_dict()
    doc["status"] = "ok"
    return EXIT_OK, doc, arts


def _setup_logging():
    name = os.environ.get("SINGULIB_LOG", "WARNING").strip().upper()
    level = int(name) if name.isdigit() else getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


_ERRORS = (ConfigError, NonlinearityError, ClassificationError, ConstructionError,
           ShootingError, VerificationError, OSError, ValueError, ArithmeticError)


def _execute(stage, cfg, fmt, out: Path | None, tag: str = ""):
    """Run one config; write artifacts; return (status, stdout text)."""
    try:
        status, doc, arts = run(stage, cfg, fmt)
    except HypothesisViolation as e:
        status, doc, arts = EXIT_HYPOTHESIS, {"version": __version__, "command": stage,
                                              "config": cfg, "status": "hypothesis_fail",
                                              "error": str(e)}, {}
    text = dumps(doc)
    if out is None:
        return status, text
    d = out / tag if tag else out
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.json").write_text(text, encoding="utf-8")
    for name, body in arts.items():
        # csv.writer already emits CRLF; keep the bytes as they are
        with open(d / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(body)
    summary = {"status": doc.get("status"), "dir": str(d), "files": sorted(["report.json", *arts])}
    if "extension" in doc:
        summary["R"] = doc["extension"]["R"]
    return status, json.dumps(summary, sort_keys=True) + "\n"


def _worker(args):
    stage, cfg, fmt, out, tag = args
    _setup_logging()
    try:
        return _execute(stage, cfg, fmt, Path(out) if out else None, tag)
    except _ERRORS as e:
        return EXIT_ERROR, f"error [{tag}]: {e}\n"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="singulib", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"singulib {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", action="append", required=True, metavar="PATH",
                           help="JSON config, '-' for stdin; repeat for a sweep")
        p.add_argument("--out", help="output directory (default: report to stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="profile format")
        p.add_argument("--rho0", type=float)
        p.add_argument("--rho-max", type=float, dest="rho_max")
        p.add_argument("--tol", type=float)
        p.add_argument("--r0", type=float)
        p.add_argument("--threads", type=int, default=1, help="workers for config sweeps")

    for s in STAGES:
        common(sub.add_parser(s, help=f"run the pipeline up to {s}"))
    d = sub.add_parser("demo", help="canned runs of the four example families")
    d.add_argument("example", choices=sorted(DEMOS))
    d.add_argument("--q", type=float)
    d.add_argument("--r", type=float)
    common(d, needs_config=False)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    _setup_logging()
    overrides = {"rho0": args.rho0, "rho_max": args.rho_max, "tol": args.tol, "r0": args.r0}
    try:
        if args.command == "demo":
            family, params = DEMOS[args.example]
            params = dict(params)
            if args.q is not None:
                params["q"] = args.q
            if args.r is not None:
                if "r" not in params:
                    raise ConfigError(f"{args.example} takes no --r")
                params["r"] = args.r
            raws = [("", {"family": family, **params})]
            stage = "verify"
        else:
            paths = args.config
            raws = [(Path(p).stem if len(paths) > 1 else "", load_config(p)) for p in paths]
            stage = args.command
            if len(raws) > 1 and not args.out:
                raise ConfigError("a sweep over several configs needs --out")
        cfgs = [(tag, resolve_config(raw, overrides)) for tag, raw in raws]
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR

    jobs = [(stage, cfg, args.format, args.out, tag) for tag, cfg in cfgs]
    if len(jobs) > 1 and args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = []
        for job in jobs:
            try:
                results.append(_execute(job[0], job[1], job[2],
                                        Path(job[3]) if job[3] else None, job[4]))
            except _ERRORS as e:
                log.debug("failure", exc_info=True)
                results.append((EXIT_ERROR, None))
                print(f"error: {e}", file=sys.stderr)
    for status, text in results:
        if text:
            (sys.stdout if status != EXIT_ERROR else sys.stderr).write(text)
    codes = [s for s, _ in results]
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_HYPOTHESIS if EXIT_HYPOTHESIS in codes else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
