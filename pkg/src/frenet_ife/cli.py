"""Experiment driver.

The config file holds one ``[section]`` per experiment with flat
``key = value`` lines, for example::

    [convergence]
    example = ex1-solve
    degrees = 1, 2, 3
    meshes = 8, 16, 32
    beta_minus = 1
    beta_plus = 10, 1000

Keys: ``example`` (required; one of ``EXAMPLES``), ``degrees``, ``meshes``,
``beta_minus``, ``beta_plus``, ``sigma0``, ``volume_order``, ``edge_order``,
``solver_tol``, ``problem`` (``1`` or ``2``, p-sweep only), ``epsilons``
(conditioning only) and ``timing`` (``on``/``off``; ``off`` writes zero
timings so that reruns are byte-identical).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .assembly import SIGMA0, discretize, project_l2
from .errors import ConfigError, FrenetIFEError
from .geometry import circle
from .ife_basis import conditioning_study
from .problems import example1, example1_selftest, example2, example2_curve
from .solver import assemble_and_solve, compute_error, convergence_rates

EXAMPLES = ("ex1-projection", "ex1-solve", "ex2-solve", "ex3-p-sweep", "conditioning")

DEFAULT_MESHES = {
    "ex1-projection": [20, 40, 60, 80, 100, 120],
    "ex1-solve": [20, 40, 60, 80, 100, 120],
    "ex2-solve": [10, 20, 30, 40, 50, 60],
    "ex3-p-sweep": [5],
    "conditioning": [1],
}
DEFAULT_DEGREES = {"ex3-p-sweep": [1, 2, 3, 4, 5, 6, 7, 8], "conditioning": [2, 3, 4, 5]}

RESULT_FIELDS = ["example", "m", "n", "h", "beta_minus", "beta_plus", "rel_l2_error",
                 "rel_h1_error", "dofs", "solve_seconds"]
RATE_FIELDS = ["example", "m", "beta_minus", "beta_plus", "slope", "pairwise_rates", "r2"]
COND_FIELDS = ["m", "epsilon", "cond"]


@dataclass
class ExperimentConfig:
    name: str
    example: str
    degrees: list
    meshes: list
    beta_minus: float = 1.0
    beta_plus: list = field(default_factory=lambda: [10.0])
    sigma0: float = SIGMA0
    volume_order: Optional[int] = None
    edge_order: Optional[int] = None
    solver_tol: float = 1e-10
    problem: int = 1
    epsilons: list = field(default_factory=lambda: [10.0**-k for k in range(1, 7)])
    timing: bool = True


def _list(section, key, conv, default):
    raw = section.get(key)
    if raw is None or not raw.strip():
        return list(default)
    try:
        out = [conv(tok) for tok in raw.replace(";", ",").split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: cannot parse {raw!r}") from exc
    if not out:
        raise ConfigError(f"[{section.name}] {key}: empty list")
    return out


def _scalar(section, key, conv, default):
    raw = section.get(key)
    if raw is None or not raw.strip():
        return default
    try:
        return conv(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: cannot parse {raw!r}") from exc


_KNOWN = {"example", "degrees", "meshes", "beta_minus", "beta_plus", "sigma0", "volume_order",
          "edge_order", "solver_tol", "problem", "epsilons", "timing"}


def parse_config(text: str) -> list:
    """Experiments described by ``text``, validated; raises ``ConfigError``."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from exc
    if not parser.sections():
        raise ConfigError("config has no [section]")
    out = []
    for name in parser.sections():
        sec = parser[name]
        unknown = set(sec.keys()) - _KNOWN
        if unknown:
            raise ConfigError(f"[{name}] unknown key(s): {', '.join(sorted(unknown))}")
        example = sec.get("example", "").strip()
        if example not in EXAMPLES:
            raise ConfigError(f"[{name}] example: {example!r} is not one of {', '.join(EXAMPLES)}")
        timing = _scalar(sec, "timing", str, "on").lower()
        if timing not in ("on", "off", "true", "false", "yes", "no"):
            raise ConfigError(f"[{name}] timing: expected on/off")
        cfg = ExperimentConfig(
            name=name,
            example=example,
            degrees=_list(sec, "degrees", int, DEFAULT_DEGREES.get(example, [1, 2, 3, 4])),
            meshes=_list(sec, "meshes", int, DEFAULT_MESHES[example]),
            beta_minus=_scalar(sec, "beta_minus", float, 1.0),
            beta_plus=_list(sec, "beta_plus", float, [10.0]),
            sigma0=_scalar(sec, "sigma0", float, SIGMA0),
            volume_order=_scalar(sec, "volume_order", int, None),
            edge_order=_scalar(sec, "edge_order", int, None),
            solver_tol=_scalar(sec, "solver_tol", float, 1e-10),
            problem=_scalar(sec, "problem", int, 1),
            epsilons=_list(sec, "epsilons", float, [10.0**-k for k in range(1, 7)]),
            timing=timing in ("on", "true", "yes"),
        )
        _validate(cfg)
        out.append(cfg)
    return out


def _validate(cfg: ExperimentConfig):
    where = f"[{cfg.name}]"
    if any(m < 1 for m in cfg.degrees):
        raise ConfigError(f"{where} degrees must be >= 1")
    if cfg.example == "conditioning" and any(m < 2 for m in cfg.degrees):
        raise ConfigError(f"{where} conditioning needs degrees >= 2")
    if any(n < 1 for n in cfg.meshes):
        raise ConfigError(f"{where} meshes must be >= 1")
    if cfg.beta_minus <= 0 or any(b <= 0 for b in cfg.beta_plus):
        raise ConfigError(f"{where} beta values must be positive")
    if cfg.sigma0 <= 0:
        raise ConfigError(f"{where} sigma0 must be positive")
    if cfg.problem not in (1, 2):
        raise ConfigError(f"{where} problem must be 1 or 2")
    if any(not 0 < e < 0.5 for e in cfg.epsilons):
        raise ConfigError(f"{where} epsilons must lie in (0, 1/2)")


def load_config(path: str) -> list:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# running


def _problem(cfg: ExperimentConfig, beta_plus: float):
    if cfg.example in ("ex2-solve",) or (cfg.example == "ex3-p-sweep" and cfg.problem == 2):
        return example2(cfg.beta_minus, beta_plus)
    return example1(cfg.beta_minus, beta_plus)


def run_point(cfg: ExperimentConfig, m: int, n: int, beta_plus: float) -> dict:
    """One ``(example, m, n, beta_plus)`` grid point."""
    prob = _problem(cfg, beta_plus)
    try:
        disc = discretize(prob, n, m, cfg.volume_order, cfg.edge_order)
        t0 = time.perf_counter()
        if cfg.example == "ex1-projection":
            coef = project_l2(disc)
            seconds = time.perf_counter() - t0
        else:
            system = assemble_and_solve(disc, cfg.sigma0, cfg.solver_tol)
            coef = system.solution
            seconds = system.solve_seconds
        err = compute_error(disc, coef)
    except FrenetIFEError as exc:
        raise type(exc)(f"{cfg.name}: m={m} n={n} beta+={beta_plus}: {exc}") from exc
    return {
        "example": cfg.example if cfg.example != "ex3-p-sweep" else f"ex3-p-sweep-problem{cfg.problem}",
        "m": m, "n": n, "h": disc.mesh.h, "beta_minus": cfg.beta_minus, "beta_plus": beta_plus,
        "rel_l2_error": err.rel_l2, "rel_h1_error": err.rel_h1, "dofs": disc.n_dofs,
        "solve_seconds": seconds if cfg.timing else 0.0,
    }


def _point_task(args):
    return run_point(*args)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in fields])


def rate_rows(rows) -> list:
    """Least-squares and pairwise rates per ``(example, m, beta)`` group of h-sweeps."""
    groups = {}
    for r in rows:
        groups.setdefault((r["example"], r["m"], r["beta_minus"], r["beta_plus"]), []).append(r)
    out = []
    for (ex, m, bm, bp), grp in sorted(groups.items()):
        if len({g["n"] for g in grp}) < 3:
            continue
        fit = convergence_rates([(g["h"], g["rel_l2_error"]) for g in grp])
        out.append({"example": ex, "m": m, "beta_minus": bm, "beta_plus": bp, "slope": fit.slope,
                    "pairwise_rates": ";".join(f"{p:.6f}" for p in fit.pairwise), "r2": fit.r2})
    return out


def run_experiments(configs, out_dir: str, workers: int = 1) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    results, cond = [], []
    tasks = []
    for cfg in configs:
        if cfg.example == "conditioning":
            unit = circle(1.0)
            for m in cfg.degrees:
                cond.extend(conditioning_study(unit, m, cfg.epsilons))
            continue
        if cfg.example == "ex2-solve" or (cfg.example == "ex3-p-sweep" and cfg.problem == 2):
            example2_curve()  # orientation check before any work
        for bp in cfg.beta_plus:
            for m in cfg.degrees:
                for n in cfg.meshes:
                    tasks.append((cfg, m, n, bp))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point_task, tasks))
    else:
        results = [_point_task(t) for t in tasks]
    results.sort(key=lambda r: (r["example"], r["beta_plus"], r["m"], r["n"]))
    files = {}
    if results:
        files["results"] = os.path.join(out_dir, "results.csv")
        _write_csv(files["results"], RESULT_FIELDS, results)
        rates = rate_rows(results)
        if rates:
            files["rates"] = os.path.join(out_dir, "rates.csv")
            _write_csv(files["rates"], RATE_FIELDS, rates)
    if cond:
        files["conditioning"] = os.path.join(out_dir, "conditioning.csv")
        _write_csv(files["conditioning"], COND_FIELDS,
                   [{"m": m, "epsilon": e, "cond": c} for m, e, c in sorted(cond)])
    manifest = {
        "version": __version__,
        "numpy": np.__version__,
        "experiments": [asdict(c) for c in configs],
        "outputs": {k: os.path.basename(v) for k, v in files.items()},
        "rows": len(results),
    }
    files["manifest"] = os.path.join(out_dir, "manifest.json")
    with open(files["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return files


def selftest(stream=None) -> bool:
    """Interface conditions of the exact solutions and the Example 2 orientation."""
    stream = stream or sys.stdout
    ok = True
    for bp in (10.0, 100.0, 1000.0):
        jump, flux = example1_selftest(example1(1.0, bp))
        good = jump < 1e-12 and flux < 1e-10
        ok &= good
        print(f"example1 beta+={bp:g}: value jump {jump:.2e}, flux jump {flux:.2e} "
              f"{'ok' if good else 'FAILED'}", file=stream)
    try:
        curve = example2_curve()
        print(f"example2 curve on [{curve.domain[0]:.4f}, {curve.domain[1]:.4f}] oriented ok",
              file=stream)
    except FrenetIFEError as exc:
        ok = False
        print(f"example2 orientation FAILED: {exc}", file=stream)
    return ok


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="frenet-ife", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="experiment config file")
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--serial", action="store_true", help="run grid points one at a time")
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--selftest", action="store_true", help="check the exact solutions and exit")
    args = ap.parse_args(argv)

    if args.selftest:
        return 0 if selftest() else 3
    if not args.config:
        ap.print_usage(sys.stderr)
        print("error: --config is required", file=sys.stderr)
        return 2
    try:
        configs = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return 2
    workers = 1 if args.serial else args.workers
    try:
        files = run_experiments(configs, args.out, workers)
    except (FrenetIFEError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for kind, path in files.items():
        print(f"{kind}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
