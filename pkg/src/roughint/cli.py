"""Command-line experiment driver.

Every command reads its section of the config file (see :mod:`roughint.config`),
writes CSV output under ``--out`` and is deterministic given config and seed.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.  Errors
are reported as one line ``roughint: error: <kind>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import sys
import warnings
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .config import COMMANDS, RunConfig, load_config
from .dde import InitialSegment, solve_dde
from .errors import ConfigError, NumericalFailure, RoughIntError
from .fbm import FbmSpec, check_hurst, mc_scaling_exponent, mc_validate_area, sample_fbm_path
from .fields import make_field
from .increments import Grid, Path1, read_path_csv, write_path_csv
from .lift import (
    DelayedLift,
    delayed_spans,
    export_lift,
    inject_fault,
    lift_linear,
    verify_hypotheses,
)
from .sde import picard_solve, solve_sde

DRIVERS = ("fbm", "linear", "sin", "path")
EXACT_TOL = 1e-13
KAPPA_RATIO = 0.95


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _write_rows(path: Path, header: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in header])
    return path


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


# --------------------------------------------------------------------------
# drivers and lifts
# --------------------------------------------------------------------------


def _grid_params(cfg: RunConfig, n_key: str = "n"):
    n = cfg.get_int(n_key)
    T = cfg.get_float("T")
    if n < 2:
        raise ConfigError(f"[{cfg.command}] {n_key} must be at least 2")
    if not T > 0:
        raise ConfigError(f"[{cfg.command}] T must be positive")
    return n, T


def _delays(cfg: RunConfig, h: float) -> List[float]:
    delays = cfg.get_floats("delays") if "delays" in cfg.values else []
    for r in delays:
        k = r / h
        if r <= 0 or abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise ConfigError(
                f"[{cfg.command}] delay {r} is not a positive multiple of the step {h}"
            )
    if any(b <= a for a, b in zip(delays, delays[1:])):
        raise ConfigError(f"[{cfg.command}] delays must be strictly increasing")
    return delays


def make_driver(cfg: RunConfig, n: int, T: float, lead: int = 0) -> Path1:
    """Driver on the grid ``-lead*h, ..., T`` with ``h = T / n``."""
    kind = cfg.get_str("driver") if "driver" in cfg.values else "fbm"
    d = cfg.get_int("d")
    if d < 1:
        raise ConfigError(f"[{cfg.command}] d must be at least 1")
    h = T / n
    grid = Grid(-lead * h, h, n + lead)
    if kind == "fbm":
        H = _hurst(cfg)
        if not _is_pow2(n):
            raise ConfigError(f"[{cfg.command}] n = {n} must be a power of two for sampling")
        return sample_fbm_path(FbmSpec(H, d, grid, cfg.get_int("seed")))
    if kind == "linear":
        return Path1(grid, np.repeat(grid.times[:, None], d, axis=1))
    if kind == "sin":
        return Path1(grid, np.repeat(np.sin(grid.times)[:, None], d, axis=1))
    if kind == "path":
        x = read_path_csv(cfg.get_str("path"))
        if x.grid.n != grid.n or abs(x.grid.t0 - grid.t0) > 1e-9 * h:
            raise ConfigError("the path file does not match n, T and delays")
        return x
    raise ConfigError(f"[{cfg.command}] unknown driver {kind!r}; choose from {', '.join(DRIVERS)}")


def _hurst(cfg: RunConfig) -> float:
    H = cfg.get_float("H")
    try:
        return check_hurst(H)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _gamma(cfg: RunConfig) -> float:
    if "gamma" in cfg.values:
        return cfg.get_float("gamma")
    kind = cfg.values.get("driver", "fbm")
    return _hurst(cfg) if kind == "fbm" else 1.0


def _check_exponents(cfg: RunConfig, gamma: float) -> None:
    kappa = cfg.get_float("kappa") if "kappa" in cfg.values else KAPPA_RATIO * gamma
    if not kappa < gamma or 3 * kappa + gamma <= 1:
        warnings.warn(
            f"diagnostic exponents kappa={kappa:g}, gamma={gamma:g} violate "
            "kappa < gamma and 3 kappa + gamma > 1",
            stacklevel=2,
        )


def _build_lift(cfg: RunConfig):
    n, T = _grid_params(cfg)
    h = T / n
    delays = _delays(cfg, h)
    gamma = _gamma(cfg)
    if not delays:
        return lift_linear(make_driver(cfg, n, T), gamma)
    lead = int(round(delays[-1] / h))
    x = make_driver(cfg, n, T, lead)
    return DelayedLift.build(x, delays, gamma)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_sample(cfg: RunConfig) -> List[Path]:
    n, T = _grid_params(cfg)
    H = _hurst(cfg)
    if not _is_pow2(n):
        raise ConfigError(f"[sample] n = {n} must be a power of two")
    d = cfg.get_int("d")
    if d < 1:
        raise ConfigError("[sample] d must be at least 1")
    x = sample_fbm_path(FbmSpec(H, d, Grid(0.0, T / n, n), cfg.get_int("seed")))
    out = cfg.out / "path.csv"
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_path_csv(out, x)
    return [out]


def cmd_lift(cfg: RunConfig) -> List[Path]:
    lift = _build_lift(cfg)
    x = lift.x
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "path.csv"
    write_path_csv(path, x)
    return [path] + export_lift(lift, cfg.out / "lift")


AUDIT_COLUMNS = ("identity", "family", "residual", "scale", "checks", "passed")


def cmd_validate(cfg: RunConfig, inject: bool = False) -> List[Path]:
    lift = _build_lift(cfg)
    tables = None
    if inject:
        tables = lift.spans() if not isinstance(lift, DelayedLift) else delayed_spans(lift)
        cell = cfg.get_int("fault_cell")
        if not 0 <= cell < lift.n:
            raise ConfigError(f"[validate] fault_cell must lie in [0, {lift.n})")
        inject_fault(tables, cell, cfg.get_float("fault_eps"))
    rows = verify_hypotheses(lift, tables, seed=cfg.get_int("seed"))
    out = _write_rows(cfg.out / "audit.csv", AUDIT_COLUMNS, rows)
    failed = sum(not r["passed"] for r in rows)
    print(f"{len(rows)} identity rows, {failed} above tolerance")
    return [out]


def _field(cfg: RunConfig, l: int, d: int, q: Optional[int] = None):
    return make_field(cfg.get_str("field"), l, d, q, **cfg.field_kwargs())


def cmd_solve_sde(cfg: RunConfig) -> List[Path]:
    lift = _build_lift(cfg)
    if isinstance(lift, DelayedLift):
        raise ConfigError("[solve-sde] delays are not used here; see solve-dde")
    _check_exponents(cfg, lift.gamma)
    y0 = np.array(cfg.get_floats("y0"))
    sigma = _field(cfg, len(y0), lift.d)
    method = cfg.get_str("method")
    if method == "march":
        rep = solve_sde(y0, sigma, lift)
    elif method == "picard":
        rep = picard_solve(y0, sigma, lift, cfg.get_float("tol"), cfg.get_int("max_iter"))
    else:
        raise ConfigError(f"[solve-sde] method must be march or picard, got {method!r}")
    return _write_solution(cfg, rep)


def _write_solution(cfg: RunConfig, rep) -> List[Path]:
    cfg.out.mkdir(parents=True, exist_ok=True)
    sol = cfg.out / "solution.csv"
    write_path_csv(sol, rep.y)
    report = cfg.out / "report.txt"
    report.write_text(rep.as_text())
    return [sol, report]


def cmd_solve_dde(cfg: RunConfig) -> List[Path]:
    lift = _build_lift(cfg)
    if not isinstance(lift, DelayedLift):
        raise ConfigError("[solve-dde] needs at least one delay")
    _check_exponents(cfg, lift.gamma)
    xi0 = np.array(cfg.get_floats("xi"))
    q = len(lift.delays)
    sigma = _field(cfg, len(xi0), lift.d, q)
    o = lift.origin
    xi = InitialSegment.constant(xi0, Grid(lift.grid.t0, lift.grid.h, o))
    rep = solve_dde(xi, sigma, lift)
    return _write_solution(cfg, rep)


def _exact_solution(name: str, params: dict, y0, dx):
    """Closed-form endpoint for fields whose solution depends on ``x_T - x_0`` only."""
    if name == "constant":
        sigma = make_field("constant", len(y0), len(dx), **params)
        return y0 + sigma.eval(y0) @ dx
    if name == "zero":
        return y0.copy()
    if name == "linear" and len(dx) == 1:
        a = params.get("a", 1.0)
        return y0 * np.exp(a * dx[0])
    return None


def fitted_order(hs, errors, scale: float = 1.0):
    """Least-squares slope of ``log error`` on ``log h``; ``"exact"`` at round-off."""
    errors = np.asarray(errors, dtype=float)
    if np.all(errors <= EXACT_TOL * max(1.0, scale)):
        return "exact"
    ok = errors > 0
    if ok.sum() < 2:
        return "exact"
    return float(np.polyfit(np.log(np.asarray(hs)[ok]), np.log(errors[ok]), 1)[0])


def cmd_convergence(cfg: RunConfig) -> List[Path]:
    ladder = cfg.get_ints("ladder")
    if len(ladder) < 2 or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("[convergence] ladder must list at least two increasing cell counts")
    T = cfg.get_float("T")
    if not T > 0:
        raise ConfigError("[convergence] T must be positive")
    refine = cfg.get_int("refine")
    top = ladder[-1]
    if any(top % n for n in ladder) or refine < 2:
        raise ConfigError("[convergence] rungs must divide the finest rung; refine >= 2")
    fine_n = top * refine
    samples = cfg.get_int("samples") if "samples" in cfg.values else 1
    if samples < 1:
        raise ConfigError("[convergence] samples must be at least 1")
    mode = cfg.get_str("reference")
    if mode not in ("auto", "exact", "self"):
        raise ConfigError("[convergence] reference must be auto, exact or self")
    y0 = np.array(cfg.get_floats("y0"))
    name = cfg.get_str("field")
    gamma = _gamma(cfg)
    seed0 = cfg.get_int("seed")
    errors = np.zeros((samples, len(ladder)))
    scale = 0.0
    used_exact = False
    for s in range(samples):
        cfg.values["seed"] = str(seed0 + s)
        x_fine = make_driver(cfg, fine_n, T)
        sigma = _field(cfg, len(y0), x_fine.dim)
        exact = None
        if mode != "self":
            dx = x_fine.values[-1] - x_fine.values[0]
            exact = _exact_solution(name, cfg.field_kwargs(), y0, dx)
            if exact is None and mode == "exact":
                raise ConfigError(f"[convergence] no closed form for field {name!r}")
        if exact is None:
            fine = lift_linear(x_fine, gamma)
            ref = solve_sde(y0, sigma, fine, diagnostics=False).y.values[-1]
        else:
            ref = exact
            used_exact = True
        scale = max(scale, float(np.max(np.abs(ref))))
        for r, n in enumerate(ladder):
            x = Path1(Grid(0.0, T / n, n), x_fine.values[:: fine_n // n])
            y = solve_sde(y0, sigma, lift_linear(x, gamma), diagnostics=False).y.values[-1]
            errors[s, r] = float(np.max(np.abs(y - ref)))
    cfg.values["seed"] = str(seed0)
    mean_err = errors.mean(axis=0)
    rows = [{"n": n, "h": T / n, "error": e} for n, e in zip(ladder, mean_err)]
    order = fitted_order([r["h"] for r in rows], [r["error"] for r in rows], scale)
    out = _write_rows(cfg.out / "convergence.csv", ("n", "h", "error"), rows)
    summary = cfg.out / "order.txt"
    text = order if isinstance(order, str) else f"{order:.6f}"
    summary.write_text(
        f"reference = {'exact' if used_exact else 'self'}\nsamples = {samples}\norder = {text}\n"
    )
    print(f"order = {text}")
    return [out, summary]


MC_COLUMNS = ("H", "v1", "v2", "tau", "N", "mean", "stderr", "closed_form", "z")


def cmd_mc_area(cfg: RunConfig) -> List[Path]:
    H = _hurst(cfg)
    N = cfg.get_int("N")
    if N < 2:
        raise ConfigError(f"[mc-area] N must be at least 2, got {N}")
    d = cfg.get_int("d")
    if d < 1:
        raise ConfigError("[mc-area] d must be at least 1")
    mode = cfg.get_str("mode")
    seed = cfg.get_int("seed")
    try:
        if mode == "area":
            n = cfg.get_int("n")
            if not _is_pow2(n):
                raise ConfigError(f"[mc-area] n = {n} must be a power of two")
            rep = mc_validate_area(H, cfg.get_float("v1"), N, n, cfg.get_float("tau"),
                                   seed, d, cfg.workers)
            rows, cols = [rep.row()], MC_COLUMNS
            print(f"mean = {rep.mean:.6g}, closed_form = {rep.closed_form:.6g}, z = {rep.z:.3f}")
        elif mode == "scaling":
            level = cfg.get_int("level")
            if level not in (2, 3):
                raise ConfigError("[mc-area] level must be 2 or 3")
            slope, reps = mc_scaling_exponent(
                level, H, cfg.get_float("v1"), cfg.get_float("v2"), cfg.get_floats("taus"),
                N, seed, d, cfg.get_int("cells"), cfg.workers,
            )
            rows, cols = [r.row() for r in reps], MC_COLUMNS + ("level", "slope")
            print(f"slope = {slope:.6f}")
        else:
            raise ConfigError(f"[mc-area] mode must be area or scaling, got {mode!r}")
    except (ValueError, RoughIntError) as exc:
        if isinstance(exc, (ConfigError, NumericalFailure)):
            raise
        raise ConfigError(str(exc)) from None
    return [_write_rows(cfg.out / "mc_area.csv", cols, rows)]


HANDLERS = {
    "sample": cmd_sample,
    "lift": cmd_lift,
    "validate": cmd_validate,
    "solve-sde": cmd_solve_sde,
    "solve-dde": cmd_solve_dde,
    "convergence": cmd_convergence,
    "mc-area": cmd_mc_area,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roughint", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file; the section named after the command is read")
        sp.add_argument("--out", help="output directory (default: current directory)")
        sp.add_argument("--seed", type=int, help="overrides the configured seed")
        sp.add_argument("--workers", type=int, help="worker processes (also ROUGHINT_WORKERS)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        if name == "validate":
            sp.add_argument("--inject-fault", action="store_true",
                            help="perturb one stored area cell before auditing")
    return p


def _fail(kind: str, exc: BaseException, code: int) -> int:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print(f"roughint: error: {kind}: {type(exc).__name__}: {msg}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    warnings.simplefilter("default")
    warnings.formatwarning = lambda m, c, *a, **k: f"roughint: warning: {m}\n"
    try:
        cfg = load_config(args.command, args.config, args.set, args.seed, args.workers, args.out)
        handler = HANDLERS[args.command]
        if args.command == "validate":
            files = handler(cfg, inject=args.inject_fault)
        else:
            files = handler(cfg)
    except NumericalFailure as exc:
        return _fail("numerical", exc, 3)
    except (RoughIntError, ValueError, OSError) as exc:
        return _fail("config", exc, 2)
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
