"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in an
"acceptance criteria" section at the end of the session.  Running this file
directly (``python tests/test_acceptance.py``) prints the same lines.
"""

import time

import numpy as np
from scipy.integrate import simpson, solve_ivp

from conftest import ACCEPTANCE_LINES, dde_reference
from roughint.controlled import ControlledPath, SmoothMap, compose, integrate
from roughint.dde import InitialSegment, dde_continuity_probe, solve_dde
from roughint.fbm import FbmSpec, mc_scaling_exponent, mc_validate_area, sample_fbm_path
from roughint.fields import as_delay_field, make_field
from roughint.increments import (
    Grid,
    Inc2,
    Path1,
    delta1,
    delta2,
    holder_norm2,
    holder_norm3,
    lambda_grid,
    ordered_triples,
    sew,
)
from roughint.lift import DelayedLift, lift_linear, verify_hypotheses
from roughint.sde import continuity_probe, picard_solve, solve_sde

LADDER = (16, 32, 64, 128)
REFINE = 16


def _report(num, ok, detail, elapsed, budget):
    within = elapsed <= budget
    status = "PASS" if ok and within else "FAIL"
    line = f"criterion {num}: {status} - {detail} [{elapsed:.1f}s / {budget:.0f}s]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line
    assert within, line


def _orders(errs):
    e = np.asarray(errs, dtype=float)
    return np.log2(e[:-1] / e[1:])


# --------------------------------------------------------------------------
# 1. algebraic identities
# --------------------------------------------------------------------------


def test_criterion_1_identity_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    n, d, h = 128, 3, 1.0 / 128
    g = Grid(0.0, h, n)
    worst = {}
    # increment identities on random data
    x = Path1(g, rng.normal(size=(n + 1, d)))
    tri = ordered_triples(n)
    dd = delta2(delta1(x)).values
    worst["delta-delta"] = float(np.abs(dd)[tri].max()) / float(np.abs(x.values).max())
    gg = Inc2(g, rng.normal(size=(n + 1, n + 1, d)))
    hh = delta2(gg)
    lam = lambda_grid(hh)
    worst["delta-Lambda"] = float(np.abs(delta2(lam).values - hh.values)[tri].max()) / float(
        np.abs(hh.values).max()
    )
    pairs = np.triu(np.ones((n + 1, n + 1), dtype=bool), 1)
    target = (gg - sew(gg)).values
    worst["Lambda-delta"] = float(np.abs(lam.values - target)[pairs].max()) / float(
        np.abs(target).max()
    )
    # lift identities: plain and delayed
    walk = np.vstack([np.zeros(d), np.cumsum(rng.normal(scale=h**0.4, size=(n, d)), axis=0)])
    rows = verify_hypotheses(lift_linear(Path1(g, walk), 0.4))
    k = 32
    ext = Grid(-k * h, h, n + k)
    walk2 = np.vstack([np.zeros(d), np.cumsum(rng.normal(scale=h**0.4, size=(n + k, d)), axis=0)])
    rows += verify_hypotheses(DelayedLift.build(Path1(ext, walk2), [0.125, 0.25], 0.4))
    for r in rows:
        key = r["identity"]
        rel = r["residual"] / max(r["scale"], 1e-300)
        worst[key] = max(worst.get(key, 0.0), rel)
    ok = all(v <= 1e-12 for v in worst.values()) and all(r["passed"] for r in rows)
    detail = "max relative residuals " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    _report(1, ok, detail, time.perf_counter() - t0, 10)


# --------------------------------------------------------------------------
# 2. Lambda norm bound
# --------------------------------------------------------------------------


def test_criterion_2_lambda_norm_bound():
    t0 = time.perf_counter()
    mu = 1.2
    bound = 3.3424  # stated value; 1 / (2**1.2 - 2) = 3.3625 is slightly looser
    ratios = []
    for s in range(50):
        rng = np.random.default_rng(200 + s)
        n = int(rng.integers(8, 65))
        g = Grid(0.0, 1.0 / n, n)
        t = g.times
        kind = s % 3
        if kind == 0:
            G = rng.normal(size=(n + 1, n + 1))
        elif kind == 1:
            c = rng.normal(size=(4, 4))
            S, T = np.meshgrid(t, t, indexing="ij")
            G = sum(c[i, j] * S**i * T**j for i in range(4) for j in range(4))
        else:
            w = np.cumsum(rng.normal(size=n + 1)) / np.sqrt(n)
            G = rng.normal() * np.outer(w, w) + 0.1 * rng.normal(size=(n + 1, n + 1))
        hh = delta2(Inc2(g, G))
        ratios.append(holder_norm2(lambda_grid(hh), mu) / holder_norm3(hh, mu))
    worst = max(ratios)
    _report(2, worst <= bound, f"max ratio {worst:.4f} <= {bound:.4f} over 50 increments",
            time.perf_counter() - t0, 5)


# --------------------------------------------------------------------------
# 3. smooth-path oracle
# --------------------------------------------------------------------------

COS = SmoothMap(
    lambda y: np.array([[np.cos(y[0])]]),
    lambda y: np.array([[[-np.sin(y[0])]]]),
    lambda y: np.array([[[[-np.cos(y[0])]]]]),
    "cos",
)
DRIVERS = {"t": (lambda t: t, lambda t: np.ones_like(t)), "sin": (np.sin, np.cos)}


def _driver_lift(fn, n, T=1.0):
    g = Grid(0.0, T / n, n)
    return lift_linear(Path1(g, fn(g.times)), 1.0)


def _integrate_errors(fn, dfn):
    tf = np.linspace(0.0, 1.0, LADDER[-1] * REFINE + 1)
    ref = simpson(np.cos(fn(tf)) * dfn(tf), x=tf)
    errs = []
    for n in LADDER:
        L = _driver_lift(fn, n)
        m = compose(COS, ControlledPath.of_driver(L))
        errs.append(abs(integrate(m).z.values[-1, 0] - ref))
    return errs


def _sde_errors(fn, dfn):
    sol = solve_ivp(lambda t, y: y * dfn(t), (0.0, 1.0), [1.0], method="DOP853", rtol=1e-13,
                    atol=1e-15, max_step=1.0 / (LADDER[-1] * REFINE))
    ref = sol.y[0, -1]
    f = make_field("linear", 1, 1)
    return [abs(solve_sde([1.0], f, _driver_lift(fn, n), diagnostics=False).y.values[-1, 0] - ref)
            for n in LADDER], ref


def _dde_errors(fn, dfn, r=0.5, T=2.0):
    ref = dde_reference(lambda y, yd: yd, dfn, lambda t: 1.0, r, T,
                        max_step=T / (LADDER[-1] * REFINE))(T)
    sig = make_field("delay-linear", 1, 1, q=1)
    errs = []
    for n in LADDER:
        h = T / n
        k = int(round(r / h))
        g = Grid(-k * h, h, n + k)
        dl = DelayedLift.build(Path1(g, fn(g.times)), [r], gamma=1.0)
        xi = InitialSegment.constant(1.0, Grid(g.t0, h, k))
        errs.append(abs(solve_dde(xi, sig, dl).y.values[-1, 0] - ref))
    return errs


def test_criterion_3_smooth_oracle():
    t0 = time.perf_counter()
    parts, ok = [], True
    for name, (fn, dfn) in DRIVERS.items():
        for what, errs, need in (
            ("integrate", _integrate_errors(fn, dfn), 2.7),
            ("sde", _sde_errors(fn, dfn)[0], 2.7),
            # the delayed families of a curved driver's interpolant are second-order accurate
            ("dde", _dde_errors(fn, dfn), 2.7 if name == "t" else 1.8),
        ):
            o = _orders(errs)
            good = bool(np.all(o >= need)) and errs[-1] < 1e-4
            ok &= good
            parts.append(f"{what}/{name} min order {o.min():.2f} (need {need})")
    f = make_field("linear", 1, 1)
    e_errs = [abs(solve_sde([1.0], f, _driver_lift(lambda t: t, n), diagnostics=False).y.values[-1, 0]
                  - np.e) for n in LADDER]
    order_e = float(np.polyfit(np.log(1.0 / np.array(LADDER)), np.log(e_errs), 1)[0])
    ok &= order_e >= 2.7
    parts.append(f"exp(1) order {order_e:.2f}, error {e_errs[-1]:.1e}")
    _report(3, ok, "; ".join(parts), time.perf_counter() - t0, 30)


# --------------------------------------------------------------------------
# 4. chain rule on fBm
# --------------------------------------------------------------------------


def test_criterion_4_fbm_chain_rule():
    t0 = time.perf_counter()
    n = 1024
    x = sample_fbm_path(FbmSpec(0.35, 1, Grid(0.0, 1.0 / n, n), seed=4))
    y = solve_sde([1.0], make_field("linear", 1, 1), lift_linear(x, 0.35), diagnostics=False)
    exact = np.exp(x.values[-1, 0] - x.values[0, 0])
    err = abs(y.y.values[-1, 0] - exact)
    _report(4, err <= 1e-8, f"|y_T - exp(x_T - x_0)| = {err:.3e} (tolerance 1e-8)",
            time.perf_counter() - t0, 5)


# --------------------------------------------------------------------------
# 5. delay collapse
# --------------------------------------------------------------------------


def test_criterion_5_delay_collapse():
    t0 = time.perf_counter()
    n, k = 256, 32
    h = 1.0 / n
    x = sample_fbm_path(FbmSpec(0.4, 2, Grid(-k * h, h, n + k), seed=5))
    dl = DelayedLift.build(x, [k * h], gamma=0.35)
    a = np.array([0.6, -0.2])
    diffs = {}
    for name in ("rotation", "sine", "polynomial"):
        vf = make_field(name, 2, 2)
        xi = InitialSegment.constant(a, Grid(dl.grid.t0, h, dl.origin))
        y = solve_dde(xi, as_delay_field(vf, 1), dl).y.values[dl.origin:]
        ys = solve_sde(a, vf, dl.base(), diagnostics=False).y.values
        diffs[name] = float(np.abs(y - ys).max())
    ok = max(diffs.values()) <= 1e-12
    detail = "max |dde - sde| " + ", ".join(f"{k}={v:.1e}" for k, v in diffs.items())
    _report(5, ok, detail, time.perf_counter() - t0, 10)


# --------------------------------------------------------------------------
# 6. expectation of the delayed diagonal area
# --------------------------------------------------------------------------


def test_criterion_6_mc_expectation():
    t0 = time.perf_counter()
    cases = [(0.3, 0.0, 601), (0.35, 0.25, 602), (0.35, -0.25, 603)]
    parts, ok = [], True
    for H, v, seed in cases:
        rep = mc_validate_area(H, v, N=2000, n=1024, tau=1.0, seed=seed)
        ok &= abs(rep.z) <= 4
        parts.append(f"H={H} v1={v:+g}: mean {rep.mean:.4f} vs {rep.closed_form:.4f}, z={rep.z:.2f}")
    _report(6, ok, "; ".join(parts), time.perf_counter() - t0, 180)


# --------------------------------------------------------------------------
# 7. moment scaling
# --------------------------------------------------------------------------


def test_criterion_7_moment_scaling():
    t0 = time.perf_counter()
    parts, ok = [], True
    for level, H, tol, seed in ((2, 0.35, 0.3, 701), (2, 0.5, 0.3, 702), (3, 0.35, 0.4, 703)):
        slope, _ = mc_scaling_exponent(level, H, N=2000, seed=seed)
        target = 2 * level * H
        ok &= abs(slope - target) <= tol
        parts.append(f"level {level} H={H}: slope {slope:.3f} vs {target:.2f}+-{tol}")
    _report(7, ok, "; ".join(parts), time.perf_counter() - t0, 300)


# --------------------------------------------------------------------------
# 8. Picard versus march
# --------------------------------------------------------------------------


def test_criterion_8_picard_vs_march():
    t0 = time.perf_counter()
    tol = 1e-12
    limit = max(10 * tol, 1e-8)
    n = 256
    parts, ok = [], True
    for name, l, d, a in (("linear", 1, 1, [1.0]), ("rotation", 2, 2, [1.0, 0.0])):
        x = sample_fbm_path(FbmSpec(0.4, d, Grid(0.0, 1.0 / n, n), seed=8))
        L = lift_linear(x, 0.35)
        f = make_field(name, l, d)
        ym = solve_sde(a, f, L, diagnostics=False).y.values
        rep = picard_solve(a, f, L, tol=tol, diagnostics=False)
        diff = float(np.abs(ym - rep.y.values).max())
        ok &= diff <= limit
        parts.append(f"{name}: {diff:.1e} ({rep.picard_iters} iterations)")
    _report(8, ok, f"max |picard - march| <= {limit:.0e}: " + "; ".join(parts),
            time.perf_counter() - t0, 20)


# --------------------------------------------------------------------------
# 9. continuity probes
# --------------------------------------------------------------------------

EPS = (1e-2, 1e-3, 1e-4)
SEEDS = range(900, 908)
LEVELS = (1, 2, 4)
TARGET = 16


def _sde_setup(seed, n=64, gamma=0.35):
    fine = sample_fbm_path(FbmSpec(0.4, 2, Grid(0.0, 1.0 / (n * TARGET), n * TARGET), seed))

    def lift_at(s):
        g = Grid(0.0, 1.0 / (n * s), n * s)
        return lift_linear(Path1(g, fine.values[:: TARGET // s]), gamma).coarsen(s)

    return lift_at, make_field("sine", 2, 2), np.array([0.1, 0.4]), gamma


def _sde_ratios():
    lift_at, f, a, gamma = _sde_setup(SEEDS[0])
    base = lift_at(1)
    t = base.grid.times
    bump = np.stack([np.sin(np.pi * t), np.cos(t) - 1], 1)
    out = []
    for eps in EPS:
        pert = lift_linear(Path1(base.grid, base.x.values + eps * bump), gamma)
        out.append(continuity_probe(a, f, base, pert, gamma)["ratio"])
    return out


def _sde_refinement(seed):
    lift_at, f, a, gamma = _sde_setup(seed)
    target = lift_at(TARGET)
    probes = [continuity_probe(a, f, target, lift_at(s), gamma) for s in LEVELS]
    return [p["solution_distance"] for p in probes], [p["input_distance"] for p in probes]


def _dde_setup(seed, n=32, k=8, gamma=0.35, r=0.25):
    h = 1.0 / n
    fine = sample_fbm_path(FbmSpec(0.4, 2, Grid(-r, h / TARGET, (n + k) * TARGET), seed))

    def lift_at(s):
        g = Grid(-r, h / s, (n + k) * s)
        return DelayedLift.build(Path1(g, fine.values[:: TARGET // s]), [r], gamma).coarsen(s)

    sig = make_field("delay-feedback", 2, 2, q=1, alpha=0.5)
    xi = InitialSegment.constant([1.0, 0.5], Grid(-r, h, k))
    return lift_at, sig, xi, gamma


def _dde_ratios():
    lift_at, sig, xi, gamma = _dde_setup(SEEDS[0])
    base = lift_at(1)
    xg = xi.xi.grid
    t = base.grid.times
    bump = np.stack([np.sin(np.pi * t), np.cos(t) - 1], 1)
    out = []
    for eps in EPS:
        pert = DelayedLift.build(Path1(base.grid, base.x.values + eps * bump), base.delays, gamma)
        xi2 = InitialSegment(Path1(xg, xi.xi.values + eps))
        out.append(dde_continuity_probe(xi, xi2, sig, base, pert, gamma)["ratio"])
    return out


def _dde_refinement(seed):
    lift_at, sig, xi, gamma = _dde_setup(seed)
    target = lift_at(TARGET)
    probes = [dde_continuity_probe(xi, xi, sig, target, lift_at(s), gamma) for s in LEVELS]
    return [p["solution_distance"] for p in probes], [p["input_distance"] for p in probes]


def test_criterion_9_continuity():
    # ratios: one driver perturbed by eps * bump (and xi + eps for the delay
    # equation).  Refinement: lifts of 1x, 2x, 4x finer samples of the same fBm
    # path, coarsened to the base grid, against the 16x lift; distances are
    # averaged over seeds because the unresolved area of a single path is random
    t0 = time.perf_counter()
    parts, ok = [], True
    for name, ratios_fn, refine_fn in (("sde", _sde_ratios, _sde_refinement),
                                       ("dde", _dde_ratios, _dde_refinement)):
        ratios = ratios_fn()
        runs = np.array([refine_fn(seed) for seed in SEEDS])  # (seeds, 2, levels)
        sol, inp = runs[:, 0].mean(axis=0), runs[:, 1].mean(axis=0)
        bounded = max(ratios) <= 10 * min(ratios)
        dec = bool(np.all(np.diff(sol) < 0) and np.all(np.diff(inp) < 0))
        ok &= bounded and dec
        parts.append(
            f"{name}: eps ratios {min(ratios):.3g}..{max(ratios):.3g}; mean solution distance "
            "under refinement " + " > ".join(f"{v:.2e}" for v in sol)
        )
    _report(9, ok, "; ".join(parts), time.perf_counter() - t0, 30)


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
