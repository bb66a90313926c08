"""Randomized self-checks behind ``vecgroth verify``.

Each suite returns a list of ``Check`` records.  A failing check carries the
inputs of the first counterexample so the failure can be replayed.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import asymptotics, linalg, model
from .parisi import control, terminal
from .parisi.types import Path

TOL = 1e-10


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    trials: int
    counterexample: dict = field(default_factory=dict)


def _run(suite, name, trials, rng, draw, holds):
    """Apply ``holds`` to ``trials`` draws; stop at the first failure."""
    for _ in range(trials):
        case = draw(rng)
        if not holds(**case):
            return Check(suite, name, False, trials, {k: _plain(v) for k, v in case.items()})
    return Check(suite, name, True, trials)


def _plain(v):
    return v.tolist() if isinstance(v, np.ndarray) else v


def _sym(rng, n):
    a = rng.standard_normal((n, n))
    return 0.5 * (a + a.T)


def _psd(rng, n, rank=None):
    b = rng.standard_normal((n, rank or n))
    return b @ b.T


# linear algebra


def linalg_suite(trials=1000, seed=0):
    rng = np.random.default_rng([seed, 1])
    out = []

    def trace_hs(a, b):
        lhs = float(np.trace(a @ b))
        return abs(lhs - linalg.sum_entries(linalg.hadamard(a, b))) <= TOL * (1 + abs(lhs)) and \
            abs(float(np.trace(a @ a)) - linalg.hs_norm(a) ** 2) <= TOL * (1 + linalg.hs_norm(a) ** 2)

    out.append(_run("linalg", "trace equals Hadamard sum", trials, rng,
                    lambda r: (lambda n: {"a": _sym(r, n), "b": _sym(r, n)})(int(r.integers(1, 7))),
                    trace_hs))

    def loewner(a, b, c):
        lo, hi = c @ a @ c.T, c @ (a + b) @ c.T
        scale = linalg.trace_scale(hi)
        return linalg.loewner_leq(a, a + b, TOL * linalg.trace_scale(a + b)) and \
            linalg.loewner_leq(lo, hi, TOL * scale)

    out.append(_run("linalg", "congruence preserves Loewner order", trials, rng,
                    lambda r: (lambda n: {"a": _sym(r, n), "b": _psd(r, n, int(r.integers(1, n + 1))),
                                          "c": r.standard_normal((n, n))})(int(r.integers(1, 7))),
                    loewner))

    def gersh(m):
        if not linalg.gershgorin_psd_certificate(m):
            return True
        return linalg.min_eig(m) >= -TOL * linalg.trace_scale(m)

    def draw_dominant(r):
        n = int(r.integers(1, 7))
        m = _sym(r, n)
        off = np.sum(np.abs(m - np.diag(np.diag(m))), axis=1)
        m[np.diag_indices(n)] = off * (1 + r.random(n) * r.integers(0, 2, n))
        return {"m": m}

    out.append(_run("linalg", "diagonal dominance certifies PSD", trials, rng, draw_dominant, gersh))

    def perturb(a, p, frac):
        eps = frac * linalg.pd_perturbation_threshold(a, p)
        return linalg.min_eig(a + eps * p) > 0

    def draw_perturb(r):
        n = int(r.integers(1, 7))
        return {"a": _psd(r, n) + 1e-3 * np.eye(n), "p": _sym(r, n), "frac": float(r.uniform(0, 0.999))}

    out.append(_run("linalg", "perturbation below threshold stays PD", trials, rng, draw_perturb, perturb))

    def root(a):
        s = linalg.sqrt_psd(a)
        return linalg.sup_norm(s @ s - a) <= 1e-8 * linalg.trace_scale(a) and linalg.is_gram(s)

    out.append(_run("linalg", "PSD square root squares back", trials, rng,
                    lambda r: {"a": _psd(r, int(r.integers(1, 7)), int(r.integers(1, 4)))}, root))
    return out


# model


def model_suite(trials=1000, seed=0):
    rng = np.random.default_rng([seed, 2])

    def draw(r):
        n = int(r.integers(1, 65))
        kappa = int(r.integers(1, 4))
        return {"g": r.standard_normal((n, n)), "s": r.standard_normal((n, kappa)),
                "p": float(r.choice([2.5, 3.0, 4.0])), "t": float(r.uniform(0.1, 3.0))}

    def euler(g, s, p, t):
        h = model.hamiltonian(g, s)
        lhs = float(np.sum(model.grad_hamiltonian(g, s, p, t) * s))
        rhs = 2 * h - t * p * model.norm_p2(s, p) ** p
        return abs(lhs - rhs) <= TOL * (1 + abs(h)) * max(1.0, abs(rhs))

    def gram(g, s, p, t):
        return linalg.is_gram(model.overlap(s))

    return [_run("model", "gradient Euler identity", trials, rng, draw, euler),
            _run("model", "self-overlap is a Gram matrix", trials, rng, draw, gram)]


# single-spin terminals


def terminals_suite(trials=200, seed=0):
    rng = np.random.default_rng([seed, 3])

    def draw(r):
        kappa = int(r.integers(1, 4))
        npair = kappa * (kappa + 1) // 2
        return {"lam": r.normal(scale=0.7, size=npair), "p": float(r.choice([2.5, 3.0, 4.0])),
                "t": float(r.uniform(0.5, 2.0)), "x": r.normal(scale=2.0, size=(3, kappa)),
                "s": r.normal(scale=1.5, size=(4, kappa))}

    def sup(lam, p, t, x, s):
        vals, arg = terminal.terminal_inf_batch(lam, p, t, x)
        lower = terminal.objective(lam, p, t, x[:, None, :], s[None, :, :])
        rad = terminal.certified_radius(lam, p, t, x)
        return bool(np.all(vals >= 0) and np.all(vals[:, None] >= lower - 1e-9 * (1 + np.abs(lower)))
                    and np.all(np.linalg.norm(arg, axis=1) <= rad * (1 + 1e-9)))

    def convex(lam, p, t, x, s):
        mid = 0.5 * (x[0] + x[1])
        v = terminal.terminal_inf_batch(lam, p, t, np.stack([x[0], x[1], mid]))[0]
        return v[2] <= 0.5 * (v[0] + v[1]) + 1e-8 * (1 + abs(v[2]))

    def routes(lam, p, t, x, s):
        exact = terminal.terminal_inf_batch(lam, p, t, x[:1])[0][0]
        ascent = terminal.terminal_inf_ascent(lam, p, t, x[0])[0]
        return abs(exact - ascent) <= 1e-7 * (1 + abs(exact))

    return [_run("terminals", "sup property and certified radius", trials, rng, draw, sup),
            _run("terminals", "midpoint convexity in x", trials, rng, draw, convex),
            _run("terminals", "secular solve agrees with multistart ascent", trials // 4, rng, draw, routes)]


# PDE and control


def pde_suite(seed=0):
    path = Path.simple([[1.0]], [1.0])
    quad = lambda x, nu=0: 0.5 * x ** 2 if nu == 0 else x
    const = lambda x, nu=0: np.full_like(x, 2.0) if nu == 0 else np.zeros_like(x)
    checks = []
    for name, term, weights, tol in (("heat equation for quadratic terminal", quad, (0.0, 0.0), 1e-6),
                                     ("constant terminal is stationary", const, (0.5, 0.5), 1e-9),
                                     ("tilted quadratic terminal at mesh accuracy", quad, (0.2, 0.2), 1e-3)):
        rep = control.pde_residual(None, None, weights, path, terminal=term)
        checks.append(Check("pde", name, rep.max_residual <= tol, 1,
                            {} if rep.max_residual <= tol else {"weights": weights,
                                                                "residual": rep.max_residual}))
    return checks


def ac_suite(seed=0, n_paths=20_000):
    path = Path.simple([[1.0]], [1.0])
    lam, p, t = [0.0], 3.0, 1.0
    spline = control.terminal_spline(lam, p, t, None, 25.0)
    res = control.ac_simulate(lam, (0.0, 0.0), path, p, t, n_paths=n_paths, seed=seed, terminal=spline)
    exact = float(control.smoothed(spline, 0.0, math.sqrt(2.0), 0.0))
    ok = abs(res.estimate - exact) <= 4 * res.stderr
    ito = abs(res.second_moment - 2.0) <= 4 * res.second_moment_stderr
    return [Check("ac", "drift-free value equals Gaussian average", ok, n_paths,
                  {} if ok else {"estimate": res.estimate, "stderr": res.stderr, "exact": exact}),
            Check("ac", "drift-free second moment equals 2 tr D", ito, n_paths,
                  {} if ito else {"second_moment": res.second_moment})]


# asymptotics


def asymptotics_suite(trials=1000, seed=0):
    rng = np.random.default_rng([seed, 6])
    checks = []
    bad = [k for k in range(1, 6)
           if abs(asymptotics.gaussian_abs_moment(2 * k) - math.prod(range(1, 2 * k, 2))) > 1e-10]
    checks.append(Check("asymptotics", "even moments are double factorials", not bad, 5,
                        {"k": bad[0]} if bad else {}))

    def draw(r):
        return {"gse": float(r.uniform(1e-3, 1e3)), "p": float(r.uniform(2.05, 8.0)),
                "t": float(r.uniform(1e-2, 1e2))}

    def round_trip(gse, p, t):
        back = asymptotics.gse_transform(asymptotics.lagrangian_from_gse(gse, p, t), p, t)
        return abs(back - gse) <= 1e-12 * gse * 10

    checks.append(_run("asymptotics", "transform round trip", trials, rng, draw, round_trip))
    near = asymptotics.limit_constant(2 - 1e-6).constant
    cont = abs(near - 2 ** -0.5) <= 1e-4
    checks.append(Check("asymptotics", "constant tends to 2^-1/2 as p -> 2", cont, 1,
                        {} if cont else {"value": near}))
    return checks


SUITES = {
    "linalg": linalg_suite,
    "model": model_suite,
    "terminals": terminals_suite,
    "pde": pde_suite,
    "ac": ac_suite,
    "asymptotics": asymptotics_suite,
}


def run(suite="all", seed=0):
    names = list(SUITES) if suite == "all" else [suite]
    if any(n not in SUITES for n in names):
        raise ValueError(f"unknown suite {suite!r}")
    checks = []
    for n in names:
        checks.extend(SUITES[n](seed=seed))
    return checks
