"""Single-spin terminal conditions.

The zero-temperature terminal maximizes

    g(s) = (s, x) + s^T M s - t |s|^p,     M = multiplier_matrix(lam)

over s in R^kappa, and the positive-temperature one is (1/beta) log of the
integral of exp(beta g).  For p > 2 the penalty dominates, so both are finite
for every multiplier.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ..model import NumericError
from ..optim import armijo_ascent
from .types import multiplier_matrix, n_pairs


def _check(p, t):
    if t <= 0:
        raise ValueError("t must be positive")
    if p <= 2:
        raise ValueError("p must exceed 2")


def _kappa_of(lam):
    size = np.asarray(lam, dtype=float).size
    kappa = int(round((math.sqrt(8 * size + 1) - 1) / 2))
    if n_pairs(kappa) != size:
        raise ValueError(f"{size} multiplier entries do not match any kappa")
    return kappa


def objective(lam, p, t, x, s):
    """g(s) for stacked points: x and s have shape (..., kappa)."""
    kappa = _kappa_of(lam)
    m = multiplier_matrix(lam, kappa)
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    quad = np.einsum("...i,ij,...j->...", s, m, s)
    return np.sum(s * x, axis=-1) + quad - t * np.linalg.norm(s, axis=-1) ** p


def sup_norm_radius(lam, p, t, x):
    """max((2 |lam|_inf / t)^{1/(p-2)}, (2 |x| / t)^{1/(p-1)}).

    Valid for kappa = 1; for larger kappa the quadratic form can exceed
    |lam|_inf |s|^2 and :func:`certified_radius` should be used instead.
    """
    lam_inf = float(np.max(np.abs(lam)))
    xn = float(np.linalg.norm(x))
    return max((2 * lam_inf / t) ** (1 / (p - 2)), (2 * xn / t) ** (1 / (p - 1)))


def certified_radius(lam, p, t, x):
    """Radius containing every maximizer, using the top eigenvalue of M.

    From g(s*) >= 0: t r^p <= r |x| + lam_max^+ r^2 <= 2 max of the two.
    """
    kappa = _kappa_of(lam)
    top = max(float(np.linalg.eigvalsh(multiplier_matrix(lam, kappa))[-1]), 0.0)
    xn = np.linalg.norm(np.atleast_2d(x), axis=-1)
    return np.maximum((2 * top / t) ** (1 / (p - 2)), (2 * xn / t) ** (1 / (p - 1)))


def terminal_inf_batch(lam, p, t, xs, iters=200):
    """Exact f_inf and its maximizer for each row of ``xs``.

    Any maximizer satisfies x + 2 M s = mu s with mu = t p |s|^{p-2} and
    mu >= 2 lam_max(M).  In the eigenbasis of 2M the radius solves a scalar
    monotone equation, found by bisection.  When the top eigendirection
    carries no weight and the equation has no root (the degenerate case),
    mu sits at 2 lam_max and the slack is placed on the top eigenvector.
    """
    _check(p, t)
    kappa = _kappa_of(lam)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[-1] != kappa:
        raise ValueError(f"points must have {kappa} coordinates")
    m = multiplier_matrix(lam, kappa)
    evals, evecs = np.linalg.eigh(2 * m)
    top = evals[-1]
    y = xs @ evecs
    mu_floor = max(top, 0.0)
    r_lo = (mu_floor / (t * p)) ** (1 / (p - 2))
    r_hi = certified_radius(lam, p, t, xs) * 1.01 + 1e-300

    def excess(r):
        mu = t * p * r[:, None] ** (p - 2)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            comp = np.where(y == 0, 0.0, y / (mu - evals))
            return np.sqrt(np.sum(comp ** 2, axis=1)) - r

    lo = np.full(len(xs), r_lo)
    hi = np.maximum(r_hi, r_lo * (1 + 1e-9) + 1e-300)
    start = excess(np.maximum(lo * (1 + 1e-13), 1e-300))
    has_root = start > 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = excess(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(hi, 1e-300)):
            break
    r = np.where(has_root, 0.5 * (lo + hi), r_lo)
    mu = t * p * r[:, None] ** (p - 2)
    gap = mu - evals
    safe = np.abs(gap) > 1e-14 * max(1.0, abs(top))
    with np.errstate(divide="ignore", invalid="ignore"):
        comp = np.where(safe, y / np.where(safe, gap, 1.0), 0.0)
    # degenerate case: fill the remaining radius along the top eigenvector
    short = ~has_root & (r_lo > 0)
    if np.any(short):
        partial = np.sum(comp[short] ** 2, axis=1)
        comp[short, -1] = np.sqrt(np.maximum(r_lo ** 2 - partial, 0.0))
    zero = ~has_root & (r_lo == 0)
    comp[zero] = 0.0
    s = comp @ evecs.T
    vals = objective(lam, p, t, xs, s)
    return np.maximum(vals, 0.0), s


def terminal_inf_ascent(lam, p, t, x, grad_tol=1e-10):
    """f_inf by multi-start projected gradient ascent.

    Seeds are the 3^kappa points of {-1, 0, 1}^kappa scaled to half the
    certified radius, plus the origin.  Independent of the eigenvalue route
    in :func:`terminal_inf_batch` and used to cross-check it.
    """
    from ..solvers import SolverConfig

    _check(p, t)
    kappa = _kappa_of(lam)
    x = np.asarray(x, dtype=float).reshape(kappa)
    m = multiplier_matrix(lam, kappa)
    radius = float(certified_radius(lam, p, t, x)[0])

    def fun(s):
        nrm = float(np.linalg.norm(s))
        val = float(s @ x + s @ m @ s - t * nrm ** p)
        grad = x + 2 * m @ s - (t * p * nrm ** (p - 2) * s if nrm > 0 else 0.0)
        return val, grad

    def retract(s):
        nrm = float(np.linalg.norm(s))
        return s if nrm <= radius else s * (radius / nrm)

    cfg = SolverConfig(restarts=0, max_iter=20000, grad_tol=grad_tol, value_tol=0.0)
    best_val, best_s = 0.0, np.zeros(kappa)
    seeds = [np.zeros(kappa)] + [0.5 * radius * np.array(c, dtype=float)
                                 for c in itertools.product((-1, 0, 1), repeat=kappa)]
    for seed in seeds:
        if not np.any(seed):
            seed = 1e-3 * max(radius, 1e-6) * (x / np.linalg.norm(x) if np.any(x) else np.ones(kappa))
        s, val, _, _ = armijo_ascent(fun, seed, lambda s, gr: gr, retract, cfg)
        if val > best_val:
            best_val, best_s = val, s
    return best_val, best_s


def terminal_inf(lam, p, t, x, method="exact"):
    """Return (value, maximizer) of the zero-temperature terminal at x."""
    if method == "exact":
        vals, s = terminal_inf_batch(lam, p, t, np.atleast_2d(x))
        return float(vals[0]), s[0]
    if method == "ascent":
        return terminal_inf_ascent(lam, p, t, x)
    raise ValueError(f"unknown method {method!r}")


def terminal_inf_grad(lam, p, t, xs):
    """Gradient of f_inf, which is the maximizer itself."""
    return terminal_inf_batch(lam, p, t, xs)[1]


# positive temperature

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


def _tail_radius(lam, p, t, xn, beta):
    """|s| beyond which g(s) < -40/beta for every |s| larger."""
    lam_abs = float(np.max(np.abs(lam))) * (1 if np.size(lam) == 1 else np.size(lam))
    return (np.maximum.reduce([
        (3 * xn / t) ** (1 / (p - 1)),
        np.full_like(xn, (3 * lam_abs / t) ** (1 / (p - 2))),
        np.full_like(xn, (120 / (beta * t)) ** (1 / p)),
    ]) + 1.0)


def _beta_1d(lam, beta, p, t, xs, refine=1, budget=2_000_000):
    """Composite Gauss-Legendre evaluation of f_beta for kappa = 1.

    The integrand exp(beta (g - f_inf)) peaks at 1; panels are narrower than
    the smallest possible peak width over the integration window.
    """
    lam0 = float(np.ravel(lam)[0])
    xs = np.asarray(xs, dtype=float).ravel()
    peak, _ = terminal_inf_batch([lam0], p, t, xs[:, None])
    big = _tail_radius(np.array([lam0]), p, t, np.abs(xs), beta)
    curv = 2 * abs(lam0) + t * p * (p - 1) * big ** (p - 2)
    panels_each = np.clip(np.ceil(2 * big * 2 * np.sqrt(beta * curv)), 64, 200000).astype(int)
    order = np.argsort(panels_each, kind="stable")
    out = np.empty_like(xs)
    pos = 0
    while pos < len(xs):
        panels = int(panels_each[order[min(pos + 1, len(xs)) - 1]])
        # group points needing similar panel counts, within the memory budget
        n_nodes = panels * refine * len(_GL_NODES)
        take = max(1, budget // n_nodes)
        idx = order[pos:pos + take]
        panels = int(panels_each[idx[-1]]) * refine
        edges = np.linspace(0.0, 1.0, panels + 1)
        h = edges[1] - edges[0]
        u = (edges[:-1, None] + 0.5 * h * (_GL_NODES[None, :] + 1)).ravel()
        wts = np.tile(0.5 * h * _GL_WEIGHTS, panels)
        x = xs[idx]
        rad = big[idx]
        s = -rad[:, None] + 2 * rad[:, None] * u[None, :]
        g = s * x[:, None] + lam0 * s ** 2 - t * np.abs(s) ** p
        integral = np.exp(beta * (g - peak[idx, None])) @ wts * 2 * rad
        out[idx] = peak[idx] + np.log(integral) / beta
        pos += len(idx)
    return out


def _beta_grid(lam, beta, p, t, xs, nodes_per_dim, refine=1):
    """Tensor-product Gauss-Legendre over a box around the maximizer (kappa >= 2)."""
    kappa = _kappa_of(lam)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    peak, arg = terminal_inf_batch(lam, p, t, xs)
    out = np.empty(len(xs))
    n1 = nodes_per_dim * refine
    base, bw = np.polynomial.legendre.leggauss(n1)
    for i, x in enumerate(xs):
        big = float(_tail_radius(np.asarray(lam), p, t, np.array([np.linalg.norm(x)]), beta)[0])
        curv = 2 * float(np.max(np.abs(lam))) * kappa + t * p * (p - 1) * big ** (p - 2)
        width = 0.5 / math.sqrt(beta * curv)
        panels = max(8, int(math.ceil(2 * big / width / n1 * 10)))
        panels = min(panels, 64)
        edges = np.linspace(-big, big, panels + 1)
        h = edges[1] - edges[0]
        pts = (edges[:-1, None] + 0.5 * h * (base[None, :] + 1)).ravel()
        w1 = np.tile(0.5 * h * bw, panels)
        mesh = np.stack(np.meshgrid(*([pts] * kappa), indexing="ij"), axis=-1).reshape(-1, kappa)
        wm = np.prod(np.stack(np.meshgrid(*([w1] * kappa), indexing="ij"), axis=-1).reshape(-1, kappa), axis=1)
        g = objective(lam, p, t, x[None, :], mesh)
        out[i] = peak[i] + math.log(np.sum(wm * np.exp(beta * (g - peak[i])))) / beta
    return out


def _beta_mc(lam, beta, p, t, xs, samples, seed):
    """Importance sampling from a Gaussian centred at the maximizer (kappa >= 2)."""
    kappa = _kappa_of(lam)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    peak, arg = terminal_inf_batch(lam, p, t, xs)
    rng = np.random.default_rng([seed, 17])
    out = np.empty(len(xs))
    errs = np.empty(len(xs))
    for i, x in enumerate(xs):
        curv = 2 * float(np.max(np.abs(lam))) * kappa + t * p * (p - 1) * max(
            float(np.linalg.norm(arg[i])), (1 / (beta * t)) ** (1 / p)) ** (p - 2)
        sd = 2.0 / math.sqrt(beta * curv)
        z = rng.standard_normal((samples, kappa))
        s = arg[i] + sd * z
        logq = -0.5 * np.sum(z ** 2, axis=1) - kappa * math.log(sd * math.sqrt(2 * math.pi))
        lw = beta * (objective(lam, p, t, x[None, :], s) - peak[i]) - logq
        w = np.exp(lw)
        mean = float(np.mean(w))
        out[i] = peak[i] + math.log(mean) / beta
        errs[i] = float(np.std(w) / math.sqrt(samples) / mean / beta)
    return out, errs


def terminal_beta_batch(lam, beta, p, t, xs, quad=None, certify=False):
    """f_beta at each row of ``xs``.

    kappa = 1 uses composite Gauss-Legendre; with ``certify`` the panel
    count is doubled until the integrals agree to 1e-8 relative.
    """
    from .types import QuadratureSpec

    _check(p, t)
    if beta <= 0:
        raise ValueError("beta must be positive")
    kappa = _kappa_of(lam)
    xs = np.asarray(xs, dtype=float)
    if kappa == 1:
        xs = xs.reshape(-1)
        vals = _beta_1d(lam, beta, p, t, xs)
        if certify:
            trace = []
            for refine in (2, 4, 8):
                finer = _beta_1d(lam, beta, p, t, xs, refine=refine)
                rel = float(np.max(np.abs(np.expm1(beta * (finer - vals)))))
                trace.append(rel)
                vals = finer
                if rel <= 1e-8:
                    break
            else:
                raise NumericError(f"f_beta quadrature not stable to 1e-8: trace {trace}")
        return vals
    quad = quad or QuadratureSpec()
    xs = np.atleast_2d(xs)
    if quad.mode == "mc":
        return _beta_mc(lam, beta, p, t, xs, quad.samples, quad.seed)[0]
    nodes = quad.nodes if quad.nodes else 8
    vals = _beta_grid(lam, beta, p, t, xs, nodes)
    if certify:
        finer = _beta_grid(lam, beta, p, t, xs, nodes, refine=2)
        rel = float(np.max(np.abs(np.expm1(beta * (finer - vals)))))
        if rel > 1e-8:
            raise NumericError(f"f_beta tensor quadrature not stable to 1e-8 (change {rel:.2e})")
        vals = finer
    return vals


def terminal_beta(lam, beta, p, t, x, quad=None):
    """f_beta at a single point, certified to 1e-8 relative stability.

    For kappa = 1 this is adaptive quadrature (scipy ``quad``) split at the
    local maxima of the exponent; the answer is accepted only if a second
    pass with a doubled subdivision budget agrees.
    """
    _check(p, t)
    if beta <= 0:
        raise ValueError("beta must be positive")
    kappa = _kappa_of(lam)
    if kappa != 1:
        return float(terminal_beta_batch(lam, beta, p, t, np.atleast_2d(x), quad, certify=True)[0])
    lam0 = float(np.ravel(lam)[0])
    x0 = float(np.ravel(x)[0])
    peak, arg = terminal_inf(lam, p, t, [x0])
    big = float(_tail_radius(np.array([lam0]), p, t, np.array([abs(x0)]), beta)[0])
    stationary = [float(arg[0]), -float(arg[0]), 0.0]
    breaks = sorted({c for c in stationary if -big < c < big})

    def integrand(s):
        return math.exp(beta * (s * x0 + lam0 * s * s - t * abs(s) ** p - peak))

    def run(limit):
        total, err = 0.0, 0.0
        pts = [-big] + breaks + [big]
        for a, b in zip(pts[:-1], pts[1:]):
            val, e = integrate.quad(integrand, a, b, limit=limit, epsabs=0.0, epsrel=1e-13)
            total += val
            err += e
        return total, err

    first, _ = run(200)
    second, err = run(400)
    if abs(second - first) > 1e-8 * abs(second):
        raise NumericError(f"adaptive quadrature unstable: {first!r} vs {second!r}")
    return peak + math.log(second) / beta


def unit_ball_integral(kappa, p):
    """Integral of exp(-|s|^p) over R^kappa."""
    return 2 * math.pi ** (kappa / 2) / math.gamma(kappa / 2) * math.gamma(kappa / p) / p


@dataclass
class ComparisonReport:
    x: np.ndarray
    upper_lhs: np.ndarray
    upper_rhs: np.ndarray
    lower_lhs: np.ndarray
    lower_rhs: np.ndarray

    @property
    def upper_holds(self):
        return bool(np.all(self.upper_lhs <= self.upper_rhs))

    @property
    def lower_holds(self):
        return bool(np.all(self.lower_lhs <= self.lower_rhs))

    @property
    def upper_slack(self):
        return self.upper_rhs - self.upper_lhs

    @property
    def lower_slack(self):
        return self.lower_rhs - self.lower_lhs


def curvature_constant(lam, p, t, delta, s):
    """Coordinatewise convexifying constant h on the cube of half-side delta at s.

    Adding h/2 |s|^2 to the exponent makes it convex on the cube; the
    multiplier part is a Gershgorin bound on 2M.
    """
    kappa = _kappa_of(lam)
    m = multiplier_matrix(lam, kappa)
    offdiag = np.sum(np.abs(2 * m), axis=1) - np.abs(np.diag(2 * m))
    lam_part = float(np.max(np.abs(2 * np.diag(m)) + offdiag))
    nrm = float(np.linalg.norm(s))
    pen = (t * p * (p - 1) + t * p * (p - 2) * kappa) * (
        (2 * nrm) ** (p - 2) + (2 * math.sqrt(kappa) * delta) ** (p - 2))
    return pen + lam_part


def cube_mean(lam, p, t, x, centre, delta, nodes=24):
    """Average of g over the cube of half-side delta around ``centre``."""
    kappa = _kappa_of(lam)
    u, w = np.polynomial.legendre.leggauss(nodes)
    w = w / 2
    grids = np.meshgrid(*([u] * kappa), indexing="ij")
    pts = np.stack(grids, axis=-1).reshape(-1, kappa) * delta + centre
    wts = np.prod(np.stack(np.meshgrid(*([w] * kappa), indexing="ij"), axis=-1).reshape(-1, kappa), axis=1)
    return float(np.sum(wts * objective(lam, p, t, np.asarray(x)[None, :], pts)))


def compare_terminals(lam, p, t, beta, delta, x_grid):
    """Evaluate both terminal comparison inequalities on a grid of points.

    upper: f_beta,t(x) <= f_inf,(t-delta)(x) - kappa log(beta delta)/(p beta)
                          + log(integral of exp(-|s|^p)) / beta
    lower: f_inf(x) <= f_beta(x) + kappa delta^2 h / 6 - kappa log(2 delta)/beta
    where h is :func:`curvature_constant` at the maximizer.
    """
    kappa = _kappa_of(lam)
    xs = np.atleast_2d(np.asarray(x_grid, dtype=float))
    if xs.shape[-1] != kappa:
        xs = xs.reshape(-1, kappa)
    if not 0 < delta < t:
        raise ValueError("need 0 < delta < t")
    fb = np.array([terminal_beta(lam, beta, p, t, x) for x in xs])
    finf_shift, _ = terminal_inf_batch(lam, p, t - delta, xs)
    const = math.log(unit_ball_integral(kappa, p)) / beta
    upper_rhs = finf_shift - kappa * math.log(beta * delta) / (p * beta) + const
    finf, arg = terminal_inf_batch(lam, p, t, xs)
    h = np.array([curvature_constant(lam, p, t, delta, s) for s in arg])
    lower_rhs = fb + kappa * delta ** 2 * h / 6 - kappa * math.log(2 * delta) / beta
    return ComparisonReport(x=xs, upper_lhs=fb, upper_rhs=upper_rhs,
                            lower_lhs=finf, lower_rhs=lower_rhs)
