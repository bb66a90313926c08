"""Scalar (kappa = 1) checks of the PDE and stochastic-control views of the recursion.

On the last knot interval [q_j, 1) the recursion's interior value is

    Phi(s, x) = (1/m) log E exp(m f(x + sqrt(2 slope (1 - s)) z)),

with m the layer weight (beta * alpha_j, or zeta_j at zero temperature).
It solves d_s Phi + slope Phi_xx + m slope Phi_x^2 = 0, and Phi(q_j, 0) is
the value of the control problem driven by dX = 2 m slope v ds + sqrt(2 slope) dW.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import logsumexp

from ..model import NumericError
from .terminal import terminal_beta_batch, terminal_inf_batch
from .types import PROBABILITY, DiscreteMeasure

# Trapezoid rule for the standard normal.  Gauss-Hermite errors oscillate in
# x on the node scale, which second differences amplify; this rule does not.
_Z = np.linspace(-12.0, 12.0, 241)
_ZW = np.exp(-0.5 * _Z ** 2)
_ZW /= _ZW.sum()
_ROW_BUDGET = 2_000_000


def terminal_spline(lam, p, t, beta, x_max, step=1e-3):
    """Cubic spline of f_beta (or f_inf when ``beta`` is None) on [-x_max, x_max]."""
    xs = np.arange(-x_max, x_max + step / 2, step)
    if beta is None:
        vals = terminal_inf_batch(lam, p, t, xs[:, None])[0]
    else:
        vals = terminal_beta_batch(lam, beta, p, t, xs)
    return CubicSpline(xs, vals)


def _layer(weights, path, beta):
    if path.kappa != 1:
        raise ValueError("scalar checks need kappa = 1")
    w = weights.weights if isinstance(weights, DiscreteMeasure) else tuple(weights)
    j = path.r - 1
    m = w[j]
    if isinstance(weights, DiscreteMeasure) and weights.flavor == PROBABILITY:
        if beta is None:
            raise ValueError("probability weights need beta")
        m = beta * m
    return j, m, float(path.slope(j).item())


def smoothed(terminal, m, spread, xs, derivative=False):
    """Phi (or Phi_x) at points ``xs`` for Gaussian spreads ``spread`` (broadcast)."""
    xs, spread = np.broadcast_arrays(np.asarray(xs, float), np.asarray(spread, float))
    flat_x, flat_s = xs.ravel(), spread.ravel()
    out = np.empty(flat_x.size)
    chunk = max(1, _ROW_BUDGET // _Z.size)
    for start in range(0, flat_x.size, chunk):
        sl = slice(start, start + chunk)
        y = flat_x[sl, None] + flat_s[sl, None] * _Z
        f = terminal(y)
        live = flat_s[sl] > 0
        if m and np.any(live):
            _check_window(m * f[live] + np.log(_ZW))
        if m == 0:
            out[sl] = (terminal(y, 1) if derivative else f) @ _ZW
        elif not derivative:
            out[sl] = logsumexp(m * f, b=_ZW, axis=-1) / m
        else:
            logw = m * f
            logw -= np.max(logw, axis=-1, keepdims=True)
            wt = np.exp(logw) * _ZW
            out[sl] = (wt @ np.ones(_Z.size)) ** -1 * np.sum(wt * terminal(y, 1), axis=-1)
    return out.reshape(xs.shape)


def _check_window(logw):
    """Raise when the tilted integrand still carries mass at the window edge."""
    edge = np.maximum(logw[..., 0], logw[..., -1]) - np.max(logw, axis=-1)
    if np.any(edge > -25.0):
        raise NumericError("tilted Gaussian mass reaches the quadrature window edge; "
                           "the layer weight is too large for this terminal")


def convolved(fvals, y, m, spread, xs):
    """Phi at (spread, x) pairs from terminal values on a fixed uniform y-grid.

    The terminal is sampled once, so any kink in it enters every mesh point
    through the same nodes and the quadrature error varies smoothly.
    """
    spread = np.asarray(spread, float).ravel()
    xs = np.asarray(xs, float).ravel()
    out = np.empty((spread.size, xs.size))
    for i, c in enumerate(spread):
        logk = -0.5 * ((y[None, :] - xs[:, None]) / c) ** 2
        logk -= logsumexp(logk, axis=-1, keepdims=True)
        if m == 0:
            out[i] = np.exp(logk) @ fvals
        else:
            logw = m * fvals[None, :] + logk
            _check_window(logw)
            out[i] = logsumexp(logw, axis=-1) / m
    return out


@dataclass
class PdeReport:
    max_residual: float
    n_s: int
    n_x: int
    refined_residual: float = float("nan")
    coarse: bool = False


def pde_residual(lam, beta, weights, path, p=3.0, t=1.0, n_s=200, n_x=200,
                 x_range=(-3.0, 3.0), s_fraction=0.9, terminal=None, refine=False):
    """Max |d_s Phi + slope Phi_xx + m slope Phi_x^2| over an (s, x) mesh.

    The mesh covers the first ``s_fraction`` of the last knot interval.
    ``beta`` None means zero temperature.  ``terminal`` overrides the
    single-spin terminal with any vectorized callable ``f(x, nu=0)``.  With
    ``refine`` the mesh is doubled in both directions and the run is
    flagged coarse unless the residual at least halves.
    """
    j, m, slope = _layer(weights, path, beta)
    lo, hi = path.q[j], path.q[j + 1]
    s = np.linspace(lo, lo + s_fraction * (hi - lo), n_s)
    x = np.linspace(x_range[0], x_range[1], n_x)
    spread = np.sqrt(2 * slope * (hi - s))
    reach = 13 * spread[0]
    step = spread[-1] / 20
    y = np.arange(x_range[0] - reach, x_range[1] + reach + step / 2, step)
    if terminal is not None:
        fvals = terminal(y)
    elif beta is None:
        fvals = terminal_inf_batch(lam, p, t, y[:, None])[0]
    else:
        fvals = terminal_beta_batch(lam, beta, p, t, y)
    phi = convolved(fvals, y, m, spread, x)
    hs, hx = s[1] - s[0], x[1] - x[0]
    phi_s = (phi[2:, 1:-1] - phi[:-2, 1:-1]) / (2 * hs)
    phi_x = (phi[1:-1, 2:] - phi[1:-1, :-2]) / (2 * hx)
    phi_xx = (phi[1:-1, 2:] - 2 * phi[1:-1, 1:-1] + phi[1:-1, :-2]) / hx ** 2
    resid = phi_s + slope * phi_xx + m * slope * phi_x ** 2
    report = PdeReport(float(np.max(np.abs(resid))), n_s, n_x)
    if refine:
        finer = pde_residual(lam, beta, weights, path, p, t, 2 * n_s, 2 * n_x,
                             x_range, s_fraction, terminal)
        report.refined_residual = finer.max_residual
        report.coarse = finer.max_residual > 0.5 * report.max_residual
    return report


@dataclass
class SimulationResult:
    estimate: float
    stderr: float
    second_moment: float
    second_moment_stderr: float
    exploded: int
    n_paths: int


def ac_simulate(lam, weights, path, p=3.0, t=1.0, beta=None, control="optimal",
                n_paths=100_000, dt=1e-3, seed=0, x_sd=10.0, n_x=2001, s_stride=10,
                terminal=None):
    """Monte Carlo value of the control problem on the last knot interval.

    Requires r = 1.  Phi_x is tabulated on an (s, x) grid spanning ``x_sd``
    standard deviations of the driving noise and interpolated bilinearly.
    Paths leaving the grid are counted; more than 0.1% of them raises
    ``NumericError``.
    """
    if path.r != 1:
        raise ValueError("ac_simulate needs r = 1")
    if dt > 1e-3:
        raise ValueError("dt must be at most 1e-3")
    if control not in ("optimal", "none"):
        raise ValueError("control must be 'optimal' or 'none'")
    j, m, slope = _layer(weights, path, beta)
    lo, hi = path.q[j], path.q[j + 1]
    sd = math.sqrt(2 * slope * (hi - lo))
    x_max = x_sd * max(sd, 1e-12)
    if terminal is None:
        terminal = terminal_spline(lam, p, t, beta, x_max + 13 * sd + 1)
    steps = int(round((hi - lo) / dt))
    h = (hi - lo) / steps
    rng = np.random.default_rng([seed, 41])
    X = np.zeros(n_paths)
    cost = np.zeros(n_paths)
    escaped = np.zeros(n_paths, dtype=bool)
    drive = math.sqrt(2 * slope * h)
    if control == "optimal" and m != 0:
        s_grid = lo + h * np.arange(0, steps + 1, s_stride)
        if s_grid[-1] < hi:
            s_grid = np.append(s_grid, hi)
        x_grid = np.linspace(-x_max, x_max, n_x)
        spread = np.sqrt(np.maximum(2 * slope * (hi - s_grid), 0.0))
        table = smoothed(terminal, m, spread[:, None], x_grid[None, :], derivative=True)
        hx = x_grid[1] - x_grid[0]
    for k in range(steps):
        if control == "optimal" and m != 0:
            s = lo + k * h
            v = _bilinear(table, s_grid, x_grid[0], hx, s, X)
            cost += m * slope * v ** 2 * h
            X = X + 2 * m * slope * v * h
        X = X + drive * rng.standard_normal(n_paths)
        escaped |= np.abs(X) > x_max
    payoff = terminal(X) - cost
    exploded = int(np.count_nonzero(escaped))
    if exploded > 1e-3 * n_paths:
        raise NumericError(f"{exploded} of {n_paths} paths left the grid")
    sq = X ** 2
    return SimulationResult(
        estimate=float(np.mean(payoff)),
        stderr=float(np.std(payoff, ddof=1) / math.sqrt(n_paths)),
        second_moment=float(np.mean(sq)),
        second_moment_stderr=float(np.std(sq, ddof=1) / math.sqrt(n_paths)),
        exploded=exploded,
        n_paths=n_paths,
    )


def _bilinear(table, s_grid, x0, hx, s, xs):
    i = int(np.searchsorted(s_grid, s, side="right")) - 1
    i = min(max(i, 0), len(s_grid) - 2)
    ws = (s - s_grid[i]) / (s_grid[i + 1] - s_grid[i])
    pos = np.clip((xs - x0) / hx, 0.0, table.shape[1] - 1.000001)
    col = pos.astype(int)
    wx = pos - col
    rows = (1 - ws) * table[i] + ws * table[i + 1]
    return (1 - wx) * rows[col] + wx * rows[col + 1]


@dataclass
class MomentReport:
    second_moments: list
    slope: float
    exponent: float
    cap: float
    within_cap: bool


def moment_exponent(p):
    """Growth exponent 2 / (2 - eta) with eta = max(1 + 1/(p-1), 2/(p-1))."""
    eta = max(1 + 1 / (p - 1), 2 / (p - 1))
    if eta >= 2:
        raise ValueError("p must exceed 2")
    return 2 / (2 - eta)


def moment_diagnostic(zetas, second_moments, p):
    """Least-squares slope of log E|X(1)|^2 against log zeta over a sweep.

    The trend is acceptable when the slope stays below the growth exponent
    plus 0.2.
    """
    z = np.asarray(zetas, dtype=float)
    mom = np.asarray(second_moments, dtype=float)
    if z.size < 2 or np.any(z <= 0) or np.any(mom <= 0):
        raise ValueError("need at least two positive sweep points")
    slope = float(np.polyfit(np.log(z), np.log(mom), 1)[0])
    exponent = moment_exponent(p)
    cap = exponent + 0.2
    return MomentReport(list(mom), slope, exponent, cap, slope <= cap)
