"""Parisi recursion, the functionals built on it, and their minimization."""

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .. import linalg
from ..model import NumericError
from .terminal import terminal_beta_batch, terminal_inf_batch
from .types import (FINITE, PROBABILITY, DiscreteMeasure, ParisiParams, Path,
                    QuadratureSpec, multiplier_pairing, n_pairs)

MAX_GRID_POINTS = 4_000_000


def integral_term(weights, path):
    """Closed form of the weighted integral of Sum(pi * pi') over [0, 1].

    On [q_j, q_{j+1}) the weight is constant and pi is linear, so each piece
    contributes w_j (|gamma_{j+1}|_HS^2 - |gamma_j|_HS^2) / 2.
    """
    w = weights.weights if isinstance(weights, DiscreteMeasure) else tuple(weights)
    if len(w) != len(path.q):
        raise ValueError("weights and path must share knots")
    sq = [linalg.hs_norm(g) ** 2 for g in path.gamma]
    return 0.5 * sum(w[j] * (sq[j + 1] - sq[j]) for j in range(path.r))


def gaussian_rule(kappa, nodes):
    """Tensor Gauss-Hermite rule for the standard normal on R^kappa."""
    with np.errstate(all="ignore"):
        u, w = np.polynomial.hermite_e.hermegauss(nodes)
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{nodes} Hermite nodes overflow the weight computation")
    w = w / math.sqrt(2 * math.pi)
    if kappa == 1:
        return u[:, None], w
    grids = np.meshgrid(*([u] * kappa), indexing="ij")
    pts = np.stack(grids, axis=-1).reshape(-1, kappa)
    wts = np.prod(np.stack(np.meshgrid(*([w] * kappa), indexing="ij"), axis=-1)
                  .reshape(-1, kappa), axis=1)
    return pts, wts


def _layers(path, quad, rng):
    """Per-level (displacement, weights) pairs, displacement = sqrt(2) z."""
    kappa = path.kappa
    out = []
    if quad.mode == "grid":
        base = gaussian_rule(kappa, quad.nodes_for(kappa))
    for inc in path.increments():
        root = linalg.sqrt_psd(inc)
        if not np.any(root):
            out.append((np.zeros((1, kappa)), np.ones(1)))
            continue
        if quad.mode == "grid":
            pts, wts = base
        else:
            per_layer = max(2, int(round(quad.samples ** (1.0 / path.r))))
            pts = rng.standard_normal((per_layer, kappa))
            wts = np.full(per_layer, 1.0 / per_layer)
        out.append((math.sqrt(2.0) * pts @ root, wts))
    return out


def recursion(terminal, weights, path, quad=None, return_error=False):
    """Backward induction through the nested Gaussian layers.

    ``terminal`` maps an (M, kappa) array of points to M values.  Level l
    integrates over the Gaussian with covariance gamma_{l+1} - gamma_l using
    (1/w_l) log E exp(w_l . ), or a plain expectation when w_l = 0.
    In Monte Carlo mode a delta-method standard error for the outermost
    level is returned alongside the value when ``return_error`` is set.
    """
    quad = quad or QuadratureSpec()
    w = weights.weights if isinstance(weights, DiscreteMeasure) else tuple(weights)
    if len(w) != len(path.q):
        raise ValueError("weights and path must share knots")
    kappa = path.kappa
    if quad.mode == "grid" and kappa > 3:
        quad = QuadratureSpec(mode="mc", samples=quad.samples, seed=quad.seed)
    rng = np.random.default_rng([quad.seed, 3])
    layers = _layers(path, quad, rng)
    sizes = [len(lw) for _, lw in layers]
    total = int(np.prod(sizes))
    if total > MAX_GRID_POINTS:
        raise ValueError(f"{total} terminal evaluations exceed the grid budget; use mode='mc'")
    x = np.zeros((1, kappa))
    for disp, _ in layers:
        x = (x[:, None, :] + disp[None, :, :]).reshape(-1, kappa)
    values = np.asarray(terminal(x), dtype=float).reshape(sizes)
    if not np.all(np.isfinite(values)):
        raise NumericError("terminal returned non-finite values")
    top_err = 0.0
    for level in range(path.r - 1, -1, -1):
        wts = layers[level][1]
        zeta = w[level]
        if level == 0 and return_error and quad.mode == "mc":
            top_err = _delta_error(values, wts, zeta)
        values = _tilted_mean(values, wts, zeta)
        if not np.all(np.isfinite(values)):
            raise NumericError(f"overflow at level {level}")
    value = float(values)
    return (value, top_err) if return_error else value


def _tilted_mean(values, wts, zeta):
    """(1/zeta) log E exp(zeta v) along the last axis; E v when zeta = 0.

    Weakly tilted layers are centred at the mean and use expm1/log1p, so the
    value is continuous as zeta -> 0 instead of amplifying rounding in the
    weight sum by 1/zeta.
    """
    wts = wts / wts.sum()
    mean = values @ wts
    if zeta == 0:
        return mean
    spread = np.max(values, axis=-1) - np.min(values, axis=-1)
    if np.all(zeta * spread <= 1.0):
        centred = zeta * (values - mean[..., None])
        return mean + np.log1p(np.expm1(centred) @ wts) / zeta
    return logsumexp(zeta * values, b=wts, axis=-1) / zeta


def _delta_error(values, wts, zeta):
    n = len(wts)
    if n < 2:
        return 0.0
    if zeta == 0:
        return float(np.std(values, ddof=1) / math.sqrt(n))
    shifted = np.exp(zeta * (values - np.max(values)))
    return float(np.std(shifted, ddof=1) / math.sqrt(n) / np.mean(shifted) / zeta)


def _check_params(lam, path):
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size != n_pairs(path.kappa):
        raise ValueError(f"expected {n_pairs(path.kappa)} multiplier entries")
    return lam


def parisi_inf(lam, zeta, path, p, t, quad=None):
    """Zero-temperature functional Y_0 - <lam, D> - integral term."""
    lam = _check_params(lam, path)
    term = partial(_inf_terminal, lam, p, t)
    y0 = recursion(term, zeta, path, quad)
    return y0 - multiplier_pairing(lam, path.d) - integral_term(zeta, path)


def parisi_beta(lam, beta, alpha, path, p, t, quad=None):
    """Positive-temperature functional X_0 - <lam, D> - beta * integral term."""
    if alpha.flavor != PROBABILITY:
        raise ValueError("parisi_beta needs a probability measure")
    lam = _check_params(lam, path)
    scaled = alpha.scaled(beta)
    term = partial(_beta_terminal, lam, beta, p, t, quad)
    x0 = recursion(term, scaled, path, quad)
    return x0 - multiplier_pairing(lam, path.d) - integral_term(scaled, path)


def _inf_terminal(lam, p, t, x):
    return terminal_inf_batch(lam, p, t, x)[0]


def _beta_terminal(lam, beta, p, t, quad, x):
    return terminal_beta_batch(lam, beta, p, t, x, quad=quad)


def evaluate(params, p, t, beta=None, quad=None):
    """Evaluate a parameter document with the functional matching its flavor."""
    if params.weights.flavor == PROBABILITY:
        if beta is None:
            raise ValueError("a probability measure needs beta")
        return parisi_beta(params.lam, beta, params.weights, params.path, p, t, quad)
    return parisi_inf(params.lam, params.weights, params.path, p, t, quad)


# minimization


def _conjugated_increments(d_root, blocks):
    """Split D into PSD pieces D^{1/2} S_j D^{1/2} with sum_j S_j = I."""
    kappa = d_root.shape[0]
    grams = [b @ b.T + 1e-12 * np.eye(kappa) for b in blocks]
    inv_half = linalg.inv_sqrt_pd(sum(grams))
    return [d_root @ (inv_half @ gm @ inv_half) @ d_root for gm in grams]


def unpack(theta, d, r, flavor=FINITE):
    """Map unconstrained reals to a feasible (lambda, weights, path) triple."""
    d = linalg.as_sym(d)
    kappa = d.shape[0]
    npair = n_pairs(kappa)
    theta = np.asarray(theta, dtype=float)
    lam = theta[:npair]
    u = np.clip(theta[npair:npair + r], -30, 30)
    if flavor == FINITE:
        zeta = np.cumsum(np.exp(u))
        weights = tuple(zeta) + (float(zeta[-1]),)
    else:
        mass = np.exp(np.append(u, 0.0) - np.max(np.append(u, 0.0)))
        alpha = np.cumsum(mass / mass.sum())[:r]
        weights = tuple(np.minimum(alpha, 1.0)) + (1.0,)
    blocks_flat = theta[npair + r:]
    if r == 1:
        incs = [d]
    else:
        blocks = [blocks_flat[j * kappa * kappa:(j + 1) * kappa * kappa].reshape(kappa, kappa)
                  for j in range(r)]
        incs = _conjugated_increments(linalg.sqrt_psd(d), blocks)
    gammas = [np.zeros((kappa, kappa))]
    for inc in incs[:-1]:
        gammas.append(gammas[-1] + inc)
    gammas.append(d.copy())
    q = tuple((j + 1) / (r + 1) for j in range(r)) + (1.0,)
    path = Path(q=q, gamma=tuple(gammas))
    return ParisiParams(lam=tuple(lam), weights=DiscreteMeasure(weights, flavor), path=path)


def n_params(kappa, r):
    return n_pairs(kappa) + r + (r * kappa * kappa if r > 1 else 0)


def default_theta(kappa, r):
    theta = np.zeros(n_params(kappa, r))
    if r > 1:
        blocks = np.stack([np.eye(kappa)] * r)
        theta[n_pairs(kappa) + r:] = blocks.ravel()
    return theta


@dataclass
class MinimizeResult:
    params: ParisiParams
    value: float
    converged: bool
    trace: list = field(default_factory=list, repr=False)


def minimize_parisi(d, p, t, r, mode="inf", beta=None, quad=None, reseeds=8,
                    seed=0, maxfev=None, theta0=None):
    """Derivative-free minimization of the functional over feasible triples.

    Every parameter vector maps to a feasible triple by construction, so
    Nelder-Mead runs unconstrained.  The first run starts from ``theta0``
    (or a neutral default); later runs restart from the best point found so
    far plus a Gaussian kick.  Knots stay evenly spaced because the value
    does not depend on them.
    """
    d = linalg.as_sym(d)
    kappa = d.shape[0]
    flavor = FINITE if mode == "inf" else PROBABILITY
    if mode not in ("inf", "beta"):
        raise ValueError("mode must be 'inf' or 'beta'")
    if mode == "beta" and beta is None:
        raise ValueError("mode 'beta' needs beta")
    quad = quad or QuadratureSpec()
    trace = []

    def objective(theta):
        try:
            params = unpack(theta, d, r, flavor)
            val = evaluate(params, p, t, beta=beta, quad=quad)
        except (ValueError, NumericError, FloatingPointError, linalg.DomainError):
            return np.inf
        if not np.isfinite(val):
            return np.inf
        trace.append((tuple(float(v) for v in theta), float(val)))
        return val

    rng = np.random.default_rng([seed, 29])
    dim = n_params(kappa, r)
    best_theta = default_theta(kappa, r) if theta0 is None else np.asarray(theta0, dtype=float)
    best_val = objective(best_theta)
    finals = []
    maxfev = maxfev or 400 * dim
    for run in range(reseeds):
        start = best_theta if run == 0 else best_theta + rng.normal(scale=0.5, size=dim)
        res = optimize.minimize(objective, start, method="Nelder-Mead",
                                options={"maxfev": maxfev, "xatol": 1e-7, "fatol": 1e-10,
                                         "adaptive": dim > 4})
        finals.append(float(res.fun))
        if res.fun < best_val:
            best_val, best_theta = float(res.fun), np.array(res.x)
    agree = sum(abs(v - best_val) <= 1e-6 * max(1.0, abs(best_val)) for v in finals)
    return MinimizeResult(params=unpack(best_theta, d, r, flavor), value=best_val,
                          converged=agree >= 2, trace=trace)
