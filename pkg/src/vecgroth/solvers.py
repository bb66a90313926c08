"""Finite-N maximizers for the vector-spin Grothendieck problem.

Every search is an Armijo-backtracking projected gradient ascent with a
retraction onto the feasible set, restarted from several seeds.  Values are
best-found local maxima, hence lower bounds on the true maxima.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .optim import armijo_ascent
from .model import (Disorder, NumericError, as_config, grad_hamiltonian, hamiltonian,
                    lagrangian_hamiltonian, norm_p2, opnorm_scaled, overlap,
                    penalty_gradient, replica_rng, site_norms)

# Below this size the localization radius uses an exact dense 2-norm.
DENSE_NORM_MAX = 512


@dataclass(frozen=True)
class SolverConfig:
    restarts: int = 16
    max_iter: int = 5000
    step0: float = 0.1
    max_halvings: int = 30
    grad_tol: float = 1e-8
    value_tol: float = 1e-13
    stall_window: int = 25
    seed: int = 0
    float32: bool = False

    def __post_init__(self):
        if self.restarts < 0:
            raise ValueError("restarts must be non-negative")
        if self.max_iter < 1 or self.step0 <= 0 or self.grad_tol <= 0:
            raise ValueError("max_iter, step0 and grad_tol must be positive")


@dataclass
class GroundStateResult:
    value: float
    config: np.ndarray
    iterations: int
    restarts_used: int
    converged: bool
    history: list = field(default_factory=list, repr=False)

    def __float__(self):
        return float(self.value)


def _matrix(g):
    return g.g if isinstance(g, Disorder) else np.asarray(g, dtype=float)


def _restart_rng(cfg, index):
    return replica_rng(cfg.seed, index, stream=101)


def _best_of(runs):
    """Max by value, ties broken by the lowest start index."""
    best = None
    for idx, run in enumerate(runs):
        if best is None or run[1] > best[1][1]:
            best = (idx, run)
    return best


# sphere maximization


def _dual_map(h, p):
    """argmax of <h, s> over the unit l^{p,2} sphere (rows of h are sites)."""
    nh = site_norms(h)
    if not np.any(nh > 0):
        return None
    if p == 1:
        s = np.zeros_like(h)
        i = int(np.argmax(nh))
        s[i] = h[i] / nh[i]
        return s
    q = p / (p - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(nh > 0, nh ** (q - 2.0), 0.0)
    s = h * w[:, None]
    return s / norm_p2(s, p)


def _hub_seeds(sym, p, count):
    """Seeds for 1 <= p < 2 built around a single heavy site.

    Site j carries half of the l^p mass; the remaining sites align with the
    column ``2*sym[:, j]`` through the dual map.  Columns are ranked by the
    l^{p*} norm of that column, which is the leading-order value of the seed.
    """
    n = sym.shape[0]
    if n < 2 or count <= 0:
        return []
    q = p / (p - 1.0)
    cols = 2.0 * sym.copy()
    np.fill_diagonal(cols, 0.0)
    if np.isinf(q):
        scores = np.max(np.abs(cols), axis=0)
    else:
        scores = np.sum(np.abs(cols) ** q, axis=0)
    order = np.argsort(-scores, kind="stable")[:count]
    seeds = []
    half = 0.5 ** (1.0 / p)
    for j in order:
        h = cols[:, j]
        if p == 1:
            x = np.zeros(n)
            i = int(np.argmax(np.abs(h)))
            x[i] = np.sign(h[i]) or 1.0
        else:
            x = np.sign(h) * np.abs(h) ** (q - 1.0)
            nx = np.sum(np.abs(x) ** p) ** (1.0 / p)
            if nx == 0:
                continue
            x /= nx
        x *= half
        x[j] = half
        seeds.append(x[:, None])
    return seeds


def _embed(s, kappa):
    s = as_config(s)
    if s.shape[1] == kappa:
        return s
    out = np.zeros((s.shape[0], kappa))
    out[:, : s.shape[1]] = s
    return out


def maximize_quadratic_on_sphere(a, p, kappa, cfg, normalized=False, init=(),
                                 hubs=4):
    """Maximize sum_ij a_ij (s_i, s_j) over the l^{p,2} sphere of radius one.

    With ``normalized`` the constraint is the normalized norm equal to one
    (sum_i |s_i|^p = N).  Random Gaussian starts are complemented by an
    eigenvector seed and, for p < 2, by heavy-site seeds.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    sym = 0.5 * (a + a.T)
    target = float(n) ** (1.0 / p) if normalized else 1.0
    work = sym.astype(np.float32) if cfg.float32 else sym

    def fun(s):
        if cfg.float32:
            gs = (work @ s.astype(np.float32)).astype(float)
        else:
            gs = sym @ s
        return float(np.sum(s * gs)), 2.0 * gs

    def retract(s):
        nrm = norm_p2(s, p)
        if nrm == 0:
            return s
        return s * (target / nrm)

    def direction(s, grad):
        normal = penalty_gradient(s, p)
        nn = float(np.sum(normal * normal))
        if nn == 0:
            return grad
        return grad - (float(np.sum(grad * normal)) / nn) * normal

    def jump(s, grad):
        y = _dual_map(grad, p)
        return None if y is None else y * target

    starts = [_embed(s, kappa) for s in init]
    if p < 2:
        starts += [_embed(s, kappa) for s in _hub_seeds(sym, p, hubs)]
    if n <= 512:
        w, v = np.linalg.eigh(sym)
        starts.append(_embed(v[:, -1], kappa))
    for r in range(cfg.restarts):
        starts.append(_restart_rng(cfg, r).standard_normal((n, kappa)))

    runs = [armijo_ascent(fun, s, direction, retract, cfg, jump=jump) for s in starts]
    if cfg.float32:
        runs = [(x, float(np.sum(x * (sym @ x))), it, conv) for x, _, it, conv in runs]
    idx, best = _best_of(runs)
    x, f, it, conv = best
    return GroundStateResult(value=f, config=x, iterations=it,
                             restarts_used=len(runs), converged=conv,
                             history=[r[1] for r in runs])


def maximize_sphere(g, p, kappa, cfg=None, init=()):
    """Best local maximum of the unscaled Hamiltonian on the unit l^{p,2} sphere."""
    if p < 1:
        raise ValueError("p must be at least 1")
    cfg = cfg or SolverConfig()
    return maximize_quadratic_on_sphere(_matrix(g), p, kappa, cfg, init=init)


def gse(g, p, kappa, cfg=None, route="sphere"):
    """Ground state energy N^{2/p - 3/2} GP.

    ``route="normalized"`` maximizes (1/N) H_N directly over the normalized
    sphere instead of rescaling the unit-sphere maximum.
    """
    if p <= 2:
        raise ValueError("gse is defined here for p > 2")
    cfg = cfg or SolverConfig()
    gm = _matrix(g)
    n = gm.shape[0]
    if route == "sphere":
        res = maximize_sphere(gm, p, kappa, cfg)
        return n ** (2.0 / p - 1.5) * res.value
    if route == "normalized":
        res = maximize_quadratic_on_sphere(gm, p, kappa, cfg, normalized=True)
        return res.value / n ** 1.5
    raise ValueError(f"unknown route {route!r}")


# Lagrangians


def localization_radius(g, p, t):
    """Bound on the normalized l^{2,2} norm of any optimizer with value >= 0."""
    gm = _matrix(g)
    n = gm.shape[0]
    if n <= DENSE_NORM_MAX:
        norm = float(np.linalg.norm(gm, 2)) / np.sqrt(n)
    else:
        try:
            norm = opnorm_scaled(gm)
        except NumericError:
            norm = float(np.linalg.norm(gm, 2)) / np.sqrt(n)
    return (norm / t) ** (1.0 / (p - 2.0))


def _penalized(gm, p, t, scale_h=1.0, scale_pen=None):
    n = gm.shape[0]
    sym = 0.5 * (gm + gm.T)
    scale_pen = t if scale_pen is None else scale_pen
    root = np.sqrt(n)

    def fun(s):
        gs = sym @ s
        nr = site_norms(s)
        val = scale_h * float(np.sum(s * gs)) / root - scale_pen * float(np.sum(nr ** p))
        grad = 2.0 * scale_h * gs / root - scale_pen * penalty_gradient(s, p)
        return val, grad

    return fun


def _lagrangian_starts(gm, p, kappa, radius, cfg, init):
    n = gm.shape[0]
    starts = [_embed(s, kappa) for s in init]
    for r in range(cfg.restarts):
        rng = _restart_rng(cfg, r)
        s = rng.standard_normal((n, kappa))
        frac = 0.25 + 0.75 * rng.random()
        s *= frac * radius * np.sqrt(n) / np.linalg.norm(s)
        starts.append(s)
    return starts


def lagrangian_max(g, p, t, kappa, cfg=None, init=()):
    """(1/N) max of H_N - t |s|_{p,2}^p over all configurations.

    Restarts are drawn inside the localization ball; the origin is always a
    candidate, so the value is non-negative.
    """
    if t <= 0 or p <= 2:
        raise ValueError("need t > 0 and p > 2")
    cfg = cfg or SolverConfig()
    gm = _matrix(g)
    n = gm.shape[0]
    fun = _penalized(gm, p, t)
    radius = localization_radius(gm, p, t)
    starts = _lagrangian_starts(gm, p, kappa, radius, cfg, init)
    runs = [armijo_ascent(fun, s, lambda x, gr: gr, lambda x: x, cfg) for s in starts]
    runs.append((np.zeros((n, kappa)), 0.0, 0, True))
    idx, (x, f, it, conv) = _best_of(runs)
    return GroundStateResult(value=f / n, config=x, iterations=it,
                             restarts_used=len(starts), converged=conv,
                             history=[r[1] / n for r in runs])


def _ball_search(gm, p, kappa, scale_h, scale_pen, radius_sq, cfg, init=()):
    """max over normalized l^{2,2} norm squared <= radius_sq, divided by N."""
    n = gm.shape[0]
    fun = _penalized(gm, p, None, scale_h=scale_h, scale_pen=scale_pen)
    bound = np.sqrt(radius_sq * n)

    def retract(s):
        nr = float(np.linalg.norm(s))
        return s if nr <= bound else s * (bound / nr)

    def direction(s, grad):
        nr = float(np.linalg.norm(s))
        if nr >= bound * (1 - 1e-12) and nr > 0:
            radial = float(np.sum(grad * s)) / nr
            if radial > 0:
                return grad - radial * s / nr
        return grad

    starts = [_embed(s, kappa) for s in init]
    for r in range(cfg.restarts):
        rng = _restart_rng(cfg, r)
        s = rng.standard_normal((n, kappa))
        s *= (0.25 + 0.75 * rng.random()) * bound / np.linalg.norm(s)
        starts.append(s)
    runs = [armijo_ascent(fun, s, direction, retract, cfg) for s in starts]
    runs.append((np.zeros((n, kappa)), 0.0, 0, True))
    idx, (x, f, it, conv) = _best_of(runs)
    return GroundStateResult(value=f / n, config=x, iterations=it,
                             restarts_used=len(starts), converged=conv,
                             history=[r[1] / n for r in runs])


def localized_lagrangian(g, p, t, u, kappa, cfg=None, route="direct", init=()):
    """(1/N) max of H_{N,p,t} over the ball of normalized squared l^{2,2} norm u.

    ``route="rescaled"`` solves the equivalent problem on the unit ball with
    objective u H_N - t u^{p/2} |s|_{p,2}^p; its returned configuration is
    mapped back by the factor sqrt(u).
    """
    if u <= 0:
        raise ValueError("u must be positive")
    cfg = cfg or SolverConfig()
    gm = _matrix(g)
    if route == "direct":
        return _ball_search(gm, p, kappa, 1.0, t, u, cfg, init=init)
    if route == "rescaled":
        res = _ball_search(gm, p, kappa, u, t * u ** (p / 2.0), 1.0, cfg,
                           init=[np.asarray(s) / np.sqrt(u) for s in init])
        res.config = res.config * np.sqrt(u)
        return res
    raise ValueError(f"unknown route {route!r}")


def _polar(q, n):
    u, _, vt = np.linalg.svd(q, full_matrices=False)
    return np.sqrt(n) * (u @ vt)


def constrained_lagrangian(g, p, t, d, cfg=None, init=()):
    """(1/N) max of H_{N,p,t} over configurations with self-overlap exactly D.

    Configurations are written as s = Q sqrt(D) with Q^T Q = N I, so every
    iterate is feasible; Q is retracted by its polar factor.
    """
    cfg = cfg or SolverConfig()
    gm = _matrix(g)
    n = gm.shape[0]
    d = linalg.as_sym(d)
    kappa = d.shape[0]
    if n < kappa:
        raise ValueError(f"infeasible: N={n} is smaller than kappa={kappa}")
    root_d = linalg.sqrt_psd(d)
    if np.allclose(root_d, 0):
        return GroundStateResult(value=0.0, config=np.zeros((n, kappa)), iterations=0,
                                 restarts_used=0, converged=True)
    base = _penalized(gm, p, t)

    def fun(q):
        val, grad = base(q @ root_d)
        return val, grad @ root_d

    def direction(q, grad):
        m = q.T @ grad / n
        return grad - q @ (0.5 * (m + m.T))

    def retract(q):
        return _polar(q, n)

    starts = []
    for s in init:
        s = as_config(s)
        starts.append(s @ np.linalg.pinv(root_d))
    for r in range(max(cfg.restarts, 1 if not starts else 0)):
        starts.append(_restart_rng(cfg, r).standard_normal((n, kappa)))
    runs = [armijo_ascent(fun, q, direction, retract, cfg) for q in starts]
    idx, (q, f, it, conv) = _best_of(runs)
    return GroundStateResult(value=f / n, config=q @ root_d, iterations=it,
                             restarts_used=len(runs), converged=conv,
                             history=[r[1] / n for r in runs])


# overlap constructions


def overlap_correction_matrix(r, d, eps):
    """Matrix A with A R A^T equal to the eigenvalue-thresholded D.

    Eigenvalues of D below sqrt(eps) are dropped; on the remaining block the
    rotated overlap is whitened against D's eigenvalues and recoloured.
    Returns (A, D_eps).
    """
    r = linalg.as_sym(r)
    d = linalg.as_sym(d)
    kappa = d.shape[0]
    if r.shape != d.shape:
        raise ValueError("R and D must have the same shape")
    if not 0 < eps < kappa ** -2.0:
        raise ValueError(f"eps must lie in (0, kappa^-2) = (0, {kappa ** -2.0})")
    if linalg.sup_norm(r - d) >= eps:
        raise ValueError("R is not within eps of D in the max-entry norm")
    lam, q = np.linalg.eigh(d)
    lam, q = lam[::-1], q[:, ::-1]
    keep = lam >= np.sqrt(eps)
    m = int(np.sum(keep))
    a_rot = np.zeros((kappa, kappa))
    lam_eps = np.where(keep, lam, 0.0)
    if m:
        r_rot = q.T @ r @ q
        lm = lam[:m]
        r_tilde = r_rot[:m, :m] / np.sqrt(np.outer(lm, lm))
        w, v = np.linalg.eigh(0.5 * (r_tilde + r_tilde.T))
        if w[0] <= 0:
            raise linalg.DomainError("whitened overlap block is not positive definite")
        r_tilde_inv_half = (v / np.sqrt(w)) @ v.T
        a_rot[:m, :m] = (np.sqrt(lm)[:, None] * r_tilde_inv_half) / np.sqrt(lm)[None, :]
    a = q @ a_rot @ q.T
    d_eps = (q * lam_eps) @ q.T
    return a, 0.5 * (d_eps + d_eps.T)


def correct_overlap(s, d, eps):
    """Move a configuration with overlap near D onto overlap exactly D_eps.

    Returns (A, s_new) with rows of s_new equal to A applied to rows of s.
    """
    s = as_config(s)
    a, _ = overlap_correction_matrix(overlap(s), d, eps)
    return a, s @ a.T


def correction_distortion(a, r):
    """tr((A - I) R (A - I)^T), the squared l^{2,2} displacement of the correction."""
    e = a - np.eye(a.shape[0])
    return float(np.trace(e @ r @ e.T))


def correction_bound(d, eps):
    """The explicit bound (kappa^4 tr D + 2 kappa) sqrt(eps) on the distortion."""
    d = np.asarray(d, dtype=float)
    kappa = d.shape[0]
    return (kappa ** 4 * float(np.trace(d)) + 2 * kappa) * np.sqrt(eps)


def lift_to_positive(s, eps, seed=0):
    """Add sqrt(eps) times directions orthogonal to the channels of s.

    The added columns are orthonormal for <a, b> = (1/N) sum_i a_i b_i and
    orthogonal to every channel of s, so the self-overlap shifts by eps I.
    """
    s = as_config(s)
    n, kappa = s.shape
    if n <= 2 * kappa:
        raise ValueError(f"need N > 2 kappa, got N={n}, kappa={kappa}")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if eps == 0:
        return s.copy()
    rng = replica_rng(seed, 0, stream=202)
    basis = []
    for k in range(kappa):
        col = s[:, k]
        for b in basis:
            col = col - (b @ col) * b
        nrm = np.linalg.norm(col)
        if nrm > 1e-12 * max(1.0, np.linalg.norm(s[:, k])):
            basis.append(col / nrm)
    taus = []
    while len(taus) < kappa:
        v = rng.standard_normal(n)
        before = np.linalg.norm(v)
        for _ in range(2):
            for b in basis:
                v = v - (b @ v) * b
        nrm = np.linalg.norm(v)
        if nrm < 1e-8 * before:
            continue
        v /= nrm
        basis.append(v)
        taus.append(v * np.sqrt(n))
    return s + np.sqrt(eps) * np.stack(taus, axis=1)


# identities at finite N


@dataclass
class DerivativeReport:
    t: float
    h: float
    value: float
    derivative: float
    residual: float
    norm_identity_residual: float
    transform: float


def derivative_relation_check(g, p, t, kappa, cfg=None, h=None, start=None):
    """Check L = -t (p/2 - 1) L' at t by central differences.

    The maximizer at t is rescaled to t +- h and re-polished, so both
    neighbouring values follow the same branch of maxima.
    """
    from .asymptotics import gse_transform

    cfg = cfg or SolverConfig()
    h = 1e-4 * t if h is None else h
    gm = _matrix(g)
    if start is None:
        res = lagrangian_max(gm, p, t, kappa, cfg)
    else:
        res = lagrangian_max(gm, p, t, kappa, _polish(cfg), init=[start])
    rho = res.config
    polish = _polish(cfg)

    def at(tt):
        seed = rho * (tt / t) ** (-1.0 / (p - 2.0))
        return lagrangian_max(gm, p, tt, kappa, polish, init=[seed]).value

    lo, hi = at(t - h), at(t + h)
    deriv = (hi - lo) / (2 * h)
    val = res.value
    residual = abs(val + t * (p / 2.0 - 1.0) * deriv) / (abs(val) + 1e-12)
    norm_p = norm_p2(rho, p, normalized=True) ** p
    norm_res = abs(norm_p + deriv) / (abs(deriv) + 1e-12)
    transform = gse_transform(val, p, t) if val > 0 else float("nan")
    return DerivativeReport(t=t, h=h, value=val, derivative=deriv, residual=residual,
                            norm_identity_residual=norm_res, transform=transform)


def _polish(cfg):
    return dataclasses.replace(cfg, restarts=0)


@dataclass
class EqualityReport:
    scalar: float
    vector: float
    gap: float


def scalar_vector_equality_check(a, p, kappa, cfg=None):
    """Compare the scalar l^p and vector l^{p,2} sphere maxima of a matrix."""
    if not 1 <= p <= 2:
        raise ValueError("the equality is stated for 1 <= p <= 2")
    cfg = cfg or SolverConfig()
    a = np.asarray(a, dtype=float)
    scalar = maximize_quadratic_on_sphere(a, p, 1, cfg)
    vector = maximize_quadratic_on_sphere(a, p, kappa, cfg)
    gap = (vector.value - scalar.value) / max(abs(scalar.value), 1e-300)
    return EqualityReport(scalar=scalar.value, vector=vector.value, gap=gap)
