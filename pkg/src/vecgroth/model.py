"""Gaussian disorder, the vector-spin SK Hamiltonian, overlaps and norms.

Spin configurations are ``(N, kappa)`` arrays whose row ``i`` is the vector
spin at site ``i``; column ``k`` is the ``k``-th coordinate channel.
"""

from dataclasses import dataclass

import numpy as np


class NumericError(RuntimeError):
    """An iterative numerical routine failed to converge."""


@dataclass(frozen=True)
class Disorder:
    seed: int
    n: int
    g: np.ndarray
    replica: int = 0


def replica_rng(seed, replica=0, stream=0):
    """Counter-based generator keyed by ``(seed, replica, stream)``."""
    ss = np.random.SeedSequence([int(seed), int(replica), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def sample_disorder(seed, n, replica=0):
    if n < 1:
        raise ValueError("n must be at least 1")
    g = replica_rng(seed, replica).standard_normal((n, n))
    g.setflags(write=False)
    return Disorder(seed=int(seed), n=int(n), g=g, replica=int(replica))


def as_config(s):
    a = np.asarray(s, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"spin configuration must be (N, kappa), got {a.shape}")
    return a


def _matrix(g):
    return g.g if isinstance(g, Disorder) else np.asarray(g, dtype=float)


def overlap(a, b=None):
    a = as_config(a)
    b = a if b is None else as_config(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    r = a.T @ b / a.shape[0]
    if b is a:
        r = 0.5 * (r + r.T)
    return r


def site_norms(s):
    return np.sqrt(np.sum(as_config(s) ** 2, axis=1))


def norm_p2(s, p, normalized=False):
    """The l^{p,2} norm; ``normalized`` divides the p-th power by N."""
    if p < 1:
        raise ValueError("p must be at least 1")
    s = as_config(s)
    total = np.sum(site_norms(s) ** p)
    if normalized:
        total /= s.shape[0]
    return float(total ** (1.0 / p))


def hamiltonian_unscaled(g, s):
    gm = _matrix(g)
    s = as_config(s)
    if gm.shape != (s.shape[0], s.shape[0]):
        raise ValueError(f"disorder {gm.shape} does not match configuration {s.shape}")
    return float(np.sum(s * (gm @ s)))


def hamiltonian(g, s):
    s = as_config(s)
    return hamiltonian_unscaled(g, s) / np.sqrt(s.shape[0])


def lagrangian_hamiltonian(g, s, p, t):
    return hamiltonian(g, s) - t * norm_p2(s, p) ** p


def penalty_gradient(s, p):
    """Gradient of sum_i |s_i|^p; zero rows get a zero gradient."""
    s = as_config(s)
    nrm = site_norms(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(nrm > 0, nrm ** (p - 2.0), 0.0)
    return p * s * factor[:, None]


def grad_hamiltonian(g, s, p, t):
    gm = _matrix(g)
    s = as_config(s)
    n = s.shape[0]
    grad = (gm @ s + gm.T @ s) / np.sqrt(n)
    if t:
        grad -= t * penalty_gradient(s, p)
    return grad


def goe(g):
    gm = _matrix(g)
    return (gm + gm.T) / np.sqrt(2.0)


def power_iteration(matvec, n, tol=1e-8, max_iter=None, rng=None, shift=0.0):
    """Largest eigenvalue of a symmetric operator by power iteration.

    ``shift`` is added to the operator so that an indefinite matrix can be
    made positive; the returned eigenvalue has the shift removed again.
    Convergence is declared once the Rayleigh quotient changes by less than
    ``tol`` relative between iterations.
    """
    if max_iter is None:
        max_iter = 10 * n
    rng = np.random.default_rng(0) if rng is None else rng
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    prev = None
    for it in range(1, max_iter + 1):
        w = matvec(v) + shift * v
        rq = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return -shift + 0.0, v, it
        v = w / nw
        if prev is not None and abs(rq - prev) <= tol * max(abs(rq), 1e-300):
            return rq - shift, v, it
        prev = rq
    raise NumericError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(last Rayleigh quotient {prev!r})"
    )


def opnorm_scaled(g, tol=1e-8, max_iter=None):
    """Operator norm of G divided by sqrt(N), via power iteration on G^T G."""
    gm = _matrix(g)
    n = gm.shape[0]
    lam, _, _ = power_iteration(lambda v: gm.T @ (gm @ v), n, tol=tol,
                                max_iter=max_iter)
    return float(np.sqrt(max(lam, 0.0)) / np.sqrt(n))


def lambda_max_sym(a, tol=1e-8, max_iter=None):
    """Largest eigenvalue of the symmetric part of ``a``.

    Uses shifted power iteration: a rough spectral-radius estimate from a
    few iterations on S^2 shifts the spectrum so that the top eigenvalue is
    the dominant one.
    """
    a = np.asarray(a, dtype=float)
    s = 0.5 * (a + a.T)
    n = s.shape[0]
    rng = np.random.default_rng(1)
    v = rng.standard_normal(n)
    for _ in range(30):
        w = s @ (s @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, v / np.linalg.norm(v)
        v = w / nw
    radius = float(np.sqrt(np.linalg.norm(s @ (s @ v))))
    lam, vec, _ = power_iteration(lambda x: s @ x, n, tol=tol, max_iter=max_iter,
                                  shift=1.05 * radius)
    return lam, vec
