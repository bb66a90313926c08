"""Small dense symmetric-matrix kernel.

Matrices are plain ``numpy`` arrays. Anything that enters through
:func:`as_sym` is symmetrized by averaging with its transpose, so drift from
accumulated asymmetry never reaches an eigendecomposition.
"""

import numpy as np

PSD_TOL = 1e-10


class DomainError(ValueError):
    """Input lies outside the mathematical domain of an operation."""


def as_sym(m):
    """Return ``(m + m.T) / 2`` as a float array, rejecting non-finite input."""
    a = np.array(m, dtype=float, ndmin=2)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    return 0.5 * (a + a.T)


def trace_scale(m):
    """Scale used for relative PSD tolerances: ``max(1, |tr m|, max|m_ij|)``."""
    return max(1.0, abs(float(np.trace(m))), float(np.max(np.abs(m), initial=0.0)))


def eigh(m):
    a = as_sym(m)
    return np.linalg.eigh(a)


def min_eig(m):
    return float(np.linalg.eigvalsh(as_sym(m))[0])


def is_psd(m, tol=0.0):
    """True iff the smallest eigenvalue of the symmetrized ``m`` is at least ``-tol``."""
    if tol < 0:
        raise DomainError("tol must be non-negative")
    return min_eig(m) >= -tol


def is_gram(m, tol=PSD_TOL):
    """PSD check with the tolerance scaled by the trace of ``m``."""
    a = as_sym(m)
    return is_psd(a, tol * trace_scale(a))


def loewner_leq(a, b, tol=0.0):
    """True iff ``b - a`` is PSD up to ``tol``."""
    a = as_sym(a)
    b = as_sym(b)
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch {a.shape} vs {b.shape}")
    return is_psd(b - a, tol)


def sqrt_psd(m, tol=PSD_TOL):
    """Symmetric PSD square root.

    Eigenvalues down to ``-tol * scale`` are clamped to zero; anything more
    negative is treated as a genuinely indefinite input and rejected.
    """
    a = as_sym(m)
    w, v = np.linalg.eigh(a)
    if w[0] < -tol * trace_scale(a):
        raise DomainError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    s = (v * np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def inv_sqrt_pd(m):
    """Inverse square root of a strictly positive definite matrix."""
    a = as_sym(m)
    w, v = np.linalg.eigh(a)
    if w[0] <= 0:
        raise DomainError(f"matrix is not positive definite (min eigenvalue {w[0]:.3e})")
    s = (v / np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def hs_norm(m):
    return float(np.sqrt(np.sum(np.asarray(m, dtype=float) ** 2)))


def sum_entries(m):
    return float(np.sum(m))


def hadamard(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch {a.shape} vs {b.shape}")
    return a * b


def sup_norm(m):
    return float(np.max(np.abs(m), initial=0.0))


def gershgorin_psd_certificate(m):
    """Diagonal dominance with a non-negative diagonal: a sufficient PSD test."""
    a = as_sym(m)
    diag = np.diag(a)
    off = np.sum(np.abs(a - np.diag(diag)), axis=1)
    return bool(np.all(diag >= off))


def pd_perturbation_threshold(a, p):
    """Size below which ``a + eps * p`` stays positive definite.

    Returns ``lambda_min(a) / (n * max|p_ij|)``, or ``inf`` when ``p`` is zero.
    """
    a = as_sym(a)
    p = as_sym(p)
    if a.shape != p.shape:
        raise DomainError(f"dimension mismatch {a.shape} vs {p.shape}")
    lam = min_eig(a)
    if lam <= 0:
        raise DomainError("a must be strictly positive definite")
    pinf = sup_norm(p)
    if pinf == 0:
        return float("inf")
    return lam / (a.shape[0] * pinf)
