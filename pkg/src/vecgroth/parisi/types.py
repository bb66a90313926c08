"""Order parameters: matrix paths, discrete measures, multipliers, quadrature."""

import json
from dataclasses import dataclass

import numpy as np

from .. import linalg

FINITE = "finite"
PROBABILITY = "probability"


def n_pairs(kappa):
    return kappa * (kappa + 1) // 2


def multiplier_matrix(lam, kappa):
    """Symmetric M with s^T M s = sum_{k <= k'} lam_{kk'} s_k s_k'.

    ``lam`` lists the upper triangle row by row.
    """
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size != n_pairs(kappa):
        raise ValueError(f"expected {n_pairs(kappa)} multiplier entries, got {lam.size}")
    m = np.zeros((kappa, kappa))
    iu = np.triu_indices(kappa)
    m[iu] = lam
    return 0.5 * (m + m.T)


def multiplier_pairing(lam, d):
    """sum_{k <= k'} lam_{kk'} D_{kk'}."""
    d = np.asarray(d, dtype=float)
    kappa = d.shape[0]
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size != n_pairs(kappa):
        raise ValueError(f"expected {n_pairs(kappa)} multiplier entries, got {lam.size}")
    return float(lam @ d[np.triu_indices(kappa)])


@dataclass(frozen=True)
class Path:
    """Piecewise-linear path with pi(q_j) = gamma_j.

    ``q`` holds q_0..q_r with q_r = 1 and ``gamma`` holds gamma_0..gamma_r
    with gamma_0 = 0.  On [0, q_0] the path is identically zero.
    """

    q: tuple
    gamma: tuple

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        gam = [linalg.as_sym(g) for g in self.gamma]
        if len(q) != len(gam) or len(q) < 2:
            raise ValueError("need matching knots and values with r >= 1")
        if q[0] < 0 or np.any(np.diff(q) < 0) or q[-1] != 1.0:
            raise ValueError("knots must be nondecreasing in [0, 1] and end at 1")
        if not np.allclose(gam[0], 0.0, atol=0.0):
            raise ValueError("gamma_0 must be zero")
        for a, b in zip(gam[:-1], gam[1:]):
            if a.shape != b.shape:
                raise ValueError("gamma matrices must share one shape")
            if not linalg.loewner_leq(a, b, 1e-10 * linalg.trace_scale(b)):
                raise ValueError("gamma values must be Loewner nondecreasing")
        object.__setattr__(self, "q", tuple(float(v) for v in q))
        object.__setattr__(self, "gamma", tuple(gam))

    @property
    def r(self):
        return len(self.q) - 1

    @property
    def kappa(self):
        return self.gamma[0].shape[0]

    @property
    def d(self):
        return self.gamma[-1]

    def increments(self):
        """gamma_j - gamma_{j-1} for j = 1..r."""
        return [b - a for a, b in zip(self.gamma[:-1], self.gamma[1:])]

    def slope(self, j):
        """pi' on [q_j, q_{j+1})."""
        dq = self.q[j + 1] - self.q[j]
        if dq <= 0:
            raise ValueError(f"interval {j} has zero length")
        return (self.gamma[j + 1] - self.gamma[j]) / dq

    def at(self, s):
        """pi(s)."""
        if s <= self.q[0]:
            return np.zeros_like(self.gamma[0])
        for j in range(self.r):
            lo, hi = self.q[j], self.q[j + 1]
            if s <= hi:
                if hi == lo:
                    return self.gamma[j + 1].copy()
                w = (s - lo) / (hi - lo)
                return (1 - w) * self.gamma[j] + w * self.gamma[j + 1]
        return self.gamma[-1].copy()

    @classmethod
    def simple(cls, d, levels):
        """Path through given endpoint fractions c_1 <= ... <= c_r = 1 of D.

        ``levels`` are the fractions for gamma_1..gamma_r; knots are evenly
        spaced.
        """
        d = linalg.as_sym(d)
        levels = list(levels)
        r = len(levels)
        q = [(j + 1) / (r + 1) for j in range(r)] + [1.0]
        gam = [np.zeros_like(d)] + [c * d for c in levels]
        return cls(q=tuple(q), gamma=tuple(gam))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weights zeta_0 <= ... <= zeta_r attached to the knots of a path."""

    weights: tuple
    flavor: str = FINITE

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise ValueError("need at least two weights")
        if np.any(w < 0) or np.any(np.diff(w) < 0):
            raise ValueError("weights must be nonnegative and nondecreasing")
        if self.flavor not in (FINITE, PROBABILITY):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if self.flavor == PROBABILITY and (w[-1] != 1.0 or np.any(w > 1)):
            raise ValueError("probability weights must lie in [0, 1] and end at 1")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))

    def scaled(self, factor):
        """Weights multiplied by ``factor`` as a finite measure."""
        return DiscreteMeasure(tuple(factor * w for w in self.weights), FINITE)


@dataclass(frozen=True)
class QuadratureSpec:
    mode: str = "grid"
    nodes: int = 0
    samples: int = 100_000
    truncation: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("grid", "mc"):
            raise ValueError("mode must be 'grid' or 'mc'")
        if self.nodes < 0 or self.samples < 1 or self.truncation <= 0:
            raise ValueError("quadrature counts and truncation must be positive")

    def nodes_for(self, kappa):
        if self.nodes:
            return self.nodes
        return 64 if kappa == 1 else 24


@dataclass(frozen=True)
class ParisiParams:
    lam: tuple
    weights: DiscreteMeasure
    path: Path

    def __post_init__(self):
        if len(self.weights.weights) != len(self.path.q):
            raise ValueError("weights and path must share the same knots")
        object.__setattr__(self, "lam", tuple(float(v) for v in np.ravel(self.lam)))
        n_pairs_needed = n_pairs(self.path.kappa)
        if len(self.lam) != n_pairs_needed:
            raise ValueError(f"expected {n_pairs_needed} multiplier entries")

    def to_json(self):
        doc = {
            "kappa": self.path.kappa,
            "r": self.path.r,
            "q": list(self.path.q),
            "gamma": [g.tolist() for g in self.path.gamma],
            "weights": list(self.weights.weights),
            "lambda": list(self.lam),
            "flavor": self.weights.flavor,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text) if isinstance(text, str) else text
        missing = {"kappa", "r", "q", "gamma", "weights", "lambda", "flavor"} - set(doc)
        if missing:
            raise ValueError(f"parameter document lacks fields {sorted(missing)}")
        path = Path(q=tuple(doc["q"]), gamma=tuple(np.array(g, dtype=float) for g in doc["gamma"]))
        if path.kappa != doc["kappa"] or path.r != doc["r"]:
            raise ValueError("kappa or r inconsistent with the listed values")
        return cls(lam=tuple(doc["lambda"]),
                   weights=DiscreteMeasure(tuple(doc["weights"]), doc["flavor"]),
                   path=path)
