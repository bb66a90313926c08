"""Closed-form large-N limits and the ground-state/Lagrangian transform."""

import math
from dataclasses import dataclass

SCALINGS = {
    "p=1": "sqrt(log N)",
    "1<p<2": "N^(1/p*)",
    "p=2": "sqrt(N)",
    "p>2": "N^(3/2-2/p)",
}


def conjugate_exponent(p):
    if p <= 1:
        return math.inf
    return p / (p - 1)


def gaussian_abs_moment(q):
    """E|g|^q for a standard Gaussian g."""
    if q <= -1:
        raise ValueError("q must exceed -1")
    return math.exp(0.5 * q * math.log(2.0) + math.lgamma((q + 1) / 2) - 0.5 * math.log(math.pi))


def regime(p):
    if p < 1:
        raise ValueError("p must be at least 1")
    if p == 1:
        return "p=1"
    if p < 2:
        return "1<p<2"
    if p == 2:
        return "p=2"
    return "p>2"


@dataclass(frozen=True)
class LimitResult:
    p: float
    regime: str
    scaling_exponent: str
    constant: object

    def __post_init__(self):
        if regime(self.p) != self.regime:
            raise ValueError(f"regime {self.regime!r} does not match p={self.p}")


def limit_constant(p):
    """Almost-sure limit of GP_{N,p} under the regime's N-scaling.

    For 1 < p < 2 the constant tends to 2^(-1/2) as p -> 2 from below, while
    the p = 2 row is sqrt(2): the two scalings differ, so the jump is real.
    """
    if not 1 <= p <= 2:
        raise ValueError("closed-form limits exist only for 1 <= p <= 2")
    kind = regime(p)
    if kind == "1<p<2":
        ps = conjugate_exponent(p)
        const = 2 ** (0.5 - 2 / p) * gaussian_abs_moment(ps) ** (1 / ps)
    else:
        const = math.sqrt(2.0)
    return LimitResult(p=p, regime=kind, scaling_exponent=SCALINGS[kind], constant=const)


def describe_regime(p):
    """Scaling description for any p >= 1; above 2 the constant is variational."""
    kind = regime(p)
    if kind == "p>2":
        return LimitResult(p=p, regime=kind, scaling_exponent=SCALINGS[kind], constant="variational")
    return limit_constant(p)


def _transform_factor(p, t):
    if p <= 2:
        raise ValueError("the transform needs p > 2")
    if t <= 0:
        raise ValueError("t must be positive")
    return (p / 2) * (p / 2 - 1) ** (2 / p - 1) * t ** (2 / p)


def gse_transform(lagrangian_value, p, t):
    """Ground-state energy from the Lagrangian value at penalty weight t."""
    if lagrangian_value <= 0:
        raise ValueError("the Lagrangian value must be positive")
    return _transform_factor(p, t) * lagrangian_value ** (1 - 2 / p)


def lagrangian_from_gse(gse_value, p, t):
    """Inverse of ``gse_transform`` in its first argument."""
    if gse_value <= 0:
        raise ValueError("the ground-state energy must be positive")
    return (gse_value / _transform_factor(p, t)) ** (1 / (1 - 2 / p))


def goe_edge_reference(n):
    """Edge prediction 2 sqrt(N) for the top eigenvalue of (G + G^T)/sqrt(2)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return 2 * math.sqrt(n)
