"""Shared first-order ascent loop."""

import numpy as np


def armijo_ascent(fun, x0, direction, retract, cfg, jump=None):
    """Projected gradient ascent with Armijo backtracking.

    ``fun`` returns (value, gradient); ``direction`` maps (x, grad) to the
    projected ascent direction; ``retract`` maps a trial point back onto the
    feasible set.  ``jump`` optionally proposes a candidate point that is
    taken whenever it increases the objective.  Step lengths are relative
    to ``|x|`` so the same settings work across problem scalings.
    Returns (x, value, iterations, converged).
    """
    x = retract(x0)
    f, g = fun(x)
    rel = cfg.step0
    trail = [f]
    for it in range(1, cfg.max_iter + 1):
        if len(trail) > cfg.stall_window:
            old = trail[-cfg.stall_window - 1]
            if f - old <= cfg.value_tol * max(1.0, abs(f)):
                return x, f, it, True
        trail.append(f)
        d = direction(x, g)
        dn = float(np.linalg.norm(d))
        if dn <= cfg.grad_tol * max(1.0, float(np.linalg.norm(g))):
            return x, f, it, True
        if jump is not None:
            y = jump(x, g)
            if y is not None:
                fy, gy = fun(y)
                if fy > f + 1e-14 * max(1.0, abs(f)):
                    x, f, g = y, fy, gy
                    continue
        scale = max(float(np.linalg.norm(x)), 1.0)
        eta = rel * scale / dn
        for _ in range(cfg.max_halvings + 1):
            y = retract(x + eta * d)
            fy, gy = fun(y)
            if fy >= f + 1e-4 * float(np.sum(g * (y - x))) and fy >= f:
                break
            eta *= 0.5
        else:
            # no admissible step: stationary up to rounding
            return x, f, it, dn <= 1e-6 * max(1.0, float(np.linalg.norm(g)))
        moved = float(np.linalg.norm(y - x))
        x, f, g = y, fy, gy
        rel = min(2.0 * eta * dn / scale, 1.0)
        if moved <= 1e-15 * scale:
            return x, f, it, dn <= 1e-6 * max(1.0, float(np.linalg.norm(g)))
    return x, f, cfg.max_iter, False
