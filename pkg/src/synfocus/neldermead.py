"""Nelder-Mead downhill simplex search.

Direct search over k parameters with the classic reflection / expansion /
contraction / shrink moves. The best vertex is never discarded, so the
returned value is at least as good as the starting point. Termination is by
simplex spread: the iteration stops once both the parameter spread and the
objective spread of the simplex fall below the configured tolerances, or
when max_iterations is reached.

The implementation maximizes or minimizes according to `sense`; internally
a maximization is run as minimization of the negated objective. Candidate
values of -inf (or NaN) are legal away from the start point and simply rank
worst, which is how callers express out-of-bounds penalties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteObjective


@dataclass(frozen=True)
class NelderMeadConfig:
    """Simplex move coefficients and termination settings."""

    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    f_tolerance: float = 1e-8
    x_tolerance: float = 1e-8
    max_iterations: int = 500

    def __post_init__(self):
        if not self.reflection > 0:
            raise ValueError("reflection must be positive")
        if not self.expansion > self.reflection:
            raise ValueError("expansion must exceed reflection")
        if not 0 < self.contraction < 1:
            raise ValueError("contraction must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")


def nelder_mead(
    objective,
    x0,
    config: NelderMeadConfig = NelderMeadConfig(),
    sense: str = "minimize",
    step=0.1,
):
    """Optimize `objective` from `x0`.

    step gives the initial simplex edge per coordinate (scalar or length-k).
    Returns (x_best, f_best, converged). f_best is the best objective value
    over every evaluated point including x0, in the caller's sense.

    Raises NonFiniteObjective when the objective is not finite at x0.
    """
    if sense not in ("minimize", "maximize"):
        raise ValueError("sense must be 'minimize' or 'maximize'")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    k = x0.size
    if k < 1:
        raise ValueError("x0 must have at least one coordinate")
    sign = -1.0 if sense == "maximize" else 1.0

    def f(x):
        value = sign * float(objective(x))
        return np.inf if np.isnan(value) else value

    f0 = f(x0)
    if not np.isfinite(f0):
        raise NonFiniteObjective(f"objective is {sign * f0} at the start point")
    if config.max_iterations == 0:
        return x0.copy(), sign * f0, False

    steps = np.broadcast_to(np.asarray(step, dtype=float), (k,))
    if not np.all(steps > 0):
        raise ValueError("step must be positive")
    sim = np.empty((k + 1, k))
    fsim = np.empty(k + 1)
    sim[0] = x0
    fsim[0] = f0
    for i in range(k):
        vertex = x0.copy()
        vertex[i] += steps[i]
        sim[i + 1] = vertex
        fsim[i + 1] = f(vertex)

    rho, chi, psi, sigma = config.reflection, config.expansion, config.contraction, config.shrink
    converged = False
    for _ in range(config.max_iterations):
        order = np.argsort(fsim, kind="stable")
        sim = sim[order]
        fsim = fsim[order]
        if (
            np.max(np.abs(sim[1:] - sim[0])) <= config.x_tolerance
            and np.max(np.abs(fsim[1:] - fsim[0])) <= config.f_tolerance
        ):
            converged = True
            break
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + rho * (centroid - sim[-1])
        fr = f(xr)
        if fr < fsim[0]:
            xe = centroid + rho * chi * (centroid - sim[-1])
            fe = f(xe)
            if fe < fr:
                sim[-1], fsim[-1] = xe, fe
            else:
                sim[-1], fsim[-1] = xr, fr
        elif fr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fr
        else:
            shrink_all = False
            if fr < fsim[-1]:
                xc = centroid + psi * rho * (centroid - sim[-1])
                fc = f(xc)
                if fc <= fr:
                    sim[-1], fsim[-1] = xc, fc
                else:
                    shrink_all = True
            else:
                xcc = centroid - psi * (centroid - sim[-1])
                fcc = f(xcc)
                if fcc < fsim[-1]:
                    sim[-1], fsim[-1] = xcc, fcc
                else:
                    shrink_all = True
            if shrink_all:
                for j in range(1, k + 1):
                    sim[j] = sim[0] + sigma * (sim[j] - sim[0])
                    fsim[j] = f(sim[j])

    best = int(np.argmin(fsim))
    return sim[best].copy(), sign * fsim[best], converged
