"""Grid Young-Stieltjes integration, 1D and 2D, plus non-anticipative sums.

All sums are left-point in every coordinate, matching the non-anticipative
convention used by the stochastic terms.  2D integrals certify themselves by
recomputing on dyadic coarsenings of their grid and reporting the Cauchy gap.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .paths import SamplePath
from .variation import GridFunction2D

CONVERGENCE_TOL = 1e-3


@dataclass(frozen=True)
class Integral2DResult:
    value: float
    ladder_values: tuple
    converged: bool
    cauchy_gap: float
    integrator_edges_vanish: bool


class SummationByParts(NamedTuple):
    interior: float
    boundary_time: float
    boundary_space: float
    corner: float

    @property
    def total(self) -> float:
        return self.interior + self.boundary_time + self.boundary_space + self.corner


def young_integral_1d(h: Sequence[float], G: Sequence[float]) -> float:
    """Left-point Riemann-Stieltjes sum of h against dG on a common grid."""
    h = np.asarray(h, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    if h.shape != G.shape:
        raise InvalidArgumentError(f"length mismatch: {h.shape} vs {G.shape}")
    if h.size < 2:
        raise InvalidArgumentError("need at least 2 points")
    return float(np.sum(h[:-1] * np.diff(G)))


def _direct_2d(hv: np.ndarray, Gv: np.ndarray) -> float:
    rect = Gv[1:, 1:] - Gv[:-1, 1:] - Gv[1:, :-1] + Gv[:-1, :-1]
    return float(np.sum(hv[:-1, :-1] * rect))


def _coarse_idx(n: int, k: int) -> np.ndarray:
    idx = np.arange(0, n, 2 ** k)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def young_integral_2d(h: GridFunction2D, G: GridFunction2D,
                      tol: float = CONVERGENCE_TOL) -> Integral2DResult:
    """2D Young integral of h against the rectangular increments of G.

    value = sum_ij h[i-1, j-1] * Delta_i Delta_j G; the ladder recomputes on
    dyadic coarsenings (coarsest first) to witness Cauchy behaviour.
    """
    if not (np.array_equal(h.times, G.times) and np.array_equal(h.levels, G.levels)):
        raise InvalidArgumentError("h and G must live on identical grids")
    m, n = h.shape
    if m < 2 or n < 2:
        raise InvalidArgumentError("grids need at least 2 points each")
    kmax = 0
    while _coarse_idx(m, kmax + 1).size >= 2 and _coarse_idx(n, kmax + 1).size >= 2 \
            and 2 ** (kmax + 1) < max(m, n):
        kmax += 1
    ladder = []
    for k in range(kmax, -1, -1):
        it, ix = _coarse_idx(m, k), _coarse_idx(n, k)
        ladder.append(_direct_2d(h.values[np.ix_(it, ix)], G.values[np.ix_(it, ix)]))
    value = ladder[-1]
    gap = abs(ladder[-1] - ladder[-2]) if len(ladder) >= 2 else 0.0
    converged = gap <= tol * (1.0 + abs(value))
    edges = bool(np.all(np.abs(G.values[0, :]) < 1e-12)
                 and np.all(np.abs(G.values[:, 0]) < 1e-12))
    return Integral2DResult(value=value, ladder_values=tuple(ladder), converged=converged,
                            cauchy_gap=gap, integrator_edges_vanish=edges)


def summation_by_parts_2d(h: GridFunction2D, G: GridFunction2D) -> SummationByParts:
    """Discrete Abel transform of the 2D Young sum.

    Returns the four signed terms (interior double sum against G, the two
    boundary telescopes, the corner telescope) whose plain sum equals the
    direct left-point 2D sum exactly; the identity is algebraic at grid level.
    """
    if not (np.array_equal(h.times, G.times) and np.array_equal(h.levels, G.levels)):
        raise InvalidArgumentError("h and G must live on identical grids")
    a, b = h.values, G.values
    m, n = a.shape[0] - 1, a.shape[1] - 1
    if m < 1 or n < 1:
        raise InvalidArgumentError("grids need at least 2 points each")
    corner = (a[m - 1, n - 1] * b[m, n] - a[m - 1, 0] * b[m, 0]
              - a[0, n - 1] * b[0, n] + a[0, 0] * b[0, 0])
    boundary_time = 0.0
    if n >= 2:
        dj_last = a[m - 1, 1:n] - a[m - 1, 0:n - 1]
        dj_first = a[0, 1:n] - a[0, 0:n - 1]
        boundary_time = float(-np.sum(dj_last * b[m, 1:n]) + np.sum(dj_first * b[0, 1:n]))
    boundary_space = 0.0
    if m >= 2:
        di_last = a[1:m, n - 1] - a[0:m - 1, n - 1]
        di_first = a[1:m, 0] - a[0:m - 1, 0]
        boundary_space = float(-np.sum(di_last * b[1:m, n]) + np.sum(di_first * b[1:m, 0]))
    interior = 0.0
    if m >= 2 and n >= 2:
        rect_a = a[1:m, 1:n] - a[0:m - 1, 1:n] - a[1:m, 0:n - 1] + a[0:m - 1, 0:n - 1]
        interior = float(np.sum(rect_a * b[1:m, 1:n]))
    return SummationByParts(interior=interior, boundary_time=boundary_time,
                            boundary_space=boundary_space, corner=float(corner))


def ito_forward_integral(integrand: Sequence[float], path: SamplePath,
                         upto: Optional[int] = None) -> float:
    """Non-anticipative forward sum: sum_k integrand[k-1] * (X[k] - X[k-1]).

    The caller guarantees integrand[k] uses information up to index k only.
    """
    values = path.values if isinstance(path, SamplePath) else np.asarray(path, dtype=np.float64)
    g = np.asarray(integrand, dtype=np.float64)
    if upto is None:
        upto = values.size - 1
    if not 0 <= upto <= values.size - 1:
        raise InvalidArgumentError(f"upto {upto} outside [0, {values.size - 1}]")
    if g.size < upto:
        raise InvalidArgumentError(f"integrand too short: {g.size} < {upto}")
    if upto == 0:
        return 0.0
    return float(np.sum(g[:upto] * np.diff(values[: upto + 1])))
