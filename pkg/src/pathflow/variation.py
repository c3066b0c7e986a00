"""One- and two-parameter variation functionals on grids.

True partition suprema are approximated by dyadic-ladder maxima except for
1D sequences short enough for the exact O(n^2) dynamic program; every report
carries its method tag so downstream consumers know which bound they got.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import EstimationFailedError, InvalidArgumentError, TooLargeError
from .localtime import LocalTimeField

DP_MAX_LEN = 4096
PAIR_BUDGET = 10 ** 6
DP_WORK_BUDGET = 2 ** 26


@dataclass(frozen=True)
class VariationParams:
    """Variation orders used across the 2D Young machinery.

    Only the fields a given check needs have to be set; validators raise
    InvalidArgumentError naming the violated inequality.
    """

    p: Optional[float] = None
    q: Optional[float] = None
    p_tilde: Optional[float] = None
    q_tilde: Optional[float] = None
    alpha: Optional[float] = None
    delta: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    a_prime: Optional[float] = None
    b_prime: Optional[float] = None
    alpha1: Optional[float] = None
    alpha2: Optional[float] = None
    beta: Optional[float] = None

    def validate_young(self) -> None:
        """alpha/p + 1/p_tilde > 1 and (1-alpha)/q + 1/q_tilde > 1."""
        for name in ("p", "q", "p_tilde", "q_tilde", "alpha"):
            if getattr(self, name) is None:
                raise InvalidArgumentError(f"{name} required for the 2D Young condition")
        if not 0 < self.alpha < 1:
            raise InvalidArgumentError(f"alpha must lie in (0,1), got {self.alpha}")
        if not self.alpha / self.p + 1.0 / self.p_tilde > 1.0:
            raise InvalidArgumentError(
                f"Young condition violated: alpha/p + 1/p_tilde = "
                f"{self.alpha / self.p + 1.0 / self.p_tilde:.4f} <= 1"
            )
        if not (1.0 - self.alpha) / self.q + 1.0 / self.q_tilde > 1.0:
            raise InvalidArgumentError(
                f"Young condition violated: (1-alpha)/q + 1/q_tilde = "
                f"{(1.0 - self.alpha) / self.q + 1.0 / self.q_tilde:.4f} <= 1"
            )

    def validate_holder_header(self) -> None:
        """1/p + 1/(2+delta) > 1 plus the two Holder-control conditions."""
        for name in ("p", "p_tilde", "q_tilde", "alpha", "delta"):
            if getattr(self, name) is None:
                raise InvalidArgumentError(f"{name} required for the Holder-control header")
        if self.delta <= 0:
            raise InvalidArgumentError(f"delta must be > 0, got {self.delta}")
        if not 1.0 / self.p + 1.0 / (2.0 + self.delta) > 1.0:
            raise InvalidArgumentError(
                f"header condition violated: 1/p + 1/(2+delta) = "
                f"{1.0 / self.p + 1.0 / (2.0 + self.delta):.4f} <= 1"
            )
        if not self.alpha + 1.0 / self.p_tilde > 1.0:
            raise InvalidArgumentError("header condition violated: alpha + 1/p_tilde <= 1")
        if not (1.0 - self.alpha) / (2.0 + self.delta) + 1.0 / self.q_tilde > 1.0:
            raise InvalidArgumentError(
                "header condition violated: (1-alpha)/(2+delta) + 1/q_tilde <= 1"
            )

    def validate_stable(self) -> None:
        """The strict order region for the stable-process formula."""
        validate_stable_orders(self.a, self.b, self.beta)
        if self.alpha1 is not None:
            bound = 2.0 / (self.beta - 1.0)
            if not self.alpha1 > bound:
                raise InvalidArgumentError(
                    f"alpha1 must satisfy alpha1 > 2/(beta-1) = {bound:.6g}, got {self.alpha1}"
                )
        if self.alpha2 is not None:
            bound = 2.0 * self.beta / (self.beta - 1.0)
            if not self.alpha2 > bound:
                raise InvalidArgumentError(
                    f"alpha2 must satisfy alpha2 > 2*beta/(beta-1) = {bound:.6g}, got {self.alpha2}"
                )


def validate_stable_orders(a: float, b: float, beta: float) -> None:
    """Strict inequalities 1 <= a < 2b/(b+1), 1 <= b < 2/(3-b), a <= b for index beta."""
    if a is None or b is None or beta is None:
        raise InvalidArgumentError("a, b and beta are required")
    if not (1.0 < beta <= 2.0):
        raise InvalidArgumentError(f"beta must lie in (1, 2], got {beta}")
    a_bound = 2.0 * beta / (beta + 1.0)
    b_bound = 2.0 / (3.0 - beta)
    if not 1.0 <= a:
        raise InvalidArgumentError(f"a must satisfy a >= 1, got {a}")
    if not a < a_bound:
        raise InvalidArgumentError(
            f"a must satisfy a < 2*beta/(beta+1) = {a_bound:.6g}, got {a}"
        )
    if not 1.0 <= b:
        raise InvalidArgumentError(f"b must satisfy b >= 1, got {b}")
    if not b < b_bound:
        raise InvalidArgumentError(
            f"b must satisfy b < 2/(3-beta) = {b_bound:.6g}, got {b}"
        )
    if not a <= b:
        raise InvalidArgumentError(f"need a <= b, got a={a} > b={b}")


@dataclass(frozen=True)
class GridFunction2D:
    """A real function sampled on a strictly increasing time x level grid."""

    times: np.ndarray
    levels: np.ndarray
    values: np.ndarray  # (len(times), len(levels))

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        x = np.asarray(self.levels, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if t.size < 1 or x.size < 1:
            raise InvalidArgumentError("grids must be non-empty")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(x) <= 0):
            raise InvalidArgumentError("grids must be strictly increasing")
        if v.shape != (t.size, x.size):
            raise InvalidArgumentError(f"values shape {v.shape} != ({t.size}, {x.size})")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "levels", x)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, fn, times, levels) -> "GridFunction2D":
        t = np.asarray(times, dtype=np.float64)
        x = np.asarray(levels, dtype=np.float64)
        return cls(times=t, levels=x, values=fn(t[:, None], x[None, :]))

    @classmethod
    def from_local_time(cls, field: LocalTimeField) -> "GridFunction2D":
        return cls(times=field.times(), levels=field.levels.levels(), values=field.values)

    def rect_increments(self) -> np.ndarray:
        """Delta_i Delta_j of the values: (m-1, n-1) matrix of cell increments."""
        v = self.values
        return v[1:, 1:] - v[:-1, 1:] - v[1:, :-1] + v[:-1, :-1]

    def coarsen(self, k: int) -> "GridFunction2D":
        s = 2 ** k
        return GridFunction2D(times=self.times[::s], levels=self.levels[::s],
                              values=self.values[::s, ::s])

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class VariationReport:
    orders: tuple
    value: float
    method: str  # grid_sum | dp_exact | dyadic_sup
    partition_descriptor: str = "full grid"

    def __post_init__(self):
        if self.value < 0:
            raise InvalidArgumentError("variation value must be >= 0")

    def to_json(self) -> str:
        return json.dumps({"orders": list(self.orders), "value": self.value,
                           "method": self.method,
                           "ladder_level": self.partition_descriptor}, sort_keys=True)


def p_variation_grid(seq: Sequence[float], p: float) -> float:
    """(sum |increments|^p)^(1/p) over the given partition; one term of the sup."""
    if p < 1:
        raise InvalidArgumentError(f"p must be >= 1, got {p}")
    s = np.asarray(seq, dtype=np.float64)
    if s.size < 2:
        raise InvalidArgumentError("need at least 2 points")
    return float(np.sum(np.abs(np.diff(s)) ** p) ** (1.0 / p))


def p_variation_sup(seq: Sequence[float], p: float, max_n: int = DP_MAX_LEN) -> float:
    """Exact supremum over all sub-partitions by dynamic programming, O(n^2)."""
    if p < 1:
        raise InvalidArgumentError(f"p must be >= 1, got {p}")
    s = np.asarray(seq, dtype=np.float64)
    n = s.size
    if n < 2:
        raise InvalidArgumentError("need at least 2 points")
    if n > max_n:
        raise TooLargeError(f"sequence length {n} exceeds max_n={max_n}; subsample first")
    best = np.zeros(n)
    for j in range(1, n):
        best[j] = np.max(best[:j] + np.abs(s[j] - s[:j]) ** p)
    return float(np.max(best) ** (1.0 / p))


def _pvar_ladder_pow(sections: np.ndarray, p: float) -> np.ndarray:
    """Per-row sup over dyadic coarsenings of sum |diff|^p (a partition-family max)."""
    best = np.zeros(sections.shape[0])
    k = 0
    while sections[:, :: 2 ** k].shape[1] >= 2:
        sub = sections[:, :: 2 ** k]
        np.maximum(best, np.sum(np.abs(np.diff(sub, axis=1)) ** p, axis=1), out=best)
        k += 1
    return best


def _pair_indices(m: int, budget: int, rng_seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """All index pairs when affordable, else a uniform stride of them."""
    total = m * (m - 1) // 2
    iu, ju = np.triu_indices(m, k=1)
    if total <= budget:
        return iu, ju
    stride = int(np.ceil(total / budget))
    return iu[::stride], ju[::stride]


class BivariationResult(NamedTuple):
    norm_time: float   # sup over level pairs of p-variation in time
    norm_level: float  # sup over time pairs of q-variation in levels
    method: str


def bivariation(h: GridFunction2D, p: float, q: float,
                pair_budget: int = PAIR_BUDGET) -> BivariationResult:
    """(p,q)-bivariation norms of a grid function.

    Exact DP per sampled pair when the total work fits DP_WORK_BUDGET,
    otherwise the dyadic-ladder partition maximum (a lower bound of the sup).
    """
    if p < 1 or q < 1:
        raise InvalidArgumentError("orders must be >= 1")
    v = h.values
    m, n = v.shape
    if m < 2 or n < 2:
        raise InvalidArgumentError("grids need at least 2 points each")
    j1, j2 = _pair_indices(n, pair_budget)
    i1, i2 = _pair_indices(m, pair_budget)
    use_dp = (m <= DP_MAX_LEN and n <= DP_MAX_LEN
              and j1.size * m * m + i1.size * n * n <= DP_WORK_BUDGET)
    if use_dp:
        v1 = max(p_variation_sup(v[:, a] - v[:, b], p) for a, b in zip(j1, j2))
        v2 = max(p_variation_sup(v[a, :] - v[b, :], q) for a, b in zip(i1, i2))
        return BivariationResult(v1, v2, "dp_exact")
    chunk = max(1, (2 ** 22) // max(m, n))
    best1 = 0.0
    for s in range(0, j1.size, chunk):
        secs = (v[:, j1[s:s + chunk]] - v[:, j2[s:s + chunk]]).T
        best1 = max(best1, float(np.max(_pvar_ladder_pow(secs, p))))
    best2 = 0.0
    for s in range(0, i1.size, chunk):
        secs = v[i1[s:s + chunk], :] - v[i2[s:s + chunk], :]
        best2 = max(best2, float(np.max(_pvar_ladder_pow(secs, q))))
    return BivariationResult(best1 ** (1.0 / p), best2 ** (1.0 / q), "dyadic_sup")


def _joint_nested(rect: np.ndarray, inner_axis: int, p_inner: float,
                  p_outer: float) -> float:
    inner = np.sum(np.abs(rect) ** p_inner, axis=inner_axis)
    return float(np.sum(inner ** (p_outer / p_inner)) ** (1.0 / p_outer))


def _dyadic_members(h: GridFunction2D):
    k = 0
    while True:
        sub = h.values[:: 2 ** k, :: 2 ** k]
        if sub.shape[0] < 2 or sub.shape[1] < 2:
            return
        yield k, sub[1:, 1:] - sub[:-1, 1:] - sub[1:, :-1] + sub[:-1, :-1]
        k += 1


def joint_rv(h: GridFunction2D, p: float, q: float) -> float:
    """Joint right (p,q)-variation: inner sum over levels, outer over times.

    Evaluated on each member of the dyadic coarsening ladder; the maximum is
    a monotone lower bound for the partition supremum.
    """
    if p < 1 or q < 1:
        raise InvalidArgumentError("orders must be >= 1")
    best = 0.0
    for _, rect in _dyadic_members(h):
        best = max(best, _joint_nested(rect, inner_axis=1, p_inner=p, p_outer=q))
    return best


def joint_lv(h: GridFunction2D, r: float, s: float) -> float:
    """Joint left (r,s)-variation: inner sum over times, outer over levels."""
    if r < 1 or s < 1:
        raise InvalidArgumentError("orders must be >= 1")
    best = 0.0
    for _, rect in _dyadic_members(h):
        best = max(best, _joint_nested(rect, inner_axis=0, p_inner=r, p_outer=s))
    return best


def holder_control_constant(h: GridFunction2D, p_tilde: float, q_tilde: float) -> float:
    """Smallest C with |Delta_i Delta_j h| <= C dt^(1/p~) dx^(1/q~) on this grid."""
    if h.values.shape[0] < 2 or h.values.shape[1] < 2:
        raise InvalidArgumentError("grids need at least 2 points each")
    rect = np.abs(h.rect_increments())
    dt = np.diff(h.times)[:, None] ** (1.0 / p_tilde)
    dx = np.diff(h.levels)[None, :] ** (1.0 / q_tilde)
    return float(np.max(rect / (dt * dx)))


def sup_rectangular_increment(h: GridFunction2D, level_budget: int = 512) -> float:
    """max over all grid rectangles of |h(t,x)-h(t,y)-h(s,x)+h(s,y)|."""
    v = h.values
    n = v.shape[1]
    idx = np.arange(n)
    if n > level_budget:
        idx = np.unique(np.linspace(0, n - 1, level_budget).astype(int))
    best = 0.0
    for a in range(idx.size):
        g = v[:, idx[a + 1:]] - v[:, idx[a], None]
        if g.size:
            best = max(best, float(np.max(np.max(g, axis=0) - np.min(g, axis=0))))
    return best


def interpolation_check(h: GridFunction2D, a: float, b: float,
                        a_prime: float) -> tuple[float, float]:
    """Both sides of the LV interpolation bound on the stored grid.

    lhs is the (a', b')-nested sum with b' = (a'/a) b; rhs is the sup of
    rectangular increments to the power (a'-a)/a' times the (a, b)-nested sum
    to the power 1/b'.  The contract lhs <= rhs holds partition by partition.
    """
    if not a < a_prime:
        raise InvalidArgumentError(f"need a < a_prime, got a={a}, a_prime={a_prime}")
    if a < 1 or b < 1:
        raise InvalidArgumentError("orders must be >= 1")
    b_prime = a_prime / a * b
    rect = np.abs(h.rect_increments())
    inner_ap = np.sum(rect ** a_prime, axis=0)
    lhs = float(np.sum(inner_ap ** (b_prime / a_prime)) ** (1.0 / b_prime))
    inner_a = np.sum(rect ** a, axis=0)
    nested_ab = float(np.sum(inner_a ** (b / a)) ** (1.0 / b_prime))
    sup_rect = sup_rectangular_increment(h)
    rhs = sup_rect ** ((a_prime - a) / a_prime) * nested_ab
    return lhs, rhs


def holder_exponent_fit(field: LocalTimeField, axis: str,
                        base_lag: Optional[int] = None, cross_lag: Optional[int] = None,
                        n_spacings: int = 4) -> float:
    """Scaling exponent of the field along one axis.

    Fits the least-squares slope of log median |double increment| against log
    spacing over n_spacings dyadic lags, the other axis held at a fixed small
    lag.  Lags start at twice the smoothing bandwidth so the fit window sits
    above the estimator's smearing scale.
    """
    if axis not in ("space", "time"):
        raise InvalidArgumentError(f"axis must be 'space' or 'time', got {axis!r}")
    v = field.values
    n_rows, n_lvls = v.shape
    lpe = max(1, int(round(field.bandwidth / field.levels.spacing)))
    if base_lag is None:
        base_lag = 2 * lpe if axis == "space" else max(1, n_rows // 64)
    if cross_lag is None:
        cross_lag = max(1, n_rows // 64) if axis == "space" else 2 * lpe
    meds, lags = [], []
    for k in range(n_spacings):
        s = base_lag * 2 ** k
        if axis == "space":
            if s >= n_lvls or cross_lag >= n_rows:
                break
            d = v[:, s:] - v[:, :-s]
            dd = np.abs(d[cross_lag:, :] - d[:-cross_lag, :])
        else:
            if s >= n_rows or cross_lag >= n_lvls:
                break
            d = v[s:, :] - v[:-s, :]
            dd = np.abs(d[:, cross_lag:] - d[:, :-cross_lag])
        vals = dd[dd > 1e-14]
        if vals.size < 10:
            break
        meds.append(np.median(vals))
        lags.append(s)
    if len(meds) < 3:
        raise EstimationFailedError(
            f"not enough usable spacings for the {axis} fit (got {len(meds)})"
        )
    A = np.vstack([np.log(lags), np.ones(len(lags))]).T
    slope = np.linalg.lstsq(A, np.log(meds), rcond=None)[0][0]
    return float(slope)
