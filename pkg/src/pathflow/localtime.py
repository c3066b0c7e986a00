"""Local-time fields on space-time grids.

The occupation estimator puts a half-open window of width 2*eps around the
left-sampled path value and spreads the step weight (d[X,X] or dt) uniformly
over the level points inside.  Level grids built by level_grid_for use a
spacing that divides eps exactly, so summing the field against the level
spacing reproduces the discrete occupation sums with no quadrature error.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError
from .paths import QVPath, SamplePath

QV_WEIGHTED = "qv_weighted"
TIME_WEIGHTED = "time_weighted"

_CONVENTION_TAGS = {QV_WEIGHTED: 0, TIME_WEIGHTED: 1}
_TAG_CONVENTIONS = {v: k for k, v in _CONVENTION_TAGS.items()}

_BINARY_MAGIC = b"PFL2"

# Mean undershoot of a discretely monitored extremum below the continuous one,
# in units of (local sd per step): zeta(1/2)/sqrt(2*pi).  Used to recenter the
# occupation window of the singular-level estimator at reflecting boundaries.
EXTREMUM_DEFECT = 0.5826

MAX_STORED_ROWS = 4096


def default_bandwidth(path: SamplePath, scale: float = 1.0, exponent: float = 0.4) -> float:
    """Bandwidth coupling eps(n) = scale * (T/n)^exponent."""
    return scale * path.dt ** exponent


def default_time_indices(n_steps: int) -> np.ndarray:
    """Every index up to 2^12 points, otherwise a uniform stride hitting 0 and n."""
    if n_steps <= MAX_STORED_ROWS:
        return np.arange(n_steps + 1)
    stride = int(np.ceil(n_steps / MAX_STORED_ROWS))
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


@dataclass(frozen=True)
class LevelGrid:
    """Uniform spatial grid x_j = lo + j*(hi-lo)/n_levels, j = 0..n_levels."""

    lo: float
    hi: float
    n_levels: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidArgumentError("need lo < hi")
        if self.n_levels < 1:
            raise InvalidArgumentError("need n_levels >= 1")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.n_levels

    def levels(self) -> np.ndarray:
        return self.lo + np.arange(self.n_levels + 1) * self.spacing


def level_grid_for(values, eps: float, levels_per_bandwidth: int = 4,
                   margin_bandwidths: float = 3.0,
                   lo: Optional[float] = None, hi: Optional[float] = None) -> LevelGrid:
    """Grid spanning the value range plus a margin, spacing = eps/levels_per_bandwidth.

    The margin (3*eps by default) guarantees the field vanishes on the first
    and last level.  Pass lo/hi to trim the span, e.g. for heavy-tailed paths.
    """
    v = values.values if isinstance(values, SamplePath) else np.asarray(values)
    if eps <= 0:
        raise InvalidArgumentError("eps must be > 0")
    if lo is None:
        lo = float(v.min()) - margin_bandwidths * eps
    if hi is None:
        hi = float(v.max()) + margin_bandwidths * eps
    spacing = eps / levels_per_bandwidth
    n_levels = int(np.ceil((hi - lo) / spacing))
    return LevelGrid(lo=lo, hi=lo + n_levels * spacing, n_levels=n_levels)


@dataclass(frozen=True)
class LocalTimeField:
    """The two-parameter surface ell^x(t) sampled at stored path indices."""

    levels: LevelGrid
    time_indices: np.ndarray
    values: np.ndarray  # (len(time_indices), n_levels+1)
    convention: str
    bandwidth: float
    dt: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        ti = np.asarray(self.time_indices, dtype=np.int64)
        if v.shape != (ti.size, self.levels.n_levels + 1):
            raise InvalidArgumentError("values shape must be (n_rows, n_levels+1)")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "time_indices", ti)

    def times(self) -> np.ndarray:
        return self.time_indices * self.dt

    def level_index(self, x: float) -> int:
        j = int(round((x - self.levels.lo) / self.levels.spacing))
        if not 0 <= j <= self.levels.n_levels:
            raise InvalidArgumentError(f"level {x} outside the grid")
        return j

    def level_slice(self, x: float) -> np.ndarray:
        return self.values[:, self.level_index(x)]

    def final_row(self) -> np.ndarray:
        return self.values[-1]

    def integrate_levels(self, f: Callable[[float], float] = None) -> float:
        """Integral over levels of f(x) * ell^x(T) with the grid spacing."""
        xs = self.levels.levels()
        fx = np.ones_like(xs) if f is None else np.array([f(x) for x in xs])
        return float(np.sum(self.final_row() * fx) * self.levels.spacing)


def _window_indices(v: np.ndarray, grid: LevelGrid, eps: float):
    """Half-open window [v-eps, v+eps): first level index and count per step."""
    dx = grid.spacing
    jlo = np.ceil((v - eps - grid.lo) / dx - 1e-12).astype(np.int64)
    ratio = 2.0 * eps / dx
    m2 = int(round(ratio))
    if abs(ratio - m2) < 1e-9:
        jhi = jlo + m2 - 1  # exact count: any half-open window of width 2eps holds 2eps/dx points
    else:
        jhi = np.ceil((v + eps - grid.lo) / dx - 1e-12).astype(np.int64) - 1
    L = grid.n_levels
    jlo = np.clip(jlo, 0, L + 1)
    jhi = np.clip(jhi, -1, L)
    return jlo, jhi


def _occupation_field(values: np.ndarray, weights: np.ndarray, grid: LevelGrid,
                      eps: float, time_indices: np.ndarray, convention: str,
                      dt: float) -> LocalTimeField:
    if eps < grid.spacing - 1e-12 * abs(grid.spacing):
        raise InvalidArgumentError(
            f"bandwidth eps={eps} below the level spacing {grid.spacing}: estimator would alias"
        )
    n = values.size - 1
    rows = np.asarray(time_indices, dtype=np.int64)
    jlo, jhi = _window_indices(values[:-1], grid, eps)
    keep = jhi >= jlo
    rk = np.searchsorted(rows, np.arange(1, n + 1), side="left")
    D = np.zeros((rows.size, grid.n_levels + 3))
    np.add.at(D, (rk[keep], jlo[keep]), weights[keep])
    np.add.at(D, (rk[keep], jhi[keep] + 1), -weights[keep])
    field = np.cumsum(np.cumsum(D, axis=1)[:, : grid.n_levels + 1], axis=0) / (2.0 * eps)
    return LocalTimeField(levels=grid, time_indices=rows, values=field,
                          convention=convention, bandwidth=eps, dt=dt)


def local_time_occupation(path: SamplePath, qv: QVPath, levels: LevelGrid, eps: float,
                          time_indices: Optional[np.ndarray] = None) -> LocalTimeField:
    """d[X,X]-weighted occupation estimator with left-point sampling."""
    if qv.parent is not path:
        raise InvalidArgumentError("qv must belong to the given path")
    if time_indices is None:
        time_indices = default_time_indices(path.n_steps)
    return _occupation_field(path.values, qv.increments(), levels, eps,
                             time_indices, QV_WEIGHTED, path.dt)


def local_time_time_weighted(path: SamplePath, levels: LevelGrid, eps: float,
                             time_indices: Optional[np.ndarray] = None) -> LocalTimeField:
    """dt-weighted occupation estimator, the stable-process convention."""
    if time_indices is None:
        time_indices = default_time_indices(path.n_steps)
    weights = np.full(path.n_steps, path.dt)
    return _occupation_field(path.values, weights, levels, eps,
                             time_indices, TIME_WEIGHTED, path.dt)


def local_time_downcrossings(path: SamplePath, levels: LevelGrid, eps: float,
                             time_indices: Optional[np.ndarray] = None) -> LocalTimeField:
    """2*eps times the number of completed downcrossings of [x_j, x_j+eps].

    Independent of the occupation estimators; used as a cross-validation oracle.
    """
    if eps < levels.spacing - 1e-12 * abs(levels.spacing):
        raise InvalidArgumentError("bandwidth eps below the level spacing")
    if time_indices is None:
        time_indices = default_time_indices(path.n_steps)
    rows = np.asarray(time_indices, dtype=np.int64)
    v = path.values
    xs = levels.levels()
    field = np.zeros((rows.size, xs.size))
    for j, x in enumerate(xs):
        state = np.zeros(v.size, dtype=np.int8)
        state[v >= x + eps] = 1
        state[v <= x] = -1
        nz = np.flatnonzero(state)
        if nz.size < 2:
            continue
        s = state[nz]
        compl_mask = (s[:-1] == 1) & (s[1:] == -1)
        if not np.any(compl_mask):
            continue
        compl_idx = nz[1:][compl_mask]
        counts = np.searchsorted(compl_idx, rows, side="right")
        field[:, j] = 2.0 * eps * counts
    return LocalTimeField(levels=levels, time_indices=rows, values=field,
                          convention=QV_WEIGHTED, bandwidth=eps, dt=path.dt)


def occupation_check(field: LocalTimeField, f: Callable[[float], float],
                     path: SamplePath, qv: QVPath) -> float:
    """Relative residual of the occupation identity for the weight f.

    Compares the discrete sum of f(X) against d[X,X] (or dt, per the field's
    convention) with the level integral of f * ell, both on the same grid.
    """
    last = int(field.time_indices[-1])
    left = path.values[:last]
    if field.convention == QV_WEIGHTED:
        w = qv.increments()[:last]
    else:
        w = np.full(last, path.dt)
    lhs = float(np.sum(np.array([f(x) for x in left]) * w))
    xs = field.levels.levels()
    rhs = float(np.sum(field.final_row() * np.array([f(x) for x in xs])) * field.levels.spacing)
    return abs(lhs - rhs) / (1.0 + abs(lhs))


def shifted_local_time(path: SamplePath, curve: np.ndarray, eps: float,
                       levels: Optional[LevelGrid] = None,
                       time_indices: Optional[np.ndarray] = None,
                       tv_bound: Optional[float] = None,
                       qv_agreement_tol: float = 0.25) -> LocalTimeField:
    """Local-time field of the difference sequence X - curve.

    The quadratic variation is taken from the difference sequence; for a
    bounded-variation curve it matches the quadratic variation of X, which is
    asserted within qv_agreement_tol (a warning, not an error, since grid
    effects inflate the difference near curve kinks).
    """
    curve = np.asarray(curve, dtype=np.float64)
    if curve.shape != path.values.shape:
        raise InvalidArgumentError("curve must have the same length as the path values")
    d = path.values - curve
    tv = float(np.sum(np.abs(np.diff(curve))))
    if tv_bound is not None and tv > tv_bound:
        warnings.warn(f"curve total variation {tv:.3g} exceeds the bound {tv_bound:.3g}")
    dq = np.diff(d) ** 2
    qx = np.sum(np.diff(path.values) ** 2)
    if qx > 0 and abs(dq.sum() - qx) / qx > qv_agreement_tol:
        warnings.warn(
            f"qv of the shifted sequence differs from qv of X by "
            f"{abs(dq.sum() - qx) / qx:.1%} (curve not BV at grid scale?)"
        )
    if time_indices is None:
        time_indices = default_time_indices(path.n_steps)
    if levels is None:
        levels = level_grid_for(d, eps)
    qv_cum = np.concatenate([[0.0], np.cumsum(dq)])
    shadow = SamplePath(z=float(d[0]), T=path.T, n_steps=path.n_steps, values=d,
                        kind=path.kind, seed=path.seed, beta=path.beta)
    qv_shadow = QVPath(parent=shadow, cumulative=qv_cum)
    return _occupation_field(d, qv_shadow.increments(), levels, eps,
                             time_indices, QV_WEIGHTED, path.dt)


def _window_fraction(a: np.ndarray, b: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Fraction of each linear segment [a_k, b_k] lying inside (lo, hi]."""
    smin = np.minimum(a, b)
    smax = np.maximum(a, b)
    overlap = np.clip(np.minimum(smax, hi) - np.maximum(smin, lo), 0.0, None)
    seg = smax - smin
    point_inside = ((a > lo) & (a <= hi)).astype(np.float64)
    return np.where(seg > 0, overlap / np.where(seg > 0, seg, 1.0), point_inside)


def singular_level_slice(path: SamplePath, curve: np.ndarray, eps: float,
                         time_indices: Optional[np.ndarray] = None,
                         level: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Left-limit local time of X - curve at a singular level, cumulative in time.

    Estimator design, in the left-sided convention used throughout:
      * weights are the parent-path squared increments (equal to those of the
        shifted sequence for BV curves in the limit, and undistorted at grid
        scale when the curve rides an extremum of X);
      * the occupation window sits strictly left of the level, recentred by
        EXTREMUM_DEFECT local sds to cancel the discrete-extremum bias;
      * each step contributes the linearly interpolated fraction of its
        segment inside the window.
    Returns (time_indices, cumulative slice values).
    """
    curve = np.asarray(curve, dtype=np.float64)
    if curve.shape != path.values.shape:
        raise InvalidArgumentError("curve must have the same length as the path values")
    if time_indices is None:
        time_indices = default_time_indices(path.n_steps)
    rows = np.asarray(time_indices, dtype=np.int64)
    d = path.values - curve - level
    w = np.diff(path.values) ** 2
    sigma = float(np.sqrt(w.sum() / path.T))
    if sigma == 0.0:
        return rows, np.zeros(rows.size)
    h = eps * sigma
    shift = EXTREMUM_DEFECT * sigma * np.sqrt(path.dt)
    frac = _window_fraction(d[:-1], d[1:], -h - shift, -shift)
    contrib = np.concatenate([[0.0], np.cumsum(w * frac)]) / h
    return rows, contrib[rows]


def write_csv(field: LocalTimeField, file) -> None:
    """Long format: t_index,level,value with 17 significant digits."""
    own = isinstance(file, str)
    f = open(file, "w", newline="") if own else file
    try:
        f.write("t_index,level,value\r\n")
        xs = field.levels.levels()
        for r, ti in enumerate(field.time_indices):
            for j, x in enumerate(xs):
                f.write(f"{int(ti)},{x:.17g},{field.values[r, j]:.17g}\r\n")
    finally:
        if own:
            f.close()


def write_binary(field: LocalTimeField, file) -> None:
    own = isinstance(file, str)
    f = open(file, "wb") if own else file
    try:
        f.write(_BINARY_MAGIC)
        f.write(struct.pack("<QQdddBd", field.time_indices.size, field.levels.n_levels,
                            field.levels.lo, field.levels.hi, field.bandwidth,
                            _CONVENTION_TAGS[field.convention], field.dt))
        f.write(field.time_indices.astype("<i8").tobytes())
        f.write(field.values.astype("<f8").tobytes())
    finally:
        if own:
            f.close()


def read_binary(file) -> LocalTimeField:
    own = isinstance(file, str)
    f = open(file, "rb") if own else file
    try:
        magic = f.read(4)
        if magic != _BINARY_MAGIC:
            raise InvalidArgumentError(f"bad magic {magic!r}, expected {_BINARY_MAGIC!r}")
        n_rows, n_levels, lo, hi, eps, tag, dt = struct.unpack("<QQdddBd", f.read(49))
        ti = np.frombuffer(f.read(8 * n_rows), dtype="<i8")
        vals = np.frombuffer(f.read(8 * n_rows * (n_levels + 1)), dtype="<f8")
    finally:
        if own:
            f.close()
    grid = LevelGrid(lo=lo, hi=hi, n_levels=int(n_levels))
    return LocalTimeField(levels=grid, time_indices=ti.copy(),
                          values=vals.reshape(int(n_rows), int(n_levels) + 1).copy(),
                          convention=_TAG_CONVENTIONS[int(tag)], bandwidth=eps, dt=dt)
