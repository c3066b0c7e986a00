"""Non-anticipative functionals and their derivative calculus.

A FunctionalSpec bundles the evaluation map on path slices with whatever
analytic derivative structure the functional has: the weak derivative of the
terminal-value family x -> F(^x c), the horizontal derivative, the singular
curve off which the family is smooth, and the derivative jump across it.

Conventions fixed here and relied on everywhere downstream:

* weak_spatial_derivative(s, x) is the left-derivative of x -> F(^x c): the
  terminal value of the slice is erased and replaced by x, so for extremum
  functionals the kink sits at the extremum of the history (family_kink).
* diagonal_derivative(s) is the stochastic integrand grad^w F_t(c_t).  For
  functionals with a singular curve it is the indicator form written against
  the curve gamma_t(c_t) computed from the full path up to t, terminal
  included; on a grid this differs from plugging the terminal into the family
  derivative exactly at new-extremum steps, and the curve form is the one the
  decompositions use.
* mollification is one-sided: F^n(c; x) averages the family at x - z/n for
  quadrature nodes z in (0, 2).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, UnsupportedCapabilityError
from .paths import PathSlice, SamplePath, flat_extend

# Normalization of exp(-1/(1-(x-1)^2)) on (0, 2), frozen from a 10^4-node
# composite Gauss-Legendre rule.  The kernel's first moment is exactly 1.
MOLLIFIER_NORMALIZATION = 2.25228362104
DEFAULT_QUAD_NODES = 64


def mollifier_kernel(x):
    """The bump kernel rho supported strictly inside (0, 2), unit mass."""
    x = np.asarray(x, dtype=np.float64)
    u = x - 1.0
    inside = np.abs(u) < 1.0
    out = np.zeros_like(x)
    uu = np.where(inside, u, 0.0)
    out[inside] = MOLLIFIER_NORMALIZATION * np.exp(-1.0 / (1.0 - uu**2))[inside]
    return out if out.ndim else float(out)


def mollifier_kernel_d1(x):
    x = np.asarray(x, dtype=np.float64)
    u = x - 1.0
    inside = np.abs(u) < 1.0
    uu = np.where(inside, u, 0.0)
    g = -2.0 * uu / (1.0 - uu**2) ** 2
    out = np.where(inside, mollifier_kernel(x) * g, 0.0)
    return out if out.ndim else float(out)


def mollifier_kernel_d2(x):
    x = np.asarray(x, dtype=np.float64)
    u = x - 1.0
    inside = np.abs(u) < 1.0
    uu = np.where(inside, u, 0.0)
    one = 1.0 - uu**2
    g = -2.0 * uu / one**2
    gprime = -2.0 / one**2 - 8.0 * uu**2 / one**3
    out = np.where(inside, mollifier_kernel(x) * (g * g + gprime), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BatchCapabilities:
    """Vectorized fast paths over whole paths; every hook optional.

    diagonal(path) -> integrand at every index; horizontal(path, idx) -> rows;
    horizontal_at(path, idx, ymat) -> the horizontal derivative of the
    terminal-modified family at the override states ymat; weak_field(path,
    idx, levels) -> rows x levels; weak_at(path, idx, xmat) and
    second_left_at(path, idx, xmat) -> same shape as xmat;
    family_kink(path) / singular_curve(path) -> per-index arrays.
    """

    diagonal: Optional[Callable] = None
    horizontal: Optional[Callable] = None
    horizontal_at: Optional[Callable] = None
    weak_field: Optional[Callable] = None
    weak_at: Optional[Callable] = None
    second_left_at: Optional[Callable] = None
    family_kink: Optional[Callable] = None
    singular_curve: Optional[Callable] = None


@dataclass(frozen=True)
class FunctionalSpec:
    """A non-anticipative functional with its derivative capabilities."""

    name: str
    eval: Callable[[PathSlice], float]
    weak_spatial_derivative: Optional[Callable[[PathSlice, float], float]] = None
    horizontal_derivative: Optional[Callable[[PathSlice], float]] = None
    singular_curve: Optional[Callable[[PathSlice], float]] = None
    derivative_jump: Optional[Callable[[PathSlice], float]] = None
    second_left_derivative: Optional[Callable[[PathSlice, float], float]] = None
    diagonal_derivative: Optional[Callable[[PathSlice], float]] = None
    family_kink: Optional[Callable[[PathSlice], float]] = None
    batch: Optional[BatchCapabilities] = None

    def diagonal(self, s: PathSlice) -> float:
        if self.diagonal_derivative is not None:
            return self.diagonal_derivative(s)
        if self.weak_spatial_derivative is None:
            raise UnsupportedCapabilityError(f"{self.name}: no spatial derivative capability")
        return self.weak_spatial_derivative(s, s.terminal)


def _hist_max(s: PathSlice) -> float:
    hist = s.history()
    best = float(np.max(hist)) if hist.size else -np.inf
    if s.end_index > s.cut_index:
        best = max(best, s.base_terminal)
    return best


def _hist_min(s: PathSlice) -> float:
    hist = s.history()
    best = float(np.min(hist)) if hist.size else np.inf
    if s.end_index > s.cut_index:
        best = min(best, s.base_terminal)
    return best


def _prev_cummax(values: np.ndarray) -> np.ndarray:
    """Running max over strictly earlier indices; -inf at index 0."""
    out = np.empty_like(values)
    out[0] = -np.inf
    np.maximum.accumulate(values[:-1], out=out[1:])
    return out


def _prev_cummin(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    out[0] = np.inf
    np.minimum.accumulate(values[:-1], out=out[1:])
    return out


def make_running_max() -> FunctionalSpec:
    """F_t(c) = sup of c on [0, t]; singular along its own running maximum."""

    def ev(s):
        return max(_hist_max(s), s.terminal)

    def weak(s, x):
        return 1.0 if x > _hist_max(s) else 0.0

    def gamma(s):
        return max(_hist_max(s), s.terminal)

    batch = BatchCapabilities(
        diagonal=lambda p: np.zeros(p.n_steps + 1),
        horizontal=lambda p, idx: np.zeros(len(idx)),
        horizontal_at=lambda p, idx, ym: np.zeros_like(ym),
        weak_field=lambda p, idx, lv: (lv[None, :] > _prev_cummax(p.values)[idx][:, None])
        .astype(np.float64),
        weak_at=lambda p, idx, xm: (xm > _prev_cummax(p.values)[idx][:, None]).astype(np.float64),
        second_left_at=lambda p, idx, xm: np.zeros_like(xm),
        family_kink=lambda p: _prev_cummax(p.values),
        singular_curve=lambda p: np.maximum.accumulate(p.values),
    )
    return FunctionalSpec(
        name="running_max",
        eval=ev,
        weak_spatial_derivative=weak,
        horizontal_derivative=lambda s: 0.0,
        singular_curve=gamma,
        derivative_jump=lambda s: 1.0,
        second_left_derivative=lambda s, x: 0.0,
        diagonal_derivative=lambda s: 1.0 if s.terminal > gamma(s) else 0.0,
        family_kink=_hist_max,
        batch=batch,
    )


def make_lookback_fixed(strike: float) -> FunctionalSpec:
    """Fixed-strike lookback payoff (sup c - K)^+; singular at max(sup, K)."""
    K = float(strike)

    def ev(s):
        return max(max(_hist_max(s), s.terminal) - K, 0.0)

    def weak(s, x):
        return 1.0 if x > max(_hist_max(s), K) else 0.0

    def gamma(s):
        return max(_hist_max(s), s.terminal, K)

    batch = BatchCapabilities(
        diagonal=lambda p: np.zeros(p.n_steps + 1),
        horizontal=lambda p, idx: np.zeros(len(idx)),
        horizontal_at=lambda p, idx, ym: np.zeros_like(ym),
        weak_field=lambda p, idx, lv: (
            lv[None, :] > np.maximum(_prev_cummax(p.values)[idx], K)[:, None]
        ).astype(np.float64),
        weak_at=lambda p, idx, xm: (
            xm > np.maximum(_prev_cummax(p.values)[idx], K)[:, None]
        ).astype(np.float64),
        second_left_at=lambda p, idx, xm: np.zeros_like(xm),
        family_kink=lambda p: np.maximum(_prev_cummax(p.values), K),
        singular_curve=lambda p: np.maximum(np.maximum.accumulate(p.values), K),
    )
    return FunctionalSpec(
        name="lookback_fixed",
        eval=ev,
        weak_spatial_derivative=weak,
        horizontal_derivative=lambda s: 0.0,
        singular_curve=gamma,
        derivative_jump=lambda s: 1.0,
        second_left_derivative=lambda s, x: 0.0,
        diagonal_derivative=lambda s: 1.0 if s.terminal > gamma(s) else 0.0,
        family_kink=lambda s: max(_hist_max(s), K),
        batch=batch,
    )


def make_partial_lookback(lambda_: float) -> FunctionalSpec:
    """Partial lookback payoff (c(t) - lambda inf c)^+ for non-negative paths."""
    if not lambda_ > 1.0:
        raise InvalidArgumentError(f"lambda must be > 1, got {lambda_}")
    lam = float(lambda_)

    def ev(s):
        x = s.terminal
        return max(x - lam * min(_hist_min(s), x), 0.0)

    def weak(s, x):
        return 1.0 if x > lam * min(_hist_min(s), x) else 0.0

    def gamma(s):
        return lam * min(_hist_min(s), s.terminal)

    batch = BatchCapabilities(
        diagonal=lambda p: (p.values > lam * np.minimum.accumulate(p.values))
        .astype(np.float64),
        horizontal=lambda p, idx: np.zeros(len(idx)),
        horizontal_at=lambda p, idx, ym: np.zeros_like(ym),
        weak_field=lambda p, idx, lv: (
            lv[None, :] > lam * np.minimum(_prev_cummin(p.values)[idx][:, None], lv[None, :])
        ).astype(np.float64),
        weak_at=lambda p, idx, xm: (
            xm > lam * np.minimum(_prev_cummin(p.values)[idx][:, None], xm)
        ).astype(np.float64),
        second_left_at=lambda p, idx, xm: np.zeros_like(xm),
        family_kink=lambda p: lam * _prev_cummin(p.values),
        singular_curve=lambda p: lam * np.minimum.accumulate(p.values),
    )
    return FunctionalSpec(
        name="partial_lookback",
        eval=ev,
        weak_spatial_derivative=weak,
        horizontal_derivative=lambda s: 0.0,
        singular_curve=gamma,
        derivative_jump=lambda s: 1.0,
        second_left_derivative=lambda s, x: 0.0,
        diagonal_derivative=lambda s: 1.0 if s.terminal > gamma(s) else 0.0,
        family_kink=lambda s: lam * _hist_min(s),
        batch=batch,
    )


def _grid_index(path: SamplePath, t: float) -> int:
    return min(path.n_steps, int(np.floor(t / path.dt * (1.0 + 1e-12))))


def make_cylinder(f: Callable, times: Sequence[float],
                  weak_partials: Optional[Sequence[Callable]] = None,
                  second_derivative: Optional[Callable] = None,
                  name: str = "cylinder") -> FunctionalSpec:
    """Cylinder functional F(c) = f(c(t_1-), ..., c(t_m-)), flat-extended in t.

    Arguments at times not yet reached evaluate at the slice terminal.  Left
    limits are read as grid values (paths here are continuous interpolants).
    weak_partials[i](args) is the weak partial in slot i; second_derivative(x,
    args, free_mask) is the total second derivative of the terminal map.
    """
    ts = [float(t) for t in times]
    if any(b <= a for a, b in zip(ts, ts[1:])) or not ts:
        raise InvalidArgumentError("times must be non-empty and strictly increasing")
    m = len(ts)

    def args_of(s: PathSlice):
        end = s.end_index
        idx = [_grid_index(s.parent, t) for t in ts]
        args = np.empty(m)
        free = np.zeros(m, dtype=bool)
        for i, gi in enumerate(idx):
            if gi < end:
                args[i] = s.value_at(gi)
            else:
                args[i] = s.terminal
                free[i] = True
        return args, free

    def ev(s):
        args, _ = args_of(s)
        return float(f(*args))

    def weak(s, x):
        if weak_partials is None:
            raise UnsupportedCapabilityError(f"{name}: no weak partials supplied")
        args, free = args_of(s)
        args = np.where(free, x, args)
        return float(sum(weak_partials[i](*args) for i in range(m) if free[i]))

    second = None
    if second_derivative is not None:
        def second(s, x):
            args, free = args_of(s)
            args = np.where(free, x, args)
            return float(second_derivative(x, args, free))

    return FunctionalSpec(
        name=name,
        eval=ev,
        weak_spatial_derivative=weak if weak_partials is not None else None,
        horizontal_derivative=lambda s: 0.0,
        second_left_derivative=second,
    )


def _terminal_cylinder(name: str, f, df, d2f) -> FunctionalSpec:
    """Single-time cylinder f(c(t)) with fully vectorized batch hooks."""

    def ev(s):
        return float(f(s.terminal))

    batch = BatchCapabilities(
        diagonal=lambda p: df(p.values),
        horizontal=lambda p, idx: np.zeros(len(idx)),
        horizontal_at=lambda p, idx, ym: np.zeros_like(ym),
        weak_field=lambda p, idx, lv: np.broadcast_to(df(lv)[None, :],
                                                      (len(idx), lv.size)).copy(),
        weak_at=lambda p, idx, xm: df(xm),
        second_left_at=lambda p, idx, xm: d2f(xm),
    )
    return FunctionalSpec(
        name=name,
        eval=ev,
        weak_spatial_derivative=lambda s, x: float(df(x)),
        horizontal_derivative=lambda s: 0.0,
        second_left_derivative=lambda s, x: float(d2f(x)),
        batch=batch,
    )


def make_identity() -> FunctionalSpec:
    """F_t(c) = c(t)."""
    return _terminal_cylinder("identity", lambda x: x,
                              lambda x: np.ones_like(np.asarray(x, dtype=np.float64)),
                              lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)))


def make_quadratic() -> FunctionalSpec:
    """F_t(c) = c(t)^2."""
    return _terminal_cylinder("quadratic", lambda x: x * x,
                              lambda x: 2.0 * np.asarray(x, dtype=np.float64),
                              lambda x: np.full_like(np.asarray(x, dtype=np.float64), 2.0))


def _slice_values(s: PathSlice) -> np.ndarray:
    v = np.empty(s.end_index + 1)
    cut = s.cut_index
    v[:cut] = s.parent.values[:cut]
    if s.end_index > cut:
        v[cut:s.end_index] = s.base_terminal
    v[s.end_index] = s.terminal
    return v


def make_fps(phi: Callable, y_lo: float, y_hi: float, n_y: int = 513,
             name: str = "fps_general") -> FunctionalSpec:
    """F_t(c) = int_{-inf}^{c(t)} int_0^t phi(c(r), y) dr dy for a kernel phi
    supported in [y_lo, y_hi] in its second argument.

    Inner integrals are trapezoids on the path grid and on an n_y-point level
    grid; evaluations are O(n_steps * n_y).  Use make_fps_separable when phi
    factors as g(a) psi(y): it is the same functional with O(n_steps) paths.
    """
    ys = np.linspace(y_lo, y_hi, n_y)
    dy = ys[1] - ys[0]

    def profile(s: PathSlice) -> np.ndarray:
        """Phi_t(y) = int_0^t phi(c(r), y) dr on the y grid."""
        v = _slice_values(s)
        vals = np.asarray(phi(v[:, None], ys[None, :]), dtype=np.float64)
        w = np.full(v.size, s.parent.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w @ vals

    def upper_integral(row: np.ndarray, x: float) -> float:
        if x <= ys[0]:
            return 0.0
        xc = min(x, ys[-1])
        k = int(np.floor((xc - ys[0]) / dy))
        k = min(k, n_y - 2)
        full = np.trapezoid(row[: k + 1], ys[: k + 1])
        frac = xc - ys[k]
        edge = row[k] * frac + 0.5 * (row[k + 1] - row[k]) * frac ** 2 / dy
        return float(full + edge)

    def ev(s):
        return upper_integral(profile(s), s.terminal)

    def weak(s, x):
        return float(np.interp(x, ys, profile(s), left=0.0, right=0.0))

    def horizontal(s):
        ct = s.base_terminal
        row = np.asarray(phi(np.full(1, ct)[:, None], ys[None, :]),
                         dtype=np.float64)[0]
        return upper_integral(row, s.terminal)

    return FunctionalSpec(name=name, eval=ev, weak_spatial_derivative=weak,
                          horizontal_derivative=horizontal)


def make_fps_separable(g: Callable, psi: Callable, dpsi: Callable,
                       y_lo: float, y_hi: float, n_y: int = 4097,
                       name: str = "fps") -> FunctionalSpec:
    """Product-form functional F_t(c) = int_{-inf}^{c(t)} psi(y) dy * int_0^t g(c(r)) dr.

    This is the separable case phi(a, y) = g(a) psi(y) of the path-dependent
    correction formula; psi must vanish outside [y_lo, y_hi].
    """
    ys = np.linspace(y_lo, y_hi, n_y)
    psi_tab = np.asarray(psi(ys), dtype=np.float64)
    Psi_tab = np.concatenate([[0.0], np.cumsum(0.5 * (psi_tab[1:] + psi_tab[:-1])
                                               * np.diff(ys))])

    def Psi(x):
        return np.interp(x, ys, Psi_tab, left=0.0, right=Psi_tab[-1])

    def g_cum(values: np.ndarray, dt: float) -> np.ndarray:
        gv = np.asarray(g(values), dtype=np.float64)
        return np.concatenate([[0.0], np.cumsum(0.5 * (gv[1:] + gv[:-1]) * dt)])

    def ev(s):
        v = _slice_values(s)
        return float(g_cum(v, s.parent.dt)[-1] * Psi(s.terminal))

    def weak(s, x):
        v = _slice_values(s)
        return float(g_cum(v, s.parent.dt)[-1] * psi(x))

    def horizontal(s):
        # flat extension derivative: phi(c(t), .) integrated up to the family
        # state y (= terminal of an overridden slice; the path terminal else)
        return float(g(s.base_terminal) * Psi(s.terminal))

    def second(s, x):
        v = _slice_values(s)
        return float(g_cum(v, s.parent.dt)[-1] * dpsi(x))

    batch = BatchCapabilities(
        diagonal=lambda p: g_cum(p.values, p.dt) * psi(p.values),
        horizontal=lambda p, idx: np.asarray(g(p.values[idx])) * Psi(p.values[idx]),
        horizontal_at=lambda p, idx, ym: np.asarray(g(p.values[idx]))[:, None] * Psi(ym),
        weak_field=lambda p, idx, lv: g_cum(p.values, p.dt)[idx][:, None]
        * np.asarray(psi(lv))[None, :],
        weak_at=lambda p, idx, xm: g_cum(p.values, p.dt)[idx][:, None] * psi(xm),
        second_left_at=lambda p, idx, xm: g_cum(p.values, p.dt)[idx][:, None] * dpsi(xm),
    )
    return FunctionalSpec(
        name=name,
        eval=ev,
        weak_spatial_derivative=weak,
        horizontal_derivative=horizontal,
        second_left_derivative=second,
        batch=batch,
    )


def make_fps_gaussian_bump() -> FunctionalSpec:
    """The Gaussian-bump instance phi(a, y) = exp(-a^2) * exp(-y^2) * bump(y/2)."""

    def g(a):
        return np.exp(-np.asarray(a, dtype=np.float64) ** 2)

    def psi(y):
        y = np.asarray(y, dtype=np.float64)
        u = y / 2.0
        inside = np.abs(u) < 1.0
        uu = np.where(inside, u, 0.0)
        out = np.where(inside, np.exp(-y**2 - 1.0 / (1.0 - uu**2)), 0.0)
        return out if out.ndim else float(out)

    def dpsi(y):
        y = np.asarray(y, dtype=np.float64)
        u = y / 2.0
        inside = np.abs(u) < 1.0
        uu = np.where(inside, u, 0.0)
        grad = -2.0 * y - uu / (1.0 - uu**2) ** 2
        out = np.where(inside, psi(y) * grad, 0.0)
        return out if out.ndim else float(out)

    return make_fps_separable(g, psi, dpsi, y_lo=-2.0, y_hi=2.0,
                              name="fps_gaussian_bump")


@dataclass(frozen=True)
class MollifiedFunctional:
    """One-sided mollification F^n of a base functional at index n."""

    base: FunctionalSpec
    n: int
    nodes: np.ndarray          # quadrature abscissae in (0, 2)
    weights: np.ndarray        # rho-weighted, normalized to unit mass
    d2_weights: np.ndarray     # raw Gauss-Legendre weights times rho''
    raw_mass: float

    def __post_init__(self):
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("kernel weights must sum to 1 within 1e-12")
        if np.any(self.nodes <= 0.0) or np.any(self.nodes >= 2.0):
            raise InvalidArgumentError("kernel support must lie strictly inside (0, 2)")

    def family_value(self, s: PathSlice, x: float) -> float:
        """F^n_t(c_t; x), the mollified terminal-value family."""
        return float(sum(w * self.base.eval(s.with_override(x - z / self.n))
                         for z, w in zip(self.nodes, self.weights)))

    def value(self, s: PathSlice) -> float:
        return self.family_value(s, s.terminal)


def mollify(F: FunctionalSpec, n: int, quad_nodes: int = DEFAULT_QUAD_NODES) -> MollifiedFunctional:
    """Fixed Gauss-Legendre discretization of the kernel on (0, 2)."""
    if n < 1:
        raise InvalidArgumentError("mollification index n must be >= 1")
    t, w = np.polynomial.legendre.leggauss(quad_nodes)
    z = t + 1.0  # (-1,1) -> (0,2)
    rho = mollifier_kernel(z)
    raw = w * rho
    mass = float(raw.sum())
    return MollifiedFunctional(base=F, n=n, nodes=z, weights=raw / mass,
                               d2_weights=w * mollifier_kernel_d2(z), raw_mass=mass)


def mollified_vertical_derivative(M: MollifiedFunctional, s: PathSlice, x: float,
                                  order: int) -> float:
    """Vertical derivatives of the mollified family at state x.

    Order 1 mollifies the base weak derivative (finite differences on the
    mollified family if the capability is missing).  Order 2 mollifies the
    second left derivative and adds the kink mass jump * rho_n(kink - x)
    carried by the derivative jump.  The kink mass is collected on the left
    side of the curve: that is the side the left-sided calculus evaluates on,
    and the side the path occupies when the curve rides its running extremum,
    so the quadratic-variation term picks up exactly the near-curve occupation
    that the jump/local-time term of the singular formula measures.  Without
    that structure the computation falls back to the kernel-derivative
    quadrature n^2 * sum w rho''(z) F(^(x - z/n) c), the literal second
    derivative of the one-sided convolution (whose mass sits above the kink).
    """
    base, n = M.base, M.n
    if order == 1:
        if base.weak_spatial_derivative is not None:
            return float(sum(w * base.weak_spatial_derivative(s, x - z / n)
                             for z, w in zip(M.nodes, M.weights)))
        h = 1e-6 * (1.0 + abs(x))
        return (M.family_value(s, x + h) - M.family_value(s, x - h)) / (2.0 * h)
    if order != 2:
        raise InvalidArgumentError(f"order must be 1 or 2, got {order}")
    if base.second_left_derivative is not None:
        val = float(sum(w * base.second_left_derivative(s, x - z / n)
                        for z, w in zip(M.nodes, M.weights)))
        if base.derivative_jump is not None and base.family_kink is not None:
            val += base.derivative_jump(s) * n * float(
                mollifier_kernel(n * (base.family_kink(s) - x))
            )
        return val
    return float(n * n * sum(w * base.eval(s.with_override(x - z / n))
                             for z, w in zip(M.nodes, M.d2_weights)))


def mollified_horizontal_derivative(M: MollifiedFunctional, s: PathSlice) -> float:
    """Kernel average of the horizontal derivative of the terminal-value family."""
    base = M.base
    if base.horizontal_derivative is None:
        raise UnsupportedCapabilityError(f"{base.name}: horizontal derivative not supplied")
    c_t = s.terminal
    return float(sum(w * base.horizontal_derivative(s.with_override(c_t - z / M.n))
                     for z, w in zip(M.nodes, M.weights)))


def horizontal_derivative_fd(F: FunctionalSpec, s: PathSlice,
                             gamma_steps: Sequence[float]) -> float:
    """Flat-extension difference quotients extrapolated to zero step.

    Each gamma must be a positive multiple of the grid step small enough to
    stay inside the horizon; the extrapolation is polynomial (Neville) in
    gamma through the difference quotients.
    """
    dt = s.parent.dt
    n = s.parent.n_steps
    gammas, quotients = [], []
    base_val = F.eval(s)
    for gamma in gamma_steps:
        k = int(round(gamma / dt))
        if k < 1 or abs(k * dt - gamma) > 1e-9 * dt:
            raise InvalidArgumentError(f"gamma {gamma} is not a positive grid multiple")
        if s.end_index + k > n:
            raise InvalidArgumentError(f"extension by {gamma} exceeds the horizon")
        ext = flat_extend(s, s.end_index + k)
        gammas.append(k * dt)
        quotients.append((F.eval(ext) - base_val) / (k * dt))
    if not gammas:
        raise InvalidArgumentError("need at least one gamma step")
    # Neville extrapolation of the quotient polynomial to gamma = 0
    g = np.asarray(gammas)
    tab = np.asarray(quotients, dtype=np.float64)
    for level in range(1, g.size):
        tab = (tab[1:] * g[:-level] - tab[:-1] * g[level:]) / (g[:-level] - g[level:])
    return float(tab[0])


_REGISTRY = {
    "identity": lambda params: make_identity(),
    "quadratic": lambda params: make_quadratic(),
    "running_max": lambda params: make_running_max(),
    "lookback_fixed": lambda params: make_lookback_fixed(params["strike"]),
    "partial_lookback": lambda params: make_partial_lookback(params["lambda"]),
    "fps_gaussian_bump": lambda params: make_fps_gaussian_bump(),
}


def registry_names() -> list:
    return sorted(_REGISTRY)


def make_functional(name: str, params: Optional[dict] = None) -> FunctionalSpec:
    """Instantiate a shipped functional by registry name and parameter block."""
    if name not in _REGISTRY:
        raise InvalidArgumentError(
            f"unknown functional {name!r}; known: {', '.join(registry_names())}"
        )
    try:
        return _REGISTRY[name](params or {})
    except KeyError as e:
        raise InvalidArgumentError(f"functional {name!r} missing parameter {e.args[0]!r}")
