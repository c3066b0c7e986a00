"""Term-by-term verification of the path-dependent change-of-variable formulas.

Each decompose_* computes the left side F_t(X_t) - F_0(X_0) and every term of
the corresponding formula with the module conventions (left-point sums,
trapezoid horizontal integrals, occupation local time), and reports the
bookkeeping residual lhs - sum(terms).  Ensembles aggregate residuals over a
seed range, either in-process or on a process pool.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import localtime as lt
from .errors import EnsembleFailedError, InvalidArgumentError, UnsupportedCapabilityError
from .functionals import (FunctionalSpec, MollifiedFunctional, make_functional, mollify,
                          mollified_horizontal_derivative, mollified_vertical_derivative)
from .paths import (PathSlice, QVPath, SamplePath, quadratic_variation,
                    simulate_brownian, simulate_euler_sde, simulate_symmetric_stable,
                    stop_at_level)
from .variation import GridFunction2D, VariationParams
from .young import ito_forward_integral, young_integral_1d, young_integral_2d

FORMULA_SMOOTH = "smooth_c12"
FORMULA_SINGULAR = "singular_curve"
FORMULA_YOUNG = "young_pq"
FORMULA_STABLE = "stable_ab"

FAILURE_RATE_THRESHOLD = 0.10


@dataclass(frozen=True)
class DecompositionReport:
    formula: str
    lhs: float
    terms: dict
    residual: float
    path_meta: dict

    def __post_init__(self):
        total = sum(v for v in self.terms.values() if v is not None)
        if abs(self.residual - (self.lhs - total)) > 1e-12 * (1.0 + abs(self.lhs)):
            raise InvalidArgumentError("residual must equal lhs minus the signed term sum")

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / (1.0 + abs(self.lhs))

    def to_dict(self) -> dict:
        return {"formula": self.formula, "lhs": self.lhs, "terms": dict(self.terms),
                "residual": self.residual, "path_meta": dict(self.path_meta)}


@dataclass(frozen=True)
class ResidualStats:
    n_paths: int
    mean_abs: float
    median_abs: float
    p95_abs: float
    normalizer: float          # mean |lhs|
    relative: float            # mean_abs / normalizer
    mean_signed: float
    relative_signed: float     # |mean residual| / normalizer
    n_failures: int = 0
    residuals: np.ndarray = field(default=None, repr=False, compare=False)
    lhs_values: np.ndarray = field(default=None, repr=False, compare=False)
    seeds: np.ndarray = field(default=None, repr=False, compare=False)
    failures: tuple = field(default=(), repr=False, compare=False)


def _default_t_index(path: SamplePath) -> int:
    return stop_at_level(path, 10.0 * (1.0 + abs(path.z))).stop_index


def _truncate(path: SamplePath, qv: Optional[QVPath], t_index: int):
    if t_index == path.n_steps:
        return path, (qv if qv is not None else quadratic_variation(path))
    sub = SamplePath(z=path.z, T=t_index * path.dt, n_steps=t_index,
                     values=path.values[: t_index + 1].copy(), kind=path.kind,
                     seed=path.seed, beta=path.beta)
    return sub, quadratic_variation(sub)


def _row_times(path: SamplePath, rows: np.ndarray) -> np.ndarray:
    return rows * path.dt


def _horizontal_term(F: FunctionalSpec, path: SamplePath, rows: np.ndarray) -> float:
    if F.horizontal_derivative is None:
        raise UnsupportedCapabilityError(f"{F.name}: horizontal derivative not supplied")
    if F.batch is not None and F.batch.horizontal is not None:
        samples = np.asarray(F.batch.horizontal(path, rows), dtype=np.float64)
    else:
        samples = np.array([F.horizontal_derivative(PathSlice(path, int(i))) for i in rows])
    return float(np.trapezoid(samples, _row_times(path, rows)))


def _diagonal_integrand(F: FunctionalSpec, path: SamplePath) -> np.ndarray:
    if F.batch is not None and F.batch.diagonal is not None:
        return np.asarray(F.batch.diagonal(path), dtype=np.float64)
    return np.array([F.diagonal(PathSlice(path, k)) for k in range(path.n_steps + 1)])


def _second_left_term(F: FunctionalSpec, path: SamplePath, qv: QVPath) -> float:
    if F.second_left_derivative is None:
        return 0.0
    n = path.n_steps
    if F.batch is not None and F.batch.second_left_at is not None:
        ks = np.arange(n)
        vals = np.asarray(F.batch.second_left_at(path, ks, path.values[:-1][:, None]))[:, 0]
    else:
        vals = np.array([F.second_left_derivative(PathSlice(path, k), path.values[k])
                         for k in range(n)])
    return 0.5 * float(np.sum(vals * qv.increments()))


def decompose_smooth(M: MollifiedFunctional, path: SamplePath, qv: QVPath,
                     t_index: Optional[int] = None) -> DecompositionReport:
    """Mollified smooth-functional decomposition: horizontal + stochastic +
    half the second-order vertical term against d[X,X]."""
    if t_index is None:
        t_index = _default_t_index(path)
    path, qv = _truncate(path, qv, t_index)
    n = path.n_steps
    base = M.base
    rows = lt.default_time_indices(n)

    lhs = M.value(PathSlice(path, n)) - M.value(PathSlice(path, 0))

    if base.batch is not None and base.batch.horizontal_at is not None:
        ymat = path.values[rows][:, None] - M.nodes[None, :] / M.n
        hor_samples = np.asarray(base.batch.horizontal_at(path, rows, ymat)) @ M.weights
    else:
        hor_samples = np.array([mollified_horizontal_derivative(M, PathSlice(path, int(i)))
                                for i in rows])
    horizontal = float(np.trapezoid(hor_samples, _row_times(path, rows)))

    ks = np.arange(n)
    if base.batch is not None and base.batch.weak_at is not None:
        xmat = path.values[:-1][:, None] - M.nodes[None, :] / M.n
        integrand = np.asarray(base.batch.weak_at(path, ks, xmat)) @ M.weights
    else:
        integrand = np.array([mollified_vertical_derivative(M, PathSlice(path, k),
                                                            path.values[k], 1)
                              for k in range(n)])
    stochastic = ito_forward_integral(integrand, path, upto=n)

    if (base.batch is not None and base.batch.second_left_at is not None
            and base.second_left_derivative is not None):
        xmat = path.values[:-1][:, None] - M.nodes[None, :] / M.n
        second = np.asarray(base.batch.second_left_at(path, ks, xmat)) @ M.weights
        if base.derivative_jump is not None and base.batch.family_kink is not None:
            kinks = np.asarray(base.batch.family_kink(path))[:-1]
            jumps = np.array([base.derivative_jump(PathSlice(path, k)) for k in range(n)])
            from .functionals import mollifier_kernel
            second = second + jumps * M.n * mollifier_kernel(M.n * (kinks - path.values[:-1]))
    else:
        second = np.array([mollified_vertical_derivative(M, PathSlice(path, k),
                                                         path.values[k], 2)
                           for k in range(n)])
    second_term = 0.5 * float(np.sum(second * qv.increments()))

    terms = {"horizontal": horizontal, "stochastic": stochastic,
             "second_order_or_localtime": second_term}
    residual = lhs - horizontal - stochastic - second_term
    meta = {"seed": path.seed, "n_steps": n, "t_index": t_index, "mollify_n": M.n}
    return DecompositionReport(formula=FORMULA_SMOOTH, lhs=lhs, terms=terms,
                               residual=residual, path_meta=meta)


def decompose_singular(F: FunctionalSpec, path: SamplePath, qv: QVPath,
                       eps: Optional[float] = None,
                       t_index: Optional[int] = None) -> DecompositionReport:
    """Singular-curve decomposition: the derivative jump integrates against the
    left-limit local time of X - gamma(X) at level zero."""
    if F.singular_curve is None or F.derivative_jump is None:
        raise UnsupportedCapabilityError(
            f"{F.name}: singular decomposition needs singular_curve and derivative_jump"
        )
    if t_index is None:
        t_index = _default_t_index(path)
    path, qv = _truncate(path, qv, t_index)
    n = path.n_steps
    if eps is None:
        eps = lt.default_bandwidth(path)
    rows = lt.default_time_indices(n)

    lhs = F.eval(PathSlice(path, n)) - F.eval(PathSlice(path, 0))
    horizontal = _horizontal_term(F, path, rows)
    diag = _diagonal_integrand(F, path)
    stochastic = ito_forward_integral(diag, path, upto=n)
    second_term = _second_left_term(F, path, qv)

    if F.batch is not None and F.batch.singular_curve is not None:
        curve = np.asarray(F.batch.singular_curve(path), dtype=np.float64)
    else:
        curve = np.array([F.singular_curve(PathSlice(path, k)) for k in range(n + 1)])
    _, ell0 = lt.singular_level_slice(path, curve, eps, time_indices=rows)
    jumps = np.array([F.derivative_jump(PathSlice(path, int(i))) for i in rows])
    jump_term = 0.5 * young_integral_1d(jumps, ell0)

    terms = {"horizontal": horizontal, "stochastic": stochastic,
             "second_order_or_localtime": second_term, "jump_localtime": jump_term}
    residual = lhs - horizontal - stochastic - second_term - jump_term
    meta = {"seed": path.seed, "n_steps": n, "t_index": t_index, "eps": eps}
    return DecompositionReport(formula=FORMULA_SINGULAR, lhs=lhs, terms=terms,
                               residual=residual, path_meta=meta)


def _weak_field(F: FunctionalSpec, path: SamplePath, rows: np.ndarray,
                levels: np.ndarray) -> np.ndarray:
    if F.batch is not None and F.batch.weak_field is not None:
        return np.asarray(F.batch.weak_field(path, rows, levels), dtype=np.float64)
    if rows.size * levels.size > 2 ** 22:
        raise InvalidArgumentError(
            f"{F.name}: weak-derivative field {rows.size}x{levels.size} too large "
            "without a batch capability"
        )
    return np.array([[F.weak_spatial_derivative(PathSlice(path, int(i)), float(x))
                      for x in levels] for i in rows])


def _decompose_2d(F: FunctionalSpec, path: SamplePath, qv: QVPath, eps: float,
                  levels: Optional[lt.LevelGrid], t_index: int, convention: str,
                  formula: str, extra_meta: Optional[dict] = None) -> DecompositionReport:
    if F.weak_spatial_derivative is None:
        raise UnsupportedCapabilityError(f"{F.name}: weak spatial derivative not supplied")
    path, qv = _truncate(path, qv, t_index)
    n = path.n_steps
    rows = lt.default_time_indices(n)
    if levels is None:
        levels = lt.level_grid_for(path.values, eps)

    if convention == lt.TIME_WEIGHTED:
        fld = lt.local_time_time_weighted(path, levels, eps, time_indices=rows)
    else:
        fld = lt.local_time_occupation(path, qv, levels, eps, time_indices=rows)

    lvl = levels.levels()
    H = GridFunction2D(times=_row_times(path, rows), levels=lvl,
                       values=_weak_field(F, path, rows, lvl))
    G = GridFunction2D(times=_row_times(path, rows), levels=lvl, values=fld.values)
    result2d = young_integral_2d(H, G)
    local_term = -0.5 * result2d.value

    lhs = F.eval(PathSlice(path, n)) - F.eval(PathSlice(path, 0))
    horizontal = _horizontal_term(F, path, rows)
    diag = _diagonal_integrand(F, path)
    stochastic = ito_forward_integral(diag, path, upto=n)

    terms = {"horizontal": horizontal, "stochastic": stochastic,
             "second_order_or_localtime": local_term}
    residual = lhs - horizontal - stochastic - local_term
    meta = {"seed": path.seed, "n_steps": n, "t_index": t_index, "eps": eps,
            "convention": convention, "young_cauchy_gap": result2d.cauchy_gap,
            "young_converged": result2d.converged}
    if extra_meta:
        meta.update(extra_meta)
    return DecompositionReport(formula=formula, lhs=lhs, terms=terms,
                               residual=residual, path_meta=meta)


def decompose_young(F: FunctionalSpec, path: SamplePath, qv: QVPath,
                    eps: Optional[float] = None, levels: Optional[lt.LevelGrid] = None,
                    t_index: Optional[int] = None) -> DecompositionReport:
    """2D Young decomposition: the correction is -1/2 of the space-time Young
    integral of the weak-derivative field against the local-time field."""
    if t_index is None:
        t_index = _default_t_index(path)
    if eps is None:
        eps = lt.default_bandwidth(path)
    return _decompose_2d(F, path, qv, eps, levels, t_index, lt.QV_WEIGHTED, FORMULA_YOUNG)


def decompose_stable(F: FunctionalSpec, path: SamplePath,
                     params: VariationParams, eps: Optional[float] = None,
                     levels: Optional[lt.LevelGrid] = None,
                     t_index: Optional[int] = None) -> DecompositionReport:
    """Stable-process decomposition: identical to the Young route except the
    local time is time-weighted for beta < 2, gated on the strict order region."""
    beta = params.beta if params.beta is not None else (path.beta or 2.0)
    params = VariationParams(**{**params.__dict__, "beta": beta})
    params.validate_stable()
    if t_index is None:
        t_index = _default_t_index(path)
    if eps is None:
        eps = lt.default_bandwidth(path)
    convention = lt.TIME_WEIGHTED if beta < 2.0 else lt.QV_WEIGHTED
    qv = quadratic_variation(path)
    extra = {"a": params.a, "b": params.b, "beta": beta,
             "alpha1": params.alpha1, "alpha2": params.alpha2}
    return _decompose_2d(F, path, qv, eps, levels, t_index, convention,
                         FORMULA_STABLE, extra_meta=extra)


_EULER_PRESETS = {
    "gbm": lambda p: (lambda x, mu=p.get("mu", 0.05): mu * x,
                      lambda x, sg=p.get("sigma", 0.2): sg * x),
    "ou": lambda p: (lambda x, k=p.get("kappa", 1.0), m=p.get("mean", 0.0): k * (m - x),
                     lambda x, sg=p.get("sigma", 0.3): sg),
}


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything needed to rebuild one verification run from scratch."""

    functional: str
    functional_params: dict = field(default_factory=dict)
    process: str = "brownian"              # brownian | euler_sde | symmetric_stable
    process_params: dict = field(default_factory=dict)
    n_steps: int = 4096
    T: float = 1.0
    z: float = 0.0
    seed0: int = 0
    n_paths: int = 1
    eps_scale: float = 1.0
    eps_exponent: float = 0.4
    mollify_n: int = 64
    quad_nodes: int = 64
    t_index: Optional[int] = None
    variation: Optional[dict] = None       # stable-order block for stable_ab
    workers: int = 0                       # 0: PATHFLOW_THREADS or 1

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleConfig":
        return cls(**d)


def _simulate(cfg: EnsembleConfig, seed: int) -> SamplePath:
    if cfg.process == "brownian":
        return simulate_brownian(cfg.n_steps, cfg.T, cfg.z, seed)
    if cfg.process == "euler_sde":
        preset = cfg.process_params.get("preset", "gbm")
        if preset not in _EULER_PRESETS:
            raise InvalidArgumentError(f"unknown Euler preset {preset!r}")
        drift, vol = _EULER_PRESETS[preset](cfg.process_params)
        return simulate_euler_sde(drift, vol, cfg.n_steps, cfg.T, cfg.z, seed)
    if cfg.process == "symmetric_stable":
        beta = cfg.process_params.get("beta", 2.0)
        return simulate_symmetric_stable(beta, cfg.n_steps, cfg.T, seed, z=cfg.z)
    raise InvalidArgumentError(f"unknown process kind {cfg.process!r}")


def run_one(formula: str, cfg: EnsembleConfig, seed: int,
            F: Optional[FunctionalSpec] = None) -> DecompositionReport:
    """One path of the configured decomposition; deterministic given (cfg, seed)."""
    if F is None:
        F = make_functional(cfg.functional, cfg.functional_params)
    path = _simulate(cfg, seed)
    eps = lt.default_bandwidth(path, scale=cfg.eps_scale, exponent=cfg.eps_exponent)
    qv = quadratic_variation(path)
    if formula == FORMULA_SMOOTH:
        M = mollify(F, cfg.mollify_n, cfg.quad_nodes)
        return decompose_smooth(M, path, qv, t_index=cfg.t_index)
    if formula == FORMULA_SINGULAR:
        return decompose_singular(F, path, qv, eps=eps, t_index=cfg.t_index)
    if formula == FORMULA_YOUNG:
        return decompose_young(F, path, qv, eps=eps, t_index=cfg.t_index)
    if formula == FORMULA_STABLE:
        params = VariationParams(**(cfg.variation or {}))
        return decompose_stable(F, path, params, eps=eps, t_index=cfg.t_index)
    raise InvalidArgumentError(f"unknown formula {formula!r}")


def _worker(args):
    formula, cfg_dict, seeds = args
    cfg = EnsembleConfig.from_dict(cfg_dict)
    F = make_functional(cfg.functional, cfg.functional_params)
    out = []
    for seed in seeds:
        try:
            rep = run_one(formula, cfg, seed, F=F)
            out.append((seed, rep.lhs, rep.residual, None))
        except Exception as e:  # recorded, not fatal below threshold
            out.append((seed, np.nan, np.nan, repr(e)))
    return out


def ensemble(formula: str, config: EnsembleConfig) -> ResidualStats:
    """Run the decomposition over seeds [seed0, seed0+n_paths) and aggregate.

    Per-path failures are recorded; the run aborts only above a 10% failure
    rate.  The reduction is ordered by seed, so results are deterministic for
    any worker count.
    """
    if config.n_paths < 1:
        raise InvalidArgumentError("n_paths must be >= 1")
    seeds = list(range(config.seed0, config.seed0 + config.n_paths))
    workers = config.workers or int(os.environ.get("PATHFLOW_THREADS", "1"))
    if workers > 1 and config.n_paths > 1:
        chunks = [seeds[i::workers] for i in range(workers)]
        args = [(formula, config.to_dict(), c) for c in chunks if c]
        rows = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_worker, args):
                rows.extend(part)
        rows.sort(key=lambda r: r[0])
    else:
        rows = _worker((formula, config.to_dict(), seeds))

    failures = tuple((s, err) for s, _, _, err in rows if err is not None)
    if len(failures) > FAILURE_RATE_THRESHOLD * config.n_paths:
        raise EnsembleFailedError(list(failures), config.n_paths)
    ok = [(s, l, r) for s, l, r, err in rows if err is None]
    seeds_ok = np.array([s for s, _, _ in ok])
    lhs = np.array([l for _, l, _ in ok])
    res = np.array([r for _, _, r in ok])
    mean_abs = float(np.mean(np.abs(res)))
    normalizer = float(np.mean(np.abs(lhs)))
    denom = normalizer if normalizer > 0 else 1.0
    return ResidualStats(
        n_paths=len(ok),
        mean_abs=mean_abs,
        median_abs=float(np.median(np.abs(res))),
        p95_abs=float(np.percentile(np.abs(res), 95)),
        normalizer=normalizer,
        relative=mean_abs / denom,
        mean_signed=float(np.mean(res)),
        relative_signed=abs(float(np.mean(res))) / denom,
        n_failures=len(failures),
        residuals=res,
        lhs_values=lhs,
        seeds=seeds_ok,
        failures=failures,
    )
