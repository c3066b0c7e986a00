"""Reproducible experiment runner.

All experiments are config files (TOML or JSON, picked by extension); the
command line only selects the file, the output directory and an optional seed
override.  Outputs are machine-readable: report.json with stable key order,
RFC-4180 CSVs with 17-significant-digit decimals.

Exit codes: 0 all gates pass, 1 a tolerance gate failed, 2 config error
(message names the offending field path), 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import localtime as lt
from . import verify
from .errors import PathflowError
from .functionals import make_functional, registry_names
from .paths import quadratic_variation
from .paths import write_binary as write_path_binary
from .paths import write_csv as write_path_csv
from .variation import (GridFunction2D, bivariation, holder_exponent_fit,
                        interpolation_check, joint_lv, joint_rv)

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(Exception):
    def __init__(self, field_path, message):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError("config", f"file not found: {path}")
    text = p.read_bytes()
    if p.suffix.lower() == ".json":
        try:
            return json.loads(text.decode("utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON: {e}")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib as toml
        except ModuleNotFoundError:
            import tomli as toml
        try:
            return toml.loads(text.decode("utf-8"))
        except toml.TOMLDecodeError as e:
            raise ConfigError("config", f"invalid TOML: {e}")
    raise ConfigError("config", f"unknown extension {p.suffix!r} (need .toml or .json)")


def _get(cfg: dict, path: str, default=None, required=False):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigError(path, "required field is missing")
            return default
        node = node[part]
    return node


def _check(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(path, message)


def build_ensemble_config(cfg: dict, seed_override=None) -> verify.EnsembleConfig:
    """Validate the config blocks and assemble an EnsembleConfig."""
    n_steps = int(_get(cfg, "grid.n_steps", required=True))
    _check(n_steps >= 1, "grid.n_steps", "must be >= 1")
    T = float(_get(cfg, "grid.T", 1.0))
    _check(T > 0, "grid.T", "must be > 0")
    z = float(_get(cfg, "grid.z", 0.0))

    kind = _get(cfg, "process.kind", "brownian")
    _check(kind in ("brownian", "euler_sde", "symmetric_stable"), "process.kind",
           f"unknown kind {kind!r}")
    pparams = {}
    if kind == "symmetric_stable":
        beta = float(_get(cfg, "process.beta", required=True))
        _check(1.0 < beta <= 2.0, "process.beta", "must lie in (1, 2]")
        pparams["beta"] = beta
    if kind == "euler_sde":
        preset = _get(cfg, "process.preset", "gbm")
        _check(preset in verify._EULER_PRESETS, "process.preset",
               f"unknown preset {preset!r}")
        pparams["preset"] = preset
        for key in ("mu", "sigma", "kappa", "mean"):
            v = _get(cfg, f"process.{key}")
            if v is not None:
                pparams[key] = float(v)

    name = _get(cfg, "functional.name", required=True)
    _check(name in registry_names(), "functional.name",
           f"unknown functional {name!r}; known: {', '.join(registry_names())}")
    fparams = {}
    if name == "partial_lookback":
        lam = float(_get(cfg, "functional.lambda", required=True))
        _check(lam > 1.0, "functional.lambda", f"must be > 1, got {lam}")
        fparams["lambda"] = lam
    if name == "lookback_fixed":
        fparams["strike"] = float(_get(cfg, "functional.strike", required=True))
    try:
        make_functional(name, fparams)
    except PathflowError as e:
        raise ConfigError("functional", str(e))

    seed0 = int(_get(cfg, "ensemble.seed0", 0))
    if seed_override is not None:
        seed0 = int(seed_override)
    n_paths = int(_get(cfg, "ensemble.n_paths", 1))
    _check(n_paths >= 1, "ensemble.n_paths", "must be >= 1")
    workers = int(_get(cfg, "ensemble.workers", 0))

    eps_scale = float(_get(cfg, "bandwidth.scale", 1.0))
    _check(eps_scale > 0, "bandwidth.scale", "must be > 0")
    eps_exponent = float(_get(cfg, "bandwidth.exponent", 0.4))
    _check(0.0 < eps_exponent < 1.0, "bandwidth.exponent", "must lie in (0, 1)")

    variation = _get(cfg, "variation")
    if variation is not None:
        _check(isinstance(variation, dict), "variation", "must be a table")
        variation = {k: float(v) for k, v in variation.items()}

    return verify.EnsembleConfig(
        functional=name, functional_params=fparams, process=kind,
        process_params=pparams, n_steps=n_steps, T=T, z=z, seed0=seed0,
        n_paths=n_paths, eps_scale=eps_scale, eps_exponent=eps_exponent,
        mollify_n=int(_get(cfg, "formula.mollify_n", 64)),
        quad_nodes=int(_get(cfg, "formula.quad_nodes", 64)),
        t_index=_get(cfg, "formula.t_index"), variation=variation, workers=workers,
    )


def _fmt(x) -> str:
    return f"{x:.17g}"


def _write_json(out_dir: Path, payload: dict) -> None:
    (out_dir / "report.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2, default=float) + "\n",
        encoding="utf-8",
    )


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\r\n")
        for row in rows:
            f.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row)
                    + "\r\n")


def emit_plot_data(level_reports: list, out_path: Path) -> None:
    """ladder.csv with per-refinement-level residual statistics.

    level_reports: (n_steps, epsilon, ResidualStats) triples, ordered coarse
    to fine; needs at least two levels.
    """
    if len(level_reports) < 2:
        raise PathflowError("need >=2 ladder levels to emit plot data")
    rows = [(int(n), float(eps), float(st.median_abs), float(st.mean_abs))
            for n, eps, st in level_reports]
    _write_csv(out_path, ["n_steps", "epsilon", "median_abs_residual",
                          "mean_abs_residual"], rows)


def _stats_payload(stats: verify.ResidualStats) -> dict:
    return {
        "n_paths": stats.n_paths, "mean_abs": stats.mean_abs,
        "median_abs": stats.median_abs, "p95_abs": stats.p95_abs,
        "normalizer": stats.normalizer, "relative": stats.relative,
        "mean_signed": stats.mean_signed, "relative_signed": stats.relative_signed,
        "n_failures": stats.n_failures,
    }


def run_simulate(cfg: dict, out_dir: Path, seed_override) -> int:
    ecfg = build_ensemble_config(cfg, seed_override)
    meta = []
    for seed in range(ecfg.seed0, ecfg.seed0 + ecfg.n_paths):
        path = verify._simulate(ecfg, seed)
        write_path_csv(path, str(out_dir / f"path_{seed}.csv"))
        write_path_binary(path, str(out_dir / f"path_{seed}.pfl"))
        meta.append({"seed": seed, "terminal": float(path.values[-1]),
                     "qv_total": float(quadratic_variation(path).total)})
    _write_json(out_dir, {"subcommand": "simulate", "paths": meta,
                          "config": ecfg.to_dict()})
    return EXIT_OK


def run_localtime(cfg: dict, out_dir: Path, seed_override) -> int:
    ecfg = build_ensemble_config(cfg, seed_override)
    path = verify._simulate(ecfg, ecfg.seed0)
    field, qv, eps = _build_field(cfg, ecfg, path)
    res_one = lt.occupation_check(field, lambda x: 1.0, path, qv)
    res_bump = lt.occupation_check(field, lambda x: max(0.0, 1.0 - abs(x)), path, qv)
    lt.write_csv(field, str(out_dir / "localtime.csv"))
    lt.write_binary(field, str(out_dir / "localtime.pfl2"))
    payload = {"subcommand": "localtime", "eps": eps,
               "occupation_residual_const": res_one,
               "occupation_residual_bump": res_bump, "config": ecfg.to_dict()}
    _write_json(out_dir, payload)
    gate = _get(cfg, "tolerances.max_occupation_residual")
    if gate is not None and max(res_one, res_bump) > float(gate):
        return EXIT_TOLERANCE
    return EXIT_OK


def _build_field(cfg: dict, ecfg: verify.EnsembleConfig, path):
    eps = lt.default_bandwidth(path, ecfg.eps_scale, ecfg.eps_exponent)
    qv = quadratic_variation(path)
    trim = _get(cfg, "localtime.trim_quantile")
    lo = hi = None
    if trim is not None:
        lo = float(np.quantile(path.values, float(trim))) - 3 * eps
        hi = float(np.quantile(path.values, 1.0 - float(trim))) + 3 * eps
    grid = lt.level_grid_for(path.values, eps,
                             levels_per_bandwidth=int(_get(cfg, "localtime.levels_per_bandwidth", 4)),
                             lo=lo, hi=hi)
    convention = _get(cfg, "localtime.convention", "qv_weighted")
    _check(convention in (lt.QV_WEIGHTED, lt.TIME_WEIGHTED), "localtime.convention",
           f"unknown convention {convention!r}")
    if convention == lt.QV_WEIGHTED:
        field = lt.local_time_occupation(path, qv, grid, eps)
    else:
        field = lt.local_time_time_weighted(path, grid, eps)
    return field, qv, eps


def run_variation(cfg: dict, out_dir: Path, seed_override) -> int:
    ecfg = build_ensemble_config(cfg, seed_override)
    path = verify._simulate(ecfg, ecfg.seed0)
    field, qv, eps = _build_field(cfg, ecfg, path)
    h = GridFunction2D.from_local_time(field)
    out = {"subcommand": "variation", "eps": eps, "config": ecfg.to_dict()}
    v = cfg.get("variation", {})
    if "p" in v and "q" in v:
        budget = int(v.get("pair_budget", 2000))
        b = bivariation(h, float(v["p"]), float(v["q"]), pair_budget=budget)
        out["bivariation"] = {"norm_time": b.norm_time, "norm_level": b.norm_level,
                              "method": b.method, "orders": [v["p"], v["q"]]}
        if bool(v.get("stability", False)):
            c = bivariation(h.coarsen(1), float(v["p"]), float(v["q"]),
                            pair_budget=budget)
            denom = max(b.norm_time + b.norm_level, 1e-12)
            out["bivariation_coarse"] = {"norm_time": c.norm_time,
                                         "norm_level": c.norm_level}
            out["bivariation_rel_change"] = abs(
                (b.norm_time + b.norm_level) - (c.norm_time + c.norm_level)) / denom
    if "alpha1" in v and "alpha2" in v:
        out["joint_rv"] = joint_rv(h, float(v["alpha1"]), float(v["alpha2"]))
        out["joint_lv"] = joint_lv(h, float(v["alpha2"]), float(v["alpha1"]))
    if "a" in v and "b" in v and "a_prime" in v:
        lhs, rhs = interpolation_check(h, float(v["a"]), float(v["b"]),
                                       float(v["a_prime"]))
        out["interpolation"] = {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs * (1 + 1e-9)}
    if bool(_get(cfg, "variation.holder_fit", False)):
        out["holder_space"] = holder_exponent_fit(field, "space")
        out["holder_time"] = holder_exponent_fit(field, "time")
    _write_json(out_dir, out)
    gate = _get(cfg, "tolerances.max_bivariation_rel_change")
    if gate is not None and out.get("bivariation_rel_change", 0.0) > float(gate):
        return EXIT_TOLERANCE
    return EXIT_OK


def run_verify(cfg: dict, out_dir: Path, seed_override) -> int:
    formula = _get(cfg, "formula.selector", required=True)
    _check(formula in (verify.FORMULA_SMOOTH, verify.FORMULA_SINGULAR,
                       verify.FORMULA_YOUNG, verify.FORMULA_STABLE),
           "formula.selector", f"unknown formula {formula!r}")
    ecfg = build_ensemble_config(cfg, seed_override)
    ladder_steps = _get(cfg, "ladder.n_steps") or [ecfg.n_steps]
    level_reports = []
    for n in ladder_steps:
        cfg_n = verify.EnsembleConfig.from_dict({**ecfg.to_dict(), "n_steps": int(n)})
        stats = verify.ensemble(formula, cfg_n)
        eps = cfg_n.eps_scale * (cfg_n.T / int(n)) ** cfg_n.eps_exponent
        level_reports.append((int(n), eps, stats))
    final_stats = level_reports[-1][2]
    _write_csv(out_dir / "residuals.csv", ["seed", "lhs", "residual"],
               [(int(s), float(l), float(r)) for s, l, r in
                zip(final_stats.seeds, final_stats.lhs_values, final_stats.residuals)])
    if len(level_reports) >= 2:
        emit_plot_data(level_reports, out_dir / "ladder.csv")
    payload = {"subcommand": "verify", "formula": formula,
               "stats": _stats_payload(final_stats),
               "ladder": [{"n_steps": n, "epsilon": e, **_stats_payload(s)}
                          for n, e, s in level_reports],
               "config": ecfg.to_dict()}
    _write_json(out_dir, payload)
    gate = _get(cfg, "tolerances.max_relative_signed")
    if gate is not None and final_stats.relative_signed > float(gate):
        return EXIT_TOLERANCE
    gate = _get(cfg, "tolerances.max_relative")
    if gate is not None and final_stats.relative > float(gate):
        return EXIT_TOLERANCE
    return EXIT_OK


_SUBCOMMANDS = {
    "simulate": run_simulate,
    "localtime": run_localtime,
    "variation": run_variation,
    "verify": run_verify,
}


def run(subcommand: str, config_path: str, out_dir: str, seed_override=None) -> int:
    try:
        cfg = load_config(config_path)
        declared = _get(cfg, "run.subcommand")
        if declared is not None and declared != subcommand:
            raise ConfigError("run.subcommand",
                              f"config declares {declared!r}, invoked as {subcommand!r}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return _SUBCOMMANDS[subcommand](cfg, out, seed_override)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PathflowError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pathflow",
                                     description="pathwise functional calculus experiments")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed-override", type=int, default=None)
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.out, args.seed_override)


if __name__ == "__main__":
    sys.exit(main())
