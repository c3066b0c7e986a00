"""Discretized driving-process paths and the path algebra built on them.

Paths live on uniform time grids; every generator is a pure function of its
parameters and a 64-bit seed, drawn from a counter-based Philox stream so
ensembles can run in parallel without shared RNG state.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError, SimulationDivergedError

KIND_BROWNIAN = "brownian"
KIND_EULER = "euler_sde"
KIND_STABLE = "symmetric_stable"

_KIND_TAGS = {KIND_BROWNIAN: 0, KIND_EULER: 1, KIND_STABLE: 2}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}

_BINARY_MAGIC = b"PFL1"


def _philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def gaussian_increments(seed: int, n: int) -> np.ndarray:
    """n standard normals via Box-Muller on the Philox stream keyed by seed."""
    rng = _philox(seed)
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1]: keeps the log finite
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * m)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:n]


def stable_increments(seed: int, n: int, beta: float) -> np.ndarray:
    """n standard symmetric beta-stable draws by the Chambers-Mallows-Stuck transform.

    At beta=2 the transform reduces to 2 sin(U) sqrt(E), i.e. N(0, 2): the
    variance-2 convention documented in the module notes.
    """
    rng = _philox(seed)
    u = (rng.random(n) - 0.5) * np.pi
    e = -np.log(1.0 - rng.random(n))
    if abs(beta - 2.0) < 1e-14:
        return 2.0 * np.sin(u) * np.sqrt(e)
    return (np.sin(beta * u) / np.cos(u) ** (1.0 / beta)) * (
        np.cos((1.0 - beta) * u) / e
    ) ** ((1.0 - beta) / beta)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SamplePath:
    """A realization of the driving process X on a uniform grid of n_steps+1 points."""

    z: float
    T: float
    n_steps: int
    values: np.ndarray
    kind: str
    seed: int
    beta: Optional[float] = None

    def __post_init__(self):
        if self.n_steps < 1:
            raise InvalidArgumentError("n_steps must be >= 1")
        if not self.T > 0:
            raise InvalidArgumentError("T must be > 0")
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.n_steps + 1,):
            raise InvalidArgumentError(
                f"values must have n_steps+1 = {self.n_steps + 1} entries, got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise SimulationDivergedError(bad, f"non-finite path value at index {bad}")
        if v[0] != self.z:
            raise InvalidArgumentError("values[0] must equal the initial value z")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def time_of(self, i: int) -> float:
        return i * self.dt

    def increments(self) -> np.ndarray:
        return np.diff(self.values)


@dataclass(frozen=True)
class QVPath:
    """Cumulative quadratic variation: exact sums of squared increments."""

    parent: SamplePath
    cumulative: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cumulative, dtype=np.float64)
        if c.shape != self.parent.values.shape:
            raise InvalidArgumentError("cumulative must match the parent grid")
        if c[0] != 0.0 or np.any(np.diff(c) < 0):
            raise InvalidArgumentError("cumulative must start at 0 and be non-decreasing")
        object.__setattr__(self, "cumulative", _freeze(c))

    def increments(self) -> np.ndarray:
        return np.diff(self.cumulative)

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])


@dataclass(frozen=True)
class PathSlice:
    """A lazy view of a path up to a cut index, with optional modifications.

    Modifications are the three operators of the functional calculus: terminal
    value replacement, a vertical bump of the terminal, and flat extension in
    time.  When a flat extension is present, the replacement/bump applies at
    the extension end (the current time of the extended path) and the flat
    segment carries the unmodified value at the cut.  Reads never copy or
    mutate the parent.
    """

    parent: SamplePath
    cut_index: int
    terminal_override: Optional[float] = None
    flat_extension_to: Optional[int] = None
    vertical_bump: Optional[float] = None

    def __post_init__(self):
        n = self.parent.n_steps
        if not 0 <= self.cut_index <= n:
            raise InvalidArgumentError(f"cut_index {self.cut_index} outside [0, {n}]")
        if self.terminal_override is not None and self.vertical_bump is not None:
            raise InvalidArgumentError("terminal_override and vertical_bump are mutually exclusive")
        if self.flat_extension_to is not None and not (
            self.cut_index <= self.flat_extension_to <= n
        ):
            raise InvalidArgumentError(
                f"flat_extension_to {self.flat_extension_to} outside [{self.cut_index}, {n}]"
            )

    @property
    def end_index(self) -> int:
        return self.cut_index if self.flat_extension_to is None else self.flat_extension_to

    @property
    def time(self) -> float:
        return self.end_index * self.parent.dt

    @property
    def base_terminal(self) -> float:
        """Value at the cut before any modification (the flat-extension value)."""
        return float(self.parent.values[self.cut_index])

    @property
    def terminal(self) -> float:
        if self.terminal_override is not None:
            return float(self.terminal_override)
        if self.vertical_bump is not None:
            return self.base_terminal + float(self.vertical_bump)
        return self.base_terminal

    def value_at(self, i: int) -> float:
        if not 0 <= i <= self.end_index:
            raise InvalidArgumentError(f"index {i} outside [0, {self.end_index}]")
        if i < self.cut_index:
            return float(self.parent.values[i])
        if i == self.end_index:
            return self.terminal
        return self.base_terminal

    def history(self) -> np.ndarray:
        """Read-only view of the parent values strictly before the cut."""
        return self.parent.values[: self.cut_index]

    def with_override(self, x: float) -> "PathSlice":
        return PathSlice(self.parent, self.cut_index, terminal_override=float(x),
                         flat_extension_to=self.flat_extension_to)


@dataclass(frozen=True)
class StopRule:
    """First exit of |X| above a level M, capped at n_steps."""

    parent: SamplePath
    level: float
    stop_index: int = field(init=False, default=0)

    def __post_init__(self):
        if not self.level > 0:
            raise InvalidArgumentError("level M must be > 0")
        exceed = np.flatnonzero(np.abs(self.parent.values) > self.level)
        idx = int(exceed[0]) if exceed.size else self.parent.n_steps
        object.__setattr__(self, "stop_index", idx)


def simulate_brownian(n_steps: int, T: float, z: float, seed: int) -> SamplePath:
    """Brownian path: independent Gaussian increments of variance T/n_steps."""
    if n_steps < 1 or not T > 0:
        raise InvalidArgumentError("need n_steps >= 1 and T > 0")
    dt = T / n_steps
    inc = gaussian_increments(seed, n_steps) * np.sqrt(dt)
    values = np.concatenate([[z], z + np.cumsum(inc)])
    return SamplePath(z=z, T=T, n_steps=n_steps, values=values, kind=KIND_BROWNIAN, seed=seed)


def simulate_euler_sde(drift: Callable[[float], float], vol: Callable[[float], float],
                       n_steps: int, T: float, z: float, seed: int) -> SamplePath:
    """Euler-Maruyama scheme X[k+1] = X[k] + drift(X[k]) dt + vol(X[k]) dB.

    Uses the same Gaussian stream as simulate_brownian, so vol=1, drift=0
    reproduces it bit for bit.  Non-finite values fail fast with the step index.
    """
    if n_steps < 1 or not T > 0:
        raise InvalidArgumentError("need n_steps >= 1 and T > 0")
    dt = T / n_steps
    db = gaussian_increments(seed, n_steps) * np.sqrt(dt)
    values = np.empty(n_steps + 1)
    values[0] = x = float(z)
    for k in range(n_steps):
        x = x + drift(x) * dt + vol(x) * db[k]
        if not np.isfinite(x):
            raise SimulationDivergedError(k + 1)
        values[k + 1] = x
    return SamplePath(z=z, T=T, n_steps=n_steps, values=values, kind=KIND_EULER, seed=seed)


def simulate_symmetric_stable(beta: float, n_steps: int, T: float, seed: int,
                              z: float = 0.0) -> SamplePath:
    """Symmetric beta-stable path, increments scaled by (T/n_steps)^(1/beta).

    1 < beta <= 2.  The scale convention is S_beta((dt)^(1/beta), 0, 0); at
    beta=2 the increments have variance 2 dt, a factor sqrt(2) above Brownian.
    The simulated process is the standard cadlag stable process: for beta < 2
    it jumps, although the source results are phrased for continuous paths.
    """
    if not (1.0 < beta <= 2.0):
        raise InvalidArgumentError(f"beta must lie in (1, 2], got {beta}")
    if n_steps < 1 or not T > 0:
        raise InvalidArgumentError("need n_steps >= 1 and T > 0")
    dt = T / n_steps
    inc = stable_increments(seed, n_steps, beta) * dt ** (1.0 / beta)
    values = np.concatenate([[z], z + np.cumsum(inc)])
    return SamplePath(z=z, T=T, n_steps=n_steps, values=values, kind=KIND_STABLE,
                      seed=seed, beta=beta)


def quadratic_variation(path: SamplePath) -> QVPath:
    inc = np.diff(path.values)
    cumulative = np.concatenate([[0.0], np.cumsum(inc * inc)])
    return QVPath(parent=path, cumulative=cumulative)


def stop_at_level(path: SamplePath, M: float) -> StopRule:
    return StopRule(parent=path, level=M)


def slice_at(path: SamplePath, cut_index: int) -> PathSlice:
    return PathSlice(parent=path, cut_index=cut_index)


def modify_terminal(s: PathSlice, x: float) -> PathSlice:
    if s.vertical_bump is not None:
        raise InvalidArgumentError("cannot modify the terminal of a bumped slice")
    return PathSlice(s.parent, s.cut_index, terminal_override=float(x),
                     flat_extension_to=s.flat_extension_to)


def flat_extend(s: PathSlice, to_index: int) -> PathSlice:
    return PathSlice(s.parent, s.cut_index, terminal_override=s.terminal_override,
                     flat_extension_to=to_index, vertical_bump=s.vertical_bump)


def bump(s: PathSlice, h: float) -> PathSlice:
    if s.terminal_override is not None:
        raise InvalidArgumentError("cannot bump a terminal-modified slice")
    return PathSlice(s.parent, s.cut_index, flat_extension_to=s.flat_extension_to,
                     vertical_bump=float(h))


def write_csv(path: SamplePath, file) -> None:
    """time,value rows with 17 significant digits."""
    own = isinstance(file, str)
    f = open(file, "w", newline="") if own else file
    try:
        f.write("time,value\r\n")
        dt = path.dt
        for i, v in enumerate(path.values):
            f.write(f"{i * dt:.17g},{v:.17g}\r\n")
    finally:
        if own:
            f.close()


def read_csv(file) -> tuple[np.ndarray, np.ndarray]:
    own = isinstance(file, str)
    f = open(file, "r") if own else file
    try:
        header = f.readline()
        if not header.startswith("time,value"):
            raise InvalidArgumentError("not a path CSV: missing time,value header")
        rows = [line.strip().split(",") for line in f if line.strip()]
    finally:
        if own:
            f.close()
    t = np.array([float(r[0]) for r in rows])
    v = np.array([float(r[1]) for r in rows])
    return t, v


def write_binary(path: SamplePath, file) -> None:
    """Binary cache: magic PFL1, little-endian header, float64 values."""
    own = isinstance(file, str)
    f = open(file, "wb") if own else file
    try:
        beta = path.beta if path.beta is not None else float("nan")
        f.write(_BINARY_MAGIC)
        f.write(struct.pack("<QddBQd", path.n_steps, path.T, path.z,
                            _KIND_TAGS[path.kind], path.seed & 0xFFFFFFFFFFFFFFFF, beta))
        f.write(np.asarray(path.values, dtype="<f8").tobytes())
    finally:
        if own:
            f.close()


def read_binary(file) -> SamplePath:
    own = isinstance(file, str)
    f = open(file, "rb") if own else file
    try:
        magic = f.read(4)
        if magic != _BINARY_MAGIC:
            raise InvalidArgumentError(f"bad magic {magic!r}, expected {_BINARY_MAGIC!r}")
        n_steps, T, z, tag, seed, beta = struct.unpack("<QddBQd", f.read(41))
        values = np.frombuffer(f.read(8 * (n_steps + 1)), dtype="<f8")
    finally:
        if own:
            f.close()
    return SamplePath(z=z, T=T, n_steps=int(n_steps), values=values.copy(),
                      kind=_TAG_KINDS[int(tag)], seed=int(seed),
                      beta=None if np.isnan(beta) else float(beta))
