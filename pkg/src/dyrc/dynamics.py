"""Forced Duffing oscillator: trajectories, train/test splitting and CSV I/O.

The oscillator is

    q'' + d q' + k q + k_nl q^3 = F cos(Omega t)

integrated with a fixed-step classical Runge-Kutta scheme so the recorded
series is uniformly sampled (the visibility graph and the reservoir both
rely on that).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from dyrc.errors import NonFinite, TooShort

__all__ = [
    "DUFFING_SETS",
    "DuffingParams",
    "SimConfig",
    "TimeSeries",
    "duffing_rhs",
    "integrate",
    "read_series_csv",
    "split",
    "write_series_csv",
]


@dataclass(frozen=True)
class DuffingParams:
    d: float
    k: float
    k_nl: float
    F: float
    Omega: float

    def __post_init__(self):
        for name in ("d", "k", "k_nl", "F", "Omega"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.Omega <= 0:
            raise ValueError("Omega must be positive")
        if self.F < 0:
            raise ValueError("F must be non-negative")

    @property
    def period(self) -> float:
        """Forcing period 2*pi/Omega."""
        return 2.0 * math.pi / self.Omega


# Parameter sets 1-3 of the benchmark.
DUFFING_SETS: dict[int, DuffingParams] = {
    1: DuffingParams(d=0.02, k=1.0, k_nl=5.0, Omega=8.0, F=0.5),
    2: DuffingParams(d=0.1, k=-1.0, k_nl=0.25, Omega=2.5, F=2.0),
    3: DuffingParams(d=0.1, k=1.0, k_nl=2.0, Omega=35.0, F=2.0),
}


@dataclass(frozen=True)
class SimConfig:
    """Sampling and initial-condition settings for :func:`integrate`.

    ``dt_record=None`` means 100 samples per forcing period.
    """

    dt_record: float | None = None
    substeps: int = 1
    n_transient: int = 2000
    n_samples: int = 12000
    q0: float = 1.0
    v0: float = 0.0

    def __post_init__(self):
        if self.dt_record is not None and not self.dt_record > 0:
            raise ValueError("dt_record must be positive")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError("substeps must be a positive integer")
        if not (0 <= self.n_transient < self.n_samples):
            raise ValueError("need 0 <= n_transient < n_samples")
        if not (math.isfinite(self.q0) and math.isfinite(self.v0)):
            raise ValueError("initial condition must be finite")

    def resolve_dt(self, p: DuffingParams) -> float:
        if self.dt_record is not None:
            return float(self.dt_record)
        return 2.0 * math.pi / (100.0 * p.Omega)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled trajectory (t, q, qdot, g)."""

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    g: np.ndarray
    dt: float = field(init=False)

    def __post_init__(self):
        for name in ("t", "q", "qdot", "g"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = len(self.t)
        if any(len(a) != n for a in (self.q, self.qdot, self.g)):
            raise ValueError("t, q, qdot and g must have equal length")
        if n < 2:
            raise TooShort("a time series needs at least 2 samples")
        steps = np.diff(self.t)
        dt = (self.t[-1] - self.t[0]) / (n - 1)
        tol = 1e-12 * max(abs(self.t[0]), abs(self.t[-1]), dt)
        if not dt > 0 or np.any(np.abs(steps - dt) > tol):
            raise ValueError("t must be strictly increasing with uniform spacing")
        object.__setattr__(self, "dt", float(dt))

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, sl: slice) -> TimeSeries:
        if not isinstance(sl, slice):
            raise TypeError("TimeSeries only supports slicing")
        return TimeSeries(self.t[sl], self.q[sl], self.qdot[sl], self.g[sl])

    def states(self) -> np.ndarray:
        """(2, T) array of [q, qdot]."""
        return np.vstack([self.q, self.qdot])


def duffing_rhs(state, t: float, p: DuffingParams) -> tuple[float, float]:
    """Right-hand side of the first-order Duffing system."""
    q, qdot = state
    qddot = p.F * math.cos(p.Omega * t) - p.d * qdot - p.k * q - p.k_nl * q * q * q
    return qdot, qddot


def integrate(p: DuffingParams, cfg: SimConfig = SimConfig()) -> TimeSeries:
    """Fixed-step RK4 trajectory, transient removed.

    The internal step is ``dt_record / substeps``. Times are computed as
    ``index * step`` (never accumulated) so sampling stays exactly uniform.
    Raises :class:`NonFinite` at the first sample where the state blows up.
    """
    dt_rec = cfg.resolve_dt(p)
    sub = int(cfg.substeps)
    h = dt_rec / sub
    n = cfg.n_samples
    qs = np.empty(n)
    vs = np.empty(n)
    d, k, knl, F, Om = p.d, p.k, p.k_nl, p.F, p.Omega
    cos = math.cos

    def acc(q, v, t):
        return F * cos(Om * t) - d * v - k * q - knl * q * q * q

    q, v = float(cfg.q0), float(cfg.v0)
    qs[0], vs[0] = q, v
    step = 0
    for i in range(1, n):
        for _ in range(sub):
            t = step * h
            k1q, k1v = v, acc(q, v, t)
            q2, v2 = q + 0.5 * h * k1q, v + 0.5 * h * k1v
            k2q, k2v = v2, acc(q2, v2, t + 0.5 * h)
            q3, v3 = q + 0.5 * h * k2q, v + 0.5 * h * k2v
            k3q, k3v = v3, acc(q3, v3, t + 0.5 * h)
            q4, v4 = q + h * k3q, v + h * k3v
            k4q, k4v = v4, acc(q4, v4, t + h)
            q = q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
            v = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            step += 1
        if not (math.isfinite(q) and math.isfinite(v)):
            raise NonFinite(f"trajectory diverged at t={i * dt_rec!r}", time=i * dt_rec)
        qs[i], vs[i] = q, v

    idx = np.arange(cfg.n_transient, n)
    t = idx * dt_rec
    g = F * np.cos(Om * t)
    return TimeSeries(t, qs[idx], vs[idx], g)


def split(ts: TimeSeries, train_fraction: float = 0.8) -> tuple[TimeSeries, TimeSeries]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    cut = math.floor(train_fraction * len(ts))
    if cut < 2 or len(ts) - cut < 2:
        raise TooShort(f"split of {len(ts)} samples at {train_fraction} leaves a side with < 2 samples")
    return ts[:cut], ts[cut:]


def with_overrides(p: DuffingParams, **overrides: float) -> DuffingParams:
    return replace(p, **{k: float(v) for k, v in overrides.items()})


# -- CSV ---------------------------------------------------------------------

_HEADER = ("t", "q", "qdot", "g")


def write_series_csv(ts: TimeSeries, target) -> None:
    """Write ``t,q,qdot,g`` rows at 17 significant digits.

    ``target`` is a path or a text stream.
    """
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="") as fh:
            write_series_csv(ts, fh)
        return
    w = csv.writer(target, lineterminator="\n")
    w.writerow(_HEADER)
    for row in zip(ts.t, ts.q, ts.qdot, ts.g):
        w.writerow([format(float(x), ".17g") for x in row])


def read_series_csv(source) -> TimeSeries:
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_series_csv(fh)
    r = csv.reader(source)
    header = next(r, None)
    if header is None or tuple(h.strip() for h in header) != _HEADER:
        raise ValueError(f"expected header {','.join(_HEADER)!r}, got {header!r}")
    cols: list[list[float]] = [[], [], [], []]
    for lineno, row in enumerate(r, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ValueError(f"line {lineno}: expected 4 fields")
        for c, x in zip(cols, row):
            c.append(float(x))
    return TimeSeries(*cols)
