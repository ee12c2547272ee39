"""Leaky echo-state network: input layer, state evolution, ridge readout and
open/closed-loop prediction.

Column ``k`` of a state matrix is the reservoir state after consuming input
column ``k``; output ``k`` is read from it. With zero initial state this is
the usual ESN alignment where ``y_k = W_out r_k`` and
``r_k = (1 - alpha) r_{k-1} + alpha tanh(A r_{k-1} + W_in x_k)``.
"""

from __future__ import annotations

import io
import json
import math
import warnings
import zipfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from dyrc.dynamics import TimeSeries
from dyrc.errors import DimensionMismatch, NonFinite, NotTrained, ShapeMismatch, SingularSystem

__all__ = [
    "ReservoirModel",
    "ReservoirParams",
    "build_input_layer",
    "evolve",
    "load_model",
    "io_pairs",
    "mae",
    "predict_closed_loop",
    "predict_open_loop",
    "ridge_residual",
    "save_model",
    "train_readout",
]

RIDGE_RTOL = 1e-8


@dataclass(frozen=True)
class ReservoirParams:
    n_nodes: int
    n_inputs: int = 3
    alpha: float = 0.5
    input_fraction: float = 0.5
    ridge_lambda: float = 1e-6
    washout: int = 100
    spectral_target: float = 0.9

    def __post_init__(self):
        if self.n_nodes < 1 or self.n_inputs < 1:
            raise ValueError("n_nodes and n_inputs must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 < self.input_fraction <= 1.0:
            raise ValueError("input_fraction must lie in (0, 1]")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be non-negative")
        if self.washout < 0:
            raise ValueError("washout must be non-negative")
        if not self.spectral_target > 0:
            raise ValueError("spectral_target must be positive")


@dataclass(frozen=True, eq=False)
class ReservoirModel:
    A: np.ndarray
    W_in: np.ndarray
    alpha: float = 0.5
    W_out: np.ndarray | None = None
    spectral_target: float = 0.9
    seed: int | None = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        W_in = np.array(self.W_in, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if W_in.ndim != 2 or W_in.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"W_in must be ({A.shape[0]}, m), got {W_in.shape}")
        arrays = {"A": A, "W_in": W_in}
        if self.W_out is not None:
            W_out = np.array(self.W_out, dtype=float)
            if W_out.ndim != 2 or W_out.shape[1] != A.shape[0]:
                raise DimensionMismatch(f"W_out must be (m_out, {A.shape[0]}), got {W_out.shape}")
            arrays["W_out"] = W_out
        for name, a in arrays.items():
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.W_in.shape[1]

    @property
    def trained(self) -> bool:
        return self.W_out is not None

    def with_readout(self, W_out) -> ReservoirModel:
        return replace(self, W_out=W_out)


def build_input_layer(n: int, m: int, input_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Input weights feeding ``ceil(input_fraction * n)`` randomly chosen nodes.

    Selected rows get entries uniform on [-1, 1]; all other rows are zero.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    if not 0.0 < input_fraction <= 1.0:
        raise ValueError("input_fraction must lie in (0, 1]")
    count = min(n, math.ceil(round(input_fraction * n, 9)))
    rows = np.sort(rng.choice(n, size=count, replace=False))
    W_in = np.zeros((n, m))
    W_in[rows] = rng.uniform(-1.0, 1.0, size=(count, m))
    return W_in


def _step(model: ReservoirModel, r: np.ndarray, x: np.ndarray) -> np.ndarray:
    # shared by every driver so open and closed loop stay bit-identical
    return (1.0 - model.alpha) * r + model.alpha * np.tanh(model.A @ r + model.W_in @ x)


def _initial_state(model: ReservoirModel, r0) -> np.ndarray:
    if r0 is None:
        return np.zeros(model.n)
    r = np.array(r0, dtype=float)
    if r.shape != (model.n,):
        raise DimensionMismatch(f"r0 must have length {model.n}, got shape {r.shape}")
    return r


def evolve(model: ReservoirModel, inputs, r0=None) -> np.ndarray:
    """Drive the reservoir with ``inputs`` (m x T); returns states (n x T)."""
    X = np.asarray(inputs, dtype=float)
    if X.ndim != 2 or X.shape[0] != model.m:
        raise DimensionMismatch(f"inputs must be ({model.m}, T), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs must be finite")
    r = _initial_state(model, r0)
    R = np.empty((model.n, X.shape[1]))
    for k in range(X.shape[1]):
        r = _step(model, r, X[:, k])
        R[:, k] = r
    return R


def ridge_residual(R, Y, W_out, lam: float, washout: int = 0) -> float:
    """Relative normal-equations residual of a ridge readout."""
    Rw, Yw = R[:, washout:], Y[:, washout:]
    gram = Rw @ Rw.T + lam * np.eye(Rw.shape[0])
    rhs = Rw @ Yw.T
    res = np.linalg.norm(gram @ W_out.T - rhs)
    return float(res / max(np.linalg.norm(rhs), np.finfo(float).tiny))


def train_readout(R, Y, lam: float = 1e-6, washout: int = 0) -> np.ndarray:
    """Ridge readout ``W_out = Y R^T (R R^T + lam I)^-1`` on washout-trimmed data.

    Solved by Cholesky with a few rounds of iterative refinement; raises
    :class:`SingularSystem` if the normal equations cannot be solved to a
    relative residual of ``RIDGE_RTOL``.
    """
    R = np.asarray(R, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if R.ndim != 2 or Y.ndim != 2 or R.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"R {R.shape} and Y {Y.shape} must share the time axis")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if not 0 <= washout < R.shape[1]:
        raise ValueError(f"washout {washout} must be < number of states {R.shape[1]}")
    Rw, Yw = R[:, washout:], Y[:, washout:]
    if Rw.shape[1] <= Rw.shape[0]:
        warnings.warn(
            f"{Rw.shape[1]} training states for {Rw.shape[0]} nodes; the readout is underdetermined",
            stacklevel=2,
        )
    gram = Rw @ Rw.T
    gram[np.diag_indices_from(gram)] += lam
    rhs = Rw @ Yw.T
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("state Gram matrix is singular; increase the ridge coefficient") from exc
    sol = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    rhs_norm = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    for _ in range(3):
        resid = rhs - gram @ sol
        if np.linalg.norm(resid) <= RIDGE_RTOL * rhs_norm:
            break
        sol = sol + scipy.linalg.cho_solve(factor, resid, check_finite=False)
    rel = np.linalg.norm(rhs - gram @ sol) / rhs_norm
    if not np.isfinite(rel) or rel > RIDGE_RTOL:
        raise SingularSystem(f"ridge residual {rel:.3g} exceeds {RIDGE_RTOL:g}; increase the ridge coefficient")
    return sol.T.copy()


def predict_open_loop(model: ReservoirModel, inputs, r0=None) -> np.ndarray:
    """Teacher-forced prediction: every step sees the true input."""
    if not model.trained:
        raise NotTrained("model has no readout")
    R = evolve(model, inputs, r0)
    # column-wise matvec matches the closed-loop readout bit for bit
    out = np.empty((model.W_out.shape[0], R.shape[1]))
    for k in range(R.shape[1]):
        out[:, k] = model.W_out @ R[:, k]
    return out


def predict_closed_loop(model: ReservoirModel, forcing, y_init, r0=None) -> np.ndarray:
    """Free run driven only by the exogenous forcing.

    Step ``k`` is fed ``[y_hat_{k-1}, g_k]`` where ``y_hat_{-1} = y_init``.
    """
    if not model.trained:
        raise NotTrained("model has no readout")
    g = np.asarray(forcing, dtype=float).reshape(-1)
    y = np.array(y_init, dtype=float).reshape(-1)
    m_out = model.W_out.shape[0]
    if y.shape != (m_out,) or m_out + 1 != model.m:
        raise DimensionMismatch(f"expected y_init of length {model.m - 1} matching W_out rows")
    r = _initial_state(model, r0)
    out = np.empty((m_out, len(g)))
    x = np.empty(model.m)
    # overflow is reported through NonFinite below, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(len(g)):
            x[:m_out] = y
            x[m_out] = g[k]
            r = _step(model, r, x)
            y = model.W_out @ r
            if not np.all(np.isfinite(y)):
                raise NonFinite(f"closed-loop prediction diverged at step {k}", step=k)
            out[:, k] = y
    return out


def mae(y_hat, y_test) -> float:
    y_hat = np.asarray(y_hat, dtype=float)
    y_test = np.asarray(y_test, dtype=float)
    if y_hat.shape != y_test.shape:
        raise ShapeMismatch(f"shapes differ: {y_hat.shape} vs {y_test.shape}")
    return float(np.mean(np.abs(y_hat - y_test)))


def io_pairs(ts: TimeSeries) -> tuple[np.ndarray, np.ndarray]:
    """Inputs ``[q_{k-1}, qdot_{k-1}, g_k]`` and targets ``[q_k, qdot_k]`` for k = 1..T-1."""
    X = np.vstack([ts.q[:-1], ts.qdot[:-1], ts.g[1:]])
    Y = np.vstack([ts.q[1:], ts.qdot[1:]])
    return X, Y


# -- serialization -------------------------------------------------------------


def _matrix_csv(a: np.ndarray) -> str:
    return "".join(",".join(format(float(v), ".17g") for v in row) + "\n" for row in a)


def _parse_matrix(text: str, shape: tuple[int, int]) -> np.ndarray:
    rows = [line.split(",") for line in text.splitlines() if line]
    a = np.array([[float(v) for v in row] for row in rows], dtype=float).reshape(shape)
    return a


def save_model(model: ReservoirModel, path) -> None:
    """Zip archive: ``header.json`` plus row-major CSV blocks ``A``, ``W_in``, ``W_out``."""
    header = {
        "n": model.n,
        "m": model.m,
        "m_out": None if model.W_out is None else int(model.W_out.shape[0]),
        "alpha": model.alpha,
        "spectral_target": model.spectral_target,
        "seed": model.seed,
    }
    members = {
        "header.json": json.dumps(header, indent=2, sort_keys=True),
        "A.csv": _matrix_csv(model.A),
        "W_in.csv": _matrix_csv(model.W_in),
    }
    if model.W_out is not None:
        members["W_out.csv"] = _matrix_csv(model.W_out)
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for name, text in members.items():
            # fixed timestamp keeps archives byte-reproducible
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, text)
    Path(path).write_bytes(buf.getvalue())


def load_model(path) -> ReservoirModel:
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        n, m = header["n"], header["m"]
        A = _parse_matrix(zf.read("A.csv").decode(), (n, n))
        W_in = _parse_matrix(zf.read("W_in.csv").decode(), (n, m))
        W_out = None
        if header.get("m_out") is not None:
            W_out = _parse_matrix(zf.read("W_out.csv").decode(), (header["m_out"], n))
    return ReservoirModel(
        A=A,
        W_in=W_in,
        alpha=header["alpha"],
        W_out=W_out,
        spectral_target=header["spectral_target"],
        seed=header.get("seed"),
    )
