"""Reservoir topologies: visibility graphs, Erdos-Renyi baselines, spectral
scaling and network metrics.

Weights are stored as dense ``n x n`` arrays; entry ``(i, j)`` is the weight of
the edge ``i -> j``. Reservoirs here never exceed a few hundred nodes, so dense
linear algebra is both simpler and faster than sparse formats.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse

from dyrc.errors import (
    LengthMismatch,
    NoConvergence,
    NonMonotonicTimes,
    SectionTooLong,
    ZeroSpectralRadius,
)

__all__ = [
    "NetworkMetrics",
    "Section",
    "WeightedDigraph",
    "erdos_renyi",
    "metrics",
    "read_graph_csv",
    "sample_sections",
    "scale_to_spectral_radius",
    "section_slice",
    "spectral_radius",
    "visibility_graph",
    "write_graph_csv",
]


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    weights: np.ndarray
    directed: bool

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(np.diag(w) != 0):
            raise ValueError("self-loops are not allowed")
        if not self.directed and not np.array_equal(w, w.T):
            raise ValueError("undirected graph needs a symmetric weight matrix")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "directed", bool(self.directed))

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def support(self) -> np.ndarray:
        """Boolean adjacency (edge present where the weight is nonzero)."""
        return self.weights != 0

    @property
    def n_edges(self) -> int:
        """Edge count; undirected edges are counted once."""
        m = int(np.count_nonzero(self.weights))
        return m if self.directed else m // 2

    def edges(self) -> list[tuple[int, int]]:
        src, dst = np.nonzero(self.weights)
        if not self.directed:
            keep = src < dst
            src, dst = src[keep], dst[keep]
        return list(zip(src.tolist(), dst.tolist()))

    def __eq__(self, other):
        if not isinstance(other, WeightedDigraph):
            return NotImplemented
        return self.directed == other.directed and np.array_equal(self.weights, other.weights)

    __hash__ = None


@dataclass(frozen=True)
class Section:
    """A strided window of the training series that seeds one visibility graph."""

    start: int
    stride: int
    length: int

    def __post_init__(self):
        if self.start < 0 or self.stride < 1 or self.length < 1:
            raise ValueError(f"invalid section {self}")

    @property
    def span(self) -> int:
        return (self.length - 1) * self.stride + 1

    @property
    def stop(self) -> int:
        return self.start + self.span


def section_slice(section: Section) -> slice:
    return slice(section.start, section.stop, section.stride)


@dataclass(frozen=True)
class NetworkMetrics:
    nu: float
    rho: float
    k_in: float
    k_out: float
    c: float
    b: float

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("nu", "rho", "k_in", "k_out", "c", "b")}


# -- visibility graph ----------------------------------------------------------


def _visible_naive(x: np.ndarray, t: np.ndarray, i: int, j: int) -> bool:
    l = slice(i + 1, j)
    return bool(np.all(x[l] < x[j] + (x[i] - x[j]) * (t[j] - t[l]) / (t[j] - t[i])))


def visibility_graph(values, times=None) -> WeightedDigraph:
    """Natural visibility graph of a scalar series.

    Points ``i < j`` are linked iff every intermediate point lies strictly
    below the straight line joining them. Each row is scanned once while
    tracking the steepest slope seen so far (``O(n^2)``); pairs whose slope
    is within rounding of that running maximum are decided by evaluating
    the line criterion directly, so the result agrees bit-for-bit with the
    brute-force triple loop.
    """
    x = np.asarray(values, dtype=float)
    t = np.arange(len(x), dtype=float) if times is None else np.asarray(times, dtype=float)
    if x.ndim != 1 or t.ndim != 1 or len(x) != len(t):
        raise LengthMismatch(f"values and times differ in length ({len(x)} vs {len(t)})")
    n = len(x)
    if n < 2:
        raise LengthMismatch("need at least two points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise ValueError("values and times must be finite")
    if np.any(np.diff(t) <= 0):
        raise NonMonotonicTimes("times must be strictly increasing")

    adj = np.zeros((n, n))
    # Slope rounding bounds: differences of x relative to the smallest time
    # gap, and time differences that lose digits when |t| >> gap.
    gap = float(np.min(np.diff(t)))
    abs_tol = 1e-9 * 2.0 * float(np.max(np.abs(x))) / gap
    rel_tol = 1e-9 + 64.0 * np.finfo(float).eps * n * float(np.max(np.abs(t))) / gap
    for i in range(n - 1):
        adj[i, i + 1] = 1.0  # temporal neighbours always see each other
        if i + 2 >= n:
            continue
        slope = (x[i + 1:] - x[i]) / (t[i + 1:] - t[i])
        s = slope[1:]
        prev = np.maximum.accumulate(slope[:-1])
        margin = rel_tol * (np.abs(s) + np.abs(prev)) + abs_tol
        visible = s > prev + margin
        unsure = ~visible & (s >= prev - margin)
        for off in np.flatnonzero(unsure):
            visible[off] = _visible_naive(x, t, i, i + 2 + off)
        adj[i, i + 2:] = visible
    adj = adj + adj.T
    return WeightedDigraph(adj, directed=False)


def sample_sections(
    train_len: int,
    n_points: int,
    stride: int,
    n_sections: int,
    *,
    method: str = "even",
    rng: np.random.Generator | None = None,
) -> list[Section]:
    """Start indices for ``n_sections`` windows of ``n_points`` samples.

    ``method="even"`` spaces starts as ``round(i * (train_len - span) / (n_sections - 1))``
    (half-up rounding, exact integer arithmetic); ``method="random"`` draws
    them uniformly from ``rng``.
    """
    if n_points < 1 or stride < 1 or n_sections < 1:
        raise ValueError("n_points, stride and n_sections must be positive")
    span = (n_points - 1) * stride + 1
    if span > train_len:
        raise SectionTooLong(f"section span {span} exceeds training length {train_len}")
    free = train_len - span
    if method == "even":
        if n_sections == 1:
            starts = [0]
        else:
            den = n_sections - 1
            starts = [(2 * i * free + den) // (2 * den) for i in range(n_sections)]
    elif method == "random":
        if rng is None:
            raise ValueError("random sections need a generator")
        starts = rng.integers(0, free + 1, size=n_sections).tolist()
    else:
        raise ValueError(f"unknown section method {method!r}")
    return [Section(int(s), stride, n_points) for s in starts]


# -- random baseline -----------------------------------------------------------


def erdos_renyi(n: int, p: float, rng: np.random.Generator) -> WeightedDigraph:
    """Directed G(n, p): every ordered pair ``i != j`` is an edge with probability ``p``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    adj = (rng.random((n, n)) < p).astype(float)
    np.fill_diagonal(adj, 0.0)
    return WeightedDigraph(adj, directed=True)


# -- spectral radius -----------------------------------------------------------


def spectral_radius(g: WeightedDigraph, method: str = "dense") -> float:
    """Largest eigenvalue modulus of the weight matrix.

    ``method="arpack"`` uses an implicitly restarted Arnoldi iteration and
    raises :class:`NoConvergence` when it fails; the dense LAPACK path is
    the default and is exact to rounding for the sizes used here.
    """
    w = g.weights
    if g.n == 0:
        raise ValueError("empty graph")
    if method == "dense":
        if not g.directed:
            return float(np.max(np.abs(np.linalg.eigvalsh(w))))
        return float(np.max(np.abs(np.linalg.eigvals(w))))
    if method == "arpack":
        from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigs

        if g.n < 3:
            return spectral_radius(g, "dense")
        try:
            vals = eigs(w, k=1, which="LM", tol=1e-13, return_eigenvectors=False, maxiter=10 * g.n)
        except (ArpackNoConvergence, ArpackError) as exc:
            raise NoConvergence(str(exc)) from exc
        return float(np.abs(vals[0]))
    raise ValueError(f"unknown method {method!r}")


def scale_to_spectral_radius(g: WeightedDigraph, target: float = 0.9) -> WeightedDigraph:
    if not target > 0:
        raise ValueError("target spectral radius must be positive")
    nu = spectral_radius(g)
    scale = float(np.max(np.abs(g.weights), initial=0.0))
    if nu <= 1e-12 * max(scale, 1.0) * g.n:
        raise ZeroSpectralRadius(f"spectral radius is zero (nu={nu:.3g}); cannot rescale")
    return WeightedDigraph(g.weights * (target / nu), g.directed)


# -- metrics -------------------------------------------------------------------


def _undirected_support(g: WeightedDigraph) -> np.ndarray:
    s = g.support
    return (s | s.T).astype(float)


def clustering_coefficients(g: WeightedDigraph) -> np.ndarray:
    """Per-node clustering on the undirected support; 0 for degree < 2."""
    s = _undirected_support(g)
    deg = s.sum(axis=1)
    tri2 = ((s @ s) * s).sum(axis=1)  # 2 * triangles through v
    out = np.zeros(g.n)
    ok = deg >= 2
    out[ok] = tri2[ok] / (deg[ok] * (deg[ok] - 1))
    return out


def betweenness(g: WeightedDigraph) -> np.ndarray:
    """Unnormalised betweenness over unordered endpoint pairs, undirected support.

    Brandes' path counting and dependency accumulation, run for all sources at
    once. Each BFS level is kept as sparse (source, node) index arrays, so the
    cost scales with the number of pairs times the mean degree rather than
    with ``n^2`` per level (visibility graphs of smooth signals have diameters
    in the hundreds).
    """
    n = g.n
    s = scipy.sparse.csr_matrix(_undirected_support(g))
    dist = np.full((n, n), -1, dtype=np.int64)
    sigma = np.zeros((n, n))
    rows = cols = np.arange(n)
    dist[rows, cols] = 0
    sigma[rows, cols] = 1.0
    levels = [(rows, cols)]
    while True:
        r, c = levels[-1]
        frontier = scipy.sparse.csr_matrix((sigma[r, c], (r, c)), shape=(n, n))
        nxt = (frontier @ s).tocoo()
        fresh = dist[nxt.row, nxt.col] < 0
        if not fresh.any():
            break
        r, c = nxt.row[fresh], nxt.col[fresh]
        dist[r, c] = len(levels)
        sigma[r, c] = nxt.data[fresh]
        levels.append((r, c))

    delta = np.zeros((n, n))
    for d in range(len(levels) - 1, 1, -1):
        r, c = levels[d]
        q = scipy.sparse.csr_matrix(((1.0 + delta[r, c]) / sigma[r, c], (r, c)), shape=(n, n))
        contrib = (q @ s).tocoo()
        keep = dist[contrib.row, contrib.col] == d - 1
        pr, pc = contrib.row[keep], contrib.col[keep]
        delta[pr, pc] += sigma[pr, pc] * contrib.data[keep]
    return delta.sum(axis=0) / 2.0


def density(g: WeightedDigraph) -> float:
    n = g.n
    m = int(np.count_nonzero(g.weights))
    # m counts both directions of undirected edges, so 2E/(n(n-1)) == m/(n(n-1))
    return m / (n * (n - 1))


def metrics(g: WeightedDigraph) -> NetworkMetrics:
    if g.n < 2:
        raise ValueError("metrics need at least two nodes")
    sup = g.support
    return NetworkMetrics(
        nu=spectral_radius(g),
        rho=density(g),
        k_in=float(sup.sum(axis=0).mean()),
        k_out=float(sup.sum(axis=1).mean()),
        c=float(clustering_coefficients(g).mean()),
        b=float(betweenness(g).mean()),
    )


# -- edge-list CSV -------------------------------------------------------------

_HEADER_RE = re.compile(r"#\s*n=(\d+)\s+directed=(true|false)\s*$", re.IGNORECASE)


def write_graph_csv(g: WeightedDigraph, target) -> None:
    """Edge list ``src,dst,weight`` below a ``# n=<N> directed=<bool>`` line.

    Undirected edges are written once with ``src < dst``.
    """
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="") as fh:
            write_graph_csv(g, fh)
        return
    target.write(f"# n={g.n} directed={'true' if g.directed else 'false'}\n")
    w = csv.writer(target, lineterminator="\n")
    w.writerow(["src", "dst", "weight"])
    for i, j in g.edges():
        w.writerow([i, j, format(float(g.weights[i, j]), ".17g")])


def read_graph_csv(source) -> WeightedDigraph:
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_graph_csv(fh)
    first = source.readline()
    m = _HEADER_RE.match(first.strip())
    if not m:
        raise ValueError(f"missing '# n=<N> directed=<bool>' header, got {first!r}")
    n, directed = int(m.group(1)), m.group(2).lower() == "true"
    r = csv.reader(source)
    header = next(r, None)
    if header is None or [h.strip() for h in header] != ["src", "dst", "weight"]:
        raise ValueError(f"expected header 'src,dst,weight', got {header!r}")
    w = np.zeros((n, n))
    for lineno, row in enumerate(r, start=3):
        if not row:
            continue
        if len(row) != 3:
            raise ValueError(f"line {lineno}: expected 3 fields")
        i, j, val = int(row[0]), int(row[1]), float(row[2])
        if not (0 <= i < n and 0 <= j < n) or i == j or not math.isfinite(val):
            raise ValueError(f"line {lineno}: invalid edge {row!r}")
        w[i, j] = val
        if not directed:
            w[j, i] = val
    return WeightedDigraph(w, directed)
