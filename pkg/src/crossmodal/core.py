"""Dense float64 kernels: distance metrics, pairwise matrices, seeded RNG streams."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

#: Norm threshold below which cosine distance is treated as undefined.
NORM_EPS = 1e-12

METRICS = ("euclid", "cosine")


def as_vector(values) -> np.ndarray:
    """Coerce to a finite 1-D float64 array."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise NumericError("vector contains NaN or Inf")
    return v


def as_matrix(values) -> np.ndarray:
    """Coerce to a finite, nonempty 2-D float64 array."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    if m.size == 0:
        raise DimensionError("matrix must be nonempty")
    if not np.isfinite(m).all():
        raise NumericError("matrix contains NaN or Inf")
    return m


def euclidean_distance(a, b) -> float:
    """Square root of the summed squared coordinate differences."""
    va, vb = as_vector(a), as_vector(b)
    if va.shape != vb.shape:
        raise DimensionError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    d = va - vb
    return float(np.sqrt(np.dot(d, d)))


def cosine_distance(a, b) -> float:
    """One minus the cosine similarity of a and b; range [0, 2] up to rounding."""
    va, vb = as_vector(a), as_vector(b)
    if va.shape != vb.shape:
        raise DimensionError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.sqrt(np.dot(va, va)))
    nb = float(np.sqrt(np.dot(vb, vb)))
    if na <= NORM_EPS or nb <= NORM_EPS:
        raise NumericError("cosine distance undefined for (near-)zero-norm vectors")
    return float(1.0 - np.dot(va, vb) / (na * nb))


def pairwise_distances(batch, metric: str = "euclid") -> np.ndarray:
    """All-pairs distance matrix over the rows of ``batch``.

    The result is exactly symmetric: euclid entries are built from coordinate
    differences (which negate exactly under row swap), and cosine similarities
    are computed once per unordered pair and mirrored.
    """
    x = as_matrix(batch)
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}, expected one of {METRICS}")
    if metric == "euclid":
        diff = x[:, None, :] - x[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    if (norms <= NORM_EPS).any():
        raise NumericError("cosine distance undefined for (near-)zero-norm rows")
    xn = x / norms[:, None]
    s = xn @ xn.T
    iu = np.triu_indices(x.shape[0], 1)
    s.T[iu] = s[iu]
    return 1.0 - s


def cross_distances(a, b, metric: str = "euclid") -> np.ndarray:
    """Rectangular distance matrix between rows of ``a`` and rows of ``b``."""
    xa, xb = as_matrix(a), as_matrix(b)
    if xa.shape[1] != xb.shape[1]:
        raise DimensionError(f"dimension mismatch: {xa.shape[1]} vs {xb.shape[1]}")
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}, expected one of {METRICS}")
    if metric == "euclid":
        diff = xa[:, None, :] - xb[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    na = np.sqrt(np.einsum("ij,ij->i", xa, xa))
    nb = np.sqrt(np.einsum("ij,ij->i", xb, xb))
    if (na <= NORM_EPS).any() or (nb <= NORM_EPS).any():
        raise NumericError("cosine distance undefined for (near-)zero-norm rows")
    return 1.0 - (xa / na[:, None]) @ (xb / nb[:, None]).T


class RngStream:
    """Seeded PCG64 stream with deterministic, spawnable child streams.

    A stream is identified by ``(seed, path)``: the same identity yields the
    same draw sequence on every run. ``child(i, j, ...)`` derives an
    independent substream keyed by the path suffix, so per-epoch or per-batch
    streams never depend on how many draws the parent made.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        self.path = tuple(int(p) for p in path)
        if any(p < 0 for p in self.path):
            raise ConfigError("stream path components must be non-negative")
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, *path: int) -> "RngStream":
        """Deterministic substream at the given path suffix."""
        return RngStream(self.seed, self.path + path)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self._gen.integers(low, high, size)

    def choice(self, a, size=None, replace: bool = True):
        return self._gen.choice(a, size=size, replace=replace)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
