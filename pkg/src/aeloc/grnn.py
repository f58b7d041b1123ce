"""Prototype-based conditional-average regression (a general regression neural network).

A prototype database stores vectors split into an observed part ``given``
and a hidden part ``hidden``.  Estimation completes a truncated observation
by averaging the stored hidden parts with normalized Gaussian basis weights
centred on the stored given parts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .util import atomic_write_text, fmt

# weights below this contribute nothing detectable to the average
SUPPORT_EPS = 1e-6


def gaussian_kernel(query, center, sigma: float) -> float:
    """exp(-||query - center||^2 / (2 sigma^2)); in (0, 1], underflow-safe."""
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    c = np.asarray(center, dtype=np.float64).reshape(-1)
    if q.shape != c.shape:
        raise ValueError(f"dimension mismatch: query has {q.size}, center has {c.size}")
    diff = q - c
    with np.errstate(over="ignore", under="ignore"):
        d2 = float((diff * diff).sum())
        return float(np.exp(-d2 / (2.0 * sigma * sigma)))


def compute_sigmas(given) -> np.ndarray:
    """Per-prototype smoothing width: half the distance to the nearest distinct neighbor.

    Exact duplicates never count as neighbors; a prototype whose every
    neighbor is a duplicate is an error.
    """
    g = np.asarray(given, dtype=np.float64)
    if g.ndim == 1:
        g = g[:, None]
    n = g.shape[0]
    if n < 2:
        raise ValueError("sigma undefined for a single prototype; supply sigma explicitly")
    sigmas = np.empty(n)
    for i in range(n):
        diff = g - g[i]
        dist = np.sqrt((diff * diff).sum(axis=1))
        dist[i] = np.inf
        dist[dist == 0.0] = np.inf
        nearest = dist.min()
        if not np.isfinite(nearest):
            raise ValueError(
                f"prototype {i} has no distinct neighbor (duplicated given vector); "
                "sigma undefined"
            )
        sigmas[i] = 0.5 * nearest
    return sigmas


def _as_columns(arr) -> np.ndarray:
    """Coerce per-prototype data to shape (N, dim); 1-D input is one component per prototype.

    Always copies so freezing the result never freezes caller-owned arrays.
    """
    a = np.array(arr, dtype=np.float64, copy=True)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"expected 1-D or 2-D prototype data, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class PrototypeSet:
    """Immutable database of (given, hidden) prototype vectors with per-prototype sigmas.

    Extending the database means building a new set from concatenated data.
    """

    given: np.ndarray   # (N, S)
    hidden: np.ndarray  # (N, D)
    sigmas: np.ndarray  # (N,)

    def __post_init__(self) -> None:
        given = _as_columns(self.given)
        hidden = _as_columns(self.hidden)
        sigmas = np.array(self.sigmas, dtype=np.float64, copy=True).reshape(-1)
        if given.shape[0] < 1:
            raise ValueError("prototype set needs at least one prototype")
        if hidden.shape[0] != given.shape[0]:
            raise ValueError("given and hidden must hold the same number of prototypes")
        if sigmas.shape[0] != given.shape[0]:
            raise ValueError("one sigma per prototype required")
        if not (np.all(np.isfinite(given)) and np.all(np.isfinite(hidden))):
            raise ValueError("prototype components must be finite")
        if not np.all(sigmas > 0.0):
            raise ValueError("all sigmas must be positive")
        for arr in (given, hidden, sigmas):
            arr.setflags(write=False)
        object.__setattr__(self, "given", given)
        object.__setattr__(self, "hidden", hidden)
        object.__setattr__(self, "sigmas", sigmas)

    def __len__(self) -> int:
        return int(self.given.shape[0])

    @property
    def given_dim(self) -> int:
        return int(self.given.shape[1])

    @property
    def hidden_dim(self) -> int:
        return int(self.hidden.shape[1])

    @classmethod
    def from_data(cls, given, hidden, sigmas=None) -> "PrototypeSet":
        """Build a set; with ``sigmas`` omitted they follow the half-nearest-neighbor rule.

        ``sigmas`` may also be a scalar (one global smoothing width) or a
        per-prototype sequence.
        """
        g = _as_columns(given)
        h = _as_columns(hidden)
        if sigmas is None:
            s = compute_sigmas(g)
        elif np.isscalar(sigmas):
            s = np.full(g.shape[0], float(sigmas))
        else:
            s = np.asarray(sigmas, dtype=np.float64)
        return cls(given=g, hidden=h, sigmas=s)


@dataclass(frozen=True, eq=False)
class Estimate:
    """Completed hidden vector with the basis weights that produced it."""

    hidden: np.ndarray
    weights: np.ndarray
    effective_support: int
    extrapolated: bool  # set when every kernel underflowed and nearest-neighbor fallback fired


def _query_vector(pset: PrototypeSet, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.size != pset.given_dim:
        raise ValueError(f"query has dimension {q.size}, prototypes have {pset.given_dim}")
    if not np.all(np.isfinite(q)):
        raise ValueError("query components must be finite")
    return q


def basis_weights(pset: PrototypeSet, query) -> tuple[np.ndarray, bool]:
    """Normalized Gaussian basis weights of the query against every prototype.

    Each kernel uses its own prototype's sigma in both the numerator and the
    normalizing sum.  If the query is so far from all prototypes that every
    kernel underflows to zero, falls back to a one-hot weight on the nearest
    prototype (lowest index on ties) and reports the fallback.
    """
    q = _query_vector(pset, query)
    diff = pset.given - q
    with np.errstate(over="ignore", under="ignore"):
        d2 = (diff * diff).sum(axis=1)
        raw = np.exp(-d2 / (2.0 * pset.sigmas * pset.sigmas))
    total = raw.sum()
    if total <= 0.0 or not np.isfinite(total):
        weights = np.zeros(len(pset))
        weights[int(np.argmin(d2))] = 1.0
        return weights, True
    return raw / total, False


def estimate(pset: PrototypeSet, query) -> Estimate:
    """Complete the hidden part of a truncated observation by conditional averaging."""
    weights, fell_back = basis_weights(pset, query)
    hidden = weights @ pset.hidden
    return Estimate(
        hidden=hidden,
        weights=weights,
        effective_support=int((weights > SUPPORT_EPS).sum()),
        extrapolated=fell_back,
    )


_DB_HEADER = re.compile(r"^#\s*given_dim=(\d+)\s+hidden_dim=(\d+)\s*$")


def save_prototypes(path: str | Path, pset: PrototypeSet) -> Path:
    """Write the database as delimited text; floats round-trip exactly."""
    lines = [f"# given_dim={pset.given_dim} hidden_dim={pset.hidden_dim}"]
    for g, h, s in zip(pset.given, pset.hidden, pset.sigmas):
        fields = [fmt(x) for x in g] + [fmt(x) for x in h] + [fmt(s)]
        lines.append(",".join(fields))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def load_prototypes(path: str | Path) -> PrototypeSet:
    path = Path(path)
    with open(path) as fh:
        m = _DB_HEADER.match(fh.readline())
        if m is None:
            raise ValueError(f"{path}: first line must be '# given_dim=S hidden_dim=D'")
        s_dim, d_dim = int(m.group(1)), int(m.group(2))
        rows = []
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != s_dim + d_dim + 1:
                raise ValueError(
                    f"{path}:{ln}: expected {s_dim + d_dim + 1} fields, got {len(fields)}"
                )
            rows.append([float(x) for x in fields])
    if not rows:
        raise ValueError(f"{path}: database holds no prototypes")
    data = np.asarray(rows, dtype=np.float64)
    return PrototypeSet(
        given=data[:, :s_dim],
        hidden=data[:, s_dim : s_dim + d_dim],
        sigmas=data[:, -1],
    )
