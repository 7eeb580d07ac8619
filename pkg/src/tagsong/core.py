"""Shared numerical primitives: cosine distance, normalization, seeded RNG."""

import numpy as np

from .errors import DomainError, ShapeError


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine distance ``1 - u.v / (|u| |v|)``, clipped into [0, 2].

    Raises ShapeError when the vectors differ in length and DomainError when
    either vector has zero norm.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1:
        raise ShapeError(f"expected 1-d vectors, got shapes {u.shape} and {v.shape}")
    if u.shape[0] != v.shape[0]:
        raise ShapeError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine distance undefined for zero vector")
    d = 1.0 - float(np.dot(u, v)) / (nu * nv)
    # rounding can push the value a hair outside the mathematical range
    return float(min(max(d, 0.0), 2.0))


def l2_normalize(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Scale vectors along ``axis`` to unit Euclidean norm.

    Raises DomainError when any slice has zero norm.
    """
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=axis, keepdims=True)
    if np.any(norms == 0.0):
        raise DomainError("cannot normalize zero vector")
    return x / norms


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator seeded from ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def split_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent PCG64 stream ``stream`` derived from ``seed``.

    Distinct ``stream`` values give statistically independent generators that
    are stable across runs, so components (sampling, init, splitting) cannot
    perturb each other's draws.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.PCG64(ss))
