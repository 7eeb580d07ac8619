"""Weighted matrix factorization of implicit play counts by ALS.

An observed play count r > 0 is treated as preference p = 1 with confidence
c = 1 + alpha*r; unobserved cells have p = 0 with confidence 1. Alternating
half-sweeps solve every row of one factor against the other in closed form.
User factors are kept in the result but only the song factors feed the
embedding model downstream.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import backend
from ._wmf_kernels import half_sweep_numba, half_sweep_numpy
from .errors import DomainError, NumericalError, ParseError, ShapeError


@dataclass
class SparseInteractions:
    """Play counts stored row-compressed by user and, transposed, by song."""

    n_users: int
    n_songs: int
    user_ptr: np.ndarray
    user_songs: np.ndarray
    user_counts: np.ndarray
    song_ptr: np.ndarray
    song_users: np.ndarray
    song_counts: np.ndarray

    @property
    def n_obs(self) -> int:
        return int(self.user_songs.shape[0])

    @classmethod
    def from_triplets(cls, n_users: int, n_songs: int, triplets) -> "SparseInteractions":
        """Build both orientations from (user, song, count) triplets.

        Indices must be in range, counts >= 1, and no (user, song) pair may
        repeat; violations raise DomainError.
        """
        if n_users < 0 or n_songs < 0:
            raise DomainError(f"negative matrix shape {n_users} x {n_songs}")
        trip = list(triplets)
        users = np.array([t[0] for t in trip], dtype=np.int64)
        songs = np.array([t[1] for t in trip], dtype=np.int64)
        counts = np.array([t[2] for t in trip], dtype=np.float64)
        if users.size:
            if users.min() < 0 or users.max() >= n_users:
                raise DomainError("user index out of range")
            if songs.min() < 0 or songs.max() >= n_songs:
                raise DomainError("song index out of range")
            if counts.min() < 1:
                raise DomainError("play counts must be >= 1")
        order = np.lexsort((songs, users))
        users, songs, counts = users[order], songs[order], counts[order]
        if users.size > 1:
            same = (users[1:] == users[:-1]) & (songs[1:] == songs[:-1])
            if same.any():
                i = int(np.argmax(same))
                raise DomainError(f"duplicate (user, song) pair ({users[i]}, {songs[i]})")
        user_ptr = np.zeros(n_users + 1, dtype=np.int64)
        np.add.at(user_ptr, users + 1, 1)
        user_ptr = np.cumsum(user_ptr)
        order_t = np.lexsort((users, songs))
        song_ptr = np.zeros(n_songs + 1, dtype=np.int64)
        np.add.at(song_ptr, songs + 1, 1)
        song_ptr = np.cumsum(song_ptr)
        return cls(
            n_users=n_users,
            n_songs=n_songs,
            user_ptr=user_ptr,
            user_songs=songs,
            user_counts=counts,
            song_ptr=song_ptr,
            song_users=users[order_t],
            song_counts=counts[order_t],
        )


@dataclass
class FactorModel:
    """Factor matrices and the hyperparameters they were solved under."""

    U: np.ndarray
    V: np.ndarray
    k: int
    reg: float
    alpha: float


def interactions_from_plays(plays) -> tuple[list[str], list[str], SparseInteractions]:
    """Index raw (user_id, song_id, count) records into a sparse matrix.

    Ids are assigned indices in sorted order so the matrix layout is
    independent of record order.
    """
    user_ids = sorted({p[0] for p in plays})
    song_ids = sorted({p[1] for p in plays})
    u_index = {u: i for i, u in enumerate(user_ids)}
    s_index = {s: i for i, s in enumerate(song_ids)}
    trip = [(u_index[u], s_index[s], c) for u, s, c in plays]
    return user_ids, song_ids, SparseInteractions.from_triplets(len(user_ids), len(song_ids), trip)


def wmf_objective(R: SparseInteractions, m: FactorModel) -> float:
    """Exact weighted squared-error objective plus L2 penalty.

    Sum over all user/song cells of c*(p - u.v)^2 with p = 1, c = 1+alpha*r
    on observed cells and p = 0, c = 1 elsewhere, plus
    reg*(|U|^2 + |V|^2). The dense sum over unobserved cells reduces to a
    Gram-matrix trace, so cost is O(nk^2 + obs*k), never O(n_users*n_songs).
    """
    U, V = m.U, m.V
    if U.shape != (R.n_users, m.k) or V.shape != (R.n_songs, m.k):
        raise ShapeError(
            f"factor shapes {U.shape}, {V.shape} do not match "
            f"{R.n_users} users x {R.n_songs} songs at k={m.k}"
        )
    gram_v = V.T @ V
    total = float(np.sum((U @ gram_v) * U))  # sum of u.v squared over every cell
    for u in range(R.n_users):
        lo, hi = R.user_ptr[u], R.user_ptr[u + 1]
        if hi == lo:
            continue
        cols = R.user_songs[lo:hi]
        c = 1.0 + m.alpha * R.user_counts[lo:hi]
        s = V[cols] @ U[u]
        # replace the unobserved term s^2 with the observed c*(1-s)^2
        total += float(np.sum(c * (1.0 - s) ** 2 - s**2))
    total += m.reg * (float(np.sum(U * U)) + float(np.sum(V * V)))
    return total


def als_solve_row(
    fixed: np.ndarray,
    obs_indices,
    confidences,
    preferences,
    reg: float,
    gram: np.ndarray | None = None,
) -> np.ndarray:
    """Closed-form solve of one row against the fixed opposite factor.

    ``obs_indices`` are the observed columns; ``confidences`` holds their c
    values and ``preferences`` their p values. Unobserved columns implicitly
    carry c = 1, p = 0, so the normal matrix only needs the Gram matrix of
    ``fixed`` plus rank-one corrections on the observed rows.
    """
    fixed = np.asarray(fixed, dtype=np.float64)
    k = fixed.shape[1]
    if gram is None:
        gram = fixed.T @ fixed
    idx = np.asarray(obs_indices, dtype=np.int64)
    c = np.asarray(confidences, dtype=np.float64)
    p = np.asarray(preferences, dtype=np.float64)
    if idx.shape != c.shape or idx.shape != p.shape:
        raise ShapeError("obs_indices, confidences, preferences must align")
    A = gram + reg * np.eye(k)
    if idx.size:
        Y = fixed[idx]
        A = A + (Y.T * (c - 1.0)) @ Y
        b = Y.T @ (c * p)
    else:
        b = np.zeros(k)
    try:
        cf = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
        return scipy.linalg.cho_solve(cf, b, check_finite=False)
    except scipy.linalg.LinAlgError:
        raise NumericalError(
            "normal matrix is not positive definite; increase reg"
        ) from None


def half_sweep(R: SparseInteractions, m: FactorModel, side: str) -> None:
    """Re-solve every row of one factor in place, holding the other fixed."""
    if side == "user":
        indptr, indices, counts = R.user_ptr, R.user_songs, R.user_counts
        other, out = m.V, m.U
    elif side == "song":
        indptr, indices, counts = R.song_ptr, R.song_users, R.song_counts
        other, out = m.U, m.V
    else:
        raise DomainError(f"side must be 'user' or 'song', got {side!r}")
    gram = other.T @ other
    kernel = half_sweep_numba if backend.active_backend() == "numba" else half_sweep_numpy
    fails = kernel(indptr, indices, counts, other, gram, float(m.reg), float(m.alpha), out)
    if fails:
        raise NumericalError(
            f"{fails} row solve(s) hit a non-positive-definite system; increase reg"
        )


def als_factorize(
    R: SparseInteractions,
    k: int = 200,
    reg: float = 0.01,
    alpha: float = 40.0,
    n_sweeps: int = 15,
    rng: np.random.Generator | None = None,
) -> FactorModel:
    """Alternating least squares from a small uniform random start.

    Each sweep solves all user rows against V, then all song rows against
    U; the objective never increases across a half-sweep. Deterministic for
    a given generator state.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if n_sweeps < 1:
        raise DomainError(f"n_sweeps must be >= 1, got {n_sweeps}")
    if rng is None:
        rng = np.random.default_rng(0)
    U = rng.uniform(-0.01, 0.01, size=(R.n_users, k))
    V = rng.uniform(-0.01, 0.01, size=(R.n_songs, k))
    m = FactorModel(U=U, V=V, k=k, reg=float(reg), alpha=float(alpha))
    for _ in range(n_sweeps):
        half_sweep(R, m, "user")
        half_sweep(R, m, "song")
    return m


def save_factors(path, song_ids, m: FactorModel) -> None:
    """Write song factors as text: a `#wmf` header then one line per song."""
    if len(song_ids) != m.V.shape[0]:
        raise ShapeError(f"{len(song_ids)} ids for {m.V.shape[0]} factor rows")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#wmf k={m.k} reg={m.reg:.9g} alpha={m.alpha:.9g}\n")
        for sid, row in zip(song_ids, m.V):
            fh.write(sid + " " + " ".join(f"{v:.9g}" for v in row) + "\n")


def load_factors(path) -> tuple[list[str], np.ndarray, dict[str, float]]:
    """Read a factor file back as (song_ids, matrix, header metadata)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("#wmf"):
            raise ParseError(f"{path}:1: missing '#wmf' header")
        meta: dict[str, float] = {}
        for part in header.split()[1:]:
            key, _, val = part.partition("=")
            try:
                meta[key] = float(val)
            except ValueError:
                raise ParseError(f"{path}:1: bad header field {part!r}") from None
        if "k" not in meta:
            raise ParseError(f"{path}:1: header lacks k=")
        k = int(meta["k"])
        ids: list[str] = []
        rows: list[np.ndarray] = []
        seen: set[str] = set()
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                raise ParseError(f"{path}:{lineno}: blank line")
            fields = line.split()
            if len(fields) != k + 1:
                raise ParseError(f"{path}:{lineno}: expected {k} values, got {len(fields) - 1}")
            sid = fields[0]
            if sid in seen:
                raise ParseError(f"{path}:{lineno}: duplicate song id {sid!r}")
            seen.add(sid)
            try:
                rows.append(np.array([float(v) for v in fields[1:]], dtype=np.float64))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from None
            ids.append(sid)
        mat = np.vstack(rows) if rows else np.empty((0, k))
    return ids, mat, meta
