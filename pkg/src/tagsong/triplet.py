"""Triplet hinge loss, its exact gradients, and triplet sampling.

A triplet is (anchor tag, positive song, negative song) where the positive
carries the tag and the negative does not. The loss is

    L = max(0, D(e_a, e_p) - D(e_a, e_n) + margin)

with D the cosine distance. Three samplers produce batches: ``random``
(song first, then one of its tags), ``balanced`` (tag first, uniform), and
``balanced_weighted`` (tag first, negatives picked by distance-weighted
probabilities under the current model).
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, SamplingError, ShapeError
from .net import MlpBranch, forward_batch

RESAMPLE_CAP = 100


class Triplet(NamedTuple):
    anchor_tag: int
    positive_song: int
    negative_song: int


@dataclass
class TripletBatch:
    """Index arrays of one sampled batch, all of equal length."""

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __len__(self) -> int:
        return int(self.anchors.shape[0])

    def __iter__(self):
        for a, p, n in zip(self.anchors, self.positives, self.negatives):
            yield Triplet(int(a), int(p), int(n))


@dataclass
class SamplerConfig:
    """Strategy choice plus distance-weighted sampling knobs.

    ``lambda_clip`` caps the unnormalized weight so near-duplicate negatives
    cannot dominate; ``cutoff_d_min`` clips the unit-sphere distance from
    below before the density is evaluated.
    """

    strategy: str = "balanced_weighted"
    lambda_clip: float = 1e6
    cutoff_d_min: float = 0.5

    def __post_init__(self) -> None:
        if self.strategy not in ("random", "balanced", "balanced_weighted"):
            raise DomainError(f"unknown sampling strategy {self.strategy!r}")
        if not np.isfinite(self.lambda_clip) or self.lambda_clip <= 0.0:
            raise DomainError(f"lambda_clip must be positive and finite, got {self.lambda_clip}")
        if not 0.0 < self.cutoff_d_min < np.sqrt(2.0):
            raise DomainError(f"cutoff_d_min must lie in (0, sqrt(2)), got {self.cutoff_d_min}")


def _cosine_distances(a: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Cosine distance from one vector to each row of B, clipped to [0, 2]."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(B, axis=1)
    if na == 0.0 or np.any(nb == 0.0):
        raise DomainError("cosine distance undefined for zero vector")
    return np.clip(1.0 - (B @ a) / (nb * na), 0.0, 2.0)


def triplet_loss(e_a: np.ndarray, e_p: np.ndarray, e_n: np.ndarray, margin: float) -> float:
    """Hinge loss max(0, D(a,p) - D(a,n) + margin) on one triplet."""
    from .core import cosine_distance

    return max(0.0, cosine_distance(e_a, e_p) - cosine_distance(e_a, e_n) + margin)


def triplet_loss_grad_batch(
    Ea: np.ndarray, Ep: np.ndarray, En: np.ndarray, margin: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-triplet losses and exact gradients w.r.t. each embedding row.

    Rows whose hinge is strictly inactive (D_ap - D_an + margin < 0) get
    zero gradients; the boundary case keeps the active-branch gradients.
    """
    Ea = np.asarray(Ea, dtype=np.float64)
    Ep = np.asarray(Ep, dtype=np.float64)
    En = np.asarray(En, dtype=np.float64)
    if Ea.shape != Ep.shape or Ea.shape != En.shape:
        raise ShapeError(f"embedding shapes differ: {Ea.shape}, {Ep.shape}, {En.shape}")
    na = np.linalg.norm(Ea, axis=1, keepdims=True)
    np_ = np.linalg.norm(Ep, axis=1, keepdims=True)
    nn = np.linalg.norm(En, axis=1, keepdims=True)
    if np.any(na == 0.0) or np.any(np_ == 0.0) or np.any(nn == 0.0):
        raise DomainError("zero-norm embedding in triplet batch")
    s_ap = np.sum(Ea * Ep, axis=1, keepdims=True) / (na * np_)
    s_an = np.sum(Ea * En, axis=1, keepdims=True) / (na * nn)
    h = s_an - s_ap + margin  # equals D_ap - D_an + margin
    losses = np.maximum(h, 0.0)[:, 0]
    active = (h >= 0.0).astype(np.float64)
    # dD_ap/da = -p/(|a||p|) + s_ap a/|a|^2, and analogously for the others
    dDap_da = -Ep / (na * np_) + s_ap * Ea / na**2
    dDan_da = -En / (na * nn) + s_an * Ea / na**2
    dDap_dp = -Ea / (na * np_) + s_ap * Ep / np_**2
    dDan_dn = -Ea / (na * nn) + s_an * En / nn**2
    Ga = active * (dDap_da - dDan_da)
    Gp = active * dDap_dp
    Gn = active * (-dDan_dn)
    return losses, Ga, Gp, Gn


def triplet_loss_grad(
    e_a: np.ndarray, e_p: np.ndarray, e_n: np.ndarray, margin: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the triplet loss w.r.t. (e_a, e_p, e_n)."""
    _, Ga, Gp, Gn = triplet_loss_grad_batch(
        np.asarray(e_a)[None, :], np.asarray(e_p)[None, :], np.asarray(e_n)[None, :], margin
    )
    return Ga[0], Gp[0], Gn[0]


def dw_weights(distances, embed_dim: int, config: SamplerConfig) -> np.ndarray:
    """Distance-weighted sampling probabilities from cosine distances.

    Each cosine distance converts to the unit-sphere Euclidean distance
    d = sqrt(2 D), clipped below at cutoff_d_min. The pairwise-distance
    density on the (n-1)-sphere, q(d) proportional to
    d^(n-2) (1 - d^2/4)^((n-3)/2), is evaluated in log space and the
    unnormalized weight is min(lambda_clip, 1/q(d)); the result is the
    normalized probability vector.
    """
    dist = np.asarray(distances, dtype=np.float64)
    if dist.size == 0:
        raise DomainError("dw_weights needs at least one distance")
    if dist.ndim != 1:
        raise ShapeError(f"distances must be 1-d, got shape {dist.shape}")
    if np.any(dist < 0.0) or np.any(dist > 2.0):
        raise DomainError("cosine distances must lie in [0, 2]")
    if embed_dim < 3:
        raise DomainError(f"embed_dim must be >= 3, got {embed_dim}")
    d = np.sqrt(2.0 * dist)
    d = np.maximum(d, config.cutoff_d_min)
    n = embed_dim
    log_q = (n - 2) * np.log(d)
    coeff = 0.5 * (n - 3)
    if coeff != 0.0:
        # 1 - d^2/4 reaches 0 at the antipode; floor it to keep logs finite
        log_q = log_q + coeff * np.log(np.maximum(1.0 - d * d / 4.0, 1e-300))
    log_w = np.minimum(np.log(config.lambda_clip), -log_q)
    w = np.exp(log_w - np.max(log_w))
    return w / np.sum(w)


@dataclass
class SamplerView:
    """Precomputed per-subset lookup tables shared by the samplers.

    ``songs`` are dataset song indices in the sampling universe; tags with
    no positive song in the universe are excluded from anchor draws.
    """

    songs: np.ndarray
    tag_matrix: np.ndarray  # dataset-wide (n_songs, n_tags) bool
    song_tags: list
    active_tags: np.ndarray
    positives_by_tag: dict
    _complement_cache: dict = field(default_factory=dict)

    @classmethod
    def build(cls, dataset, subset=None) -> "SamplerView":
        songs = np.asarray(dataset.all_song_indices() if subset is None else subset, dtype=np.int64)
        if songs.size == 0:
            raise SamplingError("sampling universe is empty")
        tm = dataset.tag_matrix
        positives_by_tag = {}
        n_tags = tm.shape[1]
        sub_matrix = tm[songs]
        for t in range(n_tags):
            pos = songs[sub_matrix[:, t]]
            if pos.size:
                positives_by_tag[t] = pos
        active = np.array(sorted(positives_by_tag), dtype=np.int64)
        if active.size == 0:
            raise SamplingError("no tag has a positive song in the sampling universe")
        return cls(
            songs=songs,
            tag_matrix=tm,
            song_tags=dataset.song_tags,
            active_tags=active,
            positives_by_tag=positives_by_tag,
        )

    def complement(self, tag: int) -> np.ndarray:
        """Universe songs lacking ``tag``; cached per tag."""
        comp = self._complement_cache.get(tag)
        if comp is None:
            comp = self.songs[~self.tag_matrix[self.songs, tag]]
            self._complement_cache[tag] = comp
        return comp


def _as_view(dataset_or_view, subset=None) -> SamplerView:
    if isinstance(dataset_or_view, SamplerView):
        return dataset_or_view
    return SamplerView.build(dataset_or_view, subset)


def sample_random(dataset_or_view, batch_size: int, rng: np.random.Generator) -> TripletBatch:
    """Song-first sampling: uniform song, uniform tag of it, uniform negative.

    The negative is uniform over universe songs lacking the anchor tag; a
    tag carried by every universe song admits no negative and raises
    SamplingError.
    """
    view = _as_view(dataset_or_view)
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    anchors = np.empty(batch_size, dtype=np.int64)
    positives = np.empty(batch_size, dtype=np.int64)
    negatives = np.empty(batch_size, dtype=np.int64)
    for i in range(batch_size):
        song = int(view.songs[rng.integers(view.songs.size)])
        tags = view.song_tags[song]
        tag = int(tags[rng.integers(len(tags))])
        comp = view.complement(tag)
        if comp.size == 0:
            raise SamplingError(f"tag index {tag} is carried by every song in the universe")
        positives[i] = song
        anchors[i] = tag
        negatives[i] = comp[rng.integers(comp.size)]
    return TripletBatch(anchors=anchors, positives=positives, negatives=negatives)


def _draw_anchors_positives(view: SamplerView, batch_size: int, rng: np.random.Generator):
    anchors = view.active_tags[rng.integers(view.active_tags.size, size=batch_size)]
    positives = np.empty(batch_size, dtype=np.int64)
    for i in range(batch_size):
        pos = view.positives_by_tag[int(anchors[i])]
        positives[i] = pos[rng.integers(pos.size)]
    return anchors, positives


def _redraw_slot(view: SamplerView, anchors, positives, i: int, rng: np.random.Generator) -> None:
    tag = int(view.active_tags[rng.integers(view.active_tags.size)])
    pos = view.positives_by_tag[tag]
    anchors[i] = tag
    positives[i] = pos[rng.integers(pos.size)]


def _in_batch_pool(view: SamplerView, positives: np.ndarray, tag: int) -> np.ndarray:
    """Distinct batch positives lacking ``tag`` (sorted for determinism)."""
    uniq = np.unique(positives)
    return uniq[~view.tag_matrix[uniq, tag]]


def _pick_weighted_negative(pool: np.ndarray, probs: np.ndarray, rng: np.random.Generator) -> int:
    """Categorical draw from the candidate pool; the balanced_weighted seam."""
    return int(pool[rng.choice(pool.size, p=probs)])


def sample_balanced(dataset_or_view, batch_size: int, rng: np.random.Generator) -> TripletBatch:
    """Tag-first sampling with in-batch negatives.

    Anchor tags are uniform over tags with positives in the universe;
    positives uniform per tag. Each slot's negative is uniform over the
    distinct positive songs currently in the batch that lack the slot's
    anchor tag; a slot with an empty pool redraws its anchor and positive,
    up to RESAMPLE_CAP attempts.
    """
    view = _as_view(dataset_or_view)
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    anchors, positives = _draw_anchors_positives(view, batch_size, rng)
    negatives = np.empty(batch_size, dtype=np.int64)
    for i in range(batch_size):
        for attempt in range(RESAMPLE_CAP + 1):
            pool = _in_batch_pool(view, positives, int(anchors[i]))
            if pool.size:
                negatives[i] = pool[rng.integers(pool.size)]
                break
            if attempt == RESAMPLE_CAP:
                raise SamplingError(
                    f"no in-batch negative found for tag index {int(anchors[i])} "
                    f"after {RESAMPLE_CAP} redraws"
                )
            _redraw_slot(view, anchors, positives, i, rng)
    return TripletBatch(anchors=anchors, positives=positives, negatives=negatives)


def sample_balanced_weighted(
    dataset_or_view,
    batch_size: int,
    tag_branch: MlpBranch,
    song_branch: MlpBranch,
    config: SamplerConfig,
    rng: np.random.Generator,
    dataset=None,
) -> TripletBatch:
    """Balanced anchors/positives with distance-weighted in-batch negatives.

    Candidate probabilities come from dw_weights applied to the cosine
    distances between the anchor tag's embedding and each candidate song's
    embedding under the current model snapshot.
    """
    view = _as_view(dataset_or_view)
    ds = dataset if dataset is not None else dataset_or_view
    if isinstance(ds, SamplerView):
        raise DomainError("sample_balanced_weighted needs the dataset for input vectors")
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    anchors, positives = _draw_anchors_positives(view, batch_size, rng)
    negatives = np.empty(batch_size, dtype=np.int64)
    embed_dim = song_branch.d_out
    song_emb: dict[int, np.ndarray] = {}

    def embeddings_for(idx: np.ndarray) -> np.ndarray:
        missing = [int(s) for s in idx if int(s) not in song_emb]
        if missing:
            Y, _ = forward_batch(song_branch, ds.inputs[missing])
            for s, y in zip(missing, Y):
                song_emb[s] = y
        return np.array([song_emb[int(s)] for s in idx])

    tag_cache: dict[int, np.ndarray] = {}

    def tag_embedding(tag: int) -> np.ndarray:
        e = tag_cache.get(tag)
        if e is None:
            Y, _ = forward_batch(tag_branch, ds.tag_vectors[tag][None, :])
            e = Y[0]
            tag_cache[tag] = e
        return e

    for i in range(batch_size):
        for attempt in range(RESAMPLE_CAP + 1):
            tag = int(anchors[i])
            pool = _in_batch_pool(view, positives, tag)
            if pool.size:
                e_tag = tag_embedding(tag)
                E_pool = embeddings_for(pool)
                dists = _cosine_distances(e_tag, E_pool)
                probs = dw_weights(dists, embed_dim, config)
                negatives[i] = _pick_weighted_negative(pool, probs, rng)
                break
            if attempt == RESAMPLE_CAP:
                raise SamplingError(
                    f"no in-batch negative found for tag index {tag} "
                    f"after {RESAMPLE_CAP} redraws"
                )
            _redraw_slot(view, anchors, positives, i, rng)
    return TripletBatch(anchors=anchors, positives=positives, negatives=negatives)
