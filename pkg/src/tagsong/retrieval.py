"""Song indexing, tag queries, and ranking metrics (AP, P@10).

Retrieval embeds every song once, then answers a tag query by sorting
songs on cosine distance to the tag's embedding. Since branch outputs are
unit vectors, distance reduces to 1 minus a dot product. Metrics follow
the macro-over-tags convention: AP over the full ranking per tag, P@10
with a fixed denominator of 10, both averaged unweighted across tags.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import RetrievalDataset
from .errors import DomainError, ShapeError
from .net import MlpBranch, forward_batch
from .wordvec import WordVectorTable, tag_to_vector

_CHUNK = 8192


@dataclass
class SongIndex:
    """Unit-norm song embeddings aligned with their ids and dataset rows."""

    embeddings: np.ndarray
    song_ids: list[str]
    dataset_indices: np.ndarray


@dataclass
class EvalReport:
    """Macro-averaged retrieval metrics with per-tag detail."""

    map: float
    p_at_10: float
    per_tag: list[tuple[str, float, float]]
    per_category: list[tuple[str, float]] | None = None


def build_song_index(
    song_branch: MlpBranch, dataset: RetrievalDataset, song_subset=None
) -> SongIndex:
    """Embed the subset's songs (all songs when subset is None)."""
    idx = dataset.all_song_indices() if song_subset is None else np.asarray(song_subset, dtype=np.int64)
    if dataset.inputs.shape[1] != song_branch.d_in:
        raise ShapeError(
            f"song branch expects {song_branch.d_in}-d inputs, dataset has {dataset.inputs.shape[1]}-d"
        )
    rows = []
    for lo in range(0, idx.size, _CHUNK):
        chunk = idx[lo : lo + _CHUNK]
        Y, _ = forward_batch(song_branch, dataset.inputs[chunk])
        rows.append(Y)
    emb = np.vstack(rows) if rows else np.empty((0, song_branch.d_out))
    return SongIndex(
        embeddings=emb,
        song_ids=[dataset.song_ids[i] for i in idx],
        dataset_indices=idx,
    )


def _ranked_order(distances: np.ndarray, song_ids) -> np.ndarray:
    """Ascending-distance order with song-id tie break."""
    ids = np.asarray(song_ids)
    return np.lexsort((ids, distances))


def retrieve(
    tag: str,
    tag_branch: MlpBranch,
    table: WordVectorTable,
    index: SongIndex,
    k: int,
) -> list[tuple[str, float]]:
    """Top-k songs by ascending cosine distance to the tag's embedding."""
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if index.embeddings.shape[0] == 0:
        return []
    vec = tag_to_vector(tag, table)
    e = forward_batch(tag_branch, vec[None, :])[0][0]
    distances = np.clip(1.0 - index.embeddings @ e, 0.0, 2.0)
    order = _ranked_order(distances, index.song_ids)[:k]
    return [(index.song_ids[i], float(distances[i])) for i in order]


def average_precision(ranked_relevance, n_relevant_total: int) -> float:
    """AP over a full ranking: mean precision at each hit position.

    The divisor is the total number of relevant items, so a truncated
    ranking that misses hits is penalized.
    """
    if n_relevant_total < 1:
        raise DomainError(f"n_relevant_total must be >= 1, got {n_relevant_total}")
    rel = np.asarray(ranked_relevance, dtype=bool)
    hits = int(rel.sum())
    if hits > n_relevant_total:
        raise DomainError(f"{hits} hits exceed n_relevant_total={n_relevant_total}")
    if hits == 0:
        return 0.0
    positions = np.flatnonzero(rel) + 1
    precisions = np.cumsum(rel)[rel] / positions
    return float(precisions.sum() / n_relevant_total)


def precision_at_k(ranked_relevance, k: int = 10) -> float:
    """Hits within the top k divided by k (k stays the denominator even
    when fewer than k songs exist)."""
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    rel = np.asarray(ranked_relevance, dtype=bool)
    return float(rel[:k].sum()) / k


def evaluate(
    tag_branch: MlpBranch,
    song_branch: MlpBranch,
    dataset: RetrievalDataset,
    split_subset=None,
    table: WordVectorTable | None = None,
) -> EvalReport:
    """Rank the subset per vocabulary tag and macro-average AP and P@10.

    Tag inputs come from dataset.tag_vectors when attached, else from the
    word-vector table. Tags with no relevant song in the subset are
    excluded with a warning.
    """
    idx = dataset.all_song_indices() if split_subset is None else np.asarray(split_subset, dtype=np.int64)
    if idx.size == 0:
        raise DomainError("cannot evaluate on an empty subset")
    if dataset.tag_vectors is not None:
        tag_inputs = dataset.tag_vectors
    elif table is not None:
        tag_inputs = np.vstack([tag_to_vector(t, table) for t in dataset.tag_vocab])
    else:
        raise DomainError("dataset has no tag vectors and no table was given")
    index = build_song_index(song_branch, dataset, idx)
    E_tags, _ = forward_batch(tag_branch, tag_inputs)
    distances = np.clip(1.0 - E_tags @ index.embeddings.T, 0.0, 2.0)
    relevance = dataset.tag_matrix[idx]
    ids = np.asarray(index.song_ids)

    per_tag: list[tuple[str, float, float]] = []
    for t, tag in enumerate(dataset.tag_vocab):
        rel_col = relevance[:, t]
        n_rel = int(rel_col.sum())
        if n_rel == 0:
            warnings.warn(f"tag {tag!r} has no relevant song in the subset; excluded")
            continue
        order = np.lexsort((ids, distances[t]))
        ranked_rel = rel_col[order]
        ap = average_precision(ranked_rel, n_rel)
        p10 = precision_at_k(ranked_rel, 10)
        per_tag.append((tag, ap, p10))
    if not per_tag:
        raise DomainError("no vocabulary tag has a relevant song in the subset")

    mean_ap = float(np.mean([r[1] for r in per_tag]))
    mean_p10 = float(np.mean([r[2] for r in per_tag]))
    per_category = None
    if dataset.tag_categories is not None:
        groups: dict[str, list[float]] = {}
        for tag, ap, _ in per_tag:
            cat = dataset.tag_categories.get(tag)
            if cat is not None:
                groups.setdefault(cat, []).append(ap)
        per_category = [(cat, float(np.mean(aps))) for cat, aps in sorted(groups.items())]
    return EvalReport(map=mean_ap, p_at_10=mean_p10, per_tag=per_tag, per_category=per_category)


def export_report(path, report: EvalReport) -> None:
    """Write a report as TSV: one summary line, then per-tag lines."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"map\t{report.map:.9g}\tp10\t{report.p_at_10:.9g}\n")
        for tag, ap, p10 in report.per_tag:
            fh.write(f"{tag}\t{ap:.9g}\t{p10:.9g}\n")
        if report.per_category:
            for cat, ap in report.per_category:
                fh.write(f"#category\t{cat}\t{ap:.9g}\n")
