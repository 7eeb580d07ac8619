"""Dataset ingestion, tag filtering, artist-level splits, and input binding.

The pipeline is: load_annotations -> topk_tag_filter -> artist_level_split
and bind_inputs -> attach_tag_vectors. Record order is preserved
throughout, so split indices refer equally to the filtered records and to
the bound dataset's songs.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import make_rng
from .errors import BindingError, DomainError, ParseError, SplitError
from .wmf import load_factors
from .wordvec import WordVectorTable, tag_to_vector

CATEGORY_NAMES = ("genre", "mood", "location", "language", "instrument", "activity", "decade")

INPUT_SOURCES = ("cultural", "acoustic", "concat")


class AnnotationRecord(NamedTuple):
    song_id: str
    artist_id: str
    tags: tuple[str, ...]


@dataclass
class RetrievalDataset:
    """Songs with bound input vectors plus the tag vocabulary.

    ``tag_matrix`` (songs x tags, bool) and ``songs_by_tag`` are derived at
    construction; ``tag_vectors`` arrives via attach_tag_vectors.
    """

    song_ids: list[str]
    artist_ids: list[str]
    song_tags: list[np.ndarray]
    inputs: np.ndarray
    tag_vocab: list[str]
    tag_vectors: np.ndarray | None = None
    tag_categories: dict[str, str] | None = None
    tag_matrix: np.ndarray = field(init=False, repr=False)
    songs_by_tag: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n_songs, n_tags = len(self.song_ids), len(self.tag_vocab)
        if len(set(self.tag_vocab)) != n_tags:
            raise DomainError("tag vocabulary has duplicates")
        if len(self.artist_ids) != n_songs or len(self.song_tags) != n_songs:
            raise DomainError("song field lengths disagree")
        if self.inputs.ndim != 2 or self.inputs.shape[0] != n_songs:
            raise DomainError(f"inputs shape {self.inputs.shape} does not cover {n_songs} songs")
        self.tag_matrix = np.zeros((n_songs, n_tags), dtype=bool)
        for i, tags in enumerate(self.song_tags):
            arr = np.asarray(tags, dtype=np.int64)
            if arr.size == 0:
                raise DomainError(f"song {self.song_ids[i]!r} has no tags")
            if arr.min() < 0 or arr.max() >= n_tags:
                raise DomainError(f"song {self.song_ids[i]!r} has a tag index out of range")
            self.song_tags[i] = np.unique(arr)
            self.tag_matrix[i, self.song_tags[i]] = True
        self.songs_by_tag = [np.flatnonzero(self.tag_matrix[:, t]) for t in range(n_tags)]

    @property
    def n_songs(self) -> int:
        return len(self.song_ids)

    @property
    def n_tags(self) -> int:
        return len(self.tag_vocab)

    def all_song_indices(self) -> np.ndarray:
        return np.arange(self.n_songs, dtype=np.int64)


@dataclass
class SplitAssignment:
    """Disjoint train/valid/test song-index sets from one artist partition."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    ratios: tuple[float, float, float]
    seed: int

    def subset(self, name: str) -> np.ndarray:
        if name not in ("train", "valid", "test"):
            raise DomainError(f"unknown split name {name!r}")
        return getattr(self, name)


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            yield lineno, line.rstrip("\n")


def load_annotations(path) -> list[AnnotationRecord]:
    """Parse `song_id<TAB>artist_id<TAB>tag1,tag2,...` records.

    Tags are lowercased and trimmed; duplicate tags within a song collapse
    to one. Duplicate song ids are an error: annotations must arrive
    pre-merged.
    """
    records: list[AnnotationRecord] = []
    seen: set[str] = set()
    for lineno, line in _read_lines(path):
        if not line.strip():
            raise ParseError(f"{path}:{lineno}: blank line")
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 tab-separated columns, got {len(fields)}")
        song_id, artist_id, tag_field = (f.strip() for f in fields)
        if not song_id or not artist_id:
            raise ParseError(f"{path}:{lineno}: empty song or artist id")
        if song_id in seen:
            raise ParseError(f"{path}:{lineno}: duplicate song id {song_id!r}")
        seen.add(song_id)
        tags: list[str] = []
        for raw in tag_field.split(","):
            tag = raw.strip().lower()
            if not tag:
                raise ParseError(f"{path}:{lineno}: empty tag in {tag_field!r}")
            if tag not in tags:
                tags.append(tag)
        if not tags:
            raise ParseError(f"{path}:{lineno}: song {song_id!r} has no tags")
        records.append(AnnotationRecord(song_id, artist_id, tuple(tags)))
    return records


def load_plays(path) -> list[tuple[str, str, int]]:
    """Parse `user_id<TAB>song_id<TAB>count` interaction lines."""
    plays: list[tuple[str, str, int]] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in _read_lines(path):
        if not line.strip():
            raise ParseError(f"{path}:{lineno}: blank line")
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 tab-separated columns, got {len(fields)}")
        user_id, song_id, raw_count = (f.strip() for f in fields)
        if not user_id or not song_id:
            raise ParseError(f"{path}:{lineno}: empty user or song id")
        try:
            count = int(raw_count)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-integer count {raw_count!r}") from None
        if count < 1:
            raise ParseError(f"{path}:{lineno}: count must be >= 1, got {count}")
        key = (user_id, song_id)
        if key in seen:
            raise ParseError(f"{path}:{lineno}: duplicate (user, song) pair {key!r}")
        seen.add(key)
        plays.append((user_id, song_id, count))
    return plays


def load_features(path) -> dict[str, np.ndarray]:
    """Parse `song_id<TAB>v1 v2 ... vD` acoustic feature vectors."""
    feats: dict[str, np.ndarray] = {}
    dim: int | None = None
    for lineno, line in _read_lines(path):
        if not line.strip():
            raise ParseError(f"{path}:{lineno}: blank line")
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 tab-separated columns, got {len(fields)}")
        song_id, values = fields[0].strip(), fields[1].split()
        if not song_id:
            raise ParseError(f"{path}:{lineno}: empty song id")
        if song_id in feats:
            raise ParseError(f"{path}:{lineno}: duplicate song id {song_id!r}")
        if not values:
            raise ParseError(f"{path}:{lineno}: no feature values")
        if dim is None:
            dim = len(values)
        elif len(values) != dim:
            raise ParseError(f"{path}:{lineno}: expected {dim} values, got {len(values)}")
        try:
            feats[song_id] = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric feature value") from None
    return feats


def load_categories(path) -> dict[str, str]:
    """Parse `tag<TAB>category` lines; categories come from a fixed set."""
    cats: dict[str, str] = {}
    for lineno, line in _read_lines(path):
        if not line.strip():
            raise ParseError(f"{path}:{lineno}: blank line")
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 tab-separated columns, got {len(fields)}")
        tag, category = fields[0].strip().lower(), fields[1].strip()
        if not tag:
            raise ParseError(f"{path}:{lineno}: empty tag")
        if category not in CATEGORY_NAMES:
            raise ParseError(
                f"{path}:{lineno}: unknown category {category!r}, expected one of {CATEGORY_NAMES}"
            )
        if tag in cats:
            raise ParseError(f"{path}:{lineno}: duplicate tag {tag!r}")
        cats[tag] = category
    return cats


def topk_tag_filter(records, k: int) -> tuple[list[AnnotationRecord], list[str]]:
    """Keep the k most frequent tags and drop songs left tagless.

    Frequency is the number of songs carrying the tag; ties at the boundary
    break lexicographically (the earlier name wins).
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    counts: dict[str, int] = {}
    for rec in records:
        for tag in rec.tags:
            counts[tag] = counts.get(tag, 0) + 1
    if len(counts) < k:
        raise DomainError(f"asked for top {k} tags but only {len(counts)} are distinct")
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    vocab = sorted(ranked[:k])
    keep = set(vocab)
    filtered: list[AnnotationRecord] = []
    for rec in records:
        tags = tuple(t for t in rec.tags if t in keep)
        if tags:
            filtered.append(AnnotationRecord(rec.song_id, rec.artist_id, tags))
    return filtered, vocab


def artist_level_split(records, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitAssignment:
    """Partition songs into train/valid/test with no artist crossing splits.

    Artists are shuffled by the seeded generator, then assigned greedily:
    each split receives whole artists until its cumulative song-count quota
    is met. Any empty split raises SplitError.
    """
    if len(ratios) != 3:
        raise DomainError(f"need 3 ratios, got {len(ratios)}")
    if any(r <= 0 for r in ratios):
        raise DomainError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DomainError(f"ratios must sum to 1, got {sum(ratios)}")
    if not records:
        raise SplitError("no records to split")
    by_artist: dict[str, list[int]] = {}
    for i, rec in enumerate(records):
        by_artist.setdefault(rec.artist_id, []).append(i)
    names = sorted(by_artist)
    rng = make_rng(seed)
    perm = rng.permutation(len(names))
    total = len(records)
    quotas = np.cumsum(ratios) * total
    buckets: list[list[int]] = [[], [], []]
    cum = 0
    cur = 0
    for j in perm:
        while cur < 2 and cum >= quotas[cur] - 1e-9:
            cur += 1
        idx = by_artist[names[j]]
        buckets[cur].extend(idx)
        cum += len(idx)
    if any(not b for b in buckets):
        sizes = tuple(len(b) for b in buckets)
        raise SplitError(
            f"split sizes {sizes} include an empty split; try another seed or ratios"
        )
    return SplitAssignment(
        train=np.sort(np.array(buckets[0], dtype=np.int64)),
        valid=np.sort(np.array(buckets[1], dtype=np.int64)),
        test=np.sort(np.array(buckets[2], dtype=np.int64)),
        ratios=tuple(float(r) for r in ratios),
        seed=seed,
    )


def _as_vector_map(source_name: str, value) -> dict[str, np.ndarray]:
    if isinstance(value, dict):
        return value
    if isinstance(value, (str, Path)):
        if source_name == "cultural":
            ids, mat, _ = load_factors(value)
            return {sid: mat[i] for i, sid in enumerate(ids)}
        return load_features(value)
    raise DomainError(f"{source_name} vectors must be a path or a mapping, got {type(value).__name__}")


def bind_inputs(
    records,
    tag_vocab: list[str],
    source: str,
    factors=None,
    features=None,
) -> RetrievalDataset:
    """Attach per-song input vectors and produce a RetrievalDataset.

    ``source`` picks cultural factors, acoustic features, or their
    concatenation (cultural first). ``factors``/``features`` each accept a
    file path or a song_id -> vector mapping.
    """
    if source not in INPUT_SOURCES:
        raise DomainError(f"source must be one of {INPUT_SOURCES}, got {source!r}")
    need_factors = source in ("cultural", "concat")
    need_features = source in ("acoustic", "concat")
    if need_factors and factors is None:
        raise DomainError(f"source {source!r} requires factor vectors")
    if need_features and features is None:
        raise DomainError(f"source {source!r} requires feature vectors")
    fac_map = _as_vector_map("cultural", factors) if need_factors else None
    fea_map = _as_vector_map("acoustic", features) if need_features else None

    missing: list[str] = []
    for rec in records:
        if (fac_map is not None and rec.song_id not in fac_map) or (
            fea_map is not None and rec.song_id not in fea_map
        ):
            missing.append(rec.song_id)
    if missing:
        shown = ", ".join(missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        raise BindingError(f"{len(missing)} song id(s) lack input vectors: {shown}{more}")

    tag_index = {t: i for i, t in enumerate(tag_vocab)}
    song_ids, artist_ids, song_tags, rows = [], [], [], []
    for rec in records:
        idx = [tag_index[t] for t in rec.tags if t in tag_index]
        if not idx:
            raise DomainError(f"song {rec.song_id!r} has no tag in the vocabulary")
        parts = []
        if fac_map is not None:
            parts.append(np.asarray(fac_map[rec.song_id], dtype=np.float64))
        if fea_map is not None:
            parts.append(np.asarray(fea_map[rec.song_id], dtype=np.float64))
        vec = np.concatenate(parts)
        song_ids.append(rec.song_id)
        artist_ids.append(rec.artist_id)
        song_tags.append(np.array(idx, dtype=np.int64))
        rows.append(vec)
    if not rows:
        raise DomainError("no songs to bind")
    dims = {r.shape[0] for r in rows}
    if len(dims) != 1:
        raise DomainError(f"input vectors have mixed dimensions {sorted(dims)}")
    return RetrievalDataset(
        song_ids=song_ids,
        artist_ids=artist_ids,
        song_tags=song_tags,
        inputs=np.vstack(rows),
        tag_vocab=list(tag_vocab),
    )


def attach_tag_vectors(dataset: RetrievalDataset, table: WordVectorTable) -> RetrievalDataset:
    """Resolve every vocabulary tag through the word-vector table."""
    rows = [tag_to_vector(tag, table) for tag in dataset.tag_vocab]
    dataset.tag_vectors = np.vstack(rows)
    return dataset


def attach_categories(dataset: RetrievalDataset, categories: dict[str, str]) -> RetrievalDataset:
    """Record the tag -> category map for per-category evaluation."""
    for tag, cat in categories.items():
        if cat not in CATEGORY_NAMES:
            raise DomainError(f"unknown category {cat!r} for tag {tag!r}")
    dataset.tag_categories = dict(categories)
    return dataset
