"""Synthetic planted-structure dataset generator.

Each tag owns a latent direction; songs carry Zipf-distributed tag sets and
their feature vectors are noisy projections of the mean tag latent, so a
model that recovers the latent geometry can rank songs by tag. Word
vectors are independent projections of the same latents, giving the tag
branch a correlated but distinct input modality. Play counts cluster users
around preferred tags so factorized song vectors also carry tag structure.

Everything is drawn from one seeded generator, so a seed pins the dataset
(and its files) exactly.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import make_rng
from .dataset import AnnotationRecord, RetrievalDataset, attach_tag_vectors, bind_inputs, topk_tag_filter
from .errors import DomainError
from .wordvec import WordVectorTable, save_word_vectors


@dataclass
class SynthData:
    records: list[AnnotationRecord]
    features: dict[str, np.ndarray]
    plays: list[tuple[str, str, int]]
    table: WordVectorTable
    tag_names: list[str]
    latents: np.ndarray


def generate(
    n_songs: int = 2000,
    n_tags: int = 50,
    latent_dim: int = 16,
    feature_dim: int = 64,
    wordvec_dim: int = 300,
    zipf_exponent: float = 1.2,
    feature_noise: float = 0.3,
    wordvec_noise: float = 0.1,
    min_songs_per_tag: int = 8,
    songs_per_artist: int = 4,
    n_users: int = 400,
    seed: int = 0,
) -> SynthData:
    """Draw one synthetic dataset; deterministic per seed."""
    if n_tags < 2:
        raise DomainError(f"need at least 2 tags for retrieval, got {n_tags}")
    if n_songs < 2 * min_songs_per_tag:
        raise DomainError(f"need at least {2 * min_songs_per_tag} songs, got {n_songs}")
    if latent_dim < 1 or feature_dim < 1 or wordvec_dim < 1:
        raise DomainError("dimensions must be >= 1")
    if songs_per_artist < 1 or n_users < 1 or min_songs_per_tag < 1:
        raise DomainError("counts must be >= 1")
    rng = make_rng(seed)

    tag_width = max(2, len(str(n_tags - 1)))
    song_width = max(5, len(str(n_songs - 1)))
    tag_names = [f"tag{i:0{tag_width}d}" for i in range(n_tags)]
    song_names = [f"song{i:0{song_width}d}" for i in range(n_songs)]

    # standard-normal latents (norm ~ sqrt(latent_dim)) keep the fixed
    # feature-noise sigma small relative to the signal
    latents = rng.normal(size=(n_tags, latent_dim))

    zipf = 1.0 / np.arange(1, n_tags + 1) ** zipf_exponent
    zipf /= zipf.sum()

    max_tags_per_song = min(5, n_tags)
    song_tag_sets: list[list[int]] = []
    for _ in range(n_songs):
        k = 1 + min(int(rng.poisson(1.2)), max_tags_per_song - 1)
        picks = rng.choice(n_tags, size=k, replace=False, p=zipf)
        song_tag_sets.append(sorted(int(t) for t in picks))

    # coverage pass: every tag must appear on at least min_songs_per_tag songs
    counts = np.zeros(n_tags, dtype=np.int64)
    for tags in song_tag_sets:
        counts[tags] += 1
    for t in range(n_tags):
        short = min_songs_per_tag - int(counts[t])
        if short <= 0:
            continue
        lacking = np.array([s for s in range(n_songs) if t not in song_tag_sets[s]], dtype=np.int64)
        if lacking.size < short:
            raise DomainError(f"cannot give tag {tag_names[t]!r} {min_songs_per_tag} songs")
        extra = rng.choice(lacking, size=short, replace=False)
        for s in extra:
            song_tag_sets[int(s)].append(t)
            song_tag_sets[int(s)].sort()
        counts[t] = min_songs_per_tag
    for t in range(n_tags):
        if counts[t] >= n_songs:
            raise DomainError(f"tag {tag_names[t]!r} covers every song; increase n_songs")

    records = []
    for s in range(n_songs):
        artist = f"artist{s // songs_per_artist:05d}"
        tags = tuple(tag_names[t] for t in song_tag_sets[s])
        records.append(AnnotationRecord(song_names[s], artist, tags))

    proj_feat = rng.normal(0.0, 1.0 / np.sqrt(feature_dim), size=(latent_dim, feature_dim))
    features: dict[str, np.ndarray] = {}
    for s in range(n_songs):
        base = latents[song_tag_sets[s]].mean(axis=0)
        noisy = base + rng.normal(0.0, feature_noise, size=latent_dim)
        features[song_names[s]] = noisy @ proj_feat

    proj_wv = rng.normal(0.0, 1.0 / np.sqrt(wordvec_dim), size=(latent_dim, wordvec_dim))
    clean_wv = latents @ proj_wv
    singular = clean_wv + rng.normal(0.0, wordvec_noise, size=(n_tags, wordvec_dim))
    plural = singular + rng.normal(0.0, 0.01, size=(n_tags, wordvec_dim))
    tokens = list(tag_names) + [name + "s" for name in tag_names]
    table = WordVectorTable(
        dim=wordvec_dim, tokens=tokens, vectors=np.vstack([singular, plural])
    )

    songs_by_tag = [np.array([s for s in range(n_songs) if t in song_tag_sets[s]]) for t in range(n_tags)]
    play_map: dict[tuple[str, str], int] = {}
    for u in range(n_users):
        prefs = rng.choice(n_tags, size=min(2, n_tags), replace=False, p=zipf)
        pool = np.unique(np.concatenate([songs_by_tag[int(t)] for t in prefs]))
        n_plays = min(40, pool.size)
        chosen = rng.choice(pool, size=n_plays, replace=False)
        for s in chosen:
            play_map[(f"user{u:04d}", song_names[int(s)])] = 1 + int(rng.poisson(3.0))
    plays = [(u, s, c) for (u, s), c in sorted(play_map.items())]

    return SynthData(
        records=records,
        features=features,
        plays=plays,
        table=table,
        tag_names=tag_names,
        latents=latents,
    )


def build_synth_dataset(sd: SynthData, source: str = "acoustic", factors=None) -> RetrievalDataset:
    """Run the standard pipeline on in-memory synthetic data."""
    filtered, vocab = topk_tag_filter(sd.records, len(sd.tag_names))
    ds = bind_inputs(filtered, vocab, source, factors=factors, features=sd.features)
    return attach_tag_vectors(ds, sd.table)


def write_files(sd: SynthData, out_dir) -> dict[str, Path]:
    """Write annotations.tsv, features.tsv, plays.tsv, and vectors.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "annotations": out / "annotations.tsv",
        "features": out / "features.tsv",
        "plays": out / "plays.tsv",
        "vectors": out / "vectors.txt",
    }
    with open(paths["annotations"], "w", encoding="utf-8") as fh:
        for rec in sd.records:
            fh.write(f"{rec.song_id}\t{rec.artist_id}\t{','.join(rec.tags)}\n")
    with open(paths["features"], "w", encoding="utf-8") as fh:
        for rec in sd.records:
            values = " ".join(f"{v:.9g}" for v in sd.features[rec.song_id])
            fh.write(f"{rec.song_id}\t{values}\n")
    with open(paths["plays"], "w", encoding="utf-8") as fh:
        for user, song, count in sd.plays:
            fh.write(f"{user}\t{song}\t{count}\n")
    save_word_vectors(paths["vectors"], sd.table)
    return paths
