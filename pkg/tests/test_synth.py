"""Synthetic dataset generator: determinism, coverage, planted structure."""

import numpy as np
import pytest

from tagsong import (
    DomainError,
    build_synth_dataset,
    generate,
    load_annotations,
    load_features,
    load_plays,
    load_word_vectors,
    write_files,
)

SMALL = dict(
    n_songs=120,
    n_tags=10,
    latent_dim=8,
    feature_dim=16,
    wordvec_dim=24,
    n_users=30,
)


class TestGenerate:
    def test_same_seed_identical(self):
        a = generate(seed=5, **SMALL)
        b = generate(seed=5, **SMALL)
        assert [r for r in a.records] == [r for r in b.records]
        assert a.plays == b.plays
        np.testing.assert_array_equal(a.table.vectors, b.table.vectors)
        for sid in a.features:
            np.testing.assert_array_equal(a.features[sid], b.features[sid])

    def test_different_seed_differs(self):
        a = generate(seed=5, **SMALL)
        b = generate(seed=6, **SMALL)
        assert not np.array_equal(a.latents, b.latents)

    def test_every_tag_covered(self):
        sd = generate(seed=0, **SMALL)
        counts = {name: 0 for name in sd.tag_names}
        for rec in sd.records:
            for t in rec.tags:
                counts[t] += 1
        assert min(counts.values()) >= 8

    def test_tags_per_song_bounded(self):
        sd = generate(seed=1, **SMALL)
        for rec in sd.records:
            assert 1 <= len(rec.tags)
            assert len(set(rec.tags)) == len(rec.tags)

    def test_head_tag_heavier_than_tail(self):
        sd = generate(seed=2, n_songs=400, n_tags=20, latent_dim=8, feature_dim=16, wordvec_dim=24, n_users=30)
        counts = {name: 0 for name in sd.tag_names}
        for rec in sd.records:
            for t in rec.tags:
                counts[t] += 1
        assert counts[sd.tag_names[0]] > counts[sd.tag_names[-1]]

    def test_artists_group_consecutive_songs(self):
        sd = generate(seed=3, **SMALL)
        for i, rec in enumerate(sd.records):
            assert rec.artist_id == f"artist{i // 4:05d}"

    def test_features_shape_and_keys(self):
        sd = generate(seed=4, **SMALL)
        assert set(sd.features) == {r.song_id for r in sd.records}
        for v in sd.features.values():
            assert v.shape == (16,)

    def test_plural_tokens_near_singulars(self):
        sd = generate(seed=5, **SMALL)
        assert len(sd.table) == 2 * len(sd.tag_names)
        for name in sd.tag_names:
            s = sd.table.vector(name)
            p = sd.table.vector(name + "s")
            assert np.linalg.norm(p - s) < 0.5
            assert np.linalg.norm(p - s) > 0.0

    def test_plays_valid(self):
        sd = generate(seed=6, **SMALL)
        songs = {r.song_id for r in sd.records}
        pairs = set()
        for u, s, c in sd.plays:
            assert c >= 1 and s in songs
            assert (u, s) not in pairs
            pairs.add((u, s))
        assert sd.plays == sorted(sd.plays)
        users = {u for u, _, _ in sd.plays}
        assert len(users) <= 30

    def test_shared_tag_pairs_closer_in_feature_space(self):
        # planted structure: songs sharing a tag have more-similar features
        sd = generate(seed=7, **SMALL)
        feats = {r.song_id: v / np.linalg.norm(v) for r, v in ((r, sd.features[r.song_id]) for r in sd.records)}
        tag_sets = {r.song_id: set(r.tags) for r in sd.records}
        ids = [r.song_id for r in sd.records]
        shared, disjoint = [], []
        for i in range(0, len(ids) - 1, 2):
            a, b = ids[i], ids[i + 1]
            sim = float(np.dot(feats[a], feats[b]))
            (shared if tag_sets[a] & tag_sets[b] else disjoint).append(sim)
        assert np.mean(shared) > np.mean(disjoint)

    def test_validation(self):
        with pytest.raises(DomainError, match="2 tags"):
            generate(n_tags=1)
        with pytest.raises(DomainError, match="songs"):
            generate(n_songs=10)
        with pytest.raises(DomainError, match="dimensions"):
            generate(latent_dim=0, **{k: v for k, v in SMALL.items() if k != "latent_dim"})


class TestBuildDataset:
    def test_full_pipeline(self):
        sd = generate(seed=8, **SMALL)
        ds = build_synth_dataset(sd)
        assert ds.n_songs == 120
        assert ds.tag_vocab == sd.tag_names  # zero-padded names sort in order
        assert ds.inputs.shape == (120, 16)
        assert ds.tag_vectors.shape == (10, 24)


class TestWriteFiles:
    def test_files_load_back(self, tmp_path):
        sd = generate(seed=9, **SMALL)
        paths = write_files(sd, tmp_path)
        records = load_annotations(paths["annotations"])
        assert records == sd.records
        feats = load_features(paths["features"])
        assert set(feats) == set(sd.features)
        np.testing.assert_allclose(
            feats[sd.records[0].song_id], sd.features[sd.records[0].song_id], rtol=1e-8
        )
        plays = load_plays(paths["plays"])
        assert plays == sd.plays
        table = load_word_vectors(paths["vectors"])
        assert table.tokens == sd.table.tokens

    def test_same_seed_same_bytes(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        write_files(generate(seed=10, **SMALL), d1)
        write_files(generate(seed=10, **SMALL), d2)
        for name in ("annotations.tsv", "features.tsv", "plays.tsv", "vectors.txt"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
