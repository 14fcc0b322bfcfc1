"""Feature-file format, manifests, synthetic generator, and episode sampling."""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from fewvid import data
from fewvid.errors import BadMagicError, DataError, TruncatedFileError, VersionError


def tree_checksum(root):
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            digest.update(path.name.encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


class TestFeatureFile:
    def test_byte_layout(self, tmp_path):
        feats = np.arange(6, dtype=np.float64).reshape(2, 3)
        path = tmp_path / "a.segf"
        data.write_feature_file(feats, path)
        blob = path.read_bytes()
        assert len(blob) == 4 + 4 + 4 + 4 + 24
        assert blob[:4] == b"SEGF"
        assert int.from_bytes(blob[4:8], "little") == 1
        assert int.from_bytes(blob[8:12], "little") == 2
        assert int.from_bytes(blob[12:16], "little") == 3
        assert np.frombuffer(blob[16:], dtype="<f4").tolist() == [0, 1, 2, 3, 4, 5]

    def test_round_trip_bit_exact(self, tmp_path):
        feats = np.random.default_rng(0).normal(size=(7, 5)).astype(np.float32)
        path = tmp_path / "b.segf"
        data.write_feature_file(feats, path)
        back = data.read_feature_file(path)
        assert back.dtype == np.float64
        assert back.astype(np.float32).tobytes() == feats.tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.segf"
        path.write_bytes(b"XXXX" + b"\x00" * 12)
        with pytest.raises(BadMagicError):
            data.read_feature_file(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "v2.segf"
        path.write_bytes(b"SEGF" + (2).to_bytes(4, "little") + b"\x00" * 8)
        with pytest.raises(VersionError):
            data.read_feature_file(path)

    def test_truncated_payload(self, tmp_path):
        feats = np.ones((4, 4))
        path = tmp_path / "t.segf"
        data.write_feature_file(feats, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(TruncatedFileError):
            data.read_feature_file(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "h.segf"
        path.write_bytes(b"SEGF\x01\x00")
        with pytest.raises(TruncatedFileError):
            data.read_feature_file(path)


class TestManifest:
    def test_round_trip_preserves_fields(self, tmp_path):
        manifest = data.DatasetManifest(split="base", class_names=["a", "b"], root=tmp_path)
        manifest.entries.append(data.ManifestEntry(
            video_id="base_c000_v000", class_label=0, feature_file="base/x.segf",
            gt_intervals=[(1, 3), (5, 9)], segment_roles="IFFNIFFFFN"))
        path = tmp_path / "m.jsonl"
        data.save_manifest(manifest, path)
        back = data.load_manifest(path)
        assert back.split == "base"
        assert back.class_names == ["a", "b"]
        assert back.root == tmp_path
        entry = back.entries[0]
        assert entry.video_id == "base_c000_v000"
        assert entry.class_label == 0
        assert entry.feature_file == "base/x.segf"
        assert entry.gt_intervals == [(1, 3), (5, 9)]
        assert entry.segment_roles == "IFFNIFFFFN"

    def test_malformed_manifest(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"split": "base", "class_names": []}\nnot json\n')
        with pytest.raises(DataError):
            data.load_manifest(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            data.load_manifest(tmp_path / "nope.jsonl")


SMALL = data.SyntheticConfig(
    n_base_classes=4, n_novel_classes=3, videos_per_class=6, T=12, d_in=8, seed=3)


class TestGenerator:
    def test_entry_counts(self, tmp_path):
        cfg = data.SyntheticConfig(n_base_classes=20, n_novel_classes=10,
                                   videos_per_class=30, T=20, d_in=16, seed=1)
        base, novel = data.generate_synthetic_dataset(cfg, tmp_path)
        assert len(base.entries) == 600
        assert len(novel.entries) == 300

    def test_deterministic_tree(self, tmp_path):
        data.generate_synthetic_dataset(SMALL, tmp_path / "one")
        data.generate_synthetic_dataset(SMALL, tmp_path / "two")
        assert tree_checksum(tmp_path / "one") == tree_checksum(tmp_path / "two")

    def test_label_sets_disjoint(self, tmp_path):
        base, novel = data.generate_synthetic_dataset(SMALL, tmp_path)
        assert not set(base.class_labels()) & set(novel.class_labels())

    def test_roles_partition_and_intervals_valid(self, tmp_path):
        base, novel = data.generate_synthetic_dataset(SMALL, tmp_path)
        for manifest in (base, novel):
            for entry in manifest.entries:
                seq = manifest.load_sequence(entry).validate()
                roles = entry.segment_roles
                assert len(roles) == seq.T
                fg_from_intervals = set()
                for start, end in entry.gt_intervals:
                    fg_from_intervals.update(range(start, end))
                assert {i for i, r in enumerate(roles) if r == "F"} == fg_from_intervals
                assert set(roles) <= {"F", "I", "N"}
                assert 1 <= len(entry.gt_intervals) <= 3

    def test_overlap_zero_keeps_pools_apart(self):
        cfg = data.SyntheticConfig(n_novel_classes=10, overlap_fraction=0.0, seed=5)
        concepts = data.draw_concepts(cfg, np.random.default_rng(cfg.seed))
        cross = concepts["novel_fg"] @ concepts["ibg"].T
        assert np.max(np.abs(cross - 1.0)) > 1e-6  # no novel concept equals a pool vector
        assert concepts["overlapped_novel"].size == 0

    def test_overlap_count_exact(self):
        cfg = data.SyntheticConfig(n_novel_classes=10, overlap_fraction=0.5, seed=5)
        concepts = data.draw_concepts(cfg, np.random.default_rng(cfg.seed))
        matches = np.isclose(concepts["novel_fg"] @ concepts["ibg"].T, 1.0).any(axis=1)
        assert matches.sum() == 5
        assert concepts["overlapped_novel"].size == 5

    def test_config_validation(self):
        with pytest.raises(DataError):
            data.SyntheticConfig(n_base_classes=0).validate()
        with pytest.raises(DataError):
            data.SyntheticConfig(overlap_fraction=1.5).validate()
        with pytest.raises(DataError):
            data.SyntheticConfig(noise_std=-0.1).validate()

    def test_manifest_paths_resolve(self, tmp_path):
        base, _ = data.generate_synthetic_dataset(SMALL, tmp_path)
        reloaded = data.load_manifest(tmp_path / "base_manifest.jsonl")
        seq = reloaded.load_sequence(reloaded.entries[0])
        assert seq.features.shape == (SMALL.T, SMALL.d_in)


class TestTrim:
    def seq(self, T=10, intervals=None):
        feats = np.arange(T * 2, dtype=float).reshape(T, 2)
        return data.SegmentFeatureSequence(
            video_id="v", class_label=0, features=feats, gt_intervals=intervals or [])

    def test_single_interval(self):
        out = data.trim_support_video(self.seq(intervals=[(2, 5)]))
        assert out.T == 3
        np.testing.assert_array_equal(out.features, self.seq().features[2:5])
        assert out.gt_intervals == [(0, 3)]

    def test_full_cover_is_identity(self):
        src = self.seq(intervals=[(0, 10)])
        out = data.trim_support_video(src)
        np.testing.assert_array_equal(out.features, src.features)
        assert out.gt_intervals == [(0, 10)]

    def test_two_intervals(self):
        out = data.trim_support_video(self.seq(intervals=[(1, 3), (7, 9)]))
        assert out.T == 4
        np.testing.assert_array_equal(out.features, self.seq().features[[1, 2, 7, 8]])

    def test_empty_intervals_error(self):
        with pytest.raises(DataError):
            data.trim_support_video(self.seq())


@pytest.fixture(scope="module")
def novel(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    _, manifest = data.generate_synthetic_dataset(SMALL, root)
    return manifest


class TestEpisode:
    def test_counts(self, novel):
        ep = data.sample_episode(novel, K=3, n=1, q=3, seed=0)
        assert len(ep.support) == 3
        assert len(ep.queries) == 9
        assert sorted(ep.class_remap.values()) == [0, 1, 2]

    def test_deterministic(self, novel):
        a = data.sample_episode(novel, K=3, n=2, q=2, seed=9)
        b = data.sample_episode(novel, K=3, n=2, q=2, seed=9)
        assert [s.video_id for s in a.support] == [s.video_id for s in b.support]
        assert [s.video_id for s in a.queries] == [s.video_id for s in b.queries]
        for x, y in zip(a.support, b.support):
            assert x.features.tobytes() == y.features.tobytes()

    def test_support_queries_disjoint(self, novel):
        ep = data.sample_episode(novel, K=3, n=2, q=2, seed=4)
        assert not {s.video_id for s in ep.support} & {s.video_id for s in ep.queries}

    def test_support_is_trimmed(self, novel):
        ep = data.sample_episode(novel, K=3, n=1, q=1, seed=2)
        for s in ep.support:
            assert s.gt_intervals == [(0, s.T)]
            assert s.T < SMALL.T  # generator keeps some background in every video

    def test_query_classes_within_sampled(self, novel):
        ep = data.sample_episode(novel, K=2, n=1, q=2, seed=7)
        assert {s.class_label for s in ep.queries} <= set(ep.classes)

    def test_too_many_classes(self, novel):
        with pytest.raises(DataError):
            data.sample_episode(novel, K=99, n=1, q=1, seed=0)

    def test_too_few_videos_names_class(self, novel):
        with pytest.raises(DataError) as err:
            data.sample_episode(novel, K=3, n=3, q=5, seed=0)
        assert "novel" in str(err.value)
