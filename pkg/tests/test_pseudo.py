"""Pseudo-labeling vs a brute-force scan oracle, plus its invariances."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from fewvid import pseudo


# deliberately dumb reference implementations: python loops, no numpy tricks
def oracle_bg(logits):
    best_idx, best_val = 0, math.inf
    for i, row in enumerate(logits):
        m = max(row)
        if m < best_val:
            best_idx, best_val = i, m
    return best_idx


def oracle_top_m(logits, M):
    vals = [max(row) for row in logits]
    chosen = []
    for _ in range(M):
        pick, pick_val = None, -math.inf
        for i, v in enumerate(vals):
            if i not in chosen and v > pick_val:
                pick, pick_val = i, v
        chosen.append(pick)
    return sorted(chosen)


def logit_matrices():
    return hnp.arrays(
        np.float64,
        st.tuples(st.integers(2, 32), st.integers(1, 16)),
        elements=st.floats(-1.0, 1.0, width=16),  # coarse grid makes ties common
    )


class TestExamples:
    def test_bg_picks_weakest_segment(self):
        logits = np.array([[0.9, 0.1], [0.3, 0.2], [0.5, 0.4]])
        assert pseudo.pseudo_label_bg(logits) == 1

    def test_bg_tie_takes_first(self):
        assert pseudo.pseudo_label_bg(np.tile([0.4, 0.2], (5, 1))) == 0

    def test_bg_singleton(self):
        assert pseudo.pseudo_label_bg(np.array([[0.1, 0.9]])) == 0

    def test_nbg_threshold(self):
        logits = np.array([[0.9, 0.1], [0.3, 0.2], [0.5, 0.4]])
        assert not pseudo.filter_nbg(1, logits, t_n=0.25)
        assert pseudo.filter_nbg(1, logits, t_n=0.35)

    def test_nbg_never_fires_below_cosine_floor(self):
        logits = np.random.default_rng(0).uniform(-1, 1, size=(8, 4))
        i_bg = pseudo.pseudo_label_bg(logits)
        assert not pseudo.filter_nbg(i_bg, logits, t_n=-1.0)

    def test_top_m(self):
        logits = np.array([[0.9, 0.1], [0.3, 0.2], [0.5, 0.4]])
        assert pseudo.select_fg_ibg(logits, 1) == [0]
        assert pseudo.select_fg_ibg(logits, 2) == [0, 2]

    def test_top_m_tie_takes_lowest(self):
        assert pseudo.select_fg_ibg(np.tile([0.4, 0.2], (5, 1)), 2) == [0, 1]

    def test_m_out_of_range(self):
        logits = np.zeros((4, 2))
        with pytest.raises(ValueError):
            pseudo.select_fg_ibg(logits, 0)
        with pytest.raises(ValueError):
            pseudo.select_fg_ibg(logits, 4)

    def test_default_m(self):
        assert pseudo.default_m(8) == 2
        assert pseudo.default_m(20) == 3
        assert pseudo.default_m(100) == 13


class TestOracleAgreement:
    def test_many_random_matrices(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            T = int(rng.integers(2, 33))
            N = int(rng.integers(1, 17))
            # half the draws land on a coarse grid so exact ties occur
            if rng.random() < 0.5:
                logits = rng.integers(-4, 5, size=(T, N)) / 4.0
            else:
                logits = rng.uniform(-1, 1, size=(T, N))
            M = int(rng.integers(1, T))
            assert pseudo.pseudo_label_bg(logits) == oracle_bg(logits.tolist())
            assert pseudo.select_fg_ibg(logits, M) == oracle_top_m(logits.tolist(), M)


class TestInvariances:
    @settings(max_examples=100, deadline=None)
    @given(logit_matrices(), st.floats(-0.5, 0.5, width=16))
    def test_shift_invariance(self, logits, shift):
        shifted = logits + shift
        M = max(1, logits.shape[0] // 3)
        assert pseudo.pseudo_label_bg(shifted) == pseudo.pseudo_label_bg(logits)
        assert pseudo.select_fg_ibg(shifted, M) == pseudo.select_fg_ibg(logits, M)

    @settings(max_examples=100, deadline=None)
    @given(logit_matrices(), st.randoms(use_true_random=False))
    def test_permutation_consistency(self, logits, rand):
        T = logits.shape[0]
        perm = list(range(T))
        rand.shuffle(perm)
        perm = np.array(perm)
        # ties break differently across orderings, so jitter rows apart
        logits = logits + np.arange(T)[:, None] * 1e-9
        i_bg = pseudo.pseudo_label_bg(logits)
        assert pseudo.pseudo_label_bg(logits[perm]) == int(np.flatnonzero(perm == i_bg)[0])
        M = max(1, T // 3)
        direct = pseudo.select_fg_ibg(logits[perm], M)
        mapped = sorted(int(np.flatnonzero(perm == i)[0]) for i in pseudo.select_fg_ibg(logits, M))
        assert direct == mapped

    @settings(max_examples=100, deadline=None)
    @given(logit_matrices())
    def test_nbg_depends_on_absolute_level(self, logits):
        i_bg = pseudo.pseudo_label_bg(logits)
        assert pseudo.filter_nbg(i_bg, logits - 10.0, t_n=0.25)
        assert not pseudo.filter_nbg(i_bg, logits + 10.0, t_n=0.25)


class TestRecord:
    def test_bg_excluded_from_fg_ibg(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            logits = rng.uniform(-1, 1, size=(int(rng.integers(2, 20)), 4))
            rec = pseudo.pseudo_label_video(logits)
            assert rec.i_bg not in rec.fg_ibg_indices

    def test_bg_excluded_even_under_total_tie(self):
        rec = pseudo.pseudo_label_video(np.zeros((6, 3)), M=3)
        assert rec.i_bg == 0
        assert rec.fg_ibg_indices == [1, 2, 3]

    def test_matches_components(self):
        logits = np.random.default_rng(2).uniform(-1, 1, size=(12, 5))
        rec = pseudo.pseudo_label_video(logits, t_n=0.3, M=4)
        assert rec.i_bg == pseudo.pseudo_label_bg(logits)
        assert rec.is_nbg == pseudo.filter_nbg(rec.i_bg, logits, t_n=0.3)
        assert rec.fg_ibg_indices == pseudo.select_fg_ibg(logits, 4)
        np.testing.assert_array_equal(rec.max_logits, logits.max(axis=1))

    def test_tiny_video_does_not_crash(self):
        rec = pseudo.pseudo_label_video(np.array([[0.2, 0.1]]))
        assert rec.i_bg == 0
        assert rec.fg_ibg_indices == []

    def test_probability_mode(self):
        logits = np.array([[5.0, 0.0], [0.0, 0.1]])
        rec = pseudo.pseudo_label_video(logits, t_n=0.6, use_probabilities=True)
        assert rec.i_bg == 1  # near-uniform row has the lowest max probability
        assert rec.is_nbg  # its max prob is ~0.525 < 0.6
        assert np.all(rec.max_logits <= 1.0)

    def test_roles_cover_every_segment(self):
        logits = np.random.default_rng(3).uniform(-1, 1, size=(10, 4))
        rec = pseudo.pseudo_label_video(logits, M=3)
        roles = pseudo.segment_roles(rec)
        assert len(roles) == 10
        assert roles.count("FGIBG") == 3
        assert roles.count("BG") + roles.count("NBG") == 1
