import random
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusedec import edit_distance, score_corpus


def naive_edit_distance(ref: tuple, hyp: tuple) -> int:
    """Exhaustive recursive definition, independent of the DP implementation."""

    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            rec(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]),
            rec(i - 1, j) + 1,
            rec(i, j - 1) + 1,
        )

    return rec(len(ref), len(hyp))


class TestEditDistance:
    def test_identity(self):
        assert edit_distance([1, 2, 3], [1, 2, 3]) == (0, 0, 0, 0)

    def test_single_deletion(self):
        assert edit_distance(["a", "b", "c"], ["a", "c"]) == (1, 0, 0, 1)

    def test_single_insertion(self):
        assert edit_distance(["a", "c"], ["a", "b", "c"]) == (1, 0, 1, 0)

    def test_substitution_preferred_on_ties(self):
        dist, s, i, d = edit_distance(["a"], ["b"])
        assert (dist, s, i, d) == (1, 1, 0, 0)

    def test_counts_sum_to_distance_randomized(self):
        rng = random.Random(8)
        for _ in range(200):
            ref = [rng.randint(0, 3) for _ in range(rng.randint(0, 8))]
            hyp = [rng.randint(0, 3) for _ in range(rng.randint(0, 8))]
            dist, s, i, d = edit_distance(ref, hyp)
            assert s + i + d == dist
            assert dist == naive_edit_distance(tuple(ref), tuple(hyp))

    @given(
        st.lists(st.integers(0, 2), max_size=6),
        st.lists(st.integers(0, 2), max_size=6),
        st.lists(st.integers(0, 2), max_size=6),
    )
    @settings(max_examples=150, deadline=None)
    def test_symmetry_and_triangle(self, a, b, c):
        ab = edit_distance(a, b)[0]
        ba = edit_distance(b, a)[0]
        assert ab == ba
        ac = edit_distance(a, c)[0]
        cb = edit_distance(c, b)[0]
        assert ab <= ac + cb

    def test_empty_sequences(self):
        assert edit_distance([], []) == (0, 0, 0, 0)
        assert edit_distance([], ["x"]) == (1, 0, 1, 0)
        assert edit_distance(["x"], []) == (1, 0, 0, 1)


class TestScoreCorpus:
    def test_exact_corpus(self):
        refs = [b"a b c", b"hello world"]
        report = score_corpus(refs, list(refs))
        assert report.wer == 0.0
        assert report.cer == 0.0
        assert report.exact_match == 1.0

    def test_hand_case_one_third(self):
        report = score_corpus([b"a b c"], [b"a c"])
        assert report.wer == pytest.approx(1 / 3)
        assert report.word.deletions == 1
        assert report.word.ref_len == 3
        assert report.exact_match == 0.0

    def test_micro_average_matches_per_utterance_sums(self):
        rng = random.Random(9)
        for _ in range(20):
            n = rng.randint(1, 6)
            refs, hyps = [], []
            for _ in range(n):
                refs.append(bytes(rng.choice(b"ab ") for _ in range(rng.randint(0, 10))))
                hyps.append(bytes(rng.choice(b"ab ") for _ in range(rng.randint(0, 10))))
            report = score_corpus(refs, hyps, unit="byte")
            total_err = sum(
                edit_distance(list(r), list(h))[0] for r, h in zip(refs, hyps)
            )
            total_ref = sum(len(r) for r in refs)
            if total_ref:
                assert report.cer == pytest.approx(total_err / total_ref)

    def test_single_byte_words_make_units_agree(self):
        refs = [b"a b c", b"b a"]
        hyps = [b"a c c", b"b b"]
        word = score_corpus(refs, hyps, unit="word")
        # byte scoring of the words alone (whitespace stripped)
        byte = score_corpus(
            [r.replace(b" ", b"") for r in refs],
            [h.replace(b" ", b"") for h in hyps],
            unit="byte",
        )
        assert word.wer == pytest.approx(byte.cer)

    def test_unit_selects_headline_counts(self):
        report_w = score_corpus([b"ab cd"], [b"ab"], unit="word")
        report_b = score_corpus([b"ab cd"], [b"ab"], unit="byte")
        assert report_w.counts.ref_len == 2
        assert report_b.counts.ref_len == 5

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            score_corpus([b"a"], [b"a", b"b"])

    def test_empty_corpus(self):
        report = score_corpus([], [])
        assert report.wer == 0.0 and report.exact_match == 1.0

    def test_unknown_unit_rejected(self):
        with pytest.raises(ValueError):
            score_corpus([b"a"], [b"a"], unit="phoneme")
