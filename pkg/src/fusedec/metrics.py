"""Edit-distance error rates for decoded hypotheses.

Word error rate aligns on ASCII-whitespace-separated words, character
error rate on raw bytes. Rates are micro-averaged: total errors over
total reference units across the corpus.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class UnitCounts:
    substitutions: int
    insertions: int
    deletions: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        if self.ref_len == 0:
            return 0.0 if self.errors == 0 else float("inf")
        return self.errors / self.ref_len


@dataclass(frozen=True)
class EvalReport:
    """Corpus-level error rates with the alignment counts behind them."""

    wer: float
    cer: float
    exact_match: float
    word: UnitCounts
    byte: UnitCounts
    unit: str

    @property
    def counts(self) -> UnitCounts:
        return self.word if self.unit == "word" else self.byte


def edit_distance(
    ref: Sequence, hyp: Sequence
) -> tuple[int, int, int, int]:
    """Unit-cost Levenshtein distance as (distance, subs, ins, dels).

    The backtrace prefers substitution over an insert+delete pair on
    ties, and deletion over insertion, so counts are deterministic.
    Insertions are hypothesis symbols absent from the reference.
    """
    n, m = len(ref), len(hyp)
    # dp[i][j]: cost of aligning ref[:i] with hyp[:j]
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dp[i][0] = i
    for j in range(1, m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        row, prev = dp[i], dp[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ref[i - 1] != hyp[j - 1])
            row[j] = min(sub, prev[j] + 1, row[j - 1] + 1)

    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and dp[i][j] == dp[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return dp[n][m], subs, ins, dels


def _split(data: bytes, unit: str) -> list:
    if unit == "word":
        return data.split()
    if unit == "byte":
        return list(data)
    raise ValueError(f"unknown unit {unit!r} (expected 'word' or 'byte')")


def _count_unit(refs: Sequence[bytes], hyps: Sequence[bytes], unit: str) -> UnitCounts:
    subs = ins = dels = ref_len = 0
    for ref, hyp in zip(refs, hyps):
        r, h = _split(ref, unit), _split(hyp, unit)
        _, s, i, d = edit_distance(r, h)
        subs += s
        ins += i
        dels += d
        ref_len += len(r)
    return UnitCounts(subs, ins, dels, ref_len)


def score_corpus(
    refs: Sequence[bytes], hyps: Sequence[bytes], unit: str = "word"
) -> EvalReport:
    """Micro-averaged error rates over a corpus of (reference, hypothesis) pairs.

    ``unit`` selects which alignment backs ``report.counts``; both word
    and byte rates are always computed. Exact match is the fraction of
    hypotheses equal to their reference byte for byte.
    """
    if len(refs) != len(hyps):
        raise ValueError(
            f"got {len(refs)} references but {len(hyps)} hypotheses"
        )
    _split(b"", unit)  # validate unit name early
    word = _count_unit(refs, hyps, "word")
    byte = _count_unit(refs, hyps, "byte")
    exact = (
        sum(r == h for r, h in zip(refs, hyps)) / len(refs) if refs else 1.0
    )
    return EvalReport(
        wer=word.rate, cer=byte.rate, exact_match=exact, word=word, byte=byte, unit=unit
    )
