"""Token-space to byte-space probability transforms.

Two routes compute the probability that a model's byte output starts
with a given byte string:

* ``exact_byte_marginal`` enumerates every minimal covering token
  sequence (brute force, exponential in sequence length; desk scale
  only). It is the oracle the fast route is checked against.
* ``approx_byte_score`` keeps only the deterministic main tokenization
  of the byte string plus single-token branching alternatives at each
  token boundary, which needs at most S model forwards.

``refresh_cache`` / ``next_byte_scores`` are the incremental form of the
approximation used by the decoder: one cache per (beam, model), S+1
model forwards per scoring call, joint (unnormalized) scores per
candidate next byte plus a terminal score for ending the sequence.

All accumulation is in log space with max-shift (via logsumexp), so
long sequences do not underflow rolling products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .models import Context, TokenModel
from .vocab import MainSequence, alternatives_for_suffix, group_by_next_byte, tokenize

NEG_INF = float("-inf")


class BudgetExceededError(RuntimeError):
    """Brute-force enumeration exceeded its node budget."""


def _logsumexp(parts: Sequence[float]) -> float:
    if not parts:
        return NEG_INF
    m = max(parts)
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(sum(math.exp(p - m) for p in parts))


# --- exact oracle -------------------------------------------------------------


def exact_byte_marginal(
    model: TokenModel,
    prefix: bytes,
    ctx: Context = None,
    max_tokens: int | None = None,
    max_nodes: int = 500_000,
) -> float:
    """Total probability of byte continuations starting with ``prefix``.

    Sums, over every minimal covering token sequence (the last token
    reaches or passes the end of ``prefix``, earlier tokens stay strictly
    inside it), the chain-rule probability of that sequence. Linear scans
    of the vocabulary keep this independent of the fast path.
    """
    prefix = bytes(prefix)
    if not prefix:
        return 1.0
    vocab = model.vocabulary
    if max_tokens is None:
        max_tokens = len(prefix)
    nodes = [0]

    def rec(offset: int, state: Any, weight: float, depth: int) -> float:
        if depth >= max_tokens:
            return 0.0
        nodes[0] += 1
        if nodes[0] > max_nodes:
            raise BudgetExceededError(
                f"exact enumeration exceeded {max_nodes} nodes for "
                f"{len(prefix)}-byte prefix over {vocab.size} tokens"
            )
        dist = model.dist_from_state(state, ctx)
        rem = prefix[offset:]
        total = 0.0
        for tid in vocab.non_eos_ids:
            p = float(dist[tid])
            if p <= 0.0:
                continue
            tb = vocab.bytes_of(tid)
            if tb.startswith(rem):
                total += weight * p  # covers the rest of the prefix
            elif rem.startswith(tb):
                total += rec(
                    offset + len(tb),
                    model.advance_state(state, tid),
                    weight * p,
                    depth + 1,
                )
        return total

    return rec(0, model.initial_state(ctx), 1.0, 0)


def exact_terminal_mass(
    model: TokenModel,
    prefix: bytes,
    ctx: Context = None,
    max_nodes: int = 500_000,
) -> float:
    """Probability of ending exactly at ``prefix``: exact tokenizations x EOS."""
    vocab = model.vocabulary
    if vocab.eos_id is None:
        return 0.0
    prefix = bytes(prefix)
    eos = vocab.eos_id
    nodes = [0]

    def rec(offset: int, state: Any, weight: float) -> float:
        nodes[0] += 1
        if nodes[0] > max_nodes:
            raise BudgetExceededError("terminal enumeration exceeded node budget")
        dist = model.dist_from_state(state, ctx)
        if offset == len(prefix):
            return weight * float(dist[eos])
        rem = prefix[offset:]
        total = 0.0
        for tid in vocab.non_eos_ids:
            p = float(dist[tid])
            if p <= 0.0:
                continue
            tb = vocab.bytes_of(tid)
            if rem.startswith(tb):
                total += rec(offset + len(tb), model.advance_state(state, tid), weight * p)
        return total

    return rec(0, model.initial_state(ctx), 1.0)


# --- per-model decoding cache -------------------------------------------------


@dataclass
class _ScoreMemo:
    """Results of the last next_byte_scores call, for reuse on the next step."""

    main_ids: tuple[int, ...]
    dists: list[np.ndarray]
    confidence: float
    depth_bucket_mass: list[float]


@dataclass
class ModelCache:
    """Per-beam, per-model decoding state for a committed byte string.

    ``alternatives[s]`` holds the tokens covering the whole byte suffix
    after the first ``s`` main tokens; ``log_rolling[s]`` is the log of
    the cumulative product of the first ``s`` main-token probabilities
    (``log_rolling[0] == 0``). Depth count is S+1: every token boundary
    plus the post-sequence boundary with the empty suffix.
    """

    main: MainSequence
    alternatives: list[list[tuple[int, int]]]
    prefix_lengths: list[int]
    log_rolling: list[float]
    states: list[Any]
    rolling_dists: dict[int, np.ndarray] = field(default_factory=dict)
    memo: _ScoreMemo | None = None

    @property
    def depth_count(self) -> int:
        return len(self.main.token_ids) + 1

    @property
    def rolling(self) -> list[float]:
        return [math.exp(lr) for lr in self.log_rolling]


@dataclass(frozen=True)
class ByteScore:
    """Joint (unnormalized) log scores for each candidate next byte.

    ``log_scores[b]`` scores the committed bytes extended by ``b``;
    ``log_terminal`` scores ending the sequence at the committed bytes.
    These are joint probabilities, not a conditional distribution.
    """

    log_scores: dict[int, float]
    log_terminal: float

    @property
    def scores(self) -> dict[int, float]:
        return {b: math.exp(s) for b, s in self.log_scores.items()}

    @property
    def terminal(self) -> float:
        return 0.0 if self.log_terminal == NEG_INF else math.exp(self.log_terminal)


def refresh_cache(
    model: TokenModel,
    data: bytes,
    ctx: Context = None,
    old: ModelCache | None = None,
) -> ModelCache:
    """Build (or rebuild) the decoding cache for a committed byte string.

    Incremental state, rolling products, and previously evaluated
    distributions are reused from ``old`` for the longest token prefix
    shared with the new main sequence. ``old`` must have been built with
    the same model and context.
    """
    vocab = model.vocabulary
    main = tokenize(vocab, data)
    s_count = len(main.token_ids)
    idx = vocab.prefix_index

    shared = 0
    if old is not None:
        limit = min(s_count, len(old.main.token_ids))
        while shared < limit and main.token_ids[shared] == old.main.token_ids[shared]:
            shared += 1

    # carry over every distribution still valid for the shared prefix
    rolling_dists: dict[int, np.ndarray] = {}
    if old is not None:
        for depth, dist in old.rolling_dists.items():
            if depth <= shared:
                rolling_dists[depth] = dist
        if old.memo is not None:
            # a depth-d distribution conditions on the first d tokens of the
            # memo's main sequence, so it is reusable only while those agree
            memo_ids = old.memo.main_ids
            memo_shared = 0
            limit = min(len(memo_ids), s_count)
            while memo_shared < limit and memo_ids[memo_shared] == main.token_ids[memo_shared]:
                memo_shared += 1
            for depth in range(min(len(old.memo.dists), memo_shared + 1, shared + 1)):
                rolling_dists.setdefault(depth, old.memo.dists[depth])

    states: list[Any] = [None] * (s_count + 1)
    log_rolling: list[float] = [0.0] * (s_count + 1)
    for s in range(s_count + 1):
        if old is not None and s <= shared:
            states[s] = old.states[s]
            log_rolling[s] = old.log_rolling[s]
            continue
        if s == 0:
            states[0] = model.initial_state(ctx)
            continue
        tid = main.token_ids[s - 1]
        states[s] = model.advance_state(states[s - 1], tid)
        dist = rolling_dists.get(s - 1)
        if dist is None:
            dist = model.dist_from_state(states[s - 1], ctx)
            rolling_dists[s - 1] = dist
        p = float(dist[tid])
        log_rolling[s] = log_rolling[s - 1] + (math.log(p) if p > 0.0 else NEG_INF)

    alternatives: list[list[tuple[int, int]]] = []
    prefix_lengths: list[int] = []
    for s in range(s_count + 1):
        offset = main.boundary_offsets[s] if s < s_count else len(main.source_bytes)
        suffix = main.source_bytes[offset:]
        alternatives.append(alternatives_for_suffix(idx, suffix))
        prefix_lengths.append(len(suffix))

    return ModelCache(
        main=main,
        alternatives=alternatives,
        prefix_lengths=prefix_lengths,
        log_rolling=log_rolling,
        states=states,
        rolling_dists=rolling_dists,
        memo=old.memo if old is not None else None,
    )


def approx_byte_score(model: TokenModel, data: bytes, ctx: Context = None) -> float:
    """Main-sequence approximation of the byte marginal for ``data``.

    Evaluates the backbone tokenization plus, at each token boundary, the
    mass of single tokens covering the entire remaining byte suffix. The
    main path is counted once, via the full rolling product. Uses at most
    S model forwards and never exceeds the exact marginal.
    """
    return math.exp(approx_byte_log_score(model, data, ctx))


def approx_byte_log_score(model: TokenModel, data: bytes, ctx: Context = None) -> float:
    """Log-space form of :func:`approx_byte_score` (beam search ranks in logs)."""
    data = bytes(data)
    if not data:
        return 0.0
    cache = refresh_cache(model, data, ctx)
    return _approx_log_from_cache(model, cache, ctx)


def _approx_log_from_cache(model: TokenModel, cache: ModelCache, ctx: Context) -> float:
    vocab = model.vocabulary
    s_count = len(cache.main.token_ids)
    parts = [cache.log_rolling[s_count]]
    for s in range(s_count):
        if cache.log_rolling[s] == NEG_INF:
            continue
        dist = cache.rolling_dists.get(s)
        if dist is None:
            dist = model.dist_from_state(cache.states[s], ctx)
            cache.rolling_dists[s] = dist
        # every bucketed member covers the whole remaining suffix and more;
        # exact completions are off-main segmentations the approximation drops
        members = cache.alternatives[s]
        buckets, _exact = group_by_next_byte(
            vocab, members, [float(dist[tid]) for tid, _ in members]
        )
        mass = sum(buckets.values())
        if mass > 0.0:
            parts.append(cache.log_rolling[s] + math.log(mass))
    return _logsumexp(parts)


def next_byte_scores(
    model: TokenModel,
    cache: ModelCache,
    ctx: Context = None,
    skip_threshold: float | None = None,
) -> ByteScore:
    """Joint scores for every candidate next byte, plus the terminal score.

    For each depth s the model distribution at the main prefix of length
    s is restricted to the cached covering alternatives, weighted by the
    rolling product, and routed to the byte each alternative proposes
    just past the committed suffix. Alternatives that match the suffix
    exactly at a non-final depth are off-main segmentations and are
    dropped. EOS mass at the final depth becomes the terminal score.

    Exactly S+1 model forwards are issued. With ``skip_threshold`` set
    and the previous call's confidence at or above it, distributions for
    all but the final depth are reused from that call when the main
    sequence extends the previous one by a single token, reducing the
    call to one forward (results are identical by determinism).
    """
    vocab = model.vocabulary
    eos = vocab.eos_id
    s_count = len(cache.main.token_ids)

    memo = cache.memo
    reuse = (
        skip_threshold is not None
        and memo is not None
        and memo.confidence >= skip_threshold
        and s_count >= 1
        and cache.main.token_ids[:-1] == memo.main_ids
        and len(memo.dists) == s_count
    )

    log_buckets: dict[int, list[float]] = {}
    log_terminal_parts: list[float] = []
    depth_mass: list[float] = []
    dists: list[np.ndarray] = []
    for s in range(s_count + 1):
        if reuse and s < s_count:
            dist = memo.dists[s]
        else:
            dist = model.dist_from_state(cache.states[s], ctx)
        dists.append(dist)
        lr = cache.log_rolling[s]
        mass_here = 0.0
        if lr > NEG_INF:
            members = cache.alternatives[s]
            buckets, _exact = group_by_next_byte(
                vocab, members, [float(dist[tid]) for tid, _ in members]
            )
            # exact completions (non-final depths only) are off-main
            # segmentation paths the approximation drops
            for b in sorted(buckets):
                mass = buckets[b]
                if mass > 0.0:
                    log_buckets.setdefault(b, []).append(lr + math.log(mass))
                    mass_here += mass
            mass_here *= math.exp(lr)
            if s == s_count and eos is not None:
                p = float(dist[eos])
                if p > 0.0:
                    log_terminal_parts.append(lr + math.log(p))
        depth_mass.append(mass_here)

    total_mass = sum(depth_mass)
    confidence = depth_mass[-1] / total_mass if total_mass > 0.0 else 0.0
    cache.memo = _ScoreMemo(
        main_ids=tuple(cache.main.token_ids),
        dists=dists,
        confidence=confidence,
        depth_bucket_mass=depth_mass,
    )

    return ByteScore(
        log_scores={b: _logsumexp(parts) for b, parts in sorted(log_buckets.items())},
        log_terminal=_logsumexp(log_terminal_parts),
    )


def speculative_confidence(cache: ModelCache) -> float:
    """Share of next-byte mass proposed at the deepest boundary.

    Computed from the cache's last scoring call: final-depth bucket mass
    over total bucket mass across all depths (0.0 when no mass, or when
    the cache has not been scored yet). High values mean the shallower
    look-ahead boundaries contribute almost nothing, so their model
    forwards can be skipped on the next step.
    """
    if cache.depth_count < 2:
        raise ValueError("confidence needs at least two depths (one committed token)")
    if cache.memo is None:
        return 0.0
    return cache.memo.confidence
