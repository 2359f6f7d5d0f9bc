"""Fused byte-level beam search over heterogeneous-vocabulary models.

Each model scores candidate next bytes in its own token space through
:mod:`fusedec.byte_transform`; this module combines those joint log
scores with per-model weights and runs a beam search over bytes, so
models never need to share a tokenizer.

Two feedback modes are supported. In ``synchronous`` mode every model
scores the full candidate prefix each step. In ``delayed`` mode the
first model proposes bytes while the second scores a prefix lagging
behind the proposal, re-ranking beams on past bytes instead of reacting
to the newest one; the lag is either a fixed byte count or the byte
length of the proposer's most recent main-sequence token.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .byte_transform import (
    NEG_INF,
    ModelCache,
    approx_byte_log_score,
    next_byte_scores,
    refresh_cache,
)
from .models import Context, TokenModel
from .vocab import tokenize

SYNCHRONOUS = "synchronous"
DELAYED = "delayed"
LAG_LAST_TOKEN = "last-tr-token"
LAG_FIXED = "fixed"


class DecodeFailure(RuntimeError):
    """Every beam lost all fused probability mass before finishing."""


@dataclass(frozen=True)
class FusionConfig:
    """Weights and search policy for fused decoding.

    ``r`` is the two-model shorthand: the proposer gets weight 1-r and
    the rescoring model gets r. ``weights`` overrides it for the general
    case. Ties are always broken byte-lexicographically.
    """

    r: float | None = None
    weights: Sequence[float] | None = None
    num_beams: int = 5
    max_bytes: int = 64
    feedback: str = SYNCHRONOUS
    lag_policy: str = LAG_LAST_TOKEN
    lag_k: int = 0
    length_penalty: float = 0.0
    speculative_threshold: float | None = None
    repetition_ngram: int = 0
    repetition_penalty: float = 0.0

    def __post_init__(self):
        if self.num_beams < 1:
            raise ValueError("num_beams must be >= 1")
        if self.max_bytes < 0:
            raise ValueError("max_bytes must be >= 0")
        if self.r is not None and not 0.0 <= self.r <= 1.0:
            raise ValueError(f"r must be in [0, 1], got {self.r}")
        if self.weights is not None and any(w < 0 for w in self.weights):
            raise ValueError("model weights must be non-negative")
        if self.feedback not in (SYNCHRONOUS, DELAYED):
            raise ValueError(f"unknown feedback mode {self.feedback!r}")
        if self.lag_policy not in (LAG_LAST_TOKEN, LAG_FIXED):
            raise ValueError(f"unknown lag policy {self.lag_policy!r}")
        if self.lag_k < 0:
            raise ValueError("lag_k must be >= 0")

    def resolve_weights(self, n_models: int) -> list[float]:
        if self.weights is not None:
            if len(self.weights) != n_models:
                raise ValueError(
                    f"{len(self.weights)} weights for {n_models} models"
                )
            return [float(w) for w in self.weights]
        if self.r is not None:
            if n_models != 2:
                raise ValueError("r shorthand needs exactly two models")
            return [1.0 - self.r, self.r]
        if n_models == 1:
            return [1.0]
        raise ValueError("multi-model decoding needs weights or r")


def fuse_scores(per_model: Sequence[float], weights: Sequence[float]) -> float:
    """Weighted sum of per-model log scores; zero-weight terms are dropped.

    Dropping zero weights (rather than multiplying) keeps models with no
    mass on a candidate from poisoning the sum with 0 * -inf.
    """
    if len(per_model) != len(weights):
        raise ValueError("per_model and weights must have equal length")
    total = 0.0
    for score, w in zip(per_model, weights):
        if w == 0.0:
            continue
        if score == NEG_INF:
            return NEG_INF
        total += w * score
    return total


@dataclass
class Beam:
    """One hypothesis: committed bytes plus per-model caches and scores."""

    data: bytes
    caches: list[ModelCache]
    per_model_scores: list[float]
    fused_score: float
    finished: bool = False


@dataclass(frozen=True)
class DecodeResult:
    """Outcome of a fused decode.

    ``all_beams`` lists (bytes, fused log score, per-model log scores) in
    final ranking order; ``trace`` records the (bytes, fused score) pairs
    selected at each step; ``step_forwards`` the per-step, per-model
    forward counts.
    """

    best: bytes
    all_beams: list[tuple[bytes, float, tuple[float, ...]]]
    step_count: int
    forward_counts: tuple[int, ...]
    trace: list[list[tuple[bytes, float]]]
    step_forwards: list[tuple[int, ...]]


@dataclass(frozen=True)
class _Candidate:
    data: bytes
    fused: float
    per_model: tuple[float, ...]
    parent: Beam | None  # None for carried finished beams
    new_byte: int | None  # None for terminal / carried candidates
    finished_beam: Beam | None = None


def _lagged_prefix(cfg: FusionConfig, tr_model: TokenModel, data: bytes) -> bytes:
    """Prefix the rescoring model sees for a (candidate) byte string."""
    if cfg.lag_policy == LAG_FIXED:
        return data[: max(0, len(data) - cfg.lag_k)]
    main = tokenize(tr_model.vocabulary, data)
    if len(main) == 0:
        return b""
    last_len = len(data) - main.boundary_offsets[-1]
    return data[: len(data) - last_len]


def decode(
    models: Sequence[tuple[TokenModel, Context]],
    cfg: FusionConfig,
) -> DecodeResult:
    """Fused byte-level beam search.

    Per step, every live beam asks each positively weighted model for
    joint next-byte scores, candidates are fused and pruned globally to
    ``num_beams`` (cumulative joint log scores, no per-step
    renormalization), and survivors refresh their caches. Beams finish
    when terminal mass wins a slot; anything still live at ``max_bytes``
    is finished with its main-sequence joint score. Finished beams keep
    competing by final score. Deterministic throughout.
    """
    if not models:
        raise ValueError("decode needs at least one model")
    weights = cfg.resolve_weights(len(models))
    delayed = cfg.feedback == DELAYED
    if delayed and len(models) != 2:
        raise ValueError("delayed feedback needs exactly two models (proposer, rescorer)")

    lm_log_memo: dict[bytes, float] = {b"": 0.0}

    def lm_lagged_score(prefix: bytes) -> float:
        cached = lm_log_memo.get(prefix)
        if cached is None:
            cached = approx_byte_log_score(models[1][0], prefix, models[1][1])
            lm_log_memo[prefix] = cached
        return cached

    root = Beam(
        data=b"",
        caches=[refresh_cache(m, b"", ctx) for m, ctx in models],
        per_model_scores=[0.0] * len(models),
        fused_score=0.0,
    )
    live: list[Beam] = [root]
    finished: list[Beam] = []
    trace: list[list[tuple[bytes, float]]] = []
    step_forwards: list[tuple[int, ...]] = []
    start_counts = [m.forward_count for m, _ in models]
    steps = 0

    while live and steps < cfg.max_bytes:
        before = [m.forward_count for m, _ in models]
        candidates: list[_Candidate] = []
        for beam in live:
            scores = []
            for i, (model, ctx) in enumerate(models):
                # the rescorer never proposes in delayed mode; the proposer
                # always does, since it defines the candidate byte set
                proposer = delayed and i == 0
                if (weights[i] == 0.0 and not proposer) or (delayed and i == 1):
                    scores.append(None)
                    continue
                scores.append(
                    next_byte_scores(
                        model, beam.caches[i], ctx,
                        skip_threshold=cfg.speculative_threshold,
                    )
                )

            cand_bytes: set[int] = set()
            for sc in scores:
                if sc is not None:
                    cand_bytes.update(sc.log_scores)

            for b in sorted(cand_bytes):
                child = beam.data + bytes([b])
                per_model: list[float] = []
                for i in range(len(models)):
                    if scores[i] is not None:
                        per_model.append(scores[i].log_scores.get(b, NEG_INF))
                    elif delayed and i == 1 and weights[i] > 0.0:
                        per_model.append(
                            lm_lagged_score(_lagged_prefix(cfg, models[0][0], child))
                        )
                    else:
                        per_model.append(NEG_INF)
                fused = fuse_scores(per_model, weights)
                if fused == NEG_INF:
                    continue
                if cfg.repetition_ngram > 0 and cfg.repetition_penalty > 0.0:
                    fused -= cfg.repetition_penalty * _tail_repeats(
                        child, cfg.repetition_ngram
                    )
                candidates.append(_Candidate(child, fused, tuple(per_model), beam, b))

            # ending here: terminal mass, with the rescorer caught up to the
            # full (now complete) prefix in delayed mode
            per_model_term: list[float] = []
            for i in range(len(models)):
                if scores[i] is not None:
                    per_model_term.append(scores[i].log_terminal)
                elif delayed and i == 1 and weights[i] > 0.0:
                    per_model_term.append(lm_lagged_score(beam.data))
                else:
                    per_model_term.append(NEG_INF)
            fused_term = fuse_scores(per_model_term, weights)
            if fused_term > NEG_INF:
                candidates.append(
                    _Candidate(beam.data, fused_term, tuple(per_model_term), beam, None)
                )

        for fb in finished:
            candidates.append(
                _Candidate(fb.data, fb.fused_score, tuple(fb.per_model_scores),
                           None, None, finished_beam=fb)
            )

        candidates = [c for c in candidates if c.fused > NEG_INF]
        if not candidates:
            raise DecodeFailure(
                f"all beams lost fused probability mass at step {steps}"
            )
        candidates.sort(key=lambda c: (-c.fused, c.data))
        top = candidates[: cfg.num_beams]

        new_live: list[Beam] = []
        new_finished: list[Beam] = []
        for cand in top:
            if cand.finished_beam is not None:
                new_finished.append(cand.finished_beam)
            elif cand.new_byte is None:
                new_finished.append(
                    Beam(cand.data, cand.parent.caches, list(cand.per_model),
                         cand.fused, finished=True)
                )
            else:
                caches = [
                    refresh_cache(m, cand.data, ctx, old=cand.parent.caches[i])
                    for i, (m, ctx) in enumerate(models)
                ]
                new_live.append(
                    Beam(cand.data, caches, list(cand.per_model), cand.fused)
                )
        live, finished = new_live, new_finished
        trace.append([(c.data, c.fused) for c in top])
        after = [m.forward_count for m, _ in models]
        step_forwards.append(tuple(a - b for a, b in zip(after, before)))
        steps += 1

    # anything still live ran into the byte budget: finish it with the
    # cache-consistent joint score of its committed bytes
    for beam in live:
        per_model = []
        for i, (model, ctx) in enumerate(models):
            if weights[i] == 0.0:
                per_model.append(NEG_INF)
            else:
                per_model.append(approx_byte_log_score(model, beam.data, ctx))
        beam.per_model_scores = per_model
        beam.fused_score = fuse_scores(per_model, weights)
        beam.finished = True
        finished.append(beam)

    if not finished:
        raise DecodeFailure("no finished beams")

    alpha = cfg.length_penalty

    def final_key(b: Beam) -> tuple[float, bytes]:
        norm = max(len(b.data), 1) ** alpha if alpha != 0.0 else 1.0
        return (-(b.fused_score / norm), b.data)

    finished.sort(key=final_key)
    end_counts = [m.forward_count for m, _ in models]
    return DecodeResult(
        best=finished[0].data,
        all_beams=[(b.data, b.fused_score, tuple(b.per_model_scores)) for b in finished],
        step_count=steps,
        forward_counts=tuple(e - s for e, s in zip(end_counts, start_counts)),
        trace=trace,
        step_forwards=step_forwards,
    )


def decode_greedy(model: TokenModel, ctx: Context, max_bytes: int) -> bytes:
    """Single-model, single-beam decode: the greedy baseline."""
    cfg = FusionConfig(weights=[1.0], num_beams=1, max_bytes=max_bytes)
    return decode([(model, ctx)], cfg).best


def _tail_repeats(data: bytes, n: int) -> int:
    """How many earlier occurrences the trailing n-gram has in ``data``."""
    if len(data) < 2 * n:
        return 0
    tail = data[-n:]
    return data[:-n].count(tail)
