"""Autoregressive next-token models over a fixed vocabulary.

Every model exposes the same contract: given a token prefix and an
optional context, produce a probability vector over all token ids
(including EOS when the vocabulary has one). Distributions are
deterministic, and incremental states reproduce from-scratch scoring
bit for bit. ``forward_count`` tracks distribution evaluations.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .vocab import Vocabulary, tokenize, unescape_token


class ModelFileError(ValueError):
    """Malformed model definition file."""


@dataclass(frozen=True)
class PromptContext:
    """Language-model conditioning: prompt bytes tokenized and prepended."""

    prompt: bytes = b""


@dataclass(frozen=True)
class SignalContext:
    """Recognition-model conditioning: a reference signal with channel noise.

    ``noise`` in [0, 1] mixes the signal-consistent distribution with a
    uniform floor; ``confusions`` are symmetric byte pairs treated as
    interchangeable when matching the signal.
    """

    signal: bytes
    noise: float = 0.0
    confusions: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError(f"noise level must be in [0, 1], got {self.noise}")

    def bytes_match(self, a: int, b: int) -> bool:
        return a == b or (a, b) in self.confusions or (b, a) in self.confusions


Context = PromptContext | SignalContext | None


class TokenModel(ABC):
    """Abstract autoregressive next-token distribution."""

    def __init__(self, vocabulary: Vocabulary):
        self.vocabulary = vocabulary
        self.forward_count = 0

    @abstractmethod
    def initial_state(self, ctx: Context = None) -> Any:
        """Opaque state for the empty token prefix."""

    @abstractmethod
    def advance_state(self, state: Any, token_id: int) -> Any:
        """State for the prefix extended by one token."""

    @abstractmethod
    def _dist(self, state: Any, ctx: Context) -> np.ndarray:
        """Probability vector for the prefix encoded by ``state``."""

    def dist_from_state(self, state: Any, ctx: Context = None) -> np.ndarray:
        self.forward_count += 1
        return self._dist(state, ctx)

    def next_token_dist(self, prefix: Sequence[int], ctx: Context = None) -> np.ndarray:
        state = self.initial_state(ctx)
        for tid in prefix:
            state = self.advance_state(state, tid)
        return self.dist_from_state(state, ctx)

    def sequence_log_prob(self, tokens: Sequence[int], ctx: Context = None) -> float:
        """Chain-rule log probability; -inf when any step has zero mass."""
        state = self.initial_state(ctx)
        total = 0.0
        for tid in tokens:
            p = self.dist_from_state(state, ctx)[self._check_id(tid)]
            if p <= 0.0:
                return -math.inf
            total += math.log(p)
            state = self.advance_state(state, tid)
        return total

    def _check_id(self, token_id: int) -> int:
        if not 0 <= token_id < self.vocabulary.size:
            raise ValueError(
                f"token id {token_id} out of range for vocabulary of size "
                f"{self.vocabulary.size}"
            )
        return token_id


class TableModel(TokenModel):
    """Explicit probability table: i.i.d., or conditioned on the last token.

    ``table`` is the unconditional (and fallback) distribution;
    ``conditional`` optionally maps a previous token id to a distribution
    used right after that token.
    """

    def __init__(
        self,
        vocabulary: Vocabulary,
        table: Sequence[float],
        conditional: dict[int, Sequence[float]] | None = None,
    ):
        super().__init__(vocabulary)
        self._base = _normalized(table, vocabulary.size)
        self._cond = {
            tid: _normalized(row, vocabulary.size)
            for tid, row in (conditional or {}).items()
        }

    def initial_state(self, ctx: Context = None) -> int | None:
        if isinstance(ctx, PromptContext) and ctx.prompt:
            ids = tokenize(self.vocabulary, ctx.prompt).token_ids
            if ids:
                return ids[-1]
        return None  # last token id; None at sequence start

    def advance_state(self, state: int | None, token_id: int) -> int:
        return self._check_id(token_id)

    def _dist(self, state: int | None, ctx: Context) -> np.ndarray:
        if state is not None and state in self._cond:
            return self._cond[state]
        return self._base


class NgramModel(TokenModel):
    """Token n-gram with add-alpha smoothing.

    Contexts shorter than order-1 are padded with a begin marker. When the
    vocabulary has an EOS token, each training utterance contributes a
    final EOS event, so the model can terminate sequences.
    """

    BOS = -1

    def __init__(
        self,
        vocabulary: Vocabulary,
        order: int,
        corpus: Iterable[bytes] = (),
        alpha: float = 0.1,
        counts: dict[tuple[int, ...], dict[int, float]] | None = None,
    ):
        super().__init__(vocabulary)
        if order < 1:
            raise ValueError("order must be >= 1")
        if alpha <= 0:
            raise ValueError("alpha must be positive (zero-count contexts need mass)")
        self.order = order
        self.alpha = alpha
        self._counts: dict[tuple[int, ...], dict[int, float]] = {}
        self._totals: dict[tuple[int, ...], float] = {}
        if counts:
            for ctx_key, row in counts.items():
                for tid, n in row.items():
                    self._add_count(tuple(ctx_key), tid, n)
        for utterance in corpus:
            self._train_one(bytes(utterance))
        self._dist_cache: dict[tuple[int, ...], np.ndarray] = {}

    def _add_count(self, ctx_key: tuple[int, ...], tid: int, n: float) -> None:
        row = self._counts.setdefault(ctx_key, {})
        row[tid] = row.get(tid, 0.0) + n
        self._totals[ctx_key] = self._totals.get(ctx_key, 0.0) + n

    def _train_one(self, utterance: bytes) -> None:
        ids = list(tokenize(self.vocabulary, utterance).token_ids)
        if self.vocabulary.eos_id is not None:
            ids.append(self.vocabulary.eos_id)
        hist = [self.BOS] * (self.order - 1)
        for tid in ids:
            self._add_count(tuple(hist), tid, 1.0)
            if self.order > 1:
                hist = hist[1:] + [tid]

    def initial_state(self, ctx: Context = None) -> tuple[int, ...]:
        hist = [self.BOS] * (self.order - 1)
        if isinstance(ctx, PromptContext) and ctx.prompt:
            for tid in tokenize(self.vocabulary, ctx.prompt).token_ids:
                hist = (hist[1:] + [tid]) if self.order > 1 else hist
        return tuple(hist)

    def advance_state(self, state: tuple[int, ...], token_id: int) -> tuple[int, ...]:
        self._check_id(token_id)
        if self.order == 1:
            return state
        return state[1:] + (token_id,)

    def _dist(self, state: tuple[int, ...], ctx: Context) -> np.ndarray:
        cached = self._dist_cache.get(state)
        if cached is not None:
            return cached
        v = self.vocabulary.size
        row = self._counts.get(state, {})
        total = self._totals.get(state, 0.0)
        dist = np.full(v, self.alpha, dtype=np.float64)
        for tid, n in row.items():
            dist[tid] += n
        dist /= total + self.alpha * v
        self._dist_cache[state] = dist
        return dist


class NoisyChannelModel(TokenModel):
    """Signal-conditioned channel: a desk-scale stand-in for a recognizer.

    At byte offset ``o`` into the context signal R, mass (1 - noise) is
    split uniformly over tokens whose bytes match R at ``o`` (under the
    context's confusion pairs), and ``noise`` is spread uniformly over the
    whole vocabulary. Once the signal is consumed the matching set is
    {EOS}. The offset is the byte length of the committed token prefix.
    """

    def __init__(self, vocabulary: Vocabulary):
        super().__init__(vocabulary)
        self._match_cache: dict[tuple, tuple[int, ...]] = {}

    def initial_state(self, ctx: Context = None) -> int:
        return 0  # byte offset into the signal

    def advance_state(self, state: int, token_id: int) -> int:
        return state + len(self.vocabulary.bytes_of(self._check_id(token_id)))

    def _matching_ids(self, state: int, ctx: SignalContext) -> tuple[int, ...]:
        key = (ctx.signal, ctx.confusions, state)
        cached = self._match_cache.get(key)
        if cached is not None:
            return cached
        sig = ctx.signal
        if state >= len(sig):
            ids = (self.vocabulary.eos_id,) if self.vocabulary.eos_id is not None else ()
        else:
            out = []
            for tid in self.vocabulary.non_eos_ids:
                tb = self.vocabulary.bytes_of(tid)
                if state + len(tb) > len(sig):
                    continue
                if all(
                    ctx.bytes_match(tb[i], sig[state + i]) for i in range(len(tb))
                ):
                    out.append(tid)
            ids = tuple(out)
        self._match_cache[key] = ids
        return ids

    def _dist(self, state: int, ctx: Context) -> np.ndarray:
        if not isinstance(ctx, SignalContext):
            raise ValueError("NoisyChannelModel requires a SignalContext")
        v = self.vocabulary.size
        dist = np.full(v, ctx.noise / v, dtype=np.float64)
        matching = self._matching_ids(state, ctx)
        if matching:
            share = (1.0 - ctx.noise) / len(matching)
            for tid in matching:
                dist[tid] += share
        else:
            # dead end mid-signal: no token fits, fall back to uniform
            dist += (1.0 - ctx.noise) / v
        return dist


def _normalized(row: Sequence[float], size: int) -> np.ndarray:
    arr = np.asarray(row, dtype=np.float64)
    if arr.shape != (size,):
        raise ValueError(f"distribution must have length {size}, got {arr.shape}")
    if np.any(arr < 0):
        raise ValueError("probabilities must be non-negative")
    total = arr.sum()
    if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-6):
        raise ValueError(f"probabilities must sum to 1 (got {total})")
    return arr / total


# --- model file formats ------------------------------------------------------
#
# Table model:       header "iid" (or "cond"), then "<token> <prob>" lines;
#                    conditional blocks open with "given <token>" ("given *"
#                    is the unconditional/fallback block). EOS is written
#                    as the literal token "#eos".
# N-gram model:      header "ngram <order>", optional "alpha <x>", then
#                    either "corpus <path>" (one raw utterance per line) or
#                    explicit "count <ctx> <token> <n>" lines where <ctx>
#                    is "+"-joined tokens ("<s>" pads, "_" means empty).


def _parse_token_ref(vocab: Vocabulary, text: str) -> int:
    if text == "#eos":
        if vocab.eos_id is None:
            raise ModelFileError("model references EOS but vocabulary has none")
        return vocab.eos_id
    return vocab.id_of(unescape_token(text))


def load_model(path: str, vocab: Vocabulary) -> TokenModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    # "#" at column 0 comments the line out, except the EOS token reference
    lines = [
        ln for ln in lines
        if ln.strip() and (not ln.startswith("#") or ln.startswith("#eos"))
    ]
    if not lines:
        raise ModelFileError(f"{path}: empty model file")
    header = lines[0].split()
    kind = header[0]
    if kind in ("iid", "cond"):
        return _load_table(lines[1:], vocab, path)
    if kind == "ngram":
        if len(header) != 2:
            raise ModelFileError(f"{path}: ngram header needs an order")
        return _load_ngram(lines[1:], vocab, int(header[1]), path)
    raise ModelFileError(f"{path}: unknown model kind {kind!r}")


def _load_table(lines: list[str], vocab: Vocabulary, path: str) -> TableModel:
    base = np.zeros(vocab.size)
    cond: dict[int, np.ndarray] = {}
    current = base
    for ln in lines:
        parts = ln.split()
        if parts[0] == "given":
            if len(parts) != 2:
                raise ModelFileError(f"{path}: bad block header {ln!r}")
            if parts[1] == "*":
                current = base
            else:
                tid = _parse_token_ref(vocab, parts[1])
                current = cond.setdefault(tid, np.zeros(vocab.size))
            continue
        if len(parts) != 2:
            raise ModelFileError(f"{path}: expected '<token> <prob>', got {ln!r}")
        current[_parse_token_ref(vocab, parts[0])] = float(parts[1])
    return TableModel(vocab, base, {t: row for t, row in cond.items()})


def _load_ngram(lines: list[str], vocab: Vocabulary, order: int, path: str) -> NgramModel:
    import os

    alpha = 0.1
    corpus: list[bytes] = []
    counts: dict[tuple[int, ...], dict[int, float]] = {}
    for ln in lines:
        parts = ln.split()
        if parts[0] == "alpha":
            alpha = float(parts[1])
        elif parts[0] == "corpus":
            corpus_path = os.path.join(os.path.dirname(path), parts[1])
            with open(corpus_path, "rb") as fh:
                corpus.extend(line.rstrip(b"\n") for line in fh if line.strip())
        elif parts[0] == "count":
            if len(parts) != 4:
                raise ModelFileError(f"{path}: expected 'count <ctx> <token> <n>'")
            ctx_key = tuple(
                NgramModel.BOS if t == "<s>" else _parse_token_ref(vocab, t)
                for t in (parts[1].split("+") if parts[1] != "_" else ())
            )
            if len(ctx_key) != order - 1:
                raise ModelFileError(
                    f"{path}: context {parts[1]!r} has wrong length for order {order}"
                )
            counts.setdefault(ctx_key, {})[_parse_token_ref(vocab, parts[2])] = float(
                parts[3]
            )
        else:
            raise ModelFileError(f"{path}: unknown ngram directive {parts[0]!r}")
    return NgramModel(vocab, order, corpus=corpus, alpha=alpha, counts=counts)
