"""Synthetic experiments: corpus generation, decoder comparison, reporting.

An experiment sweeps a noise grid. For each noise level it decodes a
seeded synthetic corpus with a greedy baseline, a beam baseline, and the
fused decoder, then scores all three. References are drawn from the same
Markov source the rescoring model is trained on (disjoint train/test
streams), so the rescorer carries genuine signal about the data.

Reports are plain text, one self-describing record per line, and are
byte-identical across runs with the same config and seed; wall time goes
to a separate sidecar file so it cannot break that guarantee.
"""

from __future__ import annotations

import configparser
import os
import random
import time
from dataclasses import dataclass, field
from typing import Sequence

from . import __version__
from .fusion import DecodeFailure, FusionConfig, decode
from .metrics import EvalReport, score_corpus
from .models import NgramModel, NoisyChannelModel, SignalContext
from .vocab import Vocabulary, build_vocabulary, escape_token, load_vocabulary, unescape_token

SEED_ENV_VAR = "FUSEDEC_SEED"
DECODERS = ("greedy", "beam", "fused")


@dataclass(frozen=True)
class CorpusSpec:
    """Where references come from: a file, or a seeded Markov generator."""

    path: str | None = None
    alphabet: bytes = b"abcd"
    utterances: int = 60
    train_utterances: int = 240
    min_len: int = 6
    max_len: int = 14

    def __post_init__(self):
        if not self.alphabet:
            raise ValueError("alphabet must be non-empty")
        if not 0 < self.min_len <= self.max_len:
            raise ValueError("need 0 < min_len <= max_len")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    corpus: CorpusSpec = CorpusSpec()
    tr_vocab_path: str | None = None
    lm_vocab_path: str | None = None
    lm_order: int = 2
    lm_alpha: float = 0.1
    noise_grid: tuple[float, ...] = (0.0, 0.1, 0.2, 0.4)
    confusions: frozenset[tuple[int, int]] = frozenset()
    fusion: FusionConfig = FusionConfig(
        r=0.2, num_beams=5, feedback="delayed", length_penalty=1.0
    )
    max_bytes_margin: int = 8
    out_dir: str | None = None

    def __post_init__(self):
        for eps in self.noise_grid:
            if not 0.0 <= eps <= 1.0:
                raise ValueError(f"noise level {eps} outside [0, 1]")


def load_experiment_config(path: str) -> ExperimentConfig:
    """Parse a flat key-value config file with [section] headers."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)

    exp = parser["experiment"] if parser.has_section("experiment") else {}
    corpus_sec = parser["corpus"] if parser.has_section("corpus") else {}
    noise_sec = parser["noise"] if parser.has_section("noise") else {}
    fusion_sec = parser["fusion"] if parser.has_section("fusion") else {}
    lm_sec = parser["lm"] if parser.has_section("lm") else {}
    tr_sec = parser["tr"] if parser.has_section("tr") else {}

    base = os.path.dirname(os.path.abspath(path))

    def _rel(p: str | None) -> str | None:
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(base, p)

    corpus = CorpusSpec(
        path=_rel(corpus_sec.get("path")),
        alphabet=unescape_token(corpus_sec.get("alphabet", "abcd")),
        utterances=int(corpus_sec.get("utterances", 60)),
        train_utterances=int(corpus_sec.get("train_utterances", 240)),
        min_len=int(corpus_sec.get("min_len", 6)),
        max_len=int(corpus_sec.get("max_len", 14)),
    )
    grid = tuple(
        float(x) for x in noise_sec.get("grid", "0.0, 0.1, 0.2, 0.4").split(",") if x.strip()
    )
    confusions = _parse_confusions(noise_sec.get("confusions", ""))
    spec_thresh = fusion_sec.get("speculative_threshold", "").strip()
    fusion = FusionConfig(
        r=float(fusion_sec.get("r", 0.2)),
        num_beams=int(fusion_sec.get("num_beams", 5)),
        feedback=fusion_sec.get("feedback", "delayed"),
        lag_policy=fusion_sec.get("lag_policy", "last-tr-token"),
        lag_k=int(fusion_sec.get("lag_k", 0)),
        length_penalty=float(fusion_sec.get("length_penalty", 1.0)),
        speculative_threshold=float(spec_thresh) if spec_thresh else None,
    )
    return ExperimentConfig(
        seed=int(exp.get("seed", 0)),
        corpus=corpus,
        tr_vocab_path=_rel(tr_sec.get("vocab")),
        lm_vocab_path=_rel(lm_sec.get("vocab")),
        lm_order=int(lm_sec.get("order", 2)),
        lm_alpha=float(lm_sec.get("alpha", 0.1)),
        noise_grid=grid,
        confusions=confusions,
        fusion=fusion,
        max_bytes_margin=int(exp.get("max_bytes_margin", 8)),
        out_dir=_rel(exp.get("out")),
    )


def _parse_confusions(text: str) -> frozenset[tuple[int, int]]:
    pairs = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        left, _, right = part.partition(":")
        a, b = unescape_token(left.strip()), unescape_token(right.strip())
        if len(a) != 1 or len(b) != 1:
            raise ValueError(f"confusion pair {part!r} must be single bytes")
        pairs.add((a[0], b[0]))
    return frozenset(pairs)


# --- synthetic data -----------------------------------------------------------


class MarkovSource:
    """First-order byte chain with one dominant transition per byte.

    The skew makes the source low-entropy, so a rescoring model trained
    on its output is genuinely informative about held-out references.
    """

    DOMINANT = 0.75

    def __init__(self, alphabet: bytes, seed: int):
        self.alphabet = alphabet
        rng = random.Random(seed)
        k = len(alphabet)
        self._next: dict[int, list[float]] = {}
        order = list(range(k))
        rng.shuffle(order)
        for i, b in enumerate(alphabet):
            dominant = order[(order.index(i) + 1) % k] if k > 1 else 0
            rest = (1.0 - self.DOMINANT) / k
            row = [rest] * k
            row[dominant] += self.DOMINANT
            self._next[b] = row

    def generate(self, rng: random.Random, length: int) -> bytes:
        out = bytearray()
        b = self.alphabet[rng.randrange(len(self.alphabet))]
        out.append(b)
        for _ in range(length - 1):
            b = rng.choices(self.alphabet, weights=self._next[b])[0]
            out.append(b)
        return bytes(out)

    def corpus(self, seed: int, count: int, min_len: int, max_len: int) -> list[bytes]:
        rng = random.Random(seed)
        return [
            self.generate(rng, rng.randint(min_len, max_len)) for _ in range(count)
        ]


def default_vocabulary(alphabet: bytes, seed: int, n_merges: int) -> Vocabulary:
    """Alphabet singletons plus a few seeded two-byte merges, with EOS.

    Distinct seeds give distinct merge sets, which is how the experiment
    gets genuinely mismatched token spaces across models.
    """
    rng = random.Random(seed)
    entries = [bytes([b]) for b in alphabet]
    pairs = [bytes([a, b]) for a in alphabet for b in alphabet]
    rng.shuffle(pairs)
    entries.extend(pairs[:n_merges])
    return build_vocabulary(entries, eos=True)


def build_corpora(cfg: ExperimentConfig, seed: int) -> tuple[list[bytes], list[bytes]]:
    """(train, test) reference corpora for a resolved seed."""
    spec = cfg.corpus
    if spec.path is not None:
        with open(spec.path, "rb") as fh:
            lines = [ln.rstrip(b"\n") for ln in fh if ln.strip()]
        split = max(1, len(lines) * spec.train_utterances
                    // max(1, spec.train_utterances + spec.utterances))
        return lines[:split], lines[split:]
    source = MarkovSource(spec.alphabet, seed + 1)
    train = source.corpus(seed + 2, spec.train_utterances, spec.min_len, spec.max_len)
    test = source.corpus(seed + 3, spec.utterances, spec.min_len, spec.max_len)
    return train, test


@dataclass
class ExperimentSetup:
    """Models and corpora materialized from a config."""

    seed: int
    tr_model: NoisyChannelModel
    lm_model: NgramModel
    train: list[bytes]
    test: list[bytes]


def build_setup(cfg: ExperimentConfig) -> ExperimentSetup:
    seed = resolve_seed(cfg)
    train, test = build_corpora(cfg, seed)
    alphabet = cfg.corpus.alphabet
    tr_vocab = (
        load_vocabulary(cfg.tr_vocab_path)
        if cfg.tr_vocab_path
        else default_vocabulary(alphabet, seed + 10, n_merges=2)
    )
    lm_vocab = (
        load_vocabulary(cfg.lm_vocab_path)
        if cfg.lm_vocab_path
        else default_vocabulary(alphabet, seed + 11, n_merges=3)
    )
    return ExperimentSetup(
        seed=seed,
        tr_model=NoisyChannelModel(tr_vocab),
        lm_model=NgramModel(lm_vocab, cfg.lm_order, corpus=train, alpha=cfg.lm_alpha),
        train=train,
        test=test,
    )


def resolve_seed(cfg: ExperimentConfig) -> int:
    env = os.environ.get(SEED_ENV_VAR)
    return int(env) if env else cfg.seed


# --- running ------------------------------------------------------------------


@dataclass
class ConditionResult:
    noise: float
    decoder: str
    report: EvalReport
    hypotheses: list[bytes]
    failures: int
    forward_counts: tuple[int, ...]


@dataclass
class RunReport:
    """Everything one experiment run produced.

    ``records`` is the canonical, deterministic content; ``wall_time`` is
    informational only and is persisted separately.
    """

    seed: int
    conditions: list[ConditionResult]
    references: dict[float, list[bytes]]
    status: str
    wall_time: float
    config_echo: list[tuple[str, str]] = field(default_factory=list)

    def records(self) -> list[str]:
        lines = [f"artifact=fusedec version={__version__}", f"seed={self.seed}"]
        lines += [f"config {key}={value}" for key, value in self.config_echo]
        for cr in self.conditions:
            base = f"eps={cr.noise!r} decoder={cr.decoder}"
            lines.append(f"{base} metric=cer value={cr.report.cer!r}")
            lines.append(f"{base} metric=wer value={cr.report.wer!r}")
            lines.append(f"{base} metric=exact_match value={cr.report.exact_match!r}")
            lines.append(f"{base} metric=failures value={cr.failures}")
            for i, n in enumerate(cr.forward_counts):
                lines.append(f"{base} metric=forwards_model{i} value={n}")
        lines.append(f"status={self.status}")
        return lines

    def write(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.records()) + "\n")
        with open(os.path.join(out_dir, "timing.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"wall_time_seconds={self.wall_time}\n")
        for noise, refs in self.references.items():
            write_lines(os.path.join(out_dir, f"refs_eps{noise!r}.txt"), refs)
        for cr in self.conditions:
            write_lines(
                os.path.join(out_dir, f"hyps_eps{cr.noise!r}_{cr.decoder}.txt"),
                cr.hypotheses,
            )


def write_lines(path: str, lines: Sequence[bytes]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(escape_token(line) + "\n")


def read_lines(path: str) -> list[bytes]:
    with open(path, "r", encoding="utf-8") as fh:
        return [unescape_token(ln.rstrip("\n")) for ln in fh]


def decode_corpus(
    decoder: str,
    setup: ExperimentSetup,
    cfg: ExperimentConfig,
    noise: float,
) -> ConditionResult:
    """Decode every test utterance under one (decoder, noise) condition."""
    confusions = cfg.confusions if noise > 0.0 else frozenset()
    max_bytes = max(len(r) for r in setup.test) + cfg.max_bytes_margin
    hyps: list[bytes] = []
    failures = 0
    before = (setup.tr_model.forward_count, setup.lm_model.forward_count)
    for ref in setup.test:
        ctx = SignalContext(signal=ref, noise=noise, confusions=confusions)
        try:
            if decoder == "greedy":
                run_cfg = FusionConfig(
                    weights=[1.0],
                    num_beams=1,
                    max_bytes=max_bytes,
                    length_penalty=cfg.fusion.length_penalty,
                )
                result = decode([(setup.tr_model, ctx)], run_cfg)
            elif decoder == "beam":
                run_cfg = FusionConfig(
                    weights=[1.0],
                    num_beams=cfg.fusion.num_beams,
                    max_bytes=max_bytes,
                    length_penalty=cfg.fusion.length_penalty,
                    speculative_threshold=cfg.fusion.speculative_threshold,
                )
                result = decode([(setup.tr_model, ctx)], run_cfg)
            elif decoder == "fused":
                run_cfg = FusionConfig(
                    r=cfg.fusion.r,
                    num_beams=cfg.fusion.num_beams,
                    max_bytes=max_bytes,
                    feedback=cfg.fusion.feedback,
                    lag_policy=cfg.fusion.lag_policy,
                    lag_k=cfg.fusion.lag_k,
                    length_penalty=cfg.fusion.length_penalty,
                    speculative_threshold=cfg.fusion.speculative_threshold,
                )
                result = decode([(setup.tr_model, ctx), (setup.lm_model, None)], run_cfg)
            else:
                raise ValueError(f"unknown decoder {decoder!r}")
            hyps.append(result.best)
        except DecodeFailure:
            hyps.append(b"")
            failures += 1
    after = (setup.tr_model.forward_count, setup.lm_model.forward_count)
    report = score_corpus(setup.test, hyps, unit="byte")
    return ConditionResult(
        noise=noise,
        decoder=decoder,
        report=report,
        hypotheses=hyps,
        failures=failures,
        forward_counts=tuple(a - b for a, b in zip(after, before)),
    )


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Sweep the noise grid with all decoder variants and score everything."""
    started = time.perf_counter()
    setup = build_setup(cfg)
    conditions: list[ConditionResult] = []
    references: dict[float, list[bytes]] = {}
    total = failures = 0
    for noise in cfg.noise_grid:
        references[noise] = setup.test
        for decoder in DECODERS:
            cr = decode_corpus(decoder, setup, cfg, noise)
            conditions.append(cr)
            total += len(setup.test)
            failures += cr.failures
    status = "failed" if total and failures > total / 2 else "ok"
    report = RunReport(
        seed=setup.seed,
        conditions=conditions,
        references=references,
        status=status,
        wall_time=time.perf_counter() - started,
        config_echo=_echo(cfg),
    )
    if cfg.out_dir:
        report.write(cfg.out_dir)
    return report


def _echo(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    pairs = [
        ("alphabet", escape_token(cfg.corpus.alphabet)),
        ("utterances", str(cfg.corpus.utterances)),
        ("train_utterances", str(cfg.corpus.train_utterances)),
        ("min_len", str(cfg.corpus.min_len)),
        ("max_len", str(cfg.corpus.max_len)),
        ("lm_order", str(cfg.lm_order)),
        ("lm_alpha", repr(cfg.lm_alpha)),
        ("noise_grid", ",".join(repr(x) for x in cfg.noise_grid)),
        ("confusions", ",".join(
            f"{escape_token(bytes([a]))}:{escape_token(bytes([b]))}"
            for a, b in sorted(cfg.confusions)
        )),
        ("r", repr(cfg.fusion.r)),
        ("num_beams", str(cfg.fusion.num_beams)),
        ("feedback", cfg.fusion.feedback),
        ("length_penalty", repr(cfg.fusion.length_penalty)),
        ("lag_policy", cfg.fusion.lag_policy),
        ("speculative_threshold", repr(cfg.fusion.speculative_threshold)),
    ]
    return pairs
