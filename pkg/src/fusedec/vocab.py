"""Vocabularies, byte-prefix indexing, and deterministic tokenization.

A vocabulary maps dense token ids to unique, non-empty byte strings. An
optional end-of-sequence token is kept out-of-band: it has an empty byte
expansion and never appears in the prefix index, so byte-space arithmetic
never sees it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


class VocabError(ValueError):
    """Invalid vocabulary definition (duplicate, empty, or malformed entry)."""


class TokenizationError(ValueError):
    """Input bytes cannot be segmented by the vocabulary."""

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class MainSequence:
    """Deterministic segmentation of a byte string into vocabulary tokens.

    ``boundary_offsets[i]`` is the byte offset where token ``i`` starts;
    concatenating the tokens' bytes reproduces ``source_bytes`` exactly.
    """

    token_ids: tuple[int, ...]
    boundary_offsets: tuple[int, ...]
    source_bytes: bytes

    def __len__(self) -> int:
        return len(self.token_ids)


class _TrieNode:
    __slots__ = ("children", "ids")

    def __init__(self):
        self.children: dict[int, _TrieNode] = {}
        self.ids: list[int] = []


class PrefixIndex:
    """Byte trie answering "which tokens start with this prefix" queries.

    Each node stores every token id whose bytes pass through or end at
    that node, so a query is a walk plus a copy. EOS is excluded.
    """

    def __init__(self, vocab: Vocabulary):
        self._vocab = vocab
        self._root = _TrieNode()
        for tid in vocab.non_eos_ids:
            node = self._root
            node.ids.append(tid)
            for b in vocab.bytes_of(tid):
                node = node.children.setdefault(b, _TrieNode())
                node.ids.append(tid)
        # ids were appended in increasing tid order, so node.ids are sorted

    def tokens_with_prefix(self, prefix: bytes) -> list[int]:
        """All non-EOS token ids whose bytes start with ``prefix``, ascending."""
        node = self._root
        for b in prefix:
            node = node.children.get(b)
            if node is None:
                return []
        return list(node.ids)

    def longest_match(self, data: bytes, start: int) -> int | None:
        """Id of the longest token whose bytes match ``data`` at ``start``."""
        node = self._root
        best: int | None = None
        length = 0
        for pos in range(start, len(data)):
            node = node.children.get(data[pos])
            if node is None:
                break
            length += 1
            # a token ends exactly here iff its byte length equals the depth
            for tid in node.ids:
                if len(self._vocab.bytes_of(tid)) == length:
                    best = tid
                    break
        return best


class Vocabulary:
    """Immutable token table with dense ids and unique byte surfaces."""

    def __init__(self, tokens: Sequence[bytes], eos_id: int | None):
        self._tokens = tuple(tokens)
        self.eos_id = eos_id
        self._index: PrefixIndex | None = None

    @property
    def size(self) -> int:
        return len(self._tokens)

    @property
    def non_eos_ids(self) -> range | list[int]:
        if self.eos_id is None:
            return range(self.size)
        return [t for t in range(self.size) if t != self.eos_id]

    @property
    def max_token_len(self) -> int:
        return max((len(t) for t in self._tokens), default=0)

    def bytes_of(self, token_id: int) -> bytes:
        if not 0 <= token_id < self.size:
            raise VocabError(f"token id {token_id} out of range 0..{self.size - 1}")
        return self._tokens[token_id]

    def id_of(self, token_bytes: bytes) -> int:
        try:
            return self._tokens.index(token_bytes)
        except ValueError:
            raise VocabError(f"no token with bytes {token_bytes!r}") from None

    @property
    def prefix_index(self) -> PrefixIndex:
        if self._index is None:
            self._index = PrefixIndex(self)
        return self._index

    def __repr__(self) -> str:
        return f"Vocabulary(size={self.size}, eos={self.eos_id})"


def build_vocabulary(entries: Iterable[bytes], eos: bool = False) -> Vocabulary:
    """Build a vocabulary from byte strings, assigning dense ids in input order.

    When ``eos`` is set, an out-of-band EOS token (empty byte expansion)
    is appended with the last id.
    """
    tokens: list[bytes] = []
    seen: set[bytes] = set()
    for i, entry in enumerate(entries):
        entry = bytes(entry)
        if len(entry) == 0:
            raise VocabError(f"entry {i} is empty; tokens must have at least one byte")
        if entry in seen:
            raise VocabError(f"duplicate token {entry!r} at entry {i}")
        seen.add(entry)
        tokens.append(entry)
    if not tokens:
        raise VocabError("vocabulary needs at least one token")
    eos_id = None
    if eos:
        eos_id = len(tokens)
        tokens.append(b"")
    return Vocabulary(tokens, eos_id)


def tokenize(vocab: Vocabulary, data: bytes) -> MainSequence:
    """Greedy longest-match left-to-right segmentation of ``data``."""
    data = bytes(data)
    idx = vocab.prefix_index
    ids: list[int] = []
    offsets: list[int] = []
    pos = 0
    while pos < len(data):
        tid = idx.longest_match(data, pos)
        if tid is None:
            raise TokenizationError(
                f"no token matches input at byte offset {pos} "
                f"(byte 0x{data[pos]:02x})",
                offset=pos,
            )
        ids.append(tid)
        offsets.append(pos)
        pos += len(vocab.bytes_of(tid))
    return MainSequence(tuple(ids), tuple(offsets), data)


def alternatives_for_suffix(
    idx: PrefixIndex, suffix: bytes
) -> list[tuple[int, int]]:
    """Tokens whose bytes start with ``suffix``, as (token_id, matched_len) pairs.

    The matched length is ``len(suffix)`` for every member; the empty
    suffix returns every non-EOS token with matched length 0.
    """
    return [(tid, len(suffix)) for tid in idx.tokens_with_prefix(suffix)]


def group_by_next_byte(
    vocab: Vocabulary,
    members: Sequence[tuple[int, int]],
    weights: Sequence[float],
) -> tuple[dict[int, float], float]:
    """Route prefix-matched token mass to next-byte buckets.

    Members whose byte length exceeds their matched length contribute
    their weight to the bucket of the byte right after the match; members
    that match exactly contribute to ``exact_mass`` instead (they complete
    the suffix and propose no new byte). Mass is conserved.
    """
    if len(members) != len(weights):
        raise ValueError("members and weights must have equal length")
    buckets: dict[int, float] = {}
    exact_mass = 0.0
    for (tid, matched_len), w in zip(members, weights):
        tb = vocab.bytes_of(tid)
        if matched_len > len(tb):
            raise AssertionError(
                f"matched_len {matched_len} exceeds byte length of token {tid}"
            )
        if len(tb) == matched_len:
            exact_mass += w
        else:
            b = tb[matched_len]
            buckets[b] = buckets.get(b, 0.0) + w
    return buckets, exact_mass


# --- vocabulary file format ------------------------------------------------
#
# UTF-8 text, one token per line. Bytes outside printable ASCII are escaped
# as \xNN; backslash is \\. A line reading "#eos" declares the EOS token;
# any other line starting with "#" at column 0 is a comment.

_PRINTABLE = set(range(0x20, 0x7F))


def escape_token(token: bytes) -> str:
    out: list[str] = []
    for i, b in enumerate(token):
        if b == 0x5C:  # backslash
            out.append("\\\\")
        elif b == 0x23 and i == 0:  # '#' would read as a comment
            out.append("\\x23")
        elif b in _PRINTABLE:
            out.append(chr(b))
        else:
            out.append(f"\\x{b:02x}")
    return "".join(out)


def unescape_token(text: str) -> bytes:
    out = bytearray()
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\":
            if i + 1 < len(text) and text[i + 1] == "\\":
                out.append(0x5C)
                i += 2
                continue
            if i + 3 < len(text) and text[i + 1] == "x":
                try:
                    out.append(int(text[i + 2 : i + 4], 16))
                except ValueError:
                    raise VocabError(f"bad escape in token line: {text!r}") from None
                i += 4
                continue
            raise VocabError(f"bad escape in token line: {text!r}")
        code = ord(c)
        if code > 0xFF:
            raise VocabError(f"non-byte character in token line: {text!r}")
        out.append(code)
        i += 1
    return bytes(out)


def load_vocabulary(path: str) -> Vocabulary:
    """Read a vocabulary file (one escaped token per line, optional #eos)."""
    entries: list[bytes] = []
    eos = False
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            if line == "#eos":
                eos = True
                continue
            if line.startswith("#"):
                continue
            entries.append(unescape_token(line))
    return build_vocabulary(entries, eos=eos)


def save_vocabulary(vocab: Vocabulary, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tid in vocab.non_eos_ids:
            fh.write(escape_token(vocab.bytes_of(tid)) + "\n")
        if vocab.eos_id is not None:
            fh.write("#eos\n")
